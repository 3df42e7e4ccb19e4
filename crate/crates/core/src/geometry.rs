//! Box arithmetic, IoU, binary mask rasterization and per-component spread.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::scalar::Scalar;

/// Axis-aligned box in center/size form, in pixels.
///
/// Boxes may extend beyond the frame; predictions routinely leave it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox<T = f64> {
    pub cx: T,
    pub cy: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BBox<T> {
    /// Builds a box, rejecting non-finite fields and non-positive sizes.
    pub fn new(cx: T, cy: T, w: T, h: T) -> Result<Self> {
        let b = Self { cx, cy, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(contract(format!("invalid box {b:?}")))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.cx.is_finite()
            && self.cy.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > T::zero()
            && self.h > T::zero()
    }

    #[inline]
    pub fn x1(&self) -> T {
        self.cx - self.w * T::lit(0.5)
    }
    #[inline]
    pub fn x2(&self) -> T {
        self.cx + self.w * T::lit(0.5)
    }
    #[inline]
    pub fn y1(&self) -> T {
        self.cy - self.h * T::lit(0.5)
    }
    #[inline]
    pub fn y2(&self) -> T {
        self.cy + self.h * T::lit(0.5)
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self {
            cx: a[0],
            cy: a[1],
            w: a[2],
            h: a[3],
        }
    }

    pub fn translate(&self, dx: T, dy: T) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    /// Multiplies every coordinate by `s` (used to move between raster resolutions).
    pub fn scale(&self, s: T) -> Self {
        Self {
            cx: self.cx * s,
            cy: self.cy * s,
            w: self.w * s,
            h: self.h * s,
        }
    }

    /// Box expressed in frame-relative units (each coordinate divided by the matching frame side).
    pub fn normalized(&self, dims: FrameDims) -> [T; 4] {
        let (fw, fh) = dims.as_scalars::<T>();
        [self.cx / fw, self.cy / fh, self.w / fw, self.h / fh]
    }

    pub fn denormalized(v: [T; 4], dims: FrameDims) -> Self {
        let (fw, fh) = dims.as_scalars::<T>();
        Self {
            cx: v[0] * fw,
            cy: v[1] * fh,
            w: v[2] * fw,
            h: v[3] * fh,
        }
    }

    /// Area of the box that lies inside the frame.
    pub fn visible_area(&self, dims: FrameDims) -> T {
        let (fw, fh) = dims.as_scalars::<T>();
        let ix = (self.x2().min(fw) - self.x1().max(T::zero())).max(T::zero());
        let iy = (self.y2().min(fh) - self.y1().max(T::zero())).max(T::zero());
        ix * iy
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        BBox {
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            w: U::lit(self.w.as_f64()),
            h: U::lit(self.h.as_f64()),
        }
    }
}

/// Frame (or raster) size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameDims {
    pub width: u32,
    pub height: u32,
}

impl FrameDims {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(contract(format!(
                "frame dims must be positive, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn as_scalars<T: Scalar>(&self) -> (T, T) {
        (T::lit(self.width as f64), T::lit(self.height as f64))
    }
}

impl Default for FrameDims {
    fn default() -> Self {
        Self {
            width: 1280,
            height: 720,
        }
    }
}

impl std::fmt::Display for FrameDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Row-major occupancy grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    dims: FrameDims,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(dims: FrameDims) -> Self {
        Self {
            dims,
            bits: vec![false; dims.pixels()],
        }
    }

    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[v as usize * self.dims.width as usize + u as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Sets every pixel whose center lies inside the closed box.
    pub fn fill_box<T: Scalar>(&mut self, b: &BBox<T>) {
        let Some((u0, u1)) = center_span(b.x1(), b.x2(), self.dims.width) else {
            return;
        };
        let Some((v0, v1)) = center_span(b.y1(), b.y2(), self.dims.height) else {
            return;
        };
        let w = self.dims.width as usize;
        for v in v0..=v1 {
            let row = v as usize * w;
            self.bits[row + u0 as usize..=row + u1 as usize].fill(true);
        }
    }
}

/// Inclusive pixel-index range whose centers `i + 0.5` fall in `[lo, hi]`, clipped to `[0, n)`.
fn center_span<T: Scalar>(lo: T, hi: T, n: u32) -> Option<(u32, u32)> {
    let half = T::lit(0.5);
    let first = (lo - half).ceil().max(T::zero());
    let last = (hi - half).floor().min(T::lit(n as f64 - 1.0));
    if first > last {
        return None;
    }
    Some((first.to_u32()?, last.to_u32()?))
}

/// Intersection over union of two axis-aligned boxes.
pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let ix = (a.x2().min(b.x2()) - a.x1().max(b.x1())).max(T::zero());
    let iy = (a.y2().min(b.y2()) - a.y1().max(b.y1())).max(T::zero());
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).min(T::one()).max(T::zero())
}

/// Component-wise arithmetic mean of `(cx, cy, w, h)`.
pub fn average_boxes<T: Scalar>(boxes: &[BBox<T>]) -> Result<BBox<T>> {
    if boxes.is_empty() {
        return Err(contract("average_boxes requires at least one box"));
    }
    // accumulate offsets from the first box: identical inputs average exactly
    let origin = boxes[0].to_array();
    let n = T::lit(boxes.len() as f64);
    let mut acc = [T::zero(); 4];
    for b in boxes {
        for (k, v) in b.to_array().into_iter().enumerate() {
            acc[k] = acc[k] + (v - origin[k]);
        }
    }
    let mut out = origin;
    for k in 0..4 {
        out[k] = out[k] + acc[k] / n;
    }
    Ok(BBox::from_array(out))
}

pub fn rasterize<T: Scalar>(boxes: &[BBox<T>], dims: FrameDims) -> BinaryMask {
    let mut mask = BinaryMask::empty(dims);
    for b in boxes {
        mask.fill_box(b);
    }
    mask
}

/// IoU of two masks; two empty masks agree perfectly and score 1.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.dims != b.dims {
        return Err(contract(format!(
            "mask dims differ: {} vs {}",
            a.dims, b.dims
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.bits.iter().zip(&b.bits) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Population standard deviation of each box component over the set.
pub fn component_std<T: Scalar>(boxes: &[BBox<T>]) -> Result<[T; 4]> {
    if boxes.len() < 2 {
        return Err(contract(format!(
            "component_std needs >= 2 boxes, got {}",
            boxes.len()
        )));
    }
    // shifted by the first box so identical inputs give exactly zero
    let origin = boxes[0].to_array();
    let n = T::lit(boxes.len() as f64);
    let mut mean = [T::zero(); 4];
    for b in boxes {
        for (k, v) in b.to_array().into_iter().enumerate() {
            mean[k] = mean[k] + (v - origin[k]);
        }
    }
    let mean = mean.map(|m| m / n);
    let mut var = [T::zero(); 4];
    for b in boxes {
        for (k, v) in b.to_array().into_iter().enumerate() {
            let d = (v - origin[k]) - mean[k];
            var[k] = var[k] + d * d;
        }
    }
    Ok(var.map(|s| (s / n).sqrt()))
}
