//! Dense motion fields and the pooled per-object motion feature.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::geometry::{BBox, FrameDims};
use crate::scalar::Scalar;

/// Spatial bins per side of the pooled feature.
pub const POOL_BINS: usize = 5;
/// Length of the flattened pooled feature (5x5 bins, two flow channels).
pub const FEATURE_LEN: usize = POOL_BINS * POOL_BINS * 2;

/// Affine flow over a box region, painted over the lattice field.
///
/// Inside the closed box the flow is `(du + rx * (x - cx), dv + ry * (y - cy))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowPatch<T = f64> {
    pub region: BBox<T>,
    pub du: T,
    pub dv: T,
    pub rx: T,
    pub ry: T,
}

impl<T: Scalar> FlowPatch<T> {
    fn covers(&self, x: T, y: T) -> bool {
        x >= self.region.x1()
            && x <= self.region.x2()
            && y >= self.region.y1()
            && y <= self.region.y2()
    }

    pub fn at(&self, x: T, y: T) -> (T, T) {
        (
            self.du + self.rx * (x - self.region.cx),
            self.dv + self.ry * (y - self.region.cy),
        )
    }

    pub fn cast<U: Scalar>(&self) -> FlowPatch<U> {
        let c = |v: T| U::lit(v.as_f64());
        FlowPatch {
            region: self.region.cast(),
            du: c(self.du),
            dv: c(self.dv),
            rx: c(self.rx),
            ry: c(self.ry),
        }
    }
}

/// Two-channel flow `(du, dv)` in pixels/frame over a frame.
///
/// Values live on a `grid` lattice spanning the frame: node `(i, j)` sits at
/// pixel `(i * (W - 1) / (gw - 1), j * (H - 1) / (gh - 1))`, so with
/// `grid == dims` node `(u, v)` is pixel `(u, v)`. Coarser grids are upsampled
/// bilinearly on every sample. Patches, if any, override the lattice inside
/// their regions; later patches sit on top.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T = f64> {
    dims: FrameDims,
    grid: FrameDims,
    data: Vec<T>,
    patches: Vec<FlowPatch<T>>,
}

fn node_spacing(frame: u32, grid: u32) -> f64 {
    if grid > 1 {
        (frame - 1) as f64 / (grid - 1) as f64
    } else {
        0.0
    }
}

impl<T: Scalar> FlowField<T> {
    pub fn new(dims: FrameDims, grid: FrameDims, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.pixels() * 2 {
            return Err(contract(format!(
                "flow grid {grid} needs {} values, got {}",
                grid.pixels() * 2,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(contract("flow values must be finite"));
        }
        Ok(Self {
            dims,
            grid,
            data,
            patches: Vec::new(),
        })
    }

    pub fn zeros(dims: FrameDims, grid: FrameDims) -> Self {
        Self {
            dims,
            grid,
            data: vec![T::zero(); grid.pixels() * 2],
            patches: Vec::new(),
        }
    }

    /// Evaluates `f(x, y)` at every lattice node (frame pixel coordinates).
    pub fn from_fn(dims: FrameDims, grid: FrameDims, mut f: impl FnMut(T, T) -> (T, T)) -> Self {
        let sx = T::lit(node_spacing(dims.width, grid.width));
        let sy = T::lit(node_spacing(dims.height, grid.height));
        let mut data = Vec::with_capacity(grid.pixels() * 2);
        for j in 0..grid.height {
            let y = T::lit(j as f64) * sy;
            for i in 0..grid.width {
                let x = T::lit(i as f64) * sx;
                let (du, dv) = f(x, y);
                data.push(du);
                data.push(dv);
            }
        }
        Self {
            dims,
            grid,
            data,
            patches: Vec::new(),
        }
    }

    pub fn with_patches(mut self, patches: Vec<FlowPatch<T>>) -> Result<Self> {
        for p in &patches {
            if !p.region.is_valid() || ![p.du, p.dv, p.rx, p.ry].iter().all(|v| v.is_finite()) {
                return Err(contract(
                    "flow patch must have a valid region and finite values",
                ));
            }
        }
        self.patches = patches;
        Ok(self)
    }

    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    pub fn grid(&self) -> FrameDims {
        self.grid
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn patches(&self) -> &[FlowPatch<T>] {
        &self.patches
    }

    pub fn cast<U: Scalar>(&self) -> FlowField<U> {
        FlowField {
            dims: self.dims,
            grid: self.grid,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            patches: self.patches.iter().map(FlowPatch::cast).collect(),
        }
    }

    #[inline]
    fn node(&self, i: usize, j: usize) -> (T, T) {
        let k = (j * self.grid.width as usize + i) * 2;
        (self.data[k], self.data[k + 1])
    }

    /// Flow at frame pixel coordinate `(x, y)`: the topmost covering patch, or
    /// else the bilinearly interpolated lattice, clamped to the border.
    pub fn sample(&self, x: T, y: T) -> (T, T) {
        if let Some(p) = self.patches.iter().rev().find(|p| p.covers(x, y)) {
            return p.at(x, y);
        }
        self.sample_lattice(x, y)
    }

    fn sample_lattice(&self, x: T, y: T) -> (T, T) {
        let to_grid = |v: T, frame: u32, grid: u32| {
            let s = node_spacing(frame, grid);
            if s > 0.0 {
                (v / T::lit(s))
                    .max(T::zero())
                    .min(T::lit((grid - 1) as f64))
            } else {
                T::zero()
            }
        };
        let gx = to_grid(x, self.dims.width, self.grid.width);
        let gy = to_grid(y, self.dims.height, self.grid.height);
        let x0 = gx.floor();
        let y0 = gy.floor();
        let fx = gx - x0;
        let fy = gy - y0;
        let i0 = x0.to_usize().unwrap_or(0);
        let j0 = y0.to_usize().unwrap_or(0);
        let i1 = (i0 + 1).min(self.grid.width as usize - 1);
        let j1 = (j0 + 1).min(self.grid.height as usize - 1);
        let (a, b, c, d) = (
            self.node(i0, j0),
            self.node(i1, j0),
            self.node(i0, j1),
            self.node(i1, j1),
        );
        let one = T::one();
        let lerp2 = |p: T, q: T, r: T, s: T| {
            (p * (one - fx) + q * fx) * (one - fy) + (r * (one - fx) + s * fx) * fy
        };
        (lerp2(a.0, b.0, c.0, d.0), lerp2(a.1, b.1, c.1, d.1))
    }
}

/// Pooled motion descriptor of one object: 5x5 bins, `(du, dv)` per bin,
/// row-major over bins with the channel varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectFeature<T = f64> {
    values: Vec<T>,
}

impl<T: Scalar> ObjectFeature<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.len() != FEATURE_LEN {
            return Err(contract(format!(
                "feature must have {FEATURE_LEN} values, got {}",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros() -> Self {
        Self {
            values: vec![T::zero(); FEATURE_LEN],
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `(du, dv)` of bin `(row, col)`.
    pub fn bin(&self, row: usize, col: usize) -> (T, T) {
        let k = (row * POOL_BINS + col) * 2;
        (self.values[k], self.values[k + 1])
    }
}

/// Samples the flow at the 5x5 bin centers spanning `bbox`, one bilinear
/// sample per bin.
pub fn roi_pool<T: Scalar>(flow: &FlowField<T>, bbox: &BBox<T>) -> ObjectFeature<T> {
    let n = T::lit(POOL_BINS as f64);
    let half = T::lit(0.5);
    let mut values = Vec::with_capacity(FEATURE_LEN);
    for r in 0..POOL_BINS {
        let y = bbox.y1() + (T::lit(r as f64) + half) * bbox.h / n;
        for c in 0..POOL_BINS {
            let x = bbox.x1() + (T::lit(c as f64) + half) * bbox.w / n;
            let (du, dv) = flow.sample(x, y);
            values.push(du);
            values.push(dv);
        }
    }
    ObjectFeature { values }
}
