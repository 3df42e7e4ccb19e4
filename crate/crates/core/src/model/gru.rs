//! GRU cell and dense layer with explicit backward passes.

use rand::Rng;

use crate::error::{contract, Result};
use crate::scalar::Scalar;

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `out[k] = bias[k] + W[k, :] . x` for a row-major `rows x x.len()` matrix.
#[inline]
pub(crate) fn matvec_into<T: Scalar>(w: &[T], x: &[T], bias: &[T], out: &mut [T]) {
    let cols = x.len();
    for (k, o) in out.iter_mut().enumerate() {
        *o = bias[k] + T::dot(&w[k * cols..(k + 1) * cols], x);
    }
}

/// `out[:] += W^T . d` for a row-major matrix with `d.len()` rows.
#[inline]
pub(crate) fn matvec_t_acc<T: Scalar>(w: &[T], d: &[T], out: &mut [T]) {
    let cols = out.len();
    for (k, dk) in d.iter().enumerate() {
        if *dk != T::zero() {
            T::axpy(*dk, &w[k * cols..(k + 1) * cols], out);
        }
    }
}

/// `G += d x^T`
#[inline]
pub(crate) fn outer_acc<T: Scalar>(g: &mut [T], d: &[T], x: &[T]) {
    let cols = x.len();
    for (k, dk) in d.iter().enumerate() {
        if *dk != T::zero() {
            T::axpy(*dk, x, &mut g[k * cols..(k + 1) * cols]);
        }
    }
}

fn uniform_vec<T: Scalar, R: Rng>(rng: &mut R, n: usize, bound: f64) -> Vec<T> {
    (0..n)
        .map(|_| T::lit(rng.random_range(-bound..=bound)))
        .collect()
}

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub input: usize,
    pub output: usize,
    /// `output x input`, row-major.
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            input,
            output,
            w: vec![T::zero(); input * output],
            b: vec![T::zero(); output],
        }
    }

    pub fn uniform<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            input,
            output,
            w: uniform_vec(rng, input * output, bound),
            b: uniform_vec(rng, output, bound),
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.output];
        matvec_into(&self.w, x, &self.b, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grads` and `W^T dy` into `dx`.
    pub fn backward(&self, x: &[T], dy: &[T], grads: &mut Self, dx: &mut [T]) {
        outer_acc(&mut grads.w, dy, x);
        for (g, d) in grads.b.iter_mut().zip(dy) {
            *g = *g + *d;
        }
        matvec_t_acc(&self.w, dy, dx);
    }
}

/// Gated recurrent unit.
///
/// ```text
/// z  = sigmoid(Wz x + Uz h + bz)
/// r  = sigmoid(Wr x + Ur h + br)
/// n  = tanh(Wn x + Un (r * h) + bn)
/// h' = (1 - z) * n + z * h
/// ```
/// Rows of `w`, `u` and `b` are stacked in the order `z, r, n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell<T> {
    pub input: usize,
    pub hidden: usize,
    /// `3H x I`
    pub w: Vec<T>,
    /// `3H x H`
    pub u: Vec<T>,
    /// `3H`
    pub b: Vec<T>,
}

/// Intermediate values of one GRU step kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GruCache<T> {
    pub x: Vec<T>,
    pub h: Vec<T>,
    z: Vec<T>,
    r: Vec<T>,
    n: Vec<T>,
    rh: Vec<T>,
}

impl<T: Scalar> GruCell<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w: vec![T::zero(); 3 * hidden * input],
            u: vec![T::zero(); 3 * hidden * hidden],
            b: vec![T::zero(); 3 * hidden],
        }
    }

    pub fn uniform<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            input,
            hidden,
            w: uniform_vec(rng, 3 * hidden * input, bound),
            u: uniform_vec(rng, 3 * hidden * hidden, bound),
            b: uniform_vec(rng, 3 * hidden, bound),
        }
    }

    fn check(&self, x: &[T], h: &[T]) -> Result<()> {
        if x.len() != self.input || h.len() != self.hidden {
            return Err(contract(format!(
                "gru expects input {} / hidden {}, got {} / {}",
                self.input,
                self.hidden,
                x.len(),
                h.len()
            )));
        }
        Ok(())
    }

    /// One checked GRU update.
    pub fn step(&self, x: &[T], h: &[T]) -> Result<Vec<T>> {
        self.check(x, h)?;
        Ok(self.forward(x, h).0)
    }

    pub(crate) fn forward(&self, x: &[T], h: &[T]) -> (Vec<T>, GruCache<T>) {
        let hs = self.hidden;
        let (inp, hh) = (self.input, hs);
        let mut z = vec![T::zero(); hs];
        let mut r = vec![T::zero(); hs];
        let mut n = vec![T::zero(); hs];
        for k in 0..hs {
            let az = self.b[k]
                + T::dot(&self.w[k * inp..(k + 1) * inp], x)
                + T::dot(&self.u[k * hh..(k + 1) * hh], h);
            let kr = hs + k;
            let ar = self.b[kr]
                + T::dot(&self.w[kr * inp..(kr + 1) * inp], x)
                + T::dot(&self.u[kr * hh..(kr + 1) * hh], h);
            z[k] = sigmoid(az);
            r[k] = sigmoid(ar);
        }
        let rh: Vec<T> = r.iter().zip(h).map(|(a, b)| *a * *b).collect();
        for (k, nk) in n.iter_mut().enumerate() {
            let kn = 2 * hs + k;
            let an = self.b[kn]
                + T::dot(&self.w[kn * inp..(kn + 1) * inp], x)
                + T::dot(&self.u[kn * hh..(kn + 1) * hh], &rh);
            *nk = an.tanh();
        }
        let out: Vec<T> = (0..hs)
            .map(|k| (T::one() - z[k]) * n[k] + z[k] * h[k])
            .collect();
        (
            out,
            GruCache {
                x: x.to_vec(),
                h: h.to_vec(),
                z,
                r,
                n,
                rh,
            },
        )
    }

    /// Backpropagates `dh_new` through one step. Parameter gradients are
    /// accumulated into `grads`; input and previous-state gradients are
    /// accumulated into `dx` (when requested) and `dh_prev`.
    pub(crate) fn backward(
        &self,
        cache: &GruCache<T>,
        dh_new: &[T],
        grads: &mut Self,
        dx: Option<&mut [T]>,
        dh_prev: &mut [T],
    ) {
        let hs = self.hidden;
        let inp = self.input;
        let one = T::one();
        // pre-activation gradients, stacked z, r, n
        let mut da = vec![T::zero(); 3 * hs];
        for k in 0..hs {
            let (z, n) = (cache.z[k], cache.n[k]);
            let d = dh_new[k];
            dh_prev[k] = dh_prev[k] + d * z;
            da[k] = d * (cache.h[k] - n) * z * (one - z);
            da[2 * hs + k] = d * (one - z) * (one - n * n);
        }
        let dan = &da[2 * hs..];
        // gradient w.r.t. r * h
        let mut drh = vec![T::zero(); hs];
        matvec_t_acc(&self.u[2 * hs * hs..], dan, &mut drh);
        for k in 0..hs {
            let r = cache.r[k];
            dh_prev[k] = dh_prev[k] + drh[k] * r;
            da[hs + k] = drh[k] * cache.h[k] * r * (one - r);
        }

        outer_acc(&mut grads.w, &da, &cache.x);
        outer_acc(&mut grads.u[..2 * hs * hs], &da[..2 * hs], &cache.h);
        outer_acc(&mut grads.u[2 * hs * hs..], &da[2 * hs..], &cache.rh);
        for (g, d) in grads.b.iter_mut().zip(&da) {
            *g = *g + *d;
        }

        matvec_t_acc(&self.u[..2 * hs * hs], &da[..2 * hs], dh_prev);
        if let Some(dx) = dx {
            debug_assert_eq!(dx.len(), inp);
            matvec_t_acc(&self.w, &da, dx);
        }
    }
}
