//! Uniform grids, composite trapezoid/rectangle quadrature and mixed-norm
//! evaluation shared by every other module.
//!
//! A `Grid` is a tensor product of uniform 1-D axes. Closed (non-periodic)
//! axes carry both endpoints and trapezoid weights; periodic axes drop the
//! right endpoint and use the rectangle rule, which is spectrally accurate
//! for smooth periodic data. Fields are immutable after construction and all
//! operations here are pure.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Smooth cutoff primitive theta(t) = exp(-1/t) for t > 0, else 0.
pub fn theta(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// C-infinity transition nu with nu(t)=0 for t<=0, nu(t)=1 for t>=1 and
/// nu(t)+nu(1-t)=1.
pub fn nu(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = theta(t);
        let b = theta(1.0 - t);
        a / (a + b)
    }
}

/// C-infinity bump equal to 1 for |u| <= inner, 0 for |u| >= outer.
pub fn plateau_bump(u: f64, inner: f64, outer: f64) -> f64 {
    let a = u.abs();
    if a <= inner {
        1.0
    } else if a >= outer {
        0.0
    } else {
        nu((outer - a) / (outer - inner))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub periodic: bool,
    pub n: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.hi - self.lo) / self.n as f64
        } else {
            (self.hi - self.lo) / (self.n - 1) as f64
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.lo + self.spacing() * i as f64
    }

    fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if !self.periodic && (i == 0 || i == self.n - 1) {
            0.5 * h
        } else {
            h
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    /// Builds a grid over the product of `boxes` with `points_per_unit`
    /// points per unit length. Closed axes get round(len*ppu)+1 points so the
    /// spacing is exactly 1/ppu; periodic axes get round(len*ppu) points.
    pub fn new(boxes: &[(f64, f64)], points_per_unit: u32, periodic: &[bool]) -> Result<Grid> {
        if boxes.is_empty() || boxes.len() != periodic.len() {
            return Err(Error::Parameter("empty box or periodicity mismatch".into()));
        }
        if points_per_unit < 2 {
            return Err(Error::Parameter("points_per_unit must be >= 2".into()));
        }
        let mut axes = Vec::with_capacity(boxes.len());
        for (&(lo, hi), &p) in boxes.iter().zip(periodic) {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Parameter(format!("bad axis interval [{lo}, {hi}]")));
            }
            let m = ((hi - lo) * points_per_unit as f64).round() as usize;
            let n = if p { m.max(2) } else { m.max(1) + 1 };
            axes.push(Axis { lo, hi, periodic: p, n });
        }
        Ok(Grid { axes })
    }

    pub fn from_axes(axes: Vec<Axis>) -> Grid {
        Grid { axes }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major flat index (last axis fastest).
    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for (a, &i) in self.axes.iter().zip(idx) {
            f = f * a.n + i;
        }
        f
    }

    pub fn coords(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for ax in (0..self.axes.len()).rev() {
            let n = self.axes[ax].n;
            out[ax] = self.axes[ax].coord(rem % n);
            rem /= n;
        }
    }

    pub fn weight(&self, flat: usize) -> f64 {
        let mut w = 1.0;
        let mut rem = flat;
        for ax in (0..self.axes.len()).rev() {
            let n = self.axes[ax].n;
            w *= self.axes[ax].weight(rem % n);
            rem /= n;
        }
        w
    }

    /// 1-D quadrature weights of one axis.
    pub fn axis_weights(&self, ax: usize) -> Vec<f64> {
        (0..self.axes[ax].n).map(|i| self.axes[ax].weight(i)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SampledField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl SampledField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<SampledField> {
        if values.len() != grid.len() {
            return Err(Error::Parameter("values length does not match grid".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value in field".into()));
        }
        Ok(SampledField { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> SampledField {
        let n = grid.len();
        SampledField { grid, values: vec![0.0; n] }
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: Arc<Grid>, f: F) -> SampledField {
        let d = grid.dim();
        let mut values = vec![0.0; grid.len()];
        let mut x = vec![0.0; d];
        for (i, v) in values.iter_mut().enumerate() {
            grid.coords(i, &mut x);
            *v = f(&x);
        }
        SampledField { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> SampledField {
        SampledField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &SampledField, f: F) -> SampledField {
        assert_eq!(self.values.len(), other.values.len(), "field length mismatch");
        SampledField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> SampledField {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &SampledField) -> SampledField {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SampledField) -> SampledField {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Cubic (Catmull-Rom) interpolation at an arbitrary point. Periodic axes
    /// wrap; on closed axes points outside the box evaluate to 0 (fields here
    /// are compactly supported inside their boxes whenever this is used).
    pub fn sample(&self, x: &[f64]) -> f64 {
        let d = self.grid.dim();
        debug_assert_eq!(x.len(), d);
        let mut base = [0isize; 8];
        let mut frac = [0.0f64; 8];
        for ax in 0..d {
            let a = &self.grid.axes()[ax];
            let h = a.spacing();
            let mut t = (x[ax] - a.lo) / h;
            if a.periodic {
                t = t.rem_euclid(a.n as f64);
            } else if t < -1e-12 || t > (a.n - 1) as f64 + 1e-12 {
                return 0.0;
            }
            let i0 = t.floor();
            base[ax] = i0 as isize;
            frac[ax] = t - i0;
        }
        self.interp_rec(0, &base[..d], &frac[..d], 0)
    }

    fn value_at(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    fn interp_rec(&self, ax: usize, base: &[isize], frac: &[f64], flat: usize) -> f64 {
        let a = &self.grid.axes()[ax];
        let n = a.n as isize;
        let mut p = [0.0f64; 4];
        for (s, ps) in p.iter_mut().enumerate() {
            let mut i = base[ax] + s as isize - 1;
            if a.periodic {
                i = i.rem_euclid(n);
            } else if i < 0 {
                i = 0;
            } else if i >= n {
                i = n - 1;
            }
            let f = flat * a.n + i as usize;
            *ps = if ax + 1 == base.len() {
                self.value_at(f)
            } else {
                self.interp_rec(ax + 1, base, frac, f)
            };
        }
        catmull_rom(p, frac[ax])
    }
}

fn catmull_rom(p: [f64; 4], t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * ((2.0 * p[1])
        + (-p[0] + p[2]) * t
        + (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]) * t2
        + (-p[0] + 3.0 * p[1] - 3.0 * p[2] + p[3]) * t3)
}

/// Composite trapezoid quadrature (rectangle rule on periodic axes).
pub fn integrate(f: &SampledField) -> f64 {
    let grid = f.grid();
    let mut acc = 0.0;
    for (i, &v) in f.values().iter().enumerate() {
        acc += v * grid.weight(i);
    }
    acc
}

/// Quadrature inner product of two fields on the same grid.
pub fn inner(f: &SampledField, g: &SampledField) -> f64 {
    let grid = f.grid();
    assert_eq!(f.values().len(), g.values().len(), "field length mismatch");
    let mut acc = 0.0;
    for (i, (&a, &b)) in f.values().iter().zip(g.values()).enumerate() {
        acc += a * b * grid.weight(i);
    }
    acc
}

/// (integral |f|^p)^(1/p); for p < 1 this is the quasi-norm value.
pub fn lp_norm(f: &SampledField, p: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Parameter(format!("p must lie in (0, inf), got {p}")));
    }
    let grid = f.grid();
    let mut acc = 0.0;
    for (i, &v) in f.values().iter().enumerate() {
        acc += v.abs().powf(p) * grid.weight(i);
    }
    Ok(acc.powf(1.0 / p))
}

pub fn l2_norm(f: &SampledField) -> f64 {
    inner(f, f).max(0.0).sqrt()
}

/// Mixed-norm parameter pack for the sequence norms of the frame modules.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormParams {
    pub s: f64,
    pub p: f64,
    /// `None` encodes q = infinity.
    pub q: Option<f64>,
}

impl NormParams {
    pub fn new(s: f64, p: f64, q: Option<f64>) -> Result<NormParams> {
        if !(p > 0.0) {
            return Err(Error::Parameter(format!("p must be positive, got {p}")));
        }
        if let Some(q) = q {
            if !(q > 0.0) {
                return Err(Error::Parameter(format!("q must be positive, got {q}")));
            }
        }
        Ok(NormParams { s, p, q })
    }

    pub fn sigma_pq(&self, d: usize) -> f64 {
        let d = d as f64;
        let a = 1.0 / self.p - 1.0;
        let b = self.q.map_or(-1.0, |q| 1.0 / q - 1.0);
        d * a.max(b).max(0.0)
    }

    pub fn sigma_p(&self, d: usize) -> f64 {
        d as f64 * (1.0 / self.p - 1.0).max(0.0)
    }
}

/// Least-squares slope of y against x.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}
