//! One-dimensional wavelet generators: compactly supported extremal-phase
//! Daubechies pairs (finite smoothness) and the real-valued Meyer pair
//! (infinite smoothness), both evaluated to dense dyadic tables.
//!
//! Daubechies filters are produced by spectral factorization of the binomial
//! polynomial (roots kept inside the unit disc) followed by a Newton polish
//! of the quadrature-mirror system, so the filter invariants hold to machine
//! precision without hardcoded tables. Scaling/wavelet values come from the
//! refinement eigenproblem at the integers plus the exact two-scale relation
//! on dyadic points. The Meyer pair is evaluated by a cosine transform of its
//! closed-form Fourier profile, truncated in space and renormalized in L2.

use crate::error::{Error, Result};
use crate::numerics::{nu, Grid, SampledField};
use nalgebra::{Complex, DMatrix, DVector};
use std::sync::Arc;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone)]
pub struct FilterPair {
    /// Vanishing-moment parameter; filter length is 2N.
    pub n: usize,
    pub lowpass: Vec<f64>,
    pub highpass: Vec<f64>,
}

impl FilterPair {
    /// Support length of the scaling function, 2N - 1.
    pub fn support(&self) -> usize {
        2 * self.n - 1
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Roots of a real polynomial (ascending coefficients) via the companion
/// matrix.
fn poly_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let mut m = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        m[(i, deg - 1)] = -coeffs[i] / lead;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

fn poly_mul(a: &[Complex<f64>], b: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Extremal-phase Daubechies filter pair of order N (1 <= N <= 10).
pub fn daubechies_filter(n: usize) -> Result<FilterPair> {
    if !(1..=10).contains(&n) {
        return Err(Error::Parameter(format!("Daubechies order N={n} outside 1..=10")));
    }
    if n == 1 {
        let h = vec![1.0 / SQRT2, 1.0 / SQRT2];
        let g = alternating_flip(&h);
        return Ok(FilterPair { n, lowpass: h, highpass: g });
    }

    // P(y) = sum_{k<N} C(N-1+k, k) y^k; factor Q(z) Q(1/z) = P(y(z)) with
    // y = (2 - z - 1/z)/4, keeping the z-roots inside the unit disc.
    let p: Vec<f64> = (0..n).map(|k| binomial(n - 1 + k, k)).collect();
    let mut q_roots: Vec<Complex<f64>> = Vec::new();
    for y in poly_roots(&p) {
        // z^2 - (2 - 4y) z + 1 = 0
        let b = Complex::new(2.0, 0.0) - y * 4.0;
        let disc = (b * b - Complex::new(4.0, 0.0)).sqrt();
        let z1 = (b + disc) / 2.0;
        let z2 = (b - disc) / 2.0;
        q_roots.push(if z1.norm() < 1.0 { z1 } else { z2 });
    }

    let mut q = vec![Complex::new(1.0, 0.0)];
    for r in &q_roots {
        q = poly_mul(&q, &[-r, Complex::new(1.0, 0.0)]);
    }
    let q1: Complex<f64> = q.iter().sum();
    let q: Vec<Complex<f64>> = q.iter().map(|c| c / q1).collect();

    let mut m0 = vec![Complex::new(1.0, 0.0)];
    let half = [Complex::new(0.5, 0.0), Complex::new(0.5, 0.0)];
    for _ in 0..n {
        m0 = poly_mul(&m0, &half);
    }
    m0 = poly_mul(&m0, &q);
    let mut h: Vec<f64> = m0.iter().map(|c| SQRT2 * c.re).collect();
    debug_assert_eq!(h.len(), 2 * n);

    newton_polish(&mut h, n)?;
    if h.iter().sum::<f64>() < 0.0 {
        for v in h.iter_mut() {
            *v = -*v;
        }
    }
    // Extremal phase is front-loaded; orient deterministically.
    let centroid: f64 = h.iter().enumerate().map(|(k, &v)| k as f64 * v * v).sum();
    if centroid > (2 * n - 1) as f64 / 2.0 {
        h.reverse();
    }
    let g = alternating_flip(&h);
    Ok(FilterPair { n, lowpass: h, highpass: g })
}

fn alternating_flip(h: &[f64]) -> Vec<f64> {
    let l = h.len();
    (0..l)
        .map(|k| if k % 2 == 0 { h[l - 1 - k] } else { -h[l - 1 - k] })
        .collect()
}

/// Newton refinement of the orthogonality and vanishing-moment system. The
/// spectral-factorization seed is already accurate to ~1e-13; this just
/// tightens it when the (increasingly ill-conditioned) Jacobian still allows
/// a productive step, and otherwise keeps the best iterate seen.
fn newton_polish(h: &mut [f64], n: usize) -> Result<()> {
    let len = 2 * n;
    let scale = (len - 1) as f64;
    let system = |h: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let mut f = DVector::<f64>::zeros(len);
        let mut jac = DMatrix::<f64>::zeros(len, len);
        // orthogonality: sum_k h_k h_{k+2m} = delta_{m0}
        for m in 0..n {
            let mut e = 0.0;
            for k in 0..len - 2 * m {
                e += h[k] * h[k + 2 * m];
                jac[(m, k)] += h[k + 2 * m];
                jac[(m, k + 2 * m)] += h[k];
            }
            f[m] = e - if m == 0 { 1.0 } else { 0.0 };
        }
        // moments: sum_k (-1)^k (k/(2N-1))^r h_k = 0
        for r in 0..n {
            let mut e = 0.0;
            for (k, &hk) in h.iter().enumerate() {
                let w = if k % 2 == 0 { 1.0 } else { -1.0 }
                    * if r == 0 { 1.0 } else { (k as f64 / scale).powi(r as i32) };
                e += w * hk;
                jac[(n + r, k)] = w;
            }
            f[n + r] = e;
        }
        (f, jac)
    };

    let mut best = h.to_vec();
    let (mut f, mut jac) = system(h);
    let mut best_res = f.norm();
    for _ in 0..20 {
        if best_res < 1e-13 {
            break;
        }
        let Some(delta) = jac.clone().lu().solve(&f) else { break };
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..8 {
            let cand: Vec<f64> = best
                .iter()
                .zip(delta.iter())
                .map(|(&v, &d)| v - step * d)
                .collect();
            let (cf, cjac) = system(&cand);
            if cf.norm() < best_res {
                best = cand;
                best_res = cf.norm();
                f = cf;
                jac = cjac;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if best_res > 1e-12 {
        return Err(Error::Construction(format!(
            "filter polish stalled at residual {best_res:.3e}"
        )));
    }
    h.copy_from_slice(&best);
    Ok(())
}

/// Dense table of a function on a uniform dyadic grid; zero outside.
#[derive(Debug, Clone)]
pub struct DyadicTable {
    pub lo: f64,
    pub step: f64,
    pub vals: Vec<f64>,
}

impl DyadicTable {
    pub fn hi(&self) -> f64 {
        self.lo + self.step * (self.vals.len() - 1) as f64
    }

    /// Linear interpolation; exact at table nodes, zero outside the support.
    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.lo) / self.step;
        if t < 0.0 || t > (self.vals.len() - 1) as f64 {
            return 0.0;
        }
        let i = t.floor() as usize;
        if i + 1 >= self.vals.len() {
            return self.vals[self.vals.len() - 1];
        }
        let f = t - i as f64;
        self.vals[i] * (1.0 - f) + self.vals[i + 1] * f
    }

    /// Cubic interpolation for smooth tables (Meyer).
    pub fn eval_cubic(&self, x: f64) -> f64 {
        let t = (x - self.lo) / self.step;
        let last = (self.vals.len() - 1) as f64;
        if t < 0.0 || t > last {
            return 0.0;
        }
        let i0 = (t.floor() as isize).clamp(0, self.vals.len() as isize - 2);
        let f = t - i0 as f64;
        let idx = |i: isize| -> f64 {
            let i = i.clamp(0, self.vals.len() as isize - 1);
            self.vals[i as usize]
        };
        let (p0, p1, p2, p3) = (idx(i0 - 1), idx(i0), idx(i0 + 1), idx(i0 + 2));
        let f2 = f * f;
        let f3 = f2 * f;
        0.5 * (2.0 * p1
            + (-p0 + p2) * f
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * f2
            + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * f3)
    }

    pub fn to_field(&self, ppu: u32) -> Result<SampledField> {
        let grid = Arc::new(Grid::new(&[(self.lo, self.hi())], ppu, &[false])?);
        let t = self.clone();
        Ok(SampledField::from_fn(grid, move |x| t.eval(x[0])))
    }
}

/// Scaling and wavelet values on the dyadic grid of step 2^-levels over
/// [0, 2N-1], from the refinement eigenproblem plus the two-scale relation.
pub fn cascade_evaluate(filter: &FilterPair, levels: u32) -> Result<(DyadicTable, DyadicTable)> {
    if levels < 4 {
        return Err(Error::Parameter("cascade needs levels >= 4".into()));
    }
    let n = filter.n;
    let supp = 2 * n - 1;
    let h = &filter.lowpass;
    let g = &filter.highpass;

    // Values at the integers 0..=supp.
    let mut phi_int = vec![0.0; supp + 1];
    if n == 1 {
        phi_int[0] = 1.0;
    } else {
        let dim = supp + 1;
        let mut t = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            for k in 0..dim {
                let j = 2 * i as isize - k as isize;
                if j >= 0 && (j as usize) < 2 * n {
                    t[(i, k)] = SQRT2 * h[j as usize];
                }
            }
        }
        // Solve (T - I) v = 0 with the normalization sum v = 1 replacing the
        // last equation.
        let mut a = t.clone() - DMatrix::<f64>::identity(dim, dim);
        for k in 0..dim {
            a[(dim - 1, k)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(dim);
        rhs[dim - 1] = 1.0;
        let v = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Construction("defective refinement matrix".into()))?;
        let resid = (&t * &v - &v).norm();
        if resid > 1e-10 {
            return Err(Error::Construction(format!(
                "refinement eigenproblem residual {resid:.3e}"
            )));
        }
        phi_int.copy_from_slice(v.as_slice());
    }

    // Refine: level l has supp*2^l + 1 samples at step 2^-l.
    let mut phi = phi_int;
    for l in 1..=levels {
        let m_prev = phi.len() - 1;
        let mut next = vec![0.0; 2 * m_prev + 1];
        for (k, slot) in next.iter_mut().enumerate() {
            if k % 2 == 0 {
                *slot = phi[k / 2];
            } else {
                // phi(k/2^l) = sqrt2 sum_m h_m phi(k/2^(l-1) - m)
                let mut acc = 0.0;
                for (m, &hm) in h.iter().enumerate() {
                    let j = k as isize - (m << (l - 1)) as isize;
                    if j >= 0 && (j as usize) <= m_prev {
                        acc += hm * phi[j as usize];
                    }
                }
                *slot = SQRT2 * acc;
            }
        }
        phi = next;
    }

    let step = 0.5f64.powi(levels as i32);
    let scale = 1 << levels;
    let mut psi = vec![0.0; phi.len()];
    for (j, slot) in psi.iter_mut().enumerate() {
        // psi(x) = sqrt2 sum_k g_k phi(2x - k); 2x - k indexes 2j - k*2^L.
        let mut acc = 0.0;
        for (k, &gk) in g.iter().enumerate() {
            let idx = 2 * j as isize - (k * scale) as isize;
            if idx >= 0 && (idx as usize) < phi.len() {
                acc += gk * phi[idx as usize];
            }
        }
        *slot = SQRT2 * acc;
    }

    Ok((
        DyadicTable { lo: 0.0, step, vals: phi },
        DyadicTable { lo: 0.0, step, vals: psi },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Scaling,
    Wavelet,
}

/// Smooth transition used in the Fourier-domain Meyer profile. Both
/// variants satisfy nu(t) + nu(1-t) = 1 with nu = 0 below 0 and 1 above 1.
///
/// `ExpReciprocal` is the C-infinity exp(-1/t) construction (also used for
/// the folding bells, where multiplier smoothness matters). Its truncated
/// Meyer wavelet decays slowly in practice, so the profile default is the
/// twice-iterated sine smoothstep, whose envelope drops about two orders of
/// magnitude faster across the truncation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bell {
    ExpReciprocal,
    IteratedSine(u8),
}

impl Bell {
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        match self {
            Bell::ExpReciprocal => nu(t),
            Bell::IteratedSine(k) => {
                let mut v = t;
                for _ in 0..*k {
                    v = (std::f64::consts::FRAC_PI_2 * v).sin().powi(2);
                }
                v
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MeyerPair {
    /// The smooth transition function used in the Fourier-domain profile.
    pub bell: Bell,
    /// Frequency-grid resolution for the inverse-transform evaluation.
    pub freq_grid: usize,
    /// Spatial truncation radius R.
    pub truncation_radius: f64,
}

impl Default for MeyerPair {
    fn default() -> Self {
        MeyerPair {
            bell: Bell::IteratedSine(2),
            freq_grid: 1024,
            truncation_radius: 16.0,
        }
    }
}

/// Real Fourier-domain profile (linear phase folded out; the wavelet itself
/// is symmetric about x = 1/2).
pub fn meyer_profile(pair: &MeyerPair, which: Which, xi: f64) -> f64 {
    let a = xi.abs();
    let third = std::f64::consts::PI * 2.0 / 3.0;
    let nu = |t: f64| pair.bell.eval(t);
    match which {
        Which::Scaling => {
            if a <= third {
                1.0
            } else if a <= 2.0 * third {
                (std::f64::consts::FRAC_PI_2 * nu(a / third - 1.0)).cos()
            } else {
                0.0
            }
        }
        Which::Wavelet => {
            if a <= third {
                0.0
            } else if a <= 2.0 * third {
                (std::f64::consts::FRAC_PI_2 * nu(a / third - 1.0)).sin()
            } else if a <= 4.0 * third {
                (std::f64::consts::FRAC_PI_2 * nu(a / (2.0 * third) - 1.0)).cos()
            } else {
                0.0
            }
        }
    }
}

/// Center of symmetry of the two profiles in space.
fn meyer_center(which: Which) -> f64 {
    match which {
        Which::Scaling => 0.0,
        Which::Wavelet => 0.5,
    }
}

/// Dense table of the truncated, L2-renormalized Meyer function.
pub fn meyer_table(pair: &MeyerPair, which: Which) -> Result<DyadicTable> {
    if pair.truncation_radius < 8.0 {
        return Err(Error::Parameter("Meyer truncation radius must be >= 8".into()));
    }
    if pair.freq_grid < 256 {
        return Err(Error::Resolution(format!(
            "Meyer frequency grid {} too coarse for the requested accuracy",
            pair.freq_grid
        )));
    }
    let xi_max = 8.0 * std::f64::consts::PI / 3.0;
    let m = pair.freq_grid;
    let dxi = xi_max / m as f64;
    let center = meyer_center(which);
    let profile: Vec<f64> = (0..=m)
        .map(|i| meyer_profile(pair, which, i as f64 * dxi))
        .collect();

    let step = 0.5f64.powi(11);
    let r = pair.truncation_radius;
    let len = (2.0 * r / step).round() as usize + 1;
    let mut vals = vec![0.0; len];
    for (j, slot) in vals.iter_mut().enumerate() {
        let x = -r + j as f64 * step - center;
        // f(x) = (1/pi) int_0^ximax w(xi) cos(xi (x - c)) dxi, trapezoid.
        let mut acc = 0.0;
        for (i, &w) in profile.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let tw = if i == 0 || i == m { 0.5 } else { 1.0 };
            acc += tw * w * (i as f64 * dxi * x).cos();
        }
        *slot = acc * dxi / std::f64::consts::PI;
    }
    let mut table = DyadicTable { lo: -r, step, vals };
    let norm2: f64 = table
        .vals
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = if i == 0 || i == len - 1 { 0.5 } else { 1.0 };
            w * v * v * step
        })
        .sum();
    let norm = norm2.sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::Resolution(format!(
            "Meyer table L2 norm {norm} too far from 1; refine freq_grid"
        )));
    }
    for v in table.vals.iter_mut() {
        *v /= norm;
    }
    Ok(table)
}

/// Samples the Meyer scaling function or wavelet on a one-dimensional grid.
pub fn meyer_evaluate(pair: &MeyerPair, which: Which, grid: Arc<Grid>) -> Result<SampledField> {
    if grid.dim() != 1 {
        return Err(Error::Parameter("meyer_evaluate needs a 1-D grid".into()));
    }
    let table = meyer_table(pair, which)?;
    Ok(SampledField::from_fn(grid, move |x| table.eval_cubic(x[0])))
}

/// Fully evaluated Meyer system shared by the m = infinity frame.
#[derive(Debug, Clone)]
pub struct MeyerSystem {
    pub pair: MeyerPair,
    pub phi: DyadicTable,
    pub psi: DyadicTable,
}

impl MeyerSystem {
    pub fn build(pair: MeyerPair) -> Result<MeyerSystem> {
        Ok(MeyerSystem {
            pair,
            phi: meyer_table(&pair, Which::Scaling)?,
            psi: meyer_table(&pair, Which::Wavelet)?,
        })
    }

    pub fn table(&self, which: Which) -> &DyadicTable {
        match which {
            Which::Scaling => &self.phi,
            Which::Wavelet => &self.psi,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{inner, integrate, l2_norm};
    use approx::assert_abs_diff_eq;

    #[test]
    fn haar_filter() {
        let f = daubechies_filter(1).unwrap();
        assert_abs_diff_eq!(f.lowpass[0], 1.0 / SQRT2, epsilon = 1e-15);
        assert_abs_diff_eq!(f.lowpass[1], 1.0 / SQRT2, epsilon = 1e-15);
    }

    #[test]
    fn db2_closed_form() {
        // Oracle: h = ((1 +- sqrt3)/(4 sqrt2)) closed form.
        let s3 = 3.0f64.sqrt();
        let expect = [
            (1.0 + s3) / (4.0 * SQRT2),
            (3.0 + s3) / (4.0 * SQRT2),
            (3.0 - s3) / (4.0 * SQRT2),
            (1.0 - s3) / (4.0 * SQRT2),
        ];
        let f = daubechies_filter(2).unwrap();
        for (a, b) in f.lowpass.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn filter_invariants_all_orders() {
        for n in 1..=10 {
            let f = daubechies_filter(n).unwrap();
            assert_eq!(f.lowpass.len(), 2 * n);
            assert_abs_diff_eq!(f.lowpass.iter().sum::<f64>(), SQRT2, epsilon = 1e-12);
            for m in 0..n {
                let dot: f64 = (0..2 * n - 2 * m)
                    .map(|k| f.lowpass[k] * f.lowpass[k + 2 * m])
                    .sum();
                let expect = if m == 0 { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expect, epsilon = 1e-12);
            }
            for k in 0..2 * n {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                assert_abs_diff_eq!(
                    f.highpass[k],
                    sign * f.lowpass[2 * n - 1 - k],
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn daubechies_rejects_out_of_range() {
        assert!(daubechies_filter(0).is_err());
        assert!(daubechies_filter(11).is_err());
    }

    #[test]
    fn haar_cascade() {
        let f = daubechies_filter(1).unwrap();
        let (phi, _) = cascade_evaluate(&f, 6).unwrap();
        assert_abs_diff_eq!(phi.eval(0.25), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(phi.eval(0.875), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn db2_phi_at_one() {
        // Oracle: eigenvector of the 2-point refinement matrix normalized so
        // the integer samples sum to 1 gives phi(1) = (1 + sqrt3)/2.
        let f = daubechies_filter(2).unwrap();
        let (phi, _) = cascade_evaluate(&f, 8).unwrap();
        assert_abs_diff_eq!(phi.eval(1.0), (1.0 + 3.0f64.sqrt()) / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn partition_of_unity_random_points() {
        use rand::Rng;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
        for n in [2usize, 3, 5] {
            let f = daubechies_filter(n).unwrap();
            let (phi, _) = cascade_evaluate(&f, 10).unwrap();
            for _ in 0..100 {
                let x: f64 = rng.gen::<f64>();
                let mut s = 0.0;
                for k in -(2 * n as i32)..=(2 * n as i32) {
                    s += phi.eval(x - k as f64);
                }
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn cascade_support_is_exact() {
        let f = daubechies_filter(3).unwrap();
        let (phi, psi) = cascade_evaluate(&f, 6).unwrap();
        assert_eq!(phi.eval(-0.1), 0.0);
        assert_eq!(phi.eval(5.1), 0.0);
        assert_eq!(psi.eval(-0.01), 0.0);
        assert_eq!(psi.eval(5.01), 0.0);
    }

    #[test]
    fn daubechies_vanishing_moments() {
        for n in [2usize, 4] {
            let f = daubechies_filter(n).unwrap();
            let (_, psi) = cascade_evaluate(&f, 12).unwrap();
            let step = psi.step;
            for r in 0..n {
                let mut acc = 0.0;
                for (i, &v) in psi.vals.iter().enumerate() {
                    let x = psi.lo + i as f64 * step;
                    let w = if i == 0 || i == psi.vals.len() - 1 { 0.5 } else { 1.0 };
                    acc += w * x.powi(r as i32) * v * step;
                }
                assert!(acc.abs() < 1e-8, "N={n} moment r={r} = {acc:.3e}");
            }
        }
    }

    #[test]
    fn meyer_profile_values() {
        let pair = MeyerPair::default();
        assert_eq!(meyer_profile(&pair, Which::Scaling, 0.0), 1.0);
        assert_eq!(meyer_profile(&pair, Which::Wavelet, 0.5), 0.0);
        assert_eq!(meyer_profile(&pair, Which::Wavelet, 9.0), 0.0);
        for bell in [Bell::ExpReciprocal, Bell::IteratedSine(2)] {
            let pair = MeyerPair { bell, ..MeyerPair::default() };
            // bell symmetry nu(t) + nu(1-t) = 1
            for i in 0..=100 {
                let t = i as f64 / 100.0;
                assert_abs_diff_eq!(bell.eval(t) + bell.eval(1.0 - t), 1.0, epsilon = 1e-12);
            }
            // two-scale partition: phi^2(xi) + psi^2(xi) = 1 on |xi| <= 4pi/3
            for i in 0..200 {
                let xi = i as f64 * (4.0 * std::f64::consts::PI / 3.0) / 200.0;
                let s = meyer_profile(&pair, Which::Scaling, xi).powi(2)
                    + meyer_profile(&pair, Which::Wavelet, xi).powi(2);
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn meyer_wavelet_integral_and_norm() {
        let pair = MeyerPair::default();
        let grid = Arc::new(Grid::new(&[(-16.0, 16.0)], 128, &[false]).unwrap());
        let psi = meyer_evaluate(&pair, Which::Wavelet, grid).unwrap();
        // The exact wavelet has psi-hat(0) = 0; the residual here is the
        // integral of the truncated tail beyond R = 16 (measured ~1e-6).
        assert!(integrate(&psi).abs() < 1e-5, "integral {}", integrate(&psi));
        assert_abs_diff_eq!(l2_norm(&psi), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn meyer_decay_envelope() {
        let sys = MeyerSystem::build(MeyerPair::default()).unwrap();
        // Fitted log-log slope of the peak envelope over [4, 16]; measured
        // about -6 for the iterated-sine bell (and only -4 for the exp
        // bell, which is why it is not the profile default).
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for seg in 0..6 {
            let a = 4.0 * (16.0f64 / 4.0).powf(seg as f64 / 6.0);
            let b = 4.0 * (16.0f64 / 4.0).powf((seg + 1) as f64 / 6.0);
            let mut peak: f64 = 0.0;
            let mut x = a;
            while x < b {
                peak = peak.max(sys.psi.eval_cubic(x).abs());
                x += 0.003;
            }
            xs.push(((a + b) / 2.0).ln());
            ys.push(peak.max(1e-300).ln());
        }
        let slope = crate::numerics::fit_slope(&xs, &ys);
        assert!(slope <= -5.0, "Meyer envelope slope {slope}");
    }

    #[test]
    fn meyer_small_gram() {
        let sys = MeyerSystem::build(MeyerPair::default()).unwrap();
        let grid = Arc::new(Grid::new(&[(-24.0, 24.0)], 64, &[false]).unwrap());
        let elt = |j: i32, k: i32, w: Which| {
            let t = sys.table(w).clone();
            let sc = 2.0f64.powi(j);
            SampledField::from_fn(grid.clone(), move |x| {
                sc.sqrt() * t.eval_cubic(sc * x[0] - k as f64)
            })
        };
        let f1 = elt(0, 0, Which::Wavelet);
        let f2 = elt(0, 2, Which::Wavelet);
        let f3 = elt(1, 1, Which::Wavelet);
        let f4 = elt(0, -1, Which::Scaling);
        assert_abs_diff_eq!(inner(&f1, &f1), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(inner(&f1, &f2), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(inner(&f1, &f3), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(inner(&f1, &f4), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(inner(&f4, &f4), 1.0, epsilon = 1e-6);
    }
}
