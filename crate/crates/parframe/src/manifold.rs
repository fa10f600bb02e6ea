//! Model Riemannian manifolds (circle, flat torus, round sphere) with
//! closed-form exponential charts, geodesic covers built by greedy maximal
//! packing, smooth partitions of unity, and manifold quadrature.
//!
//! Global coordinates: the circle of circumference L and the flat torus of
//! side L use periodic coordinates in [0, L); the unit sphere uses the
//! area-preserving cylindrical coordinates (t, phi) with t in [-1, 1]
//! (t = -cos theta) and phi in [0, 2 pi), so the area element is Lebesgue
//! measure dt dphi.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate, plateau_bump, Axis, Grid, SampledField};

/// Number of low-discrepancy candidates driving the greedy cover packing.
const COVER_CANDIDATES: usize = 100_000;
/// Independent sample count for the covering / partition verifications.
const VERIFY_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifoldKind {
    Circle,
    Torus,
    Sphere,
}

/// One of the model manifolds, described by its kind and size parameter
/// (circumference for the circle, common side for the torus, nothing for the
/// unit sphere).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifold {
    kind: ManifoldKind,
    d: usize,
    size: f64,
}

impl ModelManifold {
    pub fn circle(circumference: f64) -> Result<ModelManifold> {
        if !(circumference > 0.0) || !circumference.is_finite() {
            return Err(Error::Parameter(format!(
                "circle circumference {circumference} must be positive"
            )));
        }
        Ok(ModelManifold {
            kind: ManifoldKind::Circle,
            d: 1,
            size: circumference,
        })
    }

    pub fn torus(d: usize, side: f64) -> Result<ModelManifold> {
        if d == 0 || d > 3 {
            return Err(Error::Parameter(format!("torus dimension {d} outside 1..=3")));
        }
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::Parameter(format!("torus side {side} must be positive")));
        }
        Ok(ModelManifold {
            kind: ManifoldKind::Torus,
            d,
            size: side,
        })
    }

    pub fn sphere() -> ModelManifold {
        ModelManifold {
            kind: ManifoldKind::Sphere,
            d: 2,
            size: 1.0,
        }
    }

    /// Parses the CLI selector strings "circle:<circumference>",
    /// "torus:<d>:<side>" and "sphere".
    pub fn from_selector(sel: &str) -> Result<ModelManifold> {
        let parts: Vec<&str> = sel.split(':').collect();
        match parts.as_slice() {
            ["sphere"] => Ok(ModelManifold::sphere()),
            ["circle", c] => {
                let c: f64 = c
                    .parse()
                    .map_err(|_| Error::Parameter(format!("bad circle circumference in {sel:?}")))?;
                ModelManifold::circle(c)
            }
            ["torus", d, s] => {
                let d: usize = d
                    .parse()
                    .map_err(|_| Error::Parameter(format!("bad torus dimension in {sel:?}")))?;
                let s: f64 = s
                    .parse()
                    .map_err(|_| Error::Parameter(format!("bad torus side in {sel:?}")))?;
                ModelManifold::torus(d, s)
            }
            _ => Err(Error::Parameter(format!("unknown manifold selector {sel:?}"))),
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Circumference (circle) or side (torus); 1 for the unit sphere.
    pub fn size(&self) -> f64 {
        self.size
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle | ManifoldKind::Torus => 0.5 * self.size,
            ManifoldKind::Sphere => PI,
        }
    }

    pub fn volume(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle => self.size,
            ManifoldKind::Torus => self.size.powi(self.d as i32),
            ManifoldKind::Sphere => 4.0 * PI,
        }
    }

    /// Volume-equivalence constant C with C^-1 s^d <= vol B(x, s) <= C s^d
    /// for all 0 < s <= r_inj: 2^d for the flat manifolds, pi for the sphere.
    pub fn volume_constant(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle | ManifoldKind::Torus => 2f64.powi(self.d as i32),
            ManifoldKind::Sphere => PI,
        }
    }

    /// Geodesic-ball volume in closed form.
    pub fn ball_volume(&self, s: f64) -> f64 {
        match self.kind {
            ManifoldKind::Circle => (2.0 * s).min(self.size),
            ManifoldKind::Torus => (0..self.d).map(|_| (2.0 * s).min(self.size)).product(),
            ManifoldKind::Sphere => 2.0 * PI * (1.0 - s.min(PI).cos()),
        }
    }

    fn wrap(&self, x: f64) -> f64 {
        x.rem_euclid(self.size)
    }

    /// Signed per-axis difference folded into (-L/2, L/2].
    fn axis_diff(&self, a: f64, b: f64) -> f64 {
        let mut d = (a - b).rem_euclid(self.size);
        if d > 0.5 * self.size {
            d -= self.size;
        }
        d
    }

    /// Geodesic distance between two points in global coordinates.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Circle | ManifoldKind::Torus => a
                .iter()
                .zip(b)
                .map(|(&x, &y)| self.axis_diff(x, y).powi(2))
                .sum::<f64>()
                .sqrt(),
            ManifoldKind::Sphere => {
                let p = embed_sphere(a);
                let q = embed_sphere(b);
                // atan2 of (|p x q|, p . q) is well conditioned at both
                // antipodes, unlike acos of the dot product.
                let c = cross3(&p, &q);
                dot3(&c, &c).sqrt().atan2(dot3(&p, &q))
            }
        }
    }

    /// Deterministic low-discrepancy point sequence, uniform with respect to
    /// the Riemannian volume.
    pub fn halton_points(&self, count: usize, offset: usize) -> Vec<Vec<f64>> {
        const BASES: [u64; 3] = [2, 3, 5];
        (0..count)
            .map(|i| {
                let idx = (i + offset + 1) as u64;
                match self.kind {
                    ManifoldKind::Circle => vec![self.size * halton(idx, 2)],
                    ManifoldKind::Torus => (0..self.d)
                        .map(|ax| self.size * halton(idx, BASES[ax]))
                        .collect(),
                    ManifoldKind::Sphere => {
                        let t = 2.0 * halton(idx, 2) - 1.0;
                        let phi = 2.0 * PI * halton(idx, 3);
                        vec![t, phi]
                    }
                }
            })
            .collect()
    }

    /// Builds the standard quadrature grid in global coordinates with the
    /// given number of points per axis (sphere: t-axis closed with both
    /// poles, phi-axis periodic; flat manifolds: all axes periodic).
    pub fn grid(&self, points: &[usize]) -> Result<std::sync::Arc<Grid>> {
        if points.len() != self.d || points.iter().any(|&n| n < 4) {
            return Err(Error::Parameter(format!(
                "need {} axis sizes of at least 4 points",
                self.d
            )));
        }
        let axes: Vec<Axis> = match self.kind {
            ManifoldKind::Circle | ManifoldKind::Torus => points
                .iter()
                .map(|&n| Axis {
                    lo: 0.0,
                    hi: self.size,
                    periodic: true,
                    n,
                })
                .collect(),
            ManifoldKind::Sphere => vec![
                Axis {
                    lo: -1.0,
                    hi: 1.0,
                    periodic: false,
                    n: points[0],
                },
                Axis {
                    lo: 0.0,
                    hi: 2.0 * PI,
                    periodic: true,
                    n: points[1],
                },
            ],
        };
        Ok(std::sync::Arc::new(Grid::from_axes(axes)))
    }
}

/// van der Corput radical inverse in the given base.
fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Unit-sphere embedding of the (t, phi) coordinates; z = -t so that t is
/// -cos of the polar angle from the north pole.
fn embed_sphere(p: &[f64]) -> [f64; 3] {
    let (t, phi) = (p[0].clamp(-1.0, 1.0), p[1]);
    let rho = (1.0 - t * t).max(0.0).sqrt();
    [rho * phi.cos(), rho * phi.sin(), -t]
}

fn sphere_coords(p: &[f64; 3]) -> Vec<f64> {
    let t = (-p[2]).clamp(-1.0, 1.0);
    let phi = p[1].atan2(p[0]).rem_euclid(2.0 * PI);
    vec![t, phi]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize3(a: &[f64; 3]) -> [f64; 3] {
    let n = dot3(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Normal geodesic chart kappa = i_x . exp_x^-1 around a center point.
#[derive(Debug, Clone)]
pub struct Chart {
    manifold: ModelManifold,
    center: Vec<f64>,
    radius: f64,
    /// Orthonormal frame rows (e1, e2, center) for the sphere rotation.
    frame: Option<[[f64; 3]; 3]>,
}

/// Closed-form normal chart; errors when the radius reaches the injectivity
/// radius.
pub fn exp_chart(manifold: &ModelManifold, x: &[f64], r: f64) -> Result<Chart> {
    if x.len() != manifold.d {
        return Err(Error::Parameter(format!(
            "chart center has {} coordinates, expected {}",
            x.len(),
            manifold.d
        )));
    }
    if !(r > 0.0) || r >= manifold.injectivity_radius() {
        return Err(Error::Parameter(format!(
            "chart radius {r} outside (0, {})",
            manifold.injectivity_radius()
        )));
    }
    let frame = match manifold.kind {
        ManifoldKind::Sphere => {
            let c = embed_sphere(x);
            let seed = if c[0].abs() < 0.5 {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 1.0, 0.0]
            };
            let proj = dot3(&seed, &c);
            let e1 = normalize3(&[
                seed[0] - proj * c[0],
                seed[1] - proj * c[1],
                seed[2] - proj * c[2],
            ]);
            let e2 = cross3(&c, &e1);
            Some([e1, e2, c])
        }
        _ => None,
    };
    Ok(Chart {
        manifold: manifold.clone(),
        center: x.to_vec(),
        radius: r,
        frame,
    })
}

impl Chart {
    pub fn manifold(&self) -> &ModelManifold {
        &self.manifold
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// kappa(p): chart coordinates of a point given in global coordinates.
    pub fn forward(&self, p: &[f64]) -> Vec<f64> {
        match self.manifold.kind {
            ManifoldKind::Circle | ManifoldKind::Torus => p
                .iter()
                .zip(&self.center)
                .map(|(&xi, &ci)| self.manifold.axis_diff(xi, ci))
                .collect(),
            ManifoldKind::Sphere => {
                let frame = self.frame.expect("sphere chart carries a frame");
                let q = embed_sphere(p);
                let qx = dot3(&frame[0], &q);
                let qy = dot3(&frame[1], &q);
                let qz = dot3(&frame[2], &q).clamp(-1.0, 1.0);
                let rho = (qx * qx + qy * qy).sqrt();
                // atan2 keeps full precision near the chart center, where
                // acos(qz) would lose half the significant digits.
                let theta = rho.atan2(qz);
                if rho < 1e-300 {
                    vec![0.0, 0.0]
                } else {
                    vec![theta * qx / rho, theta * qy / rho]
                }
            }
        }
    }

    /// kappa^-1(u): global coordinates of a chart point.
    pub fn inverse(&self, u: &[f64]) -> Vec<f64> {
        match self.manifold.kind {
            ManifoldKind::Circle | ManifoldKind::Torus => u
                .iter()
                .zip(&self.center)
                .map(|(&ui, &ci)| self.manifold.wrap(ci + ui))
                .collect(),
            ManifoldKind::Sphere => {
                let frame = self.frame.expect("sphere chart carries a frame");
                let theta = (u[0] * u[0] + u[1] * u[1]).sqrt();
                let (dir_x, dir_y) = if theta < 1e-300 {
                    (0.0, 0.0)
                } else {
                    (u[0] / theta, u[1] / theta)
                };
                let (st, ct) = (theta.sin(), theta.cos());
                let q = [st * dir_x, st * dir_y, ct];
                let p = [
                    q[0] * frame[0][0] + q[1] * frame[1][0] + q[2] * frame[2][0],
                    q[0] * frame[0][1] + q[1] * frame[1][1] + q[2] * frame[2][1],
                    q[0] * frame[0][2] + q[1] * frame[1][2] + q[2] * frame[2][2],
                ];
                sphere_coords(&p)
            }
        }
    }

    /// det g in normal coordinates at the chart point u: identically 1 on
    /// the flat manifolds, (sin|u| / |u|)^2 on the sphere.
    pub fn detg(&self, u: &[f64]) -> f64 {
        match self.manifold.kind {
            ManifoldKind::Circle | ManifoldKind::Torus => 1.0,
            ManifoldKind::Sphere => {
                let r = (u[0] * u[0] + u[1] * u[1]).sqrt();
                if r < 1e-8 {
                    // sin r / r = 1 - r^2/6 + O(r^4)
                    let c = 1.0 - r * r / 6.0;
                    c * c
                } else {
                    let c = r.sin() / r;
                    c * c
                }
            }
        }
    }
}

/// Geodesic cover by balls of radius r, built from a greedy maximal packing.
#[derive(Debug, Clone)]
pub struct Cover {
    manifold: ModelManifold,
    r: f64,
    centers: Vec<Vec<f64>>,
    multiplicity_observed: usize,
}

impl Cover {
    pub fn manifold(&self) -> &ModelManifold {
        &self.manifold
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn multiplicity_observed(&self) -> usize {
        self.multiplicity_observed
    }

    /// Closed-form multiplicity bound (4l+1)^d C^2 for the dilated system
    /// {Omega_{x_j}(l r)}.
    pub fn multiplicity_bound(&self, l: f64) -> f64 {
        let c = self.manifold.volume_constant();
        (4.0 * l + 1.0).powi(self.manifold.d as i32) * c * c
    }

    /// Index of the center nearest to a point.
    pub fn nearest(&self, p: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in self.centers.iter().enumerate() {
            let d = self.manifold.distance(p, c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }
}

/// Greedy maximal packing: candidates are added when at distance >= r/2 from
/// every chosen center (so the r/4-balls are pairwise disjoint), then the
/// r/2-balls are verified to cover the manifold on an independent sample.
pub fn build_cover(manifold: &ModelManifold, r: f64) -> Result<Cover> {
    if !(r > 0.0) || r >= 0.5 * manifold.injectivity_radius() {
        return Err(Error::Parameter(format!(
            "cover radius {r} outside (0, {})",
            0.5 * manifold.injectivity_radius()
        )));
    }
    let candidates = manifold.halton_points(COVER_CANDIDATES, 0);
    let mut centers: Vec<Vec<f64>> = Vec::new();
    for cand in candidates {
        if centers
            .iter()
            .all(|c| manifold.distance(&cand, c) >= 0.5 * r)
        {
            centers.push(cand);
        }
    }
    let samples = manifold.halton_points(VERIFY_SAMPLES, COVER_CANDIDATES);
    let mut multiplicity = 0usize;
    for s in &samples {
        let mut covered = false;
        let mut count = 0usize;
        for c in &centers {
            let d = manifold.distance(s, c);
            if d <= 0.5 * r {
                covered = true;
            }
            if d < r {
                count += 1;
            }
        }
        if !covered {
            return Err(Error::Construction(format!(
                "cover verification failed: sample {s:?} not within r/2 of any center"
            )));
        }
        multiplicity = multiplicity.max(count);
    }
    Ok(Cover {
        manifold: manifold.clone(),
        r,
        centers,
        multiplicity_observed: multiplicity,
    })
}

/// Smooth partition of unity subordinate to a cover, optionally pinned so
/// that one alpha is identically 1 on the r/2-ball of its center.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    cover: Cover,
    pinned: Option<usize>,
}

/// Unnormalized C-infinity bump: 1 inside the r/2-ball, 0 outside the r-ball.
fn pou_bump(cover: &Cover, j: usize, p: &[f64]) -> f64 {
    let d = cover.manifold.distance(p, &cover.centers[j]);
    plateau_bump(d / cover.r, 0.5, 1.0)
}

pub fn partition_of_unity(cover: &Cover, pinned: Option<&[f64]>) -> Result<PartitionOfUnity> {
    let samples = cover
        .manifold
        .halton_points(VERIFY_SAMPLES, 3 * COVER_CANDIDATES);
    for s in &samples {
        let total: f64 = (0..cover.len()).map(|j| pou_bump(cover, j, s)).sum();
        if total < 1e-6 {
            return Err(Error::Construction(format!(
                "cover defect: bump sum {total:.3e} at {s:?}"
            )));
        }
    }
    let pinned = pinned.map(|p| cover.nearest(p));
    Ok(PartitionOfUnity {
        cover: cover.clone(),
        pinned,
    })
}

impl PartitionOfUnity {
    pub fn cover(&self) -> &Cover {
        &self.cover
    }

    pub fn len(&self) -> usize {
        self.cover.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cover.is_empty()
    }

    /// Index of the pinned alpha, when a pinned point was supplied.
    pub fn pinned(&self) -> Option<usize> {
        self.pinned
    }

    /// alpha_j(p); with a pinned index j' the eta-modification
    /// alpha~_j = alpha_j (1 - eta), alpha~_{j'} = alpha_{j'} (1 - eta) + eta
    /// is applied, with eta the unnormalized bump of j'.
    pub fn eval(&self, j: usize, p: &[f64]) -> f64 {
        let betas: Vec<f64> = (0..self.cover.len())
            .map(|i| pou_bump(&self.cover, i, p))
            .collect();
        let total: f64 = betas.iter().sum();
        let alpha = betas[j] / total;
        match self.pinned {
            None => alpha,
            Some(jp) => {
                let eta = betas[jp];
                if j == jp {
                    alpha * (1.0 - eta) + eta
                } else {
                    alpha * (1.0 - eta)
                }
            }
        }
    }

    /// All alphas at one point (shares the bump evaluations).
    pub fn eval_all(&self, p: &[f64]) -> Vec<f64> {
        let betas: Vec<f64> = (0..self.cover.len())
            .map(|i| pou_bump(&self.cover, i, p))
            .collect();
        let total: f64 = betas.iter().sum();
        let mut alphas: Vec<f64> = betas.iter().map(|b| b / total).collect();
        if let Some(jp) = self.pinned {
            let eta = betas[jp];
            for a in alphas.iter_mut() {
                *a *= 1.0 - eta;
            }
            alphas[jp] += eta;
        }
        alphas
    }
}

/// Integral of a field given on the standard global-coordinate grid; the
/// chosen coordinates make the Riemannian volume element Lebesgue, so this
/// is plain grid quadrature after a layout check.
pub fn integrate_manifold(manifold: &ModelManifold, f: &SampledField) -> Result<f64> {
    let grid = f.grid();
    if grid.dim() != manifold.d {
        return Err(Error::Domain(format!(
            "field dimension {} does not match manifold dimension {}",
            grid.dim(),
            manifold.d
        )));
    }
    let check_axis = |ax: &Axis, lo: f64, hi: f64, periodic: bool| -> Result<()> {
        if (ax.lo - lo).abs() > 1e-9 || (ax.hi - hi).abs() > 1e-9 || ax.periodic != periodic {
            return Err(Error::Domain(format!(
                "axis [{}, {}] (periodic: {}) does not match the manifold layout [{lo}, {hi}] (periodic: {periodic})",
                ax.lo, ax.hi, ax.periodic
            )));
        }
        Ok(())
    };
    match manifold.kind {
        ManifoldKind::Circle | ManifoldKind::Torus => {
            for ax in grid.axes() {
                check_axis(ax, 0.0, manifold.size, true)?;
            }
        }
        ManifoldKind::Sphere => {
            check_axis(&grid.axes()[0], -1.0, 1.0, false)?;
            check_axis(&grid.axes()[1], 0.0, 2.0 * PI, true)?;
        }
    }
    Ok(integrate(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(m: &ModelManifold, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match m.kind() {
            ManifoldKind::Circle | ManifoldKind::Torus => {
                (0..m.d()).map(|_| rng.gen::<f64>() * m.size()).collect()
            }
            ManifoldKind::Sphere => vec![rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 * PI],
        }
    }

    #[test]
    fn selector_parsing() {
        let c = ModelManifold::from_selector("circle:6.283185307179586").unwrap();
        assert_eq!(c.kind(), ManifoldKind::Circle);
        assert_abs_diff_eq!(c.injectivity_radius(), PI, epsilon = 1e-12);
        let t = ModelManifold::from_selector("torus:2:6.283185307179586").unwrap();
        assert_eq!(t.d(), 2);
        let s = ModelManifold::from_selector("sphere").unwrap();
        assert_eq!(s.d(), 2);
        assert!(ModelManifold::from_selector("klein").is_err());
        assert!(ModelManifold::from_selector("circle:abc").is_err());
        assert!(ModelManifold::from_selector("torus:9:1.0").is_err());
    }

    #[test]
    fn chart_centering_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let manifolds = [
            ModelManifold::circle(2.0 * PI).unwrap(),
            ModelManifold::torus(2, 2.0 * PI).unwrap(),
            ModelManifold::sphere(),
        ];
        for m in &manifolds {
            for _ in 0..100 {
                let x = random_point(m, &mut rng);
                let chart = exp_chart(m, &x, 0.4 * m.injectivity_radius()).unwrap();
                let u = chart.forward(&x);
                assert!(u.iter().all(|&ui| ui.abs() < 1e-12), "kappa(x) = {u:?}");
                let back = chart.inverse(&vec![0.0; m.d()]);
                assert!(m.distance(&back, &x) < 1e-12);
                assert_abs_diff_eq!(chart.detg(&vec![0.0; m.d()]), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn chart_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = ModelManifold::sphere();
        let x = vec![0.3, 1.2];
        let chart = exp_chart(&m, &x, 1.5).unwrap();
        for _ in 0..200 {
            let theta = rng.gen::<f64>() * 1.4;
            let ang = rng.gen::<f64>() * 2.0 * PI;
            let u = vec![theta * ang.cos(), theta * ang.sin()];
            let p = chart.inverse(&u);
            let u2 = chart.forward(&p);
            assert!(
                (u[0] - u2[0]).abs() < 1e-10 && (u[1] - u2[1]).abs() < 1e-10,
                "{u:?} vs {u2:?}"
            );
            // Chart pullback distance agrees with the arccos formula.
            assert_abs_diff_eq!(m.distance(&x, &p), theta, epsilon = 1e-12);
        }
    }

    #[test]
    fn torus_chart_is_translation() {
        let m = ModelManifold::torus(2, 4.0).unwrap();
        let chart = exp_chart(&m, &[3.5, 0.25], 1.0).unwrap();
        // Wrap-around: the point 0.25 is at +0.75 from center 3.5.
        let u = chart.forward(&[0.25, 3.75]);
        assert_abs_diff_eq!(u[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(u[1], -0.5, epsilon = 1e-12);
        assert_eq!(chart.detg(&u), 1.0);
    }

    #[test]
    fn sphere_detg_oracle() {
        // Oracle: (sin(pi/2) / (pi/2))^2 = 4/pi^2.
        let m = ModelManifold::sphere();
        let chart = exp_chart(&m, &[0.0, 0.0], 2.0).unwrap();
        let u = [0.5 * PI, 0.0];
        assert_abs_diff_eq!(chart.detg(&u), 4.0 / (PI * PI), epsilon = 1e-12);
    }

    #[test]
    fn chart_radius_validation() {
        let m = ModelManifold::sphere();
        assert!(exp_chart(&m, &[0.0, 0.0], PI).is_err());
        assert!(exp_chart(&m, &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn circle_cover_oracle() {
        // Oracle: circumference 2 pi with r = pi/4 admits 8..=16 centers.
        let m = ModelManifold::circle(2.0 * PI).unwrap();
        let cover = build_cover(&m, 0.25 * PI).unwrap();
        assert!(
            (8..=16).contains(&cover.len()),
            "{} centers",
            cover.len()
        );
        // r/4-disjointness is exact: pairwise distances >= r/2.
        for i in 0..cover.len() {
            for j in 0..i {
                assert!(
                    m.distance(&cover.centers()[i], &cover.centers()[j]) >= 0.5 * cover.r() - 1e-12
                );
            }
        }
    }

    #[test]
    fn sphere_cover_multiplicity_and_volume() {
        let m = ModelManifold::sphere();
        let r = 0.3;
        let cover = build_cover(&m, r).unwrap();
        assert!(
            (cover.multiplicity_observed() as f64) <= cover.multiplicity_bound(1.0),
            "multiplicity {} above bound {}",
            cover.multiplicity_observed(),
            cover.multiplicity_bound(1.0)
        );
        // Volume sanity with the closed-form constant C = pi.
        let c = m.volume_constant();
        for s in [0.25 * r, 0.5 * r, r] {
            let v = m.ball_volume(s);
            assert!(v >= s * s / c && v <= c * s * s, "vol {v} at s = {s}");
        }
    }

    #[test]
    fn partition_sums_to_one() {
        let m = ModelManifold::sphere();
        let cover = build_cover(&m, 0.6).unwrap();
        let pou = partition_of_unity(&cover, None).unwrap();
        let samples = m.halton_points(VERIFY_SAMPLES, 17);
        for s in &samples {
            let alphas = pou.eval_all(s);
            let total: f64 = alphas.iter().sum();
            assert!((total - 1.0).abs() < 1e-10, "sum {total} at {s:?}");
            assert!(alphas.iter().all(|&a| (-1e-15..=1.0 + 1e-12).contains(&a)));
        }
    }

    #[test]
    fn partition_support_inside_r_ball() {
        let m = ModelManifold::torus(2, 2.0 * PI).unwrap();
        let cover = build_cover(&m, 1.0).unwrap();
        let pou = partition_of_unity(&cover, None).unwrap();
        for s in m.halton_points(2000, 5) {
            for j in 0..cover.len() {
                if m.distance(&s, &cover.centers()[j]) >= cover.r() {
                    assert_eq!(pou.eval(j, &s), 0.0);
                }
            }
        }
    }

    #[test]
    fn pinned_partition_is_one_on_half_ball() {
        let m = ModelManifold::sphere();
        let cover = build_cover(&m, 0.6).unwrap();
        let pin = vec![-0.2, 0.8];
        let pou = partition_of_unity(&cover, Some(&pin)).unwrap();
        let jp = pou.pinned().unwrap();
        let mut tested = 0;
        for s in m.halton_points(VERIFY_SAMPLES, 41) {
            let alphas = pou.eval_all(&s);
            let total: f64 = alphas.iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            if m.distance(&s, &cover.centers()[jp]) <= 0.5 * cover.r() {
                assert_eq!(alphas[jp], 1.0);
                tested += 1;
            }
        }
        assert!(tested > 10, "pinned half-ball poorly sampled");
    }

    #[test]
    fn partition_gradients_uniformly_bounded() {
        let m = ModelManifold::sphere();
        let cover = build_cover(&m, 0.6).unwrap();
        let pou = partition_of_unity(&cover, None).unwrap();
        let h = 1e-5;
        let bound = 100.0 / cover.r();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..500 {
            let p = random_point(&m, &mut rng);
            if p[0].abs() > 0.95 {
                continue; // skip the polar coordinate-degeneracy strip
            }
            let moved = vec![p[0] + h, p[1]];
            let step = m.distance(&p, &moved);
            for j in 0..cover.len() {
                let g = (pou.eval(j, &moved) - pou.eval(j, &p)).abs() / step;
                assert!(g <= bound, "gradient {g:.2} for alpha_{j}");
            }
        }
    }

    #[test]
    fn integrate_sphere_area_and_harmonic() {
        let m = ModelManifold::sphere();
        let grid = m.grid(&[129, 256]).unwrap();
        let one = SampledField::from_fn(grid.clone(), |_| 1.0);
        assert_abs_diff_eq!(integrate_manifold(&m, &one).unwrap(), 4.0 * PI, epsilon = 1e-10);
        // Y_10 is proportional to z = -t: exact zero for the trapezoid rule.
        let y10 = SampledField::from_fn(grid, |x| -x[0] * (3.0 / (4.0 * PI)).sqrt());
        assert_abs_diff_eq!(integrate_manifold(&m, &y10).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn integrate_torus_volume() {
        let m = ModelManifold::torus(2, 2.0 * PI).unwrap();
        let grid = m.grid(&[64, 64]).unwrap();
        let one = SampledField::from_fn(grid, |_| 1.0);
        assert_abs_diff_eq!(
            integrate_manifold(&m, &one).unwrap(),
            4.0 * PI * PI,
            epsilon = 1e-10
        );
    }

    #[test]
    fn integrate_rejects_wrong_layout() {
        let m = ModelManifold::sphere();
        let bad = std::sync::Arc::new(Grid::new(&[(0.0, 1.0), (0.0, 1.0)], 16, &[false, false]).unwrap());
        let f = SampledField::from_fn(bad, |_| 1.0);
        assert!(matches!(integrate_manifold(&m, &f), Err(Error::Domain(_))));
    }
}
