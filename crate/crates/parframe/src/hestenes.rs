//! Hestenes operator algebra on sampled fields.
//!
//! A simple H-operator acts by `f(x) |-> phi(x) * f(Phi(x))` on a region V and
//! by zero outside; a Hestenes operator is a finite sum of such terms. The
//! maps used here are diagonal affine maps (identity, reflections across a
//! point, axis-wise affine chart transitions), which is all the frame
//! construction needs. The module also provides the Coifman-Meyer folding
//! projections built from smooth bells and reflections across interval
//! endpoints; these drive the m = infinity local frame and the decompositions
//! of identity on the model manifolds.

use crate::error::{Error, Result};
use crate::numerics::{Grid, SampledField};
use crate::wavelets1d::Bell;
use rayon::prelude::*;
use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

/// Smooth multiplier evaluated at a grid point.
pub type Multiplier = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One-dimensional component of a diagonal diffeomorphism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisMap {
    Identity,
    /// x -> 2c - x.
    Reflection(f64),
    /// x -> scale * x + offset with scale != 0.
    Affine { scale: f64, offset: f64 },
}

impl AxisMap {
    pub fn forward(&self, x: f64) -> f64 {
        match *self {
            AxisMap::Identity => x,
            AxisMap::Reflection(c) => 2.0 * c - x,
            AxisMap::Affine { scale, offset } => scale * x + offset,
        }
    }

    pub fn inverse(&self) -> AxisMap {
        match *self {
            AxisMap::Identity => AxisMap::Identity,
            AxisMap::Reflection(c) => AxisMap::Reflection(c),
            AxisMap::Affine { scale, offset } => AxisMap::Affine {
                scale: 1.0 / scale,
                offset: -offset / scale,
            },
        }
    }

    /// |d Phi / dx| of this component.
    pub fn jacobian(&self) -> f64 {
        match *self {
            AxisMap::Identity | AxisMap::Reflection(_) => 1.0,
            AxisMap::Affine { scale, .. } => scale.abs(),
        }
    }

    fn as_affine(&self) -> (f64, f64) {
        match *self {
            AxisMap::Identity => (1.0, 0.0),
            AxisMap::Reflection(c) => (-1.0, 2.0 * c),
            AxisMap::Affine { scale, offset } => (scale, offset),
        }
    }

    fn from_affine(scale: f64, offset: f64) -> AxisMap {
        if scale == 1.0 && offset == 0.0 {
            AxisMap::Identity
        } else if scale == -1.0 {
            AxisMap::Reflection(offset / 2.0)
        } else {
            AxisMap::Affine { scale, offset }
        }
    }

    /// `outer` composed after `self`: x -> outer(self(x)).
    pub fn then(&self, outer: &AxisMap) -> AxisMap {
        let (si, oi) = self.as_affine();
        let (so, oo) = outer.as_affine();
        AxisMap::from_affine(so * si, so * oi + oo)
    }
}

/// Axis-aligned box; on periodic grid axes membership is tested modulo the
/// axis period, so a box may represent a wrapped arc.
#[derive(Debug, Clone)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Region> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Parameter("region bounds mismatch".into()));
        }
        for (&l, &h) in lo.iter().zip(&hi) {
            if !(h >= l) || !l.is_finite() || !h.is_finite() {
                return Err(Error::Parameter(format!("bad region interval [{l}, {h}]")));
            }
        }
        Ok(Region { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, grid: &Grid, x: &[f64]) -> bool {
        for (ax, axis) in grid.axes().iter().enumerate() {
            let (l, h) = (self.lo[ax], self.hi[ax]);
            if axis.periodic {
                let period = axis.hi - axis.lo;
                if h - l >= period {
                    continue;
                }
                if (x[ax] - l).rem_euclid(period) > h - l {
                    return false;
                }
            } else if x[ax] < l || x[ax] > h {
                return false;
            }
        }
        true
    }

    /// Image of the box under a diagonal map.
    pub fn image(&self, map: &[AxisMap]) -> Region {
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for (ax, m) in map.iter().enumerate() {
            let a = m.forward(self.lo[ax]);
            let b = m.forward(self.hi[ax]);
            lo.push(a.min(b));
            hi.push(a.max(b));
        }
        Region { lo, hi }
    }

    fn hull(&self, other: &Region) -> Region {
        Region {
            lo: self.lo.iter().zip(&other.lo).map(|(&a, &b)| a.min(b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(&a, &b)| a.max(b)).collect(),
        }
    }

    fn intersect(&self, other: &Region) -> Option<Region> {
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for ax in 0..self.dim() {
            let l = self.lo[ax].max(other.lo[ax]);
            let h = self.hi[ax].min(other.hi[ax]);
            if l > h {
                return None;
            }
            lo.push(l);
            hi.push(h);
        }
        Some(Region { lo, hi })
    }
}

/// Simple H-operator `f |-> phi * (f o Phi)` supported on `region`.
#[derive(Clone)]
pub struct SimpleHOp {
    phi: Multiplier,
    map: Vec<AxisMap>,
    region: Region,
}

impl SimpleHOp {
    pub fn new(phi: Multiplier, map: Vec<AxisMap>, region: Region) -> Result<SimpleHOp> {
        if map.len() != region.dim() {
            return Err(Error::Construction("map/region dimension mismatch".into()));
        }
        for m in &map {
            if let AxisMap::Affine { scale, .. } = m {
                if *scale == 0.0 || !scale.is_finite() {
                    return Err(Error::Construction(format!("degenerate affine scale {scale}")));
                }
            }
        }
        Ok(SimpleHOp { phi, map, region })
    }

    pub fn map(&self) -> &[AxisMap] {
        &self.map
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// |det grad Phi| (constant for diagonal affine maps).
    pub fn jacobian(&self) -> f64 {
        self.map.iter().map(AxisMap::jacobian).product()
    }

    /// Term-wise adjoint `H* = H_{phi1, Phi^{-1}, Phi(V)}` with
    /// `phi1 = (phi o Phi^{-1}) |det grad Phi^{-1}|`.
    pub fn adjoint(&self) -> SimpleHOp {
        let inv: Vec<AxisMap> = self.map.iter().map(AxisMap::inverse).collect();
        let jac: f64 = inv.iter().map(AxisMap::jacobian).product();
        let phi = self.phi.clone();
        let inv_for_phi = inv.clone();
        let phi1: Multiplier = Arc::new(move |x: &[f64]| {
            let y: Vec<f64> = x.iter().zip(&inv_for_phi).map(|(&v, m)| m.forward(v)).collect();
            phi(&y) * jac
        });
        SimpleHOp {
            phi: phi1,
            region: self.region.image(&self.map),
            map: inv,
        }
    }
}

impl std::fmt::Debug for SimpleHOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimpleHOp")
            .field("map", &self.map)
            .field("region", &self.region)
            .finish_non_exhaustive()
    }
}

/// Finite sum of simple H-operators.
#[derive(Debug, Clone)]
pub struct HestenesOp {
    terms: Vec<SimpleHOp>,
    localization: Region,
}

impl HestenesOp {
    pub fn new(terms: Vec<SimpleHOp>) -> Result<HestenesOp> {
        let Some(first) = terms.first() else {
            return Err(Error::Construction("Hestenes operator needs at least one term".into()));
        };
        let d = first.region.dim();
        let mut localization = first.region.hull(&first.region.image(&first.map));
        for t in &terms {
            if t.region.dim() != d {
                return Err(Error::Construction("mixed-dimension terms".into()));
            }
            localization = localization.hull(&t.region).hull(&t.region.image(&t.map));
        }
        Ok(HestenesOp { terms, localization })
    }

    pub fn terms(&self) -> &[SimpleHOp] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.localization.dim()
    }

    /// Bounding box of every term's region and image.
    pub fn localization(&self) -> &Region {
        &self.localization
    }

    pub fn apply(&self, f: &SampledField) -> Result<SampledField> {
        apply(self, f)
    }
}

/// Applies `h` to a sampled field; off-grid compositions use cubic
/// interpolation.
pub fn apply(h: &HestenesOp, f: &SampledField) -> Result<SampledField> {
    let grid = f.grid().clone();
    let d = grid.dim();
    if h.dim() != d {
        return Err(Error::Domain(format!(
            "operator dimension {} does not match grid dimension {d}",
            h.dim()
        )));
    }
    let values: Result<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || (vec![0.0; d], vec![0.0; d]),
            |(x, y), i| {
                grid.coords(i, x);
                let mut acc = 0.0;
                for t in &h.terms {
                    if !t.region.contains(&grid, x) {
                        continue;
                    }
                    let w = (t.phi)(x);
                    if w == 0.0 {
                        continue;
                    }
                    for ax in 0..d {
                        y[ax] = t.map[ax].forward(x[ax]);
                        let axis = &grid.axes()[ax];
                        if !axis.periodic {
                            let slack = axis.spacing();
                            if y[ax] < axis.lo - slack || y[ax] > axis.hi + slack {
                                return Err(Error::Domain(format!(
                                    "mapped point {} leaves grid axis [{}, {}]",
                                    y[ax], axis.lo, axis.hi
                                )));
                            }
                        }
                    }
                    acc += w * f.sample(y);
                }
                Ok(acc)
            },
        )
        .collect();
    SampledField::new(grid, values?)
}

/// Term-wise adjoint; the adjoint of a sum is the sum of adjoints.
pub fn adjoint(h: &HestenesOp) -> HestenesOp {
    let terms: Vec<SimpleHOp> = h.terms.iter().map(SimpleHOp::adjoint).collect();
    HestenesOp::new(terms).expect("adjoint preserves well-formedness")
}

/// Operator composition `a o b` (apply `b` first). Regions are intersected
/// exactly, which assumes non-wrapped boxes; the frame construction composes
/// operators on closed charts only.
pub fn compose(a: &HestenesOp, b: &HestenesOp) -> Result<HestenesOp> {
    let mut terms = Vec::new();
    for ta in &a.terms {
        for tb in &b.terms {
            // (a o b) f(x) = phi_a(x) phi_b(Phi_a x) f(Phi_b Phi_a x)
            // on V_a intersect Phi_a^{-1}(V_b).
            let inv_a: Vec<AxisMap> = ta.map.iter().map(AxisMap::inverse).collect();
            let pre = tb.region.image(&inv_a);
            let Some(region) = ta.region.intersect(&pre) else {
                continue;
            };
            let map: Vec<AxisMap> =
                ta.map.iter().zip(&tb.map).map(|(ma, mb)| ma.then(mb)).collect();
            let phi_a = ta.phi.clone();
            let phi_b = tb.phi.clone();
            let map_a = ta.map.clone();
            let phi: Multiplier = Arc::new(move |x: &[f64]| {
                let y: Vec<f64> = x.iter().zip(&map_a).map(|(&v, m)| m.forward(v)).collect();
                phi_a(x) * phi_b(&y)
            });
            terms.push(SimpleHOp { phi, map, region });
        }
    }
    if terms.is_empty() {
        return Err(Error::Construction("composition has empty support".into()));
    }
    HestenesOp::new(terms)
}

/// Axis record of a folding projection.
#[derive(Debug, Clone, Copy)]
pub struct FoldInterval {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub bell: Bell,
}

/// Orthogonal projection built from bells and reflections across interval
/// endpoints; a specialization of [`HestenesOp`].
#[derive(Debug, Clone)]
pub struct FoldingProjection {
    op: HestenesOp,
    intervals: Vec<FoldInterval>,
}

impl FoldingProjection {
    pub fn op(&self) -> &HestenesOp {
        &self.op
    }

    pub fn intervals(&self) -> &[FoldInterval] {
        &self.intervals
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn apply(&self, f: &SampledField) -> Result<SampledField> {
        apply(&self.op, f)
    }

    /// Projection acting as plain restriction to `[lo, hi]` with no folding;
    /// used for axes a cover element occupies entirely (e.g. the angular
    /// variable of a spherical cap).
    pub fn identity_1d(lo: f64, hi: f64) -> Result<FoldingProjection> {
        let region = Region::new(vec![lo], vec![hi])?;
        let phi: Multiplier = Arc::new(|_x: &[f64]| 1.0);
        let op = HestenesOp::new(vec![SimpleHOp::new(phi, vec![AxisMap::Identity], region)?])?;
        Ok(FoldingProjection {
            op,
            intervals: vec![FoldInterval { a: lo, b: hi, delta: 0.0, bell: Bell::ExpReciprocal }],
        })
    }
}

/// Rising bell at edge `e`: 0 below `e - delta`, 1 above `e + delta`, with
/// r(x)^2 + r(2e - x)^2 = 1.
fn rise(bell: Bell, e: f64, delta: f64, x: f64) -> f64 {
    (FRAC_PI_2 * bell.eval((x - e + delta) / (2.0 * delta))).sin()
}

/// Falling bell at edge `e`: the complement of [`rise`].
fn fall(bell: Bell, e: f64, delta: f64, x: f64) -> f64 {
    (FRAC_PI_2 * bell.eval((x - e + delta) / (2.0 * delta))).cos()
}

/// 1-D Coifman-Meyer folding projection onto `[a, b]` with collar width
/// `delta`, folding at both endpoints.
pub fn folding_projection_1d(a: f64, b: f64, delta: f64, bell: Bell) -> Result<FoldingProjection> {
    folding_projection_sided(a, b, delta, bell, true, true, None)
}

/// General 1-D folding projection. `fold_left`/`fold_right` select which
/// endpoints carry a fold (an unfolded endpoint is a hard cutoff, appropriate
/// when it is a boundary of the whole domain). `period` enables evaluation on
/// a circle of that circumference: bell arguments are reduced modulo the
/// period so an interval may sit anywhere on the circle.
///
/// Sign convention: the reflected term enters with `+` at the left endpoint
/// and `-` at the right one, so two projections onto adjacent intervals that
/// share the bell at the common endpoint satisfy P P' = 0 and P + P' = I
/// there.
pub fn folding_projection_sided(
    a: f64,
    b: f64,
    delta: f64,
    bell: Bell,
    fold_left: bool,
    fold_right: bool,
    period: Option<f64>,
) -> Result<FoldingProjection> {
    if !(b > a) {
        return Err(Error::Parameter(format!("empty interval [{a}, {b}]")));
    }
    if !(delta > 0.0) || delta > (b - a) / 2.0 {
        return Err(Error::Parameter(format!(
            "collar width {delta} outside (0, {}]",
            (b - a) / 2.0
        )));
    }
    if let Some(p) = period {
        if b - a + 2.0 * delta > p {
            return Err(Error::Parameter("folded interval wraps onto itself".into()));
        }
    }
    // Reduce x to the representative nearest `center` when on a circle.
    let reduce = move |x: f64, center: f64| -> f64 {
        match period {
            Some(p) => x - p * ((x - center) / p).round(),
            None => x,
        }
    };

    let mut terms = Vec::new();

    // Interior multiplier term.
    let lo = if fold_left { a - delta } else { a };
    let hi = if fold_right { b + delta } else { b };
    let mid = (a + b) / 2.0;
    let phi0: Multiplier = Arc::new(move |x: &[f64]| {
        let x = reduce(x[0], mid);
        let l = if fold_left { rise(bell, a, delta, x) } else { 1.0 };
        let r = if fold_right { fall(bell, b, delta, x) } else { 1.0 };
        l * l * r * r
    });
    terms.push(SimpleHOp::new(phi0, vec![AxisMap::Identity], Region::new(vec![lo], vec![hi])?)?);

    if fold_left {
        let phi: Multiplier = Arc::new(move |x: &[f64]| {
            let x = reduce(x[0], a);
            rise(bell, a, delta, x) * rise(bell, a, delta, 2.0 * a - x)
        });
        terms.push(SimpleHOp::new(
            phi,
            vec![AxisMap::Reflection(a)],
            Region::new(vec![a - delta], vec![a + delta])?,
        )?);
    }
    if fold_right {
        let phi: Multiplier = Arc::new(move |x: &[f64]| {
            let x = reduce(x[0], b);
            -fall(bell, b, delta, x) * fall(bell, b, delta, 2.0 * b - x)
        });
        terms.push(SimpleHOp::new(
            phi,
            vec![AxisMap::Reflection(b)],
            Region::new(vec![b - delta], vec![b + delta])?,
        )?);
    }

    Ok(FoldingProjection {
        op: HestenesOp::new(terms)?,
        intervals: vec![FoldInterval { a, b, delta, bell }],
    })
}

/// Tensor product of 1-D folding projections, acting separately in each
/// variable; the product of orthogonal projections in distinct variables is
/// again an orthogonal projection.
pub fn tensorize(ops: &[FoldingProjection]) -> Result<FoldingProjection> {
    if ops.is_empty() {
        return Err(Error::Parameter("tensorize needs at least one factor".into()));
    }
    let mut intervals = Vec::new();
    for op in ops {
        if op.dim() != 1 {
            return Err(Error::Parameter("tensorize expects 1-D factors".into()));
        }
        intervals.push(op.intervals[0]);
    }

    // Cartesian product of the per-axis terms.
    struct Partial {
        phi: Multiplier,
        map: Vec<AxisMap>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    }
    let unit: Multiplier = Arc::new(|_x: &[f64]| 1.0);
    let mut partial = vec![Partial { phi: unit, map: Vec::new(), lo: Vec::new(), hi: Vec::new() }];
    for (ax, op) in ops.iter().enumerate() {
        let mut next = Vec::with_capacity(partial.len() * op.op.terms.len());
        for p in &partial {
            for t in &op.op.terms {
                let prev = p.phi.clone();
                let axis_phi = t.phi.clone();
                let phi: Multiplier =
                    Arc::new(move |x: &[f64]| prev(&x[..ax]) * axis_phi(&x[ax..ax + 1]));
                let mut map = p.map.clone();
                map.push(t.map[0]);
                let mut lo = p.lo.clone();
                let mut hi = p.hi.clone();
                lo.push(t.region.lo[0]);
                hi.push(t.region.hi[0]);
                next.push(Partial { phi, map, lo, hi });
            }
        }
        partial = next;
    }

    let mut terms = Vec::with_capacity(partial.len());
    for p in partial {
        terms.push(SimpleHOp::new(p.phi, p.map, Region::new(p.lo, p.hi)?)?);
    }
    Ok(FoldingProjection { op: HestenesOp::new(terms)?, intervals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{inner, l2_norm, plateau_bump};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid1(lo: f64, hi: f64, ppu: u32) -> Arc<Grid> {
        Arc::new(Grid::new(&[(lo, hi)], ppu, &[false]).unwrap())
    }

    /// Random smooth field: a few Gaussian bumps centered well inside the
    /// box, so quadrature on the box is spectrally accurate.
    fn random_field(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> SampledField {
        let d = grid.dim();
        let axes = grid.axes().to_vec();
        let bumps: Vec<(Vec<f64>, f64, f64)> = (0..5)
            .map(|_| {
                let c: Vec<f64> = axes
                    .iter()
                    .map(|a| {
                        let m = (a.lo + a.hi) / 2.0;
                        let r = (a.hi - a.lo) * 0.3;
                        m + rng.gen_range(-r..r)
                    })
                    .collect();
                (c, rng.gen_range(0.15..0.35), rng.gen_range(-1.0..1.0))
            })
            .collect();
        SampledField::from_fn(grid.clone(), move |x| {
            bumps
                .iter()
                .map(|(c, w, amp)| {
                    let r2: f64 = x.iter().zip(c).map(|(&v, &cv)| (v - cv) * (v - cv)).sum();
                    amp * (-r2 / (w * w)).exp()
                })
                .sum::<f64>()
                * (0..d).map(|ax| plateau_bump(x[ax], axes[ax].hi.abs() * 0.6, axes[ax].hi.abs() * 0.9)).product::<f64>()
        })
    }

    fn simple(phi: Multiplier, map: AxisMap, lo: f64, hi: f64) -> HestenesOp {
        HestenesOp::new(vec![
            SimpleHOp::new(phi, vec![map], Region::new(vec![lo], vec![hi]).unwrap()).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn identity_map_multiplies_pointwise() {
        let g = grid1(-1.0, 1.0, 128);
        let f = SampledField::from_fn(g.clone(), |x| (3.0 * x[0]).cos());
        let phi: Multiplier = Arc::new(|x: &[f64]| plateau_bump(x[0], 0.3, 0.6));
        let h = simple(phi.clone(), AxisMap::Identity, -1.0, 1.0);
        let out = apply(&h, &f).unwrap();
        for i in 0..g.len() {
            let x = g.axes()[0].coord(i);
            assert_abs_diff_eq!(out.values()[i], phi(&[x]) * f.values()[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_field_maps_to_zero() {
        let g = grid1(-1.0, 1.0, 64);
        let h = simple(Arc::new(|_x: &[f64]| 1.0), AxisMap::Reflection(0.25), -0.5, 1.0);
        let out = apply(&h, &SampledField::zeros(g)).unwrap();
        assert_eq!(out.linf(), 0.0);
    }

    #[test]
    fn reflection_is_an_involution() {
        // Reflect about an on-grid center twice; recovery is limited only by
        // interpolation, and reflections about grid points hit nodes exactly.
        let g = grid1(-1.0, 1.0, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_field(&g, &mut rng);
        let h = simple(Arc::new(|_x: &[f64]| 1.0), AxisMap::Reflection(0.25), -0.5, 1.0);
        let once = apply(&h, &f).unwrap();
        let twice = apply(&h, &once).unwrap();
        let mid = SampledField::from_fn(g.clone(), |x| {
            if (-0.5..=1.0).contains(&x[0]) && (-0.5..=1.0).contains(&(0.5 - x[0])) {
                f.sample(x)
            } else {
                0.0
            }
        });
        assert!(twice.sub(&mid).linf() < 1e-6);
    }

    #[test]
    fn mapped_point_outside_grid_is_an_error() {
        let g = grid1(-1.0, 1.0, 64);
        let f = SampledField::from_fn(g, |x| x[0]);
        let h = simple(
            Arc::new(|_x: &[f64]| 1.0),
            AxisMap::Affine { scale: 3.0, offset: 0.0 },
            -1.0,
            1.0,
        );
        assert!(matches!(apply(&h, &f), Err(Error::Domain(_))));
    }

    #[test]
    fn adjoint_of_identity_and_reflection() {
        let phi: Multiplier = Arc::new(|x: &[f64]| plateau_bump(x[0], 0.2, 0.5));
        let h = simple(phi.clone(), AxisMap::Identity, -0.5, 0.5);
        let ha = adjoint(&h);
        assert_eq!(ha.terms()[0].map(), &[AxisMap::Identity]);
        assert_abs_diff_eq!((ha.terms()[0].phi)(&[0.37]), phi(&[0.37]), epsilon = 1e-15);

        let h = simple(phi.clone(), AxisMap::Reflection(0.1), -0.5, 0.5);
        let ha = adjoint(&h);
        assert_eq!(ha.terms()[0].map(), &[AxisMap::Reflection(0.1)]);
        // phi1 = phi o Phi with unit Jacobian
        assert_abs_diff_eq!((ha.terms()[0].phi)(&[0.3]), phi(&[0.2 - 0.3]), epsilon = 1e-15);
    }

    #[test]
    fn adjoint_pairing_identity() {
        // Quadrature identity int (Hf) g = int f (H* g) for reflection and
        // affine chart-transition terms.
        let g = grid1(-1.0, 1.0, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bump: Multiplier = Arc::new(|x: &[f64]| plateau_bump(x[0], 0.2, 0.45));
        let ops = [
            simple(bump.clone(), AxisMap::Reflection(0.125), -0.45, 0.45),
            simple(bump.clone(), AxisMap::Affine { scale: 0.5, offset: 0.1 }, -0.45, 0.45),
        ];
        for h in &ops {
            let ha = adjoint(h);
            for _ in 0..10 {
                let f = random_field(&g, &mut rng);
                let w = random_field(&g, &mut rng);
                let lhs = inner(&apply(h, &f).unwrap(), &w);
                let rhs = inner(&f, &apply(&ha, &w).unwrap());
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn adjoint_is_an_involution() {
        let g = grid1(-1.0, 1.0, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let bump: Multiplier = Arc::new(|x: &[f64]| plateau_bump(x[0], 0.2, 0.45));
        let h = simple(bump, AxisMap::Affine { scale: 0.5, offset: 0.1 }, -0.45, 0.45);
        let haa = adjoint(&adjoint(&h));
        for _ in 0..3 {
            let f = random_field(&g, &mut rng);
            let d = apply(&h, &f).unwrap().sub(&apply(&haa, &f).unwrap());
            assert!(d.linf() < 1e-9, "involution defect {}", d.linf());
        }
    }

    #[test]
    fn compose_matches_sequential_application() {
        let g = grid1(-1.0, 1.0, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let f = random_field(&g, &mut rng);
        let bump: Multiplier = Arc::new(|x: &[f64]| plateau_bump(x[0], 0.25, 0.5));
        // Reflections about on-grid centers so both routes sample exactly.
        let a = simple(bump.clone(), AxisMap::Reflection(0.25), -0.5, 0.75);
        let b = simple(bump.clone(), AxisMap::Reflection(-0.25), -0.75, 0.5);
        let ab = compose(&a, &b).unwrap();
        let direct = apply(&ab, &f).unwrap();
        let seq = apply(&a, &apply(&b, &f).unwrap()).unwrap();
        assert!(direct.sub(&seq).linf() < 1e-12);
    }

    // --- folding projections -------------------------------------------------

    fn fold(a: f64, b: f64, delta: f64) -> FoldingProjection {
        folding_projection_1d(a, b, delta, Bell::ExpReciprocal).unwrap()
    }

    #[test]
    fn folding_rejects_wide_collar() {
        assert!(folding_projection_1d(0.0, 1.0, 0.6, Bell::ExpReciprocal).is_err());
        assert!(folding_projection_1d(0.0, 1.0, 0.0, Bell::ExpReciprocal).is_err());
    }

    #[test]
    fn folding_fixes_interior_and_kills_far_field() {
        let g = grid1(-1.0, 1.0, 256);
        let h = fold(-0.5, 0.25, 0.125);
        let one = SampledField::from_fn(g.clone(), |_| 1.0);
        let out = h.apply(&one).unwrap();
        for i in 0..g.len() {
            let x = g.axes()[0].coord(i);
            if (-0.375..=0.125).contains(&x) {
                assert_abs_diff_eq!(out.values()[i], 1.0, epsilon = 1e-14);
            }
        }
        // f supported beyond b + 2 delta is annihilated
        let far = SampledField::from_fn(g, |x| plateau_bump(x[0] - 0.75, 0.1, 0.2));
        let out = h.apply(&far).unwrap();
        assert_eq!(out.linf(), 0.0);
    }

    #[test]
    fn folding_is_idempotent_and_self_adjoint() {
        let g = grid1(-1.0, 1.0, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        // endpoints and collar on-grid so reflections are exact
        let h = fold(-0.5, 0.25, 0.125);
        let ha = adjoint(h.op());
        for _ in 0..10 {
            let f = random_field(&g, &mut rng);
            let hf = h.apply(&f).unwrap();
            let hhf = h.apply(&hf).unwrap();
            assert!(l2_norm(&hhf.sub(&hf)) < 1e-8, "idempotence defect");
            let haf = apply(&ha, &f).unwrap();
            assert!(l2_norm(&hf.sub(&haf)) < 1e-8, "self-adjointness defect");
        }
    }

    #[test]
    fn folding_orthogonality() {
        let g = grid1(-1.0, 1.0, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let h = fold(-0.5, 0.25, 0.125);
        for _ in 0..5 {
            let f = random_field(&g, &mut rng);
            let w = random_field(&g, &mut rng);
            let hf = h.apply(&f).unwrap();
            let hw = h.apply(&w).unwrap();
            assert_abs_diff_eq!(inner(&hf, &w.sub(&hw)), 0.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn complementary_projections_decompose_identity() {
        // P onto [a,b], P' onto [b,c] with the shared bell at b:
        // P P' = 0 and (P + P') f = f inside (a + delta, c - delta).
        let g = grid1(-1.0, 1.0, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (a, b, c, delta) = (-0.75, 0.0, 0.75, 0.125);
        let p = fold(a, b, delta);
        let q = fold(b, c, delta);
        for _ in 0..5 {
            let f = random_field(&g, &mut rng);
            let pq = p.apply(&q.apply(&f).unwrap()).unwrap();
            assert!(l2_norm(&pq) < 1e-7, "P P' defect {}", l2_norm(&pq));
            let sum = p.apply(&f).unwrap().add(&q.apply(&f).unwrap());
            let d = sum.sub(&f);
            // compare on the inner region only; outside [a-delta, c+delta]
            // both projections vanish by design
            let mask = SampledField::from_fn(g.clone(), |x| {
                if (a + delta..=c - delta).contains(&x[0]) {
                    1.0
                } else {
                    0.0
                }
            });
            assert!(l2_norm(&d.zip_with(&mask, |u, m| u * m)) < 1e-7);
        }
    }

    #[test]
    fn periodic_folding_covers_the_circle() {
        // Two arcs of a circle of circumference 2 with shared bells wrap to a
        // decomposition of identity.
        let g = Arc::new(Grid::new(&[(0.0, 2.0)], 256, &[true]).unwrap());
        let delta = 0.125;
        let p = folding_projection_sided(0.0, 1.0, delta, Bell::ExpReciprocal, true, true, Some(2.0))
            .unwrap();
        let q = folding_projection_sided(1.0, 2.0, delta, Bell::ExpReciprocal, true, true, Some(2.0))
            .unwrap();
        let f = SampledField::from_fn(g.clone(), |x| {
            (std::f64::consts::PI * x[0]).sin() + 0.5 * (2.0 * std::f64::consts::PI * x[0]).cos()
        });
        let sum = p.apply(&f).unwrap().add(&q.apply(&f).unwrap());
        assert!(sum.sub(&f).linf() < 1e-7, "wrap decomposition defect {}", sum.sub(&f).linf());
        let pq = p.apply(&q.apply(&f).unwrap()).unwrap();
        assert!(l2_norm(&pq) < 1e-7);
    }

    #[test]
    fn one_sided_folding_pairs_with_interior_projection() {
        // Cap-style projection folded only at its right edge, complemented by
        // a both-sided neighbor.
        let g = grid1(-1.0, 1.0, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let delta = 0.125;
        let cap = folding_projection_sided(-1.0, -0.25, delta, Bell::ExpReciprocal, false, true, None)
            .unwrap();
        let mid = folding_projection_sided(-0.25, 1.0, delta, Bell::ExpReciprocal, true, false, None)
            .unwrap();
        for _ in 0..5 {
            let f = random_field(&g, &mut rng);
            let sum = cap.apply(&f).unwrap().add(&mid.apply(&f).unwrap());
            assert!(sum.sub(&f).linf() < 1e-7);
            let x = cap.apply(&mid.apply(&f).unwrap()).unwrap();
            assert!(l2_norm(&x) < 1e-7);
            let hf = cap.apply(&f).unwrap();
            let hhf = cap.apply(&hf).unwrap();
            assert!(l2_norm(&hhf.sub(&hf)) < 1e-8);
        }
    }

    #[test]
    fn tensor_product_folding() {
        let g = Arc::new(Grid::new(&[(-1.0, 1.0), (-1.0, 1.0)], 128, &[false, false]).unwrap());
        let hx = fold(-0.5, 0.25, 0.125);
        let hy = fold(-0.25, 0.5, 0.125);
        let h2 = tensorize(&[hx.clone(), hy.clone()]).unwrap();

        // constant field fixed on the inner square
        let one = SampledField::from_fn(g.clone(), |_| 1.0);
        let out = h2.apply(&one).unwrap();
        let mut x = [0.0; 2];
        for i in 0..g.len() {
            g.coords(i, &mut x);
            if (-0.375..=0.125).contains(&x[0]) && (-0.125..=0.375).contains(&x[1]) {
                assert_abs_diff_eq!(out.values()[i], 1.0, epsilon = 1e-13);
            }
        }

        // separable field: tensor fold equals the product of 1-D folds
        let g1 = grid1(-1.0, 1.0, 128);
        let fx = SampledField::from_fn(g1.clone(), |x| (-(x[0] * x[0]) / 0.09).exp());
        let fy = SampledField::from_fn(g1.clone(), |x| x[0] * (-(x[0] * x[0]) / 0.04).exp());
        let hfx = hx.apply(&fx).unwrap();
        let hfy = hy.apply(&fy).unwrap();
        let sep = SampledField::from_fn(g.clone(), |x| {
            fx.sample(&x[..1]) * fy.sample(&x[1..])
        });
        let hsep = h2.apply(&sep).unwrap();
        let prod = SampledField::from_fn(g.clone(), |x| {
            hfx.sample(&x[..1]) * hfy.sample(&x[1..])
        });
        assert!(hsep.sub(&prod).linf() < 1e-8);

        // idempotence on random smooth 2-D fields
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..3 {
            let f = random_field(&g, &mut rng);
            let hf = h2.apply(&f).unwrap();
            let hhf = h2.apply(&hf).unwrap();
            assert!(l2_norm(&hhf.sub(&hf)) < 1e-7);
        }
    }
}
