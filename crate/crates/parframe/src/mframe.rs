//! Wavelet frames on the model manifolds.
//!
//! Three layers sit on top of `localframe` and `manifold`:
//!
//! * decompositions of identity `I = sum_U P_U` from Coifman-Meyer folding
//!   projections subordinate to a box/band cover of the manifold;
//! * the L^p transport operators `T^p_x` that pull a cover element back to
//!   the cube through a geodesic normal chart, with the `|det g|^{1/(2p)}`
//!   weight that makes `T^2` unitary and `(T^p)^-1 = (T^{p'})^*`;
//! * the transported frame system `psi = P_U T^p f^e_{j,k}` with its
//!   analysis/synthesis transforms and the manifold F/B sequence norms.
//!
//! Coefficients of `f` against the dual system are computed entirely in cube
//! coordinates: `<f, P_U T^{p'} f^e> = <(T^p)^-1 P_U f, f^e>`, so each cover
//! element contributes one ordinary local-frame analysis of the pulled-back
//! folded field, whose support the transport scale keeps inside Q.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hestenes::{folding_projection_sided, tensorize, FoldingProjection};
use crate::localframe::{
    analyze, analyze_fn, synthesize, CoefficientSet, DecayNormParams, FrameIndex, LocalFrame,
    Smoothness,
};
use crate::manifold::{exp_chart, Chart, ManifoldKind, ModelManifold};
use crate::numerics::{inner, lp_norm, Grid, NormParams, SampledField};
use crate::wavelets1d::Bell;

/// Pullback supports are scaled into [-MARGIN, MARGIN]^d, strictly inside Q.
const SUPPORT_MARGIN: f64 = 0.98;
/// Collar width of the flat-cover foldings as a fraction of the box half-width.
const FLAT_COLLAR_FRACTION: f64 = 0.3;
/// Collar of the latitude foldings as a fraction of the narrowest t-band.
const BAND_COLLAR_FRACTION: f64 = 0.225;
/// Collar of the phi-sector foldings as a fraction of the sector half-width.
const SECTOR_COLLAR_FRACTION: f64 = 0.3;
/// Bell profile of every cover folding.
const DECOMP_BELL: Bell = Bell::ExpReciprocal;
/// Sampling density of the intermediate synthesis grids.
const SYNTH_PPU_1D: u32 = 1024;
const SYNTH_PPU_ND: u32 = 256;
/// Sampling density of the pulled-back field handed to the Meyer analysis.
const MEYER_PULLBACK_PPU: u32 = 128;
/// Per-axis samples when bounding a sphere piece in chart coordinates.
const BOUND_SAMPLES: usize = 96;
/// Below this det g the transported element is treated as vanished (only
/// reachable outside the element supports, near the chart antipode).
const DETG_FLOOR: f64 = 1e-30;

// ---------------------------------------------------------------------------
// Covers and decompositions of identity
// ---------------------------------------------------------------------------

/// Cover geometry a decomposition of identity can be built on. Anything not
/// expressible in one of these forms is rejected as unsupported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoverShape {
    /// Circle split into `n >= 2` equal arcs.
    Arcs(usize),
    /// Torus split into an axis-aligned grid of boxes, `counts[a]` per axis.
    Boxes(Vec<usize>),
    /// Sphere split into latitude bands `t_edges[b] <= t <= t_edges[b+1]`,
    /// band `b` subdivided into `sectors[b]` equal phi-sectors. The polar
    /// bands (first and last) must keep `sectors = 1`.
    Bands { t_edges: Vec<f64>, sectors: Vec<usize> },
}

/// The canonical smallest covers: two arcs, 2^d boxes, three bands with the
/// middle one split into four sectors.
pub fn default_cover_shape(manifold: &ModelManifold) -> CoverShape {
    match manifold.kind() {
        ManifoldKind::Circle => CoverShape::Arcs(2),
        ManifoldKind::Torus => CoverShape::Boxes(vec![2; manifold.d()]),
        ManifoldKind::Sphere => CoverShape::Bands {
            t_edges: vec![-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0],
            sectors: vec![1, 4, 1],
        },
    }
}

/// One cover element with its folding projection. Boxes are in the global
/// coordinates of the manifold; the collar is the per-axis folding width
/// (zero on an axis the piece occupies entirely or up to a domain boundary).
pub struct DecompPiece {
    label: String,
    center: Vec<f64>,
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
    collar: Vec<f64>,
    projection: FoldingProjection,
}

impl DecompPiece {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn box_lo(&self) -> &[f64] {
        &self.box_lo
    }

    pub fn box_hi(&self) -> &[f64] {
        &self.box_hi
    }

    pub fn collar(&self) -> &[f64] {
        &self.collar
    }

    pub fn projection(&self) -> &FoldingProjection {
        &self.projection
    }
}

/// A decomposition of identity `I = sum_U P_U` into mutually orthogonal,
/// self-adjoint folding projections subordinate to a cover of the manifold.
/// The projections themselves do not depend on p; the exponent is carried
/// for the transported frame built on top.
pub struct IdentityDecomposition {
    manifold: ModelManifold,
    p: f64,
    pieces: Vec<DecompPiece>,
}

impl IdentityDecomposition {
    pub fn manifold(&self) -> &ModelManifold {
        &self.manifold
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[DecompPiece] {
        &self.pieces
    }

    pub fn piece(&self, i: usize) -> &DecompPiece {
        &self.pieces[i]
    }

    /// P_U f for cover element `i`.
    pub fn apply(&self, i: usize, f: &SampledField) -> Result<SampledField> {
        if i >= self.pieces.len() {
            return Err(Error::Index(format!("piece {i} out of range")));
        }
        self.pieces[i].projection.apply(f)
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Parameter(format!("exponent p = {p} outside (1, infinity)")));
    }
    Ok(())
}

/// Builds the decomposition of identity subordinate to the given cover.
pub fn decomposition_of_identity(
    manifold: &ModelManifold,
    shape: &CoverShape,
    p: f64,
) -> Result<IdentityDecomposition> {
    check_exponent(p)?;
    let pieces = match (manifold.kind(), shape) {
        (ManifoldKind::Circle, CoverShape::Arcs(n)) => arc_pieces(manifold, *n)?,
        (ManifoldKind::Torus, CoverShape::Boxes(counts)) => box_pieces(manifold, counts)?,
        (ManifoldKind::Sphere, CoverShape::Bands { t_edges, sectors }) => {
            band_pieces(t_edges, sectors)?
        }
        (kind, shape) => {
            return Err(Error::UnsupportedCover(format!(
                "cover {shape:?} is not representable on a {kind:?}"
            )))
        }
    };
    Ok(IdentityDecomposition { manifold: manifold.clone(), p, pieces })
}

fn arc_pieces(manifold: &ModelManifold, n: usize) -> Result<Vec<DecompPiece>> {
    if n < 2 {
        return Err(Error::UnsupportedCover(format!(
            "circle cover needs at least 2 arcs, got {n}"
        )));
    }
    let len = manifold.size();
    let width = len / n as f64;
    let delta = FLAT_COLLAR_FRACTION * 0.5 * width;
    let mut pieces = Vec::with_capacity(n);
    for q in 0..n {
        let a = q as f64 * width;
        let b = a + width;
        let projection = folding_projection_sided(a, b, delta, DECOMP_BELL, true, true, Some(len))?;
        pieces.push(DecompPiece {
            label: format!("arc{q}"),
            center: vec![0.5 * (a + b)],
            box_lo: vec![a],
            box_hi: vec![b],
            collar: vec![delta],
            projection,
        });
    }
    Ok(pieces)
}

fn box_pieces(manifold: &ModelManifold, counts: &[usize]) -> Result<Vec<DecompPiece>> {
    let d = manifold.d();
    if counts.len() != d {
        return Err(Error::UnsupportedCover(format!(
            "box cover has {} axis counts for a {d}-torus",
            counts.len()
        )));
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::UnsupportedCover("box cover with an empty axis".into()));
    }
    let len = manifold.size();
    // Per-axis interval data: (lo, hi, collar, projection).
    let mut axes: Vec<Vec<(f64, f64, f64, FoldingProjection)>> = Vec::with_capacity(d);
    for &c in counts {
        let mut column = Vec::with_capacity(c);
        if c == 1 {
            column.push((0.0, len, 0.0, FoldingProjection::identity_1d(0.0, len)?));
        } else {
            let width = len / c as f64;
            let delta = FLAT_COLLAR_FRACTION * 0.5 * width;
            for q in 0..c {
                let a = q as f64 * width;
                let b = a + width;
                let proj =
                    folding_projection_sided(a, b, delta, DECOMP_BELL, true, true, Some(len))?;
                column.push((a, b, delta, proj));
            }
        }
        axes.push(column);
    }
    let mut pieces = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let mut factors = Vec::with_capacity(d);
        let (mut lo, mut hi, mut collar, mut center) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (ax, &i) in idx.iter().enumerate() {
            let (a, b, delta, ref proj) = axes[ax][i];
            factors.push(proj.clone());
            lo.push(a);
            hi.push(b);
            collar.push(delta);
            center.push(0.5 * (a + b));
        }
        let label = format!(
            "box{}",
            idx.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("_")
        );
        pieces.push(DecompPiece {
            label,
            center,
            box_lo: lo,
            box_hi: hi,
            collar,
            projection: tensorize(&factors)?,
        });
        // Odometer over the axis counts.
        let mut ax = d;
        loop {
            if ax == 0 {
                return Ok(pieces);
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < counts[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}

fn band_pieces(t_edges: &[f64], sectors: &[usize]) -> Result<Vec<DecompPiece>> {
    let bands = t_edges.len().saturating_sub(1);
    if bands < 2 || sectors.len() != bands {
        return Err(Error::UnsupportedCover(format!(
            "sphere cover needs >= 2 bands with one sector count each, got {} edges / {} counts",
            t_edges.len(),
            sectors.len()
        )));
    }
    if (t_edges[0] + 1.0).abs() > 1e-12 || (t_edges[bands] - 1.0).abs() > 1e-12 {
        return Err(Error::UnsupportedCover(
            "sphere band edges must run from t = -1 to t = 1".into(),
        ));
    }
    if t_edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::UnsupportedCover("sphere band edges must increase".into()));
    }
    if sectors[0] != 1 || sectors[bands - 1] != 1 {
        return Err(Error::UnsupportedCover(
            "a polar band cannot be subdivided in phi".into(),
        ));
    }
    if sectors.iter().any(|&s| s == 0) {
        return Err(Error::UnsupportedCover("band with an empty sector count".into()));
    }
    let min_width = t_edges.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let delta_t = BAND_COLLAR_FRACTION * min_width;
    for &e in &t_edges[1..bands] {
        if e.abs() + delta_t >= 1.0 {
            return Err(Error::UnsupportedCover(format!(
                "band edge t = {e} leaves no room for the folding collar {delta_t}"
            )));
        }
    }
    let mut pieces = Vec::new();
    for b in 0..bands {
        let (t0, t1) = (t_edges[b], t_edges[b + 1]);
        let fold_left = b > 0;
        let fold_right = b + 1 < bands;
        let t_proj =
            folding_projection_sided(t0, t1, delta_t, DECOMP_BELL, fold_left, fold_right, None)?;
        let n_s = sectors[b];
        if n_s == 1 {
            let phi_proj = FoldingProjection::identity_1d(0.0, 2.0 * PI)?;
            let center = if !fold_left {
                vec![-1.0, 0.0]
            } else if !fold_right {
                vec![1.0, 0.0]
            } else {
                vec![0.5 * (t0 + t1), PI]
            };
            pieces.push(DecompPiece {
                label: format!("band{b}"),
                center,
                box_lo: vec![t0, 0.0],
                box_hi: vec![t1, 2.0 * PI],
                collar: vec![delta_t, 0.0],
                projection: tensorize(&[t_proj.clone(), phi_proj])?,
            });
        } else {
            let width = 2.0 * PI / n_s as f64;
            let delta_phi = SECTOR_COLLAR_FRACTION * 0.5 * width;
            for s in 0..n_s {
                let a = s as f64 * width;
                let phi_proj = folding_projection_sided(
                    a,
                    a + width,
                    delta_phi,
                    DECOMP_BELL,
                    true,
                    true,
                    Some(2.0 * PI),
                )?;
                pieces.push(DecompPiece {
                    label: format!("band{b}_sector{s}"),
                    center: vec![0.5 * (t0 + t1), a + 0.5 * width],
                    box_lo: vec![t0, a],
                    box_hi: vec![t1, a + width],
                    collar: vec![delta_t, delta_phi],
                    projection: tensorize(&[t_proj.clone(), phi_proj])?,
                });
            }
        }
    }
    Ok(pieces)
}

// ---------------------------------------------------------------------------
// Transport operators
// ---------------------------------------------------------------------------

/// The operator `T^p_x f(u) = (3 sqrt d / r)^{d/p} f((3 sqrt d / r) kappa(u))
/// |det g(u)|^{-1/(2p)}` mapping functions on B(0, 3 sqrt d) to functions on
/// the chart ball; `T^2` is a surjective isometry and `(T^p)^-1 = (T^{p'})^*`.
#[derive(Clone)]
pub struct TransportOp {
    chart: Chart,
    p: f64,
    scale: f64,
}

/// Transport through the given chart; the scale is tied to the chart radius.
pub fn transport_op(chart: Chart, p: f64) -> Result<TransportOp> {
    check_exponent(p)?;
    let d = chart.manifold().d() as f64;
    let scale = 3.0 * d.sqrt() / chart.radius();
    Ok(TransportOp { chart, p, scale })
}

impl TransportOp {
    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Conjugate exponent p' = p / (p - 1).
    pub fn dual_exponent(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// The operator with the conjugate exponent (same chart and scale).
    pub fn dual(&self) -> TransportOp {
        TransportOp { chart: self.chart.clone(), p: self.dual_exponent(), scale: self.scale }
    }

    /// T^p f sampled on a manifold grid; `f` is evaluated exactly.
    pub fn apply_fn(
        &self,
        f: &(dyn Fn(&[f64]) -> f64 + Sync),
        grid: Arc<Grid>,
    ) -> Result<SampledField> {
        let d = self.chart.manifold().d();
        if grid.dim() != d {
            return Err(Error::Domain(format!(
                "grid dimension {} does not match the manifold dimension {d}",
                grid.dim()
            )));
        }
        let amp = self.scale.powf(d as f64 / self.p);
        let inv_two_p = 1.0 / (2.0 * self.p);
        let out = SampledField::from_fn(grid, |x| {
            let u = self.chart.forward(x);
            let y: Vec<f64> = u.iter().map(|&v| v * self.scale).collect();
            let fy = f(&y);
            if fy == 0.0 {
                return 0.0;
            }
            let dg = self.chart.detg(&u);
            if dg < DETG_FLOOR {
                return 0.0;
            }
            amp * fy / dg.powf(inv_two_p)
        });
        Ok(out)
    }

    /// T^p applied to a sampled field on a cube grid (cubic interpolation).
    pub fn apply(&self, f: &SampledField, grid: Arc<Grid>) -> Result<SampledField> {
        let closure = |y: &[f64]| f.sample(y);
        self.apply_fn(&closure, grid)
    }

    /// (T^p)^-1 g sampled on a cube grid; `g` is evaluated exactly in global
    /// manifold coordinates.
    pub fn inverse_fn(
        &self,
        g: &(dyn Fn(&[f64]) -> f64 + Sync),
        grid: Arc<Grid>,
    ) -> Result<SampledField> {
        let d = self.chart.manifold().d();
        if grid.dim() != d {
            return Err(Error::Domain(format!(
                "grid dimension {} does not match the manifold dimension {d}",
                grid.dim()
            )));
        }
        let sphere = self.chart.manifold().kind() == ManifoldKind::Sphere;
        let amp = self.scale.powf(-(d as f64) / self.p);
        let inv_two_p = 1.0 / (2.0 * self.p);
        let out = SampledField::from_fn(grid, |y| {
            let u: Vec<f64> = y.iter().map(|&v| v / self.scale).collect();
            if sphere {
                let r2: f64 = u.iter().map(|&v| v * v).sum();
                if r2.sqrt() >= 0.999 * PI {
                    return 0.0;
                }
            }
            let x = self.chart.inverse(&u);
            let gv = g(&x);
            if gv == 0.0 {
                return 0.0;
            }
            amp * gv * self.chart.detg(&u).powf(inv_two_p)
        });
        Ok(out)
    }

    /// (T^p)^-1 applied to a sampled manifold field.
    pub fn inverse(&self, g: &SampledField, grid: Arc<Grid>) -> Result<SampledField> {
        let closure = |x: &[f64]| g.sample(x);
        self.inverse_fn(&closure, grid)
    }
}

/// T^p f on the given manifold grid, after checking that `f` is supported in
/// the ball B(0, 3 sqrt d) the transport is defined on.
pub fn transport(op: &TransportOp, f: &SampledField, grid: Arc<Grid>) -> Result<SampledField> {
    let d = f.grid().dim();
    if d != op.chart.manifold().d() {
        return Err(Error::Domain(format!(
            "field dimension {d} does not match the manifold dimension {}",
            op.chart.manifold().d()
        )));
    }
    let ball = 3.0 * (d as f64).sqrt();
    let tol = 1e-12 * f.linf();
    let mut x = vec![0.0; d];
    for (i, &v) in f.values().iter().enumerate() {
        if v.abs() <= tol {
            continue;
        }
        f.grid().coords(i, &mut x);
        let r2: f64 = x.iter().map(|&c| c * c).sum();
        if r2.sqrt() > ball * (1.0 + 1e-9) {
            return Err(Error::Domain(format!(
                "field is not supported in B(0, {ball}): |f| = {v:e} at radius {}",
                r2.sqrt()
            )));
        }
    }
    op.apply(f, grid)
}

/// Residual `|<(T^p)^-1 h, f> - <h, T^{p'} f>|` of the duality identity,
/// with both pairings evaluated by quadrature on internally chosen grids
/// (`f` lives on the cube, `h` on the manifold, both as exact closures).
pub fn transport_duality_check(
    chart: &Chart,
    p: f64,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    h: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<f64> {
    let manifold = chart.manifold().clone();
    let d = manifold.d();
    let op = transport_op(chart.clone(), p)?;
    let ball = 3.0 * (d as f64).sqrt() + 0.25;
    let ppu = if d == 1 { 512 } else { 96 };
    let rgrid = Arc::new(Grid::new(&vec![(-ball, ball); d], ppu, &vec![false; d])?);
    let mgrid = manifold.grid(&default_resolution(&manifold))?;

    let pullback = op.inverse_fn(h, rgrid.clone())?;
    let f_field = SampledField::from_fn(rgrid, |y| f(y));
    let lhs = inner(&pullback, &f_field);

    let pushed = op.dual().apply_fn(f, mgrid.clone())?;
    let h_field = SampledField::from_fn(mgrid, |x| h(x));
    let rhs = inner(&h_field, &pushed);
    Ok((lhs - rhs).abs())
}

/// Default verification resolutions: dense 1-D circles, 256^2 tori (64^3 for
/// the 3-torus) and the 257 x 512 (t, phi) sphere grid.
pub fn default_resolution(manifold: &ModelManifold) -> Vec<usize> {
    match (manifold.kind(), manifold.d()) {
        (ManifoldKind::Circle, _) => vec![2048],
        (ManifoldKind::Torus, 1) => vec![2048],
        (ManifoldKind::Torus, 2) => vec![256, 256],
        (ManifoldKind::Torus, _) => vec![64; manifold.d()],
        (ManifoldKind::Sphere, _) => vec![257, 512],
    }
}

// ---------------------------------------------------------------------------
// The transported frame system
// ---------------------------------------------------------------------------

/// Per-piece transport data: the chart at the piece center, the pullback
/// scale sigma (so y = sigma kappa(x)), and the pullback support box of the
/// folded piece, strictly inside Q.
struct PieceTransport {
    chart: Chart,
    sigma: f64,
    support: Vec<(f64, f64)>,
}

/// The frame `{P_U T^p_x f^e_{j,k}}` with duals `{P_U T^{p'}_x f^e_{j,k}}`
/// over all cover elements of a decomposition of identity.
pub struct ManifoldFrameSystem {
    decomposition: IdentityDecomposition,
    frame: LocalFrame,
    transports: Vec<PieceTransport>,
}

impl ManifoldFrameSystem {
    pub fn manifold(&self) -> &ModelManifold {
        self.decomposition.manifold()
    }

    pub fn decomposition(&self) -> &IdentityDecomposition {
        &self.decomposition
    }

    pub fn frame(&self) -> &LocalFrame {
        &self.frame
    }

    pub fn index(&self) -> &FrameIndex {
        &self.frame.index
    }

    pub fn p(&self) -> f64 {
        self.decomposition.p()
    }

    pub fn jmax(&self) -> u32 {
        self.frame.jmax
    }

    /// Number of cover elements (= analysis centers x).
    pub fn len(&self) -> usize {
        self.transports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transports.is_empty()
    }

    /// Pullback scale of piece `i`.
    pub fn sigma(&self, i: usize) -> f64 {
        self.transports[i].sigma
    }

    pub fn chart(&self, i: usize) -> &Chart {
        &self.transports[i].chart
    }

    /// Pullback support box of piece `i` in cube coordinates.
    pub fn support(&self, i: usize) -> &[(f64, f64)] {
        &self.transports[i].support
    }
}

/// Per-axis half-widths of the folded piece in the chart at its center.
fn piece_halfwidths(manifold: &ModelManifold, piece: &DecompPiece) -> Result<Vec<f64>> {
    match manifold.kind() {
        ManifoldKind::Circle | ManifoldKind::Torus => Ok(piece
            .box_lo
            .iter()
            .zip(&piece.box_hi)
            .zip(&piece.collar)
            .map(|((&a, &b), &delta)| 0.5 * (b - a) + delta)
            .collect()),
        ManifoldKind::Sphere => {
            let probe = exp_chart(manifold, &piece.center, 0.999 * PI)?;
            let lo = [
                (piece.box_lo[0] - piece.collar[0]).max(-1.0),
                piece.box_lo[1] - piece.collar[1],
            ];
            let hi = [
                (piece.box_hi[0] + piece.collar[0]).min(1.0),
                piece.box_hi[1] + piece.collar[1],
            ];
            let mut h = vec![0.0f64; 2];
            for i in 0..=BOUND_SAMPLES {
                let t = lo[0] + (hi[0] - lo[0]) * i as f64 / BOUND_SAMPLES as f64;
                for j in 0..=BOUND_SAMPLES {
                    let phi = lo[1] + (hi[1] - lo[1]) * j as f64 / BOUND_SAMPLES as f64;
                    let u = probe.forward(&[t, phi]);
                    h[0] = h[0].max(u[0].abs());
                    h[1] = h[1].max(u[1].abs());
                }
            }
            Ok(h)
        }
    }
}

/// Assembles the transported frame system. The local frame index must match
/// the manifold dimension; `r0`, when given, fixes a common nominal transport
/// radius and is rejected unless every folded piece fits in the chart ball of
/// radius `r0 / (3 sqrt d)` the scaling assumes.
pub fn build_wavelet_system(
    decomposition: IdentityDecomposition,
    index: FrameIndex,
    jmax: u32,
    r0: Option<f64>,
) -> Result<ManifoldFrameSystem> {
    let manifold = decomposition.manifold().clone();
    let d = manifold.d();
    if index.d != d {
        return Err(Error::Parameter(format!(
            "frame dimension {} does not match the manifold dimension {d}",
            index.d
        )));
    }
    let frame = LocalFrame::build(index, jmax)?;
    let sqrt_d = (d as f64).sqrt();
    let halfwidths: Vec<Vec<f64>> = decomposition
        .pieces
        .iter()
        .map(|piece| piece_halfwidths(&manifold, piece))
        .collect::<Result<_>>()?;
    let needed =
        halfwidths.iter().flat_map(|h| h.iter().copied()).fold(0.0f64, f64::max);
    let r_needed = 3.0 * sqrt_d * needed / SUPPORT_MARGIN;
    if let Some(r0) = r0 {
        if !(r0 >= r_needed && r0 <= 2.0 * r_needed) {
            return Err(Error::Parameter(format!(
                "cover radius {r0} does not match the transport scale: the folded pieces \
                 require a nominal radius in [{r_needed:.6}, {:.6}]",
                2.0 * r_needed
            )));
        }
    }
    let epsilon = frame.index.epsilon;
    let mut transports = Vec::with_capacity(decomposition.len());
    for (piece, h) in decomposition.pieces.iter().zip(&halfwidths) {
        let h_max = h.iter().copied().fold(0.0f64, f64::max);
        let sigma = match r0 {
            Some(r0) => 3.0 * sqrt_d / r0,
            None => SUPPORT_MARGIN / h_max,
        };
        // The transported elements live in (1/sigma) Q_eps around the piece
        // center; reject configurations that would leak past the cut locus.
        let extent = (1.0 + epsilon) / sigma;
        let within = match manifold.kind() {
            ManifoldKind::Circle | ManifoldKind::Torus => {
                extent < 0.9995 * 0.5 * manifold.size()
            }
            ManifoldKind::Sphere => extent * sqrt_d < 0.999 * PI,
        };
        if !within {
            return Err(Error::Construction(format!(
                "piece {} transported support (extent {extent:.4}) overflows the \
                 injectivity domain; use a finer cover or smaller epsilon",
                piece.label
            )));
        }
        let radius = (3.0 * sqrt_d / sigma).min(0.999 * manifold.injectivity_radius());
        let chart = exp_chart(&manifold, &piece.center, radius)?;
        let support = h.iter().map(|&hw| (-sigma * hw, sigma * hw)).collect();
        transports.push(PieceTransport { chart, sigma, support });
    }
    Ok(ManifoldFrameSystem { decomposition, frame, transports })
}

// ---------------------------------------------------------------------------
// Analysis / synthesis
// ---------------------------------------------------------------------------

/// Coefficients of a manifold field against the dual system, one local-frame
/// coefficient set per cover element x.
pub struct ManifoldCoefficients {
    sets: Vec<CoefficientSet>,
}

impl ManifoldCoefficients {
    pub fn center_count(&self) -> usize {
        self.sets.len()
    }

    pub fn sets(&self) -> &[CoefficientSet] {
        &self.sets
    }

    pub fn set(&self, x: usize) -> &CoefficientSet {
        &self.sets[x]
    }

    /// Total number of stored coefficients.
    pub fn len(&self) -> usize {
        self.sets.iter().map(CoefficientSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.iter().all(CoefficientSet::is_empty)
    }

    /// `sum_x sum_{j,e,k} |c|^2`, the manifold Parseval quantity.
    pub fn energy(&self) -> f64 {
        self.sets.iter().map(CoefficientSet::energy).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.sets.iter().map(CoefficientSet::max_abs).fold(0.0, f64::max)
    }

    /// Restriction of every center to levels <= jmax.
    pub fn truncated(&self, jmax: u32) -> ManifoldCoefficients {
        ManifoldCoefficients { sets: self.sets.iter().map(|s| s.truncated(jmax)).collect() }
    }
}

/// Analysis against the dual system: for each cover element the pairing
/// `<f, P_U T^{p'} f^e> = <(T^p)^-1 P_U f, f^e>` is computed by pulling the
/// folded field back to the cube and running the local-frame analysis there.
pub fn m_analyze(system: &ManifoldFrameSystem, f: &SampledField) -> Result<ManifoldCoefficients> {
    let manifold = system.manifold();
    let d = manifold.d();
    if f.grid().dim() != d {
        return Err(Error::Domain(format!(
            "field dimension {} does not match the manifold dimension {d}",
            f.grid().dim()
        )));
    }
    let p = system.p();
    let sphere = manifold.kind() == ManifoldKind::Sphere;
    let mut sets = Vec::with_capacity(system.len());
    for i in 0..system.len() {
        let g = system.decomposition.apply(i, f)?;
        let tr = &system.transports[i];
        let amp = tr.sigma.powf(-(d as f64) / p);
        let inv_two_p = 1.0 / (2.0 * p);
        let closure = |y: &[f64]| -> f64 {
            let u: Vec<f64> = y.iter().map(|&v| v / tr.sigma).collect();
            if sphere {
                let r2: f64 = u.iter().map(|&v| v * v).sum();
                if r2.sqrt() >= 0.999 * PI {
                    return 0.0;
                }
            }
            let x = tr.chart.inverse(&u);
            let gv = g.sample(&x);
            if gv == 0.0 {
                return 0.0;
            }
            amp * gv * tr.chart.detg(&u).powf(inv_two_p)
        };
        let set = match system.frame.index.m {
            Smoothness::Finite(_) => {
                analyze_fn(&system.frame, &closure, &tr.support, system.jmax(), 0)?
            }
            Smoothness::Infinite => {
                let b = 1.0 + system.frame.index.epsilon + 0.0625;
                let grid = Arc::new(Grid::new(
                    &vec![(-b, b); d],
                    MEYER_PULLBACK_PPU,
                    &vec![false; d],
                )?);
                let field = SampledField::from_fn(grid, |y| closure(y));
                analyze(&system.frame, &field, system.jmax())?
            }
        };
        sets.push(set);
    }
    Ok(ManifoldCoefficients { sets })
}

/// Synthesis `sum_x sum_{j,e,k} c P_U T^p f^e_{j,k}` on the given manifold
/// grid: each center is synthesized on an intermediate cube grid, pushed
/// forward through its chart and folded; the accumulation order over centers
/// and (via the coefficient BTreeMap) over entries is deterministic.
pub fn m_synthesize(
    system: &ManifoldFrameSystem,
    coeffs: &ManifoldCoefficients,
    grid: Arc<Grid>,
) -> Result<SampledField> {
    let manifold = system.manifold();
    let d = manifold.d();
    if grid.dim() != d {
        return Err(Error::Domain(format!(
            "grid dimension {} does not match the manifold dimension {d}",
            grid.dim()
        )));
    }
    if coeffs.center_count() != system.len() {
        return Err(Error::Index(format!(
            "coefficients carry {} centers, system has {}",
            coeffs.center_count(),
            system.len()
        )));
    }
    let p = system.p();
    let ppu = if d == 1 { SYNTH_PPU_1D } else { SYNTH_PPU_ND };
    let b = 1.0 + system.frame.index.epsilon + 2.0 / ppu as f64;
    let mut acc = SampledField::zeros(grid.clone());
    for (i, set) in coeffs.sets.iter().enumerate() {
        if set.is_empty() {
            continue;
        }
        let sgrid = Arc::new(Grid::new(&vec![(-b, b); d], ppu, &vec![false; d])?);
        let s = synthesize(set, &system.frame, sgrid)?;
        let tr = &system.transports[i];
        let amp = tr.sigma.powf(d as f64 / p);
        let inv_two_p = 1.0 / (2.0 * p);
        let piece = SampledField::from_fn(grid.clone(), |x| {
            let u = tr.chart.forward(x);
            let mut y = vec![0.0; d];
            for (ax, &v) in u.iter().enumerate() {
                let w = v * tr.sigma;
                if w.abs() >= b {
                    return 0.0;
                }
                y[ax] = w;
            }
            let sv = s.sample(&y);
            if sv == 0.0 {
                return 0.0;
            }
            let dg = tr.chart.detg(&u);
            if dg < DETG_FLOOR {
                return 0.0;
            }
            amp * sv / dg.powf(inv_two_p)
        });
        let folded = system.decomposition.pieces[i].projection.apply(&piece)?;
        acc = acc.add(&folded);
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Manifold sequence norms
// ---------------------------------------------------------------------------

/// Support sets Omega_{j,k,x} = kappa_x^-1(supp rho_{j,k} / sigma_x): a point
/// lies in the cell of `k` at level j iff floor(lambda 2^j sigma kappa(p))
/// equals the representative of k.
fn cell_of(index: &FrameIndex, j: u32, y: &[f64]) -> Vec<i64> {
    let scale = (index.lambda as f64) * (1u64 << j) as f64;
    y.iter().map(|&v| (scale * v).floor() as i64).collect()
}

fn representative(index: &FrameIndex, j: u32, k: &[i64]) -> Vec<i64> {
    match index.m {
        Smoothness::Finite(_) => k.to_vec(),
        Smoothness::Infinite => index.reduce_to_lambda(j, k),
    }
}

/// Per-piece, per-level accumulation of a coefficient weight over the cells.
fn cell_maps(
    system: &ManifoldFrameSystem,
    coeffs: &ManifoldCoefficients,
    only: Option<usize>,
    weight: impl Fn(u32, f64) -> f64,
    take_max: bool,
) -> Vec<HashMap<(u32, Vec<i64>), f64>> {
    let index = &system.frame.index;
    let mut maps = Vec::with_capacity(coeffs.sets.len());
    for (i, set) in coeffs.sets.iter().enumerate() {
        let mut map: HashMap<(u32, Vec<i64>), f64> = HashMap::new();
        if only.is_none() || only == Some(i) {
            for (j, _, k, c) in set.iter() {
                if c == 0.0 {
                    continue;
                }
                let w = weight(j, c);
                let slot = map.entry((j, representative(index, j, k))).or_insert(0.0);
                if take_max {
                    *slot = slot.max(w);
                } else {
                    *slot += w;
                }
            }
        }
        maps.push(map);
    }
    maps
}

/// The inner function of the F-norm: at each point the weighted q-sum (or
/// sup) of coefficients whose support set contains it, then the 1/q power.
fn square_function_field(
    system: &ManifoldFrameSystem,
    coeffs: &ManifoldCoefficients,
    params: &NormParams,
    grid: Arc<Grid>,
    only: Option<usize>,
) -> Result<SampledField> {
    let index = &system.frame.index;
    let d = index.d as f64;
    let (j0, jmax) = (index.j0, system.jmax());
    let s = params.s;
    let maps = match params.q {
        Some(q) => cell_maps(
            system,
            coeffs,
            only,
            |j, c| 2f64.powf(j as f64 * q * (s + 0.5 * d)) * c.abs().powf(q),
            false,
        ),
        None => cell_maps(
            system,
            coeffs,
            only,
            |j, c| 2f64.powf(j as f64 * (s + 0.5 * d)) * c.abs(),
            true,
        ),
    };
    let q = params.q;
    let out = SampledField::from_fn(grid, |x| {
        let mut acc = 0.0f64;
        for (i, map) in maps.iter().enumerate() {
            if map.is_empty() {
                continue;
            }
            let tr = &system.transports[i];
            let u = tr.chart.forward(x);
            let mut y = vec![0.0; u.len()];
            let mut inside = true;
            for (ax, &v) in u.iter().enumerate() {
                let w = v * tr.sigma;
                if w.abs() > 1.0 {
                    inside = false;
                    break;
                }
                y[ax] = w;
            }
            if !inside {
                continue;
            }
            for j in j0..=jmax {
                if let Some(&v) = map.get(&(j, cell_of(index, j, &y))) {
                    if q.is_some() {
                        acc += v;
                    } else {
                        acc = acc.max(v);
                    }
                }
            }
        }
        match q {
            Some(q) => acc.powf(1.0 / q),
            None => acc,
        }
    });
    Ok(out)
}

/// Discrete Triebel-Lizorkin norm on the manifold:
/// `|| (sum_{x,j,e,k} 2^{j q (s + d/2)} |c|^q chi_{Omega_{j,k,x}})^{1/q} ||_{L^p(M)}`,
/// evaluated by quadrature on the given manifold grid.
pub fn f_norm_manifold(
    system: &ManifoldFrameSystem,
    coeffs: &ManifoldCoefficients,
    params: &NormParams,
    grid: Arc<Grid>,
) -> Result<f64> {
    let field = square_function_field(system, coeffs, params, grid, None)?;
    lp_norm(&field, params.p)
}

/// The square-function frame norm of Eq. (5.8) type:
/// `|| (sum 2^{jd} |c|^2 chi_{Omega_{j,k,x}})^{1/2} ||_{L^p(M)}`. Kept as an
/// independent computation; it coincides with `f_norm_manifold` at s = 0,
/// q = 2 up to rounding.
pub fn lp_frame_norm(
    system: &ManifoldFrameSystem,
    coeffs: &ManifoldCoefficients,
    p: f64,
    grid: Arc<Grid>,
) -> Result<f64> {
    let index = &system.frame.index;
    let d = index.d as f64;
    let (j0, jmax) = (index.j0, system.jmax());
    let maps = cell_maps(
        system,
        coeffs,
        None,
        |j, c| 2f64.powf(j as f64 * 2.0 * (0.5 * d)) * c.abs().powf(2.0),
        false,
    );
    let field = SampledField::from_fn(grid, |x| {
        let mut acc = 0.0f64;
        for (i, map) in maps.iter().enumerate() {
            if map.is_empty() {
                continue;
            }
            let tr = &system.transports[i];
            let u = tr.chart.forward(x);
            let mut y = vec![0.0; u.len()];
            let mut inside = true;
            for (ax, &v) in u.iter().enumerate() {
                let w = v * tr.sigma;
                if w.abs() > 1.0 {
                    inside = false;
                    break;
                }
                y[ax] = w;
            }
            if !inside {
                continue;
            }
            for j in j0..=jmax {
                if let Some(&v) = map.get(&(j, cell_of(index, j, &y))) {
                    acc += v;
                }
            }
        }
        acc.powf(1.0 / 2.0)
    });
    lp_norm(&field, p)
}

/// Discrete Besov norm on the manifold: the plain nested sum
/// `(sum_{x,j} 2^{j (s + d/2 - d/p) q} sum_e (sum_k |c|^p)^{q/p})^{1/q}`.
pub fn b_norm_manifold(
    system: &ManifoldFrameSystem,
    coeffs: &ManifoldCoefficients,
    params: &NormParams,
) -> Result<f64> {
    let p = params.p;
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Parameter(format!("p = {p} outside (0, infinity)")));
    }
    let d = system.frame.index.d as f64;
    let w = |j: u32| 2f64.powf(j as f64 * (params.s + 0.5 * d - d / p));
    // inner[(x, j, e)] = sum_k |c|^p
    let mut inner_sums: HashMap<(usize, u32, u32), f64> = HashMap::new();
    for (x, set) in coeffs.sets.iter().enumerate() {
        for (j, e, _, c) in set.iter() {
            if c != 0.0 {
                *inner_sums.entry((x, j, e)).or_insert(0.0) += c.abs().powf(p);
            }
        }
    }
    match params.q {
        Some(q) => {
            let mut total = 0.0;
            for (&(_, j, _), &sum_k) in &inner_sums {
                total += w(j).powf(q) * sum_k.powf(q / p);
            }
            Ok(total.powf(1.0 / q))
        }
        None => {
            let mut sup = 0.0f64;
            for (&(_, j, _), &sum_k) in &inner_sums {
                sup = sup.max(w(j) * sum_k.powf(1.0 / p));
            }
            Ok(sup)
        }
    }
}

/// F-norm with the decay supremum over translations outside Lambda_j (always
/// zero for finite m, where the index sets are already compact).
pub fn fmu_norm_manifold(
    system: &ManifoldFrameSystem,
    coeffs: &ManifoldCoefficients,
    params: &DecayNormParams,
    grid: Arc<Grid>,
) -> Result<f64> {
    let base = f_norm_manifold(system, coeffs, &params.base, grid)?;
    let index = &system.frame.index;
    let mut sup = 0.0f64;
    for set in coeffs.sets.iter() {
        for (j, _, k, c) in set.iter() {
            if c == 0.0 || index.in_lambda(j, k) {
                continue;
            }
            let scale = 0.5f64.powi(j as i32);
            let dist = k.iter().map(|&ki| (ki as f64 * scale).abs()).fold(0.0f64, f64::max);
            let term = 2f64.powf(j as f64 * params.mu) * (dist + 1.0).powf(params.mu) * c.abs();
            sup = sup.max(term);
        }
    }
    Ok(base + sup)
}

/// Direct-sum diagnostic: the per-piece F-norm proxies for ||P_U f||, their
/// l^p aggregate, and its ratio to the whole-coefficient norm.
#[derive(Debug, Clone)]
pub struct DirectSumReport {
    pub piece_values: Vec<f64>,
    pub aggregate: f64,
    pub whole: f64,
    pub ratio: f64,
}

pub fn directsum_check(
    system: &ManifoldFrameSystem,
    coeffs: &ManifoldCoefficients,
    params: &NormParams,
    grid: Arc<Grid>,
) -> Result<DirectSumReport> {
    let p = params.p;
    let mut piece_values = Vec::with_capacity(system.len());
    for i in 0..system.len() {
        let field = square_function_field(system, coeffs, params, grid.clone(), Some(i))?;
        piece_values.push(lp_norm(&field, p)?);
    }
    let aggregate = piece_values.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p);
    let whole = f_norm_manifold(system, coeffs, params, grid)?;
    let ratio = if whole > 0.0 { aggregate / whole } else { f64::NAN };
    Ok(DirectSumReport { piece_values, aggregate, whole, ratio })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localframe::build_index;
    use crate::numerics::l2_norm;

    fn seeded(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).max(1);
        move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }
    }

    /// Random low-frequency trigonometric field on a flat manifold.
    fn random_flat_field(manifold: &ModelManifold, grid: Arc<Grid>, seed: u64) -> SampledField {
        let mut rng = seeded(seed);
        let d = manifold.d();
        let len = manifold.size();
        let mut modes = Vec::new();
        for _ in 0..6 {
            let freq: Vec<f64> =
                (0..d).map(|_| (rng() * 6.0).round() * 2.0 * PI / len).collect();
            let phase: Vec<f64> = (0..d).map(|_| rng() * 6.0).collect();
            let amp = rng();
            modes.push((freq, phase, amp));
        }
        SampledField::from_fn(grid, move |x| {
            modes
                .iter()
                .map(|(f, ph, a)| {
                    a * x
                        .iter()
                        .zip(f.iter().zip(ph))
                        .map(|(&xi, (&fi, &pi))| (fi * xi + pi).cos())
                        .product::<f64>()
                })
                .sum()
        })
    }

    /// Random smooth field on the sphere from a few solid harmonics.
    fn random_sphere_field(grid: Arc<Grid>, seed: u64) -> SampledField {
        let mut rng = seeded(seed);
        let coefs: Vec<f64> = (0..10).map(|_| rng()).collect();
        SampledField::from_fn(grid, move |p| {
            let (t, phi) = (p[0], p[1]);
            let rho = (1.0 - t * t).max(0.0).sqrt();
            let (x, y, z) = (rho * phi.cos(), rho * phi.sin(), -t);
            coefs[0]
                + coefs[1] * x
                + coefs[2] * y
                + coefs[3] * z
                + coefs[4] * x * y
                + coefs[5] * y * z
                + coefs[6] * x * z
                + coefs[7] * (x * x - y * y)
                + coefs[8] * z * z
                + coefs[9] * x * y * z
        })
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    // -- covers and decompositions ------------------------------------------

    #[test]
    fn unsupported_covers_are_rejected() {
        let torus = ModelManifold::torus(2, 2.0 * PI).unwrap();
        let sphere = ModelManifold::sphere();
        let circle = ModelManifold::circle(2.0 * PI).unwrap();
        let bands = CoverShape::Bands {
            t_edges: vec![-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0],
            sectors: vec![1, 4, 1],
        };
        assert!(matches!(
            decomposition_of_identity(&torus, &bands, 2.0),
            Err(Error::UnsupportedCover(_))
        ));
        assert!(matches!(
            decomposition_of_identity(&sphere, &CoverShape::Arcs(2), 2.0),
            Err(Error::UnsupportedCover(_))
        ));
        assert!(matches!(
            decomposition_of_identity(&circle, &CoverShape::Arcs(1), 2.0),
            Err(Error::UnsupportedCover(_))
        ));
        // Subdivided polar cap.
        let bad = CoverShape::Bands {
            t_edges: vec![-1.0, 0.0, 1.0],
            sectors: vec![2, 1],
        };
        assert!(matches!(
            decomposition_of_identity(&sphere, &bad, 2.0),
            Err(Error::UnsupportedCover(_))
        ));
        assert!(decomposition_of_identity(&circle, &CoverShape::Arcs(2), 2.0).is_ok());
    }

    /// P^2 = P, P_U P_U' = 0, sum_U P_U = I, self-adjointness and the p = 2
    /// Parseval identity, on both flat models.
    #[test]
    fn decomposition_algebra_flat() {
        let cases: Vec<(ModelManifold, CoverShape, Vec<usize>)> = vec![
            (
                ModelManifold::circle(2.0 * PI).unwrap(),
                CoverShape::Arcs(2),
                vec![2048],
            ),
            (
                ModelManifold::torus(2, 2.0 * PI).unwrap(),
                CoverShape::Boxes(vec![2, 2]),
                vec![192, 192],
            ),
        ];
        for (manifold, shape, res) in cases {
            let dec = decomposition_of_identity(&manifold, &shape, 2.0).unwrap();
            let grid = manifold.grid(&res).unwrap();
            for seed in [1u64, 2] {
                let f = random_flat_field(&manifold, grid.clone(), seed);
                let g = random_flat_field(&manifold, grid.clone(), seed + 100);
                let nf = l2_norm(&f);
                let mut total = SampledField::zeros(grid.clone());
                let mut energy = 0.0;
                for i in 0..dec.len() {
                    let pf = dec.apply(i, &f).unwrap();
                    let ppf = dec.apply(i, &pf).unwrap();
                    assert!(l2_norm(&ppf.sub(&pf)) < 1e-6 * nf, "idempotence");
                    let pg = dec.apply(i, &g).unwrap();
                    let pair = (inner(&pf, &g) - inner(&f, &pg)).abs();
                    assert!(pair < 1e-6 * nf * l2_norm(&g), "self-adjointness");
                    for i2 in 0..dec.len() {
                        if i2 != i {
                            let cross = dec.apply(i2, &pf).unwrap();
                            assert!(l2_norm(&cross) < 1e-6 * nf, "disjointness");
                        }
                    }
                    energy += l2_norm(&pf).powi(2);
                    total = total.add(&pf);
                }
                assert!(l2_norm(&total.sub(&f)) < 1e-6 * nf, "completeness");
                assert!(rel(energy, nf * nf) < 1e-6, "p=2 Parseval: {energy} vs {}", nf * nf);
            }
        }
    }

    #[test]
    fn decomposition_algebra_sphere() {
        let manifold = ModelManifold::sphere();
        let dec =
            decomposition_of_identity(&manifold, &default_cover_shape(&manifold), 2.0).unwrap();
        assert_eq!(dec.len(), 6);
        let grid = manifold.grid(&[193, 384]).unwrap();
        let f = random_sphere_field(grid.clone(), 7);
        let g = random_sphere_field(grid.clone(), 8);
        let nf = l2_norm(&f);
        let mut total = SampledField::zeros(grid.clone());
        let mut energy = 0.0;
        for i in 0..dec.len() {
            let pf = dec.apply(i, &f).unwrap();
            let ppf = dec.apply(i, &pf).unwrap();
            assert!(l2_norm(&ppf.sub(&pf)) < 1e-6 * nf, "idempotence");
            let pg = dec.apply(i, &g).unwrap();
            assert!(
                (inner(&pf, &g) - inner(&f, &pg)).abs() < 1e-6 * nf * l2_norm(&g),
                "self-adjointness"
            );
            for i2 in (i + 1)..dec.len() {
                let cross = dec.apply(i2, &pf).unwrap();
                assert!(l2_norm(&cross) < 1e-6 * nf, "disjointness {i} {i2}");
            }
            energy += l2_norm(&pf).powi(2);
            total = total.add(&pf);
        }
        assert!(l2_norm(&total.sub(&f)) < 1e-6 * nf, "completeness");
        assert!(rel(energy, nf * nf) < 1e-6, "p=2 Parseval");
    }

    // -- transport ----------------------------------------------------------

    #[test]
    fn transport_isometry_and_duality_torus() {
        let manifold = ModelManifold::torus(2, 2.0 * PI).unwrap();
        let chart = exp_chart(&manifold, &[1.0, 2.0], 2.0).unwrap();
        let f = |y: &[f64]| {
            let r2: f64 = y.iter().map(|v| v * v).sum();
            if r2 >= 9.0 {
                0.0
            } else {
                (-(r2) / 2.0).exp() * (r2 / 9.0 - 1.0).powi(4)
            }
        };
        let h = |x: &[f64]| (x[0]).cos() + 0.5 * (x[1] - 1.0).sin() + 0.25 * (x[0] + x[1]).cos();

        // Isometry of T^2.
        let op = transport_op(chart.clone(), 2.0).unwrap();
        let mgrid = manifold.grid(&[256, 256]).unwrap();
        let tf = op.apply_fn(&f, mgrid).unwrap();
        let rgrid = Arc::new(Grid::new(&[(-3.2, 3.2), (-3.2, 3.2)], 96, &[false, false]).unwrap());
        let f_field = SampledField::from_fn(rgrid, |y| f(y));
        let ratio = l2_norm(&tf) / l2_norm(&f_field);
        assert!((ratio - 1.0).abs() < 1e-8, "isometry ratio {ratio}");

        // Duality at p in {1.5, 2, 3}.
        for p in [1.5, 2.0, 3.0] {
            let tol = if p == 2.0 { 1e-8 } else { 1e-7 };
            let res = transport_duality_check(&chart, p, &f, &h).unwrap();
            assert!(res < tol, "duality residual {res} at p = {p}");
        }
    }

    #[test]
    fn transport_isometry_sphere() {
        let manifold = ModelManifold::sphere();
        let chart = exp_chart(&manifold, &[0.2, 1.3], 2.0).unwrap();
        let f = |y: &[f64]| {
            let r2: f64 = y.iter().map(|v| v * v).sum();
            if r2 >= 9.0 {
                0.0
            } else {
                (-(r2) / 1.5).exp() * (r2 / 9.0 - 1.0).powi(4)
            }
        };
        let op = transport_op(chart, 2.0).unwrap();
        let mgrid = manifold.grid(&[257, 512]).unwrap();
        let tf = op.apply_fn(&f, mgrid).unwrap();
        let rgrid =
            Arc::new(Grid::new(&[(-4.3, 4.3), (-4.3, 4.3)], 128, &[false, false]).unwrap());
        let f_field = SampledField::from_fn(rgrid, |y| f(y));
        let ratio = l2_norm(&tf) / l2_norm(&f_field);
        assert!((ratio - 1.0).abs() < 1e-4, "sphere isometry ratio {ratio}");
    }

    #[test]
    fn transport_support_precondition() {
        let manifold = ModelManifold::circle(2.0 * PI).unwrap();
        let chart = exp_chart(&manifold, &[0.0], 2.5).unwrap();
        let op = transport_op(chart, 2.0).unwrap();
        let rgrid = Arc::new(Grid::new(&[(-4.0, 4.0)], 64, &[false]).unwrap());
        let mgrid = manifold.grid(&[512]).unwrap();
        let bad = SampledField::from_fn(rgrid.clone(), |y| (-(y[0] - 3.4).powi(2) / 0.02).exp());
        assert!(matches!(transport(&op, &bad, mgrid.clone()), Err(Error::Domain(_))));
        let good = SampledField::from_fn(rgrid, |y| {
            if y[0].abs() >= 2.0 {
                0.0
            } else {
                (-(y[0] * y[0]) / 0.2).exp() * (y[0] * y[0] / 4.0 - 1.0).powi(4)
            }
        });
        assert!(transport(&op, &good, mgrid).is_ok());
    }

    // -- system construction ------------------------------------------------

    fn circle_system(p: f64, m: Smoothness, jmax_offset: u32) -> ManifoldFrameSystem {
        let manifold = ModelManifold::circle(2.0 * PI).unwrap();
        let dec =
            decomposition_of_identity(&manifold, &default_cover_shape(&manifold), p).unwrap();
        let index = match m {
            Smoothness::Finite(m) => build_index(1, Smoothness::Finite(m), None, 0.49, None, 3),
            Smoothness::Infinite => build_index(1, Smoothness::Infinite, None, 0.49, None, 3),
        }
        .unwrap();
        let jmax = index.j0 + jmax_offset;
        build_wavelet_system(dec, index, jmax, None).unwrap()
    }

    #[test]
    fn system_build_and_scale_validation() {
        let system = circle_system(2.0, Smoothness::Finite(1), 4);
        assert_eq!(system.len(), 2);
        assert_eq!(system.index().j0, 5);
        for i in 0..system.len() {
            for &(lo, hi) in system.support(i) {
                assert!(-1.0 < lo && lo < hi && hi < 1.0, "support inside Q");
            }
        }

        // A nominal radius inconsistent with the folded pieces is rejected.
        let manifold = ModelManifold::circle(2.0 * PI).unwrap();
        let dec =
            decomposition_of_identity(&manifold, &default_cover_shape(&manifold), 2.0).unwrap();
        let index = build_index(1, Smoothness::Finite(1), None, 0.49, None, 3).unwrap();
        let err = build_wavelet_system(dec, index.clone(), index.j0 + 1, Some(1.0));
        assert!(matches!(err, Err(Error::Parameter(_))));

        // Dimension mismatch between frame and manifold.
        let dec2 =
            decomposition_of_identity(&manifold, &default_cover_shape(&manifold), 2.0).unwrap();
        let index2 = build_index(2, Smoothness::Finite(1), None, 0.49, None, 3).unwrap();
        assert!(matches!(
            build_wavelet_system(dec2, index2, 9, None),
            Err(Error::Parameter(_))
        ));
    }

    // -- analysis / synthesis ------------------------------------------------

    #[test]
    fn circle_parseval_and_reconstruction() {
        let system = circle_system(2.0, Smoothness::Finite(1), 4);
        let manifold = system.manifold().clone();
        let grid = manifold.grid(&[2048]).unwrap();
        let f = SampledField::from_fn(grid.clone(), |x| {
            (x[0]).sin() + 0.4 * (3.0 * x[0]).cos() + (-((x[0] - 2.0).powi(2)) / 0.3).exp()
        });
        let coeffs = m_analyze(&system, &f).unwrap();
        let nf2 = l2_norm(&f).powi(2);
        let residual = (coeffs.energy() - nf2).abs() / nf2;
        assert!(residual < 1e-3, "Parseval residual {residual}");
        // Coarser truncation cannot do better.
        let coarse = coeffs.truncated(system.jmax() - 1);
        let coarse_res = (coarse.energy() - nf2).abs() / nf2;
        assert!(residual <= coarse_res * 1.05, "residual grows under truncation");

        let rec = m_synthesize(&system, &coeffs, grid).unwrap();
        let err = l2_norm(&rec.sub(&f)) / nf2.sqrt();
        assert!(err < 1e-3, "reconstruction error {err}");
    }

    #[test]
    fn circle_meyer_system() {
        let system = circle_system(2.0, Smoothness::Infinite, 4);
        assert_eq!(system.index().j0, 0);
        let manifold = system.manifold().clone();
        let grid = manifold.grid(&[2048]).unwrap();
        let f = SampledField::from_fn(grid.clone(), |x| {
            (x[0]).cos() + 0.3 * (2.0 * x[0] + 1.0).sin()
        });
        let coeffs = m_analyze(&system, &f).unwrap();
        let nf2 = l2_norm(&f).powi(2);
        let residual = (coeffs.energy() - nf2).abs() / nf2;
        assert!(residual < 1e-3, "Meyer Parseval residual {residual}");

        // The decay-weighted norm dominates the plain F-norm and is finite.
        let params = NormParams::new(0.0, 2.0, Some(2.0)).unwrap();
        let base = f_norm_manifold(&system, &coeffs, &params, grid.clone()).unwrap();
        let fmu = fmu_norm_manifold(
            &system,
            &coeffs,
            &DecayNormParams::new(params, 1.5).unwrap(),
            grid,
        )
        .unwrap();
        assert!(fmu.is_finite() && fmu >= base);
    }

    fn torus_bump(grid: Arc<Grid>) -> SampledField {
        SampledField::from_fn(grid, |x| {
            let dx = x[0] - 3.0;
            let dy = x[1] - 2.5;
            (-(dx * dx + dy * dy) / 0.8).exp()
        })
    }

    #[test]
    fn torus_parseval_and_reconstruction() {
        let manifold = ModelManifold::torus(2, 2.0 * PI).unwrap();
        let dec =
            decomposition_of_identity(&manifold, &default_cover_shape(&manifold), 2.0).unwrap();
        let index = build_index(2, Smoothness::Finite(1), None, 0.49, None, 3).unwrap();
        let system = build_wavelet_system(dec, index.clone(), index.j0 + 4, None).unwrap();
        let grid = manifold.grid(&[256, 256]).unwrap();
        let f = torus_bump(grid.clone());
        let coeffs = m_analyze(&system, &f).unwrap();
        let nf2 = l2_norm(&f).powi(2);
        let residual = (coeffs.energy() - nf2).abs() / nf2;
        assert!(residual < 1e-3, "torus Parseval residual {residual}");
        let rec = m_synthesize(&system, &coeffs, grid).unwrap();
        let err = l2_norm(&rec.sub(&f)) / nf2.sqrt();
        assert!(err < 1e-3, "torus reconstruction error {err}");
    }

    #[test]
    fn torus_dual_exponent_reconstruction() {
        let manifold = ModelManifold::torus(2, 2.0 * PI).unwrap();
        let dec =
            decomposition_of_identity(&manifold, &default_cover_shape(&manifold), 1.5).unwrap();
        let index = build_index(2, Smoothness::Finite(1), None, 0.49, None, 3).unwrap();
        let system = build_wavelet_system(dec, index.clone(), index.j0 + 4, None).unwrap();
        let grid = manifold.grid(&[128, 128]).unwrap();
        let f = torus_bump(grid.clone());
        let coeffs = m_analyze(&system, &f).unwrap();
        let rec = m_synthesize(&system, &coeffs, grid).unwrap();
        let diff = rec.sub(&f);
        let err = lp_norm(&diff, 1.5).unwrap() / lp_norm(&f, 1.5).unwrap();
        assert!(err < 5e-3, "p = 1.5 reconstruction error {err}");
    }

    #[test]
    fn sphere_y10_parseval() {
        let manifold = ModelManifold::sphere();
        let dec =
            decomposition_of_identity(&manifold, &default_cover_shape(&manifold), 2.0).unwrap();
        let index = build_index(2, Smoothness::Finite(1), None, 0.49, None, 3).unwrap();
        let system = build_wavelet_system(dec, index.clone(), index.j0 + 4, None).unwrap();
        let grid = manifold.grid(&[257, 512]).unwrap();
        let amp = (3.0 / (4.0 * PI)).sqrt();
        let f = SampledField::from_fn(grid, |p| -amp * p[0]);
        let coeffs = m_analyze(&system, &f).unwrap();
        let nf2 = l2_norm(&f).powi(2);
        let ratio = coeffs.energy() / nf2;
        assert!((0.999..=1.001).contains(&ratio), "Y_10 Parseval ratio {ratio}");
    }

    // -- norms ---------------------------------------------------------------

    #[test]
    fn single_coefficient_norm_oracles() {
        let system = circle_system(2.0, Smoothness::Finite(1), 4);
        let j = 6u32;
        let mut set = CoefficientSet::new(system.index().clone(), system.jmax());
        set.insert(j, 1, vec![0], 1.0).unwrap();
        let empty = CoefficientSet::new(system.index().clone(), system.jmax());
        let coeffs = ManifoldCoefficients { sets: vec![set, empty] };

        // Fine grid so the quadrature resolves the indicator cell.
        let grid = system.manifold().grid(&[65536]).unwrap();
        let sigma = system.sigma(0);
        let vol = 0.5f64.powi(j as i32) / (system.index().lambda as f64 * sigma);
        let expected = 2f64.powf(j as f64 * 0.5) * vol.sqrt();
        let value = lp_frame_norm(&system, &coeffs, 2.0, grid.clone()).unwrap();
        assert!(rel(value, expected) < 0.05, "lp_frame_norm {value} vs {expected}");

        // The F-norm at s = 0, q = 2 is the same functional.
        let params = NormParams::new(0.0, 2.0, Some(2.0)).unwrap();
        let fval = f_norm_manifold(&system, &coeffs, &params, grid).unwrap();
        assert!(rel(fval, value) < 1e-10, "f-norm {fval} vs frame norm {value}");

        // The B-norm is the bare weight.
        let s = 0.3;
        let p = 2.5;
        let bparams = NormParams::new(s, p, Some(p)).unwrap();
        let bval = b_norm_manifold(&system, &coeffs, &bparams).unwrap();
        let bexp = 2f64.powf(j as f64 * (s + 0.5 - 1.0 / p));
        assert!(rel(bval, bexp) < 1e-12, "b-norm {bval} vs {bexp}");
    }

    #[test]
    fn f_norm_equivalence_and_directsum_circle() {
        let system = circle_system(2.0, Smoothness::Finite(1), 4);
        let manifold = system.manifold().clone();
        let grid = manifold.grid(&[2048]).unwrap();
        let f = SampledField::from_fn(grid.clone(), |x| {
            (2.0 * x[0]).sin() + 0.5 * (x[0] + 0.7).cos()
        });
        let coeffs = m_analyze(&system, &f).unwrap();
        let params = NormParams::new(0.0, 2.0, Some(2.0)).unwrap();
        let fval = f_norm_manifold(&system, &coeffs, &params, grid.clone()).unwrap();
        let frame = lp_frame_norm(&system, &coeffs, 2.0, grid.clone()).unwrap();
        assert!(rel(fval, frame) < 1e-10, "F vs Eq.(5.8): {fval} vs {frame}");
        let nf = l2_norm(&f);
        assert!(fval / nf > 0.25 && fval / nf < 4.0, "norm equivalence ratio {}", fval / nf);

        // A bump inside one arc loads only that piece; the aggregate then
        // matches the whole-norm exactly.
        let bump = SampledField::from_fn(grid.clone(), |x| {
            let dx = x[0] - 0.5 * PI;
            (-(dx * dx) / 0.05).exp()
        });
        let bcoeffs = m_analyze(&system, &bump).unwrap();
        let report = directsum_check(&system, &bcoeffs, &params, grid).unwrap();
        assert!((report.ratio - 1.0).abs() < 1e-6, "direct-sum ratio {}", report.ratio);
        assert!(report.piece_values[1] < 1e-8 * report.piece_values[0]);
    }
}
