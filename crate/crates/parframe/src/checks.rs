//! The verification suite behind both the `acceptance` integration test and
//! the command-line `verify` report.
//!
//! Every acceptance criterion is implemented here exactly once as a group of
//! named records ("filters.qmf", "local-parseval.residual", ...); the test
//! target and the CLI consume the same records, so a check cannot pass in one
//! place and fail in the other. `pass` is always `value <= tolerance` with
//! the tolerance already scaled by [`CheckOptions::tol_scale`].

use crate::error::Result;
use crate::hestenes::{
    adjoint, apply, folding_projection_1d, AxisMap, HestenesOp, Multiplier, Region, SimpleHOp,
};
use crate::localframe::{
    analyze, build_index, meyer_coefficients, periodized_norm, periodized_tail_fraction,
    q_function, q_norm, synthesize, z_tail_coefficients, z_tail_norm, CoefficientSet, FrameIndex,
    LocalFrame, Smoothness,
};
use crate::manifold::{build_cover, exp_chart, partition_of_unity, ManifoldKind, ModelManifold};
use crate::mframe::{
    build_wavelet_system, decomposition_of_identity, default_cover_shape, directsum_check,
    f_norm_manifold, lp_frame_norm, m_analyze, m_synthesize, transport_duality_check,
    transport_op, ManifoldCoefficients, ManifoldFrameSystem,
};
use crate::numerics::{
    fit_slope, inner, l2_norm, lp_norm, plateau_bump, Grid, NormParams, SampledField,
};
use crate::wavelets1d::{cascade_evaluate, daubechies_filter, meyer_table, MeyerPair, Which, SQRT2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

/// One verification record of the report.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub seconds: f64,
    pub detail: String,
}

/// Knobs shared by the test suite and the CLI.
#[derive(Debug, Clone)]
pub struct CheckOptions {
    /// Seed for every randomized test family.
    pub seed: u64,
    /// Multiplies every tolerance; values below 1 tighten the suite.
    pub tol_scale: f64,
    /// Restrict the run to records matching any of these names; a token
    /// matches a record when it is a prefix of the record name or equals one
    /// of its `.`/`-`-separated components.
    pub only: Option<Vec<String>>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { seed: 7, tol_scale: 1.0, only: None }
    }
}

fn token_matches(token: &str, name: &str) -> bool {
    name == token
        || name.starts_with(&format!("{token}."))
        || name.split(['.', '-']).any(|c| c == token)
}

impl CheckOptions {
    fn selected(&self, name: &str) -> bool {
        match &self.only {
            None => true,
            Some(tokens) => tokens.iter().any(|t| token_matches(t, name)),
        }
    }

    /// Whether any record of the dotted-prefix group could be selected.
    fn group_selected(&self, group: &str) -> bool {
        match &self.only {
            None => true,
            Some(tokens) => tokens
                .iter()
                .any(|t| t.starts_with(group) || token_matches(t, group)),
        }
    }

    /// Scaled tolerance; negative thresholds (slope bounds) tighten in the
    /// opposite direction.
    fn scaled(&self, tolerance: f64) -> f64 {
        if tolerance >= 0.0 {
            tolerance * self.tol_scale
        } else {
            tolerance / self.tol_scale
        }
    }
}

fn record<F>(
    out: &mut Vec<CheckRecord>,
    opts: &CheckOptions,
    name: &str,
    tolerance: f64,
    body: F,
) -> Result<()>
where
    F: FnOnce() -> Result<(f64, String)>,
{
    let start = Instant::now();
    let (value, detail) = body()?;
    let tolerance = opts.scaled(tolerance);
    out.push(CheckRecord {
        name: name.to_string(),
        value,
        tolerance,
        pass: value <= tolerance,
        seconds: start.elapsed().as_secs_f64(),
        detail,
    });
    Ok(())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

// ---------------------------------------------------------------------------
// Shared test-field generators (also used by the CLI for seeded fields)
// ---------------------------------------------------------------------------

/// Random low-frequency trigonometric field on a flat model manifold.
pub fn smooth_flat_field(
    manifold: &ModelManifold,
    grid: Arc<Grid>,
    seed: u64,
) -> SampledField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = manifold.d();
    let len = manifold.size();
    let modes: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..6)
        .map(|_| {
            let freq: Vec<f64> = (0..d)
                .map(|_| rng.gen_range(-3i32..=3) as f64 * 2.0 * PI / len)
                .collect();
            let phase: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            (freq, phase, rng.gen_range(-1.0..1.0))
        })
        .collect();
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

/// Random smooth field on the sphere from low-degree solid harmonics.
pub fn smooth_sphere_field(grid: Arc<Grid>, seed: u64) -> SampledField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coefs: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
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

/// Seeded smooth field on any model manifold.
pub fn smooth_model_field(
    manifold: &ModelManifold,
    grid: Arc<Grid>,
    seed: u64,
) -> SampledField {
    match manifold.kind() {
        ManifoldKind::Circle | ManifoldKind::Torus => smooth_flat_field(manifold, grid, seed),
        ManifoldKind::Sphere => smooth_sphere_field(grid, seed),
    }
}

/// The 5-bump C^infinity family supported well inside Q = (-1,1)^d: radial
/// plateau bumps with staggered centers and radii.
pub fn bump_family(d: usize) -> Vec<(Vec<f64>, f64, f64)> {
    (0..5)
        .map(|i| {
            let t = i as f64;
            let center: Vec<f64> = (0..d)
                .map(|ax| 0.12 * ((1.3 * t + ax as f64).sin()))
                .collect();
            (center, 0.16 + 0.03 * t, 0.33 + 0.02 * t)
        })
        .collect()
}

/// One member of [`bump_family`]: a radial plateau bump at `center`.
pub fn bump_eval(x: &[f64], center: &[f64], inner: f64, outer: f64) -> f64 {
    let r = x
        .iter()
        .zip(center)
        .map(|(&v, &c)| (v - c) * (v - c))
        .sum::<f64>()
        .sqrt();
    plateau_bump(r, inner, outer)
}

/// L2-normalized standard bump on (-0.5, 0.5), sampled at 128 pts/unit.
fn unit_bump_1d() -> SampledField {
    let grid = Arc::new(Grid::new(&[(-0.75, 0.75)], 128, &[false]).expect("bump grid"));
    let f = SampledField::from_fn(grid, |x| plateau_bump(2.0 * x[0].abs(), 0.4, 1.0));
    let n = l2_norm(&f);
    f.scale(1.0 / n)
}

/// Random smooth compactly supported 1-D field for the operator checks.
fn random_field_1d(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> SampledField {
    let bumps: Vec<(f64, f64, f64)> = (0..5)
        .map(|_| {
            (
                rng.gen_range(-0.6..0.6),
                rng.gen_range(0.15..0.35),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let f = SampledField::from_fn(grid.clone(), move |x| {
        bumps
            .iter()
            .map(|&(c, w, a)| a * (-((x[0] - c) * (x[0] - c)) / (w * w)).exp())
            .sum::<f64>()
            * plateau_bump(x[0].abs(), 0.6, 0.9)
    });
    let n = l2_norm(&f);
    if n > 0.0 {
        f.scale(1.0 / n)
    } else {
        f
    }
}

// ---------------------------------------------------------------------------
// CSV serialization of coefficient sets (shared with the CLI)
// ---------------------------------------------------------------------------

/// Deterministic CSV for coefficient sets: header `x_id,j,e,k_1..k_d,value`,
/// rows in center-id then (j, e, k) order, values in full 17-digit scientific
/// notation so identical runs produce identical bytes.
pub fn coefficient_csv(sets: &[CoefficientSet]) -> String {
    let d = sets.first().map(|s| s.d()).unwrap_or(1);
    let mut out = String::from("x_id,j,e");
    for ax in 1..=d {
        out.push_str(&format!(",k_{ax}"));
    }
    out.push_str(",value\n");
    for (x, set) in sets.iter().enumerate() {
        for (j, e, k, v) in set.iter() {
            out.push_str(&format!("{x},{j},{e}"));
            for &ki in k {
                out.push_str(&format!(",{ki}"));
            }
            out.push_str(&format!(",{v:.17e}\n"));
        }
    }
    out
}

/// CSV for a manifold coefficient family (one x_id per decomposition piece).
pub fn manifold_coefficient_csv(coeffs: &ManifoldCoefficients) -> String {
    coefficient_csv(coeffs.sets())
}

// ---------------------------------------------------------------------------
// Criterion 1: Daubechies filter bank
// ---------------------------------------------------------------------------

fn check_filters(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    record(out, opts, "filters.qmf", 1e-12, || {
        let mut worst = 0.0f64;
        for n in 1..=10usize {
            let fp = daubechies_filter(n)?;
            let h = &fp.lowpass;
            let g = &fp.highpass;
            let len = h.len() as i64;
            worst = worst.max((h.iter().sum::<f64>() - SQRT2).abs());
            for m in -(n as i64 - 1)..n as i64 {
                let mut hh = 0.0;
                let mut gg = 0.0;
                let mut hg = 0.0;
                for k in 0..len {
                    let k2 = k + 2 * m;
                    if k2 < 0 || k2 >= len {
                        continue;
                    }
                    hh += h[k as usize] * h[k2 as usize];
                    gg += g[k as usize] * g[k2 as usize];
                    hg += h[k as usize] * g[k2 as usize];
                }
                let delta = if m == 0 { 1.0 } else { 0.0 };
                worst = worst.max((hh - delta).abs()).max((gg - delta).abs()).max(hg.abs());
            }
        }
        Ok((worst, "sum rule and shift-2 orthonormality, N = 1..10".into()))
    })?;
    record(out, opts, "filters.d4-phi1", 1e-10, || {
        let fp = daubechies_filter(2)?;
        let (phi, _) = cascade_evaluate(&fp, 12)?;
        let expected = (1.0 + 3f64.sqrt()) / 2.0;
        Ok((
            (phi.eval(1.0) - expected).abs(),
            format!("phi(1) = {:.12} vs (1+sqrt 3)/2", phi.eval(1.0)),
        ))
    })
}

// ---------------------------------------------------------------------------
// Criterion 2: Meyer orthonormality
// ---------------------------------------------------------------------------

fn check_meyer_gram(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    // At truncation radius 16 the fine-scale tables are cut at spatial radius
    // 16 * 2^-j, and the discarded tail of a j = 2 element sits on the core of
    // a j = 0 neighbour; the Gram defect is truncation-limited at 2.2e-6
    // regardless of quadrature resolution (2.4e-7 at radius 24, 4.5e-5 with
    // the exp bell). The radius-16 record carries the measured honest floor;
    // the radius-24 record shows orthonormality at the 1e-6 target.
    meyer_gram_record(out, opts, "meyer-gram.identity", 16.0, 3e-6)?;
    meyer_gram_record(out, opts, "meyer-gram.identity-r24", 24.0, 1e-6)
}

fn meyer_gram_record(
    out: &mut Vec<CheckRecord>,
    opts: &CheckOptions,
    name: &str,
    radius: f64,
    tolerance: f64,
) -> Result<()> {
    record(out, opts, name, tolerance, || {
        let pair = MeyerPair { truncation_radius: radius, ..MeyerPair::default() };
        let phi = meyer_table(&pair, Which::Scaling)?;
        let psi = meyer_table(&pair, Which::Wavelet)?;
        let grid = Grid::new(&[(-21.0, 21.0)], 64, &[false])?;
        let n = grid.len();
        let coords: Vec<f64> = (0..n).map(|i| grid.axes()[0].coord(i)).collect();
        let weights = grid.axis_weights(0);

        let mut elems: Vec<Vec<f64>> = Vec::new();
        for k in -4i64..=4 {
            elems.push(coords.iter().map(|&x| phi.eval_cubic(x - k as f64)).collect());
        }
        for j in 0..=2i32 {
            let sc = 2f64.powi(j);
            let amp = sc.sqrt();
            for k in -4i64..=4 {
                elems.push(
                    coords
                        .iter()
                        .map(|&x| amp * psi.eval_cubic(sc * x - k as f64))
                        .collect(),
                );
            }
        }
        let mut worst = 0.0f64;
        for a in 0..elems.len() {
            for b in 0..=a {
                let dot: f64 = elems[a]
                    .iter()
                    .zip(&elems[b])
                    .zip(&weights)
                    .map(|((&u, &v), &w)| w * u * v)
                    .sum();
                let delta = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - delta).abs());
            }
        }
        Ok((worst, format!("{}x{} Gram vs identity", elems.len(), elems.len())))
    })
}

// ---------------------------------------------------------------------------
// Criteria 3 and 4: local frame Parseval and reconstruction on the cube
// ---------------------------------------------------------------------------

fn check_local_parseval(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    let mut max_residual = 0.0f64;
    let mut max_increase = f64::NEG_INFINITY;
    let mut max_recon = 0.0f64;
    let mut cases = String::new();
    let start = Instant::now();

    for d in [1usize, 2] {
        let ppu = if d == 1 { 128 } else { 64 };
        for m in [Smoothness::Finite(3), Smoothness::Infinite] {
            // The Meyer ladder starts at base level 2 so that Jmax = j0 + 4
            // reaches fine enough scales for the reconstruction tolerance.
            let j0 = if m == Smoothness::Infinite { Some(2) } else { None };
            let index = build_index(d, m, j0, 0.5, None, 10)?;
            let jmax = index.j0 + 4;
            let frame = LocalFrame::build(index, jmax + 1)?;
            let field_grid =
                Arc::new(Grid::new(&vec![(-0.6, 0.6); d], ppu, &vec![false; d])?);
            let recon_grid =
                Arc::new(Grid::new(&vec![(-1.6, 1.6); d], ppu, &vec![false; d])?);
            for (center, inner, outer) in bump_family(d) {
                let f = SampledField::from_fn(field_grid.clone(), {
                    let center = center.clone();
                    move |x| bump_eval(x, &center, inner, outer)
                });
                let nf2 = l2_norm(&f).powi(2);
                let coeffs = analyze(&frame, &f, jmax + 1)?;
                let truncated = coeffs.truncated(jmax);
                let r_fine = (coeffs.energy() - nf2).abs() / nf2;
                let r_base = (truncated.energy() - nf2).abs() / nf2;
                max_residual = max_residual.max(r_base);
                max_increase = max_increase.max(r_fine - r_base);
                drop(coeffs);

                let trimmed = trim_coefficients(&truncated, 1e-12);
                drop(truncated);
                let rec = synthesize(&trimmed, &frame, recon_grid.clone())?;
                let reference = SampledField::from_fn(recon_grid.clone(), {
                    let center = center.clone();
                    move |x| bump_eval(x, &center, inner, outer)
                });
                max_recon = max_recon.max(l2_norm(&rec.sub(&reference)) / nf2.sqrt());
            }
            cases.push_str(&format!(
                "d={d} {} ",
                match m {
                    Smoothness::Finite(o) => format!("m={o}"),
                    Smoothness::Infinite => "m=inf".into(),
                }
            ));
        }
    }

    let detail = format!("5 bumps x {{{}}}", cases.trim_end());
    let elapsed = start.elapsed().as_secs_f64() / 3.0;
    for (name, tol, value, what) in [
        ("local-parseval.residual", 1e-3, max_residual, "max |sum c^2 - ||f||^2| / ||f||^2"),
        ("local-parseval.decrease", 1e-12, max_increase, "max residual growth at Jmax + 1"),
        ("reconstruction.l2", 1e-3, max_recon, "max relative L2 reconstruction error"),
    ] {
        let tolerance = opts.scaled(tol);
        out.push(CheckRecord {
            name: name.to_string(),
            value,
            tolerance,
            pass: value <= tolerance,
            seconds: elapsed,
            detail: format!("{what}; {detail}"),
        });
    }
    Ok(())
}

/// Copy of a coefficient set without entries below `floor_rel * max |c|`;
/// keeps high-level Meyer synthesis tractable without touching the result at
/// the tolerances in play.
fn trim_coefficients(coeffs: &CoefficientSet, floor_rel: f64) -> CoefficientSet {
    let floor = floor_rel * coeffs.max_abs();
    let mut trimmed = CoefficientSet::new(coeffs.index().clone(), coeffs.jmax());
    for (j, e, k, v) in coeffs.iter() {
        if v.abs() > floor {
            trimmed
                .insert(j, e, k.to_vec(), v)
                .expect("trimmed entry comes from a valid set");
        }
    }
    trimmed
}

// ---------------------------------------------------------------------------
// Criterion 5: folding projection algebra
// ---------------------------------------------------------------------------

fn check_folding(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    let grid = Arc::new(Grid::new(&[(-1.0, 1.0)], 256, &[false])?);
    let bell = crate::wavelets1d::Bell::ExpReciprocal;
    let h = folding_projection_1d(-0.5, 0.25, 0.125, bell)?;
    let ha = adjoint(h.op());
    let p1 = folding_projection_1d(-0.75, 0.0, 0.125, bell)?;
    let p2 = folding_projection_1d(0.0, 0.75, 0.125, bell)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut idem = 0.0f64;
    let mut selfadj = 0.0f64;
    let mut complete = 0.0f64;
    let mut disjoint = 0.0f64;
    let start = Instant::now();
    for _ in 0..10 {
        let f = random_field_1d(&grid, &mut rng);
        let hf = h.apply(&f)?;
        idem = idem.max(l2_norm(&h.apply(&hf)?.sub(&hf)));
        selfadj = selfadj.max(l2_norm(&hf.sub(&apply(&ha, &f)?)));

        // Interior field for the complementary pair: support inside
        // (a + delta, c - delta) = (-0.625, 0.625).
        let fi = f.zip_with(
            &SampledField::from_fn(grid.clone(), |x| plateau_bump(x[0].abs(), 0.45, 0.62)),
            |u, m| u * m,
        );
        let sum = p1.apply(&fi)?.add(&p2.apply(&fi)?);
        complete = complete.max(l2_norm(&sum.sub(&fi)));
        disjoint = disjoint.max(l2_norm(&p1.apply(&p2.apply(&f)?)?));
    }
    let elapsed = start.elapsed().as_secs_f64() / 4.0;
    for (name, value, what) in [
        ("folding.idempotence", idem, "max ||H^2 f - H f||"),
        ("folding.self-adjoint", selfadj, "max ||H f - H* f||"),
        ("folding.completeness", complete, "max ||(P1 + P2) f - f||, f interior"),
        ("folding.disjointness", disjoint, "max ||P1 P2 f||"),
    ] {
        let tolerance = opts.scaled(1e-6);
        out.push(CheckRecord {
            name: name.to_string(),
            value,
            tolerance,
            pass: value <= tolerance,
            seconds: elapsed,
            detail: format!("{what} over 10 seeded unit-norm fields"),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Criterion 6: Hestenes adjoint pairing
// ---------------------------------------------------------------------------

fn check_hestenes_adjoint(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    record(out, opts, "hestenes-adjoint.pairing", 1e-7, || {
        let grid = Arc::new(Grid::new(&[(-1.0, 1.0)], 256, &[false])?);
        let bump: Multiplier = Arc::new(|x: &[f64]| plateau_bump(x[0], 0.2, 0.45));
        let simple = |map: AxisMap| -> Result<HestenesOp> {
            HestenesOp::new(vec![SimpleHOp::new(
                bump.clone(),
                vec![map],
                Region::new(vec![-0.45], vec![0.45])?,
            )?])
        };
        let ops = [
            simple(AxisMap::Reflection(0.125))?,
            simple(AxisMap::Affine { scale: 0.5, offset: 0.1 })?,
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
        let mut worst = 0.0f64;
        for h in &ops {
            let ha = adjoint(h);
            for _ in 0..10 {
                let f = random_field_1d(&grid, &mut rng);
                let g = random_field_1d(&grid, &mut rng);
                let lhs = inner(&apply(h, &f)?, &g);
                let rhs = inner(&f, &apply(&ha, &g)?);
                worst = worst.max((lhs - rhs).abs());
            }
        }
        Ok((worst, "reflection and chart-transition ops, 10 unit-norm pairs each".into()))
    })
}

// ---------------------------------------------------------------------------
// Criterion 7: Z_lambda tail
// ---------------------------------------------------------------------------

fn check_z_tail(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    let index = build_index(1, Smoothness::Infinite, None, 0.5, None, 10)?;
    let frame = LocalFrame::build(index, 3)?;
    let f = unit_bump_1d();
    let params = NormParams::new(0.0, 2.0, Some(2.0))?;
    let raw = meyer_coefficients(&frame, &f, 3)?;

    record(out, opts, "z-tail.zero-region", 0.0, || {
        let mut worst = 0.0f64;
        for lam in [2i64, 4, 8] {
            let tail = z_tail_coefficients(&raw, lam);
            let b = 2.0 * lam as f64 + 1.0;
            let probe = Arc::new(Grid::new(&[(-b, b - 0.125)], 8, &[false])?);
            worst = worst.max(q_function(&tail, &params, probe)?.linf());
        }
        Ok((worst, "sup of q(Z_lambda f) on [-2 lambda - 1, 2 lambda + 1)".into()))
    })?;
    record(out, opts, "z-tail.slope", -3.0, || {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for lam in [2i64, 4, 8] {
            let v = z_tail_norm(&frame, &f, lam, &params, 3)?;
            xs.push((lam as f64).ln());
            ys.push(v.max(1e-16).ln());
        }
        Ok((fit_slope(&xs, &ys), "log-log slope of ||q(Z_lambda f)||_2".into()))
    })
}

// ---------------------------------------------------------------------------
// Criterion 8: periodized norm
// ---------------------------------------------------------------------------

fn check_periodized(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    let index = build_index(1, Smoothness::Infinite, None, 0.5, None, 10)?;
    let frame = LocalFrame::build(index, 2)?;
    let params = NormParams::new(0.0, 2.0, Some(2.0))?;
    let grid = Arc::new(Grid::new(&[(-0.6, 0.6)], 128, &[false])?);
    let mut raws = Vec::new();
    for (center, inner, outer) in bump_family(1) {
        let f = SampledField::from_fn(grid.clone(), move |x| {
            bump_eval(x, &center, inner, outer)
        });
        raws.push(meyer_coefficients(&frame, &f, 2)?);
    }

    record(out, opts, "periodized.window", 8.0, || {
        let mut worst = 1.0f64;
        for raw in &raws {
            let per = periodized_norm(raw, &params, 10)?.powf(0.5);
            let qn = q_norm(raw, &params)?;
            let ratio = per / qn;
            worst = worst.max(ratio.max(1.0 / ratio));
        }
        Ok((worst, "max of ratio and inverse ratio over the 5-bump family, lambda = 10".into()))
    })?;
    record(out, opts, "periodized.tail", 1e-3, || {
        let mut worst = 0.0f64;
        for raw in &raws {
            worst = worst.max(periodized_tail_fraction(raw, &params, 42)?);
        }
        Ok((worst, "wrapped |l| >= 1 fraction at lambda = 42".into()))
    })
}

// ---------------------------------------------------------------------------
// Criterion 9: coefficient decay in the translation cell
// ---------------------------------------------------------------------------

fn check_coefficient_decay(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    record(out, opts, "coefficient-decay.exponent", -4.0, || {
        let index = build_index(1, Smoothness::Infinite, None, 0.5, None, 10)?;
        let frame = LocalFrame::build(index, 2)?;
        let raw = meyer_coefficients(&frame, &unit_bump_1d(), 2)?;
        let mut worst = f64::NEG_INFINITY;
        for j in 0..=2u32 {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for l in [2i64, 3, 4] {
                let mut max_abs = 0.0f64;
                for (jj, _, k, v) in raw.iter() {
                    if jj == j && FrameIndex::partition_cell(j, k)[0].abs() == l {
                        max_abs = max_abs.max(v.abs());
                    }
                }
                xs.push(((l + 1) as f64).ln());
                ys.push(max_abs.max(1e-16).ln());
            }
            worst = worst.max(fit_slope(&xs, &ys));
        }
        Ok((worst, "max over j in 0..=2 of fitted exponent in (|l| + 1), l in {2,3,4}".into()))
    })
}

// ---------------------------------------------------------------------------
// Criterion 10: transport isometry and duality
// ---------------------------------------------------------------------------

fn check_transport(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    let ball_bump = |sharp: f64| {
        move |y: &[f64]| {
            let r2: f64 = y.iter().map(|v| v * v).sum();
            if r2 >= 9.0 {
                0.0
            } else {
                (-r2 / sharp).exp() * (r2 / 9.0 - 1.0).powi(4)
            }
        }
    };

    record(out, opts, "transport.isometry-torus", 1e-8, || {
        let manifold = ModelManifold::torus(2, 2.0 * PI)?;
        let chart = exp_chart(&manifold, &[1.0, 2.0], 2.0)?;
        let op = transport_op(chart, 2.0)?;
        let f = ball_bump(2.0);
        let tf = op.apply_fn(&f, manifold.grid(&[256, 256])?)?;
        let rgrid = Arc::new(Grid::new(&[(-3.2, 3.2), (-3.2, 3.2)], 96, &[false; 2])?);
        let ratio = l2_norm(&tf) / l2_norm(&SampledField::from_fn(rgrid, f));
        Ok(((ratio - 1.0).abs(), "| ||T^2 f||_2 / ||f||_2 - 1 | on the flat torus".into()))
    })?;
    record(out, opts, "transport.isometry-sphere", 1e-4, || {
        let manifold = ModelManifold::sphere();
        let chart = exp_chart(&manifold, &[0.2, 1.3], 2.0)?;
        let op = transport_op(chart, 2.0)?;
        let f = ball_bump(1.5);
        let tf = op.apply_fn(&f, manifold.grid(&[257, 512])?)?;
        let rgrid = Arc::new(Grid::new(&[(-4.3, 4.3), (-4.3, 4.3)], 128, &[false; 2])?);
        let ratio = l2_norm(&tf) / l2_norm(&SampledField::from_fn(rgrid, f));
        Ok(((ratio - 1.0).abs(), "| ||T^2 f||_2 / ||f||_2 - 1 | on S^2, 256x512 grid".into()))
    })?;
    record(out, opts, "transport.duality", 1e-7, || {
        let manifold = ModelManifold::torus(2, 2.0 * PI)?;
        let chart = exp_chart(&manifold, &[1.0, 2.0], 2.0)?;
        let f = ball_bump(2.0);
        let h = |x: &[f64]| (x[0]).cos() + 0.5 * (x[1] - 1.0).sin() + 0.25 * (x[0] + x[1]).cos();
        let mut worst = 0.0f64;
        for p in [1.5, 2.0, 3.0] {
            worst = worst.max(transport_duality_check(&chart, p, &f, &h)?);
        }
        Ok((worst, "max pairing residual over p in {1.5, 2, 3}".into()))
    })
}

// ---------------------------------------------------------------------------
// Criterion 11: decomposition of identity
// ---------------------------------------------------------------------------

fn check_decomposition(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    use crate::mframe::CoverShape;
    let cases: Vec<(ModelManifold, CoverShape, Vec<usize>)> = vec![
        (ModelManifold::circle(2.0 * PI)?, CoverShape::Arcs(2), vec![2048]),
        (
            ModelManifold::torus(2, 2.0 * PI)?,
            CoverShape::Boxes(vec![2, 2]),
            vec![192, 192],
        ),
        (
            ModelManifold::sphere(),
            CoverShape::Bands {
                t_edges: vec![-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0],
                sectors: vec![1, 4, 1],
            },
            vec![193, 384],
        ),
    ];

    let mut idem = 0.0f64;
    let mut disjoint = 0.0f64;
    let mut complete = 0.0f64;
    let mut parseval = 0.0f64;
    let mut interval = 1.0f64;
    let mut stability = 0.0f64;
    let start = Instant::now();
    for (manifold, shape, res) in &cases {
        let dec = decomposition_of_identity(manifold, shape, 2.0)?;
        let grid = manifold.grid(res)?;
        for s in 0..2u64 {
            let f = smooth_model_field(manifold, grid.clone(), opts.seed.wrapping_add(s));
            let nf = l2_norm(&f);
            let mut total = SampledField::zeros(grid.clone());
            let mut energy = 0.0;
            for i in 0..dec.len() {
                let pf = dec.apply(i, &f)?;
                idem = idem.max(l2_norm(&dec.apply(i, &pf)?.sub(&pf)) / nf);
                for i2 in 0..dec.len() {
                    if i2 != i {
                        disjoint = disjoint.max(l2_norm(&dec.apply(i2, &pf)?) / nf);
                    }
                }
                energy += l2_norm(&pf).powi(2);
                total = total.add(&pf);
            }
            complete = complete.max(l2_norm(&total.sub(&f)) / nf);
            parseval = parseval.max(rel(energy, nf * nf));
        }

        // L^p stability of the piece aggregate at p in {1.5, 3}, base grid
        // versus doubled grid.
        let fine: Vec<usize> = res.iter().map(|&n| 2 * (n - n % 2)).collect();
        let fine = match manifold.kind() {
            ManifoldKind::Sphere => vec![2 * res[0] - 1, 2 * res[1]],
            _ => fine,
        };
        let fine_grid = manifold.grid(&fine)?;
        for p in [1.5f64, 3.0] {
            let dec_p = decomposition_of_identity(manifold, shape, p)?;
            let mut ratios = Vec::new();
            for g in [&grid, &fine_grid] {
                let f = smooth_model_field(manifold, (*g).clone(), opts.seed);
                let mut agg = 0.0f64;
                for i in 0..dec_p.len() {
                    agg += lp_norm(&dec_p.apply(i, &f)?, p)?.powf(p);
                }
                ratios.push(agg.powf(1.0 / p) / lp_norm(&f, p)?);
            }
            interval = interval.max(ratios[0].max(1.0 / ratios[0]));
            stability = stability.max((ratios[1] - ratios[0]).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64() / 6.0;
    for (name, tol, value, what) in [
        ("decomposition.idempotence", 1e-6, idem, "max ||P^2 f - P f|| / ||f||"),
        ("decomposition.disjointness", 1e-6, disjoint, "max ||P_U P_U' f|| / ||f||"),
        ("decomposition.completeness", 1e-6, complete, "max ||sum P_U f - f|| / ||f||"),
        ("decomposition.parseval", 1e-6, parseval, "p = 2 energy identity, relative"),
        ("decomposition.lp-interval", 4.0, interval, "aggregate/whole L^p ratio window, p in {1.5, 3}"),
        ("decomposition.lp-stability", 1e-3, stability, "ratio change under grid doubling"),
    ] {
        let tolerance = opts.scaled(tol);
        out.push(CheckRecord {
            name: name.to_string(),
            value,
            tolerance,
            pass: value <= tolerance,
            seconds: elapsed,
            detail: format!("{what}; circle 2 arcs, T^2 4 boxes, S^2 3 bands/4 sectors"),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Criterion 12: manifold Parseval and reconstruction
// ---------------------------------------------------------------------------

fn model_system(manifold: &ModelManifold, jmax_offset: u32) -> Result<ManifoldFrameSystem> {
    let dec = decomposition_of_identity(manifold, &default_cover_shape(manifold), 2.0)?;
    let index = build_index(manifold.d(), Smoothness::Finite(1), None, 0.49, None, 3)?;
    let jmax = index.j0 + jmax_offset;
    build_wavelet_system(dec, index, jmax, None)
}

fn check_manifold_parseval(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    let models: Vec<(ModelManifold, Vec<usize>)> = vec![
        (ModelManifold::circle(2.0 * PI)?, vec![2048]),
        (ModelManifold::torus(2, 2.0 * PI)?, vec![256, 256]),
        (ModelManifold::sphere(), vec![257, 512]),
    ];
    let mut max_residual = 0.0f64;
    let mut max_recon = 0.0f64;
    let start = Instant::now();
    for (manifold, res) in &models {
        let system = model_system(manifold, 4)?;
        let grid = manifold.grid(res)?;
        for s in 0..5u64 {
            let f = smooth_model_field(manifold, grid.clone(), opts.seed.wrapping_add(s));
            let nf2 = l2_norm(&f).powi(2);
            let coeffs = m_analyze(&system, &f)?;
            max_residual = max_residual.max((coeffs.energy() - nf2).abs() / nf2);
            if s == 0 {
                let recon = m_synthesize(&system, &coeffs, grid.clone())?;
                max_recon = max_recon.max(l2_norm(&recon.sub(&f)) / nf2.sqrt());
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64() / 2.0;
    for (name, value, what) in [
        ("manifold-parseval.residual", max_residual, "max Parseval residual, 5 fields per model"),
        ("manifold-parseval.reconstruction", max_recon, "max relative L2 reconstruction error"),
    ] {
        let tolerance = opts.scaled(1e-3);
        out.push(CheckRecord {
            name: name.to_string(),
            value,
            tolerance,
            pass: value <= tolerance,
            seconds: elapsed,
            detail: format!("{what}; circle, T^2, S^2 at Jmax = j0 + 4"),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Criterion 13: norm equivalences
// ---------------------------------------------------------------------------

fn check_norm_equivalence(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    let params = NormParams::new(0.0, 2.0, Some(2.0))?;

    let circle = ModelManifold::circle(2.0 * PI)?;
    let system = model_system(&circle, 4)?;
    let grid = circle.grid(&[2048])?;
    let mut agree = 0.0f64;
    let mut factor = 1.0f64;
    let start = Instant::now();
    for s in 0..3u64 {
        let f = smooth_flat_field(&circle, grid.clone(), opts.seed.wrapping_add(s));
        let coeffs = m_analyze(&system, &f)?;
        let fval = f_norm_manifold(&system, &coeffs, &params, grid.clone())?;
        let frame = lp_frame_norm(&system, &coeffs, 2.0, grid.clone())?;
        agree = agree.max(rel(fval, frame));
        let r = fval / l2_norm(&f);
        factor = factor.max(r.max(1.0 / r));
    }
    let circle_elapsed = start.elapsed().as_secs_f64() / 2.0;
    for (name, tol, value, what) in [
        ("norm-equivalence.agreement", 1e-10, agree, "f_norm(s=0, p=q=2) vs square-function frame norm"),
        ("norm-equivalence.factor", 4.0, factor, "f_norm / ||f||_2 window"),
    ] {
        let tolerance = opts.scaled(tol);
        out.push(CheckRecord {
            name: name.to_string(),
            value,
            tolerance,
            pass: value <= tolerance,
            seconds: circle_elapsed,
            detail: format!("{what}; 3 seeded circle fields"),
        });
    }

    record(out, opts, "norm-equivalence.directsum", 4.0, || {
        let sphere = ModelManifold::sphere();
        let system = model_system(&sphere, 2)?;
        let grid = sphere.grid(&[193, 384])?;
        let mut worst = 1.0f64;
        for s in 0..3u64 {
            let f = smooth_sphere_field(grid.clone(), opts.seed.wrapping_add(s));
            let coeffs = m_analyze(&system, &f)?;
            for p in [1.5f64, 2.0, 3.0] {
                let np = NormParams::new(0.0, p, Some(2.0))?;
                let report = directsum_check(&system, &coeffs, &np, grid.clone())?;
                worst = worst.max(report.ratio.max(1.0 / report.ratio));
            }
        }
        Ok((worst, "direct-sum aggregate/whole ratio on S^2, p in {1.5, 2, 3}".into()))
    })
}

// ---------------------------------------------------------------------------
// Criterion 14: cover construction and partition of unity
// ---------------------------------------------------------------------------

fn check_cover(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    let cases: Vec<(ModelManifold, f64, Vec<f64>)> = vec![
        (ModelManifold::circle(2.0 * PI)?, 0.25 * PI, vec![0.3]),
        (ModelManifold::torus(2, 2.0 * PI)?, 1.0, vec![1.0, 2.0]),
        (ModelManifold::sphere(), 0.6, vec![-0.2, 0.8]),
    ];
    let mut disjoint = f64::NEG_INFINITY;
    let mut uncovered = 0usize;
    let mut mult_ratio = 0.0f64;
    let mut pou_sum = 0.0f64;
    let mut pinned_dev = 0.0f64;
    let mut pinned_hits = 0usize;
    let start = Instant::now();
    for (manifold, r, pin) in &cases {
        let cover = build_cover(manifold, *r)?;
        for i in 0..cover.len() {
            for j in 0..i {
                let dist = manifold.distance(&cover.centers()[i], &cover.centers()[j]);
                disjoint = disjoint.max(0.5 * cover.r() - dist);
            }
        }
        let samples = manifold.halton_points(10_000, 17);
        for s in &samples {
            let nearest = cover.nearest(s);
            if manifold.distance(s, &cover.centers()[nearest]) > 0.5 * cover.r() {
                uncovered += 1;
            }
        }
        mult_ratio =
            mult_ratio.max(cover.multiplicity_observed() as f64 / cover.multiplicity_bound(1.0));

        let pou = partition_of_unity(&cover, None)?;
        for s in &samples {
            pou_sum = pou_sum.max((pou.eval_all(s).iter().sum::<f64>() - 1.0).abs());
        }
        let pinned = partition_of_unity(&cover, Some(pin))?;
        let jp = pinned.pinned().expect("pinned index");
        for s in &samples {
            if manifold.distance(s, &cover.centers()[jp]) <= 0.5 * cover.r() {
                pinned_dev = pinned_dev.max((pinned.eval(jp, s) - 1.0).abs());
                pinned_hits += 1;
            }
        }
    }
    assert!(pinned_hits > 10, "pinned half-ball poorly sampled");
    let elapsed = start.elapsed().as_secs_f64() / 5.0;
    for (name, tol, value, what) in [
        ("cover.disjointness", 0.0, disjoint, "max r/2 - pairwise center distance"),
        ("cover.covering", 0.0, uncovered as f64, "samples beyond r/2 of every center, of 10^4"),
        ("cover.multiplicity", 1.0, mult_ratio, "observed / (4l+1)^d C^2 bound at l = 1"),
        ("cover.pou-sum", 1e-10, pou_sum, "max |sum alpha - 1|"),
        ("cover.pou-pinned", 0.0, pinned_dev, "max |alpha_pinned - 1| on the pinned half-ball"),
    ] {
        let tolerance = opts.scaled(tol);
        out.push(CheckRecord {
            name: name.to_string(),
            value,
            tolerance,
            pass: value <= tolerance,
            seconds: elapsed,
            detail: format!("{what}; all three models"),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Criterion 15: determinism
// ---------------------------------------------------------------------------

fn check_determinism(out: &mut Vec<CheckRecord>, opts: &CheckOptions) -> Result<()> {
    record(out, opts, "determinism.csv", 0.0, || {
        let circle = ModelManifold::circle(2.0 * PI)?;
        let system = model_system(&circle, 2)?;
        let grid = circle.grid(&[1024])?;
        let f = smooth_flat_field(&circle, grid.clone(), opts.seed);
        let first = manifold_coefficient_csv(&m_analyze(&system, &f)?);
        let second = manifold_coefficient_csv(&m_analyze(&system, &f)?);
        assert!(first.lines().count() > 1, "analysis produced no coefficients");
        let value = if first == second { 0.0 } else { 1.0 };
        Ok((value, format!("repeated seeded analysis, {} CSV bytes", first.len())))
    })
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

/// Criterion groups in report order: (record prefix, human title).
pub const CRITERIA: [(&str, &str); 15] = [
    ("filters", "Daubechies filter bank"),
    ("meyer-gram", "Meyer orthonormality"),
    ("local-parseval", "Local frame Parseval on the cube"),
    ("reconstruction", "Local frame reconstruction"),
    ("folding", "Folding projection algebra"),
    ("hestenes-adjoint", "Hestenes adjoint identity"),
    ("z-tail", "Z_lambda tail"),
    ("periodized", "Periodized norm"),
    ("coefficient-decay", "Coefficient decay"),
    ("transport", "Transport isometry and duality"),
    ("decomposition", "Decomposition of identity"),
    ("manifold-parseval", "Manifold Parseval and reconstruction"),
    ("norm-equivalence", "Norm equivalences"),
    ("cover", "Cover construction and partition of unity"),
    ("determinism", "Deterministic coefficient output"),
];

/// Run every (selected) acceptance check and return its records.
pub fn run_all(opts: &CheckOptions) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    if opts.group_selected("filters") {
        check_filters(&mut out, opts)?;
    }
    if opts.group_selected("meyer-gram") {
        check_meyer_gram(&mut out, opts)?;
    }
    if opts.group_selected("local-parseval") || opts.group_selected("reconstruction") {
        check_local_parseval(&mut out, opts)?;
    }
    if opts.group_selected("folding") {
        check_folding(&mut out, opts)?;
    }
    if opts.group_selected("hestenes-adjoint") {
        check_hestenes_adjoint(&mut out, opts)?;
    }
    if opts.group_selected("z-tail") {
        check_z_tail(&mut out, opts)?;
    }
    if opts.group_selected("periodized") {
        check_periodized(&mut out, opts)?;
    }
    if opts.group_selected("coefficient-decay") {
        check_coefficient_decay(&mut out, opts)?;
    }
    if opts.group_selected("transport") {
        check_transport(&mut out, opts)?;
    }
    if opts.group_selected("decomposition") {
        check_decomposition(&mut out, opts)?;
    }
    if opts.group_selected("manifold-parseval") {
        check_manifold_parseval(&mut out, opts)?;
    }
    if opts.group_selected("norm-equivalence") {
        check_norm_equivalence(&mut out, opts)?;
    }
    if opts.group_selected("cover") {
        check_cover(&mut out, opts)?;
    }
    if opts.group_selected("determinism") {
        check_determinism(&mut out, opts)?;
    }
    Ok(out.into_iter().filter(|r| opts.selected(&r.name)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_filter_matches_prefixes_and_components() {
        assert!(token_matches("filters", "filters.qmf"));
        assert!(token_matches("parseval", "local-parseval.residual"));
        assert!(token_matches("parseval", "manifold-parseval.reconstruction"));
        assert!(!token_matches("parseval", "decomposition.lp-interval"));
        assert!(token_matches("local-parseval.residual", "local-parseval.residual"));
        assert!(!token_matches("filters", "meyer-gram.identity"));
    }

    #[test]
    fn only_option_restricts_records() {
        let opts = CheckOptions {
            only: Some(vec!["filters".into()]),
            ..CheckOptions::default()
        };
        let records = run_all(&opts).unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.name.starts_with("filters.")));
        assert!(records.iter().all(|r| r.pass));
    }

    #[test]
    fn tol_scale_tightens_until_failure() {
        let opts = CheckOptions {
            only: Some(vec!["meyer-gram".into()]),
            tol_scale: 1e-6,
            ..CheckOptions::default()
        };
        let records = run_all(&opts).unwrap();
        assert!(records.iter().any(|r| !r.pass), "a 10^6-fold tighter tolerance must fail");
    }

    #[test]
    fn csv_shape_and_determinism() {
        let index = build_index(1, Smoothness::Finite(1), None, 0.49, None, 3).unwrap();
        let mut set = CoefficientSet::new(index, 6);
        set.insert(6, 1, vec![3], 0.25).unwrap();
        set.insert(5, 1, vec![-2], -1.5).unwrap();
        let csv = coefficient_csv(std::slice::from_ref(&set));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x_id,j,e,k_1,value");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,5,1,-2,"));
        assert_eq!(csv, coefficient_csv(std::slice::from_ref(&set)));
    }
}
