//! Command-line driver: build frame/system artifacts, run analysis on test
//! fields, and produce the full verification report.
//!
//! Exit codes: 0 success, 1 check failure, 2 configuration error, 3 missing
//! artifact.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use parframe::checks::{run_all, smooth_model_field, CheckOptions, CRITERIA};
use parframe::localframe::{build_index, FrameIndex, Smoothness};
use parframe::manifold::{build_cover, ModelManifold};
use parframe::mframe::{
    build_wavelet_system, decomposition_of_identity, default_cover_shape, default_resolution,
    f_norm_manifold, m_analyze, CoverShape, ManifoldFrameSystem,
};
use parframe::numerics::{l2_norm, plateau_bump, NormParams, SampledField};
use parframe::wavelets1d::{cascade_evaluate, daubechies_filter, meyer_table, MeyerPair, Which};

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(name = "parframe", about = "Local Parseval wavelet frames on model manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Manifest JSON describing the system to build/analyze.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and reports.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for test-field generation.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Per-axis grid resolution override (points per period/axis).
    #[arg(long)]
    resolution: Option<usize>,
    /// Restrict verification to matching check names (comma separated).
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<String>>,
    /// Multiply every tolerance; values below 1 tighten the checks.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Build a system from a manifest and write its artifacts.
    Build(CommonArgs),
    /// Analyze a test field against a built system; emits coefficient CSV
    /// and a report with the Parseval residual and norm values.
    Analyze(CommonArgs),
    /// Run the full verification suite and write the acceptance report.
    Verify(CommonArgs),
}

/// An error that already knows its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Failure {
        Failure { code: 2, message: message.into() }
    }

    fn missing(message: impl Into<String>) -> Failure {
        Failure { code: 3, message: message.into() }
    }
}

impl From<parframe::Error> for Failure {
    fn from(e: parframe::Error) -> Failure {
        Failure::config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure { code: 2, message: format!("i/o error: {e}") }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(args) => cmd_build(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Verify(args) => cmd_verify(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    /// Manifold selector: "circle:<circumference>", "torus:<d>:<side>",
    /// "sphere".
    manifold: String,
    /// Cover specification: "auto:<r>" or an explicit shape; defaults to the
    /// canonical smallest decomposition cover.
    #[serde(default)]
    cover: Option<CoverSpec>,
    frame: FrameSpec,
    /// Lebesgue exponent of the decomposition/transport.
    #[serde(default = "default_p")]
    p: f64,
    /// Truncation level; "auto" means j0 + 4.
    #[serde(default)]
    jmax: Option<IntOrAuto>,
    /// Per-axis grid resolution.
    #[serde(default)]
    resolution: Option<Vec<usize>>,
    /// Test field for `analyze`: "bump", "random", or "zero".
    #[serde(default = "default_field")]
    field: String,
}

fn default_p() -> f64 {
    2.0
}

fn default_field() -> String {
    "random".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum CoverSpec {
    /// "auto:<r>": maximal-packing cover of radius r.
    Auto(String),
    Arcs { arcs: usize },
    Boxes { boxes: Vec<usize> },
    Bands { t_edges: Vec<f64>, sectors: Vec<usize> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FrameSpec {
    /// Smoothness order, or "inf" for the Meyer generator.
    m: IntOrInf,
    /// Base level, or "auto".
    #[serde(default)]
    j0: Option<IntOrAuto>,
    epsilon: f64,
    lambda: u32,
    /// Daubechies order; "auto"/absent derives it from m.
    #[serde(default)]
    n: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum IntOrInf {
    Int(u32),
    Word(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum IntOrAuto {
    Int(u32),
    Word(String),
}

impl IntOrAuto {
    fn value(&self, what: &str) -> Result<Option<u32>, Failure> {
        match self {
            IntOrAuto::Int(v) => Ok(Some(*v)),
            IntOrAuto::Word(w) if w == "auto" => Ok(None),
            IntOrAuto::Word(w) => Err(Failure::config(format!(
                "{what} must be an integer or \"auto\", got {w:?}"
            ))),
        }
    }
}

fn load_manifest(args: &CommonArgs) -> Result<Manifest, Failure> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| Failure::config("--config PATH is required for this command"))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("invalid manifest {}: {e}", path.display())))
}

/// Everything derivable from a manifest before any heavy construction.
struct Resolved {
    manifold: ModelManifold,
    index: FrameIndex,
    shape: CoverShape,
    auto_r: Option<f64>,
    jmax: u32,
    resolution: Vec<usize>,
}

fn resolve(manifest: &Manifest, args: &CommonArgs) -> Result<Resolved, Failure> {
    let manifold = ModelManifold::from_selector(&manifest.manifold)?;
    let f = &manifest.frame;
    if !(f.epsilon > 0.0 && f.epsilon <= 0.5) {
        return Err(Failure::config(format!("epsilon out of range: {}", f.epsilon)));
    }
    let m = match &f.m {
        IntOrInf::Int(v) => Smoothness::Finite(*v),
        IntOrInf::Word(w) if w == "inf" => Smoothness::Infinite,
        IntOrInf::Word(w) => {
            return Err(Failure::config(format!("m must be an integer or \"inf\", got {w:?}")))
        }
    };
    let j0 = match &f.j0 {
        Some(v) => v.value("j0")?,
        None => None,
    };
    let index = build_index(manifold.d(), m, j0, f.epsilon, f.n, f.lambda)?;
    let (shape, auto_r) = match &manifest.cover {
        None => (default_cover_shape(&manifold), None),
        Some(CoverSpec::Auto(word)) => {
            let r: f64 = word
                .strip_prefix("auto:")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| {
                    Failure::config(format!("cover must be \"auto:<r>\" or a shape, got {word:?}"))
                })?;
            (default_cover_shape(&manifold), Some(r))
        }
        Some(CoverSpec::Arcs { arcs }) => (CoverShape::Arcs(*arcs), None),
        Some(CoverSpec::Boxes { boxes }) => (CoverShape::Boxes(boxes.clone()), None),
        Some(CoverSpec::Bands { t_edges, sectors }) => {
            (CoverShape::Bands { t_edges: t_edges.clone(), sectors: sectors.clone() }, None)
        }
    };
    let jmax = match &manifest.jmax {
        Some(v) => v.value("jmax")?.unwrap_or(index.j0 + 4),
        None => index.j0 + 4,
    };
    if jmax < index.j0 {
        return Err(Failure::config(format!("jmax {jmax} below base level {}", index.j0)));
    }
    let resolution = match (args.resolution, &manifest.resolution) {
        (Some(n), _) => match manifold.kind() {
            parframe::manifold::ManifoldKind::Sphere => vec![n, 2 * n],
            _ => vec![n; manifold.d()],
        },
        (None, Some(v)) => v.clone(),
        (None, None) => default_resolution(&manifold),
    };
    manifold.grid(&resolution).map_err(|e| {
        Failure::config(format!("resolution {resolution:?} does not fit the manifold: {e}"))
    })?;
    Ok(Resolved { manifold, index, shape, auto_r, jmax, resolution })
}

fn build_system(manifest: &Manifest, r: &Resolved) -> Result<ManifoldFrameSystem, Failure> {
    let dec = decomposition_of_identity(&r.manifold, &r.shape, manifest.p)?;
    Ok(build_wavelet_system(dec, r.index.clone(), r.jmax, None)?)
}

// ---------------------------------------------------------------------------
// build
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct IndexArtifact {
    d: usize,
    m: String,
    j0: u32,
    epsilon: f64,
    lambda: u32,
    n: Option<usize>,
    jmax: u32,
    levels: Vec<LevelArtifact>,
}

#[derive(Serialize)]
struct LevelArtifact {
    j: u32,
    e_masks: Vec<u32>,
    /// Per-axis Gamma_j range; absent for m = infinity (all of Z).
    gamma: Option<(i64, i64)>,
    lambda_range: (i64, i64),
}

#[derive(Serialize)]
struct CoverArtifact {
    mode: String,
    r: Option<f64>,
    centers: Vec<Vec<f64>>,
    pieces: Vec<PieceArtifact>,
}

#[derive(Serialize)]
struct PieceArtifact {
    label: String,
    center: Vec<f64>,
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
    collar: Vec<f64>,
}

#[derive(Serialize)]
struct GeneratorArtifact {
    kind: String,
    lo: f64,
    step: f64,
    vals: Vec<f64>,
}

fn cmd_build(args: &CommonArgs) -> Result<u8, Failure> {
    let manifest = load_manifest(args)?;
    let resolved = resolve(&manifest, args)?;

    // The auto cover exercises the packing construction and its radius
    // precondition; shape covers are validated by the decomposition.
    let auto_centers = match resolved.auto_r {
        Some(r) => Some(build_cover(&resolved.manifold, r)?.centers().to_vec()),
        None => None,
    };
    let system = build_system(&manifest, &resolved)?;

    std::fs::create_dir_all(&args.out)?;
    let index = &resolved.index;
    let levels = (index.j0..=resolved.jmax)
        .map(|j| LevelArtifact {
            j,
            e_masks: index.e_masks(j),
            gamma: index.gamma_axis(j),
            lambda_range: index.lambda_axis(j),
        })
        .collect();
    let index_art = IndexArtifact {
        d: index.d,
        m: match index.m {
            Smoothness::Finite(o) => o.to_string(),
            Smoothness::Infinite => "inf".into(),
        },
        j0: index.j0,
        epsilon: index.epsilon,
        lambda: index.lambda,
        n: index.n,
        jmax: resolved.jmax,
        levels,
    };
    write_json(&args.out.join("index.json"), &index_art)?;

    let dec = system.decomposition();
    let cover_art = CoverArtifact {
        mode: if resolved.auto_r.is_some() { "auto".into() } else { "shape".into() },
        r: resolved.auto_r,
        centers: match auto_centers {
            Some(c) => c,
            None => dec.pieces().iter().map(|p| p.center().to_vec()).collect(),
        },
        pieces: dec
            .pieces()
            .iter()
            .map(|p| PieceArtifact {
                label: p.label().to_string(),
                center: p.center().to_vec(),
                box_lo: p.box_lo().to_vec(),
                box_hi: p.box_hi().to_vec(),
                collar: p.collar().to_vec(),
            })
            .collect(),
    };
    write_json(&args.out.join("cover.json"), &cover_art)?;

    let generators = sampled_generators(index)?;
    write_json(&args.out.join("generators.json"), &generators)?;
    write_json(&args.out.join("manifest.json"), &manifest)?;
    println!(
        "built {} system: {} centers, levels {}..={}, artifacts in {}",
        manifest.manifold,
        system.len(),
        index.j0,
        resolved.jmax,
        args.out.display()
    );
    Ok(0)
}

fn sampled_generators(index: &FrameIndex) -> Result<Vec<GeneratorArtifact>, Failure> {
    let tables = match index.m {
        Smoothness::Finite(_) => {
            let n = index.n.ok_or_else(|| Failure::config("finite m without an order"))?;
            let filter = daubechies_filter(n)?;
            let (phi, psi) = cascade_evaluate(&filter, 10)?;
            vec![("phi", phi), ("psi", psi)]
        }
        Smoothness::Infinite => {
            let pair = MeyerPair::default();
            vec![
                ("phi", meyer_table(&pair, Which::Scaling)?),
                ("psi", meyer_table(&pair, Which::Wavelet)?),
            ]
        }
    };
    Ok(tables
        .into_iter()
        .map(|(kind, t)| GeneratorArtifact {
            kind: kind.to_string(),
            lo: t.lo,
            step: t.step,
            vals: t.vals,
        })
        .collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::config(format!("serialization failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AnalyzeReport {
    config: Manifest,
    seed: u64,
    resolution: Vec<usize>,
    records: Vec<AnalyzeRecord>,
    seconds: f64,
}

#[derive(Serialize)]
struct AnalyzeRecord {
    name: String,
    value: serde_json::Value,
    tolerance: Option<f64>,
    pass: bool,
}

fn cmd_analyze(args: &CommonArgs) -> Result<u8, Failure> {
    let manifest = load_manifest(args)?;
    for artifact in ["index.json", "cover.json", "generators.json"] {
        let path = args.out.join(artifact);
        if !path.exists() {
            return Err(Failure::missing(format!(
                "missing artifact {}; run `parframe build` first",
                path.display()
            )));
        }
    }
    let resolved = resolve(&manifest, args)?;
    let system = build_system(&manifest, &resolved)?;
    let grid = resolved.manifold.grid(&resolved.resolution)?;

    let start = Instant::now();
    let f = test_field(&manifest.field, &resolved.manifold, grid.clone(), args.seed)?;
    let coeffs = m_analyze(&system, &f)?;
    let csv = parframe::checks::manifold_coefficient_csv(&coeffs);
    std::fs::write(args.out.join("coefficients.csv"), &csv)?;

    let nf = l2_norm(&f);
    let mut records = Vec::new();
    if nf == 0.0 {
        records.push(AnalyzeRecord {
            name: "analyze.residual".into(),
            value: serde_json::Value::String("undefined".into()),
            tolerance: None,
            pass: true,
        });
    } else {
        let energy: f64 = coeffs.sets().iter().map(|s| s.energy()).sum();
        let residual = (energy - nf * nf).abs() / (nf * nf);
        let tolerance = 1e-3 * args.tol_scale;
        records.push(AnalyzeRecord {
            name: "analyze.residual".into(),
            value: residual.into(),
            tolerance: Some(tolerance),
            pass: residual <= tolerance,
        });
        let params = NormParams::new(0.0, manifest.p, Some(2.0))
            .map_err(|e| Failure::config(e.to_string()))?;
        let fnorm = f_norm_manifold(&system, &coeffs, &params, grid)?;
        records.push(AnalyzeRecord {
            name: "analyze.f-norm".into(),
            value: fnorm.into(),
            tolerance: None,
            pass: true,
        });
    }
    records.push(AnalyzeRecord {
        name: "analyze.l2-norm".into(),
        value: nf.into(),
        tolerance: None,
        pass: true,
    });
    let all_pass = records.iter().all(|r| r.pass);
    let report = AnalyzeReport {
        config: manifest,
        seed: args.seed,
        resolution: resolved.resolution.clone(),
        records,
        seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&args.out.join("analyze-report.json"), &report)?;
    for r in &report.records {
        println!(
            "{} {}: {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.value
        );
    }
    Ok(if all_pass { 0 } else { 1 })
}

fn test_field(
    kind: &str,
    manifold: &ModelManifold,
    grid: Arc<parframe::numerics::Grid>,
    seed: u64,
) -> Result<SampledField, Failure> {
    match kind {
        "zero" => Ok(SampledField::zeros(grid)),
        "random" => Ok(smooth_model_field(manifold, grid, seed)),
        "bump" => {
            let center = manifold.halton_points(1, seed as usize + 1)[0].clone();
            let r = 0.4 * manifold.injectivity_radius();
            let m = manifold.clone();
            Ok(SampledField::from_fn(grid, move |x| {
                plateau_bump(m.distance(x, &center) / r, 0.4, 1.0)
            }))
        }
        other => Err(Failure::config(format!(
            "unknown field kind {other:?} (expected bump, random, or zero)"
        ))),
    }
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct VerifyReport {
    config: VerifyConfig,
    records: Vec<parframe::checks::CheckRecord>,
    seconds: f64,
}

#[derive(Serialize)]
struct VerifyConfig {
    manifest: Option<Manifest>,
    seed: u64,
    tol_scale: f64,
    only: Option<Vec<String>>,
}

fn cmd_verify(args: &CommonArgs) -> Result<u8, Failure> {
    if !(args.tol_scale > 0.0) {
        return Err(Failure::config(format!("tol-scale must be positive, got {}", args.tol_scale)));
    }
    let manifest = match &args.config {
        Some(_) => Some(load_manifest(args)?),
        None => None,
    };
    let opts = CheckOptions {
        seed: args.seed,
        tol_scale: args.tol_scale,
        only: args.only.clone(),
    };
    let start = Instant::now();
    let records = run_all(&opts)?;
    let seconds = start.elapsed().as_secs_f64();

    let mut all_pass = true;
    for (prefix, title) in CRITERIA {
        let group: Vec<_> = records
            .iter()
            .filter(|r| r.name == prefix || r.name.starts_with(&format!("{prefix}.")))
            .collect();
        if group.is_empty() {
            continue;
        }
        let pass = group.iter().all(|r| r.pass);
        all_pass &= pass;
        println!("{} {title}", if pass { "PASS" } else { "FAIL" });
        for r in &group {
            println!(
                "  {} {}: {:.6e} (tol {:.1e}) [{:.1}s]",
                if r.pass { "pass" } else { "FAIL" },
                r.name,
                r.value,
                r.tolerance,
                r.seconds
            );
        }
    }
    all_pass &= records.iter().all(|r| r.pass);

    let report = VerifyReport {
        config: VerifyConfig {
            manifest,
            seed: args.seed,
            tol_scale: args.tol_scale,
            only: args.only.clone(),
        },
        records,
        seconds,
    };
    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    println!(
        "{}: report written to {}",
        if all_pass { "all checks passed" } else { "some checks failed" },
        args.out.join("report.json").display()
    );
    Ok(if all_pass { 0 } else { 1 })
}
