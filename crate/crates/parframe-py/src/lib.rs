//! Python bindings: cube frames, model manifolds, manifold wavelet systems,
//! and the verification suite. Fields cross the boundary as flat row-major
//! `list[float]` together with an explicit grid description.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use parframe::checks::{manifold_coefficient_csv, run_all, CheckOptions};
use parframe::localframe::{
    analyze, build_index, synthesize, CoefficientSet, LocalFrame, Smoothness,
};
use parframe::manifold::ModelManifold;
use parframe::mframe::{
    build_wavelet_system, decomposition_of_identity, default_cover_shape, default_resolution,
    f_norm_manifold, m_analyze, m_synthesize, ManifoldCoefficients, ManifoldFrameSystem,
};
use parframe::numerics::{l2_norm, Grid, NormParams, SampledField};
use parframe::wavelets1d::daubechies_filter;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_m(m: &str) -> PyResult<Smoothness> {
    if m == "inf" {
        Ok(Smoothness::Infinite)
    } else {
        m.parse::<u32>()
            .map(Smoothness::Finite)
            .map_err(|_| err(format!("m must be an integer or \"inf\", got {m:?}")))
    }
}

fn cube_grid(boxes: Vec<(f64, f64)>, ppu: u32) -> PyResult<Arc<Grid>> {
    let periodic = vec![false; boxes.len()];
    Ok(Arc::new(Grid::new(&boxes, ppu, &periodic).map_err(err)?))
}

fn field_on(grid: Arc<Grid>, values: Vec<f64>) -> PyResult<SampledField> {
    SampledField::new(grid, values).map_err(err)
}

/// Daubechies filter pair of order `n` as `(lowpass, highpass)`.
#[pyfunction]
fn daubechies(n: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let f = daubechies_filter(n).map_err(err)?;
    Ok((f.lowpass, f.highpass))
}

/// Coefficients of a cube-frame analysis, kept opaque on the Python side.
#[pyclass]
struct CubeCoefficients {
    set: CoefficientSet,
}

#[pymethods]
impl CubeCoefficients {
    /// Entries as `(j, e, k, value)` tuples in deterministic order.
    fn entries(&self) -> Vec<(u32, u32, Vec<i64>, f64)> {
        self.set
            .iter()
            .map(|(j, e, k, v)| (j, e, k.to_vec(), v))
            .collect()
    }

    fn energy(&self) -> f64 {
        self.set.energy()
    }

    fn __len__(&self) -> usize {
        self.set.iter().count()
    }
}

/// Local Parseval frame W(m, j0, epsilon) on the cube Q = (-1, 1)^d.
#[pyclass]
struct CubeFrame {
    frame: LocalFrame,
}

#[pymethods]
impl CubeFrame {
    #[new]
    #[pyo3(signature = (d, m, epsilon, lam, jmax_offset=4, j0=None, n=None))]
    fn new(
        d: usize,
        m: &str,
        epsilon: f64,
        lam: u32,
        jmax_offset: u32,
        j0: Option<u32>,
        n: Option<usize>,
    ) -> PyResult<CubeFrame> {
        let index = build_index(d, parse_m(m)?, j0, epsilon, n, lam).map_err(err)?;
        let jmax = index.j0 + jmax_offset;
        Ok(CubeFrame { frame: LocalFrame::build(index, jmax).map_err(err)? })
    }

    #[getter]
    fn j0(&self) -> u32 {
        self.frame.index.j0
    }

    #[getter]
    fn jmax(&self) -> u32 {
        self.frame.jmax
    }

    /// Frame coefficients of a field sampled on the box grid.
    fn analyze(
        &self,
        boxes: Vec<(f64, f64)>,
        ppu: u32,
        values: Vec<f64>,
    ) -> PyResult<CubeCoefficients> {
        let f = field_on(cube_grid(boxes, ppu)?, values)?;
        let set = analyze(&self.frame, &f, self.frame.jmax).map_err(err)?;
        Ok(CubeCoefficients { set })
    }

    /// Synthesis of a coefficient set on the given grid; returns flat values.
    fn synthesize(
        &self,
        coeffs: &CubeCoefficients,
        boxes: Vec<(f64, f64)>,
        ppu: u32,
    ) -> PyResult<Vec<f64>> {
        let grid = cube_grid(boxes, ppu)?;
        let rec = synthesize(&coeffs.set, &self.frame, grid).map_err(err)?;
        Ok(rec.values().to_vec())
    }

    /// Relative Parseval residual |sum c^2 - ||f||^2| / ||f||^2.
    fn parseval_residual(
        &self,
        boxes: Vec<(f64, f64)>,
        ppu: u32,
        values: Vec<f64>,
    ) -> PyResult<f64> {
        let f = field_on(cube_grid(boxes, ppu)?, values)?;
        let nf2 = l2_norm(&f).powi(2);
        if nf2 == 0.0 {
            return Err(err("zero field has no relative residual"));
        }
        let set = analyze(&self.frame, &f, self.frame.jmax).map_err(err)?;
        Ok((set.energy() - nf2).abs() / nf2)
    }
}

/// A model Riemannian manifold: circle, flat torus, or the round sphere.
#[pyclass]
struct Manifold {
    inner: ModelManifold,
}

#[pymethods]
impl Manifold {
    #[new]
    fn new(selector: &str) -> PyResult<Manifold> {
        Ok(Manifold { inner: ModelManifold::from_selector(selector).map_err(err)? })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.inner.volume()
    }

    #[getter]
    fn injectivity_radius(&self) -> f64 {
        self.inner.injectivity_radius()
    }

    fn distance(&self, a: Vec<f64>, b: Vec<f64>) -> f64 {
        self.inner.distance(&a, &b)
    }

    /// Low-discrepancy sample points in manifold coordinates.
    fn halton(&self, count: usize, offset: usize) -> Vec<Vec<f64>> {
        self.inner.halton_points(count, offset)
    }

    /// Default per-axis grid resolution.
    fn default_resolution(&self) -> Vec<usize> {
        default_resolution(&self.inner)
    }

    /// Coordinates of the default analysis grid, flat row-major.
    fn grid_points(&self, resolution: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
        let grid = self.inner.grid(&resolution).map_err(err)?;
        let d = grid.dim();
        let mut out = Vec::with_capacity(grid.len());
        let mut buf = vec![0.0; d];
        for i in 0..grid.len() {
            grid.coords(i, &mut buf);
            out.push(buf.clone());
        }
        Ok(out)
    }
}

/// Coefficients of a manifold analysis: one cube set per cover element.
#[pyclass]
struct ManifoldCoeffs {
    coeffs: ManifoldCoefficients,
}

#[pymethods]
impl ManifoldCoeffs {
    fn energy(&self) -> f64 {
        self.coeffs.sets().iter().map(|s| s.energy()).sum()
    }

    fn center_count(&self) -> usize {
        self.coeffs.center_count()
    }

    /// The coefficient CSV (header `x_id,j,e,k_1..k_d,value`).
    fn csv(&self) -> String {
        manifold_coefficient_csv(&self.coeffs)
    }
}

/// Parseval wavelet frame on a model manifold.
#[pyclass]
struct ManifoldSystem {
    system: ManifoldFrameSystem,
    resolution: Vec<usize>,
}

#[pymethods]
impl ManifoldSystem {
    #[new]
    #[pyo3(signature = (selector, m="1", epsilon=0.49, lam=3, jmax_offset=4, j0=None, n=None, p=2.0, resolution=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        selector: &str,
        m: &str,
        epsilon: f64,
        lam: u32,
        jmax_offset: u32,
        j0: Option<u32>,
        n: Option<usize>,
        p: f64,
        resolution: Option<Vec<usize>>,
    ) -> PyResult<ManifoldSystem> {
        let manifold = ModelManifold::from_selector(selector).map_err(err)?;
        let shape = default_cover_shape(&manifold);
        let dec = decomposition_of_identity(&manifold, &shape, p).map_err(err)?;
        let index =
            build_index(manifold.d(), parse_m(m)?, j0, epsilon, n, lam).map_err(err)?;
        let jmax = index.j0 + jmax_offset;
        let system = build_wavelet_system(dec, index, jmax, None).map_err(err)?;
        let resolution = resolution.unwrap_or_else(|| default_resolution(&manifold));
        manifold.grid(&resolution).map_err(err)?;
        Ok(ManifoldSystem { system, resolution })
    }

    #[getter]
    fn resolution(&self) -> Vec<usize> {
        self.resolution.clone()
    }

    #[getter]
    fn centers(&self) -> Vec<Vec<f64>> {
        self.system
            .decomposition()
            .pieces()
            .iter()
            .map(|p| p.center().to_vec())
            .collect()
    }

    /// Analyze a field sampled on the manifold grid.
    fn analyze(&self, values: Vec<f64>) -> PyResult<ManifoldCoeffs> {
        let grid = self.system.manifold().grid(&self.resolution).map_err(err)?;
        let f = field_on(grid, values)?;
        Ok(ManifoldCoeffs { coeffs: m_analyze(&self.system, &f).map_err(err)? })
    }

    /// Synthesize coefficients back to flat grid values.
    fn synthesize(&self, coeffs: &ManifoldCoeffs) -> PyResult<Vec<f64>> {
        let grid = self.system.manifold().grid(&self.resolution).map_err(err)?;
        let rec = m_synthesize(&self.system, &coeffs.coeffs, grid).map_err(err)?;
        Ok(rec.values().to_vec())
    }

    /// Relative Parseval residual of a sampled field.
    fn parseval_residual(&self, values: Vec<f64>) -> PyResult<f64> {
        let grid = self.system.manifold().grid(&self.resolution).map_err(err)?;
        let f = field_on(grid, values)?;
        let nf2 = l2_norm(&f).powi(2);
        if nf2 == 0.0 {
            return Err(err("zero field has no relative residual"));
        }
        let coeffs = m_analyze(&self.system, &f).map_err(err)?;
        let energy: f64 = coeffs.sets().iter().map(|s| s.energy()).sum();
        Ok((energy - nf2).abs() / nf2)
    }

    /// Triebel-Lizorkin frame norm of a coefficient set.
    #[pyo3(signature = (coeffs, s=0.0, p=2.0, q=2.0))]
    fn f_norm(&self, coeffs: &ManifoldCoeffs, s: f64, p: f64, q: f64) -> PyResult<f64> {
        let params = NormParams::new(s, p, Some(q)).map_err(err)?;
        let grid = self.system.manifold().grid(&self.resolution).map_err(err)?;
        f_norm_manifold(&self.system, &coeffs.coeffs, &params, grid).map_err(err)
    }
}

/// Run the verification suite; returns one dict per check record.
#[pyfunction]
#[pyo3(signature = (only=None, seed=7, tol_scale=1.0))]
fn run_checks(
    py: Python<'_>,
    only: Option<Vec<String>>,
    seed: u64,
    tol_scale: f64,
) -> PyResult<Vec<Py<PyDict>>> {
    let opts = CheckOptions { seed, tol_scale, only };
    let records = run_all(&opts).map_err(err)?;
    records
        .into_iter()
        .map(|r| {
            let d = PyDict::new_bound(py);
            d.set_item("name", r.name)?;
            d.set_item("value", r.value)?;
            d.set_item("tolerance", r.tolerance)?;
            d.set_item("pass", r.pass)?;
            d.set_item("seconds", r.seconds)?;
            d.set_item("detail", r.detail)?;
            Ok(d.unbind())
        })
        .collect()
}

#[pymodule]
fn parframe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(daubechies, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    m.add_class::<CubeFrame>()?;
    m.add_class::<CubeCoefficients>()?;
    m.add_class::<Manifold>()?;
    m.add_class::<ManifoldSystem>()?;
    m.add_class::<ManifoldCoeffs>()?;
    Ok(())
}
