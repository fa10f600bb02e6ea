//! Local Parseval wavelet frames on the cube: index sets, analysis and
//! synthesis for the Daubechies (finite smoothness) and folded Meyer
//! (infinite smoothness) generators, and the discrete Triebel-Lizorkin /
//! Besov sequence norms built on the `rho` box system.
//!
//! Geometry conventions: the base cube is Q = (-1,1)^d, the enlarged cube is
//! Q_eps = (-1-eps, 1+eps)^d, and the one-dimensional generators have
//! support [0, 2N-1] (Daubechies) or an effective truncated support
//! [-R, R] (Meyer, with the wavelet centred at 1/2).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hestenes::{folding_projection_1d, tensorize, FoldingProjection};
use crate::numerics::{Grid, NormParams, SampledField};
use crate::wavelets1d::{
    cascade_evaluate, daubechies_filter, Bell, DyadicTable, FilterPair, MeyerPair, MeyerSystem,
    SQRT2,
};

/// Best published Holder exponents of the Daubechies scaling functions,
/// indexed by the order N (entries 0 and 1 are placeholders / Haar).
const HOLDER_EXPONENT: [f64; 11] = [
    0.0, 0.0, 0.5500, 1.0878, 1.6179, 1.9690, 2.1891, 2.4604, 2.7608, 3.0736, 3.3614,
];

/// Relative floor below which finite-m pyramid coefficients are dropped.
const COEFF_REL_FLOOR: f64 = 1e-13;
/// Absolute floor for the m = infinity coefficient window (design decision:
/// keep everything with |2^-j k| <= 2 lambda + 1 plus everything above this).
const MEYER_COEFF_FLOOR: f64 = 1e-12;
/// Dyadic resolution of the cascade tables for the Daubechies generators.
const CASCADE_LEVELS: u32 = 12;
/// Padding (in units) added around Q_eps for the internal Meyer grid.
const MEYER_GRID_PAD: f64 = 0.0625;

// ---------------------------------------------------------------------------
// Index sets
// ---------------------------------------------------------------------------

/// Requested smoothness class of the frame generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    /// C^m elements from a Daubechies pair of sufficient order.
    Finite(u32),
    /// C^infinity elements from the folded Meyer system.
    Infinite,
}

/// The combinatorial data of the frame W(m, j0, eps): dimension, base level,
/// enlargement eps, periodisation constant lambda and (for finite m) the
/// Daubechies order N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameIndex {
    pub d: usize,
    pub m: Smoothness,
    pub j0: u32,
    pub epsilon: f64,
    pub lambda: u32,
    /// Daubechies order; `None` for the Meyer frame.
    pub n: Option<usize>,
}

/// Smallest j0 with (2N-1) 2^-j0 < eps/2.
fn auto_base_level(n: usize, epsilon: f64) -> u32 {
    let s = (2 * n - 1) as f64;
    let mut j0 = 0u32;
    while s * 0.5f64.powi(j0 as i32) >= 0.5 * epsilon {
        j0 += 1;
    }
    j0
}

/// Builds the frame index. `j0 = None` selects the smallest admissible base
/// level; `n = None` selects the smallest Daubechies order whose Holder
/// exponent exceeds m.
pub fn build_index(
    d: usize,
    m: Smoothness,
    j0: Option<u32>,
    epsilon: f64,
    n: Option<usize>,
    lambda: u32,
) -> Result<FrameIndex> {
    if d == 0 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::Parameter(format!(
            "epsilon {epsilon} outside (0, 1/2]"
        )));
    }
    if lambda < 2 {
        return Err(Error::Parameter(format!("lambda {lambda} must be >= 2")));
    }
    match m {
        Smoothness::Finite(order) => {
            let n = match n {
                Some(n) => {
                    if !(1..=10).contains(&n) {
                        return Err(Error::Parameter(format!(
                            "Daubechies order {n} outside 1..=10"
                        )));
                    }
                    if order > 0 && HOLDER_EXPONENT[n] <= order as f64 {
                        return Err(Error::Parameter(format!(
                            "Daubechies order {n} is only C^{:.4}, below requested m = {order}",
                            HOLDER_EXPONENT[n]
                        )));
                    }
                    n
                }
                None => {
                    let found = (1..=10usize).find(|&n| HOLDER_EXPONENT[n] > order as f64);
                    match found {
                        Some(n) => n,
                        None => {
                            return Err(Error::Parameter(format!(
                                "smoothness m = {order} exceeds the tabulated Daubechies range"
                            )))
                        }
                    }
                }
            };
            let auto = auto_base_level(n, epsilon);
            let j0 = match j0 {
                Some(j) => {
                    if j < auto {
                        return Err(Error::Parameter(format!(
                            "base level {j} below the smallest admissible level {auto}"
                        )));
                    }
                    j
                }
                None => auto,
            };
            if (lambda as f64) < 2.0 * (1.0 + epsilon) {
                return Err(Error::Construction(format!(
                    "lambda {lambda} too small for Gamma_j inside Lambda_j; need >= {}",
                    2.0 * (1.0 + epsilon)
                )));
            }
            Ok(FrameIndex {
                d,
                m,
                j0,
                epsilon,
                lambda,
                n: Some(n),
            })
        }
        Smoothness::Infinite => {
            if n.is_some() {
                return Err(Error::Parameter(
                    "Daubechies order is meaningless for m = infinity".into(),
                ));
            }
            Ok(FrameIndex {
                d,
                m,
                j0: j0.unwrap_or(0),
                epsilon,
                lambda,
                n: None,
            })
        }
    }
}

/// Half-open integer range [lo, hi] helpers for Lambda_j with an arbitrary
/// periodisation constant.
fn lambda_axis_range(lambda: u32, j: u32) -> (i64, i64) {
    let p = (lambda as i64) << j;
    (-(p / 2), (p - 1).div_euclid(2))
}

fn reduce_axis(lambda: u32, j: u32, k: i64) -> i64 {
    let p = (lambda as i64) << j;
    let (_, hi) = lambda_axis_range(lambda, j);
    let mut r = k.rem_euclid(p);
    if r > hi {
        r -= p;
    }
    r
}

impl FrameIndex {
    /// Length 2N-1 of the Daubechies support; `None` for Meyer.
    pub fn support_len(&self) -> Option<usize> {
        self.n.map(|n| 2 * n - 1)
    }

    /// E_j as bitmasks: all of {0,1}^d at the base level, nonzero masks above.
    pub fn e_masks(&self, j: u32) -> Vec<u32> {
        let full = 1u32 << self.d;
        if j == self.j0 {
            (0..full).collect()
        } else {
            (1..full).collect()
        }
    }

    /// Per-axis range of Gamma_j = {k : 2^-j (k + [0, 2N-1]^d) inside Q_eps}
    /// for finite m; `None` signals Gamma_j = Z^d (m = infinity).
    pub fn gamma_axis(&self, j: u32) -> Option<(i64, i64)> {
        let s = self.support_len()? as i64;
        let t = (1.0 + self.epsilon) * (1i64 << j) as f64;
        let lo = (-t).floor() as i64 + 1;
        let hi = (t - s as f64).ceil() as i64 - 1;
        Some((lo, hi))
    }

    pub fn gamma_contains(&self, j: u32, k: &[i64]) -> bool {
        match self.gamma_axis(j) {
            None => true,
            Some((lo, hi)) => k.iter().all(|&ki| ki >= lo && ki <= hi),
        }
    }

    /// Per-axis range of Lambda_j = Z^d intersect [-2^{j-1} lambda, 2^{j-1} lambda)^d.
    pub fn lambda_axis(&self, j: u32) -> (i64, i64) {
        lambda_axis_range(self.lambda, j)
    }

    pub fn in_lambda(&self, j: u32, k: &[i64]) -> bool {
        let (lo, hi) = self.lambda_axis(j);
        k.iter().all(|&ki| ki >= lo && ki <= hi)
    }

    /// Representative k' in Lambda_j with k - k' in 2^j lambda Z^d.
    pub fn reduce_to_lambda(&self, j: u32, k: &[i64]) -> Vec<i64> {
        k.iter().map(|&ki| reduce_axis(self.lambda, j, ki)).collect()
    }

    /// The cell l of the partition Lambda_{j,l} = {k : k/2^j in 2l + [-1,1)^d}
    /// containing k.
    pub fn partition_cell(j: u32, k: &[i64]) -> Vec<i64> {
        let half = 1i64 << j;
        k.iter().map(|&ki| (ki + half).div_euclid(2 * half)).collect()
    }
}

/// Support box and amplitude of rho_{j,k}(x) = 2^{jd/2} chi_I(2^j lambda x - k').
#[derive(Debug, Clone, PartialEq)]
pub struct RhoWeight {
    pub representative: Vec<i64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub amplitude: f64,
}

/// The box system of Eq.-(4.2) type: for m = infinity the index k is first
/// reduced to its representative in Lambda_j.
pub fn rho_weight(index: &FrameIndex, j: u32, k: &[i64]) -> RhoWeight {
    let rep = match index.m {
        Smoothness::Finite(_) => k.to_vec(),
        Smoothness::Infinite => index.reduce_to_lambda(j, k),
    };
    let scale = 0.5f64.powi(j as i32) / index.lambda as f64;
    let lo: Vec<f64> = rep.iter().map(|&r| r as f64 * scale).collect();
    let hi: Vec<f64> = rep.iter().map(|&r| (r + 1) as f64 * scale).collect();
    RhoWeight {
        representative: rep,
        lo,
        hi,
        amplitude: 2f64.powf(0.5 * j as f64 * index.d as f64),
    }
}

// ---------------------------------------------------------------------------
// The frame itself
// ---------------------------------------------------------------------------

/// One-dimensional generator pair backing the tensor frame.
#[derive(Debug, Clone)]
pub enum Generator {
    Daubechies {
        filter: FilterPair,
        phi: DyadicTable,
        psi: DyadicTable,
    },
    Meyer(MeyerSystem),
}

/// The local Parseval frame W(m, j0, eps) with its numerical truncation
/// level. For m = infinity the folding projection H of the construction is
/// carried along; the frame elements are H(psi^e_{j,k}).
#[derive(Debug, Clone)]
pub struct LocalFrame {
    pub index: FrameIndex,
    pub generator: Generator,
    fold: Option<FoldingProjection>,
    pub jmax: u32,
}

impl LocalFrame {
    pub fn build(index: FrameIndex, jmax: u32) -> Result<LocalFrame> {
        if jmax < index.j0 {
            return Err(Error::Parameter(format!(
                "jmax {jmax} below base level {}",
                index.j0
            )));
        }
        match index.m {
            Smoothness::Finite(_) => {
                let n = index.n.expect("finite index carries an order");
                let filter = daubechies_filter(n)?;
                let (phi, psi) = cascade_evaluate(&filter, CASCADE_LEVELS)?;
                Ok(LocalFrame {
                    index,
                    generator: Generator::Daubechies { filter, phi, psi },
                    fold: None,
                    jmax,
                })
            }
            Smoothness::Infinite => {
                let system = MeyerSystem::build(MeyerPair::default())?;
                let delta = 0.5 * index.epsilon;
                let axis = folding_projection_1d(
                    -1.0 - delta,
                    1.0 + delta,
                    delta,
                    Bell::ExpReciprocal,
                )?;
                let fold = tensorize(&vec![axis; index.d])?;
                Ok(LocalFrame {
                    index,
                    generator: Generator::Meyer(system),
                    fold: Some(fold),
                    jmax,
                })
            }
        }
    }

    /// The folding projection H (present iff m = infinity).
    pub fn fold(&self) -> Option<&FoldingProjection> {
        self.fold.as_ref()
    }

    fn table(&self, wavelet: bool) -> &DyadicTable {
        match &self.generator {
            Generator::Daubechies { phi, psi, .. } => {
                if wavelet {
                    psi
                } else {
                    phi
                }
            }
            Generator::Meyer(sys) => {
                if wavelet {
                    &sys.psi
                } else {
                    &sys.phi
                }
            }
        }
    }

    /// One-dimensional generator value; cubic table interpolation except for
    /// the discontinuous Haar pair.
    fn eval_1d(&self, wavelet: bool, t: f64) -> f64 {
        let table = self.table(wavelet);
        match &self.generator {
            Generator::Daubechies { filter, .. } if filter.n == 1 => table.eval(t),
            _ => table.eval_cubic(t),
        }
    }

    fn filter(&self) -> Result<&FilterPair> {
        match &self.generator {
            Generator::Daubechies { filter, .. } => Ok(filter),
            Generator::Meyer(_) => Err(Error::Parameter(
                "operation requires the finite-smoothness generator".into(),
            )),
        }
    }
}

fn validate_key(index: &FrameIndex, j0: u32, jmax: u32, j: u32, e: u32, k: &[i64]) -> Result<()> {
    if j < j0 || j > jmax {
        return Err(Error::Index(format!("level {j} outside [{j0}, {jmax}]")));
    }
    if e >= (1u32 << index.d) {
        return Err(Error::Index(format!("type mask {e} outside 0..2^{}", index.d)));
    }
    if e == 0 && j != j0 {
        return Err(Error::Index(format!(
            "scaling mask only allowed at the base level {j0}, got level {j}"
        )));
    }
    if k.len() != index.d {
        return Err(Error::Index(format!(
            "translation has {} components, expected {}",
            k.len(),
            index.d
        )));
    }
    if !index.gamma_contains(j, k) {
        return Err(Error::Index(format!("translation {k:?} outside Gamma_{j}")));
    }
    Ok(())
}

/// Tensor frame element psi^e_{j,k} (finite m) or H(psi^e_{j,k}) (m = infinity)
/// sampled on the grid. For m = infinity the grid must cover the closure of
/// Q_eps so the folding reflections stay inside the domain.
pub fn frame_element(
    frame: &LocalFrame,
    j: u32,
    k: &[i64],
    e: u32,
    grid: Arc<Grid>,
) -> Result<SampledField> {
    let index = &frame.index;
    validate_key(index, index.j0, u32::MAX, j, e, k)?;
    if grid.dim() != index.d {
        return Err(Error::Parameter(format!(
            "grid dimension {} does not match frame dimension {}",
            grid.dim(),
            index.d
        )));
    }
    let amp = 2f64.powf(0.5 * j as f64 * index.d as f64);
    let scale = (1i64 << j) as f64;
    let raw = SampledField::from_fn(grid, |x| {
        let mut v = amp;
        for (ax, &xi) in x.iter().enumerate() {
            let wavelet = (e >> ax) & 1 == 1;
            v *= frame.eval_1d(wavelet, scale * xi - k[ax] as f64);
            if v == 0.0 {
                return 0.0;
            }
        }
        v
    });
    match frame.fold() {
        None => Ok(raw),
        Some(h) => h.apply(&raw),
    }
}

// ---------------------------------------------------------------------------
// Coefficient sets
// ---------------------------------------------------------------------------

/// Sparse coefficients keyed by (level, type mask, translation); the BTreeMap
/// ordering is exactly the deterministic level-major synthesis order.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    index: FrameIndex,
    jmax: u32,
    entries: BTreeMap<(u32, u32, Vec<i64>), f64>,
}

impl CoefficientSet {
    pub fn new(index: FrameIndex, jmax: u32) -> CoefficientSet {
        CoefficientSet {
            index,
            jmax,
            entries: BTreeMap::new(),
        }
    }

    pub fn index(&self) -> &FrameIndex {
        &self.index
    }

    pub fn d(&self) -> usize {
        self.index.d
    }

    pub fn j0(&self) -> u32 {
        self.index.j0
    }

    pub fn jmax(&self) -> u32 {
        self.jmax
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Validated insertion (used when reading coefficients from disk).
    pub fn insert(&mut self, j: u32, e: u32, k: Vec<i64>, value: f64) -> Result<()> {
        validate_key(&self.index, self.index.j0, self.jmax, j, e, &k)?;
        if !value.is_finite() {
            return Err(Error::Numeric("non-finite coefficient".into()));
        }
        self.entries.insert((j, e, k), value);
        Ok(())
    }

    fn insert_raw(&mut self, j: u32, e: u32, k: Vec<i64>, value: f64) {
        self.entries.insert((j, e, k), value);
    }

    pub fn get(&self, j: u32, e: u32, k: &[i64]) -> f64 {
        self.entries
            .get(&(j, e, k.to_vec()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, &[i64], f64)> + '_ {
        self.entries
            .iter()
            .map(|((j, e, k), &v)| (*j, *e, k.as_slice(), v))
    }

    /// Sum of squared coefficients (the Parseval quantity).
    pub fn energy(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum()
    }

    pub fn energy_by_level(&self) -> BTreeMap<u32, f64> {
        let mut out = BTreeMap::new();
        for ((j, _, _), v) in &self.entries {
            *out.entry(*j).or_insert(0.0) += v * v;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Restriction to levels <= jmax (for tail / convergence studies without
    /// re-running the analysis).
    pub fn truncated(&self, jmax: u32) -> CoefficientSet {
        let jmax = jmax.min(self.jmax);
        CoefficientSet {
            index: self.index.clone(),
            jmax,
            entries: self
                .entries
                .iter()
                .filter(|((j, _, _), _)| *j <= jmax)
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Lattice arrays and the Mallat pyramid (finite m)
// ---------------------------------------------------------------------------

/// Dense row-major array over a box of integer translations.
struct LatticeArray {
    lo: Vec<i64>,
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl LatticeArray {
    fn zeros(lo: Vec<i64>, dims: Vec<usize>) -> LatticeArray {
        let len = dims.iter().product();
        LatticeArray {
            lo,
            dims,
            data: vec![0.0; len],
        }
    }

    fn hi(&self, axis: usize) -> i64 {
        self.lo[axis] + self.dims[axis] as i64 - 1
    }

    /// Decodes a flat offset into absolute translations.
    fn translation(&self, mut flat: usize, out: &mut [i64]) {
        for axis in (0..self.dims.len()).rev() {
            let s = self.dims[axis];
            out[axis] = self.lo[axis] + (flat % s) as i64;
            flat /= s;
        }
    }
}

fn div_ceil_2(a: i64) -> i64 {
    a.div_euclid(2) + if a.rem_euclid(2) != 0 { 1 } else { 0 }
}

/// One filtering + dyadic decimation step along `axis`:
/// out(k) = sum_m filt[m] in(2k + m), with the exact output range.
fn down_step(input: &LatticeArray, filt: &[f64], axis: usize) -> LatticeArray {
    let l = filt.len() as i64;
    let in_lo = input.lo[axis];
    let in_hi = input.hi(axis);
    let out_lo = div_ceil_2(in_lo - l + 1);
    let out_hi = in_hi.div_euclid(2);
    let a_out = (out_hi - out_lo + 1).max(0) as usize;
    let a_in = input.dims[axis];
    let pre: usize = input.dims[..axis].iter().product();
    let post: usize = input.dims[axis + 1..].iter().product();

    let mut lo = input.lo.clone();
    lo[axis] = out_lo;
    let mut dims = input.dims.clone();
    dims[axis] = a_out;
    let mut out = LatticeArray::zeros(lo, dims);

    for p in 0..pre {
        for ka in 0..a_out {
            let k_abs = out_lo + ka as i64;
            let ob = (p * a_out + ka) * post;
            for (m, &c) in filt.iter().enumerate() {
                let ni = 2 * k_abs + m as i64 - in_lo;
                if ni < 0 || ni >= a_in as i64 {
                    continue;
                }
                let ib = (p * a_in + ni as usize) * post;
                for q in 0..post {
                    out.data[ob + q] += c * input.data[ib + q];
                }
            }
        }
    }
    out
}

/// Top-of-pyramid step: samples the input through the moment-corrected
/// one-point rule row by row along axis 0 (never materialising the full
/// level-jtop array) and applies the axis-0 lowpass / highpass decimation.
/// Returns the two partial arrays plus the largest |f| value seen.
fn top_pass(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    filter: &FilterPair,
    jtop: u32,
    in_lo: &[i64],
    in_dims: &[usize],
    with_g: bool,
) -> (LatticeArray, Option<LatticeArray>, f64) {
    let d = in_lo.len();
    let l = filter.lowpass.len() as i64;
    let rest_len: usize = in_dims[1..].iter().product();
    let scale = 0.5f64.powi(jtop as i32);
    let amp = 2f64.powf(-0.5 * jtop as f64 * d as f64);
    let m1: f64 = filter
        .lowpass
        .iter()
        .enumerate()
        .map(|(k, &h)| k as f64 * h)
        .sum::<f64>()
        / SQRT2;

    let in_lo0 = in_lo[0];
    let in_hi0 = in_lo0 + in_dims[0] as i64 - 1;
    let out_lo = div_ceil_2(in_lo0 - l + 1);
    let out_hi = in_hi0.div_euclid(2);
    let a_out = (out_hi - out_lo + 1).max(0) as usize;

    let mut lo = in_lo.to_vec();
    lo[0] = out_lo;
    let mut dims = in_dims.to_vec();
    dims[0] = a_out;
    let mut h_out = LatticeArray::zeros(lo.clone(), dims.clone());
    let mut g_out = if with_g {
        Some(LatticeArray::zeros(lo, dims))
    } else {
        None
    };

    let mut max_abs = 0.0f64;
    let mut ring: VecDeque<(i64, Vec<f64>)> = VecDeque::new();
    let gen_row = |n_abs: i64, max_abs: &mut f64| -> Vec<f64> {
        let mut row = vec![0.0; rest_len];
        let mut x = vec![0.0; d];
        x[0] = scale * (n_abs as f64 + m1);
        for (ri, slot) in row.iter_mut().enumerate() {
            let mut idx = ri;
            for ax in (1..d).rev() {
                let s = in_dims[ax];
                let k = in_lo[ax] + (idx % s) as i64;
                x[ax] = scale * (k as f64 + m1);
                idx /= s;
            }
            let v = f(&x);
            *max_abs = max_abs.max(v.abs());
            *slot = amp * v;
        }
        row
    };

    for ka in 0..a_out {
        let k_abs = out_lo + ka as i64;
        let first = (2 * k_abs).max(in_lo0);
        let last = (2 * k_abs + l - 1).min(in_hi0);
        while ring.front().is_some_and(|(n, _)| *n < first) {
            ring.pop_front();
        }
        let mut next = ring.back().map_or(first, |(n, _)| n + 1);
        while next <= last {
            let row = gen_row(next, &mut max_abs);
            ring.push_back((next, row));
            next += 1;
        }
        let hb = ka * rest_len;
        for (n_abs, row) in &ring {
            let m = (n_abs - 2 * k_abs) as usize;
            if *n_abs < first || *n_abs > last {
                continue;
            }
            let ch = filter.lowpass[m];
            for (q, &v) in row.iter().enumerate() {
                h_out.data[hb + q] += ch * v;
            }
            if let Some(g) = g_out.as_mut() {
                let cg = filter.highpass[m];
                for (q, &v) in row.iter().enumerate() {
                    g.data[hb + q] += cg * v;
                }
            }
        }
    }
    (h_out, g_out, max_abs)
}

/// Recursively applies lowpass/highpass decimation along the remaining axes,
/// producing all requested subbands. The mask bit for an axis is set when
/// the highpass (wavelet) branch was taken.
fn expand_subbands(
    arr: LatticeArray,
    axis: usize,
    mask: u32,
    filter: &FilterPair,
    with_details: bool,
    out: &mut Vec<(u32, LatticeArray)>,
) {
    let d = arr.lo.len();
    if axis == d {
        out.push((mask, arr));
        return;
    }
    let h = down_step(&arr, &filter.lowpass, axis);
    let g = if with_details {
        Some(down_step(&arr, &filter.highpass, axis))
    } else {
        None
    };
    drop(arr);
    if let Some(g) = g {
        expand_subbands(g, axis + 1, mask | (1 << axis), filter, with_details, out);
    }
    expand_subbands(h, axis + 1, mask, filter, with_details, out);
}

/// Stores the entries of a subband array that fall in Gamma_j and exceed the
/// floor.
fn store_band(coeffs: &mut CoefficientSet, j: u32, mask: u32, arr: &LatticeArray, floor: f64) {
    let d = arr.lo.len();
    let (glo, ghi) = coeffs
        .index
        .gamma_axis(j)
        .expect("finite-m band storage needs a Daubechies index");
    let mut k = vec![0i64; d];
    for (flat, &v) in arr.data.iter().enumerate() {
        if v.abs() <= floor {
            continue;
        }
        arr.translation(flat, &mut k);
        if k.iter().all(|&ki| ki >= glo && ki <= ghi) {
            coeffs.insert_raw(j, mask, k.clone(), v);
        }
    }
}

fn daubechies_analyze(
    frame: &LocalFrame,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    support: &[(f64, f64)],
    jmax: u32,
    oversample: u32,
) -> Result<CoefficientSet> {
    let index = &frame.index;
    let d = index.d;
    let filter = frame.filter()?;
    let s_len = (2 * filter.n - 1) as i64;
    let jtop = jmax + 1 + oversample;
    if jtop > 26 {
        return Err(Error::Resolution(format!(
            "pyramid top level {jtop} too deep; lower jmax or the oversampling"
        )));
    }

    let two_j = (1i64 << jtop) as f64;
    let mut in_lo = Vec::with_capacity(d);
    let mut in_dims = Vec::with_capacity(d);
    let mut total = 1usize;
    for ax in 0..d {
        let a = support[ax].0.max(-1.0);
        let b = support[ax].1.min(1.0);
        if b <= a {
            return Ok(CoefficientSet::new(index.clone(), jmax));
        }
        let lo = (a * two_j).floor() as i64 - s_len;
        let hi = (b * two_j).ceil() as i64;
        in_lo.push(lo);
        in_dims.push((hi - lo + 1) as usize);
        total = total.saturating_mul((hi - lo + 1) as usize);
    }
    if total > 600_000_000 {
        return Err(Error::Resolution(format!(
            "pyramid top holds {total} samples; lower jmax or the oversampling"
        )));
    }

    let mut coeffs = CoefficientSet::new(index.clone(), jmax);
    let top_details = jtop - 1 <= jmax;
    let (h0, g0, fmax) = top_pass(f, filter, jtop, &in_lo, &in_dims, top_details);
    if fmax == 0.0 {
        return Ok(coeffs);
    }
    let floor = COEFF_REL_FLOOR * fmax;

    let mut bands = Vec::new();
    expand_subbands(h0, 1, 0, filter, top_details, &mut bands);
    if let Some(g0) = g0 {
        expand_subbands(g0, 1, 1, filter, true, &mut bands);
    }
    let mut level = jtop - 1;
    let mut s_cur = None;
    for (mask, arr) in bands {
        if mask == 0 {
            s_cur = Some(arr);
        } else {
            store_band(&mut coeffs, level, mask, &arr, floor);
        }
    }
    let mut s_cur = s_cur.expect("scaling subband always produced");

    while level > index.j0 {
        let want_details = level - 1 <= jmax;
        let mut bands = Vec::new();
        expand_subbands(s_cur, 0, 0, filter, want_details, &mut bands);
        let mut s_next = None;
        for (mask, arr) in bands {
            if mask == 0 {
                s_next = Some(arr);
            } else {
                store_band(&mut coeffs, level - 1, mask, &arr, floor);
            }
        }
        s_cur = s_next.expect("scaling subband always produced");
        level -= 1;
    }
    store_band(&mut coeffs, index.j0, 0, &s_cur, floor);
    Ok(coeffs)
}

// ---------------------------------------------------------------------------
// Meyer analysis (m = infinity)
// ---------------------------------------------------------------------------

/// Contracts `mat` (rows x dims[axis]) against the given axis of a row-major
/// tensor: out[.., r, ..] = sum_c mat[r * cols + c] data[.., c, ..].
fn mode_contract(
    data: &[f64],
    dims: &[usize],
    axis: usize,
    mat: &[f64],
    rows: usize,
) -> (Vec<f64>, Vec<usize>) {
    let cols = dims[axis];
    let pre: usize = dims[..axis].iter().product();
    let post: usize = dims[axis + 1..].iter().product();
    let mut out_dims = dims.to_vec();
    out_dims[axis] = rows;
    let mut out = vec![0.0; pre * rows * post];
    let in_block = cols * post;
    let out_block = rows * post;
    for p in 0..pre {
        let ib = &data[p * in_block..(p + 1) * in_block];
        let ob = &mut out[p * out_block..(p + 1) * out_block];
        for r in 0..rows {
            let orow = &mut ob[r * post..(r + 1) * post];
            for c in 0..cols {
                let m = mat[r * cols + c];
                if m == 0.0 {
                    continue;
                }
                let irow = &ib[c * post..(c + 1) * post];
                for (o, v) in orow.iter_mut().zip(irow) {
                    *o += m * v;
                }
            }
        }
    }
    (out, out_dims)
}

/// Integer window of translations whose (truncated) support meets [-b, b].
fn meyer_axis_window(table: &DyadicTable, j: u32, b: f64) -> (i64, i64) {
    let two_j = (1i64 << j) as f64;
    let lo = (-two_j * b - table.hi()).floor() as i64;
    let hi = (two_j * b - table.lo).ceil() as i64;
    (lo, hi)
}

/// Analysis matrix A[k][i] = 2^{j/2} psi(2^j x_i - k) w_i on one grid axis.
fn meyer_axis_matrix(
    table: &DyadicTable,
    j: u32,
    klo: i64,
    khi: i64,
    grid: &Grid,
    axis: usize,
    with_weights: bool,
) -> Vec<f64> {
    let n = grid.axes()[axis].n;
    let weights = if with_weights {
        grid.axis_weights(axis)
    } else {
        vec![1.0; n]
    };
    let rows = (khi - klo + 1) as usize;
    let two_j = (1i64 << j) as f64;
    let amp = 2f64.powf(0.5 * j as f64);
    let mut mat = vec![0.0; rows * n];
    for r in 0..rows {
        let k = klo + r as i64;
        for i in 0..n {
            let x = grid.axes()[axis].coord(i);
            let v = table.eval_cubic(two_j * x - k as f64);
            if v != 0.0 {
                mat[r * n + i] = amp * v * weights[i];
            }
        }
    }
    mat
}

fn meyer_internal_grid(index: &FrameIndex, jmax: u32, user_ppu: u32, b: f64) -> Result<Arc<Grid>> {
    if jmax > 9 {
        return Err(Error::Resolution(format!(
            "Meyer analysis at jmax = {jmax} needs an impractically fine internal grid"
        )));
    }
    let ppu = (16u32 << jmax).max(user_ppu);
    let boxes: Vec<(f64, f64)> = (0..index.d).map(|_| (-b, b)).collect();
    let flags = vec![false; index.d];
    Ok(Arc::new(Grid::new(&boxes, ppu, &flags)?))
}

fn field_ppu(f: &SampledField) -> u32 {
    f.grid()
        .axes()
        .iter()
        .map(|a| (1.0 / a.spacing()).round() as u32)
        .max()
        .unwrap_or(16)
}

/// Raw (unprojected) Meyer wavelet coefficients <f, psi^e_{j,k}> over the
/// full window meeting [-1,1]^d; the input must be supported in [-1,1]^d.
/// These feed the q-function, Z_lambda and periodisation studies.
pub fn meyer_coefficients(frame: &LocalFrame, f: &SampledField, jmax: u32) -> Result<CoefficientSet> {
    let index = &frame.index;
    if !matches!(index.m, Smoothness::Infinite) {
        return Err(Error::Parameter(
            "raw Meyer coefficients require the m = infinity frame".into(),
        ));
    }
    check_support(f, 1.0)?;
    if jmax < index.j0 {
        return Err(Error::Parameter(format!(
            "jmax {jmax} below base level {}",
            index.j0
        )));
    }
    let grid = meyer_internal_grid(index, jmax, field_ppu(f), 1.0 + MEYER_GRID_PAD)?;
    let g = SampledField::from_fn(grid, |x| f.sample(x));
    meyer_contract(frame, &g, jmax, 1.0 + MEYER_GRID_PAD, &|_, _, _| true)
}

fn meyer_analyze(frame: &LocalFrame, f: &SampledField, jmax: u32) -> Result<CoefficientSet> {
    let index = &frame.index;
    let b = 1.0 + index.epsilon + MEYER_GRID_PAD;
    let grid = meyer_internal_grid(index, jmax, field_ppu(f), b)?;
    let resampled = SampledField::from_fn(grid, |x| f.sample(x));
    let folded = match frame.fold() {
        Some(h) => h.apply(&resampled)?,
        None => resampled,
    };
    let lam_window = (2 * index.lambda + 1) as f64 + 1e-9;
    let keep = move |j: u32, k: &[i64], v: f64| -> bool {
        let scale = 0.5f64.powi(j as i32);
        let within = k.iter().all(|&ki| (ki as f64 * scale).abs() <= lam_window);
        within || v.abs() > MEYER_COEFF_FLOOR
    };
    meyer_contract(frame, &folded, jmax, b, &keep)
}

fn meyer_contract(
    frame: &LocalFrame,
    g: &SampledField,
    jmax: u32,
    b: f64,
    keep: &dyn Fn(u32, &[i64], f64) -> bool,
) -> Result<CoefficientSet> {
    let index = &frame.index;
    let d = index.d;
    let mut coeffs = CoefficientSet::new(index.clone(), jmax);
    let grid = g.grid();
    for j in index.j0..=jmax {
        // Per-axis matrices for the scaling (false) and wavelet (true) rows.
        let mut windows = [Vec::new(), Vec::new()];
        let mut mats = [Vec::new(), Vec::new()];
        for (wi, wavelet) in [false, true].into_iter().enumerate() {
            let table = frame.table(wavelet);
            for ax in 0..d {
                let (klo, khi) = meyer_axis_window(table, j, b);
                windows[wi].push((klo, khi));
                mats[wi].push(meyer_axis_matrix(table, j, klo, khi, grid, ax, true));
            }
        }
        for e in index.e_masks(j) {
            let mut data = g.values().to_vec();
            let mut dims: Vec<usize> = grid.axes().iter().map(|a| a.n).collect();
            let mut klos = Vec::with_capacity(d);
            for ax in 0..d {
                let wi = ((e >> ax) & 1) as usize;
                let (klo, khi) = windows[wi][ax];
                klos.push(klo);
                let rows = (khi - klo + 1) as usize;
                let (nd, ndims) = mode_contract(&data, &dims, ax, &mats[wi][ax], rows);
                data = nd;
                dims = ndims;
            }
            let mut k = vec![0i64; d];
            for (flat, &v) in data.iter().enumerate() {
                let mut idx = flat;
                for ax in (0..d).rev() {
                    k[ax] = klos[ax] + (idx % dims[ax]) as i64;
                    idx /= dims[ax];
                }
                if keep(j, &k, v) {
                    coeffs.insert_raw(j, e, k.clone(), v);
                }
            }
        }
    }
    Ok(coeffs)
}

// ---------------------------------------------------------------------------
// Analysis entry points
// ---------------------------------------------------------------------------

fn check_support(f: &SampledField, half_width: f64) -> Result<()> {
    let grid = f.grid();
    let tol = 1e-9 * f.linf().max(1.0);
    let mut x = vec![0.0; grid.dim()];
    for (flat, &v) in f.values().iter().enumerate() {
        if v.abs() <= tol {
            continue;
        }
        grid.coords(flat, &mut x);
        if x.iter().any(|&xi| xi.abs() >= half_width + 1e-12) {
            return Err(Error::Domain(format!(
                "input has mass {v:.3e} at {x:?}, outside the required support box"
            )));
        }
    }
    Ok(())
}

/// Per-axis bounding box of the numerically nonzero samples, padded by one
/// grid spacing.
fn support_box(f: &SampledField) -> Option<Vec<(f64, f64)>> {
    let grid = f.grid();
    let d = grid.dim();
    let tol = 1e-13 * f.linf();
    if f.linf() == 0.0 {
        return None;
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut x = vec![0.0; d];
    let mut seen = false;
    for (flat, &v) in f.values().iter().enumerate() {
        if v.abs() <= tol {
            continue;
        }
        seen = true;
        grid.coords(flat, &mut x);
        for ax in 0..d {
            lo[ax] = lo[ax].min(x[ax]);
            hi[ax] = hi[ax].max(x[ax]);
        }
    }
    if !seen {
        return None;
    }
    Some(
        (0..d)
            .map(|ax| {
                let h = grid.axes()[ax].spacing();
                (lo[ax] - h, hi[ax] + h)
            })
            .collect(),
    )
}

/// Frame coefficients <f, f^e_{(j,k)}> for all j0 <= j <= jmax. The input
/// must be supported in Q = (-1,1)^d.
pub fn analyze(frame: &LocalFrame, f: &SampledField, jmax: u32) -> Result<CoefficientSet> {
    analyze_with(frame, f, jmax, 0)
}

/// As `analyze`, with explicit oversampling of the pyramid top level
/// (finite m) or of the internal grid (m = infinity) for high-accuracy runs.
pub fn analyze_with(
    frame: &LocalFrame,
    f: &SampledField,
    jmax: u32,
    oversample: u32,
) -> Result<CoefficientSet> {
    let index = &frame.index;
    if f.grid().dim() != index.d {
        return Err(Error::Parameter(format!(
            "field dimension {} does not match frame dimension {}",
            f.grid().dim(),
            index.d
        )));
    }
    if jmax < index.j0 {
        return Err(Error::Parameter(format!(
            "jmax {jmax} below base level {}",
            index.j0
        )));
    }
    check_support(f, 1.0)?;
    match &frame.generator {
        Generator::Daubechies { .. } => {
            let support = match support_box(f) {
                Some(s) => s,
                None => return Ok(CoefficientSet::new(index.clone(), jmax)),
            };
            daubechies_analyze(frame, &|x| f.sample(x), &support, jmax, oversample)
        }
        Generator::Meyer(_) => {
            if f.linf() == 0.0 {
                return Ok(CoefficientSet::new(index.clone(), jmax));
            }
            meyer_analyze(frame, f, jmax)
        }
    }
}

/// Analysis from a closure instead of a sampled field, avoiding any
/// intermediate interpolation; `support` is the per-axis bounding box of the
/// (numerical) support, which must lie in the closed unit cube.
pub fn analyze_fn(
    frame: &LocalFrame,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    support: &[(f64, f64)],
    jmax: u32,
    oversample: u32,
) -> Result<CoefficientSet> {
    let index = &frame.index;
    if support.len() != index.d {
        return Err(Error::Parameter(format!(
            "support box has {} axes, expected {}",
            support.len(),
            index.d
        )));
    }
    if support
        .iter()
        .any(|&(a, b)| a < -1.0 - 1e-12 || b > 1.0 + 1e-12 || b < a)
    {
        return Err(Error::Domain(
            "support box must lie inside the closed unit cube".into(),
        ));
    }
    if jmax < index.j0 {
        return Err(Error::Parameter(format!(
            "jmax {jmax} below base level {}",
            index.j0
        )));
    }
    match &frame.generator {
        Generator::Daubechies { .. } => daubechies_analyze(frame, f, support, jmax, oversample),
        Generator::Meyer(_) => {
            let b = 1.0 + index.epsilon + MEYER_GRID_PAD;
            let ppu = 16u32 << (jmax.min(12) + oversample.min(6));
            let grid = meyer_internal_grid(index, jmax, ppu, b)?;
            let sampled = SampledField::from_fn(grid, |x| {
                if x.iter()
                    .zip(support)
                    .any(|(&xi, &(a, b))| xi < a || xi > b)
                {
                    0.0
                } else {
                    f(x)
                }
            });
            let folded = match frame.fold() {
                Some(h) => h.apply(&sampled)?,
                None => sampled,
            };
            let lam_window = (2 * index.lambda + 1) as f64 + 1e-9;
            let keep = move |j: u32, k: &[i64], v: f64| -> bool {
                let scale = 0.5f64.powi(j as i32);
                k.iter().all(|&ki| (ki as f64 * scale).abs() <= lam_window)
                    || v.abs() > MEYER_COEFF_FLOOR
            };
            meyer_contract(frame, &folded, jmax, b, &keep)
        }
    }
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

/// Per-axis evaluation of one tensor factor on the grid; returns the index of
/// the first touched grid point and the factor values.
fn axis_profile(
    frame: &LocalFrame,
    grid: &Grid,
    axis: usize,
    j: u32,
    k: i64,
    wavelet: bool,
) -> (usize, Vec<f64>) {
    let table = frame.table(wavelet);
    let two_j = (1i64 << j) as f64;
    let a = &grid.axes()[axis];
    let x_lo = (k as f64 + table.lo) / two_j;
    let x_hi = (k as f64 + table.hi()) / two_j;
    let h = a.spacing();
    let i_lo = (((x_lo - a.lo) / h).floor().max(0.0)) as usize;
    let i_hi = (((x_hi - a.lo) / h).ceil() as i64).clamp(0, a.n as i64 - 1) as usize;
    if i_lo > i_hi {
        return (0, Vec::new());
    }
    let vals = (i_lo..=i_hi)
        .map(|i| frame.eval_1d(wavelet, two_j * a.coord(i) - k as f64))
        .collect();
    (i_lo, vals)
}

fn daubechies_synthesize(
    coeffs: &CoefficientSet,
    frame: &LocalFrame,
    grid: Arc<Grid>,
) -> Result<SampledField> {
    let d = frame.index.d;
    let mut out = SampledField::zeros(grid.clone());
    let strides: Vec<usize> = (0..d)
        .map(|ax| grid.axes()[ax + 1..].iter().map(|a| a.n).product())
        .collect();
    for (j, e, k, c) in coeffs.iter() {
        if c == 0.0 {
            continue;
        }
        let amp = c * 2f64.powf(0.5 * j as f64 * d as f64);
        let mut profiles = Vec::with_capacity(d);
        let mut empty = false;
        for ax in 0..d {
            let wavelet = (e >> ax) & 1 == 1;
            let p = axis_profile(frame, &grid, ax, j, k[ax], wavelet);
            if p.1.is_empty() {
                empty = true;
                break;
            }
            profiles.push(p);
        }
        if empty {
            continue;
        }
        // Nested accumulation over the product of the per-axis index ranges.
        let lens: Vec<usize> = profiles.iter().map(|(_, v)| v.len()).collect();
        let total: usize = lens.iter().product();
        let values = out.values_mut();
        for flat in 0..total {
            let mut idx = flat;
            let mut pos = 0usize;
            let mut w = amp;
            for ax in (0..d).rev() {
                let li = idx % lens[ax];
                idx /= lens[ax];
                let (start, vals) = &profiles[ax];
                w *= vals[li];
                pos += (start + li) * strides[ax];
            }
            if w != 0.0 {
                values[pos] += w;
            }
        }
    }
    Ok(out)
}

fn meyer_synthesize(
    coeffs: &CoefficientSet,
    frame: &LocalFrame,
    grid: Arc<Grid>,
) -> Result<SampledField> {
    let index = &frame.index;
    let d = index.d;
    let b = 1.0 + index.epsilon + MEYER_GRID_PAD;
    let internal = meyer_internal_grid(index, coeffs.jmax(), 16u32 << coeffs.jmax().min(12), b)?;
    let dims_out: Vec<usize> = internal.axes().iter().map(|a| a.n).collect();
    let mut acc = vec![0.0; dims_out.iter().product()];

    // Group entries per (j, e) into a dense window tensor, then expand.
    let mut groups: BTreeMap<(u32, u32), Vec<(&[i64], f64)>> = BTreeMap::new();
    for (j, e, k, c) in coeffs.iter() {
        if c != 0.0 {
            groups.entry((j, e)).or_default().push((k, c));
        }
    }
    for ((j, e), entries) in groups {
        let mut klo = vec![i64::MAX; d];
        let mut khi = vec![i64::MIN; d];
        for (k, _) in &entries {
            for ax in 0..d {
                klo[ax] = klo[ax].min(k[ax]);
                khi[ax] = khi[ax].max(k[ax]);
            }
        }
        let kdims: Vec<usize> = (0..d).map(|ax| (khi[ax] - klo[ax] + 1) as usize).collect();
        let mut data = vec![0.0; kdims.iter().product()];
        for (k, c) in &entries {
            let mut flat = 0usize;
            for ax in 0..d {
                flat = flat * kdims[ax] + (k[ax] - klo[ax]) as usize;
            }
            data[flat] = *c;
        }
        let mut dims = kdims.clone();
        for ax in 0..d {
            let wavelet = (e >> ax) & 1 == 1;
            let table = frame.table(wavelet);
            let n = internal.axes()[ax].n;
            let two_j = (1i64 << j) as f64;
            let amp = 2f64.powf(0.5 * j as f64);
            let cols = dims[ax];
            let mut mat = vec![0.0; n * cols];
            for (i, row) in mat.chunks_mut(cols).enumerate() {
                let x = internal.axes()[ax].coord(i);
                for (c_idx, slot) in row.iter_mut().enumerate() {
                    let k = klo[ax] + c_idx as i64;
                    let v = table.eval_cubic(two_j * x - k as f64);
                    if v != 0.0 {
                        *slot = amp * v;
                    }
                }
            }
            let (nd, ndims) = mode_contract(&data, &dims, ax, &mat, n);
            data = nd;
            dims = ndims;
        }
        for (a, v) in acc.iter_mut().zip(&data) {
            *a += v;
        }
    }

    let mut u = SampledField::zeros(internal);
    u.values_mut().copy_from_slice(&acc);
    let u = match frame.fold() {
        Some(h) => h.apply(&u)?,
        None => u,
    };
    Ok(SampledField::from_fn(grid, |x| u.sample(x)))
}

/// Sum of coeff * f^e_{(j,k)} over the stored entries, in deterministic
/// level-major order.
pub fn synthesize(coeffs: &CoefficientSet, frame: &LocalFrame, grid: Arc<Grid>) -> Result<SampledField> {
    if coeffs.index() != &frame.index {
        return Err(Error::Index(
            "coefficient set was built for a different frame index".into(),
        ));
    }
    if grid.dim() != frame.index.d {
        return Err(Error::Parameter(format!(
            "grid dimension {} does not match frame dimension {}",
            grid.dim(),
            frame.index.d
        )));
    }
    for (j, e, k, _) in coeffs.iter() {
        validate_key(&frame.index, frame.index.j0, coeffs.jmax(), j, e, k)?;
    }
    if coeffs.is_empty() {
        return Ok(SampledField::zeros(grid));
    }
    match &frame.generator {
        Generator::Daubechies { .. } => daubechies_synthesize(coeffs, frame, grid),
        Generator::Meyer(_) => meyer_synthesize(coeffs, frame, grid),
    }
}

// ---------------------------------------------------------------------------
// Exact piecewise-constant integration over the dyadic box systems
// ---------------------------------------------------------------------------

/// Accumulated node values on dyadic cells: sum of t^q per cell for finite q,
/// max of t per cell for q = infinity.
struct BoxNodes {
    nodes: BTreeMap<(u32, Vec<i64>), f64>,
    maxagg: bool,
}

impl BoxNodes {
    fn new(maxagg: bool) -> BoxNodes {
        BoxNodes {
            nodes: BTreeMap::new(),
            maxagg,
        }
    }

    fn add(&mut self, j: u32, cell: Vec<i64>, t: f64, q: f64) {
        let slot = self.nodes.entry((j, cell)).or_insert(0.0);
        if self.maxagg {
            *slot = slot.max(t);
        } else {
            *slot += t.powf(q);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn rec_cell(
    nodes: &BTreeMap<(u32, Vec<i64>), f64>,
    levels: &[BTreeSet<Vec<i64>>],
    li: usize,
    j0: u32,
    cell: &[i64],
    acc: f64,
    d: usize,
    side_scale: f64,
    expo: f64,
    maxagg: bool,
) -> f64 {
    let j = j0 + li as u32;
    let v = nodes.get(&(j, cell.to_vec())).copied().unwrap_or(0.0);
    let acc = if maxagg { acc.max(v) } else { acc + v };
    let side = side_scale * 0.5f64.powi(j as i32);
    let vol = side.powi(d as i32);
    let leaf = |a: f64| if a > 0.0 { a.powf(expo) } else { 0.0 };
    if li + 1 >= levels.len() {
        return vol * leaf(acc);
    }
    let child_vol = vol / (1u64 << d) as f64;
    let mut covered = 0usize;
    let mut total = 0.0;
    let mut child = vec![0i64; d];
    for t in 0..(1usize << d) {
        for ax in 0..d {
            child[ax] = 2 * cell[ax] + ((t >> ax) & 1) as i64;
        }
        if levels[li + 1].contains(&child) {
            covered += 1;
            total += rec_cell(
                nodes, levels, li + 1, j0, &child, acc, d, side_scale, expo, maxagg,
            );
        }
    }
    total + (vol - covered as f64 * child_vol) * leaf(acc)
}

/// Exact integral of the piecewise-constant function whose value on the leaf
/// region of a cell is (accumulated value along the chain)^expo. Cells at
/// level j have side `side_scale * 2^-j` and nest dyadically.
fn box_integral(nodes: &BoxNodes, j0: u32, jmax: u32, d: usize, side_scale: f64, expo: f64) -> f64 {
    if nodes.nodes.is_empty() {
        return 0.0;
    }
    let nlev = (jmax - j0 + 1) as usize;
    let mut levels: Vec<BTreeSet<Vec<i64>>> = vec![BTreeSet::new(); nlev];
    for (j, k) in nodes.nodes.keys() {
        levels[(*j - j0) as usize].insert(k.clone());
    }
    for li in (1..nlev).rev() {
        let parents: Vec<Vec<i64>> = levels[li]
            .iter()
            .map(|k| k.iter().map(|&ki| ki.div_euclid(2)).collect())
            .collect();
        for p in parents {
            levels[li - 1].insert(p);
        }
    }
    let roots: Vec<Vec<i64>> = levels[0].iter().cloned().collect();
    roots
        .iter()
        .map(|r| {
            rec_cell(
                &nodes.nodes,
                &levels,
                0,
                j0,
                r,
                0.0,
                d,
                side_scale,
                expo,
                nodes.maxagg,
            )
        })
        .sum()
}

fn norm_exponents(params: &NormParams) -> Result<(f64, Option<f64>, f64)> {
    let p = params.p;
    if !p.is_finite() || p <= 0.0 {
        return Err(Error::Parameter(format!("p = {p} outside (0, infinity)")));
    }
    match params.q {
        Some(q) if q > 0.0 && q.is_finite() => Ok((p, Some(q), p / q)),
        Some(q) => Err(Error::Parameter(format!("q = {q} outside (0, infinity]"))),
        None => Ok((p, None, p)),
    }
}

// ---------------------------------------------------------------------------
// Discrete sequence norms
// ---------------------------------------------------------------------------

/// Discrete F^s_{p,q} quasi-norm over the rho box system, Eq.-(4.7) style,
/// computed exactly as a piecewise-constant integral.
pub fn f_norm_discrete(coeffs: &CoefficientSet, params: &NormParams) -> Result<f64> {
    let (p, q, expo) = norm_exponents(params)?;
    if coeffs.is_empty() {
        return Ok(0.0);
    }
    let index = coeffs.index();
    let d = index.d;
    let mut nodes = BoxNodes::new(q.is_none());
    for (j, _, k, c) in coeffs.iter() {
        if c == 0.0 {
            continue;
        }
        let t = 2f64.powf(j as f64 * (params.s + 0.5 * d as f64)) * c.abs();
        let cell = match index.m {
            Smoothness::Finite(_) => k.to_vec(),
            Smoothness::Infinite => index.reduce_to_lambda(j, k),
        };
        nodes.add(j, cell, t, q.unwrap_or(1.0));
    }
    let side_scale = 1.0 / index.lambda as f64;
    Ok(box_integral(&nodes, coeffs.j0(), coeffs.jmax(), d, side_scale, expo).powf(1.0 / p))
}

/// Discrete B^s_{p,q} norm, Eq.-(4.9) style.
pub fn b_norm_discrete(coeffs: &CoefficientSet, params: &NormParams) -> Result<f64> {
    let p = params.p;
    if !p.is_finite() || p <= 0.0 {
        return Err(Error::Parameter(format!("p = {p} outside (0, infinity)")));
    }
    let d = coeffs.d() as f64;
    let mut inner: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for (j, e, _, c) in coeffs.iter() {
        if c != 0.0 {
            *inner.entry((j, e)).or_insert(0.0) += c.abs().powf(p);
        }
    }
    match params.q {
        Some(q) if q > 0.0 && q.is_finite() => {
            let mut total = 0.0;
            for ((j, _), s) in &inner {
                let w = 2f64.powf(*j as f64 * (params.s + 0.5 * d - d / p));
                total += w.powf(q) * s.powf(q / p);
            }
            Ok(total.powf(1.0 / q))
        }
        Some(q) => Err(Error::Parameter(format!("q = {q} outside (0, infinity]"))),
        None => {
            let mut sup = 0.0f64;
            for ((j, _), s) in &inner {
                let w = 2f64.powf(*j as f64 * (params.s + 0.5 * d - d / p));
                sup = sup.max(w * s.powf(1.0 / p));
            }
            Ok(sup)
        }
    }
}

/// Decay-augmented norm parameters for the f^{s,mu} variant.
#[derive(Debug, Clone, Copy)]
pub struct DecayNormParams {
    pub base: NormParams,
    pub mu: f64,
}

impl DecayNormParams {
    pub fn new(base: NormParams, mu: f64) -> Result<DecayNormParams> {
        if !(mu > 0.0) {
            return Err(Error::Parameter(format!("mu = {mu} must be positive")));
        }
        Ok(DecayNormParams { base, mu })
    }
}

/// f^{s,mu} norm: the discrete F-norm plus the decay supremum over the
/// translations outside Lambda_j (vacuous for finite m since Gamma_j is
/// contained in Lambda_j).
pub fn fmu_norm(coeffs: &CoefficientSet, params: &DecayNormParams) -> Result<f64> {
    let base = f_norm_discrete(coeffs, &params.base)?;
    let index = coeffs.index();
    let mut sup = 0.0f64;
    for (j, _, k, c) in coeffs.iter() {
        if c == 0.0 || index.in_lambda(j, k) {
            continue;
        }
        let scale = 0.5f64.powi(j as i32);
        let knorm = k
            .iter()
            .fold(0.0f64, |a, &ki| a.max((ki as f64 * scale).abs()));
        sup = sup.max(2f64.powf(j as f64 * params.mu) * (knorm + 1.0).powf(params.mu) * c.abs());
    }
    Ok(base + sup)
}

/// The pointwise q-function of Eq.-(7.6) type over the chi box system
/// chi_{j,k} = 2^{jd/2} chi_I(2^j x - k), evaluated on the grid.
pub fn q_function(coeffs: &CoefficientSet, params: &NormParams, grid: Arc<Grid>) -> Result<SampledField> {
    let (_, q, _) = norm_exponents(params)?;
    let d = coeffs.d();
    let s = params.s;
    let j0 = coeffs.j0();
    let jmax = coeffs.jmax();
    let index = coeffs.index().clone();
    let out = SampledField::from_fn(grid, |x| {
        let mut acc = 0.0f64;
        let mut k = vec![0i64; d];
        for j in j0..=jmax {
            let two_j = (1i64 << j) as f64;
            for (ax, &xi) in x.iter().enumerate() {
                k[ax] = (two_j * xi).floor() as i64;
            }
            let weight = 2f64.powf(j as f64 * (s + 0.5 * d as f64));
            for e in index.e_masks(j) {
                let c = coeffs.get(j, e, &k);
                if c == 0.0 {
                    continue;
                }
                let t = weight * c.abs();
                match q {
                    Some(q) => acc += t.powf(q),
                    None => acc = acc.max(t),
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

/// Exact L^p norm of the q-function (piecewise-constant integral over the
/// chi boxes).
pub fn q_norm(coeffs: &CoefficientSet, params: &NormParams) -> Result<f64> {
    let (p, q, expo) = norm_exponents(params)?;
    if coeffs.is_empty() {
        return Ok(0.0);
    }
    let d = coeffs.d();
    let mut nodes = BoxNodes::new(q.is_none());
    for (j, _, k, c) in coeffs.iter() {
        if c == 0.0 {
            continue;
        }
        let t = 2f64.powf(j as f64 * (params.s + 0.5 * d as f64)) * c.abs();
        nodes.add(j, k.to_vec(), t, q.unwrap_or(1.0));
    }
    Ok(box_integral(&nodes, coeffs.j0(), coeffs.jmax(), d, 1.0, expo).powf(1.0 / p))
}

/// Restriction of a raw Meyer coefficient set to the Z_lambda tail: keeps
/// the translations in partition cells Lambda_{j,l} with |l|_inf > lambda.
pub fn z_tail_coefficients(coeffs: &CoefficientSet, lambda_test: i64) -> CoefficientSet {
    let mut out = CoefficientSet::new(coeffs.index().clone(), coeffs.jmax());
    for (j, e, k, c) in coeffs.iter() {
        let l = FrameIndex::partition_cell(j, k);
        if l.iter().any(|&li| li.abs() > lambda_test) {
            out.insert_raw(j, e, k.to_vec(), c);
        }
    }
    out
}

/// ||q(Z_lambda f)||_p for an input supported in [-1,1]^d.
pub fn z_tail_norm(
    frame: &LocalFrame,
    f: &SampledField,
    lambda_test: i64,
    params: &NormParams,
    jmax: u32,
) -> Result<f64> {
    let raw = meyer_coefficients(frame, f, jmax)?;
    q_norm(&z_tail_coefficients(&raw, lambda_test), params)
}

/// The periodised quasi-norm integral of Eq.-(4.10) type: each translation is
/// folded onto its representative in Lambda_j (with respect to the given
/// lambda) before the exact piecewise-constant integration. Returns the
/// p-integral itself (no p-th root).
pub fn periodized_norm(coeffs: &CoefficientSet, params: &NormParams, lambda: u32) -> Result<f64> {
    periodized_integral(coeffs, params, lambda, false)
}

/// Fraction of the periodised integral contributed by the wrapped
/// (l != 0) translations.
pub fn periodized_tail_fraction(
    coeffs: &CoefficientSet,
    params: &NormParams,
    lambda: u32,
) -> Result<f64> {
    let total = periodized_integral(coeffs, params, lambda, false)?;
    if total <= 0.0 {
        return Ok(0.0);
    }
    let central = periodized_integral(coeffs, params, lambda, true)?;
    Ok(((total - central) / total).max(0.0))
}

fn periodized_integral(
    coeffs: &CoefficientSet,
    params: &NormParams,
    lambda: u32,
    central_only: bool,
) -> Result<f64> {
    let (_, q, expo) = norm_exponents(params)?;
    if coeffs.is_empty() {
        return Ok(0.0);
    }
    if lambda < 2 {
        return Err(Error::Parameter(format!("lambda {lambda} must be >= 2")));
    }
    let d = coeffs.d();
    let mut nodes = BoxNodes::new(q.is_none());
    for (j, _, k, c) in coeffs.iter() {
        if c == 0.0 {
            continue;
        }
        let rep: Vec<i64> = k.iter().map(|&ki| reduce_axis(lambda, j, ki)).collect();
        if central_only && rep != k {
            continue;
        }
        let t = 2f64.powf(j as f64 * (params.s + 0.5 * d as f64)) * c.abs();
        nodes.add(j, rep, t, q.unwrap_or(1.0));
    }
    Ok(box_integral(&nodes, coeffs.j0(), coeffs.jmax(), d, 1.0, expo))
}
