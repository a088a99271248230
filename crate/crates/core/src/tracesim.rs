//! Desk-scale model of the spectral side of the trace estimate.
//!
//! A synthetic spectrum is a list of atoms, each a tuple of per-factor spherical
//! parameters with a multiplicity. The estimator `H_{r,R}` bounds one atom's
//! contribution to the trace of the convolution operator built from small balls
//! on factors `0..k` and large balls on factors `k..l`. Factor indices are 0-based.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::diophantine::{schedule_r, DiophError, SplitShape};
use crate::hypgeom::{cartan_radius, GeomError, Mat2, RhoParam};
use crate::latenum::{ls_slope, units_in_balls, EnumError, EnumOptions, IsometryPair, LatticeElement, PlaceBall};
use crate::quad::{integrate_real, QuadError, QuadTol};
use crate::quaternion::AlgebraDesc;
use crate::spectral::RadialProfile;

/// Largest dimension handled by the Stieltjes routines.
pub const MAX_STIELTJES_DIM: usize = 3;
/// Smallest admissible decay power in the estimator.
pub const MIN_DECAY_POWER: u32 = 4;

const CHUNK: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("parameters do not match the partition: {0}")]
    Mismatch(String),
    #[error("dimension {0} unsupported (1..=3)")]
    Dimension(usize),
    #[error("kernel coverage insufficient: need radii ({:.6}, {:.6}) but elements cover ({:.6}, {:.6})", need.0, need.1, have.0, have.1)]
    Coverage { need: (f64, f64), have: (f64, f64) },
    #[error("synthetic spectrum still violates the density bound after {0} halvings")]
    Density(u32),
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Dioph(#[from] DiophError),
}

// ---------------------------------------------------------------------------
// Atoms and partitions

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Param {
    /// Tempered: `z = i t`, `t >= 0`.
    Principal(f64),
    /// Complementary series: `z = s`, `0 < s < 1/2`.
    Complementary(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumAtom {
    pub params: Vec<Param>,
    pub mult: u64,
}

impl SpectrumAtom {
    pub fn new(params: Vec<Param>, mult: u64) -> Result<Self, TraceError> {
        if mult == 0 {
            return Err(TraceError::BadParam("multiplicity must be positive".into()));
        }
        for p in &params {
            match *p {
                Param::Principal(t) if t >= 0.0 && t.is_finite() => {}
                Param::Complementary(s) if s > 0.0 && s < 0.5 => {}
                _ => return Err(TraceError::BadParam(format!("parameter {p:?} out of range"))),
            }
        }
        Ok(Self { params, mult })
    }

    /// Bit `j` set iff factor `j` is principal.
    pub fn principal_mask(&self) -> u32 {
        self.params
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, Param::Principal(_)))
            .fold(0, |m, (j, _)| m | 1 << j)
    }
}

/// `{0..k} = I_pr + I_comp` and `{k..l} = J_pr + J_comp`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionShape {
    pub k: usize,
    pub l: usize,
    pub i_pr: Vec<usize>,
    pub i_comp: Vec<usize>,
    pub j_pr: Vec<usize>,
    pub j_comp: Vec<usize>,
}

impl PartitionShape {
    /// Shape whose principal factors are the set bits of `mask`.
    pub fn from_mask(k: usize, l: usize, mask: u32) -> Result<Self, TraceError> {
        if k == 0 || k >= l || l > 31 {
            return Err(TraceError::BadParam(format!("need 1 <= k < l <= 31, got k = {k}, l = {l}")));
        }
        if mask >> l != 0 {
            return Err(TraceError::Mismatch(format!("mask {mask:#b} has bits beyond l = {l}")));
        }
        let pr = |j: &usize| mask >> j & 1 == 1;
        let (i_pr, i_comp) = (0..k).partition(pr);
        let (j_pr, j_comp) = (k..l).partition(pr);
        Ok(Self { k, l, i_pr, i_comp, j_pr, j_comp })
    }

    /// Principal sets given explicitly; the complements are filled in.
    pub fn new(k: usize, l: usize, i_pr: &[usize], j_pr: &[usize]) -> Result<Self, TraceError> {
        let mut mask = 0u32;
        for &j in i_pr {
            if j >= k {
                return Err(TraceError::Mismatch(format!("I_pr index {j} not below k = {k}")));
            }
            mask |= 1 << j;
        }
        for &j in j_pr {
            if j < k || j >= l {
                return Err(TraceError::Mismatch(format!("J_pr index {j} outside {k}..{l}")));
            }
            mask |= 1 << j;
        }
        Self::from_mask(k, l, mask)
    }

    /// `I_pr = {0..k}`, `J_comp = {k..l}`.
    pub fn worst_case(k: usize, l: usize) -> Result<Self, TraceError> {
        Self::from_mask(k, l, (1 << k) - 1)
    }

    pub fn mask(&self) -> u32 {
        self.i_pr.iter().chain(&self.j_pr).fold(0, |m, j| m | 1 << j)
    }
}

fn check_common(r: f64, big_r: f64, n: u32, dims: &[usize], l: usize) -> Result<(), TraceError> {
    if n < MIN_DECAY_POWER {
        return Err(TraceError::BadParam(format!("N must be at least {MIN_DECAY_POWER}, got {n}")));
    }
    if !(r > 0.0 && big_r > 0.0 && r.is_finite() && big_r.is_finite()) {
        return Err(TraceError::BadParam(format!("radii must be positive, got r = {r}, R = {big_r}")));
    }
    if dims.len() != l || dims.iter().any(|&d| d < 2) {
        return Err(TraceError::Mismatch(format!("{} dims for {l} factors: {dims:?}", dims.len())));
    }
    Ok(())
}

/// `prod_{j<k} r^{d_j} prod_{I_pr} (1+r t)^{-N} prod_{J_pr} (1+R t)^{-N} prod_{J_comp} e^{2 s (d-1) R}`.
///
/// `t` must be keyed by exactly `I_pr + J_pr`; `s` must cover `J_comp` and may
/// also carry `I_comp` entries, which do not enter.
pub fn estimator_h(
    r: f64,
    big_r: f64,
    shape: &PartitionShape,
    s: &BTreeMap<usize, f64>,
    t: &BTreeMap<usize, f64>,
    n: u32,
    dims: &[usize],
) -> Result<f64, TraceError> {
    check_common(r, big_r, n, dims, shape.l)?;
    let mut want_t: Vec<usize> = shape.i_pr.iter().chain(&shape.j_pr).copied().collect();
    want_t.sort_unstable();
    if t.keys().copied().collect::<Vec<_>>() != want_t {
        return Err(TraceError::Mismatch(format!("t keys {:?}, principal factors {want_t:?}", t.keys().collect::<Vec<_>>())));
    }
    for j in &shape.j_comp {
        if !s.contains_key(j) {
            return Err(TraceError::Mismatch(format!("missing s for complementary factor {j}")));
        }
    }
    if let Some(j) = s.keys().find(|j| !shape.i_comp.contains(j) && !shape.j_comp.contains(j)) {
        return Err(TraceError::Mismatch(format!("s given for principal factor {j}")));
    }
    if let Some(v) = t.values().chain(s.values()).find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(TraceError::BadParam(format!("parameter {v} must be finite and nonnegative")));
    }
    let nf = -(n as f64);
    let mut h: f64 = (0..shape.k).map(|j| r.powi(dims[j] as i32)).product();
    h *= shape.i_pr.iter().map(|j| (1.0 + r * t[j]).powf(nf)).product::<f64>();
    h *= shape.j_pr.iter().map(|j| (1.0 + big_r * t[j]).powf(nf)).product::<f64>();
    let expo: f64 = shape.j_comp.iter().map(|j| 2.0 * s[j] * (dims[*j] as f64 - 1.0)).sum();
    Ok(h * (expo * big_r).exp())
}

/// The estimator for one atom, without the bookkeeping checks.
fn atom_h(atom: &SpectrumAtom, r: f64, big_r: f64, n: u32, dims: &[usize], k: usize) -> f64 {
    let nf = -(n as f64);
    let mut h = 1.0;
    let mut expo = 0.0;
    for (j, p) in atom.params.iter().enumerate() {
        let d = dims[j] as f64;
        if j < k {
            h *= r.powi(dims[j] as i32);
        }
        match (*p, j < k) {
            (Param::Principal(t), true) => h *= (1.0 + r * t).powf(nf),
            (Param::Principal(t), false) => h *= (1.0 + big_r * t).powf(nf),
            (Param::Complementary(s), false) => expo += 2.0 * s * (d - 1.0),
            (Param::Complementary(_), true) => {}
        }
    }
    h * (expo * big_r).exp()
}

/// Sum over fixed-size chunks, then over chunk totals, so the result does not depend on scheduling.
fn chunked_sum<T: Sync>(items: &[T], f: impl Fn(&T) -> f64 + Sync) -> f64 {
    let parts: Vec<f64> = items.par_chunks(CHUNK).map(|c| c.iter().map(&f).sum()).collect();
    parts.iter().sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceBreakdown {
    pub total: f64,
    /// Contribution per principal-factor mask.
    pub by_mask: BTreeMap<u32, f64>,
}

fn check_spectrum(spectrum: &[SpectrumAtom], l: usize) -> Result<(), TraceError> {
    match spectrum.iter().find(|a| a.params.len() != l) {
        Some(a) => Err(TraceError::Mismatch(format!("atom with {} factors, expected {l}", a.params.len()))),
        None => Ok(()),
    }
}

/// `sum mult * H_{r,R}` split by partition shape.
pub fn trace_breakdown(
    spectrum: &[SpectrumAtom],
    r: f64,
    big_r: f64,
    n: u32,
    dims: &[usize],
    k: usize,
) -> Result<TraceBreakdown, TraceError> {
    let l = dims.len();
    PartitionShape::from_mask(k, l, 0)?;
    check_common(r, big_r, n, dims, l)?;
    check_spectrum(spectrum, l)?;
    let mut by_mask = BTreeMap::new();
    let mut sorted: Vec<(u32, &SpectrumAtom)> = spectrum.iter().map(|a| (a.principal_mask(), a)).collect();
    sorted.sort_by_key(|(m, _)| *m);
    for group in sorted.chunk_by(|a, b| a.0 == b.0) {
        let v = chunked_sum(group, |(_, a)| a.mult as f64 * atom_h(a, r, big_r, n, dims, k));
        by_mask.insert(group[0].0, v);
    }
    Ok(TraceBreakdown {
        total: by_mask.values().sum(),
        by_mask,
    })
}

pub fn trace_sum(spectrum: &[SpectrumAtom], r: f64, big_r: f64, n: u32, dims: &[usize], k: usize) -> Result<f64, TraceError> {
    Ok(trace_breakdown(spectrum, r, big_r, n, dims, k)?.total)
}

/// Split shape with the group parameter read off each factor dimension.
pub fn split_shape(k: usize, dims: &[usize]) -> Result<SplitShape, TraceError> {
    let rhos = dims
        .iter()
        .map(|&d| RhoParam::from_value((d as f64 - 1.0) / 2.0).ok_or_else(|| TraceError::BadParam(format!("no factor of dimension {d}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SplitShape::new(k, rhos)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub big_r: f64,
    pub r: f64,
    pub trace: TraceBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Slope of `log trace_sum` against `R`.
    pub growth_exponent: f64,
    pub worst_mask: u32,
    /// The worst-case shape carries the largest share at every `R`.
    pub worst_dominates: bool,
}

/// Trace sums along the matching-volume schedule `r = schedule_r(R)`.
pub fn trace_scaling(spectrum: &[SpectrumAtom], dims: &[usize], k: usize, n: u32, r_list: &[f64]) -> Result<ScalingReport, TraceError> {
    if r_list.len() < 2 {
        return Err(TraceError::BadParam("need at least two values of R".into()));
    }
    let shape = split_shape(k, dims)?;
    let worst_mask = PartitionShape::worst_case(k, dims.len())?.mask();
    let mut rows = Vec::new();
    for &big_r in r_list {
        let r = schedule_r(big_r, &shape)?;
        rows.push(ScalingRow {
            big_r,
            r,
            trace: trace_breakdown(spectrum, r, big_r, n, dims, k)?,
        });
    }
    if let Some(row) = rows.iter().find(|row| !(row.trace.total > 0.0)) {
        return Err(TraceError::BadParam(format!("trace sum vanishes at R = {}", row.big_r)));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.big_r).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.trace.total.ln()).collect();
    let worst_dominates = rows.iter().all(|row| {
        let w = row.trace.by_mask.get(&worst_mask).copied().unwrap_or(0.0);
        w > 0.0 && row.trace.by_mask.iter().all(|(m, v)| *m == worst_mask || *v < w)
    });
    Ok(ScalingReport {
        rows,
        growth_exponent: ls_slope(&xs, &ys).0,
        worst_mask,
        worst_dominates,
    })
}

// ---------------------------------------------------------------------------
// Density-compliant synthetic spectra

/// Atoms with principal mask `q` whose principal parameters are `<= tau_j` and
/// complementary parameters are `> sigma_j`. Entries of the other kind are ignored.
pub fn count_in_box(spectrum: &[SpectrumAtom], q: u32, sigma: &[f64], tau: &[f64]) -> u64 {
    spectrum
        .iter()
        .filter(|a| a.principal_mask() == q)
        .filter(|a| {
            a.params.iter().enumerate().all(|(j, p)| match *p {
                Param::Principal(t) => t <= tau[j],
                Param::Complementary(s) => s > sigma[j],
            })
        })
        .map(|a| a.mult)
        .sum()
}

/// `C prod_{j in Q} (1+T)^{d_j (1 - 2 m(sigma)) + delta}` with `m(sigma) = max_{j not in Q} sigma_j`.
pub fn density_bound(dims: &[usize], q: u32, sigma: &[f64], t: f64, c: f64, delta: f64) -> f64 {
    let m = (0..dims.len()).filter(|j| q >> j & 1 == 0).map(|j| sigma[j]).fold(0.0, f64::max);
    let e: f64 = (0..dims.len()).filter(|j| q >> j & 1 == 1).map(|j| dims[j] as f64 * (1.0 - 2.0 * m) + delta).sum();
    c * (1.0 + t).powf(e)
}

/// Box count against the density bound at one `(Q, sigma, T)`.
pub fn density_count_check(spectrum: &[SpectrumAtom], dims: &[usize], q: u32, sigma: &[f64], t: f64, c: f64, delta: f64) -> bool {
    let tau = vec![t; dims.len()];
    count_in_box(spectrum, q, sigma, &tau) as f64 <= density_bound(dims, q, sigma, t, c, delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityViolation {
    pub q: u32,
    pub sigma: Vec<f64>,
    pub t: f64,
    pub count: u64,
    pub bound: f64,
}

/// Verification grid: each complementary coordinate of `sigma` ranges over `sigmas` independently.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub sigmas: Vec<f64>,
    pub ts: Vec<f64>,
    pub c: f64,
    pub delta: f64,
}

impl DensityGrid {
    pub fn standard(t_max: f64) -> Self {
        Self {
            sigmas: vec![0.01, 0.05, 0.1, 0.25, 0.4],
            ts: [1e-3, 1e-2, 0.1, 0.5, 1.0].iter().map(|f| f * t_max).collect(),
            c: 2.0,
            delta: 0.1,
        }
    }
}

/// First grid point where the density bound fails, if any.
pub fn density_grid_check(spectrum: &[SpectrumAtom], dims: &[usize], grid: &DensityGrid) -> Option<DensityViolation> {
    let l = dims.len();
    for q in 0u32..1 << l {
        let free: Vec<usize> = (0..l).filter(|j| q >> j & 1 == 0).collect();
        let combos = grid.sigmas.len().pow(free.len() as u32);
        for idx in 0..combos {
            let mut sigma = vec![0.0; l];
            let mut rest = idx;
            for &j in &free {
                sigma[j] = grid.sigmas[rest % grid.sigmas.len()];
                rest /= grid.sigmas.len();
            }
            for &t in &grid.ts {
                let count = count_in_box(spectrum, q, &sigma, &vec![t; l]);
                let bound = density_bound(dims, q, &sigma, t, grid.c, grid.delta);
                if count as f64 > bound {
                    return Some(DensityViolation { q, sigma, t, count, bound });
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub dims: Vec<usize>,
    pub t_max: f64,
    /// Spectral gap: every complementary parameter is at most `1/2 - gap`.
    pub gap: f64,
    /// `c` in the tempered intensity `c t^{d-1} dt` per factor.
    pub tempered_intensity: f64,
    /// Scale of the complementary layers.
    pub comp_intensity: f64,
    /// Complementary levels `s = (1/2 - gap) 2^{-m}`, `m < levels`.
    pub levels: usize,
}

impl SynthConfig {
    /// The two-factor setup used by the scaling experiment.
    pub fn desk(seed: u64) -> Self {
        Self {
            seed,
            dims: vec![2, 2],
            t_max: 1000.0,
            gap: 0.05,
            tempered_intensity: 1e-4,
            comp_intensity: 0.05,
            levels: 6,
        }
    }

    pub fn s_levels(&self) -> Vec<f64> {
        let top = 0.5 - self.gap;
        (0..self.levels).map(|m| top * 0.5f64.powi(m as i32)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpectrum {
    pub atoms: Vec<SpectrumAtom>,
    /// Global intensity factor after rescaling.
    pub scale: f64,
    pub halvings: u32,
}

const MAX_HALVINGS: u32 = 60;

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda > 0.0 {
        Poisson::new(lambda).map(|p| p.sample(rng) as u64).unwrap_or(0)
    } else {
        0
    }
}

/// Radius with distribution `t^{e-1}` on `(0, T]`.
fn power_law(rng: &mut ChaCha8Rng, t_max: f64, e: f64) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    t_max * u.powf(1.0 / e)
}

fn generate(cfg: &SynthConfig, scale: f64) -> Vec<SpectrumAtom> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let l = cfg.dims.len();
    let all = (1u32 << l) - 1;
    let levels = cfg.s_levels();
    let mut atoms = Vec::new();
    for mask in 0..=all {
        if mask == 0 {
            // The bound caps this box at C for every sigma: a single atom on the lowest layer.
            if cfg.comp_intensity > 0.0 {
                atoms.push(SpectrumAtom {
                    params: vec![Param::Complementary(levels[levels.len() - 1]); l],
                    mult: 1,
                });
            }
            continue;
        }
        let layers: Vec<Option<f64>> = if mask == all { vec![None] } else { levels.iter().map(|&s| Some(s)).collect() };
        for s in layers {
            // Per-factor exponent of the cumulative count: d for tempered, d (1 - 2s) on a complementary layer.
            let expo = |j: usize| cfg.dims[j] as f64 * s.map_or(1.0, |s| 1.0 - 2.0 * s);
            let lambda = match s {
                None => (0..l).map(|j| cfg.tempered_intensity * cfg.t_max.powf(expo(j)) / expo(j)).product::<f64>(),
                Some(_) => cfg.comp_intensity * (0..l).filter(|j| mask >> j & 1 == 1).map(|j| cfg.t_max.powf(expo(j))).product::<f64>(),
            };
            for _ in 0..poisson(&mut rng, scale * lambda) {
                let params = (0..l)
                    .map(|j| match (mask >> j & 1 == 1, s) {
                        (true, _) => Param::Principal(power_law(&mut rng, cfg.t_max, expo(j))),
                        (false, Some(s)) => Param::Complementary(s),
                        (false, None) => unreachable!("the tempered layer has no complementary factor"),
                    })
                    .collect();
                atoms.push(SpectrumAtom { params, mult: 1 });
            }
        }
    }
    atoms
}

/// Seeded synthetic spectrum, halving the intensity until the density bound holds on the standard grid.
pub fn synth_spectrum(cfg: &SynthConfig) -> Result<SynthSpectrum, TraceError> {
    if !(cfg.gap > 0.0 && cfg.gap < 0.5) {
        return Err(TraceError::BadParam(format!("gap must lie in (0, 1/2), got {}", cfg.gap)));
    }
    if cfg.dims.is_empty() || cfg.dims.len() > 8 || cfg.dims.iter().any(|&d| d < 2) {
        return Err(TraceError::BadParam(format!("bad factor dimensions {:?}", cfg.dims)));
    }
    if !(cfg.t_max >= 0.0 && cfg.t_max.is_finite()) || cfg.tempered_intensity < 0.0 || cfg.comp_intensity < 0.0 || cfg.levels == 0 {
        return Err(TraceError::BadParam("t_max, intensities and levels must be nonnegative, levels at least 1".into()));
    }
    let grid = DensityGrid::standard(cfg.t_max.max(1.0));
    let mut scale = 1.0;
    for halvings in 0..=MAX_HALVINGS {
        let atoms = generate(cfg, scale);
        if density_grid_check(&atoms, &cfg.dims, &grid).is_none() {
            return Ok(SynthSpectrum { atoms, scale, halvings });
        }
        scale *= 0.5;
    }
    Err(TraceError::Density(MAX_HALVINGS))
}

// ---------------------------------------------------------------------------
// One-dimensional integrals of the proof

/// `d (1 - 2m) + delta`, the density exponent of one principal factor.
pub fn density_exponent(d: usize, m: f64, delta: f64) -> f64 {
    d as f64 * (1.0 - 2.0 * m) + delta
}

/// `int_0^inf (1+tau)^p (1 + scale tau)^{-N-1} dtau`, finite when `p < N`.
pub fn branch_integral(p: f64, scale: f64, n: u32) -> Result<f64, TraceError> {
    let nf = n as f64;
    if !(p < nf) || !(scale > 0.0) {
        return Err(TraceError::BadParam(format!("need p < N and scale > 0, got p = {p}, N = {n}, scale = {scale}")));
    }
    // tau = e^x - 1; the integrand decays like e^{(p - N) x} past x = ln(1/scale).
    let knee = (1.0 / scale).ln().max(0.0);
    let end = knee + 60.0 / (nf - p);
    let g = |x: f64| {
        let tau = x.exp_m1();
        (x * (p + 1.0)).exp() * (1.0 + scale * tau).powf(-nf - 1.0)
    };
    let tol = QuadTol {
        abs: 0.0,
        rel: 1e-11,
        max_evals: 1_000_000,
    };
    let head = if knee > 0.0 { integrate_real(g, 0.0, knee, &tol)? } else { 0.0 };
    Ok(head + integrate_real(g, knee, end, &tol)?)
}

/// `r^{d (2m - 1) - 1 - delta}`, the stated order of the small-ball branch.
pub fn branch_bound(d: usize, m: f64, delta: f64, r: f64) -> f64 {
    r.powf(-density_exponent(d, m, delta) - 1.0)
}

// ---------------------------------------------------------------------------
// Multidimensional Stieltjes integration

#[derive(Debug, Clone, PartialEq)]
pub struct RectBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl RectBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, TraceError> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(TraceError::BadParam(format!("bad box {lo:?} x {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// A right-continuous distribution function on `R^l`.
pub trait Cdf: Sync {
    fn dim(&self) -> usize;
    fn cdf(&self, x: &[f64]) -> f64;
}

/// `phi(x) = sum mass * [p <= x]` coordinatewise.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    pub dim: usize,
    pub atoms: Vec<(Vec<f64>, f64)>,
}

impl Cdf for AtomicMeasure {
    fn dim(&self) -> usize {
        self.dim
    }
    fn cdf(&self, x: &[f64]) -> f64 {
        self.atoms
            .iter()
            .filter(|(p, _)| p.iter().zip(x).all(|(a, b)| a <= b))
            .map(|(_, m)| m)
            .sum()
    }
}

/// A test function with mixed first partials `d^{|S|} f / prod_{j in S} dx_j`.
pub trait SmoothFn: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    fn partial(&self, mask: u32, x: &[f64]) -> f64;
}

/// `sum_alpha c_alpha x^alpha` with every exponent at most `deg`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorPoly {
    pub dim: usize,
    pub deg: u32,
    /// Indexed by `sum_j alpha_j (deg+1)^j`.
    pub coeffs: Vec<f64>,
}

impl TensorPoly {
    pub fn random(rng: &mut impl Rng, dim: usize, deg: u32) -> Self {
        let n = (deg as usize + 1).pow(dim as u32);
        Self {
            dim,
            deg,
            coeffs: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self { dim, deg: 0, coeffs: vec![c] }
    }

    fn term(&self, idx: usize, mask: u32, x: &[f64]) -> f64 {
        let base = self.deg as usize + 1;
        let mut rest = idx;
        let mut v = 1.0;
        for (j, &xj) in x.iter().enumerate().take(self.dim) {
            let a = (rest % base) as i32;
            rest /= base;
            if mask >> j & 1 == 1 {
                if a == 0 {
                    return 0.0;
                }
                v *= a as f64 * xj.powi(a - 1);
            } else {
                v *= xj.powi(a);
            }
        }
        v
    }
}

impl SmoothFn for TensorPoly {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.partial(0, x)
    }
    fn partial(&self, mask: u32, x: &[f64]) -> f64 {
        self.coeffs.iter().enumerate().map(|(i, c)| c * self.term(i, mask, x)).sum()
    }
}

fn check_dims(f_dim: usize, phi_dim: usize, b: &RectBox) -> Result<usize, TraceError> {
    let l = b.dim();
    if l == 0 || l > MAX_STIELTJES_DIM {
        return Err(TraceError::Dimension(l));
    }
    if f_dim != l || phi_dim != l {
        return Err(TraceError::Mismatch(format!("f has dim {f_dim}, phi {phi_dim}, box {l}")));
    }
    Ok(l)
}

/// `int_B f dphi` for atomic `phi`: the atoms in the half-open box `prod (lo_j, hi_j]`.
pub fn stieltjes_integrate(f: &dyn SmoothFn, phi: &AtomicMeasure, b: &RectBox) -> Result<f64, TraceError> {
    check_dims(f.dim(), phi.dim, b)?;
    Ok(phi
        .atoms
        .iter()
        .filter(|(p, _)| p.iter().enumerate().all(|(j, &x)| b.lo[j] < x && x <= b.hi[j]))
        .map(|(p, m)| m * f.eval(p))
        .sum())
}

/// `Delta phi` over the box: inclusion-exclusion over its corners.
pub fn box_increment(phi: &dyn Cdf, b: &RectBox) -> f64 {
    let l = b.dim();
    let mut x = vec![0.0; l];
    (0u32..1 << l)
        .map(|c| {
            let mut sign = 1.0;
            for j in 0..l {
                x[j] = if c >> j & 1 == 1 { b.hi[j] } else { b.lo[j] };
                if c >> j & 1 == 0 {
                    sign = -sign;
                }
            }
            sign * phi.cdf(&x)
        })
        .sum()
}

/// Riemann-Stieltjes sums with midpoint tags on `2^m` cells per axis,
/// Romberg-extrapolated in `h^2` over `m = 1..=levels`.
pub fn stieltjes_smooth(f: &dyn SmoothFn, phi: &dyn Cdf, b: &RectBox, levels: u32) -> Result<f64, TraceError> {
    let l = check_dims(f.dim(), phi.dim(), b)?;
    if !(2..=10).contains(&levels) {
        return Err(TraceError::BadParam(format!("levels must lie in 2..=10, got {levels}")));
    }
    let mut table: Vec<f64> = Vec::new();
    for m in 1..=levels {
        let n = 1usize << m;
        let step: Vec<f64> = (0..l).map(|j| (b.hi[j] - b.lo[j]) / n as f64).collect();
        let node = |j: usize, i: usize| b.lo[j] + step[j] * i as f64;
        // Distribution function on the (n+1)^l node grid.
        let total_nodes = (n + 1).pow(l as u32);
        let grid: Vec<f64> = (0..total_nodes)
            .into_par_iter()
            .map(|id| {
                let mut x = [0.0; MAX_STIELTJES_DIM];
                let mut rest = id;
                for (j, xj) in x.iter_mut().enumerate().take(l) {
                    *xj = node(j, rest % (n + 1));
                    rest /= n + 1;
                }
                phi.cdf(&x[..l])
            })
            .collect();
        let cells: Vec<usize> = (0..n.pow(l as u32)).collect();
        let sum = chunked_sum(&cells, |&id| {
            let mut idx = [0usize; MAX_STIELTJES_DIM];
            let mut mid = [0.0; MAX_STIELTJES_DIM];
            let mut rest = id;
            for j in 0..l {
                idx[j] = rest % n;
                rest /= n;
                mid[j] = node(j, idx[j]) + 0.5 * step[j];
            }
            let mut inc = 0.0;
            for c in 0u32..1 << l {
                let mut flat = 0;
                let mut stride = 1;
                let mut sign = 1.0;
                for j in 0..l {
                    let hi = c >> j & 1;
                    flat += (idx[j] + hi as usize) * stride;
                    stride *= n + 1;
                    if hi == 0 {
                        sign = -sign;
                    }
                }
                inc += sign * grid[flat];
            }
            f.eval(&mid[..l]) * inc
        });
        // Romberg row: extrapolate against the previous row in powers of 4.
        let mut row = vec![sum];
        for (i, prev) in table.iter().enumerate() {
            let fac = 4f64.powi(i as i32 + 1);
            let v = (fac * row[i] - prev) / (fac - 1.0);
            row.push(v);
        }
        table = row;
    }
    Ok(*table.last().expect("at least two levels"))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, exact through degree 7.
const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
];

/// Right side of the integration-by-parts identity
/// `int_B f dphi = sum_S (-1)^{|S|} Delta_{S^c} int_{B_S} phi d_S f`,
/// where `Delta_{S^c}` takes signed corner values in the coordinates outside `S`
/// and `d_S f` is the mixed partial measure in the coordinates of `S`.
/// Cells between atom coordinates are integrated by 4-point Gauss-Legendre.
pub fn zaremba_rhs(f: &dyn SmoothFn, phi: &AtomicMeasure, b: &RectBox) -> Result<f64, TraceError> {
    let l = check_dims(f.dim(), phi.dim, b)?;
    let breaks: Vec<Vec<f64>> = (0..l)
        .map(|j| {
            let mut v: Vec<f64> = phi.atoms.iter().map(|(p, _)| p[j]).filter(|&x| b.lo[j] < x && x < b.hi[j]).collect();
            v.push(b.lo[j]);
            v.push(b.hi[j]);
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let mut total = 0.0;
    for s in 0u32..1 << l {
        let in_s: Vec<usize> = (0..l).filter(|j| s >> j & 1 == 1).collect();
        let out_s: Vec<usize> = (0..l).filter(|j| s >> j & 1 == 0).collect();
        let sign_s = if in_s.len().is_multiple_of(2) { 1.0 } else { -1.0 };
        for corner in 0u32..1 << out_s.len() {
            let mut x = vec![0.0; l];
            let mut sign = sign_s;
            for (i, &j) in out_s.iter().enumerate() {
                if corner >> i & 1 == 1 {
                    x[j] = b.hi[j];
                } else {
                    x[j] = b.lo[j];
                    sign = -sign;
                }
            }
            total += sign * face_integral(f, phi, s, &in_s, &breaks, &mut x);
        }
    }
    Ok(total)
}

/// `int phi d_S f` over the face spanned by `in_s`, other coordinates fixed in `x`.
fn face_integral(f: &dyn SmoothFn, phi: &AtomicMeasure, s: u32, in_s: &[usize], breaks: &[Vec<f64>], x: &mut [f64]) -> f64 {
    if in_s.is_empty() {
        return phi.cdf(x) * f.eval(x);
    }
    let counts: Vec<usize> = in_s.iter().map(|&j| breaks[j].len() - 1).collect();
    let ncells: usize = counts.iter().product();
    let mut acc = 0.0;
    for cell in 0..ncells {
        let mut rest = cell;
        let mut lo = [0.0; MAX_STIELTJES_DIM];
        let mut half = [0.0; MAX_STIELTJES_DIM];
        for (i, &j) in in_s.iter().enumerate() {
            let c = rest % counts[i];
            rest /= counts[i];
            lo[i] = breaks[j][c];
            half[i] = 0.5 * (breaks[j][c + 1] - breaks[j][c]);
            x[j] = lo[i] + half[i];
        }
        let level = phi.cdf(x);
        if level == 0.0 {
            continue;
        }
        let npts = GL4.len().pow(in_s.len() as u32);
        let mut quad = 0.0;
        for q in 0..npts {
            let mut r = q;
            let mut w = 1.0;
            for (i, &j) in in_s.iter().enumerate() {
                let (node, wt) = GL4[r % GL4.len()];
                r /= GL4.len();
                x[j] = lo[i] + half[i] * (1.0 + node);
                w *= wt * half[i];
            }
            quad += w * f.partial(s, x);
        }
        acc += level * quad;
    }
    acc
}

/// A random instance: polynomial `f` of degree at most 4 per variable, up to
/// eight signed atoms (some outside the box), and a box inside `[-1, 1.5]^dim`.
pub fn random_instance(rng: &mut impl Rng, dim: usize) -> (TensorPoly, AtomicMeasure, RectBox) {
    let lo: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..0.0)).collect();
    let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.2..1.5)).collect();
    let n = rng.gen_range(1..=8);
    let atoms = (0..n)
        .map(|_| ((0..dim).map(|_| rng.gen_range(-1.3..1.3)).collect(), rng.gen_range(-2.0..2.0)))
        .collect();
    let deg = rng.gen_range(0..=4);
    let f = TensorPoly::random(rng, dim, deg);
    (f, AtomicMeasure { dim, atoms }, RectBox { lo, hi })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZarembaCase {
    pub dim: usize,
    pub index: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Both sides of the identity on `count` seeded random instances per dimension.
pub fn zaremba_self_test(seed: u64, counts: &[(usize, usize)]) -> Result<Vec<ZarembaCase>, TraceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &(dim, count) in counts {
        for index in 0..count {
            let (f, phi, b) = random_instance(&mut rng, dim);
            out.push(ZarembaCase {
                dim,
                index,
                lhs: stieltjes_integrate(&f, &phi, &b)?,
                rhs: zaremba_rhs(&f, &phi, &b)?,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Geometric side: the pre-trace kernel at one point

/// Radial profiles on the two factors; `F(g) = first(t1) * second(t2)`.
pub struct KernelPair<'a> {
    pub first: &'a dyn RadialProfile,
    pub second: &'a dyn RadialProfile,
}

impl KernelPair<'_> {
    pub fn at_identity(&self) -> f64 {
        self.first.eval(0.0) * self.second.eval(0.0)
    }
}

fn check_unimodular(x: &IsometryPair) -> Result<(), TraceError> {
    for m in [&x.m1, &x.m2] {
        if (m.det() - 1.0).norm() > 1e-9 {
            return Err(TraceError::BadParam(format!("point matrix has determinant {}", m.det())));
        }
    }
    Ok(())
}

/// Enumeration radii needed to see every `gamma` with `F(x^{-1} gamma x) != 0`.
pub fn kernel_coverage(f: &KernelPair, x: &IsometryPair) -> Result<(f64, f64), TraceError> {
    check_unimodular(x)?;
    let t1 = cartan_radius(&x.m1, RhoParam::Half)?;
    let t2 = cartan_radius(&x.m2, RhoParam::Half)?;
    Ok((f.first.support() + 2.0 * t1, f.second.support() + 2.0 * t2))
}

fn kernel_sum(f: &KernelPair, x: &IsometryPair, elements: &[LatticeElement]) -> Result<f64, TraceError> {
    let (x1i, x2i) = (x.m1.inv_unimodular(), x.m2.inv_unimodular());
    let terms: Vec<f64> = elements
        .par_iter()
        .map(|e| -> Result<f64, GeomError> {
            let t1 = cartan_radius(&(x1i * e.matrices.m1 * x.m1), RhoParam::Half)?;
            if t1 >= f.first.support() {
                return Ok(0.0);
            }
            let t2 = cartan_radius(&(x2i * e.matrices.m2 * x.m2), RhoParam::Half)?;
            Ok(f.first.eval(t1) * f.second.eval(t2))
        })
        .collect::<Result<_, _>>()?;
    Ok(terms.iter().sum())
}

/// `sum_gamma F(x^{-1} gamma x)` over the `+-` classes in `elements`, which must
/// contain every unit with `(t1, t2)` inside `cover`.
pub fn kernel_diag(f: &KernelPair, x: &IsometryPair, elements: &[LatticeElement], cover: (f64, f64)) -> Result<f64, TraceError> {
    let need = kernel_coverage(f, x)?;
    if need.0 > cover.0 || need.1 > cover.1 {
        return Err(TraceError::Coverage { need, have: cover });
    }
    kernel_sum(f, x, elements)
}

/// Same sum, enumerating exactly the units with `t(x_p^{-1} sigma_p(gamma) x_p)` inside each support.
pub fn kernel_diag_search(a: &AlgebraDesc, f: &KernelPair, x: &IsometryPair, opts: &EnumOptions) -> Result<f64, TraceError> {
    check_unimodular(x)?;
    let ball = |place: u8, m: &Mat2, radius: f64| PlaceBall {
        place,
        left: m.inv_unimodular(),
        right: *m,
        radius,
    };
    let balls = [ball(1, &x.m1, f.first.support()), ball(2, &x.m2, f.second.support())];
    let (mut els, _) = units_in_balls(a, &balls, opts)?;
    crate::latenum::sort_elements(&mut els);
    kernel_sum(f, x, &els)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worst_case_mask_and_shape_roundtrip() {
        let w = PartitionShape::worst_case(2, 3).unwrap();
        assert_eq!((w.i_pr.clone(), w.j_comp.clone(), w.mask()), (vec![0, 1], vec![2], 0b011));
        let s = PartitionShape::new(1, 3, &[], &[2]).unwrap();
        assert_eq!((s.i_comp, s.j_pr, s.j_comp), (vec![0], vec![2], vec![1]));
        assert!(PartitionShape::new(1, 2, &[1], &[]).is_err());
    }

    #[test]
    fn tensor_poly_partials() {
        // f = 2 + 3x + 5y + 7xy on deg 1.
        let p = TensorPoly { dim: 2, deg: 1, coeffs: vec![2.0, 3.0, 5.0, 7.0] };
        let x = [0.5, -2.0];
        assert_eq!(p.eval(&x), 2.0 + 1.5 - 10.0 - 7.0);
        assert_eq!(p.partial(0b01, &x), 3.0 + 7.0 * -2.0);
        assert_eq!(p.partial(0b10, &x), 5.0 + 3.5);
        assert_eq!(p.partial(0b11, &x), 7.0);
    }

    #[test]
    fn power_law_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let t = power_law(&mut rng, 10.0, 0.3);
            assert!(t > 0.0 && t <= 10.0);
        }
    }
}
