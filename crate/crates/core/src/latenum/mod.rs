//! Enumeration of norm-one units of the order whose archimedean images lie in
//! products of hyperbolic balls, by Fincke–Pohst search over a Gram form on the
//! rank-8 integer module followed by exact verification.

mod export;
pub mod fp;
mod search;

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

pub use export::{decode_cache, elements_csv, encode_cache, read_cache, write_atomic, write_cache, write_csv, CacheError, CACHE_MAGIC};
pub use fp::{ellipsoid_points, Ellipsoid, LayerOrder, SearchStats};
pub use search::{search_strategies, FullLattice, NormSolve, UnitSearch, DEFAULT_STRATEGY};

use crate::hypgeom::{cartan_radius, GeomError, Mat2, RhoParam};
use crate::numberfield::{FieldError, QuadInt};
use crate::quaternion::{congruence_test, embed_matrix, quat_norm, AlgebraDesc, QuatElt, QuatError};

pub const DEFAULT_NODE_BUDGET: u64 = 100_000_000;
pub const NODE_BUDGET_ENV: &str = "HYPERLAT_NODE_BUDGET";
/// Relative inflation of the search ellipsoid.
pub const SEARCH_SLACK: f64 = 1e-9;
/// Absolute slack on per-factor radius checks.
pub const RADIUS_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnumError {
    #[error("enumeration node budget {budget} exceeded (partial result discarded; {found} units seen)")]
    BudgetExceeded { budget: u64, found: usize },
    #[error("Gram form is not positive definite (pivot {0} = {1})")]
    NotDefinite(usize, f64),
    #[error("radius must be non-negative and finite, got {0}")]
    BadRadius(f64),
    #[error("coordinate box too large for brute force: (2B+1)^8 = {0} exceeds budget")]
    BoxTooLarge(u128),
    #[error(transparent)]
    Quat(#[from] QuatError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("invalid node budget in {NODE_BUDGET_ENV}: {0}")]
    BadBudget(String),
    #[error(transparent)]
    UnknownStrategy(#[from] crate::registry::UnknownName),
}

impl From<FieldError> for EnumError {
    fn from(e: FieldError) -> Self {
        EnumError::Quat(QuatError::Field(e))
    }
}

/// Symmetric 8x8 form in the basis `(1, w, i, iw, j, jw, ij, ijw)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramForm {
    pub g: [[f64; 8]; 8],
}

impl GramForm {
    pub fn eval(&self, c: &[i64; 8]) -> f64 {
        let mut s = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                s += self.g[i][j] * c[i] as f64 * c[j] as f64;
            }
        }
        s
    }

    /// Cholesky pivots in natural order; errors if any is non-positive.
    pub fn cholesky_pivots(&self) -> Result<[f64; 8], EnumError> {
        let l = fp::cholesky(&self.g, &fp::identity_order())?;
        let mut p = [0.0; 8];
        for (i, v) in p.iter_mut().enumerate() {
            *v = l[i][i] * l[i][i];
        }
        Ok(p)
    }
}

/// The two matrix images of a lattice element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsometryPair {
    pub m1: Mat2,
    pub m2: Mat2,
}

impl IsometryPair {
    pub fn get(&self, place: u8) -> &Mat2 {
        if place == 1 {
            &self.m1
        } else {
            &self.m2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeElement {
    pub q: QuatElt,
    pub radii: (f64, f64),
    pub matrices: IsometryPair,
}

impl LatticeElement {
    pub fn from_quat(q: QuatElt, a: &AlgebraDesc) -> Result<Self, EnumError> {
        let m1 = embed_matrix(&q, 1, a)?;
        let m2 = embed_matrix(&q, 2, a)?;
        let t1 = cartan_radius(&m1, RhoParam::Half)?;
        let t2 = cartan_radius(&m2, RhoParam::Half)?;
        Ok(Self {
            q,
            radii: (t1, t2),
            matrices: IsometryPair { m1, m2 },
        })
    }

    pub fn coords(&self) -> [i64; 8] {
        self.q.coords_i64().expect("enumerated coordinates fit in i64")
    }
}

fn basis_element(k: usize) -> QuatElt {
    let mut c = [0i64; 8];
    c[k] = 1;
    QuatElt::from_coords(&c)
}

/// Smallest value used for `cosh r - 1` when weighting the displacement block,
/// so a zero radius still gives a definite form.
const DISPLACEMENT_FLOOR: f64 = 1e-10;

type Block = Vec<[num_complex::Complex64; 2]>;

/// Images of the basis under the two blocks below, as complex 2-vectors.
fn split_images(a: &AlgebraDesc, ball: &PlaceBall) -> Result<(Block, Block), EnumError> {
    let mut kv = Vec::with_capacity(8);
    let mut pv = Vec::with_capacity(8);
    for k in 0..8 {
        let g = ball.left * embed_matrix(&basis_element(k), ball.place, a)? * ball.right;
        let [[p, q], [r, s]] = g.m;
        kv.push([p + s.conj(), q - r.conj()]);
        pv.push([p - s.conj(), q + r.conj()]);
    }
    Ok((kv, pv))
}

fn block_gram(v: &Block) -> GramForm {
    let mut g = [[0.0; 8]; 8];
    for k in 0..8 {
        for l in 0..8 {
            g[k][l] = (v[k][0].conj() * v[l][0] + v[k][1].conj() * v[l][1]).re;
        }
    }
    GramForm { g }
}

/// The two rank-two blocks of `2 |g|_F^2` for `g = L sigma_p(x) R`:
/// `K = |a + conj d|^2 + |b - conj c|^2` and `P = |a - conj d|^2 + |b + conj c|^2`.
/// For `det g = 1`, `K = 2 cosh t + 2` and `P = 2 cosh t - 2` with `t` the Cartan radius.
pub fn place_split_forms(a: &AlgebraDesc, ball: &PlaceBall) -> Result<(GramForm, GramForm), EnumError> {
    let (kv, pv) = split_images(a, ball)?;
    Ok((block_gram(&kv), block_gram(&pv)))
}

/// A search form `c -> |F c|^2` with its real factor `F` (one row per real component).
#[derive(Debug, Clone, PartialEq)]
pub struct SearchForm {
    pub gram: GramForm,
    pub factor: Vec<[f64; 8]>,
}

/// Search form whose value is at most 4 on every unit meeting both balls.
///
/// Each of the four blocks is scaled by its bound on the target set, which
/// minimises the volume among such combinations. A small radius at one place
/// then shrinks the displacement block instead of being lost in the Frobenius norm.
pub fn search_region(a: &AlgebraDesc, balls: &[PlaceBall; 2]) -> Result<SearchForm, EnumError> {
    let mut factor = Vec::with_capacity(16);
    for b in balls {
        let (kv, pv) = split_images(a, b)?;
        let half = (b.radius / 2.0).sinh();
        let wk = 1.0 / (2.0 * (b.radius.cosh() + 1.0));
        let wp = 1.0 / (4.0 * half * half).max(DISPLACEMENT_FLOOR);
        for (v, w) in [(kv, wk), (pv, wp)] {
            let s = w.sqrt();
            for comp in 0..2 {
                factor.push(std::array::from_fn(|k| s * v[k][comp].re));
                factor.push(std::array::from_fn(|k| s * v[k][comp].im));
            }
        }
    }
    let mut g = [[0.0; 8]; 8];
    for k in 0..8 {
        for l in 0..8 {
            g[k][l] = factor.iter().map(|row| row[k] * row[l]).sum();
        }
    }
    Ok(SearchForm {
        gram: GramForm { g },
        factor,
    })
}

pub fn search_form(a: &AlgebraDesc, balls: &[PlaceBall; 2]) -> Result<GramForm, EnumError> {
    Ok(search_region(a, balls)?.gram)
}

/// Form `c -> |L sigma_p(x) R|_F^2` for fixed matrices `L`, `R`.
pub fn place_gram(a: &AlgebraDesc, place: u8, left: &Mat2, right: &Mat2) -> Result<GramForm, EnumError> {
    let mut imgs = Vec::with_capacity(8);
    for k in 0..8 {
        imgs.push(*left * embed_matrix(&basis_element(k), place, a)? * *right);
    }
    let mut g = [[0.0; 8]; 8];
    for k in 0..8 {
        for l in 0..8 {
            g[k][l] = imgs[k].frob_dot(&imgs[l]);
        }
    }
    Ok(GramForm { g })
}

/// `G[k][l] = sum_p <sigma_p(e_k), sigma_p(e_l)>_F`, checked positive definite.
pub fn gram_matrix(a: &AlgebraDesc) -> Result<GramForm, EnumError> {
    let id = Mat2::identity();
    let g1 = place_gram(a, 1, &id, &id)?;
    let g2 = place_gram(a, 2, &id, &id)?;
    let mut g = [[0.0; 8]; 8];
    for k in 0..8 {
        for l in 0..8 {
            g[k][l] = g1.g[k][l] + g2.g[k][l];
        }
    }
    let form = GramForm { g };
    form.cholesky_pivots()?;
    Ok(form)
}

/// `t(L sigma_p(x) R) <= radius` for one archimedean place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaceBall {
    pub place: u8,
    pub left: Mat2,
    pub right: Mat2,
    pub radius: f64,
}

impl PlaceBall {
    pub fn centered(place: u8, radius: f64) -> Self {
        Self {
            place,
            left: Mat2::identity(),
            right: Mat2::identity(),
            radius,
        }
    }

    /// Cartan radius of the transformed image of `m`.
    pub fn displacement(&self, m: &Mat2) -> Result<f64, GeomError> {
        cartan_radius(&(self.left * *m * self.right), RhoParam::Half)
    }
}

/// Options shared by all enumeration entry points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumOptions {
    pub node_budget: u64,
    pub congruence: Option<u64>,
    pub coord_box: Option<i64>,
    pub layers: LayerOrder,
    /// Name of a registered [`UnitSearch`] strategy.
    pub strategy: &'static str,
}

impl Default for EnumOptions {
    fn default() -> Self {
        Self {
            node_budget: DEFAULT_NODE_BUDGET,
            congruence: None,
            coord_box: None,
            layers: LayerOrder::LargestPivotOutside,
            strategy: DEFAULT_STRATEGY,
        }
    }
}

impl EnumOptions {
    /// Default options with the node budget taken from the environment if set.
    pub fn from_env() -> Result<Self, EnumError> {
        let mut o = Self::default();
        if let Ok(v) = std::env::var(NODE_BUDGET_ENV) {
            o.node_budget = v.trim().parse().map_err(|_| EnumError::BadBudget(v.clone()))?;
        }
        Ok(o)
    }
}

pub(crate) fn is_canonical(c: &[i64; 8]) -> bool {
    c.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0)
}

pub(crate) fn norm_is_one(c: &[i64; 8], a: &AlgebraDesc) -> Result<bool, EnumError> {
    Ok(quat_norm(&QuatElt::from_coords(c), a)? == QuadInt::ONE)
}

/// Units whose images satisfy both place balls, one per sign pair, unsorted.
pub fn units_in_balls(
    a: &AlgebraDesc,
    balls: &[PlaceBall; 2],
    opts: &EnumOptions,
) -> Result<(Vec<LatticeElement>, SearchStats), EnumError> {
    for b in balls {
        if !(b.radius >= 0.0) || !b.radius.is_finite() {
            return Err(EnumError::BadRadius(b.radius));
        }
    }
    let form = search_region(a, balls)?;
    let engine = search_strategies().get(opts.strategy)?;
    let (hits, stats) = engine.candidates(a, &form, 4.0 * (1.0 + SEARCH_SLACK), opts)?;
    let mut out = Vec::new();
    for c in hits {
        let q = QuatElt::from_coords(&c);
        if let Some(m) = opts.congruence {
            if !congruence_test(&q, m) {
                continue;
            }
        }
        let el = LatticeElement::from_quat(q, a)?;
        let mut inside = true;
        for b in balls {
            let t = b.displacement(el.matrices.get(b.place))?;
            if t > b.radius + RADIUS_SLACK * (1.0 + b.radius) {
                inside = false;
            }
        }
        if inside {
            out.push(el);
        }
    }
    Ok((out, stats))
}

/// Sort by `(t1 + t2, coordinates)`.
pub fn sort_elements(v: &mut [LatticeElement]) {
    v.sort_by(|x, y| {
        (x.radii.0 + x.radii.1)
            .total_cmp(&(y.radii.0 + y.radii.1))
            .then_with(|| x.coords().cmp(&y.coords()))
    });
}

/// All `x` in the unit group with `t1 <= r1`, `t2 <= r2`, one per sign pair, sorted.
pub fn enumerate_units(
    a: &AlgebraDesc,
    r1: f64,
    r2: f64,
    q: Option<u64>,
) -> Result<Vec<LatticeElement>, EnumError> {
    let opts = EnumOptions {
        congruence: q,
        ..EnumOptions::from_env()?
    };
    enumerate_units_with(a, r1, r2, &opts)
}

pub fn enumerate_units_with(
    a: &AlgebraDesc,
    r1: f64,
    r2: f64,
    opts: &EnumOptions,
) -> Result<Vec<LatticeElement>, EnumError> {
    let balls = [PlaceBall::centered(1, r1), PlaceBall::centered(2, r2)];
    let (mut v, _) = units_in_balls(a, &balls, opts)?;
    sort_elements(&mut v);
    Ok(v)
}

/// Boxes `[0, r1] x [0, r2]` whose union covers the triangle `t1 + t2 <= s`.
pub fn staircase(s: f64, step: f64) -> Vec<(f64, f64)> {
    let n = (s / step).ceil().max(1.0) as usize;
    (1..=n)
        .map(|i| {
            let r1 = (i as f64 * step).min(s);
            (r1, (s - r1 + step).min(s))
        })
        .collect()
}

/// All units with `t1 + t2 <= s`, via a staircase of boxes, sorted.
pub fn enumerate_sum_region(a: &AlgebraDesc, s: f64, opts: &EnumOptions) -> Result<Vec<LatticeElement>, EnumError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (r1, r2) in staircase(s, 0.5) {
        for el in enumerate_units_with(a, r1, r2, opts)? {
            if el.radii.0 + el.radii.1 <= s + RADIUS_SLACK * (1.0 + s) && seen.insert(el.coords()) {
                out.push(el);
            }
        }
    }
    sort_elements(&mut out);
    Ok(out)
}

/// Exhaustive scan of the coordinate box `[-b, b]^8` with exact arithmetic.
pub fn brute_force_units(a: &AlgebraDesc, b: i64, budget: u64) -> Result<Vec<QuatElt>, EnumError> {
    let side = (2 * b + 1) as u128;
    let total = side.pow(8);
    if total > budget as u128 {
        return Err(EnumError::BoxTooLarge(total));
    }
    let f = a.field;
    let (u, v) = (a.u as i128, a.v as i128);
    let k = f.k();
    // Norm of a + b w as the pair (n0, n1) with n = n0 + n1 w: (a^2 + k b^2, 2ab + b^2).
    let sq = |x: i64, y: i64| {
        let (x, y) = (x as i128, y as i128);
        (x * x + k * y * y, 2 * x * y + y * y)
    };
    let vals: Vec<i64> = (-b..=b).collect();
    let res: Vec<Vec<QuatElt>> = vals
        .par_iter()
        .map(|&c0| {
            let mut out = Vec::new();
            let mut c = [0i64; 8];
            c[0] = c0;
            let mut idx = [0usize; 7];
            loop {
                for (i, &ix) in idx.iter().enumerate() {
                    c[i + 1] = vals[ix];
                }
                let s0 = sq(c[0], c[1]);
                let s1 = sq(c[2], c[3]);
                let s2 = sq(c[4], c[5]);
                let s3 = sq(c[6], c[7]);
                let n0 = s0.0 - u * s1.0 - v * s2.0 + u * v * s3.0;
                let n1 = s0.1 - u * s1.1 - v * s2.1 + u * v * s3.1;
                if n0 == 1 && n1 == 0 {
                    out.push(QuatElt::from_coords(&c));
                }
                let mut pos = 6;
                loop {
                    idx[pos] += 1;
                    if idx[pos] < vals.len() {
                        break;
                    }
                    idx[pos] = 0;
                    if pos == 0 {
                        return out;
                    }
                    pos -= 1;
                }
            }
        })
        .collect();
    Ok(res.into_iter().flatten().collect())
}

/// Cumulative counts of `max(t1, t2)` over `[0, s/2]` and of `t1 + t2` over `[0, s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusHistogram {
    pub max_edges: Vec<f64>,
    pub max_cumulative: Vec<u64>,
    pub sum_edges: Vec<f64>,
    pub sum_cumulative: Vec<u64>,
}

fn cumulative(values: &[f64], edges: &[f64]) -> Vec<u64> {
    edges
        .iter()
        .map(|&e| values.iter().filter(|&&v| v <= e + RADIUS_SLACK).count() as u64)
        .collect()
}

/// Histogram from an enumeration complete on `t1 + t2 <= s`.
///
/// Elements with `max(t1, t2) <= s/2` all lie in that triangle, so the max
/// histogram is complete up to `s/2`.
pub fn histogram_from(elements: &[LatticeElement], s: f64, bins: usize) -> RadiusHistogram {
    let bins = bins.max(1);
    let sum_edges: Vec<f64> = (1..=bins).map(|i| s * i as f64 / bins as f64).collect();
    let max_edges: Vec<f64> = sum_edges.iter().map(|e| e / 2.0).collect();
    let sums: Vec<f64> = elements.iter().map(|e| e.radii.0 + e.radii.1).collect();
    let maxs: Vec<f64> = elements.iter().map(|e| e.radii.0.max(e.radii.1)).collect();
    RadiusHistogram {
        max_cumulative: cumulative(&maxs, &max_edges),
        sum_cumulative: cumulative(&sums, &sum_edges),
        max_edges,
        sum_edges,
    }
}

pub fn count_by_radius(a: &AlgebraDesc, rmax: f64, bins: usize, opts: &EnumOptions) -> Result<RadiusHistogram, EnumError> {
    let els = enumerate_sum_region(a, rmax, opts)?;
    Ok(histogram_from(&els, rmax, bins))
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of `log N(t1 + t2 <= s)` against `s` over the edges with `s >= s_min` and a nonzero count.
pub fn growth_slope(h: &RadiusHistogram, s_min: f64) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = h
        .sum_edges
        .iter()
        .zip(&h.sum_cumulative)
        .filter(|(&e, &c)| e >= s_min && c > 0)
        .map(|(&e, &c)| (e, (c as f64).ln()))
        .unzip();
    (xs.len() >= 2).then(|| ls_slope(&xs, &ys).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alg() -> AlgebraDesc {
        AlgebraDesc::preset_q17()
    }

    #[test]
    fn gram_examples() {
        let g = gram_matrix(&alg()).unwrap();
        assert!((g.g[0][0] - 4.0).abs() < 1e-12);
        assert!((g.g[2][2] - 12.0).abs() < 1e-12);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(g.g[i][j], g.g[j][i]);
            }
        }
        assert!(g.cholesky_pivots().unwrap().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn gram_evaluates_frobenius_norms() {
        let a = alg();
        let g = gram_matrix(&a).unwrap();
        let c = [2, -1, 3, 0, 1, 1, -2, 4];
        let q = QuatElt::from_coords(&c);
        let direct = embed_matrix(&q, 1, &a).unwrap().frob2() + embed_matrix(&q, 2, &a).unwrap().frob2();
        assert!((g.eval(&c) - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn ellipsoid_points_match_box_scan() {
        let a = alg();
        let g = gram_matrix(&a).unwrap();
        let bound = 90.5;
        let inv = fp::invert(&g.g).unwrap();
        // |c_i| <= sqrt(bound * inv_ii) on the ellipsoid.
        let half: Vec<i64> = (0..8).map(|i| (bound * inv[i][i]).sqrt().floor() as i64).collect();
        for layers in [LayerOrder::LargestPivotOutside, LayerOrder::Natural] {
            let ell = Ellipsoid {
                g: g.g,
                bound,
                coord_box: None,
                layers,
            };
            let (mut pts, _) = ellipsoid_points(&ell, u64::MAX, |c, out| out.push(*c)).unwrap();
            pts.sort();
            let mut expect = Vec::new();
            let mut c: [i64; 8] = std::array::from_fn(|i| -half[i]);
            'scan: loop {
                if g.eval(&c) <= bound {
                    expect.push(c);
                }
                for i in 0..8 {
                    c[i] += 1;
                    if c[i] <= half[i] {
                        continue 'scan;
                    }
                    c[i] = -half[i];
                }
                break;
            }
            expect.sort();
            assert_eq!(pts, expect);
        }
    }

    #[test]
    fn zero_radius_gives_identity() {
        let v = enumerate_units_with(&alg(), 0.0, 0.0, &EnumOptions::default()).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].q, QuatElt::ONE);
    }

    #[test]
    fn budget_is_enforced() {
        let opts = EnumOptions {
            node_budget: 1000,
            ..Default::default()
        };
        let e = enumerate_units_with(&alg(), 6.0, 6.0, &opts).unwrap_err();
        assert!(matches!(e, EnumError::BudgetExceeded { budget: 1000, .. }));
    }

    #[test]
    fn staircase_covers_triangle() {
        let s = 3.3;
        let boxes = staircase(s, 0.5);
        for i in 0..=33 {
            for j in 0..=33 {
                let (t1, t2) = (i as f64 * 0.1, j as f64 * 0.1);
                if t1 + t2 <= s {
                    assert!(boxes.iter().any(|&(a, b)| t1 <= a && t2 <= b), "{t1} {t2}");
                }
            }
        }
    }
}
