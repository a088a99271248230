//! Interchangeable strategies for listing norm-one lattice points inside the search ellipsoid.

use std::sync::LazyLock;

use super::fp::{ellipsoid_points, project_factor, Ellipsoid, SearchStats};
use super::{is_canonical, norm_is_one, EnumError, EnumOptions, SearchForm};
use crate::quaternion::AlgebraDesc;
use crate::registry::{Named, Registry};

pub const DEFAULT_STRATEGY: &str = "norm-solve";

/// Produces every canonical-sign norm-one coordinate vector with `c^T G c <= bound`
/// (points just outside, within rounding, may also be returned).
pub trait UnitSearch: Named + Send + Sync {
    fn candidates(
        &self,
        a: &AlgebraDesc,
        form: &SearchForm,
        bound: f64,
        opts: &EnumOptions,
    ) -> Result<(Vec<[i64; 8]>, SearchStats), EnumError>;
}

/// Plain search over all eight coordinates, testing the norm at each leaf.
pub struct FullLattice;

/// Search over the six coordinates of the pure part and solve `x0^2 = 1 + u x1^2 + v x2^2 - uv x3^2`
/// for the scalar part exactly, which removes two dimensions from the tree.
pub struct NormSolve;

impl Named for FullLattice {
    fn name(&self) -> &'static str {
        "full-lattice"
    }
}

impl Named for NormSolve {
    fn name(&self) -> &'static str {
        "norm-solve"
    }
}

impl UnitSearch for FullLattice {
    fn candidates(
        &self,
        a: &AlgebraDesc,
        form: &SearchForm,
        bound: f64,
        opts: &EnumOptions,
    ) -> Result<(Vec<[i64; 8]>, SearchStats), EnumError> {
        let ell = Ellipsoid {
            g: form.gram.g,
            bound,
            coord_box: opts.coord_box,
            layers: opts.layers,
        };
        ellipsoid_points(&ell, opts.node_budget, |c, out| {
            if is_canonical(c) && matches!(norm_is_one(c, a), Ok(true)) {
                out.push(*c);
            }
        })
    }
}

/// `(a + b w)^2` as the pair `(n0, n1)` with value `n0 + n1 w`.
fn square(a: i64, b: i64, k: i128) -> (i128, i128) {
    let (a, b) = (a as i128, b as i128);
    (a * a + k * b * b, 2 * a * b + b * b)
}

/// All `(a, b)` with `(a + b w)^2 = m0 + m1 w`, found from the real square roots
/// at both places and confirmed in exact arithmetic.
fn field_sqrt(m: (i128, i128), k: i128, w1: f64, w2: f64) -> Vec<(i64, i64)> {
    let s1 = m.0 as f64 + m.1 as f64 * w1;
    let s2 = m.0 as f64 + m.1 as f64 * w2;
    let scale = (m.0 as f64).abs() + (m.1 as f64 * w1).abs() + 1.0;
    if s1 < -1e-9 * scale || s2 < -1e-9 * scale {
        return Vec::new();
    }
    let (r1, r2) = (s1.max(0.0).sqrt(), s2.max(0.0).sqrt());
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(4);
    for (e1, e2) in [(r1, r2), (r1, -r2), (-r1, r2), (-r1, -r2)] {
        let b = ((e1 - e2) / (w1 - w2)).round();
        let a = (e1 - b * w1).round();
        if !(a.abs() < 9.0e15 && b.abs() < 9.0e15) {
            continue;
        }
        let (a, b) = (a as i64, b as i64);
        if square(a, b, k) == m && !out.contains(&(a, b)) {
            out.push((a, b));
        }
    }
    out
}

const PURE: [usize; 6] = [2, 3, 4, 5, 6, 7];

/// Relative allowance when re-evaluating the full form at a solved point; the
/// Gram evaluation cancels heavily for long vectors and the caller re-checks radii anyway.
const EVAL_SLACK: f64 = 1e-6;

impl UnitSearch for NormSolve {
    fn candidates(
        &self,
        a: &AlgebraDesc,
        form: &SearchForm,
        bound: f64,
        opts: &EnumOptions,
    ) -> Result<(Vec<[i64; 8]>, SearchStats), EnumError> {
        // Every point of the full ellipsoid projects into the Schur complement
        // ellipsoid on the pure coordinates with the same bound.
        let g6 = project_factor(&form.factor, &PURE, &[0, 1])?;
        let ell = Ellipsoid {
            g: g6,
            bound,
            coord_box: opts.coord_box,
            layers: opts.layers,
        };
        let f = a.field;
        let k = f.k();
        let (w1, w2) = (f.omega_at(1)?, f.omega_at(2)?);
        let (u, v) = (a.u as i128, a.v as i128);
        ellipsoid_points(&ell, opts.node_budget, |r, out| {
            let s1 = square(r[0], r[1], k);
            let s2 = square(r[2], r[3], k);
            let s3 = square(r[4], r[5], k);
            let m = (
                1 + u * s1.0 + v * s2.0 - u * v * s3.0,
                u * s1.1 + v * s2.1 - u * v * s3.1,
            );
            for (x0, x1) in field_sqrt(m, k, w1, w2) {
                if let Some(b) = opts.coord_box {
                    if x0.abs() > b || x1.abs() > b {
                        continue;
                    }
                }
                let c = [x0, x1, r[0], r[1], r[2], r[3], r[4], r[5]];
                if is_canonical(&c) && form.gram.eval(&c) <= bound * (1.0 + EVAL_SLACK) && matches!(norm_is_one(&c, a), Ok(true)) {
                    out.push(c);
                }
            }
        })
    }
}

static STRATEGIES: LazyLock<Registry<dyn UnitSearch>> = LazyLock::new(|| {
    let mut r: Registry<dyn UnitSearch> = Registry::new("unit search strategy");
    r.register(Box::new(NormSolve)).register(Box::new(FullLattice));
    r
});

/// Registered unit-search strategies, default first.
pub fn search_strategies() -> &'static Registry<dyn UnitSearch> {
    &STRATEGIES
}
