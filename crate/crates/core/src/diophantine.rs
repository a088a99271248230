//! Two-ball approximation experiments: find units `gamma` whose first-place image
//! moves `x` to within `eps` of `y` while the second-place displacement stays
//! small, and fit the growth of that displacement against `log(1/eps)`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hypgeom::{act, ball_volume, dist, GeomError, HypPoint, Mat2, RhoParam};
use crate::latenum::{ls_slope, units_in_balls, EnumError, EnumOptions, LatticeElement, PlaceBall};
use crate::quaternion::AlgebraDesc;
use crate::registry::{Named, Registry, UnknownName};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiophError {
    #[error("invalid split shape: {0}")]
    BadShape(String),
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error(
        "enumeration coverage insufficient: need t1 <= {need_t1:.6}, t2 <= {need_t2:.6} but cache covers ({have_t1:.6}, {have_t2:.6})"
    )]
    Coverage {
        need_t1: f64,
        need_t2: f64,
        have_t1: f64,
        have_t2: f64,
    },
    #[error("solution failed independent re-check: {0}")]
    Recheck(String),
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    UnknownSource(#[from] UnknownName),
}

/// Factors `1..=k` are approximated, factors `k+1..=l` carry the height bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitShape {
    pub k: usize,
    pub rhos: Vec<RhoParam>,
}

impl SplitShape {
    pub fn new(k: usize, rhos: Vec<RhoParam>) -> Result<Self, DiophError> {
        if k == 0 || k >= rhos.len() {
            return Err(DiophError::BadShape(format!("need 1 <= k < l, got k = {k}, l = {}", rhos.len())));
        }
        Ok(Self { k, rhos })
    }

    /// Two `SL2(R)` factors, approximating on the first.
    pub fn sl2r_pair() -> Self {
        Self {
            k: 1,
            rhos: vec![RhoParam::Half, RhoParam::Half],
        }
    }

    pub fn l(&self) -> usize {
        self.rhos.len()
    }

    /// Total dimension of the approximated factors.
    pub fn d_1k(&self) -> f64 {
        self.rhos[..self.k].iter().map(|r| r.dim() as f64).sum()
    }

    /// Sum of `dim - 1` over the bounded factors.
    pub fn a_k1l(&self) -> f64 {
        self.rhos[self.k..].iter().map(|r| 2.0 * r.value()).sum()
    }
}

pub fn pigeonhole_exponent(s: &SplitShape) -> Result<f64, DiophError> {
    let a = s.a_k1l();
    if a == 0.0 {
        return Err(DiophError::BadShape("a_{k+1,l} = 0".into()));
    }
    Ok(s.d_1k() / a)
}

/// Small radius `exp(-(a/d) R)` matched to the large radius `R`.
pub fn schedule_r(big_r: f64, s: &SplitShape) -> Result<f64, DiophError> {
    if !(big_r > 0.0) {
        return Err(DiophError::BadParam(format!("R must be positive, got {big_r}")));
    }
    Ok((-(s.a_k1l() / s.d_1k()) * big_r).exp())
}

/// Product of small-ball volumes at `schedule_r(R)` times large-ball volumes at `R`.
pub fn volume_balance(big_r: f64, s: &SplitShape) -> Result<f64, DiophError> {
    let r = schedule_r(big_r, s)?;
    let small: f64 = s.rhos[..s.k].iter().map(|&rho| ball_volume(rho, r)).product();
    let large: f64 = s.rhos[s.k..].iter().map(|&rho| ball_volume(rho, big_r)).product();
    Ok(small * large)
}

/// The upper-triangular `h` with `h . i = p`.
pub fn section(p: &HypPoint) -> Result<Mat2, DiophError> {
    match *p {
        HypPoint::H2 { x, y } => {
            let s = y.sqrt();
            Ok(Mat2::real(s, x / s, 0.0, 1.0 / s))
        }
        HypPoint::H3 { .. } => Err(DiophError::BadParam("approximation runs on the hyperbolic plane".into())),
    }
}

/// What achieved an approximation.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)] // one witness per search; boxing buys nothing
pub enum Witness {
    Lattice(LatticeElement),
    /// A point of a synthetic orbit, with its level and assigned height.
    Planted { point: HypPoint, level: u64, t2: f64 },
}

impl Witness {
    pub fn t2(&self) -> f64 {
        match self {
            Witness::Lattice(e) => e.radii.1,
            Witness::Planted { t2, .. } => *t2,
        }
    }

    /// Image of `x` under the first factor.
    pub fn image(&self, x: &HypPoint) -> Result<HypPoint, DiophError> {
        match self {
            Witness::Lattice(e) => Ok(act(&e.matrices.m1, x)?),
            Witness::Planted { point, .. } => Ok(*point),
        }
    }

    /// Key for deterministic tie-breaking among equal heights.
    fn tie_key(&self) -> (i64, [i64; 8]) {
        match self {
            Witness::Lattice(e) => (0, e.coords()),
            Witness::Planted { level, .. } => (*level as i64, [0; 8]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxResult {
    pub epsilon: f64,
    pub r_found: f64,
    pub gamma: Witness,
    pub achieved_d1: f64,
}

/// One search: approximate `y` by the orbit of `x` within `eps`, height at most `r_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    pub x: HypPoint,
    pub y: HypPoint,
    pub eps: f64,
    pub r_max: f64,
}

impl Query {
    /// First-place radius that every solution satisfies: `d(x,i) + d(y,i) + eps`.
    pub fn t1_needed(&self) -> Result<f64, DiophError> {
        let o = HypPoint::base_h2();
        Ok(dist(&self.x, &o)? + dist(&self.y, &o)? + self.eps)
    }
}

const TIE_TOL: f64 = 1e-12;

/// Pick the minimal height, breaking near-ties by the witness key.
fn best_of(q: &Query, cands: impl IntoIterator<Item = Witness>) -> Result<Option<ApproxResult>, DiophError> {
    let mut best: Option<ApproxResult> = None;
    for w in cands {
        let t2 = w.t2();
        if t2 > q.r_max {
            continue;
        }
        let d1 = dist(&w.image(&q.x)?, &q.y)?;
        if d1 > q.eps {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => {
                t2 < b.r_found - TIE_TOL || ((t2 - b.r_found).abs() <= TIE_TOL && w.tie_key() < b.gamma.tie_key())
            }
        };
        if better {
            best = Some(ApproxResult {
                epsilon: q.eps,
                r_found: t2,
                gamma: w,
                achieved_d1: d1,
            });
        }
    }
    Ok(best)
}

/// A supply of candidate witnesses for approximation queries.
pub trait ElementSource: Named + Send + Sync {
    /// The admissible witness of least height, or `None` if none exists within `r_max`.
    fn best(&self, q: &Query) -> Result<Option<ApproxResult>, DiophError>;
}

/// Exhaustive scan of a precomputed enumeration covering `t1 <= cover.0`, `t2 <= cover.1`.
pub struct CachedScan {
    pub elements: Arc<Vec<LatticeElement>>,
    pub cover: (f64, f64),
}

impl Named for CachedScan {
    fn name(&self) -> &'static str {
        "cached"
    }
}

impl ElementSource for CachedScan {
    fn best(&self, q: &Query) -> Result<Option<ApproxResult>, DiophError> {
        let need_t1 = q.t1_needed()?;
        if need_t1 > self.cover.0 || q.r_max > self.cover.1 {
            return Err(DiophError::Coverage {
                need_t1,
                need_t2: q.r_max,
                have_t1: self.cover.0,
                have_t2: self.cover.1,
            });
        }
        best_of(q, self.elements.iter().map(|e| Witness::Lattice(*e)))
    }
}

/// Direct lattice search in the ball `t(h_y^-1 gamma h_x) <= eps` at the first
/// place, with the second-place radius grown in steps up to `r_max`.
pub struct Targeted {
    pub algebra: AlgebraDesc,
    pub opts: EnumOptions,
    pub step: f64,
}

impl Named for Targeted {
    fn name(&self) -> &'static str {
        "targeted"
    }
}

impl ElementSource for Targeted {
    fn best(&self, q: &Query) -> Result<Option<ApproxResult>, DiophError> {
        let left = section(&q.y)?.inv_unimodular();
        let right = section(&q.x)?;
        let mut r = 0.0f64;
        loop {
            r = (r + self.step).min(q.r_max);
            let balls = [
                PlaceBall {
                    place: 1,
                    left,
                    right,
                    radius: q.eps,
                },
                PlaceBall::centered(2, r),
            ];
            let (found, _) = units_in_balls(&self.algebra, &balls, &self.opts)?;
            // Every unit of height <= r is in `found`, so a hit here is the global minimum.
            if let Some(b) = best_of(q, found.into_iter().map(Witness::Lattice))? {
                return Ok(Some(b));
            }
            if r >= q.r_max {
                return Ok(None);
            }
        }
    }
}

/// Synthetic orbit with known exponent 2: at level `n` (height `n * step`) the
/// orbit is the translated square grid `spacing_n * (theta_n + Z^2)` in the
/// plane, with `spacing_n = exp(-height / 2)` and equidistributed offsets.
pub struct Planted {
    pub step: f64,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const SQRT2_FRAC: f64 = 0.414_213_562_373_095_1;

impl Planted {
    /// Grid point of level `n` nearest the Euclidean centre of the `eps`-ball about `y`.
    ///
    /// A hyperbolic ball is a Euclidean disk, so this point lies in the ball iff any does.
    fn level_point(&self, n: u64, y: &HypPoint, eps: f64) -> Option<HypPoint> {
        let HypPoint::H2 { x: yx, y: yy } = *y else { return None };
        let s = (-(n as f64 * self.step) / 2.0).exp();
        let off = ((n as f64 * GOLDEN).fract(), (n as f64 * SQRT2_FRAC).fract());
        let (cx, cy) = (yx, yy * eps.cosh());
        let px = s * ((cx / s - off.0).round() + off.0);
        let mut gy = (cy / s - off.1).round();
        // The nearest grid row can sit at or below the boundary only when the disk misses it anyway.
        while s * (gy + off.1) <= 0.0 {
            gy += 1.0;
        }
        Some(HypPoint::H2 { x: px, y: s * (gy + off.1) })
    }
}

impl Named for Planted {
    fn name(&self) -> &'static str {
        "planted"
    }
}

impl ElementSource for Planted {
    fn best(&self, q: &Query) -> Result<Option<ApproxResult>, DiophError> {
        let top = (q.r_max / self.step).floor() as u64;
        for n in 0..=top {
            if let Some(point) = self.level_point(n, &q.y, q.eps) {
                let w = Witness::Planted {
                    point,
                    level: n,
                    t2: n as f64 * self.step,
                };
                if let Some(b) = best_of(q, [w])? {
                    return Ok(Some(b));
                }
            }
        }
        Ok(None)
    }
}

/// Registry with the targeted search, the planted oracle and, if given, a cached scan.
pub fn element_sources(
    algebra: &AlgebraDesc,
    opts: EnumOptions,
    cache: Option<CachedScan>,
) -> Registry<dyn ElementSource> {
    let mut r: Registry<dyn ElementSource> = Registry::new("element source");
    r.register(Box::new(Targeted {
        algebra: algebra.clone(),
        opts,
        step: 1.0,
    }));
    r.register(Box::new(Planted { step: 0.05 }));
    if let Some(c) = cache {
        r.register(Box::new(c));
    }
    r
}

fn check_query(q: &Query) -> Result<(), DiophError> {
    if !(q.eps > 0.0) || !q.eps.is_finite() {
        return Err(DiophError::BadParam(format!("eps must be positive, got {}", q.eps)));
    }
    if !(q.r_max >= 0.0) || !q.r_max.is_finite() {
        return Err(DiophError::BadParam(format!("r_max must be non-negative, got {}", q.r_max)));
    }
    for p in [q.x, q.y] {
        if !matches!(p, HypPoint::H2 { .. }) {
            return Err(DiophError::BadParam("points must lie in the hyperbolic plane".into()));
        }
    }
    Ok(())
}

/// Least-height solution, independently re-checked before it is returned.
pub fn approx_search(source: &dyn ElementSource, q: &Query) -> Result<Option<ApproxResult>, DiophError> {
    check_query(q)?;
    let res = source.best(q)?;
    if let Some(r) = &res {
        recheck(q, r)?;
    }
    Ok(res)
}

/// Both inequalities, recomputed from the stored matrices.
pub fn recheck(q: &Query, r: &ApproxResult) -> Result<(), DiophError> {
    let d1 = dist(&r.gamma.image(&q.x)?, &q.y)?;
    if d1 > q.eps {
        return Err(DiophError::Recheck(format!("d1 = {d1} exceeds eps = {}", q.eps)));
    }
    if let Witness::Lattice(e) = &r.gamma {
        let t2 = dist(&act(&e.matrices.m2, &HypPoint::base_h2())?, &HypPoint::base_h2())?;
        if (t2 - r.r_found).abs() > 1e-9 * (1.0 + t2) {
            return Err(DiophError::Recheck(format!("stored t2 {} but recomputed {t2}", r.r_found)));
        }
    }
    if r.r_found > q.r_max {
        return Err(DiophError::Recheck(format!("t2 = {} exceeds R_max = {}", r.r_found, q.r_max)));
    }
    Ok(())
}

/// Slope of `R_found` against `log(1/eps)` for one pair.
///
/// Points with `eps >= d(x, y)` are solved by the identity and say nothing
/// about the asymptotic regime, so the fit uses only `eps < d(x, y)`. When
/// every point is an identity solution the slope is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub x: HypPoint,
    pub y: HypPoint,
    pub points: Vec<(f64, Option<ApproxResult>)>,
    pub zeta_hat: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub warnings: Vec<String>,
}

impl ExponentFit {
    /// `(log(1/eps), R_found)` for every solved point.
    pub fn solved(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|(e, r)| r.as_ref().map(|r| ((1.0 / e).ln(), r.r_found)))
            .collect()
    }

    /// Solved points outside the identity regime, the ones the fit uses.
    pub fn fit_points(&self) -> Vec<(f64, f64)> {
        let d = dist(&self.x, &self.y).unwrap_or(0.0);
        self.points
            .iter()
            .filter(|(e, _)| *e < d)
            .filter_map(|(e, r)| r.as_ref().map(|r| ((1.0 / e).ln(), r.r_found)))
            .collect()
    }
}

fn fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let (slope, icpt) = ls_slope(&xs, &ys);
    let ss: f64 = points.iter().map(|(x, y)| (y - slope * x - icpt).powi(2)).sum();
    (slope, icpt, (ss / points.len() as f64).sqrt())
}

pub fn exponent_estimate(
    source: &dyn ElementSource,
    x: HypPoint,
    y: HypPoint,
    eps_list: &[f64],
    r_max: f64,
) -> Result<ExponentFit, DiophError> {
    if eps_list.len() < 3 {
        return Err(DiophError::BadParam(format!("need at least 3 eps values, got {}", eps_list.len())));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(DiophError::BadParam("eps values must be strictly decreasing".into()));
    }
    let mut points = Vec::with_capacity(eps_list.len());
    let mut warnings = Vec::new();
    for &eps in eps_list {
        let res = approx_search(source, &Query { x, y, eps, r_max })?;
        if res.is_none() {
            warnings.push(format!("no solution with t2 <= {r_max} at eps = {eps}; point excluded"));
        }
        points.push((eps, res));
    }
    let mut f = ExponentFit {
        x,
        y,
        points,
        zeta_hat: f64::NAN,
        intercept: f64::NAN,
        residual: f64::NAN,
        warnings,
    };
    let used = f.fit_points();
    if used.len() >= 2 {
        (f.zeta_hat, f.intercept, f.residual) = fit(&used);
    } else if f.points.iter().all(|(_, r)| r.as_ref().is_some_and(|r| r.r_found == 0.0)) {
        (f.zeta_hat, f.intercept, f.residual) = (0.0, 0.0, 0.0);
    } else {
        f.warnings.push("fewer than two solved points outside the identity regime; no fit".into());
    }
    Ok(f)
}

/// Slope fitted to the non-trivial solved points of all pairs at once, with its residual.
pub fn pooled_zeta(fits: &[ExponentFit]) -> Option<(f64, f64)> {
    let all: Vec<(f64, f64)> = fits.iter().flat_map(|f| f.fit_points()).collect();
    (all.len() >= 2).then(|| {
        let (s, _, res) = fit(&all);
        (s, res)
    })
}

/// Fraction of non-trivial solved points with `R_found < (kappa - 0.5) log(1/eps)`.
pub fn below_pigeonhole_fraction(fits: &[ExponentFit], kappa: f64) -> f64 {
    let all: Vec<(f64, f64)> = fits.iter().flat_map(|f| f.fit_points()).collect();
    if all.is_empty() {
        return 0.0;
    }
    all.iter().filter(|(l, r)| *r < (kappa - 0.5) * l).count() as f64 / all.len() as f64
}

/// The sampling window `[-1, 1] x [1/2, 2]` of the upper half-plane.
pub const WINDOW: ([f64; 2], [f64; 2]) = ([-1.0, 1.0], [0.5, 2.0]);

/// Seeded uniform pairs in [`WINDOW`].
pub fn sample_pairs(seed: u64, n: usize) -> Vec<(HypPoint, HypPoint)> {
    sample_pairs_in(WINDOW, seed, n)
}

/// Seeded pairs drawn uniformly from `[x0, x1] x [y0, y1]` (half-plane coordinates).
pub fn sample_pairs_in(window: ([f64; 2], [f64; 2]), seed: u64, n: usize) -> Vec<(HypPoint, HypPoint)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pt = || HypPoint::H2 {
        x: rng.gen_range(window.0[0]..=window.0[1]),
        y: rng.gen_range(window.1[0]..=window.1[1]),
    };
    (0..n).map(|_| (pt(), pt())).collect()
}

/// `eps = 2^-1, ..., 2^-n`.
pub fn dyadic_eps(n: u32) -> Vec<f64> {
    (1..=n).map(|k| 0.5f64.powi(k as i32)).collect()
}

/// First-place radius needed for a cache to serve every pair drawn from [`WINDOW`] at `eps <= eps_max`.
pub fn window_t1_cover(eps_max: f64) -> f64 {
    let o = HypPoint::base_h2();
    let corner = |x: f64, y: f64| dist(&HypPoint::H2 { x, y }, &o).unwrap_or(f64::INFINITY);
    let far = [(-1.0, 0.5), (1.0, 0.5), (-1.0, 2.0), (1.0, 2.0), (0.0, 0.5), (0.0, 2.0)]
        .iter()
        .map(|&(x, y)| corner(x, y))
        .fold(0.0, f64::max);
    2.0 * far + eps_max
}
