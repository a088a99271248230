//! Adaptive one-dimensional quadrature of complex-valued integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::LazyLock;

use num_complex::Complex64;
use thiserror::Error;

use crate::registry::{Named, Registry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge within {evals} evaluations (error estimate {err:e}, target {target:e})")]
    NoConvergence { evals: usize, err: f64, target: f64 },
    #[error("integrand returned a non-finite value at {0}")]
    NonFinite(f64),
    #[error("invalid interval [{0}, {1}]")]
    BadInterval(f64, f64),
}

/// Stop when the error estimate is below `max(abs, rel * |I|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadTol {
    pub abs: f64,
    pub rel: f64,
    pub max_evals: usize,
}

impl Default for QuadTol {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-12,
            max_evals: 1_000_000,
        }
    }
}

impl QuadTol {
    pub fn with_abs(abs: f64) -> Self {
        Self { abs, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: Complex64,
    pub err: f64,
    pub evals: usize,
}

pub trait Integrator: Named + Send + Sync {
    fn integrate(&self, f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, tol: &QuadTol) -> Result<QuadResult, QuadError>;
}

/// Integrate over consecutive pieces `[p_0, p_1], [p_1, p_2], ...`, splitting the tolerance evenly.
pub fn integrate_pieces(
    q: &dyn Integrator,
    f: &dyn Fn(f64) -> Complex64,
    points: &[f64],
    tol: &QuadTol,
) -> Result<QuadResult, QuadError> {
    let n = points.len().saturating_sub(1).max(1) as f64;
    let piece_tol = QuadTol {
        abs: tol.abs / n,
        max_evals: (tol.max_evals as f64 / n) as usize,
        ..*tol
    };
    let mut out = QuadResult {
        value: Complex64::new(0.0, 0.0),
        err: 0.0,
        evals: 0,
    };
    for w in points.windows(2) {
        if w[1] > w[0] {
            let r = q.integrate(f, w[0], w[1], &piece_tol)?;
            out.value += r.value;
            out.err += r.err;
            out.evals += r.evals;
        }
    }
    Ok(out)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the odd-indexed Kronrod nodes (and the centre).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod panel: value, calibrated error and the roundoff floor `50 eps int |f|`.
fn gk15(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64) -> Result<(Complex64, f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let eval = |x: f64| {
        let v = f(x);
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(QuadError::NonFinite(x))
        }
    };
    let fc = eval(c)?;
    let mut fv = [(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); 7];
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    let mut resabs = fc.norm() * WGK[7];
    for i in 0..7 {
        let dx = h * XGK[i];
        let (l, r) = (eval(c - dx)?, eval(c + dx)?);
        fv[i] = (l, r);
        k += (l + r) * WGK[i];
        resabs += (l.norm() + r.norm()) * WGK[i];
        if i % 2 == 1 {
            g += (l + r) * WG[i / 2];
        }
    }
    // Error calibration and roundoff floor as in QUADPACK's qk15.
    let mean = k * 0.5;
    let mut resasc = WGK[7] * (fc - mean).norm();
    for i in 0..7 {
        resasc += WGK[i] * ((fv[i].0 - mean).norm() + (fv[i].1 - mean).norm());
    }
    let h = h.abs();
    let (resasc, resabs) = (resasc * h, resabs * h);
    let mut err = ((k - g) * h).norm();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * resabs;
    Ok((k * h, err.max(floor), floor))
}

struct Piece {
    a: f64,
    b: f64,
    value: Complex64,
    err: f64,
    floor: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        // Ties broken by position so the refinement sequence is fully deterministic.
        self.err.total_cmp(&o.err).then_with(|| o.a.total_cmp(&self.a))
    }
}

/// Globally adaptive 7-point Gauss / 15-point Kronrod bisection.
pub struct GaussKronrod;

impl Named for GaussKronrod {
    fn name(&self) -> &'static str {
        "gauss-kronrod"
    }
}

fn check_interval(a: f64, b: f64) -> Result<(), QuadError> {
    if a.is_finite() && b.is_finite() && a <= b {
        Ok(())
    } else {
        Err(QuadError::BadInterval(a, b))
    }
}

impl Integrator for GaussKronrod {
    fn integrate(&self, f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, tol: &QuadTol) -> Result<QuadResult, QuadError> {
        check_interval(a, b)?;
        if a == b {
            return Ok(QuadResult {
                value: Complex64::new(0.0, 0.0),
                err: 0.0,
                evals: 0,
            });
        }
        let (v, e, fl) = gk15(f, a, b)?;
        let mut evals = 15;
        let mut heap = BinaryHeap::new();
        heap.push(Piece {
            a,
            b,
            value: v,
            err: e,
            floor: fl,
        });
        let mut total = v;
        let mut err = e;
        // Pieces too narrow to split or already at their roundoff floor; their error is final.
        let mut frozen_err = 0.0;
        let mut frozen_val = Complex64::new(0.0, 0.0);
        loop {
            let target = tol.abs.max(tol.rel * total.norm());
            if err <= target {
                break;
            }
            // Only roundoff-limited pieces remain: the result is as good as it gets.
            let Some(p) = heap.pop() else { break };
            let m = 0.5 * (p.a + p.b);
            if !(m > p.a && m < p.b) || (p.b - p.a) <= 1e-13 * (b - a) || p.err <= p.floor {
                frozen_err += p.err;
                frozen_val += p.value;
                continue;
            }
            if evals + 30 > tol.max_evals {
                return Err(QuadError::NoConvergence { evals, err, target });
            }
            let (v1, e1, f1) = gk15(f, p.a, m)?;
            let (v2, e2, f2) = gk15(f, m, p.b)?;
            evals += 30;
            total += v1 + v2 - p.value;
            err += e1 + e2 - p.err;
            heap.push(Piece {
                a: p.a,
                b: m,
                value: v1,
                err: e1,
                floor: f1,
            });
            heap.push(Piece {
                a: m,
                b: p.b,
                value: v2,
                err: e2,
                floor: f2,
            });
        }
        // Re-sum in position order so rounding does not depend on refinement history.
        let mut pieces: Vec<Piece> = heap.into_vec();
        pieces.sort_by(|x, y| x.a.total_cmp(&y.a));
        let value = pieces.iter().fold(frozen_val, |s, p| s + p.value);
        let err = pieces.iter().fold(frozen_err, |s, p| s + p.err);
        Ok(QuadResult { value, err, evals })
    }
}

/// Adaptive Simpson with Richardson correction, refined depth-first on a stack.
pub struct AdaptiveSimpson;

impl Named for AdaptiveSimpson {
    fn name(&self) -> &'static str {
        "adaptive-simpson"
    }
}

impl Integrator for AdaptiveSimpson {
    fn integrate(&self, f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, tol: &QuadTol) -> Result<QuadResult, QuadError> {
        check_interval(a, b)?;
        let zero = Complex64::new(0.0, 0.0);
        if a == b {
            return Ok(QuadResult { value: zero, err: 0.0, evals: 0 });
        }
        let eval = |x: f64| {
            let v = f(x);
            if v.re.is_finite() && v.im.is_finite() {
                Ok(v)
            } else {
                Err(QuadError::NonFinite(x))
            }
        };
        let simpson = |a: f64, fa: Complex64, fm: Complex64, b: f64, fb: Complex64| (fa + fm * 4.0 + fb) * ((b - a) / 6.0);
        // Scale estimate for the relative criterion from a coarse first pass.
        let (fa, fm, fb) = (eval(a)?, eval(0.5 * (a + b))?, eval(b)?);
        let whole = simpson(a, fa, fm, b, fb);
        let target = tol.abs.max(tol.rel * whole.norm());
        let mut evals = 3;
        let mut stack = vec![(a, b, fa, fm, fb, whole, target, 0u32)];
        let mut value = zero;
        let mut err = 0.0;
        while let Some((a, b, fa, fm, fb, s, t, depth)) = stack.pop() {
            let m = 0.5 * (a + b);
            let (lm, rm) = (eval(0.5 * (a + m))?, eval(0.5 * (m + b))?);
            evals += 2;
            let l = simpson(a, fa, lm, m, fm);
            let r = simpson(m, fm, rm, b, fb);
            let diff = (l + r - s).norm();
            if diff <= 15.0 * t || depth >= 60 {
                value += l + r + (l + r - s) / 15.0;
                err += diff / 15.0;
            } else {
                if evals > tol.max_evals {
                    return Err(QuadError::NoConvergence { evals, err: err + diff, target });
                }
                stack.push((m, b, fm, rm, fb, r, t / 2.0, depth + 1));
                stack.push((a, m, fa, lm, fm, l, t / 2.0, depth + 1));
            }
        }
        Ok(QuadResult { value, err, evals })
    }
}

static INTEGRATORS: LazyLock<Registry<dyn Integrator>> = LazyLock::new(|| {
    let mut r: Registry<dyn Integrator> = Registry::new("quadrature rule");
    r.register(Box::new(GaussKronrod)).register(Box::new(AdaptiveSimpson));
    r
});

pub const DEFAULT_INTEGRATOR: &str = "gauss-kronrod";

pub fn integrators() -> &'static Registry<dyn Integrator> {
    &INTEGRATORS
}

/// The default integrator.
pub fn default_integrator() -> &'static dyn Integrator {
    integrators().get(DEFAULT_INTEGRATOR).expect("default integrator is registered")
}

/// Real-valued convenience wrapper around the default integrator.
pub fn integrate_real(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: &QuadTol) -> Result<f64, QuadError> {
    let g = |x: f64| Complex64::new(f(x), 0.0);
    Ok(default_integrator().integrate(&g, a, b, tol)?.value.re)
}
