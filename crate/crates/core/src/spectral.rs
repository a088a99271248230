//! Spherical functions, spherical transforms of radial test functions and
//! empirical decay constants.
//!
//! Radial integrals use the normalisation `int_G f dm = int_0^inf f(a_t) sinh(t)^{2 rho} dt`
//! for bi-invariant `f`.

use std::sync::LazyLock;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::hypgeom::{acosh1p, Mat2, RhoParam};
use crate::quad::{default_integrator, integrate_pieces, QuadError, QuadTol};
use crate::registry::{Named, Registry, UnknownName};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("matrix is not in SL(2,R): {0}")]
    NotSl2(String),
    #[error(transparent)]
    UnknownProfile(#[from] UnknownName),
}

fn cx(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

// ---------------------------------------------------------------------------
// Bump function

/// Cells in the tabulated cumulative distribution of the standard mollifier.
const MOLLIFIER_CELLS: usize = 8192;

/// Cumulative distribution of `m(u) = c exp(-1/(1-u^2))` on `[-1, 0]`, tabulated
/// at uniform nodes, together with the normalising constant `c`.
struct MollifierCdf {
    values: Vec<f64>,
    c: f64,
}

fn mollifier_raw(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

static MOLLIFIER: LazyLock<MollifierCdf> = LazyLock::new(|| {
    let half = MOLLIFIER_CELLS / 2;
    let h = 1.0 / half as f64;
    let tol = QuadTol {
        abs: 1e-18,
        rel: 1e-15,
        max_evals: 100_000,
    };
    let mut values = Vec::with_capacity(half + 1);
    let mut acc = 0.0;
    values.push(0.0);
    for i in 0..half {
        let a = -1.0 + i as f64 * h;
        acc += crate::quad::integrate_real(mollifier_raw, a, a + h, &tol).expect("smooth cell integral");
        values.push(acc);
    }
    // Mass of [-1, 0] is half the total.
    let c = 0.5 / acc;
    for v in values.iter_mut() {
        *v *= c;
    }
    MollifierCdf { values, c }
});

/// `int_{-1}^u m` for the normalised mollifier, by cubic Hermite interpolation.
fn mollifier_cdf(u: f64) -> f64 {
    if u <= -1.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    if u > 0.0 {
        return 1.0 - mollifier_cdf(-u);
    }
    let t = &*MOLLIFIER;
    let half = MOLLIFIER_CELLS / 2;
    let h = 1.0 / half as f64;
    let x = (u + 1.0) / h;
    let i = (x.floor() as usize).min(half - 1);
    let s = x - i as f64;
    let (u0, u1) = (-1.0 + i as f64 * h, -1.0 + (i + 1) as f64 * h);
    let (p0, p1) = (t.values[i], t.values[i + 1]);
    let (d0, d1) = (t.c * mollifier_raw(u0) * h, t.c * mollifier_raw(u1) * h);
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * p0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * p1 + (s3 - s2) * d1
}

/// Smooth even cutoff `eta`: `1` on `[-1+d', 1-d']`, `0` outside `(-1, 1)`, values in `[0, 1]`.
///
/// Realised as the indicator of `[-1+d'/2, 1-d'/2]` convolved with a normalised
/// mollifier of half-width `d'/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    delta_prime: f64,
}

impl Bump {
    pub fn new(delta_prime: f64) -> Result<Self, SpectralError> {
        if !(delta_prime > 0.0 && delta_prime < 1.0) {
            return Err(SpectralError::BadParam(format!("delta_prime must be in (0,1), got {delta_prime}")));
        }
        Ok(Self { delta_prime })
    }

    pub fn delta_prime(&self) -> f64 {
        self.delta_prime
    }

    pub fn eval(&self, t: f64) -> f64 {
        let w = self.delta_prime / 2.0;
        let l = 1.0 - w;
        1.0 - mollifier_cdf((t.abs() - l) / w)
    }

    /// End of the plateau.
    pub fn plateau(&self) -> f64 {
        1.0 - self.delta_prime
    }
}

pub fn bump_eta(delta_prime: f64, t: f64) -> Result<f64, SpectralError> {
    Ok(Bump::new(delta_prime)?.eval(t))
}

// ---------------------------------------------------------------------------
// Spherical parameters and functions

/// `z = sigma + i tau` for the group with parameter `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalParam {
    pub sigma: f64,
    pub tau: f64,
    pub rho: RhoParam,
}

impl SphericalParam {
    pub fn new(sigma: f64, tau: f64, rho: RhoParam) -> Self {
        Self { sigma, tau, rho }
    }

    pub fn tempered(tau: f64, rho: RhoParam) -> Self {
        Self::new(0.0, tau, rho)
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.sigma, self.tau)
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.sigma, -self.tau, self.rho)
    }

    /// Membership in `(0, 1/2] u i[0, inf)`.
    pub fn is_unitary(&self) -> bool {
        (self.tau == 0.0 && self.sigma > 0.0 && self.sigma <= 0.5) || (self.sigma == 0.0 && self.tau >= 0.0)
    }
}

/// `t` with `e^t = a^2 + c^2`, i.e. the `A` component of `M = k a_t n`.
pub fn iwasawa_a(m: &Mat2) -> Result<f64, SpectralError> {
    if !m.is_real(1e-12) {
        return Err(SpectralError::NotSl2("complex entries".into()));
    }
    let det = m.det().re;
    if (det - 1.0).abs() > 1e-9 * m.frob2().max(1.0) {
        return Err(SpectralError::NotSl2(format!("det = {det}")));
    }
    let (a, c) = (m.m[0][0].re, m.m[1][0].re);
    let s = a * a + c * c;
    if s == 0.0 {
        return Err(SpectralError::NotSl2("zero first column".into()));
    }
    Ok(s.ln())
}

/// Tolerance for the inner angular integrals.
const PHI_TOL: QuadTol = QuadTol {
    abs: 1e-13,
    rel: 1e-13,
    max_evals: 1_000_000,
};

/// `log(e^t cos^2(th/2) + e^{-t} sin^2(th/2))`, the Iwasawa height of `a_t` times a rotation.
fn log_height(t: f64, th: f64) -> f64 {
    let (s, c) = (th / 2.0).sin_cos();
    (t.exp() * c * c + (-t).exp() * s * s).ln()
}

/// Elementary spherical function at `a_t` via the Harish-Chandra integral over `K`.
///
/// For `rho = 1/2` the circle integral is `(1/pi) int_0^pi`; for `rho = 1` the
/// integral over `SU(2)` reduces to the polar angle with density `sin(th)/2`.
pub fn spherical_phi(z: &SphericalParam, t: f64) -> Result<Complex64, SpectralError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(SpectralError::BadParam(format!("t must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(cx(1.0));
    }
    let rho = z.rho.value();
    let e = z.z() * (2.0 * rho) - rho;
    let q = default_integrator();
    let r = match z.rho {
        RhoParam::Half => {
            let f = |th: f64| (e * log_height(t, th)).exp();
            q.integrate(&f, 0.0, std::f64::consts::PI, &PHI_TOL)?.value / std::f64::consts::PI
        }
        RhoParam::One => {
            let f = |th: f64| (e * log_height(t, th)).exp() * th.sin();
            q.integrate(&f, 0.0, std::f64::consts::PI, &PHI_TOL)?.value * 0.5
        }
    };
    Ok(r)
}

/// Closed form `sinh(2zt) / (2z sinh t)` for `rho = 1`, continued to `t / sinh t` at `z = 0`.
pub fn spherical_phi_rho1_closed(z: Complex64, t: f64) -> Complex64 {
    if t == 0.0 {
        return cx(1.0);
    }
    if z.norm() < 1e-8 {
        return cx(t / t.sinh()) * (cx(1.0) + z * z * (2.0 * t * t / 3.0));
    }
    (z * (2.0 * t)).sinh() / (z * 2.0 * t.sinh())
}

/// `p+ = 2 / (1 - 2 sigma)` for the complementary series, 2 on the tempered axis.
pub fn p_plus(z: &SphericalParam) -> f64 {
    let s = z.sigma.abs();
    if s >= 0.5 {
        f64::INFINITY
    } else {
        2.0 / (1.0 - 2.0 * s)
    }
}

// ---------------------------------------------------------------------------
// Radial profiles

/// A bi-invariant function given by its values on `a_t`, `t >= 0`.
pub trait RadialProfile: Send + Sync {
    fn eval(&self, t: f64) -> f64;
    fn support(&self) -> f64;
    fn rho(&self) -> RhoParam;
    fn tag(&self) -> String;
    /// Points in `[0, support]` where the profile changes character, used to split quadrature.
    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, self.support()]
    }
}

/// `scale^{-power} eta(t / scale)`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledBump {
    pub bump: Bump,
    pub scale: f64,
    pub power: f64,
    pub rho: RhoParam,
    pub name: &'static str,
}

impl RadialProfile for ScaledBump {
    fn eval(&self, t: f64) -> f64 {
        if t >= self.scale {
            0.0
        } else {
            self.scale.powf(-self.power) * self.bump.eval(t / self.scale)
        }
    }
    fn support(&self) -> f64 {
        self.scale
    }
    fn rho(&self) -> RhoParam {
        self.rho
    }
    fn tag(&self) -> String {
        format!("{}(scale={}, rho={}, delta'={})", self.name, self.scale, self.rho.value(), self.bump.delta_prime)
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, self.scale * self.bump.plateau(), self.scale]
    }
}

/// Builds a family member from a scale, the group parameter and the cutoff.
pub trait ProfileFamily: Named + Send + Sync {
    fn build(&self, scale: f64, rho: RhoParam, bump: Bump) -> Result<Box<dyn RadialProfile>, SpectralError>;
    /// Normaliser for decay constants at this scale.
    fn normalizer(&self, scale: f64, rho: RhoParam) -> f64;
}

/// `f_{1,r} = r^{-(2rho+1)/2} eta(t/r)`; mass of order `r^{(2rho+1)/2}`.
pub struct SmallScale;
/// `omega_r = r^{-(2rho+1)} eta(t/r)`; mass of order one.
pub struct Omega;
/// Plain `eta(t/r)`.
pub struct PlainBump;

fn check_scale(scale: f64) -> Result<(), SpectralError> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(SpectralError::BadParam(format!("scale must be positive, got {scale}")))
    }
}

impl Named for SmallScale {
    fn name(&self) -> &'static str {
        "f1"
    }
}
impl ProfileFamily for SmallScale {
    fn build(&self, scale: f64, rho: RhoParam, bump: Bump) -> Result<Box<dyn RadialProfile>, SpectralError> {
        check_scale(scale)?;
        let d = rho.dim() as f64;
        Ok(Box::new(ScaledBump { bump, scale, power: d / 2.0, rho, name: "f1" }))
    }
    fn normalizer(&self, scale: f64, rho: RhoParam) -> f64 {
        scale.powf(rho.dim() as f64 / 2.0)
    }
}

impl Named for Omega {
    fn name(&self) -> &'static str {
        "omega"
    }
}
impl ProfileFamily for Omega {
    fn build(&self, scale: f64, rho: RhoParam, bump: Bump) -> Result<Box<dyn RadialProfile>, SpectralError> {
        check_scale(scale)?;
        Ok(Box::new(ScaledBump { bump, scale, power: rho.dim() as f64, rho, name: "omega" }))
    }
    fn normalizer(&self, _scale: f64, _rho: RhoParam) -> f64 {
        1.0
    }
}

impl Named for PlainBump {
    fn name(&self) -> &'static str {
        "bump"
    }
}
impl ProfileFamily for PlainBump {
    fn build(&self, scale: f64, rho: RhoParam, bump: Bump) -> Result<Box<dyn RadialProfile>, SpectralError> {
        check_scale(scale)?;
        Ok(Box::new(ScaledBump { bump, scale, power: 0.0, rho, name: "bump" }))
    }
    fn normalizer(&self, _scale: f64, _rho: RhoParam) -> f64 {
        1.0
    }
}

static FAMILIES: LazyLock<Registry<dyn ProfileFamily>> = LazyLock::new(|| {
    let mut r: Registry<dyn ProfileFamily> = Registry::new("radial profile");
    r.register(Box::new(SmallScale)).register(Box::new(Omega)).register(Box::new(PlainBump));
    r
});

pub fn profile_families() -> &'static Registry<dyn ProfileFamily> {
    &FAMILIES
}

/// `f * f` for a radial `f`, evaluated through the hyperbolic law of cosines.
pub struct SelfConvolution<'a> {
    pub base: &'a dyn RadialProfile,
}

impl SelfConvolution<'_> {
    pub fn eval_checked(&self, t: f64) -> Result<f64, SpectralError> {
        let b = self.base;
        let rho = b.rho();
        let supp = b.support();
        if t >= 2.0 * supp {
            return Ok(0.0);
        }
        let tol = QuadTol::with_abs(1e-13);
        let q = default_integrator();
        let (st, pi) = (t.sinh(), std::f64::consts::PI);
        let outer = |s: f64| -> Complex64 {
            let fs = b.eval(s);
            if fs == 0.0 {
                return cx(0.0);
            }
            let ss = s.sinh();
            let half = (t - s) / 2.0;
            let base = 2.0 * half.sinh().powi(2);
            let inner = |th: f64| {
                let excess = base + 2.0 * st * ss * (th / 2.0).sin().powi(2);
                let v = b.eval(acosh1p(excess));
                match rho {
                    RhoParam::Half => cx(v / pi),
                    RhoParam::One => cx(v * th.sin() / 2.0),
                }
            };
            let iv = q.integrate(&inner, 0.0, pi, &tol).map(|r| r.value.re).unwrap_or(f64::NAN);
            cx(fs * iv * ss.powf(2.0 * rho.value()))
        };
        let r = integrate_pieces(q, &outer, &b.breakpoints(), &tol)?;
        Ok(r.value.re)
    }
}

impl RadialProfile for SelfConvolution<'_> {
    fn eval(&self, t: f64) -> f64 {
        self.eval_checked(t).unwrap_or(f64::NAN)
    }
    fn support(&self) -> f64 {
        2.0 * self.base.support()
    }
    fn rho(&self) -> RhoParam {
        self.base.rho()
    }
    fn tag(&self) -> String {
        format!("selfconv[{}]", self.base.tag())
    }
}

// ---------------------------------------------------------------------------
// Transforms

/// Tolerance for outer transform integrals.
const TRANSFORM_TOL: QuadTol = QuadTol {
    abs: 1e-12,
    rel: 1e-11,
    max_evals: 1_000_000,
};

/// `int_0^inf f(a_t) phi_{-z}(a_t) sinh(t)^{2 rho} dt`.
pub fn transform_cartan(f: &dyn RadialProfile, z: &SphericalParam) -> Result<Complex64, SpectralError> {
    if f.rho() != z.rho {
        return Err(SpectralError::BadParam("profile and parameter use different groups".into()));
    }
    let mz = z.neg();
    let p2 = 2.0 * z.rho.value();
    let err = std::sync::Mutex::new(None);
    let g = |t: f64| {
        let v = f.eval(t);
        if v == 0.0 || t == 0.0 || err.lock().expect("unpoisoned").is_some() {
            return cx(0.0);
        }
        match spherical_phi(&mz, t) {
            Ok(phi) => phi * (v * t.sinh().powf(p2)),
            Err(e) => {
                *err.lock().expect("unpoisoned") = Some(e);
                cx(0.0)
            }
        }
    };
    let r = integrate_pieces(default_integrator(), &g, &f.breakpoints(), &TRANSFORM_TOL)?;
    if let Some(e) = err.into_inner().expect("unpoisoned") {
        return Err(e);
    }
    Ok(r.value)
}

/// Transform of `omega_r(g) = r^{-2} eta(t(g)/r)` on `SL(2,R)` computed in `N A` coordinates:
/// `(1/2pi) int int omega_r(n_y a_t) e^{-(z + 1/2) t} dy dt`.
///
/// The `1/2pi` converts the `dy dt` measure to the radial normalisation used by
/// [`transform_cartan`].
pub fn transform_iwasawa(bump: &Bump, r: f64, z: &SphericalParam) -> Result<Complex64, SpectralError> {
    if z.rho != RhoParam::Half {
        return Err(SpectralError::BadParam("Iwasawa transform is implemented for SL(2,R) only".into()));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(SpectralError::BadParam(format!("r must be in (0,1], got {r}")));
    }
    let zz = z.z();
    let q = default_integrator();
    let sh = |x: f64| (x / 2.0).sinh().powi(2);
    let (sr, sp) = (sh(r), sh(r * bump.plateau()));
    let inner_tol = QuadTol::with_abs(1e-14 / r);
    let err = std::sync::Mutex::new(None);
    let outer = |t: f64| -> Complex64 {
        if err.lock().expect("unpoisoned").is_some() {
            return cx(0.0);
        }
        // y range where the radius stays below r, and where it stays on the plateau.
        let ymax = (4.0 * t.exp() * (sr - sh(t))).max(0.0).sqrt();
        if ymax == 0.0 {
            return cx(0.0);
        }
        let yp = (4.0 * t.exp() * (sp - sh(t))).max(0.0).sqrt();
        let base = 2.0 * sh(t);
        let et = (-t).exp();
        let g = |y: f64| cx(bump.eval(acosh1p(base + et * y * y / 2.0) / r));
        let pts = if yp > 0.0 { vec![0.0, yp, ymax] } else { vec![0.0, ymax] };
        match integrate_pieces(q, &g, &pts, &inner_tol) {
            Ok(v) => v.value * 2.0 * (-(zz + 0.5) * t).exp(),
            Err(e) => {
                *err.lock().expect("unpoisoned") = Some(e);
                cx(0.0)
            }
        }
    };
    let rp = r * bump.plateau();
    let pts = [-r, -rp, 0.0, rp, r];
    let res = integrate_pieces(q, &outer, &pts, &QuadTol::with_abs(1e-13))?;
    if let Some(e) = err.into_inner().expect("unpoisoned") {
        return Err(e.into());
    }
    Ok(res.value / (2.0 * std::f64::consts::PI * r * r))
}

/// `eta^(w) = int_{-1}^{1} eta(t) e^{w t} dt`.
pub fn eta_hat(bump: &Bump, w: Complex64) -> Result<Complex64, SpectralError> {
    let a = bump.plateau();
    // Plateau part in closed form.
    let wa = w * a;
    let plateau = if wa.norm() < 1e-4 {
        let w2 = wa * wa;
        (cx(1.0) + w2 / 6.0 + w2 * w2 / 120.0) * (2.0 * a)
    } else {
        wa.sinh() * 2.0 / w
    };
    let edge = |t: f64| (w * t).cosh() * (2.0 * bump.eval(t));
    let e = default_integrator().integrate(&edge, a, 1.0, &TRANSFORM_TOL)?;
    Ok(plateau + e.value)
}

/// `eta_R^(2 rho z) = int eta(t) e^{2 rho R z t} dt`, the transform of the large-scale function.
pub fn f2_transform(big_r: f64, z: &SphericalParam, delta_prime: f64) -> Result<Complex64, SpectralError> {
    if !(big_r >= 1.0) {
        return Err(SpectralError::BadParam(format!("R must be >= 1, got {big_r}")));
    }
    eta_hat(&Bump::new(delta_prime)?, z.z() * (2.0 * z.rho.value() * big_r))
}

/// Total mass `int eta(t) e^{rho R t} dt`.
pub fn f2_integral(big_r: f64, rho: RhoParam, delta_prime: f64) -> Result<f64, SpectralError> {
    Ok(f2_transform(big_r, &SphericalParam::new(0.5, 0.0, rho), delta_prime)?.re)
}

// ---------------------------------------------------------------------------
// Decay constants

/// `sup |f^(tau)| (1 + scale |tau|)^N / normalizer` over the grid.
pub fn decay_constant(values: &[(f64, f64)], scale: f64, n: i32, normalizer: f64) -> f64 {
    values
        .iter()
        .map(|&(tau, v)| v * (1.0 + scale * tau.abs()).powi(n) / normalizer)
        .fold(0.0, f64::max)
}

/// Points in the decay grid, `0` then log-spaced from `0.5/scale` to `64/scale`.
pub const DECAY_GRID_POINTS: usize = 64;

pub fn decay_tau_grid(scale: f64) -> Vec<f64> {
    let (lo, hi) = (0.5 / scale, 64.0 / scale);
    let n = DECAY_GRID_POINTS - 1;
    std::iter::once(0.0)
        .chain((0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)))
        .collect()
}

/// `sigma` lines for the uniform decay checks, and their bound `B`.
pub const SIGMA_LINES: [f64; 4] = [0.0, 0.25, 0.3, 0.5];
pub const SIGMA_BOUND: f64 = 0.5;

/// `|f^(sigma + i tau)|` over the decay grid for one profile, in grid order.
pub fn transform_on_grid(
    f: &dyn RadialProfile,
    sigma: f64,
    taus: &[f64],
) -> Result<Vec<(f64, f64)>, SpectralError> {
    taus.par_iter()
        .map(|&tau| {
            let v = transform_cartan(f, &SphericalParam::new(sigma, tau, f.rho()))?;
            Ok((tau, v.norm()))
        })
        .collect()
}

/// `|f_{2,R}^(sigma + i tau)|` over a grid.
pub fn f2_on_grid(
    big_r: f64,
    rho: RhoParam,
    sigma: f64,
    delta_prime: f64,
    taus: &[f64],
) -> Result<Vec<(f64, f64)>, SpectralError> {
    taus.par_iter()
        .map(|&tau| Ok((tau, f2_transform(big_r, &SphericalParam::new(sigma, tau, rho), delta_prime)?.norm())))
        .collect()
}

/// Scales for the small-ball decay checks (`f1`, `omega`).
pub const SMALL_SCALES: [f64; 3] = [0.5, 0.1, 0.02];
/// Radii for the large-ball checks.
pub const LARGE_SCALES: [f64; 3] = [2.0, 4.0, 8.0];

/// `|f^|` along one sigma line at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySeries {
    pub profile: String,
    pub rho: RhoParam,
    pub scale: f64,
    pub sigma: f64,
    pub normalizer: f64,
    pub values: Vec<(f64, f64)>,
}

impl DecaySeries {
    pub fn constant(&self, n: i32) -> f64 {
        decay_constant(&self.values, self.scale, n, self.normalizer)
    }
}

/// One series per sigma line for a family member at `scale`, over [`decay_tau_grid`].
pub fn profile_decay_series(
    family: &dyn ProfileFamily,
    rho: RhoParam,
    bump: Bump,
    scale: f64,
    sigmas: &[f64],
) -> Result<Vec<DecaySeries>, SpectralError> {
    let f = family.build(scale, rho, bump)?;
    let taus = decay_tau_grid(scale);
    sigmas
        .iter()
        .map(|&sigma| {
            Ok(DecaySeries {
                profile: family.name().to_string(),
                rho,
                scale,
                sigma,
                normalizer: family.normalizer(scale, rho),
                values: transform_on_grid(f.as_ref(), sigma, &taus)?,
            })
        })
        .collect()
}

/// `|f_{2,R}^|` on the tempered axis; no normaliser, since `|eta_R^(i tau)| <= 2`.
pub fn f2_decay_series(rho: RhoParam, delta_prime: f64, big_r: f64) -> Result<DecaySeries, SpectralError> {
    Ok(DecaySeries {
        profile: "f2".to_string(),
        rho,
        scale: big_r,
        sigma: 0.0,
        normalizer: 1.0,
        values: f2_on_grid(big_r, rho, 0.0, delta_prime, &decay_tau_grid(big_r))?,
    })
}

/// Empirical `C_N` per scale, the sup over all series sharing that scale, in first-seen order.
pub fn constants_by_scale(series: &[DecaySeries], n: i32) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for s in series {
        let c = s.constant(n);
        match out.iter_mut().find(|(k, _)| *k == s.scale) {
            Some(e) => e.1 = e.1.max(c),
            None => out.push((s.scale, c)),
        }
    }
    out
}

/// `max / min` of the constants.
pub fn stability_ratio(constants: &[(f64, f64)]) -> f64 {
    let (lo, hi) = constants.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &(_, c)| (lo.min(c), hi.max(c)));
    hi / lo
}
