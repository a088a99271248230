//! Hyperbolic plane and upper half-space: actions, distances, Cartan radii and
//! ball volumes for `SL2(R)` (rho = 1/2) and `SL2(C)` (rho = 1).

use std::ops::Mul;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("matrix is not unimodular (det = {0})")]
    NotUnimodular(Complex64),
    #[error("matrix has non-real entries but acts on the hyperbolic plane")]
    NotReal,
    #[error("image point has non-positive height {0}")]
    Degenerate(f64),
    #[error("points live in different models")]
    ModelMismatch,
    #[error("squared Frobenius norm {0} is below 2; impossible for a unimodular matrix")]
    NormTooSmall(f64),
    #[error("invalid point: height must be positive, got {0}")]
    BadPoint(f64),
}

/// Real rank-one parameter: 1/2 for `SL2(R)`, 1 for `SL2(C)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RhoParam {
    Half,
    One,
}

impl RhoParam {
    pub fn value(self) -> f64 {
        match self {
            RhoParam::Half => 0.5,
            RhoParam::One => 1.0,
        }
    }

    /// Real dimension `2 rho + 1` of the symmetric space.
    pub fn dim(self) -> usize {
        match self {
            RhoParam::Half => 2,
            RhoParam::One => 3,
        }
    }

    pub fn from_value(v: f64) -> Option<Self> {
        if v == 0.5 {
            Some(RhoParam::Half)
        } else if v == 1.0 {
            Some(RhoParam::One)
        } else {
            None
        }
    }
}

/// A 2x2 complex matrix; real matrices simply carry zero imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub m: [[Complex64; 2]; 2],
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

impl Mat2 {
    pub fn new(a: Complex64, b: Complex64, cc: Complex64, d: Complex64) -> Self {
        Self { m: [[a, b], [cc, d]] }
    }

    pub fn real(a: f64, b: f64, cc: f64, d: f64) -> Self {
        Self::new(c(a), c(b), c(cc), c(d))
    }

    pub fn identity() -> Self {
        Self::real(1.0, 0.0, 0.0, 1.0)
    }

    /// `a_t = diag(e^{t/2}, e^{-t/2})`.
    pub fn a_t(t: f64) -> Self {
        Self::real((t / 2.0).exp(), 0.0, 0.0, (-t / 2.0).exp())
    }

    /// Rotation `k_theta` in `SO(2)`.
    pub fn k_theta(theta: f64) -> Self {
        let (s, co) = theta.sin_cos();
        Self::real(co, -s, s, co)
    }

    /// Unipotent `[[1, y], [0, 1]]`.
    pub fn n_y(y: f64) -> Self {
        Self::real(1.0, y, 0.0, 1.0)
    }

    pub fn det(&self) -> Complex64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0][0] + self.m[1][1]
    }

    /// Squared Frobenius norm.
    pub fn frob2(&self) -> f64 {
        self.m.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    /// Real part of the Frobenius inner product `sum conj(a_kl) b_kl`.
    pub fn frob_dot(&self, o: &Mat2) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(o.m.iter().flatten())
            .map(|(p, q)| (p.conj() * q).re)
            .sum()
    }

    /// Inverse assuming determinant one.
    pub fn inv_unimodular(&self) -> Self {
        let [[a, b], [cc, d]] = self.m;
        Self::new(d, -b, -cc, a)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = *self;
        for z in out.m.iter_mut().flatten() {
            *z *= s;
        }
        out
    }

    pub fn add(&self, o: &Mat2) -> Self {
        let mut out = *self;
        for (z, w) in out.m.iter_mut().flatten().zip(o.m.iter().flatten()) {
            *z += w;
        }
        out
    }

    pub fn is_real(&self, tol: f64) -> bool {
        let scale = self.frob2().sqrt().max(1.0);
        self.m.iter().flatten().all(|z| z.im.abs() <= tol * scale)
    }

    pub fn max_abs_diff(&self, o: &Mat2) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(o.m.iter().flatten())
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_unimodular(&self) -> Result<(), GeomError> {
        let det = self.det();
        if (det - 1.0).norm() > 1e-9 * self.frob2().max(1.0) {
            return Err(GeomError::NotUnimodular(det));
        }
        Ok(())
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let a = &self.m;
        let b = &o.m;
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2 { m }
    }
}

/// A point of the upper half-plane or the upper half-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HypPoint {
    H2 { x: f64, y: f64 },
    H3 { z: Complex64, t: f64 },
}

impl HypPoint {
    pub fn h2(x: f64, y: f64) -> Result<Self, GeomError> {
        if !(y > 0.0) {
            return Err(GeomError::BadPoint(y));
        }
        Ok(HypPoint::H2 { x, y })
    }

    pub fn h3(z: Complex64, t: f64) -> Result<Self, GeomError> {
        if !(t > 0.0) {
            return Err(GeomError::BadPoint(t));
        }
        Ok(HypPoint::H3 { z, t })
    }

    /// Base point `i` of the plane.
    pub fn base_h2() -> Self {
        HypPoint::H2 { x: 0.0, y: 1.0 }
    }

    /// Base point `j` of upper half-space.
    pub fn base_h3() -> Self {
        HypPoint::H3 {
            z: Complex64::new(0.0, 0.0),
            t: 1.0,
        }
    }
}

/// Isometric action of a unimodular matrix.
pub fn act(m: &Mat2, p: &HypPoint) -> Result<HypPoint, GeomError> {
    m.check_unimodular()?;
    let [[a, b], [cc, d]] = m.m;
    match *p {
        HypPoint::H2 { x, y } => {
            if !m.is_real(1e-12) {
                return Err(GeomError::NotReal);
            }
            let z = Complex64::new(x, y);
            let w = (a * z + b) / (cc * z + d);
            if !(w.im > 0.0) || !w.im.is_finite() {
                return Err(GeomError::Degenerate(w.im));
            }
            Ok(HypPoint::H2 { x: w.re, y: w.im })
        }
        HypPoint::H3 { z, t } => {
            let czd = cc * z + d;
            let den = czd.norm_sqr() + cc.norm_sqr() * t * t;
            let num = (a * z + b) * czd.conj() + a * cc.conj() * (t * t);
            let t2 = t / den;
            if !(t2 > 0.0) || !t2.is_finite() {
                return Err(GeomError::Degenerate(t2));
            }
            Ok(HypPoint::H3 { z: num / den, t: t2 })
        }
    }
}

/// `acosh(1 + delta)` without cancellation for small `delta`.
pub fn acosh1p(delta: f64) -> f64 {
    let d = delta.max(0.0);
    (d + (d * (d + 2.0)).sqrt()).ln_1p()
}

/// Hyperbolic distance in either model.
pub fn dist(p: &HypPoint, q: &HypPoint) -> Result<f64, GeomError> {
    match (*p, *q) {
        (HypPoint::H2 { x: x1, y: y1 }, HypPoint::H2 { x: x2, y: y2 }) => {
            let num = (x1 - x2).powi(2) + (y1 - y2).powi(2);
            Ok(acosh1p(num / (2.0 * y1 * y2)))
        }
        (HypPoint::H3 { z: z1, t: t1 }, HypPoint::H3 { z: z2, t: t2 }) => {
            let num = (z1 - z2).norm_sqr() + (t1 - t2).powi(2);
            Ok(acosh1p(num / (2.0 * t1 * t2)))
        }
        _ => Err(GeomError::ModelMismatch),
    }
}

/// Cartan radius `acosh(|M|_F^2 / 2)` of a unimodular matrix.
///
/// Uses `|M|^2 - 2 = |a - conj d|^2 + |b + conj c|^2` (valid when det = 1),
/// which keeps small radii accurate.
pub fn cartan_radius(m: &Mat2, _rho: RhoParam) -> Result<f64, GeomError> {
    m.check_unimodular()?;
    let f = m.frob2();
    if f < 2.0 - 1e-6 {
        return Err(GeomError::NormTooSmall(f));
    }
    let [[a, b], [cc, d]] = m.m;
    let excess = ((a - d.conj()).norm_sqr() + (b + cc.conj()).norm_sqr()) / 2.0;
    Ok(acosh1p(excess))
}

/// `int_0^R sinh(t)^{2 rho} dt`, with the Cartan normalization constant set to one.
pub fn ball_volume(rho: RhoParam, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    match rho {
        // cosh R - 1 = 2 sinh^2(R/2), stable near zero.
        RhoParam::Half => 2.0 * (r / 2.0).sinh().powi(2),
        RhoParam::One => {
            if r < 1e-2 {
                // (sinh 2R - 2R)/4 by its Taylor series.
                let r3 = r * r * r;
                r3 / 3.0 + r3 * r * r / 15.0 + 2.0 * r3 * r3 * r / 315.0
            } else {
                ((2.0 * r).sinh() - 2.0 * r) / 4.0
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sl2r(rng: &mut ChaCha8Rng) -> Mat2 {
        let k1 = Mat2::k_theta(rng.gen_range(0.0..std::f64::consts::TAU));
        let k2 = Mat2::k_theta(rng.gen_range(0.0..std::f64::consts::TAU));
        k1 * Mat2::a_t(rng.gen_range(0.0..4.0)) * k2
    }

    fn random_sl2c(rng: &mut ChaCha8Rng) -> Mat2 {
        let mut z = || Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let (a, b, cc) = (z(), z(), z());
        let a = if a.norm() < 0.1 { a + 1.0 } else { a };
        let d = (1.0 + b * cc) / a;
        Mat2::new(a, b, cc, d)
    }

    #[test]
    fn action_examples() {
        let i = HypPoint::base_h2();
        assert_eq!(act(&Mat2::identity(), &i).unwrap(), i);
        let t: f64 = 1.3;
        match act(&Mat2::a_t(t), &i).unwrap() {
            HypPoint::H2 { x, y } => {
                assert!(x.abs() < 1e-15);
                assert!((y - t.exp()).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
        assert_eq!(
            act(&Mat2::n_y(1.0), &i).unwrap(),
            HypPoint::H2 { x: 1.0, y: 1.0 }
        );
        let k = Mat2::k_theta(0.7);
        let ki = act(&k, &i).unwrap();
        assert!(dist(&ki, &i).unwrap() < 1e-12);
        assert!(dist(&act(&k, &HypPoint::base_h3()).unwrap(), &HypPoint::base_h3()).unwrap() < 1e-12);
    }

    #[test]
    fn act_rejects_bad_input() {
        let bad = Mat2::real(2.0, 0.0, 0.0, 2.0);
        assert!(matches!(
            act(&bad, &HypPoint::base_h2()),
            Err(GeomError::NotUnimodular(_))
        ));
        let cm = Mat2::new(
            Complex64::new(0.0, 1.0),
            c(0.0),
            c(0.0),
            Complex64::new(0.0, -1.0),
        );
        assert_eq!(act(&cm, &HypPoint::base_h2()), Err(GeomError::NotReal));
        assert!(HypPoint::h2(0.0, 0.0).is_err());
    }

    #[test]
    fn distance_examples() {
        let i = HypPoint::base_h2();
        assert_eq!(dist(&i, &i).unwrap(), 0.0);
        let p = HypPoint::h2(0.0, 2.5f64.exp()).unwrap();
        assert!((dist(&i, &p).unwrap() - 2.5).abs() < 1e-12);
        assert!(dist(&i, &HypPoint::base_h3()).is_err());
    }

    #[test]
    fn cartan_radius_examples() {
        assert_eq!(cartan_radius(&Mat2::identity(), RhoParam::Half).unwrap(), 0.0);
        for t in [1e-6, 0.3, 2.0, 7.5] {
            let r = cartan_radius(&Mat2::a_t(t), RhoParam::Half).unwrap();
            assert!((r - t).abs() < 1e-9 * t.max(1.0), "{t} {r}");
        }
    }

    #[test]
    fn cartan_radius_matches_displacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let i = HypPoint::base_h2();
        let j = HypPoint::base_h3();
        for _ in 0..1000 {
            let m = random_sl2r(&mut rng);
            let r = cartan_radius(&m, RhoParam::Half).unwrap();
            let d = dist(&act(&m, &i).unwrap(), &i).unwrap();
            assert!((r - d).abs() < 1e-9, "{r} {d}");
            let mc = random_sl2c(&mut rng);
            let r = cartan_radius(&mc, RhoParam::One).unwrap();
            let d = dist(&act(&mc, &j).unwrap(), &j).unwrap();
            assert!((r - d).abs() < 1e-9, "{r} {d}");
        }
    }

    #[test]
    fn isometry_and_action_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let (m, n) = (random_sl2r(&mut rng), random_sl2r(&mut rng));
            let p = HypPoint::h2(rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0)).unwrap();
            let q = HypPoint::h2(rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0)).unwrap();
            let d0 = dist(&p, &q).unwrap();
            let d1 = dist(&act(&m, &p).unwrap(), &act(&m, &q).unwrap()).unwrap();
            assert!((d0 - d1).abs() < 1e-9 * d0.max(1.0));
            let lhs = act(&(m * n), &p).unwrap();
            let rhs = act(&m, &act(&n, &p).unwrap()).unwrap();
            assert!(dist(&lhs, &rhs).unwrap() < 1e-9);

            let (mc, nc) = (random_sl2c(&mut rng), random_sl2c(&mut rng));
            let pc = HypPoint::h3(Complex64::new(0.3, -0.2), 0.8).unwrap();
            let lhs = act(&(mc * nc), &pc).unwrap();
            let rhs = act(&mc, &act(&nc, &pc).unwrap()).unwrap();
            assert!(dist(&lhs, &rhs).unwrap() < 1e-8);
        }
    }

    #[test]
    fn triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pt = || HypPoint::h2(rng.gen_range(-5.0..5.0), rng.gen_range(0.01..5.0)).unwrap();
        for _ in 0..10_000 {
            let (a, b, cc) = (pt(), pt(), pt());
            let ab = dist(&a, &b).unwrap();
            let bc = dist(&b, &cc).unwrap();
            let ac = dist(&a, &cc).unwrap();
            assert!(ac <= ab + bc + 1e-9);
        }
    }

    fn simpson(f: impl Fn(f64) -> f64, b: f64, n: usize) -> f64 {
        let h = b / n as f64;
        let mut s = f(0.0) + f(b);
        for k in 1..n {
            s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn ball_volume_closed_forms() {
        for rho in [RhoParam::Half, RhoParam::One] {
            assert_eq!(ball_volume(rho, 0.0), 0.0);
            for r in [0.005, 0.5, 2.0, 5.0] {
                let q = simpson(|t| t.sinh().powf(2.0 * rho.value()), r, 2000);
                assert!((ball_volume(rho, r) - q).abs() < 1e-9 * q.max(1e-12), "{r}");
            }
        }
        assert!((ball_volume(RhoParam::Half, 3.0) - (3f64.cosh() - 1.0)).abs() < 1e-12);
        let r = 2.0f64;
        let v = (r.sinh() * r.cosh() - r) / 2.0;
        assert!((ball_volume(RhoParam::One, r) - v).abs() < 1e-12);
    }

    #[test]
    fn ball_volume_growth_and_small_radius() {
        // For rho = 1 the additive constant -ln 8 still costs 5.2% at R = 20.
        for (rho, r) in [(RhoParam::Half, 20.0), (RhoParam::One, 25.0)] {
            let g = ball_volume(rho, r).ln() / r;
            assert!((g / (2.0 * rho.value()) - 1.0).abs() < 0.05);
        }
        for rho in [RhoParam::Half, RhoParam::One] {
            let d = rho.dim() as i32;
            let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3]
                .iter()
                .map(|&r| ball_volume(rho, r) / r.powi(d))
                .collect();
            for w in ratios.windows(2) {
                assert!((w[0] / w[1] - 1.0).abs() < 0.05);
            }
        }
    }
}
