//! Exact arithmetic in the ring of integers `Z[w]` of a real quadratic field
//! `Q(sqrt D)` with `D = 1 mod 4`, where `w = (1 + sqrt D)/2`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("integer overflow in {0}")]
    Overflow(&'static str),
    #[error("discriminant D={0} is not supported: {1}")]
    BadDiscriminant(i64, &'static str),
    #[error("place must be 1 or 2, got {0}")]
    BadPlace(u8),
}

/// A real quadratic field with `D = 1 mod 4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldDesc {
    d: i64,
    omega_num: f64,
    omega_conj: f64,
}

fn is_squarefree(n: i64) -> bool {
    let mut k = 2i64;
    while k * k <= n {
        if n % (k * k) == 0 {
            return false;
        }
        k += 1;
    }
    true
}

impl FieldDesc {
    pub fn new(d: i64) -> Result<Self, FieldError> {
        if d < 5 {
            return Err(FieldError::BadDiscriminant(d, "must be at least 5"));
        }
        if d % 4 != 1 {
            return Err(FieldError::BadDiscriminant(
                d,
                "only D = 1 mod 4 is supported (w = (1+sqrt D)/2)",
            ));
        }
        if !is_squarefree(d) {
            return Err(FieldError::BadDiscriminant(d, "must be squarefree"));
        }
        let omega_num = (1.0 + (d as f64).sqrt()) / 2.0;
        // 1 - w is exact in binary64 here, which makes conj/embed agree bit for bit.
        Ok(Self {
            d,
            omega_num,
            omega_conj: 1.0 - omega_num,
        })
    }

    pub fn d(&self) -> i64 {
        self.d
    }

    /// `(D-1)/4`, the constant term in `w^2 = w + (D-1)/4`.
    pub fn k(&self) -> i128 {
        ((self.d - 1) / 4) as i128
    }

    pub fn omega_num(&self) -> f64 {
        self.omega_num
    }

    pub fn omega_conj(&self) -> f64 {
        self.omega_conj
    }

    /// Real value of `w` at place 1 or 2.
    pub fn omega_at(&self, place: u8) -> Result<f64, FieldError> {
        match place {
            1 => Ok(self.omega_num),
            2 => Ok(self.omega_conj),
            p => Err(FieldError::BadPlace(p)),
        }
    }
}

/// `a + b w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct QuadInt {
    pub a: i128,
    pub b: i128,
}

fn ck<T>(v: Option<T>, op: &'static str) -> Result<T, FieldError> {
    v.ok_or(FieldError::Overflow(op))
}

impl QuadInt {
    pub const ZERO: QuadInt = QuadInt { a: 0, b: 0 };
    pub const ONE: QuadInt = QuadInt { a: 1, b: 0 };
    pub const OMEGA: QuadInt = QuadInt { a: 0, b: 1 };

    pub const fn new(a: i128, b: i128) -> Self {
        Self { a, b }
    }

    pub const fn int(a: i128) -> Self {
        Self { a, b: 0 }
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0 && self.b == 0
    }

    #[allow(clippy::should_implement_trait)] // checked: overflow is an error, not a panic
    pub fn add(self, o: Self) -> Result<Self, FieldError> {
        Ok(Self {
            a: ck(self.a.checked_add(o.a), "add")?,
            b: ck(self.b.checked_add(o.b), "add")?,
        })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, o: Self) -> Result<Self, FieldError> {
        Ok(Self {
            a: ck(self.a.checked_sub(o.a), "sub")?,
            b: ck(self.b.checked_sub(o.b), "sub")?,
        })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(self) -> Result<Self, FieldError> {
        Ok(Self {
            a: ck(self.a.checked_neg(), "neg")?,
            b: ck(self.b.checked_neg(), "neg")?,
        })
    }

    pub fn scale(self, s: i128) -> Result<Self, FieldError> {
        Ok(Self {
            a: ck(self.a.checked_mul(s), "scale")?,
            b: ck(self.b.checked_mul(s), "scale")?,
        })
    }

    /// Embedding at place 1 (`w -> (1+sqrt D)/2`) or 2 (`w -> (1-sqrt D)/2`).
    pub fn embed(self, place: u8, f: &FieldDesc) -> Result<f64, FieldError> {
        let w = f.omega_at(place)?;
        Ok((self.b as f64).mul_add(w, self.a as f64))
    }
}

impl fmt::Display for QuadInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:+}w", self.a, self.b)
    }
}

/// Exact product using `w^2 = w + (D-1)/4`.
pub fn qi_mul(x: QuadInt, y: QuadInt, f: &FieldDesc) -> Result<QuadInt, FieldError> {
    let m = |p: i128, q: i128| ck(p.checked_mul(q), "mul");
    let ac = m(x.a, y.a)?;
    let bd = m(x.b, y.b)?;
    let ad = m(x.a, y.b)?;
    let bc = m(x.b, y.a)?;
    let a = ck(ac.checked_add(m(bd, f.k())?), "mul")?;
    let b = ck(ad.checked_add(bc).and_then(|s| s.checked_add(bd)), "mul")?;
    Ok(QuadInt { a, b })
}

/// Galois conjugate `w -> 1 - w`, i.e. `a + b - b w`.
pub fn qi_conj(x: QuadInt) -> Result<QuadInt, FieldError> {
    Ok(QuadInt {
        a: ck(x.a.checked_add(x.b), "conj")?,
        b: ck(x.b.checked_neg(), "conj")?,
    })
}

/// Field norm `a^2 + ab + b^2 (1-D)/4`.
pub fn qi_norm(x: QuadInt, f: &FieldDesc) -> Result<i128, FieldError> {
    let m = |p: i128, q: i128| ck(p.checked_mul(q), "norm");
    let t = m(m(x.b, x.b)?, f.k())?;
    ck(
        m(x.a, x.a)?
            .checked_add(m(x.a, x.b)?)
            .and_then(|s| s.checked_sub(t)),
        "norm",
    )
}

pub fn qi_embed(x: QuadInt, place: u8, f: &FieldDesc) -> Result<f64, FieldError> {
    x.embed(place, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f17() -> FieldDesc {
        FieldDesc::new(17).unwrap()
    }

    #[test]
    fn rejects_bad_discriminants() {
        assert!(FieldDesc::new(13).is_ok());
        assert!(FieldDesc::new(3).is_err());
        assert!(FieldDesc::new(7).is_err());
        assert!(FieldDesc::new(45).is_err());
        assert!(FieldDesc::new(1).is_err());
    }

    #[test]
    fn omega_identities() {
        let f = f17();
        assert!((f.omega_num() + f.omega_conj() - 1.0).abs() < 1e-12);
        assert!((f.omega_num() * f.omega_conj() - (1.0 - 17.0) / 4.0).abs() < 1e-12);
        assert!((f.omega_num() - 2.561_552_812_808_83).abs() < 1e-12);
        assert!((f.omega_conj() + 1.561_552_812_808_83).abs() < 1e-12);
    }

    #[test]
    fn multiplication_examples() {
        let f = f17();
        let x = QuadInt::new(-7, 11);
        assert_eq!(qi_mul(QuadInt::ONE, x, &f).unwrap(), x);
        assert_eq!(
            qi_mul(QuadInt::OMEGA, QuadInt::OMEGA, &f).unwrap(),
            QuadInt::new(4, 1)
        );
        let t = QuadInt::new(2, 1);
        let sq = qi_mul(t, t, &f).unwrap();
        assert_eq!(sq, QuadInt::new(8, 5));
        let e = t.embed(1, &f).unwrap();
        assert!((sq.embed(1, &f).unwrap() - e * e).abs() < 1e-12);
    }

    #[test]
    fn conjugation() {
        let f = f17();
        assert_eq!(qi_conj(QuadInt::int(5)).unwrap(), QuadInt::int(5));
        assert_eq!(qi_conj(QuadInt::OMEGA).unwrap(), QuadInt::new(1, -1));
        let x = QuadInt::new(13, -4);
        assert_eq!(qi_conj(qi_conj(x).unwrap()).unwrap(), x);
        assert_eq!(
            qi_conj(x).unwrap().embed(1, &f).unwrap(),
            x.embed(2, &f).unwrap()
        );
        let tr = x.embed(1, &f).unwrap() + x.embed(2, &f).unwrap();
        assert_eq!(tr, (2 * x.a + x.b) as f64);
    }

    #[test]
    fn overflow_is_reported() {
        let f = f17();
        let big = QuadInt::new(i128::MAX / 2, 1);
        assert_eq!(qi_mul(big, big, &f), Err(FieldError::Overflow("mul")));
        assert!(qi_conj(QuadInt::new(i128::MAX, 1)).is_err());
        assert!(QuadInt::new(i128::MIN, 0).neg().is_err());
    }

    #[test]
    fn norm_matches_product_with_conjugate() {
        let f = f17();
        let x = QuadInt::new(3, -5);
        let p = qi_mul(x, qi_conj(x).unwrap(), &f).unwrap();
        assert_eq!(p.b, 0);
        assert_eq!(p.a, qi_norm(x, &f).unwrap());
    }
}
