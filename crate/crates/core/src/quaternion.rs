//! The quaternion algebra `(u, v / K)` and its order `O = Z[w] + iZ[w] + jZ[w] + ijZ[w]`.

use num_complex::Complex64;
use thiserror::Error;

use crate::hypgeom::{Mat2, RhoParam};
use crate::numberfield::{qi_mul, FieldDesc, FieldError, QuadInt};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuatError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("u and v must be nonzero")]
    ZeroParameter,
    #[error("place {0} is not split in this embedding convention")]
    PlaceNotSplit(u8),
    #[error("a real quadratic field has two real places; got places {0:?}")]
    BadPlaces(Vec<f64>),
}

/// `(u, v / K)` with rational integral `u`, `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraDesc {
    pub field: FieldDesc,
    pub u: i64,
    pub v: i64,
    pub places: Vec<RhoParam>,
}

impl AlgebraDesc {
    pub fn new(field: FieldDesc, u: i64, v: i64, places: &[f64]) -> Result<Self, QuatError> {
        if u == 0 || v == 0 {
            return Err(QuatError::ZeroParameter);
        }
        // Both archimedean places of a real quadratic field are real.
        if places.len() != 2 || places.iter().any(|&p| p != 0.5) {
            return Err(QuatError::BadPlaces(places.to_vec()));
        }
        if u < 0 {
            return Err(QuatError::PlaceNotSplit(1));
        }
        Ok(Self {
            field,
            u,
            v,
            places: vec![RhoParam::Half; 2],
        })
    }

    /// The `Q(sqrt 17)`, `(3, 5)` preset. Non-split; cocompactness is assumed, not checked.
    pub fn preset_q17() -> Self {
        Self::new(FieldDesc::new(17).expect("17 is valid"), 3, 5, &[0.5, 0.5])
            .expect("preset is valid")
    }

    pub fn rho(&self, place: u8) -> RhoParam {
        self.places[(place - 1) as usize]
    }
}

/// `x0 + x1 i + x2 j + x3 ij`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct QuatElt {
    pub x: [QuadInt; 4],
}

impl QuatElt {
    pub const ONE: QuatElt = QuatElt {
        x: [QuadInt::ONE, QuadInt::ZERO, QuadInt::ZERO, QuadInt::ZERO],
    };
    pub const I: QuatElt = QuatElt {
        x: [QuadInt::ZERO, QuadInt::ONE, QuadInt::ZERO, QuadInt::ZERO],
    };
    pub const J: QuatElt = QuatElt {
        x: [QuadInt::ZERO, QuadInt::ZERO, QuadInt::ONE, QuadInt::ZERO],
    };
    pub const IJ: QuatElt = QuatElt {
        x: [QuadInt::ZERO, QuadInt::ZERO, QuadInt::ZERO, QuadInt::ONE],
    };

    /// Integer coordinates in the basis `(1, w, i, iw, j, jw, ij, ijw)`.
    pub fn from_coords(c: &[i64; 8]) -> Self {
        let mut x = [QuadInt::ZERO; 4];
        for (k, q) in x.iter_mut().enumerate() {
            *q = QuadInt::new(c[2 * k] as i128, c[2 * k + 1] as i128);
        }
        Self { x }
    }

    pub fn coords(&self) -> [i128; 8] {
        let mut c = [0i128; 8];
        for (k, q) in self.x.iter().enumerate() {
            c[2 * k] = q.a;
            c[2 * k + 1] = q.b;
        }
        c
    }

    /// Coordinates narrowed to `i64`, or an overflow error.
    pub fn coords_i64(&self) -> Result<[i64; 8], FieldError> {
        let mut out = [0i64; 8];
        for (o, c) in out.iter_mut().zip(self.coords()) {
            *o = i64::try_from(c).map_err(|_| FieldError::Overflow("narrowing"))?;
        }
        Ok(out)
    }

    pub fn neg(&self) -> Result<Self, FieldError> {
        let mut x = self.x;
        for q in x.iter_mut() {
            *q = q.neg()?;
        }
        Ok(Self { x })
    }

    pub fn sub(&self, o: &Self) -> Result<Self, FieldError> {
        let mut x = self.x;
        for (q, p) in x.iter_mut().zip(o.x) {
            *q = q.sub(p)?;
        }
        Ok(Self { x })
    }

    /// Pick the representative of `{x, -x}` whose first nonzero coordinate is positive.
    pub fn canonical_sign(&self) -> Result<Self, FieldError> {
        match self.coords().iter().find(|&&c| c != 0) {
            Some(&c) if c < 0 => self.neg(),
            _ => Ok(*self),
        }
    }
}

/// Exact product under `i^2 = u`, `j^2 = v`, `ij = -ji`.
pub fn quat_mul(x: &QuatElt, y: &QuatElt, a: &AlgebraDesc) -> Result<QuatElt, QuatError> {
    let f = &a.field;
    let (u, v) = (a.u as i128, a.v as i128);
    let m = |p: usize, q: usize| qi_mul(x.x[p], y.x[q], f);
    let z0 = m(0, 0)?
        .add(m(1, 1)?.scale(u)?)?
        .add(m(2, 2)?.scale(v)?)?
        .sub(m(3, 3)?.scale(u.checked_mul(v).ok_or(FieldError::Overflow("mul"))?)?)?;
    let z1 = m(0, 1)?
        .add(m(1, 0)?)?
        .sub(m(2, 3)?.scale(v)?)?
        .add(m(3, 2)?.scale(v)?)?;
    let z2 = m(0, 2)?
        .add(m(2, 0)?)?
        .add(m(1, 3)?.scale(u)?)?
        .sub(m(3, 1)?.scale(u)?)?;
    let z3 = m(0, 3)?.add(m(3, 0)?)?.add(m(1, 2)?)?.sub(m(2, 1)?)?;
    Ok(QuatElt {
        x: [z0, z1, z2, z3],
    })
}

/// Reduced norm `x0^2 - u x1^2 - v x2^2 + uv x3^2`.
pub fn quat_norm(x: &QuatElt, a: &AlgebraDesc) -> Result<QuadInt, QuatError> {
    let f = &a.field;
    let (u, v) = (a.u as i128, a.v as i128);
    let sq = |q: QuadInt| qi_mul(q, q, f);
    let uv = u.checked_mul(v).ok_or(FieldError::Overflow("norm"))?;
    Ok(sq(x.x[0])?
        .sub(sq(x.x[1])?.scale(u)?)?
        .sub(sq(x.x[2])?.scale(v)?)?
        .add(sq(x.x[3])?.scale(uv)?)?)
}

/// Reduced trace `2 x0`.
pub fn quat_trace(x: &QuatElt) -> Result<QuadInt, QuatError> {
    Ok(x.x[0].scale(2)?)
}

/// Matrix image at a real place: `M_i = diag(sqrt u, -sqrt u)`, `M_j = [[0,1],[v,0]]`.
pub fn embed_matrix(x: &QuatElt, place: u8, a: &AlgebraDesc) -> Result<Mat2, QuatError> {
    if !(1..=2).contains(&place) {
        return Err(QuatError::PlaceNotSplit(place));
    }
    let f = &a.field;
    let s = (a.u as f64).sqrt();
    let v = a.v as f64;
    let e = |q: QuadInt| q.embed(place, f);
    let (x0, x1, x2, x3) = (e(x.x[0])?, e(x.x[1])?, e(x.x[2])?, e(x.x[3])?);
    let r = |t: f64| Complex64::new(t, 0.0);
    Ok(Mat2::new(
        r(x1.mul_add(s, x0)),
        r(x3.mul_add(s, x2)),
        r(v * (-x3).mul_add(s, x2)),
        r((-x1).mul_add(s, x0)),
    ))
}

/// True iff every integer coordinate of `x - 1` is divisible by `q`.
pub fn congruence_test(x: &QuatElt, q: u64) -> bool {
    let q = q.max(1) as i128;
    let mut c = x.coords();
    c[0] -= 1;
    c.iter().all(|&k| k.rem_euclid(q) == 0)
}

/// Real rho parameter at a place (always 1/2 for the supported algebras).
pub fn place_rho(a: &AlgebraDesc, place: u8) -> RhoParam {
    a.rho(place)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alg() -> AlgebraDesc {
        AlgebraDesc::preset_q17()
    }

    #[test]
    fn basis_relations() {
        let a = alg();
        assert_eq!(quat_mul(&QuatElt::I, &QuatElt::J, &a).unwrap(), QuatElt::IJ);
        assert_eq!(
            quat_mul(&QuatElt::J, &QuatElt::I, &a).unwrap(),
            QuatElt::IJ.neg().unwrap()
        );
        let ii = quat_mul(&QuatElt::I, &QuatElt::I, &a).unwrap();
        assert_eq!(ii, QuatElt::from_coords(&[3, 0, 0, 0, 0, 0, 0, 0]));
        let jj = quat_mul(&QuatElt::J, &QuatElt::J, &a).unwrap();
        assert_eq!(jj, QuatElt::from_coords(&[5, 0, 0, 0, 0, 0, 0, 0]));
        let kk = quat_mul(&QuatElt::IJ, &QuatElt::IJ, &a).unwrap();
        assert_eq!(kk, QuatElt::from_coords(&[-15, 0, 0, 0, 0, 0, 0, 0]));
        let x = QuatElt::from_coords(&[1, -2, 3, 0, 5, 1, -1, 2]);
        assert_eq!(quat_mul(&QuatElt::ONE, &x, &a).unwrap(), x);
        assert_eq!(quat_mul(&x, &QuatElt::ONE, &a).unwrap(), x);
    }

    #[test]
    fn norm_and_trace_examples() {
        let a = alg();
        assert_eq!(quat_norm(&QuatElt::ONE, &a).unwrap(), QuadInt::ONE);
        assert_eq!(quat_norm(&QuatElt::I, &a).unwrap(), QuadInt::int(-3));
        assert_eq!(quat_trace(&QuatElt::ONE).unwrap(), QuadInt::int(2));
        assert_eq!(quat_trace(&QuatElt::I).unwrap(), QuadInt::ZERO);
        let w = QuatElt::from_coords(&[0, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(quat_trace(&w).unwrap(), QuadInt::new(0, 2));
        // 2 + i has norm 4 - 3 = 1.
        let g = QuatElt::from_coords(&[2, 0, 1, 0, 0, 0, 0, 0]);
        assert_eq!(quat_norm(&g, &a).unwrap(), QuadInt::ONE);
    }

    #[test]
    fn norm_is_x_times_conjugate() {
        // Independent route: n(x) = x * xbar with xbar = x0 - x1 i - x2 j - x3 ij.
        let a = alg();
        let x = QuatElt::from_coords(&[3, -1, 2, 4, -5, 0, 1, 1]);
        let mut xb = x.neg().unwrap();
        xb.x[0] = x.x[0];
        let p = quat_mul(&x, &xb, &a).unwrap();
        assert_eq!(p.x[1..], [QuadInt::ZERO; 3]);
        assert_eq!(p.x[0], quat_norm(&x, &a).unwrap());
    }

    #[test]
    fn matrix_examples() {
        let a = alg();
        for p in [1, 2] {
            let one = embed_matrix(&QuatElt::ONE, p, &a).unwrap();
            assert_eq!(one, Mat2::identity());
            let i = embed_matrix(&QuatElt::I, p, &a).unwrap();
            let s = 3f64.sqrt();
            assert!(i.max_abs_diff(&Mat2::real(s, 0.0, 0.0, -s)) < 1e-15);
            let j = embed_matrix(&QuatElt::J, p, &a).unwrap();
            assert_eq!(j, Mat2::real(0.0, 1.0, 5.0, 0.0));
        }
        assert!(embed_matrix(&QuatElt::ONE, 3, &a).is_err());
    }

    #[test]
    fn congruence_examples() {
        assert!(congruence_test(&QuatElt::ONE, 7));
        let x = QuatElt::from_coords(&[1, 0, 3, 0, 0, 0, 0, 0]);
        assert!(congruence_test(&x, 3));
        assert!(!congruence_test(&QuatElt::I, 2));
        let y = QuatElt::from_coords(&[-5, 6, 0, 0, 0, 0, -12, 0]);
        assert!(congruence_test(&y, 6));
        assert!(congruence_test(&y, 3));
        assert!(!congruence_test(&y, 4));
    }

    #[test]
    fn canonical_sign_choice() {
        let x = QuatElt::from_coords(&[0, 0, -1, 2, 0, 0, 0, 0]);
        let c = x.canonical_sign().unwrap();
        assert_eq!(c.coords()[2], 1);
        assert_eq!(c.canonical_sign().unwrap(), c);
    }

    #[test]
    fn invalid_algebras() {
        let f = FieldDesc::new(17).unwrap();
        assert!(AlgebraDesc::new(f, 0, 5, &[0.5, 0.5]).is_err());
        assert!(AlgebraDesc::new(f, 3, 5, &[0.5, 1.0]).is_err());
        assert!(AlgebraDesc::new(f, -3, 5, &[0.5, 0.5]).is_err());
    }
}
