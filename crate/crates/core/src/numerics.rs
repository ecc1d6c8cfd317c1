//! Double-double accumulation for the Gram-type quantities behind the bounds.
//!
//! The projection residuals `i`, `s` and the determinant `is − k²` are
//! differences of nearly equal numbers (relative sizes down to ~1e-19 of
//! the raw inner products for small receive arrays), so every inner product
//! is accumulated from error-free products into a [`TwoFloat`].

use num_complex::Complex64;
use twofloat::TwoFloat;

/// A complex number with double-double real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdComplex {
    pub re: TwoFloat,
    pub im: TwoFloat,
}

impl DdComplex {
    pub const ZERO: DdComplex = DdComplex {
        re: TwoFloat::from_f64(0.0),
        im: TwoFloat::from_f64(0.0),
    };

    pub fn from_c64(z: Complex64) -> Self {
        DdComplex {
            re: TwoFloat::from(z.re),
            im: TwoFloat::from(z.im),
        }
    }

    pub fn conj(self) -> Self {
        DdComplex {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn mul(self, rhs: Self) -> Self {
        DdComplex {
            re: self.re * rhs.re - self.im * rhs.im,
            im: self.re * rhs.im + self.im * rhs.re,
        }
    }

    pub fn scale(self, k: TwoFloat) -> Self {
        DdComplex {
            re: self.re * k,
            im: self.im * k,
        }
    }

    pub fn norm_sqr(self) -> TwoFloat {
        self.re * self.re + self.im * self.im
    }

    pub fn to_c64(self) -> Complex64 {
        Complex64::new(to_f64(self.re), to_f64(self.im))
    }
}

impl std::ops::Add for DdComplex {
    type Output = DdComplex;
    fn add(self, rhs: Self) -> Self {
        DdComplex {
            re: self.re + rhs.re,
            im: self.im + rhs.im,
        }
    }
}

impl std::ops::Sub for DdComplex {
    type Output = DdComplex;
    fn sub(self, rhs: Self) -> Self {
        DdComplex {
            re: self.re - rhs.re,
            im: self.im - rhs.im,
        }
    }
}

pub fn to_f64(x: TwoFloat) -> f64 {
    x.hi() + x.lo()
}

/// `a / b` to double-double accuracy.
///
/// `TwoFloat`'s own quotient of two double-doubles is only accurate to about
/// one f64 ulp, which is not enough for the Schur determinant, so the
/// quotient is refined with residuals computed from exact products.
pub fn div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    TwoFloat::new_add(q1, q2) + q3
}

/// `u^H v`, with every partial product formed exactly.
pub fn herm_dot(u: &[Complex64], v: &[Complex64]) -> DdComplex {
    debug_assert_eq!(u.len(), v.len());
    let mut re = TwoFloat::from(0.0);
    let mut im = TwoFloat::from(0.0);
    for (a, b) in u.iter().zip(v) {
        // conj(a)·b = (a.re b.re + a.im b.im) + j(a.re b.im − a.im b.re)
        re += TwoFloat::new_mul(a.re, b.re);
        re += TwoFloat::new_mul(a.im, b.im);
        im += TwoFloat::new_mul(a.re, b.im);
        im -= TwoFloat::new_mul(a.im, b.re);
    }
    DdComplex { re, im }
}

/// `u^H v` for double-double vectors.
pub fn herm_dot_dd(u: &[DdComplex], v: &[DdComplex]) -> DdComplex {
    debug_assert_eq!(u.len(), v.len());
    u.iter()
        .zip(v)
        .fold(DdComplex::ZERO, |acc, (a, b)| acc + a.conj().mul(*b))
}

/// `‖u‖²`.
pub fn norm_sqr(u: &[Complex64]) -> TwoFloat {
    let mut acc = TwoFloat::from(0.0);
    for a in u {
        acc += TwoFloat::new_mul(a.re, a.re);
        acc += TwoFloat::new_mul(a.im, a.im);
    }
    acc
}
