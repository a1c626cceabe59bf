//! Exact coefficient arithmetic and the one-dimensional trigonometric
//! moments used by Haar integration.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rint(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Commutative ring with a rational scalar action.
///
/// Implemented by the coefficient fields and by [`crate::OrientPoly`], so
/// that symmetric tensors can carry either constants or polynomial
/// components.
pub trait Ring: Clone + PartialEq + fmt::Debug + Send + Sync + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn from_rational(r: &Rational) -> Self;
    fn plus(&self, o: &Self) -> Self;
    fn minus(&self, o: &Self) -> Self;
    fn times(&self, o: &Self) -> Self;
    fn negated(&self) -> Self;
    fn scaled(&self, r: &Rational) -> Self;

    fn acc(&mut self, o: &Self) {
        *self = self.plus(o);
    }

    fn from_int(i: i64) -> Self {
        Self::from_rational(&rint(i))
    }
}

pub trait Field: Ring {
    /// True for exact fields, false for floating point.
    const EXACT: bool;
    fn inv(&self) -> Option<Self>;
    fn to_f64(&self) -> f64;
    /// Equality for exact fields, 1e-12 closeness for floats.
    fn near(&self, o: &Self) -> bool {
        self == o
    }
}

impl Ring for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn negated(&self) -> Self {
        -self
    }
    fn scaled(&self, r: &Rational) -> Self {
        self * r
    }
    fn acc(&mut self, o: &Self) {
        *self += o;
    }
}

impl Field for Rational {
    const EXACT: bool = true;
    fn inv(&self) -> Option<Self> {
        if Zero::is_zero(self) {
            None
        } else {
            Some(self.recip())
        }
    }
    fn to_f64(&self) -> f64 {
        ratio_to_f64(self)
    }
}

pub fn ratio_to_f64(r: &Rational) -> f64 {
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // Huge numerator/denominator: shift both down before dividing.
            let nb = r.numer().bits() as i64;
            let db = r.denom().bits() as i64;
            let shift = (nb.max(db) - 900).max(0) as usize;
            let n = (r.numer() >> shift).to_f64().unwrap_or(0.0);
            let d = (r.denom() >> shift).to_f64().unwrap_or(1.0);
            n / d
        }
    }
}

impl Ring for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn from_rational(r: &Rational) -> Self {
        ratio_to_f64(r)
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn negated(&self) -> Self {
        -self
    }
    fn scaled(&self, r: &Rational) -> Self {
        self * ratio_to_f64(r)
    }
    fn acc(&mut self, o: &Self) {
        *self += o;
    }
}

impl Field for f64 {
    const EXACT: bool = false;
    fn inv(&self) -> Option<Self> {
        if *self == 0.0 {
            None
        } else {
            Some(1.0 / self)
        }
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn near(&self, o: &Self) -> bool {
        (self - o).abs() <= 1e-12
    }
}

/// Element a + b·√d of a real quadratic field, d ∈ {2, 3, 5}.
///
/// A value with b = 0 is radical-free (d is stored as 0) and combines with
/// any field. Combining two values with different nonzero radicals panics:
/// mixed-radical towers are not supported.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct QuadScalar {
    a: Rational,
    b: Rational,
    d: u32,
}

pub const SUPPORTED_RADICALS: [u32; 3] = [2, 3, 5];

impl QuadScalar {
    pub fn new(a: Rational, b: Rational, d: u32) -> Self {
        assert!(
            Zero::is_zero(&b) || SUPPORTED_RADICALS.contains(&d),
            "unsupported radical sqrt({d})"
        );
        let mut q = QuadScalar { a, b, d };
        q.normalize();
        q
    }

    pub fn rational(a: Rational) -> Self {
        QuadScalar { a, b: Zero::zero(), d: 0 }
    }

    /// √d
    pub fn sqrt(d: u32) -> Self {
        QuadScalar::new(Zero::zero(), One::one(), d)
    }

    /// The golden ratio (1+√5)/2.
    pub fn phi() -> Self {
        QuadScalar::new(rat(1, 2), rat(1, 2), 5)
    }

    pub fn a(&self) -> &Rational {
        &self.a
    }
    pub fn b(&self) -> &Rational {
        &self.b
    }
    /// Radicand, 0 when the value is rational.
    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn is_rational(&self) -> bool {
        Zero::is_zero(&self.b)
    }

    fn normalize(&mut self) {
        if Zero::is_zero(&self.b) {
            self.d = 0;
        }
    }

    fn radical(&self, o: &Self) -> u32 {
        match (self.d, o.d) {
            (0, d) | (d, 0) => d,
            (x, y) if x == y => x,
            (x, y) => panic!("mixed radicals sqrt({x}) and sqrt({y}) are not supported"),
        }
    }
}

impl Ring for QuadScalar {
    fn zero() -> Self {
        QuadScalar::rational(Zero::zero())
    }
    fn one() -> Self {
        QuadScalar::rational(One::one())
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(&self.a) && Zero::is_zero(&self.b)
    }
    fn from_rational(r: &Rational) -> Self {
        QuadScalar::rational(r.clone())
    }
    fn plus(&self, o: &Self) -> Self {
        let d = self.radical(o);
        let mut q = QuadScalar { a: &self.a + &o.a, b: &self.b + &o.b, d };
        q.normalize();
        q
    }
    fn minus(&self, o: &Self) -> Self {
        let d = self.radical(o);
        let mut q = QuadScalar { a: &self.a - &o.a, b: &self.b - &o.b, d };
        q.normalize();
        q
    }
    fn times(&self, o: &Self) -> Self {
        let d = self.radical(o);
        let dd = rint(d as i64);
        let a = &self.a * &o.a + &self.b * &o.b * dd;
        let b = &self.a * &o.b + &self.b * &o.a;
        let mut q = QuadScalar { a, b, d };
        q.normalize();
        q
    }
    fn negated(&self) -> Self {
        QuadScalar { a: -&self.a, b: -&self.b, d: self.d }
    }
    fn scaled(&self, r: &Rational) -> Self {
        let mut q = QuadScalar { a: &self.a * r, b: &self.b * r, d: self.d };
        q.normalize();
        q
    }
}

impl Field for QuadScalar {
    const EXACT: bool = true;
    fn inv(&self) -> Option<Self> {
        if Ring::is_zero(self) {
            return None;
        }
        // (a - b√d) / (a² - d b²)
        let norm = &self.a * &self.a - &self.b * &self.b * rint(self.d as i64);
        let inv = norm.recip();
        let mut q = QuadScalar { a: &self.a * &inv, b: -&self.b * &inv, d: self.d };
        q.normalize();
        Some(q)
    }
    fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.a) + ratio_to_f64(&self.b) * (self.d as f64).sqrt()
    }
}

impl fmt::Debug for QuadScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for QuadScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_rational() {
            return write!(f, "{}", self.a);
        }
        let root = format!("sqrt({})", self.d);
        let bpart = if self.b.is_one() {
            root
        } else if (-&self.b).is_one() {
            format!("-{root}")
        } else {
            format!("{}*{root}", self.b)
        };
        if Zero::is_zero(&self.a) {
            write!(f, "{bpart}")
        } else if self.b.is_negative() {
            write!(f, "{}{}", self.a, bpart)
        } else {
            write!(f, "{}+{}", self.a, bpart)
        }
    }
}

/// c0 + c1·π with rational parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiLinear {
    pub c0: Rational,
    pub c1: Rational,
}

impl PiLinear {
    pub fn rational(c0: Rational) -> Self {
        PiLinear { c0, c1: Zero::zero() }
    }
    pub fn pi_multiple(c1: Rational) -> Self {
        PiLinear { c0: Zero::zero(), c1 }
    }
    pub fn zero() -> Self {
        PiLinear::rational(Zero::zero())
    }
    pub fn add(&self, o: &Self) -> Self {
        PiLinear { c0: &self.c0 + &o.c0, c1: &self.c1 + &o.c1 }
    }
    pub fn scale(&self, r: &Rational) -> Self {
        PiLinear { c0: &self.c0 * r, c1: &self.c1 * r }
    }
    pub fn is_rational(&self) -> bool {
        Zero::is_zero(&self.c1)
    }
    pub fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.c0) + ratio_to_f64(&self.c1) * std::f64::consts::PI
    }
}

pub fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// n!! with the convention (-1)!! = 0!! = 1.
pub fn double_factorial(n: i64) -> BigInt {
    let mut acc = BigInt::one();
    let mut i = n;
    while i > 1 {
        acc *= BigInt::from(i);
        i -= 2;
    }
    acc
}

/// ∫₀^π cos^a α sin^b α dα.
pub fn alpha_moment(a: u32, b: u32) -> PiLinear {
    if a % 2 == 1 {
        return PiLinear::zero();
    }
    // Reduce the cosine power: I(a,b) = (a-1)/(a+b) I(a-2,b).
    let mut factor = rint(1);
    let mut aa = a;
    while aa >= 2 {
        factor *= rat(aa as i64 - 1, (aa + b) as i64);
        aa -= 2;
    }
    // Then the sine power: I(0,b) = (b-1)/b I(0,b-2).
    let mut bb = b;
    while bb >= 2 {
        factor *= rat(bb as i64 - 1, bb as i64);
        bb -= 2;
    }
    if bb == 0 {
        PiLinear::pi_multiple(factor)
    } else {
        PiLinear::rational(factor * rint(2))
    }
}

/// r with ∫₀^{2π} cos^c θ sin^d θ dθ = r·π.
pub fn circle_moment(c: u32, d: u32) -> Rational {
    if c % 2 == 1 || d % 2 == 1 {
        return Zero::zero();
    }
    let num = double_factorial(c as i64 - 1) * double_factorial(d as i64 - 1) * BigInt::from(2);
    Rational::new(num, double_factorial((c + d) as i64))
}
