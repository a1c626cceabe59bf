//! Point groups: realization from generator matrices, invariant tensors of
//! the rotation subgroup, and the split into types ±1 under an improper
//! representative 𝔨.
//!
//! The symmetry axis is m₁ throughout. A rotation 𝔰 acts on a tensor field
//! by V(𝔭) ↦ V(𝔭𝔰), i.e. m_j ↦ Σᵢ sᵢⱼ mᵢ.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactscalar::{factorial, rat, rint, Field, QuadScalar, Rational, Ring};
use crate::linalg::{independent_rows, nullspace};
use crate::so3poly::RotMatrix;
use crate::tensors::{build_basis_w, monomials, SymTensor};

/// Largest invariant-tensor order handled by the closed forms and averaging.
pub const INVARIANT_CAP: usize = 6;

const MAX_GROUP_ORDER: usize = 240;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupFamily {
    Cinf,
    Cinfv,
    Cinfh,
    Dinf,
    Dinfh,
    Cn,
    Cnv,
    Cnh,
    S2n,
    Dn,
    Dnh,
    Dnd,
    T,
    Td,
    Th,
    O,
    Oh,
    I,
    Ih,
}

/// A point group in Schoenflies notation. For S₂ₙ the stored `n` is half the
/// printed number, so "S4" has n = 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointGroupSpec {
    pub family: GroupFamily,
    pub n: u32,
}

/// The rotation subgroup 𝒢₁.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProperGroup {
    Cinf,
    Dinf,
    C(u32),
    D(u32),
    T,
    O,
    I,
}

pub const GROUP_NAMES: &str = "C<n>, C<n>v, C<n>h, S<2n>, D<n>, D<n>h, D<n>d, Cs, Ci, \
Cinf, Cinfv, Cinfh, Dinf, Dinfh, T, Td, Th, O, Oh, I, Ih";

impl PointGroupSpec {
    pub fn new(family: GroupFamily, n: u32) -> Result<Self> {
        use GroupFamily::*;
        let needs_n = matches!(family, Cn | Cnv | Cnh | S2n | Dn | Dnh | Dnd);
        if needs_n && n == 0 {
            return Err(Error::Invalid(format!("{family:?} needs n ≥ 1")));
        }
        Ok(PointGroupSpec { family, n: if needs_n { n } else { 0 } })
    }

    pub fn proper(&self) -> ProperGroup {
        use GroupFamily::*;
        match self.family {
            Cinf | Cinfv | Cinfh => ProperGroup::Cinf,
            Dinf | Dinfh => ProperGroup::Dinf,
            Cn | Cnv | Cnh | S2n => ProperGroup::C(self.n),
            Dn | Dnh | Dnd => ProperGroup::D(self.n),
            T | Td | Th => ProperGroup::T,
            O | Oh => ProperGroup::O,
            I | Ih => ProperGroup::I,
        }
    }

    pub fn has_improper(&self) -> bool {
        !matches!(self.family, GroupFamily::Cinf | GroupFamily::Dinf | GroupFamily::Cn | GroupFamily::Dn)
            && !matches!(self.family, GroupFamily::T | GroupFamily::O | GroupFamily::I)
    }

    /// The chosen 𝔨, written as an exact angle of j_θ (θ = π·num/den) or a
    /// special matrix. None for proper-only groups.
    fn k_choice(&self) -> Option<KChoice> {
        use GroupFamily::*;
        let n = self.n as i64;
        Some(match self.family {
            Cinf | Dinf | Cn | Dn | T | O | I => return None,
            Cinfv | Cnv => KChoice::Diag110,
            Cinfh | Dinfh | Th | Oh | Ih => KChoice::Inversion,
            Cnh | Dnh if n % 2 == 0 => KChoice::Inversion,
            Cnh | Dnh => KChoice::J(1, n),
            S2n | Dnd if n % 2 == 1 => KChoice::Inversion,
            S2n | Dnd => KChoice::J(1, n),
            Td => KChoice::J(1, 2),
        })
    }

    pub fn contains_inversion(&self) -> bool {
        matches!(self.k_choice(), Some(KChoice::Inversion))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self.proper(), ProperGroup::Cinf | ProperGroup::Dinf)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum KChoice {
    Inversion,
    /// diag(-1,-1,1) = j_π b₂
    Diag110,
    J(i64, i64),
}

impl fmt::Display for PointGroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use GroupFamily::*;
        let n = self.n;
        match self.family {
            Cinf => write!(f, "Cinf"),
            Cinfv => write!(f, "Cinfv"),
            Cinfh => write!(f, "Cinfh"),
            Dinf => write!(f, "Dinf"),
            Dinfh => write!(f, "Dinfh"),
            Cn => write!(f, "C{n}"),
            Cnv => write!(f, "C{n}v"),
            Cnh => write!(f, "C{n}h"),
            S2n => write!(f, "S{}", 2 * n),
            Dn => write!(f, "D{n}"),
            Dnh => write!(f, "D{n}h"),
            Dnd => write!(f, "D{n}d"),
            T => write!(f, "T"),
            Td => write!(f, "Td"),
            Th => write!(f, "Th"),
            O => write!(f, "O"),
            Oh => write!(f, "Oh"),
            I => write!(f, "I"),
            Ih => write!(f, "Ih"),
        }
    }
}

impl FromStr for PointGroupSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use GroupFamily::*;
        let bad = |pos: usize, why: &str| {
            Error::Invalid(format!("cannot parse group '{s}' at position {pos}: {why}; valid names: {GROUP_NAMES}"))
        };
        let fixed = match s {
            "Cinf" => Some((Cinf, 0)),
            "Cinfv" => Some((Cinfv, 0)),
            "Cinfh" => Some((Cinfh, 0)),
            "Dinf" => Some((Dinf, 0)),
            "Dinfh" => Some((Dinfh, 0)),
            "T" => Some((T, 0)),
            "Td" => Some((Td, 0)),
            "Th" => Some((Th, 0)),
            "O" => Some((O, 0)),
            "Oh" => Some((Oh, 0)),
            "I" => Some((I, 0)),
            "Ih" => Some((Ih, 0)),
            "Cs" => Some((Cnh, 1)),
            "Ci" => Some((S2n, 1)),
            _ => None,
        };
        if let Some((fam, n)) = fixed {
            return PointGroupSpec::new(fam, n);
        }
        let mut chars = s.char_indices();
        let lead = match chars.next() {
            Some((_, c @ ('C' | 'S' | 'D'))) => c,
            Some((p, _)) => return Err(bad(p, "expected C, S, D, T, O or I")),
            None => return Err(bad(0, "empty name")),
        };
        let digits: String = s[1..].chars().take_while(|c| c.is_ascii_digit()).collect();
        if digits.is_empty() {
            return Err(bad(1, "expected a number"));
        }
        let num: u32 = digits.parse().map_err(|_| bad(1, "number out of range"))?;
        let suffix = &s[1 + digits.len()..];
        let spos = 1 + digits.len();
        let fam = match (lead, suffix) {
            ('C', "") => Cn,
            ('C', "v") => Cnv,
            ('C', "h") => Cnh,
            ('D', "") => Dn,
            ('D', "h") => Dnh,
            ('D', "d") => Dnd,
            ('S', "") => S2n,
            _ => return Err(bad(spos, &format!("unexpected suffix '{suffix}'"))),
        };
        if num == 0 {
            return Err(bad(1, "order must be positive"));
        }
        if fam == S2n {
            if num % 2 == 1 {
                return Err(bad(1, "S groups need an even order"));
            }
            return PointGroupSpec::new(S2n, num / 2);
        }
        PointGroupSpec::new(fam, num)
    }
}

// ------------------------------------------------------------- matrices

fn q(r: Rational) -> QuadScalar {
    QuadScalar::rational(r)
}

fn qm(rows: [[i64; 3]; 3]) -> RotMatrix<QuadScalar> {
    RotMatrix::new(rows.map(|r| r.map(|x| q(rint(x))))).expect("integer orthogonal matrix")
}

/// Exact cos and sin of π·num/den when they lie in a single quadratic field.
fn exact_cos_sin(num: i64, den: i64) -> Option<(QuadScalar, QuadScalar)> {
    let g = num_integer::gcd(num, den).max(1);
    let (a, b) = (num / g, den / g);
    let theta = std::f64::consts::PI * a as f64 / b as f64;
    let sgn = |x: f64| if x < 0.0 { -1 } else { 1 };
    let (cs, ss) = (sgn(theta.cos()), sgn(theta.sin()));
    let half_root = |d: u32, s: i64| QuadScalar::new(rint(0), rat(s, 2), d);
    let (c, s) = match b {
        1 => (q(rint(if a.rem_euclid(2) == 0 { 1 } else { -1 })), q(rint(0))),
        2 => (q(rint(0)), q(rint(ss))),
        3 => (q(rat(cs, 2)), half_root(3, ss)),
        6 => (half_root(3, cs), q(rat(ss, 2))),
        4 => (half_root(2, cs), half_root(2, ss)),
        _ => return None,
    };
    Some((c, s))
}

/// j_θ with θ = π·num/den, exactly.
pub fn j_exact(num: i64, den: i64) -> Option<RotMatrix<QuadScalar>> {
    let (c, s) = exact_cos_sin(num, den)?;
    let z = q(rint(0));
    let o = q(rint(1));
    Some(RotMatrix::new_unchecked([
        [o, z.clone(), z.clone()],
        [z.clone(), c.clone(), s.negated()],
        [z, s, c],
    ]))
}

pub fn j_float(theta: f64) -> RotMatrix<f64> {
    let (s, c) = theta.sin_cos();
    RotMatrix::new_unchecked([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
}

pub fn b2() -> RotMatrix<QuadScalar> {
    qm([[-1, 0, 0], [0, 1, 0], [0, 0, -1]])
}

pub fn r3() -> RotMatrix<QuadScalar> {
    qm([[0, 0, 1], [1, 0, 0], [0, 1, 0]])
}

/// The five-fold rotation 𝔳₅ over ℚ(√5).
pub fn v5() -> RotMatrix<QuadScalar> {
    let phi = QuadScalar::phi();
    let h = rat(1, 2);
    let one = q(rint(1));
    let pm1 = phi.minus(&one);
    let m = [
        [phi.scaled(&h), one.negated().scaled(&h), pm1.scaled(&h)],
        [one.scaled(&h), pm1.scaled(&h), phi.negated().scaled(&h)],
        [pm1.scaled(&h), phi.scaled(&h), one.scaled(&h)],
    ];
    RotMatrix::new(m).expect("v5 is orthogonal")
}

fn to_float(m: &RotMatrix<QuadScalar>) -> RotMatrix<f64> {
    m.map(|x| x.to_f64())
}

fn mat_near<F: Field>(a: &RotMatrix<F>, b: &RotMatrix<F>) -> bool {
    (0..3).all(|i| (0..3).all(|j| a.entry(i, j).near(b.entry(i, j))))
}

/// Closure of a generator set under multiplication.
pub fn closure<F: Field>(gens: &[RotMatrix<F>]) -> Result<Vec<RotMatrix<F>>> {
    let mut els = vec![RotMatrix::identity()];
    let mut i = 0;
    while i < els.len() {
        for g in gens {
            let p = els[i].mul(g);
            if !els.iter().any(|e| mat_near(e, &p)) {
                els.push(p);
                if els.len() > MAX_GROUP_ORDER {
                    return Err(Error::Internal("group closure did not terminate".into()));
                }
            }
        }
        i += 1;
    }
    Ok(els)
}

/// Elements of the rotation subgroup.
#[derive(Clone, Debug)]
pub enum Elements {
    Exact(Vec<RotMatrix<QuadScalar>>),
    Float(Vec<RotMatrix<f64>>),
    /// C∞ and D∞: no element list.
    Continuous,
}

#[derive(Clone, Debug)]
pub struct Improper {
    /// The inversion belongs to the group, so 𝔨 is the identity.
    pub inversion: bool,
    pub k_exact: Option<RotMatrix<QuadScalar>>,
    pub k_float: RotMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct GroupRealization {
    pub spec: PointGroupSpec,
    pub elements: Elements,
    /// Exact generators, or for continuous groups exact elements at
    /// rational angles.
    pub generators_exact: Vec<RotMatrix<QuadScalar>>,
    /// Floating-point generators, or sampled elements for continuous groups.
    pub generators_float: Vec<RotMatrix<f64>>,
    pub improper: Option<Improper>,
}

impl GroupRealization {
    pub fn is_exact(&self) -> bool {
        matches!(self.elements, Elements::Exact(_))
    }

    pub fn order(&self) -> Option<usize> {
        match &self.elements {
            Elements::Exact(v) => Some(v.len()),
            Elements::Float(v) => Some(v.len()),
            Elements::Continuous => None,
        }
    }

    pub fn exact_elements(&self) -> Option<&[RotMatrix<QuadScalar>]> {
        match &self.elements {
            Elements::Exact(v) => Some(v),
            _ => None,
        }
    }

    /// V(𝔭𝔰) = V(𝔭) for every generator: exactly where possible, else to 1e-10.
    pub fn leaves_invariant(&self, v: &SymTensor<QuadScalar>) -> bool {
        let exact_ok = self.generators_exact.iter().all(|s| &v.rotate(s) == v);
        let vf = v.to_f64();
        let float_ok = self.generators_float.iter().all(|s| max_diff(&vf.rotate(s), &vf) < 1e-10);
        exact_ok && float_ok
    }
}

fn max_diff(a: &SymTensor<f64>, b: &SymTensor<f64>) -> f64 {
    a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Builds the rotation subgroup and the improper representative.
pub fn realize(spec: &PointGroupSpec) -> Result<GroupRealization> {
    let proper = spec.proper();
    let rational_angles = [(1, 2), (2, 3), (1, 1)];
    let samples = [0.1, 0.37, 0.77].map(|t| j_float(2.0 * std::f64::consts::PI * t));
    let (elements, gens_exact, gens_float) = match proper {
        ProperGroup::Cinf | ProperGroup::Dinf => {
            let mut ge: Vec<_> = rational_angles.iter().filter_map(|&(a, b)| j_exact(a, b)).collect();
            let mut gf: Vec<_> = samples.to_vec();
            if proper == ProperGroup::Dinf {
                ge.push(b2());
                gf.push(to_float(&b2()));
            }
            (Elements::Continuous, ge, gf)
        }
        ProperGroup::C(n) | ProperGroup::D(n) => {
            let dihedral = matches!(proper, ProperGroup::D(_));
            match j_exact(2, n as i64) {
                Some(j) => {
                    let mut gens = vec![j];
                    if dihedral {
                        gens.push(b2());
                    }
                    let els = closure(&gens)?;
                    (Elements::Exact(els), gens, Vec::new())
                }
                None => {
                    let mut gens = vec![j_float(2.0 * std::f64::consts::PI / n as f64)];
                    if dihedral {
                        gens.push(to_float(&b2()));
                    }
                    let els = closure(&gens)?;
                    let ge = if dihedral { vec![b2()] } else { Vec::new() };
                    (Elements::Float(els), ge, gens)
                }
            }
        }
        ProperGroup::T | ProperGroup::O | ProperGroup::I => {
            let first = if proper == ProperGroup::O { j_exact(1, 2) } else { j_exact(1, 1) };
            let mut gens = vec![first.expect("rational angle"), b2(), r3()];
            if proper == ProperGroup::I {
                gens.push(v5());
            }
            let els = closure(&gens)?;
            (Elements::Exact(els), gens, Vec::new())
        }
    };
    let improper = spec.k_choice().map(|k| {
        let (inversion, k_exact, k_float) = match k {
            KChoice::Inversion => (true, Some(RotMatrix::identity()), RotMatrix::identity()),
            KChoice::Diag110 => {
                let m = qm([[-1, 0, 0], [0, -1, 0], [0, 0, 1]]);
                let f = to_float(&m);
                (false, Some(m), f)
            }
            KChoice::J(a, b) => {
                let f = j_float(std::f64::consts::PI * a as f64 / b as f64);
                (false, j_exact(a, b), f)
            }
        };
        Improper { inversion, k_exact, k_float }
    });
    Ok(GroupRealization { spec: *spec, elements, generators_exact: gens_exact, generators_float: gens_float, improper })
}

// ------------------------------------------------------ invariant spaces

fn check_cap(l: usize) -> Result<()> {
    if l > INVARIANT_CAP {
        return Err(Error::Cap(format!("invariant order {l} exceeds cap {INVARIANT_CAP}")));
    }
    Ok(())
}

pub fn to_quad(t: &SymTensor<Rational>) -> SymTensor<QuadScalar> {
    t.map(|c| QuadScalar::rational(c.clone()))
}

/// The rational form of a tensor, if every coefficient is rational.
pub fn to_rational(t: &SymTensor<QuadScalar>) -> Option<SymTensor<Rational>> {
    if t.coeffs().iter().all(|c| c.is_rational()) {
        Some(t.map(|c| c.a().clone()))
    } else {
        None
    }
}

/// Keeps a maximal linearly independent subset, in input order.
pub fn independent_subset<F: Field>(ts: Vec<SymTensor<F>>) -> Vec<SymTensor<F>> {
    let rows: Vec<Vec<F>> = ts.iter().map(|t| t.coeffs().to_vec()).collect();
    let keep = independent_rows(&rows);
    keep.into_iter().map(|i| ts[i].clone()).collect()
}

/// Image of the averaging projector (1/#𝒢₁) Σ_𝔰 V(𝔭𝔰) on the order-ℓ
/// traceless tensors.
pub fn invariant_space_avg(g: &GroupRealization, l: usize) -> Result<Vec<SymTensor<QuadScalar>>> {
    check_cap(l)?;
    let els = g.exact_elements().ok_or_else(|| {
        Error::Inapplicable(format!("{} has no finite exact realization; use the closed form", g.spec))
    })?;
    let inv_n = rat(1, els.len() as i64);
    let imgs: Vec<SymTensor<QuadScalar>> = build_basis_w(l)?
        .tensors
        .iter()
        .map(|w| {
            let wq = to_quad(w);
            let mut acc = SymTensor::<QuadScalar>::zero(l);
            for s in els {
                acc.acc(&wq.rotate(s));
            }
            acc.scaled(&inv_n).with_traceless_flag(true)
        })
        .collect();
    Ok(independent_subset(imgs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TildeKind {
    T,
    U,
    P,
}

fn binom(n: u64, k: u64) -> Rational {
    if k > n {
        return rint(0);
    }
    Rational::from_integer(factorial(n) / (factorial(k) * factorial(n - k)))
}

fn pow_t(t: &SymTensor<Rational>, e: usize) -> SymTensor<Rational> {
    let mut out = SymTensor::scalar(rint(1));
    for _ in 0..e {
        out = out.sym_mul(t);
    }
    out
}

/// z^{n/2} F_n(y/√z) for F = T (Chebyshev, first kind), U (second kind) or
/// P^{(μ,μ)} (Jacobi), with y of order 1 and z of order 2.
pub fn tilde_poly(
    kind: TildeKind,
    degree: usize,
    mu: u32,
    y: &SymTensor<Rational>,
    z: &SymTensor<Rational>,
) -> Result<SymTensor<Rational>> {
    if y.order() != 1 || z.order() != 2 {
        return Err(Error::Invalid(format!("tilde_poly needs y of order 1 and z of order 2, got {} and {}", y.order(), z.order())));
    }
    if kind != TildeKind::P && mu != 0 {
        return Err(Error::Invalid("μ applies only to the Jacobi family".into()));
    }
    let n = degree;
    let y2z = y.sym_mul(y).minus(z);
    let mut out = SymTensor::<Rational>::zero(n);
    for j in 0..=n / 2 {
        let (c, base) = match kind {
            TildeKind::T => (binom(n as u64, 2 * j as u64), pow_t(&y2z, j)),
            TildeKind::U => (binom(n as u64 + 1, 2 * j as u64 + 1), pow_t(&y2z, j)),
            TildeKind::P => {
                let mu = mu as i64;
                let mut g = rint(1);
                for t in 0..(n - j) as i64 {
                    g *= rat(2 * mu + 1 + 2 * t, 2);
                }
                let denom = factorial(j as u64) * factorial((n - 2 * j) as u64);
                let sign = if j % 2 == 0 { 1 } else { -1 };
                let c = g * rint(sign) * Rational::from_integer(BigInt::from(2).pow((n - 2 * j) as u32))
                    / Rational::from_integer(denom);
                (c, pow_t(z, j))
            }
        };
        out.acc(&base.sym_mul(&pow_t(y, n - 2 * j)).scaled(&c));
    }
    if kind == TildeKind::P {
        let mu = mu as u64;
        let n = n as u64;
        let pre = Rational::from_integer(factorial(2 * mu) * factorial(n + mu))
            / Rational::from_integer(factorial(mu) * factorial(n + 2 * mu));
        out = out.scaled(&pre);
    }
    Ok(out)
}

fn m(i: usize) -> SymTensor<Rational> {
    SymTensor::axis(i)
}

/// P̃_{ℓ-jn}^{(jn,jn)}(m₁,𝔦) times T̃_{jn}(m₂,𝔦-m₁²), or times Ũ_{jn-1}(m₂,𝔦-m₁²)m₃.
fn axial_tensor(l: usize, jn: usize, second: bool) -> Result<SymTensor<Rational>> {
    let iota = SymTensor::<Rational>::iota();
    let z = iota.minus(&m(1).sym_mul(&m(1)));
    let p = tilde_poly(TildeKind::P, l - jn, jn as u32, &m(1), &iota)?;
    let f = if second {
        tilde_poly(TildeKind::U, jn - 1, 0, &m(2), &z)?.sym_mul(&m(3))
    } else {
        tilde_poly(TildeKind::T, jn, 0, &m(2), &z)?
    };
    Ok(p.sym_mul(&f).traceless_project())
}

fn polyhedral_s2() -> SymTensor<Rational> {
    let sq: Vec<_> = (1..=3).map(|i| m(i).sym_mul(&m(i))).collect();
    sq[0].sym_mul(&sq[1]).plus(&sq[1].sym_mul(&sq[2])).plus(&sq[2].sym_mul(&sq[0]))
}

fn polyhedral_s3() -> SymTensor<Rational> {
    m(1).sym_mul(&m(2)).sym_mul(&m(3))
}

fn polyhedral_e() -> SymTensor<Rational> {
    let sq: Vec<_> = (1..=3).map(|i| m(i).sym_mul(&m(i))).collect();
    sq[0].minus(&sq[1]).sym_mul(&sq[1].minus(&sq[2])).sym_mul(&sq[2].minus(&sq[0]))
}

/// (S₂ⁱS₃ʲ)₀ with 4i+3j = ℓ and (E S₂ⁱS₃ʲ)₀ with 6+4i+3j = ℓ, restricted by
/// the parity of j (None keeps both).
fn polyhedral_family(l: usize, plain_j_even: Option<bool>) -> Vec<SymTensor<Rational>> {
    let (s2, s3, e) = (polyhedral_s2(), polyhedral_s3(), polyhedral_e());
    let mut out = Vec::new();
    for (extra, with_e) in [(0usize, false), (6, true)] {
        if l < extra {
            continue;
        }
        let rest = l - extra;
        for i in 0..=rest / 4 {
            if (rest - 4 * i) % 3 != 0 {
                continue;
            }
            let j = (rest - 4 * i) / 3;
            if let Some(plain_even) = plain_j_even {
                // The E family takes the opposite parity of j.
                let want_even = plain_even != with_e;
                if (j % 2 == 0) != want_even {
                    continue;
                }
            }
            let mut t = pow_t(&s2, i).sym_mul(&pow_t(&s3, j));
            if with_e {
                t = e.sym_mul(&t);
            }
            out.push(t.traceless_project());
        }
    }
    out
}

/// Invariant tensors of the rotation subgroup from the closed forms.
pub fn invariant_space_closed_form(spec: &PointGroupSpec, l: usize) -> Result<Vec<SymTensor<QuadScalar>>> {
    check_cap(l)?;
    let rational = |v: Vec<SymTensor<Rational>>| {
        let v: Vec<_> = v.into_iter().filter(|t| !t.is_zero()).collect();
        independent_subset(v).iter().map(to_quad).collect::<Vec<_>>()
    };
    Ok(match spec.proper() {
        ProperGroup::Cinf => rational(vec![axial_tensor(l, 0, false)?]),
        ProperGroup::Dinf => {
            if l % 2 == 1 {
                Vec::new()
            } else {
                rational(vec![axial_tensor(l, 0, false)?])
            }
        }
        ProperGroup::C(n) | ProperGroup::D(n) => {
            let dihedral = matches!(spec.proper(), ProperGroup::D(_));
            let n = n as usize;
            let mut v = Vec::new();
            for j in 0..=l / n {
                let jn = j * n;
                let even = (l - jn) % 2 == 0;
                if !dihedral || even {
                    v.push(axial_tensor(l, jn, false)?);
                }
                if j >= 1 && (!dihedral || !even) {
                    v.push(axial_tensor(l, jn, true)?);
                }
            }
            rational(v)
        }
        ProperGroup::T => rational(polyhedral_family(l, None)),
        ProperGroup::O => rational(polyhedral_family(l, Some(true))),
        ProperGroup::I => {
            let base: Vec<SymTensor<QuadScalar>> = polyhedral_family(l, None)
                .into_iter()
                .map(|t| to_quad(&t))
                .collect();
            let base = independent_subset(base);
            let v = v5();
            let nmono = monomials(l).len();
            let diffs: Vec<SymTensor<QuadScalar>> = base.iter().map(|b| b.rotate(&v).minus(b)).collect();
            let mat: Vec<Vec<QuadScalar>> =
                (0..nmono).map(|r| diffs.iter().map(|d| d.coeffs()[r].clone()).collect()).collect();
            nullspace(&mat, base.len())
                .into_iter()
                .map(|c| {
                    let mut t = SymTensor::<QuadScalar>::zero(l);
                    for (ci, b) in c.iter().zip(&base) {
                        if !ci.is_zero() {
                            t.acc(&b.times_scalar(ci));
                        }
                    }
                    t.with_traceless_flag(true)
                })
                .collect()
        }
    })
}

/// Rational closed-form basis; errors when the space needs an irrational basis.
pub fn rational_invariants(spec: &PointGroupSpec, l: usize) -> Result<Vec<SymTensor<Rational>>> {
    invariant_space_closed_form(spec, l)?
        .iter()
        .map(|t| {
            to_rational(t).ok_or_else(|| {
                Error::Cap(format!("{spec} order {l}: invariant tensors are irrational; only rational bases are supported here"))
            })
        })
        .collect()
}

/// Invariant tensors of order ℓ split by V(𝔭𝔨) = ±V(𝔭).
#[derive(Clone, Debug, PartialEq)]
pub struct TypedInvariantSpace {
    pub order: usize,
    pub plus: Vec<SymTensor<QuadScalar>>,
    pub minus: Vec<SymTensor<QuadScalar>>,
}

/// Splits the closed-form invariant basis into types ±1. Each basis tensor
/// V contributes ½(V(𝔭) ± V(𝔭𝔨)).
pub fn type_split(spec: &PointGroupSpec, l: usize) -> Result<TypedInvariantSpace> {
    let g = realize(spec)?;
    let imp = g
        .improper
        .as_ref()
        .ok_or_else(|| Error::Inapplicable(format!("{spec} has no improper rotations; types are undefined")))?;
    let basis = invariant_space_closed_form(spec, l)?;
    if imp.inversion {
        return Ok(TypedInvariantSpace { order: l, plus: basis, minus: Vec::new() });
    }
    let half = rat(1, 2);
    let (mut plus, mut minus) = (Vec::new(), Vec::new());
    for v in basis {
        match &imp.k_exact {
            Some(k) => {
                let vk = v.rotate(k);
                let p = v.plus(&vk).scaled(&half);
                let n = v.minus(&vk).scaled(&half);
                let (pz, nz) = (p.is_zero(), n.is_zero());
                if !pz {
                    plus.push(if nz { v.clone() } else { p });
                }
                if !nz {
                    minus.push(if pz { v.clone() } else { n });
                }
            }
            None => {
                let vf = v.to_f64();
                let vk = vf.rotate(&imp.k_float);
                if max_diff(&vk, &vf) < 1e-9 {
                    plus.push(v);
                } else if max_diff(&vk, &vf.negated()) < 1e-9 {
                    minus.push(v);
                } else {
                    return Err(Error::Internal(format!("{spec}: closed-form tensor has no definite type under 𝔨")));
                }
            }
        }
    }
    Ok(TypedInvariantSpace { order: l, plus: independent_subset(plus), minus: independent_subset(minus) })
}

/// A basis tensor with its type, ready for use as an expansion slot.
#[derive(Clone, Debug, PartialEq)]
pub struct TypedTensor {
    pub tensor: SymTensor<Rational>,
    /// +1 or -1; +1 for groups without improper rotations.
    pub sign: i8,
    pub name: String,
}

/// Readable name of a rational tensor after scaling to a monic form.
pub fn tensor_name(t: &SymTensor<Rational>) -> String {
    t.monic().pretty()
}

/// Rational typed basis of every order up to n; type +1 first, then −1.
pub fn typed_basis(spec: &PointGroupSpec, n: usize) -> Result<Vec<Vec<TypedTensor>>> {
    let mut out = Vec::with_capacity(n + 1);
    for l in 0..=n {
        let (plus, minus) = if spec.has_improper() {
            let s = type_split(spec, l)?;
            (s.plus, s.minus)
        } else {
            (invariant_space_closed_form(spec, l)?, Vec::new())
        };
        let mut row = Vec::new();
        for (list, sign) in [(plus, 1i8), (minus, -1i8)] {
            for t in list {
                let r = to_rational(&t).ok_or_else(|| {
                    Error::Cap(format!("{spec} order {l}: invariant tensors are irrational; only rational bases are supported here"))
                })?;
                let r = r.monic().with_traceless_flag(true);
                row.push(TypedTensor { name: tensor_name(&r), tensor: r, sign });
            }
        }
        out.push(row);
    }
    Ok(out)
}

pub fn display_quad(t: &SymTensor<QuadScalar>) -> String {
    match to_rational(t) {
        Some(r) => tensor_name(&r),
        None => t.to_monomial_string(),
    }
}

/// Whether two lists of tensors span the same space.
pub fn same_span(a: &[SymTensor<QuadScalar>], b: &[SymTensor<QuadScalar>]) -> bool {
    let ra = independent_subset(a.to_vec()).len();
    let rb = independent_subset(b.to_vec()).len();
    let mut all = a.to_vec();
    all.extend_from_slice(b);
    ra == rb && independent_subset(all).len() == ra
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s: &str) -> PointGroupSpec {
        s.parse().unwrap()
    }

    #[test]
    fn parse_names() {
        assert_eq!(spec("S4"), PointGroupSpec { family: GroupFamily::S2n, n: 2 });
        assert_eq!(spec("C2v").to_string(), "C2v");
        assert_eq!(spec("Cinfv").to_string(), "Cinfv");
        assert_eq!(spec("D3h").family, GroupFamily::Dnh);
        assert!("S3".parse::<PointGroupSpec>().is_err());
        let e = "X2".parse::<PointGroupSpec>().unwrap_err().to_string();
        assert!(e.contains("position 0") && e.contains("Cinfv"), "{e}");
        assert!("C2x".parse::<PointGroupSpec>().unwrap_err().to_string().contains("position 2"));
    }

    #[test]
    fn group_orders() {
        for (s, n) in [("C1", 1), ("C4", 4), ("C6", 6), ("D3", 6), ("D4", 8), ("T", 12), ("O", 24), ("I", 60), ("C5", 5), ("D7", 14)] {
            assert_eq!(realize(&spec(s)).unwrap().order(), Some(n), "{s}");
        }
        assert!(realize(&spec("C4")).unwrap().is_exact());
        assert!(!realize(&spec("C5")).unwrap().is_exact());
        for g in realize(&spec("I")).unwrap().exact_elements().unwrap() {
            assert!(g.is_orthogonal() && g.is_proper());
        }
    }

    #[test]
    fn td_coset_is_octahedral() {
        let g = realize(&spec("Td")).unwrap();
        let k = g.improper.as_ref().unwrap().k_exact.clone().unwrap();
        let els = g.exact_elements().unwrap().to_vec();
        let mut union = els.clone();
        for s in &els {
            let p = s.mul(&k);
            if !union.contains(&p) {
                union.push(p);
            }
        }
        assert_eq!(union.len(), 24);
        let o = realize(&spec("O")).unwrap();
        for e in &union {
            assert!(o.exact_elements().unwrap().contains(e));
        }
    }

    #[test]
    fn k_conjugation_stays_proper() {
        for s in ["C2v", "C3v", "C3h", "S4", "S6", "D2d", "D3h", "D4d", "D6d", "Td", "S8"] {
            let g = realize(&spec(s)).unwrap();
            let k = g.improper.as_ref().unwrap().k_exact.clone().unwrap();
            let els = g.exact_elements().unwrap();
            for e in els {
                let c = k.mul(e).mul(&k);
                assert!(els.contains(&c), "{s}");
            }
        }
    }

    #[test]
    fn averaging_examples() {
        let c1 = realize(&spec("C1")).unwrap();
        assert_eq!(invariant_space_avg(&c1, 2).unwrap().len(), 5);
        let c2 = realize(&spec("C2")).unwrap();
        let v = invariant_space_avg(&c2, 1).unwrap();
        assert_eq!(v.len(), 1);
        assert!(same_span(&v, &[to_quad(&SymTensor::axis(1))]));
        let t = realize(&spec("T")).unwrap();
        let v = invariant_space_avg(&t, 3).unwrap();
        assert_eq!(v.len(), 1);
        assert!(same_span(&v, &[to_quad(&polyhedral_s3())]));
    }

    #[test]
    fn closed_forms_match_averaging() {
        for s in ["C1", "C2", "C3", "C4", "C6", "D2", "D3", "D4", "D6", "T", "O"] {
            let sp = spec(s);
            let g = realize(&sp).unwrap();
            for l in 0..=4 {
                let a = invariant_space_avg(&g, l).unwrap();
                let c = invariant_space_closed_form(&sp, l).unwrap();
                assert!(same_span(&a, &c), "{s} l={l}: {} vs {}", a.len(), c.len());
            }
        }
    }

    #[test]
    fn infinite_and_empty_cases() {
        for l in 0..=5 {
            assert_eq!(invariant_space_closed_form(&spec("Cinf"), l).unwrap().len(), 1);
        }
        assert!(invariant_space_closed_form(&spec("Dinf"), 3).unwrap().is_empty());
        assert!(invariant_space_closed_form(&spec("O"), 2).unwrap().is_empty());
        let g = realize(&spec("Dinf")).unwrap();
        for l in [2, 4] {
            for v in invariant_space_closed_form(&spec("Dinf"), l).unwrap() {
                assert!(g.leaves_invariant(&v));
            }
        }
    }

    #[test]
    fn float_groups_invariance() {
        for s in ["C5", "D5", "C7"] {
            let g = realize(&spec(s)).unwrap();
            for l in 0..=5 {
                for v in invariant_space_closed_form(&spec(s), l).unwrap() {
                    assert!(g.leaves_invariant(&v), "{s} {l}");
                }
            }
        }
    }

    #[test]
    fn tilde_examples() {
        let y = SymTensor::<Rational>::axis(2);
        let z = SymTensor::<Rational>::axis(1).sym_mul(&SymTensor::axis(1));
        let t2 = tilde_poly(TildeKind::T, 2, 0, &y, &z).unwrap();
        assert_eq!(t2, y.sym_mul(&y).scaled(&rint(2)).minus(&z));
        let u1 = tilde_poly(TildeKind::U, 1, 0, &y, &z).unwrap();
        assert_eq!(u1, y.scaled(&rint(2)));
        let p2 = tilde_poly(TildeKind::P, 2, 0, &SymTensor::axis(1), &SymTensor::iota()).unwrap();
        assert_eq!(tensor_name(&p2.traceless_project()), "m1^2 - 1/3 i");
        assert!(tilde_poly(TildeKind::T, 2, 0, &z, &z).is_err());
    }

    #[test]
    fn chebyshev_relation() {
        // (m₂ + √-1 m₃)ⁿ = T̃ₙ + √-1 Ũₙ₋₁ m₃ with z = 𝔦 - m₁², real and
        // imaginary parts compared separately.
        let z = SymTensor::<Rational>::iota().minus(&m(1).sym_mul(&m(1)));
        for n in 1..=6usize {
            let (mut re, mut im) = (SymTensor::<Rational>::zero(n), SymTensor::<Rational>::zero(n));
            for j in 0..=n {
                let term = pow_t(&m(2), n - j).sym_mul(&pow_t(&m(3), j)).scaled(&binom(n as u64, j as u64));
                let s = if (j / 2) % 2 == 0 { rint(1) } else { rint(-1) };
                if j % 2 == 0 {
                    re.acc(&term.scaled(&s));
                } else {
                    im.acc(&term.scaled(&s));
                }
            }
            assert_eq!(re, tilde_poly(TildeKind::T, n, 0, &m(2), &z).unwrap(), "n={n}");
            assert_eq!(im, tilde_poly(TildeKind::U, n - 1, 0, &m(2), &z).unwrap().sym_mul(&m(3)), "n={n}");
        }
    }

    #[test]
    fn type_table_c2v_s4() {
        let names = |s: &str, sign: i8| -> Vec<String> {
            typed_basis(&spec(s), 2)
                .unwrap()
                .into_iter()
                .flatten()
                .filter(|t| t.sign == sign)
                .map(|t| t.name)
                .collect()
        };
        assert_eq!(names("C2v", 1), vec!["1", "m1^2 - 1/3 i", "m2^2 - m3^2"]);
        assert_eq!(names("C2v", -1), vec!["m1", "m2 m3"]);
        assert_eq!(names("S4", 1), vec!["1", "m1", "m1^2 - 1/3 i"]);
        assert_eq!(names("S4", -1), vec!["m2^2 - m3^2", "m2 m3"]);
    }

    #[test]
    fn types_are_exact_and_orthogonal() {
        for s in ["C2v", "C3v", "C3h", "S4", "S6", "D2d", "D3h", "Td", "C4h", "D2h"] {
            let sp = spec(s);
            let g = realize(&sp).unwrap();
            let k = g.improper.as_ref().unwrap().k_exact.clone().unwrap();
            for l in 0..=4 {
                let ts = type_split(&sp, l).unwrap();
                for v in &ts.plus {
                    assert_eq!(&v.rotate(&k), v);
                    assert!(g.leaves_invariant(v));
                }
                for v in &ts.minus {
                    assert_eq!(v.rotate(&k), v.negated());
                }
                for a in &ts.plus {
                    for b in &ts.minus {
                        assert!(a.dot(b).is_zero());
                    }
                }
                if sp.contains_inversion() {
                    assert!(ts.minus.is_empty());
                }
            }
        }
        assert!(matches!(type_split(&spec("T"), 2), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn icosahedral_over_sqrt5() {
        let sp = spec("I");
        let g = realize(&sp).unwrap();
        for l in 0..=6 {
            let c = invariant_space_closed_form(&sp, l).unwrap();
            let a = invariant_space_avg(&g, l).unwrap();
            assert!(same_span(&a, &c), "l={l}");
            let want = if l == 0 || l == 6 { 1 } else { 0 };
            assert_eq!(c.len(), want, "l={l}");
        }
    }
}
