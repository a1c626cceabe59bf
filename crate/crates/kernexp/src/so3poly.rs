//! Polynomials in the entries of rotation-matrix variables, the right
//! action by substitution, and exact Haar integration.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{OnceLock, RwLock};

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::exactscalar::{alpha_moment, circle_moment, rat, Field, PiLinear, Rational, Ring};

/// Number of rotation variables a polynomial may carry (ids 0..MAX_VARS).
pub const MAX_VARS: usize = 4;
/// Default per-variable degree cap.
pub const DEGREE_CAP: u32 = 16;

static PI_FAILURES: AtomicUsize = AtomicUsize::new(0);

/// Number of monomial moments in this process whose π component failed to
/// cancel. Any nonzero value is a bug in the moment tables.
pub fn pi_cancellation_failures() -> usize {
    PI_FAILURES.load(Ordering::Relaxed)
}

const BITS: u32 = 6;
const MASK: u64 = (1 << BITS) - 1;

pub type Mat3 = [[f64; 3]; 3];

/// Exponents of p_ij for every variable, packed 6 bits per entry.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct EntryMonomial {
    deg: u16,
    w: [u64; MAX_VARS],
}

impl EntryMonomial {
    pub fn one() -> Self {
        EntryMonomial { deg: 0, w: [0; MAX_VARS] }
    }

    /// p_ij of variable `var` (0-based i, j).
    pub fn entry(var: u8, i: usize, j: usize) -> Self {
        let mut m = Self::one();
        m.w[var as usize] = 1 << (BITS * (3 * i + j) as u32);
        m.deg = 1;
        m
    }

    pub fn from_word(var: u8, word: u64) -> Self {
        let mut m = Self::one();
        m.w[var as usize] = word;
        m.deg = word_degree(word) as u16;
        m
    }

    pub fn exponent(&self, var: u8, i: usize, j: usize) -> u32 {
        ((self.w[var as usize] >> (BITS * (3 * i + j) as u32)) & MASK) as u32
    }

    pub fn word(&self, var: u8) -> u64 {
        self.w[var as usize]
    }

    pub fn degree(&self) -> u32 {
        self.deg as u32
    }

    pub fn var_degree(&self, var: u8) -> u32 {
        word_degree(self.w[var as usize])
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut w = [0; MAX_VARS];
        for v in 0..MAX_VARS {
            w[v] = self.w[v] + o.w[v];
        }
        EntryMonomial { deg: self.deg + o.deg, w }
    }

    fn with_word(&self, var: u8, word: u64) -> Self {
        let mut m = *self;
        m.w[var as usize] = word;
        m.deg = m.w.iter().map(|&x| word_degree(x)).sum::<u32>() as u16;
        m
    }
}

pub fn word_degree(word: u64) -> u32 {
    (0..9).map(|e| ((word >> (BITS * e)) & MASK) as u32).sum()
}

pub fn word_exponents(word: u64) -> [u32; 9] {
    let mut out = [0; 9];
    for (e, o) in out.iter_mut().enumerate() {
        *o = ((word >> (BITS * e as u32)) & MASK) as u32;
    }
    out
}

pub fn pack_word(exps: &[u32; 9]) -> u64 {
    exps.iter().enumerate().fold(0, |acc, (e, &x)| acc | ((x as u64) << (BITS * e as u32)))
}

/// 3×3 orthogonal matrix over a coefficient field.
#[derive(Clone, Debug, PartialEq)]
pub struct RotMatrix<F> {
    m: [[F; 3]; 3],
    det: i8,
}

impl<F: Field> RotMatrix<F> {
    /// Validates R·Rᵀ = I (exactly, or to 1e-12 for floats).
    pub fn new(m: [[F; 3]; 3]) -> Result<Self> {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = F::zero();
                for k in 0..3 {
                    s.acc(&m[i][k].times(&m[j][k]));
                }
                let target = if i == j { F::one() } else { F::zero() };
                if !s.near(&target) {
                    return Err(Error::Invalid("matrix is not orthogonal".into()));
                }
            }
        }
        let d = det3(&m);
        let det = if d.near(&F::one()) {
            1
        } else if d.near(&F::one().negated()) {
            -1
        } else {
            return Err(Error::Invalid("determinant is not ±1".into()));
        };
        Ok(RotMatrix { m, det })
    }

    /// Skips validation; used to exercise error paths.
    pub fn new_unchecked(m: [[F; 3]; 3]) -> Self {
        RotMatrix { m, det: 1 }
    }

    pub fn identity() -> Self {
        let o = F::one();
        let z = F::zero();
        RotMatrix {
            m: [[o.clone(), z.clone(), z.clone()], [z.clone(), o.clone(), z.clone()], [z.clone(), z, o]],
            det: 1,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> &F {
        &self.m[i][j]
    }

    pub fn rows(&self) -> &[[F; 3]; 3] {
        &self.m
    }

    pub fn det_sign(&self) -> i8 {
        self.det
    }

    pub fn is_proper(&self) -> bool {
        self.det == 1
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut m: [[F; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| F::zero()));
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                for k in 0..3 {
                    x.acc(&self.m[i][k].times(&o.m[k][j]));
                }
            }
        }
        RotMatrix { m, det: self.det * o.det }
    }

    pub fn transpose(&self) -> Self {
        let m = std::array::from_fn(|i| std::array::from_fn(|j| self.m[j][i].clone()));
        RotMatrix { m, det: self.det }
    }

    pub fn negated(&self) -> Self {
        let m = std::array::from_fn(|i| std::array::from_fn(|j| self.m[i][j].negated()));
        RotMatrix { m, det: -self.det }
    }

    pub fn to_f64(&self) -> Mat3 {
        std::array::from_fn(|i| std::array::from_fn(|j| self.m[i][j].to_f64()))
    }

    pub fn map<G: Field>(&self, f: impl Fn(&F) -> G) -> RotMatrix<G> {
        RotMatrix { m: std::array::from_fn(|i| std::array::from_fn(|j| f(&self.m[i][j]))), det: self.det }
    }

    /// Exact orthogonality re-check, for matrices built unchecked.
    pub fn is_orthogonal(&self) -> bool {
        RotMatrix::new(self.m.clone()).is_ok()
    }
}

fn det3<F: Ring>(m: &[[F; 3]; 3]) -> F {
    let t1 = m[0][0].times(&m[1][1].times(&m[2][2]).minus(&m[1][2].times(&m[2][1])));
    let t2 = m[0][1].times(&m[1][0].times(&m[2][2]).minus(&m[1][2].times(&m[2][0])));
    let t3 = m[0][2].times(&m[1][0].times(&m[2][1]).minus(&m[1][1].times(&m[2][0])));
    t1.minus(&t2).plus(&t3)
}

/// Sparse polynomial in rotation-matrix entries.
#[derive(Clone, PartialEq)]
pub struct OrientPoly<F = Rational> {
    terms: BTreeMap<EntryMonomial, F>,
}

impl<F: Field> OrientPoly<F> {
    pub fn new() -> Self {
        OrientPoly { terms: BTreeMap::new() }
    }

    pub fn constant(c: F) -> Self {
        let mut p = Self::new();
        p.add_term(EntryMonomial::one(), c);
        p
    }

    /// The entry p_ij (1-based i, j as in the usual matrix notation) of `var`.
    pub fn entry(var: u8, i: usize, j: usize) -> Self {
        assert!((var as usize) < MAX_VARS && (1..=3).contains(&i) && (1..=3).contains(&j));
        let mut p = Self::new();
        p.add_term(EntryMonomial::entry(var, i - 1, j - 1), F::one());
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (EntryMonomial, F)>) -> Self {
        let mut p = Self::new();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn add_term(&mut self, m: EntryMonomial, c: F) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                o.get_mut().acc(&c);
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&EntryMonomial, &F)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// The constant term, if the polynomial is constant.
    pub fn as_constant(&self) -> Option<F> {
        match self.terms.len() {
            0 => Some(F::zero()),
            1 => self.terms.get(&EntryMonomial::one()).cloned(),
            _ => None,
        }
    }

    pub fn degree_in(&self, var: u8) -> u32 {
        self.terms.keys().map(|m| m.var_degree(var)).max().unwrap_or(0)
    }

    pub fn vars(&self) -> Vec<u8> {
        (0..MAX_VARS as u8).filter(|&v| self.terms.keys().any(|m| m.word(v) != 0)).collect()
    }

    /// Substitutes p → p·s in variable `var`: p_ij ↦ Σ_k p_ik s_kj.
    pub fn right_substitute(&self, var: u8, s: &RotMatrix<F>) -> Result<Self> {
        if !F::EXACT {
            return Err(Error::Invalid("right_substitute needs an exact matrix".into()));
        }
        if !s.is_orthogonal() {
            return Err(Error::Invalid("substitution matrix is not orthogonal".into()));
        }
        let lin: Vec<OrientPoly<F>> = (0..9)
            .map(|e| {
                let (i, j) = (e / 3, e % 3);
                let mut q = OrientPoly::new();
                for k in 0..3 {
                    q.add_term(EntryMonomial::entry(var, i, k), s.entry(k, j).clone());
                }
                q
            })
            .collect();
        let mut powers: HashMap<(usize, u32), OrientPoly<F>> = HashMap::new();
        let mut out = OrientPoly::new();
        for (m, c) in &self.terms {
            let exps = word_exponents(m.word(var));
            let mut acc = OrientPoly::from_terms([(m.with_word(var, 0), c.clone())]);
            for (e, &x) in exps.iter().enumerate() {
                if x == 0 {
                    continue;
                }
                let pw = powers.entry((e, x)).or_insert_with(|| {
                    let mut p = OrientPoly::constant(F::one());
                    for _ in 0..x {
                        p = p.times(&lin[e]);
                    }
                    p
                });
                acc = acc.times(pw);
            }
            out = out.plus(&acc);
        }
        Ok(out)
    }

    /// Left substitution p → s·p: p_ij ↦ Σ_k s_ik p_kj.
    pub fn left_substitute(&self, var: u8, s: &RotMatrix<F>) -> Result<Self> {
        // p ↦ s p equals (pᵀ sᵀ)ᵀ; realize directly to avoid transposing polynomials.
        let lin: Vec<OrientPoly<F>> = (0..9)
            .map(|e| {
                let (i, j) = (e / 3, e % 3);
                let mut q = OrientPoly::new();
                for k in 0..3 {
                    q.add_term(EntryMonomial::entry(var, k, j), s.entry(i, k).clone());
                }
                q
            })
            .collect();
        if !s.is_orthogonal() {
            return Err(Error::Invalid("substitution matrix is not orthogonal".into()));
        }
        let mut out = OrientPoly::new();
        for (m, c) in &self.terms {
            let exps = word_exponents(m.word(var));
            let mut acc = OrientPoly::from_terms([(m.with_word(var, 0), c.clone())]);
            for (e, &x) in exps.iter().enumerate() {
                for _ in 0..x {
                    acc = acc.times(&lin[e]);
                }
            }
            out = out.plus(&acc);
        }
        Ok(out)
    }

    /// Exchanges two variable ids.
    pub fn swap_vars(&self, a: u8, b: u8) -> Self {
        OrientPoly::from_terms(self.terms.iter().map(|(m, c)| {
            let mut w = m.w;
            w.swap(a as usize, b as usize);
            (EntryMonomial { deg: m.deg, w }, c.clone())
        }))
    }

    /// Renames variable `from` to `to` (which must be absent).
    pub fn rename_var(&self, from: u8, to: u8) -> Self {
        OrientPoly::from_terms(self.terms.iter().map(|(m, c)| {
            let mut w = m.w;
            w[to as usize] += w[from as usize];
            w[from as usize] = 0;
            (EntryMonomial { deg: m.deg, w }, c.clone())
        }))
    }

    pub fn eval_numeric(&self, assignment: &[(u8, Mat3)]) -> Result<f64> {
        let mut total = 0.0;
        for (m, c) in &self.terms {
            let mut t = c.to_f64();
            for v in 0..MAX_VARS as u8 {
                let w = m.word(v);
                if w == 0 {
                    continue;
                }
                let mat = assignment
                    .iter()
                    .find(|(id, _)| *id == v)
                    .map(|(_, mat)| mat)
                    .ok_or_else(|| Error::Invalid(format!("variable p{} is unassigned", v + 1)))?;
                for (e, &x) in word_exponents(w).iter().enumerate() {
                    if x > 0 {
                        t *= mat[e / 3][e % 3].powi(x as i32);
                    }
                }
            }
            total += t;
        }
        Ok(total)
    }
}

impl OrientPoly<Rational> {
    /// Integrates out `var` against the normalized Haar measure.
    pub fn haar_integral(&self, var: u8) -> Result<Self> {
        let mut out = OrientPoly::new();
        for (m, c) in &self.terms {
            let w = m.word(var);
            let deg = word_degree(w);
            if deg > DEGREE_CAP {
                return Err(Error::Cap(format!("degree {deg} in p{} exceeds cap {DEGREE_CAP}", var + 1)));
            }
            let e = monomial_moment(w)?;
            if !e.is_zero() {
                out.add_term(m.with_word(var, 0), c * e);
            }
        }
        Ok(out)
    }

    /// Integrates out every variable present.
    pub fn haar_integral_all(&self) -> Result<Rational> {
        let mut p = self.clone();
        for v in 0..MAX_VARS as u8 {
            p = p.haar_integral(v)?;
        }
        Ok(p.as_constant().unwrap_or_else(Rational::zero))
    }
}

impl<F: Field> Default for OrientPoly<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Field> Ring for OrientPoly<F> {
    fn zero() -> Self {
        OrientPoly::new()
    }
    fn one() -> Self {
        OrientPoly::constant(F::one())
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    fn from_rational(r: &Rational) -> Self {
        OrientPoly::constant(F::from_rational(r))
    }
    fn plus(&self, o: &Self) -> Self {
        let mut out = self.clone();
        out.acc(o);
        out
    }
    fn acc(&mut self, o: &Self) {
        for (m, c) in &o.terms {
            self.add_term(*m, c.clone());
        }
    }
    fn minus(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &o.terms {
            out.add_term(*m, c.negated());
        }
        out
    }
    fn times(&self, o: &Self) -> Self {
        let mut acc: HashMap<EntryMonomial, F> = HashMap::with_capacity(self.len() * o.len());
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                let c = c1.times(c2);
                acc.entry(m1.mul(m2)).and_modify(|x| x.acc(&c)).or_insert(c);
            }
        }
        OrientPoly { terms: acc.into_iter().filter(|(_, c)| !c.is_zero()).collect() }
    }
    fn negated(&self) -> Self {
        OrientPoly { terms: self.terms.iter().map(|(m, c)| (*m, c.negated())).collect() }
    }
    fn scaled(&self, r: &Rational) -> Self {
        OrientPoly::from_terms(self.terms.iter().map(|(m, c)| (*m, c.scaled(r))))
    }
}

impl<F: Field + fmt::Display> fmt::Display for OrientPoly<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            let mut factors = Vec::new();
            for v in 0..MAX_VARS as u8 {
                for (e, &x) in word_exponents(m.word(v)).iter().enumerate() {
                    match x {
                        0 => {}
                        1 => factors.push(format!("p{}[{}{}]", v + 1, e / 3 + 1, e % 3 + 1)),
                        _ => factors.push(format!("p{}[{}{}]^{x}", v + 1, e / 3 + 1, e % 3 + 1)),
                    }
                }
            }
            let cs = c.to_string();
            let (neg, mag) = match cs.strip_prefix('-') {
                Some(rest) => (true, rest.to_string()),
                None => (false, cs),
            };
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, "{}", if neg { " - " } else { " + " })?;
            }
            first = false;
            if factors.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == "1" {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{mag}*{}", factors.join("*"))?;
            }
        }
        Ok(())
    }
}

impl<F: Field> fmt::Debug for OrientPoly<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.terms.iter().map(|(m, c)| (format!("{:?}", m.w), c))).finish()
    }
}

// Euler-angle substitution. Trig monomials are keyed by exponents of
// (cos α, sin α, cos β, sin β, cos γ, sin γ), six bits each.
type TrigTerms = Vec<(i64, [u8; 6])>;

fn euler_entries() -> [TrigTerms; 9] {
    let t = |c: i64, e: [u8; 6]| (c, e);
    [
        vec![t(1, [1, 0, 0, 0, 0, 0])],
        vec![t(-1, [0, 1, 0, 0, 1, 0])],
        vec![t(1, [0, 1, 0, 0, 0, 1])],
        vec![t(1, [0, 1, 1, 0, 0, 0])],
        vec![t(1, [1, 0, 1, 0, 1, 0]), t(-1, [0, 0, 0, 1, 0, 1])],
        vec![t(-1, [1, 0, 1, 0, 0, 1]), t(-1, [0, 0, 0, 1, 1, 0])],
        vec![t(1, [0, 1, 0, 1, 0, 0])],
        vec![t(1, [1, 0, 0, 1, 1, 0]), t(1, [0, 0, 1, 0, 0, 1])],
        vec![t(-1, [1, 0, 0, 1, 0, 1]), t(1, [0, 0, 1, 0, 1, 0])],
    ]
}

fn trig_key(e: &[u8; 6]) -> u64 {
    e.iter().enumerate().fold(0, |acc, (i, &x)| acc | ((x as u64) << (6 * i)))
}

fn trig_unkey(k: u64) -> [u32; 6] {
    std::array::from_fn(|i| ((k >> (6 * i)) & 63) as u32)
}

struct MomentTables {
    alpha: Vec<Vec<PiLinear>>,
    circle: Vec<Vec<Rational>>,
}

fn tables() -> &'static MomentTables {
    static T: OnceLock<MomentTables> = OnceLock::new();
    T.get_or_init(|| {
        let n = 2 * DEGREE_CAP as usize + 2;
        MomentTables {
            alpha: (0..n).map(|a| (0..n + 1).map(|b| alpha_moment(a as u32, b as u32)).collect()).collect(),
            circle: (0..n).map(|c| (0..n).map(|d| circle_moment(c as u32, d as u32)).collect()).collect(),
        }
    })
}

fn moment_cache() -> &'static RwLock<HashMap<u64, Rational>> {
    static C: OnceLock<RwLock<HashMap<u64, Rational>>> = OnceLock::new();
    C.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Sign-flip invariance p ↦ D₁pD₂ forces equal parities of all row sums and
/// of all column sums for a nonzero moment.
pub fn moment_parity_ok(exps: &[u32; 9]) -> bool {
    let r: Vec<u32> = (0..3).map(|i| (exps[3 * i] + exps[3 * i + 1] + exps[3 * i + 2]) & 1).collect();
    let c: Vec<u32> = (0..3).map(|j| (exps[j] + exps[3 + j] + exps[6 + j]) & 1).collect();
    r[0] == r[1] && r[1] == r[2] && c[0] == c[1] && c[1] == c[2]
}

/// ∫ Π p_ij^{e_ij} dp over SO(3) with the normalized Haar measure.
pub fn monomial_moment(word: u64) -> Result<Rational> {
    let exps = word_exponents(word);
    if !moment_parity_ok(&exps) {
        return Ok(Rational::zero());
    }
    if word_degree(word) > 2 * DEGREE_CAP {
        return Err(Error::Cap(format!("moment degree {} exceeds {}", word_degree(word), 2 * DEGREE_CAP)));
    }
    if let Some(v) = moment_cache().read().expect("moment cache poisoned").get(&word) {
        return Ok(v.clone());
    }
    let v = compute_moment(&exps)?;
    moment_cache().write().expect("moment cache poisoned").insert(word, v.clone());
    Ok(v)
}

fn compute_moment(exps: &[u32; 9]) -> Result<Rational> {
    let entries = euler_entries();
    let mut acc: HashMap<u64, i64> = HashMap::new();
    acc.insert(0, 1);
    for (e, &x) in exps.iter().enumerate() {
        for _ in 0..x {
            let mut next: HashMap<u64, i64> = HashMap::with_capacity(acc.len() * 2);
            for (&k, &c) in &acc {
                for (tc, te) in &entries[e] {
                    let nk = k + trig_key(te);
                    *next.entry(nk).or_insert(0) += c * tc;
                }
            }
            next.retain(|_, c| *c != 0);
            acc = next;
        }
    }
    let t = tables();
    let mut total = PiLinear::zero();
    for (k, c) in acc {
        let [ca, sa, cb, sb, cg, sg] = trig_unkey(k);
        let rb = &t.circle[cb as usize][sb as usize];
        let rg = &t.circle[cg as usize][sg as usize];
        if rb.is_zero() || rg.is_zero() {
            continue;
        }
        let a = &t.alpha[ca as usize][sa as usize + 1];
        total = total.add(&a.scale(&(rb * rg * Rational::from_integer(BigInt::from(c)))));
    }
    let total = total.scale(&rat(1, 8));
    if !total.is_rational() {
        PI_FAILURES.fetch_add(1, Ordering::Relaxed);
        return Err(Error::Internal(format!("pi component failed to cancel for exponents {exps:?}")));
    }
    Ok(total.c0)
}

/// Euler-angle rotation matrix (α ∈ [0,π], β, γ ∈ [0,2π)).
pub fn euler_matrix(alpha: f64, beta: f64, gamma: f64) -> Mat3 {
    let (ca, sa) = (alpha.cos(), alpha.sin());
    let (cb, sb) = (beta.cos(), beta.sin());
    let (cg, sg) = (gamma.cos(), gamma.sin());
    [
        [ca, -sa * cg, sa * sg],
        [sa * cb, ca * cb * cg - sb * sg, -ca * cb * sg - sb * cg],
        [sa * sb, ca * sb * cg + cb * sg, -ca * sb * sg + cb * cg],
    ]
}

/// Rational rotation from the Cayley transform of (a, b, c):
/// R = ((1 - v·v) I + 2 v vᵀ + 2 [v]ₓ) / (1 + v·v).
pub fn cayley_rotation(a: &Rational, b: &Rational, c: &Rational) -> RotMatrix<Rational> {
    let v = [a.clone(), b.clone(), c.clone()];
    let n2 = a * a + b * b + c * c;
    let den = Rational::from_integer(1.into()) + &n2;
    let one_minus = Rational::from_integer(1.into()) - &n2;
    let two = Rational::from_integer(2.into());
    let cross = [
        [Rational::zero(), -c.clone(), b.clone()],
        [c.clone(), Rational::zero(), -a.clone()],
        [-b.clone(), a.clone(), Rational::zero()],
    ];
    let m = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let mut x = &two * &v[i] * &v[j] + &two * &cross[i][j];
            if i == j {
                x += &one_minus;
            }
            x / &den
        })
    });
    RotMatrix::new(m).expect("Cayley transform is orthogonal")
}
