//! Symmetric and symmetric-traceless tensors in the monomial basis.
//!
//! An order-k symmetric tensor U is stored as the coefficients of the
//! homogeneous polynomial u(x) = U_{i₁…i_k} x_{i₁}…x_{i_k}, so the monomial
//! m₁^{k₁}m₂^{k₂}m₃^{k₃} is exactly x₁^{k₁}x₂^{k₂}x₃^{k₃}. Products become
//! polynomial products, traces Laplacians and rotations linear substitutions.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::exactscalar::{factorial, rint, Field, Rational, Ring};
use crate::linalg;
use crate::so3poly::{OrientPoly, RotMatrix};

pub const MAX_ORDER: usize = 40;
/// Largest order accepted by [`build_basis_w`].
pub const BASIS_CAP: usize = 8;

pub fn num_monomials(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// Position of (k₁,k₂,k₃) in graded-lex order (k₁ descending, then k₂).
pub fn mono_index(k: [u32; 3]) -> usize {
    let s = (k[1] + k[2]) as usize;
    s * (s + 1) / 2 + k[2] as usize
}

struct MonoTables {
    monos: Vec<Vec<[u32; 3]>>,
    inv_mult: Vec<Vec<Rational>>,
}

fn mono_tables() -> &'static MonoTables {
    static T: OnceLock<MonoTables> = OnceLock::new();
    T.get_or_init(|| {
        let monos: Vec<Vec<[u32; 3]>> = (0..=MAX_ORDER)
            .map(|k| {
                let mut v = Vec::with_capacity(num_monomials(k));
                for k1 in (0..=k as u32).rev() {
                    for k2 in (0..=k as u32 - k1).rev() {
                        v.push([k1, k2, k as u32 - k1 - k2]);
                    }
                }
                v
            })
            .collect();
        let inv_mult = monos
            .iter()
            .enumerate()
            .map(|(k, ms)| {
                ms.iter()
                    .map(|m| {
                        let den = factorial(m[0] as u64) * factorial(m[1] as u64) * factorial(m[2] as u64);
                        Rational::new(den, factorial(k as u64))
                    })
                    .collect()
            })
            .collect();
        MonoTables { monos, inv_mult }
    })
}

/// Monomial exponent triples of order k in storage order.
pub fn monomials(k: usize) -> &'static [[u32; 3]] {
    &mono_tables().monos[k]
}

/// 1 / multinomial(k; κ), the weight of one component in the dot product.
pub fn inv_multinomial(k: usize, idx: usize) -> &'static Rational {
    &mono_tables().inv_mult[k][idx]
}

pub fn multinomial(kappa: [u32; 3]) -> BigInt {
    let k = (kappa[0] + kappa[1] + kappa[2]) as u64;
    factorial(k) / (factorial(kappa[0] as u64) * factorial(kappa[1] as u64) * factorial(kappa[2] as u64))
}

#[derive(Clone, PartialEq)]
pub struct SymTensor<R = Rational> {
    order: usize,
    c: Vec<R>,
    traceless: bool,
}

impl<R: Ring> SymTensor<R> {
    pub fn zero(k: usize) -> Self {
        assert!(k <= MAX_ORDER, "order {k} exceeds {MAX_ORDER}");
        SymTensor { order: k, c: vec![R::zero(); num_monomials(k)], traceless: true }
    }

    pub fn scalar(r: R) -> Self {
        SymTensor { order: 0, c: vec![r], traceless: true }
    }

    pub fn from_coeffs(k: usize, c: Vec<R>) -> Self {
        assert_eq!(c.len(), num_monomials(k));
        SymTensor { order: k, c, traceless: false }
    }

    /// m₁^{k₁}m₂^{k₂}m₃^{k₃}
    pub fn monomial(k: [u32; 3]) -> Self {
        let order = (k[0] + k[1] + k[2]) as usize;
        let mut t = Self::zero(order);
        t.c[mono_index(k)] = R::one();
        t.traceless = order <= 1;
        t
    }

    /// The frame axis m_i (i = 1, 2, 3).
    pub fn axis(i: usize) -> Self {
        let mut k = [0; 3];
        k[i - 1] = 1;
        Self::monomial(k)
    }

    /// 𝔦 = m₁² + m₂² + m₃².
    pub fn iota() -> Self {
        let mut t = Self::zero(2);
        for i in 0..3 {
            let mut k = [0; 3];
            k[i] = 2;
            t.c[mono_index(k)] = R::one();
        }
        t.traceless = false;
        t
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[R] {
        &self.c
    }

    pub fn coeff(&self, k: [u32; 3]) -> &R {
        &self.c[mono_index(k)]
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|x| x.is_zero())
    }

    /// Whether the traceless flag is set (see [`SymTensor::check_traceless`]).
    pub fn traceless(&self) -> bool {
        self.traceless
    }

    pub fn with_traceless_flag(mut self, flag: bool) -> Self {
        self.traceless = flag;
        self
    }

    /// Trace test computed from the coefficients.
    pub fn check_traceless(&self) -> bool {
        self.order < 2 || self.trace().map(|t| t.is_zero()).unwrap_or(false)
    }

    pub fn plus(&self, o: &Self) -> Self {
        assert_eq!(self.order, o.order, "order mismatch in tensor sum");
        SymTensor {
            order: self.order,
            c: self.c.iter().zip(&o.c).map(|(a, b)| a.plus(b)).collect(),
            traceless: self.traceless && o.traceless,
        }
    }

    pub fn minus(&self, o: &Self) -> Self {
        self.plus(&o.negated())
    }

    pub fn negated(&self) -> Self {
        SymTensor { order: self.order, c: self.c.iter().map(|a| a.negated()).collect(), traceless: self.traceless }
    }

    pub fn scaled(&self, r: &Rational) -> Self {
        SymTensor { order: self.order, c: self.c.iter().map(|a| a.scaled(r)).collect(), traceless: self.traceless }
    }

    pub fn times_scalar(&self, r: &R) -> Self {
        SymTensor { order: self.order, c: self.c.iter().map(|a| a.times(r)).collect(), traceless: self.traceless }
    }

    pub fn acc(&mut self, o: &Self) {
        assert_eq!(self.order, o.order);
        for (a, b) in self.c.iter_mut().zip(&o.c) {
            a.acc(b);
        }
        self.traceless = self.traceless && o.traceless;
    }

    /// Symmetrized tensor product (U ⊗ V)_sym.
    pub fn sym_mul(&self, o: &Self) -> Self {
        let k = self.order + o.order;
        let mut out = Self::zero(k);
        let (ma, mb) = (monomials(self.order), monomials(o.order));
        for (i, a) in self.c.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.c.iter().enumerate() {
                if b.is_zero() {
                    continue;
                }
                let kk = [ma[i][0] + mb[j][0], ma[i][1] + mb[j][1], ma[i][2] + mb[j][2]];
                out.c[mono_index(kk)].acc(&a.times(b));
            }
        }
        out.traceless = k <= 1;
        out
    }

    /// 𝔦^q multiplied in.
    pub fn iota_pow(&self, q: usize) -> Self {
        let mut t = self.clone();
        let i = Self::iota();
        for _ in 0..q {
            t = t.sym_mul(&i);
        }
        if q > 0 {
            t.traceless = false;
        }
        t
    }

    /// ∂/∂x_i of the associated polynomial (i = 0, 1, 2).
    pub fn derivative(&self, i: usize) -> Self {
        if self.order == 0 {
            return Self::zero(0);
        }
        let mut out = Self::zero(self.order - 1);
        for (idx, m) in monomials(self.order).iter().enumerate() {
            if m[i] == 0 || self.c[idx].is_zero() {
                continue;
            }
            let mut mm = *m;
            mm[i] -= 1;
            out.c[mono_index(mm)].acc(&self.c[idx].scaled(&rint(m[i] as i64)));
        }
        out.traceless = false;
        out
    }

    fn laplacian(&self) -> Self {
        let mut out = Self::zero(self.order - 2);
        for (idx, m) in monomials(self.order).iter().enumerate() {
            if self.c[idx].is_zero() {
                continue;
            }
            for i in 0..3 {
                if m[i] >= 2 {
                    let mut mm = *m;
                    mm[i] -= 2;
                    out.c[mono_index(mm)].acc(&self.c[idx].scaled(&rint((m[i] * (m[i] - 1)) as i64)));
                }
            }
        }
        out.traceless = false;
        out
    }

    /// Contraction of one index pair.
    pub fn trace(&self) -> Result<Self> {
        if self.order < 2 {
            return Err(Error::Invalid(format!("trace needs order >= 2, got {}", self.order)));
        }
        let k = self.order as i64;
        Ok(self.laplacian().scaled(&Rational::new(BigInt::one(), BigInt::from(k * (k - 1)))))
    }

    /// Frobenius inner product Σ U_I V_I.
    pub fn dot(&self, o: &Self) -> R {
        assert_eq!(self.order, o.order, "order mismatch in dot");
        let mut s = R::zero();
        for (i, (a, b)) in self.c.iter().zip(&o.c).enumerate() {
            if a.is_zero() || b.is_zero() {
                continue;
            }
            s.acc(&a.times(b).scaled(inv_multinomial(self.order, i)));
        }
        s
    }

    /// (U)₀, the traceless part.
    pub fn traceless_project(&self) -> Self {
        if self.order < 2 {
            return self.clone().with_traceless_flag(true);
        }
        let p = traceless_projector(self.order);
        let n = self.c.len();
        let mut out = Self::zero(self.order);
        for (j, x) in self.c.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for i in 0..n {
                let pij = &p[i][j];
                if !Zero::is_zero(pij) {
                    out.c[i].acc(&x.scaled(pij));
                }
            }
        }
        out.traceless = true;
        out
    }

    /// Replaces x_j by Σ_i forms[j][i] x_i in the associated polynomial.
    pub fn substitute_linear(&self, forms: &[[R; 3]; 3]) -> Self {
        let k = self.order;
        let lin: Vec<SymTensor<R>> = (0..3)
            .map(|j| {
                let mut t = Self::zero(1);
                for i in 0..3 {
                    t.c[i] = forms[j][i].clone();
                }
                t
            })
            .collect();
        let mut pows: Vec<Vec<SymTensor<R>>> = Vec::with_capacity(3);
        for l in &lin {
            let mut v = vec![SymTensor::scalar(R::one())];
            for e in 1..=k {
                let next = v[e - 1].sym_mul(l);
                v.push(next);
            }
            pows.push(v);
        }
        let mut cache12: HashMap<(u32, u32), SymTensor<R>> = HashMap::new();
        let mut out = Self::zero(k);
        for (idx, m) in monomials(k).iter().enumerate() {
            if self.c[idx].is_zero() {
                continue;
            }
            let ab = cache12
                .entry((m[0], m[1]))
                .or_insert_with(|| pows[0][m[0] as usize].sym_mul(&pows[1][m[1] as usize]))
                .clone();
            let full = ab.sym_mul(&pows[2][m[2] as usize]);
            out.acc(&full.times_scalar(&self.c[idx]));
        }
        out.traceless = self.traceless;
        out
    }

    pub fn map<S: Ring>(&self, f: impl Fn(&R) -> S) -> SymTensor<S> {
        SymTensor { order: self.order, c: self.c.iter().map(f).collect(), traceless: self.traceless }
    }

    /// Component U_{i₁…i_k} (0-based indices).
    pub fn component(&self, idx: &[usize]) -> R {
        assert_eq!(idx.len(), self.order);
        let mut k = [0u32; 3];
        for &i in idx {
            k[i] += 1;
        }
        let pos = mono_index(k);
        self.c[pos].scaled(inv_multinomial(self.order, pos))
    }

    /// Component by index counts κ.
    pub fn component_by_counts(&self, k: [u32; 3]) -> R {
        let pos = mono_index(k);
        self.c[pos].scaled(inv_multinomial(self.order, pos))
    }

    pub fn to_dense(&self) -> DenseTensor<R> {
        let n = 3usize.pow(self.order as u32);
        let data = (0..n).map(|flat| self.component(&unflatten(flat, self.order))).collect();
        DenseTensor { order: self.order, data }
    }
}

impl<F: Field> SymTensor<F> {
    /// Right action s∘U: m_j ↦ Σ_i s_ij m_i.
    pub fn rotate(&self, s: &RotMatrix<F>) -> Self {
        let forms: [[F; 3]; 3] = std::array::from_fn(|j| std::array::from_fn(|i| s.entry(i, j).clone()));
        self.substitute_linear(&forms)
    }

    /// U(𝔭) as a field in rotation variable `var`: components become
    /// polynomials in the entries of 𝔭.
    pub fn rotate_to_field(&self, var: u8) -> SymTensor<OrientPoly<F>> {
        let forms: [[OrientPoly<F>; 3]; 3] =
            std::array::from_fn(|j| std::array::from_fn(|i| OrientPoly::entry(var, i + 1, j + 1)));
        self.map(|c| OrientPoly::constant(c.clone())).substitute_linear(&forms)
    }

    pub fn to_f64(&self) -> SymTensor<f64> {
        self.map(|c| c.to_f64())
    }

    /// Squared Frobenius norm.
    pub fn norm2(&self) -> F {
        self.dot(self)
    }
}

impl<F: Field> SymTensor<OrientPoly<F>> {
    /// Evaluation at 𝔭 = identity.
    pub fn at_identity(&self) -> SymTensor<F> {
        let id = RotMatrix::<F>::identity();
        self.map(|p| {
            let mut s = F::zero();
            for (m, c) in p.terms() {
                let mut t = c.clone();
                for v in 0..crate::so3poly::MAX_VARS as u8 {
                    for i in 0..3 {
                        for j in 0..3 {
                            for _ in 0..m.exponent(v, i, j) {
                                t = t.times(id.entry(i, j));
                            }
                        }
                    }
                }
                s.acc(&t);
            }
            s
        })
    }
}

fn unflatten(mut flat: usize, k: usize) -> Vec<usize> {
    let mut idx = vec![0; k];
    for slot in (0..k).rev() {
        idx[slot] = flat % 3;
        flat /= 3;
    }
    idx
}

fn flatten(idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * 3 + i)
}

/// Matrix of (·)₀ on order-k coefficient vectors, cached per k.
pub fn traceless_projector(k: usize) -> std::sync::Arc<Vec<Vec<Rational>>> {
    static C: OnceLock<Mutex<HashMap<usize, std::sync::Arc<Vec<Vec<Rational>>>>>> = OnceLock::new();
    let cache = C.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(p) = cache.lock().expect("projector cache").get(&k) {
        return p.clone();
    }
    let p = std::sync::Arc::new(build_projector(k));
    cache.lock().expect("projector cache").insert(k, p.clone());
    p
}

fn build_projector(k: usize) -> Vec<Vec<Rational>> {
    // Solve trace(𝔦V) = trace(u) for V of order k-2, then (u)₀ = u - 𝔦V.
    let n2 = num_monomials(k - 2);
    let n = num_monomials(k);
    let iota = SymTensor::<Rational>::iota();
    let mut a = vec![vec![rint(0); n2]; n2];
    for j in 0..n2 {
        let col = SymTensor::<Rational>::monomial(monomials(k - 2)[j]).sym_mul(&iota).trace().expect("order >= 2");
        for i in 0..n2 {
            a[i][j] = col.c[i].clone();
        }
    }
    let ainv = linalg::inverse(&a).expect("trace(𝔦V) map is invertible");
    let mut p = vec![vec![rint(0); n]; n];
    for j in 0..n {
        let u = SymTensor::<Rational>::monomial(monomials(k)[j]);
        let tu = u.trace().expect("order >= 2");
        let mut v = SymTensor::<Rational>::zero(k - 2);
        for i in 0..n2 {
            let mut s = rint(0);
            for l in 0..n2 {
                s += &ainv[i][l] * &tu.c[l];
            }
            v.c[i] = s;
        }
        let proj = u.minus(&v.sym_mul(&iota));
        for i in 0..n {
            p[i][j] = proj.c[i].clone();
        }
    }
    p
}

/// Orthogonal basis 𝕎^k of order-k symmetric traceless tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisW {
    pub order: usize,
    pub tensors: Vec<SymTensor<Rational>>,
}

impl BasisW {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }
    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
    pub fn get(&self, i: usize) -> &SymTensor<Rational> {
        &self.tensors[i]
    }
}

/// Gram–Schmidt (unnormalized) over traceless projections of the monomials in
/// storage order, skipping dependent vectors.
pub fn build_basis_w(k: usize) -> Result<BasisW> {
    if k > BASIS_CAP {
        return Err(Error::Cap(format!("basis order {k} exceeds cap {BASIS_CAP}")));
    }
    static C: OnceLock<Mutex<HashMap<usize, BasisW>>> = OnceLock::new();
    let cache = C.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(b) = cache.lock().expect("basis cache").get(&k) {
        return Ok(b.clone());
    }
    let tensors = gram_schmidt(monomials(k).iter().map(|m| SymTensor::<Rational>::monomial(*m).traceless_project()));
    let b = BasisW { order: k, tensors };
    cache.lock().expect("basis cache").insert(k, b.clone());
    Ok(b)
}

/// Unnormalized Gram–Schmidt keeping nonzero residuals, in input order.
pub fn gram_schmidt<F: Field>(input: impl IntoIterator<Item = SymTensor<F>>) -> Vec<SymTensor<F>> {
    let mut out: Vec<(SymTensor<F>, F)> = Vec::new();
    for v in input {
        let flag = v.traceless;
        let mut w = v;
        for (b, n2) in &out {
            let c = w.dot(b).times(&n2.inv().expect("nonzero norm"));
            if !c.is_zero() {
                w = w.minus(&b.times_scalar(&c));
            }
        }
        if !w.is_zero() {
            let n2 = w.dot(&w);
            out.push((w.with_traceless_flag(flag), n2));
        }
    }
    out.into_iter().map(|(t, _)| t).collect()
}

/// w^k_ij(𝔭) = W^k_i · W^k_j(𝔭) (1-based i, j).
pub fn pair_w(k: usize, i: usize, j: usize) -> Result<OrientPoly<Rational>> {
    let b = build_basis_w(k)?;
    if i == 0 || j == 0 || i > b.len() || j > b.len() {
        return Err(Error::Invalid(format!("index ({i},{j}) out of range 1..={}", b.len())));
    }
    let wi = b.get(i - 1).map(|c| OrientPoly::constant(c.clone()));
    Ok(wi.dot(&b.get(j - 1).rotate_to_field(0)))
}

impl<R: Ring + fmt::Display> SymTensor<R> {
    /// Monomial notation, e.g. "2/3*m1^2 - 1/3*m2^2 - 1/3*m3^2".
    pub fn to_monomial_string(&self) -> String {
        let mut parts: Vec<(bool, String)> = Vec::new();
        for (idx, m) in monomials(self.order).iter().enumerate() {
            let c = &self.c[idx];
            if c.is_zero() {
                continue;
            }
            let mono = mono_name(*m);
            let cs = c.to_string();
            let (neg, mag) = match cs.strip_prefix('-') {
                Some(r) if !r.contains(['+', '-']) => (true, r.to_string()),
                _ => (false, cs),
            };
            let mag = if mag.contains(['+', '-']) { format!("({mag})") } else { mag };
            let body = match (mono.is_empty(), mag == "1") {
                (true, _) => mag,
                (false, true) => mono,
                (false, false) => format!("{mag}*{mono}"),
            };
            parts.push((neg, body));
        }
        join_signed(&parts)
    }
}

pub(crate) fn join_signed(parts: &[(bool, String)]) -> String {
    if parts.is_empty() {
        return "0".into();
    }
    let mut s = String::new();
    for (i, (neg, body)) in parts.iter().enumerate() {
        match (i, neg) {
            (0, true) => s.push('-'),
            (0, false) => {}
            (_, true) => s.push_str(" - "),
            (_, false) => s.push_str(" + "),
        }
        s.push_str(body);
    }
    s
}

pub fn mono_name(m: [u32; 3]) -> String {
    let mut f = Vec::new();
    for (i, &e) in m.iter().enumerate() {
        match e {
            0 => {}
            1 => f.push(format!("m{}", i + 1)),
            _ => f.push(format!("m{}^{e}", i + 1)),
        }
    }
    f.join(" ")
}

impl SymTensor<Rational> {
    /// Readable form R + 𝔦·(…) of a tensor, choosing which squared axis to
    /// eliminate so that the leading part R is as short as possible.
    ///
    /// Written with "i" for 𝔦, e.g. "m1^2 - 1/3 i".
    pub fn pretty(&self) -> String {
        let mut best: Option<(usize, String)> = None;
        for pivot in [2usize, 1, 0] {
            let (r, v) = reduce_by_iota(self, pivot);
            let cost = r.c.iter().filter(|x| !Zero::is_zero(*x)).count()
                + v.as_ref().map(|v| v.c.iter().filter(|x| !Zero::is_zero(*x)).count()).unwrap_or(0);
            let s = render_with_iota(&r, v.as_ref());
            if best.as_ref().map(|(c, _)| cost < *c).unwrap_or(true) {
                best = Some((cost, s));
            }
        }
        best.map(|(_, s)| s).unwrap_or_else(|| "0".into())
    }

    /// Scales so the first nonzero coefficient of the reduced form is ±1.
    pub fn monic(&self) -> Self {
        let (r, _) = reduce_by_iota(self, 2);
        let lead = r.c.iter().chain(self.c.iter()).find(|x| !Zero::is_zero(*x)).cloned();
        match lead {
            Some(l) => self.scaled(&l.abs().recip()),
            None => self.clone(),
        }
    }
}

/// Splits u = R + 𝔦·V where R has exponent ≤ 1 in the pivot axis.
fn reduce_by_iota(u: &SymTensor<Rational>, pivot: usize) -> (SymTensor<Rational>, Option<SymTensor<Rational>>) {
    if u.order < 2 {
        return (u.clone(), None);
    }
    let mut r = u.clone();
    let mut v = SymTensor::<Rational>::zero(u.order - 2);
    let others: Vec<usize> = (0..3).filter(|&i| i != pivot).collect();
    // Highest pivot powers first so each rewrite only creates lower ones.
    let mut order: Vec<usize> = (0..r.c.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(monomials(u.order)[i][pivot]));
    let mut changed = true;
    while changed {
        changed = false;
        for &idx in &order {
            let m = monomials(u.order)[idx];
            if m[pivot] < 2 || Zero::is_zero(&r.c[idx]) {
                continue;
            }
            let c = r.c[idx].clone();
            r.c[idx] = rint(0);
            let mut base = m;
            base[pivot] -= 2;
            v.c[mono_index(base)] += &c;
            for &o in &others {
                let mut mm = base;
                mm[o] += 2;
                r.c[mono_index(mm)] -= &c;
            }
            changed = true;
        }
    }
    let v = if v.is_zero() { None } else { Some(v) };
    (r, v)
}

fn render_with_iota(r: &SymTensor<Rational>, v: Option<&SymTensor<Rational>>) -> String {
    let mut parts: Vec<(bool, String)> = Vec::new();
    push_parts(&mut parts, r, "");
    if let Some(v) = v {
        // V itself may contain squares; render it recursively as a polynomial in i.
        let inner = v.pretty_parts();
        for (neg, body) in inner {
            let b = if body == "1" { "i".to_string() } else { format!("{body} i") };
            parts.push((neg, b));
        }
    }
    join_signed(&parts).replace(" 1 i", " i")
}

impl SymTensor<Rational> {
    fn pretty_parts(&self) -> Vec<(bool, String)> {
        let (r, v) = reduce_by_iota(self, 2);
        let mut parts = Vec::new();
        push_parts(&mut parts, &r, "");
        if let Some(v) = v {
            for (neg, body) in v.pretty_parts() {
                let b = if body == "1" { "i".to_string() } else { format!("{body} i") };
                parts.push((neg, b));
            }
        }
        parts
    }
}

fn push_parts(parts: &mut Vec<(bool, String)>, t: &SymTensor<Rational>, _suffix: &str) {
    for (idx, m) in monomials(t.order).iter().enumerate() {
        let c = &t.c[idx];
        if Zero::is_zero(c) {
            continue;
        }
        let mono = mono_name(*m);
        let mag = c.abs();
        let body = match (mono.is_empty(), mag.is_one()) {
            (true, _) => mag.to_string(),
            (false, true) => mono,
            (false, false) => format!("{mag} {mono}"),
        };
        parts.push((c.is_negative(), body));
    }
}

impl<R: Ring + fmt::Display> fmt::Display for SymTensor<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_monomial_string())
    }
}

impl<R: Ring> fmt::Debug for SymTensor<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymTensor(order {}, {:?})", self.order, self.c)
    }
}

/// Order-k tensor with all 3^k components, row-major (first index slowest).
#[derive(Clone, PartialEq, Debug)]
pub struct DenseTensor<R = Rational> {
    pub order: usize,
    pub data: Vec<R>,
}

impl<R: Ring> DenseTensor<R> {
    pub fn zero(k: usize) -> Self {
        DenseTensor { order: k, data: vec![R::zero(); 3usize.pow(k as u32)] }
    }

    pub fn get(&self, idx: &[usize]) -> &R {
        &self.data[flatten(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: R) {
        let f = flatten(idx);
        self.data[f] = v;
    }

    /// Basis vector e_i (0-based) as an order-1 tensor.
    pub fn unit(i: usize) -> Self {
        let mut t = Self::zero(1);
        t.data[i] = R::one();
        t
    }

    /// Levi-Civita ε_{ijk}.
    pub fn epsilon() -> Self {
        let mut t = Self::zero(3);
        for (p, s) in [([0, 1, 2], 1), ([1, 2, 0], 1), ([2, 0, 1], 1), ([0, 2, 1], -1), ([2, 1, 0], -1), ([1, 0, 2], -1)]
        {
            t.set(&p, R::from_int(s));
        }
        t
    }

    /// Kronecker δ_ij.
    pub fn delta() -> Self {
        let mut t = Self::zero(2);
        for i in 0..3 {
            t.set(&[i, i], R::one());
        }
        t
    }

    pub fn outer(&self, o: &Self) -> Self {
        let mut data = Vec::with_capacity(self.data.len() * o.data.len());
        for a in &self.data {
            for b in &o.data {
                data.push(a.times(b));
            }
        }
        DenseTensor { order: self.order + o.order, data }
    }

    pub fn plus(&self, o: &Self) -> Self {
        assert_eq!(self.order, o.order);
        DenseTensor { order: self.order, data: self.data.iter().zip(&o.data).map(|(a, b)| a.plus(b)).collect() }
    }

    pub fn scaled(&self, r: &Rational) -> Self {
        DenseTensor { order: self.order, data: self.data.iter().map(|a| a.scaled(r)).collect() }
    }

    /// Contracts slots a < b.
    pub fn contract(&self, a: usize, b: usize) -> Self {
        assert!(a < b && b < self.order);
        let mut out = Self::zero(self.order - 2);
        for flat in 0..out.data.len() {
            let rest = unflatten(flat, self.order - 2);
            let mut s = R::zero();
            for i in 0..3 {
                let mut idx = rest.clone();
                idx.insert(a, i);
                idx.insert(b, i);
                s.acc(self.get(&idx));
            }
            out.data[flat] = s;
        }
        out
    }

    /// Reorders slots: new slot s holds old slot perm[s].
    pub fn permute(&self, perm: &[usize]) -> Self {
        let mut out = Self::zero(self.order);
        for flat in 0..self.data.len() {
            let idx = unflatten(flat, self.order);
            let new_idx: Vec<usize> = perm.iter().map(|&p| idx[p]).collect();
            out.set(&new_idx, self.data[flat].clone());
        }
        out
    }

    /// Average over all index permutations.
    pub fn symmetrize(&self) -> SymTensor<R> {
        let mut t = SymTensor::<R>::zero(self.order);
        for (flat, x) in self.data.iter().enumerate() {
            let mut k = [0u32; 3];
            for i in unflatten(flat, self.order) {
                k[i] += 1;
            }
            t.c[mono_index(k)].acc(x);
        }
        t.traceless = false;
        t
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactscalar::rat;
    use crate::linalg::rank_bareiss;
    use crate::so3poly::cayley_rotation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type T = SymTensor<Rational>;

    pub fn random_sym(rng: &mut ChaCha8Rng, k: usize) -> T {
        T::from_coeffs(k, (0..num_monomials(k)).map(|_| rat(rng.gen_range(-6..=6), rng.gen_range(1..=3))).collect())
    }

    #[test]
    fn mono_index_is_position() {
        for k in 0..10 {
            for (i, m) in monomials(k).iter().enumerate() {
                assert_eq!(mono_index(*m), i);
            }
        }
    }

    #[test]
    fn symmetrize_examples() {
        let e12 = DenseTensor::<Rational>::unit(0).outer(&DenseTensor::unit(1));
        let s = e12.symmetrize();
        assert_eq!(s, T::monomial([1, 1, 0]).with_traceless_flag(false));
        assert_eq!(s.component(&[0, 1]), rat(1, 2));
        assert_eq!(s.component(&[1, 0]), rat(1, 2));
        let e11 = DenseTensor::<Rational>::unit(0).outer(&DenseTensor::unit(0));
        assert_eq!(e11.symmetrize().coeffs(), T::monomial([2, 0, 0]).coeffs());
        assert!(DenseTensor::<Rational>::epsilon().symmetrize().is_zero());
    }

    #[test]
    fn dense_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 0..5 {
            let u = random_sym(&mut rng, k);
            assert_eq!(u.to_dense().symmetrize().coeffs(), u.coeffs());
        }
    }

    #[test]
    fn trace_examples() {
        assert_eq!(T::iota().trace().unwrap().coeffs(), &[rint(3)]);
        assert_eq!(T::monomial([2, 0, 0]).trace().unwrap().coeffs(), &[rint(1)]);
        let q = T::monomial([2, 0, 0]).minus(&T::iota().scaled(&rat(1, 3)));
        assert!(q.trace().unwrap().is_zero());
        assert!(T::axis(1).trace().is_err());
    }

    #[test]
    fn trace_matches_dense_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 2..6 {
            let u = random_sym(&mut rng, k);
            let dense = u.to_dense().contract(k - 2, k - 1).symmetrize();
            assert_eq!(dense.coeffs(), u.trace().unwrap().coeffs());
        }
    }

    #[test]
    fn traceless_project_examples() {
        let p = T::monomial([2, 0, 0]).traceless_project();
        assert_eq!(p.coeffs(), T::monomial([2, 0, 0]).minus(&T::iota().scaled(&rat(1, 3))).coeffs());
        assert!(T::iota().traceless_project().is_zero());
        // m1^3 - (3/5) sym(𝔦 ⊗ m1), with the trace system solved by hand:
        // tr(m1^3) = m1, tr(sym(𝔦⊗m1)) = (5/3) m1.
        let p3 = T::monomial([3, 0, 0]).traceless_project();
        let expect = T::monomial([3, 0, 0]).minus(&T::iota().sym_mul(&T::axis(1)).scaled(&rat(3, 5)));
        assert_eq!(p3.coeffs(), expect.coeffs());
        assert!(p3.trace().unwrap().is_zero());
    }

    #[test]
    fn traceless_project_idempotent_and_in_iota_ideal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 0..=6 {
            let u = random_sym(&mut rng, k);
            let p = u.traceless_project();
            assert!(p.check_traceless());
            assert_eq!(p.traceless_project().coeffs(), p.coeffs());
            if k >= 2 {
                // u - (u)₀ = 𝔦V: its projection must vanish.
                assert!(u.minus(&p).traceless_project().is_zero());
            }
        }
    }

    #[test]
    fn dimension_law_by_rank() {
        for k in 0..=6 {
            let rows: Vec<Vec<Rational>> =
                monomials(k).iter().map(|m| T::monomial(*m).traceless_project().coeffs().to_vec()).collect();
            assert_eq!(rank_bareiss(&rows), 2 * k + 1, "order {k}");
        }
    }

    #[test]
    fn basis_examples() {
        assert_eq!(build_basis_w(0).unwrap().tensors, vec![T::scalar(rint(1))]);
        let b1 = build_basis_w(1).unwrap();
        assert_eq!(b1.len(), 3);
        for i in 1..=3 {
            assert_eq!(b1.get(i - 1).coeffs(), T::axis(i).coeffs());
        }
        assert_eq!(build_basis_w(2).unwrap().len(), 5);
        assert!(build_basis_w(9).is_err());
    }

    #[test]
    fn basis_orthogonal_traceless() {
        for k in 0..=5 {
            let b = build_basis_w(k).unwrap();
            assert_eq!(b.len(), 2 * k + 1);
            for i in 0..b.len() {
                assert!(b.get(i).check_traceless());
                assert!(!b.get(i).is_zero());
                for j in 0..i {
                    assert_eq!(b.get(i).dot(b.get(j)), rint(0));
                }
            }
        }
    }

    #[test]
    fn dot_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for k in 0..5 {
            let (u, v) = (random_sym(&mut rng, k), random_sym(&mut rng, k));
            let dense: Rational = u.to_dense().data.iter().zip(&v.to_dense().data).map(|(a, b)| a * b).sum();
            assert_eq!(u.dot(&v), dense);
        }
    }

    #[test]
    fn rotate_to_field_examples() {
        let f = T::axis(1).rotate_to_field(0);
        assert_eq!(f.coeff([1, 0, 0]), &OrientPoly::entry(0, 1, 1));
        assert_eq!(f.coeff([0, 1, 0]), &OrientPoly::entry(0, 2, 1));
        assert_eq!(f.coeff([0, 0, 1]), &OrientPoly::entry(0, 3, 1));
        let fi = T::iota().rotate_to_field(0);
        // Constant up to the orthogonality relations: check at a rational rotation.
        let s = cayley_rotation(&rat(1, 2), &rat(-1, 3), &rat(2, 1));
        assert_eq!(T::iota().rotate(&s), T::iota());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_sym(&mut rng, 3);
        assert_eq!(u.rotate_to_field(0).at_identity(), u.clone().with_traceless_flag(false));
        assert_eq!(fi.order(), 2);
    }

    #[test]
    fn schur_constant() {
        // ∫ (A·U(p)) (B·V(p)) dp = (A·B)(U·V)/(2k+1) for traceless A, B, U, V.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 1..=3usize {
            let t: Vec<T> = (0..4).map(|_| random_sym(&mut rng, k).traceless_project()).collect();
            let lift = |x: &T| x.map(|c| OrientPoly::constant(c.clone()));
            let f = lift(&t[0]).dot(&t[1].rotate_to_field(0)).times(&lift(&t[2]).dot(&t[3].rotate_to_field(0)));
            let integral = f.haar_integral(0).unwrap().as_constant().unwrap();
            assert_eq!(integral, t[0].dot(&t[2]) * t[1].dot(&t[3]) * rat(1, 2 * k as i64 + 1));
        }
        // The full pairing itself is invariant: ∫ U(p)·V(p) dp = U·V.
        let (u, v) = (random_sym(&mut rng, 2), random_sym(&mut rng, 2));
        let whole = u.rotate_to_field(0).dot(&v.rotate_to_field(0)).haar_integral(0).unwrap();
        assert_eq!(whole.as_constant().unwrap(), u.dot(&v));
    }

    #[test]
    fn rotation_preserves_dot() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for k in 0..5 {
            let (u, v) = (random_sym(&mut rng, k), random_sym(&mut rng, k));
            let s = cayley_rotation(&rat(rng.gen_range(-3..4), 2), &rat(1, rng.gen_range(1..4)), &rat(-2, 3));
            assert_eq!(u.rotate(&s).dot(&v.rotate(&s)), u.dot(&v));
            // Field version: U(𝔭s)·V(𝔭s) equals U(𝔭)·V(𝔭) = U·V.
            let fu = u.rotate_to_field(0);
            let fv = v.rotate_to_field(0);
            let before = fu.dot(&fv);
            let after = before.right_substitute(0, &s).unwrap();
            assert_eq!(after.haar_integral(0).unwrap(), before.haar_integral(0).unwrap());
            assert_eq!(before.haar_integral(0).unwrap().as_constant().unwrap(), u.dot(&v));
        }
    }

    #[test]
    fn pair_w_examples() {
        assert_eq!(pair_w(0, 1, 1).unwrap().as_constant().unwrap(), rint(1));
        assert_eq!(pair_w(1, 1, 1).unwrap(), OrientPoly::entry(0, 1, 1));
        let prod = pair_w(1, 1, 1).unwrap().times(&pair_w(1, 1, 2).unwrap());
        assert!(prod.haar_integral(0).unwrap().is_zero());
        assert!(pair_w(1, 0, 1).is_err());
        assert!(pair_w(1, 1, 4).is_err());
    }

    #[test]
    fn pretty_forms() {
        let q = T::monomial([2, 0, 0]).traceless_project();
        assert_eq!(q.pretty(), "m1^2 - 1/3 i");
        let d = T::monomial([0, 2, 0]).minus(&T::monomial([0, 0, 2]));
        assert_eq!(d.pretty(), "m2^2 - m3^2");
        assert_eq!(T::monomial([0, 1, 1]).pretty(), "m2 m3");
        assert_eq!(T::scalar(rint(1)).pretty(), "1");
        assert_eq!(T::axis(1).pretty(), "m1");
    }
}
