//! Partial contractions of symmetric traceless tensors, their traceless
//! completions, the three- and four-tensor scalars, and the decomposition of
//! a general tensor into δ/ε patterns times symmetric traceless tensors.
//!
//! Fast paths work on the polynomial view of [`SymTensor`]: contracting p
//! index pairs is Σ_α (p!/α!) ∂^α u ∂^α v up to factorial weights, and the
//! ε family inserts x·(∇a × ∇b). The dense routines at the bottom are the
//! reference implementations used by the tests.

use std::collections::BTreeSet;

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::exactscalar::{double_factorial, factorial, rint, Rational, Ring};
use crate::linalg::IncrementalBasis;
use crate::tensors::{build_basis_w, monomials, multinomial, DenseTensor, SymTensor};

fn frac(num: BigInt, den: BigInt) -> Rational {
    Rational::new(num, den)
}

fn fact(n: usize) -> BigInt {
    factorial(n as u64)
}

/// All ∂^α u with |α| = p, in monomial storage order of order p.
fn all_derivatives<R: Ring>(u: &SymTensor<R>, p: usize) -> Vec<SymTensor<R>> {
    monomials(p)
        .iter()
        .map(|a| {
            let mut d = u.clone();
            for (axis, &e) in a.iter().enumerate() {
                for _ in 0..e {
                    d = d.derivative(axis);
                }
            }
            d
        })
        .collect()
}

fn gradient_pairs<R: Ring>(u: &SymTensor<R>, v: &SymTensor<R>, p: usize) -> SymTensor<R> {
    // Σ_α (p!/α!) ∂^α u · ∂^α v as polynomials.
    let (du, dv) = (all_derivatives(u, p), all_derivatives(v, p));
    let mut out = SymTensor::<R>::zero(u.order() + v.order() - 2 * p);
    for (i, a) in monomials(p).iter().enumerate() {
        let w = Rational::from_integer(multinomial(*a));
        out.acc(&du[i].sym_mul(&dv[i]).scaled(&w));
    }
    out
}

/// U ⋅ᵖ V: p index pairs contracted, result symmetrized.
pub fn pdot<R: Ring>(u: &SymTensor<R>, v: &SymTensor<R>, p: usize) -> Result<SymTensor<R>> {
    let (r, m) = (u.order(), v.order());
    if p > r.min(m) {
        return Err(Error::Invalid(format!("pdot: p = {p} exceeds min({r}, {m})")));
    }
    let w = frac(fact(r - p) * fact(m - p), fact(r) * fact(m));
    Ok(gradient_pairs(u, v, p).scaled(&w).with_traceless_flag(false))
}

/// U ×ᵖ V: one ε_{ζ₁ζ₂ν} joining a slot of each tensor plus p contracted pairs.
pub fn pcross<R: Ring>(u: &SymTensor<R>, v: &SymTensor<R>, p: usize) -> Result<SymTensor<R>> {
    let (r, m) = (u.order(), v.order());
    if r.min(m) == 0 || p + 1 > r.min(m) {
        return Err(Error::Invalid(format!("pcross: p = {p} needs p + 1 <= min({r}, {m})")));
    }
    let (du, dv) = (all_derivatives(u, p), all_derivatives(v, p));
    let mut out = SymTensor::<R>::zero(r + m - 2 * p - 1);
    for (i, a) in monomials(p).iter().enumerate() {
        let w = Rational::from_integer(multinomial(*a));
        let gu: Vec<SymTensor<R>> = (0..3).map(|k| du[i].derivative(k)).collect();
        let gv: Vec<SymTensor<R>> = (0..3).map(|k| dv[i].derivative(k)).collect();
        for nu in 0..3 {
            let (a1, b1) = ((nu + 1) % 3, (nu + 2) % 3);
            let cross = gu[a1].sym_mul(&gv[b1]).minus(&gu[b1].sym_mul(&gv[a1]));
            out.acc(&cross.sym_mul(&SymTensor::axis(nu + 1)).scaled(&w));
        }
    }
    let w = frac(fact(r - p - 1) * fact(m - p - 1), fact(r) * fact(m));
    Ok(out.scaled(&w).with_traceless_flag(false))
}

/// a^{r,m,p}_l of the traceless completion of U ⋅ᵖ V.
pub fn coeff_a(r: usize, m: usize, p: usize, l: usize) -> Rational {
    let s = 2 * (r + m - 2 * p) as i64;
    let num = fact(r - p) * fact(m - p) * double_factorial(s - 1 - 2 * l as i64);
    let den = fact(l) * fact(r - p - l) * fact(m - p - l) * double_factorial(s - 1);
    let v = frac(num, den);
    if l % 2 == 1 {
        -v
    } else {
        v
    }
}

/// b^{r,m,p}_l of the traceless completion of U ×ᵖ V.
pub fn coeff_b(r: usize, m: usize, p: usize, l: usize) -> Rational {
    let s = 2 * (r + m - 2 * p) as i64;
    let num = fact(r - p - 1) * fact(m - p - 1) * double_factorial(s - 3 - 2 * l as i64);
    let den = fact(l) * fact(r - p - l - 1) * fact(m - p - l - 1) * double_factorial(s - 3);
    let v = frac(num, den);
    if l % 2 == 1 {
        -v
    } else {
        v
    }
}

/// (U ⋅ᵖ V)₀ by the closed-form coefficients; U and V must be traceless.
pub fn traceless_pdot<R: Ring>(u: &SymTensor<R>, v: &SymTensor<R>, p: usize) -> Result<SymTensor<R>> {
    let (r, m) = (u.order(), v.order());
    let mut out = pdot(u, v, p)?;
    for l in 1..=(r.min(m) - p) {
        let term = pdot(u, v, p + l)?.iota_pow(l).scaled(&coeff_a(r, m, p, l));
        out.acc(&term);
    }
    Ok(out.with_traceless_flag(true))
}

/// (U ×ᵖ V)₀ by the closed-form coefficients; U and V must be traceless.
pub fn traceless_pcross<R: Ring>(u: &SymTensor<R>, v: &SymTensor<R>, p: usize) -> Result<SymTensor<R>> {
    let (r, m) = (u.order(), v.order());
    let mut out = pcross(u, v, p)?;
    for l in 1..(r.min(m) - p) {
        let term = pcross(u, v, p + l)?.iota_pow(l).scaled(&coeff_b(r, m, p, l));
        out.acc(&term);
    }
    Ok(out.with_traceless_flag(true))
}

/// Contraction counts l_ij and an optional ε triple (1-based tensor slots).
///
/// Three tensors use `l = [l12, l13, l23]`, four use
/// `l = [l12, l13, l14, l23, l24, l34]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct ContractionPattern {
    pub l: Vec<u32>,
    pub eps: Option<[u8; 3]>,
}

impl ContractionPattern {
    pub fn a3(l12: u32, l13: u32, l23: u32, eps: bool) -> Self {
        ContractionPattern { l: vec![l12, l13, l23], eps: eps.then_some([1, 2, 3]) }
    }

    pub fn a4(l: [u32; 6], eps: Option<[u8; 3]>) -> Self {
        ContractionPattern { l: l.to_vec(), eps }
    }

    pub fn arity(&self) -> usize {
        if self.l.len() == 3 {
            3
        } else {
            4
        }
    }

    /// Slot pairs matching the entries of `l`.
    pub fn edges(&self) -> Vec<(usize, usize, u32)> {
        let pairs: &[(usize, usize)] = if self.arity() == 3 {
            &[(0, 1), (0, 2), (1, 2)]
        } else {
            &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
        };
        pairs.iter().zip(&self.l).map(|(&(a, b), &l)| (a, b, l)).collect()
    }

    /// Tensor orders implied by the pattern.
    pub fn orders(&self) -> Vec<usize> {
        let mut n = vec![0usize; self.arity()];
        for (a, b, l) in self.edges() {
            n[a] += l as usize;
            n[b] += l as usize;
        }
        if let Some(t) = self.eps {
            for x in t {
                n[x as usize - 1] += 1;
            }
        }
        n
    }

    pub fn check_orders(&self, n: &[usize]) -> Result<()> {
        if n.len() != self.arity() || self.l.len() != if n.len() == 3 { 3 } else { 6 } {
            return Err(Error::Invalid(format!("pattern {:?} does not fit {} tensors", self.l, n.len())));
        }
        if let Some(t) = self.eps {
            let set: BTreeSet<u8> = t.iter().copied().collect();
            if set.len() != 3 || t.iter().any(|&x| x == 0 || x as usize > n.len()) {
                return Err(Error::Invalid(format!("bad epsilon triple {t:?}")));
            }
        }
        let implied = self.orders();
        if implied != n {
            return Err(Error::Invalid(format!("pattern {:?} implies orders {implied:?}, got {n:?}", self.l)));
        }
        Ok(())
    }
}

impl std::fmt::Display for ContractionPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let l: Vec<String> = self.l.iter().map(|x| x.to_string()).collect();
        write!(f, "{}", l.join(","))?;
        if let Some(t) = self.eps {
            write!(f, ",({}{}{})", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

const PERMS3: [([usize; 3], i64); 6] =
    [([0, 1, 2], 1), ([1, 2, 0], 1), ([2, 0, 1], 1), ([0, 2, 1], -1), ([2, 1, 0], -1), ([1, 0, 2], -1)];

/// Full contraction of symmetric tensors along a multigraph, optionally with
/// one ε joining three distinct slots.
///
/// Only index counts matter for symmetric tensors, so each edge of
/// multiplicity l ranges over count vectors c with weight l!/c!.
pub fn contract_network<R: Ring>(ts: &[&SymTensor<R>], edges: &[(usize, usize, u32)], eps: Option<[usize; 3]>) -> R {
    let choices: Vec<&'static [[u32; 3]]> = edges.iter().map(|e| monomials(e.2 as usize)).collect();
    let weights: Vec<Vec<Rational>> = edges
        .iter()
        .map(|e| monomials(e.2 as usize).iter().map(|c| Rational::from_integer(multinomial(*c))).collect())
        .collect();
    let mut total = R::zero();
    let mut idx = vec![0usize; edges.len()];
    loop {
        let mut counts = vec![[0u32; 3]; ts.len()];
        let mut w = rint(1);
        for (e, &(a, b, _)) in edges.iter().enumerate() {
            let c = choices[e][idx[e]];
            for k in 0..3 {
                counts[a][k] += c[k];
                counts[b][k] += c[k];
            }
            w *= &weights[e][idx[e]];
        }
        match eps {
            None => {
                let mut prod = R::one();
                for (t, k) in ts.iter().zip(&counts) {
                    prod = prod.times(&t.component_by_counts(*k));
                    if prod.is_zero() {
                        break;
                    }
                }
                total.acc(&prod.scaled(&w));
            }
            Some(tri) => {
                for (perm, sign) in PERMS3 {
                    let mut kk = counts.clone();
                    for s in 0..3 {
                        kk[tri[s]][perm[s]] += 1;
                    }
                    let mut prod = R::one();
                    for (t, k) in ts.iter().zip(&kk) {
                        prod = prod.times(&t.component_by_counts(*k));
                        if prod.is_zero() {
                            break;
                        }
                    }
                    total.acc(&prod.scaled(&(&w * rint(sign))));
                }
            }
        }
        // Odometer over the count choices of every edge.
        let mut e = 0;
        loop {
            if e == edges.len() {
                return total;
            }
            idx[e] += 1;
            if idx[e] < choices[e].len() {
                break;
            }
            idx[e] = 0;
            e += 1;
        }
    }
}

/// Coefficients of a network in which some slots are left free.
///
/// Fixed slots hold tensors; a free slot of order n stands for the unit
/// tensor E_κ with a single monomial coefficient at κ. The result maps the
/// monomial indices of the free slots (in slot order) to the scalar value,
/// computed in one sweep over the edge count choices.
pub fn network_coefficients(
    ts: &[Option<&SymTensor<Rational>>],
    orders: &[usize],
    edges: &[(usize, usize, u32)],
    eps: Option<[usize; 3]>,
) -> std::collections::HashMap<Vec<usize>, Rational> {
    use crate::tensors::{inv_multinomial, mono_index};
    let choices: Vec<&'static [[u32; 3]]> = edges.iter().map(|e| monomials(e.2 as usize)).collect();
    let weights: Vec<Vec<Rational>> = edges
        .iter()
        .map(|e| monomials(e.2 as usize).iter().map(|c| Rational::from_integer(multinomial(*c))).collect())
        .collect();
    let mut out: std::collections::HashMap<Vec<usize>, Rational> = std::collections::HashMap::new();
    let mut visit = |counts: &[[u32; 3]], w: Rational| {
        let mut val = w;
        let mut key = Vec::new();
        for (slot, t) in ts.iter().enumerate() {
            match t {
                Some(t) => {
                    val *= t.component_by_counts(counts[slot]);
                    if val == rint(0) {
                        return;
                    }
                }
                None => {
                    let idx = mono_index(counts[slot]);
                    val *= inv_multinomial(orders[slot], idx);
                    key.push(idx);
                }
            }
        }
        *out.entry(key).or_insert_with(|| rint(0)) += val;
    };
    let mut idx = vec![0usize; edges.len()];
    loop {
        let mut counts = vec![[0u32; 3]; ts.len()];
        let mut w = rint(1);
        for (e, &(a, b, _)) in edges.iter().enumerate() {
            let c = choices[e][idx[e]];
            for k in 0..3 {
                counts[a][k] += c[k];
                counts[b][k] += c[k];
            }
            w *= &weights[e][idx[e]];
        }
        match eps {
            None => visit(&counts, w),
            Some(tri) => {
                for (perm, sign) in PERMS3 {
                    let mut kk = counts.clone();
                    for s in 0..3 {
                        kk[tri[s]][perm[s]] += 1;
                    }
                    visit(&kk, &w * rint(sign));
                }
            }
        }
        let mut e = 0;
        loop {
            if e == edges.len() {
                out.retain(|_, v| *v != rint(0));
                return out;
            }
            idx[e] += 1;
            if idx[e] < choices[e].len() {
                break;
            }
            idx[e] = 0;
            e += 1;
        }
    }
}

/// Contraction counts of 𝔞₃ forced by the orders, or an error if infeasible.
pub fn a3_pattern(n: [usize; 3], eps: bool) -> Result<ContractionPattern> {
    let k: usize = n.iter().sum();
    let shift = eps as usize;
    let ok = if eps {
        k % 2 == 1 && n.iter().all(|&x| x >= 1 && k >= 2 * x + 1)
    } else {
        k % 2 == 0 && n.iter().all(|&x| k >= 2 * x)
    };
    if !ok {
        let rule = if eps { "K odd, K >= 2n_i + 1, n_i >= 1" } else { "K even, K >= 2n_i" };
        return Err(Error::Invalid(format!("orders {n:?} violate {rule}")));
    }
    let l12 = (n[0] + n[1] - n[2] - shift) / 2;
    let l13 = (n[0] + n[2] - n[1] - shift) / 2;
    let l23 = (n[1] + n[2] - n[0] - shift) / 2;
    Ok(ContractionPattern::a3(l12 as u32, l13 as u32, l23 as u32, eps))
}

/// 𝔞₃(U₁, U₂, U₃), with the ε marker (123) when `eps` is set.
pub fn a3_scalar<R: Ring>(u1: &SymTensor<R>, u2: &SymTensor<R>, u3: &SymTensor<R>, eps: bool) -> Result<R> {
    let pat = a3_pattern([u1.order(), u2.order(), u3.order()], eps)?;
    Ok(contract_network(&[u1, u2, u3], &pat.edges(), eps.then_some([0, 1, 2])))
}

/// 𝔞₄(U₁..U₄; pattern).
pub fn a4_scalar<R: Ring>(us: [&SymTensor<R>; 4], pattern: &ContractionPattern) -> Result<R> {
    pattern.check_orders(&us.iter().map(|u| u.order()).collect::<Vec<_>>())?;
    let eps = pattern.eps.map(|t| [t[0] as usize - 1, t[1] as usize - 1, t[2] as usize - 1]);
    Ok(contract_network(&us, &pattern.edges(), eps))
}

/// Evaluates a three- or four-tensor pattern.
pub fn network_scalar<R: Ring>(us: &[&SymTensor<R>], pattern: &ContractionPattern) -> Result<R> {
    pattern.check_orders(&us.iter().map(|u| u.order()).collect::<Vec<_>>())?;
    let eps = pattern.eps.map(|t| [t[0] as usize - 1, t[1] as usize - 1, t[2] as usize - 1]);
    Ok(contract_network(us, &pattern.edges(), eps))
}

/// Sorts slots by (id, order); returns the permutation (new slot i holds old
/// slot perm[i]) and the sign picked up by an ε pattern.
pub fn canonical_slots(keys: &[(usize, usize)], eps: bool) -> (Vec<usize>, i32) {
    let mut perm: Vec<usize> = (0..keys.len()).collect();
    perm.sort_by_key(|&i| (keys[i].0, keys[i].1, i));
    let mut sign = 1;
    if eps {
        let mut p = perm.clone();
        for i in 0..p.len() {
            while p[i] != i {
                let j = p[i];
                p.swap(i, j);
                sign = -sign;
            }
        }
    }
    (perm, sign)
}

/// Pattern entries after reordering the slots by `perm` (new i = old perm[i]).
pub fn permute_pattern(pattern: &ContractionPattern, perm: &[usize]) -> ContractionPattern {
    let n = pattern.arity();
    let mut inv = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let mut l = vec![0u32; pattern.l.len()];
    let fresh = ContractionPattern { l: vec![0; pattern.l.len()], eps: None };
    let slots: Vec<(usize, usize)> = fresh.edges().iter().map(|e| (e.0, e.1)).collect();
    for (a, b, x) in pattern.edges() {
        let (na, nb) = (inv[a].min(inv[b]), inv[a].max(inv[b]));
        let pos = slots.iter().position(|&s| s == (na, nb)).expect("edge slot");
        l[pos] = x;
    }
    let eps = pattern.eps.map(|t| {
        let mapped: Vec<u8> = t.iter().map(|&x| inv[x as usize - 1] as u8 + 1).collect();
        [mapped[0], mapped[1], mapped[2]]
    });
    ContractionPattern { l, eps }
}

/// Residual of the quartic trace identity for order-2 traceless
/// Q₁..Q₄: 2tr(Q₁Q₂Q₃Q₄ + Q₁Q₂Q₄Q₃ + Q₁Q₃Q₂Q₄) minus the trace-product sum.
pub fn lemma_trace_residual(q: [&SymTensor<Rational>; 4]) -> Rational {
    let m: Vec<[[Rational; 3]; 3]> =
        q.iter().map(|t| std::array::from_fn(|i| std::array::from_fn(|j| t.component(&[i, j])))).collect();
    let mul = |a: &[[Rational; 3]; 3], b: &[[Rational; 3]; 3]| -> [[Rational; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| &a[i][k] * &b[k][j]).sum()))
    };
    let tr = |a: &[[Rational; 3]; 3]| -> Rational { (0..3).map(|i| a[i][i].clone()).sum() };
    let chain = |i: usize, j: usize, k: usize, l: usize| tr(&mul(&mul(&m[i], &m[j]), &mul(&m[k], &m[l])));
    let lhs = (chain(0, 1, 2, 3) + chain(0, 1, 3, 2) + chain(0, 2, 1, 3)) * rint(2);
    let t2 = |i: usize, j: usize| tr(&mul(&m[i], &m[j]));
    let rhs = t2(0, 1) * t2(2, 3) + t2(0, 2) * t2(1, 3) + t2(0, 3) * t2(1, 2);
    lhs - rhs
}

/// Left side of the second lemma identity: Σ_cyc (p₁×p₂)⊗p₃ plus transposes.
pub fn lemma_cross_sum(p: [[Rational; 3]; 3]) -> [[Rational; 3]; 3] {
    let cross = |a: &[Rational; 3], b: &[Rational; 3]| -> [Rational; 3] {
        [&a[1] * &b[2] - &a[2] * &b[1], &a[2] * &b[0] - &a[0] * &b[2], &a[0] * &b[1] - &a[1] * &b[0]]
    };
    let mut out: [[Rational; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rint(0)));
    for (a, b, c) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
        let x = cross(&p[a], &p[b]);
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] += &x[i] * &p[c][j] + &p[c][i] * &x[j];
            }
        }
    }
    out
}

pub fn det3(p: &[[Rational; 3]; 3]) -> Rational {
    &p[0][0] * (&p[1][1] * &p[2][2] - &p[1][2] * &p[2][1]) - &p[0][1] * (&p[1][0] * &p[2][2] - &p[1][2] * &p[2][0])
        + &p[0][2] * (&p[1][0] * &p[2][1] - &p[1][1] * &p[2][0])
}

fn bump(base: &[u32; 6], plus: &[(usize, u32)]) -> [u32; 6] {
    let mut l = *base;
    for &(i, d) in plus {
        l[i] += d;
    }
    l
}

/// Residual lhs - rhs of the no-ε four-tensor relation around base counts.
/// Slot indices into l: 0=l12 1=l13 2=l14 3=l23 4=l24 5=l34.
pub fn relation_e1_residual<R: Ring>(us: [&SymTensor<R>; 4], base: &[u32; 6]) -> Result<R> {
    let a = |l: [u32; 6]| a4_scalar(us, &ContractionPattern::a4(l, None));
    let lhs = a(bump(base, &[(0, 1), (1, 1), (4, 1), (5, 1)]))?
        .plus(&a(bump(base, &[(0, 1), (2, 1), (3, 1), (5, 1)]))?)
        .plus(&a(bump(base, &[(1, 1), (2, 1), (3, 1), (4, 1)]))?)
        .scaled(&rint(2));
    let rhs = a(bump(base, &[(0, 2), (5, 2)]))?
        .plus(&a(bump(base, &[(1, 2), (4, 2)]))?)
        .plus(&a(bump(base, &[(2, 2), (3, 2)]))?);
    Ok(lhs.minus(&rhs))
}

/// Orders required by [`relation_e1_residual`] for the given base counts.
pub fn relation_e1_orders(base: &[u32; 6]) -> [usize; 4] {
    let n = ContractionPattern::a4(*base, None).orders();
    [n[0] + 2, n[1] + 2, n[2] + 2, n[3] + 2]
}

/// Residual of ε relation `which` (0..4) around base counts; should vanish.
/// Relation i carries the doubled extra index on tensor i.
pub fn relation_e2_residual<R: Ring>(us: [&SymTensor<R>; 4], base: &[u32; 6], which: usize) -> Result<R> {
    let a = |plus: &[(usize, u32)], t: [u8; 3]| a4_scalar(us, &ContractionPattern::a4(bump(base, plus), Some(t)));
    match which {
        0 => Ok(a(&[(2, 1)], [1, 2, 3])?.minus(&a(&[(1, 1)], [1, 2, 4])?).plus(&a(&[(0, 1)], [1, 3, 4])?)),
        1 => Ok(a(&[(4, 1)], [1, 2, 3])?.minus(&a(&[(3, 1)], [1, 2, 4])?).minus(&a(&[(0, 1)], [2, 3, 4])?)),
        2 => Ok(a(&[(5, 1)], [1, 2, 3])?.plus(&a(&[(3, 1)], [1, 3, 4])?).minus(&a(&[(1, 1)], [2, 3, 4])?)),
        3 => Ok(a(&[(5, 1)], [1, 2, 4])?.minus(&a(&[(4, 1)], [1, 3, 4])?).plus(&a(&[(2, 1)], [2, 3, 4])?)),
        _ => Err(Error::Invalid(format!("epsilon relation index {which} out of range"))),
    }
}

/// Orders required by [`relation_e2_residual`].
pub fn relation_e2_orders(base: &[u32; 6], which: usize) -> [usize; 4] {
    let n = ContractionPattern::a4(*base, None).orders();
    let mut out = [n[0] + 1, n[1] + 1, n[2] + 1, n[3] + 1];
    out[which] += 1;
    out
}

/// How a piece of [`decompose_general`] wires the free indices (0-based slots).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EpsWiring {
    /// ε_{j_a j_b ν} with ν contracted into the first slot of the tensor.
    Pair(usize, usize),
    /// ε_{j_a j_b j_c}.
    Triple(usize, usize, usize),
}

/// One term δ…δ [ε] U of the decomposition; remaining slots feed U in order.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompPiece {
    pub deltas: Vec<(usize, usize)>,
    pub eps: Option<EpsWiring>,
    pub tensor: SymTensor<Rational>,
}

pub const DECOMP_CAP: usize = 5;

fn matchings(slots: &[usize]) -> Vec<Vec<(usize, usize)>> {
    if slots.is_empty() {
        return vec![vec![]];
    }
    let first = slots[0];
    let mut out = Vec::new();
    for i in 1..slots.len() {
        let rest: Vec<usize> = slots[1..].iter().copied().filter(|&s| s != slots[i]).collect();
        for mut m in matchings(&rest) {
            m.insert(0, (first, slots[i]));
            out.push(m);
        }
    }
    out
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Candidate wirings in a fixed order: plain δ patterns by increasing s,
/// then ε-pair patterns, then ε-triple patterns.
fn wirings(r: usize) -> Vec<(Vec<(usize, usize)>, Option<EpsWiring>, usize)> {
    let mut out = Vec::new();
    for s in (0..=r).step_by(2) {
        for set in subsets(r, s) {
            for m in matchings(&set) {
                out.push((m, None, r - s));
            }
        }
    }
    for s in (2..=r).step_by(2) {
        for set in subsets(r, s) {
            for a in 0..set.len() {
                for b in a + 1..set.len() {
                    let rest: Vec<usize> = set.iter().copied().filter(|&x| x != set[a] && x != set[b]).collect();
                    for m in matchings(&rest) {
                        out.push((m, Some(EpsWiring::Pair(set[a], set[b])), r - s + 1));
                    }
                }
            }
        }
    }
    for s in (3..=r).step_by(2) {
        for set in subsets(r, s) {
            for tri in subsets(set.len(), 3) {
                let t: Vec<usize> = tri.iter().map(|&i| set[i]).collect();
                let rest: Vec<usize> = set.iter().copied().filter(|x| !t.contains(x)).collect();
                for m in matchings(&rest) {
                    out.push((m, Some(EpsWiring::Triple(t[0], t[1], t[2])), r - s));
                }
            }
        }
    }
    out
}

fn eps_val(a: usize, b: usize, c: usize) -> i64 {
    if a == b || b == c || a == c {
        0
    } else if (a + 1) % 3 == b && (b + 1) % 3 == c {
        1
    } else {
        -1
    }
}

fn realize_piece(r: usize, deltas: &[(usize, usize)], eps: &Option<EpsWiring>, u: &SymTensor<Rational>) -> Vec<Rational> {
    let used: BTreeSet<usize> = deltas
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .chain(match eps {
            Some(EpsWiring::Pair(a, b)) => vec![*a, *b],
            Some(EpsWiring::Triple(a, b, c)) => vec![*a, *b, *c],
            None => vec![],
        })
        .collect();
    let free: Vec<usize> = (0..r).filter(|s| !used.contains(s)).collect();
    let n = 3usize.pow(r as u32);
    let mut out = vec![rint(0); n];
    for (flat, slot) in out.iter_mut().enumerate() {
        let mut idx = vec![0usize; r];
        let mut f = flat;
        for s in (0..r).rev() {
            idx[s] = f % 3;
            f /= 3;
        }
        if deltas.iter().any(|&(a, b)| idx[a] != idx[b]) {
            continue;
        }
        let tail: Vec<usize> = free.iter().map(|&s| idx[s]).collect();
        *slot = match eps {
            None => u.component(&tail),
            Some(EpsWiring::Triple(a, b, c)) => u.component(&tail) * rint(eps_val(idx[*a], idx[*b], idx[*c])),
            Some(EpsWiring::Pair(a, b)) => {
                let mut acc = rint(0);
                for nu in 0..3 {
                    let e = eps_val(idx[*a], idx[*b], nu);
                    if e != 0 {
                        let mut full = vec![nu];
                        full.extend(&tail);
                        acc += u.component(&full) * rint(e);
                    }
                }
                acc
            }
        };
    }
    out
}

/// Writes a general tensor as Σ δ…δ [ε] U with U symmetric traceless.
///
/// Wirings are tried in a fixed order and kept greedily while independent,
/// so the result is reproducible but not canonical.
pub fn decompose_general(x: &DenseTensor<Rational>) -> Result<Vec<DecompPiece>> {
    let r = x.order;
    if r > DECOMP_CAP {
        return Err(Error::Cap(format!("decomposition order {r} exceeds {DECOMP_CAP}")));
    }
    let mut basis = IncrementalBasis::new(3usize.pow(r as u32));
    let mut kept: Vec<(usize, usize)> = Vec::new();
    let wires = wirings(r);
    'outer: for (w, (_, _, k)) in wires.iter().enumerate() {
        let bw = build_basis_w(*k)?;
        for j in 0..bw.len() {
            let (d, e, _) = &wires[w];
            if basis.try_add(&realize_piece(r, d, e, bw.get(j))) {
                kept.push((w, j));
                if basis.len() == 3usize.pow(r as u32) {
                    break 'outer;
                }
            }
        }
    }
    let coeffs = basis
        .express(&x.data)
        .ok_or_else(|| Error::Internal("decomposition generators do not span".into()))?;
    let mut pieces: Vec<(usize, SymTensor<Rational>)> = Vec::new();
    for ((w, j), c) in kept.iter().zip(coeffs) {
        if c == rint(0) {
            continue;
        }
        let t = build_basis_w(wires[*w].2)?.get(*j).scaled(&c);
        match pieces.iter_mut().find(|(pw, _)| pw == w) {
            Some((_, acc)) => acc.acc(&t),
            None => pieces.push((*w, t)),
        }
    }
    Ok(pieces
        .into_iter()
        .map(|(w, t)| DecompPiece { deltas: wires[w].0.clone(), eps: wires[w].1.clone(), tensor: t.with_traceless_flag(true) })
        .collect())
}

/// Rebuilds the dense tensor from decomposition pieces.
pub fn reconstruct(r: usize, pieces: &[DecompPiece]) -> DenseTensor<Rational> {
    let mut data = vec![rint(0); 3usize.pow(r as u32)];
    for p in pieces {
        for (d, v) in data.iter_mut().zip(realize_piece(r, &p.deltas, &p.eps, &p.tensor)) {
            *d += v;
        }
    }
    DenseTensor { order: r, data }
}

/// Dense contraction over labelled slots, like einsum: slots sharing a label
/// are summed unless the label appears in `out`.
pub fn einsum<R: Ring>(ops: &[(&DenseTensor<R>, Vec<usize>)], out: &[usize]) -> DenseTensor<R> {
    let mut labels: Vec<usize> = ops.iter().flat_map(|(_, l)| l.iter().copied()).collect();
    labels.sort_unstable();
    labels.dedup();
    let pos = |lab: usize| labels.iter().position(|&x| x == lab).expect("label");
    let mut res = DenseTensor::<R>::zero(out.len());
    let total = 3usize.pow(labels.len() as u32);
    let mut assign = vec![0usize; labels.len()];
    for mut f in 0..total {
        for a in assign.iter_mut().rev() {
            *a = f % 3;
            f /= 3;
        }
        let mut prod = R::one();
        for (t, ls) in ops {
            let idx: Vec<usize> = ls.iter().map(|&l| assign[pos(l)]).collect();
            prod = prod.times(t.get(&idx));
            if prod.is_zero() {
                break;
            }
        }
        if prod.is_zero() {
            continue;
        }
        let oidx: Vec<usize> = out.iter().map(|&l| assign[pos(l)]).collect();
        let cur = res.get(&oidx).plus(&prod);
        res.set(&oidx, cur);
    }
    res
}

/// Dense reference for [`pdot`].
pub fn dense_pdot<R: Ring>(u: &SymTensor<R>, v: &SymTensor<R>, p: usize) -> SymTensor<R> {
    let (r, m) = (u.order(), v.order());
    let lu: Vec<usize> = (0..r).collect();
    let lv: Vec<usize> = (0..p).chain(r..r + m - p).collect();
    let out: Vec<usize> = (p..r).chain(r..r + m - p).collect();
    einsum(&[(&u.to_dense(), lu), (&v.to_dense(), lv)], &out).symmetrize()
}

/// Dense reference for [`pcross`].
pub fn dense_pcross<R: Ring>(u: &SymTensor<R>, v: &SymTensor<R>, p: usize) -> SymTensor<R> {
    let (r, m) = (u.order(), v.order());
    let (z1, z2, nu) = (100, 101, 102);
    let lu: Vec<usize> = std::iter::once(z1).chain(0..r - 1).collect();
    let lv: Vec<usize> = std::iter::once(z2).chain(0..p).chain(r..r + m - 1 - p).collect();
    let out: Vec<usize> = std::iter::once(nu).chain(p..r - 1).chain(r..r + m - 1 - p).collect();
    einsum(&[(&DenseTensor::epsilon(), vec![z1, z2, nu]), (&u.to_dense(), lu), (&v.to_dense(), lv)], &out).symmetrize()
}

/// Dense reference for [`network_scalar`].
pub fn dense_network<R: Ring>(us: &[&SymTensor<R>], pattern: &ContractionPattern) -> R {
    let mut labels: Vec<Vec<usize>> = vec![Vec::new(); us.len()];
    let mut next = 0;
    let mut eps_labels = Vec::new();
    if let Some(t) = pattern.eps {
        for x in t {
            labels[x as usize - 1].push(next);
            eps_labels.push(next);
            next += 1;
        }
    }
    for (a, b, l) in pattern.edges() {
        for _ in 0..l {
            labels[a].push(next);
            labels[b].push(next);
            next += 1;
        }
    }
    let dense: Vec<DenseTensor<R>> = us.iter().map(|u| u.to_dense()).collect();
    let eps = DenseTensor::<R>::epsilon();
    let mut ops: Vec<(&DenseTensor<R>, Vec<usize>)> = dense.iter().zip(labels).collect();
    if pattern.eps.is_some() {
        ops.push((&eps, eps_labels));
    }
    einsum(&ops, &[]).data[0].clone()
}
