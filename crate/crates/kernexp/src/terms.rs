//! Expansion terms of the two-, three- and four-molecule moment tensors, the
//! selection rules that keep a linearly independent subset, and their
//! realization for Gram certification.

use serde::{Deserialize, Serialize};

use crate::contract::ContractionPattern;
use crate::error::{Error, Result};
use crate::exactscalar::{rint, Rational};
use crate::gram::{certify, GramCertificate, GramMethod, Piece, PieceMap, Realized};
use crate::tensors::{build_basis_w, SymTensor, BASIS_CAP};

pub const MAX_GRADIENT: usize = 4;

/// A tensor slot: element `index` of the order-`order` list of a catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TensorRef {
    pub order: usize,
    pub index: usize,
}

impl TensorRef {
    pub fn new(order: usize, index: usize) -> Self {
        TensorRef { order, index }
    }
}

impl std::fmt::Display for TensorRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "W{}_{}", self.order, self.index + 1)
    }
}

/// Symmetric traceless tensors grouped by order.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorCatalog {
    pub by_order: Vec<Vec<SymTensor<Rational>>>,
}

impl TensorCatalog {
    /// The orthogonal bases 𝕎⁰..𝕎ⁿ.
    pub fn basis(n: usize) -> Result<Self> {
        let by_order = (0..=n).map(|k| Ok(build_basis_w(k)?.tensors.clone())).collect::<Result<Vec<_>>>()?;
        Ok(TensorCatalog { by_order })
    }

    pub fn max_order(&self) -> usize {
        self.by_order.len().saturating_sub(1)
    }

    pub fn get(&self, r: TensorRef) -> Result<&SymTensor<Rational>> {
        self.by_order
            .get(r.order)
            .and_then(|v| v.get(r.index))
            .ok_or_else(|| Error::Invalid(format!("no tensor {r} in catalog")))
    }

    /// Every reference up to order `n`, ordered by (order, index).
    pub fn refs(&self, n: usize) -> Vec<TensorRef> {
        let mut out = Vec::new();
        for (order, list) in self.by_order.iter().enumerate().take(n + 1) {
            out.extend((0..list.len()).map(|index| TensorRef { order, index }));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dot,
    Cross,
}

/// 𝔦^q U(𝔭₁) ⋅ᵖ V(𝔭₂) or its ε analogue, optionally symmetrized in the
/// labels with the given swap sign.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct M2Term {
    pub k: usize,
    pub q: usize,
    pub p: usize,
    pub kind: Family,
    pub u: TensorRef,
    pub v: TensorRef,
    /// +1 or -1 for a member of the set of that swap parity, 0 for the plain
    /// unsymmetrized form.
    pub swap_sign: i8,
    pub orthogonalized: bool,
}

/// Gradient order of a dot or cross term with the given slots.
pub fn m2_gradient(kind: Family, r: usize, m: usize, p: usize, q: usize) -> Option<usize> {
    match kind {
        Family::Dot => (p <= r.min(m)).then(|| 2 * q + r + m - 2 * p),
        Family::Cross => (p < r.min(m)).then(|| 2 * q + r + m - 2 * p - 1),
    }
}

/// (p, q) pairs realizing gradient order k for slot orders (r, m).
pub fn m2_pq(kind: Family, k: usize, r: usize, m: usize) -> Vec<(usize, usize)> {
    let pmax = match kind {
        Family::Dot => r.min(m) as i64,
        Family::Cross => r.min(m) as i64 - 1,
    };
    (0..=pmax.max(-1))
        .filter_map(|p| {
            let p = p as usize;
            let base = match kind {
                Family::Dot => r + m - 2 * p,
                Family::Cross => r + m - 2 * p - 1,
            };
            (k >= base && (k - base) % 2 == 0).then(|| (p, (k - base) / 2))
        })
        .collect()
}

impl M2Term {
    pub fn map(&self) -> PieceMap {
        match self.kind {
            Family::Dot => PieceMap::Dot { p: self.p, q: self.q, traceless: self.orthogonalized },
            Family::Cross => PieceMap::Cross { p: self.p, q: self.q, traceless: self.orthogonalized },
        }
    }

    /// Sign of the swapped piece V(𝔭₁)·U(𝔭₂).
    pub fn partner_sign(&self) -> i64 {
        let s = self.swap_sign as i64;
        match self.kind {
            Family::Dot => s,
            Family::Cross => -s,
        }
    }

    pub fn label(&self) -> String {
        self.label_with(&self.u.to_string(), &self.v.to_string())
    }

    /// Label with the slot tensors written as `nu` and `nv`.
    pub fn label_with(&self, nu: &str, nv: &str) -> String {
        let op = match self.kind {
            Family::Dot => "·",
            Family::Cross => "×",
        };
        let iq = match self.q {
            0 => String::new(),
            1 => "i ".into(),
            q => format!("i^{q} "),
        };
        let wrap = |x: &str| if x.contains(' ') { format!("[{x}]") } else { x.to_string() };
        let body = |a: &str, b: &str| format!("{}(p1) {op}{} {}(p2)", wrap(a), self.p, wrap(b));
        let core = if self.swap_sign == 0 {
            body(nu, nv)
        } else {
            let sign = if self.partner_sign() > 0 { "+" } else { "-" };
            format!("{} {sign} {}", body(nu, nv), body(nv, nu))
        };
        if self.orthogonalized {
            format!("{iq}({core})_0")
        } else if iq.is_empty() {
            core
        } else {
            format!("{iq}({core})")
        }
    }

    pub fn realize(&self, cat: &TensorCatalog) -> Result<Realized> {
        let (u, v) = (cat.get(self.u)?.clone(), cat.get(self.v)?.clone());
        let map = self.map();
        let mut pieces = vec![Piece { coef: rint(1), tensors: vec![u.clone(), v.clone()], map: map.clone() }];
        if self.swap_sign != 0 {
            pieces.push(Piece { coef: rint(self.partner_sign()), tensors: vec![v, u], map });
        }
        Ok(Realized { label: self.label(), pieces })
    }
}

fn check_gradient(k: usize) -> Result<()> {
    if k > MAX_GRADIENT {
        return Err(Error::Cap(format!("gradient order {k} exceeds {MAX_GRADIENT}")));
    }
    Ok(())
}

/// Expected size of [`enum_m2_fixed`]: (2m+1)(k+1)(k+2)/2.
pub fn m2_count_formula(k: usize, m: usize) -> usize {
    (2 * m + 1) * (k + 1) * (k + 2) / 2
}

/// The unsymmetrized terms 𝔦^q U(𝔭₁) ⋅ᵖ V(𝔭₂) and 𝔦^q U(𝔭₁) ×ᵖ V(𝔭₂) with V
/// fixed and U over the bases of every admissible order.
pub fn enum_m2_fixed(k: usize, v: TensorRef) -> Result<Vec<M2Term>> {
    check_gradient(k)?;
    let m = v.order;
    if m + k > BASIS_CAP {
        return Err(Error::Cap(format!("order {} exceeds basis cap {BASIS_CAP}", m + k)));
    }
    let mut out = Vec::new();
    for r in m.saturating_sub(k)..=m + k {
        for kind in [Family::Dot, Family::Cross] {
            for (p, q) in m2_pq(kind, k, r, m) {
                for index in 0..2 * r + 1 {
                    out.push(M2Term {
                        k,
                        q,
                        p,
                        kind,
                        u: TensorRef { order: r, index },
                        v,
                        swap_sign: 0,
                        orthogonalized: false,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// The set of label-symmetrized terms with swap parity `sign`, all slot
/// orders ≤ n, drawn from `cat`.
pub fn enum_m2_set_in(cat: &TensorCatalog, k: usize, n: usize, sign: i8) -> Result<Vec<M2Term>> {
    check_gradient(k)?;
    if sign != 1 && sign != -1 {
        return Err(Error::Invalid(format!("swap sign must be +1 or -1, got {sign}")));
    }
    if n > cat.max_order() {
        return Err(Error::Cap(format!("order {n} exceeds catalog order {}", cat.max_order())));
    }
    let refs = cat.refs(n);
    let mut out = Vec::new();
    for (a, &u) in refs.iter().enumerate() {
        for &v in &refs[a..] {
            for kind in [Family::Dot, Family::Cross] {
                // Dot pairs with a minus sign and cross pairs with a plus sign
                // vanish when U = V; the other two survive with U = V.
                let partner = match kind {
                    Family::Dot => sign,
                    Family::Cross => -sign,
                };
                if u == v && partner < 0 {
                    continue;
                }
                for (p, q) in m2_pq(kind, k, u.order, v.order) {
                    out.push(M2Term { k, q, p, kind, u, v, swap_sign: sign, orthogonalized: false });
                }
            }
        }
    }
    out.sort_by_key(|t| (t.u.order, t.v.order, t.kind, t.p, t.q, t.u.index, t.v.index));
    Ok(out)
}

pub fn enum_m2_set(k: usize, n: usize, sign: i8) -> Result<Vec<M2Term>> {
    enum_m2_set_in(&TensorCatalog::basis(n)?, k, n, sign)
}

/// Terms compatible with the label swap of the pair kernel: parity (-1)^k.
pub fn enum_m2(k: usize, n: usize) -> Result<Vec<M2Term>> {
    enum_m2_set(k, n, if k % 2 == 0 { 1 } else { -1 })
}

/// Orthogonal basis: traceless completions of the terms of [`enum_m2`].
pub fn orth_basis_m2(k: usize, n: usize) -> Result<Vec<M2Term>> {
    Ok(enum_m2(k, n)?
        .into_iter()
        .map(|t| M2Term { orthogonalized: true, ..t })
        .collect())
}

/// One row of the pair-term catalog written relative to the top order n.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct M2Template {
    pub kind: Family,
    pub q: usize,
    /// n - r, n - m, n - p
    pub dr: usize,
    pub dm: usize,
    pub dp: usize,
}

/// Rows M₂⁰..M₂⁴ of the term catalog, as (kind, q, n-r, n-m, n-p).
pub fn m2_templates(k: usize) -> Vec<M2Template> {
    let t = |kind, q, dr, dm, dp| M2Template { kind, q, dr, dm, dp };
    use Family::{Cross as C, Dot as D};
    match k {
        0 => vec![t(D, 0, 0, 0, 0)],
        1 => vec![t(D, 0, 1, 0, 1), t(C, 0, 0, 0, 1)],
        2 => vec![t(D, 1, 0, 0, 0), t(D, 0, 0, 0, 1), t(D, 0, 2, 0, 2), t(C, 0, 0, 1, 2)],
        3 => vec![
            t(D, 1, 1, 0, 1),
            t(C, 1, 0, 0, 1),
            t(D, 0, 1, 0, 2),
            t(C, 0, 0, 0, 2),
            t(D, 0, 3, 0, 3),
            t(C, 0, 2, 0, 3),
        ],
        4 => vec![
            t(D, 2, 0, 0, 0),
            t(D, 1, 0, 0, 1),
            t(D, 0, 0, 0, 2),
            t(D, 1, 2, 0, 2),
            t(D, 0, 2, 0, 3),
            t(C, 1, 1, 0, 2),
            t(C, 0, 0, 1, 3),
            t(C, 0, 3, 0, 4),
            t(D, 0, 4, 0, 4),
        ],
        _ => Vec::new(),
    }
}

// ---------------------------------------------------------------- M3

/// 𝔞₃ term over three catalog tensors.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct A3Term {
    pub refs: [TensorRef; 3],
    pub pattern: ContractionPattern,
    pub symmetrized: bool,
}


fn all_perms(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_perms(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Σ_σ of the network with slot i evaluated at variable σ(i).
pub fn symmetrized_network(label: String, tensors: &[&SymTensor<Rational>], pattern: &ContractionPattern) -> Realized {
    let pieces = all_perms(tensors.len())
        .into_iter()
        .map(|sigma| {
            let mut by_var = vec![tensors[0].clone(); tensors.len()];
            for (slot, &var) in sigma.iter().enumerate() {
                by_var[var] = tensors[slot].clone();
            }
            Piece { coef: rint(1), tensors: by_var, map: PieceMap::Network { pattern: pattern.clone(), slot_var: sigma } }
        })
        .collect();
    Realized { label, pieces }
}

/// The network with slot i at variable i.
pub fn plain_network(label: String, tensors: &[&SymTensor<Rational>], pattern: &ContractionPattern) -> Realized {
    Realized {
        label,
        pieces: vec![Piece {
            coef: rint(1),
            tensors: tensors.iter().map(|t| (*t).clone()).collect(),
            map: PieceMap::Network { pattern: pattern.clone(), slot_var: (0..tensors.len()).collect() },
        }],
    }
}

impl A3Term {
    pub fn label(&self) -> String {
        self.label_with(&self.refs.map(|r| r.to_string()))
    }

    pub fn label_with(&self, names: &[String; 3]) -> String {
        let sum = if self.symmetrized { "Σσ " } else { "" };
        format!("{sum}a3({}; {})", names.join(", "), self.pattern)
    }

    pub fn realize(&self, cat: &TensorCatalog) -> Result<Realized> {
        let ts = [cat.get(self.refs[0])?, cat.get(self.refs[1])?, cat.get(self.refs[2])?];
        Ok(if self.symmetrized {
            symmetrized_network(self.label(), &ts, &self.pattern)
        } else {
            plain_network(self.label(), &ts, &self.pattern)
        })
    }
}

/// U₁ over every admissible order and basis element with U₂, U₃ fixed,
/// unsymmetrized; (2n₂+1)(2n₃+1) terms.
pub fn enum_m3_fixed(u2: TensorRef, u3: TensorRef) -> Result<Vec<A3Term>> {
    let (n2, n3) = (u2.order, u3.order);
    if n2 + n3 > BASIS_CAP {
        return Err(Error::Cap(format!("order {} exceeds basis cap {BASIS_CAP}", n2 + n3)));
    }
    let mut out = Vec::new();
    for n1 in n2.abs_diff(n3)..=n2 + n3 {
        let eps = (n1 + n2 + n3) % 2 == 1;
        let pattern = crate::contract::a3_pattern([n1, n2, n3], eps)?;
        for index in 0..2 * n1 + 1 {
            out.push(A3Term { refs: [TensorRef::new(n1, index), u2, u3], pattern: pattern.clone(), symmetrized: false });
        }
    }
    Ok(out)
}

/// Label-symmetrized 𝔞₃ terms over unordered triples from `cat` with orders
/// ≤ n; ε terms with a repeated tensor vanish and are dropped.
pub fn enum_m3_in(cat: &TensorCatalog, n: usize) -> Result<Vec<A3Term>> {
    if n > cat.max_order() {
        return Err(Error::Cap(format!("order {n} exceeds catalog order {}", cat.max_order())));
    }
    let refs = cat.refs(n);
    let mut out = Vec::new();
    for a in 0..refs.len() {
        for b in a..refs.len() {
            for c in b..refs.len() {
                let tri = [refs[a], refs[b], refs[c]];
                let orders = [tri[0].order, tri[1].order, tri[2].order];
                let eps = orders.iter().sum::<usize>() % 2 == 1;
                if eps && (a == b || b == c) {
                    continue;
                }
                if let Ok(pattern) = crate::contract::a3_pattern(orders, eps) {
                    out.push(A3Term { refs: tri, pattern, symmetrized: true });
                }
            }
        }
    }
    Ok(out)
}

pub fn enum_m3(n: usize) -> Result<Vec<A3Term>> {
    enum_m3_in(&TensorCatalog::basis(n)?, n)
}

// ---------------------------------------------------------------- M4

/// How the four slot tensors coincide after canonical arrangement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EqualityCase {
    AllDistinct,
    /// U₁ = U₂, possibly also U₃ = U₄.
    Pair,
    /// U₁ = U₂ = U₃, possibly all four.
    Triple,
}

/// Sorts a multiset of four references into the arrangement the selection
/// rules assume: repeated tensors first.
pub fn arrange_m4(refs: [TensorRef; 4]) -> ([TensorRef; 4], EqualityCase) {
    let mut groups: Vec<(TensorRef, usize)> = Vec::new();
    let mut sorted = refs;
    sorted.sort();
    for r in sorted {
        match groups.last_mut() {
            Some((g, c)) if *g == r => *c += 1,
            _ => groups.push((r, 1)),
        }
    }
    groups.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out = Vec::new();
    for (r, c) in &groups {
        out.extend(std::iter::repeat(*r).take(*c));
    }
    let case = match groups[0].1 {
        1 => EqualityCase::AllDistinct,
        2 => EqualityCase::Pair,
        _ => EqualityCase::Triple,
    };
    ([out[0], out[1], out[2], out[3]], case)
}

pub const EPS_TRIPLES: [[u8; 3]; 4] = [[1, 2, 3], [1, 2, 4], [1, 3, 4], [2, 3, 4]];

/// Every pattern consistent with the orders, with or without ε.
pub fn all_m4_patterns(n: [usize; 4], eps: bool) -> Vec<ContractionPattern> {
    let triples: Vec<Option<[u8; 3]>> = if eps { EPS_TRIPLES.iter().map(|t| Some(*t)).collect() } else { vec![None] };
    let mut out = Vec::new();
    for t in triples {
        let mut m = n.map(|x| x as i64);
        if let Some(t) = t {
            for x in t {
                m[x as usize - 1] -= 1;
            }
        }
        if m.iter().any(|&x| x < 0) {
            continue;
        }
        for l12 in 0..=m[0] {
            for l13 in 0..=m[0] - l12 {
                let l14 = m[0] - l12 - l13;
                for l23 in 0..=(m[1] - l12).max(-1) {
                    let l24 = m[1] - l12 - l23;
                    let l34 = m[2] - l13 - l23;
                    if l24 < 0 || l34 < 0 || l14 + l24 + l34 != m[3] {
                        continue;
                    }
                    let l = [l12, l13, l14, l23, l24, l34].map(|x| x as u32);
                    out.push(ContractionPattern::a4(l, t));
                }
            }
        }
    }
    out
}

fn is_eps(p: &ContractionPattern, t: [u8; 3]) -> bool {
    p.eps == Some(t)
}

/// Applies the selection rules to the arranged orders.
pub fn m4_selected(n: [usize; 4], case: EqualityCase, eps: bool) -> Vec<ContractionPattern> {
    let d = n[0] as i64 + n[1] as i64 - n[2] as i64 - n[3] as i64;
    all_m4_patterns(n, eps)
        .into_iter()
        .filter(|pat| {
            let [l12, l13, l14, l23, l24, l34] = [0, 1, 2, 3, 4, 5].map(|i| pat.l[i]);
            match (case, eps) {
                (EqualityCase::AllDistinct, false) => (d > 0 || l12 <= 1) && (d < 0 || l34 <= 1),
                (EqualityCase::AllDistinct, true) => {
                    if d >= 1 {
                        (is_eps(pat, [1, 2, 3]) || is_eps(pat, [1, 2, 4])) && l34 == 0
                    } else {
                        (is_eps(pat, [1, 3, 4]) || is_eps(pat, [2, 3, 4])) && l12 == 0
                    }
                }
                (EqualityCase::Pair, false) => (d > 0 || l12 <= 1) && (d < 0 || l34 <= 1) && l13 <= l23,
                (EqualityCase::Pair, true) => {
                    if d >= 1 {
                        (is_eps(pat, [1, 2, 3]) || is_eps(pat, [1, 2, 4])) && l34 == 0 && l13 < l23
                    } else {
                        is_eps(pat, [1, 3, 4]) && l12 == 0
                    }
                }
                (EqualityCase::Triple, false) => l12 == l13 && l13 <= l23,
                (EqualityCase::Triple, true) => {
                    is_eps(pat, [1, 2, 4])
                        && if d <= -1 { l12 == l13 && l13 < l23 } else { l34 == l24 && l24 < l14 }
                }
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct A4Term {
    pub refs: [TensorRef; 4],
    pub pattern: ContractionPattern,
    pub symmetrized: bool,
}

impl A4Term {
    pub fn label(&self) -> String {
        self.label_with(&self.refs.map(|r| r.to_string()))
    }

    pub fn label_with(&self, names: &[String; 4]) -> String {
        let sum = if self.symmetrized { "Σσ " } else { "" };
        format!("{sum}a4({}; {})", names.join(", "), self.pattern)
    }

    pub fn realize(&self, cat: &TensorCatalog) -> Result<Realized> {
        let ts = [cat.get(self.refs[0])?, cat.get(self.refs[1])?, cat.get(self.refs[2])?, cat.get(self.refs[3])?];
        Ok(if self.symmetrized {
            symmetrized_network(self.label(), &ts, &self.pattern)
        } else {
            plain_network(self.label(), &ts, &self.pattern)
        })
    }
}

/// Retained terms for one multiset of four references.
pub fn m4_terms_for(refs: [TensorRef; 4]) -> Vec<A4Term> {
    let (arr, case) = arrange_m4(refs);
    let n = arr.map(|r| r.order);
    let k: usize = n.iter().sum();
    let eps = k % 2 == 1;
    m4_selected(n, case, eps)
        .into_iter()
        .map(|pattern| A4Term { refs: arr, pattern, symmetrized: true })
        .collect()
}

/// Label-symmetrized 𝔞₄ terms over all multisets of four references with
/// orders ≤ n, after the selection rules.
pub fn enum_m4_in(cat: &TensorCatalog, n: usize) -> Result<Vec<A4Term>> {
    if n > cat.max_order() {
        return Err(Error::Cap(format!("order {n} exceeds catalog order {}", cat.max_order())));
    }
    let refs = cat.refs(n);
    let mut out = Vec::new();
    for a in 0..refs.len() {
        for b in a..refs.len() {
            for c in b..refs.len() {
                for d in c..refs.len() {
                    out.extend(m4_terms_for([refs[a], refs[b], refs[c], refs[d]]));
                }
            }
        }
    }
    Ok(out)
}

pub fn enum_m4(n: usize) -> Result<Vec<A4Term>> {
    enum_m4_in(&TensorCatalog::basis(n)?, n)
}

/// ψ(d₁,d₂,d₃) = 𝔞₄(U₁,U₁,U₁,U₄; l) for orders (n₁,n₁,n₁,n₄), or None when
/// the counts are infeasible.
pub fn psi_pattern(n1: usize, n4: usize, dd: [u32; 3]) -> Option<ContractionPattern> {
    if (3 * n1 + n4) % 2 == 1 {
        return None;
    }
    let l = if n1 <= n4 {
        let h = ((n4 - n1) / 2) as u32;
        [dd[0], dd[1], dd[2] + h, dd[2], dd[1] + h, dd[0] + h]
    } else {
        let h = ((n1 - n4) / 2) as u32;
        [dd[0] + h, dd[1] + h, dd[2], dd[2] + h, dd[1], dd[0]]
    };
    let p = ContractionPattern::a4(l, None);
    (p.orders() == vec![n1, n1, n1, n4]).then_some(p)
}

/// φ(d₁,d₂,d₃) = 𝔞₄(U₁,U₁,U₁,U₄; l, (124)).
pub fn phi_pattern(n1: usize, n4: usize, dd: [u32; 3]) -> Option<ContractionPattern> {
    if (3 * n1 + n4) % 2 == 0 || n1 == n4 {
        return None;
    }
    let l = if n1 < n4 {
        let h = ((n4 - n1 - 1) / 2) as u32;
        [dd[0], dd[1], dd[2] + h, dd[2], dd[1] + h, dd[0] + 1 + h]
    } else {
        let h = ((n1 - n4 + 1) / 2) as u32;
        if dd[0] + h == 0 {
            return None;
        }
        [dd[0] + h - 1, dd[1] + h, dd[2], dd[2] + h, dd[1], dd[0]]
    };
    let p = ContractionPattern::a4(l, Some([1, 2, 4]));
    (p.orders() == vec![n1, n1, n1, n4]).then_some(p)
}

/// d for the ψ family: min((3n₁ - n₄)/2, n₄).
pub fn psi_level(n1: usize, n4: usize) -> Option<usize> {
    let t = (3 * n1).checked_sub(n4)?;
    (t % 2 == 0).then(|| (t / 2).min(n4))
}

/// d for the φ family: min(n₄ - 1, (3n₁ - n₄ - 1)/2).
pub fn phi_level(n1: usize, n4: usize) -> Option<usize> {
    let t = (3 * n1).checked_sub(n4 + 1)?;
    (t % 2 == 0 && n4 >= 1).then(|| (t / 2).min(n4 - 1))
}

/// All compositions (d₁,d₂,d₃) of d.
pub fn compositions3(d: usize) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for a in 0..=d {
        for b in 0..=d - a {
            out.push([a as u32, b as u32, (d - a - b) as u32]);
        }
    }
    out
}

/// Number of independent ψ terms at level d: #{i : 3i ≤ d}.
pub fn psi_expected(d: usize) -> usize {
    d / 3 + 1
}

/// Number of independent φ terms at level d: #{i : 3i < d}.
pub fn phi_expected(d: usize) -> usize {
    d.div_ceil(3)
}

/// Symmetrized ψ or φ family realized with concrete tensors.
pub fn triple_family(
    u1: &SymTensor<Rational>,
    u4: &SymTensor<Rational>,
    eps: bool,
) -> Result<Vec<([u32; 3], Realized)>> {
    let (n1, n4) = (u1.order(), u4.order());
    let d = if eps { phi_level(n1, n4) } else { psi_level(n1, n4) }
        .ok_or_else(|| Error::Invalid(format!("no triple family for orders ({n1},{n4})")))?;
    let mut out = Vec::new();
    for dd in compositions3(d) {
        let pat = if eps { phi_pattern(n1, n4, dd) } else { psi_pattern(n1, n4, dd) };
        if let Some(pat) = pat {
            let name = if eps { "phi" } else { "psi" };
            let label = format!("{name}({},{},{})", dd[0], dd[1], dd[2]);
            out.push((dd, symmetrized_network(label, &[u1, u1, u1, u4], &pat)));
        }
    }
    Ok(out)
}

/// Gram certificate of a list of pair terms over a catalog.
pub fn certify_m2(terms: &[M2Term], cat: &TensorCatalog, method: GramMethod) -> Result<GramCertificate> {
    let r = terms.iter().map(|t| t.realize(cat)).collect::<Result<Vec<_>>>()?;
    certify(&r, method)
}

pub fn certify_a3(terms: &[A3Term], cat: &TensorCatalog, method: GramMethod) -> Result<GramCertificate> {
    let r = terms.iter().map(|t| t.realize(cat)).collect::<Result<Vec<_>>>()?;
    certify(&r, method)
}

pub fn certify_a4(terms: &[A4Term], cat: &TensorCatalog, method: GramMethod) -> Result<GramCertificate> {
    let r = terms.iter().map(|t| t.realize(cat)).collect::<Result<Vec<_>>>()?;
    certify(&r, method)
}

/// (rank of retained, rank of retained ∪ excluded) for one multiset.
pub fn m4_augmented_ranks(refs: [TensorRef; 4], cat: &TensorCatalog) -> Result<(usize, usize, usize)> {
    let (arr, case) = arrange_m4(refs);
    let n = arr.map(|r| r.order);
    let eps = n.iter().sum::<usize>() % 2 == 1;
    let kept = m4_selected(n, case, eps);
    let all = all_m4_patterns(n, eps);
    let mk = |p: &ContractionPattern| A4Term { refs: arr, pattern: p.clone(), symmetrized: true }.realize(cat);
    let kept_r = kept.iter().map(mk).collect::<Result<Vec<_>>>()?;
    let all_r = all.iter().map(mk).collect::<Result<Vec<_>>>()?;
    let r1 = crate::gram::gram_rank(&kept_r)?;
    let r2 = crate::gram::gram_rank(&all_r)?;
    Ok((kept.len(), r1, r2))
}
