//! Exact Gram matrices of realized expansion terms.
//!
//! A realized term is a sum of pieces, each a multilinear map applied to one
//! symmetric traceless tensor per orientation variable. Full contractions of
//! two terms are invariant under a common left rotation of all variables, so
//! the first variable is pinned to the identity. What remains separates into
//! per-variable moment matrices ∫ c_κ(p) c'_κ'(p) dp of rotated monomial
//! coefficients, each obtained from the exact Haar integrator.
//!
//! [`gram_direct`] realizes everything as one polynomial in all variables
//! and integrates it; it is only practical for small orders and serves as
//! the cross-check.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::contract::{network_coefficients, pcross, pdot, traceless_pcross, traceless_pdot, ContractionPattern};
use crate::error::{Error, Result};
use crate::exactscalar::{rint, Rational, Ring};
use crate::linalg::rank_bareiss;
use crate::so3poly::{OrientPoly, DEGREE_CAP, MAX_VARS};
use crate::tensors::{num_monomials, SymTensor};

/// Multilinear map taking one tensor per variable to the term value.
#[derive(Clone, Debug, PartialEq)]
pub enum PieceMap {
    /// 𝔦^q (a ⋅ᵖ b), optionally traceless-completed before the 𝔦^q factor.
    Dot { p: usize, q: usize, traceless: bool },
    /// 𝔦^q (a ×ᵖ b), optionally traceless-completed.
    Cross { p: usize, q: usize, traceless: bool },
    /// Scalar network; slot i reads the tensor of variable `slot_var[i]`.
    Network { pattern: ContractionPattern, slot_var: Vec<usize> },
}

impl PieceMap {
    pub fn apply<R: Ring>(&self, args: &[&SymTensor<R>]) -> Result<SymTensor<R>> {
        match self {
            PieceMap::Dot { p, q, traceless } => {
                let t = if *traceless { traceless_pdot(args[0], args[1], *p)? } else { pdot(args[0], args[1], *p)? };
                Ok(t.iota_pow(*q))
            }
            PieceMap::Cross { p, q, traceless } => {
                let t =
                    if *traceless { traceless_pcross(args[0], args[1], *p)? } else { pcross(args[0], args[1], *p)? };
                Ok(t.iota_pow(*q))
            }
            PieceMap::Network { pattern, slot_var } => {
                let slots: Vec<&SymTensor<R>> = slot_var.iter().map(|&v| args[v]).collect();
                Ok(SymTensor::scalar(crate::contract::network_scalar(&slots, pattern)?))
            }
        }
    }

    pub fn nvars(&self) -> usize {
        match self {
            PieceMap::Dot { .. } | PieceMap::Cross { .. } => 2,
            PieceMap::Network { slot_var, .. } => slot_var.len(),
        }
    }
}

/// coef · map(tensors[0](p₁), tensors[1](p₂), …).
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub coef: Rational,
    pub tensors: Vec<SymTensor<Rational>>,
    pub map: PieceMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Realized {
    pub label: String,
    pub pieces: Vec<Piece>,
}

impl Realized {
    pub fn nvars(&self) -> usize {
        self.pieces.first().map_or(0, |p| p.tensors.len())
    }

    /// The term as a tensor of polynomials in the orientation variables 0..N.
    pub fn to_field(&self) -> Result<SymTensor<OrientPoly>> {
        let mut out: Option<SymTensor<OrientPoly>> = None;
        for pc in &self.pieces {
            let fields: Vec<SymTensor<OrientPoly>> =
                pc.tensors.iter().enumerate().map(|(v, t)| t.rotate_to_field(v as u8)).collect();
            let refs: Vec<&SymTensor<OrientPoly>> = fields.iter().collect();
            let val = pc.map.apply(&refs)?.scaled(&pc.coef);
            match &mut out {
                Some(o) => o.acc(&val),
                None => out = Some(val),
            }
        }
        out.ok_or_else(|| Error::Invalid(format!("term {} has no pieces", self.label)))
    }
}

/// Dense array over the monomials of the free variables, one entry per
/// multi-index, each a symmetric tensor of the output order.
#[derive(Clone, Debug)]
struct Features {
    dims: Vec<usize>,
    data: Vec<SymTensor<Rational>>,
}

fn flat_index(dims: &[usize], key: &[usize]) -> usize {
    key.iter().zip(dims).fold(0, |acc, (&k, &d)| acc * d + k)
}

fn unit(order: usize, idx: usize) -> SymTensor<Rational> {
    let mut c = vec![rint(0); num_monomials(order)];
    c[idx] = rint(1);
    SymTensor::from_coeffs(order, c)
}

fn piece_features(pc: &Piece) -> Result<Features> {
    let orders: Vec<usize> = pc.tensors.iter().map(|t| t.order()).collect();
    let dims: Vec<usize> = orders[1..].iter().map(|&n| num_monomials(n)).collect();
    let size: usize = dims.iter().product();
    match &pc.map {
        PieceMap::Network { pattern, slot_var } => {
            let ts: Vec<Option<&SymTensor<Rational>>> =
                slot_var.iter().map(|&v| if v == 0 { Some(&pc.tensors[0]) } else { None }).collect();
            let slot_orders: Vec<usize> = slot_var.iter().map(|&v| orders[v]).collect();
            pattern.check_orders(&slot_orders)?;
            let eps = pattern.eps.map(|t| [t[0] as usize - 1, t[1] as usize - 1, t[2] as usize - 1]);
            let coeffs = network_coefficients(&ts, &slot_orders, &pattern.edges(), eps);
            // Free slots come back in slot order; reorder them by variable.
            let free_vars: Vec<usize> = slot_var.iter().copied().filter(|&v| v != 0).collect();
            let mut data = vec![SymTensor::zero(0); size];
            for (key, v) in coeffs {
                let mut by_var = vec![0usize; dims.len()];
                for (k, &var) in key.iter().zip(&free_vars) {
                    by_var[var - 1] = *k;
                }
                data[flat_index(&dims, &by_var)] = SymTensor::scalar(v * &pc.coef);
            }
            Ok(Features { dims, data })
        }
        _ => {
            if orders.len() != 2 {
                return Err(Error::Invalid("pair maps need exactly two variables".into()));
            }
            let data = (0..dims[0])
                .map(|i| Ok(pc.map.apply(&[&pc.tensors[0], &unit(orders[1], i)])?.scaled(&pc.coef)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Features { dims, data })
        }
    }
}

/// Pieces sharing the same tensors on every variable are summed first.
fn merged_features(term: &Realized) -> Result<Vec<(Vec<SymTensor<Rational>>, Features)>> {
    let mut out: Vec<(Vec<SymTensor<Rational>>, Features)> = Vec::new();
    for pc in &term.pieces {
        let f = piece_features(pc)?;
        match out.iter_mut().find(|(ts, _)| ts == &pc.tensors) {
            Some((_, acc)) => {
                for (a, b) in acc.data.iter_mut().zip(&f.data) {
                    if a.order() == b.order() {
                        a.acc(b);
                    } else if a.is_zero() {
                        *a = b.clone();
                    } else if !b.is_zero() {
                        return Err(Error::Internal("mixed output orders within a term".into()));
                    }
                }
            }
            None => out.push((pc.tensors.clone(), f)),
        }
    }
    Ok(out)
}

type MomentKey = (usize, Vec<Rational>, usize, Vec<Rational>);

fn moment_cache() -> &'static Mutex<HashMap<MomentKey, Arc<Vec<Vec<Rational>>>>> {
    static CACHE: OnceLock<Mutex<HashMap<MomentKey, Arc<Vec<Vec<Rational>>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// M[κ][κ'] = ∫ c_κ(p) c'_κ'(p) dp for the rotated coefficients of `a` and `b`.
pub fn moment_matrix(a: &SymTensor<Rational>, b: &SymTensor<Rational>) -> Result<Arc<Vec<Vec<Rational>>>> {
    let key = (a.order(), a.coeffs().to_vec(), b.order(), b.coeffs().to_vec());
    if let Some(m) = moment_cache().lock().expect("moment cache").get(&key) {
        return Ok(m.clone());
    }
    if (a.order() + b.order()) as u32 > DEGREE_CAP {
        return Err(Error::Cap(format!(
            "moment of orders {} and {} exceeds degree cap {DEGREE_CAP}",
            a.order(),
            b.order()
        )));
    }
    let (fa, fb) = (a.rotate_to_field(0), b.rotate_to_field(0));
    let m: Vec<Vec<Rational>> = fa
        .coeffs()
        .par_iter()
        .map(|x| fb.coeffs().iter().map(|y| x.times(y).haar_integral_all()).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let m = Arc::new(m);
    moment_cache().lock().expect("moment cache").insert(key, m.clone());
    Ok(m)
}

/// Applies the moment matrix of each free variable to `f` along its axis.
fn transform(
    f: &Features,
    left: &[SymTensor<Rational>],
    right: &[SymTensor<Rational>],
) -> Result<Option<Features>> {
    let mut cur = f.clone();
    for axis in 0..f.dims.len() {
        let m = moment_matrix(&left[axis + 1], &right[axis + 1])?;
        if m.iter().all(|row| row.iter().all(|x| *x == rint(0))) {
            return Ok(None);
        }
        let mut dims = cur.dims.clone();
        dims[axis] = m.len();
        let inner: usize = cur.dims[axis + 1..].iter().product();
        let outer: usize = cur.dims[..axis].iter().product();
        let size: usize = dims.iter().product();
        let mut data = vec![SymTensor::zero(0); size];
        for o in 0..outer {
            for i in 0..dims[axis] {
                for t in 0..inner {
                    let mut acc: Option<SymTensor<Rational>> = None;
                    for (j, mij) in m[i].iter().enumerate() {
                        if *mij == rint(0) {
                            continue;
                        }
                        let src = &cur.data[(o * cur.dims[axis] + j) * inner + t];
                        if src.is_zero() {
                            continue;
                        }
                        let v = src.scaled(mij);
                        match &mut acc {
                            Some(a) => a.acc(&v),
                            None => acc = Some(v),
                        }
                    }
                    if let Some(a) = acc {
                        data[(o * dims[axis] + i) * inner + t] = a;
                    }
                }
            }
        }
        cur = Features { dims, data };
    }
    Ok(Some(cur))
}

fn pair_inner(a: &[(Vec<SymTensor<Rational>>, Features)], b: &[(Vec<SymTensor<Rational>>, Features)]) -> Result<Rational> {
    let mut total = rint(0);
    for (ta, fa) in a {
        for (tb, fb) in b {
            let Some(g) = transform(fb, ta, tb)? else { continue };
            for (x, y) in fa.data.iter().zip(&g.data) {
                if x.is_zero() || y.is_zero() {
                    continue;
                }
                if x.order() != y.order() {
                    return Err(Error::Invalid("terms in one Gram matrix must share the output order".into()));
                }
                total += x.dot(y);
            }
        }
    }
    Ok(total)
}

fn check_shape(terms: &[Realized]) -> Result<usize> {
    let n = terms.first().map_or(0, |t| t.nvars());
    if n > MAX_VARS {
        return Err(Error::Cap(format!("{n} orientation variables exceed {MAX_VARS}")));
    }
    for t in terms {
        for pc in &t.pieces {
            if pc.tensors.len() != n || pc.map.nvars() != n {
                return Err(Error::Invalid(format!("term {} mixes variable counts", t.label)));
            }
        }
    }
    Ok(n)
}

/// Exact Gram matrix by the pinned, per-variable factorization.
pub fn gram_factored(terms: &[Realized]) -> Result<Vec<Vec<Rational>>> {
    check_shape(terms)?;
    let feats: Vec<_> = terms.par_iter().map(merged_features).collect::<Result<Vec<_>>>()?;
    let n = terms.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let vals: Vec<Rational> =
        pairs.par_iter().map(|&(i, j)| pair_inner(&feats[i], &feats[j])).collect::<Result<Vec<_>>>()?;
    let mut g = vec![vec![rint(0); n]; n];
    for (&(i, j), v) in pairs.iter().zip(vals) {
        g[i][j] = v.clone();
        g[j][i] = v;
    }
    Ok(g)
}

/// Exact Gram matrix by integrating the fully realized polynomials.
pub fn gram_direct(terms: &[Realized]) -> Result<Vec<Vec<Rational>>> {
    check_shape(terms)?;
    let fields: Vec<SymTensor<OrientPoly>> = terms.par_iter().map(|t| t.to_field()).collect::<Result<Vec<_>>>()?;
    let n = terms.len();
    let mut g = vec![vec![rint(0); n]; n];
    for i in 0..n {
        for j in i..n {
            let v = fields[i].dot(&fields[j]).haar_integral_all()?;
            g[i][j] = v.clone();
            g[j][i] = v;
        }
    }
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum GramMethod {
    #[default]
    Factored,
    Direct,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramCertificate {
    pub labels: Vec<String>,
    pub gram: Vec<Vec<Rational>>,
    pub rank: usize,
    pub expected: usize,
}

impl GramCertificate {
    pub fn passed(&self) -> bool {
        self.rank == self.expected
    }

    pub fn is_diagonal(&self) -> bool {
        self.gram.iter().enumerate().all(|(i, row)| row.iter().enumerate().all(|(j, x)| i == j || *x == rint(0)))
    }

    pub fn positive_diagonal(&self) -> bool {
        self.gram.iter().enumerate().all(|(i, row)| row[i] > rint(0))
    }
}

pub fn gram(terms: &[Realized], method: GramMethod) -> Result<Vec<Vec<Rational>>> {
    match method {
        GramMethod::Factored => gram_factored(terms),
        GramMethod::Direct => gram_direct(terms),
    }
}

/// Gram rank against the number of terms; passes iff they are independent.
pub fn certify(terms: &[Realized], method: GramMethod) -> Result<GramCertificate> {
    let g = gram(terms, method)?;
    Ok(GramCertificate {
        labels: terms.iter().map(|t| t.label.clone()).collect(),
        rank: rank_bareiss(&g),
        expected: terms.len(),
        gram: g,
    })
}

/// Rank of the Gram matrix of `terms`.
pub fn gram_rank(terms: &[Realized]) -> Result<usize> {
    Ok(rank_bareiss(&gram_factored(terms)?))
}
