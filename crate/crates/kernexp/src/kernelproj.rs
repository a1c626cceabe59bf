//! Numeric moments M₂ᵏ of sampled pair kernels and their projection onto the
//! orthogonal pair-term basis.
//!
//! Orientation integrals use Gauss–Legendre nodes in cos α with uniform β and
//! γ. For kernels that are invariant under a global rotation of positions and
//! both orientations, the double orientation integral collapses onto the
//! relative orientation with 𝔭₁ fixed at the identity.

use std::cell::RefCell;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactscalar::{ratio_to_f64, Rational};
use crate::gram::PieceMap;
use crate::so3poly::{euler_matrix, Mat3, OrientPoly};
use crate::tensors::{build_basis_w, inv_multinomial, mono_index, monomials, multinomial, num_monomials, pair_w};
use crate::terms::{enum_m2_set, M2Term, TensorCatalog, MAX_GRADIENT};

/// Largest truncation order accepted by [`project`].
pub const MAX_PROJECT_ORDER: usize = 6;
/// Coefficient disagreement between a grid and its coarsening that flags
/// under-resolution.
pub const RESOLUTION_TOL: f64 = 1e-4;

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    }
    (x, w)
}

type Evaluator = dyn Fn(&[f64; 3], &Mat3, &Mat3) -> f64 + Send + Sync;

/// A pair kernel G(r, 𝔭₁, 𝔭₂) supported on |r| ≤ radius.
#[derive(Clone)]
pub struct PairKernel {
    pub name: String,
    eval: Arc<Evaluator>,
    pub radius: f64,
    /// Orientational polynomial degree per variable, if known.
    pub bandwidth: Option<usize>,
    /// G(Rr, R𝔭₁, R𝔭₂) = G(r, 𝔭₁, 𝔭₂) for every rotation R.
    pub frame_invariant: bool,
    /// The evaluator must not be called concurrently.
    pub serial: bool,
}

impl std::fmt::Debug for PairKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PairKernel")
            .field("name", &self.name)
            .field("radius", &self.radius)
            .field("bandwidth", &self.bandwidth)
            .field("frame_invariant", &self.frame_invariant)
            .field("serial", &self.serial)
            .finish()
    }
}

impl PairKernel {
    pub fn new(
        name: impl Into<String>,
        radius: f64,
        eval: impl Fn(&[f64; 3], &Mat3, &Mat3) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PairKernel {
            name: name.into(),
            eval: Arc::new(eval),
            radius,
            bandwidth: None,
            frame_invariant: false,
            serial: false,
        }
    }

    pub fn with_bandwidth(mut self, b: usize) -> Self {
        self.bandwidth = Some(b);
        self
    }

    pub fn frame_invariant(mut self, yes: bool) -> Self {
        self.frame_invariant = yes;
        self
    }

    pub fn serial(mut self, yes: bool) -> Self {
        self.serial = yes;
        self
    }

    pub fn eval(&self, r: &[f64; 3], p1: &Mat3, p2: &Mat3) -> f64 {
        (self.eval)(r, p1, p2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub n_alpha: usize,
    pub n_beta: usize,
    pub n_gamma: usize,
    pub n_radial: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        QuadratureGrid { n_alpha: 24, n_beta: 48, n_gamma: 48, n_radial: 16, n_theta: 6, n_phi: 12 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OrientationNode {
    pub p: Mat3,
    pub weight: f64,
}

impl QuadratureGrid {
    pub fn orientation(n_alpha: usize, n_beta: usize, n_gamma: usize) -> Self {
        QuadratureGrid { n_alpha, n_beta, n_gamma, ..Default::default() }
    }

    /// Every count doubled.
    pub fn refined(&self) -> Self {
        self.scaled(2, 1)
    }

    /// Every count scaled by 3/4, rounding up, and at least one smaller
    /// where that is possible.
    pub fn coarsened(&self) -> Self {
        let s = self.scaled(3, 4);
        let f = |c: usize, x: usize| if x > 1 { c.min(x - 1) } else { 1 };
        QuadratureGrid {
            n_alpha: f(s.n_alpha, self.n_alpha),
            n_beta: f(s.n_beta, self.n_beta),
            n_gamma: f(s.n_gamma, self.n_gamma),
            n_radial: f(s.n_radial, self.n_radial),
            n_theta: f(s.n_theta, self.n_theta),
            n_phi: f(s.n_phi, self.n_phi),
        }
    }

    fn scaled(&self, num: usize, den: usize) -> Self {
        let f = |x: usize| (x * num).div_ceil(den).max(1);
        QuadratureGrid {
            n_alpha: f(self.n_alpha),
            n_beta: f(self.n_beta),
            n_gamma: f(self.n_gamma),
            n_radial: f(self.n_radial),
            n_theta: f(self.n_theta),
            n_phi: f(self.n_phi),
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.n_alpha, self.n_beta, self.n_gamma, self.n_radial, self.n_theta, self.n_phi];
        if all.contains(&0) {
            return Err(Error::Invalid(format!("grid counts must be positive, got {self:?}")));
        }
        Ok(())
    }

    /// Nodes and weights for the normalized Haar measure.
    pub fn orientation_nodes(&self) -> Vec<OrientationNode> {
        let (u, wu) = gauss_legendre(self.n_alpha);
        let two_pi = 2.0 * std::f64::consts::PI;
        let w0 = 1.0 / (2.0 * (self.n_beta * self.n_gamma) as f64);
        let mut out = Vec::with_capacity(self.n_alpha * self.n_beta * self.n_gamma);
        for (x, w) in u.iter().zip(&wu) {
            let alpha = x.acos();
            for ib in 0..self.n_beta {
                let beta = two_pi * ib as f64 / self.n_beta as f64;
                for ig in 0..self.n_gamma {
                    let gamma = two_pi * ig as f64 / self.n_gamma as f64;
                    out.push(OrientationNode { p: euler_matrix(alpha, beta, gamma), weight: w * w0 });
                }
            }
        }
        out
    }

    /// Nodes for ∫_{|r|≤R} d³r.
    pub fn position_nodes(&self, radius: f64) -> Vec<([f64; 3], f64)> {
        let (xr, wr) = gauss_legendre(self.n_radial);
        let (xt, wt) = gauss_legendre(self.n_theta);
        let dphi = 2.0 * std::f64::consts::PI / self.n_phi as f64;
        let mut out = Vec::with_capacity(self.n_radial * self.n_theta * self.n_phi);
        for (x, w) in xr.iter().zip(&wr) {
            let rho = 0.5 * radius * (x + 1.0);
            let wrho = 0.5 * radius * w * rho * rho;
            for (c, wc) in xt.iter().zip(&wt) {
                let s = (1.0 - c * c).sqrt();
                for ip in 0..self.n_phi {
                    let phi = dphi * ip as f64;
                    out.push(([rho * s * phi.cos(), rho * s * phi.sin(), rho * c], wrho * wc * dphi));
                }
            }
        }
        out
    }
}

fn transpose(a: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[j][i]))
}

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|l| a[i][l] * b[l][j]).sum()))
}

/// Rotation angle of 𝔭₁ᵀ𝔭₂.
pub fn rotation_distance(p1: &Mat3, p2: &Mat3) -> f64 {
    let tr: f64 = (0..3).map(|i| (0..3).map(|l| p1[l][i] * p2[l][i]).sum::<f64>()).sum();
    ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

// ---------------------------------------------------------------------------
// Fast numeric evaluation of pair terms

fn poly_mul(a: &[f64], da: usize, b: &[f64], db: usize) -> Vec<f64> {
    let mut out = vec![0.0; num_monomials(da + db)];
    for (ia, ma) in monomials(da).iter().enumerate() {
        if a[ia] == 0.0 {
            continue;
        }
        for (ib, mb) in monomials(db).iter().enumerate() {
            out[mono_index([ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2]])] += a[ia] * b[ib];
        }
    }
    out
}

/// Coordinates of rotated W-basis tensors in the W basis, per order.
#[derive(Clone, Debug)]
struct WCoords {
    /// Per order m: row-major (2m+1)² matrix, entry [j][i] = coordinate j of W_i(𝔭).
    mats: Vec<Vec<f64>>,
    identity: bool,
}

/// Exact W-basis data converted for numeric use.
#[derive(Clone, Debug)]
struct WTables {
    /// coefficients of W^m_i, per order: [i][κ]
    coeffs: Vec<Vec<Vec<f64>>>,
    /// W^m_j / (multinomial(κ) ‖W^m_j‖²), the dual rows: [j][κ]
    duals: Vec<Vec<Vec<f64>>>,
}

impl WTables {
    fn new(n: usize) -> Result<Self> {
        let mut coeffs = Vec::new();
        let mut duals = Vec::new();
        for m in 0..=n {
            let b = build_basis_w(m)?;
            let mut cs = Vec::new();
            let mut ds = Vec::new();
            for t in &b.tensors {
                let n2 = t.norm2();
                cs.push(t.coeffs().iter().map(ratio_to_f64).collect());
                ds.push(
                    t.coeffs()
                        .iter()
                        .enumerate()
                        .map(|(i, c)| ratio_to_f64(&(c * inv_multinomial(m, i) / &n2)))
                        .collect(),
                );
            }
            coeffs.push(cs);
            duals.push(ds);
        }
        Ok(WTables { coeffs, duals })
    }

    fn max_order(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn coords(&self, p: &Mat3) -> WCoords {
        let n = self.max_order();
        if *p == IDENTITY {
            return WCoords { mats: Vec::new(), identity: true };
        }
        // Linear forms l_j = Σ_i p_ij x_i and their powers.
        let lin: Vec<Vec<f64>> = (0..3).map(|j| (0..3).map(|i| p[i][j]).collect()).collect();
        let pows: Vec<Vec<Vec<f64>>> = lin
            .iter()
            .map(|l| {
                let mut v = vec![vec![1.0]];
                for e in 1..=n {
                    let next = poly_mul(&v[e - 1], e - 1, l, 1);
                    v.push(next);
                }
                v
            })
            .collect();
        let mut mats = Vec::with_capacity(n + 1);
        for m in 0..=n {
            let nm = num_monomials(m);
            // Column κ: image of x^κ.
            let images: Vec<Vec<f64>> = monomials(m)
                .iter()
                .map(|k| {
                    let (a, b, c) = (k[0] as usize, k[1] as usize, k[2] as usize);
                    let ab = poly_mul(&pows[0][a], a, &pows[1][b], b);
                    poly_mul(&ab, a + b, &pows[2][c], c)
                })
                .collect();
            let d = 2 * m + 1;
            let mut mat = vec![0.0; d * d];
            for (i, wi) in self.coeffs[m].iter().enumerate() {
                let mut rot = vec![0.0; nm];
                for (kappa, c) in wi.iter().enumerate() {
                    if *c != 0.0 {
                        for (o, x) in rot.iter_mut().zip(&images[kappa]) {
                            *o += c * x;
                        }
                    }
                }
                for (j, dual) in self.duals[m].iter().enumerate() {
                    mat[j * d + i] = dual.iter().zip(&rot).map(|(a, b)| a * b).sum();
                }
            }
            mats.push(mat);
        }
        WCoords { mats, identity: false }
    }
}

impl WCoords {
    fn get(&self, m: usize, j: usize, i: usize) -> f64 {
        if self.identity {
            return if i == j { 1.0 } else { 0.0 };
        }
        self.mats[m][j * (2 * m + 1) + i]
    }
}

#[derive(Clone, Debug)]
struct BankPiece {
    x: (usize, usize),
    y: (usize, usize),
    table: usize,
    coef: f64,
}

#[derive(Clone, Debug)]
struct BankTerm {
    label: String,
    max_order: usize,
    orders: (usize, usize),
    pieces: Vec<BankPiece>,
}

/// Pair terms over the W catalog, evaluated numerically through bilinear
/// tables map(W_i, W_j).
#[derive(Clone, Debug)]
struct TermBank {
    k: usize,
    w: WTables,
    /// (map, a, b) and the table [i][j] -> output coefficients
    tables: Vec<((PieceMap, usize, usize), Vec<Vec<Vec<f64>>>)>,
    terms: Vec<BankTerm>,
}

impl TermBank {
    fn new(k: usize, n: usize, terms: &[M2Term]) -> Result<Self> {
        let cat = TensorCatalog::basis(n)?;
        let w = WTables::new(n)?;
        let mut tables: Vec<((PieceMap, usize, usize), Vec<Vec<Vec<f64>>>)> = Vec::new();
        let mut out = Vec::new();
        for t in terms {
            let map = t.map();
            let mut pieces = Vec::new();
            let mut parts = vec![(t.u, t.v, 1.0)];
            if t.swap_sign != 0 {
                parts.push((t.v, t.u, t.partner_sign() as f64));
            }
            for (x, y, coef) in parts {
                let key = (map.clone(), x.order, y.order);
                let table = match tables.iter().position(|(kk, _)| *kk == key) {
                    Some(i) => i,
                    None => {
                        let mut tab = Vec::new();
                        for wi in &cat.by_order[x.order] {
                            let mut row = Vec::new();
                            for wj in &cat.by_order[y.order] {
                                let v = map.apply(&[wi, wj])?;
                                if v.order() != k {
                                    return Err(Error::Internal(format!("term {} has order {}", t.label(), v.order())));
                                }
                                row.push(v.coeffs().iter().map(ratio_to_f64).collect::<Vec<f64>>());
                            }
                            tab.push(row);
                        }
                        tables.push((key, tab));
                        tables.len() - 1
                    }
                };
                pieces.push(BankPiece { x: (x.order, x.index), y: (y.order, y.index), table, coef });
            }
            out.push(BankTerm {
                label: t.label(),
                max_order: t.u.order.max(t.v.order),
                orders: (t.u.order, t.v.order),
                pieces,
            });
        }
        Ok(TermBank { k, w, tables, terms: out })
    }

    fn eval_all(&self, c1: &WCoords, c2: &WCoords) -> Vec<Vec<f64>> {
        let nk = num_monomials(self.k);
        self.terms
            .iter()
            .map(|t| {
                let mut out = vec![0.0; nk];
                for pc in &t.pieces {
                    let tab = &self.tables[pc.table].1;
                    let (a, x) = pc.x;
                    let (b, y) = pc.y;
                    for i in 0..2 * a + 1 {
                        let di = c1.get(a, i, x);
                        if di == 0.0 {
                            continue;
                        }
                        for j in 0..2 * b + 1 {
                            let s = pc.coef * di * c2.get(b, j, y);
                            if s == 0.0 {
                                continue;
                            }
                            for (o, v) in out.iter_mut().zip(&tab[i][j]) {
                                *o += s * v;
                            }
                        }
                    }
                }
                out
            })
            .collect()
    }
}

fn inv_mult_f64(k: usize) -> Vec<f64> {
    (0..num_monomials(k)).map(|i| ratio_to_f64(inv_multinomial(k, i))).collect()
}

fn frob(a: &[f64], b: &[f64], im: &[f64]) -> f64 {
    a.iter().zip(b).zip(im).map(|((x, y), w)| x * y * w).sum()
}

// ---------------------------------------------------------------------------
// Moments

/// Orientation pairs with weights for the double Haar integral.
#[derive(Clone, Debug)]
pub struct PairNodes {
    pub p1: Vec<Mat3>,
    pub p2: Vec<Mat3>,
    pub weight: Vec<f64>,
}

impl PairNodes {
    pub fn for_kernel(kernel: &PairKernel, grid: &QuadratureGrid) -> Self {
        let nodes = grid.orientation_nodes();
        if kernel.frame_invariant {
            PairNodes {
                p1: vec![IDENTITY; nodes.len()],
                p2: nodes.iter().map(|n| n.p).collect(),
                weight: nodes.iter().map(|n| n.weight).collect(),
            }
        } else {
            let mut out = PairNodes { p1: Vec::new(), p2: Vec::new(), weight: Vec::new() };
            for a in &nodes {
                for b in &nodes {
                    out.p1.push(a.p);
                    out.p2.push(b.p);
                    out.weight.push(a.weight * b.weight);
                }
            }
            out
        }
    }

    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }
}

/// Position nodes with multinomial(κ) r^κ precomputed for the order-k moment.
struct MomentRule {
    k: usize,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    powers: Vec<Vec<f64>>,
}

impl MomentRule {
    fn new(k: usize, radius: f64, grid: &QuadratureGrid) -> Self {
        let nodes = grid.position_nodes(radius);
        let mult: Vec<f64> = monomials(k).iter().map(|m| multinomial(*m).to_string().parse::<f64>().unwrap()).collect();
        let powers = nodes
            .iter()
            .map(|(r, _)| {
                monomials(k)
                    .iter()
                    .zip(&mult)
                    .map(|(m, c)| c * r[0].powi(m[0] as i32) * r[1].powi(m[1] as i32) * r[2].powi(m[2] as i32))
                    .collect()
            })
            .collect();
        MomentRule {
            k,
            points: nodes.iter().map(|n| n.0).collect(),
            weights: nodes.iter().map(|n| n.1).collect(),
            powers,
        }
    }

    fn moment(&self, kernel: &PairKernel, p1: &Mat3, p2: &Mat3) -> Result<Vec<f64>> {
        let mut out = vec![0.0; num_monomials(self.k)];
        for ((r, w), pw) in self.points.iter().zip(&self.weights).zip(&self.powers) {
            let g = kernel.eval(r, p1, p2);
            if !g.is_finite() {
                return Err(Error::Invalid(format!("kernel {} is not finite at r = {r:?}", kernel.name)));
            }
            let s = w * g;
            for (o, x) in out.iter_mut().zip(pw) {
                *o += s * x;
            }
        }
        Ok(out)
    }
}

fn check_k(k: usize) -> Result<()> {
    if k > MAX_GRADIENT {
        return Err(Error::Cap(format!("gradient order {k} exceeds {MAX_GRADIENT}")));
    }
    Ok(())
}

/// M₂ᵏ(𝔭₁, 𝔭₂) = ∫ G(r, 𝔭₁, 𝔭₂) r^{⊗k} d³r at one orientation pair.
pub fn moment_at(
    kernel: &PairKernel,
    k: usize,
    grid: &QuadratureGrid,
    p1: &Mat3,
    p2: &Mat3,
) -> Result<crate::SymTensor<f64>> {
    check_k(k)?;
    grid.validate()?;
    let rule = MomentRule::new(k, kernel.radius, grid);
    Ok(crate::SymTensor::from_coeffs(k, rule.moment(kernel, p1, p2)?))
}

/// M₂ᵏ sampled on the orientation-pair nodes of `grid`.
#[derive(Clone, Debug)]
pub struct MomentSamples {
    pub k: usize,
    pub nodes: PairNodes,
    /// Polynomial coefficients of M₂ᵏ at each node.
    pub values: Vec<Vec<f64>>,
    pub evaluations: u64,
}

impl MomentSamples {
    pub fn tensor(&self, i: usize) -> crate::SymTensor<f64> {
        crate::SymTensor::from_coeffs(self.k, self.values[i].clone())
    }

    /// ∫∫ |M₂ᵏ|² over both orientations.
    pub fn norm2(&self) -> f64 {
        let im = inv_mult_f64(self.k);
        self.values.iter().zip(&self.nodes.weight).map(|(v, w)| w * frob(v, v, &im)).sum()
    }
}

pub fn moment_m2(kernel: &PairKernel, k: usize, grid: &QuadratureGrid) -> Result<MomentSamples> {
    check_k(k)?;
    grid.validate()?;
    let rule = MomentRule::new(k, kernel.radius, grid);
    let nodes = PairNodes::for_kernel(kernel, grid);
    let idx: Vec<usize> = (0..nodes.len()).collect();
    let f = |&i: &usize| rule.moment(kernel, &nodes.p1[i], &nodes.p2[i]);
    let values: Vec<Vec<f64>> = if kernel.serial {
        idx.iter().map(f).collect::<Result<_>>()?
    } else {
        idx.par_iter().map(f).collect::<Result<_>>()?
    };
    let evaluations = (nodes.len() * rule.points.len()) as u64;
    Ok(MomentSamples { k, nodes, values, evaluations })
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
    let u: f64 = rng.gen_range(-1.0..1.0);
    let b: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    let g: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    euler_matrix(u.acos(), b, g)
}

/// Largest |G(−r, 𝔭₂, 𝔭₁) − G(r, 𝔭₁, 𝔭₂)| over random samples.
pub fn swap_symmetry_defect(kernel: &PairKernel, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let r: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0) * kernel.radius / 3f64.sqrt());
        let (p1, p2) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let a = kernel.eval(&r, &p1, &p2);
        let b = kernel.eval(&r.map(|x| -x), &p2, &p1);
        worst = worst.max((a - b).abs());
    }
    worst
}

/// Largest deviation of M₂ᵏ(𝔭₂, 𝔭₁) from (−1)ᵏ M₂ᵏ(𝔭₁, 𝔭₂) over random pairs.
pub fn moment_swap_defect(kernel: &PairKernel, k: usize, grid: &QuadratureGrid, samples: usize, seed: u64) -> Result<f64> {
    check_k(k)?;
    let rule = MomentRule::new(k, kernel.radius, grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (p1, p2) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let a = rule.moment(kernel, &p1, &p2)?;
        let b = rule.moment(kernel, &p2, &p1)?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((y - sign * x).abs());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Projection

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub label: String,
    pub u_order: usize,
    pub v_order: usize,
    pub coefficient: f64,
    /// ‖A‖ over both orientations.
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    /// Truncation order n': terms with slot orders ≤ n'.
    pub order: usize,
    pub residual: f64,
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub kernel: String,
    pub k: usize,
    pub n: usize,
    pub grid: QuadratureGrid,
    pub frame_invariant: bool,
    pub moment_norm: f64,
    pub coefficients: Vec<CoefficientEntry>,
    pub residuals: Vec<ResidualEntry>,
    /// Largest coefficient on the terms of the opposite swap parity.
    pub opposite_parity_max: f64,
    /// Largest coefficient change against the coarsened grid.
    pub refinement_delta: Option<f64>,
    pub kernel_evaluations: u64,
    #[serde(skip)]
    pub runtime: Duration,
}

impl CoefficientReport {
    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.coefficients.iter().find(|c| c.label == label).map(|c| c.coefficient)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.coefficients.iter().map(|c| c.coefficient.abs()).fold(0.0, f64::max)
    }
}

/// The orthogonal basis terms with swap parity `sign`.
fn orth_terms(k: usize, n: usize, sign: i8) -> Result<Vec<M2Term>> {
    Ok(enum_m2_set(k, n, sign)?.into_iter().map(|t| M2Term { orthogonalized: true, ..t }).collect())
}

fn coordinates(bank: &TermBank, nodes: &PairNodes) -> Vec<(WCoords, WCoords)> {
    (0..nodes.len())
        .into_par_iter()
        .map(|i| (bank.w.coords(&nodes.p1[i]), bank.w.coords(&nodes.p2[i])))
        .collect()
}

/// (⟨M, A⟩, ‖A‖²) per term.
fn inner_products(bank: &TermBank, samples: &MomentSamples, coords: &[(WCoords, WCoords)]) -> Vec<(f64, f64)> {
    let im = inv_mult_f64(bank.k);
    let zero = vec![(0.0, 0.0); bank.terms.len()];
    (0..coords.len())
        .into_par_iter()
        .fold(
            || zero.clone(),
            |mut acc, i| {
                let w = samples.nodes.weight[i];
                let vals = bank.eval_all(&coords[i].0, &coords[i].1);
                for (a, v) in acc.iter_mut().zip(&vals) {
                    a.0 += w * frob(&samples.values[i], v, &im);
                    a.1 += w * frob(v, v, &im);
                }
                acc
            },
        )
        .reduce(
            || zero.clone(),
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                a
            },
        )
}

/// Projects precomputed moments onto the orthogonal basis up to order n.
pub fn project_samples(
    samples: &MomentSamples,
    n: usize,
) -> Result<(Vec<CoefficientEntry>, Vec<ResidualEntry>, f64)> {
    let k = samples.k;
    let sign = if k % 2 == 0 { 1 } else { -1 };
    let bank = TermBank::new(k, n, &orth_terms(k, n, sign)?)?;
    let coords = coordinates(&bank, &samples.nodes);
    let ip = inner_products(&bank, samples, &coords);
    let mut entries = Vec::with_capacity(bank.terms.len());
    for (t, (num, den)) in bank.terms.iter().zip(&ip) {
        if *den <= 0.0 {
            return Err(Error::UnderResolved(format!("term {} has zero norm on this grid", t.label)));
        }
        entries.push(CoefficientEntry {
            label: t.label.clone(),
            u_order: t.orders.0,
            v_order: t.orders.1,
            coefficient: num / den,
            norm: den.sqrt(),
        });
    }

    // Residual of the truncation at every n' ≤ n.
    let im = inv_mult_f64(k);
    let coefs: Vec<f64> = entries.iter().map(|e| e.coefficient).collect();
    let res2 = (0..coords.len())
        .into_par_iter()
        .fold(
            || vec![0.0; n + 1],
            |mut acc, i| {
                let w = samples.nodes.weight[i];
                let vals = bank.eval_all(&coords[i].0, &coords[i].1);
                let mut r = samples.values[i].clone();
                for (level, slot) in acc.iter_mut().enumerate() {
                    for ((t, v), c) in bank.terms.iter().zip(&vals).zip(&coefs) {
                        if t.max_order == level {
                            for (x, y) in r.iter_mut().zip(v) {
                                *x -= c * y;
                            }
                        }
                    }
                    *slot += w * frob(&r, &r, &im);
                }
                acc
            },
        )
        .reduce(
            || vec![0.0; n + 1],
            |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        );
    let mnorm = samples.norm2().max(0.0).sqrt();
    let residuals = res2
        .iter()
        .enumerate()
        .map(|(order, r2)| {
            let residual = r2.max(0.0).sqrt();
            ResidualEntry { order, residual, relative: if mnorm > 0.0 { residual / mnorm } else { 0.0 } }
        })
        .collect();

    let opp = TermBank::new(k, n, &orth_terms(k, n, -sign)?)?;
    let opposite = if opp.terms.is_empty() {
        0.0
    } else {
        inner_products(&opp, samples, &coords)
            .iter()
            .map(|(a, b)| if *b > 0.0 { (a / b).abs() } else { 0.0 })
            .fold(0.0, f64::max)
    };
    Ok((entries, residuals, opposite))
}

fn check_request(k: usize, n: usize) -> Result<()> {
    check_k(k)?;
    if n > MAX_PROJECT_ORDER {
        return Err(Error::Cap(format!("truncation order {n} exceeds {MAX_PROJECT_ORDER}")));
    }
    if n <= k {
        return Err(Error::Invalid(format!("projection needs n > k, got n = {n}, k = {k}")));
    }
    Ok(())
}

/// Projection on one grid without the coarsening check.
pub fn project_unchecked(kernel: &PairKernel, k: usize, n: usize, grid: &QuadratureGrid) -> Result<CoefficientReport> {
    check_request(k, n)?;
    let start = Instant::now();
    let samples = moment_m2(kernel, k, grid)?;
    let (coefficients, residuals, opposite_parity_max) = project_samples(&samples, n)?;
    Ok(CoefficientReport {
        kernel: kernel.name.clone(),
        k,
        n,
        grid: *grid,
        frame_invariant: kernel.frame_invariant,
        moment_norm: samples.norm2().max(0.0).sqrt(),
        coefficients,
        residuals,
        opposite_parity_max,
        refinement_delta: None,
        kernel_evaluations: samples.evaluations,
        runtime: start.elapsed(),
    })
}

/// Coefficients ⟨M₂ᵏ, A⟩/‖A‖² on the orthogonal basis with slot orders ≤ n,
/// cross-checked against the coarsened grid.
pub fn project(kernel: &PairKernel, k: usize, n: usize, grid: &QuadratureGrid) -> Result<CoefficientReport> {
    let start = Instant::now();
    let mut report = project_unchecked(kernel, k, n, grid)?;
    let coarse = project_unchecked(kernel, k, n, &grid.coarsened())?;
    let delta = report
        .coefficients
        .iter()
        .zip(&coarse.coefficients)
        .map(|(a, b)| (a.coefficient - b.coefficient).abs())
        .fold(0.0, f64::max);
    if delta > RESOLUTION_TOL {
        return Err(Error::UnderResolved(format!(
            "coefficients move by {delta:.3e} between {:?} and its coarsening; refine the grid (e.g. double every count)",
            grid
        )));
    }
    report.refinement_delta = Some(delta);
    report.kernel_evaluations += coarse.kernel_evaluations;
    report.runtime = start.elapsed();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Quadrature checks

/// Numeric and exact Haar integrals of w²₁₁(𝔭)².
pub fn quadrature_sanity(grid: &QuadratureGrid) -> Result<(f64, f64)> {
    let w = pair_w(2, 1, 1)?;
    let f = crate::Ring::times(&w, &w);
    let exact = ratio_to_f64(&f.haar_integral_all()?);
    Ok((integrate_orientation(&f, grid)?, exact))
}

/// ∫ f(𝔭) d𝔭 for a polynomial in variable 0, on the orientation grid.
pub fn integrate_orientation(f: &OrientPoly, grid: &QuadratureGrid) -> Result<f64> {
    grid.orientation_nodes().iter().map(|n| Ok(n.weight * f.eval_numeric(&[(0, n.p)])?)).sum()
}

/// Largest error of the orientation grid on random monomials of the
/// rotation entries with degree ≤ `degree`.
pub fn certify_orientation_grid(grid: &QuadratureGrid, degree: usize, probes: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = grid.orientation_nodes();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let d = rng.gen_range(0..=degree);
        let mut f = OrientPoly::constant(Rational::from_integer(1.into()));
        for _ in 0..d {
            let (i, j) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
            f = crate::Ring::times(&f, &OrientPoly::entry(0, i, j));
        }
        let exact = ratio_to_f64(&f.haar_integral_all()?);
        let num: f64 = nodes.iter().map(|n| Ok(n.weight * f.eval_numeric(&[(0, n.p)])?)).sum::<Result<f64>>()?;
        worst = worst.max((exact - num).abs());
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Built-in kernels

pub const BUILTIN_KERNELS: [&str; 3] = ["isotropic-gaussian", "planted-bandlimited", "rotation-distance-gaussian"];

/// (1 − ρ²/R²)² on [0, R], scaled so that ∫ g d³r = 1.
pub fn bump(rho: f64, radius: f64) -> f64 {
    if rho >= radius {
        return 0.0;
    }
    let t = 1.0 - rho * rho / (radius * radius);
    t * t * 105.0 / (32.0 * std::f64::consts::PI * radius.powi(3))
}

fn norm3(r: &[f64; 3]) -> f64 {
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}

/// exp(−|r|²/2σ²) truncated at 6σ.
pub fn isotropic_gaussian(sigma: f64) -> PairKernel {
    PairKernel::new("isotropic-gaussian", 6.0 * sigma, move |r, _, _| {
        let rho = norm3(r);
        (-rho * rho / (2.0 * sigma * sigma)).exp()
    })
    .with_bandwidth(0)
    .frame_invariant(true)
}

/// bump(|r|) · exp(−θ²/2s²), θ the rotation angle between the orientations.
pub fn rotation_distance_gaussian(s: f64) -> PairKernel {
    PairKernel::new("rotation-distance-gaussian", 2.0, move |r, p1, p2| {
        let th = rotation_distance(p1, p2);
        bump(norm3(r), 2.0) * (-th * th / (2.0 * s * s)).exp()
    })
    .frame_invariant(true)
}

static PLANT_ID: AtomicUsize = AtomicUsize::new(0);

thread_local! {
    static PLANT_CACHE: RefCell<Option<(usize, Mat3, Mat3, f64)>> = const { RefCell::new(None) };
}

/// A kernel bump(|r|) Σ c_t A_t(𝔭₁, 𝔭₂) planted on orthogonal k = 0 terms.
#[derive(Clone, Debug)]
pub struct PlantedKernel {
    pub kernel: PairKernel,
    pub planted: Vec<(String, f64)>,
}

/// Plants c_t = (−1)^t (t + 2)/(t + 3) on the orthogonal k = 0 terms of
/// swap parity `sign` with slot orders ≤ n.
pub fn planted(n: usize, sign: i8) -> Result<PlantedKernel> {
    let terms = orth_terms(0, n, sign)?;
    let bank = TermBank::new(0, n, &terms)?;
    let coefs: Vec<f64> = (0..terms.len())
        .map(|t| (if t % 2 == 0 { 1.0 } else { -1.0 }) * (t as f64 + 2.0) / (t as f64 + 3.0))
        .collect();
    let planted = bank.terms.iter().zip(&coefs).map(|(t, c)| (t.label.clone(), *c)).collect();
    let id = PLANT_ID.fetch_add(1, Ordering::Relaxed);
    let radius = 1.5;
    let orient = move |p1: &Mat3, p2: &Mat3| -> f64 {
        let (c1, c2) = (bank.w.coords(p1), bank.w.coords(p2));
        bank.eval_all(&c1, &c2).iter().zip(&coefs).map(|(v, c)| c * v[0]).sum()
    };
    let name = if sign > 0 { "planted-bandlimited" } else { "planted-antisymmetric" };
    let kernel = PairKernel::new(name, radius, move |r, p1, p2| {
        let g = bump(norm3(r), radius);
        if g == 0.0 {
            return 0.0;
        }
        let f = PLANT_CACHE.with(|c| {
            if let Some((cid, a, b, v)) = *c.borrow() {
                if cid == id && a == *p1 && b == *p2 {
                    return v;
                }
            }
            let v = orient(p1, p2);
            *c.borrow_mut() = Some((id, *p1, *p2, v));
            v
        });
        g * f
    })
    .with_bandwidth(n)
    .frame_invariant(true);
    Ok(PlantedKernel { kernel, planted })
}

pub fn builtin_kernel(name: &str) -> Result<PairKernel> {
    match name {
        "isotropic-gaussian" => Ok(isotropic_gaussian(1.0)),
        "planted-bandlimited" => Ok(planted(2, 1)?.kernel),
        "rotation-distance-gaussian" => Ok(rotation_distance_gaussian(0.8)),
        _ => Err(Error::Invalid(format!("unknown kernel '{name}'; built-ins are {}", BUILTIN_KERNELS.join(", ")))),
    }
}

/// 𝔭₁ᵀ𝔭₂ and a global rotation applied to a triple, for invariance tests.
pub fn rotate_triple(rot: &Mat3, r: &[f64; 3], p1: &Mat3, p2: &Mat3) -> ([f64; 3], Mat3, Mat3) {
    let rr = std::array::from_fn(|i| (0..3).map(|j| rot[i][j] * r[j]).sum());
    (rr, matmul(rot, p1), matmul(rot, p2))
}

pub fn relative(p1: &Mat3, p2: &Mat3) -> Mat3 {
    matmul(&transpose(p1), p2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::{orth_basis_m2, TensorCatalog};

    fn small() -> QuadratureGrid {
        QuadratureGrid { n_alpha: 8, n_beta: 12, n_gamma: 12, n_radial: 12, n_theta: 6, n_phi: 12 }
    }

    #[test]
    fn gl_exactness() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        assert!(w.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn sanity_at_default() {
        let (num, exact) = quadrature_sanity(&QuadratureGrid::default()).unwrap();
        assert!((num - exact).abs() < 1e-10, "{num} vs {exact}");
        assert!(certify_orientation_grid(&small(), 8, 20, 3).unwrap() < 1e-12);
    }

    #[test]
    fn fast_terms_match_exact_realization() {
        // Numeric bank values against exact polynomial evaluation.
        let (k, n) = (2, 2);
        let terms = orth_basis_m2(k, n).unwrap();
        let bank = TermBank::new(k, n, &terms).unwrap();
        let cat = TensorCatalog::basis(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (p1, p2) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let vals = bank.eval_all(&bank.w.coords(&p1), &bank.w.coords(&p2));
        for (t, v) in terms.iter().zip(&vals) {
            let field = t.realize(&cat).unwrap().to_field().unwrap();
            for (c, x) in field.coeffs().iter().zip(v) {
                let e = c.eval_numeric(&[(0, p1), (1, p2)]).unwrap();
                assert!((e - x).abs() < 1e-12, "{}: {e} vs {x}", t.label());
            }
        }
    }

    #[test]
    fn isotropic_moments() {
        let g = isotropic_gaussian(1.0);
        let m1 = moment_at(&g, 1, &small(), &IDENTITY, &IDENTITY).unwrap();
        assert!(m1.coeffs().iter().all(|c| c.abs() < 1e-12));
        // Independent oracle: composite Simpson in ρ.
        let (r, steps) = (6.0, 20000);
        let h = r / steps as f64;
        let f = |x: f64| (-x * x / 2.0).exp() * x * x;
        let mut s = f(0.0) + f(r);
        for i in 1..steps {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let oracle = 4.0 * std::f64::consts::PI * s * h / 3.0;
        let grid = QuadratureGrid { n_radial: 32, ..small() };
        let m0 = moment_at(&g, 0, &grid, &IDENTITY, &random_rotation(&mut ChaCha8Rng::seed_from_u64(1))).unwrap();
        assert!((m0.coeffs()[0] - oracle).abs() < 1e-9, "{} vs {oracle}", m0.coeffs()[0]);
    }

    #[test]
    fn planted_product_moment() {
        // G = bump(|r|) w₁₁(𝔭₁) w₁₁(𝔭₂) gives M₂⁰ = w₁₁(𝔭₁) w₁₁(𝔭₂).
        let w = pair_w(2, 1, 1).unwrap();
        let w2 = w.clone();
        let kern = PairKernel::new("product", 1.0, move |r, p1, p2| {
            bump(norm3(r), 1.0) * w2.eval_numeric(&[(0, *p1)]).unwrap() * w2.eval_numeric(&[(0, *p2)]).unwrap()
        });
        assert!(swap_symmetry_defect(&kern, 50, 2) < 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..3 {
            let (p1, p2) = (random_rotation(&mut rng), random_rotation(&mut rng));
            let m = moment_at(&kern, 0, &small(), &p1, &p2).unwrap();
            let want = w.eval_numeric(&[(0, p1)]).unwrap() * w.eval_numeric(&[(0, p2)]).unwrap();
            assert!((m.coeffs()[0] - want).abs() < 1e-8);
        }
    }

    #[test]
    fn moment_swap_covariance() {
        let g = rotation_distance_gaussian(0.8);
        for k in 0..=3 {
            assert!(moment_swap_defect(&g, k, &small(), 5, 4).unwrap() < 1e-8, "k={k}");
        }
        assert!(swap_symmetry_defect(&g, 100, 1) < 1e-8);
    }

    #[test]
    fn frame_invariance_of_builtins() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for name in BUILTIN_KERNELS {
            let g = builtin_kernel(name).unwrap();
            for _ in 0..20 {
                let r: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.8..0.8));
                let (p1, p2, rot) = (random_rotation(&mut rng), random_rotation(&mut rng), random_rotation(&mut rng));
                let (rr, q1, q2) = rotate_triple(&rot, &r, &p1, &p2);
                assert!((g.eval(&r, &p1, &p2) - g.eval(&rr, &q1, &q2)).abs() < 1e-10, "{name}");
            }
        }
    }

    #[test]
    fn planted_recovery_small_grid() {
        let pk = planted(2, 1).unwrap();
        let rep = project_unchecked(&pk.kernel, 0, 2, &small()).unwrap();
        for (label, c) in &pk.planted {
            let got = rep.coefficient(label).unwrap();
            assert!((got - c).abs() < 1e-10, "{label}: {got} vs {c}");
        }
        assert!(rep.residuals[2].residual < 1e-8);
        assert!(rep.opposite_parity_max < 1e-10);
    }

    #[test]
    fn frame_reduction_matches_full_product() {
        let pk = planted(1, 1).unwrap();
        let g = QuadratureGrid { n_alpha: 4, n_beta: 6, n_gamma: 6, n_radial: 6, n_theta: 3, n_phi: 4 };
        let a = project_unchecked(&pk.kernel, 0, 2, &g).unwrap();
        let full = pk.kernel.clone().frame_invariant(false);
        let b = project_unchecked(&full, 0, 2, &g).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((x.coefficient - y.coefficient).abs() < 1e-10, "{}", x.label);
        }
    }

    #[test]
    fn refinement_stability() {
        let pk = planted(2, 1).unwrap();
        let a = project_unchecked(&pk.kernel, 0, 2, &small()).unwrap();
        let b = project_unchecked(&pk.kernel, 0, 2, &small().refined()).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((x.coefficient - y.coefficient).abs() < 1e-6);
        }
    }

    #[test]
    fn under_resolution_detected() {
        let g = rotation_distance_gaussian(0.15);
        let grid = QuadratureGrid { n_alpha: 4, n_beta: 6, n_gamma: 6, n_radial: 6, n_theta: 3, n_phi: 6 };
        assert!(matches!(project(&g, 0, 2, &grid), Err(Error::UnderResolved(_))));
    }

    #[test]
    fn request_checks() {
        let g = isotropic_gaussian(1.0);
        assert!(matches!(project(&g, 2, 2, &small()), Err(Error::Invalid(_))));
        assert!(matches!(project(&g, 5, 6, &small()), Err(Error::Cap(_))));
        assert!(builtin_kernel("nope").is_err());
    }
}
