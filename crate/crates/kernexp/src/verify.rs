//! Self-check suites run by `kernexp verify`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::contract::{
    det3, lemma_cross_sum, lemma_trace_residual, relation_e1_orders, relation_e1_residual, relation_e2_orders,
    relation_e2_residual,
};
use crate::error::{Error, Result};
use crate::exactscalar::{rat, rint, Rational, Ring};
use crate::expander::worked_example_c2v_s4;
use crate::gram::{certify, gram_rank, GramMethod};
use crate::groups::{invariant_space_avg, invariant_space_closed_form, realize, same_span, PointGroupSpec};
use crate::kernelproj::{quadrature_sanity, QuadratureGrid};
use crate::so3poly::{EntryMonomial, OrientPoly};
use crate::tensors::{build_basis_w, num_monomials, pair_w, SymTensor};
use crate::terms::{
    certify_a3, enum_m2_fixed, enum_m3_fixed, m2_count_formula, m4_augmented_ranks, m4_selected, orth_basis_m2,
    phi_expected, phi_level, psi_expected, psi_level, triple_family, EqualityCase, TensorCatalog, TensorRef,
};

pub const SUITES: [&str; 11] = [
    "basis",
    "orthogonality",
    "counts",
    "orth-basis",
    "a3-span",
    "identities",
    "m4-selection",
    "triple-families",
    "invariants",
    "worked-example",
    "haar",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Random exact traceless tensor of order k.
pub fn random_traceless(rng: &mut ChaCha8Rng, k: usize) -> SymTensor<Rational> {
    SymTensor::from_coeffs(k, (0..num_monomials(k)).map(|_| rat(rng.gen_range(-5..=5), rng.gen_range(1..=3))).collect())
        .traceless_project()
}

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let canonical = match name {
        "appendixE" => "identities",
        other => other,
    };
    let checks = match canonical {
        "basis" => basis_suite()?,
        "orthogonality" => orthogonality_suite(3)?,
        "counts" => counts_suite()?,
        "orth-basis" => orth_basis_suite()?,
        "a3-span" => a3_span_suite()?,
        "identities" => identities_suite(seed)?,
        "m4-selection" => m4_selection_suite()?,
        "triple-families" => triple_family_suite(seed)?,
        "invariants" => invariants_suite()?,
        "worked-example" => worked_example_suite()?,
        "haar" => haar_suite(seed, 200)?,
        "all" => {
            let mut all = Vec::new();
            for s in SUITES {
                all.extend(run_suite(s, seed)?.checks.into_iter().map(|c| Check { name: format!("{s}/{}", c.name), ..c }));
            }
            all
        }
        _ => {
            return Err(Error::Invalid(format!(
                "unknown suite '{name}'; available: {}, appendixE, all",
                SUITES.join(", ")
            )))
        }
    };
    Ok(SuiteReport { suite: name.to_string(), seed, checks })
}

pub fn basis_suite() -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut out = Vec::new();
    for k in 0..=6 {
        let b = build_basis_w(k)?;
        let mut ok = b.len() == 2 * k + 1;
        for i in 0..b.len() {
            let t = b.get(i);
            ok &= !t.is_zero() && t.check_traceless();
            for j in 0..i {
                ok &= t.dot(b.get(j)) == rint(0);
            }
        }
        out.push(Check::new(format!("W{k}"), ok, format!("{} tensors", b.len())));
    }
    let secs = start.elapsed().as_secs_f64();
    out.push(Check::new("time", secs < 10.0, format!("{secs:.2} s")));
    Ok(out)
}

/// Exact Haar products of the functions w^k_ij for k ≤ kmax.
pub fn orthogonality_suite(kmax: usize) -> Result<Vec<Check>> {
    let mut funcs: Vec<((usize, usize, usize), OrientPoly)> = Vec::new();
    for k in 0..=kmax {
        for i in 1..=2 * k + 1 {
            for j in 1..=2 * k + 1 {
                funcs.push(((k, i, j), pair_w(k, i, j)?));
            }
        }
    }
    let mut bad = Vec::new();
    let mut count = 0;
    for a in 0..funcs.len() {
        for b in 0..a {
            count += 1;
            let v = funcs[a].1.times(&funcs[b].1).haar_integral_all()?;
            if v != rint(0) {
                bad.push(format!("{:?}/{:?}", funcs[a].0, funcs[b].0));
            }
        }
    }
    let detail = if bad.is_empty() { format!("{count} pairs vanish") } else { format!("nonzero: {}", bad.join(", ")) };
    Ok(vec![Check::new(format!("w products k<={kmax}"), bad.is_empty(), detail)])
}

pub fn counts_suite() -> Result<Vec<Check>> {
    let cat = TensorCatalog::basis(5)?;
    let mut out = Vec::new();
    for k in 0..=4 {
        for m in 0..=3 {
            let v = TensorRef::new(m, m.min(1));
            let terms = enum_m2_fixed(k, v)?;
            let want = m2_count_formula(k, m);
            let mut ok = terms.len() == want;
            let mut detail = format!("{} terms, formula {want}", terms.len());
            if k + m <= 5 {
                let c = crate::terms::certify_m2(&terms, &cat, GramMethod::Factored)?;
                ok &= c.passed();
                detail.push_str(&format!(", Gram rank {}", c.rank));
            }
            out.push(Check::new(format!("k={k} m={m}"), ok, detail));
        }
    }
    Ok(out)
}

pub fn orth_basis_suite() -> Result<Vec<Check>> {
    let cat = TensorCatalog::basis(3)?;
    let mut out = Vec::new();
    for k in 0..=2 {
        for n in 1..=3 {
            let terms = orth_basis_m2(k, n)?;
            let c = crate::terms::certify_m2(&terms, &cat, GramMethod::Factored)?;
            let ok = c.is_diagonal() && c.positive_diagonal();
            out.push(Check::new(format!("k={k} n={n}"), ok, format!("{} terms", terms.len())));
        }
    }
    Ok(out)
}

pub fn a3_span_suite() -> Result<Vec<Check>> {
    let cat = TensorCatalog::basis(4)?;
    let terms = enum_m3_fixed(TensorRef::new(2, 1), TensorRef::new(2, 3))?;
    let c = certify_a3(&terms, &cat, GramMethod::Factored)?;
    Ok(vec![Check::new("n2=n3=2", c.rank == 25 && terms.len() == 25, format!("rank {} of {}", c.rank, terms.len()))])
}

const RELATION_BASES: [[u32; 6]; 4] = [[0, 0, 0, 0, 0, 0], [1, 0, 0, 0, 0, 0], [0, 1, 0, 0, 1, 0], [0, 0, 1, 1, 0, 0]];

/// Four-tensor relations on 20 random tuples each, and the two order-2
/// lemma identities on 10 random instances each.
pub fn identities_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let base_of = |i: usize| RELATION_BASES[i % RELATION_BASES.len()];
    let mut ok = true;
    for i in 0..20 {
        let base = base_of(i);
        let us: Vec<_> = relation_e1_orders(&base).iter().map(|&k| random_traceless(&mut rng, k)).collect();
        ok &= relation_e1_residual([&us[0], &us[1], &us[2], &us[3]], &base)? == rint(0);
    }
    out.push(Check::new("delta relation", ok, "20 tuples"));
    for which in 0..4 {
        let mut ok = true;
        for i in 0..20 {
            let base = base_of(i);
            let us: Vec<_> =
                relation_e2_orders(&base, which).iter().map(|&k| random_traceless(&mut rng, k)).collect();
            ok &= relation_e2_residual([&us[0], &us[1], &us[2], &us[3]], &base, which)? == rint(0);
        }
        out.push(Check::new(format!("epsilon relation {}", which + 1), ok, "20 tuples"));
    }
    let mut ok = true;
    for _ in 0..10 {
        let q: Vec<_> = (0..4).map(|_| random_traceless(&mut rng, 2)).collect();
        ok &= lemma_trace_residual([&q[0], &q[1], &q[2], &q[3]]) == rint(0);
    }
    out.push(Check::new("quartic trace identity", ok, "10 instances"));
    let mut ok = true;
    for _ in 0..10 {
        let p: [[Rational; 3]; 3] =
            std::array::from_fn(|_| std::array::from_fn(|_| rat(rng.gen_range(-9..=9), rng.gen_range(1..=4))));
        let lhs = lemma_cross_sum(p.clone());
        let d = det3(&p) * rint(2);
        for (i, row) in lhs.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                ok &= *x == if i == j { d.clone() } else { rint(0) };
            }
        }
    }
    out.push(Check::new("cyclic cross identity", ok, "10 instances"));
    Ok(out)
}

pub fn m4_selection_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let triple = |n: [usize; 4]| -> Vec<(u32, u32, u32)> {
        m4_selected(n, EqualityCase::Triple, false).iter().map(|p| (p.l[0], p.l[1], p.l[3])).collect()
    };
    let a = triple([3, 3, 3, 3]);
    out.push(Check::new("(3,3,3,3)", a == vec![(0, 0, 3), (1, 1, 1)], format!("{a:?}")));
    let b = triple([3, 3, 3, 1]);
    out.push(Check::new("(3,3,3,1)", b == vec![(1, 1, 2)], format!("{b:?}")));
    let cat = TensorCatalog::basis(3)?;
    let r = |o, i| TensorRef::new(o, i);
    for refs in [[r(3, 0), r(3, 0), r(3, 0), r(3, 1)], [r(3, 2), r(3, 2), r(3, 2), r(1, 0)], [r(2, 0), r(2, 0), r(1, 0), r(1, 1)]] {
        let (count, kept, all) = m4_augmented_ranks(refs, &cat)?;
        let ok = kept == count && all == kept;
        out.push(Check::new(
            format!("augmented {:?}", refs.map(|x| x.order)),
            ok,
            format!("{count} retained, rank {kept}, rank with excluded {all}"),
        ));
    }
    Ok(out)
}

/// (n₁, n₄) order pairs realizing ψ levels 0, 1, 2 and φ levels 0, 1, 2.
pub const PSI_CASES: [(usize, usize); 3] = [(2, 0), (1, 1), (2, 2)];
pub const PHI_CASES: [(usize, usize); 3] = [(1, 2), (2, 3), (3, 4)];

pub fn triple_family_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (eps, cases) in [(false, PSI_CASES), (true, PHI_CASES)] {
        for (n1, n4) in cases {
            let d = if eps { phi_level(n1, n4) } else { psi_level(n1, n4) }
                .ok_or_else(|| Error::Internal(format!("no level for ({n1},{n4})")))?;
            let (u1, u4) = (random_traceless(&mut rng, n1), random_traceless(&mut rng, n4));
            let fam: Vec<_> = triple_family(&u1, &u4, eps)?.into_iter().map(|x| x.1).collect();
            let rank = gram_rank(&fam)?;
            let want = if eps && d == 0 { 0 } else if eps { phi_expected(d) } else { psi_expected(d) };
            let name = format!("{} d={d} ({n1},{n4})", if eps { "phi" } else { "psi" });
            out.push(Check::new(name, rank == want, format!("rank {rank}, expected {want}")));
        }
    }
    Ok(out)
}

pub fn invariants_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for g in ["C2", "C3", "C4", "C6", "D2", "D3", "D4", "T", "O"] {
        let spec: PointGroupSpec = g.parse()?;
        let real = realize(&spec)?;
        let mut ok = true;
        let mut dims = Vec::new();
        for l in 0..=4 {
            let a = invariant_space_avg(&real, l)?;
            let c = invariant_space_closed_form(&spec, l)?;
            ok &= same_span(&a, &c);
            dims.push(c.len().to_string());
        }
        out.push(Check::new(g, ok, format!("dims {}", dims.join(","))));
    }
    let spec: PointGroupSpec = "I".parse()?;
    let real = realize(&spec)?;
    let mut ok = true;
    let mut dims = Vec::new();
    for l in 0..=6 {
        let a = invariant_space_avg(&real, l)?;
        let c = invariant_space_closed_form(&spec, l)?;
        ok &= same_span(&a, &c);
        dims.push(c.len());
    }
    ok &= dims[6] > 0;
    out.push(Check::new("I", ok, format!("dims {dims:?}")));
    Ok(out)
}

pub const WORKED_TYPE_TABLE: &str = "group | 1 | m1 | m1^2 - 1/3 i | m2^2 - m3^2 | m2 m3\n\
C2v | +1 | -1 | +1 | +1 | -1\n\
S4 | +1 | +1 | +1 | -1 | -1\n";
pub const WORKED_COUPLINGS: &str = "C2v: (m1^2 - 1/3 i, m2 m3), (m2^2 - m3^2, m2 m3)\n\
S4: (m1^2 - 1/3 i, m2^2 - m3^2), (m1^2 - 1/3 i, m2 m3)\n";

pub fn worked_example_suite() -> Result<Vec<Check>> {
    let w = worked_example_c2v_s4()?;
    let t = w.type_table();
    let c = w.coupling_lines();
    Ok(vec![
        Check::new("type table", t == WORKED_TYPE_TABLE, t.trim_end().replace('\n', "; ")),
        Check::new("couplings", c == WORKED_COUPLINGS, c.trim_end().replace('\n', "; ")),
        Check::new("C2v order-1 cross pairs", w.c2v_order_one.is_empty(), format!("{:?}", w.c2v_order_one)),
    ])
}

/// A random polynomial in one rotation of degree ≤ `degree`.
pub fn random_orient_poly(rng: &mut ChaCha8Rng, degree: usize) -> OrientPoly {
    let mut f = OrientPoly::new();
    for _ in 0..rng.gen_range(1..=4) {
        let mut m = EntryMonomial::one();
        for _ in 0..rng.gen_range(0..=degree) {
            m = m.mul(&EntryMonomial::entry(0, rng.gen_range(0..3), rng.gen_range(0..3)));
        }
        f.add_term(m, rat(rng.gen_range(-7..=7), rng.gen_range(1..=5)));
    }
    f
}

/// Euler-grid quadrature refined until two successive estimates agree.
pub fn adaptive_orientation_integral(f: &OrientPoly, tol: f64) -> Result<f64> {
    let mut grid = QuadratureGrid::orientation(2, 4, 4);
    let mut prev = crate::kernelproj::integrate_orientation(f, &grid)?;
    for _ in 0..6 {
        grid = QuadratureGrid::orientation(grid.n_alpha * 2, grid.n_beta * 2, grid.n_gamma * 2);
        let next = crate::kernelproj::integrate_orientation(f, &grid)?;
        if (next - prev).abs() < tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::UnderResolved("adaptive orientation quadrature did not settle".into()))
}

/// Exact Haar integrals of random polynomials against adaptive quadrature,
/// plus the default-grid sanity probe.
pub fn haar_suite(seed: u64, count: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut errors = 0;
    for _ in 0..count {
        let f = random_orient_poly(&mut rng, 6);
        match f.haar_integral_all() {
            Ok(exact) => {
                let num = adaptive_orientation_integral(&f, 1e-13)?;
                worst = worst.max((crate::exactscalar::ratio_to_f64(&exact) - num).abs());
            }
            Err(_) => errors += 1,
        }
    }
    let (num, exact) = quadrature_sanity(&QuadratureGrid::default())?;
    Ok(vec![
        Check::new(format!("{count} random integrals"), worst <= 1e-10 && errors == 0, format!("max error {worst:.2e}, integrator errors {errors}")),
        Check::new("default grid probe", (num - exact).abs() <= 1e-10, format!("{num:.15} vs {exact:.15}")),
    ])
}

/// Sanity: Gram certificate of the full orthogonal basis, used by tests.
pub fn orth_basis_certificate(k: usize, n: usize) -> Result<bool> {
    let cat = TensorCatalog::basis(n)?;
    let r = orth_basis_m2(k, n)?.iter().map(|t| t.realize(&cat)).collect::<Result<Vec<_>>>()?;
    Ok(certify(&r, GramMethod::Factored)?.passed())
}
