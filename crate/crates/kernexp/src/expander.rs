//! Symmetry-consistent term lists for a point group and their free-energy
//! renderings in index notation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::{GramCertificate, GramMethod};
use crate::groups::{typed_basis, PointGroupSpec, TypedTensor};
use crate::terms::{
    certify_a3, certify_a4, certify_m2, enum_m2_set_in, enum_m3_in, enum_m4_in, A3Term, A4Term, Family,
    M2Term, TensorCatalog, TensorRef, MAX_GRADIENT,
};

/// Largest slot order for pair terms and for three- and four-body terms.
pub const MAX_ORDER_PAIR: usize = 4;
pub const MAX_ORDER_CLUSTER: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionRequest {
    pub group: String,
    pub cluster: usize,
    pub gradient: usize,
    pub max_order: usize,
    pub orthogonal: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cluster_kind", rename_all = "lowercase")]
pub enum TermDescriptor {
    M2(M2Term),
    M3(A3Term),
    M4(A4Term),
}

impl TermDescriptor {
    pub fn refs(&self) -> Vec<TensorRef> {
        match self {
            TermDescriptor::M2(t) => vec![t.u, t.v],
            TermDescriptor::M3(t) => t.refs.to_vec(),
            TermDescriptor::M4(t) => t.refs.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub order: usize,
    pub index: usize,
    pub name: String,
    #[serde(rename = "type")]
    pub sign: i8,
}

/// Per-slot derivative and subscript index names of a rendered pair term.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexForm {
    pub derivatives: Vec<Vec<String>>,
    pub subscripts: Vec<Vec<String>>,
    pub epsilon: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyTerm {
    pub cluster: usize,
    pub gradient: usize,
    pub family: String,
    pub slots: Vec<SlotRecord>,
    pub pattern: String,
    pub epsilon: bool,
    pub expansion: String,
    pub rendering: String,
    pub index_form: IndexForm,
    pub descriptor: TermDescriptor,
}

/// Typed invariant tensors of the group, usable as expansion slots.
#[derive(Clone, Debug)]
pub struct SlotCatalog {
    pub typed: Vec<Vec<TypedTensor>>,
    pub catalog: TensorCatalog,
}

impl SlotCatalog {
    pub fn for_group(spec: &PointGroupSpec, n: usize) -> Result<Self> {
        let typed = typed_basis(spec, n)?;
        let catalog = TensorCatalog { by_order: typed.iter().map(|v| v.iter().map(|t| t.tensor.clone()).collect()).collect() };
        Ok(SlotCatalog { typed, catalog })
    }

    pub fn slot(&self, r: TensorRef) -> &TypedTensor {
        &self.typed[r.order][r.index]
    }

    pub fn name(&self, r: TensorRef) -> String {
        self.slot(r).name.clone()
    }

    fn record(&self, r: TensorRef) -> SlotRecord {
        let t = self.slot(r);
        SlotRecord { order: r.order, index: r.index, name: t.name.clone(), sign: t.sign }
    }

    /// Number of type −1 tensors among the slots.
    pub fn minus_count(&self, refs: &[TensorRef]) -> usize {
        refs.iter().filter(|r| self.slot(**r).sign < 0).count()
    }
}

#[derive(Clone, Debug)]
pub struct Expansion {
    pub request: ExpansionRequest,
    pub spec: PointGroupSpec,
    pub slots: SlotCatalog,
    pub terms: Vec<EnergyTerm>,
}

impl Expansion {
    pub fn certify(&self, method: GramMethod) -> Result<GramCertificate> {
        let cat = &self.slots.catalog;
        match self.request.cluster {
            2 => {
                let ts: Vec<M2Term> = self
                    .terms
                    .iter()
                    .filter_map(|t| match &t.descriptor {
                        TermDescriptor::M2(m) => Some(m.clone()),
                        _ => None,
                    })
                    .collect();
                certify_m2(&ts, cat, method)
            }
            3 => {
                let ts: Vec<A3Term> = self
                    .terms
                    .iter()
                    .filter_map(|t| match &t.descriptor {
                        TermDescriptor::M3(m) => Some(m.clone()),
                        _ => None,
                    })
                    .collect();
                certify_a3(&ts, cat, method)
            }
            _ => {
                let ts: Vec<A4Term> = self
                    .terms
                    .iter()
                    .filter_map(|t| match &t.descriptor {
                        TermDescriptor::M4(m) => Some(m.clone()),
                        _ => None,
                    })
                    .collect();
                certify_a4(&ts, cat, method)
            }
        }
    }
}

fn validate(req: &ExpansionRequest) -> Result<PointGroupSpec> {
    let spec: PointGroupSpec = req.group.parse()?;
    match req.cluster {
        2 => {
            if req.gradient > MAX_GRADIENT {
                return Err(Error::Cap(format!("gradient order {} exceeds {MAX_GRADIENT}", req.gradient)));
            }
            if req.max_order > MAX_ORDER_PAIR {
                return Err(Error::Cap(format!("max order {} exceeds {MAX_ORDER_PAIR} for pair terms", req.max_order)));
            }
        }
        3 | 4 => {
            if req.gradient != 0 {
                return Err(Error::Invalid("three- and four-body terms are only available at gradient order 0".into()));
            }
            if req.max_order > MAX_ORDER_CLUSTER {
                return Err(Error::Cap(format!(
                    "max order {} exceeds {MAX_ORDER_CLUSTER} for cluster {}",
                    req.max_order, req.cluster
                )));
            }
            if req.orthogonal {
                return Err(Error::Invalid("the orthogonal form exists for pair terms only".into()));
            }
        }
        c => return Err(Error::Invalid(format!("cluster size must be 2, 3 or 4, got {c}"))),
    }
    Ok(spec)
}

/// Generic terms with slots restricted to the group's invariant tensors and
/// filtered so type −1 tensors appear a number of times matching the parity
/// of the gradient order.
pub fn expand(req: &ExpansionRequest) -> Result<Expansion> {
    let spec = validate(req)?;
    let slots = SlotCatalog::for_group(&spec, req.max_order)?;
    let parity = req.gradient % 2;
    let keep = |refs: &[TensorRef]| slots.minus_count(refs) % 2 == parity;
    let mut terms = Vec::new();
    match req.cluster {
        2 => {
            let sign = if req.gradient % 2 == 0 { 1 } else { -1 };
            for mut t in enum_m2_set_in(&slots.catalog, req.gradient, req.max_order, sign)? {
                if keep(&[t.u, t.v]) {
                    t.orthogonalized = req.orthogonal;
                    terms.push(render_energy(&TermDescriptor::M2(t), &slots));
                }
            }
        }
        3 => {
            let mut ts: Vec<A3Term> =
                enum_m3_in(&slots.catalog, req.max_order)?.into_iter().filter(|t| keep(&t.refs)).collect();
            ts.sort_by_key(|t| (t.refs.map(|r| r.order), t.pattern.to_string(), t.refs));
            terms.extend(ts.into_iter().map(|t| render_energy(&TermDescriptor::M3(t), &slots)));
        }
        _ => {
            let mut ts: Vec<A4Term> =
                enum_m4_in(&slots.catalog, req.max_order)?.into_iter().filter(|t| keep(&t.refs)).collect();
            ts.sort_by_key(|t| {
                let mut o = t.refs.map(|r| r.order);
                o.sort();
                (o, t.refs.map(|r| r.order), t.pattern.to_string(), t.refs)
            });
            terms.extend(ts.into_iter().map(|t| render_energy(&TermDescriptor::M4(t), &slots)));
        }
    }
    Ok(Expansion { request: req.clone(), spec, slots, terms })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Tok {
    UFree(usize),
    VFree(usize),
    Delta(usize),
    Nu,
}

/// Index notation for one pair term, with U taking ⌊k/2⌋ derivatives.
fn render_pair(t: &M2Term, nu: &str, nv: &str) -> (String, IndexForm) {
    let eps = t.kind == Family::Cross;
    let e = eps as usize;
    let (r, m) = (t.u.order, t.v.order);
    let fu = r - t.p - e;
    let fv = m - t.p - e;
    let du = t.k / 2;
    let a = du - t.q;

    // U's non-δ derivatives: own free indices, then ν, then V's free ones.
    let mut pool: Vec<Tok> = (0..fu).map(Tok::UFree).collect();
    if eps {
        pool.push(Tok::Nu);
    }
    pool.extend((0..fv).map(Tok::VFree));
    let u_take: Vec<Tok> = pool[..a].to_vec();
    let rest: Vec<Tok> = pool[a..].to_vec();

    let order_u = |list: &[Tok]| -> Vec<Tok> {
        let mut v: Vec<Tok> = list.iter().copied().filter(|x| matches!(x, Tok::UFree(_))).collect();
        v.extend(list.iter().copied().filter(|x| *x == Tok::Nu));
        v.extend(list.iter().copied().filter(|x| matches!(x, Tok::VFree(_))));
        v
    };
    let order_v = |list: &[Tok]| -> Vec<Tok> {
        let mut v: Vec<Tok> = list.iter().copied().filter(|x| matches!(x, Tok::VFree(_))).collect();
        v.extend(list.iter().copied().filter(|x| *x == Tok::Nu));
        v.extend(list.iter().copied().filter(|x| matches!(x, Tok::UFree(_))));
        v
    };
    let mut u_der = order_u(&u_take);
    let mut v_der = order_v(&rest);
    u_der.extend((0..t.q).map(Tok::Delta));
    v_der.extend((0..t.q).map(Tok::Delta));
    let mut u_sub: Vec<Tok> = (0..fu).map(Tok::UFree).collect();
    let mut v_sub: Vec<Tok> = (0..fv).map(Tok::VFree).collect();
    let _ = (&mut u_sub, &mut v_sub);

    // Name derivative-type indices by first appearance.
    let total = fu + fv + t.q;
    let mut seen: Vec<Tok> = Vec::new();
    for x in u_der.iter().chain(&u_sub).chain(&v_der).chain(&v_sub) {
        if *x != Tok::Nu && !seen.contains(x) {
            seen.push(*x);
        }
    }
    let name = |x: &Tok| -> String {
        match x {
            Tok::Nu => "k".into(),
            _ => {
                let pos = seen.iter().position(|y| y == x).expect("named index");
                if total == 1 {
                    if eps { "l".into() } else { "j".into() }
                } else {
                    format!("j{}", pos + 1)
                }
            }
        }
    };
    let contracted: Vec<String> = (1..=t.p).map(|i| format!("i{i}")).collect();
    let mut us: Vec<String> = contracted.clone();
    us.extend(u_sub.iter().map(name));
    let mut vs: Vec<String> = contracted;
    vs.extend(v_sub.iter().map(name));
    if eps {
        us.push("i".into());
        vs.push("j".into());
    }
    let ud: Vec<String> = u_der.iter().map(name).collect();
    let vd: Vec<String> = v_der.iter().map(name).collect();
    let piece = |d: &[String], nm: &str, s: &[String]| {
        let mut out = String::new();
        if !d.is_empty() {
            out.push_str(&format!("∂_{{{}}}", d.concat()));
        }
        out.push_str(&format!("⟨{nm}⟩"));
        if !s.is_empty() {
            out.push_str(&format!("_{{{}}}", s.concat()));
        }
        out
    };
    let mut text = String::new();
    if eps {
        text.push_str("ε_{ijk} ");
    }
    text.push_str(&piece(&ud, nu, &us));
    text.push(' ');
    text.push_str(&piece(&vd, nv, &vs));
    let form = IndexForm { derivatives: vec![ud, vd], subscripts: vec![us, vs], epsilon: eps };
    (text, form)
}

/// Free-energy rendering of one term; slot names come from `slots`.
pub fn render_energy(d: &TermDescriptor, slots: &SlotCatalog) -> EnergyTerm {
    let records: Vec<SlotRecord> = d.refs().iter().map(|r| slots.record(*r)).collect();
    let names: Vec<String> = records.iter().map(|r| r.name.clone()).collect();
    let avg = |n: &[String]| n.iter().map(|x| format!("⟨{x}⟩")).collect::<Vec<_>>().join(",");
    match d {
        TermDescriptor::M2(t) => {
            let (rendering, index_form) = render_pair(t, &names[0], &names[1]);
            let family = match t.kind {
                Family::Dot => "dot",
                Family::Cross => "cross",
            };
            EnergyTerm {
                cluster: 2,
                gradient: t.k,
                family: family.into(),
                slots: records,
                pattern: format!("p={},q={}", t.p, t.q),
                epsilon: t.kind == Family::Cross,
                expansion: t.label_with(&names[0], &names[1]),
                rendering,
                index_form,
                descriptor: d.clone(),
            }
        }
        TermDescriptor::M3(t) => EnergyTerm {
            cluster: 3,
            gradient: 0,
            family: "a3".into(),
            slots: records,
            pattern: t.pattern.to_string(),
            epsilon: t.pattern.eps.is_some(),
            expansion: t.label_with(&[names[0].clone(), names[1].clone(), names[2].clone()]),
            rendering: format!("𝔞₃({}; {})", avg(&names), t.pattern),
            index_form: IndexForm { epsilon: t.pattern.eps.is_some(), ..Default::default() },
            descriptor: d.clone(),
        },
        TermDescriptor::M4(t) => EnergyTerm {
            cluster: 4,
            gradient: 0,
            family: "a4".into(),
            slots: records,
            pattern: t.pattern.to_string(),
            epsilon: t.pattern.eps.is_some(),
            expansion: t.label_with(&[names[0].clone(), names[1].clone(), names[2].clone(), names[3].clone()]),
            rendering: format!("𝔞₄({}; {})", avg(&names), t.pattern),
            index_form: IndexForm { epsilon: t.pattern.eps.is_some(), ..Default::default() },
            descriptor: d.clone(),
        },
    }
}

/// Renders a generic pair term with W-basis names, for catalog display.
pub fn render_generic(t: &M2Term) -> String {
    render_pair(t, &format!("U{}", t.u.order), &format!("V{}", t.v.order)).0
}

/// The C2v / S4 comparison: types of the C2 invariant tensors up to order 2
/// and the order-(2,2) cross couplings at gradient order 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkedExample {
    pub tensors: Vec<String>,
    pub types: Vec<(String, Vec<i8>)>,
    pub couplings: Vec<(String, Vec<(String, String)>)>,
    /// Cross couplings at order (1,1) for C2v; empty.
    pub c2v_order_one: Vec<(String, String)>,
}

impl WorkedExample {
    pub fn type_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("group | {}\n", self.tensors.join(" | ")));
        for (g, signs) in &self.types {
            let cells: Vec<String> = signs.iter().map(|s| if *s > 0 { "+1".into() } else { "-1".into() }).collect();
            out.push_str(&format!("{g} | {}\n", cells.join(" | ")));
        }
        out
    }

    pub fn coupling_lines(&self) -> String {
        let mut out = String::new();
        for (g, pairs) in &self.couplings {
            let p: Vec<String> = pairs.iter().map(|(a, b)| format!("({a}, {b})")).collect();
            out.push_str(&format!("{g}: {}\n", p.join(", ")));
        }
        out
    }
}

/// Cross pairs U^n ×^{n-1} V^n with n = `order` in a gradient-order-1 expansion.
pub fn cross_pairs(group: &str, order: usize) -> Result<Vec<(String, String)>> {
    let req = ExpansionRequest { group: group.into(), cluster: 2, gradient: 1, max_order: 2.max(order), orthogonal: false };
    let e = expand(&req)?;
    Ok(e
        .terms
        .iter()
        .filter_map(|t| match &t.descriptor {
            TermDescriptor::M2(m)
                if m.kind == Family::Cross && m.u.order == order && m.v.order == order && m.p + 1 == order =>
            {
                Some((t.slots[0].name.clone(), t.slots[1].name.clone()))
            }
            _ => None,
        })
        .collect())
}

pub fn worked_example_c2v_s4() -> Result<WorkedExample> {
    let groups = ["C2v", "S4"];
    let mut tensors: Vec<String> = Vec::new();
    let mut types = Vec::new();
    for g in groups {
        let spec: PointGroupSpec = g.parse()?;
        let typed = typed_basis(&spec, 2)?;
        let mut by_name: Vec<(String, i8)> = typed.into_iter().flatten().map(|t| (t.name, t.sign)).collect();
        if tensors.is_empty() {
            // Column order follows the closed-form basis of C2.
            let c2 = typed_basis(&"C2".parse()?, 2)?;
            tensors = c2.into_iter().flatten().map(|t| t.name).collect();
        }
        let signs = tensors
            .iter()
            .map(|n| {
                let pos = by_name.iter().position(|(m, _)| m == n).ok_or_else(|| {
                    Error::Internal(format!("{g}: tensor {n} missing from the typed basis"))
                })?;
                Ok(by_name.remove(pos).1)
            })
            .collect::<Result<Vec<i8>>>()?;
        types.push((g.to_string(), signs));
    }
    let couplings = groups.iter().map(|g| Ok((g.to_string(), cross_pairs(g, 2)?))).collect::<Result<Vec<_>>>()?;
    Ok(WorkedExample { tensors, types, couplings, c2v_order_one: cross_pairs("C2v", 1)? })
}
