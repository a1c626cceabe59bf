//! Command-line front end. Every command builds a serializable document;
//! text output is rendered from that document alone.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expander::{expand, EnergyTerm, ExpansionRequest, SlotRecord, TermDescriptor};
use crate::gram::GramMethod;
use crate::groups::{display_quad, invariant_space_closed_form, realize, type_split, PointGroupSpec, INVARIANT_CAP};
use crate::kernelproj::{builtin_kernel, project, project_unchecked, CoefficientReport, QuadratureGrid, BUILTIN_KERNELS};
use crate::tensors::build_basis_w;
use crate::terms::Family;
use crate::verify::{run_suite, Check};

pub const SCHEMA_VERSION: &str = "1.0";
/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "KERNEXP_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "kernexp", version, about = "Symmetric-traceless tensor expansions of pair and cluster kernels")]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value = "text", global = true)]
    pub format: Format,
    /// Write the document here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Seed for randomized checks.
    #[arg(long, default_value_t = 7, global = true)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_group(s: &str) -> std::result::Result<PointGroupSpec, String> {
    s.parse::<PointGroupSpec>().map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// The 2k+1 orthogonal traceless basis tensors of order k.
    Basis {
        #[arg(long)]
        order: usize,
    },
    /// Invariant tensors of a point group.
    Invariants {
        #[arg(long, value_parser = parse_group)]
        group: PointGroupSpec,
        /// A single order.
        #[arg(long, conflicts_with = "max_order")]
        order: Option<usize>,
        /// Every order from 0 up to this one.
        #[arg(long)]
        max_order: Option<usize>,
    },
    /// Invariant tensors split into types ±1 (groups with improper elements).
    Types {
        #[arg(long, value_parser = parse_group)]
        group: PointGroupSpec,
        #[arg(long, conflicts_with = "max_order")]
        order: Option<usize>,
        #[arg(long)]
        max_order: Option<usize>,
    },
    /// Symmetry-consistent term list with free-energy renderings.
    Expand {
        #[arg(long, value_parser = parse_group)]
        group: PointGroupSpec,
        #[arg(long, default_value_t = 2)]
        cluster: usize,
        #[arg(long, default_value_t = 0)]
        gradient: usize,
        #[arg(long)]
        max_order: usize,
        /// Use traceless completions of the pair terms.
        #[arg(long)]
        orthogonal: bool,
        /// Embed an exact Gram certificate of the term list.
        #[arg(long)]
        certify: bool,
    },
    /// Run a self-check suite.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Project a built-in kernel's moment onto the orthogonal pair basis.
    Project {
        /// One of isotropic-gaussian, planted-bandlimited, rotation-distance-gaussian.
        #[arg(long)]
        kernel: String,
        #[arg(long, default_value_t = 0)]
        gradient: usize,
        #[arg(long)]
        max_order: usize,
        #[arg(long, default_value_t = 24)]
        n_alpha: usize,
        #[arg(long, default_value_t = 48)]
        n_beta: usize,
        #[arg(long, default_value_t = 48)]
        n_gamma: usize,
        #[arg(long, default_value_t = 16)]
        n_radial: usize,
        #[arg(long, default_value_t = 6)]
        n_theta: usize,
        #[arg(long, default_value_t = 12)]
        n_phi: usize,
        /// Skip the comparison against the coarsened grid.
        #[arg(long)]
        no_resolution_check: bool,
    },
}

// ---------------------------------------------------------------------------
// Documents

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisDocument {
    pub schema_version: String,
    pub command: String,
    pub order: usize,
    pub dimension: usize,
    pub tensors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSpaceRecord {
    pub order: usize,
    pub tensors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantsDocument {
    pub schema_version: String,
    pub command: String,
    pub group: String,
    pub spaces: Vec<InvariantSpaceRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypedSpaceRecord {
    pub order: usize,
    pub plus: Vec<String>,
    pub minus: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypesDocument {
    pub schema_version: String,
    pub command: String,
    pub group: String,
    /// "inversion" or the proper rotation 𝔨 with −𝔨 in the group.
    pub improper: String,
    pub spaces: Vec<TypedSpaceRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub method: String,
    pub rank: usize,
    pub expected: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermListDocument {
    pub schema_version: String,
    pub command: String,
    pub request: ExpansionRequest,
    pub slots: Vec<SlotRecord>,
    pub terms: Vec<EnergyTerm>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certificate: Option<CertificateSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyDocument {
    pub schema_version: String,
    pub command: String,
    pub suite: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectDocument {
    pub schema_version: String,
    pub command: String,
    #[serde(flatten)]
    pub report: CoefficientReport,
}

fn doc_header(command: &str) -> (String, String) {
    (SCHEMA_VERSION.to_string(), command.to_string())
}

fn sign_str(s: i8) -> &'static str {
    if s > 0 {
        "+1"
    } else {
        "-1"
    }
}

impl BasisDocument {
    pub fn text(&self) -> String {
        let mut out = format!("order {} basis, dimension {}\n", self.order, self.dimension);
        for (i, t) in self.tensors.iter().enumerate() {
            out.push_str(&format!("W{}_{} = {t}\n", self.order, i + 1));
        }
        out
    }
}

impl InvariantsDocument {
    pub fn text(&self) -> String {
        let mut out = format!("invariant tensors of {}\n", self.group);
        for s in &self.spaces {
            if s.tensors.is_empty() {
                out.push_str(&format!("order {}: (none)\n", s.order));
            }
            for t in &s.tensors {
                out.push_str(&format!("order {}: {t}\n", s.order));
            }
        }
        out
    }
}

impl TypesDocument {
    pub fn text(&self) -> String {
        let mut out = format!("types of {} ({})\ntensor | type\n", self.group, self.improper);
        for s in &self.spaces {
            for t in &s.plus {
                out.push_str(&format!("{t} | +1\n"));
            }
            for t in &s.minus {
                out.push_str(&format!("{t} | -1\n"));
            }
        }
        out
    }
}

impl TermListDocument {
    /// Cross pairs U^n ×^{n-1} V^n grouped by n.
    pub fn couplings(&self) -> Vec<(usize, Vec<(String, String)>)> {
        let mut out: Vec<(usize, Vec<(String, String)>)> = Vec::new();
        for t in &self.terms {
            if let TermDescriptor::M2(m) = &t.descriptor {
                if m.kind == Family::Cross && m.u.order == m.v.order && m.p + 1 == m.u.order {
                    let pair = (t.slots[0].name.clone(), t.slots[1].name.clone());
                    match out.iter_mut().find(|(n, _)| *n == m.u.order) {
                        Some((_, v)) => v.push(pair),
                        None => out.push((m.u.order, vec![pair])),
                    }
                }
            }
        }
        out.sort_by_key(|(n, _)| *n);
        out
    }

    pub fn text(&self) -> String {
        let r = &self.request;
        let mut out = format!(
            "{} cluster {} gradient {} max order {}{}: {} terms\n",
            r.group,
            r.cluster,
            r.gradient,
            r.max_order,
            if r.orthogonal { " (orthogonal)" } else { "" },
            self.terms.len()
        );
        for s in &self.slots {
            out.push_str(&format!("slot W{}[{}] = {} type {}\n", s.order, s.index, s.name, sign_str(s.sign)));
        }
        for (i, t) in self.terms.iter().enumerate() {
            out.push_str(&format!("{:>4}  {}\n      {}\n", i + 1, t.rendering, t.expansion));
        }
        for (n, pairs) in self.couplings() {
            let p: Vec<String> = pairs.iter().map(|(a, b)| format!("({a}, {b})")).collect();
            out.push_str(&format!("couplings {n}: {}\n", p.join(", ")));
        }
        if let Some(c) = &self.certificate {
            out.push_str(&format!(
                "certificate ({}): rank {} of {} {}\n",
                c.method,
                c.rank,
                c.expected,
                if c.passed { "ok" } else { "FAILED" }
            ));
        }
        out
    }
}

impl VerifyDocument {
    pub fn text(&self) -> String {
        let mut out = format!("suite {} seed {}\n", self.suite, self.seed);
        for c in &self.checks {
            out.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
        }
        out.push_str(if self.passed { "all checks passed\n" } else { "verification failed\n" });
        out
    }
}

impl ProjectDocument {
    pub fn text(&self) -> String {
        let r = &self.report;
        let g = &r.grid;
        let mut out = format!(
            "kernel {} k={} n={} grid α{} β{} γ{} r{} θ{} φ{}\n|M| = {:.6e}\n",
            r.kernel, r.k, r.n, g.n_alpha, g.n_beta, g.n_gamma, g.n_radial, g.n_theta, g.n_phi, r.moment_norm
        );
        out.push_str("coefficient      norm          term\n");
        for c in &r.coefficients {
            out.push_str(&format!("{:>+.6e}  {:.6e}  {}\n", c.coefficient, c.norm, c.label));
        }
        out.push_str("n'  residual      relative\n");
        for e in &r.residuals {
            out.push_str(&format!("{:<3} {:.6e}  {:.6e}\n", e.order, e.residual, e.relative));
        }
        out.push_str(&format!("opposite parity max {:.3e}\n", r.opposite_parity_max));
        if let Some(d) = r.refinement_delta {
            out.push_str(&format!("coarsening delta {d:.3e}\n"));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Commands

pub fn cmd_basis(order: usize) -> Result<BasisDocument> {
    let b = build_basis_w(order)?;
    let (schema_version, command) = doc_header("basis");
    Ok(BasisDocument {
        schema_version,
        command,
        order,
        dimension: b.len(),
        tensors: b.tensors.iter().map(|t| t.pretty()).collect(),
    })
}

fn orders(order: Option<usize>, max_order: Option<usize>) -> Result<Vec<usize>> {
    let list: Vec<usize> = match (order, max_order) {
        (Some(l), _) => vec![l],
        (None, Some(n)) => (0..=n).collect(),
        (None, None) => return Err(Error::Invalid("give --order or --max-order".into())),
    };
    if let Some(&m) = list.iter().max() {
        if m > INVARIANT_CAP {
            return Err(Error::Cap(format!("order {m} exceeds {INVARIANT_CAP}")));
        }
    }
    Ok(list)
}

pub fn cmd_invariants(group: &PointGroupSpec, order: Option<usize>, max_order: Option<usize>) -> Result<InvariantsDocument> {
    let spaces = orders(order, max_order)?
        .into_iter()
        .map(|l| {
            let ts = invariant_space_closed_form(group, l)?;
            Ok(InvariantSpaceRecord { order: l, tensors: ts.iter().map(display_quad).collect() })
        })
        .collect::<Result<Vec<_>>>()?;
    let (schema_version, command) = doc_header("invariants");
    Ok(InvariantsDocument { schema_version, command, group: group.to_string(), spaces })
}

pub fn cmd_types(group: &PointGroupSpec, order: Option<usize>, max_order: Option<usize>) -> Result<TypesDocument> {
    let real = realize(group)?;
    let imp = real
        .improper
        .as_ref()
        .ok_or_else(|| Error::Inapplicable(format!("{group} has no improper rotations; types are undefined")))?;
    let improper = if imp.inversion {
        "inversion".to_string()
    } else {
        let k = imp.k_float.to_f64();
        let rows: Vec<String> = k
            .iter()
            .map(|r| r.iter().map(|x| format!("{:.6}", x + 0.0)).collect::<Vec<_>>().join(" "))
            .collect();
        format!("k = [{}]", rows.join("; "))
    };
    let spaces = orders(order, max_order)?
        .into_iter()
        .map(|l| {
            let s = type_split(group, l)?;
            Ok(TypedSpaceRecord {
                order: l,
                plus: s.plus.iter().map(display_quad).collect(),
                minus: s.minus.iter().map(display_quad).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (schema_version, command) = doc_header("types");
    Ok(TypesDocument { schema_version, command, group: group.to_string(), improper, spaces })
}

pub fn cmd_expand(req: &ExpansionRequest, certify: bool) -> Result<TermListDocument> {
    let e = expand(req)?;
    let slots = e
        .slots
        .typed
        .iter()
        .enumerate()
        .flat_map(|(order, row)| {
            row.iter()
                .enumerate()
                .map(move |(index, t)| SlotRecord { order, index, name: t.name.clone(), sign: t.sign })
        })
        .collect();
    let certificate = if certify {
        let c = e.certify(GramMethod::Factored)?;
        Some(CertificateSummary { method: "factored".into(), rank: c.rank, expected: c.expected, passed: c.passed() })
    } else {
        None
    };
    let (schema_version, command) = doc_header("expand");
    Ok(TermListDocument { schema_version, command, request: req.clone(), slots, terms: e.terms, certificate })
}

pub fn cmd_verify(suite: &str, seed: u64) -> Result<VerifyDocument> {
    let r = run_suite(suite, seed)?;
    let (schema_version, command) = doc_header("verify");
    Ok(VerifyDocument { schema_version, command, suite: r.suite.clone(), seed, passed: r.passed(), checks: r.checks })
}

pub fn cmd_project(kernel: &str, k: usize, n: usize, grid: &QuadratureGrid, check: bool) -> Result<ProjectDocument> {
    let kern = builtin_kernel(kernel)?;
    let report = if check { project(&kern, k, n, grid)? } else { project_unchecked(&kern, k, n, grid)? };
    let (schema_version, command) = doc_header("project");
    Ok(ProjectDocument { schema_version, command, report })
}

/// Result of one invocation: the rendered document, diagnostics and exit code.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

fn render<T: Serialize>(doc: &T, text: impl Fn(&T) -> String, format: Format) -> Result<String> {
    Ok(match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(doc).map_err(|e| Error::Internal(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Text => text(doc),
    })
}

pub fn execute(cli: &Cli) -> Outcome {
    let mut out = Outcome::default();
    let result: Result<String> = (|| match &cli.command {
        Command::Basis { order } => render(&cmd_basis(*order)?, BasisDocument::text, cli.format),
        Command::Invariants { group, order, max_order } => {
            render(&cmd_invariants(group, *order, *max_order)?, InvariantsDocument::text, cli.format)
        }
        Command::Types { group, order, max_order } => {
            render(&cmd_types(group, *order, *max_order)?, TypesDocument::text, cli.format)
        }
        Command::Expand { group, cluster, gradient, max_order, orthogonal, certify } => {
            let req = ExpansionRequest {
                group: group.to_string(),
                cluster: *cluster,
                gradient: *gradient,
                max_order: *max_order,
                orthogonal: *orthogonal,
            };
            let doc = cmd_expand(&req, *certify)?;
            if let Some(c) = &doc.certificate {
                if !c.passed {
                    out.code = 4;
                    out.stderr.push_str(&format!("certificate failure: rank {} of {}\n", c.rank, c.expected));
                }
            }
            render(&doc, TermListDocument::text, cli.format)
        }
        Command::Verify { suite } => {
            let doc = cmd_verify(suite, cli.seed)?;
            if let Some(f) = doc.checks.iter().find(|c| !c.passed) {
                out.code = 1;
                out.stderr.push_str(&format!("first failing check: {} ({})\n", f.name, f.detail));
            }
            render(&doc, VerifyDocument::text, cli.format)
        }
        Command::Project {
            kernel,
            gradient,
            max_order,
            n_alpha,
            n_beta,
            n_gamma,
            n_radial,
            n_theta,
            n_phi,
            no_resolution_check,
        } => {
            if !BUILTIN_KERNELS.contains(&kernel.as_str()) {
                return Err(Error::Invalid(format!(
                    "unknown kernel '{kernel}'; built-ins are {}",
                    BUILTIN_KERNELS.join(", ")
                )));
            }
            let grid = QuadratureGrid {
                n_alpha: *n_alpha,
                n_beta: *n_beta,
                n_gamma: *n_gamma,
                n_radial: *n_radial,
                n_theta: *n_theta,
                n_phi: *n_phi,
            };
            let doc = cmd_project(kernel, *gradient, *max_order, &grid, !no_resolution_check)?;
            out.stderr.push_str(&format!(
                "{} kernel evaluations in {:.2} s\n",
                doc.report.kernel_evaluations,
                doc.report.runtime.as_secs_f64()
            ));
            render(&doc, ProjectDocument::text, cli.format)
        }
    })();
    match result {
        Ok(s) => out.stdout = s,
        Err(e) => {
            out.code = e.exit_code();
            out.stderr.push_str(&format!("error: {e}\n"));
            if let Error::UnderResolved(_) = e {
                out.stderr.push_str("hint: raise --n-alpha/--n-beta/--n-gamma or the radial counts\n");
            }
        }
    }
    out
}

/// Parses arguments, runs the command and writes the outputs; returns the
/// exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got '{v}'");
                return 2;
            }
        }
    }
    let out = execute(&cli);
    eprint!("{}", out.stderr);
    if out.code == 0 || !out.stdout.is_empty() {
        let written = match &cli.output {
            Some(p) => std::fs::write(p, &out.stdout).map_err(|e| e.to_string()),
            None => std::io::stdout().write_all(out.stdout.as_bytes()).map_err(|e| e.to_string()),
        };
        if let Err(e) = written {
            eprintln!("error: cannot write output: {e}");
            return 2;
        }
    }
    out.code
}
