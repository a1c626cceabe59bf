//! Plain Rust entry points behind the Python module. Every operation returns
//! the same document the command line prints as JSON.

use std::str::FromStr;

use kernexp::cli::{
    cmd_basis, cmd_expand, cmd_invariants, cmd_project, cmd_types, cmd_verify, BasisDocument, InvariantsDocument,
    ProjectDocument, TermListDocument, TypesDocument, VerifyDocument,
};
use kernexp::contract::{pcross, pdot, traceless_pcross, traceless_pdot};
use kernexp::expander::ExpansionRequest;
use kernexp::groups::PointGroupSpec;
use kernexp::kernelproj::QuadratureGrid;
use kernexp::tensors::{build_basis_w, monomials, num_monomials};
use kernexp::{Error, Rational, Result, SymTensor};

pub const DEFAULT_SEED: u64 = 7;

pub fn group(name: &str) -> Result<PointGroupSpec> {
    PointGroupSpec::from_str(name)
}

pub fn basis(order: usize) -> Result<BasisDocument> {
    cmd_basis(order)
}

pub fn invariants(group_name: &str, order: Option<usize>, max_order: Option<usize>) -> Result<InvariantsDocument> {
    cmd_invariants(&group(group_name)?, order, max_order)
}

pub fn types(group_name: &str, order: Option<usize>, max_order: Option<usize>) -> Result<TypesDocument> {
    cmd_types(&group(group_name)?, order, max_order)
}

pub fn expand(
    group_name: &str,
    cluster: usize,
    gradient: usize,
    max_order: usize,
    orthogonal: bool,
    certify: bool,
) -> Result<TermListDocument> {
    let req = ExpansionRequest { group: group(group_name)?.to_string(), cluster, gradient, max_order, orthogonal };
    let doc = cmd_expand(&req, certify)?;
    if let Some(c) = doc.certificate.as_ref().filter(|c| !c.passed) {
        return Err(Error::Certificate(format!("Gram rank {} of {}", c.rank, c.expected)));
    }
    Ok(doc)
}

pub fn verify(suite: &str, seed: u64) -> Result<VerifyDocument> {
    cmd_verify(suite, seed)
}

pub fn project(kernel: &str, gradient: usize, max_order: usize, grid: &QuadratureGrid, check: bool) -> Result<ProjectDocument> {
    cmd_project(kernel, gradient, max_order, grid, check)
}

/// Exact symmetric tensor given by its coefficients on the monomial basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor(pub SymTensor<Rational>);

impl Tensor {
    /// Coefficients are rationals written as "p" or "p/q", in the order of
    /// [`Tensor::monomials`].
    pub fn parse(order: usize, coeffs: &[String]) -> Result<Self> {
        let want = num_monomials(order);
        if coeffs.len() != want {
            return Err(Error::Invalid(format!("order {order} needs {want} coefficients, got {}", coeffs.len())));
        }
        let c = coeffs
            .iter()
            .map(|s| Rational::from_str(s.trim()).map_err(|_| Error::Invalid(format!("not a rational: '{s}'"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor(SymTensor::from_coeffs(order, c)))
    }

    pub fn monomials(order: usize) -> Vec<[u32; 3]> {
        monomials(order).to_vec()
    }

    pub fn basis(order: usize) -> Result<Vec<Tensor>> {
        Ok(build_basis_w(order)?.tensors.into_iter().map(Tensor).collect())
    }

    pub fn order(&self) -> usize {
        self.0.order()
    }

    pub fn coefficients(&self) -> Vec<String> {
        self.0.coeffs().iter().map(|c| c.to_string()).collect()
    }

    pub fn is_traceless(&self) -> bool {
        self.0.check_traceless()
    }

    pub fn traceless_project(&self) -> Tensor {
        Tensor(self.0.traceless_project())
    }

    pub fn dot(&self, other: &Tensor, p: usize, traceless: bool) -> Result<Tensor> {
        let t = if traceless { traceless_pdot(&self.0, &other.0, p)? } else { pdot(&self.0, &other.0, p)? };
        Ok(Tensor(t))
    }

    pub fn cross(&self, other: &Tensor, p: usize, traceless: bool) -> Result<Tensor> {
        let t = if traceless { traceless_pcross(&self.0, &other.0, p)? } else { pcross(&self.0, &other.0, p)? };
        Ok(Tensor(t))
    }

    pub fn pretty(&self) -> String {
        self.0.pretty()
    }
}
