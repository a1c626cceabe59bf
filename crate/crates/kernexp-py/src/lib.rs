//! Python bindings. Documents come back as plain dicts with the same layout
//! as `kernexp --format json`.

pub mod api;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use kernexp::kernelproj::QuadratureGrid;
use kernexp::Error;

use crate::api::Tensor;

create_exception!(kernexp, KernexpError, PyException);
create_exception!(kernexp, CapExceeded, KernexpError);
create_exception!(kernexp, InvalidInput, KernexpError);
create_exception!(kernexp, Inapplicable, KernexpError);
create_exception!(kernexp, CertificateFailure, KernexpError);
create_exception!(kernexp, UnderResolved, KernexpError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Cap(_) => CapExceeded::new_err(msg),
        Error::Invalid(_) => InvalidInput::new_err(msg),
        Error::Inapplicable(_) => Inapplicable::new_err(msg),
        Error::Certificate(_) => CertificateFailure::new_err(msg),
        Error::UnderResolved(_) => UnderResolved::new_err(msg),
        Error::Internal(_) => KernexpError::new_err(msg),
    }
}

fn to_dict<T: Serialize>(py: Python<'_>, doc: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(doc).map_err(|e| KernexpError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

/// The traceless basis of the given order.
#[pyfunction]
fn basis(py: Python<'_>, order: usize) -> PyResult<Py<PyAny>> {
    to_dict(py, &api::basis(order).map_err(to_py)?)
}

/// Invariant traceless tensors of a point group, for one order or 0..=max_order.
#[pyfunction]
#[pyo3(signature = (group, order=None, max_order=None))]
fn invariants(py: Python<'_>, group: &str, order: Option<usize>, max_order: Option<usize>) -> PyResult<Py<PyAny>> {
    let doc = py.detach(|| api::invariants(group, order, max_order)).map_err(to_py)?;
    to_dict(py, &doc)
}

/// Invariants of the proper subgroup split by sign under the improper part.
#[pyfunction]
#[pyo3(signature = (group, order=None, max_order=None))]
fn types(py: Python<'_>, group: &str, order: Option<usize>, max_order: Option<usize>) -> PyResult<Py<PyAny>> {
    let doc = py.detach(|| api::types(group, order, max_order)).map_err(to_py)?;
    to_dict(py, &doc)
}

/// Symmetry-adapted energy terms. With `certify`, a failed Gram certificate
/// raises CertificateFailure.
#[pyfunction]
#[pyo3(signature = (group, max_order, cluster=2, gradient=0, orthogonal=false, certify=false))]
fn expand(
    py: Python<'_>,
    group: &str,
    max_order: usize,
    cluster: usize,
    gradient: usize,
    orthogonal: bool,
    certify: bool,
) -> PyResult<Py<PyAny>> {
    let doc = py.detach(|| api::expand(group, cluster, gradient, max_order, orthogonal, certify)).map_err(to_py)?;
    to_dict(py, &doc)
}

#[pyfunction]
#[pyo3(signature = (suite="all", seed=api::DEFAULT_SEED))]
fn verify(py: Python<'_>, suite: &str, seed: u64) -> PyResult<Py<PyAny>> {
    let doc = py.detach(|| api::verify(suite, seed)).map_err(to_py)?;
    to_dict(py, &doc)
}

/// Projects a built-in kernel onto the pair terms.
#[pyfunction]
#[pyo3(signature = (
    kernel, max_order, gradient=0,
    n_alpha=24, n_beta=48, n_gamma=48, n_radial=16, n_theta=6, n_phi=12,
    resolution_check=true,
))]
#[allow(clippy::too_many_arguments)]
fn project(
    py: Python<'_>,
    kernel: &str,
    max_order: usize,
    gradient: usize,
    n_alpha: usize,
    n_beta: usize,
    n_gamma: usize,
    n_radial: usize,
    n_theta: usize,
    n_phi: usize,
    resolution_check: bool,
) -> PyResult<Py<PyAny>> {
    let grid = QuadratureGrid { n_alpha, n_beta, n_gamma, n_radial, n_theta, n_phi };
    let doc = py.detach(|| api::project(kernel, gradient, max_order, &grid, resolution_check)).map_err(to_py)?;
    to_dict(py, &doc)
}

/// Exact symmetric tensor. Coefficients are strings such as "3" or "-1/3",
/// listed in the order given by `Tensor.monomials(order)`.
#[pyclass(name = "Tensor", module = "kernexp", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyTensor(Tensor);

#[pymethods]
impl PyTensor {
    #[new]
    fn new(order: usize, coefficients: Vec<String>) -> PyResult<Self> {
        Tensor::parse(order, &coefficients).map(PyTensor).map_err(to_py)
    }

    /// Exponent triples (a, b, c) of m1^a m2^b m3^c, in coefficient order.
    #[staticmethod]
    fn monomials(order: usize) -> Vec<(u32, u32, u32)> {
        Tensor::monomials(order).into_iter().map(|[a, b, c]| (a, b, c)).collect()
    }

    #[staticmethod]
    fn basis(order: usize) -> PyResult<Vec<PyTensor>> {
        Ok(Tensor::basis(order).map_err(to_py)?.into_iter().map(PyTensor).collect())
    }

    #[getter]
    fn order(&self) -> usize {
        self.0.order()
    }

    fn coefficients(&self) -> Vec<String> {
        self.0.coefficients()
    }

    fn is_traceless(&self) -> bool {
        self.0.is_traceless()
    }

    fn traceless_project(&self) -> PyTensor {
        PyTensor(self.0.traceless_project())
    }

    #[pyo3(signature = (other, p, traceless=false))]
    fn dot(&self, other: &PyTensor, p: usize, traceless: bool) -> PyResult<PyTensor> {
        self.0.dot(&other.0, p, traceless).map(PyTensor).map_err(to_py)
    }

    #[pyo3(signature = (other, p, traceless=false))]
    fn cross(&self, other: &PyTensor, p: usize, traceless: bool) -> PyResult<PyTensor> {
        self.0.cross(&other.0, p, traceless).map(PyTensor).map_err(to_py)
    }

    fn __str__(&self) -> String {
        self.0.pretty()
    }

    fn __repr__(&self) -> String {
        format!("Tensor({}, {:?})", self.0.order(), self.0.coefficients())
    }
}

#[pymodule]
#[pyo3(name = "kernexp")]
fn kernexp_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("KernexpError", py.get_type::<KernexpError>())?;
    m.add("CapExceeded", py.get_type::<CapExceeded>())?;
    m.add("InvalidInput", py.get_type::<InvalidInput>())?;
    m.add("Inapplicable", py.get_type::<Inapplicable>())?;
    m.add("CertificateFailure", py.get_type::<CertificateFailure>())?;
    m.add("UnderResolved", py.get_type::<UnderResolved>())?;
    m.add_class::<PyTensor>()?;
    m.add_function(wrap_pyfunction!(basis, m)?)?;
    m.add_function(wrap_pyfunction!(invariants, m)?)?;
    m.add_function(wrap_pyfunction!(types, m)?)?;
    m.add_function(wrap_pyfunction!(expand, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    Ok(())
}
