//! Python module `qtrefftz_py`: problems, meshes, basis construction and the
//! verification helpers of the core crate.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qtrefftz::explicit::ExplicitMethod;
use qtrefftz::mesh::TriMesh;
use qtrefftz::method::{self, BuildOptions};
use qtrefftz::verify::{self, Curve};
use qtrefftz::{algebraic, flops, FlopLedger, GradedPoly2, Method, ProblemConfig, QTFunction, C64};

fn err(e: qtrefftz::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_method(name: &str) -> PyResult<Method> {
    name.parse().map_err(err)
}

/// Acoustic parameters plus the coefficient `1/c²`.
#[pyclass(name = "Problem", from_py_object)]
#[derive(Clone)]
pub struct PyProblem {
    inner: ProblemConfig,
}

#[pymethods]
impl PyProblem {
    /// Unit-square problem with a polynomial coefficient and a closed-form solution.
    #[staticmethod]
    fn case1() -> Self {
        Self {
            inner: ProblemConfig::case1(),
        }
    }

    /// Gaussian jet with a seam in its second x-derivative at x = 150.
    #[staticmethod]
    fn case2() -> Self {
        Self {
            inner: ProblemConfig::case2(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ProblemConfig::from_json(text).map(|inner| Self { inner }).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho
    }

    /// Provider value (in its own scaling) at a point.
    fn value(&self, x: f64, y: f64) -> f64 {
        self.inner.provider.value([x, y])
    }

    /// `1/c²` at a point.
    fn inv_c_sq(&self, x: f64, y: f64) -> PyResult<f64> {
        let params = self.inner.params().map_err(err)?;
        Ok(self.inner.provider.inv_c_sq([x, y], &params))
    }

    /// Taylor components of the provider about `x0` up to order `q`; entry
    /// `l` of component `k` multiplies `X^l Y^(k-l)`.
    fn taylor(&self, x0: (f64, f64), q: usize) -> Vec<Vec<f64>> {
        let t = self.inner.provider.taylor([x0.0, x0.1], q);
        t.components().iter().map(|c| c.iter().map(|z| z.re).collect()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Problem(omega={}, rho={})", self.inner.omega, self.inner.rho)
    }
}

/// One basis function `(p, vx, vy)` in local coordinates about its center.
#[pyclass(name = "QTFunction", from_py_object)]
#[derive(Clone)]
pub struct PyQTFunction {
    inner: QTFunction,
}

fn components(p: &GradedPoly2) -> Vec<Vec<C64>> {
    p.components().to_vec()
}

#[pymethods]
impl PyQTFunction {
    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn center(&self) -> (f64, f64) {
        let c = self.inner.p.center();
        (c[0], c[1])
    }

    /// Graded coefficients of the pressure.
    #[getter]
    fn p(&self) -> Vec<Vec<C64>> {
        components(&self.inner.p)
    }

    #[getter]
    fn vx(&self) -> Vec<Vec<C64>> {
        components(&self.inner.vx)
    }

    #[getter]
    fn vy(&self) -> Vec<Vec<C64>> {
        components(&self.inner.vy)
    }

    /// `(p, vx, vy)` at a global point.
    fn eval(&self, x: f64, y: f64) -> (C64, C64, C64) {
        let [p, vx, vy] = self.inner.eval([x, y]);
        (p, vx, vy)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        let c = self.inner.p.center();
        format!("QTFunction(d={}, center=({}, {}))", self.inner.d, c[0], c[1])
    }
}

fn unwrap_basis(basis: &[PyQTFunction]) -> Vec<QTFunction> {
    basis.iter().map(|f| f.inner.clone()).collect()
}

/// Structured triangular mesh.
#[pyclass(name = "Mesh")]
pub struct PyMesh {
    inner: TriMesh,
}

#[pymethods]
impl PyMesh {
    /// `n × n` squares on the unit square, each split into two triangles.
    #[staticmethod]
    fn square(n: usize) -> PyResult<Self> {
        TriMesh::structured_square(n).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn rect(bounds: [[f64; 2]; 2], nx: usize, ny: usize) -> PyResult<Self> {
        TriMesh::structured_rect(bounds, nx, ny).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        TriMesh::from_json(text).map(|inner| Self { inner }).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn centroids(&self) -> Vec<(f64, f64)> {
        self.inner.centroids.iter().map(|c| (c[0], c[1])).collect()
    }

    #[getter]
    fn hmax(&self) -> f64 {
        self.inner.hmax
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Local basis of `2d+1` functions about `x0` with one of the methods
/// `expl1`, `expl2`, `alge1`, `alge2`.
#[pyfunction]
#[pyo3(signature = (method, d, x0, problem, rank_tol=None))]
fn build_basis(
    method: &str,
    d: usize,
    x0: (f64, f64),
    problem: &PyProblem,
    rank_tol: Option<f64>,
) -> PyResult<Vec<PyQTFunction>> {
    let m = parse_method(method)?;
    let params = problem.inner.params().map_err(err)?;
    let basis = method::build_basis(
        m,
        d,
        [x0.0, x0.1],
        &problem.inner.provider,
        &params,
        BuildOptions { rank_tol },
        &mut FlopLedger::new(),
    )
    .map_err(err)?;
    Ok(basis.into_iter().map(|inner| PyQTFunction { inner }).collect())
}

/// Largest coefficient of the two polynomial identities every basis
/// function must satisfy exactly.
#[pyfunction]
fn check_identities(basis: Vec<PyQTFunction>, problem: &PyProblem) -> PyResult<f64> {
    let params = problem.inner.params().map_err(err)?;
    Ok(verify::check_identities(&unwrap_basis(&basis), &params))
}

/// Closed-form operation counts at degree `d`.
#[pyfunction]
fn closed_forms<'py>(py: Python<'py>, d: usize) -> PyResult<Bound<'py, PyDict>> {
    let r = flops::closed_forms(d).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("d", r.d)?;
    out.set_item("t", r.t)?;
    out.set_item("t_tilde", r.t_tilde)?;
    out.set_item("expl1", r.expl1_total)?;
    out.set_item("expl2", r.expl2_total)?;
    out.set_item("expl1_basis", r.expl1_basis)?;
    out.set_item("expl2_basis", r.expl2_basis)?;
    out.set_item("alge1_model", r.alge1_model())?;
    out.set_item("alge2_model", r.alge2_model())?;
    Ok(out)
}

/// Operations counted while building one basis function with `expl1` or
/// `expl2`; raises if they differ from the closed forms.
#[pyfunction]
fn measure_flops(method: &str, d: usize, x0: (f64, f64), problem: &PyProblem) -> PyResult<u64> {
    let m = match parse_method(method)? {
        Method::Expl1 => ExplicitMethod::Coupled,
        Method::Expl2 => ExplicitMethod::Decoupled,
        other => return Err(PyValueError::new_err(format!("{other} has no operation ledger"))),
    };
    let params = problem.inner.params().map_err(err)?;
    let kappa = problem.inner.provider.kappa([x0.0, x0.1], d, &params);
    flops::measure(m, d, &kappa, &params).map(|l| l.total()).map_err(err)
}

/// Dimensions of the kernels of `Q^F_d` and `Q^S_d` at `x0`.
#[pyfunction]
fn kernel_dims(d: usize, x0: (f64, f64), problem: &PyProblem) -> PyResult<(usize, usize)> {
    let params = problem.inner.params().map_err(err)?;
    let kappa = problem.inner.provider.kappa([x0.0, x0.1], d, &params);
    algebraic::kernel_dims(d, &kappa, &params).map_err(err)
}

/// Max over the basis of the normalized first-order residual on circles of
/// the given radii about the basis center.
#[pyfunction]
#[pyo3(signature = (basis, problem, radii, samples=verify::DEFAULT_SAMPLES))]
fn residual_decay(basis: Vec<PyQTFunction>, problem: &PyProblem, radii: Vec<f64>, samples: usize) -> PyResult<Vec<f64>> {
    let params = problem.inner.params().map_err(err)?;
    verify::residual_decay(&unwrap_basis(&basis), &problem.inner.provider, &params, &radii, samples)
        .map(|c| c.values)
        .map_err(err)
}

/// Log-log slope of `values` against decreasing `radii`, ignoring the
/// roundoff plateau. Returns `(slope, plateau, points_used)`.
#[pyfunction]
fn fit_slope(radii: Vec<f64>, values: Vec<f64>) -> PyResult<(Option<f64>, Option<f64>, usize)> {
    if radii.len() != values.len() {
        return Err(PyValueError::new_err("radii and values differ in length"));
    }
    let fit = verify::fit_slope(&Curve { radii, values });
    Ok((fit.slope, fit.plateau, fit.used))
}

/// `h/2` down to `h/512` in steps of `√2`.
#[pyfunction]
fn default_radii(h: f64) -> Vec<f64> {
    verify::default_radii(h)
}

#[pymodule]
fn qtrefftz_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    init(m)
}

/// Registers every class and function on `m`.
pub fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyQTFunction>()?;
    m.add_class::<PyMesh>()?;
    m.add_function(wrap_pyfunction!(build_basis, m)?)?;
    m.add_function(wrap_pyfunction!(check_identities, m)?)?;
    m.add_function(wrap_pyfunction!(closed_forms, m)?)?;
    m.add_function(wrap_pyfunction!(measure_flops, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_dims, m)?)?;
    m.add_function(wrap_pyfunction!(residual_decay, m)?)?;
    m.add_function(wrap_pyfunction!(fit_slope, m)?)?;
    m.add_function(wrap_pyfunction!(default_radii, m)?)?;
    m.add("METHODS", Method::ALL.iter().map(|m| m.name()).collect::<Vec<_>>())?;
    Ok(())
}
