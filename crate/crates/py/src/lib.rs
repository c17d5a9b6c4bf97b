//! Python bindings: operator kernels, cone geometry and the solver behind
//! a thin functional interface. Matrix arguments are nested real lists or
//! [re, im] pairs; everything heavier goes through the JSON problem config.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hesslab::num_complex::Complex64;

use hesslab::conegeo::{
    dichotomy_witness, estimate_rank, h_mu_profile, membership_cplus, membership_ctilde,
    CplusVerdict, CtildeVerdict, LevelSetHandle, DEFAULT_ZERO_THRESHOLD,
};
use hesslab::config::ProblemConfig;
use hesslab::estimates::{cns_margin, cns_trials};
use hesslab::solver::solve;
use hesslab::symfun::{
    self, check_structure, cone_contains, eval_jet, ConeSpec, LambdaVec, Membership,
    OperatorFamily, OperatorSpec,
};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_operator(family: &str, n: usize, k: Option<usize>, l: Option<usize>) -> PyResult<OperatorSpec> {
    let fam = match family {
        "sigmak" | "sigma_k_root" => OperatorFamily::SigmaKRoot {
            k: k.ok_or_else(|| PyValueError::new_err("k required"))?,
        },
        "quotient" | "sigma_quotient" => OperatorFamily::SigmaQuotient {
            k: k.ok_or_else(|| PyValueError::new_err("k required"))?,
            l: l.ok_or_else(|| PyValueError::new_err("l required"))?,
        },
        "koverkm1" | "sigma_k_over_km1" => OperatorFamily::SigmaKOverKm1 {
            k: k.ok_or_else(|| PyValueError::new_err("k required"))?,
        },
        "logrho" | "log_rho_k" => OperatorFamily::LogRhoK {
            k: k.ok_or_else(|| PyValueError::new_err("k required"))?,
        },
        "arctan" | "sum_arctan" => OperatorFamily::SumArctan,
        other => return Err(PyValueError::new_err(format!("unknown family '{other}'"))),
    };
    OperatorSpec::new(fam, n).map_err(err)
}

fn parse_cone(kind: &str, k: Option<usize>) -> PyResult<ConeSpec> {
    Ok(match kind {
        "gamma_k" => ConeSpec::GammaK(k.ok_or_else(|| PyValueError::new_err("k required"))?),
        "p_k" => ConeSpec::PK(k.ok_or_else(|| PyValueError::new_err("k required"))?),
        "gamma_n" => ConeSpec::GammaN,
        "half_space" => ConeSpec::HalfSpace,
        other => return Err(PyValueError::new_err(format!("unknown cone '{other}'"))),
    })
}

/// All elementary symmetric functions (sigma_0, ..., sigma_n).
#[pyfunction]
fn sigma_all(lambda: Vec<f64>) -> PyResult<Vec<f64>> {
    let lam = LambdaVec::new(lambda).map_err(err)?;
    Ok(symfun::sigma_all(&lam))
}

/// Product of all k-fold partial sums.
#[pyfunction]
fn rho_k(lambda: Vec<f64>, k: usize) -> PyResult<f64> {
    let lam = LambdaVec::new(lambda).map_err(err)?;
    symfun::rho_k(&lam, k).map_err(err)
}

/// Cone membership: "inside" | "boundary" | "outside".
#[pyfunction]
#[pyo3(signature = (kind, lambda, k=None))]
fn cone_membership(kind: &str, lambda: Vec<f64>, k: Option<usize>) -> PyResult<String> {
    let cone = parse_cone(kind, k)?;
    let lam = LambdaVec::new(lambda).map_err(err)?;
    Ok(match cone_contains(cone, &lam) {
        Membership::Inside => "inside",
        Membership::Boundary => "boundary",
        Membership::Outside => "outside",
    }
    .to_string())
}

/// Value, gradient and Hessian of the operator at a (sorted) tuple.
#[pyfunction]
#[pyo3(signature = (family, lambda, k=None, l=None))]
fn operator_jet(
    py: Python<'_>,
    family: &str,
    lambda: Vec<f64>,
    k: Option<usize>,
    l: Option<usize>,
) -> PyResult<Py<PyDict>> {
    let n = lambda.len();
    let op = parse_operator(family, n, k, l)?;
    let lam = LambdaVec::new(lambda).map_err(err)?;
    let jet = eval_jet(&op, &lam).map_err(err)?;
    let hess: Vec<Vec<f64>> = (0..n).map(|i| jet.hess[i * n..(i + 1) * n].to_vec()).collect();
    let d = PyDict::new(py);
    d.set_item("value", jet.value)?;
    d.set_item("grad", jet.grad)?;
    d.set_item("hess", hess)?;
    d.set_item("lambda_sorted", lam.entries().to_vec())?;
    Ok(d.into())
}

/// Sampled structure-condition report (positive gradient, concavity).
#[pyfunction]
#[pyo3(signature = (family, n, k=None, l=None, samples=500, seed=0))]
fn structure_report(
    py: Python<'_>,
    family: &str,
    n: usize,
    k: Option<usize>,
    l: Option<usize>,
    samples: usize,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let op = parse_operator(family, n, k, l)?;
    let rep = check_structure(&op, samples, seed).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("min_grad_entry", rep.min_grad_entry)?;
    d.set_item("max_hess_eig", rep.max_hess_eig)?;
    d.set_item("hess_scale", rep.hess_scale)?;
    d.set_item("midpoint_violations", rep.midpoint_violations)?;
    d.set_item("sup_estimate", rep.sup_estimate)?;
    Ok(d.into())
}

/// Rank of the tangent cone at infinity of {f > sigma}.
#[pyfunction]
#[pyo3(signature = (family, n, sigma, k=None, l=None, dirs=None))]
fn tangent_cone_rank(
    family: &str,
    n: usize,
    sigma: f64,
    k: Option<usize>,
    l: Option<usize>,
    dirs: Option<usize>,
) -> PyResult<usize> {
    let op = parse_operator(family, n, k, l)?;
    let handle = diagonal_handle(op, sigma)?;
    let est = estimate_rank(&handle, dirs.unwrap_or(512 * n), DEFAULT_ZERO_THRESHOLD)
        .map_err(err)?;
    Ok(est.rank)
}

fn diagonal_handle(op: OperatorSpec, sigma: f64) -> PyResult<LevelSetHandle> {
    let mut t = 1.0f64;
    let anchor = loop {
        let probe = vec![t; op.n];
        if symfun::cone_margin_raw(op.domain, &probe) > 0.0
            && symfun::eval_value(&op, &probe) > sigma + 1e-6 * (1.0 + sigma.abs())
        {
            break probe;
        }
        t *= 2.0;
        if t > 1e8 {
            return Err(PyRuntimeError::new_err("no diagonal anchor above sigma"));
        }
    };
    LevelSetHandle::new(op, sigma, &anchor).map_err(err)
}

/// Membership of mu in the tangent cone C_sigma^+ (and its enlargement).
#[pyfunction]
#[pyo3(signature = (family, n, sigma, mu, k=None, l=None))]
fn cone_at_infinity_membership(
    py: Python<'_>,
    family: &str,
    n: usize,
    sigma: f64,
    mu: Vec<f64>,
    k: Option<usize>,
    l: Option<usize>,
) -> PyResult<Py<PyDict>> {
    let op = parse_operator(family, n, k, l)?;
    let handle = diagonal_handle(op, sigma)?;
    let cplus = membership_cplus(&handle, &mu, &[10.0, 100.0, 1000.0]).map_err(err)?;
    let ctilde = membership_ctilde(&handle, &mu).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item(
        "cplus",
        match cplus {
            CplusVerdict::In { .. } => "in",
            CplusVerdict::Out { .. } => "out",
            CplusVerdict::Inconclusive => "inconclusive",
        },
    )?;
    if let CplusVerdict::In { epsilon, radius } = cplus {
        d.set_item("epsilon", epsilon)?;
        d.set_item("radius", radius)?;
    }
    d.set_item(
        "ctilde",
        match ctilde {
            CtildeVerdict::In => "in",
            CtildeVerdict::Out => "out",
            CtildeVerdict::EqualsRn => "equals_rn",
        },
    )?;
    Ok(d.into())
}

/// Dichotomy witness (delta, epsilon, violations) for mu over radius shells.
#[pyfunction]
#[pyo3(signature = (family, n, sigma, mu, k=None, l=None, shells=None))]
fn dichotomy(
    py: Python<'_>,
    family: &str,
    n: usize,
    sigma: f64,
    mu: Vec<f64>,
    k: Option<usize>,
    l: Option<usize>,
    shells: Option<Vec<f64>>,
) -> PyResult<Py<PyDict>> {
    let op = parse_operator(family, n, k, l)?;
    let handle = diagonal_handle(op, sigma)?;
    let shells = shells.unwrap_or_else(|| vec![10.0, 100.0, 1000.0]);
    let w = dichotomy_witness(&handle, &mu, &shells).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("delta", w.delta)?;
    d.set_item("epsilon", w.epsilon)?;
    d.set_item("radius_max", w.radius_max)?;
    d.set_item("samples_checked", w.samples_checked)?;
    d.set_item("violations", w.violations)?;
    Ok(d.into())
}

/// h_mu(r) table as a list of (r, h, branch_samples) tuples.
#[pyfunction]
#[pyo3(signature = (family, n, sigma, mu, radii, k=None, l=None))]
fn h_profile(
    family: &str,
    n: usize,
    sigma: f64,
    mu: Vec<f64>,
    radii: Vec<f64>,
    k: Option<usize>,
    l: Option<usize>,
) -> PyResult<Vec<(f64, f64, usize)>> {
    let op = parse_operator(family, n, k, l)?;
    let handle = diagonal_handle(op, sigma)?;
    let rows = h_mu_profile(&handle, &mu, &radii).map_err(err)?;
    Ok(rows.into_iter().map(|r| (r.radius, r.h_mu, r.branch_samples)).collect())
}

/// One concavity-inequality trial; entries of b as [re, im] pairs.
#[pyfunction]
fn concavity_margin(
    py: Python<'_>,
    family: &str,
    lambda: Vec<f64>,
    b: Vec<Vec<(f64, f64)>>,
    k: Option<usize>,
    l: Option<usize>,
) -> PyResult<Py<PyDict>> {
    let n = lambda.len();
    let op = parse_operator(family, n, k, l)?;
    let lam = LambdaVec::new(lambda).map_err(err)?;
    if b.len() != n || b.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err(format!("b must be {n} x {n}")));
    }
    let block: Vec<Complex64> = b
        .iter()
        .flatten()
        .map(|&(re, im)| Complex64::new(re, im))
        .collect();
    let m = cns_margin(&op, &lam, &block).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("left", m.left)?;
    d.set_item("right", m.right)?;
    d.set_item("margin", m.margin)?;
    Ok(d.into())
}

/// Randomized concavity-inequality trials; returns (violations, min_margin).
#[pyfunction]
#[pyo3(signature = (family, n, trials, k=None, l=None, seed=0))]
fn concavity_trials(
    family: &str,
    n: usize,
    trials: usize,
    k: Option<usize>,
    l: Option<usize>,
    seed: u64,
) -> PyResult<(usize, f64)> {
    let op = parse_operator(family, n, k, l)?;
    let rep = cns_trials(&op, trials, seed).map_err(err)?;
    Ok((rep.violations, rep.min_margin))
}

/// Run the continuity-method solver on a JSON problem config; returns the
/// report (and the recovery error when the instance is manufactured) as a
/// JSON string.
#[pyfunction]
fn solve_config(config_json: &str) -> PyResult<String> {
    let cfg = ProblemConfig::from_json(config_json).map_err(err)?;
    let built = cfg.build().map_err(err)?;
    let report = solve(&built.problem, &built.options).map_err(err)?;
    let mut v = serde_json::to_value(&report).map_err(err)?;
    if let Some(star) = &built.u_star {
        let mean_star = star.iter().sum::<f64>() / star.len() as f64;
        let e = report
            .u
            .iter()
            .zip(star)
            .map(|(a, b)| (a - (b - mean_star)).abs())
            .fold(0.0, f64::max);
        v["u_error_linf"] = serde_json::json!(e);
    }
    serde_json::to_string(&v).map_err(err)
}

#[pymodule]
fn hesslab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sigma_all, m)?)?;
    m.add_function(wrap_pyfunction!(rho_k, m)?)?;
    m.add_function(wrap_pyfunction!(cone_membership, m)?)?;
    m.add_function(wrap_pyfunction!(operator_jet, m)?)?;
    m.add_function(wrap_pyfunction!(structure_report, m)?)?;
    m.add_function(wrap_pyfunction!(tangent_cone_rank, m)?)?;
    m.add_function(wrap_pyfunction!(cone_at_infinity_membership, m)?)?;
    m.add_function(wrap_pyfunction!(dichotomy, m)?)?;
    m.add_function(wrap_pyfunction!(h_profile, m)?)?;
    m.add_function(wrap_pyfunction!(concavity_margin, m)?)?;
    m.add_function(wrap_pyfunction!(concavity_trials, m)?)?;
    m.add_function(wrap_pyfunction!(solve_config, m)?)?;
    Ok(())
}
