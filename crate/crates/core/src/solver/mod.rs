//! Continuity-method damped-Newton solver for
//! f(lambda(chi[u] + i d dbar u)) = psi + b on the torus.
//!
//! The additive constant b is fixed by projection at every iterate (the
//! mean of F - psi_t), which keeps the linearized systems compatible with
//! mean-zero Newton increments. The continuity path interpolates the right
//! hand side from the trivially solvable level psi_0 = F(g[0]).

pub mod chi;
mod linear;

pub use chi::{build_gauduchon_chi, ChiEval, ChiSpec, GauduchonAssembly};
pub use linear::{gmres, GmresOptions, SpectralPrecond};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermgeo::{
    eigenvalues_wrt_metric, LambdaField, MatrixField, MetricField, SpectralGrid,
};
use crate::linalg;
use crate::symfun::{
    cone_margin_sorted_desc, eval_grad, eval_value, sup_along_diagonal, OperatorSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    MeanZero,
    SupZero,
}

/// A fully specified problem instance.
pub struct ProblemSpec {
    pub metric: MetricField,
    pub op: OperatorSpec,
    pub chi: ChiSpec,
    pub psi: Vec<f64>,
    pub normalization: Normalization,
}

impl ProblemSpec {
    pub fn new(
        metric: MetricField,
        op: OperatorSpec,
        chi: ChiSpec,
        psi: Vec<f64>,
        normalization: Normalization,
    ) -> Result<Self> {
        let grid = metric.grid().clone();
        if op.n != grid.n() {
            return Err(Error::DimensionMismatch { expected: grid.n(), got: op.n });
        }
        if psi.len() != grid.num_points() {
            return Err(Error::DimensionMismatch { expected: grid.num_points(), got: psi.len() });
        }
        let psi_max = psi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let psi_min = psi.iter().cloned().fold(f64::INFINITY, f64::min);
        let sup = sup_along_diagonal(&op, 1e7)?;
        if !(psi_max < sup) {
            return Err(Error::InvalidSpec(format!(
                "psi reaches {psi_max}, at or above sup f = {sup}"
            )));
        }
        // psi must stay above the boundary supremum of f; the level-set
        // handle construction performs the ray probing
        let mut t = 1.0f64;
        let anchor = loop {
            let probe = vec![t; op.n];
            if crate::symfun::cone_margin_raw(op.domain, &probe) > 0.0
                && eval_value(&op, &probe) > psi_min + 1e-6 * (1.0 + psi_min.abs())
            {
                break probe;
            }
            t *= 2.0;
            if t > 1e8 {
                return Err(Error::InvalidSpec("no diagonal anchor above min psi".into()));
            }
        };
        crate::conegeo::LevelSetHandle::new(op, psi_min, &anchor).map_err(|e| {
            Error::InvalidSpec(format!("psi is not admissible for the operator: {e}"))
        })?;
        Ok(Self { metric, op, chi, psi, normalization })
    }

    /// Manufactured instance: psi is produced from a chosen solution and
    /// the pair still runs the full validation.
    pub fn manufactured(
        metric: MetricField,
        op: OperatorSpec,
        chi: ChiSpec,
        normalization: Normalization,
        u_star: &[f64],
    ) -> Result<Self> {
        let chi_eval = ChiEval::build(&chi, &metric)?;
        let psi = manufacture_with(&metric, &op, &chi_eval, u_star)?;
        Self::new(metric, op, chi, psi, normalization)
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.metric.grid()
    }
}

/// g[u] = chi[u] + i d dbar u, Hermitian-symmetrized.
pub fn assemble_g(problem: &ProblemSpec, u: &[f64]) -> Result<MatrixField> {
    let chi_eval = ChiEval::build(&problem.chi, &problem.metric)?;
    Ok(assemble_with(problem.grid(), &chi_eval, u).0)
}

fn assemble_with(
    grid: &SpectralGrid,
    chi_eval: &ChiEval,
    u: &[f64],
) -> (MatrixField, Option<Vec<Vec<Complex64>>>) {
    let n = grid.n();
    let cdata: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let ddbar = grid.ddbar(&cdata);
    let grads = if chi_eval.depends_on_gradient() {
        Some(grid.grad_holo(&cdata))
    } else {
        None
    };
    let mut g = match (chi_eval, &grads) {
        (ChiEval::Fixed(f), _) => f.clone(),
        (ChiEval::Gauduchon(_), Some(gr)) => chi_eval.evaluate(gr, grid),
        _ => unreachable!(),
    };
    g.data
        .par_chunks_mut(n * n)
        .zip(ddbar.par_chunks(n * n))
        .for_each(|(blk, dd)| {
            for k in 0..n * n {
                blk[k] += dd[k];
            }
            linalg::hermitize(n, blk);
        });
    (g, grads)
}

impl ChiEval {
    fn depends_on_gradient(&self) -> bool {
        matches!(self, ChiEval::Gauduchon(_))
    }
}

/// Eigenvalues, operator values and the worst cone margin of an iterate.
struct EvalValues {
    lambda: LambdaField,
    f: Vec<f64>,
    min_margin: f64,
    g_max_abs: f64,
}

fn eval_values(op: &OperatorSpec, metric: &MetricField, g: &MatrixField) -> Result<EvalValues> {
    let n = g.n;
    let npts = g.grid.num_points();
    let flat = metric.is_flat();
    let mut lambda = vec![0.0f64; npts * n];
    let mut f = vec![0.0f64; npts];
    let results: Vec<(f64, f64)> = lambda
        .par_chunks_mut(n)
        .zip(f.par_iter_mut())
        .enumerate()
        .map(|(pt, (lam, fv))| {
            let block = g.block(pt);
            let mut eigs = [0.0; linalg::MAX_N];
            if flat {
                linalg::eigh_values(n, block, &mut eigs);
            } else {
                let mut r = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
                if linalg::cholesky_upper(n, metric.g().block(pt), &mut r).is_err() {
                    return (f64::NEG_INFINITY, 0.0);
                }
                let mut mbuf = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
                linalg::whiten(n, &r, block, &mut mbuf);
                linalg::hermitize(n, &mut mbuf[..n * n]);
                linalg::eigh_values(n, &mbuf, &mut eigs);
            }
            lam.copy_from_slice(&eigs[..n]);
            let margin = cone_margin_sorted_desc(op.domain, &eigs[..n]);
            if margin > 0.0 {
                *fv = eval_value(op, &eigs[..n]);
            }
            let gmax = block.iter().map(|v| v.norm()).fold(0.0, f64::max);
            (margin, gmax)
        })
        .collect();
    let mut min_margin = f64::INFINITY;
    let mut g_max_abs = 0.0f64;
    for &(m, gm) in &results {
        min_margin = min_margin.min(m);
        g_max_abs = g_max_abs.max(gm);
    }
    if min_margin <= 0.0 {
        let point = results.iter().position(|&(m, _)| m == min_margin).unwrap_or(0);
        return Err(Error::NotAdmissible { point, margin: min_margin });
    }
    Ok(EvalValues {
        lambda: LambdaField { grid: g.grid.clone(), n, data: lambda },
        f,
        min_margin,
        g_max_abs,
    })
}

/// Derivative matrices Phi(z) with F^{i jbar} = Phi_{ji} = conj(Phi_{ij}),
/// plus the grid average of tr Phi for the preconditioner.
fn eval_phi(op: &OperatorSpec, metric: &MetricField, g: &MatrixField) -> Result<(MatrixField, f64)> {
    let n = g.n;
    let npts = g.grid.num_points();
    let flat = metric.is_flat();
    let mut phi = MatrixField::zeros(&g.grid);
    let traces: Vec<f64> = phi
        .data
        .par_chunks_mut(n * n)
        .enumerate()
        .map(|(pt, out)| {
            let block = g.block(pt);
            let mut eigs = [0.0; linalg::MAX_N];
            let mut vecs = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
            let mut grad = [0.0; linalg::MAX_N];
            let mut x = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
            if flat {
                linalg::eigh(n, block, &mut eigs, &mut vecs);
                eval_grad(op, &eigs[..n], &mut grad);
                assemble_projector_sum(n, &vecs, &grad, &mut x);
                out.copy_from_slice(&x[..n * n]);
            } else {
                let mut r = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
                linalg::cholesky_upper(n, metric.g().block(pt), &mut r)
                    .expect("metric validated at construction");
                let mut mbuf = [Complex64::new(0.0, 0.0); linalg::MAX_N * linalg::MAX_N];
                linalg::whiten(n, &r, block, &mut mbuf);
                linalg::hermitize(n, &mut mbuf[..n * n]);
                linalg::eigh(n, &mbuf, &mut eigs, &mut vecs);
                eval_grad(op, &eigs[..n], &mut grad);
                assemble_projector_sum(n, &vecs, &grad, &mut x);
                linalg::unwhiten_dual(n, &r, &x, out);
            }
            (0..n).map(|i| out[i * n + i].re).sum::<f64>()
        })
        .collect();
    let mean_trace = traces.iter().sum::<f64>() / npts as f64;
    Ok((phi, mean_trace))
}

/// X = U diag(f_p) U^H from eigenvectors and the gradient.
fn assemble_projector_sum(n: usize, vecs: &[Complex64], grad: &[f64], out: &mut [Complex64]) {
    out[..n * n].fill(Complex64::new(0.0, 0.0));
    for p in 0..n {
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] += grad[p] * vecs[i * n + p] * vecs[j * n + p].conj();
            }
        }
    }
}

/// psi := F(g[u*]) pointwise; errors if u* is not admissible.
pub fn manufacture(problem: &ProblemSpec, u_star: &[f64]) -> Result<Vec<f64>> {
    let chi_eval = ChiEval::build(&problem.chi, &problem.metric)?;
    manufacture_with(&problem.metric, &problem.op, &chi_eval, u_star)
}

fn manufacture_with(
    metric: &MetricField,
    op: &OperatorSpec,
    chi_eval: &ChiEval,
    u_star: &[f64],
) -> Result<Vec<f64>> {
    let (g, _) = assemble_with(metric.grid(), chi_eval, u_star);
    let ev = eval_values(op, metric, &g)?;
    Ok(ev.f)
}

/// The linearization F^{i jbar} d_i d_jbar (.) plus the gradient-slot terms
/// of a u-dependent chi, evaluated at the iterate u in direction du.
pub fn linearized_apply(problem: &ProblemSpec, u: &[f64], du: &[f64]) -> Result<Vec<f64>> {
    let chi_eval = ChiEval::build(&problem.chi, &problem.metric)?;
    let (g, _) = assemble_with(problem.grid(), &chi_eval, u);
    eval_values(&problem.op, &problem.metric, &g)?; // admissibility gate
    let (phi, _) = eval_phi(&problem.op, &problem.metric, &g)?;
    let grad_coeff = gradient_coefficient_fields(&chi_eval, &phi);
    Ok(apply_linearized(problem.grid(), &phi, grad_coeff.as_deref(), du))
}

/// Scalar fields c_alpha(z) = tr(Phi(z) A^alpha(z)); the conjugate slot
/// contributes the conjugate, so the operator picks up 2 Re{c_alpha d_alpha}.
fn gradient_coefficient_fields(chi_eval: &ChiEval, phi: &MatrixField) -> Option<Vec<Vec<Complex64>>> {
    let ChiEval::Gauduchon(assembly) = chi_eval else {
        return None;
    };
    let n = phi.n;
    let coeffs = assembly.gradient_coefficients();
    let npts = phi.grid.num_points();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); npts]; n];
    for (alpha, field) in coeffs.iter().enumerate() {
        for pt in 0..npts {
            let w = phi.block(pt);
            let a = field.block(pt);
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    // sum_{ij} F^{i jbar} A_{i jbar} = sum_{ij} W_{ji} A_{ij}
                    s += w[j * n + i] * a[i * n + j];
                }
            }
            out[alpha][pt] = s;
        }
    }
    Some(out)
}

fn apply_linearized(
    grid: &SpectralGrid,
    phi: &MatrixField,
    grad_coeff: Option<&[Vec<Complex64>]>,
    du: &[f64],
) -> Vec<f64> {
    let hat = grid.fft_of_real(du);
    apply_linearized_from_hat(grid, phi, grad_coeff, &hat)
}

/// The linearized operator evaluated from the spectrum of the direction:
/// lets callers fold the spectral preconditioner into the same transform.
fn apply_linearized_from_hat(
    grid: &SpectralGrid,
    phi: &MatrixField,
    grad_coeff: Option<&[Vec<Complex64>]>,
    hat: &[Complex64],
) -> Vec<f64> {
    let n = grid.n();
    let streams = grid.ddbar_streams_from_hat(hat);
    let mut out = vec![0.0f64; grid.num_points()];
    // tr(Phi H) with Hermitian Phi and H: diagonal terms once, the strict
    // upper triangle contributes twice its real part
    out.par_iter_mut().enumerate().for_each(|(pt, o)| {
        let w = phi.block(pt);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..=i {
                let h = streams[SpectralGrid::pair_index(i, j)][pt];
                let t = (w[j * n + i] * h).re;
                s += if i == j { t } else { 2.0 * t };
            }
        }
        *o = s;
    });
    if let Some(coeffs) = grad_coeff {
        let grads = grid.grad_holo_from_hat(hat);
        for (c_alpha, g_alpha) in coeffs.iter().zip(&grads) {
            out.par_iter_mut().enumerate().for_each(|(pt, o)| {
                *o += 2.0 * (c_alpha[pt] * g_alpha[pt]).re;
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol_linf: f64,
    pub max_newton: usize,
    pub max_backtrack: usize,
    pub gmres: GmresOptions,
    pub t_min_step: f64,
    /// admissibility floor delta_adm = adm_factor * (1 + max |g|)
    pub adm_factor: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_linf: 1e-9,
            max_newton: 50,
            max_backtrack: 30,
            gmres: GmresOptions::default(),
            t_min_step: 1e-6,
            adm_factor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualSample {
    pub t: f64,
    pub newton_iter: usize,
    pub l2: f64,
    pub linf: f64,
}

/// Converged solution with the observables the estimates harness consumes.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    #[serde(skip)]
    pub u: Vec<f64>,
    pub b: f64,
    pub iterations: usize,
    /// sup-norm of F(g[u]) - psi - b including the gauge (mean/checkerboard)
    /// modes; bounded below by the truncation content of F and psi
    pub residual_linf: f64,
    /// sup-norm of the live-mode part of the residual, the quantity the
    /// Newton iteration drives below the configured tolerance
    pub residual_live_linf: f64,
    pub residual_history: Vec<ResidualSample>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// max over the grid of the largest |eigenvalue| of i d dbar u wrt g
    pub max_dd_u: f64,
    /// max over the grid of |grad u| with |grad u|^2 = 2 g^{i jbar} u_i u_jbar
    pub max_grad_u: f64,
    pub osc_u: f64,
    pub admissibility_margin: f64,
    pub grid_n: usize,
    pub grid_m: usize,
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn linf(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn solve(problem: &ProblemSpec, opts: &SolveOptions) -> Result<SolutionReport> {
    let grid = problem.grid().clone();
    let npts = grid.num_points();
    let chi_eval = ChiEval::build(&problem.chi, &problem.metric)?;

    let mut u = vec![0.0f64; npts];
    let (g0, _) = assemble_with(&grid, &chi_eval, &u);
    let ev0 = eval_values(&problem.op, &problem.metric, &g0)
        .map_err(|_| Error::NoAdmissibleStart)?;
    if ev0.min_margin < opts.adm_factor * (1.0 + ev0.g_max_abs) {
        return Err(Error::NoAdmissibleStart);
    }
    let psi0 = ev0.f.clone();

    let mut cur = ev0;
    let mut t = 0.0f64;
    let mut dt = 1.0f64;
    let mut history: Vec<ResidualSample> = Vec::new();
    let mut iterations = 0usize;
    // convergence is judged on the live modes: the mean and the Nyquist
    // checkerboards are gauge directions the discrete residual keeps
    // regardless of u (they carry the truncation content of F and psi)
    let projector = SpectralPrecond::new(&grid, 1.0);

    while t < 1.0 {
        let t_try = (t + dt).min(1.0);
        let psi_t: Vec<f64> = psi0
            .iter()
            .zip(&problem.psi)
            .map(|(a, b)| (1.0 - t_try) * a + t_try * b)
            .collect();

        let u_snapshot = u.clone();
        match newton_at_level(
            problem, &chi_eval, &grid, &projector, &mut u, &mut cur, &psi_t, t_try, opts,
            &mut history, &mut iterations,
        ) {
            Ok(()) => {
                t = t_try;
                if t >= 1.0 {
                    break;
                }
                dt = (dt * 2.0).min(1.0 - t);
            }
            Err(Error::NewtonDiverged { .. }) | Err(Error::NotAdmissible { .. }) => {
                u = u_snapshot;
                let (g, _) = assemble_with(&grid, &chi_eval, &u);
                cur = eval_values(&problem.op, &problem.metric, &g)?;
                dt *= 0.5;
                if dt < opts.t_min_step {
                    return Err(Error::ContinuityStalled { t, min_step: opts.t_min_step });
                }
            }
            Err(e) => return Err(e),
        }
    }

    // final normalization (pure gauge: F depends on derivatives of u only)
    match problem.normalization {
        Normalization::MeanZero => {
            let mu = mean(&u);
            u.iter_mut().for_each(|x| *x -= mu);
        }
        Normalization::SupZero => {
            let mx = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            u.iter_mut().for_each(|x| *x -= mx);
        }
    }

    let diff: Vec<f64> = cur.f.iter().zip(&problem.psi).map(|(a, b)| a - b).collect();
    let b = mean(&diff);
    let resid: Vec<f64> = diff.iter().map(|x| x - b).collect();
    let resid_live = projector.project(&resid);

    // observables
    let cdata: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let dd = grid.ddbar(&cdata);
    let hu = MatrixField { grid: grid.clone(), n: grid.n(), data: dd };
    let dd_eigs = eigenvalues_wrt_metric(&hu, &problem.metric)?;
    let max_dd_u = dd_eigs.data.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let grads = grid.grad_holo(&cdata);
    let n = grid.n();
    let mut max_grad = 0.0f64;
    for pt in 0..npts {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += (problem.metric.up(pt, i, j) * grads[i][pt] * grads[j][pt].conj()).re;
            }
        }
        max_grad = max_grad.max((2.0 * s).max(0.0).sqrt());
    }
    let osc = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - u.iter().cloned().fold(f64::INFINITY, f64::min);

    Ok(SolutionReport {
        b,
        iterations,
        residual_linf: linf(&resid),
        residual_live_linf: linf(&resid_live),
        residual_history: history,
        lambda_min: cur.lambda.min_entry(),
        lambda_max: cur.lambda.max_entry(),
        max_dd_u,
        max_grad_u: max_grad,
        osc_u: osc,
        admissibility_margin: cur.min_margin,
        grid_n: grid.n(),
        grid_m: grid.m(),
        u,
    })
}

#[allow(clippy::too_many_arguments)]
fn newton_at_level(
    problem: &ProblemSpec,
    chi_eval: &ChiEval,
    grid: &SpectralGrid,
    projector: &SpectralPrecond,
    u: &mut Vec<f64>,
    cur: &mut EvalValues,
    psi_t: &[f64],
    t: f64,
    opts: &SolveOptions,
    history: &mut Vec<ResidualSample>,
    iterations: &mut usize,
) -> Result<()> {
    for iter in 0..opts.max_newton {
        let diff: Vec<f64> = cur.f.iter().zip(psi_t).map(|(a, b)| a - b).collect();
        let b = mean(&diff);
        let r = projector.project(&diff.iter().map(|x| x - b).collect::<Vec<f64>>());
        let l2 = rms(&r);
        let li = linf(&r);
        history.push(ResidualSample { t, newton_iter: iter, l2, linf: li });
        if li <= opts.tol_linf {
            return Ok(());
        }

        let (g, _) = assemble_with(grid, chi_eval, u);
        let (phi, mean_tr) = eval_phi(&problem.op, &problem.metric, &g)?;
        let grad_coeff = gradient_coefficient_fields(chi_eval, &phi);
        let gamma = (mean_tr / grid.n() as f64).max(1e-12);
        let precond = SpectralPrecond::new(grid, gamma);
        // the preconditioner is folded into the operator spectrum-side, so
        // GMRES runs on A M^{-1} with an identity inner preconditioner
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let apply = |v: &[f64]| -> Vec<f64> {
            let mut hat = grid.fft_of_real(v);
            precond.scale_hat(&mut hat);
            let out = apply_linearized_from_hat(grid, &phi, grad_coeff.as_deref(), &hat);
            precond.project(&out)
        };
        let outcome = gmres(apply, |v: &[f64]| v.to_vec(), &rhs, &opts.gmres);
        let du = precond.apply(&outcome.solution);

        // backtracking: accept when the L2 residual decreases and the
        // iterate keeps an admissibility margin
        let mut step = 1.0f64;
        let mut accepted = false;
        for _ in 0..=opts.max_backtrack {
            let mut u_try: Vec<f64> = u.iter().zip(&du).map(|(a, d)| a + step * d).collect();
            let mu = mean(&u_try);
            u_try.iter_mut().for_each(|x| *x -= mu);
            let (g_try, _) = assemble_with(grid, chi_eval, &u_try);
            match eval_values(&problem.op, &problem.metric, &g_try) {
                Ok(ev) => {
                    let delta_adm = opts.adm_factor * (1.0 + ev.g_max_abs);
                    let diff_try: Vec<f64> =
                        ev.f.iter().zip(psi_t).map(|(a, b)| a - b).collect();
                    let b_try = mean(&diff_try);
                    let r_try = projector
                        .project(&diff_try.iter().map(|x| x - b_try).collect::<Vec<f64>>());
                    let l2_try = rms(&r_try);
                    if ev.min_margin >= delta_adm && l2_try < l2 {
                        *u = u_try;
                        *cur = ev;
                        accepted = true;
                        *iterations += 1;
                        break;
                    }
                }
                Err(Error::NotAdmissible { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDiverged { iterations: iter });
        }
    }
    // check convergence after the final accepted step
    let diff: Vec<f64> = cur.f.iter().zip(psi_t).map(|(a, b)| a - b).collect();
    let b = mean(&diff);
    let li = linf(&projector.project(&diff.iter().map(|x| x - b).collect::<Vec<f64>>()));
    if li <= opts.tol_linf {
        Ok(())
    } else {
        Err(Error::NewtonDiverged { iterations: opts.max_newton })
    }
}
