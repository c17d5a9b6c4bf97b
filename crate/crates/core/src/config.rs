//! JSON problem configuration: operators, metrics, chi and psi built from
//! a small registry of trigonometric expressions. Axis indices follow the
//! grid layout [x_1, y_1, ..., x_n, y_n].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermgeo::{MatrixField, MetricField, ScalarField, SpectralGrid};
use crate::solver::{ChiSpec, GmresOptions, Normalization, ProblemSpec, SolveOptions};
use crate::symfun::{OperatorFamily, OperatorSpec};

/// Sum of trigonometric terms plus a constant:
/// sum_k amp_k * fn_k(2 pi freq_k * x_{axis_k}) + constant.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Expr {
    #[serde(default)]
    pub terms: Vec<Term>,
    #[serde(default)]
    pub constant: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Term {
    pub amp: f64,
    #[serde(rename = "fn")]
    pub func: TrigFn,
    /// real axis index in [0, 2n)
    pub axis: usize,
    #[serde(default = "one")]
    pub freq: i32,
}

fn one() -> i32 {
    1
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrigFn {
    Cos,
    Sin,
}

impl Expr {
    pub fn eval(&self, coords: &[f64]) -> f64 {
        let mut v = self.constant;
        for t in &self.terms {
            let arg = 2.0 * std::f64::consts::PI * t.freq as f64 * coords[t.axis];
            v += t.amp
                * match t.func {
                    TrigFn::Cos => arg.cos(),
                    TrigFn::Sin => arg.sin(),
                };
        }
        v
    }

    pub fn field(&self, grid: &SpectralGrid) -> Result<ScalarField> {
        let axes = grid.num_axes();
        for t in &self.terms {
            if t.axis >= axes {
                return Err(Error::InvalidSpec(format!(
                    "expression axis {} out of range for {axes} axes",
                    t.axis
                )));
            }
        }
        Ok(ScalarField::from_fn(grid, |x| self.eval(x)))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricConfig {
    Flat,
    Conformal { phi: Expr },
}

impl MetricConfig {
    pub fn build(&self, grid: &SpectralGrid) -> Result<MetricField> {
        match self {
            MetricConfig::Flat => Ok(MetricField::flat(grid)),
            MetricConfig::Conformal { phi } => MetricField::conformal(grid, &phi.field(grid)?),
        }
    }
}

/// Real symmetric matrix written row by row; promoted to a Hermitian block.
pub type RealMatrix = Vec<Vec<f64>>;

fn matrix_block(m: &RealMatrix, n: usize) -> Result<Vec<Complex64>> {
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidSpec(format!("matrix must be {n} x {n}")));
    }
    for i in 0..n {
        for j in 0..n {
            if (m[i][j] - m[j][i]).abs() > 1e-12 {
                return Err(Error::InvalidSpec("constant chi matrix must be symmetric".into()));
            }
        }
    }
    Ok(m.iter().flatten().map(|&x| Complex64::new(x, 0.0)).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChiConfig {
    Constant {
        matrix: RealMatrix,
    },
    /// base matrix with Hermitian trigonometric perturbations on entries
    ZDependent {
        base: RealMatrix,
        #[serde(default)]
        perturbations: Vec<EntryPerturbation>,
    },
    Gauduchon {
        #[serde(default)]
        omega0: Omega0Config,
        #[serde(default = "one_f64")]
        c: f64,
    },
}

fn one_f64() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Omega0Config {
    #[default]
    Identity,
    #[serde(untagged)]
    Matrix(RealMatrix),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryPerturbation {
    pub i: usize,
    pub j: usize,
    pub expr: Expr,
}

impl ChiConfig {
    pub fn build(&self, grid: &SpectralGrid) -> Result<ChiSpec> {
        let n = grid.n();
        match self {
            ChiConfig::Constant { matrix } => Ok(ChiSpec::Constant(matrix_block(matrix, n)?)),
            ChiConfig::ZDependent { base, perturbations } => {
                let block = matrix_block(base, n)?;
                let mut field = MatrixField::constant(grid, &block)?;
                let axes = grid.num_axes();
                let mut xs = vec![0.0; axes];
                for p in perturbations {
                    if p.i >= n || p.j >= n {
                        return Err(Error::InvalidSpec("perturbation entry out of range".into()));
                    }
                    for pt in 0..grid.num_points() {
                        grid.coords(pt, &mut xs);
                        let v = Complex64::new(p.expr.eval(&xs), 0.0);
                        field.data[pt * n * n + p.i * n + p.j] += v;
                        if p.i != p.j {
                            field.data[pt * n * n + p.j * n + p.i] += v.conj();
                        }
                    }
                }
                Ok(ChiSpec::ZDependent(field))
            }
            ChiConfig::Gauduchon { omega0, c } => {
                let field = match omega0 {
                    Omega0Config::Identity => MatrixField::identity(grid),
                    Omega0Config::Matrix(m) => MatrixField::constant(grid, &matrix_block(m, n)?)?,
                };
                Ok(ChiSpec::Gauduchon { omega0: field, c: *c })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiConfig {
    /// psi := F(g[u*]) for the given u*; the pair is a ground-truth instance
    Manufactured { u_star: Expr },
    /// psi given directly as an expression
    Expression { expr: Expr },
    /// the Gauduchon right-hand side: psi = h + n log(n-1), with the
    /// additive constant b left to the solver
    GauduchonH { h: Expr },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationConfig {
    #[default]
    MeanZero,
    SupZero,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceConfig {
    pub residual_linf: f64,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iters: usize,
    pub max_newton: usize,
    pub t_min_step: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        let s = SolveOptions::default();
        Self {
            residual_linf: s.tol_linf,
            gmres_tol: s.gmres.tol,
            gmres_restart: s.gmres.restart,
            gmres_max_iters: s.gmres.max_iters,
            max_newton: s.max_newton,
            t_min_step: s.t_min_step,
        }
    }
}

impl ToleranceConfig {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol_linf: self.residual_linf,
            max_newton: self.max_newton,
            gmres: GmresOptions {
                restart: self.gmres_restart,
                tol: self.gmres_tol,
                max_iters: self.gmres_max_iters,
            },
            t_min_step: self.t_min_step,
            ..SolveOptions::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub dimension: usize,
    pub resolution: usize,
    pub operator: OperatorFamily,
    pub chi: ChiConfig,
    pub metric: MetricConfig,
    pub psi: PsiConfig,
    #[serde(default)]
    pub normalization: NormalizationConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
}

/// A problem built from a config, with the manufactured ground truth when
/// one exists.
pub struct BuiltProblem {
    pub problem: ProblemSpec,
    pub u_star: Option<Vec<f64>>,
    pub options: SolveOptions,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn build(&self) -> Result<BuiltProblem> {
        let grid = SpectralGrid::new(self.dimension, self.resolution)?;
        let op = OperatorSpec::new(self.operator, self.dimension)?;
        let metric = self.metric.build(&grid)?;
        let chi = self.chi.build(&grid)?;
        let normalization = match self.normalization {
            NormalizationConfig::MeanZero => Normalization::MeanZero,
            NormalizationConfig::SupZero => Normalization::SupZero,
        };
        let (problem, u_star) = match &self.psi {
            PsiConfig::Manufactured { u_star } => {
                let u = u_star.field(&grid)?.re();
                let problem = ProblemSpec::manufactured(metric, op, chi, normalization, &u)?;
                (problem, Some(u))
            }
            PsiConfig::Expression { expr } => {
                let psi = expr.field(&grid)?.re();
                (ProblemSpec::new(metric, op, chi, psi, normalization)?, None)
            }
            PsiConfig::GauduchonH { h } => {
                let n = grid.n();
                let offset = (n as f64) * ((n - 1) as f64).ln();
                let psi: Vec<f64> = h.field(&grid)?.re().iter().map(|x| x + offset).collect();
                (ProblemSpec::new(metric, op, chi, psi, normalization)?, None)
            }
        };
        Ok(BuiltProblem { problem, u_star, options: self.tolerances.solve_options() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_build_manufactured_config() {
        let text = r#"{
            "dimension": 2,
            "resolution": 8,
            "operator": {"family": "log_rho_k", "k": 1},
            "chi": {"kind": "constant", "matrix": [[1.0, 0.0], [0.0, 1.0]]},
            "metric": {"kind": "flat"},
            "psi": {"kind": "manufactured",
                    "u_star": {"terms": [{"amp": 0.05, "fn": "cos", "axis": 0}]}},
            "normalization": "mean_zero"
        }"#;
        let cfg = ProblemConfig::from_json(text).unwrap();
        let built = cfg.build().unwrap();
        assert!(built.u_star.is_some());
        assert_eq!(built.problem.grid().m(), 8);
    }

    #[test]
    fn parse_gauduchon_config() {
        let text = r#"{
            "dimension": 2,
            "resolution": 8,
            "operator": {"family": "log_rho_k", "k": 1},
            "chi": {"kind": "gauduchon", "c": 1.0},
            "metric": {"kind": "conformal",
                       "phi": {"terms": [{"amp": 0.1, "fn": "cos", "axis": 0}]}},
            "psi": {"kind": "gauduchon_h",
                    "h": {"terms": [{"amp": 0.05, "fn": "sin", "axis": 2}]}}
        }"#;
        let cfg = ProblemConfig::from_json(text).unwrap();
        let built = cfg.build().unwrap();
        assert!(built.u_star.is_none());
        // n = 2: the offset n log(n-1) vanishes
        assert!(built.problem.psi.iter().all(|v| v.abs() <= 0.05 + 1e-12));
    }

    #[test]
    fn invalid_axis_rejected() {
        let expr = Expr {
            terms: vec![Term { amp: 1.0, func: TrigFn::Cos, axis: 9, freq: 1 }],
            constant: 0.0,
        };
        let grid = SpectralGrid::new(2, 4).unwrap();
        assert!(expr.field(&grid).is_err());
    }
}
