//! Experiment runner: cone geometry probes, solver runs and the
//! verification harness, with JSON summaries and plot-ready CSV tables.
//!
//! Exit codes: 0 success, 2 negative verdict (e.g. a subsolution point
//! outside the cone, or inequality violations), 1 error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use hesslab::conegeo::{
    dichotomy_with_atlas, estimate_rank_with_atlas, h_mu_profile, membership_cplus_with_atlas,
    write_boundary_csv, write_profile_csv, LevelSetHandle, DEFAULT_ZERO_THRESHOLD,
};
use hesslab::config::ProblemConfig;
use hesslab::estimates::{
    a3_check, a5_check, cns_trials, subsolution_check, SpecKernel, SubsolutionOptions,
};
use hesslab::hermgeo::ScalarField;
use hesslab::solver::{solve, ChiSpec, SolutionReport};
use hesslab::symfun::{
    check_structure, cone_margin_raw, eval_value, OperatorFamily, OperatorSpec,
};

#[derive(Parser)]
#[command(name = "hesslab", about = "numerical laboratory for f(lambda(chi_u)) = psi")]
struct Cli {
    /// worker threads (1 = fully sequential, reproducible byte-for-byte)
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// seed for all sampled randomness
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// output directory for JSON summaries and CSV tables
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OpArgs {
    /// operator family: sigmak | quotient | koverkm1 | logrho | arctan
    #[arg(long)]
    op: String,

    /// dimension n
    #[arg(long)]
    n: usize,

    #[arg(long)]
    k: Option<usize>,

    #[arg(long)]
    l: Option<usize>,
}

impl OpArgs {
    fn build(&self) -> Result<OperatorSpec, String> {
        let family = match self.op.as_str() {
            "sigmak" => OperatorFamily::SigmaKRoot { k: self.k.ok_or("--k required")? },
            "quotient" => OperatorFamily::SigmaQuotient {
                k: self.k.ok_or("--k required")?,
                l: self.l.ok_or("--l required")?,
            },
            "koverkm1" => OperatorFamily::SigmaKOverKm1 { k: self.k.ok_or("--k required")? },
            "logrho" => OperatorFamily::LogRhoK { k: self.k.ok_or("--k required")? },
            "arctan" => OperatorFamily::SumArctan,
            other => return Err(format!("unknown operator family '{other}'")),
        };
        OperatorSpec::new(family, self.n).map_err(|e| e.to_string())
    }
}

#[derive(Subcommand)]
enum Command {
    /// structure-condition report for an operator family
    Cones {
        #[command(flatten)]
        op: OpArgs,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// rank of the tangent cone at infinity from asymptotic normals
    Rank {
        #[command(flatten)]
        op: OpArgs,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        dirs: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_ZERO_THRESHOLD)]
        zero_threshold: f64,
    },
    /// dichotomy witness (delta, epsilon) for a given mu
    Dichotomy {
        #[command(flatten)]
        op: OpArgs,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// comma-separated coordinates of mu
        #[arg(long, value_delimiter = ',')]
        mu: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![10.0, 100.0, 1000.0])]
        shells: Vec<f64>,
    },
    /// table of h_mu(r) over a radius ladder (reported, never asserted)
    Hprofile {
        #[command(flatten)]
        op: OpArgs,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, value_delimiter = ',')]
        mu: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![5.0, 10.0, 20.0, 40.0])]
        radii: Vec<f64>,
    },
    /// continuity-method solve of a problem config
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// verification harness: structure, concavity inequality, (A3) and
    /// subsolution verdicts for ubar = 0
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Gauduchon instance: solve plus the gradient-slot identities
    Gauduchon {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
        .ok();
    match run(&cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn emit(out: &Option<PathBuf>, summary: &impl Serialize) -> Result<(), String> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| e.to_string())?;
    println!("{text}");
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        fs::write(dir.join("summary.json"), text + "\n").map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn write_file(out: &Option<PathBuf>, name: &str, bytes: &[u8]) -> Result<(), String> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        fs::write(dir.join(name), bytes).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn diagonal_anchor(op: &OperatorSpec, sigma: f64) -> Result<Vec<f64>, String> {
    let mut t = 1.0f64;
    loop {
        let probe = vec![t; op.n];
        if cone_margin_raw(op.domain, &probe) > 0.0
            && eval_value(op, &probe) > sigma + 1e-6 * (1.0 + sigma.abs())
        {
            return Ok(probe);
        }
        t *= 2.0;
        if t > 1e8 {
            return Err("no diagonal anchor above sigma".into());
        }
    }
}

fn load_config(path: &Path) -> Result<ProblemConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    ProblemConfig::from_json(&text).map_err(|e| format!("config invalid: {e}"))
}

fn solve_summary(report: &SolutionReport, u_star: Option<&[f64]>) -> serde_json::Value {
    let mut v = serde_json::to_value(report).unwrap();
    if let Some(star) = u_star {
        let mean_star = star.iter().sum::<f64>() / star.len() as f64;
        let err = report
            .u
            .iter()
            .zip(star)
            .map(|(a, b)| (a - (b - mean_star)).abs())
            .fold(0.0, f64::max);
        v["u_error_linf"] = json!(err);
    }
    v
}

fn run(cli: &Cli) -> Result<ExitCode, String> {
    match &cli.command {
        Command::Cones { op, samples } => {
            let spec = op.build()?;
            let report = check_structure(&spec, *samples, cli.seed).map_err(|e| e.to_string())?;
            emit(&cli.out, &json!({
                "command": "cones",
                "operator": spec,
                "report": report,
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Rank { op, sigma, dirs, zero_threshold } => {
            let spec = op.build()?;
            let anchor = diagonal_anchor(&spec, *sigma)?;
            let handle =
                LevelSetHandle::new(spec, *sigma, &anchor).map_err(|e| e.to_string())?;
            let dirs = dirs.unwrap_or(512 * spec.n);
            let atlas = handle
                .atlas(&[10.0, 100.0, 1000.0], dirs, cli.seed)
                .map_err(|e| e.to_string())?;
            let est = estimate_rank_with_atlas(&atlas, *zero_threshold, spec.n);
            let mut csv = Vec::new();
            write_boundary_csv(&mut csv, &atlas, &anchor, spec.n).map_err(|e| e.to_string())?;
            write_file(&cli.out, "boundary_samples.csv", &csv)?;
            emit(&cli.out, &json!({
                "command": "rank",
                "operator": spec,
                "sigma": sigma,
                "rank": est.rank,
                "clusters": est.clusters,
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Dichotomy { op, sigma, mu, shells } => {
            let spec = op.build()?;
            if mu.len() != spec.n {
                return Err(format!("--mu needs {} coordinates", spec.n));
            }
            let anchor = diagonal_anchor(&spec, *sigma)?;
            let handle =
                LevelSetHandle::new(spec, *sigma, &anchor).map_err(|e| e.to_string())?;
            let atlas = handle
                .atlas(shells, 512 * spec.n, cli.seed)
                .map_err(|e| e.to_string())?;
            let witness = dichotomy_with_atlas(&atlas, mu, spec.n);
            let cplus = membership_cplus_with_atlas(&atlas, mu);
            let mut csv = Vec::new();
            write_boundary_csv(&mut csv, &atlas, mu, spec.n).map_err(|e| e.to_string())?;
            write_file(&cli.out, "boundary_samples.csv", &csv)?;
            let verdict_ok = witness.violations == 0;
            emit(&cli.out, &json!({
                "command": "dichotomy",
                "operator": spec,
                "sigma": sigma,
                "mu": mu,
                "witness": witness,
                "cplus": cplus,
            }))?;
            Ok(if verdict_ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Hprofile { op, sigma, mu, radii } => {
            let spec = op.build()?;
            if mu.len() != spec.n {
                return Err(format!("--mu needs {} coordinates", spec.n));
            }
            let anchor = diagonal_anchor(&spec, *sigma)?;
            let handle =
                LevelSetHandle::new(spec, *sigma, &anchor).map_err(|e| e.to_string())?;
            let rows = h_mu_profile(&handle, mu, radii).map_err(|e| e.to_string())?;
            let mut csv = Vec::new();
            write_profile_csv(&mut csv, &rows).map_err(|e| e.to_string())?;
            write_file(&cli.out, "h_profile.csv", &csv)?;
            emit(&cli.out, &json!({
                "command": "hprofile",
                "operator": spec,
                "sigma": sigma,
                "mu": mu,
                "profile": rows,
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve { config } => {
            let cfg = load_config(config)?;
            let built = cfg.build().map_err(|e| e.to_string())?;
            let report = solve(&built.problem, &built.options).map_err(|e| e.to_string())?;
            dump_solution(&cli.out, &built.problem.grid().clone(), &report)?;
            emit(&cli.out, &json!({
                "command": "solve",
                "report": solve_summary(&report, built.u_star.as_deref()),
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { config, trials, samples } => {
            let cfg = load_config(config)?;
            let built = cfg.build().map_err(|e| e.to_string())?;
            let problem = &built.problem;
            let structure =
                check_structure(&problem.op, *samples, cli.seed).map_err(|e| e.to_string())?;
            let cns = cns_trials(&problem.op, *trials, cli.seed).map_err(|e| e.to_string())?;
            let kernel =
                SpecKernel::new(&problem.chi, &problem.metric).map_err(|e| e.to_string())?;
            let a3 = a3_check(&kernel, &problem.metric, *samples, cli.seed);
            let zero = vec![0.0; problem.grid().num_points()];
            let sub_opts = SubsolutionOptions { seed: cli.seed, ..Default::default() };
            let sub = subsolution_check(problem, &zero, &sub_opts).map_err(|e| e.to_string())?;
            let mut csv = Vec::new();
            hesslab::estimates::write_cns_csv(&mut csv, &cns).map_err(|e| e.to_string())?;
            write_file(&cli.out, "cns_trials.csv", &csv)?;
            let negative = sub.cplus_out > 0 || sub.ctilde_out > 0 || cns.violations > 0;
            emit(&cli.out, &json!({
                "command": "verify",
                "structure": structure,
                "cns": cns,
                "a3": a3,
                "subsolution": sub,
            }))?;
            Ok(if negative { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Gauduchon { config, samples } => {
            let cfg = load_config(config)?;
            let built = cfg.build().map_err(|e| e.to_string())?;
            let problem = &built.problem;
            if !matches!(problem.chi, ChiSpec::Gauduchon { .. }) {
                return Err("gauduchon command needs a gauduchon chi in the config".into());
            }
            let report = solve(problem, &built.options).map_err(|e| e.to_string())?;
            let a5 = a5_check(problem, &report.u, *samples, cli.seed).map_err(|e| e.to_string())?;
            let g60 = gauduchon_gradient_slot_residual(problem).map_err(|e| e.to_string())?;
            dump_solution(&cli.out, &problem.grid().clone(), &report)?;
            let converged = report.residual_linf <= built.options.tol_linf * 10.0;
            emit(&cli.out, &json!({
                "command": "gauduchon",
                "report": solve_summary(&report, None),
                "gradient_slot_defect": g60,
                "a5": {
                    "max_ratio": a5.max_ratio,
                    "diag_identity_err": a5.diag_identity_err,
                    "diag_identity_scale": a5.diag_identity_scale,
                    "samples": a5.samples,
                },
            }))?;
            Ok(if converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

/// The chi_tilde components carry no zeta_j dependence in the (i, jbar)
/// slot; probed by central differences in the gradient slot.
fn gauduchon_gradient_slot_residual(problem: &hesslab::solver::ProblemSpec) -> hesslab::Result<f64> {
    use hesslab::solver::GauduchonAssembly;
    let ChiSpec::Gauduchon { omega0, c } = &problem.chi else {
        return Ok(0.0);
    };
    let assembly = GauduchonAssembly::new(&problem.metric, omega0, *c)?;
    let stride = (problem.grid().num_points() / 512).max(1);
    Ok(assembly.gradient_slot_defect(stride))
}

fn dump_solution(
    out: &Option<PathBuf>,
    grid: &hesslab::hermgeo::SpectralGrid,
    report: &SolutionReport,
) -> Result<(), String> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        let field = ScalarField::from_real(grid, &report.u);
        let mut buf = Vec::new();
        field.save(&mut buf).map_err(|e| e.to_string())?;
        fs::write(dir.join("u.field"), buf).map_err(|e| e.to_string())?;
        let mut csv = String::from("t,newton_iter,l2,linf\n");
        for s in &report.residual_history {
            csv.push_str(&format!("{},{},{:.17e},{:.17e}\n", s.t, s.newton_iter, s.l2, s.linf));
        }
        fs::write(dir.join("residuals.csv"), csv).map_err(|e| e.to_string())?;
    }
    Ok(())
}
