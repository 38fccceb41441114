use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use robust_mdp::experiments::{fit_loglog_slope, run_experiment_with_jobs, summarize, write_csv};
use robust_mdp::instances::{
    chi2_analytic_value, chi2_instance_pair, tv_analytic_value, tv_instance_pair, Chi2InstanceParams, TvInstanceParams,
    DEFAULT_C0,
};
use robust_mdp::sampling::sample_generative;
use robust_mdp::{
    robust_policy_eval, suboptimality_gap, Divergence, Drvi, Error, ExperimentConfig, Policy, TabularMdp,
    UncertaintySpec,
};

#[derive(Parser)]
#[command(
    name = "robust-mdp",
    version,
    about = "Distributionally robust planning for tabular MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run robust value iteration and write the report as JSON.
    Solve(SolveArgs),
    /// Robust value of a policy and its sub-optimality gap.
    Eval(EvalArgs),
    /// Draw a generative-model dataset and write the transition counts.
    Sample(SampleArgs),
    /// Build a hard-instance pair.
    Instance(InstanceArgs),
    /// Run an experiment sweep and write per-trial records as CSV.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DivArg {
    Tv,
    Chi2,
}

impl From<DivArg> for Divergence {
    fn from(d: DivArg) -> Self {
        match d {
            DivArg::Tv => Divergence::Tv,
            DivArg::Chi2 => Divergence::Chi2,
        }
    }
}

#[derive(Args)]
struct Uncertainty {
    #[arg(long, value_enum)]
    div: DivArg,
    #[arg(long)]
    sigma: f64,
}

impl Uncertainty {
    fn spec(&self) -> Result<UncertaintySpec, Error> {
        UncertaintySpec::new(self.div.into(), self.sigma)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    mdp: PathBuf,
    #[command(flatten)]
    uncertainty: Uncertainty,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    mdp: PathBuf,
    /// Policy file, or a solve report whose `policy` field is used.
    #[arg(long)]
    policy: PathBuf,
    #[command(flatten)]
    uncertainty: Uncertainty,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    mdp: PathBuf,
    /// Draws per state-action pair.
    #[arg(long)]
    n: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Tv,
    Chi2,
}

#[derive(Args)]
struct InstanceArgs {
    #[arg(value_enum)]
    family: Family,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long = "S", default_value_t = 3)]
    num_states: usize,
    #[arg(long = "A", default_value_t = 2)]
    num_actions: usize,
    /// TV family only.
    #[arg(long, default_value_t = DEFAULT_C0)]
    c0: f64,
    /// Output stem: writes `<stem>.phi0.json`, `<stem>.phi1.json` and `<stem>.params.json`.
    #[arg(long)]
    out: PathBuf,
    /// Print the closed-form robust value of the policy that plays the
    /// planted action at state 0 with probability `--pi-phi`.
    #[arg(long)]
    analytic: bool,
    #[arg(long, default_value_t = 1.0, requires = "analytic")]
    pi_phi: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "ROBUST_MDP_JOBS", default_value_t = 1)]
    jobs: usize,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn solve(args: SolveArgs) -> Result<(), Error> {
    let m = TabularMdp::read(&args.mdp)?;
    let mut drvi = Drvi::new(&m, args.uncertainty.spec()?).tol(args.tol);
    if let Some(k) = args.max_iters {
        drvi = drvi.max_iters(k);
    }
    let report = drvi.run()?;
    write_json(&args.out, &report)?;
    if !report.converged {
        return Err(Error::NotConverged {
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    Ok(())
}

fn read_policy(path: &Path) -> Result<Policy, Error> {
    let mut value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    if let Some(inner) = value.get_mut("policy") {
        value = inner.take();
    }
    Ok(serde_json::from_value(value)?)
}

#[derive(Serialize)]
struct EvalOutput {
    value: Vec<f64>,
    gap: f64,
}

fn eval(args: EvalArgs) -> Result<(), Error> {
    let m = TabularMdp::read(&args.mdp)?;
    let pi = read_policy(&args.policy)?;
    let u = args.uncertainty.spec()?;
    let value = robust_policy_eval(&m, &u, &pi, args.tol)?;
    let gap = suboptimality_gap(&m, &u, &pi, args.tol)?;
    println!("{}", serde_json::to_string(&EvalOutput { value: value.0, gap })?);
    Ok(())
}

fn sample(args: SampleArgs) -> Result<(), Error> {
    let m = TabularMdp::read(&args.mdp)?;
    sample_generative(&m, args.n, args.seed)?.write(&args.out)
}

fn stem_path(stem: &Path, suffix: &str) -> PathBuf {
    let mut name = stem.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn instance(args: InstanceArgs) -> Result<(), Error> {
    let (pair, params, analytic) = match args.family {
        Family::Tv => {
            let params = TvInstanceParams {
                c0: args.c0,
                ..TvInstanceParams::new(args.num_states, args.num_actions, args.gamma, args.sigma, args.eps)
            };
            let analytic = if args.analytic {
                Some(tv_analytic_value(&params, args.pi_phi)?)
            } else {
                None
            };
            (tv_instance_pair(&params)?, serde_json::to_value(params)?, analytic)
        }
        Family::Chi2 => {
            let params = Chi2InstanceParams::new(args.num_states, args.num_actions, args.gamma, args.sigma, args.eps);
            let analytic = if args.analytic {
                Some(chi2_analytic_value(&params, args.pi_phi)?)
            } else {
                None
            };
            (chi2_instance_pair(&params)?, serde_json::to_value(params)?, analytic)
        }
    };
    for (phi, m) in pair.iter().enumerate() {
        m.write(stem_path(&args.out, &format!(".phi{phi}.json")))?;
    }
    write_json(&stem_path(&args.out, ".params.json"), &params)?;
    if let Some(v) = analytic {
        println!("{}", serde_json::to_string(&v)?);
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<(), Error> {
    let cfg = ExperimentConfig::read(&args.config)?;
    let records = run_experiment_with_jobs(&cfg, args.jobs)?;
    let mut file = fs::File::create(&args.out)?;
    write_csv(&records, &mut file)?;
    file.flush()?;
    for cell in summarize(&records) {
        eprintln!(
            "sigma {} n {}: mean gap {:.4e} (se {:.2e}, max {:.4e}, {} trials)",
            cell.sigma, cell.n, cell.mean_gap, cell.std_error, cell.max_gap, cell.trials
        );
    }
    if let Ok(fits) = fit_loglog_slope(&records) {
        for fit in fits {
            eprintln!("sigma {}: log-log slope {:.4}", fit.sigma, fit.slope);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::Sample(a) => sample(a),
        Command::Instance(a) => instance(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
