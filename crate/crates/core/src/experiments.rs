//! Monte-Carlo harness: sample a dataset, fit the plug-in model, plan with
//! DRVI, and measure the robust sub-optimality of the plan on the true model.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{build_chi2_instance, build_tv_instance, Chi2InstanceParams, TvInstanceParams, DEFAULT_C0};
use crate::mdp::{default_max_iters, random_mdp, TabularMdp, DEFAULT_TOL};
use crate::robust::{Divergence, UncertaintySpec};
use crate::sampling::{empirical_kernel, sample_generative, sample_offline, BehaviorDistribution, ZeroVisit};
use crate::solver::{drvi, inner_tol, max_gap, robust_policy_eval, Drvi};

fn default_c0() -> f64 {
    DEFAULT_C0
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

/// Which true model the trials are run against. Hard instances are rebuilt
/// for every radius in the sweep, since their kernels depend on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSpec {
    Random {
        #[serde(rename = "S")]
        num_states: usize,
        #[serde(rename = "A")]
        num_actions: usize,
        gamma: f64,
        seed: u64,
    },
    TvHard {
        #[serde(rename = "S")]
        num_states: usize,
        #[serde(rename = "A")]
        num_actions: usize,
        gamma: f64,
        epsilon: f64,
        #[serde(default = "default_c0")]
        c0: f64,
        #[serde(default)]
        phi: u8,
    },
    Chi2Hard {
        #[serde(rename = "S")]
        num_states: usize,
        #[serde(rename = "A")]
        num_actions: usize,
        gamma: f64,
        epsilon: f64,
        #[serde(default)]
        phi: u8,
    },
    File {
        path: PathBuf,
    },
}

impl InstanceSpec {
    pub fn id(&self) -> String {
        match self {
            InstanceSpec::Random {
                num_states,
                num_actions,
                gamma,
                seed,
            } => format!("random-S{num_states}-A{num_actions}-g{gamma}-seed{seed}"),
            InstanceSpec::TvHard {
                num_states,
                num_actions,
                gamma,
                epsilon,
                phi,
                ..
            } => format!("tv_hard-S{num_states}-A{num_actions}-g{gamma}-eps{epsilon}-phi{phi}"),
            InstanceSpec::Chi2Hard {
                num_states,
                num_actions,
                gamma,
                epsilon,
                phi,
            } => format!("chi2_hard-S{num_states}-A{num_actions}-g{gamma}-eps{epsilon}-phi{phi}"),
            InstanceSpec::File { path } => format!("file-{}", path.display()),
        }
    }

    /// The true MDP used at radius `sigma`.
    pub fn build(&self, sigma: f64) -> Result<TabularMdp> {
        match *self {
            InstanceSpec::Random {
                num_states,
                num_actions,
                gamma,
                seed,
            } => random_mdp(num_states, num_actions, gamma, seed),
            InstanceSpec::TvHard {
                num_states,
                num_actions,
                gamma,
                epsilon,
                c0,
                phi,
            } => build_tv_instance(&TvInstanceParams {
                num_states,
                num_actions,
                gamma,
                sigma,
                epsilon,
                c0,
                phi,
            }),
            InstanceSpec::Chi2Hard {
                num_states,
                num_actions,
                gamma,
                epsilon,
                phi,
            } => build_chi2_instance(&Chi2InstanceParams {
                num_states,
                num_actions,
                gamma,
                sigma,
                epsilon,
                phi,
            }),
            InstanceSpec::File { ref path } => TabularMdp::read(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorSpec {
    Uniform,
    Probs(Vec<f64>),
}

impl BehaviorSpec {
    fn resolve(&self, num_pairs: usize) -> Result<BehaviorDistribution> {
        match self {
            BehaviorSpec::Uniform => Ok(BehaviorDistribution::uniform(num_pairs)),
            BehaviorSpec::Probs(p) => BehaviorDistribution::new(p.clone()),
        }
    }
}

/// How the dataset of each trial is collected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPlan {
    /// `n` draws per state-action pair, for each `n` in the list.
    Generative { n_per_pair: Vec<u64> },
    /// `n` tuples from a behavior distribution, for each `n` in the list.
    Offline { behavior: BehaviorSpec, n_total: Vec<u64> },
}

impl SamplingPlan {
    pub fn sizes(&self) -> &[u64] {
        match self {
            SamplingPlan::Generative { n_per_pair } => n_per_pair,
            SamplingPlan::Offline { n_total, .. } => n_total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub divergence: Divergence,
    pub sigmas: Vec<f64>,
    pub sampling: SamplingPlan,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Measure wall-clock time per trial. Off by default, in which case the
    /// time column is written as zero and the CSV depends only on the config.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.sigmas.is_empty() {
            return Err(Error::InvalidConfig("sigma list is empty".into()));
        }
        if self.sampling.sizes().is_empty() {
            return Err(Error::InvalidConfig("sample-size list is empty".into()));
        }
        if self.sampling.sizes().contains(&0) {
            return Err(Error::InvalidConfig("sample sizes must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("tol = {} must be positive", self.tol)));
        }
        for &sigma in &self.sigmas {
            UncertaintySpec::new(self.divergence, sigma)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// One (radius, sample size, trial) outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub instance_id: String,
    pub divergence: Divergence,
    pub sigma: f64,
    /// Samples per pair (generative) or total tuples (offline).
    pub n_per_pair: u64,
    pub trial: usize,
    pub seed: u64,
    pub gap: f64,
    pub drvi_iters: usize,
    pub wall_time_s: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial, a hash of the base seed and the sweep coordinates.
pub fn trial_seed(base_seed: u64, sigma_index: usize, n_index: usize, trial: usize) -> u64 {
    [sigma_index as u64, n_index as u64, trial as u64]
        .iter()
        .fold(splitmix64(base_seed), |h, &k| splitmix64(h ^ k))
}

struct SigmaContext {
    sigma: f64,
    uncertainty: UncertaintySpec,
    model: TabularMdp,
    v_star: Vec<f64>,
}

/// Runs every (sigma, n, trial) cell on the current rayon pool. Records come
/// back ordered by sigma index, then sample size index, then trial.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let instance_id = cfg.instance.id();
    let contexts = cfg
        .sigmas
        .iter()
        .map(|&sigma| {
            let uncertainty = UncertaintySpec::new(cfg.divergence, sigma)?;
            let model = cfg.instance.build(sigma)?;
            let t = inner_tol(model.discount(), cfg.tol);
            let v_star = drvi(&model, &uncertainty, t, default_max_iters(model.discount(), t))?
                .v_final
                .0;
            Ok(SigmaContext {
                sigma,
                uncertainty,
                model,
                v_star,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let sizes = cfg.sampling.sizes();
    let cells: Vec<(usize, usize, usize)> = (0..contexts.len())
        .flat_map(|si| (0..sizes.len()).flat_map(move |ni| (0..cfg.trials).map(move |t| (si, ni, t))))
        .collect();

    cells
        .into_par_iter()
        .map(|(si, ni, trial)| {
            let ctx = &contexts[si];
            let n = sizes[ni];
            let seed = trial_seed(cfg.base_seed, si, ni, trial);
            run_trial(cfg, ctx, n, seed)
                .map(|(gap, drvi_iters, wall_time_s)| TrialRecord {
                    instance_id: instance_id.clone(),
                    divergence: cfg.divergence,
                    sigma: ctx.sigma,
                    n_per_pair: n,
                    trial,
                    seed,
                    gap,
                    drvi_iters,
                    wall_time_s,
                })
                .map_err(|e| Error::Trial {
                    instance: instance_id.clone(),
                    sigma: ctx.sigma,
                    n,
                    trial,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// [`run_experiment`] on a dedicated pool of `jobs` threads.
pub fn run_experiment_with_jobs(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<TrialRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| run_experiment(cfg))
}

fn run_trial(cfg: &ExperimentConfig, ctx: &SigmaContext, n: u64, seed: u64) -> Result<(f64, usize, f64)> {
    let start = Instant::now();
    let m = &ctx.model;
    let (counts, zero_visit) = match &cfg.sampling {
        SamplingPlan::Generative { .. } => (sample_generative(m, n, seed)?, ZeroVisit::Error),
        SamplingPlan::Offline { behavior, .. } => {
            let mu = behavior.resolve(m.num_pairs())?;
            (sample_offline(m, &mu, n, seed)?, ZeroVisit::SelfLoop)
        }
    };
    let estimate = empirical_kernel(&counts, m, zero_visit)?;
    let report = Drvi::new(&estimate, ctx.uncertainty).tol(cfg.tol).run()?;
    if !report.converged {
        return Err(Error::NotConverged {
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    let t = inner_tol(m.discount(), cfg.tol);
    let v_pi = robust_policy_eval(m, &ctx.uncertainty, &report.policy, t)?;
    let gap = max_gap(&ctx.v_star, &v_pi);
    let wall = if cfg.record_wall_time {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    Ok((gap, report.iterations, wall))
}

pub const CSV_HEADER: [&str; 9] = [
    "instance_id",
    "divergence",
    "sigma",
    "n_per_pair",
    "trial",
    "seed",
    "gap",
    "drvi_iters",
    "wall_time_s",
];

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes records as CSV with a header row; floats carry 17 significant digits.
pub fn write_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.instance_id.clone(),
            r.divergence.name().to_string(),
            fmt_float(r.sigma),
            r.n_per_pair.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            fmt_float(r.gap),
            r.drvi_iters.to_string(),
            fmt_float(r.wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean, standard error and maximum of the gap in one (sigma, n) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub sigma: f64,
    pub n: u64,
    pub trials: usize,
    pub mean_gap: f64,
    pub std_error: f64,
    pub max_gap: f64,
}

fn grouped(records: &[TrialRecord]) -> BTreeMap<(u64, u64), Vec<f64>> {
    let mut groups: BTreeMap<(u64, u64), Vec<f64>> = BTreeMap::new();
    for r in records {
        // radii are non-negative, so the bit pattern orders like the value
        groups.entry((r.sigma.to_bits(), r.n_per_pair)).or_default().push(r.gap);
    }
    groups
}

pub fn summarize(records: &[TrialRecord]) -> Vec<CellSummary> {
    grouped(records)
        .into_iter()
        .map(|((sigma_bits, n), gaps)| {
            let k = gaps.len() as f64;
            let mean = gaps.iter().sum::<f64>() / k;
            let std_error = if gaps.len() > 1 {
                (gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (k - 1.0)).sqrt() / k.sqrt()
            } else {
                0.0
            };
            CellSummary {
                sigma: f64::from_bits(sigma_bits),
                n,
                trials: gaps.len(),
                mean_gap: mean,
                std_error,
                max_gap: gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// Least-squares slope of `log(mean gap)` against `log n`, for one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub sigma: f64,
    pub slope: f64,
    pub intercept: f64,
}

pub const MIN_SIZES_FOR_FIT: usize = 3;
pub const MIN_TRIALS_FOR_FIT: usize = 20;

/// Fits the log-log slope of mean gap versus sample size for every radius.
/// Each radius needs at least three sizes with at least twenty trials each.
pub fn fit_loglog_slope(records: &[TrialRecord]) -> Result<Vec<SlopeFit>> {
    let mut by_sigma: BTreeMap<u64, Vec<CellSummary>> = BTreeMap::new();
    for cell in summarize(records) {
        by_sigma.entry(cell.sigma.to_bits()).or_default().push(cell);
    }
    if by_sigma.is_empty() {
        return Err(Error::InsufficientData("no records".into()));
    }
    by_sigma
        .into_values()
        .map(|cells| {
            let sigma = cells[0].sigma;
            let usable: Vec<&CellSummary> = cells.iter().filter(|c| c.trials >= MIN_TRIALS_FOR_FIT).collect();
            if usable.len() < MIN_SIZES_FOR_FIT {
                return Err(Error::InsufficientData(format!(
                    "sigma {sigma}: {} sample sizes with at least {MIN_TRIALS_FOR_FIT} trials, need {MIN_SIZES_FOR_FIT}",
                    usable.len()
                )));
            }
            if let Some(c) = usable.iter().find(|c| !(c.mean_gap > 0.0)) {
                return Err(Error::InsufficientData(format!(
                    "sigma {sigma}: mean gap {} at n = {} has no logarithm",
                    c.mean_gap, c.n
                )));
            }
            let xs: Vec<f64> = usable.iter().map(|c| (c.n as f64).ln()).collect();
            let ys: Vec<f64> = usable.iter().map(|c| c.mean_gap.ln()).collect();
            let k = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / k;
            let my = ys.iter().sum::<f64>() / k;
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            let slope = sxy / sxx;
            Ok(SlopeFit {
                sigma,
                slope,
                intercept: my - slope * mx,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(sigma: f64, n: u64, trial: usize, gap: f64) -> TrialRecord {
        TrialRecord {
            instance_id: "synthetic".into(),
            divergence: Divergence::Tv,
            sigma,
            n_per_pair: n,
            trial,
            seed: 0,
            gap,
            drvi_iters: 0,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn planted_inverse_sqrt_law() {
        let records: Vec<TrialRecord> = [100u64, 400, 1600, 6400]
            .iter()
            .flat_map(|&n| (0..20).map(move |t| record(0.1, n, t, 3.0 / (n as f64).sqrt())))
            .collect();
        let fits = fit_loglog_slope(&records).unwrap();
        assert_eq!(fits.len(), 1);
        assert!((fits[0].slope + 0.5).abs() < 1e-9);
    }

    #[test]
    fn constant_gaps_have_zero_slope() {
        let records: Vec<TrialRecord> = [10u64, 20, 40]
            .iter()
            .flat_map(|&n| (0..25).map(move |t| record(0.3, n, t, 0.7)))
            .collect();
        assert!(fit_loglog_slope(&records).unwrap()[0].slope.abs() < 1e-12);
    }

    #[test]
    fn too_few_sizes_or_trials() {
        let records: Vec<TrialRecord> = [10u64, 20]
            .iter()
            .flat_map(|&n| (0..25).map(move |t| record(0.3, n, t, 0.7)))
            .collect();
        assert!(matches!(fit_loglog_slope(&records), Err(Error::InsufficientData(_))));
        let records: Vec<TrialRecord> = [10u64, 20, 40]
            .iter()
            .flat_map(|&n| (0..5).map(move |t| record(0.3, n, t, 0.7)))
            .collect();
        assert!(matches!(fit_loglog_slope(&records), Err(Error::InsufficientData(_))));
        assert!(matches!(fit_loglog_slope(&[]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn summary_statistics() {
        let records = vec![record(0.2, 5, 0, 1.0), record(0.2, 5, 1, 3.0)];
        let s = summarize(&records);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mean_gap, 2.0);
        assert_eq!(s[0].max_gap, 3.0);
        assert!((s[0].std_error - 1.0).abs() < 1e-15);
    }

    #[test]
    fn seeds_differ_across_coordinates() {
        let a = trial_seed(1, 0, 0, 0);
        assert_ne!(a, trial_seed(1, 0, 0, 1));
        assert_ne!(a, trial_seed(1, 0, 1, 0));
        assert_ne!(a, trial_seed(1, 1, 0, 0));
        assert_ne!(a, trial_seed(2, 0, 0, 0));
        assert_eq!(a, trial_seed(1, 0, 0, 0));
    }

    #[test]
    fn config_validation() {
        let text = r#"{
            "instance": {"kind": "random", "S": 3, "A": 2, "gamma": 0.9, "seed": 1},
            "divergence": "tv", "sigmas": [0.1],
            "sampling": {"generative": {"n_per_pair": [10]}},
            "trials": 0, "base_seed": 3
        }"#;
        assert!(matches!(
            ExperimentConfig::from_json(text),
            Err(Error::InvalidConfig(_))
        ));
        let ok = text.replace("\"trials\": 0", "\"trials\": 2");
        let cfg = ExperimentConfig::from_json(&ok).unwrap();
        assert_eq!(cfg.tol, DEFAULT_TOL);
        let bad_sigma = ok.replace("[0.1]", "[1.5]");
        assert!(ExperimentConfig::from_json(&bad_sigma).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&[record(0.25, 8, 3, 0.125)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "synthetic,tv,2.5000000000000000e-1,8,3,0,1.2500000000000000e-1,0,0.0000000000000000e0"
        );
    }
}
