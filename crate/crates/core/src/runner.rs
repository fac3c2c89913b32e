//! Experiment orchestration: configuration, repeated seeded trials and result files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::eki::{self, BpinnModel, DriftModel, EkiConfig, NoiseModel, StoppingConfig};
use crate::problems::{make_problem_with, InverseProblem, PriorScale, ProblemKind, ProblemOptions};
use crate::stats::{linear_reference_posterior, output_errors, relative_error_lambda, summarize};
use crate::{Error, Result};

/// One experiment. Every field has a default, so a config file only needs the
/// fields it changes. `out_dir` and `workers` never affect results and are left
/// out of the echo written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: String,
    /// Measurement noise std σ_u, also used as the forward-data likelihood std.
    pub noise_level: f64,
    pub ensemble_size: usize,
    pub drift_sigma_lambda: f64,
    pub drift_sigma_theta: f64,
    pub window: usize,
    pub tau: f64,
    pub max_iter: usize,
    /// Std of the zero-mean Gaussian prior on every network weight and bias.
    pub sigma_theta_prior: f64,
    pub prior_scale: PriorScale,
    pub perturbed_observations: bool,
    /// Seeds the synthetic data; trial `t` runs the inversion with `seed + t`.
    pub seed: u64,
    pub trials: usize,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let drift = DriftModel::default();
        let stop = StoppingConfig::default();
        Self {
            problem: ProblemKind::Poisson1dLinear.name().to_string(),
            noise_level: 0.01,
            ensemble_size: 1000,
            drift_sigma_lambda: drift.sigma_lambda,
            drift_sigma_theta: drift.sigma_theta,
            window: stop.window,
            tau: stop.tau,
            max_iter: stop.max_iter,
            sigma_theta_prior: 1.0,
            prior_scale: PriorScale::Std,
            perturbed_observations: true,
            seed: 0,
            trials: 1,
            out_dir: None,
            workers: None,
        }
    }
}

/// Command-line overrides; `Some` fields replace the file's values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub problem: Option<String>,
    pub noise_level: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(p) = o.problem {
            self.problem = p;
        }
        if let Some(v) = o.noise_level {
            self.noise_level = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.trials {
            self.trials = v;
        }
        if o.out_dir.is_some() {
            self.out_dir = o.out_dir;
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        self.problem.parse::<ProblemKind>()?;
        let positive = [
            ("noise_level", self.noise_level),
            ("tau", self.tau),
            ("sigma_theta_prior", self.sigma_theta_prior),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [("drift_sigma_lambda", self.drift_sigma_lambda), ("drift_sigma_theta", self.drift_sigma_theta)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative and finite, got {v}"));
            }
        }
        if self.ensemble_size < 2 {
            return bad(format!("ensemble_size must be at least 2, got {}", self.ensemble_size));
        }
        for (name, v) in [("window", self.window), ("max_iter", self.max_iter), ("trials", self.trials)] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    pub fn eki_config(&self, trial: usize) -> EkiConfig {
        EkiConfig {
            ensemble_size: self.ensemble_size,
            drift: DriftModel { sigma_theta: self.drift_sigma_theta, sigma_lambda: self.drift_sigma_lambda },
            stopping: StoppingConfig { window: self.window, tau: self.tau, max_iter: self.max_iter },
            seed: self.seed.wrapping_add(trial as u64),
            perturbed_observations: self.perturbed_observations,
        }
    }

    pub fn build_problem(&self) -> Result<InverseProblem> {
        make_problem_with(&self.problem, self.noise_level, self.seed, ProblemOptions { prior_scale: self.prior_scale })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInfo {
    pub name: String,
    pub param_names: Vec<String>,
    pub true_values: Vec<f64>,
    pub output_names: Vec<String>,
    pub n_u: usize,
    pub n_f: usize,
    pub n_b: usize,
    pub n_params: usize,
    pub n_test: usize,
}

/// Gaussian posterior of `k` for the linear Poisson benchmark under the exact
/// solution family `k cos x`, using forward and boundary data together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePosterior {
    pub mean: f64,
    pub std: f64,
}

pub fn reference_posterior(problem: &InverseProblem) -> Option<ReferencePosterior> {
    if problem.kind != ProblemKind::Poisson1dLinear {
        return None;
    }
    let pairs: Vec<(f64, f64)> = [&problem.data_u, &problem.data_b]
        .into_iter()
        .flat_map(|d| d.locations.column(0).iter().copied().zip(d.values.iter().copied()).collect::<Vec<_>>())
        .collect();
    let (mean, std) =
        linear_reference_posterior(&pairs, problem.noise.sigma_u, problem.params.prior_mean[0], problem.params.prior_std[0]);
    Some(ReferencePosterior { mean, std })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial: usize,
    pub seed: u64,
    pub iterations: usize,
    pub stopped_by_rule: bool,
    pub reinit_count: usize,
    /// Relative L2 error of the posterior-mean prediction, one entry per output.
    pub e_u: Vec<f64>,
    /// Relative error of each physical parameter's posterior mean.
    pub e_lambda: Vec<f64>,
    pub lambda_mean: Vec<f64>,
    pub posterior_std_lambda: Vec<f64>,
    pub lambda_raw_mean: Vec<f64>,
    pub lambda_raw_std: Vec<f64>,
    pub final_discrepancy: f64,
    pub wall_time: f64,
    pub mean_iteration_wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub mean_iterations: f64,
    pub all_stopped_by_rule: bool,
    pub mean_e_u: Vec<f64>,
    pub mean_e_lambda: Vec<f64>,
    pub mean_lambda: Vec<f64>,
    pub mean_posterior_std_lambda: Vec<f64>,
    pub mean_wall_time: f64,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub problem: ProblemInfo,
    pub reference_posterior: Option<ReferencePosterior>,
    pub datagen_wall_time: f64,
    pub trials: Vec<TrialMetrics>,
    pub aggregate: Aggregate,
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Posterior predictive of one trial on the test grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictive {
    pub coord_names: Vec<String>,
    pub output_names: Vec<String>,
    pub points: Array2<f64>,
    pub reference: Array2<f64>,
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
}

/// Everything `emit` writes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub summary: Summary,
    /// Discrepancy history per trial.
    pub discrepancy: Vec<Vec<f64>>,
    /// Final-ensemble physical parameters per trial, `J × N_λ`.
    pub lambda_samples: Vec<Array2<f64>>,
    /// Predictive of the first trial.
    pub predictive: Option<Predictive>,
}

impl ResultBundle {
    /// Plain-text table of per-trial and mean metrics.
    pub fn table(&self) -> String {
        let s = &self.summary;
        let mut out = format!(
            "{} (sigma_u = {}, J = {}, {} trial(s))\n",
            s.problem.name, s.config.noise_level, s.config.ensemble_size, s.aggregate.trials
        );
        let names = s.problem.param_names.join(",");
        out.push_str(&format!(
            "{:>5} {:>6} {:>8} {:>10}  {:<28} {:<28} {}\n",
            "trial", "iters", "stopped", "wall[s]", "e_u", "e_lambda", names
        ));
        let fmt = |v: &[f64], pct: bool| {
            v.iter()
                .map(|x| if pct { format!("{:.3}%", 100.0 * x) } else { format!("{x:.5}") })
                .collect::<Vec<_>>()
                .join(" ")
        };
        for t in &s.trials {
            let lam: Vec<String> =
                t.lambda_mean.iter().zip(&t.posterior_std_lambda).map(|(m, sd)| format!("{m:.5}±{sd:.5}")).collect();
            out.push_str(&format!(
                "{:>5} {:>6} {:>8} {:>10.1}  {:<28} {:<28} {}\n",
                t.trial,
                t.iterations,
                t.stopped_by_rule,
                t.wall_time,
                fmt(&t.e_u, true),
                fmt(&t.e_lambda, true),
                lam.join(" ")
            ));
        }
        let a = &s.aggregate;
        out.push_str(&format!(
            "{:>5} {:>6.1} {:>8} {:>10.1}  {:<28} {:<28} {}\n",
            "mean",
            a.mean_iterations,
            a.all_stopped_by_rule,
            a.mean_wall_time,
            fmt(&a.mean_e_u, true),
            fmt(&a.mean_e_lambda, true),
            fmt(&a.mean_lambda, false)
        ));
        if let Some(r) = s.reference_posterior {
            out.push_str(&format!("reference posterior: {:.5} ± {:.5}\n", r.mean, r.std));
        }
        out
    }
}

fn mean_of(rows: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = rows.collect();
    let n = rows.len() as f64;
    let width = rows.first().map_or(0, Vec::len);
    (0..width).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n).collect()
}

fn run_trials(config: &ExperimentConfig) -> Result<ResultBundle> {
    let t0 = Instant::now();
    let problem = config.build_problem()?;
    let datagen_wall_time = t0.elapsed().as_secs_f64();
    let model = BpinnModel::new(&problem, config.sigma_theta_prior)?;
    let noise = NoiseModel::for_problem(&problem)?;
    let y = problem.observations();
    let nl = problem.params.len();
    let truth = &problem.params.true_values;

    let mut metrics = Vec::with_capacity(config.trials);
    let mut discrepancy = Vec::with_capacity(config.trials);
    let mut lambda_samples = Vec::with_capacity(config.trials);
    let mut predictive = None;
    for trial in 0..config.trials {
        let wrap = |e: Error| Error::Trial { index: trial, source: Box::new(e) };
        let cfg = config.eki_config(trial);
        let report = eki::run(&model, &cfg, &noise, &y).map_err(wrap)?;
        let summary = summarize(&report.posterior, &problem, problem.test_grid.points.view()).map_err(wrap)?;
        let e_u = output_errors(summary.predictive_mean.view(), &problem).map_err(wrap)?;
        let e_lambda = summary
            .lambda_mean
            .iter()
            .zip(truth)
            .map(|(&m, &t)| relative_error_lambda(m, t))
            .collect::<Result<Vec<_>>>()
            .map_err(wrap)?;
        let mut samples = report.posterior.members.slice(s![.., ..nl]).to_owned();
        for mut row in samples.rows_mut() {
            let phys = problem.params.transform(row.as_slice().expect("contiguous row"));
            row.iter_mut().zip(phys).for_each(|(r, p)| *r = p);
        }
        let n_it = report.iteration_times.len().max(1) as f64;
        metrics.push(TrialMetrics {
            trial,
            seed: cfg.seed,
            iterations: report.iterations_used,
            stopped_by_rule: report.stopped_by_rule,
            reinit_count: report.reinit_count,
            e_u,
            e_lambda,
            lambda_mean: summary.lambda_mean.clone(),
            posterior_std_lambda: summary.lambda_std.clone(),
            lambda_raw_mean: summary.lambda_raw_mean.clone(),
            lambda_raw_std: summary.lambda_raw_std.clone(),
            final_discrepancy: report.discrepancy_history.last().copied().unwrap_or(f64::NAN),
            wall_time: report.wall_time,
            mean_iteration_wall_time: report.iteration_times.iter().sum::<f64>() / n_it,
        });
        discrepancy.push(report.discrepancy_history);
        lambda_samples.push(samples);
        if trial == 0 {
            predictive = Some(Predictive {
                coord_names: problem.coord_names.iter().map(|c| c.to_string()).collect(),
                output_names: problem.output_names(),
                points: problem.test_grid.points.clone(),
                reference: problem.test_grid.reference.clone(),
                mean: summary.predictive_mean,
                std: summary.predictive_std,
            });
        }
    }

    let n = metrics.len() as f64;
    let aggregate = Aggregate {
        trials: metrics.len(),
        mean_iterations: metrics.iter().map(|m| m.iterations as f64).sum::<f64>() / n,
        all_stopped_by_rule: metrics.iter().all(|m| m.stopped_by_rule),
        mean_e_u: mean_of(metrics.iter().map(|m| m.e_u.clone())),
        mean_e_lambda: mean_of(metrics.iter().map(|m| m.e_lambda.clone())),
        mean_lambda: mean_of(metrics.iter().map(|m| m.lambda_mean.clone())),
        mean_posterior_std_lambda: mean_of(metrics.iter().map(|m| m.posterior_std_lambda.clone())),
        mean_wall_time: metrics.iter().map(|m| m.wall_time).sum::<f64>() / n,
    };
    let (n_u, n_f, n_b) = problem.block_sizes();
    let summary = Summary {
        config: config.clone(),
        problem: ProblemInfo {
            name: problem.name().to_string(),
            param_names: problem.params.names.clone(),
            true_values: truth.clone(),
            output_names: problem.output_names(),
            n_u,
            n_f,
            n_b,
            n_params: problem.layout().len(),
            n_test: problem.test_grid.points.nrows(),
        },
        reference_posterior: reference_posterior(&problem),
        datagen_wall_time,
        trials: metrics,
        aggregate,
    };
    Ok(ResultBundle { summary, discrepancy, lambda_samples, predictive })
}

/// Validate `config`, then run `config.trials` inversions one after another.
/// Member evaluations use a pool of `config.workers` threads (all cores when unset);
/// results do not depend on the thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultBundle> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run_trials(config))
}

/// Write `summary.json`, `lambda_samples.csv`, `predictive.csv` and `discrepancy.csv` into `dir`.
pub fn emit(bundle: &ResultBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    let s = &bundle.summary;
    if s.trials.is_empty() || bundle.lambda_samples.len() != s.trials.len() || bundle.discrepancy.len() != s.trials.len() {
        return Err(Error::InvalidConfig("result bundle holds no complete trials".into()));
    }
    fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> =
        ["summary.json", "lambda_samples.csv", "predictive.csv", "discrepancy.csv"].iter().map(|f| dir.join(f)).collect();

    fs::write(&paths[0], serde_json::to_string_pretty(s)? + "\n")?;

    let mut w = csv::Writer::from_path(&paths[1])?;
    let mut header = vec!["trial".to_string(), "member".to_string()];
    header.extend(s.problem.param_names.iter().cloned());
    w.write_record(&header)?;
    for (t, samples) in bundle.lambda_samples.iter().enumerate() {
        for (j, row) in samples.rows().into_iter().enumerate() {
            let mut rec = vec![t.to_string(), j.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&paths[2])?;
    if let Some(p) = &bundle.predictive {
        let mut header = p.coord_names.clone();
        for o in &p.output_names {
            header.extend([format!("{o}_reference"), format!("{o}_mean"), format!("{o}_std")]);
        }
        w.write_record(&header)?;
        for i in 0..p.points.nrows() {
            let mut rec: Vec<String> = p.points.row(i).iter().map(|v| v.to_string()).collect();
            for o in 0..p.output_names.len() {
                rec.extend([p.reference[[i, o]], p.mean[[i, o]], p.std[[i, o]]].iter().map(|v| v.to_string()));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&paths[3])?;
    w.write_record(["trial", "iteration", "discrepancy"])?;
    for (t, hist) in bundle.discrepancy.iter().enumerate() {
        for (i, d) in hist.iter().enumerate() {
            w.write_record([t.to_string(), (i + 1).to_string(), d.to_string()])?;
        }
    }
    w.flush()?;
    Ok(paths)
}

/// Write the noisy datasets and the reference solution of one problem.
pub fn datagen(problem: &str, noise_level: f64, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let p = make_problem_with(problem, noise_level, seed, ProblemOptions::default())?;
    fs::create_dir_all(dir)?;
    let data = dir.join("dataset.csv");
    let reference = dir.join("reference.csv");
    p.write_dataset_csv(&data)?;
    p.write_reference_csv(&reference)?;
    Ok(vec![data, reference])
}

/// Machine-readable description of a failure, printed by the command-line front end.
pub fn error_report(err: &Error) -> serde_json::Value {
    let trial = match err {
        Error::Trial { index, .. } => Some(*index),
        _ => None,
    };
    serde_json::json!({
        "status": "error",
        "kind": err.kind(),
        "trial": trial,
        "message": err.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_benchmark_settings() {
        let c = ExperimentConfig::default();
        assert_eq!(c.ensemble_size, 1000);
        assert_eq!((c.drift_sigma_lambda, c.drift_sigma_theta), (0.1, 0.002));
        assert_eq!((c.window, c.tau, c.max_iter), (25, 0.05, 1000));
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults_and_rejects_unknown_fields() {
        let c = ExperimentConfig::from_json(r#"{"problem": "burgers", "trials": 3}"#).unwrap();
        assert_eq!(c.problem, "burgers");
        assert_eq!(c.trials, 3);
        assert_eq!(c.ensemble_size, 1000);
        assert!(ExperimentConfig::from_json(r#"{"ensemble": 3}"#).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = ExperimentConfig::from_json(r#"{"problem": "burgers", "seed": 4}"#).unwrap();
        c.apply(Overrides { seed: Some(9), workers: Some(2), ..Default::default() });
        assert_eq!((c.problem.as_str(), c.seed, c.workers), ("burgers", 9, Some(2)));
    }

    #[test]
    fn echo_omits_runtime_only_fields() {
        let c = ExperimentConfig { workers: Some(3), out_dir: Some("x".into()), ..Default::default() };
        let text = serde_json::to_string(&c).unwrap();
        assert!(!text.contains("workers") && !text.contains("out_dir"));
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back, ExperimentConfig { workers: None, out_dir: None, ..c });
    }

    #[test]
    fn validation_rejects_bad_values() {
        let cases = [
            ExperimentConfig { problem: "heat".into(), ..Default::default() },
            ExperimentConfig { noise_level: 0.0, ..Default::default() },
            ExperimentConfig { ensemble_size: 1, ..Default::default() },
            ExperimentConfig { tau: -1.0, ..Default::default() },
            ExperimentConfig { drift_sigma_theta: f64::NAN, ..Default::default() },
            ExperimentConfig { trials: 0, ..Default::default() },
            ExperimentConfig { window: 0, ..Default::default() },
            ExperimentConfig { workers: Some(0), ..Default::default() },
            ExperimentConfig { sigma_theta_prior: 0.0, ..Default::default() },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn trial_seeds_are_offset() {
        let c = ExperimentConfig { seed: 10, ..Default::default() };
        assert_eq!(c.eki_config(0).seed, 10);
        assert_eq!(c.eki_config(3).seed, 13);
    }

    #[test]
    fn reference_posterior_only_for_linear_poisson() {
        let c = ExperimentConfig::default();
        let r = reference_posterior(&c.build_problem().unwrap()).unwrap();
        assert!((r.mean - 1.0).abs() < 0.03 && r.std > 0.0 && r.std < 0.01);
        let b = ExperimentConfig { problem: "diffreact2d".into(), ..Default::default() };
        assert!(reference_posterior(&b.build_problem().unwrap()).is_none());
    }

    #[test]
    fn error_report_carries_kind_and_trial() {
        let e = Error::Trial { index: 2, source: Box::new(Error::TooManyReinits(3)) };
        let r = error_report(&e);
        assert_eq!(r["kind"], "too_many_reinits");
        assert_eq!(r["trial"], 2);
        assert_eq!(r["status"], "error");
    }
}
