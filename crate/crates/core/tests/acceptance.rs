//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.
//!
//! Quantitative criteria use the median over `ACCEPTANCE_SEEDS` seeds (default 5)
//! of full-size runs with default settings; expect a long runtime on few cores.

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use eki_bpinn::eki::{self, BpinnModel, EkiConfig, LinearGaussianModel, NoiseModel, StoppingConfig};
use eki_bpinn::linalg::RngStream;
use eki_bpinn::problems::make_problem;
use eki_bpinn::runner::{emit, run_experiment, ExperimentConfig, ResultBundle, TrialMetrics};
use eki_bpinn::selftest::{
    benchmark_architectures, burgers_probe_deviation, conjugate_errors, jet_fd_deviation, ko_energy_drift,
    poisson_manufactured_error,
};
use eki_bpinn::surrogate::{sample_theta_prior, MlpArchitecture};
use eki_bpinn::Result;
use ndarray::array;
use serde_json::Value;

type Outcome = Result<(bool, String)>;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn pct(x: f64) -> String {
    format!("{:.3}%", 100.0 * x)
}

struct Suite {
    seeds: Vec<u64>,
    all_passed: bool,
}

impl Suite {
    fn check(&mut self, id: usize, title: &str, f: impl FnOnce(&Suite) -> Outcome) {
        let t0 = Instant::now();
        let (passed, detail) = match f(self) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        self.all_passed &= passed;
        let mut out = std::io::stdout().lock();
        let verdict = if passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "criterion {id:>2} {verdict}  {title}: {detail} ({:.1}s)", t0.elapsed().as_secs_f64());
        let _ = out.flush();
    }

    /// One full default run per seed; dataset and EKI both seeded by `seed`.
    fn runs(&self, problem: &str, noise: f64) -> Result<Vec<ResultBundle>> {
        self.seeds
            .iter()
            .map(|&seed| {
                let cfg = ExperimentConfig { problem: problem.into(), noise_level: noise, seed, ..Default::default() };
                let b = run_experiment(&cfg)?;
                let t = &b.summary.trials[0];
                eprintln!(
                    "  {problem} sigma_u={noise} seed={seed}: {} iterations, e_u {:?}, lambda {:?}, {:.0}s",
                    t.iterations, t.e_u, t.lambda_mean, t.wall_time
                );
                Ok(b)
            })
            .collect()
    }
}

fn trial(b: &ResultBundle) -> &TrialMetrics {
    &b.summary.trials[0]
}

fn slowest(runs: &[ResultBundle]) -> String {
    let w = runs.iter().map(|b| trial(b).wall_time).fold(0.0, f64::max);
    format!("slowest run {w:.0}s")
}

fn crit_param_counts() -> Outcome {
    let mut counts = Vec::new();
    let mut lengths_match = true;
    for arch in benchmark_architectures() {
        let theta = sample_theta_prior(&arch, 1.0, RngStream::new(1, 1))?;
        lengths_match &= theta.len() == arch.param_count();
        counts.push(arch.param_count());
    }
    Ok((counts == [5251, 5301, 5353] && lengths_match, format!("{counts:?}, prior vector lengths match: {lengths_match}")))
}

fn crit_jets() -> Outcome {
    let worst = jet_fd_deviation(20, 7)?;
    Ok((worst <= 1e-5, format!("max |jet - fd| / max(|fd|, 1) = {worst:.2e} over 20 triples x 3 architectures")))
}

fn crit_linear_gaussian() -> Outcome {
    let one = LinearGaussianModel { matrix: array![[1.0]], prior_mean: vec![-0.8], prior_std: vec![1.2] };
    let two = LinearGaussianModel {
        matrix: array![[2.0, -1.0], [0.4, 1.5]],
        prior_mean: vec![0.5, 2.0],
        prior_std: vec![1.0, 0.8],
    };
    let seeds = [101, 102, 103];
    let (m1, v1) = conjugate_errors(&one, &[0.9], &[0.36], 50_000, &seeds)?;
    let (m2, v2) = conjugate_errors(&two, &[1.1, 3.4], &[0.3, 0.5], 50_000, &seeds)?;
    let ok = m1.max(m2) <= 0.02 && v1.max(v2) <= 0.05;
    Ok((ok, format!("1D mean {} var {}; 2D mean {} var {}", pct(m1), pct(v1), pct(m2), pct(v2))))
}

fn crit_reference_posterior(runs: &[ResultBundle]) -> Outcome {
    let mut z = Vec::new();
    let mut ratio = Vec::new();
    for b in runs {
        let r = b.summary.reference_posterior.expect("linear Poisson has a reference posterior");
        let t = trial(b);
        z.push((t.lambda_mean[0] - r.mean).abs() / r.std);
        ratio.push(t.posterior_std_lambda[0] / r.std);
    }
    let (z, ratio) = (median(z), median(ratio));
    let ok = z <= 3.0 && (1.0 / 3.0..=3.0).contains(&ratio);
    Ok((ok, format!("median |k_eki - k_ref| / std_ref = {z:.2}, median std_eki / std_ref = {ratio:.2}")))
}

fn crit_poisson1d_errors(runs: &[ResultBundle]) -> Outcome {
    let eu = median(runs.iter().map(|b| trial(b).e_u[0]).collect());
    let ek = median(runs.iter().map(|b| trial(b).e_lambda[0]).collect());
    let it = median(
        runs.iter().map(|b| if trial(b).stopped_by_rule { trial(b).iterations as f64 } else { f64::INFINITY }).collect(),
    );
    let ok = eu <= 0.02 && ek <= 0.01 && (50.0..=600.0).contains(&it);
    Ok((ok, format!("e_u {}, e_k {}, iterations {it} (medians; {})", pct(eu), pct(ek), slowest(runs))))
}

fn crit_nonlinear(s: &Suite) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (noise, ek_max, eu_max) in [(0.01, 0.02, 0.05), (0.1, 0.05, 0.20)] {
        let runs = s.runs("poisson1d_nonlinear", noise)?;
        let ek = median(runs.iter().map(|b| trial(b).e_lambda[0]).collect());
        let eu = median(runs.iter().map(|b| trial(b).e_u[0]).collect());
        ok &= ek <= ek_max && eu <= eu_max;
        parts.push(format!("sigma_u={noise}: e_k {}, e_u {} ({})", pct(ek), pct(eu), slowest(&runs)));
    }
    Ok((ok, parts.join("; ")))
}

fn crit_diffreact(s: &Suite) -> Outcome {
    let runs = s.runs("diffreact2d", 0.01)?;
    let ek = median(runs.iter().map(|b| trial(b).e_lambda[0]).collect());
    let eu = median(runs.iter().map(|b| trial(b).e_u[0]).collect());
    let z = median(
        runs.iter()
            .map(|b| {
                let t = trial(b);
                (t.lambda_mean[0] - 1.0).abs() / t.posterior_std_lambda[0]
            })
            .collect(),
    );
    let ok = ek <= 0.02 && eu <= 0.05 && z <= 3.0;
    Ok((ok, format!("e_k {}, e_u {}, |k - 1| / std {z:.2} (medians; {})", pct(ek), pct(eu), slowest(&runs))))
}

fn crit_kraichnan(s: &Suite) -> Outcome {
    let runs = s.runs("kraichnan_orszag", 0.01)?;
    let names = &runs[0].summary.problem.param_names;
    let idx = |n: &str| names.iter().position(|x| x == n).expect("parameter present");
    let ea = median(runs.iter().map(|b| trial(b).e_lambda[idx("a")]).collect());
    let eb = median(runs.iter().map(|b| trial(b).e_lambda[idx("b")]).collect());
    let eu: Vec<f64> = (0..3).map(|o| median(runs.iter().map(|b| trial(b).e_u[o]).collect())).collect();
    let ok = eb <= 0.03 && ea <= 0.12 && eu.iter().all(|&e| e <= 0.08);
    let eus: Vec<String> = eu.iter().map(|&e| pct(e)).collect();
    Ok((ok, format!("e_a {}, e_b {}, e_u [{}] (medians; {})", pct(ea), pct(eb), eus.join(", "), slowest(&runs))))
}

fn crit_burgers(s: &Suite) -> Outcome {
    let runs = s.runs("burgers", 0.01)?;
    let en = median(runs.iter().map(|b| trial(b).e_lambda[0]).collect());
    let eu = median(runs.iter().map(|b| trial(b).e_u[0]).collect());
    let positive = runs.iter().all(|b| b.lambda_samples[0].iter().all(|&v| v > 0.0));
    let ok = en <= 0.10 && eu <= 0.05 && positive;
    Ok((ok, format!("e_nu {}, e_u {} (medians), all nu samples positive: {positive} ({})", pct(en), pct(eu), slowest(&runs))))
}

fn crit_source(s: &Suite) -> Outcome {
    let runs = s.runs("source_localization", 0.01)?;
    let truth = runs[0].summary.problem.true_values.clone();
    let errs: Vec<f64> = (0..truth.len())
        .map(|i| median(runs.iter().map(|b| (trial(b).lambda_mean[i] - truth[i]).abs()).collect()))
        .collect();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.4}")).collect();
    Ok((worst <= 0.06, format!("median absolute coordinate errors [{}], max {worst:.4} ({})", shown.join(", "), slowest(&runs))))
}

fn strip_wall_times(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !k.contains("wall_time"));
            map.values_mut().for_each(strip_wall_times);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_times),
        _ => {}
    }
}

fn crit_determinism() -> Outcome {
    let base = ExperimentConfig { problem: "diffreact2d".into(), max_iter: 8, seed: 42, ..Default::default() };
    let mut texts = Vec::new();
    for workers in [1, 4] {
        let dir = tempfile::tempdir()?;
        let bundle = run_experiment(&ExperimentConfig { workers: Some(workers), ..base.clone() })?;
        emit(&bundle, dir.path())?;
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json"))?)?;
        strip_wall_times(&mut v);
        let csvs = ["lambda_samples.csv", "predictive.csv", "discrepancy.csv"]
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)))
            .collect::<std::io::Result<Vec<_>>>()?;
        texts.push((serde_json::to_string(&v)?, csvs));
    }
    let same_summary = texts[0].0 == texts[1].0;
    let same_csv = texts[0].1 == texts[1].1;
    Ok((same_summary && same_csv, format!("J=1000, 8 iterations, 1 vs 4 workers: summary identical {same_summary}, CSV files identical {same_csv}")))
}

fn iteration_time(arch: MlpArchitecture) -> Result<(usize, f64)> {
    let mut p = make_problem("poisson1d_linear", 0.01, 0)?;
    p.arch = arch;
    let model = BpinnModel::new(&p, 1.0)?;
    let noise = NoiseModel::for_problem(&p)?;
    let cfg = EkiConfig { stopping: StoppingConfig { max_iter: 7, ..Default::default() }, ..Default::default() };
    let report = eki::run(&model, &cfg, &noise, &p.observations())?;
    // The first iteration includes allocator and cache warm-up.
    Ok((p.layout().len(), median(report.iteration_times[1..].to_vec())))
}

fn crit_complexity() -> Outcome {
    let (n1, t1) = iteration_time(MlpArchitecture::benchmark(1, 1))?;
    let (n2, t2) = iteration_time(MlpArchitecture::new(1, vec![71, 71, 71], 1))?;
    let ratio = t2 / t1;
    Ok((ratio <= 2.2, format!("N_xi {n1} -> {n2} ({:.2}x): median iteration {t1:.3}s -> {t2:.3}s, ratio {ratio:.2}", n2 as f64 / n1 as f64)))
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let n: u64 = std::env::var("ACCEPTANCE_SEEDS").ok().and_then(|s| s.parse().ok()).unwrap_or(5);
    let mut s = Suite { seeds: (0..n).collect(), all_passed: true };

    s.check(1, "parameter counts", |_| crit_param_counts());
    s.check(2, "jets vs finite differences", |_| crit_jets());
    s.check(3, "linear-Gaussian Kalman oracle", |_| crit_linear_gaussian());
    let linear = s.runs("poisson1d_linear", 0.01);
    match &linear {
        Ok(runs) => {
            s.check(4, "reference posterior agreement (linear Poisson)", |_| crit_reference_posterior(runs));
            s.check(5, "linear Poisson errors and stopping", |_| crit_poisson1d_errors(runs));
        }
        Err(e) => {
            let msg = e.to_string();
            s.check(4, "reference posterior agreement (linear Poisson)", |_| Ok((false, format!("error: {msg}"))));
            s.check(5, "linear Poisson errors and stopping", |_| Ok((false, format!("error: {msg}"))));
        }
    }
    s.check(6, "nonlinear Poisson errors", crit_nonlinear);
    s.check(7, "diffusion-reaction errors", crit_diffreact);
    s.check(8, "Kraichnan-Orszag errors", crit_kraichnan);
    s.check(9, "Burgers errors", crit_burgers);
    s.check(10, "source localization", crit_source);
    s.check(11, "Kraichnan-Orszag energy invariant", |_| {
        let d = ko_energy_drift(1e-3);
        Ok((d <= 1e-8, format!("max |E - 1.89| = {d:.2e} on [0, 10], dt = 1e-3")))
    });
    s.check(12, "Cole-Hopf vs grid solver", |_| {
        let d = burgers_probe_deviation()?;
        Ok((d <= 1e-3, format!("max deviation {d:.2e} on 33 x 11 probes")))
    });
    s.check(13, "Poisson finite-difference oracle", |_| {
        let e = poisson_manufactured_error(128)?;
        Ok((e <= 1e-3, format!("max nodal error {e:.2e} at grid_n = 128")))
    });
    s.check(14, "determinism across worker counts", |_| crit_determinism());
    s.check(15, "per-iteration cost vs parameter dimension", |_| crit_complexity());

    if s.all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
