//! Oracle checks that need no inversion run: network size, jets against finite
//! differences, the Kalman update against conjugate Gaussian posteriors, and
//! the three reference solvers against independent solutions.

use std::f64::consts::PI;

use ndarray::{array, Array2, ArrayView1};
use rand::Rng;
use serde::Serialize;

use crate::datagen::{burgers_grid_solve, burgers_reference, equispaced, ko_solve, poisson2d_solve};
use crate::eki::{init_ensemble, kalman_update, observe_ensemble, LinearGaussianModel, NoiseModel, StreamKey};
use crate::linalg::RngStream;
use crate::surrogate::{forward, forward_jet, sample_theta_prior, MlpArchitecture};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

/// The three benchmark architectures: 1-D scalar field, 2-D scalar field, 3-output ODE system.
pub fn benchmark_architectures() -> [MlpArchitecture; 3] {
    [MlpArchitecture::benchmark(1, 1), MlpArchitecture::benchmark(2, 1), MlpArchitecture::benchmark(1, 3)]
}

pub fn param_counts() -> Check {
    let got: Vec<usize> = benchmark_architectures().iter().map(|a| a.param_count()).collect();
    Check::new("parameter counts", got == [5251, 5301, 5353], format!("{got:?}"))
}

/// Richardson-extrapolated central differences of `f` at `x`, fourth order in `h`.
pub fn richardson_derivatives(f: impl Fn(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
    let d1 = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let d2 = |h: f64| (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    ((4.0 * d1(h / 2.0) - d1(h)) / 3.0, (4.0 * d2(h / 2.0) - d2(h)) / 3.0)
}

/// Largest scaled deviation `|jet − fd| / max(|fd|, 1)` over `triples` random
/// `(θ, x, direction)` draws for each benchmark architecture.
pub fn jet_fd_deviation(triples: usize, seed: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (a, arch) in benchmark_architectures().iter().enumerate() {
        let mut rng = RngStream::new(seed, 100 + a as u64).rng();
        for t in 0..triples {
            let theta = sample_theta_prior(arch, 1.0, RngStream::new(seed, 1000 * (a as u64 + 1) + t as u64))?;
            let x: Vec<f64> = (0..arch.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dir = rng.random_range(0..arch.input_dim);
            let jets = forward_jet(arch, &theta, &x, dir)?;
            for (o, jet) in jets.iter().enumerate() {
                let along = |s: f64| {
                    let mut p = x.clone();
                    p[dir] = s;
                    forward(arch, &theta, &p).map(|v| v[o]).unwrap_or(f64::NAN)
                };
                let (fd1, fd2) = richardson_derivatives(along, x[dir], 1e-3);
                worst = worst.max((jet.d1 - fd1).abs() / fd1.abs().max(1.0));
                worst = worst.max((jet.d2 - fd2).abs() / fd2.abs().max(1.0));
            }
        }
    }
    Ok(worst)
}

pub fn jets_vs_finite_differences() -> Result<Check> {
    let worst = jet_fd_deviation(20, 2024)?;
    Ok(Check::new("jets vs finite differences", worst <= 1e-5, format!("max scaled deviation {worst:.2e}")))
}

/// Relative errors of one perturbed-observation update against the closed-form
/// posterior, with moments averaged over `seeds`. Returns `(mean error, variance error)`
/// maximised over coordinates.
pub fn conjugate_errors(model: &LinearGaussianModel, y: &[f64], r: &[f64], size: usize, seeds: &[u64]) -> Result<(f64, f64)> {
    let (pm, pc) = model.posterior(y, r)?;
    let n = pm.len();
    let mut mean = vec![0.0; n];
    let mut var = vec![0.0; n];
    let noise = NoiseModel { variances: r.to_vec() };
    for &seed in seeds {
        let ens = init_ensemble(model, size, seed, 0)?;
        let yh = observe_ensemble(model, &ens)?;
        let key = StreamKey { seed, epoch: 0, iteration: 1 };
        let post: Array2<f64> = kalman_update(ens.members.view(), yh.view(), y, &noise, Some(key))?;
        for i in 0..n {
            let (m, v) = moments(post.column(i));
            mean[i] += m / seeds.len() as f64;
            var[i] += v / seeds.len() as f64;
        }
    }
    let em = (0..n).map(|i| ((mean[i] - pm[i]) / pm[i]).abs()).fold(0.0, f64::max);
    let ev = (0..n).map(|i| ((var[i] - pc[[i, i]]) / pc[[i, i]]).abs()).fold(0.0, f64::max);
    Ok((em, ev))
}

fn moments(col: ArrayView1<f64>) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    (mean, col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

pub fn linear_gaussian_oracle() -> Result<Check> {
    let one = LinearGaussianModel { matrix: array![[1.0]], prior_mean: vec![0.5], prior_std: vec![2.0] };
    let two = LinearGaussianModel {
        matrix: array![[1.0, 0.5], [-0.3, 2.0]],
        prior_mean: vec![1.0, -1.0],
        prior_std: vec![1.5, 0.7],
    };
    let seeds = [11, 12, 13];
    let (m1, v1) = conjugate_errors(&one, &[1.7], &[0.64], 50_000, &seeds)?;
    let (m2, v2) = conjugate_errors(&two, &[0.4, -2.5], &[0.25, 0.09], 50_000, &seeds)?;
    let (m, v) = (m1.max(m2), v1.max(v2));
    Ok(Check::new(
        "linear-Gaussian Kalman oracle",
        m <= 0.02 && v <= 0.05,
        format!("mean rel. error {m:.4}, variance rel. error {v:.4}"),
    ))
}

/// Max `|u₁²+u₂²+u₃² − 1.89|` along the Kraichnan–Orszag trajectory on `[0, 10]`.
pub fn ko_energy_drift(dt: f64) -> f64 {
    let t = equispaced(1001, 0.0, 10.0);
    ko_solve(1.0, 1.0, [1.0, 0.8, 0.5], &t, dt)
        .iter()
        .map(|u| (u[0] * u[0] + u[1] * u[1] + u[2] * u[2] - 1.89).abs())
        .fold(0.0, f64::max)
}

pub fn ko_invariant() -> Check {
    let d = ko_energy_drift(1e-3);
    Check::new("Kraichnan-Orszag energy invariant", d <= 1e-8, format!("max drift {d:.2e}"))
}

/// Max deviation between Cole–Hopf quadrature and the grid solver on 33 × 11 probes.
pub fn burgers_probe_deviation() -> Result<f64> {
    let nu = 0.1 / PI;
    let grid = burgers_grid_solve(nu, 1024, 3.0 / PI, 9550, 10);
    let mut worst: f64 = 0.0;
    for (f, &t) in grid.t.iter().enumerate() {
        for i in 0..33 {
            let x = -1.0 + i as f64 / 16.0;
            worst = worst.max((grid.eval(x, f) - burgers_reference(nu, x, t)?).abs());
        }
    }
    Ok(worst)
}

pub fn burgers_oracle() -> Result<Check> {
    let d = burgers_probe_deviation()?;
    Ok(Check::new("Cole-Hopf vs grid solver", d <= 1e-3, format!("max deviation {d:.2e}")))
}

/// Max nodal error of the finite-difference Poisson solver against
/// `0.1/(0.02·2π²)·sin(πx)sin(πy)`.
pub fn poisson_manufactured_error(grid_n: usize) -> Result<f64> {
    let f = |x: f64, y: f64| 0.1 * (PI * x).sin() * (PI * y).sin();
    let sol = poisson2d_solve(0.02, f, grid_n)?;
    let mut worst: f64 = 0.0;
    for i in 0..=grid_n {
        for j in 0..=grid_n {
            let (x, y) = (i as f64 / grid_n as f64, j as f64 / grid_n as f64);
            worst = worst.max((sol.node(i, j) - f(x, y) / (0.02 * 2.0 * PI * PI)).abs());
        }
    }
    Ok(worst)
}

pub fn poisson_oracle() -> Result<Check> {
    let e = poisson_manufactured_error(128)?;
    Ok(Check::new("Poisson manufactured solution", e <= 1e-3, format!("max nodal error {e:.2e}")))
}

/// Every check; a check whose computation errors counts as failed.
pub fn run_all() -> Vec<Check> {
    let fallible: [(&'static str, fn() -> Result<Check>); 4] = [
        ("jets vs finite differences", jets_vs_finite_differences),
        ("linear-Gaussian Kalman oracle", linear_gaussian_oracle),
        ("Cole-Hopf vs grid solver", burgers_oracle),
        ("Poisson manufactured solution", poisson_oracle),
    ];
    let mut out = vec![param_counts(), ko_invariant()];
    for (name, f) in fallible {
        out.push(f().unwrap_or_else(|e| Check::new(name, false, e.to_string())));
    }
    out
}
