//! Ensemble Kalman inversion with artificial dynamics and perturbed observations.
//!
//! One iteration: perturb every member, observe every member, record the
//! discrepancy of the mean prediction, apply the Kalman update, then test the
//! windowed stopping rule.

use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{centered, column_means, fill_standard_normal, Cholesky, RngStream};
use crate::problems::InverseProblem;
use crate::surrogate::fill_theta_prior;

/// Non-finite states inside this many leading iterations trigger a restart from the prior.
pub const REINIT_WINDOW: usize = 10;
pub const MAX_REINITS: usize = 3;

/// Columns of `ξ` handled per task in the update; fixed so results do not
/// depend on the thread count.
const UPDATE_BLOCK: usize = 256;

/// A parametrised forward map `ξ ↦ G(ξ)` with a Gaussian-style prior.
///
/// The first `lambda_len()` entries of `ξ` are physical parameters; the rest
/// are surrogate weights.
pub trait ForwardModel: Sync {
    fn param_len(&self) -> usize;
    fn lambda_len(&self) -> usize;
    fn obs_len(&self) -> usize;
    fn sample_prior(&self, rng: &mut ChaCha8Rng, out: &mut [f64]);
    fn observe(&self, xi: &[f64]) -> Result<Vec<f64>>;
}

/// A benchmark problem with an i.i.d. `N(0, σ²)` prior on the network weights.
#[derive(Debug, Clone, Copy)]
pub struct BpinnModel<'a> {
    pub problem: &'a InverseProblem,
    pub sigma_theta_prior: f64,
}

impl<'a> BpinnModel<'a> {
    pub fn new(problem: &'a InverseProblem, sigma_theta_prior: f64) -> Result<Self> {
        if !(sigma_theta_prior.is_finite() && sigma_theta_prior > 0.0) {
            return Err(Error::InvalidConfig(format!("network prior std must be positive, got {sigma_theta_prior}")));
        }
        Ok(Self { problem, sigma_theta_prior })
    }
}

impl ForwardModel for BpinnModel<'_> {
    fn param_len(&self) -> usize {
        self.problem.layout().len()
    }

    fn lambda_len(&self) -> usize {
        self.problem.params.len()
    }

    fn obs_len(&self) -> usize {
        self.problem.n_obs()
    }

    fn sample_prior(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let p = &self.problem.params;
        let (lam, theta) = out.split_at_mut(p.len());
        fill_standard_normal(rng, lam);
        for ((v, m), s) in lam.iter_mut().zip(&p.prior_mean).zip(&p.prior_std) {
            *v = m + s * *v;
        }
        fill_theta_prior(self.sigma_theta_prior, rng, theta).expect("prior std validated at construction");
    }

    fn observe(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.problem.observe(xi)
    }
}

/// `G(ξ) = A ξ` with independent Gaussian priors; every entry of `ξ` counts as physical.
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    pub matrix: Array2<f64>,
    pub prior_mean: Vec<f64>,
    pub prior_std: Vec<f64>,
}

impl LinearGaussianModel {
    /// Closed-form posterior mean and covariance for observation `y` with noise variances `r`.
    pub fn posterior(&self, y: &[f64], r: &[f64]) -> Result<(Array1<f64>, Array2<f64>)> {
        let n = self.prior_mean.len();
        let a = &self.matrix;
        let mut prec = Array2::<f64>::zeros((n, n));
        let mut rhs = Array1::<f64>::zeros(n);
        for i in 0..n {
            prec[[i, i]] = 1.0 / self.prior_std[i].powi(2);
            rhs[i] = self.prior_mean[i] / self.prior_std[i].powi(2);
        }
        for (k, row) in a.rows().into_iter().enumerate() {
            for i in 0..n {
                rhs[i] += row[i] * y[k] / r[k];
                for j in 0..n {
                    prec[[i, j]] += row[i] * row[j] / r[k];
                }
            }
        }
        let chol = Cholesky::factor(prec.view())?;
        let cov = chol.solve(Array2::eye(n).view())?;
        let mean = cov.dot(&rhs);
        Ok((mean, cov))
    }
}

impl ForwardModel for LinearGaussianModel {
    fn param_len(&self) -> usize {
        self.matrix.ncols()
    }

    fn lambda_len(&self) -> usize {
        self.matrix.ncols()
    }

    fn obs_len(&self) -> usize {
        self.matrix.nrows()
    }

    fn sample_prior(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        fill_standard_normal(rng, out);
        for ((v, m), s) in out.iter_mut().zip(&self.prior_mean).zip(&self.prior_std) {
            *v = m + s * *v;
        }
    }

    fn observe(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.param_len() {
            return Err(Error::DimensionMismatch(format!("expected {} parameters, got {}", self.param_len(), xi.len())));
        }
        Ok(self.matrix.dot(&ArrayView1::from(xi)).to_vec())
    }
}

/// `J` members stored one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Array2<f64>,
    pub iteration: usize,
}

impl Ensemble {
    pub fn new(members: Array2<f64>) -> Result<Self> {
        if members.nrows() < 2 {
            return Err(Error::EnsembleTooSmall(members.nrows()));
        }
        Ok(Self { members, iteration: 0 })
    }

    pub fn size(&self) -> usize {
        self.members.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.members.iter().all(|v| v.is_finite())
    }
}

/// Artificial-dynamics drift: independent Gaussian steps with std `sigma_lambda`
/// on the physical block and `sigma_theta` on the network block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub sigma_theta: f64,
    pub sigma_lambda: f64,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self { sigma_theta: 0.002, sigma_lambda: 0.1 }
    }
}

/// Diagonal observation covariance `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub variances: Vec<f64>,
}

impl NoiseModel {
    /// Block-diagonal `R` in `[u, f, b]` order.
    pub fn blocks(sigma_u: f64, sigma_f: f64, sigma_b: f64, n_u: usize, n_f: usize, n_b: usize) -> Result<Self> {
        for s in [sigma_u, sigma_f, sigma_b] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidConfig(format!("noise std must be positive, got {s}")));
            }
        }
        let mut v = vec![sigma_u * sigma_u; n_u];
        v.extend(std::iter::repeat_n(sigma_f * sigma_f, n_f));
        v.extend(std::iter::repeat_n(sigma_b * sigma_b, n_b));
        Ok(Self { variances: v })
    }

    pub fn for_problem(p: &InverseProblem) -> Result<Self> {
        let (nu, nf, nb) = p.block_sizes();
        Self::blocks(p.noise.sigma_u, p.noise.sigma_f, p.noise.sigma_b, nu, nf, nb)
    }

    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    pub window: usize,
    pub tau: f64,
    pub max_iter: usize,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        Self { window: 25, tau: 0.05, max_iter: 1000 }
    }
}

/// Settings for [`run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkiConfig {
    pub ensemble_size: usize,
    pub drift: DriftModel,
    pub stopping: StoppingConfig,
    pub seed: u64,
    /// Draw fresh `η ~ N(0, R)` for every member's innovation.
    pub perturbed_observations: bool,
}

impl Default for EkiConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 1000,
            drift: DriftModel::default(),
            stopping: StoppingConfig::default(),
            seed: 0,
            perturbed_observations: true,
        }
    }
}

/// Outcome of one inversion.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub posterior: Ensemble,
    pub discrepancy_history: Vec<f64>,
    pub iterations_used: usize,
    pub reinit_count: usize,
    /// Seconds spent in the iteration loop.
    pub wall_time: f64,
    /// Seconds per completed iteration.
    pub iteration_times: Vec<f64>,
    pub stopped_by_rule: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
enum Purpose {
    Init = 1,
    Drift = 2,
    Innovation = 3,
}

/// Identifies the random streams of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    /// Restart counter.
    pub epoch: u64,
    pub iteration: u64,
}

impl StreamKey {
    /// Packs purpose (4 bits), epoch (4), iteration (24) and member (32).
    fn member(&self, purpose: Purpose, member: usize) -> RngStream {
        let id = ((purpose as u64) << 60)
            | ((self.epoch & 0xF) << 56)
            | ((self.iteration & 0xFF_FFFF) << 32)
            | (member as u64 & 0xFFFF_FFFF);
        RngStream::new(self.seed, id)
    }
}

/// Draw `J` members from the model prior; member `j` uses its own stream.
pub fn init_ensemble(model: &dyn ForwardModel, size: usize, seed: u64, epoch: u64) -> Result<Ensemble> {
    if size < 2 {
        return Err(Error::EnsembleTooSmall(size));
    }
    let key = StreamKey { seed, epoch, iteration: 0 };
    let mut members = Array2::zeros((size, model.param_len()));
    let rows: Vec<Vec<f64>> = (0..size)
        .into_par_iter()
        .map(|j| {
            let mut row = vec![0.0; model.param_len()];
            model.sample_prior(&mut key.member(Purpose::Init, j).rng(), &mut row);
            row
        })
        .collect();
    for (mut dst, src) in members.rows_mut().into_iter().zip(rows) {
        dst.assign(&ArrayView1::from(&src));
    }
    Ensemble::new(members)
}

/// Add `ε ~ N(0, Q)` to every member in place; the first `n_lambda` entries use `σ_λ`.
pub fn perturb(ensemble: &mut Ensemble, drift: DriftModel, n_lambda: usize, key: StreamKey) {
    if drift.sigma_lambda == 0.0 && drift.sigma_theta == 0.0 {
        return;
    }
    let n = ensemble.members.ncols();
    let steps: Vec<Vec<f64>> = (0..ensemble.size())
        .into_par_iter()
        .map(|j| {
            let mut eps = vec![0.0; n];
            fill_standard_normal(&mut key.member(Purpose::Drift, j).rng(), &mut eps);
            for (k, e) in eps.iter_mut().enumerate() {
                *e *= if k < n_lambda { drift.sigma_lambda } else { drift.sigma_theta };
            }
            eps
        })
        .collect();
    for (mut row, eps) in ensemble.members.rows_mut().into_iter().zip(steps) {
        row += &ArrayView1::from(&eps);
    }
}

/// Evaluate `G` on every member in parallel. Rows follow member order.
pub fn observe_ensemble(model: &dyn ForwardModel, ensemble: &Ensemble) -> Result<Array2<f64>> {
    let members = &ensemble.members;
    let outs: Vec<Vec<f64>> = (0..members.nrows())
        .into_par_iter()
        .map(|j| {
            let row = members.row(j);
            match row.as_slice() {
                Some(xi) => model.observe(xi),
                None => model.observe(&row.to_vec()),
            }
        })
        .collect::<Result<_>>()?;
    let mut y = Array2::zeros((outs.len(), model.obs_len()));
    for (mut dst, src) in y.rows_mut().into_iter().zip(outs) {
        if src.len() != dst.len() {
            return Err(Error::DimensionMismatch(format!("model returned {} outputs, expected {}", src.len(), dst.len())));
        }
        dst.assign(&ArrayView1::from(&src));
    }
    Ok(y)
}

/// Perturbed-observation Kalman update
/// `ξⱼ ← ξ̂ⱼ + C^{ξ̂ŷ}(C^{ŷŷ} + R)⁻¹(y − ŷⱼ + ηⱼ)`.
///
/// `innovation` selects the streams for `ηⱼ`; `None` suppresses the noise.
pub fn kalman_update(
    xi_hat: ArrayView2<f64>,
    y_hat: ArrayView2<f64>,
    y: &[f64],
    noise: &NoiseModel,
    innovation: Option<StreamKey>,
) -> Result<Array2<f64>> {
    let j = xi_hat.nrows();
    let ny = y.len();
    if j < 2 {
        return Err(Error::EnsembleTooSmall(j));
    }
    if y_hat.nrows() != j || y_hat.ncols() != ny || noise.len() != ny {
        return Err(Error::DimensionMismatch(format!(
            "{} members, predictions {}x{}, data {}, noise {}",
            j,
            y_hat.nrows(),
            y_hat.ncols(),
            ny,
            noise.len()
        )));
    }
    let scale = 1.0 / (j - 1) as f64;
    let yc = centered(y_hat);
    let mut s = yc.t().dot(&yc) * scale;
    for (k, r) in noise.variances.iter().enumerate() {
        s[[k, k]] += r;
    }
    // Symmetrize away round-off from the product before factoring.
    let s = (&s + &s.t()) * 0.5;
    let chol = Cholesky::factor(s.view())?;

    // Innovations, one column per member.
    let sd: Vec<f64> = noise.variances.iter().map(|v| v.sqrt()).collect();
    let cols: Vec<Vec<f64>> = (0..j)
        .into_par_iter()
        .map(|m| {
            let mut e = vec![0.0; ny];
            if let Some(key) = innovation {
                fill_standard_normal(&mut key.member(Purpose::Innovation, m).rng(), &mut e);
            }
            for k in 0..ny {
                e[k] = y[k] - y_hat[[m, k]] + sd[k] * e[k];
            }
            e
        })
        .collect();
    let mut innov = Array2::zeros((ny, j));
    for (m, e) in cols.iter().enumerate() {
        innov.column_mut(m).assign(&ArrayView1::from(e));
    }
    let x = chol.solve(innov.view())?;

    // Gain applied blockwise over columns of ξ.
    let n = xi_hat.ncols();
    let n_blocks = n.div_ceil(UPDATE_BLOCK);
    let deltas: Vec<Array2<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let cols = b * UPDATE_BLOCK..((b + 1) * UPDATE_BLOCK).min(n);
            let block = xi_hat.slice(s![.., cols]);
            let xc = centered(block);
            let gain = xc.t().dot(&yc) * scale;
            gain.dot(&x)
        })
        .collect();
    let mut out = xi_hat.to_owned();
    for (b, delta) in deltas.iter().enumerate() {
        let start = b * UPDATE_BLOCK;
        let mut dst = out.slice_mut(s![.., start..start + delta.nrows()]);
        dst += &delta.t();
    }
    Ok(out)
}

/// `‖R^{−1/2}(y − mean ŷ)‖₂`.
pub fn discrepancy(y_hat: ArrayView2<f64>, y: &[f64], noise: &NoiseModel) -> f64 {
    let mean = column_means(y_hat);
    mean.iter().zip(y).zip(&noise.variances).map(|((m, y), r)| (y - m).powi(2) / r).sum::<f64>().sqrt()
}

/// Windowed relative-change rule; also fires once `history` reaches `max_iter`.
pub fn should_stop(history: &[f64], cfg: &StoppingConfig) -> bool {
    if history.len() >= cfg.max_iter {
        return true;
    }
    if history.len() <= cfg.window {
        return false;
    }
    let di = *history.last().unwrap();
    let window = &history[history.len() - cfg.window - 1..];
    if di == 0.0 {
        return window.iter().all(|&d| d == 0.0);
    }
    window.iter().map(|d| (d - di).abs() / di).fold(0.0, f64::max) < cfg.tau
}

fn validate(model: &dyn ForwardModel, cfg: &EkiConfig, noise: &NoiseModel, y: &[f64]) -> Result<()> {
    if cfg.ensemble_size < 2 {
        return Err(Error::EnsembleTooSmall(cfg.ensemble_size));
    }
    if y.len() != model.obs_len() || noise.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} outputs, data {}, noise {}",
            model.obs_len(),
            y.len(),
            noise.len()
        )));
    }
    let d = cfg.drift;
    if !(d.sigma_lambda >= 0.0 && d.sigma_theta >= 0.0 && d.sigma_lambda.is_finite() && d.sigma_theta.is_finite()) {
        return Err(Error::InvalidConfig("drift stds must be finite and non-negative".into()));
    }
    let st = cfg.stopping;
    if st.window < 1 || !(st.tau > 0.0) || st.max_iter < 1 {
        return Err(Error::InvalidConfig("stopping needs window ≥ 1, tau > 0, max_iter ≥ 1".into()));
    }
    Ok(())
}

enum Step {
    Done(f64),
    NonFinite,
}

fn iterate(
    model: &dyn ForwardModel,
    cfg: &EkiConfig,
    noise: &NoiseModel,
    y: &[f64],
    ens: &mut Ensemble,
    key: StreamKey,
) -> Result<Step> {
    perturb(ens, cfg.drift, model.lambda_len(), key);
    if !ens.is_finite() {
        return Ok(Step::NonFinite);
    }
    let y_hat = match observe_ensemble(model, ens) {
        Ok(v) => v,
        Err(Error::NonFiniteOutput) => return Ok(Step::NonFinite),
        Err(e) => return Err(e),
    };
    let d = discrepancy(y_hat.view(), y, noise);
    if !d.is_finite() {
        return Ok(Step::NonFinite);
    }
    let innovation = cfg.perturbed_observations.then_some(key);
    let updated = match kalman_update(ens.members.view(), y_hat.view(), y, noise, innovation) {
        Ok(m) => m,
        Err(Error::NonFiniteOutput) => return Ok(Step::NonFinite),
        Err(e) => return Err(e),
    };
    ens.members = updated;
    ens.iteration += 1;
    if !ens.is_finite() {
        return Ok(Step::NonFinite);
    }
    Ok(Step::Done(d))
}

/// Iterate until the stopping rule fires. Non-finite states within the first
/// [`REINIT_WINDOW`] iterations restart from a fresh prior draw, at most
/// [`MAX_REINITS`] times; later they are errors.
pub fn run(model: &dyn ForwardModel, cfg: &EkiConfig, noise: &NoiseModel, y: &[f64]) -> Result<RunReport> {
    validate(model, cfg, noise, y)?;
    let start = Instant::now();
    let mut epoch = 0u64;
    let mut ens = init_ensemble(model, cfg.ensemble_size, cfg.seed, epoch)?;
    let mut history = Vec::new();
    let mut times = Vec::new();
    loop {
        let t0 = Instant::now();
        let key = StreamKey { seed: cfg.seed, epoch, iteration: history.len() as u64 + 1 };
        match iterate(model, cfg, noise, y, &mut ens, key)? {
            Step::Done(d) => {
                history.push(d);
                times.push(t0.elapsed().as_secs_f64());
                if should_stop(&history, &cfg.stopping) {
                    break;
                }
            }
            Step::NonFinite if history.len() < REINIT_WINDOW => {
                if epoch as usize >= MAX_REINITS {
                    return Err(Error::TooManyReinits(epoch as usize));
                }
                epoch += 1;
                ens = init_ensemble(model, cfg.ensemble_size, cfg.seed, epoch)?;
                history.clear();
                times.clear();
            }
            Step::NonFinite => return Err(Error::NonFiniteOutput),
        }
    }
    let iterations_used = history.len();
    Ok(RunReport {
        stopped_by_rule: iterations_used < cfg.stopping.max_iter,
        posterior: ens,
        discrepancy_history: history,
        iterations_used,
        reinit_count: epoch as usize,
        wall_time: start.elapsed().as_secs_f64(),
        iteration_times: times,
    })
}
