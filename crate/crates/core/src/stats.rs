//! Posterior summaries, error metrics and the closed-form reference posterior
//! of the linear Poisson benchmark.

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eki::Ensemble;
use crate::error::{Error, Result};
use crate::problems::InverseProblem;
use crate::surrogate::forward_batch;

/// Members evaluated per task when summarizing predictions.
const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub names: Vec<String>,
    /// Physical (back-transformed) coordinates.
    pub lambda_mean: Vec<f64>,
    pub lambda_std: Vec<f64>,
    /// Raw inference coordinates.
    pub lambda_raw_mean: Vec<f64>,
    pub lambda_raw_std: Vec<f64>,
    /// `n_test × output_dim`.
    #[serde(skip)]
    pub predictive_mean: Array2<f64>,
    #[serde(skip)]
    pub predictive_std: Array2<f64>,
}

/// Running mean and sum of squared deviations, merged in a fixed order.
#[derive(Debug, Clone)]
struct Moments {
    n: f64,
    mean: Array2<f64>,
    m2: Array2<f64>,
}

impl Moments {
    /// Two-pass moments of deviations from the first sample, so identical
    /// samples give exactly zero spread.
    fn from_samples(samples: &[Array2<f64>]) -> Self {
        let n = samples.len() as f64;
        let pivot = &samples[0];
        let mut shift = Array2::zeros(pivot.raw_dim());
        for s in samples {
            shift += &(s - pivot);
        }
        shift /= n;
        let mut m2 = Array2::zeros(pivot.raw_dim());
        for s in samples {
            let d = s - pivot - &shift;
            m2 += &(&d * &d);
        }
        Self { n, mean: pivot + &shift, m2 }
    }

    fn merge(self, other: Self) -> Self {
        let n = self.n + other.n;
        let delta = &other.mean - &self.mean;
        let mean = &self.mean + &(&delta * (other.n / n));
        let m2 = self.m2 + other.m2 + &delta * &delta * (self.n * other.n / n);
        Self { n, mean, m2 }
    }

    fn std(&self) -> Array2<f64> {
        (&self.m2 / (self.n - 1.0)).mapv(f64::sqrt)
    }
}

/// Column mean and `(J − 1)`-normalized std of a sample matrix (rows are samples).
pub fn column_stats(x: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let pivot = x.row(0);
    let cols = x.axis_iter(Axis(1)).zip(pivot.iter());
    cols.map(|(col, p)| {
        let shift = col.iter().map(|v| v - p).sum::<f64>() / n;
        let var = col.iter().map(|v| (v - p - shift).powi(2)).sum::<f64>() / (n - 1.0);
        (p + shift, var.sqrt())
    })
    .unzip()
}

/// Summarize `ensemble` for `problem`: λ statistics and the pointwise predictive
/// mean and std of the surrogate on `test_points`.
pub fn summarize(ensemble: &Ensemble, problem: &InverseProblem, test_points: ArrayView2<f64>) -> Result<PosteriorSummary> {
    let j = ensemble.size();
    if j < 2 {
        return Err(Error::EnsembleTooSmall(j));
    }
    let layout = problem.layout();
    let nl = layout.n_lambda;
    let raw = ensemble.members.slice(s![.., ..nl]);
    let mut phys = raw.to_owned();
    for mut row in phys.rows_mut() {
        let p = problem.params.transform(row.as_slice().unwrap());
        row.assign(&ndarray::ArrayView1::from(&p));
    }
    let (lambda_raw_mean, lambda_raw_std) = column_stats(raw);
    let (lambda_mean, lambda_std) = column_stats(phys.view());

    let chunks: Vec<Moments> = (0..j.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let preds = (c * CHUNK..((c + 1) * CHUNK).min(j))
                .map(|m| {
                    let (_, theta) = layout.split(ensemble.members.row(m).to_slice().unwrap());
                    forward_batch(&problem.arch, theta, test_points)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Moments::from_samples(&preds))
        })
        .collect::<Result<_>>()?;
    let total = chunks.into_iter().reduce(Moments::merge).expect("at least one chunk");
    Ok(PosteriorSummary {
        names: problem.params.names.clone(),
        lambda_mean,
        lambda_std,
        lambda_raw_mean,
        lambda_raw_std,
        predictive_std: total.std(),
        predictive_mean: total.mean,
    })
}

/// `‖pred − ref‖₂ / ‖ref‖₂`.
pub fn relative_error_u(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions, {} reference values", pred.len(), reference.len())));
    }
    let den: f64 = reference.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r).powi(2)).sum();
    Ok((num / den).sqrt())
}

/// `|λ − λ̄| / |λ|`.
pub fn relative_error_lambda(mean: f64, truth: f64) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::ZeroTrueValue);
    }
    Ok((truth - mean).abs() / truth.abs())
}

/// Relative error of each output column of `pred` against the problem's test reference.
pub fn output_errors(pred: ArrayView2<f64>, problem: &InverseProblem) -> Result<Vec<f64>> {
    let reference = &problem.test_grid.reference;
    (0..reference.ncols())
        .map(|o| relative_error_u(&pred.column(o).to_vec(), &reference.column(o).to_vec()))
        .collect()
}

/// Gaussian posterior of `k` for data `u = k cos x + noise` with prior `N(k₀, σ_k²)`.
/// Returns `(mean, std)`.
pub fn linear_reference_posterior(data: &[(f64, f64)], sigma_eta: f64, k0: f64, sigma_k: f64) -> (f64, f64) {
    let s2 = sigma_eta * sigma_eta;
    let mut precision = 1.0 / (sigma_k * sigma_k);
    let mut weighted = k0 / (sigma_k * sigma_k);
    for &(x, u) in data {
        let c = x.cos();
        precision += c * c / s2;
        weighted += u * c / s2;
    }
    (weighted / precision, precision.powf(-0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_problem;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn column_stats_hand_cases() {
        let (m, s) = column_stats(array![[0.0], [2.0]].view());
        assert_eq!(m, vec![1.0]);
        assert!((s[0] - 2f64.sqrt()).abs() < 1e-15);
        let (_, s) = column_stats(array![[3.0, 1.0], [3.0, 1.0], [3.0, 1.0]].view());
        assert_eq!(s, vec![0.0, 0.0]);
    }

    fn random_ensemble(p: &InverseProblem, j: usize, seed: u64) -> Ensemble {
        let n = p.layout().len();
        let z = crate::linalg::standard_normal(crate::linalg::RngStream::new(seed, 0), j * n);
        Ensemble::new(Array2::from_shape_vec((j, n), z).unwrap()).unwrap()
    }

    #[test]
    fn identical_members_have_zero_spread() {
        let p = make_problem("poisson1d_linear", 0.01, 0).unwrap();
        let e = random_ensemble(&p, 2, 3);
        let row = e.members.row(0).to_owned();
        let mut m = Array2::zeros((40, row.len()));
        for mut r in m.rows_mut() {
            r.assign(&row);
        }
        let s = summarize(&Ensemble::new(m).unwrap(), &p, p.test_grid.points.view()).unwrap();
        assert!(s.predictive_std.iter().all(|&v| v == 0.0));
        assert_eq!(s.lambda_std, vec![0.0]);
    }

    #[test]
    fn chunked_moments_match_two_pass() {
        let p = make_problem("kraichnan_orszag", 0.01, 0).unwrap();
        let e = random_ensemble(&p, 77, 5);
        let pts = p.test_grid.points.slice(s![..40, ..]);
        let s = summarize(&e, &p, pts).unwrap();
        let preds: Vec<Array2<f64>> = (0..77)
            .map(|m| forward_batch(&p.arch, &e.members.row(m).to_vec()[2..], pts).unwrap())
            .collect();
        for i in 0..40 {
            for o in 0..3 {
                let col: Vec<f64> = preds.iter().map(|q| q[[i, o]]).collect();
                let mean = col.iter().sum::<f64>() / 77.0;
                let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 76.0).sqrt();
                assert!((s.predictive_mean[[i, o]] - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
                assert!((s.predictive_std[[i, o]] - std).abs() <= 1e-12 * (1.0 + std));
            }
        }
    }

    #[test]
    fn lambda_reported_in_physical_coordinates() {
        let p = make_problem("burgers", 0.01, 0).unwrap();
        let mut e = random_ensemble(&p, 2, 1);
        e.members[[0, 0]] = 0.0;
        e.members[[1, 0]] = 2f64.ln();
        let s = summarize(&e, &p, p.test_grid.points.slice(s![..3, ..])).unwrap();
        assert!((s.lambda_mean[0] - 1.5).abs() < 1e-15);
        assert!((s.lambda_raw_mean[0] - 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn error_metrics() {
        assert_eq!(relative_error_u(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((relative_error_u(&[1.0, 1.0], &[1.0, 2.0]).unwrap() - 0.2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(relative_error_u(&[1.0], &[0.0]), Err(Error::ZeroReference)));
        assert_eq!(relative_error_lambda(1.0, 1.0).unwrap(), 0.0);
        assert!((relative_error_lambda(1.002, 1.0).unwrap() - 0.002).abs() < 1e-12);
        assert!((relative_error_lambda(0.697, 0.7).unwrap() - 0.0042857).abs() < 1e-6);
        assert!(matches!(relative_error_lambda(1.0, 0.0), Err(Error::ZeroTrueValue)));
    }

    /// Mean and std of a 1D unnormalized log-density by trapezoid quadrature.
    fn quadrature(logp: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (f64, f64) {
        let h = (hi - lo) / n as f64;
        let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
        let top = xs.iter().map(|&x| logp(x)).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| (logp(x) - top).exp() * if i == 0 || i == n { 0.5 } else { 1.0 })
            .collect();
        let z: f64 = w.iter().sum();
        let mean = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / z;
        let var = xs.iter().zip(&w).map(|(x, w)| (x - mean).powi(2) * w).sum::<f64>() / z;
        (mean, var.sqrt())
    }

    #[test]
    fn reference_posterior_cases() {
        assert_eq!(linear_reference_posterior(&[], 0.1, 0.3, 2.0), (0.3, 2.0));
        let (m, s) = linear_reference_posterior(&[(0.0, 1.0)], 0.1, 0.0, 1.0);
        assert!((m - 100.0 / 101.0).abs() < 1e-14);
        assert!((s - 101f64.powf(-0.5)).abs() < 1e-14);
        let (qm, qs) = quadrature(|k| -(1.0 - k).powi(2) / (2.0 * 0.01) - k * k / 2.0, m - 6.0 * s, m + 6.0 * s, 20_000);
        assert!((qm - m).abs() < 1e-6 && (qs - s).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn reference_posterior_matches_quadrature(
            xs in prop::collection::vec(0.0f64..8.0, 1..10),
            us in prop::collection::vec(-1.5f64..1.5, 10),
            sigma in 0.05f64..0.5,
            k0 in -1.0f64..1.0,
            sk in 0.5f64..2.0,
        ) {
            let data: Vec<(f64, f64)> = xs.iter().zip(&us).map(|(&x, &u)| (x, u)).collect();
            let (m, s) = linear_reference_posterior(&data, sigma, k0, sk);
            let logp = |k: f64| {
                -data.iter().map(|(x, u)| (u - k * x.cos()).powi(2)).sum::<f64>() / (2.0 * sigma * sigma)
                    - (k - k0).powi(2) / (2.0 * sk * sk)
            };
            let (qm, qs) = quadrature(logp, m - 6.0 * s, m + 6.0 * s, 20_000);
            prop_assert!((qm - m).abs() <= 1e-6 * (1.0 + m.abs()));
            prop_assert!((qs - s).abs() <= 1e-6 * (1.0 + s));
        }

        #[test]
        fn relative_error_is_scale_invariant(
            v in prop::collection::vec((-3.0f64..3.0, 0.1f64..3.0), 1..20),
            c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        ) {
            let pred: Vec<f64> = v.iter().map(|p| p.0).collect();
            let reference: Vec<f64> = v.iter().map(|p| p.1).collect();
            let e = relative_error_u(&pred, &reference).unwrap();
            let ps: Vec<f64> = pred.iter().map(|x| c * x).collect();
            let rs: Vec<f64> = reference.iter().map(|x| c * x).collect();
            prop_assert!((relative_error_u(&ps, &rs).unwrap() - e).abs() <= 1e-12 * (1.0 + e));
        }

        #[test]
        fn std_is_permutation_invariant(vals in prop::collection::vec(-5.0f64..5.0, 2..30), rot in 0usize..30) {
            let n = vals.len();
            let a = Array2::from_shape_vec((n, 1), vals.clone()).unwrap();
            let mut rotated = vals.clone();
            rotated.rotate_left(rot % n);
            let b = Array2::from_shape_vec((n, 1), rotated).unwrap();
            let (_, sa) = column_stats(a.view());
            let (_, sb) = column_stats(b.view());
            prop_assert!((sa[0] - sb[0]).abs() <= 1e-12 * (1.0 + sa[0]));
        }
    }
}
