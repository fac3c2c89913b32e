//! Dense linear algebra and Gaussian sampling used by the ensemble update.
//!
//! Matrices are `ndarray::Array2<f64>` in standard (row-major) layout. Products
//! go through `ndarray`'s GEMM; the symmetric factorization and triangular
//! solves are implemented here because they need the escalating-jitter retry.

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Row-major dense matrix.
pub type DenseMatrix = Array2<f64>;

/// Jitter multipliers (times `trace(A)/n`) tried after a plain factorization fails.
pub const JITTER_LEVELS: [f64; 3] = [1e-10, 1e-8, 1e-6];

const SYMMETRY_TOL: f64 = 1e-10;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Streams are ChaCha8 generators keyed by the seed with the stream id mapped
/// onto ChaCha's 64-bit stream selector, so distinct ids never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// `n` i.i.d. standard normal draws from `stream`.
pub fn standard_normal(stream: RngStream, n: usize) -> Vec<f64> {
    let mut rng = stream.rng();
    let mut out = vec![0.0; n];
    fill_standard_normal(&mut rng, &mut out);
    out
}

pub fn fill_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`, stored densely.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMatrix,
    /// Diagonal shift that was added before the factorization succeeded.
    pub jitter: f64,
}

impl Cholesky {
    /// Factor a symmetric positive (semi-)definite matrix, retrying with
    /// escalating diagonal jitter when the plain factorization breaks down.
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        check_symmetric(a)?;
        let n = a.nrows();
        if let Some(l) = try_cholesky(a, 0.0) {
            return Ok(Self { l, jitter: 0.0 });
        }
        let scale = (a.diag().sum() / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
        for level in JITTER_LEVELS {
            let jitter = level * scale;
            if let Some(l) = try_cholesky(a, jitter) {
                return Ok(Self { l, jitter });
            }
        }
        Err(Error::SingularAfterJitter)
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> ArrayView2<'_, f64> {
        self.l.view()
    }

    /// Solve `A X = B` for every column of `B`.
    pub fn solve(&self, b: ArrayView2<f64>) -> Result<DenseMatrix> {
        let n = self.dim();
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} rows, matrix has dimension {}",
                b.nrows(),
                n
            )));
        }
        let mut x = b.to_owned();
        let l = &self.l;
        // Forward substitution, row-oriented so the inner loop runs over contiguous RHS rows.
        for i in 0..n {
            let (done, mut rest) = x.view_mut().split_at(Axis(0), i);
            let mut row = rest.row_mut(0);
            for k in 0..i {
                let lik = l[[i, k]];
                if lik != 0.0 {
                    row.scaled_add(-lik, &done.row(k));
                }
            }
            row /= l[[i, i]];
        }
        // Back substitution with Lᵀ.
        for i in (0..n).rev() {
            let (mut head, tail) = x.view_mut().split_at(Axis(0), i + 1);
            let mut row = head.row_mut(i);
            for k in 0..tail.nrows() {
                let lki = l[[i + 1 + k, i]];
                if lki != 0.0 {
                    row.scaled_add(-lki, &tail.row(k));
                }
            }
            row /= l[[i, i]];
        }
        Ok(x)
    }
}

fn check_symmetric(a: ArrayView2<f64>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !scale.is_finite() {
        return Err(Error::NonFiniteOutput);
    }
    if scale == 0.0 {
        return Ok(());
    }
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs() / scale);
        }
    }
    if worst > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(worst));
    }
    Ok(())
}

fn try_cholesky(a: ArrayView2<f64>, jitter: f64) -> Option<DenseMatrix> {
    let n = a.nrows();
    let mut l = DenseMatrix::zeros((n, n));
    for j in 0..n {
        let row_j = l.row(j);
        let mut d = a[[j, j]] + jitter;
        for k in 0..j {
            d -= row_j[k] * row_j[k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            // Symmetric input: read the lower triangle only.
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Some(l)
}

/// Solve `A X = B` for symmetric positive (semi-)definite `A`.
pub fn spd_solve(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<DenseMatrix> {
    Cholesky::factor(a)?.solve(b)
}

/// Sample cross-covariance `Σⱼ (Xⱼ − X̄)(Yⱼ − Ȳ)ᵀ / (J − 1)` of two ensembles
/// stored one member per row.
pub fn cross_covariance(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<DenseMatrix> {
    let j = x.nrows();
    if y.nrows() != j {
        return Err(Error::DimensionMismatch(format!(
            "ensembles have {} and {} members",
            j,
            y.nrows()
        )));
    }
    if j < 2 {
        return Err(Error::EnsembleTooSmall(j));
    }
    let xc = centered(x);
    let yc = centered(y);
    let mut c = xc.t().dot(&yc);
    c /= (j - 1) as f64;
    Ok(c)
}

/// Column means subtracted from every row.
pub fn centered(x: ArrayView2<f64>) -> DenseMatrix {
    let mean = column_means(x);
    let mut c = x.to_owned();
    for mut row in c.rows_mut() {
        row -= &mean;
    }
    c
}

pub fn column_means(x: ArrayView2<f64>) -> ndarray::Array1<f64> {
    let j = x.nrows().max(1) as f64;
    let mut mean = ndarray::Array1::zeros(x.ncols());
    for row in x.rows() {
        mean += &row;
    }
    mean / j
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn frob(m: &DenseMatrix) -> f64 {
        m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn random_matrix(rows: usize, cols: usize, stream: RngStream) -> DenseMatrix {
        DenseMatrix::from_shape_vec((rows, cols), standard_normal(stream, rows * cols)).unwrap()
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let a = DenseMatrix::eye(3);
        let b = array![[1.0, -2.0], [3.5, 0.0], [7.0, 1e-3]];
        let x = spd_solve(a.view(), b.view()).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn diagonal_solve() {
        let a = array![[4.0, 0.0], [0.0, 9.0]];
        let b = array![[8.0], [27.0]];
        let x = spd_solve(a.view(), b.view()).unwrap();
        assert!((x[[0, 0]] - 2.0).abs() < 1e-15);
        assert!((x[[1, 0]] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn random_spd_residual() {
        let m = random_matrix(20, 20, RngStream::new(7, 1));
        let mut a = m.t().dot(&m);
        a += &DenseMatrix::eye(20);
        let b = random_matrix(20, 4, RngStream::new(7, 2));
        let x = spd_solve(a.view(), b.view()).unwrap();
        let resid = a.dot(&x) - &b;
        assert!(frob(&resid) < 1e-8 * (1.0 + frob(&b)), "residual {}", frob(&resid));
    }

    #[test]
    fn rejects_asymmetric() {
        let a = array![[2.0, 1.0], [0.0, 2.0]];
        let b = array![[1.0], [1.0]];
        assert!(matches!(spd_solve(a.view(), b.view()), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn jitter_rescues_rank_deficient() {
        // Rank-one PSD matrix: plain Cholesky hits a zero pivot.
        let v = array![[1.0], [2.0], [3.0]];
        let a = v.dot(&v.t());
        let chol = Cholesky::factor(a.view()).unwrap();
        assert!(chol.jitter > 0.0);
    }

    #[test]
    fn negative_definite_fails_after_jitter() {
        let a = array![[-1.0, 0.0], [0.0, -2.0]];
        let b = array![[1.0], [1.0]];
        assert!(matches!(
            spd_solve(a.view(), b.view()),
            Err(Error::SingularAfterJitter)
        ));
    }

    #[test]
    fn empty_normal_draw() {
        assert!(standard_normal(RngStream::new(1, 1), 0).is_empty());
    }

    #[test]
    fn normal_draws_are_reproducible() {
        let s = RngStream::new(42, 9);
        assert_eq!(standard_normal(s, 5), standard_normal(s, 5));
        assert_ne!(standard_normal(s, 5), standard_normal(RngStream::new(42, 10), 5));
    }

    #[test]
    fn normal_moments() {
        let n = 1_000_000;
        let z = standard_normal(RngStream::new(2024, 3), n);
        let mean = z.iter().sum::<f64>() / n as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn covariance_of_constant_rows_is_zero() {
        let x = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        let c = cross_covariance(x.view(), x.view()).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covariance_hand_value() {
        let x = array![[0.0], [2.0]];
        let c = cross_covariance(x.view(), x.view()).unwrap();
        assert_eq!(c[[0, 0]], 2.0);
    }

    #[test]
    fn covariance_needs_two_members() {
        let x = array![[0.0, 1.0]];
        assert!(matches!(
            cross_covariance(x.view(), x.view()),
            Err(Error::EnsembleTooSmall(1))
        ));
    }

    #[test]
    fn covariance_matches_two_pass_oracle() {
        let x = random_matrix(1000, 3, RngStream::new(5, 1));
        let y = random_matrix(1000, 3, RngStream::new(5, 2)) + 4.0;
        let c = cross_covariance(x.view(), y.view()).unwrap();
        // Textbook two-pass: means first, then summed products of deviations.
        for p in 0..3 {
            for q in 0..3 {
                let mx: f64 = (0..1000).map(|j| x[[j, p]]).sum::<f64>() / 1000.0;
                let my: f64 = (0..1000).map(|j| y[[j, q]]).sum::<f64>() / 1000.0;
                let s: f64 = (0..1000).map(|j| (x[[j, p]] - mx) * (y[[j, q]] - my)).sum();
                assert!((c[[p, q]] - s / 999.0).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn solve_recovers_known_solution(seed in 0u64..10_000, n in 1usize..24) {
            let m = random_matrix(n, n, RngStream::new(seed, 0));
            let mut a = m.t().dot(&m);
            a += &(DenseMatrix::eye(n) * n as f64);
            let x0 = random_matrix(n, 3, RngStream::new(seed, 1));
            let b = a.dot(&x0);
            let x = spd_solve(a.view(), b.view()).unwrap();
            let err = frob(&(&x - &x0)) / frob(&x0).max(1e-300);
            prop_assert!(err < 1e-8);
        }

        #[test]
        fn auto_covariance_symmetric_psd_diagonal(seed in 0u64..10_000, j in 2usize..40, p in 1usize..6) {
            let x = random_matrix(j, p, RngStream::new(seed, 2));
            let c = cross_covariance(x.view(), x.view()).unwrap();
            for a in 0..p {
                prop_assert!(c[[a, a]] >= 0.0);
                for b in 0..p {
                    prop_assert!((c[[a, b]] - c[[b, a]]).abs() <= 1e-14 * (1.0 + c[[a, b]].abs()));
                }
            }
        }
    }
}
