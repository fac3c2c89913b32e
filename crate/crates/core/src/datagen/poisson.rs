//! `−λ Δu = f` on the unit square with zero Dirichlet data, by the 5-point
//! finite-difference Laplacian and conjugate gradients.

use crate::error::{Error, Result};

/// Nodal solution on a `(grid_n + 1)²` grid, bilinearly interpolated off-grid.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub grid_n: usize,
    /// Node values, `x` index slowest: `values[i * (grid_n + 1) + j] = u(i h, j h)`.
    pub values: Vec<f64>,
}

impl PoissonSolution {
    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.grid_n + 1) + j]
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let n = self.grid_n as f64;
        let sx = (x * n).clamp(0.0, n);
        let sy = (y * n).clamp(0.0, n);
        let i = (sx.floor() as usize).min(self.grid_n - 1);
        let j = (sy.floor() as usize).min(self.grid_n - 1);
        let (rx, ry) = (sx - i as f64, sy - j as f64);
        (1.0 - rx) * (1.0 - ry) * self.node(i, j)
            + rx * (1.0 - ry) * self.node(i + 1, j)
            + (1.0 - rx) * ry * self.node(i, j + 1)
            + rx * ry * self.node(i + 1, j + 1)
    }
}

/// Solve with CG to relative residual `1e-10`.
pub fn poisson2d_solve(lambda: f64, forcing: impl Fn(f64, f64) -> f64, grid_n: usize) -> Result<PoissonSolution> {
    if grid_n < 2 {
        return Err(Error::InvalidConfig(format!("grid_n must be at least 2, got {grid_n}")));
    }
    let h = 1.0 / grid_n as f64;
    let m = grid_n - 1;
    let idx = |i: usize, j: usize| i * m + j;
    // Scaled system: (4u − Σ neighbours) = h² f / λ.
    let mut b = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            b[idx(i, j)] = h * h * forcing((i + 1) as f64 * h, (j + 1) as f64 * h) / lambda;
        }
    }
    let apply = |u: &[f64], out: &mut [f64]| {
        for i in 0..m {
            for j in 0..m {
                let mut s = 4.0 * u[idx(i, j)];
                if i > 0 {
                    s -= u[idx(i - 1, j)];
                }
                if i + 1 < m {
                    s -= u[idx(i + 1, j)];
                }
                if j > 0 {
                    s -= u[idx(i, j - 1)];
                }
                if j + 1 < m {
                    s -= u[idx(i, j + 1)];
                }
                out[idx(i, j)] = s;
            }
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut u = vec![0.0; m * m];
    let b_norm = dot(&b, &b).sqrt();
    if b_norm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; m * m];
        let mut rr = dot(&r, &r);
        let max_iter = 10 * m * m;
        let mut converged = false;
        for _ in 0..max_iter {
            apply(&p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            for k in 0..u.len() {
                u[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let rr_new = dot(&r, &r);
            if !rr_new.is_finite() {
                break;
            }
            if rr_new.sqrt() <= 1e-10 * b_norm {
                converged = true;
                break;
            }
            let beta = rr_new / rr;
            for k in 0..p.len() {
                p[k] = r[k] + beta * p[k];
            }
            rr = rr_new;
        }
        if !converged {
            return Err(Error::SolverDiverged(format!("conjugate gradients on a {grid_n} grid")));
        }
    }

    let mut values = vec![0.0; (grid_n + 1) * (grid_n + 1)];
    for i in 0..m {
        for j in 0..m {
            values[(i + 1) * (grid_n + 1) + j + 1] = u[idx(i, j)];
        }
    }
    Ok(PoissonSolution { grid_n, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn f1(x: f64, y: f64) -> f64 {
        0.1 * (PI * x).sin() * (PI * y).sin()
    }

    fn exact(x: f64, y: f64) -> f64 {
        f1(x, y) / (0.02 * 2.0 * PI * PI)
    }

    fn max_nodal_error(sol: &PoissonSolution, truth: impl Fn(f64, f64) -> f64) -> f64 {
        let n = sol.grid_n;
        let mut worst: f64 = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
                worst = worst.max((sol.node(i, j) - truth(x, y)).abs());
            }
        }
        worst
    }

    #[test]
    fn manufactured_solution() {
        let sol = poisson2d_solve(0.02, f1, 128).unwrap();
        assert!(max_nodal_error(&sol, exact) <= 1e-3);
        // Off-grid interpolation stays close too.
        assert!((sol.eval(0.31, 0.77) - exact(0.31, 0.77)).abs() < 1e-3);
    }

    #[test]
    fn zero_forcing() {
        let sol = poisson2d_solve(0.02, |_, _| 0.0, 40).unwrap();
        assert!(sol.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn second_order_refinement() {
        let bump = |x: f64, y: f64| 2.0 * (-((x - 0.3).powi(2) + (y - 0.6).powi(2)) / (2.0 * 0.15 * 0.15)).exp();
        let fine = poisson2d_solve(0.02, bump, 256).unwrap();
        let err = |n: usize| {
            let s = poisson2d_solve(0.02, bump, n).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..=n {
                for j in 0..=n {
                    worst = worst.max((s.node(i, j) - fine.node(i * 256 / n, j * 256 / n)).abs());
                }
            }
            worst
        };
        let ratio = err(64) / err(128);
        assert!((3.0..6.0).contains(&ratio), "ratio {ratio}");
    }
}
