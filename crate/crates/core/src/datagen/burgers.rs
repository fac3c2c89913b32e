//! Viscous Burgers equation `u_t + u u_x = ν u_xx` on `[−1, 1]` with
//! `u(x, 0) = −sin(πx)` and zero Dirichlet ends.
//!
//! The exact solution comes from the Cole–Hopf transform evaluated by
//! Gauss–Hermite quadrature. A Crank–Nicolson / Adams–Bashforth grid solver is
//! provided as an independent cross-check.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::autodiff::Jet2;
use crate::error::{Error, Result};

/// Default quadrature size.
pub const DEFAULT_NODES: usize = 160;

/// Gauss–Hermite nodes and weights for `∫ e^{−z²} g(z) dz`, ascending nodes.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let pim4 = PI.powf(-0.25);
    let m = n.div_ceil(2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[n - 1],
            3 => 1.91 * z - 0.91 * nodes[n - 2],
            _ => 2.0 * z - nodes[n - i + 1],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // Orthonormal Hermite recurrence.
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j - 1) as f64 / j as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        weights[n - 1 - i] = 2.0 / (pp * pp);
        weights[i] = weights[n - 1 - i];
    }
    (nodes, weights)
}

/// Cole–Hopf evaluator for a fixed viscosity.
#[derive(Debug, Clone)]
pub struct ColeHopf {
    pub nu: f64,
    nodes: Vec<f64>,
    log_weights: Vec<f64>,
}

impl ColeHopf {
    pub fn new(nu: f64, n_nodes: usize) -> Self {
        assert!(nu > 0.0, "viscosity must be positive");
        let (nodes, weights) = gauss_hermite(n_nodes);
        Self { nu, nodes, log_weights: weights.iter().map(|w| w.ln()).collect() }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// `u(x, t)`. Exactly `−sin(πx)` at `t = 0`.
    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(-(PI * x).sin());
        }
        let c = (4.0 * self.nu * t).sqrt();
        let k = 1.0 / (2.0 * PI * self.nu);
        let expo: Vec<f64> =
            self.nodes.iter().zip(&self.log_weights).map(|(z, lw)| lw - k * (PI * (x - c * z)).cos()).collect();
        let top = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (z, e) in self.nodes.iter().zip(&expo) {
            let w = (e - top).exp();
            num += w * (PI * (x - c * z)).sin();
            den += w;
        }
        if !(den.is_finite() && den > 0.0) {
            return Err(Error::QuadratureUnstable { x, t });
        }
        Ok(-num / den)
    }

    /// Jet of `u` along `x` (`direction = 0`) or `t` (`direction = 1`).
    pub fn eval_jet(&self, x: f64, t: f64, direction: usize) -> Result<Jet2> {
        assert!(direction < 2, "direction must be 0 (x) or 1 (t)");
        let nu = self.nu;
        if t <= 0.0 {
            let s = (PI * x).sin();
            let cpi = (PI * x).cos();
            let (u, ux, uxx, uxxx, uxxxx) =
                (-s, -PI * cpi, PI * PI * s, PI.powi(3) * cpi, -PI.powi(4) * s);
            if direction == 0 {
                return Ok(Jet2::new(u, ux, uxx));
            }
            // Time derivatives from the equation itself.
            let ut = nu * uxx - u * ux;
            let utx = nu * uxxx - ux * ux - u * uxx;
            let utxx = nu * uxxxx - 3.0 * ux * uxx - u * uxxx;
            let utt = nu * utxx - ut * ux - u * utx;
            return Ok(Jet2::new(u, ut, utt));
        }
        let (xj, cj) = if direction == 0 {
            (Jet2::variable(x), Jet2::constant((4.0 * nu * t).sqrt()))
        } else {
            let c = (4.0 * nu * t).sqrt();
            (Jet2::constant(x), Jet2::variable(t).chain(c, 2.0 * nu / c, -4.0 * nu * nu / c.powi(3)))
        };
        let k = 1.0 / (2.0 * PI * self.nu);
        let args: Vec<Jet2> = self.nodes.iter().map(|&z| (xj - cj * z) * PI).collect();
        let top = self
            .log_weights
            .iter()
            .zip(&args)
            .map(|(lw, a)| lw - k * a.v.cos())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut num = Jet2::constant(0.0);
        let mut den = Jet2::constant(0.0);
        for (lw, a) in self.log_weights.iter().zip(&args) {
            let w = (a.cos() * (-k) + (lw - top)).exp();
            num = num + w * a.sin();
            den = den + w;
        }
        if !(den.v.is_finite() && den.v > 0.0) {
            return Err(Error::QuadratureUnstable { x, t });
        }
        Ok(-num.try_div(den)?)
    }
}

fn shared(nu: f64) -> Option<&'static ColeHopf> {
    static CACHE: OnceLock<ColeHopf> = OnceLock::new();
    let ch = CACHE.get_or_init(|| ColeHopf::new(0.1 / PI, DEFAULT_NODES));
    (ch.nu == nu).then_some(ch)
}

/// `u(x, t)` for viscosity `nu` with the default node count.
pub fn burgers_reference(nu: f64, x: f64, t: f64) -> Result<f64> {
    match shared(nu) {
        Some(ch) => ch.eval(x, t),
        None => ColeHopf::new(nu, DEFAULT_NODES).eval(x, t),
    }
}

/// Snapshots of a grid solution.
#[derive(Debug, Clone)]
pub struct BurgersGrid {
    /// Node coordinates including both Dirichlet ends.
    pub x: Vec<f64>,
    /// Snapshot times; the first is 0.
    pub t: Vec<f64>,
    /// One row per snapshot, one entry per node.
    pub u: Vec<Vec<f64>>,
}

impl BurgersGrid {
    /// Linear interpolation in `x` within snapshot `frame`.
    pub fn eval(&self, x: f64, frame: usize) -> f64 {
        let n = self.x.len() - 1;
        let h = (self.x[n] - self.x[0]) / n as f64;
        let s = ((x - self.x[0]) / h).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n - 1);
        let r = s - i as f64;
        let row = &self.u[frame];
        (1.0 - r) * row[i] + r * row[i + 1]
    }
}

/// Crank–Nicolson diffusion with second-order Adams–Bashforth central flux.
///
/// `intervals` cells on `[−1, 1]`, `steps` uniform time steps to `t_end`,
/// snapshots every `steps / frames` steps (`steps` must be a multiple of `frames`).
pub fn burgers_grid_solve(nu: f64, intervals: usize, t_end: f64, steps: usize, frames: usize) -> BurgersGrid {
    assert!(intervals >= 4 && frames >= 1 && steps % frames == 0);
    let h = 2.0 / intervals as f64;
    let dt = t_end / steps as f64;
    let x: Vec<f64> = (0..=intervals).map(|i| -1.0 + i as f64 * h).collect();
    let m = intervals - 1;
    let mut u: Vec<f64> = x.iter().map(|&xi| -(PI * xi).sin()).collect();
    u[0] = 0.0;
    u[intervals] = 0.0;

    let flux = |u: &[f64]| -> Vec<f64> {
        (1..=m).map(|i| (u[i + 1] * u[i + 1] - u[i - 1] * u[i - 1]) / (4.0 * h)).collect()
    };
    let r = nu * dt / (2.0 * h * h);
    // Constant tridiagonal (I − r L); eliminate once.
    let (a, b) = (-r, 1.0 + 2.0 * r);
    let mut cp = vec![0.0; m];
    let mut denom = vec![0.0; m];
    denom[0] = b;
    cp[0] = a / b;
    for i in 1..m {
        denom[i] = b - a * cp[i - 1];
        cp[i] = a / denom[i];
    }

    let mut snaps = vec![u.clone()];
    let mut times = vec![0.0];
    let mut prev: Option<Vec<f64>> = None;
    let per_frame = steps / frames;
    let mut rhs = vec![0.0; m];
    for step in 1..=steps {
        let n_now = flux(&u);
        for i in 0..m {
            let adv = match &prev {
                Some(p) => 1.5 * n_now[i] - 0.5 * p[i],
                None => n_now[i],
            };
            rhs[i] = u[i + 1] + r * (u[i] - 2.0 * u[i + 1] + u[i + 2]) - dt * adv;
        }
        // Thomas sweep.
        rhs[0] /= denom[0];
        for i in 1..m {
            rhs[i] = (rhs[i] - a * rhs[i - 1]) / denom[i];
        }
        for i in (0..m - 1).rev() {
            rhs[i] -= cp[i] * rhs[i + 1];
        }
        u[1..=m].copy_from_slice(&rhs);
        prev = Some(n_now);
        if step % per_frame == 0 {
            snaps.push(u.clone());
            times.push(step as f64 * dt);
        }
    }
    BurgersGrid { x, t: times, u: snaps }
}
