//! Synthetic data: reference solutions, point samplers and noise injection.

pub mod burgers;
pub mod kraichnan;
pub mod poisson;

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{fill_standard_normal, RngStream};

pub use burgers::{burgers_grid_solve, burgers_reference, ColeHopf};
pub use kraichnan::{ko_rhs, ko_solve};
pub use poisson::{poisson2d_solve, PoissonSolution};

/// How a reference field was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Rk4 { dt: f64 },
    ColeHopf { nodes: usize },
    FiniteDifference { grid_n: usize },
}

/// A deterministic map from a point to the reference solution (one value per output).
#[derive(Clone)]
pub struct ReferenceField {
    pub provenance: Provenance,
    evaluator: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl ReferenceField {
    pub fn new(provenance: Provenance, evaluator: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { provenance, evaluator: Arc::new(evaluator) }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.evaluator)(x)
    }
}

impl fmt::Debug for ReferenceField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReferenceField").field("provenance", &self.provenance).finish()
    }
}

/// `n` uniformly spaced points on `[a, b]`, endpoints included. `n = 1` yields `[a]`.
pub fn equispaced(n: usize, a: f64, b: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n).map(|i| if i + 1 == n { b } else { a + i as f64 * h }).collect()
        }
    }
}

/// Latin hypercube design: in every coordinate each of the `n` equal-width
/// strata holds exactly one point; the position inside a stratum is uniform.
pub fn latin_hypercube(n: usize, bounds: &[(f64, f64)], stream: RngStream) -> Vec<Vec<f64>> {
    let mut rng = stream.rng();
    let mut points = vec![vec![0.0; bounds.len()]; n];
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (p, &s) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            p[d] = lo + (s as f64 + u) / n as f64 * (hi - lo);
        }
    }
    points
}

/// `values + σ·z` with `z` standard normal.
pub fn add_noise(values: &[f64], sigma: f64, stream: RngStream) -> Vec<f64> {
    let mut z = vec![0.0; values.len()];
    fill_standard_normal(&mut stream.rng(), &mut z);
    values.iter().zip(&z).map(|(v, e)| v + sigma * e).collect()
}

/// `n` points spaced uniformly by arc length along a polyline.
///
/// For a closed loop the spacing is `L/n` starting at the first vertex, so no
/// corner is produced twice. For an open polyline both ends are included.
pub fn polyline_points(n: usize, vertices: &[[f64; 2]], closed: bool) -> Vec<[f64; 2]> {
    let mut segs: Vec<([f64; 2], [f64; 2])> = vertices.windows(2).map(|w| (w[0], w[1])).collect();
    if closed {
        segs.push((*vertices.last().unwrap(), vertices[0]));
    }
    let lens: Vec<f64> = segs.iter().map(|(a, b)| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()).collect();
    let total: f64 = lens.iter().sum();
    let step = if closed { total / n as f64 } else { total / (n.max(2) - 1) as f64 };
    (0..n)
        .map(|i| {
            let mut s = (i as f64 * step).min(total);
            let mut k = 0;
            while k + 1 < segs.len() && s > lens[k] {
                s -= lens[k];
                k += 1;
            }
            let (a, b) = segs[k];
            let r = if lens[k] > 0.0 { (s / lens[k]).min(1.0) } else { 0.0 };
            [a[0] + r * (b[0] - a[0]), a[1] + r * (b[1] - a[1])]
        })
        .collect()
}

/// Boundary of the axis-aligned rectangle `[x0, x1] × [y0, y1]`, counter-clockwise from `(x0, y0)`.
pub fn rectangle_boundary(n: usize, x: (f64, f64), y: (f64, f64)) -> Vec<[f64; 2]> {
    polyline_points(n, &[[x.0, y.0], [x.1, y.0], [x.1, y.1], [x.0, y.1]], true)
}

/// Row-major tensor grid: the first axis varies slowest.
pub fn tensor_grid(first: &[f64], second: &[f64]) -> Vec<[f64; 2]> {
    first.iter().flat_map(|&a| second.iter().map(move |&b| [a, b])).collect()
}
