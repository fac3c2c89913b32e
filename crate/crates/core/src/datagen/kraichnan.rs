//! Kraichnan–Orszag three-wave system, integrated with classical RK4.

/// Right-hand side of `u₁' = a u₂u₃`, `u₂' = b u₁u₃`, `u₃' = −(a+b) u₁u₂`.
pub fn ko_rhs(a: f64, b: f64, u: [f64; 3]) -> [f64; 3] {
    [a * u[1] * u[2], b * u[0] * u[2], -(a + b) * u[0] * u[1]]
}

fn rk4_step(a: f64, b: f64, u: [f64; 3], h: f64) -> [f64; 3] {
    let add = |u: [f64; 3], k: [f64; 3], s: f64| [u[0] + s * k[0], u[1] + s * k[1], u[2] + s * k[2]];
    let k1 = ko_rhs(a, b, u);
    let k2 = ko_rhs(a, b, add(u, k1, h / 2.0));
    let k3 = ko_rhs(a, b, add(u, k2, h / 2.0));
    let k4 = ko_rhs(a, b, add(u, k3, h));
    let mut out = u;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrate from `t = 0` and sample the trajectory at each time in `t_grid`
/// (non-decreasing, non-negative). Steps of `dt`; the step that would overshoot
/// a sample time is shortened to land on it.
pub fn ko_solve(a: f64, b: f64, ic: [f64; 3], t_grid: &[f64], dt: f64) -> Vec<[f64; 3]> {
    assert!(dt > 0.0, "step must be positive");
    let mut t = 0.0;
    let mut u = ic;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        assert!(target >= t - 1e-12, "sample times must be non-decreasing and non-negative");
        while target - t > 1e-12 {
            let h = dt.min(target - t);
            u = rk4_step(a, b, u, h);
            t += h;
        }
        t = t.max(target);
        out.push(u);
    }
    out
}
