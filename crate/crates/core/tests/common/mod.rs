//! Shared helpers for the acceptance suite.
//!
//! The projected-gradient minimizer here is deliberately independent of the
//! library's closed-form direction solver: it knows nothing about Lagrange
//! multipliers and works purely by descending the objective over the simplex.

use std::time::{Duration, Instant};

/// Euclidean projection of `v` onto the probability simplex.
///
/// Sort-based algorithm: find the largest prefix whose shifted entries stay
/// positive, then clip everything below the resulting threshold to zero.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j as f64 + 1.0);
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    let mut out = vec![0.0; n];
    for i in 0..n {
        out[i] = (v[i] - tau).max(0.0);
    }
    out
}

/// Minimize a smooth convex function over the probability simplex by
/// projected gradient descent with Barzilai-Borwein step sizes and an
/// Armijo backtracking safeguard.
///
/// `fg` returns (value, gradient); it may return `f64::INFINITY` as the
/// value outside the domain (e.g. on the simplex boundary), which the line
/// search treats as a rejected trial.
pub fn minimize_simplex_pgd<FG>(fg: &FG, x0: &[f64], max_iter: usize, tol: f64) -> Vec<f64>
where
    FG: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = project_simplex(x0);
    let (mut fx, mut g) = fg(&x);
    let mut prev_x: Option<Vec<f64>> = None;
    let mut prev_g: Option<Vec<f64>> = None;

    for _ in 0..max_iter {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm == 0.0 {
            break;
        }
        // Barzilai-Borwein step from the previous displacement, clamped to a
        // sane range; first iteration falls back to a conservative guess.
        let mut step = match (&prev_x, &prev_g) {
            (Some(px), Some(pg)) => {
                let mut ss = 0.0;
                let mut sy = 0.0;
                for i in 0..x.len() {
                    let s = x[i] - px[i];
                    let y = g[i] - pg[i];
                    ss += s * s;
                    sy += s * y;
                }
                if sy > 0.0 && ss > 0.0 {
                    (ss / sy).clamp(1e-14, 1e12)
                } else {
                    1.0 / gnorm
                }
            }
            _ => 1e-3 / gnorm,
        };

        let mut accepted = false;
        let mut best = (x.clone(), fx);
        for _ in 0..70 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let proj = project_simplex(&trial);
            let dir_dot: f64 = proj
                .iter()
                .zip(&x)
                .zip(&g)
                .map(|((p, xi), gi)| gi * (p - xi))
                .sum();
            let (ft, gt) = fg(&proj);
            if ft.is_finite() && ft <= fx + 1e-4 * dir_dot {
                let moved = proj
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                prev_x = Some(x.clone());
                prev_g = Some(g.clone());
                x = proj;
                fx = ft;
                g = gt;
                accepted = true;
                if moved <= tol {
                    return x;
                }
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                break;
            }
            best = (proj, ft);
        }
        if !accepted {
            // No descent at any step size: stationary up to rounding.
            let _ = best;
            break;
        }
    }
    x
}

/// Relative difference |a - b| / max(|a|, |b|, floor).
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-300);
    (a - b).abs() / scale
}

/// Log-uniform draw in [lo, hi] from a unit sample.
pub fn log_uniform(u: f64, lo: f64, hi: f64) -> f64 {
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

/// Prints the per-criterion verdict line and enforces the runtime budget.
pub fn report(n: u32, name: &str, started: Instant, limit: Duration, result: Result<(), String>) {
    let elapsed = started.elapsed();
    match &result {
        Ok(()) => println!("[acceptance] C{n} {name}: PASS ({elapsed:.2?})"),
        Err(e) => println!("[acceptance] C{n} {name}: FAIL ({elapsed:.2?}) {e}"),
    }
    if let Err(e) = result {
        panic!("C{n} {name} failed: {e}");
    }
    assert!(
        elapsed <= limit,
        "C{n} {name} exceeded its runtime budget: {elapsed:?} > {limit:?}"
    );
}
