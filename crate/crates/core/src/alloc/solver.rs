//! Trust-region minimizer with dogleg steps for the barrier subproblems.
//!
//! The objective is smooth but only defined on an open region (barrier terms
//! blow up at its edge), so the callbacks return `None` outside it and the
//! trust region shrinks away from the boundary instead of stepping across.

use crate::scalar::Scalar;

pub(crate) struct TrustMin<F: Scalar> {
    pub x: Vec<F>,
    pub converged: bool,
}

/// Minimizes `f` starting from a point where it is defined.
///
/// `f` and `grad` return `None` outside the feasible region. The Hessian is
/// built by central differences of the analytic gradient and shifted to
/// positive definiteness when needed, so dogleg steps are always well posed.
/// Convergence is declared on the gradient sup norm.
pub(crate) fn minimize_dogleg<F, Obj, Grad>(
    f: &Obj,
    grad: &Grad,
    x0: &[F],
    radius0: F,
    max_iter: usize,
    gtol: F,
) -> Option<TrustMin<F>>
where
    F: Scalar,
    Obj: Fn(&[F]) -> Option<F>,
    Grad: Fn(&[F]) -> Option<Vec<F>>,
{
    let mut x = x0.to_vec();
    let mut fx = f(&x)?;
    let mut g = grad(&x)?;
    let mut radius = radius0;
    let radius_max = F::c(1.0);
    let radius_min = F::c(1e-14);
    // Once the model predicts less decrease than f can resolve, ared/pred is
    // pure rounding noise; a few unverified Newton polish steps finish the
    // job instead of letting the radius collapse.
    let mut polish_budget = 3usize;

    for _ in 0..max_iter {
        let gnorm = sup_norm(&g);
        if gnorm <= gtol {
            return Some(TrustMin { x, converged: true });
        }
        if radius < radius_min {
            break;
        }
        let h = fd_hessian(grad, &x, &g);
        let step = dogleg_step(&h, &g, radius);
        let candidate: Vec<F> = x.iter().zip(&step).map(|(&a, &s)| a + s).collect();
        let predicted = -(dot(&g, &step) + F::c(0.5) * quad_form(&h, &step));
        let noise = F::c(4.0) * F::epsilon() * (F::one() + fx.abs());
        let trial = f(&candidate);
        if predicted <= noise {
            if polish_budget == 0 {
                break;
            }
            polish_budget -= 1;
            match trial {
                Some(ft) if ft.is_finite() && ft <= fx + noise => {
                    x = candidate;
                    fx = ft;
                    g = match grad(&x) {
                        Some(v) => v,
                        None => break,
                    };
                }
                _ => radius = radius * F::c(0.25),
            }
            continue;
        }
        let (accept, ratio) = match trial {
            Some(ft) if ft.is_finite() => {
                let actual = fx - ft;
                (actual > F::zero(), actual / predicted)
            }
            _ => (false, -F::one()),
        };
        let at_boundary = norm2(&step) >= F::c(0.99) * radius;
        if ratio < F::c(0.25) {
            radius = radius * F::c(0.25);
        } else if ratio > F::c(0.75) && at_boundary {
            radius = (radius + radius).min(radius_max);
        }
        if accept {
            x = candidate;
            fx = trial.unwrap();
            g = match grad(&x) {
                Some(v) => v,
                None => break,
            };
        }
    }
    let gnorm = sup_norm(&g);
    Some(TrustMin {
        x,
        converged: gnorm <= gtol,
    })
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm2<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

fn sup_norm<F: Scalar>(a: &[F]) -> F {
    a.iter().fold(F::zero(), |m, v| m.max(v.abs()))
}

fn quad_form<F: Scalar>(h: &[Vec<F>], v: &[F]) -> F {
    let mut s = F::zero();
    for (i, row) in h.iter().enumerate() {
        for (j, &hij) in row.iter().enumerate() {
            s += v[i] * hij * v[j];
        }
    }
    s
}

/// Central differences of the gradient, symmetrized. Points where the
/// gradient is undefined fall back to one-sided differences, and to a zero
/// row when both sides fail (the positive-definite shift then takes over).
fn fd_hessian<F, Grad>(grad: &Grad, x: &[F], g0: &[F]) -> Vec<Vec<F>>
where
    F: Scalar,
    Grad: Fn(&[F]) -> Option<Vec<F>>,
{
    let n = x.len();
    let mut h = vec![vec![F::zero(); n]; n];
    let mut xp = x.to_vec();
    for i in 0..n {
        let step = F::c(1e-6) * x[i].abs().max(F::one());
        xp[i] = x[i] + step;
        let plus = grad(&xp);
        xp[i] = x[i] - step;
        let minus = grad(&xp);
        xp[i] = x[i];
        let row: Option<Vec<F>> = match (plus, minus) {
            (Some(p), Some(m)) => Some(
                p.iter()
                    .zip(&m)
                    .map(|(&a, &b)| (a - b) / (step + step))
                    .collect(),
            ),
            (Some(p), None) => Some(p.iter().zip(g0).map(|(&a, &b)| (a - b) / step).collect()),
            (None, Some(m)) => Some(g0.iter().zip(&m).map(|(&a, &b)| (a - b) / step).collect()),
            (None, None) => None,
        };
        if let Some(r) = row {
            h[i] = r;
        }
    }
    // Symmetrize.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = F::c(0.5) * (h[i][j] + h[j][i]);
            h[i][j] = avg;
            h[j][i] = avg;
        }
    }
    for row in &mut h {
        for v in row.iter_mut() {
            if !v.is_finite() {
                *v = F::zero();
            }
        }
    }
    h
}

/// Classic dogleg: Newton point if inside the region, otherwise the Cauchy
/// leg blended with the Newton leg at the boundary. The Hessian is shifted
/// until Cholesky succeeds, so the Newton point always exists.
fn dogleg_step<F: Scalar>(h: &[Vec<F>], g: &[F], radius: F) -> Vec<F> {
    let n = g.len();
    let scale = h
        .iter()
        .flat_map(|r| r.iter())
        .fold(F::c(1e-12), |m, v| m.max(v.abs()));
    let mut shift = F::zero();
    let newton = loop {
        let mut shifted = h.to_vec();
        for i in 0..n {
            shifted[i][i] += shift;
        }
        if let Some(p) = cholesky_solve(&mut shifted, g) {
            break p.iter().map(|&v| -v).collect::<Vec<F>>();
        }
        shift = if shift == F::zero() {
            scale * F::c(1e-10)
        } else {
            shift * F::c(10.0)
        };
        if shift > scale * F::c(1e12) {
            // Hopeless curvature; fall back to steepest descent.
            break g.iter().map(|&v| -v).collect::<Vec<F>>();
        }
    };
    if norm2(&newton) <= radius {
        return newton;
    }
    let ghg = quad_form(h, g);
    let gg = dot(g, g);
    if ghg <= F::zero() {
        // Negative curvature along the gradient: go to the boundary.
        let s = radius / gg.sqrt();
        return g.iter().map(|&v| -s * v).collect();
    }
    let cauchy: Vec<F> = {
        let s = gg / ghg;
        g.iter().map(|&v| -s * v).collect()
    };
    let cn = norm2(&cauchy);
    if cn >= radius {
        let s = radius / cn;
        return cauchy.iter().map(|&v| s * v).collect();
    }
    // Solve |cauchy + t (newton - cauchy)| = radius for t in [0, 1].
    let d: Vec<F> = newton.iter().zip(&cauchy).map(|(&a, &b)| a - b).collect();
    let a = dot(&d, &d);
    let b = F::c(2.0) * dot(&cauchy, &d);
    let c = dot(&cauchy, &cauchy) - radius * radius;
    let disc = (b * b - F::c(4.0) * a * c).max(F::zero()).sqrt();
    let t = ((-b + disc) / (F::c(2.0) * a)).max(F::zero()).min(F::one());
    cauchy
        .iter()
        .zip(&d)
        .map(|(&cv, &dv)| cv + t * dv)
        .collect()
}

/// In-place Cholesky followed by two triangular solves. None when the matrix
/// is not positive definite.
fn cholesky_solve<F: Scalar>(a: &mut [Vec<F>], rhs: &[F]) -> Option<Vec<F>> {
    let n = rhs.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d = d - a[j][k] * a[j][k];
        }
        if !(d > F::zero() && d.is_finite()) {
            return None;
        }
        let l = d.sqrt();
        a[j][j] = l;
        for i in (j + 1)..n {
            let mut s = a[i][j];
            for k in 0..j {
                s = s - a[i][k] * a[j][k];
            }
            a[i][j] = s / l;
        }
    }
    // Forward solve L z = rhs.
    let mut z = rhs.to_vec();
    for i in 0..n {
        for k in 0..i {
            let v = z[k];
            z[i] = z[i] - a[i][k] * v;
        }
        z[i] = z[i] / a[i][i];
    }
    // Back solve L' x = z.
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = z[k];
            z[i] = z[i] - a[k][i] * v;
        }
        z[i] = z[i] / a[i][i];
    }
    Some(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl_converges_to_center() {
        let f = |x: &[f64]| Some((x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2));
        let g = |x: &[f64]| Some(vec![2.0 * (x[0] - 1.0), 6.0 * (x[1] + 2.0)]);
        let out = minimize_dogleg(&f, &g, &[5.0, 5.0], 0.5, 200, 1e-12).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-9, "{:?}", out.x);
        assert!((out.x[1] + 2.0).abs() < 1e-9, "{:?}", out.x);
    }

    #[test]
    fn barrier_like_domain_stays_feasible() {
        // Minimize x - ln(x) on x > 0: optimum at x = 1.
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                None
            } else {
                Some(x[0] - x[0].ln())
            }
        };
        let g = |x: &[f64]| {
            if x[0] <= 0.0 {
                None
            } else {
                Some(vec![1.0 - 1.0 / x[0]])
            }
        };
        let out = minimize_dogleg(&f, &g, &[0.05], 0.1, 300, 1e-12).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-9, "{:?}", out.x);
    }

    #[test]
    fn rosenbrock_reaches_optimum() {
        let f = |x: &[f64]| {
            Some((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
        };
        let g = |x: &[f64]| {
            Some(vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ])
        };
        let out = minimize_dogleg(&f, &g, &[-1.2, 1.0], 0.5, 2000, 1e-10).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6, "{:?}", out.x);
        assert!((out.x[1] - 1.0).abs() < 1e-6, "{:?}", out.x);
    }
}
