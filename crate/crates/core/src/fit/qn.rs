//! Box-constrained BFGS used to refine monolingual fits from each start.

use crate::scalar::Scalar;

pub(crate) struct BoxMin<F> {
    pub x: Vec<F>,
    pub value: F,
    pub converged: bool,
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn norm2<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

fn identity<F: Scalar>(n: usize) -> Vec<Vec<F>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { F::one() } else { F::zero() }).collect())
        .collect()
}

/// Gradient with components blocked by an active bound zeroed out.
fn projected_gradient<F: Scalar>(x: &[F], g: &[F], lower: &[F], upper: &[F]) -> Vec<F> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&lo, &hi))| {
            if (xi <= lo && gi > F::zero()) || (xi >= hi && gi < F::zero()) {
                F::zero()
            } else {
                gi
            }
        })
        .collect()
}

/// Minimizes `objective` over the box `[lower, upper]` starting from `x0`.
///
/// BFGS on the inverse Hessian with a projected backtracking line search.
/// Convergence is declared when the accepted step norm drops below `step_tol`
/// or the projected gradient vanishes relative to the objective scale; the
/// iteration budget is `max_iter`.
pub(crate) fn minimize_box<F, O>(
    objective: O,
    x0: &[F],
    lower: &[F],
    upper: &[F],
    max_iter: usize,
    step_tol: F,
) -> BoxMin<F>
where
    F: Scalar,
    O: Fn(&[F]) -> (F, Vec<F>),
{
    let n = x0.len();
    let clamp = |v: &mut [F]| {
        for i in 0..n {
            v[i] = v[i].max(lower[i]).min(upper[i]);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let (mut fx, mut g) = objective(&x);
    if !fx.is_finite() {
        return BoxMin {
            x,
            value: fx,
            converged: false,
        };
    }
    let mut h = identity::<F>(n);
    let mut converged = false;
    let mut resets_in_a_row = 0usize;

    for _ in 0..max_iter {
        let gp = projected_gradient(&x, &g, lower, upper);
        let gp_inf = gp.iter().fold(F::zero(), |m, v| m.max(v.abs()));
        if gp_inf <= F::c(1e-14) * (F::one() + fx.abs()) {
            converged = true;
            break;
        }

        // Search direction; fall back to steepest descent if BFGS lost descent.
        let mut d: Vec<F> = (0..n).map(|i| -dot(&h[i], &g)).collect();
        if dot(&d, &g) > -F::c(1e-12) * norm2(&d) * norm2(&g) {
            h = identity(n);
            d = g.iter().map(|v| -*v).collect();
        }

        let mut t = F::one();
        let mut accepted = false;
        for _ in 0..60 {
            let mut xt: Vec<F> = x.iter().zip(&d).map(|(&xi, &di)| xi + t * di).collect();
            clamp(&mut xt);
            let s: Vec<F> = xt.iter().zip(&x).map(|(a, b)| *a - *b).collect();
            let s_norm = norm2(&s);
            if s_norm == F::zero() {
                break;
            }
            let (ft, gt) = objective(&xt);
            if ft.is_finite() && ft <= fx + F::c(1e-4) * dot(&g, &s) {
                let y: Vec<F> = gt.iter().zip(&g).map(|(a, b)| *a - *b).collect();
                let sy = dot(&s, &y);
                if sy > F::c(1e-12) * s_norm * norm2(&y) {
                    bfgs_update(&mut h, &s, &y, sy);
                }
                x = xt;
                fx = ft;
                g = gt;
                accepted = true;
                resets_in_a_row = 0;
                if s_norm < step_tol {
                    converged = true;
                }
                break;
            }
            t = t * F::c(0.5);
        }
        if converged {
            break;
        }
        if !accepted {
            // One restart with fresh curvature; a second consecutive failure
            // means the line search cannot improve even along -g.
            resets_in_a_row += 1;
            if resets_in_a_row >= 2 {
                break;
            }
            h = identity(n);
        }
    }

    BoxMin {
        x,
        value: fx,
        converged,
    }
}

/// H <- (I - s y'/sy) H (I - y s'/sy) + s s'/sy.
fn bfgs_update<F: Scalar>(h: &mut [Vec<F>], s: &[F], y: &[F], sy: F) {
    let n = s.len();
    let rho = F::one() / sy;
    let hy: Vec<F> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    // Expanded form: H + (1 + y'Hy/sy) s s'/sy - (H y s' + s y' H)/sy.
    let coef = (F::one() + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i][j] = h[i][j] + coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
