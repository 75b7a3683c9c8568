use crate::error::{Error, Result};
use crate::mdp::{self, OccupancyMeasure};

/// Reweighting that balances sampling error against reward bias.
#[derive(Debug, Clone)]
pub struct ReweightSolution {
    /// Optimal effective `(s, a)` distribution, zero off the support of `d_pi`.
    pub p: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Multiplier of the simplex constraint.
    pub lambda: f64,
}

/// `sum C1 d_pi / sqrt(p) + C2 d_L d_pi / p` over the support of `d_pi`;
/// `+inf` if `p` vanishes where `d_pi` does not.
pub fn reweight_objective(p: &[f64], d_pi: &[f64], d_l: &[f64], c1: f64, c2: f64) -> f64 {
    let mut total = 0.0;
    for ((&pi, &di), &li) in p.iter().zip(d_pi).zip(d_l) {
        if di == 0.0 {
            continue;
        }
        if pi <= 0.0 {
            return f64::INFINITY;
        }
        total += c1 * di / pi.sqrt() + c2 * li * di / pi;
    }
    total
}

/// Gradient of [`reweight_objective`]; zero off the support of `d_pi`.
pub fn reweight_gradient(p: &[f64], d_pi: &[f64], d_l: &[f64], c1: f64, c2: f64) -> Vec<f64> {
    (0..p.len())
        .map(|i| {
            if d_pi[i] > 0.0 && p[i] > 0.0 {
                -0.5 * c1 * d_pi[i] / (p[i] * p[i].sqrt()) - c2 * d_l[i] * d_pi[i] / (p[i] * p[i])
            } else {
                0.0
            }
        })
        .collect()
}

/// Relative stationarity residual on the support of `x`:
/// `max_i |g_i - gbar| / |gbar|` with `gbar = sum_i x_i g_i`.
///
/// At an optimum of a face of the simplex the gradient is constant on the
/// support, so this vanishes.
pub fn kkt_residual(x: &[f64], grad: &[f64]) -> f64 {
    let gbar: f64 = x.iter().zip(grad).map(|(xi, gi)| xi * gi).sum();
    let scale = gbar.abs().max(1e-300);
    x.iter()
        .zip(grad)
        .filter(|(xi, _)| **xi > 0.0)
        .map(|(_, gi)| (gi - gbar).abs() / scale)
        .fold(0.0, f64::max)
}

/// Solves `a u^3 + b u^4 = lambda` for `u > 0` (with `a > 0`, `b >= 0`).
fn root(a: f64, b: f64, lambda: f64) -> f64 {
    let cube = (lambda / a).cbrt();
    let quart = if b > 0.0 { (lambda / b).powf(0.25) } else { f64::INFINITY };
    let mut hi = cube.min(quart);
    let mut lo = (lambda / (2.0 * a)).cbrt().min(if b > 0.0 { (lambda / (2.0 * b)).powf(0.25) } else { f64::INFINITY });
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if a * mid.powi(3) + b * mid.powi(4) < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimizes [`reweight_objective`] over the simplex restricted to the support
/// of `d_pi`.
///
/// The objective is separable and each term is convex and decreasing, so at
/// the optimum `-f_i'(p_i) = lambda` on the support. With `u = p^{-1/2}` this
/// reads `C1 d_pi / 2 u^3 + C2 d_L d_pi u^4 = lambda`; each coordinate is a
/// monotone root and `lambda` is bisected until the masses sum to one.
pub fn optimal_reweight(
    d_pi: &OccupancyMeasure,
    d_l: &OccupancyMeasure,
    c1: f64,
    c2: f64,
) -> Result<ReweightSolution> {
    if !(c1 > 0.0 && c2 >= 0.0 && c1.is_finite() && c2.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "C1 = {c1} must be positive and C2 = {c2} nonnegative"
        )));
    }
    let (d, l) = (d_pi.density(), d_l.density());
    mdp::check_len("d_L", d.len(), l.len())?;
    let support: Vec<usize> = (0..d.len()).filter(|&i| d[i] > 0.0).collect();
    if support.is_empty() {
        return Err(Error::InvalidDistribution {
            what: "d_pi",
            detail: "no positive entries".into(),
        });
    }
    let masses = |lambda: f64| -> Vec<f64> {
        support
            .iter()
            .map(|&i| root(0.5 * c1 * d[i], c2 * l[i] * d[i], lambda).powi(-2))
            .collect()
    };
    let total = |lambda: f64| masses(lambda).iter().sum::<f64>();
    // total mass decreases in lambda
    let (mut lo, mut hi) = (1.0, 1.0);
    while total(lo) < 1.0 {
        lo *= 0.5;
    }
    while total(hi) > 1.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = (lo * hi).sqrt();
    let m = masses(lambda);
    let z: f64 = m.iter().sum();
    let mut p = vec![0.0; d.len()];
    for (&i, mi) in support.iter().zip(&m) {
        p[i] = mi / z;
    }
    let grad = reweight_gradient(&p, d, l, c1, c2);
    Ok(ReweightSolution {
        objective: reweight_objective(&p, d, l, c1, c2),
        kkt_residual: kkt_residual(&p, &grad),
        lambda,
        p,
    })
}

/// Effective-data distribution proportional to `sqrt(d_L * d_pi)`.
pub fn closed_form_bias_minimizer(
    d_pi: &OccupancyMeasure,
    d_l: &OccupancyMeasure,
) -> Result<Vec<f64>> {
    let (d, l) = (d_pi.density(), d_l.density());
    mdp::check_len("d_L", d.len(), l.len())?;
    let raw: Vec<f64> = d.iter().zip(l).map(|(a, b)| (a * b).sqrt()).collect();
    let z: f64 = raw.iter().sum();
    if z <= 0.0 {
        return Err(Error::DisjointSupport);
    }
    Ok(raw.into_iter().map(|x| x / z).collect())
}
