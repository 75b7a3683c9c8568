//! Brute-force reference solvers used to cross-check the closed forms.

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projected gradient descent with Armijo backtracking, started from the
/// uniform distribution. Stops when an accepted step moves less than `tol`
/// in L1.
pub fn projected_gradient<F, G>(n: usize, f: F, grad: G, tol: f64, max_iters: usize) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = vec![1.0 / n as f64; n];
    let mut fx = f(&x);
    let mut step = 1.0;
    for _ in 0..max_iters {
        let g = grad(&x);
        let mut moved = None;
        for _ in 0..200 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let y = project_simplex(&trial);
            let fy = f(&y);
            let decrease: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gi, (yi, xi))| gi * (xi - yi)).sum();
            if fy.is_finite() && fy <= fx - 0.5 * decrease.max(0.0) + 1e-15 * fx.abs() {
                moved = Some((y, fy));
                break;
            }
            step *= 0.5;
        }
        let Some((y, fy)) = moved else { break };
        let change: f64 = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = y;
        fx = fy;
        step *= 2.0;
        if change < tol {
            break;
        }
    }
    x
}

/// Minimizes a separable objective over the simplex by pairwise mass
/// exchanges: every pair's combined mass is re-split on a grid of
/// `resolution` cells, zooming in around the best cell. Sweeps repeat until
/// no exchange improves the objective.
pub fn pairwise_grid_search<F>(n: usize, f: F, resolution: usize, max_sweeps: usize) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = vec![1.0 / n as f64; n];
    let mut best = f(&x);
    for _ in 0..max_sweeps {
        let before = best;
        for i in 0..n {
            for j in i + 1..n {
                let total = x[i] + x[j];
                let (mut lo, mut hi) = (0.0, total);
                for _zoom in 0..8 {
                    let width = (hi - lo) / resolution as f64;
                    let mut arg = x[i];
                    for k in 0..=resolution {
                        let t = lo + k as f64 * width;
                        let mut y = x.clone();
                        y[i] = t;
                        y[j] = total - t;
                        let fy = f(&y);
                        if fy < best {
                            best = fy;
                            arg = t;
                        }
                    }
                    x[i] = arg;
                    x[j] = total - arg;
                    lo = (arg - width).max(0.0);
                    hi = (arg + width).min(total);
                }
            }
        }
        if before - best <= 1e-15 * best.abs() {
            break;
        }
    }
    x
}
