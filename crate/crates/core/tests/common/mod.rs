//! Reference routines written without the library's linear algebra.

#![allow(dead_code)]

/// Leading singular triple by one-sided Jacobi on the columns of `a`
/// (`rows × cols`, row-major). Returns `(sigma, left, right)`.
pub fn jacobi_top_svd(a: &[f64], rows: usize, cols: usize) -> (f64, Vec<f64>, Vec<f64>) {
    // Work on columns: U = A V with orthogonal rotations until columns are
    // mutually orthogonal; the column norms are the singular values.
    let mut u: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| a[i * cols + j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..cols).map(|j| (0..cols).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = u[p].iter().map(|x| x * x).sum();
                let beta: f64 = u[q].iter().map(|x| x * x).sum();
                let gamma: f64 = u[p].iter().zip(&u[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt().max(f64::MIN_POSITIVE));
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let (x, y) = (u[p][k], u[q][k]);
                    u[p][k] = c * x - s * y;
                    u[q][k] = s * x + c * y;
                }
                for k in 0..cols {
                    let (x, y) = (v[p][k], v[q][k]);
                    v[p][k] = c * x - s * y;
                    v[q][k] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let norms: Vec<f64> = u.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let best = (0..cols).max_by(|&i, &j| norms[i].total_cmp(&norms[j])).unwrap();
    let sigma = norms[best];
    let left: Vec<f64> = u[best].iter().map(|x| x / sigma).collect();
    (sigma, left, v[best].clone())
}

/// Eigenpairs of a symmetric `n × n` matrix by cyclic Jacobi, sorted by
/// descending eigenvalue. Eigenvectors are returned as rows.
pub fn jacobi_eigen(sym: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut a = sym.to_vec();
    let mut v: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j].powi(2)).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k * n + i]).collect()).collect();
    (values, vectors)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Asymptotic squared overlaps evaluated from scratch.
pub fn overlaps(alpha_x: f64, alpha_y: f64, rho: f64, theta: f64) -> (f64, f64) {
    let s = rho * theta * theta;
    let k = alpha_x * alpha_y * s * s;
    if k <= 1.0 {
        return (0.0, 0.0);
    }
    (
        (k - 1.0) / (alpha_y * s * (alpha_x * s + 1.0)),
        (k - 1.0) / (alpha_x * s * (alpha_y * s + 1.0)),
    )
}

pub fn threshold(alpha_x: f64, alpha_y: f64, rho: f64) -> f64 {
    1.0 / ((alpha_x * alpha_y).powf(0.25) * rho.sqrt())
}

/// Sample mean and `n − 1` standard deviation, computed naively.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}
