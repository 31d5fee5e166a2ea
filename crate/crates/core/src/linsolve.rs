//! Jacobi-preconditioned Krylov solvers on packed vectors.

use crate::{Error, Real, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SolveStats<T> {
    pub iterations: usize,
    /// Euclidean residual norm before the first iteration and after each one.
    pub residual_history: Vec<T>,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn remove_mean<T: Real>(v: &mut [T]) {
    let mean = v.iter().copied().sum::<T>() / T::from_usize_lossy(v.len());
    v.iter_mut().for_each(|x| *x -= mean);
}

fn not_converged<T: Real>(solver: &'static str, stats: SolveStats<T>) -> Error {
    Error::NotConverged {
        solver,
        iterations: stats.iterations,
        last: stats.residual_history.last().map_or(f64::NAN, |r| r.as_f64()),
        residual_history: stats.residual_history.iter().map(|r| r.as_f64()).collect(),
    }
}

/// Preconditioned conjugate gradients for a symmetric positive
/// (semi-)definite operator, stopping once `|b - A x|_2 <= abs_tol`.
///
/// With `singular = true` the operator is assumed to have the constant vector
/// as its null space: residuals and preconditioned residuals are kept
/// mean-free and so is the returned solution.
pub fn pcg<T: Real>(
    mut apply: impl FnMut(&[T], &mut [T]),
    diag: &[T],
    b: &[T],
    x: &mut [T],
    abs_tol: T,
    max_iter: usize,
    singular: bool,
) -> Result<SolveStats<T>> {
    let n = b.len();
    let mut r = vec![T::zero(); n];
    apply(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, &bi)| *ri = bi - *ri);
    if singular {
        remove_mean(&mut r);
    }
    let mut stats = SolveStats { iterations: 0, residual_history: vec![norm(&r)] };
    if stats.residual_history[0] <= abs_tol {
        if singular {
            remove_mean(x);
        }
        return Ok(stats);
    }
    let precond = |r: &[T], z: &mut [T]| {
        for ((zi, &ri), &di) in z.iter_mut().zip(r).zip(diag) {
            *zi = ri / di;
        }
        if singular {
            remove_mean(z);
        }
    };
    let mut z = vec![T::zero(); n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    for k in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            stats.iterations = k;
            return Err(not_converged("pcg", stats));
        }
        let a = rz / pap;
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * ap[i];
        }
        if singular {
            remove_mean(&mut r);
        }
        let rn = norm(&r);
        stats.iterations = k;
        stats.residual_history.push(rn);
        if rn <= abs_tol {
            if singular {
                remove_mean(x);
            }
            return Ok(stats);
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(not_converged("pcg", stats))
}

/// Right-preconditioned BiCGSTAB for a general nonsingular operator, stopping
/// once `|b - A x|_2 <= abs_tol`.
pub fn bicgstab<T: Real>(
    mut apply: impl FnMut(&[T], &mut [T]),
    diag: &[T],
    b: &[T],
    x: &mut [T],
    abs_tol: T,
    max_iter: usize,
) -> Result<SolveStats<T>> {
    let n = b.len();
    let mut r = vec![T::zero(); n];
    apply(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, &bi)| *ri = bi - *ri);
    let mut stats = SolveStats { iterations: 0, residual_history: vec![norm(&r)] };
    if stats.residual_history[0] <= abs_tol {
        return Ok(stats);
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut y = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut zs = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    for k in 1..=max_iter {
        stats.iterations = k;
        let rho_new = dot(&r_hat, &r);
        if rho_new == T::zero() || omega == T::zero() {
            return Err(not_converged("bicgstab", stats));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] / diag[i];
        }
        apply(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == T::zero() {
            return Err(not_converged("bicgstab", stats));
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let sn = norm(&s);
        if sn <= abs_tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            stats.residual_history.push(sn);
            return Ok(stats);
        }
        for i in 0..n {
            zs[i] = s[i] / diag[i];
        }
        apply(&zs, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > T::zero() { dot(&t, &s) / tt } else { T::zero() };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zs[i];
            r[i] = s[i] - omega * t[i];
        }
        let rn = norm(&r);
        stats.residual_history.push(rn);
        if rn <= abs_tol {
            return Ok(stats);
        }
    }
    Err(not_converged("bicgstab", stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(x: &[f64], y: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            y[i] = 2.0 * x[i] - l - r;
        }
    }

    #[test]
    fn pcg_solves_dirichlet_chain() {
        let n = 50;
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        laplace_1d(&exact, &mut b);
        let mut x = vec![0.0; n];
        let stats = pcg(laplace_1d, &vec![2.0; n], &b, &mut x, 1e-12, 200, false).unwrap();
        assert!(stats.iterations <= n + 1);
        for (a, e) in x.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn pcg_handles_neumann_null_space() {
        let n = 40;
        let neumann = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut v = 0.0;
                if i > 0 {
                    v += x[i] - x[i - 1];
                }
                if i + 1 < n {
                    v += x[i] - x[i + 1];
                }
                y[i] = v;
            }
        };
        let mut exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.2).cos()).collect();
        remove_mean(&mut exact);
        let mut b = vec![0.0; n];
        neumann(&exact, &mut b);
        let mut x = vec![0.0; n];
        let mut diag = vec![2.0; n];
        diag[0] = 1.0;
        diag[n - 1] = 1.0;
        pcg(neumann, &diag, &b, &mut x, 1e-12, 500, true).unwrap();
        for (a, e) in x.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let n = 60;
        let op = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 3.0 * x[i] - 1.4 * l - 0.6 * r;
            }
        };
        let exact: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).sqrt()).collect();
        let mut b = vec![0.0; n];
        op(&exact, &mut b);
        let mut x = vec![0.0; n];
        bicgstab(op, &vec![3.0; n], &b, &mut x, 1e-12, 500).unwrap();
        for (a, e) in x.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn non_convergence_reports_history() {
        let n = 100;
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let err = pcg(laplace_1d, &vec![2.0; n], &b, &mut x, 1e-14, 3, false).unwrap_err();
        match err {
            Error::NotConverged { iterations, residual_history, .. } => {
                assert_eq!(iterations, 3);
                assert_eq!(residual_history.len(), 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
