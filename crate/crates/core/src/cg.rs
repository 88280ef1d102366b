//! Matrix-free (optionally Jacobi-preconditioned) conjugate gradient.

use crate::scalar::{dot, sum_sq, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport<T> {
    pub iterations: usize,
    /// `||rhs - A x|| / ||rhs||` at exit.
    pub relative_residual: T,
    pub converged: bool,
}

/// Solves `A x = rhs` for symmetric positive (semi)definite `A`, warm-started
/// from the contents of `x`.
///
/// `inv_diag`, when given, is the inverse of the preconditioner diagonal.
/// For the unpreconditioned method the quadratic `x'Ax/2 - x'rhs` is
/// non-increasing across iterations.
pub fn conjugate_gradient<T: Real>(
    mut apply: impl FnMut(&[T], &mut [T]),
    rhs: &[T],
    x: &mut [T],
    tol: T,
    max_iters: usize,
    inv_diag: Option<&[T]>,
) -> CgReport<T> {
    let n = rhs.len();
    let rhs_norm = sum_sq(rhs).sqrt();
    if rhs_norm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return CgReport {
            iterations: 0,
            relative_residual: T::zero(),
            converged: true,
        };
    }
    let precond = |r: &[T], z: &mut [T]| match inv_diag {
        Some(d) => z.iter_mut().zip(r.iter().zip(d)).for_each(|(z, (&r, &d))| *z = r * d),
        None => z.copy_from_slice(r),
    };

    let mut ax = vec![T::zero(); n];
    apply(x, &mut ax);
    let mut r: Vec<T> = rhs.iter().zip(&ax).map(|(&b, &a)| b - a).collect();
    let mut z = vec![T::zero(); n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = ax;
    let mut rel = sum_sq(&r).sqrt() / rhs_norm;
    let mut iterations = 0;

    while rel > tol && iterations < max_iters {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] = x[i] + step * p[i];
            r[i] = r[i] - step * ap[i];
        }
        iterations += 1;
        rel = sum_sq(&r).sqrt() / rhs_norm;
        if rel <= tol {
            break;
        }
        precond(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    CgReport {
        iterations,
        relative_residual: rel,
        converged: rel <= tol,
    }
}
