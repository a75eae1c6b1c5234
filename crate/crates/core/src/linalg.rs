//! Matrix-free preconditioned conjugate gradient.

/// Outcome of a successful CG solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Why a CG solve stopped without meeting the tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgFailure {
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 5000,
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric positive definite `A` given as `apply(x, out)`
/// (`out` is overwritten). Jacobi preconditioning with `diag`; `x` holds the
/// initial guess on entry. Stops when `‖r‖ ≤ tol·‖b‖`. Loss of positive
/// curvature is reported as a failure.
pub fn pcg<F>(
    mut apply: F,
    b: &[f64],
    diag: &[f64],
    x: &mut [f64],
    opts: CgOptions,
) -> Result<CgStats, CgFailure>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    if rel <= opts.tol {
        return Ok(CgStats {
            iterations: 0,
            relative_residual: rel,
        });
    }
    for it in 1..=opts.max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(CgFailure {
                iterations: it,
                relative_residual: rel,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= opts.tol {
            return Ok(CgStats {
                iterations: it,
                relative_residual: rel,
            });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(CgFailure {
        iterations: opts.max_iter,
        relative_residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let mut v = 4.0 * x[i];
            if i > 0 {
                v -= x[i - 1];
            }
            if i + 1 < n {
                v -= x[i + 1];
            }
            out[i] = v;
        }
    }

    #[test]
    fn solves_spd_tridiagonal() {
        let n = 50;
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let stats = pcg(tridiag, &b, &vec![4.0; n], &mut x, CgOptions::default()).unwrap();
        assert!(stats.relative_residual <= 1e-10);
        let mut ax = vec![0.0; n];
        tridiag(&x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let mut x = vec![1.0; 4];
        let s = pcg(tridiag, &[0.0; 4], &[4.0; 4], &mut x, CgOptions::default()).unwrap();
        assert_eq!(s.iterations, 0);
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn reports_non_convergence() {
        let b: Vec<f64> = (0..40).map(|i| 1.0 + i as f64).collect();
        let mut x = vec![0.0; 40];
        let err = pcg(
            tridiag,
            &b,
            &vec![4.0; 40],
            &mut x,
            CgOptions {
                tol: 1e-14,
                max_iter: 2,
            },
        )
        .unwrap_err();
        assert_eq!(err.iterations, 2);
        assert!(err.relative_residual > 1e-14);
    }

    #[test]
    fn detects_indefinite_operator() {
        let neg = |x: &[f64], out: &mut [f64]| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = -v;
            }
        };
        let mut x = vec![0.0; 3];
        assert!(pcg(neg, &[1.0, 2.0, 3.0], &[1.0; 3], &mut x, CgOptions::default()).is_err());
    }
}
