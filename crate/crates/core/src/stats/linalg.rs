//! Small dense symmetric kernels: cyclic Jacobi eigenvalues and helpers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-9;

/// Largest absolute asymmetry `max |a_ij - a_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix".into()));
    }
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = m.clone();
    // average the two triangles so rounding asymmetry cannot bias rotations
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let frob: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if frob == 0.0 {
        return Ok(vec![0.0; n]);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * frob {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

pub fn min_eigenvalue_sym(m: &DMatrix<f64>) -> Result<f64> {
    Ok(symmetric_eigenvalues(m)?.first().copied().unwrap_or(0.0))
}

pub fn max_eigenvalue_sym(m: &DMatrix<f64>) -> Result<f64> {
    Ok(symmetric_eigenvalues(m)?.last().copied().unwrap_or(0.0))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}
