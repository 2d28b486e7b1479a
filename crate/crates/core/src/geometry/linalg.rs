//! Small dense symmetric matrix helpers for `n ≤ 4`.

use crate::grid::{Mat, MAX_DIM};

/// Pivots of Gaussian elimination without row exchanges; their partial
/// products are the leading principal minors.
pub fn leading_pivots(n: usize, a: &Mat) -> [f64; MAX_DIM] {
    let mut m = *a;
    let mut piv = [0.0; MAX_DIM];
    for k in 0..n {
        piv[k] = m[k][k];
        if piv[k] == 0.0 {
            break;
        }
        for i in k + 1..n {
            let f = m[i][k] / piv[k];
            for j in k..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    piv
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(n: usize, a: &Mat) -> Option<Mat> {
    let mut m = *a;
    let mut inv = crate::grid::identity(n);
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))?;
        if m[p][k] == 0.0 {
            return None;
        }
        m.swap(k, p);
        inv.swap(k, p);
        let d = 1.0 / m[k][k];
        for j in 0..n {
            m[k][j] *= d;
            inv[k][j] *= d;
        }
        for i in 0..n {
            if i != k {
                let f = m[i][k];
                if f != 0.0 {
                    for j in 0..n {
                        m[i][j] -= f * m[k][j];
                        inv[i][j] -= f * inv[k][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn sym_eigenvalues(n: usize, a: &Mat) -> [f64; MAX_DIM] {
    let mut m = *a;
    for _sweep in 0..50 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev = [f64::INFINITY; MAX_DIM];
    for i in 0..n {
        ev[i] = m[i][i];
    }
    ev[..n].sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::matmul;

    #[test]
    fn inverse_and_eigenvalues() {
        let mut a = [[0.0; MAX_DIM]; MAX_DIM];
        let rows = [[4.0, 1.0, 0.5], [1.0, 3.0, -0.2], [0.5, -0.2, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = rows[i][j];
            }
        }
        let inv = invert(3, &a).unwrap();
        let p = matmul(3, &a, &inv);
        for i in 0..3 {
            for j in 0..3 {
                assert!((p[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let ev = sym_eigenvalues(3, &a);
        let trace: f64 = ev[..3].iter().sum();
        assert!((trace - 9.0).abs() < 1e-12);
        let piv = leading_pivots(3, &a);
        let det: f64 = piv[..3].iter().product();
        let evdet: f64 = ev[..3].iter().product();
        assert!((det - evdet).abs() < 1e-10);
        assert!(ev[0] > 0.0 && ev[0] < ev[1] && ev[1] < ev[2]);
    }

    #[test]
    fn diagonal_eigenvalues_are_entries() {
        let mut a = [[0.0; MAX_DIM]; MAX_DIM];
        a[0][0] = 2.0;
        a[1][1] = -1.0;
        let ev = sym_eigenvalues(2, &a);
        assert_eq!(&ev[..2], &[-1.0, 2.0]);
    }
}
