//! Small dense linear-algebra utilities.

use nalgebra::{Complex, DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, in
/// ascending order. Independent of the LAPACK-style solver used elsewhere,
/// so it can serve as a cross-check.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "jacobi_eigenvalues needs a square matrix");
    let mut a = m.clone();
    // Symmetrize defensively.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
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
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Eigenvalues of a general real matrix.
///
/// The matrix is first permuted to block upper-triangular form using the
/// strongly connected components of its sparsity graph; 1x1 blocks give
/// their diagonal entry exactly and larger blocks go through a Schur
/// decomposition. This avoids the spurious spread that defective repeated
/// eigenvalues (long bidiagonal chains) suffer under plain QR.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let n = a.nrows();
    let mut g = DiGraph::<usize, ()>::with_capacity(n, n * 2);
    let nodes: Vec<_> = (0..n).map(|i| g.add_node(i)).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)] != 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    for comp in tarjan_scc(&g) {
        let idx: Vec<usize> = comp.iter().map(|v| g[*v]).collect();
        if idx.len() == 1 {
            out.push(Complex::new(a[(idx[0], idx[0])], 0.0));
        } else {
            let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])]);
            out.extend(sub.complex_eigenvalues().iter().copied());
        }
    }
    out.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    out
}

/// Numerical rank with threshold `rel_tol * sigma_max`.
pub fn rank_complex(m: &DMatrix<Complex<f64>>, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0f64, |acc, v| acc.max(*v));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    let gram = m.transpose() * m;
    let eig = gram.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(*v));
    let thresh = (rel_tol * lmax.sqrt()).powi(2).max(f64::MIN_POSITIVE);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&k| eig.eigenvalues[k] <= thresh)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Symmetric part `(M + M') / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_matches_known_spectrum() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let ev = jacobi_eigenvalues(&m);
        let s = std::f64::consts::SQRT_2;
        let expected = [2.0 - s, 2.0, 2.0 + s];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bidiagonal_chain_eigenvalues_are_exact() {
        let n = 25;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = -0.0626;
            if i > 0 {
                a[(i, i - 1)] = 0.0626;
            }
        }
        for l in eigenvalues(&a) {
            assert_eq!(l.re, -0.0626);
            assert_eq!(l.im, 0.0);
        }
    }

    #[test]
    fn eigenvalues_of_rotation_block() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let ev = eigenvalues(&a);
        assert!((ev[0].im.abs() - 1.0).abs() < 1e-12 && ev[0].re.abs() < 1e-12);
    }

    #[test]
    fn null_space_of_selector() {
        let c = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
        let ns = null_space(&c, 1e-9);
        assert_eq!(ns.ncols(), 2);
        assert!((&c * &ns).amax() < 1e-12);
    }
}
