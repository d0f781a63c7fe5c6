//! Dense symmetric eigensolver for the small operators this crate works with
//! (joint graphs, n <= 64). Cyclic Jacobi sweeps converge to machine precision
//! at these sizes and keep the crate dependency-free on LAPACK.

use ndarray::Array2;

/// Eigenvalues of a symmetric matrix, ascending. The caller is responsible
/// for symmetry; asymmetric input gives the eigenvalues of the matrix with
/// its strict upper triangle mirrored.
pub fn symmetric_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![m[[0, 0]]];
    }

    let mut a = m.clone();
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);

    for _sweep in 0..100 {
        let off: f64 = off_diagonal_norm(&a);
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq.abs() <= 1e-18 * scale {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                // tan of the rotation angle, the stable small-angle root
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    eig
}

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[[i, j]] * a[[i, j]];
            }
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_matrix_returns_its_entries() {
        let m = Array2::from_diag(&ndarray::arr1(&[3.0, -1.0, 7.0]));
        let eig = symmetric_eigenvalues(&m);
        assert_eq!(eig, vec![-1.0, 3.0, 7.0]);
    }

    #[test]
    fn two_by_two_matches_characteristic_polynomial() {
        let m = arr2(&[[1.0, -1.0], [-1.0, 1.0]]);
        let eig = symmetric_eigenvalues(&m);
        assert!((eig[0] - 0.0).abs() < 1e-14);
        assert!((eig[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn trace_identities_hold_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 5, 13, 30] {
            let mut m = Array2::zeros((n, n));
            for i in 0..n {
                for j in i..n {
                    let v: f64 = rng.random_range(-2.0..2.0);
                    m[[i, j]] = v;
                    m[[j, i]] = v;
                }
            }
            let eig = symmetric_eigenvalues(&m);
            let tr: f64 = (0..n).map(|i| m[[i, i]]).sum();
            let fro2: f64 = m.iter().map(|v| v * v).sum();
            let sum: f64 = eig.iter().sum();
            let sum2: f64 = eig.iter().map(|v| v * v).sum();
            assert!((tr - sum).abs() < 1e-10 * (1.0 + tr.abs()));
            assert!((fro2 - sum2).abs() < 1e-10 * (1.0 + fro2));
        }
    }
}
