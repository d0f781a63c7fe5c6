//! Backward pass from loss gradients on the basis terms down to the trainable
//! adjacency matrix. The first stage collapses the per-term gradients onto
//! the operator (the elementwise recursion makes each [T_k]_ij a function of
//! L_ij alone, so the stage is an entrywise multiply-accumulate). The second
//! stage pulls the operator gradient through the parametrization that built
//! L from A; each parametrization's Jacobian is applied implicitly through
//! its sparsity pattern, never materialized as an n^2 x n^2 matrix.

use ndarray::{Array1, Array2};

use crate::cheby::ChebyshevBasis;
use crate::error::{Error, Result};
use crate::graph::{
    check_finite, AdjacencyParam, BaseKind, DegreeAxis, LaplacianKind, LaplacianOperator,
    DEGREE_EPS,
};

/// Per-term loss gradients: nabla[k] = dLoss / dT_k(L).
#[derive(Debug, Clone)]
pub struct BasisGradients {
    nabla: Vec<Array2<f64>>,
}

impl BasisGradients {
    pub fn new(nabla: Vec<Array2<f64>>) -> Result<Self> {
        for g in &nabla {
            check_finite(g)?;
        }
        Ok(BasisGradients { nabla })
    }

    pub fn zeros(order: usize, n: usize) -> Self {
        BasisGradients {
            nabla: (0..order).map(|_| Array2::zeros((n, n))).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.nabla.len()
    }

    pub fn term(&self, k: usize) -> &Array2<f64> {
        &self.nabla[k]
    }

    pub fn term_mut(&mut self, k: usize) -> &mut Array2<f64> {
        &mut self.nabla[k]
    }

    pub fn add_assign(&mut self, other: &BasisGradients) {
        for (a, b) in self.nabla.iter_mut().zip(&other.nabla) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.nabla {
            g.mapv_inplace(|v| v * factor);
        }
    }
}

/// Collapse per-term gradients onto the shared operator:
/// out_ij = sum_k d[T_k]_ij/dL_ij * nabla[k]_ij.
pub fn grad_wrt_laplacian(
    grads: &BasisGradients,
    basis: &ChebyshevBasis,
) -> Result<Array2<f64>> {
    if grads.order() != basis.order() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} gradient terms", basis.order()),
            got: format!("{}", grads.order()),
        });
    }
    let n = basis.n();
    let derivs = basis.derivs().ok_or(Error::MismatchedBasis)?;
    let mut out = Array2::<f64>::zeros((n, n));
    for (d, g) in derivs.iter().zip(&grads.nabla) {
        if g.dim() != (n, n) {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n}"),
                got: format!("{}x{}", g.nrows(), g.ncols()),
            });
        }
        out = out + d * g;
    }
    Ok(out)
}

/// Pull the operator gradient back to the matrix the parametrization was
/// evaluated on (A, or A + A^T for the S- kinds). For symmetric kinds the
/// caller composes [`symmetrize_gradient`] afterwards; [`grad_wrt_adjacency`]
/// does both steps.
pub fn apply_parametrization_jacobian(
    kind: LaplacianKind,
    a: &AdjacencyParam,
    l: &LaplacianOperator,
    grad_l: &Array2<f64>,
) -> Result<Array2<f64>> {
    check_finite(grad_l)?;
    let n = a.n();
    if l.n() != n || grad_l.nrows() != n || grad_l.ncols() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", grad_l.nrows(), grad_l.ncols()),
        });
    }
    if l.rescaled {
        return Err(Error::MismatchedBasis);
    }
    let effective = a.effective(kind);
    apply_base_jacobian(kind.base, &effective, &l.matrix, grad_l)
}

fn apply_base_jacobian(
    base: BaseKind,
    effective: &Array2<f64>,
    lap: &Array2<f64>,
    g: &Array2<f64>,
) -> Result<Array2<f64>> {
    let n = effective.nrows();
    let mut out = Array2::<f64>::zeros((n, n));
    match base {
        // L_ij = delta_ij * rowdeg_i - A_ij, so dLoss/dA_pq = G_pp - G_pq.
        BaseKind::Comb => {
            for p in 0..n {
                for q in 0..n {
                    out[[p, q]] = g[[p, p]] - g[[p, q]];
                }
            }
        }
        // L_ij = A_ij / coldeg_j: the Jacobian couples only entries in the
        // same column. dLoss/dA_pq = (G_pq - sum_i G_iq L_iq) / coldeg_q.
        BaseKind::Ndrw | BaseKind::Drw => {
            let col_deg = floored_degrees(effective, DegreeAxis::Columns);
            let sign = if base == BaseKind::Ndrw { 1.0 } else { -1.0 };
            // column dots of G with the non-differential part of L
            let mut col_dot = Array1::<f64>::zeros(n);
            for q in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    let ndrw = if base == BaseKind::Ndrw {
                        lap[[i, q]]
                    } else {
                        f64::from(i == q) - lap[[i, q]]
                    };
                    acc += g[[i, q]] * ndrw;
                }
                col_dot[q] = acc;
            }
            for p in 0..n {
                for q in 0..n {
                    out[[p, q]] = sign * (g[[p, q]] - col_dot[q]) / col_deg[q];
                }
            }
        }
        // L_ij = A_ij / sqrt(rowdeg_i * coldeg_j): entries couple along the
        // row of p and the column of q.
        // dLoss/dA_pq = G_pq / sqrt(r_p c_q)
        //             - (sum_j G_pj L_pj) / (2 r_p) - (sum_i G_iq L_iq) / (2 c_q).
        BaseKind::Ndn | BaseKind::Dn => {
            let row_deg = floored_degrees(effective, DegreeAxis::Rows);
            let col_deg = floored_degrees(effective, DegreeAxis::Columns);
            let sign = if base == BaseKind::Ndn { 1.0 } else { -1.0 };
            let ndn_entry = |i: usize, j: usize| {
                if base == BaseKind::Ndn {
                    lap[[i, j]]
                } else {
                    f64::from(i == j) - lap[[i, j]]
                }
            };
            let mut row_dot = Array1::<f64>::zeros(n);
            let mut col_dot = Array1::<f64>::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    let prod = g[[i, j]] * ndn_entry(i, j);
                    row_dot[i] += prod;
                    col_dot[j] += prod;
                }
            }
            for p in 0..n {
                for q in 0..n {
                    let direct = g[[p, q]] / (row_deg[p] * col_deg[q]).sqrt();
                    let coupled = 0.5 * (row_dot[p] / row_deg[p] + col_dot[q] / col_deg[q]);
                    out[[p, q]] = sign * (direct - coupled);
                }
            }
        }
    }
    Ok(out)
}

fn floored_degrees(m: &Array2<f64>, axis: DegreeAxis) -> Array1<f64> {
    let d = match axis {
        DegreeAxis::Columns => m.sum_axis(ndarray::Axis(0)),
        DegreeAxis::Rows => m.sum_axis(ndarray::Axis(1)),
    };
    d.mapv(|v| v.max(DEGREE_EPS))
}

/// Weight-sharing tie for the symmetry reparametrization A + A^T:
/// dLoss/dA = G + G^T where G is the gradient w.r.t. the symmetrized matrix.
pub fn symmetrize_gradient(grad_a: &Array2<f64>) -> Array2<f64> {
    grad_a + &grad_a.t()
}

/// Full chain from operator gradient to the free adjacency matrix, including
/// the symmetry tie for S- kinds.
pub fn grad_wrt_adjacency(
    kind: LaplacianKind,
    a: &AdjacencyParam,
    l: &LaplacianOperator,
    grad_l: &Array2<f64>,
) -> Result<Array2<f64>> {
    let grad_eff = apply_parametrization_jacobian(kind, a, l, grad_l)?;
    Ok(if kind.symmetric {
        symmetrize_gradient(&grad_eff)
    } else {
        grad_eff
    })
}
