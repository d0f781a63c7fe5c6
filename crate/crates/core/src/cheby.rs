//! The elementwise Chebyshev basis: T_0 = I, T_1 = L and
//! T_k = 2 L o T_{k-1} - T_{k-2} with o the Hadamard product, plus the
//! companion recursion for the entrywise derivatives dT_k/dL. Because the
//! recursion is elementwise, entry (i, j) of every term is a scalar
//! polynomial in L_ij alone, which is what makes the derivative bookkeeping
//! exact.

use ndarray::Array2;

use crate::error::{Error, Result};

/// The basis terms T_0..T_{K-1} evaluated on one operator, with the
/// entrywise derivative matrices filled in on demand.
#[derive(Debug, Clone)]
pub struct ChebyshevBasis {
    lap: Array2<f64>,
    terms: Vec<Array2<f64>>,
    derivs: Option<Vec<Array2<f64>>>,
}

impl ChebyshevBasis {
    pub fn order(&self) -> usize {
        self.terms.len()
    }

    pub fn n(&self) -> usize {
        self.lap.nrows()
    }

    /// The operator the basis was evaluated on.
    pub fn operator(&self) -> &Array2<f64> {
        &self.lap
    }

    pub fn terms(&self) -> &[Array2<f64>] {
        &self.terms
    }

    pub fn term(&self, k: usize) -> &Array2<f64> {
        &self.terms[k]
    }

    /// Entrywise derivatives d[T_k]_ij / dL_ij, present after
    /// [`derivative_basis`].
    pub fn derivs(&self) -> Option<&[Array2<f64>]> {
        self.derivs.as_deref()
    }
}

/// Evaluate the first `order` basis terms on `lap`.
pub fn forward_basis(lap: &Array2<f64>, order: usize) -> Result<ChebyshevBasis> {
    if order < 1 {
        return Err(Error::InvalidOrder(order));
    }
    crate::graph::check_finite(lap)?;
    let n = lap.nrows();
    let mut terms = Vec::with_capacity(order);
    terms.push(Array2::<f64>::eye(n));
    if order >= 2 {
        terms.push(lap.clone());
    }
    for k in 2..order {
        let prev = &terms[k - 1];
        let prev2 = &terms[k - 2];
        let next = 2.0 * lap * prev - prev2;
        terms.push(next);
    }
    Ok(ChebyshevBasis {
        lap: lap.clone(),
        terms,
        derivs: None,
    })
}

/// Fill in the derivative matrices: 0 for k = 0, all-ones for k = 1 and
/// d_k = 2 (T_{k-1} + L o d_{k-1}) - d_{k-2} for k >= 2. `lap` must be the
/// operator the basis was evaluated on.
pub fn derivative_basis(lap: &Array2<f64>, basis: ChebyshevBasis) -> Result<ChebyshevBasis> {
    if basis.lap != *lap {
        return Err(Error::MismatchedBasis);
    }
    Ok(fill_derivatives(basis))
}

pub(crate) fn fill_derivatives(mut basis: ChebyshevBasis) -> ChebyshevBasis {
    if basis.derivs.is_some() {
        return basis;
    }
    let order = basis.order();
    let n = basis.n();
    let mut derivs = Vec::with_capacity(order);
    derivs.push(Array2::<f64>::zeros((n, n)));
    if order >= 2 {
        derivs.push(Array2::<f64>::ones((n, n)));
    }
    for k in 2..order {
        let next = 2.0 * (&basis.terms[k - 1] + &basis.lap * &derivs[k - 1]) - &derivs[k - 2];
        derivs.push(next);
    }
    basis.derivs = Some(derivs);
    basis
}

/// Classical recursion with the matrix product instead of the elementwise
/// one, compiled in only for comparison experiments; no derivative recursion
/// is defined for it and nothing in the training path may call it.
#[cfg(feature = "matrix-recursion")]
pub fn forward_basis_matrix_product(lap: &Array2<f64>, order: usize) -> Result<Vec<Array2<f64>>> {
    if order < 1 {
        return Err(Error::InvalidOrder(order));
    }
    crate::graph::check_finite(lap)?;
    let n = lap.nrows();
    let mut terms = vec![Array2::<f64>::eye(n)];
    if order >= 2 {
        terms.push(lap.clone());
    }
    for k in 2..order {
        let next = 2.0 * lap.dot(&terms[k - 1]) - &terms[k - 2];
        terms.push(next);
    }
    Ok(terms)
}

/// Project a signal through every basis term: output[k] = T_k . psi^T,
/// the aggregation half of a convolutional block.
pub fn aggregate(basis: &ChebyshevBasis, psi: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
    let n = basis.n();
    if psi.ncols() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("signal with {n} columns"),
            got: format!("{}x{}", psi.nrows(), psi.ncols()),
        });
    }
    let psi_t = psi.t();
    Ok(basis.terms.iter().map(|t| t.dot(&psi_t)).collect())
}
