//! Trainable adjacency matrices and the Laplacian parametrizations built from
//! them: combinatorial, random-walk and degree-normalized forms, each in a
//! plain and a symmetrized flavor, plus the spectral rescaling that places the
//! operator's eigenvalues in [-1, 1].

use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::eigen::symmetric_eigenvalues;
use crate::error::{Error, Result};

/// Degrees are clamped below by this before any inversion so isolated nodes
/// keep finite gradients.
pub const DEGREE_EPS: f64 = 1e-8;

/// Base parametrization, one per row of the operator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseKind {
    /// D(A^T) - A
    Comb,
    /// A . D(A)^-1  (non-differential random walk)
    Ndrw,
    /// I - A . D(A)^-1  (differential random walk)
    Drw,
    /// D(A^T)^-1/2 . A . D(A)^-1/2  (non-differential normalized)
    Ndn,
    /// I - D(A^T)^-1/2 . A . D(A)^-1/2  (differential normalized)
    Dn,
}

impl BaseKind {
    pub const ALL: [BaseKind; 5] = [
        BaseKind::Comb,
        BaseKind::Ndrw,
        BaseKind::Drw,
        BaseKind::Ndn,
        BaseKind::Dn,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BaseKind::Comb => "COMB",
            BaseKind::Ndrw => "NDRW",
            BaseKind::Drw => "DRW",
            BaseKind::Ndn => "NDN",
            BaseKind::Dn => "DN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "comb" => Some(BaseKind::Comb),
            "ndrw" => Some(BaseKind::Ndrw),
            "drw" => Some(BaseKind::Drw),
            "ndn" => Some(BaseKind::Ndn),
            "dn" => Some(BaseKind::Dn),
            _ => None,
        }
    }
}

/// A base parametrization optionally combined with the symmetry constraint
/// (weight sharing across the triangles of A, i.e. the formula is evaluated
/// on A + A^T).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LaplacianKind {
    pub base: BaseKind,
    pub symmetric: bool,
}

impl LaplacianKind {
    pub fn new(base: BaseKind, symmetric: bool) -> Self {
        LaplacianKind { base, symmetric }
    }

    pub fn plain(base: BaseKind) -> Self {
        Self::new(base, false)
    }

    /// All ten kinds, plain first, then the S- variants.
    pub fn all() -> Vec<LaplacianKind> {
        let mut kinds: Vec<LaplacianKind> =
            BaseKind::ALL.iter().map(|&b| Self::new(b, false)).collect();
        kinds.extend(BaseKind::ALL.iter().map(|&b| Self::new(b, true)));
        kinds
    }

    pub fn parse(s: &str) -> Option<Self> {
        let lower = s.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("s-") {
            BaseKind::parse(rest).map(|b| Self::new(b, true))
        } else {
            BaseKind::parse(&lower).map(|b| Self::new(b, false))
        }
    }
}

impl fmt::Display for LaplacianKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.symmetric {
            write!(f, "S-{}", self.base.label())
        } else {
            f.write_str(self.base.label())
        }
    }
}

/// Which axis a degree vector sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeAxis {
    /// d_u = sum_v A_vu, the diagonal of D(A).
    Columns,
    /// d_u = sum_v A_uv, the diagonal of D(A^T).
    Rows,
}

/// The free trainable matrix every Laplacian is built from. Entries are
/// nonnegative; the optimizer re-projects after each step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyParam {
    values: Array2<f64>,
}

impl AdjacencyParam {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::ShapeMismatch {
                expected: "square matrix".into(),
                got: format!("{}x{}", values.nrows(), values.ncols()),
            });
        }
        check_finite(&values)?;
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, &v)| v < 0.0) {
            return Err(Error::Config(format!(
                "adjacency entry ({row}, {col}) is negative"
            )));
        }
        Ok(AdjacencyParam { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    /// Clamp entries at zero. Run after every optimizer step.
    pub fn project_nonnegative(&mut self) {
        self.values.mapv_inplace(|v| v.max(0.0));
    }

    /// The matrix the parametrization formula is evaluated on: A itself, or
    /// A + A^T under the symmetry constraint.
    pub fn effective(&self, kind: LaplacianKind) -> Array2<f64> {
        if kind.symmetric {
            &self.values + &self.values.t()
        } else {
            self.values.clone()
        }
    }
}

/// A concrete Laplacian operator produced by one parametrization.
#[derive(Debug, Clone)]
pub struct LaplacianOperator {
    pub matrix: Array2<f64>,
    pub kind: LaplacianKind,
    pub rescaled: bool,
    /// (lambda_min, lambda_max) used by the rescaling; None when not rescaled.
    pub bounds: Option<(f64, f64)>,
}

impl LaplacianOperator {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Degree vector of `a` along the requested axis. Columns matches D(A),
/// rows matches D(A^T).
pub fn degree_matrix(a: &Array2<f64>, axis: DegreeAxis) -> Result<Array1<f64>> {
    check_finite(a)?;
    Ok(match axis {
        DegreeAxis::Columns => a.sum_axis(Axis(0)),
        DegreeAxis::Rows => a.sum_axis(Axis(1)),
    })
}

/// Build the Laplacian for `kind` from the trainable adjacency. In strict
/// mode a degree below the floor is an error; otherwise degrees are silently
/// clamped at `DEGREE_EPS` before inversion.
pub fn build_laplacian(
    a: &AdjacencyParam,
    kind: LaplacianKind,
    strict: bool,
) -> Result<LaplacianOperator> {
    let m = a.effective(kind);
    let matrix = build_from_effective(&m, kind.base, strict)?;
    Ok(LaplacianOperator {
        matrix,
        kind,
        rescaled: false,
        bounds: None,
    })
}

/// The base formula evaluated on an already-symmetrized (or plain) matrix.
pub fn build_from_effective(m: &Array2<f64>, base: BaseKind, strict: bool) -> Result<Array2<f64>> {
    let n = m.nrows();
    let row_deg = degree_matrix(m, DegreeAxis::Rows)?;
    let col_deg = degree_matrix(m, DegreeAxis::Columns)?;
    if strict {
        let needed: &[&Array1<f64>] = match base {
            BaseKind::Comb => &[&row_deg],
            BaseKind::Ndrw | BaseKind::Drw => &[&col_deg],
            BaseKind::Ndn | BaseKind::Dn => &[&row_deg, &col_deg],
        };
        for deg in needed {
            if let Some((node, &value)) = deg.indexed_iter().find(|(_, &v)| v < DEGREE_EPS) {
                return Err(Error::DegenerateDegree {
                    node,
                    value,
                    eps: DEGREE_EPS,
                });
            }
        }
    }
    let row_deg = row_deg.mapv(|v| v.max(DEGREE_EPS));
    let col_deg = col_deg.mapv(|v| v.max(DEGREE_EPS));

    let mut out = Array2::<f64>::zeros((n, n));
    match base {
        BaseKind::Comb => {
            out.assign(&(-m));
            for i in 0..n {
                out[[i, i]] += row_deg[i];
            }
        }
        BaseKind::Ndrw => {
            for i in 0..n {
                for j in 0..n {
                    out[[i, j]] = m[[i, j]] / col_deg[j];
                }
            }
        }
        BaseKind::Drw => {
            for i in 0..n {
                for j in 0..n {
                    out[[i, j]] = f64::from(i == j) - m[[i, j]] / col_deg[j];
                }
            }
        }
        BaseKind::Ndn => {
            for i in 0..n {
                for j in 0..n {
                    out[[i, j]] = m[[i, j]] / (row_deg[i] * col_deg[j]).sqrt();
                }
            }
        }
        BaseKind::Dn => {
            for i in 0..n {
                for j in 0..n {
                    out[[i, j]] =
                        f64::from(i == j) - m[[i, j]] / (row_deg[i] * col_deg[j]).sqrt();
                }
            }
        }
    }
    Ok(out)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn extreme_eigenvalues(m: &Array2<f64>) -> Result<(f64, f64)> {
    check_finite(m)?;
    let asymmetry = max_asymmetry(m);
    if asymmetry > 1e-10 {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let eig = symmetric_eigenvalues(m);
    Ok((eig[0], *eig.last().expect("non-empty matrix")))
}

/// Affine map 2(L - lambda_min I)/(lambda_max - lambda_min) - I. Spectral
/// bounds come from the symmetric part (L + L^T)/2 so the map is defined for
/// the non-symmetric random-walk operators as well.
pub fn rescale_spectrum(l: &LaplacianOperator) -> Result<LaplacianOperator> {
    let (matrix, bounds) = rescale_matrix(&l.matrix)?;
    Ok(LaplacianOperator {
        matrix,
        kind: l.kind,
        rescaled: true,
        bounds: Some(bounds),
    })
}

/// Rescaling on a raw matrix; returns the mapped matrix and the bounds used.
pub fn rescale_matrix(m: &Array2<f64>) -> Result<(Array2<f64>, (f64, f64))> {
    let sym = 0.5 * (m + &m.t());
    let (lo, hi) = extreme_eigenvalues(&sym)?;
    if hi - lo < 1e-9 {
        return Err(Error::DegenerateSpectrum {
            lambda_min: lo,
            lambda_max: hi,
        });
    }
    let scale = 2.0 / (hi - lo);
    let n = m.nrows();
    let mut out = m.mapv(|v| v * scale);
    let shift = scale * lo + 1.0;
    for i in 0..n {
        out[[i, i]] -= shift;
    }
    Ok((out, (lo, hi)))
}

/// Derivative of the rescaled operator w.r.t. the raw one, entrywise constant
/// under the frozen-bounds convention the backward pass uses.
pub fn rescale_pullback_factor(bounds: (f64, f64)) -> f64 {
    2.0 / (bounds.1 - bounds.0)
}

/// Diagnostic: worst deviation of an unrescaled operator from its defining
/// sum invariant (combinatorial rows sum to 0, random-walk columns to 1 or
/// 0). Zero for the normalized kinds, which have no sum invariant.
pub fn laplacian_drift(op: &LaplacianOperator) -> f64 {
    if op.rescaled {
        return 0.0;
    }
    let m = &op.matrix;
    match op.kind.base {
        BaseKind::Comb => m
            .rows()
            .into_iter()
            .fold(0.0f64, |acc, r| acc.max(r.sum().abs())),
        BaseKind::Ndrw => m
            .columns()
            .into_iter()
            .fold(0.0f64, |acc, c| acc.max((c.sum() - 1.0).abs())),
        BaseKind::Drw => m
            .columns()
            .into_iter()
            .fold(0.0f64, |acc, c| acc.max(c.sum().abs())),
        BaseKind::Ndn | BaseKind::Dn => 0.0,
    }
}

pub(crate) fn check_finite(a: &Array2<f64>) -> Result<()> {
    if let Some(((row, col), _)) = a.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }
    Ok(())
}

pub(crate) fn max_asymmetry(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Text format: first line n, then n rows of n space-separated reals. The
// Laplacian dump carries one leading comment line with its metadata.
// ---------------------------------------------------------------------------

pub fn format_matrix(a: &Array2<f64>) -> String {
    let mut out = String::new();
    out.push_str(&format!("{}\n", a.nrows()));
    for row in a.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_adjacency(path: &Path, a: &Array2<f64>) -> Result<()> {
    std::fs::write(path, format_matrix(a)).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_laplacian_dump(path: &Path, op: &LaplacianOperator) -> Result<()> {
    let (lmin, lmax) = op.bounds.unwrap_or((f64::NAN, f64::NAN));
    let header = format!(
        "# kind={} rescaled={} lmin={} lmax={}\n",
        op.kind,
        u8::from(op.rescaled),
        lmin,
        lmax
    );
    std::fs::write(path, header + &format_matrix(&op.matrix))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a matrix in the text format, skipping leading `#` comment lines.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|_| Error::MissingFile(name.clone()))?;
    parse_matrix(&text, &name)
}

pub fn parse_matrix(text: &str, name: &str) -> Result<Array2<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (line_no, first) = lines.next().ok_or_else(|| Error::Parse {
        file: name.into(),
        line: 1,
        message: "empty matrix file".into(),
    })?;
    let n: usize = first.trim().parse().map_err(|_| Error::Parse {
        file: name.into(),
        line: line_no + 1,
        message: format!("expected node count, got {first:?}"),
    })?;
    let mut out = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let (line_no, line) = lines.next().ok_or_else(|| Error::Parse {
            file: name.into(),
            line: 0,
            message: format!("expected {n} rows, found {i}"),
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != n {
            return Err(Error::Parse {
                file: name.into(),
                line: line_no + 1,
                message: format!("expected {n} values, got {}", fields.len()),
            });
        }
        for (j, f) in fields.iter().enumerate() {
            out[[i, j]] = f.parse().map_err(|_| Error::Parse {
                file: name.into(),
                line: line_no + 1,
                message: format!("bad value {f:?}"),
            })?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn adj(values: Array2<f64>) -> AdjacencyParam {
        AdjacencyParam::new(values).unwrap()
    }

    fn random_adjacency(rng: &mut ChaCha8Rng, n: usize) -> AdjacencyParam {
        let mut m = Array2::zeros((n, n));
        for v in m.iter_mut() {
            *v = rng.random_range(0.05..1.0);
        }
        adj(m)
    }

    #[test]
    fn degree_of_permutation_matrix() {
        let a = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let d = degree_matrix(&a, DegreeAxis::Columns).unwrap();
        assert_eq!(d.to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn degree_axes_disagree_on_asymmetric_input() {
        let a = arr2(&[[0.0, 2.0], [0.0, 0.0]]);
        let cols = degree_matrix(&a, DegreeAxis::Columns).unwrap();
        let rows = degree_matrix(&a, DegreeAxis::Rows).unwrap();
        assert_eq!(cols.to_vec(), vec![0.0, 2.0]);
        assert_eq!(rows.to_vec(), vec![2.0, 0.0]);
    }

    #[test]
    fn degree_of_identity() {
        let a = Array2::<f64>::eye(3);
        let d = degree_matrix(&a, DegreeAxis::Columns).unwrap();
        assert_eq!(d.to_vec(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn degree_rejects_non_finite() {
        let a = arr2(&[[0.0, f64::NAN], [1.0, 0.0]]);
        assert!(matches!(
            degree_matrix(&a, DegreeAxis::Columns),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn comb_on_two_path() {
        let a = adj(arr2(&[[0.0, 1.0], [1.0, 0.0]]));
        let l = build_laplacian(&a, LaplacianKind::plain(BaseKind::Comb), false).unwrap();
        assert_eq!(l.matrix, arr2(&[[1.0, -1.0], [-1.0, 1.0]]));
    }

    #[test]
    fn ndrw_on_two_path() {
        let a = adj(arr2(&[[0.0, 1.0], [1.0, 0.0]]));
        let l = build_laplacian(&a, LaplacianKind::plain(BaseKind::Ndrw), false).unwrap();
        assert_eq!(l.matrix, arr2(&[[0.0, 1.0], [1.0, 0.0]]));
    }

    #[test]
    fn drw_on_two_path() {
        let a = adj(arr2(&[[0.0, 1.0], [1.0, 0.0]]));
        let l = build_laplacian(&a, LaplacianKind::plain(BaseKind::Drw), false).unwrap();
        assert_eq!(l.matrix, arr2(&[[1.0, -1.0], [-1.0, 1.0]]));
    }

    #[test]
    fn empty_graph_is_degenerate_in_strict_mode() {
        let a = adj(Array2::zeros((3, 3)));
        for kind in LaplacianKind::all() {
            assert!(matches!(
                build_laplacian(&a, kind, true),
                Err(Error::DegenerateDegree { .. })
            ));
        }
    }

    #[test]
    fn row_and_column_sum_invariants_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..100 {
            let n = 2 + (trial % 14);
            let a = random_adjacency(&mut rng, n);
            for kind in LaplacianKind::all() {
                let l = build_laplacian(&a, kind, true).unwrap();
                match kind.base {
                    BaseKind::Comb => {
                        for row in l.matrix.rows() {
                            assert!(row.sum().abs() < 1e-10);
                        }
                    }
                    BaseKind::Ndrw => {
                        for col in l.matrix.columns() {
                            assert!((col.sum() - 1.0).abs() < 1e-10);
                        }
                    }
                    BaseKind::Drw => {
                        for col in l.matrix.columns() {
                            assert!(col.sum().abs() < 1e-10);
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn symmetric_kind_equals_plain_kind_on_symmetrized_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_adjacency(&mut rng, 6);
            let summed = adj(a.values() + &a.values().t());
            for base in BaseKind::ALL {
                let s = build_laplacian(&a, LaplacianKind::new(base, true), false).unwrap();
                let p = build_laplacian(&summed, LaplacianKind::plain(base), false).unwrap();
                for (x, y) in s.matrix.iter().zip(p.matrix.iter()) {
                    assert_abs_diff_eq!(x, y, epsilon = 1e-12);
                }
            }
        }
    }

    // S-NDRW / S-DRW column-normalize a symmetric matrix, which is only
    // entrywise symmetric when all degrees agree; the entrywise check applies
    // to the kinds where it is an algebraic identity.
    #[test]
    fn structurally_symmetric_kinds_produce_symmetric_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_adjacency(&mut rng, 5);
            for base in [BaseKind::Comb, BaseKind::Ndn, BaseKind::Dn] {
                let l = build_laplacian(&a, LaplacianKind::new(base, true), false).unwrap();
                assert!(max_asymmetry(&l.matrix) < 1e-12);
            }
        }
    }

    #[test]
    fn ndn_complements_dn() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_adjacency(&mut rng, 7);
        let ndn = build_laplacian(&a, LaplacianKind::plain(BaseKind::Ndn), false).unwrap();
        let dn = build_laplacian(&a, LaplacianKind::plain(BaseKind::Dn), false).unwrap();
        let sum = &ndn.matrix + &dn.matrix;
        for ((i, j), v) in sum.indexed_iter() {
            let expected = f64::from(i == j);
            assert_abs_diff_eq!(*v, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn extreme_eigenvalues_of_two_path_comb() {
        let m = arr2(&[[1.0, -1.0], [-1.0, 1.0]]);
        let (lo, hi) = extreme_eigenvalues(&m).unwrap();
        assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn extreme_eigenvalues_of_identity() {
        let m = Array2::<f64>::eye(4);
        let (lo, hi) = extreme_eigenvalues(&m).unwrap();
        assert_eq!((lo, hi), (1.0, 1.0));
    }

    #[test]
    fn extreme_eigenvalues_of_diagonal() {
        let m = Array2::from_diag(&ndarray::arr1(&[-3.0, 5.0]));
        let (lo, hi) = extreme_eigenvalues(&m).unwrap();
        assert_eq!((lo, hi), (-3.0, 5.0));
    }

    #[test]
    fn extreme_eigenvalues_rejects_asymmetric_input() {
        let m = arr2(&[[0.0, 1.0], [0.0, 0.0]]);
        assert!(matches!(
            extreme_eigenvalues(&m),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn rescale_two_path_comb() {
        let a = adj(arr2(&[[0.0, 1.0], [1.0, 0.0]]));
        let l = build_laplacian(&a, LaplacianKind::plain(BaseKind::Comb), false).unwrap();
        let r = rescale_spectrum(&l).unwrap();
        let expected = arr2(&[[0.0, -1.0], [-1.0, 0.0]]);
        for (x, y) in r.matrix.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert!(r.rescaled);
        let (lo, hi) = r.bounds.unwrap();
        assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rescale_rejects_constant_spectrum() {
        let l = LaplacianOperator {
            matrix: Array2::<f64>::eye(3),
            kind: LaplacianKind::plain(BaseKind::Comb),
            rescaled: false,
            bounds: None,
        };
        assert!(matches!(
            rescale_spectrum(&l),
            Err(Error::DegenerateSpectrum { .. })
        ));
    }

    #[test]
    fn rescaled_spectrum_lands_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let mut m = Array2::zeros((5, 5));
            for i in 0..5 {
                for j in i..5 {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    m[[i, j]] = v;
                    m[[j, i]] = v;
                }
            }
            let (out, _) = match rescale_matrix(&m) {
                Ok(r) => r,
                Err(Error::DegenerateSpectrum { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            let (lo, hi) = extreme_eigenvalues(&out).unwrap();
            assert!(lo >= -1.0 - 1e-8, "lo = {lo}");
            assert!(hi <= 1.0 + 1e-8, "hi = {hi}");
        }
    }

    #[test]
    fn matrix_text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        let a = arr2(&[[0.0, 0.125], [std::f64::consts::PI, 1e-17]]);
        write_adjacency(&path, &a).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn laplacian_dump_carries_header_and_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.txt");
        let a = adj(arr2(&[[0.0, 1.0], [1.0, 0.0]]));
        let l = build_laplacian(&a, LaplacianKind::new(BaseKind::Ndrw, true), false).unwrap();
        let r = rescale_spectrum(&l).unwrap();
        write_laplacian_dump(&path, &r).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# kind=S-NDRW rescaled=1 lmin="));
        let back = read_matrix(&path).unwrap();
        assert_eq!(back, r.matrix);
    }

    #[test]
    fn parse_rejects_malformed_value() {
        let err = parse_matrix("2\n0 1\n0 x\n", "bad.txt").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other}"),
        }
    }
}
