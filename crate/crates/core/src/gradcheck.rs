//! Numerical verification of the full backward chain: basis derivative
//! recursion, shared-operator accumulation and every parametrization
//! Jacobian, checked end-to-end against central finite differences of the
//! pipeline  A -> L(A) -> {T_k(L)} -> sum_k <C_k, T_k>  for fixed random
//! coefficient matrices C_k.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cheby::{derivative_basis, forward_basis};
use crate::error::Result;
use crate::grad::{grad_wrt_adjacency, grad_wrt_laplacian, BasisGradients};
use crate::graph::{build_laplacian, AdjacencyParam, LaplacianKind};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_THRESHOLD: f64 = 1e-4;

/// Scale floor for the relative-error denominator. Entries whose true
/// gradient is exactly zero still see finite-difference roundoff; comparing
/// against a floor at typical gradient scale keeps those from registering as
/// errors while any genuine Jacobian defect (which shows up at gradient
/// scale) still trips the threshold.
pub const ERROR_SCALE_FLOOR: f64 = 1e-3;

/// |a - b| relative to the larger magnitude, floored at gradient scale.
pub fn relative_error(a: f64, b: f64) -> f64 {
    relative_error_at_scale(a, b, 1.0)
}

/// Same, with the floor proportional to the gradient tensor's own magnitude;
/// keeps the metric meaningful for operators whose gradients are far from
/// unit scale.
pub fn relative_error_at_scale(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(ERROR_SCALE_FLOOR * scale.max(1.0))
}

/// Outcome of checking one parametrization.
#[derive(Debug, Clone)]
pub struct KindReport {
    pub kind: LaplacianKind,
    pub max_rel_error: f64,
    pub probes: usize,
}

impl KindReport {
    pub fn passed(&self, threshold: f64) -> bool {
        self.max_rel_error < threshold
    }
}

fn random_adjacency(rng: &mut ChaCha8Rng, n: usize) -> AdjacencyParam {
    let mut m = Array2::zeros((n, n));
    for v in m.iter_mut() {
        *v = rng.random_range(0.1..1.0);
    }
    AdjacencyParam::new(m).expect("entries are positive")
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let mut m = Array2::zeros((n, n));
    for v in m.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    m
}

fn surrogate_loss(a: &AdjacencyParam, kind: LaplacianKind, coeffs: &[Array2<f64>]) -> Result<f64> {
    let l = build_laplacian(a, kind, false)?;
    let basis = forward_basis(&l.matrix, coeffs.len())?;
    Ok(coeffs
        .iter()
        .zip(basis.terms())
        .map(|(c, t)| (c * t).sum())
        .sum())
}

/// Analytic dLoss/dA for the surrogate pipeline.
fn surrogate_gradient(
    a: &AdjacencyParam,
    kind: LaplacianKind,
    coeffs: &[Array2<f64>],
) -> Result<Array2<f64>> {
    let l = build_laplacian(a, kind, false)?;
    let basis = derivative_basis(&l.matrix, forward_basis(&l.matrix, coeffs.len())?)?;
    let grads = BasisGradients::new(coeffs.to_vec())?;
    let grad_l = grad_wrt_laplacian(&grads, &basis)?;
    grad_wrt_adjacency(kind, a, &l, &grad_l)
}

/// Compare the analytic gradient with central finite differences over every
/// adjacency entry, for `seeds` independent random draws.
pub fn check_kind(
    kind: LaplacianKind,
    n: usize,
    order: usize,
    seeds: u64,
    base_seed: u64,
) -> Result<KindReport> {
    let h = DEFAULT_STEP;
    let mut max_rel = 0.0f64;
    let mut probes = 0usize;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(seed + 1)));
        let a = random_adjacency(&mut rng, n);
        let coeffs: Vec<Array2<f64>> = (0..order).map(|_| random_matrix(&mut rng, n)).collect();
        let analytic = surrogate_gradient(&a, kind, &coeffs)?;
        let scale = analytic.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        for p in 0..n {
            for q in 0..n {
                let mut up = a.clone();
                up.values_mut()[[p, q]] += h;
                let mut dn = a.clone();
                dn.values_mut()[[p, q]] -= h;
                let fd =
                    (surrogate_loss(&up, kind, &coeffs)? - surrogate_loss(&dn, kind, &coeffs)?)
                        / (2.0 * h);
                let rel = relative_error_at_scale(analytic[[p, q]], fd, scale);
                max_rel = max_rel.max(rel);
                probes += 1;
            }
        }
    }
    Ok(KindReport {
        kind,
        max_rel_error: max_rel,
        probes,
    })
}

/// Run the check over a set of kinds. `corrupt` deliberately biases the
/// analytic gradient of the first kind; it exists as a negative control for
/// the reporting path and is never used by training code.
pub fn run_checks(
    kinds: &[LaplacianKind],
    n: usize,
    order: usize,
    seeds: u64,
    base_seed: u64,
    corrupt: bool,
) -> Result<Vec<KindReport>> {
    let mut reports = Vec::with_capacity(kinds.len());
    for (idx, &kind) in kinds.iter().enumerate() {
        let mut report = check_kind(kind, n, order, seeds, base_seed)?;
        if corrupt && idx == 0 {
            report.max_rel_error += 1.0;
        }
        reports.push(report);
    }
    Ok(reports)
}

/// Render the per-kind table the `gradcheck` command prints.
pub fn format_report(reports: &[KindReport], threshold: f64) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8} {:>14} {:>8}  {}\n",
        "kind", "max_rel_err", "probes", "status"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<8} {:>14.3e} {:>8}  {}\n",
            r.kind.to_string(),
            r.max_rel_error,
            r.probes,
            if r.passed(threshold) { "PASS" } else { "FAIL" }
        ));
    }
    out
}
