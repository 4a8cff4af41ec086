//! Coordinator-side numerics: combine partner SSCPs, solve the weighted
//! least-squares system, and derive dispersion, covariances and convergence.

use crate::error::{DraError, Result};
use crate::matrix::Matrix;
use crate::model::Family;
use crate::scalar::Scalar;
use crate::sscp::SscpMatrix;

/// Relative pivot size below which a column counts as aliased.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Condition numbers above this are logged as a collinearity warning.
pub const CONDITION_WARNING: f64 = 1e10;

/// Coefficients below this magnitude use the absolute convergence branch.
pub const ABSOLUTE_BRANCH_CUTOFF: f64 = 0.01;

/// Sums partner SSCPs in ascending partner order, so the result does not
/// depend on arrival order.
pub fn combine_sscp<S: Scalar>(parts: &[(u32, SscpMatrix<S>)]) -> Result<SscpMatrix<S>> {
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by_key(|&i| parts[i].0);
    let (&first, rest) = order
        .split_first()
        .ok_or_else(|| DraError::Protocol("no SSCP parts to combine".into()))?;
    let mut total = parts[first].1.clone();
    for &i in rest {
        let (dp, part) = &parts[i];
        total.accumulate(part).map_err(|e| {
            DraError::Protocol(format!("data partner {dp} sent an incompatible SSCP: {e}"))
        })?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution<S> {
    pub beta: Vec<S>,
    pub xpx_inverse: Matrix<S>,
    /// `ỹᵀW̃ỹ − βᵀZᵀW̃ỹ`.
    pub sse_working: S,
}

/// Lower Cholesky factor of a symmetric positive definite matrix, taken in
/// column order so an aliased column is reported by name.
fn cholesky<S: Scalar>(a: &Matrix<S>, labels: &[String]) -> Result<Matrix<S>> {
    let n = a.rows();
    let tol = S::lit(PIVOT_TOLERANCE);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let diag = a[(j, j)];
        let mut d = diag;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > S::zero()) || !(d > tol * diag) {
            return Err(DraError::Collinearity {
                column: labels[j].clone(),
            });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

fn lower_inverse<S: Scalar>(l: &Matrix<S>) -> Matrix<S> {
    let n = l.rows();
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = S::one() / l[(j, j)];
        for i in (j + 1)..n {
            let mut s = S::zero();
            for k in j..i {
                s += l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s / l[(i, i)];
        }
    }
    inv
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
pub fn spd_inverse<S: Scalar>(a: &Matrix<S>, labels: &[String]) -> Result<Matrix<S>> {
    let l = cholesky(a, labels)?;
    let li = lower_inverse(&l);
    let n = a.rows();
    let mut inv = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut s = S::zero();
            for k in j..n {
                s += li[(k, i)] * li[(k, j)];
            }
            inv[(i, j)] = s;
        }
    }
    inv.symmetrize_from_upper();
    Ok(inv)
}

/// Solves `(ZᵀW̃Z) β = ZᵀW̃ỹ` from a combined SSCP whose last column is the
/// working outcome.
pub fn solve_wls<S: Scalar>(sscp: &SscpMatrix<S>) -> Result<WlsSolution<S>> {
    if !sscp.has_outcome() {
        return Err(DraError::Protocol("SSCP matrix lacks the working-outcome column".into()));
    }
    let labels = sscp.design_labels();
    let p = labels.len();
    let xpx = sscp.cross_product_block();
    let xpy: Vec<S> = (0..p).map(|i| sscp.get(i, p)).collect();
    let ypy = sscp.get(p, p);

    let l = cholesky(&xpx, labels)?;
    let mut u = vec![S::zero(); p];
    for i in 0..p {
        let mut s = xpy[i];
        for k in 0..i {
            s -= l[(i, k)] * u[k];
        }
        u[i] = s / l[(i, i)];
    }
    let mut beta = vec![S::zero(); p];
    for i in (0..p).rev() {
        let mut s = u[i];
        for k in (i + 1)..p {
            s -= l[(k, i)] * beta[k];
        }
        beta[i] = s / l[(i, i)];
    }
    let li = lower_inverse(&l);
    let mut inv = Matrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let mut s = S::zero();
            for k in j..p {
                s += li[(k, i)] * li[(k, j)];
            }
            inv[(i, j)] = s;
        }
    }
    inv.symmetrize_from_upper();
    let fitted: S = beta.iter().zip(&xpy).map(|(&b, &c)| b * c).sum();
    Ok(WlsSolution {
        beta,
        xpx_inverse: inv,
        sse_working: ypy - fitted,
    })
}

/// `σ̂² = SSE / (N − p)` for linear models, one for logistic.
pub fn estimate_dispersion<S: Scalar>(family: Family, sse: S, n_obs: S, p: usize) -> Result<S> {
    let p_s = S::from_usize(p).expect("parameter count fits");
    if !(n_obs > p_s) {
        return Err(DraError::InsufficientData(format!(
            "{} observations for {p} parameters",
            n_obs.to_f64_lossless()
        )));
    }
    Ok(match family {
        Family::Linear => sse / (n_obs - p_s),
        Family::Logistic => S::one(),
    })
}

/// `φ (ZᵀW̃Z)⁻¹`.
pub fn model_covariance<S: Scalar>(xpx_inverse: &Matrix<S>, phi: S) -> Result<Matrix<S>> {
    if !xpx_inverse.is_square() {
        return Err(DraError::Protocol("inverse cross-product matrix is not square".into()));
    }
    let cov = xpx_inverse.scale(phi);
    if let Some(i) = cov.diagonal().iter().position(|&d| !(d >= S::zero())) {
        return Err(DraError::NumericalFailure(format!(
            "covariance diagonal entry {i} is negative"
        )));
    }
    Ok(cov)
}

/// Sandwich `I⁻¹ I₁ I⁻¹` with `I₁ = N/(N−p) Σ_k SSCP(Z_k, W_kᴴ)`.
///
/// `inv_information` is the model-based covariance `φ (ZᵀW̃Z)⁻¹`; `middle` is
/// the unscaled sum of the partners' robust SSCPs.
pub fn robust_covariance<S: Scalar>(
    inv_information: &Matrix<S>,
    middle: &SscpMatrix<S>,
    n_obs: S,
    p: usize,
) -> Result<Matrix<S>> {
    let d = inv_information.rows();
    if !inv_information.is_square() || middle.has_outcome() || middle.dim() != d {
        return Err(DraError::Protocol(format!(
            "robust SSCP has dimension {}, expected {d}",
            middle.dim()
        )));
    }
    let p_s = S::from_usize(p).expect("parameter count fits");
    if !(n_obs > p_s) {
        return Err(DraError::InsufficientData("N must exceed p for the HC1 factor".into()));
    }
    let hc1 = n_obs / (n_obs - p_s);
    let i1 = middle.values().scale(hc1);
    let mut out = inv_information.matmul(&i1).matmul(inv_information);
    out.symmetrize_from_upper();
    Ok(out)
}

/// Relative change per coefficient, absolute where the previous value is
/// below 0.01 in magnitude. Converged iff `max |δ| < xconv`.
pub fn check_convergence<S: Scalar>(prev: &[S], next: &[S], xconv: S) -> (bool, Vec<S>) {
    assert_eq!(prev.len(), next.len(), "coefficient vectors differ in length");
    let cutoff = S::lit(ABSOLUTE_BRANCH_CUTOFF);
    let deltas: Vec<S> = prev
        .iter()
        .zip(next)
        .map(|(&b0, &b1)| {
            if b0.abs() < cutoff {
                b1 - b0
            } else {
                (b1 - b0) / b0
            }
        })
        .collect();
    let converged = max_abs(&deltas) < xconv;
    (converged, deltas)
}

pub fn max_abs<S: Scalar>(values: &[S]) -> S {
    values.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues<S: Scalar>(a: &Matrix<S>) -> Vec<S> {
    let n = a.rows();
    let mut m = a.clone();
    let eps = S::epsilon();
    for _sweep in 0..100 {
        let mut off = S::zero();
        let mut scale = S::zero();
        for i in 0..n {
            scale += m[(i, i)] * m[(i, i)];
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off <= eps * eps * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == S::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (S::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    m.diagonal()
}

/// Ratio of extreme eigenvalues of the unit-diagonal scaled `ZᵀW̃Z`; infinite
/// when the block is numerically singular.
pub fn condition_diagnostic<S: Scalar>(sscp: &SscpMatrix<S>) -> Result<S> {
    let labels = sscp.design_labels();
    let a = sscp.cross_product_block();
    let n = a.rows();
    let diag = a.diagonal();
    if let Some(j) = diag.iter().position(|&d| !(d > S::zero())) {
        return Err(DraError::Collinearity {
            column: labels[j].clone(),
        });
    }
    let mut scaled = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] = a[(i, j)] / (diag[i].sqrt() * diag[j].sqrt());
        }
    }
    let eig = symmetric_eigenvalues(&scaled);
    let max = eig.iter().copied().fold(S::neg_infinity(), S::max);
    let min = eig.iter().copied().fold(S::infinity(), S::min);
    let n_s = S::from_usize(n).expect("dimension fits");
    if min <= max * n_s * S::epsilon() {
        return Ok(S::infinity());
    }
    Ok(max / min)
}

/// Coefficients and bookkeeping for the IRLS loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationState<S> {
    pub beta: Vec<S>,
    pub iteration: usize,
    pub deltas: Vec<S>,
    pub converged: bool,
    pub history: Vec<HistoryEntry<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry<S> {
    pub iteration: usize,
    pub beta: Vec<S>,
    /// `None` for the starting values.
    pub max_abs_delta: Option<S>,
}

impl<S: Scalar> IterationState<S> {
    pub fn new(beta0: Vec<S>) -> Self {
        Self {
            history: vec![HistoryEntry {
                iteration: 0,
                beta: beta0.clone(),
                max_abs_delta: None,
            }],
            deltas: vec![S::zero(); beta0.len()],
            beta: beta0,
            iteration: 0,
            converged: false,
        }
    }

    /// Records `β_{m+1}` and evaluates the criterion against `β_m`. Linear
    /// models pass `force_converged` since one solve is exact.
    pub fn advance(&mut self, next: Vec<S>, xconv: S, force_converged: bool) {
        let (converged, deltas) = check_convergence(&self.beta, &next, xconv);
        self.iteration += 1;
        self.history.push(HistoryEntry {
            iteration: self.iteration,
            beta: next.clone(),
            max_abs_delta: Some(max_abs(&deltas)),
        });
        self.converged = force_converged || converged;
        self.deltas = deltas;
        self.beta = next;
    }

    pub fn max_abs_delta(&self) -> S {
        max_abs(&self.deltas)
    }
}

/// Everything the coordinator derives about the covariance of `β̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceBundle<S> {
    pub model_cov: Matrix<S>,
    pub robust_cov: Matrix<S>,
    pub xpx_inverse: Matrix<S>,
    pub dispersion: S,
    pub sigma2_hat: Option<S>,
}

impl<S: Scalar> CovarianceBundle<S> {
    pub fn std_errors(&self) -> Vec<S> {
        self.model_cov.diagonal().iter().map(|d| d.sqrt()).collect()
    }

    pub fn robust_std_errors(&self) -> Vec<S> {
        self.robust_cov.diagonal().iter().map(|d| d.max(S::zero()).sqrt()).collect()
    }
}
