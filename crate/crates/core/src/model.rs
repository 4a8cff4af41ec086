//! Per-record GLM arithmetic: family functions, working response and weight,
//! robust weights, design construction and local SSCP accumulation.
//!
//! Everything here is pure. A data partner calls these once per iteration on
//! its own rows; the coordinator never sees a [`DesignRow`].

use crate::config::ModelSpec;
use crate::dataset::AnalyticDataset;
use crate::error::{DraError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::sscp::{SscpMatrix, WORKING_OUTCOME_LABEL};

/// Outcome distribution with its canonical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Normal outcome, identity link, dispersion estimated from residuals.
    Linear,
    /// Bernoulli outcome, logit link, dispersion fixed at one.
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispersionMode {
    Estimated,
    FixedOne,
}

impl Family {
    /// Maps `regr_type_cd` (1 linear, 2 logistic).
    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(Family::Linear),
            2 => Ok(Family::Logistic),
            10 => Err(DraError::Config(
                "regr_type_cd=10 (Cox proportional hazards) is not supported".into(),
            )),
            other => Err(DraError::Config(format!("unknown regr_type_cd {other}"))),
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Family::Linear => 1,
            Family::Logistic => 2,
        }
    }

    pub fn dispersion_mode(self) -> DispersionMode {
        match self {
            Family::Linear => DispersionMode::Estimated,
            Family::Logistic => DispersionMode::FixedOne,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Logistic => "logistic",
        }
    }
}

/// Mean, mean derivative and variance at one linear predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyEval<S> {
    pub mu: S,
    pub mu_prime: S,
    pub variance: S,
    /// The logistic mean hit the probability floor or ceiling.
    pub clamped: bool,
}

/// Logistic function, evaluated without overflow on either side.
pub fn sigmoid<S: Scalar>(eta: S) -> S {
    if eta >= S::zero() {
        S::one() / (S::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (S::one() + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
pub fn softplus<S: Scalar>(eta: S) -> S {
    eta.max(S::zero()) + (-eta.abs()).exp().ln_1p()
}

pub fn family_eval<S: Scalar>(family: Family, eta: S) -> Result<FamilyEval<S>> {
    if !eta.is_finite() {
        return Err(DraError::Domain(format!("linear predictor {eta} is not finite")));
    }
    Ok(match family {
        Family::Linear => FamilyEval {
            mu: eta,
            mu_prime: S::one(),
            variance: S::one(),
            clamped: false,
        },
        Family::Logistic => {
            let floor = S::prob_floor();
            let ceil = S::one() - floor;
            let mu = sigmoid(eta);
            if mu < floor || mu > ceil {
                let mu = mu.max(floor).min(ceil);
                let v = mu * (S::one() - mu);
                FamilyEval {
                    mu,
                    mu_prime: v,
                    variance: v,
                    clamped: true,
                }
            } else {
                // σ(η)σ(−η) keeps full relative precision where 1 − μ would cancel.
                let v = mu * sigmoid(-eta);
                FamilyEval {
                    mu,
                    mu_prime: v,
                    variance: v,
                    clamped: false,
                }
            }
        }
    })
}

/// One design row `Z = 1 ∥ X` with its weight and frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow<S> {
    pub z: Vec<S>,
    pub weight: S,
    pub freq: S,
}

impl<S: Scalar> DesignRow<S> {
    pub fn effective_weight(&self) -> S {
        self.weight * self.freq
    }

    pub fn linear_predictor(&self, beta: &[S]) -> S {
        self.z.iter().zip(beta).fold(S::zero(), |acc, (&z, &b)| acc + z * b)
    }
}

/// A partner's full design: rows, outcomes and column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Design<S> {
    pub labels: Vec<String>,
    pub rows: Vec<DesignRow<S>>,
    pub outcomes: Vec<S>,
}

impl<S: Scalar> Design<S> {
    pub fn n_params(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Effective number of observations `Σ freq`.
    pub fn n_obs(&self) -> S {
        self.rows.iter().map(|r| r.freq).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkingRecord<S> {
    pub eta: S,
    pub mu: S,
    pub mu_prime: S,
    pub variance: S,
    pub y_tilde: S,
    pub w_tilde: S,
    pub degenerate: bool,
}

/// Working response and weight of one IRLS step.
pub fn working_transform<S: Scalar>(
    family: Family,
    row: &DesignRow<S>,
    outcome: S,
    beta: &[S],
) -> Result<WorkingRecord<S>> {
    if beta.len() != row.z.len() {
        return Err(DraError::Protocol(format!(
            "coefficient vector has {} entries, design row has {}",
            beta.len(),
            row.z.len()
        )));
    }
    let eta = row.linear_predictor(beta);
    let f = family_eval(family, eta)?;
    let w = row.effective_weight();
    Ok(match family {
        Family::Linear => WorkingRecord {
            eta,
            mu: f.mu,
            mu_prime: f.mu_prime,
            variance: f.variance,
            y_tilde: outcome,
            w_tilde: w,
            degenerate: false,
        },
        Family::Logistic => WorkingRecord {
            eta,
            mu: f.mu,
            mu_prime: f.mu_prime,
            variance: f.variance,
            y_tilde: (outcome - f.mu) / f.mu_prime + eta,
            w_tilde: w * f.mu_prime,
            degenerate: f.clamped,
        },
    })
}

/// Weight of the row in the robust middle matrix: `freq · w² (Y − μ)² / φ²`.
pub fn robust_weight<S: Scalar>(
    family: Family,
    row: &DesignRow<S>,
    outcome: S,
    beta_hat: &[S],
    phi: S,
) -> Result<S> {
    if !(phi > S::zero()) {
        return Err(DraError::InvalidDispersion(phi.to_f64_lossless()));
    }
    if beta_hat.len() != row.z.len() {
        return Err(DraError::Protocol("coefficient vector length mismatch".into()));
    }
    if row.weight == S::zero() || row.freq == S::zero() {
        return Ok(S::zero());
    }
    let mu = family_eval(family, row.linear_predictor(beta_hat))?.mu;
    let r = row.weight * (outcome - mu) / phi;
    Ok(row.freq * r * r)
}

fn lookup(data_cols: &[String], name: &str) -> Result<usize> {
    data_cols
        .iter()
        .position(|c| c.eq_ignore_ascii_case(name))
        .ok_or_else(|| DraError::Config(format!("variable `{name}` not found in dataset")))
}

/// Builds the design for `spec` from a partner's dataset.
pub fn build_design<S: Scalar>(data: &AnalyticDataset<S>, spec: &ModelSpec) -> Result<Design<S>> {
    let cols = data.columns();
    let x_idx: Vec<usize> = spec
        .independent_vars
        .iter()
        .map(|v| lookup(cols, v))
        .collect::<Result<_>>()?;
    let y_idx = lookup(cols, &spec.dependent_var)?;
    let freq_idx = spec.freq_var.as_deref().map(|v| lookup(cols, v)).transpose()?;
    let weight_idx = spec.weight_var.as_deref().map(|v| lookup(cols, v)).transpose()?;

    let mut rows = Vec::with_capacity(data.n_rows());
    let mut outcomes = Vec::with_capacity(data.n_rows());
    for (i, raw) in data.rows().iter().enumerate() {
        let row_no = i + 1;
        let cell = |j: usize| -> Result<S> {
            let v = raw[j];
            if v.is_finite() {
                Ok(v)
            } else {
                Err(DraError::data(row_no, &cols[j], "missing or non-finite value"))
            }
        };
        let mut z = Vec::with_capacity(spec.n_params());
        if spec.intercept {
            z.push(S::one());
        }
        for &j in &x_idx {
            z.push(cell(j)?);
        }
        let y = cell(y_idx)?;
        if spec.family == Family::Logistic && y != S::zero() && y != S::one() {
            return Err(DraError::data(row_no, &cols[y_idx], "logistic outcome must be 0 or 1"));
        }
        let freq = match freq_idx {
            Some(j) => {
                let f = cell(j)?;
                if f < S::zero() || f.fract() != S::zero() {
                    return Err(DraError::data(row_no, &cols[j], "frequency must be a non-negative integer"));
                }
                f
            }
            None => S::one(),
        };
        let weight = match weight_idx {
            Some(j) => {
                let w = cell(j)?;
                if w < S::zero() {
                    return Err(DraError::data(row_no, &cols[j], "weight must be non-negative"));
                }
                w
            }
            None => S::one(),
        };
        rows.push(DesignRow { z, weight, freq });
        outcomes.push(y);
    }
    Ok(Design {
        labels: spec.parameter_labels(),
        rows,
        outcomes,
    })
}

/// How SSCP entries are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Summation {
    /// Plain left-to-right sums in row order.
    #[default]
    Plain,
    /// Kahan-compensated sums.
    Compensated,
}

/// `SSCP(Z ∥ ỹ, W̃)`, or `SSCP(Z, W)` when `y_tilde` is `None`.
pub fn local_sscp<S: Scalar>(
    design: &Design<S>,
    y_tilde: Option<&[S]>,
    weights: &[S],
) -> Result<SscpMatrix<S>> {
    local_sscp_with(design, y_tilde, weights, Summation::Plain)
}

pub fn local_sscp_with<S: Scalar>(
    design: &Design<S>,
    y_tilde: Option<&[S]>,
    weights: &[S],
    summation: Summation,
) -> Result<SscpMatrix<S>> {
    let n = design.len();
    if weights.len() != n || y_tilde.is_some_and(|y| y.len() != n) {
        return Err(DraError::Protocol("SSCP inputs have mismatched lengths".into()));
    }
    let p = design.n_params();
    let d = p + usize::from(y_tilde.is_some());
    let mut labels = design.labels.clone();
    if y_tilde.is_some() {
        labels.push(WORKING_OUTCOME_LABEL.to_string());
    }

    let mut sums = Matrix::zeros(d, d);
    let mut comp = Matrix::zeros(d, d);
    let mut sum_weights = S::zero();
    let mut n_obs = S::zero();
    let mut a = vec![S::zero(); d];
    for (i, row) in design.rows.iter().enumerate() {
        if row.z.len() != p {
            return Err(DraError::Protocol(format!("design row {} has the wrong arity", i + 1)));
        }
        a[..p].copy_from_slice(&row.z);
        if let Some(y) = y_tilde {
            a[p] = y[i];
        }
        let w = weights[i];
        for s in 0..d {
            let wa = w * a[s];
            for t in s..d {
                let term = wa * a[t];
                match summation {
                    Summation::Plain => sums[(s, t)] += term,
                    Summation::Compensated => {
                        let y = term - comp[(s, t)];
                        let total = sums[(s, t)] + y;
                        comp[(s, t)] = (total - sums[(s, t)]) - y;
                        sums[(s, t)] = total;
                    }
                }
            }
        }
        sum_weights += w;
        n_obs += row.freq;
    }
    sums.symmetrize_from_upper();
    SscpMatrix::new(labels, sums, n_obs, sum_weights)
}
