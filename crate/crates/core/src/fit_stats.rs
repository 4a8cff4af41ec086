//! Goodness-of-fit measures and tests assembled from per-site sums, plus the
//! coefficient inference table.

use crate::dist;
use crate::error::{DraError, Result};
use crate::matrix::Matrix;
use crate::model::{family_eval, softplus, Design, Family};
use crate::scalar::Scalar;
use crate::wire;

/// Additive per-site sums evaluated at one coefficient vector.
///
/// Outcome spread is carried as a local mean and centred sum of squares so
/// that combining sites does not cancel digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteStatContribution<S> {
    pub n_rows: S,
    pub sum_freq: S,
    /// `Σ freq·w`.
    pub sum_weights: S,
    pub mean_y: S,
    /// `Σ freq·w (Y − mean_y)²`.
    pub m2_y: S,
    pub sum_pred: S,
    pub sum_resid: S,
    /// `Σ freq·w (Y − μ)²`.
    pub sse: S,
    /// `Σ freq·w [Yη − log(1 + e^η)]`; zero for linear models.
    pub loglik: S,
}

const FIELDS: [&str; 9] = [
    "n_rows",
    "sum_freq",
    "sum_weights",
    "mean_y",
    "m2_y",
    "sum_pred",
    "sum_resid",
    "sse",
    "loglik",
];

impl<S: Scalar> SiteStatContribution<S> {
    pub fn compute(family: Family, design: &Design<S>, beta: &[S]) -> Result<Self> {
        let mut sum_w = S::zero();
        let mut sum_freq = S::zero();
        let mut sum_pred = S::zero();
        let mut sum_resid = S::zero();
        let mut sse = S::zero();
        let mut loglik = S::zero();
        for (row, &y) in design.rows.iter().zip(&design.outcomes) {
            let w = row.effective_weight();
            let eta = row.linear_predictor(beta);
            let mu = family_eval(family, eta)?.mu;
            let r = y - mu;
            sum_w += w;
            sum_freq += row.freq;
            sum_pred += w * mu;
            sum_resid += w * r;
            sse += w * r * r;
            if family == Family::Logistic {
                loglik += w * (y * eta - softplus(eta));
            }
        }
        let pairs = design
            .rows
            .iter()
            .zip(&design.outcomes)
            .map(|(r, &y)| (y, r.effective_weight()));
        let mean_y = crate::scalar::shifted_mean(pairs).unwrap_or(S::zero());
        let m2_y = design
            .rows
            .iter()
            .zip(&design.outcomes)
            .map(|(r, &y)| r.effective_weight() * (y - mean_y) * (y - mean_y))
            .sum();
        Ok(Self {
            n_rows: S::from_usize(design.len()).expect("row count fits"),
            sum_freq,
            sum_weights: sum_w,
            mean_y,
            m2_y,
            sum_pred,
            sum_resid,
            sse,
            loglik,
        })
    }

    fn values(&self) -> [S; 9] {
        [
            self.n_rows,
            self.sum_freq,
            self.sum_weights,
            self.mean_y,
            self.m2_y,
            self.sum_pred,
            self.sum_resid,
            self.sse,
            self.loglik,
        ]
    }

    /// Combines two sites, pooling the centred sums of squares.
    pub fn merge(&self, other: &Self) -> Self {
        let w = self.sum_weights + other.sum_weights;
        let (mean_y, m2_y) = if w > S::zero() {
            let d = other.mean_y - self.mean_y;
            (
                self.mean_y + d * other.sum_weights / w,
                self.m2_y + other.m2_y + d * d * self.sum_weights * other.sum_weights / w,
            )
        } else {
            (self.mean_y, self.m2_y + other.m2_y)
        };
        Self {
            n_rows: self.n_rows + other.n_rows,
            sum_freq: self.sum_freq + other.sum_freq,
            sum_weights: w,
            mean_y,
            m2_y,
            sum_pred: self.sum_pred + other.sum_pred,
            sum_resid: self.sum_resid + other.sum_resid,
            sse: self.sse + other.sse,
            loglik: self.loglik + other.loglik,
        }
    }

    /// Folds contributions in the given order (callers sort by partner id).
    pub fn combine(parts: &[Self]) -> Option<Self> {
        let (first, rest) = parts.split_first()?;
        Some(rest.iter().fold(*first, |acc, p| acc.merge(p)))
    }

    /// Uncorrected `Σ freq·w Y²`, used when the model has no intercept.
    pub fn uncorrected_ss(&self) -> S {
        self.m2_y + self.sum_weights * self.mean_y * self.mean_y
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let entries: Vec<(&str, S)> = FIELDS.iter().copied().zip(self.values()).collect();
        wire::write_named_values(&entries)
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let pairs = wire::read_named_values::<S>(bytes)?;
        let get = |name: &str| {
            pairs
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| DraError::Protocol(format!("site statistics lack `{name}`")))
        };
        Ok(Self {
            n_rows: get("n_rows")?,
            sum_freq: get("sum_freq")?,
            sum_weights: get("sum_weights")?,
            mean_y: get("mean_y")?,
            m2_y: get("m2_y")?,
            sum_pred: get("sum_pred")?,
            sum_resid: get("sum_resid")?,
            sse: get("sse")?,
            loglik: get("loglik")?,
        })
    }
}

/// Named goodness-of-fit measures in presentation order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitReport<S> {
    pub entries: Vec<(String, S)>,
}

impl<S: Scalar> FitReport<S> {
    pub fn push(&mut self, name: &str, value: S) {
        self.entries.push((name.to_string(), value));
    }

    pub fn get(&self, name: &str) -> Option<S> {
        self.entries.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

fn count<S: Scalar>(p: usize) -> S {
    S::from_usize(p).expect("count fits")
}

fn to_s<S: Scalar>(x: f64) -> S {
    S::from_f64(x).unwrap_or_else(S::nan)
}

/// Linear-model fit measures. `sst` is the corrected total sum of squares
/// when an intercept is present and the uncorrected one otherwise.
pub fn linear_fit_stats<S: Scalar>(
    sse: S,
    sst: S,
    n: S,
    p: usize,
    sigma2_hat: S,
    mean_y: S,
    intercept: bool,
) -> Result<FitReport<S>> {
    let p_s: S = count(p);
    if !(n > p_s) {
        return Err(DraError::InsufficientData(format!("N must exceed p = {p}")));
    }
    if !(sst > S::zero()) {
        return Err(DraError::DegenerateOutcome("total sum of squares is zero".into()));
    }
    let r2 = S::one() - sse / sst;
    let adj_num = if intercept { n - S::one() } else { n };
    let adj_r2 = S::one() - (S::one() - r2) * adj_num / (n - p_s);
    let two = S::lit(2.0);
    let log_term = n * (sse / n).ln();
    let aic = log_term + two * p_s;
    let sbc = log_term + p_s * n.ln();
    let q = n * sigma2_hat / sse;
    let sawa = log_term + two * (p_s + two) * q - two * q * q;
    let root_mse = sigma2_hat.sqrt();
    let mut r = FitReport::default();
    r.push("N", n);
    r.push("Parameters", p_s);
    r.push("SSE", sse);
    r.push("SST", sst);
    r.push("Root MSE", root_mse);
    r.push("Dependent Mean", mean_y);
    r.push("Coeff Var", S::lit(100.0) * root_mse / mean_y);
    r.push("R-Square", r2);
    r.push("Adj R-Sq", adj_r2);
    r.push("AIC", aic);
    r.push("SBC", sbc);
    r.push("BIC", sawa);
    r.push("Exact Fit", if sse > S::zero() { S::zero() } else { S::one() });
    Ok(r)
}

/// `W [ȳ ln ȳ + (1 − ȳ) ln(1 − ȳ)]`, the log likelihood of the intercept-only
/// model.
pub fn null_loglik<S: Scalar>(weight_total: S, ybar: S) -> Result<S> {
    if !(ybar > S::zero() && ybar < S::one()) {
        return Err(DraError::DegenerateOutcome(format!(
            "mean outcome {} leaves no events or no non-events",
            ybar.to_f64_lossless()
        )));
    }
    Ok(weight_total * (ybar * ybar.ln() + (S::one() - ybar) * (S::one() - ybar).ln()))
}

pub fn logistic_fit_stats<S: Scalar>(
    loglik: S,
    n: S,
    weight_total: S,
    p: usize,
    ybar: S,
) -> Result<FitReport<S>> {
    let p_s: S = count(p);
    if !(n > p_s + S::one()) {
        return Err(DraError::InsufficientData(format!("N must exceed p + 1 = {}", p + 1)));
    }
    let ll0 = null_loglik(weight_total, ybar)?;
    let two = S::lit(2.0);
    let m2ll = -two * loglik;
    let g_rsq = S::one() - (two * (ll0 - loglik) / n).exp();
    let max_r2 = S::one() - (two * ll0 / n).exp();
    let mut r = FitReport::default();
    r.push("N", n);
    r.push("Parameters", p_s);
    r.push("Log Likelihood", loglik);
    r.push("Null Log Likelihood", ll0);
    r.push("-2 Log L", m2ll);
    r.push("Deviance", m2ll);
    r.push("AIC", m2ll + two * p_s);
    r.push("AICC", m2ll + two * p_s * n / (n - p_s - S::one()));
    r.push("BIC", m2ll + p_s * n.ln());
    r.push("R-Square", g_rsq);
    r.push("Max-rescaled R-Square", g_rsq / max_r2);
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullTest<S> {
    pub chi_sq: S,
    pub df: usize,
    pub p_value: S,
}

/// Likelihood-ratio test of all non-intercept coefficients being zero.
pub fn global_null_test<S: Scalar>(loglik: S, loglik0: S, df: usize) -> Result<NullTest<S>> {
    let stat = S::lit(2.0) * (loglik - loglik0);
    if stat < S::lit(-2e-8) {
        return Err(DraError::NumericalFailure(format!(
            "likelihood-ratio statistic {} is negative",
            stat.to_f64_lossless()
        )));
    }
    let stat = stat.max(S::zero());
    let p = if df == 0 {
        1.0
    } else {
        dist::chi_square_sf(stat.to_f64_lossless(), df as f64)?
    };
    Ok(NullTest {
        chi_sq: stat,
        df,
        p_value: to_s(p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaTable<S> {
    pub df_model: usize,
    pub df_error: S,
    pub ss_model: S,
    pub ss_error: S,
    pub ss_total: S,
    pub ms_model: S,
    pub ms_error: S,
    pub f_value: S,
    pub p_value: S,
}

/// Model/error decomposition of `sst` (corrected with an intercept,
/// uncorrected without).
pub fn anova_table<S: Scalar>(sse: S, sst: S, n: S, p: usize, intercept: bool) -> Result<AnovaTable<S>> {
    let p_s: S = count(p);
    if !(n > p_s) {
        return Err(DraError::InsufficientData(format!("N must exceed p = {p}")));
    }
    if !(sst > S::zero()) {
        return Err(DraError::DegenerateOutcome("total sum of squares is zero".into()));
    }
    let df_model = if intercept { p - 1 } else { p };
    if df_model == 0 {
        return Err(DraError::Config("ANOVA needs at least one covariate".into()));
    }
    let df_error = n - p_s;
    let ss_model = (sst - sse).max(S::zero());
    let ms_model = ss_model / count(df_model);
    let ms_error = sse / df_error;
    let f = if sse > S::zero() { ms_model / ms_error } else { S::infinity() };
    let pv = dist::f_sf(f.to_f64_lossless(), df_model as f64, df_error.to_f64_lossless())?;
    Ok(AnovaTable {
        df_model,
        df_error,
        ss_model,
        ss_error: sse,
        ss_total: sst,
        ms_model,
        ms_error,
        f_value: f,
        p_value: to_s(pv),
    })
}

/// One coefficient with model-based and robust inference.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow<S> {
    pub label: String,
    pub estimate: S,
    pub std_error: S,
    pub statistic: S,
    pub p_value: S,
    pub lower: S,
    pub upper: S,
    pub robust_std_error: S,
    pub robust_statistic: S,
    pub robust_p_value: S,
    pub robust_lower: S,
    pub robust_upper: S,
}

struct Reference {
    df: Option<f64>,
    crit: f64,
}

impl Reference {
    fn p_value(&self, stat: f64) -> Result<f64> {
        match self.df {
            Some(df) => dist::t_two_sided(stat, df),
            None => Ok(dist::normal_two_sided(stat)),
        }
    }
}

fn triple<S: Scalar>(est: S, se: S, reference: &Reference) -> Result<(S, S, S, S)> {
    if !(se > S::zero()) {
        // Exact fit: no sampling variability to test against.
        return Ok((S::nan(), S::nan(), est, est));
    }
    let stat = est / se;
    let p = reference.p_value(stat.to_f64_lossless())?;
    let half = se * to_s::<S>(reference.crit);
    Ok((stat, to_s(p), est - half, est + half))
}

/// Estimates, standard errors, p-values and `1 − alpha` confidence limits.
/// Linear models use Student's t on `N − p` degrees of freedom, logistic
/// models the normal distribution.
#[allow(clippy::too_many_arguments)]
pub fn inference_table<S: Scalar>(
    labels: &[String],
    beta: &[S],
    model_cov: &Matrix<S>,
    robust_cov: &Matrix<S>,
    alpha: f64,
    family: Family,
    n: S,
    p: usize,
) -> Result<Vec<CoefficientRow<S>>> {
    let k = beta.len();
    if labels.len() != k || model_cov.rows() != k || robust_cov.rows() != k {
        return Err(DraError::Protocol("inference inputs have mismatched dimensions".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DraError::Config(format!("alpha {alpha} must lie in (0, 1)")));
    }
    let reference = match family {
        Family::Linear => {
            let df = n.to_f64_lossless() - p as f64;
            Reference {
                df: Some(df),
                crit: dist::t_quantile(1.0 - alpha / 2.0, df)?,
            }
        }
        Family::Logistic => Reference {
            df: None,
            crit: dist::normal_quantile(1.0 - alpha / 2.0),
        },
    };
    let mut rows = Vec::with_capacity(k);
    for i in 0..k {
        let se = model_cov[(i, i)].max(S::zero()).sqrt();
        let rse = robust_cov[(i, i)].max(S::zero()).sqrt();
        let (stat, pv, lo, hi) = triple(beta[i], se, &reference)?;
        let (rstat, rpv, rlo, rhi) = triple(beta[i], rse, &reference)?;
        rows.push(CoefficientRow {
            label: labels[i].clone(),
            estimate: beta[i],
            std_error: se,
            statistic: stat,
            p_value: pv,
            lower: lo,
            upper: hi,
            robust_std_error: rse,
            robust_statistic: rstat,
            robust_p_value: rpv,
            robust_lower: rlo,
            robust_upper: rhi,
        });
    }
    Ok(rows)
}
