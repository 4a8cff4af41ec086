//! Reference fit on pooled individual-level data.
//!
//! Shares only data parsing and the family link functions with the
//! federated path: cross products are accumulated row by row, systems are
//! solved by Gauss-Jordan elimination, and the diagnostics are computed from
//! individual predictions.

use std::cmp::Ordering;

use crate::config::ModelSpec;
use crate::dataset::AnalyticDataset;
use crate::dist;
use crate::error::{DraError, Result};
use crate::fit_stats::{anova_table, global_null_test, linear_fit_stats, logistic_fit_stats, AnovaTable, FitReport, NullTest};
use crate::matrix::Matrix;
use crate::model::{build_design, family_eval, Design, Family};
use crate::summaries::{assign_bins, BinningPolicy, RocCurve, RocPoint};

#[derive(Debug, Clone)]
pub struct OracleHl {
    pub chi_sq: f64,
    pub df: usize,
    pub p_value: f64,
    pub groups: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct OracleFit {
    pub labels: Vec<String>,
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Coefficients after each solve, starting values first.
    pub history: Vec<Vec<f64>>,
    pub model_cov: Matrix<f64>,
    pub robust_cov: Matrix<f64>,
    pub model_se: Vec<f64>,
    pub robust_se: Vec<f64>,
    pub n: f64,
    pub sse: f64,
    pub sst: f64,
    pub loglik: f64,
    pub fit: FitReport<f64>,
    pub anova: Option<AnovaTable<f64>>,
    pub null_test: Option<NullTest<f64>>,
    /// Exact ROC with one threshold per distinct prediction.
    pub roc: Option<RocCurve<f64>>,
    /// Mann-Whitney estimate of the area under the ROC curve.
    pub auc_rank: Option<f64>,
    pub hl: Option<OracleHl>,
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &Matrix<f64>) -> Result<Matrix<f64>> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = a.row(i).to_vec();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap_or(Ordering::Equal))
            .expect("nonempty range");
        if !(m[piv][c].abs() > 1e-13 * scale) {
            return Err(DraError::NumericalFailure(format!("pivot {c} vanished")));
        }
        m.swap(c, piv);
        let d = m[c][c];
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    let rows: Vec<Vec<f64>> = m.into_iter().map(|r| r[n..].to_vec()).collect();
    Ok(Matrix::from_rows(&rows))
}

fn weighted_cross(design: &Design<f64>, w: &[f64]) -> Matrix<f64> {
    let p = design.n_params();
    let mut a = Matrix::zeros(p, p);
    for (row, &wi) in design.rows.iter().zip(w) {
        for i in 0..p {
            for j in 0..p {
                a[(i, j)] += wi * row.z[i] * row.z[j];
            }
        }
    }
    a
}

fn eta(z: &[f64], beta: &[f64]) -> f64 {
    z.iter().zip(beta).map(|(a, b)| a * b).sum()
}

fn mean_of(rows: &Design<f64>, f: impl Fn(usize) -> f64) -> f64 {
    let w: f64 = rows.rows.iter().map(|r| r.freq * r.weight).sum();
    (0..rows.len()).map(|i| rows.rows[i].freq * rows.rows[i].weight * f(i)).sum::<f64>() / w
}

/// Pooled IRLS with the same starting values and stopping rule as the
/// federated fit.
pub fn oracle_fit(data: &AnalyticDataset<f64>, spec: &ModelSpec, beta0: Option<&[f64]>) -> Result<OracleFit> {
    let design = build_design(data, spec)?;
    let p = design.n_params();
    let family = spec.family;
    let mut beta = beta0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p]);
    let mut history = vec![beta.clone()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < spec.max_iter_nb {
        iterations += 1;
        let mut w = Vec::with_capacity(design.len());
        let mut rhs = vec![0.0; p];
        for (row, &y) in design.rows.iter().zip(&design.outcomes) {
            let e = eta(&row.z, &beta);
            let f = family_eval(family, e)?;
            let (wt, yt) = match family {
                Family::Linear => (row.freq * row.weight, y),
                Family::Logistic => (row.freq * row.weight * f.mu_prime, e + (y - f.mu) / f.mu_prime),
            };
            for i in 0..p {
                rhs[i] += wt * row.z[i] * yt;
            }
            w.push(wt);
        }
        let inv = gauss_jordan_inverse(&weighted_cross(&design, &w))?;
        let next: Vec<f64> = (0..p).map(|i| (0..p).map(|j| inv[(i, j)] * rhs[j]).sum()).collect();
        let max_delta = beta
            .iter()
            .zip(&next)
            .map(|(&b0, &b1)| if b0.abs() < 0.01 { (b1 - b0).abs() } else { ((b1 - b0) / b0).abs() })
            .fold(0.0, f64::max);
        beta = next;
        history.push(beta.clone());
        if family == Family::Linear || max_delta < spec.xconv {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(DraError::NonConvergence {
            iterations,
            max_delta: f64::NAN,
        });
    }

    let n: f64 = design.rows.iter().map(|r| r.freq).sum();
    let pf = p as f64;
    let mu: Vec<f64> = design
        .rows
        .iter()
        .map(|r| family_eval(family, eta(&r.z, &beta)).map(|f| f.mu))
        .collect::<Result<_>>()?;
    let wts: Vec<f64> = design.rows.iter().map(|r| r.freq * r.weight).collect();
    let ybar = mean_of(&design, |i| design.outcomes[i]);
    let sse: f64 = (0..design.len()).map(|i| wts[i] * (design.outcomes[i] - mu[i]).powi(2)).sum();
    let sst: f64 = if spec.intercept {
        (0..design.len()).map(|i| wts[i] * (design.outcomes[i] - ybar).powi(2)).sum()
    } else {
        (0..design.len()).map(|i| wts[i] * design.outcomes[i].powi(2)).sum()
    };
    let loglik: f64 = match family {
        Family::Linear => 0.0,
        Family::Logistic => (0..design.len())
            .map(|i| {
                let e = eta(&design.rows[i].z, &beta);
                let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
                wts[i] * (design.outcomes[i] * e - softplus)
            })
            .sum(),
    };
    let w_final: Vec<f64> = match family {
        Family::Linear => wts.clone(),
        Family::Logistic => (0..design.len())
            .map(|i| wts[i] * mu[i] * (1.0 - mu[i]))
            .collect(),
    };
    let inv = gauss_jordan_inverse(&weighted_cross(&design, &w_final))?;
    let phi = match family {
        Family::Linear => sse / (n - pf),
        Family::Logistic => 1.0,
    };
    let model_cov = inv.scale(phi);
    let hw: Vec<f64> = (0..design.len())
        .map(|i| {
            let r = design.rows[i].weight * (design.outcomes[i] - mu[i]);
            design.rows[i].freq * r * r
        })
        .collect();
    let middle = weighted_cross(&design, &hw).scale(n / (n - pf));
    let robust_cov = inv.matmul(&middle).matmul(&inv);
    let se = |m: &Matrix<f64>| m.diagonal().iter().map(|d| d.max(0.0).sqrt()).collect::<Vec<_>>();

    let (fit, anova, null_test) = match family {
        Family::Linear => {
            let fit = linear_fit_stats(sse, sst, n, p, phi, ybar, spec.intercept)?;
            let anova = if p > usize::from(spec.intercept) {
                Some(anova_table(sse, sst, n, p, spec.intercept)?)
            } else {
                None
            };
            (fit, anova, None)
        }
        Family::Logistic => {
            let w_total: f64 = wts.iter().sum();
            let fit = logistic_fit_stats(loglik, n, w_total, p, ybar)?;
            let null = if spec.intercept {
                Some(global_null_test(loglik, fit.get("Null Log Likelihood").expect("reported"), p - 1)?)
            } else {
                None
            };
            (fit, None, null)
        }
    };

    let (roc, auc_rank, hl) = match family {
        Family::Linear => (None, None, None),
        Family::Logistic => {
            let obs: Vec<(f64, f64, f64)> = (0..design.len())
                .filter(|&i| design.rows[i].freq > 0.0)
                .map(|i| (mu[i], design.rows[i].freq, design.outcomes[i]))
                .collect();
            (
                Some(exact_roc(&obs)?),
                Some(rank_auc(&obs)),
                exact_hl(&obs, spec.groups).ok(),
            )
        }
    };

    Ok(OracleFit {
        labels: design.labels.clone(),
        beta,
        iterations,
        converged,
        history,
        model_se: se(&model_cov),
        robust_se: se(&robust_cov),
        model_cov,
        robust_cov,
        n,
        sse,
        sst,
        loglik,
        fit,
        anova,
        null_test,
        roc,
        auc_rank,
        hl,
    })
}

/// ROC over `(prediction, frequency, outcome)` with every distinct
/// prediction as a threshold, each point counted from scratch.
pub fn exact_roc(obs: &[(f64, f64, f64)]) -> Result<RocCurve<f64>> {
    let total_pos: f64 = obs.iter().map(|o| o.1 * o.2).sum();
    let total_neg: f64 = obs.iter().map(|o| o.1 * (1.0 - o.2)).sum();
    if total_pos <= 0.0 || total_neg <= 0.0 {
        return Err(DraError::UndefinedRoc("need both events and non-events".into()));
    }
    let mut thresholds: Vec<f64> = obs.iter().map(|o| o.0).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    thresholds.dedup();
    let mut points = Vec::with_capacity(thresholds.len());
    for &z in &thresholds {
        let pos: f64 = obs.iter().filter(|o| o.0 >= z).map(|o| o.1 * o.2).sum();
        let falpos: f64 = obs.iter().filter(|o| o.0 >= z).map(|o| o.1 * (1.0 - o.2)).sum();
        points.push(RocPoint {
            prob: z,
            pos,
            neg: total_neg - falpos,
            falpos,
            falneg: total_pos - pos,
            sensit: pos / total_pos,
            one_minus_spec: falpos / total_neg,
        });
    }
    let mut auc = 0.0;
    let (mut x0, mut y0) = (0.0, 0.0);
    for pt in &points {
        auc += 0.5 * (pt.sensit + y0) * (pt.one_minus_spec - x0);
        x0 = pt.one_minus_spec;
        y0 = pt.sensit;
    }
    Ok(RocCurve { points, auc })
}

/// `P(μ₊ > μ₋) + ½ P(μ₊ = μ₋)` from midranks.
pub fn rank_auc(obs: &[(f64, f64, f64)]) -> f64 {
    let mut sorted: Vec<&(f64, f64, f64)> = obs.iter().collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let (mut below, mut rank_sum) = (0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut n_tie, mut pos_tie) = (0.0, 0.0);
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            n_tie += sorted[j].1;
            pos_tie += sorted[j].1 * sorted[j].2;
            j += 1;
        }
        rank_sum += pos_tie * (below + (n_tie + 1.0) / 2.0);
        below += n_tie;
        i = j;
    }
    let n1: f64 = obs.iter().map(|o| o.1 * o.2).sum();
    let n0: f64 = obs.iter().map(|o| o.1 * (1.0 - o.2)).sum();
    (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0)
}

/// Hosmer-Lemeshow on individual predictions, grouped on distinct values.
pub fn exact_hl(obs: &[(f64, f64, f64)], g: usize) -> Result<OracleHl> {
    let mut sorted: Vec<&(f64, f64, f64)> = obs.iter().collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let mut values: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for o in &sorted {
        if values.last() == Some(&o.0) {
            *counts.last_mut().expect("parallel") += o.1;
        } else {
            values.push(o.0);
            counts.push(o.1);
        }
    }
    let assign = assign_bins(&values, &counts, &BinningPolicy::new(g, 1, usize::MAX))?;
    let n_groups = assign.last().copied().unwrap_or(0) + 1;
    if n_groups < 3 {
        return Err(DraError::InsufficientData("fewer than three groups".into()));
    }
    let mut groups = vec![(0.0, 0.0, 0.0); n_groups];
    let mut k = 0;
    for o in &sorted {
        while values[k] != o.0 {
            k += 1;
        }
        let gr = &mut groups[assign[k]];
        gr.0 += o.1;
        gr.1 += o.1 * o.2;
        gr.2 += o.1 * o.0;
    }
    let chi_sq: f64 = groups
        .iter()
        .map(|&(n, obs_ev, exp_ev)| {
            let pi = exp_ev / n;
            (obs_ev - exp_ev).powi(2) / (n * pi * (1.0 - pi))
        })
        .sum();
    let df = n_groups - 2;
    Ok(OracleHl {
        chi_sq,
        df,
        p_value: dist::chi_square_sf(chi_sq, df as f64)?,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_jordan_inverts() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let inv = gauss_jordan_inverse(&a).unwrap();
        let id = a.matmul(&inv);
        assert!(id.max_abs_diff(&Matrix::identity(2)) < 1e-15);
    }

    #[test]
    fn rank_auc_matches_trapezoid() {
        let obs = [(0.1, 1.0, 0.0), (0.4, 2.0, 1.0), (0.4, 1.0, 0.0), (0.8, 1.0, 1.0), (0.3, 3.0, 0.0)];
        let roc = exact_roc(&obs).unwrap();
        assert!((roc.auc - rank_auc(&obs)).abs() < 1e-15);
    }

    #[test]
    fn noiseless_line_is_recovered() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
        let data = AnalyticDataset::new(1, vec!["x".into(), "y".into()], rows).unwrap();
        let spec = ModelSpec::new("t", Family::Linear, "y", &["x"]);
        let fit = oracle_fit(&data, &spec, None).unwrap();
        assert!((fit.beta[0] - 1.0).abs() < 1e-12);
        assert!((fit.beta[1] - 2.0).abs() < 1e-12);
        assert_eq!(fit.iterations, 1);
    }
}
