//! Output datasets named `<RunID>_<table>.csv`.

use std::path::{Path, PathBuf};

use crate::config::ModelSpec;
use crate::coordinator::FitOutputs;
use crate::error::{DraError, Result};
use crate::fit_stats::CoefficientRow;
use crate::matrix::Matrix;
use crate::model::Family;
use crate::scalar::Scalar;
use crate::solver::IterationState;
use crate::summaries::{bins_to_csv, RocCurve};
use crate::wire::{fmt17, write_named_values, write_rows};

pub const ESTIMATE_COLUMNS: [&str; 7] = ["Variable", "Estimate", "StdErr", "Statistic", "ProbValue", "LowerCL", "UpperCL"];
pub const ROC_COLUMNS: [&str; 8] = ["PROB", "POS", "NEG", "FALPOS", "FALNEG", "SENSIT", "1MSPEC", "AUC"];

pub fn file_name(prefix: &str, table: &str) -> String {
    format!("{prefix}_{table}.csv")
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

fn estimates<S: Scalar>(rows: &[CoefficientRow<S>], robust: bool) -> Vec<u8> {
    let mut out = vec![header(&ESTIMATE_COLUMNS)];
    for r in rows {
        let v = if robust {
            [r.estimate, r.robust_std_error, r.robust_statistic, r.robust_p_value, r.robust_lower, r.robust_upper]
        } else {
            [r.estimate, r.std_error, r.statistic, r.p_value, r.lower, r.upper]
        };
        let mut line = vec![r.label.clone()];
        line.extend(v.iter().map(|&x| fmt17(x)));
        out.push(line);
    }
    write_rows(&out)
}

fn matrix<S: Scalar>(labels: &[String], m: &Matrix<S>) -> Vec<u8> {
    let mut out = vec![std::iter::once("Variable".to_string()).chain(labels.iter().cloned()).collect()];
    for (i, l) in labels.iter().enumerate() {
        let mut line = vec![l.clone()];
        line.extend(m.row(i).iter().map(|&x| fmt17(x)));
        out.push(line);
    }
    write_rows(&out)
}

fn history<S: Scalar>(labels: &[String], state: &IterationState<S>) -> Vec<u8> {
    let mut out = vec![["Iteration", "MaxAbsDelta"]
        .iter()
        .map(|s| s.to_string())
        .chain(labels.iter().cloned())
        .collect::<Vec<_>>()];
    for h in &state.history {
        let mut line = vec![h.iteration.to_string(), h.max_abs_delta.map(fmt17).unwrap_or_else(|| ".".into())];
        line.extend(h.beta.iter().map(|&b| fmt17(b)));
        out.push(line);
    }
    write_rows(&out)
}

fn convergence<S: Scalar>(spec: &ModelSpec, state: &IterationState<S>, exchanges: Option<usize>) -> Vec<u8> {
    let mut rows = vec![
        vec!["Statistic".to_string(), "Value".to_string()],
        vec!["Converged".into(), u8::from(state.converged).to_string()],
        vec!["Iterations".into(), state.iteration.to_string()],
        vec!["MaxAbsDelta".into(), fmt17(state.max_abs_delta())],
        vec!["xconv".into(), fmt17(spec.xconv)],
        vec!["max_iter_nb".into(), spec.max_iter_nb.to_string()],
    ];
    if let Some(e) = exchanges {
        rows.push(vec!["Exchanges".into(), e.to_string()]);
    }
    write_rows(&rows)
}

pub fn roc_csv<S: Scalar>(roc: &RocCurve<S>) -> Vec<u8> {
    let mut out = vec![header(&ROC_COLUMNS)];
    for p in &roc.points {
        out.push(
            [p.prob, p.pos, p.neg, p.falpos, p.falneg, p.sensit, p.one_minus_spec, roc.auc]
                .iter()
                .map(|&x| fmt17(x))
                .collect(),
        );
    }
    write_rows(&out)
}

/// Every output table as `(file name, contents)`, in a fixed order.
pub fn render_outputs<S: Scalar>(out: &FitOutputs<S>) -> Vec<(String, Vec<u8>)> {
    let prefix = out.spec.prefix();
    let labels = &out.labels;
    let cov = &out.covariance;
    let mut files = vec![
        ("p_est", estimates(&out.coefficients, false)),
        ("p_est_hc", estimates(&out.coefficients, true)),
        ("cov_est", matrix(labels, &cov.model_cov)),
        ("hc_cov", matrix(labels, &cov.robust_cov)),
        ("invxpx", matrix(labels, &cov.xpx_inverse)),
    ];
    let mut fit: Vec<(&str, S)> = out.fit.entries.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    fit.push(("Condition Number", out.condition_number));
    files.push(("modelfit", write_named_values(&fit)));
    files.push(("model_coeff", crate::wire::write_vector(labels, &out.beta)));
    files.push(("iter_params_hist", history(labels, &out.state)));
    files.push(("convrg_status", convergence(&out.spec, &out.state, Some(out.exchanges))));
    if let Some(t) = &out.null_test {
        files.push((
            "glob_null_chisq",
            write_rows(&[
                header(&["Test", "ChiSq", "DF", "ProbChiSq"]),
                vec!["Likelihood Ratio".into(), fmt17(t.chi_sq), t.df.to_string(), fmt17(t.p_value)],
            ]),
        ));
    }
    if let Some(a) = &out.anova {
        let total = if out.spec.intercept { "Corrected Total" } else { "Uncorrected Total" };
        files.push((
            "anova",
            write_rows(&[
                header(&["Source", "DF", "SS", "MS", "FValue", "ProbF"]),
                vec![
                    "Model".into(),
                    a.df_model.to_string(),
                    fmt17(a.ss_model),
                    fmt17(a.ms_model),
                    fmt17(a.f_value),
                    fmt17(a.p_value),
                ],
                vec!["Error".into(), fmt17(a.df_error), fmt17(a.ss_error), fmt17(a.ms_error), ".".into(), ".".into()],
                vec![
                    total.into(),
                    fmt17(a.df_error + S::from_usize(a.df_model).expect("count fits")),
                    fmt17(a.ss_total),
                    ".".into(),
                    ".".into(),
                    ".".into(),
                ],
            ]),
        ));
    }
    let s = &out.site_stats;
    files.push((
        "resid_sum",
        write_named_values(&[
            ("N", s.sum_freq),
            ("Sum of Weights", s.sum_weights),
            ("Mean Observed", s.mean_y),
            ("Mean Predicted", s.sum_pred / s.sum_weights),
            ("Mean Residual", s.sum_resid / s.sum_weights),
            ("SSE", s.sse),
        ]),
    ));
    files.push(("resid_sum_by_pct", bins_to_csv(&out.bins)));
    files.push(("resid_sum_by_pct2", bins_to_csv(&out.bins_fine)));
    if out.spec.family == Family::Logistic {
        if let Some(roc) = &out.roc {
            files.push(("roc", roc_csv(roc)));
        }
        if let Some(hl) = &out.hl {
            files.push((
                "hl_chisq",
                write_rows(&[
                    header(&["ChiSq", "DF", "ProbChiSq"]),
                    vec![fmt17(hl.chi_sq), hl.df.to_string(), fmt17(hl.p_value)],
                ]),
            ));
            let mut rows = vec![header(&[
                "Group",
                "Total",
                "Observed_Events",
                "Expected_Events",
                "Observed_NonEvents",
                "Expected_NonEvents",
                "Mean_PROB",
                "Mean_RESP",
            ])];
            for g in &hl.partition {
                let mut line = vec![g.group.to_string()];
                line.extend(
                    [
                        g.total,
                        g.observed_events,
                        g.expected_events,
                        g.observed_nonevents,
                        g.expected_nonevents,
                        g.mean_prob,
                        g.mean_resp,
                    ]
                    .iter()
                    .map(|&x| fmt17(x)),
                );
                rows.push(line);
            }
            files.push(("hl_partition", write_rows(&rows)));
        }
    }
    files
        .into_iter()
        .map(|(t, b)| (file_name(prefix, t), b))
        .collect()
}

fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| DraError::io(dir, e))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Err(e) = std::fs::write(&path, bytes) {
            for w in &written {
                let _ = std::fs::remove_file(w);
            }
            return Err(DraError::io(path, e));
        }
        written.push(path);
    }
    Ok(written)
}

/// Writes every table; on failure nothing is left behind.
pub fn emit_outputs<S: Scalar>(out: &FitOutputs<S>, dir: &Path) -> Result<Vec<PathBuf>> {
    write_all(dir, &render_outputs(out))
}

/// Iteration history and convergence status of a run that did not finish.
pub fn emit_history<S: Scalar>(
    spec: &ModelSpec,
    labels: &[String],
    state: &IterationState<S>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let p = spec.prefix();
    write_all(
        dir,
        &[
            (file_name(p, "iter_params_hist"), history(labels, state)),
            (file_name(p, "convrg_status"), convergence(spec, state, None)),
        ],
    )
}
