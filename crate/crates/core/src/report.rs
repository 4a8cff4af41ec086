//! Plain-text rendering of a finished run plus plot-ready CSV extracts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{DraError, Result};
use crate::output::file_name;
use crate::wire::{read_rows, write_rows};

const REQUIRED: [&str; 5] = ["p_est", "p_est_hc", "modelfit", "convrg_status", "resid_sum_by_pct"];

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    /// `1MSPEC,SENSIT,AUC`; logistic runs only.
    pub roc: Option<Vec<u8>>,
    /// Mean predicted against mean observed per bin.
    pub calibration: Vec<u8>,
}

type Table = Vec<Vec<String>>;

fn load(dir: &Path, prefix: &str, table: &str) -> Result<Option<Table>> {
    let path = dir.join(file_name(prefix, table));
    match std::fs::read(&path) {
        Ok(bytes) => Ok(Some(read_rows(&bytes)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(DraError::io(path, e)),
    }
}

fn num(cell: &str) -> String {
    match cell.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => {
            if x.fract() == 0.0 && x.abs() < 1e15 {
                format!("{}", x as i64)
            } else if x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e8) {
                format!("{x:.5e}")
            } else {
                format!("{x:.6}")
            }
        }
        _ => cell.to_string(),
    }
}

fn render_table(out: &mut String, title: &str, rows: &Table) {
    let _ = writeln!(out, "{title}");
    let cells: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().enumerate().map(|(j, c)| if i == 0 || j == 0 { c.clone() } else { num(c) }).collect())
        .collect();
    let width = cells.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..width)
        .map(|j| cells.iter().filter_map(|r| r.get(j)).map(String::len).max().unwrap_or(0))
        .collect();
    for r in &cells {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(j, c)| if j == 0 { format!("{c:<w$}", w = widths[j]) } else { format!("{c:>w$}", w = widths[j]) })
            .collect();
        let _ = writeln!(out, "  {}", line.join("  ").trim_end());
    }
    out.push('\n');
}

fn column(rows: &Table, name: &str) -> Result<usize> {
    rows.first()
        .and_then(|h| h.iter().position(|c| c == name))
        .ok_or_else(|| DraError::Dataset(format!("column `{name}` missing")))
}

fn extract(rows: &Table, names: &[&str]) -> Result<Vec<u8>> {
    let idx = names.iter().map(|n| column(rows, n)).collect::<Result<Vec<_>>>()?;
    let mut out = vec![names.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for r in &rows[1..] {
        out.push(idx.iter().map(|&j| r.get(j).cloned().unwrap_or_default()).collect());
    }
    Ok(write_rows(&out))
}

/// Reads the output datasets for `prefix` from `dir`.
pub fn render_report(dir: &Path, prefix: &str) -> Result<Report> {
    let missing: Vec<String> = REQUIRED
        .iter()
        .filter(|t| !dir.join(file_name(prefix, t)).is_file())
        .map(|t| file_name(prefix, t))
        .collect();
    if !missing.is_empty() {
        return Err(DraError::Dataset(format!(
            "missing output files in {}: {}",
            dir.display(),
            missing.join(", ")
        )));
    }
    let get = |t: &str| load(dir, prefix, t);
    let req = |t: &str| get(t).map(|o| o.expect("checked above"));
    let mut text = String::new();
    let _ = writeln!(text, "Distributed regression report: {prefix}\n");
    render_table(&mut text, "Convergence", &req("convrg_status")?);
    render_table(&mut text, "Model fit", &req("modelfit")?);
    if let Some(t) = get("anova")? {
        render_table(&mut text, "Analysis of variance", &t);
    }
    if let Some(t) = get("glob_null_chisq")? {
        render_table(&mut text, "Global null hypothesis", &t);
    }
    render_table(&mut text, "Parameter estimates", &req("p_est")?);
    render_table(&mut text, "Parameter estimates, robust (HC1) standard errors", &req("p_est_hc")?);
    let roc_rows = get("roc")?;
    if let Some(t) = &roc_rows {
        let auc = t.get(1).and_then(|r| r.last()).map(|c| num(c)).unwrap_or_default();
        let _ = writeln!(text, "Area under the ROC curve: {auc}\n");
    }
    if let Some(t) = get("hl_chisq")? {
        render_table(&mut text, "Hosmer-Lemeshow goodness of fit", &t);
    }
    if let Some(t) = get("hl_partition")? {
        render_table(&mut text, "Hosmer-Lemeshow partition", &t);
    }
    let bins = req("resid_sum_by_pct")?;
    render_table(&mut text, "Residuals by prediction bin", &bins);
    Ok(Report {
        text,
        roc: roc_rows.as_ref().map(|t| extract(t, &["1MSPEC", "SENSIT", "AUC"])).transpose()?,
        calibration: extract(&bins, &["dp_cd", "bin", "PROB", "RESP_Mean", "Nobs"])?,
    })
}

/// Writes `<prefix>_report.txt`, `<prefix>_roc_points.csv` and
/// `<prefix>_calibration.csv` into `out_dir`.
pub fn write_report(report: &Report, out_dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| DraError::io(out_dir, e))?;
    let mut files = vec![
        (format!("{prefix}_report.txt"), report.text.as_bytes().to_vec()),
        (format!("{prefix}_calibration.csv"), report.calibration.clone()),
    ];
    if let Some(r) = &report.roc {
        files.push((format!("{prefix}_roc_points.csv"), r.clone()));
    }
    files
        .into_iter()
        .map(|(n, b)| {
            let p = out_dir.join(n);
            std::fs::write(&p, b).map_err(|e| DraError::io(&p, e))?;
            Ok(p)
        })
        .collect()
}
