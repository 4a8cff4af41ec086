mod common;

use std::path::Path;

use common::*;
use distreg::local::run_local;
use distreg::oracle::oracle_fit;
use distreg::output::file_name;
use distreg::protocol::RequestLayout;
use distreg::report::render_report;
use distreg::summaries::BinningPolicy;
use distreg::wire::read_rows;
use distreg::{DraError, Family};

fn table(dir: &Path, prefix: &str, name: &str) -> Vec<Vec<String>> {
    read_rows(&std::fs::read(dir.join(file_name(prefix, name))).unwrap()).unwrap()
}

fn outputs_in(dir: &Path, prefix: &str) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with(&format!("{prefix}_")))
        .collect();
    v.sort();
    v
}

#[test]
fn linear_run_uses_one_solve_and_skips_classification_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let parts = boston_parts(&BOSTON_SIZES, SEED);
    let data = stage(tmp.path(), &parts);
    let s = spec("dr1", Family::Linear, 3);
    let out = run_local::<f64>(&s, worker_configs(&s, &data, None), &tmp.path().join("root")).unwrap();
    assert_eq!(out.exchanges, 2);
    assert_eq!(out.state.iteration, 1);
    assert!(out.state.converged);
    let msoc = RequestLayout::new(tmp.path().join("root"), &s.request_id).msoc();
    let hist = table(&msoc, "dr1", "iter_params_hist");
    assert_eq!(hist.len() - 1, out.state.iteration + 1);
    let files = outputs_in(&msoc, "dr1");
    for absent in ["roc", "hl_chisq", "hl_partition", "glob_null_chisq"] {
        assert!(!files.contains(&file_name("dr1", absent)), "{absent} written for a linear run");
    }
    assert!(files.contains(&file_name("dr1", "anova")));
    let report = render_report(&msoc, "dr1").unwrap();
    assert!(report.roc.is_none());
    assert!(!report.text.contains("ROC"));
    assert!(!report.text.contains("Hosmer"));
    let p_est = table(&msoc, "dr1", "p_est");
    for row in &p_est[1..] {
        assert!(report.text.contains(&row[0]));
    }
}

#[test]
fn logistic_run_writes_roc_and_hl_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let parts = boston_parts(&BOSTON_SIZES, SEED);
    let data = stage(tmp.path(), &parts);
    let s = spec("dr2", Family::Logistic, 3);
    let out = run_local::<f64>(&s, worker_configs(&s, &data, None), &tmp.path().join("root")).unwrap();
    assert_eq!(out.exchanges, out.state.iteration + 1);
    let msoc = RequestLayout::new(tmp.path().join("root"), &s.request_id).msoc();
    let roc = table(&msoc, "dr2", "roc");
    assert_eq!(roc[0], ["PROB", "POS", "NEG", "FALPOS", "FALNEG", "SENSIT", "1MSPEC", "AUC"]);
    let report = render_report(&msoc, "dr2").unwrap();
    let points = read_rows(report.roc.as_ref().unwrap()).unwrap();
    assert_eq!(points[0], ["1MSPEC", "SENSIT", "AUC"]);
    assert_eq!(points.len(), roc.len());
    assert!(outputs_in(&msoc, "dr2").contains(&file_name("dr2", "hl_chisq")));
}

#[test]
fn missing_partner_dataset_fails_naming_the_partner() {
    let tmp = tempfile::tempdir().unwrap();
    let parts = boston_parts(&BOSTON_SIZES, SEED);
    let data = stage(tmp.path(), &parts);
    std::fs::remove_file(data.join("analytic_2.csv")).unwrap();
    let s = spec("dr1", Family::Linear, 3);
    let root = tmp.path().join("root");
    match run_local::<f64>(&s, worker_configs(&s, &data, None), &root) {
        Err(DraError::PartnerFailed { dp_cd, reason }) => {
            assert_eq!(dp_cd, 2);
            assert!(reason.contains("analytic_2"), "{reason}");
        }
        other => panic!("expected a partner failure, got {other:?}"),
    }
    let msoc = RequestLayout::new(&root, &s.request_id).msoc();
    assert!(outputs_in(&msoc, "dr1").is_empty());
}

#[test]
fn iteration_cap_reports_nonconvergence_with_history() {
    let tmp = tempfile::tempdir().unwrap();
    let parts = boston_parts(&BOSTON_SIZES, SEED);
    let data = stage(tmp.path(), &parts);
    let mut s = spec("dr2", Family::Logistic, 3);
    s.max_iter_nb = 2;
    let root = tmp.path().join("root");
    match run_local::<f64>(&s, worker_configs(&s, &data, None), &root) {
        Err(e @ DraError::NonConvergence { iterations: 2, .. }) => assert_eq!(e.exit_code(), 2),
        other => panic!("expected nonconvergence, got {other:?}"),
    }
    let msoc = RequestLayout::new(&root, &s.request_id).msoc();
    let files = outputs_in(&msoc, "dr2");
    assert!(files.contains(&file_name("dr2", "iter_params_hist")));
    assert!(files.contains(&file_name("dr2", "convrg_status")));
    assert!(!files.contains(&file_name("dr2", "p_est")));
    assert_eq!(table(&msoc, "dr2", "iter_params_hist").len(), 4);
}

#[test]
fn single_partner_matches_the_pooled_fit() {
    let tmp = tempfile::tempdir().unwrap();
    for family in [Family::Linear, Family::Logistic] {
        let parts = random_parts(1, SEED, false);
        let s = spec("one", family, 1);
        let (out, _) = run_memory(&s, &parts, None, tmp.path());
        let o = oracle_fit(&parts[0], &s, None).unwrap();
        assert!(max_abs_diff(&out.beta, &o.beta) <= 1e-12);
        assert_eq!(out.state.iteration, o.iterations);
    }
}

#[test]
fn scored_rows_stay_in_the_partner_area() {
    let tmp = tempfile::tempdir().unwrap();
    let parts = boston_parts(&BOSTON_SIZES, SEED);
    let data = stage(tmp.path(), &parts);
    let s = spec("dr2", Family::Logistic, 3);
    let root = tmp.path().join("root");
    run_local::<f64>(&s, worker_configs(&s, &data, None), &root).unwrap();
    let layout = RequestLayout::new(&root, &s.request_id);
    for dp in 1..=3u32 {
        let scored = layout.dplocal().join(format!("dr2_scored_{dp}.csv"));
        let rows = read_rows(&std::fs::read(&scored).unwrap()).unwrap();
        assert_eq!(rows.len() - 1, BOSTON_SIZES[dp as usize - 1]);
        assert!(rows[0].contains(&"_PRED_".to_string()));
        assert!(rows[0].contains(&"_RESID_".to_string()));
    }
    let everywhere = walk(layout.request_dir());
    assert!(everywhere.iter().filter(|p| p.contains("scored")).all(|p| p.contains("dplocal")));
}

fn walk(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p.to_string_lossy().into_owned());
        }
    }
    out
}

#[test]
fn finest_grouping_for_a_small_partner() {
    let policy = BinningPolicy::finest(152.0, 6, 10_000);
    assert_eq!(policy.n_grp, 25);
    assert_eq!(policy.target(152.0), 6.0);
    assert_eq!(BinningPolicy::finest(152.0, 6, 10).n_grp, 10);
}

#[test]
fn partner_floor_overrides_the_global_floor() {
    let tmp = tempfile::tempdir().unwrap();
    let parts = boston_parts(&BOSTON_SIZES, SEED);
    let s = spec("dr2", Family::Logistic, 3);
    let (coarse, _) = run_memory(&s, &parts, None, &tmp.path().join("a"));
    let (fine, _) = run_memory(&s, &parts, Some(1), &tmp.path().join("b"));
    assert!(coarse.bins_fine.iter().all(|b| b.n_obs >= 6.0));
    assert!(fine.bins_fine.iter().any(|b| b.n_obs < 6.0));
    assert!(fine.bins_fine.len() > coarse.bins_fine.len());
}

#[test]
fn single_precision_run_tracks_double_precision() {
    let tmp = tempfile::tempdir().unwrap();
    let parts = boston_parts(&BOSTON_SIZES, SEED);
    let data = stage(tmp.path(), &parts);
    let s = spec("dr2", Family::Logistic, 3);
    let wide = run_local::<f64>(&s, worker_configs(&s, &data, None), &tmp.path().join("r64")).unwrap();
    let narrow = run_local::<f32>(&s, worker_configs(&s, &data, None), &tmp.path().join("r32")).unwrap();
    for (a, b) in wide.beta.iter().zip(&narrow.beta) {
        assert!((a - f64::from(*b)).abs() <= 1e-3 * a.abs().max(1.0), "{a} vs {b}");
    }
}
