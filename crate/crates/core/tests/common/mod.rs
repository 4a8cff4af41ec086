#![allow(dead_code)]

pub mod props;
pub mod scenarios;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use distreg::coordinator::{run_coordinator, FitOutputs};
use distreg::dataset::AnalyticDataset;
use distreg::partition::{even_sizes, partition, write_parts, DUMMY_PREFIX};
use distreg::protocol::exchange::{read_listed, read_manifest, ARCHIVE_DIR};
use distreg::protocol::{
    memory_links, Bundle, FileRelay, FsCoordinatorLink, FsWorkerLink, PollPolicy, RequestLayout, BINS_FILE,
    BINS_FINE_FILE, ROBUST_SSCP_FILE, SITE_STATS_FILE, SITE_STATS_FINAL_FILE, SSCP_FILE,
};
use distreg::summaries::bins_from_csv;
use distreg::wire::fmt17;
use distreg::worker::{run_worker, Worker};
use distreg::{Dataset, Family, ModelSpec, WorkerConfig};

pub const BOSTON_SIZES: [usize; 3] = [172, 182, 152];
pub const SEED: u64 = 20_190_101;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn boston() -> Dataset {
    AnalyticDataset::from_csv_path(0, &data_dir().join("boston_housing.csv")).expect("boston data")
}

pub fn boston_parts(sizes: &[usize], seed: u64) -> Vec<Dataset> {
    partition(&boston(), sizes, seed, true).expect("partition")
}

pub fn random_parts(k: usize, seed: u64, dummies: bool) -> Vec<Dataset> {
    let data = boston();
    partition(&data, &even_sizes(data.n_rows(), k).unwrap(), seed, dummies).unwrap()
}

pub fn pooled(parts: &[Dataset]) -> Dataset {
    let refs: Vec<&Dataset> = parts.iter().collect();
    AnalyticDataset::concat(0, &refs).unwrap()
}

pub fn covariates(k: usize) -> Vec<String> {
    let mut v: Vec<String> = ["crim", "indus", "dis"].iter().map(|s| s.to_string()).collect();
    v.extend((2..=k).map(|j| format!("dummy_dp_var{j}")));
    v
}

pub fn spec(run_id: &str, family: Family, k: usize) -> ModelSpec {
    let dep = match family {
        Family::Linear => "medv",
        Family::Logistic => "medv_high_flag",
    };
    let cov = covariates(k);
    let refs: Vec<&str> = cov.iter().map(String::as_str).collect();
    let mut s = ModelSpec::new(run_id, family, dep, &refs);
    s.dp_cd_list = (1..=k as u32).collect();
    s.wait_time_min = 0.001;
    s.wait_time_max = 0.02;
    s.run_deadline = 120.0;
    s
}

/// Runs the federated fit over in-memory channels, one thread per partner.
pub fn run_memory(spec: &ModelSpec, parts: &[Dataset], min_count: Option<u64>, out_dir: &Path) -> (FitOutputs<f64>, Vec<(u32, Bundle)>) {
    let (mut link, workers) = memory_links(&spec.dp_cd_list, Duration::from_secs(120));
    let handles: Vec<_> = workers
        .into_iter()
        .zip(parts.iter().cloned())
        .map(|(mut wl, part)| {
            thread::spawn(move || {
                let mut cfg = WorkerConfig::new(wl.dp_cd, ".");
                cfg.min_count_per_grp = min_count;
                let mut w = Worker::with_dataset(cfg, part);
                run_worker(&mut w, &mut wl, None)
            })
        })
        .collect();
    let out = run_coordinator(spec.clone(), None, &mut link, out_dir).expect("federated fit");
    for h in handles {
        h.join().unwrap().expect("worker");
    }
    (out, link.transcript)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn fast_poll() -> PollPolicy {
    PollPolicy::new(Duration::from_millis(1), Duration::from_millis(20), Duration::from_secs(120))
}

/// Writes `analytic_<k>.csv` for each part under `dir/data`.
pub fn stage(dir: &Path, parts: &[Dataset]) -> PathBuf {
    let data = dir.join("data");
    write_parts(parts, &data, "analytic").expect("write parts");
    data
}

pub fn worker_configs(spec: &ModelSpec, data: &Path, min_count: Option<u64>) -> Vec<WorkerConfig> {
    spec.dp_cd_list
        .iter()
        .map(|&dp| {
            let mut c = WorkerConfig::new(dp, data);
            c.min_count_per_grp = min_count;
            c.request_id = spec.request_id.clone();
            c
        })
        .collect()
}

/// One coordinator, one relay and a worker per partner, each partner with its
/// own root under `base`, all exchanging files on disk.
pub struct FsRun {
    pub coordinator: RequestLayout,
    pub partners: Vec<(u32, RequestLayout)>,
    pub result: distreg::Result<FitOutputs<f64>>,
    pub worker_results: Vec<distreg::Result<()>>,
}

pub fn run_fs(spec: &ModelSpec, data: &Path, min_count: Option<u64>, base: &Path) -> FsRun {
    let mut spec = spec.clone();
    spec.test_env = true;
    let coordinator = RequestLayout::new(base.join("center"), &spec.request_id);
    coordinator.create_coordinator(&spec.dp_cd_list).unwrap();
    let partners: Vec<(u32, RequestLayout)> = spec
        .dp_cd_list
        .iter()
        .map(|&dp| {
            let l = RequestLayout::new(base.join(format!("site{dp}")), &spec.request_id);
            l.create_worker().unwrap();
            (dp, l)
        })
        .collect();
    let workers: Vec<_> = worker_configs(&spec, data, min_count)
        .into_iter()
        .zip(partners.iter().map(|p| p.1.clone()))
        .map(|(cfg, layout)| {
            thread::spawn(move || {
                let dplocal = layout.dplocal();
                let mut link = FsWorkerLink::new(layout, fast_poll());
                let mut w = Worker::<f64>::new(cfg);
                run_worker(&mut w, &mut link, Some(&dplocal))
            })
        })
        .collect();
    let relay = FileRelay {
        coordinator: coordinator.clone(),
        partners: partners.clone(),
        poll: fast_poll(),
    };
    let relay = thread::spawn(move || relay.run());
    let mut link = FsCoordinatorLink::new(coordinator.clone(), fast_poll());
    let result = run_coordinator(spec, None, &mut link, &coordinator.msoc());
    let _ = relay.join().expect("relay thread");
    let worker_results = workers.into_iter().map(|h| h.join().expect("worker thread")).collect();
    FsRun {
        coordinator,
        partners,
        result,
        worker_results,
    }
}

/// Output files for `prefix` in `dir`, by name.
pub fn output_files(dir: &Path, prefix: &str) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .filter_map(|p| {
            let name = p.file_name()?.to_string_lossy().into_owned();
            name.starts_with(&format!("{prefix}_"))
                .then(|| (name, std::fs::read(&p).unwrap()))
        })
        .collect()
}

/// Names of files that differ, or exist on one side only.
pub fn differing(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Vec<String> {
    a.keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect()
}

const PARTNER_FILES: [&str; 6] = [
    SSCP_FILE,
    SITE_STATS_FILE,
    ROBUST_SSCP_FILE,
    SITE_STATS_FINAL_FILE,
    BINS_FILE,
    BINS_FINE_FILE,
];

/// Problems found in one partner reply: unexpected files, a raw row showing
/// up on a line, or a bin below the floor.
pub fn audit_reply(bundle: &Bundle, raw: &Dataset, spec: &ModelSpec, min_count: u64) -> Vec<String> {
    let mut found = Vec::new();
    let mut columns: Vec<&str> = spec.independent_vars.iter().map(String::as_str).collect();
    columns.push(&spec.dependent_var);
    let idx: Vec<usize> = columns
        .iter()
        .filter(|c| !c.starts_with(DUMMY_PREFIX))
        .map(|c| raw.column_index(c).expect("column"))
        .collect();
    let needles: Vec<Vec<String>> = raw
        .rows()
        .iter()
        .map(|r| idx.iter().map(|&j| fmt17(r[j])).collect())
        .collect();
    for name in bundle.names() {
        if !PARTNER_FILES.contains(&name.as_str()) {
            found.push(format!("unexpected file {name}"));
            continue;
        }
        let bytes = bundle.get(&name).unwrap();
        let text = String::from_utf8_lossy(bytes);
        for line in text.lines() {
            let cells: Vec<&str> = line.split(',').collect();
            if needles.iter().any(|n| n.iter().all(|v| cells.contains(&v.as_str()))) {
                found.push(format!("{name} carries an individual row: {line}"));
            }
        }
        if name == BINS_FILE || name == BINS_FINE_FILE {
            let bins: Vec<distreg::BinSummary> = bins_from_csv(bytes).expect("bins");
            for b in bins.iter().filter(|b| b.n_obs < min_count as f64) {
                found.push(format!("{name} bin {} holds {} rows", b.bin, b.n_obs));
            }
        }
    }
    found
}

/// Every payload a partner committed, recovered from the archive of the
/// center's inbox for that partner.
pub fn archived_replies(layout: &RequestLayout, dp: u32) -> Vec<Bundle> {
    let root = layout.msoc_for(dp).join(ARCHIVE_DIR);
    let mut slots: Vec<PathBuf> = std::fs::read_dir(&root).unwrap().map(|e| e.unwrap().path()).collect();
    slots.sort();
    slots
        .iter()
        .map(|s| {
            let names = read_manifest(s).unwrap();
            read_listed(s, &names).unwrap()
        })
        .collect()
}
