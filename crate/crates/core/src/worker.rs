//! Data-partner runtime: score the local rows at the coefficients sent by the
//! coordinator and publish only aggregates.

use std::path::Path;

use log::{debug, info};

use crate::config::{ModelSpec, WorkerConfig};
use crate::dataset::{resolve_dataset_path, AnalyticDataset};
use crate::error::{DraError, Result};
use crate::fit_stats::SiteStatContribution;
use crate::model::{build_design, family_eval, local_sscp, robust_weight, working_transform, Design, Family};
use crate::protocol::{
    Bundle, Outcome, ParamSet, WorkerLink, BETA_FILE, BINS_FILE, BINS_FINE_FILE, PARAMS_FILE, ROBUST_SSCP_FILE,
    SITE_STATS_FILE, SITE_STATS_FINAL_FILE, SSCP_FILE,
};
use crate::scalar::Scalar;
use crate::summaries::{bins_to_csv, residual_summary, BinningPolicy, ScoredRow};
use crate::wire;

/// Column names appended to the scored dataset kept in `dplocal`.
pub const PRED_COLUMN: &str = "_PRED_";
pub const RESID_COLUMN: &str = "_RESID_";

/// What one inbound message produced.
#[derive(Debug, Clone)]
pub struct WorkerReply<S> {
    pub bundle: Bundle,
    pub finished: bool,
    /// Individual-level scored rows; stays at the site.
    pub scored: Option<AnalyticDataset<S>>,
}

#[derive(Debug)]
struct Loaded<S> {
    spec: ModelSpec,
    data: AnalyticDataset<S>,
    design: Design<S>,
}

#[derive(Debug)]
pub struct Worker<S> {
    config: WorkerConfig,
    preloaded: Option<AnalyticDataset<S>>,
    loaded: Option<Loaded<S>>,
}

/// `<reg_ds_in>` in production, `<reg_ds_in>_<dp_cd>` in test mode.
pub fn dataset_name(spec: &ModelSpec, dp_cd: u32) -> String {
    if spec.test_env {
        format!("{}_{dp_cd}", spec.reg_ds_in)
    } else {
        spec.reg_ds_in.clone()
    }
}

/// `SSCP(Z ∥ ỹ, W̃)` and the site sums at `beta`.
pub fn iteration_payload<S: Scalar>(family: Family, design: &Design<S>, beta: &[S]) -> Result<Bundle> {
    let mut y_tilde = Vec::with_capacity(design.len());
    let mut w_tilde = Vec::with_capacity(design.len());
    for (row, &y) in design.rows.iter().zip(&design.outcomes) {
        let rec = working_transform(family, row, y, beta)?;
        y_tilde.push(rec.y_tilde);
        w_tilde.push(rec.w_tilde);
    }
    let sscp = local_sscp(design, Some(&y_tilde), &w_tilde)?;
    let stats = SiteStatContribution::compute(family, design, beta)?;
    let mut b = Bundle::new();
    b.push(SSCP_FILE, sscp.to_csv()).push(SITE_STATS_FILE, stats.to_csv());
    Ok(b)
}

/// Rows scored at `beta_hat` for the residual summaries.
pub fn score_rows<S: Scalar>(family: Family, design: &Design<S>, beta_hat: &[S], phi: S) -> Result<Vec<ScoredRow<S>>> {
    design
        .rows
        .iter()
        .zip(&design.outcomes)
        .map(|(row, &y)| {
            let f = family_eval(family, row.linear_predictor(beta_hat))?;
            let variance = match family {
                Family::Linear => phi,
                Family::Logistic => f.variance,
            };
            Ok(ScoredRow {
                mu: f.mu,
                y,
                resid: y - f.mu,
                variance,
                freq: row.freq,
            })
        })
        .collect()
}

/// Payload of the stop message: working SSCP and robust SSCP at `beta_hat`,
/// final site sums and residual summaries at both granularities.
pub fn final_payload<S: Scalar>(
    spec: &ModelSpec,
    design: &Design<S>,
    beta_hat: &[S],
    phi: S,
    min_count: u64,
    dp_cd: u32,
) -> Result<(Bundle, Vec<ScoredRow<S>>)> {
    let family = spec.family;
    let mut b = iteration_payload(family, design, beta_hat)?;
    b.files.retain(|(n, _)| n != SITE_STATS_FILE);
    let hw = design
        .rows
        .iter()
        .zip(&design.outcomes)
        .map(|(row, &y)| robust_weight(family, row, y, beta_hat, phi))
        .collect::<Result<Vec<S>>>()?;
    let robust = local_sscp(design, None, &hw)?;
    let stats = SiteStatContribution::compute(family, design, beta_hat)?;
    let scored = score_rows(family, design, beta_hat, phi)?;
    let n_k = design.n_obs().to_f64_lossless();
    let coarse = BinningPolicy::new(spec.groups, min_count, spec.max_numb_of_grp);
    let fine = BinningPolicy::finest(n_k, min_count, spec.max_numb_of_grp);
    let bins = residual_summary(&scored, family, &coarse, dp_cd)?;
    let bins_fine = residual_summary(&scored, family, &fine, dp_cd)?;
    debug!(
        "partner {dp_cd}: {} coarse and {} fine bins from {n_k} observations",
        bins.len(),
        bins_fine.len()
    );
    b.push(ROBUST_SSCP_FILE, robust.to_csv())
        .push(SITE_STATS_FINAL_FILE, stats.to_csv())
        .push(BINS_FILE, bins_to_csv(&bins))
        .push(BINS_FINE_FILE, bins_to_csv(&bins_fine));
    Ok((b, scored))
}

fn read_beta<S: Scalar>(bundle: &Bundle, labels: &[String]) -> Result<Vec<S>> {
    let (got, beta) = wire::read_vector::<S>(bundle.require(BETA_FILE)?)?;
    if got != labels {
        return Err(DraError::Protocol(format!(
            "coefficient labels [{}] do not match the design [{}]",
            got.join(" "),
            labels.join(" ")
        )));
    }
    Ok(beta)
}

impl<S: Scalar> Worker<S> {
    /// Worker that loads its dataset from `config.data_in_dir` on first use.
    pub fn new(config: WorkerConfig) -> Self {
        Self {
            config,
            preloaded: None,
            loaded: None,
        }
    }

    /// Worker holding its dataset in memory.
    pub fn with_dataset(config: WorkerConfig, data: AnalyticDataset<S>) -> Self {
        Self {
            config,
            preloaded: Some(data),
            loaded: None,
        }
    }

    pub fn dp_cd(&self) -> u32 {
        self.config.dp_cd
    }

    fn ensure_loaded(&mut self, spec: &ModelSpec) -> Result<&Loaded<S>> {
        let stale = match &self.loaded {
            Some(l) => {
                l.spec.reg_ds_in != spec.reg_ds_in
                    || l.spec.parameter_labels() != spec.parameter_labels()
                    || l.spec.dependent_var != spec.dependent_var
                    || l.spec.family != spec.family
                    || l.spec.freq_var != spec.freq_var
                    || l.spec.weight_var != spec.weight_var
                    || l.spec.test_env != spec.test_env
            }
            None => true,
        };
        if stale {
            let data = match &self.preloaded {
                Some(d) => d.clone(),
                None => {
                    let name = dataset_name(spec, self.config.dp_cd);
                    let path = resolve_dataset_path(&self.config.data_in_dir, &name)?;
                    info!("partner {}: reading {}", self.config.dp_cd, path.display());
                    AnalyticDataset::from_csv_path(self.config.dp_cd, &path)?
                }
            };
            let design = build_design(&data, spec)?;
            if design.is_empty() {
                return Err(DraError::InsufficientData(format!(
                    "data partner {} has no rows",
                    self.config.dp_cd
                )));
            }
            self.loaded = Some(Loaded {
                spec: spec.clone(),
                data,
                design,
            });
        }
        let l = self.loaded.as_mut().expect("just loaded");
        l.spec = spec.clone();
        Ok(l)
    }

    /// Handles one coordinator message.
    pub fn handle(&mut self, inbound: &Bundle) -> Result<WorkerReply<S>> {
        let params = ParamSet::decode(inbound.require(PARAMS_FILE)?)?;
        let spec = params.to_spec()?;
        let stop = params.flag("end_job_dp_in")?;
        let dp_cd = self.config.dp_cd;
        let min_count = self.config.effective_min_count(spec.min_count_per_grp_glob);
        let loaded = self.ensure_loaded(&spec)?;
        let beta = read_beta::<S>(inbound, &loaded.design.labels)?;
        if !stop {
            debug!("partner {dp_cd}: iteration {}", params.require("iter_nb")?);
            return Ok(WorkerReply {
                bundle: iteration_payload(spec.family, &loaded.design, &beta)?,
                finished: false,
                scored: None,
            });
        }
        let phi: S = match spec.family {
            Family::Logistic => S::one(),
            Family::Linear => wire::parse_num(params.require("dispersion")?)?,
        };
        let (bundle, scored) = final_payload(&spec, &loaded.design, &beta, phi, min_count, dp_cd)?;
        let mut out = loaded.data.clone();
        out.push_column(PRED_COLUMN, scored.iter().map(|r| r.mu).collect())?;
        out.push_column(RESID_COLUMN, scored.iter().map(|r| r.resid).collect())?;
        Ok(WorkerReply {
            bundle,
            finished: true,
            scored: Some(out),
        })
    }
}

pub fn scored_file_name(run_id: &str, dp_cd: u32) -> String {
    format!("{run_id}_scored_{dp_cd}.csv")
}

/// Receives, computes and publishes until the stop message has been served.
/// Any error is reported with `job_fail.ok` before it is returned.
pub fn run_worker<S: Scalar, L: WorkerLink>(worker: &mut Worker<S>, link: &mut L, dplocal: Option<&Path>) -> Result<()> {
    let dp_cd = worker.dp_cd();
    let result = (|| -> Result<()> {
        loop {
            let inbound = link.receive()?;
            let reply = worker.handle(&inbound)?;
            if let (Some(dir), Some(scored)) = (dplocal, &reply.scored) {
                let run_id = ParamSet::decode(inbound.require(PARAMS_FILE)?)?
                    .get("RunID")
                    .unwrap_or("run")
                    .to_string();
                scored.write_csv_path(&dir.join(scored_file_name(&run_id, dp_cd)))?;
            }
            link.publish(&reply.bundle)?;
            if reply.finished {
                return Ok(());
            }
        }
    })();
    match result {
        Ok(()) => {
            info!("partner {dp_cd}: done");
            link.finish(&Outcome::Success)
        }
        Err(DraError::Aborted) => Err(DraError::Aborted),
        Err(e) => {
            let _ = link.finish(&Outcome::Failure(e.to_string()));
            Err(e)
        }
    }
}
