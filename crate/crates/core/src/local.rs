//! Single-process test mode: the coordinator and every partner share one
//! request directory and take turns.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;

use crate::config::{ModelSpec, WorkerConfig};
use crate::coordinator::{load_initial_estimates, run_coordinator, FitOutputs};
use crate::error::{DraError, Result};
use crate::protocol::exchange::{check_dir, drain, read_listed, read_manifest, signal_terminal, write_exchange};
use crate::protocol::{Arrival, Bundle, CoordinatorLink, Outcome, ParamSet, RequestLayout, PARAMS_FILE, TRIGGER_FILE};
use crate::scalar::Scalar;
use crate::worker::{scored_file_name, Worker};

/// Coordinator link that runs each partner inline when its reply is
/// collected. Partners write into `msoc<dp_cd>` exactly as the transfer
/// agent would.
pub struct LocalLink<S> {
    layout: RequestLayout,
    workers: BTreeMap<u32, Worker<S>>,
}

impl<S: Scalar> LocalLink<S> {
    pub fn new(layout: RequestLayout, workers: Vec<Worker<S>>) -> Self {
        Self {
            layout,
            workers: workers.into_iter().map(|w| (w.dp_cd(), w)).collect(),
        }
    }

    fn retire_broadcast(&self) -> Result<()> {
        let dir = self.layout.inputfiles();
        if dir.join(TRIGGER_FILE).exists() {
            if let Some(Arrival::Payload(names)) = check_dir(&dir)? {
                drain(&dir, &names)?;
            }
        }
        Ok(())
    }

    fn run_partner(&mut self, dp_cd: u32) -> Result<Bundle> {
        let dir = self.layout.inputfiles();
        let inbound = read_listed(&dir, &read_manifest(&dir)?)?;
        let worker = self
            .workers
            .get_mut(&dp_cd)
            .ok_or_else(|| DraError::Config(format!("no worker configured for partner {dp_cd}")))?;
        let reply = worker.handle(&inbound)?;
        if let Some(scored) = &reply.scored {
            let run_id = ParamSet::decode(inbound.require(PARAMS_FILE)?)?
                .get("RunID")
                .unwrap_or("run")
                .to_string();
            scored.write_csv_path(&self.layout.dplocal().join(scored_file_name(&run_id, dp_cd)))?;
        }
        Ok(reply.bundle)
    }
}

impl<S: Scalar> CoordinatorLink for LocalLink<S> {
    fn broadcast(&mut self, bundle: &Bundle) -> Result<()> {
        self.retire_broadcast()?;
        write_exchange(&self.layout.inputfiles(), bundle)
    }

    fn collect(&mut self, dp_cd: u32) -> Result<Bundle> {
        let inbox = self.layout.msoc_for(dp_cd);
        match self.run_partner(dp_cd) {
            Ok(reply) => write_exchange(&inbox, &reply)?,
            Err(e) => signal_terminal(&inbox, &Outcome::Failure(e.to_string()))?,
        }
        match check_dir(&inbox)? {
            Some(Arrival::Payload(names)) => drain(&inbox, &names),
            Some(Arrival::Failed(reason)) => Err(DraError::PartnerFailed { dp_cd, reason }),
            _ => Err(DraError::Protocol(format!("data partner {dp_cd} produced nothing"))),
        }
    }

    fn finish(&mut self, outcome: &Outcome) -> Result<()> {
        self.retire_broadcast()?;
        if *outcome == Outcome::Success {
            for dp in self.workers.keys() {
                signal_terminal(&self.layout.msoc_for(*dp), &Outcome::Success)?;
            }
        }
        signal_terminal(&self.layout.inputfiles(), outcome)
    }
}

/// Runs a whole fit in one process under `root/<request_id>`. Each partner
/// reads `<reg_ds_in>_<dp_cd>` from its configured data directory.
pub fn run_local<S: Scalar>(spec: &ModelSpec, configs: Vec<WorkerConfig>, root: &Path) -> Result<FitOutputs<S>> {
    let mut spec = spec.clone();
    spec.test_env = true;
    let layout = RequestLayout::new(root, &spec.request_id);
    layout.create_coordinator(&spec.dp_cd_list)?;
    let mut workers: Vec<Worker<S>> = Vec::with_capacity(configs.len());
    for c in configs {
        c.validate()?;
        workers.push(Worker::new(c));
    }
    let beta0 = match &spec.initial_estimates {
        Some(p) => Some(load_initial_estimates(&PathBuf::from(p), &spec.parameter_labels())?),
        None => None,
    };
    let out_dir = layout.msoc();
    info!("test mode run {} in {}", spec.run_id, layout.request_dir().display());
    let mut link = LocalLink::new(layout, workers);
    run_coordinator(spec, beta0, &mut link, &out_dir)
}
