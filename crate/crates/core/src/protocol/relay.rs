//! File transfer agent standing in for the exchange server: copies committed
//! exchanges from the coordinator's `inputfiles` to every partner's
//! `inputfiles`, and from each partner's `msoc` to the coordinator's
//! `msoc<dp_cd>`, forwarding terminal markers along the way.

use std::path::Path;
use std::time::Instant;

use super::exchange::{self, Outcome, PollPolicy, TRIGGER_FILE};
use super::layout::RequestLayout;
use crate::error::{DraError, Result};

#[derive(Debug, Clone)]
pub struct FileRelay {
    pub coordinator: RequestLayout,
    pub partners: Vec<(u32, RequestLayout)>,
    pub poll: PollPolicy,
}

fn forward_terminal(from: &Path, to: &Path) -> Result<Option<Outcome>> {
    let Some(outcome) = exchange::terminal_state(from) else {
        return Ok(None);
    };
    if exchange::terminal_state(to).is_none() {
        exchange::signal_terminal(to, &outcome)?;
    }
    Ok(Some(outcome))
}

/// Moves one committed exchange from `from` to `to` unless `to` still holds
/// an unconsumed one. Returns whether anything moved.
fn forward_payload(from: &Path, targets: &[&Path]) -> Result<bool> {
    if !from.join(TRIGGER_FILE).exists() || targets.iter().any(|t| t.join(TRIGGER_FILE).exists()) {
        return Ok(false);
    }
    let names = exchange::read_manifest(from)?;
    let bundle = exchange::read_listed(from, &names)?;
    for t in targets {
        exchange::write_exchange(t, &bundle)?;
    }
    exchange::drain(from, &names)?;
    Ok(true)
}

impl FileRelay {
    /// One pass over every directory. Returns the coordinator's outcome once
    /// the run is over and every marker has been delivered.
    pub fn tick(&self) -> Result<(bool, Option<Outcome>)> {
        let mut moved = false;
        let inbound: Vec<_> = self.partners.iter().map(|(_, l)| l.inputfiles()).collect();
        let targets: Vec<&Path> = inbound.iter().map(|p| p.as_path()).collect();
        moved |= forward_payload(&self.coordinator.inputfiles(), &targets)?;
        let mut partners_done = true;
        for (dp, layout) in &self.partners {
            let out = layout.msoc();
            let inbox = self.coordinator.msoc_for(*dp);
            moved |= forward_payload(&out, &[inbox.as_path()])?;
            if out.join(TRIGGER_FILE).exists() {
                partners_done = false;
                continue;
            }
            if forward_terminal(&out, &inbox)?.is_none() {
                partners_done = false;
            }
        }
        let coord = self.coordinator.inputfiles();
        let mut outcome = None;
        if !coord.join(TRIGGER_FILE).exists() {
            if let Some(o) = exchange::terminal_state(&coord) {
                for t in &inbound {
                    forward_terminal(&coord, t)?;
                }
                outcome = Some(o);
            }
        }
        let finished = match &outcome {
            Some(Outcome::Success) => partners_done,
            Some(Outcome::Failure(_)) => true,
            None => false,
        };
        Ok((moved, if finished { outcome } else { None }))
    }

    /// Runs until the coordinator has finished and all markers are delivered.
    pub fn run(&self) -> Result<Outcome> {
        let mut interval = self.poll.min;
        loop {
            let (moved, outcome) = self.tick()?;
            if let Some(o) = outcome {
                return Ok(o);
            }
            if moved {
                interval = self.poll.min;
                continue;
            }
            let now = Instant::now();
            if now >= self.poll.deadline {
                return Err(DraError::Timeout(self.coordinator.inputfiles().join(TRIGGER_FILE)));
            }
            std::thread::sleep(interval.min(self.poll.deadline - now));
            interval = (interval * 2).min(self.poll.max);
        }
    }
}
