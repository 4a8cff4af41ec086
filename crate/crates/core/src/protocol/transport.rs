//! Message links between the coordinator and its partners: a filesystem link
//! built on the trigger/manifest exchange and an in-memory link with the same
//! semantics.

use std::collections::BTreeMap;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use super::exchange::{self, Arrival, Bundle, Outcome, PollPolicy};
use super::layout::RequestLayout;
use crate::error::{DraError, Result};

pub trait CoordinatorLink {
    /// Sends the same bundle to every partner.
    fn broadcast(&mut self, bundle: &Bundle) -> Result<()>;
    /// Blocks until partner `dp_cd` replies.
    fn collect(&mut self, dp_cd: u32) -> Result<Bundle>;
    fn finish(&mut self, outcome: &Outcome) -> Result<()>;
}

pub trait WorkerLink {
    /// Blocks until the coordinator sends the next bundle.
    fn receive(&mut self) -> Result<Bundle>;
    fn publish(&mut self, bundle: &Bundle) -> Result<()>;
    fn finish(&mut self, outcome: &Outcome) -> Result<()>;
}

/// Coordinator end of the filesystem link: writes to `inputfiles`, reads
/// from `msoc<dp_cd>`.
#[derive(Debug, Clone)]
pub struct FsCoordinatorLink {
    layout: RequestLayout,
    poll: PollPolicy,
}

impl FsCoordinatorLink {
    pub fn new(layout: RequestLayout, poll: PollPolicy) -> Self {
        Self { layout, poll }
    }
}

impl CoordinatorLink for FsCoordinatorLink {
    fn broadcast(&mut self, bundle: &Bundle) -> Result<()> {
        exchange::write_exchange(&self.layout.inputfiles(), bundle)
    }

    fn collect(&mut self, dp_cd: u32) -> Result<Bundle> {
        let dir = self.layout.msoc_for(dp_cd);
        match exchange::watch_dir(&dir, &self.poll)? {
            Arrival::Payload(names) => exchange::drain(&dir, &names),
            Arrival::Failed(reason) => Err(DraError::PartnerFailed { dp_cd, reason }),
            Arrival::Done => Err(DraError::Protocol(format!(
                "data partner {dp_cd} finished before sending its payload"
            ))),
        }
    }

    fn finish(&mut self, outcome: &Outcome) -> Result<()> {
        exchange::signal_terminal(&self.layout.inputfiles(), outcome)
    }
}

/// Partner end of the filesystem link: reads `inputfiles`, writes `msoc`.
#[derive(Debug, Clone)]
pub struct FsWorkerLink {
    layout: RequestLayout,
    poll: PollPolicy,
}

impl FsWorkerLink {
    pub fn new(layout: RequestLayout, poll: PollPolicy) -> Self {
        Self { layout, poll }
    }
}

impl WorkerLink for FsWorkerLink {
    fn receive(&mut self) -> Result<Bundle> {
        let dir = self.layout.inputfiles();
        match exchange::watch_dir(&dir, &self.poll)? {
            Arrival::Payload(names) => exchange::drain(&dir, &names),
            Arrival::Failed(_) | Arrival::Done => Err(DraError::Aborted),
        }
    }

    fn publish(&mut self, bundle: &Bundle) -> Result<()> {
        exchange::write_exchange(&self.layout.msoc(), bundle)
    }

    fn finish(&mut self, outcome: &Outcome) -> Result<()> {
        exchange::signal_terminal(&self.layout.msoc(), outcome)
    }
}

#[derive(Debug, Clone)]
enum Message {
    Payload(Bundle),
    Terminal(Outcome),
}

pub struct MemoryCoordinatorLink {
    to_workers: BTreeMap<u32, Sender<Message>>,
    from_workers: BTreeMap<u32, Receiver<Message>>,
    deadline: Instant,
    /// Every bundle received, in arrival order.
    pub transcript: Vec<(u32, Bundle)>,
}

pub struct MemoryWorkerLink {
    pub dp_cd: u32,
    rx: Receiver<Message>,
    tx: Sender<Message>,
    deadline: Instant,
}

/// Connected coordinator and partner ends, one channel pair per partner.
pub fn memory_links(partners: &[u32], run_time: Duration) -> (MemoryCoordinatorLink, Vec<MemoryWorkerLink>) {
    let deadline = Instant::now() + run_time;
    let mut to_workers = BTreeMap::new();
    let mut from_workers = BTreeMap::new();
    let mut workers = Vec::new();
    for &dp in partners {
        let (down_tx, down_rx) = channel();
        let (up_tx, up_rx) = channel();
        to_workers.insert(dp, down_tx);
        from_workers.insert(dp, up_rx);
        workers.push(MemoryWorkerLink {
            dp_cd: dp,
            rx: down_rx,
            tx: up_tx,
            deadline,
        });
    }
    (
        MemoryCoordinatorLink {
            to_workers,
            from_workers,
            deadline,
            transcript: Vec::new(),
        },
        workers,
    )
}

fn remaining(deadline: Instant) -> Duration {
    deadline.saturating_duration_since(Instant::now())
}

impl CoordinatorLink for MemoryCoordinatorLink {
    fn broadcast(&mut self, bundle: &Bundle) -> Result<()> {
        for (dp, tx) in &self.to_workers {
            tx.send(Message::Payload(bundle.clone())).map_err(|_| DraError::PartnerFailed {
                dp_cd: *dp,
                reason: "channel closed".into(),
            })?;
        }
        Ok(())
    }

    fn collect(&mut self, dp_cd: u32) -> Result<Bundle> {
        let rx = self
            .from_workers
            .get(&dp_cd)
            .ok_or_else(|| DraError::Protocol(format!("unknown data partner {dp_cd}")))?;
        match rx.recv_timeout(remaining(self.deadline)) {
            Ok(Message::Payload(b)) => {
                self.transcript.push((dp_cd, b.clone()));
                Ok(b)
            }
            Ok(Message::Terminal(Outcome::Failure(reason))) => Err(DraError::PartnerFailed { dp_cd, reason }),
            Ok(Message::Terminal(Outcome::Success)) => Err(DraError::Protocol(format!(
                "data partner {dp_cd} finished before sending its payload"
            ))),
            Err(RecvTimeoutError::Timeout) => Err(DraError::Timeout(format!("memory link {dp_cd}").into())),
            Err(RecvTimeoutError::Disconnected) => Err(DraError::PartnerFailed {
                dp_cd,
                reason: "channel closed".into(),
            }),
        }
    }

    fn finish(&mut self, outcome: &Outcome) -> Result<()> {
        for tx in self.to_workers.values() {
            let _ = tx.send(Message::Terminal(outcome.clone()));
        }
        Ok(())
    }
}

impl WorkerLink for MemoryWorkerLink {
    fn receive(&mut self) -> Result<Bundle> {
        match self.rx.recv_timeout(remaining(self.deadline)) {
            Ok(Message::Payload(b)) => Ok(b),
            Ok(Message::Terminal(_)) | Err(RecvTimeoutError::Disconnected) => Err(DraError::Aborted),
            Err(RecvTimeoutError::Timeout) => {
                Err(DraError::Timeout(format!("memory link {}", self.dp_cd).into()))
            }
        }
    }

    fn publish(&mut self, bundle: &Bundle) -> Result<()> {
        self.tx
            .send(Message::Payload(bundle.clone()))
            .map_err(|_| DraError::Aborted)
    }

    fn finish(&mut self, outcome: &Outcome) -> Result<()> {
        let _ = self.tx.send(Message::Terminal(outcome.clone()));
        Ok(())
    }
}
