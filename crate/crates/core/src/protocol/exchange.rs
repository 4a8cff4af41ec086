//! Trigger/manifest exchange over a directory.
//!
//! A producer writes its payload files, then `file_list.csv`, then the empty
//! `files_done.ok`. A consumer that sees the trigger reads the manifest,
//! checks every listed file and moves the payload into an archive. The
//! trigger goes last, so a producer waiting on it never overwrites files
//! still being read.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::error::{DraError, Result};

pub const TRIGGER_FILE: &str = "files_done.ok";
pub const MANIFEST_FILE: &str = "file_list.csv";
pub const JOB_DONE_FILE: &str = "job_done.ok";
pub const JOB_FAIL_FILE: &str = "job_fail.ok";
pub const FAIL_REASON_FILE: &str = "job_fail_reason.txt";
pub const ARCHIVE_DIR: &str = "archive";

/// Ordered set of named files carried by one exchange.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Bundle {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, bytes: Vec<u8>) -> &mut Self {
        self.files.push((name.into(), bytes));
        self
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[u8]> {
        self.get(name)
            .ok_or_else(|| DraError::Protocol(format!("payload lacks `{name}`")))
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }
}

/// Poll interval starts at `min`, doubles after every empty check up to
/// `max`; waiting gives up at `deadline`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PollPolicy {
    pub min: Duration,
    pub max: Duration,
    pub deadline: Instant,
}

impl PollPolicy {
    pub fn new(min: Duration, max: Duration, run_time: Duration) -> Self {
        Self {
            min,
            max: max.max(min),
            deadline: Instant::now() + run_time,
        }
    }
}

/// How a party finished.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure(String),
}

/// What a watched directory produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arrival {
    Payload(Vec<String>),
    Done,
    Failed(String),
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| DraError::io(path, e))
}

fn check_name(name: &str) -> Result<()> {
    let reserved = [TRIGGER_FILE, MANIFEST_FILE, JOB_DONE_FILE, JOB_FAIL_FILE, FAIL_REASON_FILE];
    if name.is_empty() || name.contains(['/', '\\', '\n']) || name == ".." || reserved.contains(&name) {
        return Err(DraError::Protocol(format!("`{name}` is not a valid payload name")));
    }
    Ok(())
}

/// Writes payload, manifest and trigger, in that order.
pub fn write_exchange(dir: &Path, bundle: &Bundle) -> Result<()> {
    let trigger = dir.join(TRIGGER_FILE);
    if trigger.exists() {
        return Err(DraError::Protocol(format!(
            "stale trigger in {}: the previous exchange was not consumed",
            dir.display()
        )));
    }
    let mut manifest = String::new();
    for (name, bytes) in &bundle.files {
        check_name(name)?;
        write_file(&dir.join(name), bytes)?;
        manifest.push_str(name);
        manifest.push('\n');
    }
    write_file(&dir.join(MANIFEST_FILE), manifest.as_bytes())?;
    write_file(&trigger, b"")
}

pub fn parse_manifest(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Reads the manifest of a committed exchange and checks every listed file
/// exists. Does not touch the trigger.
pub fn read_manifest(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| DraError::io(&path, e))?;
    let names = parse_manifest(&text);
    for n in &names {
        check_name(n)?;
        if !dir.join(n).is_file() {
            return Err(DraError::Protocol(format!(
                "manifest in {} lists `{n}`, which does not exist",
                dir.display()
            )));
        }
    }
    Ok(names)
}

pub fn failure_reason(dir: &Path) -> String {
    std::fs::read_to_string(dir.join(FAIL_REASON_FILE))
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|_| "no reason given".into())
}

/// One non-blocking look at a directory. Failure dominates a pending
/// payload, which in turn comes before a success marker.
pub fn check_dir(dir: &Path) -> Result<Option<Arrival>> {
    if dir.join(JOB_FAIL_FILE).exists() {
        return Ok(Some(Arrival::Failed(failure_reason(dir))));
    }
    let trigger = dir.join(TRIGGER_FILE);
    if trigger.exists() {
        return Ok(Some(Arrival::Payload(read_manifest(dir)?)));
    }
    if dir.join(JOB_DONE_FILE).exists() {
        return Ok(Some(Arrival::Done));
    }
    Ok(None)
}

/// Polls until something arrives or the deadline passes.
pub fn watch_dir(dir: &Path, poll: &PollPolicy) -> Result<Arrival> {
    let mut interval = poll.min;
    loop {
        if let Some(a) = check_dir(dir)? {
            return Ok(a);
        }
        let now = Instant::now();
        if now >= poll.deadline {
            return Err(DraError::Timeout(dir.join(TRIGGER_FILE)));
        }
        std::thread::sleep(interval.min(poll.deadline - now));
        interval = (interval * 2).min(poll.max);
    }
}

/// Waits for a payload and returns its manifest; a failure marker or a
/// success marker without payload is a protocol error.
pub fn watch_for_trigger(dir: &Path, poll: &PollPolicy) -> Result<Vec<String>> {
    match watch_dir(dir, poll)? {
        Arrival::Payload(names) => Ok(names),
        Arrival::Failed(reason) => Err(DraError::Protocol(format!(
            "{} signalled failure: {reason}",
            dir.display()
        ))),
        Arrival::Done => Err(DraError::Protocol(format!(
            "{} finished without a payload",
            dir.display()
        ))),
    }
}

fn next_archive_slot(dir: &Path) -> Result<PathBuf> {
    let root = dir.join(ARCHIVE_DIR);
    std::fs::create_dir_all(&root).map_err(|e| DraError::io(&root, e))?;
    let used = std::fs::read_dir(&root).map_err(|e| DraError::io(&root, e))?.count();
    let slot = root.join(format!("{:04}", used + 1));
    std::fs::create_dir(&slot).map_err(|e| DraError::io(&slot, e))?;
    Ok(slot)
}

/// Reads the listed files, moves them with the manifest into the next
/// archive slot, then removes the trigger.
pub fn drain(dir: &Path, names: &[String]) -> Result<Bundle> {
    let bundle = read_listed(dir, names)?;
    let slot = next_archive_slot(dir)?;
    for n in names.iter().map(String::as_str).chain([MANIFEST_FILE]) {
        let from = dir.join(n);
        std::fs::rename(&from, slot.join(n)).map_err(|e| DraError::io(&from, e))?;
    }
    let trigger = dir.join(TRIGGER_FILE);
    match std::fs::remove_file(&trigger) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(DraError::io(&trigger, e)),
        _ => Ok(bundle),
    }
}

/// Reads the listed files without moving anything.
pub fn read_listed(dir: &Path, names: &[String]) -> Result<Bundle> {
    let mut bundle = Bundle::new();
    for n in names {
        let path = dir.join(n);
        let bytes = std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => DraError::Protocol(format!(
                "manifest in {} lists `{n}`, which is not there",
                dir.display()
            )),
            _ => DraError::io(&path, e),
        })?;
        bundle.push(n.clone(), bytes);
    }
    Ok(bundle)
}

/// Writes `job_done.ok`, or the reason file followed by `job_fail.ok`.
pub fn signal_terminal(dir: &Path, outcome: &Outcome) -> Result<()> {
    match outcome {
        Outcome::Success => write_file(&dir.join(JOB_DONE_FILE), b""),
        Outcome::Failure(reason) => {
            write_file(&dir.join(FAIL_REASON_FILE), reason.as_bytes())?;
            write_file(&dir.join(JOB_FAIL_FILE), b"")
        }
    }
}

/// Terminal state of a directory; failure wins when both markers exist.
pub fn terminal_state(dir: &Path) -> Option<Outcome> {
    if dir.join(JOB_FAIL_FILE).exists() {
        Some(Outcome::Failure(failure_reason(dir)))
    } else if dir.join(JOB_DONE_FILE).exists() {
        Some(Outcome::Success)
    } else {
        None
    }
}
