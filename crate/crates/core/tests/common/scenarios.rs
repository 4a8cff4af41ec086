//! Transport scenarios shared by the protocol tests and the acceptance run.
//! Each returns `Err` with a description of what went wrong.

use std::path::Path;
use std::thread;
use std::time::Duration;

use distreg::coordinator::run_coordinator;
use distreg::local::run_local;
use distreg::protocol::{
    check_dir, signal_terminal, FsCoordinatorLink, Outcome, PollPolicy, RequestLayout, JOB_DONE_FILE, JOB_FAIL_FILE,
    MANIFEST_FILE, SSCP_FILE, TRIGGER_FILE,
};
use distreg::{DraError, Family};

use super::props::Outcome as Check;
use super::*;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// A filesystem run with one relay and three partner roots writes the same
/// bytes as local mode.
pub fn fs_matches_local(family: Family, base: &Path) -> Check {
    let run_id = match family {
        Family::Linear => "dr1",
        Family::Logistic => "dr2",
    };
    let data = stage(base, &boston_parts(&BOSTON_SIZES, SEED));
    let s = spec(run_id, family, 3);
    let fs = run_fs(&s, &data, None, &base.join("fs"));
    if let Err(e) = &fs.result {
        return Err(format!("filesystem run failed: {e}"));
    }
    for (i, r) in fs.worker_results.iter().enumerate() {
        ensure!(r.is_ok(), "partner {} failed: {:?}", i + 1, r);
    }
    let remote = output_files(&fs.coordinator.msoc(), run_id);
    run_local::<f64>(&s, worker_configs(&s, &data, None), &base.join("local")).map_err(|e| e.to_string())?;
    let local = output_files(&RequestLayout::new(base.join("local"), &s.request_id).msoc(), run_id);
    ensure!(remote.len() >= 13, "only {} output files", remote.len());
    let diff = differing(&remote, &local);
    ensure!(diff.is_empty(), "files differ: {diff:?}");
    for (dp, layout) in &fs.partners {
        let scored = layout.dplocal().join(format!("{run_id}_scored_{dp}.csv"));
        ensure!(scored.is_file(), "{} missing", scored.display());
        ensure!(layout.msoc().join(JOB_DONE_FILE).is_file(), "partner {dp} did not finish");
    }
    Ok(())
}

/// Every partner reply, from the archive of a filesystem run and from an
/// in-memory transcript, holds only aggregates with bins at the floor or
/// above. Returns the number of replies inspected.
pub fn audit_transcripts(base: &Path) -> Result<usize, String> {
    let parts = boston_parts(&BOSTON_SIZES, SEED);
    let data = stage(base, &parts);
    let s = spec("dr2", Family::Logistic, 3);
    let floor = s.min_count_per_grp_glob;
    let fs = run_fs(&s, &data, None, &base.join("fs"));
    let out = fs.result.map_err(|e| e.to_string())?;
    let mut inspected = 0;
    for (k, part) in parts.iter().enumerate() {
        let dp = k as u32 + 1;
        let replies = archived_replies(&fs.coordinator, dp);
        ensure!(replies.len() == out.exchanges, "partner {dp}: {} archived replies", replies.len());
        for reply in &replies {
            let problems = audit_reply(reply, part, &s, floor);
            ensure!(problems.is_empty(), "partner {dp}: {problems:?}");
            inspected += 1;
        }
    }
    let (_, transcript) = run_memory(&s, &parts, None, &base.join("mem"));
    for (dp, reply) in &transcript {
        let problems = audit_reply(reply, &parts[*dp as usize - 1], &s, floor);
        ensure!(problems.is_empty(), "partner {dp}: {problems:?}");
        inspected += 1;
    }
    Ok(inspected)
}

fn quick_poll(ms: u64) -> PollPolicy {
    PollPolicy::new(Duration::from_millis(1), Duration::from_millis(10), Duration::from_millis(ms))
}

/// Runs the center against a scripted partner 1 that does `act` in its
/// inbox once the first broadcast lands.
fn center_against(
    base: &Path,
    act: impl FnOnce(&Path) + Send + 'static,
    deadline_ms: u64,
) -> (distreg::Result<()>, RequestLayout) {
    let s = spec("dr1", Family::Linear, 3);
    let layout = RequestLayout::new(base, &s.request_id);
    layout.create_coordinator(&s.dp_cd_list).unwrap();
    let inbox = layout.msoc_for(1);
    let trigger = layout.inputfiles().join(TRIGGER_FILE);
    let partner = thread::spawn(move || {
        while !trigger.exists() {
            thread::sleep(Duration::from_millis(1));
        }
        act(&inbox);
    });
    let mut link = FsCoordinatorLink::new(layout.clone(), quick_poll(deadline_ms));
    let result = run_coordinator::<f64, _>(s, None, &mut link, &layout.msoc()).map(|_| ());
    partner.join().unwrap();
    (result, layout)
}

fn no_results(layout: &RequestLayout) -> Check {
    let left = output_files(&layout.msoc(), "dr1");
    ensure!(left.is_empty(), "partial results left behind: {:?}", left.keys());
    ensure!(layout.inputfiles().join(JOB_FAIL_FILE).is_file(), "partners were not told the run failed");
    Ok(())
}

/// A partner that wrote its payload and manifest but died before the
/// trigger: nothing is consumed and the center times out.
pub fn writer_killed_before_trigger(base: &Path) -> Check {
    let (result, layout) = center_against(
        base,
        |inbox| {
            std::fs::write(inbox.join(SSCP_FILE), b"half a matr").unwrap();
            std::fs::write(inbox.join(MANIFEST_FILE), format!("{SSCP_FILE}\n")).unwrap();
        },
        300,
    );
    ensure!(matches!(result, Err(DraError::Timeout(_))), "expected a timeout, got {result:?}");
    ensure!(check_dir(&layout.msoc_for(1)).ok() == Some(None), "untriggered payload was visible");
    ensure!(layout.msoc_for(1).join(SSCP_FILE).is_file(), "untriggered payload was consumed");
    no_results(&layout)
}

/// A committed manifest naming a file that is not there.
pub fn ghost_manifest_entry(base: &Path) -> Check {
    let (result, layout) = center_against(
        base,
        |inbox| {
            std::fs::write(inbox.join(MANIFEST_FILE), "ghost.csv\n").unwrap();
            std::fs::write(inbox.join(TRIGGER_FILE), b"").unwrap();
        },
        5_000,
    );
    match &result {
        Err(e @ DraError::Protocol(msg)) => {
            ensure!(msg.contains("ghost.csv"), "error does not name the file: {msg}");
            ensure!(e.exit_code() == 3, "exit code {}", e.exit_code());
        }
        other => return Err(format!("expected a protocol error, got {other:?}")),
    }
    no_results(&layout)
}

/// A partner that signals `job_fail.ok`.
pub fn partner_job_fail(base: &Path) -> Check {
    let (result, layout) = center_against(
        base,
        |inbox| signal_terminal(inbox, &Outcome::Failure("disk full".into())).unwrap(),
        5_000,
    );
    match &result {
        Err(DraError::PartnerFailed { dp_cd: 1, reason }) => {
            ensure!(reason == "disk full", "reason lost: {reason}");
        }
        other => return Err(format!("expected partner 1 to fail, got {other:?}")),
    }
    no_results(&layout)
}
