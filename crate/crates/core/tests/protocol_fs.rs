mod common;

use std::thread;
use std::time::Duration;

use common::scenarios::*;
use common::*;
use distreg::protocol::{check_dir, drain, write_exchange, Arrival, Bundle, SSCP_FILE, TRIGGER_FILE};
use distreg::{DraError, Family};

fn pass(r: common::props::Outcome) {
    if let Err(e) = r {
        panic!("{e}");
    }
}

#[test]
fn filesystem_run_matches_local_mode_byte_for_byte() {
    for family in [Family::Linear, Family::Logistic] {
        let tmp = tempfile::tempdir().unwrap();
        pass(fs_matches_local(family, tmp.path()));
    }
}

#[test]
fn partner_replies_hold_only_aggregates_above_the_floor() {
    let tmp = tempfile::tempdir().unwrap();
    let inspected = audit_transcripts(tmp.path()).unwrap_or_else(|e| panic!("{e}"));
    assert!(inspected >= 6);
}

#[test]
fn writer_stopped_before_the_trigger_is_never_consumed() {
    let tmp = tempfile::tempdir().unwrap();
    pass(writer_killed_before_trigger(tmp.path()));
}

#[test]
fn ghost_manifest_entry_is_a_protocol_error() {
    let tmp = tempfile::tempdir().unwrap();
    pass(ghost_manifest_entry(tmp.path()));
}

#[test]
fn partner_failure_marker_stops_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    pass(partner_job_fail(tmp.path()));
}

#[test]
fn corrupt_partner_data_fails_without_a_payload() {
    let tmp = tempfile::tempdir().unwrap();
    let data = stage(tmp.path(), &boston_parts(&BOSTON_SIZES, SEED));
    std::fs::write(data.join("analytic_2.csv"), "crim,indus\n1,two\n").unwrap();
    let s = spec("dr1", Family::Linear, 3);
    let fs = run_fs(&s, &data, None, &tmp.path().join("fs"));
    assert!(matches!(fs.result, Err(DraError::PartnerFailed { dp_cd: 2, .. })), "{:?}", fs.result.err());
    assert!(fs.worker_results[1].is_err());
    let site2 = &fs.partners[1].1;
    assert!(!site2.msoc().join(TRIGGER_FILE).exists());
    assert!(!site2.msoc().join(SSCP_FILE).exists());
    assert!(output_files(&fs.coordinator.msoc(), "dr1").is_empty());
}

#[test]
fn consumer_only_sees_complete_payloads() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    let rounds = 60usize;
    let payload = |i: usize| {
        let mut b = Bundle::new();
        for f in 0..1 + i % 4 {
            let size = 1 + (i * 7919 + f * 104_729) % 200_000;
            b.push(format!("part{f}.csv"), vec![b'a' + (i % 26) as u8; size]);
        }
        b
    };
    let writer_dir = dir.clone();
    let writer = thread::spawn(move || {
        for i in 0..rounds {
            while writer_dir.join(TRIGGER_FILE).exists() {
                thread::sleep(Duration::from_micros(200));
            }
            thread::sleep(Duration::from_micros(((i * 31) % 7) as u64 * 150));
            write_exchange(&writer_dir, &payload(i)).unwrap();
        }
    });
    let mut seen = 0;
    while seen < rounds {
        match check_dir(&dir).unwrap() {
            Some(Arrival::Payload(names)) => {
                let got = drain(&dir, &names).unwrap();
                assert_eq!(got, payload(seen), "round {seen}");
                seen += 1;
            }
            Some(other) => panic!("unexpected {other:?}"),
            None => thread::sleep(Duration::from_micros(100)),
        }
    }
    writer.join().unwrap();
}
