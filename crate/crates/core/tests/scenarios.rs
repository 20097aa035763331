use std::io::BufReader;

use smr_recovery::harness::{audit, report};
use smr_recovery::netsim::{run, run_with, Recording, RunOptions, ScenarioConfig, Trace, TraceRecord};
use smr_recovery::wrapper::ViewProposal;
use smr_recovery::{Payload, ProcessId};

fn scenario(name: &str) -> ScenarioConfig {
    let path = format!("{}/../../scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"));
    let cfg: ScenarioConfig = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    cfg.validate().unwrap();
    cfg
}

#[test]
fn every_shipped_scenario_passes_its_checks() {
    for name in [
        "passive",
        "partial-synchrony",
        "split-brain",
        "recovery-stall",
        "genesis-liar",
        "leader-equivocate",
        "combo",
    ] {
        let trace = run_with(&scenario(name), RunOptions { recording: Recording::Summary, check_agreement: false }).unwrap();
        let r = report(&trace);
        let failed: Vec<_> = r.checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{name}: {failed:?}");
    }
}

#[test]
fn stored_traces_replay_to_the_same_verdict() {
    let mut cfg = scenario("split-brain");
    cfg.horizon = 500;
    let trace = run(&cfg).unwrap();
    let file = tempfile::NamedTempFile::new().unwrap();
    trace.write_jsonl(file.as_file()).unwrap();
    let back = Trace::read_jsonl(BufReader::new(file.reopen().unwrap())).unwrap();
    assert_eq!(back.records.len(), trace.records.len());
    assert_eq!(back.summary, trace.summary);

    let audited = audit(&back).unwrap();
    assert!(audited.passed, "{:?}", audited.checks);
    assert_eq!(audited.violations, trace.summary.violations);
    assert_eq!(audited.agreement_mismatches, 0);
    assert!(audited.agreement_checks > 0);
}

#[test]
fn audit_catches_a_tampered_trace() {
    let mut cfg = scenario("passive");
    cfg.horizon = 120;
    let mut trace = run(&cfg).unwrap();
    let state = trace
        .records
        .iter_mut()
        .rev()
        .find_map(|r| match r {
            TraceRecord::State { log, .. } if !log.is_empty() => Some(log),
            _ => None,
        })
        .expect("some process finalized something");
    *state = state.truncated(0);
    let audited = audit(&trace).unwrap();
    assert!(!audited.passed);
    assert!(audited.agreement_mismatches > 0);
}

#[test]
fn summary_traces_cannot_be_audited() {
    let mut cfg = scenario("passive");
    cfg.horizon = 50;
    let trace = run_with(&cfg, RunOptions { recording: Recording::Summary, check_agreement: false }).unwrap();
    assert!(audit(&trace).is_err());
}

#[test]
fn an_equivocating_first_leader_costs_one_view() {
    // Process 4 is corrupted but stays loyal through the split, so it may lead
    // the first recovery view and equivocate there.
    let mut cfg = scenario("leader-equivocate");
    cfg.permutation = Some(vec![4, 6, 1, 2, 3, 5, 7, 8, 9]);
    cfg.horizon = 600;
    let trace = run(&cfg).unwrap();
    let mut first_view: Vec<&ViewProposal> = Vec::new();
    for rec in &trace.records {
        let payloads = match rec {
            TraceRecord::Send { payloads, .. } | TraceRecord::Deliver { payloads, .. } => payloads,
            _ => continue,
        };
        for p in payloads {
            if let Payload::ViewProposal(vp) = p.payload() {
                if vp.signer() == ProcessId(4) && vp.body().v == 1 && !first_view.contains(&vp) {
                    first_view.push(vp);
                }
            }
        }
    }
    assert_eq!(first_view.len(), 2, "two conflicting view-1 proposals");
    let r = report(&trace);
    assert!(r.passed, "{}", r.table());
    let rec = &r.recoveries[0];
    assert_eq!(rec.v0, Some(2));
    assert!(rec.within_bound());
}

#[test]
fn start_offsets_are_tolerated() {
    let mut cfg = scenario("split-brain");
    cfg.start_offsets = [(5, 3), (6, 10), (9, 7)].into();
    let r = report(&run_with(&cfg, RunOptions { recording: Recording::Summary, check_agreement: true }).unwrap());
    assert!(r.passed, "{}", r.table());
}
