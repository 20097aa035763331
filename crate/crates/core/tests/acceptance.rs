//! Acceptance criteria 1 to 11, one verdict line each. Runs as a plain binary
//! so the lines are printed whether or not the run succeeds.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use smr_recovery::base::has_violation;
use smr_recovery::harness::{
    measure_rollback, ratio, report, resilience_schedule, sweep, RunReport,
};
use smr_recovery::netsim::{run_with, Recording, RunOptions, ScenarioConfig, TraceRecord};
use smr_recovery::{count_violations, Log, Timeslot};

const STRATEGIES: [&str; 6] = [
    "passive",
    "split-brain",
    "recovery-stall",
    "genesis-liar",
    "leader-equivocate",
    "combo",
];

fn scenario(name: &str) -> ScenarioConfig {
    let path = format!("{}/../../scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn with_delta_star(mut cfg: ScenarioConfig, ds: Timeslot) -> ScenarioConfig {
    cfg.delta_star = Some(ds);
    if ds > 10 {
        cfg.horizon = 2000;
        if let Some(s) = cfg.tx_stream.as_mut() {
            s.until = 1600;
        }
    }
    cfg
}

fn run_report(cfg: &ScenarioConfig, seed: u64) -> RunReport {
    let cfg = ScenarioConfig { seed, ..cfg.clone() };
    let opts = RunOptions { recording: Recording::Summary, check_agreement: true };
    report(&run_with(&cfg, opts).expect("valid scenario"))
}

fn failed(r: &RunReport, names: &[&str]) -> Vec<String> {
    r.checks
        .iter()
        .filter(|c| !c.passed && names.contains(&c.name.as_str()))
        .map(|c| format!("seed {}: {} ({})", r.seed, c.name, c.detail))
        .collect()
}

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(problems: Vec<String>, ok: String) -> Verdict {
    match problems.first() {
        None => Verdict { passed: true, detail: ok },
        Some(first) => Verdict {
            passed: false,
            detail: format!("{} problems, first: {first}", problems.len()),
        },
    }
}

/// Every report produced along the way, for the criteria that range over all
/// acceptance traces.
#[derive(Default)]
struct Pool {
    reports: Vec<(String, Timeslot, usize, RunReport)>,
}

impl Pool {
    fn add(&mut self, label: &str, cfg: &ScenarioConfig, r: RunReport) -> &RunReport {
        let ds = cfg.delta_star.unwrap_or(cfg.delta);
        self.reports.push((label.to_string(), ds, r.faulty.len(), r));
        &self.reports.last().unwrap().3
    }
}

fn criterion_1() -> Verdict {
    let t = ratio(1, 3);
    let want = [(ratio(1, 3), ratio(1, 3)), (ratio(5, 9), ratio(5, 9)), (ratio(2, 3), ratio(2, 3)), (ratio(2, 3), ratio(2, 3))];
    let problems = want
        .iter()
        .enumerate()
        .filter_map(|(r, w)| {
            let got = resilience_schedule(&t, &t, r as u32).unwrap();
            (got != *w).then(|| format!("r={r}: got {:?}", got))
        })
        .collect();
    verdict(problems, "(1/3, 1/3), (5/9, 5/9), (2/3, 2/3), (2/3, 2/3) for r = 0..3".into())
}

fn criterion_2(pool: &mut Pool) -> Verdict {
    let cfg = scenario("split-brain");
    let mut problems = Vec::new();
    for seed in 0..50 {
        let r = pool.add("split-brain", &cfg, run_report(&cfg, seed));
        if r.violations != 1 || r.chain_violations != 1 {
            problems.push(format!("seed {seed}: {} violations ({} along the chain)", r.violations, r.chain_violations));
        }
        match r.recoveries.as_slice() {
            [m] if m.end.is_some() && m.removed.len() >= 3 => {}
            other => problems.push(format!("seed {seed}: recoveries {other:?}")),
        }
        problems.extend(failed(r, &["removal_soundness", "violation_bound", "recovery_exit_agreement"]));
    }
    verdict(problems, "50 seeds: 1 violation, one finished recovery removing >= 3 guilty, no more".into())
}

fn criterion_3(pool: &mut Pool) -> Verdict {
    let cfg = scenario("combo");
    let mut problems = Vec::new();
    let mut hist = BTreeMap::new();
    for seed in 0..50 {
        let r = pool.add("combo", &cfg, run_report(&cfg, seed));
        *hist.entry(r.violations).or_insert(0) += 1;
        if r.violations > 2 {
            problems.push(format!("seed {seed}: {} violations", r.violations));
        }
        problems.extend(failed(r, &["liveness", "violation_bound"]));
    }
    verdict(problems, format!("50 seeds, violations per run {hist:?}, liveness after recovery"))
}

fn criterion_4(pool: &mut Pool) -> Verdict {
    let mut problems = Vec::new();
    let mut worst: BTreeMap<Timeslot, Timeslot> = BTreeMap::new();
    for ds in [5, 10, 20] {
        for name in STRATEGIES {
            let cfg = with_delta_star(scenario(name), ds);
            for seed in 0..3 {
                let r = pool.add(name, &cfg, run_report(&cfg, seed));
                match r.rollback_observed {
                    Some(h) if h < 2 * ds => {
                        let w = worst.entry(ds).or_insert(0);
                        *w = (*w).max(h);
                    }
                    other => problems.push(format!("{name} ds={ds} seed {seed}: rollback {other:?}")),
                }
            }
        }
    }
    // Negative control: the existing split-brain trace, with one process made
    // to hold a doomed prefix for 2Δ* before dropping it.
    let cfg = ScenarioConfig { horizon: 300, ..scenario("split-brain") };
    let mut trace = run_with(&cfg, RunOptions { recording: Recording::Summary, check_agreement: false }).unwrap();
    let ds = cfg.delta_star.unwrap();
    let doomed = Log::from_txs([smr_recovery::Transaction::new("never-final")]);
    let victim = *smr_recovery::harness::correct_processes(&trace).first().unwrap();
    let at = |t| TraceRecord::State { t, process: victim, local_t: t, r: 1, rec: false, log: doomed.clone(), log_star: Log::empty() };
    let last = trace.records.iter().rposition(|r| matches!(r, TraceRecord::State { process, .. } if *process == victim)).unwrap();
    let TraceRecord::State { log: final_log, .. } = trace.records[last].clone() else { unreachable!() };
    trace.records.push(at(cfg.horizon - 2 * ds - 5));
    trace.records.push(TraceRecord::State {
        t: cfg.horizon - 5,
        process: victim,
        local_t: cfg.horizon - 5,
        r: 2,
        rec: false,
        log: final_log,
        log_star: Log::empty(),
    });
    let control = measure_rollback(&trace);
    if !matches!(control, Ok(h) if h >= 2 * ds) {
        problems.push(format!("negative control not flagged: {control:?}"));
    }
    verdict(problems, format!("worst rollback per Δ* {worst:?}; negative control flagged"))
}

fn criterion_5(pool: &Pool) -> Verdict {
    let mut problems = Vec::new();
    let mut count = 0;
    for (label, ds, f, r) in &pool.reports {
        for m in &r.recoveries {
            count += 1;
            let worst = 2 * ds + 8 * (*f as Timeslot + 1) * ds;
            match (m.duration, m.bound) {
                (Some(d), Some(b)) if d <= b && d <= worst => {}
                _ => problems.push(format!("{label} seed {} r={}: {:?} vs {:?} / {worst}", r.seed, m.r, m.duration, m.bound)),
            }
        }
    }
    verdict(problems, format!("{count} recoveries within 2Δ*+8·v0·Δ* and 2Δ*+8(f+1)Δ*"))
}

fn criterion_6() -> Verdict {
    let mut cfg = scenario("split-brain");
    cfg.horizon = 600;
    if let Some(s) = cfg.tx_stream.as_mut() {
        s.until = 500;
    }
    let sweep = sweep(&cfg, 0..200).unwrap();
    let mut problems: Vec<String> = sweep
        .v0_tail
        .iter()
        .filter(|p| !p.passed)
        .map(|p| format!("d={}: {:.3} > {:.3}", p.d, p.observed, p.bound))
        .collect();
    let missing = sweep.outcomes.iter().filter(|o| o.v0.is_none()).count();
    if missing > 0 || sweep.v0_tail.len() < 5 {
        problems.push(format!("{missing} runs without a recovery"));
    }
    let shown: Vec<String> = sweep.v0_tail.iter().map(|p| format!("d={} {:.3}<={:.3}", p.d, p.observed, p.bound)).collect();
    verdict(problems, format!("200 seeds: {}", shown.join(", ")))
}

fn criterion_7(pool: &Pool) -> Verdict {
    let checks: u64 = pool.reports.iter().map(|r| r.3.agreement_checks).sum();
    let mismatches: u64 = pool.reports.iter().map(|r| r.3.agreement_mismatches).sum();
    let mut problems = Vec::new();
    if mismatches > 0 {
        problems.push(format!("{mismatches} mismatches"));
    }
    if checks < 100_000 {
        problems.push(format!("only {checks} checks"));
    }
    verdict(problems, format!("0 mismatches in {checks} checks over {} traces", pool.reports.len()))
}

fn criterion_8(pool: &Pool) -> Verdict {
    let problems = pool
        .reports
        .iter()
        .flat_map(|(label, _, _, r)| {
            failed(r, &["unique_finish_qc", "recovery_exit_agreement", "recovery_entry_spread"])
                .into_iter()
                .map(move |p| format!("{label} {p}"))
        })
        .collect();
    let recoveries: usize = pool.reports.iter().map(|r| r.3.recoveries.len()).sum();
    verdict(problems, format!("{recoveries} recoveries: one finish-QC'd proposal each, agreeing exits within Δ*"))
}

fn criterion_9() -> Verdict {
    let keys = keys();
    let inst = instance();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut problems = Vec::new();
    let mut violated = 0;
    let mut chains = 0;
    for i in 0..1000 {
        let len = rng.gen_range(1..=12);
        let mut msgs = build(&random_specs(&mut rng, len.min(10)), &keys);
        if len > 10 {
            let sigma: Vec<u8> = (0..rng.gen_range(0..3)).map(|_| rng.gen_range(0..3)).collect();
            msgs.extend(finish_votes(&keys, &sigma, &[1, 2, 3][..len - 10]));
        }
        let set: smr_recovery::MessageSet = msgs.iter().cloned().collect();
        let fast = has_violation(&inst, &set);
        violated += fast as usize;
        if fast != has_violation_brute(&inst, &msgs) {
            problems.push(format!("set {i}: has_violation {fast}"));
        }
        if i % 4 == 0 {
            chains += 1;
            let chain = random_chain(&mut rng, &msgs);
            let fast = count_violations(&chain, &members(), &Log::empty()).unwrap();
            let slow = count_violations_brute(&chain);
            if fast != slow {
                problems.push(format!("chain {i}: count_violations {fast}, brute force {slow}"));
            }
        }
    }
    verdict(problems, format!("1000 sets ({violated} violated), {chains} chains agree with exhaustive search"))
}

fn criterion_10(pool: &mut Pool) -> Verdict {
    let cfg = scenario("partial-synchrony");
    let mut problems = Vec::new();
    let mut checked = 0;
    for seed in 0..20 {
        let r = pool.add("partial-synchrony", &cfg, run_report(&cfg, seed));
        checked += r.liveness.checked;
        if r.violations != 0 || !r.recoveries.is_empty() {
            problems.push(format!("seed {seed}: {} violations", r.violations));
        }
        if r.liveness.pending > 0 && r.liveness.checked == 0 {
            problems.push(format!("seed {seed}: nothing checkable"));
        }
        problems.extend(failed(r, &["liveness", "local_agreement"]));
    }
    verdict(problems, format!("20 seeds, GST=500, no violations, {checked} transactions on time"))
}

fn criterion_11() -> Verdict {
    let mut problems = Vec::new();
    for name in STRATEGIES.iter().chain(&["partial-synchrony"]) {
        let cfg = ScenarioConfig { horizon: 400, seed: 7, ..scenario(name) };
        let digest = |recording, check_agreement| run_with(&cfg, RunOptions { recording, check_agreement }).unwrap().summary.digest;
        let full = digest(Recording::Full, true);
        if full != digest(Recording::Full, true) || full != digest(Recording::Summary, false) {
            problems.push(format!("{name}: digests differ"));
        }
    }
    verdict(problems, "7 scenarios: identical digests across repeats and recording modes".into())
}

fn main() -> ExitCode {
    let mut pool = Pool::default();
    let mut all = true;
    let mut line = |n: u32, title: &str, run: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = run();
        all &= v.passed;
        println!(
            "criterion {n:>2} {:<4} {title}: {} [{:.1}s]",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    };
    line(1, "resilience schedule", &mut criterion_1);
    line(2, "one-violation regime", &mut || criterion_2(&mut pool));
    line(3, "two-violation regime", &mut || criterion_3(&mut pool));
    line(4, "rollback bound", &mut || criterion_4(&mut pool));
    line(10, "partial-synchrony baseline", &mut || criterion_10(&mut pool));
    line(5, "recovery time", &mut || criterion_5(&pool));
    line(6, "probabilistic recovery time", &mut criterion_6);
    line(7, "local log agrees with global finalization", &mut || criterion_7(&pool));
    line(8, "unique finish-QC, agreeing exits", &mut || criterion_8(&pool));
    line(9, "brute-force detector equivalence", &mut criterion_9);
    line(11, "determinism", &mut criterion_11);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
