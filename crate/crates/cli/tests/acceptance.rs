//! Acceptance checks 1-8. Prints one PASS/FAIL line per criterion.
//!
//! The run fails only on errors; a criterion that is not met is reported
//! as FAIL without failing `cargo test`. Set `ACCEPTANCE_STRICT=1` to turn
//! any FAIL into a test failure.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::*;
use nalgebra::DMatrix;
use noma_core::harness::{read_csv, sweep, sweep_with_trials, ActiveCount, Detector, GridPoint, MetricsRecord, RunConfig};
use noma_core::messages::{self, NumericalEvents};
use noma_core::noncoherent::{gaussian_project, DataConfig, DataState, LambdaMode, VarianceMode};
use noma_core::rng::{complex_normal, substream};
use noma_core::sbl::{shape_estimate, SblConfig, SblState};
use noma_core::{harness, run_data_detection, DpskAlphabet};
use num_complex::Complex64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn noma() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noma"))
}

fn criterion_1() -> Outcome {
    let cfg = RunConfig {
        users: 20,
        active: ActiveCount::Count(2),
        spread_len: vec![13],
        antennas: vec![8],
        order: 4,
        snr_db: vec![100.0],
        trials: 100,
        detectors: vec![Detector::Bpmf],
        ..RunConfig::default()
    };
    let r = &sweep(&cfg).expect("sweep")[0];
    let pass = r.misses == 0 && r.false_alarms == 0 && r.bit_errors == 0;
    outcome(
        pass,
        format!("misses {} false {} bit errors {} over {} bits", r.misses, r.false_alarms, r.bit_errors, r.bits),
    )
}

const C2_ARGS: &[&str] = &[
    "simulate",
    "--users",
    "100",
    "--active",
    "10",
    "--antennas",
    "100,50",
    "--spread-len",
    "11,13",
    "--snr-db",
    "8",
    "--seed",
    "42",
    "--detector",
    "bpmf",
];

fn run_c2(out: &Path, trials: usize) -> Vec<MetricsRecord> {
    let status = noma()
        .args(C2_ARGS)
        .args(["--trials", &trials.to_string(), "--out"])
        .arg(out)
        .status()
        .expect("launch noma");
    assert!(status.success());
    read_csv(out).expect("read CSV")
}

fn find(records: &[MetricsRecord], l: usize, n: usize) -> &MetricsRecord {
    records
        .iter()
        .find(|r| r.spread_len == l && r.antennas == n)
        .expect("grid point present")
}

/// `(separated, description)` for "rate at `good` < rate at `bad`".
fn separated(good: (usize, usize), bad: (usize, usize)) -> (bool, String) {
    let g = wilson(good.0, good.1, Z90);
    let b = wilson(bad.0, bad.1, Z90);
    (
        g.1 < b.0,
        format!("{}/{} [{:.1e},{:.1e}] vs {}/{} [{:.1e},{:.1e}]", good.0, good.1, g.0, g.1, bad.0, bad.1, b.0, b.1),
    )
}

fn c2_checks(records: &[MetricsRecord]) -> (bool, Vec<String>) {
    let best = find(records, 13, 100);
    let mut all = true;
    let mut lines = Vec::new();
    for (name, other) in [("L=11", find(records, 11, 100)), ("N=50", find(records, 13, 50))] {
        let (m_ok, m) = separated((best.misses, best.active_total), (other.misses, other.active_total));
        let (f_ok, f) = separated((best.false_alarms, best.inactive_total), (other.false_alarms, other.inactive_total));
        all &= m_ok && f_ok;
        lines.push(format!("vs {name}: miss {m} {}; false {f} {}", ok(m_ok), ok(f_ok)));
    }
    (all, lines)
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "overlap"
    }
}

fn criterion_2(dir: &Path) -> (Outcome, Vec<MetricsRecord>) {
    let first = run_c2(&dir.join("c2_300.csv"), 300);
    let (mut pass, mut lines) = c2_checks(&first);
    let mut trials = 300;
    if !pass {
        let more = run_c2(&dir.join("c2_1000.csv"), 1000);
        (pass, lines) = c2_checks(&more);
        trials = 1000;
    }
    (outcome(pass, format!("{trials} trials; {}", lines.join("; "))), first)
}

fn strip_seconds(text: &str) -> String {
    let header: Vec<&str> = text.lines().next().unwrap_or("").split(',').collect();
    let col = header.iter().position(|h| *h == "seconds").expect("seconds column");
    text.lines()
        .map(|line| {
            let mut cells: Vec<&str> = line.split(',').collect();
            cells.remove(col);
            cells.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn criterion_8(dir: &Path) -> Outcome {
    let a = std::fs::read_to_string(dir.join("c2_300.csv")).expect("first run");
    run_c2(&dir.join("c2_again.csv"), 300);
    let b = std::fs::read_to_string(dir.join("c2_again.csv")).expect("second run");
    let same = strip_seconds(&a) == strip_seconds(&b);
    outcome(same, format!("{} bytes compared without the seconds column", a.len()))
}

fn criterion_3() -> Outcome {
    let cfg = RunConfig {
        users: 100,
        active: ActiveCount::Count(10),
        spread_len: vec![11],
        antennas: vec![100],
        snr_db: vec![-1.0, 0.0, 1.0, 2.0, 3.0, 4.0],
        trials: 300,
        detectors: vec![Detector::Oracle, Detector::Bpmf, Detector::Conventional],
        ..RunConfig::default()
    };
    let (records, raw) = sweep_with_trials(&cfg).expect("sweep");
    let ber = |i: usize, d: usize| records[3 * i + d].ber.unwrap_or(0.0);
    let mut pass = true;
    let mut used = Vec::new();
    for (i, &snr) in cfg.snr_db.iter().enumerate() {
        let (o, p, c) = (ber(i, 0), ber(i, 1), ber(i, 2));
        if !(1e-3..=3e-2).contains(&p) {
            continue;
        }
        let errors = |d: usize| -> Vec<f64> { raw[i].iter().map(|t| t.scores[d].1.bit_errors as f64).collect() };
        let z = paired_z(&errors(2), &errors(1));
        let point_ok = o <= p && p <= c && z > Z95_ONE_SIDED;
        pass &= point_ok;
        used.push(format!("{snr} dB: {o:.2e} <= {p:.2e} <= {c:.2e}, paired z {z:.2} {}", if point_ok { "ok" } else { "violated" }));
    }
    if used.is_empty() {
        pass = false;
        used.push("no SNR point with proposed BER in [1e-3, 3e-2]".into());
    }
    let curve = |d: usize| -> Vec<f64> { (0..cfg.snr_db.len()).map(|i| ber(i, d)).collect() };
    let gap = match (crossing(&cfg.snr_db, &curve(0), 1e-3), crossing(&cfg.snr_db, &curve(1), 1e-3)) {
        (Some(o), Some(p)) => {
            pass &= p - o <= 3.0;
            format!("gap at 1e-3: {:.2} dB (oracle {o:.2}, proposed {p:.2})", p - o)
        }
        _ => {
            pass = false;
            "a curve does not cross 1e-3 inside the sweep".into()
        }
    };
    outcome(pass, format!("{}; {gap}", used.join("; ")))
}

fn criterion_4() -> Outcome {
    let cfg = RunConfig {
        users: 100,
        active: ActiveCount::Count(10),
        spread_len: vec![11, 13],
        antennas: vec![100],
        snr_db: vec![0.0],
        trials: 300,
        detectors: vec![Detector::Bpmf],
        ..RunConfig::default()
    };
    let (records, raw) = sweep_with_trials(&cfg).expect("sweep");
    let per_trial = |i: usize| -> Vec<f64> {
        raw[i]
            .iter()
            .map(|t| t.scores[0].1.bit_errors as f64 / t.scores[0].1.bits.max(1) as f64)
            .collect()
    };
    let z = welch_z(&per_trial(0), &per_trial(1));
    let (b11, b13) = (records[0].ber.unwrap_or(0.0), records[1].ber.unwrap_or(0.0));
    outcome(
        b13 < b11 && z > Z95_ONE_SIDED,
        format!("0 dB, N=100: BER L=13 {b13:.3e} vs L=11 {b11:.3e}, z {z:.2}"),
    )
}

fn criterion_5() -> Outcome {
    let cfg = RunConfig {
        users: 8,
        active: ActiveCount::Count(2),
        antennas: vec![4],
        spread_len: vec![13],
        snr_db: vec![10.0],
        ..RunConfig::default()
    };
    let point = cfg.points()[0];
    let sbl = SblConfig::default();
    let mut worst_m: f64 = 0.0;
    let mut worst_v: f64 = 0.0;
    for trial in 0..5 {
        let (sp, pair) = harness::draw_pair(&cfg, &point, trial).expect("pair");
        let mut approx = SblState::new(&pair.y_prev, &pair.y_curr, sp.matrix(), &sbl).expect("state");
        let mut exact = PerEdgeSbl::new(&pair.y_prev, &pair.y_curr, sp.matrix(), &sbl);
        // Inactive precisions climb slowly to their cap; 1000 sweeps reach
        // the fixed point of both schemes.
        for _ in 0..1000 {
            approx.iterate();
            exact.iterate();
        }
        for s in 0..2 {
            worst_m = worst_m.max(rel_dev_c(&approx.slots[s].mean, &exact.mean[s]));
            worst_v = worst_v.max(rel_dev_r(&approx.slots[s].var, &exact.var[s]));
        }
    }
    outcome(
        worst_m < 0.01 && worst_v < 0.01,
        format!("worst relative deviation at convergence over 5 draws: m_x {worst_m:.2e}, v_x {worst_v:.2e}"),
    )
}

fn criterion_6() -> Outcome {
    let alphabet = DpskAlphabet::dqpsk();
    let mut worst: f64 = 0.0;
    let mut worst_learned: f64 = 0.0;
    for (trial, n) in (0..20).zip([1, 2].into_iter().cycle()) {
        let cfg = RunConfig {
            users: 1,
            active: ActiveCount::Count(1),
            antennas: vec![n],
            spread_len: vec![13],
            snr_db: vec![10.0],
            ..RunConfig::default()
        };
        let point = GridPoint { index: 0, ..cfg.points()[0] };
        let (sp, pair) = harness::draw_pair(&cfg, &point, trial).expect("pair");
        let exact = grid_posterior(sp.matrix(), &pair.y_prev, &pair.y_curr, alphabet.points(), pair.noise_variance, 7.0, 161);
        // The reference assumes known noise, so the detector gets it too.
        let known = DataConfig {
            lambda_mode: LambdaMode::Fixed,
            initial_lambda: Some(vec![1.0 / pair.noise_variance; n]),
            ..DataConfig::default()
        };
        for (cfg, acc) in [(known, &mut worst), (DataConfig::default(), &mut worst_learned)] {
            let det = run_data_detection(&pair.y_prev, &pair.y_curr, sp.matrix(), &alphabet, &cfg).expect("data detection");
            *acc = acc.max(total_variation(&det.decisions[0].posterior, &exact));
        }
    }
    outcome(
        worst < 0.05,
        format!("worst total variation over 20 draws: {worst:.4} with known noise ({worst_learned:.4} with learned noise)"),
    )
}

fn criterion_7() -> Outcome {
    let alphabet = DpskAlphabet::dqpsk();
    let mut notes = Vec::new();

    // Normalization on every iteration of seeded runs.
    let cfg = RunConfig {
        users: 100,
        active: ActiveCount::Count(10),
        antennas: vec![32],
        spread_len: vec![13],
        snr_db: vec![0.0, 8.0],
        ..RunConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for point in cfg.points() {
        for trial in 0..5 {
            let (sp, pair) = harness::draw_pair(&cfg, &point, trial).expect("pair");
            let p_bar = sp.restrict(pair.truth.activity.active()).expect("restrict");
            let mut st = DataState::new(&pair.y_prev, &pair.y_curr, &p_bar, &alphabet, &DataConfig::default()).expect("state");
            for _ in 0..10 {
                st.iterate();
                checked += 1;
                for k in 0..st.devices() {
                    worst = worst.max((st.beta[k].iter().sum::<f64>() - 1.0).abs());
                    for n in 0..st.antennas() {
                        worst = worst.max((st.rho.at(k, n).iter().sum::<f64>() - 1.0).abs());
                    }
                }
                if !st.invariants_hold() {
                    worst = f64::INFINITY;
                }
            }
        }
    }
    let norm_ok = worst <= 1e-9;
    notes.push(format!("normalization worst {worst:.1e} over {checked} iterations"));

    // Projection mean equals the mixture mean.
    let mut rng = substream(7, 0);
    let mut proj_worst: f64 = 0.0;
    for _ in 0..200 {
        let w: Vec<f64> = {
            let raw: Vec<f64> = (0..4).map(|_| complex_normal(&mut rng, 1.0).norm_sqr()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        };
        let means: Vec<Complex64> = (0..4).map(|_| complex_normal(&mut rng, 4.0)).collect();
        let vars: Vec<f64> = (0..4).map(|_| complex_normal(&mut rng, 1.0).norm_sqr()).collect();
        let (m, _) = gaussian_project(&w, &means, &vars, VarianceMode::Central);
        let direct: Complex64 = w.iter().zip(&means).map(|(w, m)| m * w).sum();
        proj_worst = proj_worst.max((m - direct).norm());
    }
    let proj_ok = proj_worst <= 1e-12;
    notes.push(format!("projection mean error {proj_worst:.1e}"));

    // Noise precision from 2L residuals per antenna at unit noise.
    let (l, n) = (13, 100);
    let mut energy = vec![0.0; n];
    for _ in 0..2 {
        let z = DMatrix::from_fn(l, n, |_, _| complex_normal(&mut rng, 1.0));
        let y = z.map(|v| v + complex_normal(&mut rng, 1.0));
        for (e, r) in energy.iter_mut().zip(messages::residual_energy(&y, &z, &DMatrix::zeros(l, n))) {
            *e += r;
        }
    }
    let mut lam = messages::noise_precision(2.0 * l as f64, &energy, 1e12, &mut NumericalEvents::default());
    lam.sort_by(f64::total_cmp);
    let median = 0.5 * (lam[49] + lam[50]);
    let lam_ok = (0.89..=1.12).contains(&median);
    notes.push(format!("lambda median {median:.3}"));

    let eps = shape_estimate(&[3.7; 10]);
    let eps_ok = eps == 0.0;
    notes.push(format!("epsilon on constant gamma {eps}"));

    outcome(norm_ok && proj_ok && lam_ok && eps_ok, notes.join("; "))
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut results: Vec<(usize, Outcome, f64)> = Vec::new();
    let mut timed = |id: usize, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {id}: {} ({secs:.1} s) {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, o, secs));
    };
    timed(1, &mut criterion_1);
    timed(2, &mut || criterion_2(dir.path()).0);
    timed(3, &mut criterion_3);
    timed(4, &mut criterion_4);
    timed(5, &mut criterion_5);
    timed(6, &mut criterion_6);
    timed(7, &mut criterion_7);
    timed(8, &mut || criterion_8(dir.path()));

    println!();
    for (id, o, _) in &results {
        println!("criterion {id}: {}", if o.pass { "PASS" } else { "FAIL" });
    }
    if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        let failed: Vec<usize> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
        assert!(failed.is_empty(), "failing criteria: {failed:?}");
    }
}
