//! Acceptance suite. Each criterion prints one PASS/FAIL line on stderr,
//! then the test fails if any criterion did. Run with
//! `cargo test --release --test acceptance`.

mod common;

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use qkd_core::engine::{self, EveConfig, SessionResult, SimConfig};
use qkd_core::link::{reference, ChannelParams, DetectorParams, LinkBudget, SourceParams};
use qkd_core::optimize::{self, OptimizeConfig, Scenario};
use qkd_core::postprocess::{cascade, pipeline, toeplitz, PaParams};
use qkd_core::rate::{self, RateParams};
use qkd_core::BitString;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within_factor(value: f64, target: f64, factor: f64) -> bool {
    value >= target / factor && value <= target * factor
}

fn fig1() -> Scenario {
    Scenario::default()
}

fn window(length_km: f64) -> optimize::SecureWindow {
    let s = fig1();
    optimize::optimize_mu(
        length_km,
        &s.detector,
        s.attenuation_db_per_km,
        &s.rate,
        &OptimizeConfig::default(),
    )
    .expect("secure window")
}

fn link(mu: f64, length_km: f64) -> (SourceParams, ChannelParams, LinkBudget) {
    let s = fig1();
    let source = s.source(mu).unwrap();
    let channel = s.channel(length_km).unwrap();
    let budget = LinkBudget::compute(&source, &channel, &s.detector, s.rate.multiphoton_model).unwrap();
    (source, channel, budget)
}

fn session(mu: f64, length_km: f64, n_pulses: u64, seed: u64, eve: Option<EveConfig>) -> SessionResult {
    let (source, channel, _) = link(mu, length_km);
    let mut cfg = SimConfig::new(n_pulses, seed, source, channel, DetectorParams::default());
    if let Some(eve) = eve {
        cfg = cfg.with_eve(eve);
    }
    engine::run_session(&cfg).unwrap()
}

fn z_score(observed: f64, expected: f64, sigma: f64) -> f64 {
    (observed - expected) / sigma
}

fn c1_closed_form() -> Outcome {
    let mut rng = common::rng(0xC1);
    let mut worst = (0.0, "none");
    let draws = 10_000;
    for _ in 0..draws {
        let x = common::random_inputs(&mut rng);
        let d = common::worst_disagreement(&x);
        if d.0 > worst.0 {
            worst = d;
        }
    }
    outcome(
        worst.0 <= 1e-12,
        format!("{draws} draws, worst relative error {:.2e} in {} (tolerance 1e-12)", worst.0, worst.1),
    )
}

fn c2_optimal_flux() -> Outcome {
    let mu1 = window(1.0).mu_opt;
    let mu50 = window(50.0).mu_opt;
    let line: Vec<f64> = (1..=50).map(|l| window(l as f64).mu_opt).collect();
    let monotone = line.windows(2).all(|w| w[1] <= w[0]);
    let pass = within_factor(mu1, 0.046, 2.0) && within_factor(mu50, 0.0042, 2.0) && monotone;
    outcome(
        pass,
        format!(
            "mu_opt(1 km) = {mu1:.4e} (target 0.046, x{:.2}), mu_opt(50 km) = {mu50:.4e} (target 0.0042, x{:.2}), non-increasing over 1-50 km: {monotone}",
            0.046 / mu1,
            0.0042 / mu50
        ),
    )
}

fn c3_max_length() -> Outcome {
    let s = fig1();
    let l = optimize::max_secure_length(&s.detector, s.attenuation_db_per_km, &s.rate, &OptimizeConfig::default())
        .unwrap();
    outcome(
        (53.0..=59.0).contains(&l),
        format!("max secure length {l:.2} km (required 53-59 km, reported 56 km)"),
    )
}

fn c4_rate_magnitudes() -> Outcome {
    let s = fig1();
    let curve = optimize::rate_curve(&[1.0, 4.4, 44.0], &s, &OptimizeConfig::default()).unwrap();
    let at = |i: usize| curve[i].optimum.expect("secure");
    let sifted_4_4 = at(1).sifted_bps;
    let secure_44 = at(2).secure_bps;
    let secure_1 = at(0).secure_bps;
    let pass = within_factor(sifted_4_4, 700.0, 2.5)
        && within_factor(secure_44, 2.1, 3.0)
        && within_factor(secure_1, 300.0, 2.0);
    outcome(
        pass,
        format!(
            "sifted at 4.4 km {sifted_4_4:.1} bit/s (700, ratio {:.2}); secure at 44 km {secure_44:.2} bit/s (2.1, ratio {:.2}); secure at 1 km {secure_1:.1} bit/s (300, ratio {:.2})",
            sifted_4_4 / 700.0,
            secure_44 / 2.1,
            secure_1 / 300.0
        ),
    )
}

fn c5_monte_carlo() -> Outcome {
    let mu = window(10.0).mu_opt;
    let (_, _, budget) = link(mu, 10.0);
    let n = 1_000_000u64;
    let p_sift = budget.detect_prob / 2.0;
    let mut worst: f64 = 0.0;
    let mut all = true;
    for seed in 1..=5 {
        let r = session(mu, 10.0, n, seed, None);
        let sift_rate = r.sifted_count as f64 / n as f64;
        let z_sift = z_score(sift_rate, p_sift, (p_sift * (1.0 - p_sift) / n as f64).sqrt());
        let qber = r.counts.sifted_errors as f64 / r.sifted_count as f64;
        let z_qber = z_score(
            qber,
            budget.qber,
            (budget.qber * (1.0 - budget.qber) / r.sifted_count as f64).sqrt(),
        );
        worst = worst.max(z_sift.abs()).max(z_qber.abs());
        all &= z_sift.abs() <= 3.0 && z_qber.abs() <= 3.0;
    }
    outcome(
        all,
        format!("10 km, mu = {mu:.4e}, 5 seeds x 1e6 pulses: worst |z| over sift rate and QBER {worst:.2} (limit 3)"),
    )
}

fn c6_pns() -> Outcome {
    let w = window(25.0);
    let mu = w.mu_max;
    let (_, _, budget) = link(mu, 25.0);
    let n = 10_000_000u64;
    let honest = session(mu, 25.0, n, 61, None);
    let attacked = session(mu, 25.0, n, 62, Some(EveConfig::pns(1.0)));
    let (r0, r1) = (
        honest.detected_count as f64 / n as f64,
        attacked.detected_count as f64 / n as f64,
    );
    let sigma = ((r0 * (1.0 - r0) + r1 * (1.0 - r1)) / n as f64).sqrt();
    let z = z_score(r1, r0, sigma);
    let predicted = budget.multiphoton_prob / budget.detect_prob;
    let known = attacked.eve_known_fraction;
    let pass = z.abs() <= 3.0 && known >= predicted;
    outcome(
        pass,
        format!(
            "mu_max(25 km) = {mu:.4e}: detection rate {r1:.4e} under PNS vs {r0:.4e} honest (z = {z:.1}, limit 3); Eve knows {known:.3} of sifted bits vs S/P = {predicted:.3}"
        ),
    )
}

fn c7_cascade() -> Outcome {
    let n = 10_000;
    let trials = 100;
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, p) in [0.01, 0.03, 0.05].into_iter().enumerate() {
        let mut corrected = 0;
        let mut effs = Vec::new();
        for t in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(7000 + 1000 * k as u64 + t);
            let alice: BitString = (0..n).map(|_| rng.random::<bool>()).collect();
            let bob: BitString = alice.iter().map(|b| b ^ rng.random_bool(p)).collect();
            if let Ok(rep) = cascade::cascade_reconcile(&alice, &bob, p, rng.random()) {
                if rep.corrected_key == alice {
                    corrected += 1;
                }
                effs.push(rep.measured_efficiency);
            }
        }
        let mean = effs.iter().sum::<f64>() / effs.len().max(1) as f64;
        let max = effs.iter().cloned().fold(0.0, f64::max);
        pass &= corrected * 100 >= 99 * trials && mean <= 1.25;
        parts.push(format!("e={p}: {corrected}/{trials} corrected, mean f {mean:.3}, max f {max:.3}"));
    }
    outcome(pass, format!("{} (limits 99%, mean f <= 1.25)", parts.join("; ")))
}

fn c8_privacy_amplification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC8);
    let random_key = |rng: &mut ChaCha8Rng, n: usize| -> BitString { (0..n).map(|_| rng.random::<bool>()).collect() };

    let mut linear = 0;
    for _ in 0..1000 {
        let n = rng.random_range(64..3000);
        let m = rng.random_range(1..=n);
        let seed = rng.random();
        let (a, b) = (random_key(&mut rng, n), random_key(&mut rng, n));
        let lhs = toeplitz::toeplitz_hash(&a.xor(&b), m, seed).unwrap();
        let rhs = toeplitz::toeplitz_hash(&a, m, seed)
            .unwrap()
            .xor(&toeplitz::toeplitz_hash(&b, m, seed).unwrap());
        linear += usize::from(lhs == rhs);
    }

    let (n, m, count) = (4096, 128, 100_000usize);
    let mut inputs = HashSet::with_capacity(count);
    let mut outputs = HashSet::with_capacity(count);
    let mut ones = 0u64;
    let mut distinct = true;
    for _ in 0..count {
        let key = random_key(&mut rng, n);
        let w = key.to_words();
        distinct &= inputs.insert((w[0], w[1]));
        let h = toeplitz::toeplitz_hash(&key, m, 0xC8).unwrap();
        ones += h.count_ones() as u64;
        let hw = h.to_words();
        outputs.insert((hw[0], hw[1]));
    }
    let collisions = count - outputs.len();
    let total = (count * m) as f64;
    let z = (ones as f64 - total / 2.0) / (total / 4.0).sqrt();
    let pass = linear == 1000 && distinct && collisions == 0 && z.abs() <= 4.0;
    outcome(
        pass,
        format!("linearity {linear}/1000; {count} distinct inputs, {collisions} collisions at m = {m}; monobit z = {z:.2} (limit 4)"),
    )
}

fn c9_end_to_end() -> Outcome {
    let length_km = 50.6;
    let s = fig1();
    let gain = |ln_mu: f64| -> Result<f64, ()> { Ok(s.gain(ln_mu.exp(), length_km).unwrap().secure_gain) };
    // Best mu even if no mu is secure here.
    let (ln_mu, g) = optimize::golden_section_max(gain, (1e-4f64).ln(), (0.05f64).ln(), 1e-6).unwrap();
    let mu = ln_mu.exp();
    let (_, _, budget) = link(mu, length_km);
    let n_pulses = 1_000_000_000u64;
    let result = session(mu, length_km, n_pulses, 50, None);
    let report = pipeline::run_pipeline(
        &result,
        &budget,
        &RateParams::default(),
        &PaParams::default(),
        51,
    )
    .unwrap();
    let per_pulse = report.final_length as f64 / n_pulses as f64;
    let nonzero = report.final_length > 0;
    let close = g > 0.0 && within_factor(per_pulse, g, 3.0);
    outcome(
        nonzero && close,
        format!(
            "50.6 km, mu = {mu:.4e}, 1e9 pulses: sifted {}, QBER est {:.4}, leakage {}, final key {} bits ({per_pulse:.3e}/pulse) vs analytic G = {g:.3e}/pulse",
            report.sifted_count, report.qber_est, report.leakage_bits, report.final_length
        ),
    )
}

fn cli_run(args: &[&str], threads: usize, dir: &Path) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_qkd"))
        .args(args)
        .current_dir(dir)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .expect("run qkd");
    let mut bytes = out.status.code().unwrap_or(-1).to_le_bytes().to_vec();
    bytes.extend(out.stdout);
    bytes.extend(out.stderr);
    for f in ["key.bin", "key.bin.json", "transcript.txt"] {
        if let Ok(b) = std::fs::read(dir.join(f)) {
            bytes.extend(b);
            std::fs::remove_file(dir.join(f)).unwrap();
        }
    }
    bytes
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let commands: [&[&str]; 8] = [
        &["optimize", "--length-km", "1"],
        &["optimize", "--length-km", "25", "--json"],
        &["max-length"],
        &["curve", "--lengths", "4.4,25,44,50,60"],
        &["contour", "--mu-decades", "1e-4:1", "--length", "0:60:0.5"],
        &["simulate", "--length-km", "10", "--n-pulses", "1000000", "--seed", "7"],
        &["simulate", "--length-km", "25", "--mu", "0.1", "--eve", "pns", "--seed", "3"],
        &[
            "pipeline",
            "--length-km",
            "25",
            "--seed",
            "7",
            "--key-out",
            "key.bin",
            "--transcript-out",
            "transcript.txt",
        ],
    ];
    let mut differing = Vec::new();
    for args in commands {
        let reference = cli_run(args, 1, dir.path());
        let same = cli_run(args, 1, dir.path()) == reference && cli_run(args, 4, dir.path()) == reference;
        if !same {
            differing.push(args[0]);
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "{} command lines, each run twice on 1 thread and once on 4: {}",
            commands.len(),
            if differing.is_empty() {
                "all byte-identical".to_string()
            } else {
                format!("differences in {differing:?}")
            }
        ),
    )
}

#[test]
fn acceptance() {
    type Criterion = (u32, &'static str, fn() -> Outcome, Duration);
    let criteria: [Criterion; 10] = [
        (1, "closed-form fidelity", c1_closed_form, Duration::from_secs(1)),
        (2, "optimal flux line", c2_optimal_flux, Duration::from_secs(5)),
        (3, "maximum secure length", c3_max_length, Duration::from_secs(5)),
        (4, "rate-curve magnitudes", c4_rate_magnitudes, Duration::from_secs(5)),
        (5, "Monte Carlo vs analytic", c5_monte_carlo, Duration::from_secs(30)),
        (6, "PNS bookkeeping", c6_pns, Duration::from_secs(30)),
        (7, "Cascade", c7_cascade, Duration::from_secs(60)),
        (8, "privacy amplification", c8_privacy_amplification, Duration::from_secs(60)),
        (9, "end-to-end key", c9_end_to_end, Duration::from_secs(300)),
        (10, "CLI determinism", c10_determinism, Duration::from_secs(30)),
    ];
    let mut failed = Vec::new();
    for (id, name, run, budget) in criteria {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = o.pass && in_time;
        let timing = format!(
            "{:.2} s of {} s{}",
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { " (over budget)" }
        );
        common::report(id, name, pass, &format!("{} [{timing}]", o.detail));
        if !pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}

#[test]
fn reference_defaults() {
    // The suite above relies on these being the defaults.
    let s = Scenario::default();
    assert_eq!(s.detector.efficiency(), reference::EFFICIENCY);
    assert_eq!(s.rate.correction_efficiency, rate::REFERENCE_CORRECTION_EFFICIENCY);
}
