//! The `qkd` command-line front end.
//!
//! Every command resolves its parameters from flags, then an optional
//! `--params` file, then the reference defaults, and echoes the effective set
//! in a [`RunManifest`]. JSON outputs embed the manifest; text and CSV outputs
//! write it to `<output>.manifest.json`, or to stderr when printing to stdout.
//! Parallelism follows `RAYON_NUM_THREADS` and never changes the output.

pub mod output;
pub mod params;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::engine::{self, EveConfig, SimConfig};
use crate::link::{reference, DetectorParams, LinkBudget, MultiphotonModel};
use crate::optimize::{self, OptimizeConfig, OptimizeError, Scenario};
use crate::postprocess::{cascade, pipeline, PaParams, PostprocessError};
use crate::rate::{self, RateParams};
use output::{fmt_sig9, Csv, RunManifest};
use params::{parse_params, Resolver};

/// Process exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const EMPTY_WINDOW: u8 = 3;
    pub const RECONCILIATION: u8 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    EmptyWindow(OptimizeError),
    #[error("{0}")]
    Reconciliation(PostprocessError),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::EmptyWindow(_) => exit::EMPTY_WINDOW,
            CliError::Reconciliation(_) => exit::RECONCILIATION,
            CliError::Io(_) | CliError::Failure(_) => exit::FAILURE,
        }
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::EmptyWindow { .. } => CliError::EmptyWindow(e),
            OptimizeError::InvalidGrid(_) | OptimizeError::Param(_) => CliError::Usage(e.to_string()),
            OptimizeError::Link(_) => CliError::Failure(e.to_string()),
        }
    }
}

impl From<PostprocessError> for CliError {
    fn from(e: PostprocessError) -> Self {
        match e {
            PostprocessError::ResidualErrors { .. } => CliError::Reconciliation(e),
            other => CliError::Failure(other.to_string()),
        }
    }
}

fn usage<E: ToString>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "qkd", version, about = "Weak-coherent-pulse BB84 key rates, optimisation and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal mean photon number and secure window at one length.
    Optimize(OptimizeArgs),
    /// Longest fibre with a non-empty secure window.
    MaxLength(MaxLengthArgs),
    /// Sifted and secure bit rates at the optimal mu for a list of lengths.
    Curve(CurveArgs),
    /// Secure gain on a (mu, length) grid.
    Contour(ContourArgs),
    /// Pulse-level session: transmission, sifting and QBER estimation.
    Simulate(SimulateArgs),
    /// Session followed by Cascade and privacy amplification.
    Pipeline(PipelineArgs),
}

/// Physical and rate-model parameters shared by every command.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// key = value parameter file; flags take precedence.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub clock_rate: Option<f64>,
    /// Fibre attenuation in dB/km.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Detector quantum efficiency.
    #[arg(long, alias = "eta")]
    pub efficiency: Option<f64>,
    /// Dark-count probability per gate.
    #[arg(long)]
    pub dark_prob: Option<f64>,
    #[arg(long)]
    pub modulation_error: Option<f64>,
    /// Error-correction efficiency relative to the Shannon limit.
    #[arg(long, alias = "correction-efficiency")]
    pub f_ec: Option<f64>,
    /// approx | exact_poisson
    #[arg(long)]
    pub multiphoton: Option<MultiphotonModel>,
    /// Write the result here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub mu_lo: Option<f64>,
    #[arg(long)]
    pub mu_hi: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub length_km: Option<f64>,
    /// Emit JSON instead of aligned text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MaxLengthArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Comma-separated fibre lengths in km.
    #[arg(long)]
    pub lengths: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ContourArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// mu range as LO:HI, log-spaced.
    #[arg(long)]
    pub mu_decades: Option<String>,
    #[arg(long)]
    pub mu_points_per_decade: Option<usize>,
    /// Length range as START:STOP:STEP in km, inclusive.
    #[arg(long)]
    pub length: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SessionArgs {
    #[arg(long)]
    pub length_km: Option<f64>,
    /// Mean photon number; the optimum at this length when omitted.
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub n_pulses: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Eavesdropper: none | pns
    #[arg(long)]
    pub eve: Option<String>,
    /// Click probability of a photon Eve forwards.
    #[arg(long)]
    pub replacement_transmission: Option<f64>,
    /// Fraction of the sifted key disclosed for QBER estimation.
    #[arg(long)]
    pub sample_fraction: Option<f64>,
    /// Packed key file; a metadata record goes to `<FILE>.json`.
    #[arg(long, value_name = "FILE")]
    pub key_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub session: SessionArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub session: SessionArgs,
    /// Bits removed on top of the measured leakage.
    #[arg(long)]
    pub margin_bits: Option<u64>,
    /// Toeplitz seed; derived from the session seed when omitted.
    #[arg(long)]
    pub hash_seed: Option<u64>,
    /// Cascade parity log.
    #[arg(long, value_name = "FILE")]
    pub transcript_out: Option<PathBuf>,
}

const SIMULATE_PULSES: u64 = 1_000_000;
const PIPELINE_PULSES: u64 = 100_000_000;
const DEFAULT_SEED: u64 = 1;

/// Entry point used by the binary.
pub fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let stdout = io::stdout();
    let stderr = io::stderr();
    ExitCode::from(run_with(&args, &mut stdout.lock(), &mut stderr.lock()))
}

/// Parse `args` (program name first), run the command and return the exit
/// status. Errors are reported on `err`.
pub fn run_with(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let command: Vec<String> = args.iter().skip(1).cloned().collect();
    match run(cli.command, command, out, err) {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn run(cmd: Command, command: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Optimize(a) => cmd_optimize(a, command, out, err),
        Command::MaxLength(a) => cmd_max_length(a, command, out, err),
        Command::Curve(a) => cmd_curve(a, command, out, err),
        Command::Contour(a) => cmd_contour(a, command, out, err),
        Command::Simulate(a) => cmd_simulate(a, command, out),
        Command::Pipeline(a) => cmd_pipeline(a, command, out),
    }
}

fn resolver(model: &ModelArgs) -> Result<Resolver, CliError> {
    let file = match &model.params {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            parse_params(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => Default::default(),
    };
    Ok(Resolver::new(file))
}

fn scenario(r: &mut Resolver, m: &ModelArgs) -> Result<Scenario, CliError> {
    let clock_rate = r.get("clock_rate", m.clock_rate, reference::CLOCK_RATE_HZ).map_err(usage)?;
    let alpha = r.get("alpha", m.alpha, reference::ATTENUATION_DB_PER_KM).map_err(usage)?;
    let eta = r.get("efficiency", m.efficiency, reference::EFFICIENCY).map_err(usage)?;
    let dark = r.get("dark_prob", m.dark_prob, reference::DARK_PROB).map_err(usage)?;
    let em = r.get("modulation_error", m.modulation_error, reference::MODULATION_ERROR).map_err(usage)?;
    let f = r.get("f_ec", m.f_ec, rate::REFERENCE_CORRECTION_EFFICIENCY).map_err(usage)?;
    let model = r.get("multiphoton", m.multiphoton, MultiphotonModel::default()).map_err(usage)?;
    let scenario = Scenario {
        detector: DetectorParams::new(eta, dark, em).map_err(usage)?,
        attenuation_db_per_km: alpha,
        clock_rate,
        rate: RateParams::new(f, model).map_err(usage)?,
    };
    // Validate the remaining ranges up front so bad values exit as usage errors.
    scenario.source(0.0).map_err(usage)?;
    scenario.channel(0.0).map_err(usage)?;
    Ok(scenario)
}

fn search(r: &mut Resolver, s: &SearchArgs) -> Result<OptimizeConfig, CliError> {
    let d = OptimizeConfig::default();
    let cfg = OptimizeConfig {
        mu_lo: r.get("mu_lo", s.mu_lo, d.mu_lo).map_err(usage)?,
        mu_hi: r.get("mu_hi", s.mu_hi, d.mu_hi).map_err(usage)?,
        rel_tol: r.get("rel_tol", s.rel_tol, d.rel_tol).map_err(usage)?,
        grid_points: r.get("grid_points", s.grid_points, d.grid_points).map_err(usage)?,
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn manifest(r: &Resolver, command: Vec<String>, seed: Option<u64>) -> RunManifest {
    RunManifest {
        tool: output::TOOL,
        version: output::VERSION,
        command,
        seed,
        parameters: r.effective().clone(),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable report");
    s.push('\n');
    s
}

fn emit(text: &str, dest: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    match dest {
        Some(path) => fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Text or CSV body with a sidecar manifest.
fn emit_with_manifest(
    body: &str,
    manifest: &RunManifest,
    dest: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let m = to_json(manifest);
    match dest {
        Some(path) => {
            fs::write(path, body)?;
            fs::write(sidecar(path, "manifest.json"), m)?;
        }
        None => {
            out.write_all(body.as_bytes())?;
            err.write_all(m.as_bytes())?;
        }
    }
    Ok(())
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn cmd_optimize(a: OptimizeArgs, command: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut r = resolver(&a.model)?;
    let sc = scenario(&mut r, &a.model)?;
    let cfg = search(&mut r, &a.search)?;
    let length_km: f64 = r.require("length_km", a.length_km).map_err(usage)?;
    sc.channel(length_km).map_err(usage)?;
    let w = optimize::optimize_mu(length_km, &sc.detector, sc.attenuation_db_per_km, &sc.rate, &cfg)?;
    let g = sc.gain(w.mu_opt, length_km)?;
    let sifted_bps = rate::gain_to_bps(g.sifted_gain, sc.clock_rate);
    let secure_bps = rate::gain_to_bps(g.secure_gain, sc.clock_rate);
    let m = manifest(&r, command, None);
    if a.json {
        let doc = json!({
            "manifest": m,
            "length_km": length_km,
            "window": w,
            "at_optimum": {
                "qber": g.qber,
                "sifted_bps": sifted_bps,
                "secure_bps": secure_bps,
            },
        });
        return emit(&to_json(&doc), a.model.output.as_deref(), out);
    }
    let rows = [
        ("length_km", length_km),
        ("mu_min", w.mu_min),
        ("mu_opt", w.mu_opt),
        ("mu_max", w.mu_max),
        ("gain_per_cycle", w.g_max),
        ("qber", g.qber),
        ("sifted_bps", sifted_bps),
        ("secure_bps", secure_bps),
    ];
    let mut body = String::new();
    for (k, v) in rows {
        body.push_str(&format!("{k:<16}{}\n", fmt_sig9(v)));
    }
    if !w.unimodal {
        body.push_str("warning         gain has several local maxima in mu\n");
    }
    emit_with_manifest(&body, &m, a.model.output.as_deref(), out, err)
}

fn cmd_max_length(a: MaxLengthArgs, command: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut r = resolver(&a.model)?;
    let sc = scenario(&mut r, &a.model)?;
    let cfg = search(&mut r, &a.search)?;
    let l = optimize::max_secure_length(&sc.detector, sc.attenuation_db_per_km, &sc.rate, &cfg)?;
    let m = manifest(&r, command, None);
    if a.json {
        let doc = json!({ "manifest": m, "max_length_km": l.is_finite().then_some(l) });
        return emit(&to_json(&doc), a.model.output.as_deref(), out);
    }
    let body = format!("{:<16}{}\n", "max_length_km", fmt_sig9(l));
    emit_with_manifest(&body, &m, a.model.output.as_deref(), out, err)
}

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| usage(format!("bad length '{t}': {e}"))))
        .collect()
}

fn cmd_curve(a: CurveArgs, command: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut r = resolver(&a.model)?;
    let sc = scenario(&mut r, &a.model)?;
    let cfg = search(&mut r, &a.search)?;
    let lengths: String = r.require("lengths", a.lengths).map_err(usage)?;
    let rows = optimize::rate_curve(&parse_list(&lengths)?, &sc, &cfg)?;
    let mut csv = Csv::new(&["length_km", "mu_opt", "sifted_bps", "secure_bps", "qber"]);
    for row in rows {
        match row.optimum {
            Some(p) => csv.row(&[row.length_km, p.mu_opt, p.sifted_bps, p.secure_bps, p.qber]),
            None => csv.row(&[row.length_km, f64::NAN, f64::NAN, f64::NAN, f64::NAN]),
        }
    }
    let m = manifest(&r, command, None);
    emit_with_manifest(&csv.finish(), &m, a.model.output.as_deref(), out, err)
}

fn parse_range<const N: usize>(s: &str, what: &str) -> Result<[f64; N], CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != N {
        return Err(usage(format!("{what} '{s}': expected {N} colon-separated numbers")));
    }
    let mut v = [0.0; N];
    for (slot, p) in v.iter_mut().zip(parts) {
        *slot = p
            .trim()
            .parse()
            .map_err(|e| usage(format!("{what} '{s}': {e}")))?;
    }
    Ok(v)
}

/// Inclusive arithmetic grid `start, start + step, ..., <= stop`.
fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(usage("length grid needs start <= stop and a positive step"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

fn cmd_contour(a: ContourArgs, command: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut r = resolver(&a.model)?;
    let sc = scenario(&mut r, &a.model)?;
    let mu_spec: String = r.get("mu_decades", a.mu_decades, "1e-4:1".to_string()).map_err(usage)?;
    let ppd: usize = r
        .get("mu_points_per_decade", a.mu_points_per_decade, 20)
        .map_err(usage)?;
    let len_spec: String = r.get("length", a.length, "0:60:0.5".to_string()).map_err(usage)?;
    let [lo, hi] = parse_range::<2>(&mu_spec, "mu range")?;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || ppd == 0 {
        return Err(usage("mu range needs 0 < LO < HI and at least one point per decade"));
    }
    let n_mu = ((hi / lo).log10() * ppd as f64).round() as usize + 1;
    let mus = optimize::log_space(lo, hi, n_mu.max(2));
    let [start, stop, step] = parse_range::<3>(&len_spec, "length range")?;
    let lengths = linear_grid(start, stop, step)?;
    let grid = optimize::contour_grid(&mus, &lengths, &sc)?;
    let mut csv = Csv::new(&["mu", "length_km", "gain_per_cycle"]);
    for (mu, row) in mus.iter().zip(&grid) {
        for (l, g) in lengths.iter().zip(row) {
            csv.row(&[*mu, *l, *g]);
        }
    }
    let m = manifest(&r, command, None);
    emit_with_manifest(&csv.finish(), &m, a.model.output.as_deref(), out, err)
}

/// Independent seeds for the protocol stages, derived from the session seed
/// with a SplitMix64 step so no two stages share a random stream.
fn derive_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed.wrapping_add(stage.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Session {
    cfg: SimConfig,
    link: LinkBudget,
    scenario: Scenario,
    result: engine::SessionResult,
}

fn run_session(
    r: &mut Resolver,
    model: &ModelArgs,
    s: &SessionArgs,
    default_pulses: u64,
) -> Result<Session, CliError> {
    let sc = scenario(r, model)?;
    let length_km: f64 = r.require("length_km", s.length_km).map_err(usage)?;
    let channel = sc.channel(length_km).map_err(usage)?;
    let mu = match r.optional("mu", s.mu).map_err(usage)? {
        Some(mu) => mu,
        None => {
            let w = optimize::optimize_mu(
                length_km,
                &sc.detector,
                sc.attenuation_db_per_km,
                &sc.rate,
                &OptimizeConfig::default(),
            )?;
            r.record("mu", &w.mu_opt);
            w.mu_opt
        }
    };
    let source = sc.source(mu).map_err(usage)?;
    let n_pulses = r.get("n_pulses", s.n_pulses, default_pulses).map_err(usage)?;
    let seed = r.get("seed", s.seed, DEFAULT_SEED).map_err(usage)?;
    let eve: String = r.get("eve", s.eve.clone(), "none".to_string()).map_err(usage)?;
    let sample_fraction = r.get("sample_fraction", s.sample_fraction, 0.1).map_err(usage)?;
    let mut cfg = SimConfig::new(n_pulses, seed, source, channel, sc.detector);
    cfg.sample_fraction = sample_fraction;
    match eve.as_str() {
        "none" => {}
        "pns" => {
            let t = r
                .get("replacement_transmission", s.replacement_transmission, 1.0)
                .map_err(usage)?;
            cfg = cfg.with_eve(EveConfig::pns(t));
        }
        other => return Err(usage(format!("unknown eavesdropper '{other}' (expected none|pns)"))),
    }
    cfg.validate().map_err(usage)?;
    let link = LinkBudget::compute(&source, &channel, &sc.detector, sc.rate.multiphoton_model)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let result = engine::run_session(&cfg).map_err(|e| CliError::Failure(e.to_string()))?;
    Ok(Session {
        cfg,
        link,
        scenario: sc,
        result,
    })
}

fn write_key(path: &Path, key: &crate::bits::BitString, metadata: &Value) -> Result<(), CliError> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    key.write_packed(&mut f)?;
    f.flush()?;
    fs::write(sidecar(path, "json"), to_json(metadata))?;
    Ok(())
}

fn analytic_block(s: &Session) -> Value {
    let gain = rate::gain_from_probabilities(
        s.link.detect_prob,
        s.link.multiphoton_prob,
        s.link.qber,
        s.scenario.rate.correction_efficiency,
    );
    json!({
        "link": s.link,
        "sift_rate": rate::sifted_gain(s.link.detect_prob),
        "secure_gain": gain.secure_gain,
        "secure": gain.is_secure(),
        "violation": gain.violation,
    })
}

fn empirical_block(res: &engine::SessionResult) -> Value {
    let n = res.n_pulses as f64;
    let full_qber = if res.sifted_count == 0 {
        0.0
    } else {
        res.counts.sifted_errors as f64 / res.sifted_count as f64
    };
    json!({
        "detection_rate": res.detected_count as f64 / n,
        "sift_rate": res.sifted_count as f64 / n,
        "qber_full_key": full_qber,
    })
}

fn cmd_simulate(a: SimulateArgs, command: Vec<String>, out: &mut dyn Write) -> Result<(), CliError> {
    let mut r = resolver(&a.model)?;
    let s = run_session(&mut r, &a.model, &a.session, SIMULATE_PULSES)?;
    let m = manifest(&r, command, Some(s.cfg.seed));
    let meta = s.result.metadata(s.cfg.seed);
    if let Some(path) = &a.session.key_out {
        let header = json!({
            "key": "alice_sifted",
            "length_bits": s.result.alice_sifted.len(),
            "session": meta,
            "manifest": m,
        });
        write_key(path, &s.result.alice_sifted, &header)?;
    }
    let doc = json!({
        "manifest": m,
        "analytic": analytic_block(&s),
        "empirical": empirical_block(&s.result),
        "session": meta,
    });
    emit(&to_json(&doc), a.model.output.as_deref(), out)
}

fn cmd_pipeline(a: PipelineArgs, command: Vec<String>, out: &mut dyn Write) -> Result<(), CliError> {
    let mut r = resolver(&a.model)?;
    let s = run_session(&mut r, &a.model, &a.session, PIPELINE_PULSES)?;
    let seed = s.cfg.seed;
    let margin = r
        .get("margin_bits", a.margin_bits, PaParams::default().security_margin_bits)
        .map_err(usage)?;
    let hash_seed = r.get("hash_seed", a.hash_seed, derive_seed(seed, 2)).map_err(usage)?;
    let pa = PaParams {
        hash_seed,
        security_margin_bits: margin,
    };
    let report = pipeline::run_pipeline(&s.result, &s.link, &s.scenario.rate, &pa, derive_seed(seed, 1))?;
    if report.alice_key != report.bob_key {
        return Err(CliError::Failure("final keys differ after reconciliation".into()));
    }
    let m = manifest(&r, command, Some(seed));
    let meta = s.result.metadata(seed);
    if let Some(path) = &a.transcript_out {
        let mut f = io::BufWriter::new(fs::File::create(path)?);
        cascade::write_transcript(&report.transcript, &mut f)?;
        f.flush()?;
    }
    if let Some(path) = &a.session.key_out {
        let header = json!({
            "key": "final",
            "length_bits": report.final_length,
            "sifted_count": report.sifted_count,
            "reconciled_length": report.reconciled_length,
            "leakage_bits": report.leakage_bits,
            "security_margin_bits": report.security_margin_bits,
            "hash_seed": report.hash_seed,
            "cascade_seed": report.cascade_seed,
            "session_seed": seed,
            "manifest": m,
        });
        write_key(path, &report.alice_key, &header)?;
    }
    let doc = json!({
        "manifest": m,
        "analytic": analytic_block(&s),
        "empirical": empirical_block(&s.result),
        "session": meta,
        "key": report,
        "final_length_per_pulse": report.final_length as f64 / s.cfg.n_pulses as f64,
    });
    emit(&to_json(&doc), a.model.output.as_deref(), out)
}
