//! `flash` — command-line front end for the amplifier simulation.
//!
//! Four commands cover the experiment's observable surface: `fringe` (mean
//! signal vs input-qubit phase), `dist` (exact photon-count-difference law),
//! `protocol` (trial-level datasets with or without the classical trigger
//! channel), and `nosignal` (invariance report bundle). Outputs are stable:
//! identical config + seed gives byte-identical files.
//!
//! Exit codes: 0 success (all invariances pass), 1 invariance failure,
//! 2 config/usage error, 3 infeasible request (odd-total conditioning
//! violated, state too large, not enough photons, ...).

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use config::{Backend, ConfigError, OutputFormat, RunConfig, TruncationSpec};
use flash_core::analysis::mean_se;
use flash_core::fmt::sig9;
use flash_core::nosignal::{
    distribution_sum_invariance, mutual_information, rho_bob, BobStatistic, InvarianceReport,
    MiEstimate, NoSignalError,
};
use flash_core::opa::OpaError;
use flash_core::photostats::{delta_distribution, StatsError};
use flash_core::protocol::{
    run_conditional, run_nonconditional, write_csv, BasisSpec, ExperimentDataset,
    NonConditionalMode, ProtocolError, TrialRecord,
};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Opa(#[from] OpaError),
    #[error(transparent)]
    NoSignal(#[from] NoSignalError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

fn opa_code(e: &OpaError) -> i32 {
    match e {
        OpaError::GainAboveNumericCap { .. }
        | OpaError::TruncationTolerance { .. }
        | OpaError::StateTooLarge { .. }
        | OpaError::TabulationTooLarge { .. } => 3,
        _ => 2,
    }
}

fn stats_code(e: &StatsError) -> i32 {
    match e {
        StatsError::EvenConditionTotal { .. } | StatsError::EmptyConditioning { .. } => 3,
        StatsError::Opa(o) => opa_code(o),
        _ => 2,
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigFile(_) | CliError::Io(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Protocol(p) => match p {
                ProtocolError::Opa(o) => opa_code(o),
                _ => 2,
            },
            CliError::Stats(s) => stats_code(s),
            CliError::Opa(o) => opa_code(o),
            CliError::NoSignal(n) => match n {
                NoSignalError::InsufficientPhotons { .. } | NoSignalError::EmptyRecords => 3,
                NoSignalError::Opa(o) => opa_code(o),
                NoSignalError::Stats(s) => stats_code(s),
                _ => 2,
            },
        }
    }
}

#[derive(Parser)]
#[command(
    name = "flash",
    version,
    about = "Simulates a superluminal-signaling test on a quantum-injected parametric amplifier"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    cmd: Command,
}

/// Global knobs; every one can also come from `--config` (flags win).
#[derive(Args)]
struct Overrides {
    /// key=value config file; `#` starts a comment; unknown keys are errors
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// amplifier gain g (mean pair photons sinh² g)
    #[arg(long, global = true)]
    gain: Option<f64>,
    /// input-qubit interferometric visibility V_in
    #[arg(long, global = true)]
    vin: Option<f64>,
    /// probability that a trigger actually injects the qubit
    #[arg(long = "p-inject", global = true)]
    p_inject: Option<f64>,
    /// detection efficiency per arm
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// splitter transmission in front of each detector
    #[arg(long, global = true)]
    bs: Option<f64>,
    /// multiplicative Gaussian detector noise (0 = counts)
    #[arg(long = "noise-sigma", global = true)]
    noise_sigma: Option<f64>,
    /// Monte Carlo trials per Alice basis
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// RNG seed; fixed seed → byte-identical output
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// photon-number cutoff: "auto" or a fixed value
    #[arg(long, global = true)]
    truncation: Option<String>,
    /// auto | analytic | numeric
    #[arg(long, global = true)]
    backend: Option<String>,
    /// output path (default: stdout)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long, global = true)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Conditional fringe: mean signals per Alice phase, Bob fixed at eq:0
    Fringe {
        /// phase count N (inclusive grid over [0, 2π]) or comma-separated radians
        #[arg(long, default_value = "13")]
        phases: String,
    },
    /// Exact photon-count-difference distribution at one phase offset
    Dist {
        /// phase Δ between the injected qubit and Bob's basis
        #[arg(long = "delta-phi", default_value_t = 0.0)]
        delta_phi: f64,
        /// condition on a fixed odd total photon number
        #[arg(long = "condition-total")]
        condition_total: Option<u64>,
    },
    /// Trial-level dataset (records + summary file)
    Protocol {
        /// conditional | xor | severed
        #[arg(long, default_value = "conditional")]
        mode: String,
        /// comma-separated basis specs (eq:<rad> or lin:<rad>)
        #[arg(long = "alice-bases")]
        alice_bases: Option<String>,
        /// comma-separated basis specs; must be equatorial
        #[arg(long = "bob-bases")]
        bob_bases: Option<String>,
        /// accidental-trigger fraction in severed mode
        #[arg(long = "background-fraction", default_value_t = 0.25)]
        background_fraction: f64,
    },
    /// Invariance report bundle (JSON): exit 0 iff every check passes
    Nosignal {
        /// Bob-density trace-distance pass threshold
        #[arg(long = "rho-threshold", default_value_t = 1e-10)]
        rho_threshold: f64,
        /// count-distribution total-mass invariance pass threshold
        #[arg(long = "sum-threshold", default_value_t = 1e-12)]
        sum_threshold: f64,
        /// mutual-information pass threshold, bits
        #[arg(long = "mi-threshold", default_value_t = 0.01)]
        mi_threshold: f64,
        /// histogram bins for the mutual-information estimate
        #[arg(long = "mi-bins", default_value_t = 32)]
        mi_bins: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let cfg = build_config(&cli.overrides)?;
    cfg.validate()?;
    match cli.cmd {
        Command::Fringe { phases } => {
            cmd_fringe(&cfg, &phases)?;
            Ok(0)
        }
        Command::Dist { delta_phi, condition_total } => {
            cmd_dist(&cfg, delta_phi, condition_total)?;
            Ok(0)
        }
        Command::Protocol { mode, alice_bases, bob_bases, background_fraction } => {
            cmd_protocol(&cfg, &mode, &alice_bases, &bob_bases, background_fraction)?;
            Ok(0)
        }
        Command::Nosignal { rho_threshold, sum_threshold, mi_threshold, mi_bins } => {
            cmd_nosignal(&cfg, rho_threshold, sum_threshold, mi_threshold, mi_bins)
        }
    }
}

fn build_config(o: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &o.config {
        cfg.apply_file(path)?;
    }
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = o.$field {
                cfg.$field = v;
            }
        };
    }
    take!(gain);
    take!(vin);
    take!(p_inject);
    take!(eta);
    take!(bs);
    take!(noise_sigma);
    take!(trials);
    take!(seed);
    if let Some(t) = &o.truncation {
        cfg.truncation = config::parse_truncation("truncation", t)?;
    }
    if let Some(b) = &o.backend {
        cfg.backend = config::parse_backend("backend", b)?;
    }
    if let Some(p) = &o.out {
        cfg.out = Some(p.clone());
    }
    if let Some(f) = &o.format {
        cfg.format = config::parse_format("format", f)?;
    }
    Ok(cfg)
}

fn output_writer(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn parse_phases(text: &str) -> Result<Vec<f64>, CliError> {
    let t = text.trim();
    let phases: Vec<f64> = if !t.contains(',') && t.parse::<u64>().is_ok() {
        let n = t.parse::<u64>().unwrap();
        if n < 2 {
            return Err(CliError::Config(format!("need at least 2 phases, got {n}")));
        }
        let step = std::f64::consts::TAU / (n - 1) as f64;
        (0..n).map(|k| k as f64 * step).collect()
    } else {
        t.split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| CliError::Config(format!("bad phase {p:?}")))
            })
            .collect::<Result<_, _>>()?
    };
    if phases.len() < 2 {
        return Err(CliError::Config(format!(
            "need at least 2 phases, got {}",
            phases.len()
        )));
    }
    Ok(phases)
}

/// Buckets a dataset's records by Alice-basis block. Blocks are contiguous in
/// the global trial index, which survives any record filtering.
fn per_basis<'a>(
    ds: &'a ExperimentDataset,
    basis_count: usize,
) -> Vec<Vec<&'a TrialRecord>> {
    let per = ds.snapshot.trials_per_alice_basis;
    let mut out = vec![Vec::new(); basis_count];
    for r in &ds.records {
        out[(r.trial / per) as usize].push(r);
    }
    out
}

#[derive(Serialize)]
struct FringeRow {
    phase: f64,
    #[serde(rename = "I_plus")]
    i_plus: f64,
    #[serde(rename = "I_minus")]
    i_minus: f64,
    #[serde(rename = "N_mean")]
    n_mean: f64,
}

fn cmd_fringe(cfg: &RunConfig, phases_text: &str) -> Result<(), CliError> {
    let phases = parse_phases(phases_text)?;
    let gain = cfg.gain_parameter()?;
    let imp = cfg.imperfections()?;
    let det = cfg.detector()?;
    let alice: Vec<BasisSpec> = phases.iter().map(|&p| BasisSpec::Equatorial(p)).collect();
    let bob = [BasisSpec::Equatorial(0.0)];
    let ds = run_conditional(&gain, &imp, &det, &alice, &bob, cfg.trials, cfg.seed)?;

    let mut rows = Vec::with_capacity(phases.len());
    for (k, &phase) in phases.iter().enumerate() {
        let block = per_basis(&ds, phases.len());
        let kept: Vec<&&TrialRecord> =
            block[k].iter().filter(|r| r.alice_outcome == Some(0)).collect();
        if kept.is_empty() {
            return Err(CliError::Infeasible(format!(
                "no trigger-selected trials at phase {phase}; increase --trials"
            )));
        }
        let mean = |f: &dyn Fn(&TrialRecord) -> f64| {
            kept.iter().map(|r| f(r)).sum::<f64>() / kept.len() as f64
        };
        let ns: Vec<f64> = kept.iter().filter_map(|r| r.n_stat).collect();
        rows.push(FringeRow {
            phase,
            i_plus: mean(&|r| r.i_a),
            i_minus: mean(&|r| r.i_b),
            n_mean: ns.iter().sum::<f64>() / ns.len() as f64,
        });
    }

    let mut w = output_writer(&cfg.out)?;
    match cfg.format {
        OutputFormat::Csv => {
            writeln!(w, "phase,I_plus,I_minus,N_mean")?;
            for r in &rows {
                writeln!(
                    w,
                    "{},{},{},{}",
                    sig9(r.phase),
                    sig9(r.i_plus),
                    sig9(r.i_minus),
                    sig9(r.n_mean)
                )?;
            }
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut w, &rows).map_err(io::Error::from)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct DistRow {
    x: i64,
    probability: f64,
}

fn cmd_dist(
    cfg: &RunConfig,
    delta_phi: f64,
    condition_total: Option<u64>,
) -> Result<(), CliError> {
    let gain = cfg.gain_parameter()?;
    let dist = delta_distribution(delta_phi, &gain, condition_total)?;
    let mut w = output_writer(&cfg.out)?;
    match cfg.format {
        OutputFormat::Csv => {
            writeln!(w, "x,probability")?;
            for (&x, p) in dist.iter() {
                writeln!(w, "{},{}", x, sig9(p))?;
            }
        }
        OutputFormat::Json => {
            let rows: Vec<DistRow> =
                dist.iter().map(|(&x, p)| DistRow { x, probability: p }).collect();
            serde_json::to_writer_pretty(&mut w, &rows).map_err(io::Error::from)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BasisSummary {
    alice_basis: String,
    records: usize,
    /// Trials entering the ⟨δ⟩ column (trigger outcome 0 in conditional mode).
    used_for_delta: usize,
    /// Shots whose N statistic is undefined (nothing detected).
    excluded_undefined_n: usize,
    mean_delta: Option<f64>,
    mean_delta_se: Option<f64>,
    mean_abs_n: Option<f64>,
    mean_abs_n_se: Option<f64>,
}

#[derive(Serialize)]
struct ProtocolSummary<'a> {
    snapshot: &'a flash_core::protocol::RunSnapshot,
    per_basis: Vec<BasisSummary>,
}

fn parse_basis_list(text: &Option<String>, default: &[BasisSpec]) -> Result<Vec<BasisSpec>, CliError> {
    match text {
        None => Ok(default.to_vec()),
        Some(t) => t
            .split(',')
            .map(|s| BasisSpec::parse(s.trim()).map_err(CliError::from))
            .collect(),
    }
}

fn cmd_protocol(
    cfg: &RunConfig,
    mode: &str,
    alice_text: &Option<String>,
    bob_text: &Option<String>,
    background_fraction: f64,
) -> Result<(), CliError> {
    let out = cfg.out.clone().ok_or_else(|| {
        CliError::Config("protocol writes a dataset; --out is required".to_string())
    })?;
    let gain = cfg.gain_parameter()?;
    let imp = cfg.imperfections()?;
    let det = cfg.detector()?;

    let default_alice: Vec<BasisSpec> = (0..8)
        .map(|k| BasisSpec::Equatorial(k as f64 * std::f64::consts::FRAC_PI_4))
        .collect();
    let alice = parse_basis_list(alice_text, &default_alice)?;
    let bob = parse_basis_list(bob_text, &[BasisSpec::Equatorial(0.0)])?;

    let conditional = mode == "conditional";
    let ds = match mode {
        "conditional" => run_conditional(&gain, &imp, &det, &alice, &bob, cfg.trials, cfg.seed)?,
        "xor" => run_nonconditional(
            &gain,
            &imp,
            &det,
            &alice,
            &bob,
            cfg.trials,
            cfg.seed,
            NonConditionalMode::Xor,
        )?,
        "severed" => run_nonconditional(
            &gain,
            &imp,
            &det,
            &alice,
            &bob,
            cfg.trials,
            cfg.seed,
            NonConditionalMode::Severed { background_fraction },
        )?,
        _ => {
            return Err(CliError::Config(format!(
                "unknown mode {mode:?}: expected conditional|xor|severed"
            )));
        }
    };

    let mut w = BufWriter::new(File::create(&out)?);
    match cfg.format {
        OutputFormat::Csv => write_csv(&ds.records, &mut w)?,
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut w, &ds.records).map_err(io::Error::from)?;
            writeln!(w)?;
        }
    }
    w.flush()?;

    let mut per = Vec::new();
    for (k, block) in per_basis(&ds, alice.len()).iter().enumerate() {
        let delta_set: Vec<f64> = block
            .iter()
            .filter(|r| !conditional || r.alice_outcome == Some(0))
            .map(|r| r.i_a - r.i_b)
            .collect();
        let ns: Vec<f64> = block.iter().filter_map(|r| r.n_stat.map(f64::abs)).collect();
        let (mean_delta, mean_delta_se) = match mean_se(&delta_set) {
            Some((m, s)) => (Some(m), Some(s)),
            None => (None, None),
        };
        let (mean_abs_n, mean_abs_n_se) = match mean_se(&ns) {
            Some((m, s)) => (Some(m), Some(s)),
            None => (None, None),
        };
        per.push(BasisSummary {
            alice_basis: alice[k].label(),
            records: block.len(),
            used_for_delta: delta_set.len(),
            excluded_undefined_n: block.len() - ns.len(),
            mean_delta,
            mean_delta_se,
            mean_abs_n,
            mean_abs_n_se,
        });
    }
    let summary = ProtocolSummary { snapshot: &ds.snapshot, per_basis: per };
    let mut spath = out.into_os_string();
    spath.push(".summary.json");
    let mut sw = BufWriter::new(File::create(PathBuf::from(spath))?);
    serde_json::to_writer_pretty(&mut sw, &summary).map_err(io::Error::from)?;
    writeln!(sw)?;
    sw.flush()?;
    Ok(())
}

fn cmd_nosignal(
    cfg: &RunConfig,
    rho_threshold: f64,
    sum_threshold: f64,
    mi_threshold: f64,
    mi_bins: usize,
) -> Result<i32, CliError> {
    if cfg.backend == Backend::Analytic {
        return Err(CliError::Config(
            "the density-matrix check needs the numeric backend; \
             use --backend auto or numeric"
                .to_string(),
        ));
    }
    let gain = cfg.gain_parameter()?;
    let mut reports: Vec<InvarianceReport> = Vec::with_capacity(3);

    // Density-matrix invariance runs on directly integrated states, which
    // caps the usable gain; everything else runs at the configured gain.
    let rho_g = flash_core::opa::GainParameter::new(cfg.gain.min(1.0))
        .map_err(|e| CliError::Config(e.to_string()))?;
    let trunc = cfg.truncation(1e-12);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut pairs = Vec::new();
    let mut max_td: f64 = 0.0;
    for k in 0..8 {
        let a = BasisSpec::Equatorial(rng.random_range(0.0..std::f64::consts::TAU));
        let b = if k % 2 == 0 {
            BasisSpec::Equatorial(rng.random_range(0.0..std::f64::consts::TAU))
        } else {
            BasisSpec::Linear(rng.random_range(0.0..std::f64::consts::PI))
        };
        let ra = rho_bob(&a.to_measurement(), &rho_g, &trunc)?;
        let rb = rho_bob(&b.to_measurement(), &rho_g, &trunc)?;
        let d = ra.trace_distance(&rb)?;
        max_td = max_td.max(d);
        pairs.push(serde_json::json!([a.label(), b.label()]));
    }
    reports.push(InvarianceReport {
        metric: "rho_trace_distance_max".to_string(),
        value: max_td,
        threshold: rho_threshold,
        pass: max_td < rho_threshold,
        config: serde_json::json!({
            "gain_requested": cfg.gain,
            "gain_used": rho_g.g(),
            "pairs": pairs,
            "seed": cfg.seed,
            "truncation": match cfg.truncation {
                TruncationSpec::Auto => "auto".to_string(),
                TruncationSpec::Fixed(n) => n.to_string(),
            },
        }),
    });

    let mut sum_rep = distribution_sum_invariance(std::f64::consts::FRAC_PI_3, &gain)?;
    sum_rep.threshold = sum_threshold;
    sum_rep.pass = sum_rep.value < sum_threshold;
    reports.push(sum_rep);

    let imp = cfg.imperfections()?;
    let det = cfg.detector()?;
    let alice = [
        BasisSpec::Equatorial(0.0),
        BasisSpec::Equatorial(std::f64::consts::FRAC_PI_2),
    ];
    let bob = [BasisSpec::Equatorial(0.0)];
    let ds = run_nonconditional(
        &gain,
        &imp,
        &det,
        &alice,
        &bob,
        cfg.trials,
        cfg.seed,
        NonConditionalMode::Xor,
    )?;
    let mi = |bins: usize| -> Result<MiEstimate, NoSignalError> {
        mutual_information(&ds.records, BobStatistic::NormalizedDiff, bins, 200, cfg.seed)
    };
    let main = mi(mi_bins)?;
    let lo = mi(16)?;
    let hi = mi(64)?;
    reports.push(InvarianceReport {
        metric: "mutual_information_bits".to_string(),
        value: main.bits,
        threshold: mi_threshold,
        pass: main.bits < mi_threshold,
        config: serde_json::json!({
            "alice_bases": [alice[0].label(), alice[1].label()],
            "bins": main.bins,
            "bits_at_16_bins": lo.bits,
            "bits_at_64_bins": hi.bits,
            "bootstrap_se": main.bootstrap_se,
            "excluded_undefined": main.excluded_undefined,
            "mode": "xor",
            "n_used": main.n_used,
            "resamples": 200,
            "statistic": "N",
            "trials_per_basis": cfg.trials,
        }),
    });

    let mut w = output_writer(&cfg.out)?;
    serde_json::to_writer_pretty(&mut w, &reports).map_err(io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(if reports.iter().all(|r| r.pass) { 0 } else { 1 })
}
