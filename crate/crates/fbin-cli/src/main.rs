//! Command-line driver for the frequency-bin toolkit.
//!
//! Each subcommand is a deterministic batch step — simulate, histogram,
//! certify, reconstruct, score a key rate, or design the demultiplexer —
//! that reads and writes plain files, so whole pipelines replay bit for bit
//! from a seed and a config. Every run writes a `<out>.manifest.json`
//! recording the inputs, the seed, and a SHA-256 checksum of every artifact
//! it produced.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data/format error,
//! 4 non-convergence. Failures print a one-line JSON object to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fbin::analysis::{
    bootstrap_entropy_sum, chsh_scan, coincidences, correlator_from_counts, entropic_certificate,
    fold_coincidences, qkd_report, steering_test, subtract_background, symmetric_outcome_table,
    ChshScan, ChshScanOptions, EntropicCertificate, EquatorialCorrelators, FoldOptions, QkdParams,
    QkdReport, SteeringTest,
};
use fbin::fwi::{demux_delay, demux_visibility, solve_widened, FwiDesign};
use fbin::io::{
    apply_run_config_key, read_fwi_design, read_json, read_run_config, read_tags_binary,
    read_tags_csv, write_csv, write_fwi_design, write_grid_csv, write_histogram_binary,
    write_json, write_tags_binary, write_tags_csv, RunConfig,
};
use fbin::jti::{
    antidiagonal_profile, diagonal_profile, fit_ringdown, fit_visibility, ProfileFit,
    RingdownOptions, VisibilityFit,
};
use fbin::sim::{
    add_pump_leak, apply_detection, route_z_basis, sample_pairs, TimeTagStream, ZCounts,
};
use fbin::tomo::{
    build_projector_set, mle_reconstruct, simulate_tomography_data, uncertainty, PhaseSlotRule,
    SettingData, TomographyResult, TomographyUncertainty,
};

#[derive(Parser)]
#[command(
    name = "fbin",
    version,
    about = "Simulate and certify frequency-bin entangled photon pairs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a detection run: time tags, or demultiplexer counts.
    Simulate(SimulateArgs),
    /// Histogram coincidences and fit the beat visibility and ringdown.
    Jti(JtiArgs),
    /// Entanglement certification: Bell scan, steering, entropic bound.
    Certify(CertifyArgs),
    /// Maximum-likelihood reconstruction of the two-qubit state.
    Tomo(TomoArgs),
    /// Asymptotic key-rate figures from measured correlators.
    Qkd(QkdArgs),
    /// Interferometer design: solve, evaluate, or sweep a geometry.
    #[command(subcommand)]
    Fwi(FwiCommand),
}

/// Shared config plumbing: an optional file plus repeatable key=value
/// overrides using the same key names as the file format.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Run configuration file (key = value); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. --set theta=0.5 (repeatable;
    /// wins over the file).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_run_config(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        for pair in &self.set {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                fbin::Error::Config(format!("--set {pair:?} is not KEY=VALUE"))
            })?;
            apply_run_config_key(&mut cfg, key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn path_string(&self) -> Option<String> {
        self.config.as_ref().map(|p| p.display().to_string())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimulatedBasis {
    /// Time-resolving detection on both arms (writes a time-tag file).
    Equatorial,
    /// Both arms demultiplexed (writes a JSON count table).
    Zz,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of emitted pairs.
    #[arg(long)]
    pairs: usize,
    /// Random seed; the same seed replays the identical byte stream.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Measurement arrangement to simulate.
    #[arg(long, value_enum, default_value_t = SimulatedBasis::Equatorial)]
    basis: SimulatedBasis,
    /// Output artifact: time-tag binary (equatorial) or JSON counts (zz).
    #[arg(long)]
    out: PathBuf,
    /// Also write a CSV twin next to a binary time-tag output.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct JtiArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Input time tags (.bin, or .csv by extension).
    #[arg(long)]
    tags: PathBuf,
    /// Coincidence pairing half-window in seconds.
    #[arg(long, default_value_t = 5e-9)]
    window: f64,
    /// Histogram bin width in seconds.
    #[arg(long, default_value_t = FoldOptions::default().bin_width)]
    bin_width: f64,
    /// Fringe periods per folded frame.
    #[arg(long, default_value_t = FoldOptions::default().frame_periods)]
    frame_periods: u32,
    /// Padding beyond the frame on the time-difference axis, seconds.
    #[arg(long, default_value_t = FoldOptions::default().tau_pad)]
    tau_pad: f64,
    /// |t_s − t_i| half-band for the fringe fit, seconds.
    #[arg(long, default_value_t = 800e-12)]
    band: f64,
    /// Exclude |τ₋| below this from the ringdown fit (jitter rounds the
    /// cusp), seconds.
    #[arg(long, default_value_t = 150e-12)]
    exclude_center: f64,
    /// Upper |τ₋| cut for the ringdown fit, seconds.
    #[arg(long)]
    max_tau: Option<f64>,
    /// Prefix for the emitted artifacts
    /// (<prefix>.hist.bin/.hist.csv/.diagonal.csv/.antidiagonal.csv/.fit.json).
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Input time tags (.bin, or .csv by extension).
    #[arg(long)]
    tags: PathBuf,
    /// Coincidence pairing half-window in seconds.
    #[arg(long, default_value_t = 5e-9)]
    window: f64,
    /// Histogram bin width in seconds.
    #[arg(long, default_value_t = FoldOptions::default().bin_width)]
    bin_width: f64,
    /// Fringe periods per folded frame.
    #[arg(long, default_value_t = FoldOptions::default().frame_periods)]
    frame_periods: u32,
    /// Padding beyond the frame on the time-difference axis, seconds.
    #[arg(long, default_value_t = FoldOptions::default().tau_pad)]
    tau_pad: f64,
    /// |t_s − t_i| half-band for the fringe fit, seconds.
    #[arg(long, default_value_t = 800e-12)]
    band: f64,
    /// Skip the accidental-floor subtraction.
    #[arg(long)]
    no_subtract: bool,
    /// |τ₋| where the background sideband starts, seconds (default 5/γ).
    #[arg(long)]
    sideband_start: Option<f64>,
    /// Demultiplexed σZ⊗σZ counts (JSON) to add the third basis.
    #[arg(long)]
    z_counts: Option<PathBuf>,
    /// Bootstrap resamples for the entropy-sum uncertainty (0 = skip).
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    /// Seed for the bootstrap resampling.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output report (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TomoArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Measured setting count tables (JSON list); alternative to --pairs-per-setting.
    #[arg(long, conflicts_with = "pairs_per_setting")]
    counts: Option<PathBuf>,
    /// Simulate this many emitted pairs per measurement setting.
    #[arg(long)]
    pairs_per_setting: Option<usize>,
    /// Random seed for the simulated acquisition and the bootstrap.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Equatorial phase slots per arm.
    #[arg(long, default_value_t = PhaseSlotRule::default().slots_per_arm)]
    slots: usize,
    /// Coincidence pairing half-window in seconds (≥ half a fringe period).
    #[arg(long, default_value_t = 5e-9)]
    window: f64,
    /// When simulating, also write the setting count tables here (JSON).
    #[arg(long)]
    counts_out: Option<PathBuf>,
    /// Bootstrap replicas for fidelity/purity errors (0 = skip).
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    /// Output reconstruction report (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QkdArgs {
    /// JSON file carrying `zz` and `coherence` correlators (a certify
    /// report works directly).
    #[arg(long)]
    correlators: PathBuf,
    /// Probability that a coincidence lands in the key-basis pairing.
    #[arg(long, default_value_t = QkdParams::default().sifting_ratio)]
    sifting_ratio: f64,
    /// Error-correction inefficiency multiplying the bit-error entropy.
    #[arg(long, default_value_t = QkdParams::default().error_correction_inefficiency)]
    error_correction_inefficiency: f64,
    /// Coincidence rate in 1/s; adds absolute secret-rate figures.
    #[arg(long)]
    rate: Option<f64>,
    /// Output report (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum FwiCommand {
    /// Solve the widening + demultiplexing conditions for a geometry.
    Solve(FwiSolveArgs),
    /// Evaluate a design: path difference, delay, spacing, visibility.
    Eval(FwiEvalArgs),
    /// Sweep input angle: CSV of (alpha, delta_l, visibility).
    Sweep(FwiSweepArgs),
}

#[derive(Args)]
struct FwiSolveArgs {
    /// Refractive index of the widening glass.
    #[arg(long)]
    n_glass: f64,
    /// Fixed air gaps of the long arm, single-pass metres (repeatable).
    #[arg(long = "air-gap")]
    air_gaps: Vec<f64>,
    /// Target optical path difference in metres.
    #[arg(long)]
    target: f64,
    /// Retro-reflected geometry (all lengths traversed twice).
    #[arg(long)]
    double_pass: bool,
    /// Output design file (key = value format).
    #[arg(long)]
    out: PathBuf,
    /// Also write the solution summary as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct FwiEvalArgs {
    /// Design file to evaluate.
    #[arg(long)]
    design: PathBuf,
    /// Lorentzian intensity linewidth γ of each bin, 1/s.
    #[arg(long, default_value_t = fbin::jti::SourceConfig::default_source().gamma)]
    gamma: f64,
    /// Frequency-bin spacing Δω, rad/s.
    #[arg(long, default_value_t = fbin::jti::SourceConfig::default_source().delta_omega)]
    delta_omega: f64,
    /// Gaussian input-angle spread (standard deviation), radians.
    #[arg(long, default_value_t = 0.0)]
    spread: f64,
    /// Output evaluation (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FwiSweepArgs {
    /// Design file to sweep.
    #[arg(long)]
    design: PathBuf,
    /// Lorentzian intensity linewidth γ of each bin, 1/s.
    #[arg(long, default_value_t = fbin::jti::SourceConfig::default_source().gamma)]
    gamma: f64,
    /// Frequency-bin spacing Δω, rad/s.
    #[arg(long, default_value_t = fbin::jti::SourceConfig::default_source().delta_omega)]
    delta_omega: f64,
    /// Largest angle in the sweep, radians.
    #[arg(long, default_value_t = 0.05)]
    max_alpha: f64,
    /// Number of sweep points (including both ends).
    #[arg(long, default_value_t = 51)]
    steps: usize,
    /// Output CSV (alpha, delta_l, visibility).
    #[arg(long)]
    out: PathBuf,
}

// ---------------------------------------------------------------------------
// Manifest plumbing
// ---------------------------------------------------------------------------

/// Checksummed record of one emitted artifact.
#[derive(Serialize)]
struct ArtifactRecord {
    path: String,
    sha256: String,
}

/// What a run consumed and produced; written next to the primary output.
#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    config: Option<String>,
    inputs: Vec<String>,
    outputs: Vec<ArtifactRecord>,
    seed: Option<u64>,
}

fn sha256_hex(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("checksumming {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn write_manifest(
    subcommand: &str,
    config: Option<String>,
    inputs: &[&Path],
    outputs: &[&Path],
    seed: Option<u64>,
    primary_out: &Path,
) -> anyhow::Result<()> {
    let records = outputs
        .iter()
        .map(|p| {
            Ok(ArtifactRecord {
                path: p.display().to_string(),
                sha256: sha256_hex(p)?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let manifest = RunManifest {
        subcommand: subcommand.into(),
        config,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: records,
        seed,
    };
    let path = PathBuf::from(format!("{}.manifest.json", primary_out.display()));
    write_json(&path, &manifest)?;
    Ok(())
}

fn read_tags(path: &Path) -> anyhow::Result<TimeTagStream> {
    let stream = if path.extension().is_some_and(|e| e == "csv") {
        read_tags_csv(path)
    } else {
        read_tags_binary(path)
    };
    stream.with_context(|| format!("reading time tags {}", path.display()))
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let cfg = args.config.load()?;
    let pairs = sample_pairs(&cfg.source, args.pairs, args.seed)?;
    let mut outputs: Vec<PathBuf> = vec![args.out.clone()];
    match args.basis {
        SimulatedBasis::Equatorial => {
            let mut stream = apply_detection(&pairs, &cfg.source, &cfg.noise, &cfg.channels, args.seed)?;
            if cfg.noise.pump_leak_fraction > 0.0 {
                stream = add_pump_leak(&stream, &cfg.source, cfg.noise.pump_leak_fraction, args.seed)?;
            }
            write_tags_binary(&args.out, &stream)?;
            if args.csv {
                let csv_path = args.out.with_extension("csv");
                write_tags_csv(&csv_path, &stream)?;
                outputs.push(csv_path);
            }
        }
        SimulatedBasis::Zz => {
            let counts = route_z_basis(&pairs, &cfg.channels, &cfg.noise, args.seed)?;
            write_json(&args.out, &counts)?;
        }
    }
    let output_refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(
        "simulate",
        args.config.path_string(),
        &[],
        &output_refs,
        Some(args.seed),
        &args.out,
    )
}

/// Fitted summary emitted by the `jti` subcommand.
#[derive(Serialize)]
struct JtiReport {
    n_tags: usize,
    n_coincidences: usize,
    visibility: VisibilityFit,
    /// Fitted coherence time 1/γ in seconds.
    coherence_time: ProfileFit,
    fringe_period: f64,
    beat_period: f64,
}

fn cmd_jti(args: JtiArgs) -> anyhow::Result<()> {
    let cfg = args.config.load()?;
    let stream = read_tags(&args.tags)?;
    let coins = coincidences(&stream, args.window);
    if coins.is_empty() {
        return Err(fbin::Error::Data(
            "no coincidences within the pairing window".into(),
        )
        .into());
    }
    let fold = FoldOptions {
        frame_periods: args.frame_periods,
        bin_width: args.bin_width,
        tau_pad: args.tau_pad,
    };
    let hist = fold_coincidences(&coins, &cfg.source, &fold)?;

    let prefix = args.out_prefix.display();
    let hist_bin = PathBuf::from(format!("{prefix}.hist.bin"));
    let hist_csv = PathBuf::from(format!("{prefix}.hist.csv"));
    let diag_csv = PathBuf::from(format!("{prefix}.diagonal.csv"));
    let anti_csv = PathBuf::from(format!("{prefix}.antidiagonal.csv"));
    let fit_json = PathBuf::from(format!("{prefix}.fit.json"));

    write_histogram_binary(&hist_bin, &hist)?;
    write_grid_csv(&hist_csv, &hist)?;

    let diagonal = diagonal_profile(&hist, args.band)?;
    let visibility = fit_visibility(&diagonal, cfg.source.delta_omega)?;
    write_csv(
        &diag_csv,
        "tau_plus_s,counts",
        diagonal
            .tau
            .iter()
            .zip(diagonal.values.iter())
            .map(|(&t, &v)| vec![t, v]),
    )?;

    let anti = antidiagonal_profile(&hist);
    let ringdown = fit_ringdown(
        &anti,
        &RingdownOptions {
            exclude_center: args.exclude_center,
            max_abs_tau: args.max_tau,
        },
    )?;
    write_csv(
        &anti_csv,
        "tau_minus_s,counts",
        anti.tau
            .iter()
            .zip(anti.values.iter())
            .map(|(&t, &v)| vec![t, v]),
    )?;

    let report = JtiReport {
        n_tags: stream.len(),
        n_coincidences: coins.len(),
        visibility,
        coherence_time: ringdown,
        fringe_period: cfg.source.fringe_period(),
        beat_period: cfg.source.beat_period(),
    };
    write_json(&fit_json, &report)?;

    write_manifest(
        "jti",
        args.config.path_string(),
        &[&args.tags],
        &[&hist_bin, &hist_csv, &diag_csv, &anti_csv, &fit_json],
        None,
        &args.out_prefix,
    )
}

/// Accidental-floor summary included in the certification report.
#[derive(Serialize)]
struct BackgroundSummary {
    floor_per_bin: f64,
    n_sideband_bins: usize,
}

/// Entropy-sum bootstrap summary.
#[derive(Serialize)]
struct EntropyBootstrap {
    mean: f64,
    stddev: f64,
    /// (bound − sum) / stddev: how many standard errors below the
    /// separable bound the certificate sits.
    sigma_margin: f64,
}

/// Full certification report: Bell scan, correlators, steering, entropy.
#[derive(Serialize)]
struct CertifyReport {
    n_tags: usize,
    n_coincidences: usize,
    scan: ChshScan,
    background: Option<BackgroundSummary>,
    scan_subtracted: Option<ChshScan>,
    correlators: EquatorialCorrelators,
    /// Equatorial coherence C = (|⟨XX⟩ + ⟨YY⟩| )/2-style magnitude used as
    /// the phase-error input downstream.
    coherence: f64,
    /// Efficiency-corrected ⟨σZ⊗σZ⟩, present when --z-counts was given.
    zz: Option<f64>,
    zz_counts: Option<ZCounts>,
    zz_conditional_entropy: Option<f64>,
    steering: SteeringTest,
    entropy: EntropicCertificate,
    entropy_bootstrap: Option<EntropyBootstrap>,
}

fn cmd_certify(args: CertifyArgs) -> anyhow::Result<()> {
    let cfg = args.config.load()?;
    let stream = read_tags(&args.tags)?;
    let coins = coincidences(&stream, args.window);
    if coins.is_empty() {
        return Err(fbin::Error::Data(
            "no coincidences within the pairing window".into(),
        )
        .into());
    }
    let fold = FoldOptions {
        frame_periods: args.frame_periods,
        bin_width: args.bin_width,
        tau_pad: args.tau_pad,
    };
    let hist = fold_coincidences(&coins, &cfg.source, &fold)?;
    let scan_opts = ChshScanOptions {
        tau_band: args.band,
        sinc_correction: true,
        n_offsets: 64,
    };
    let scan = chsh_scan(&hist, &cfg.source, &scan_opts)?;

    let (background, scan_subtracted) = if args.no_subtract {
        (None, None)
    } else {
        let bg = subtract_background(&hist, &cfg.source, args.sideband_start)?;
        let scan_sub = chsh_scan(&bg.subtracted, &cfg.source, &scan_opts)?;
        (
            Some(BackgroundSummary {
                floor_per_bin: bg.floor_per_bin,
                n_sideband_bins: bg.n_sideband_bins,
            }),
            Some(scan_sub),
        )
    };

    // Certificates use the cleaned fringe when subtraction ran.
    let fringe = scan_subtracted.as_ref().unwrap_or(&scan);
    let correlators =
        EquatorialCorrelators::from_fringe(fringe.visibility.value, fringe.theta);
    let coherence = correlators.coherence();
    let weight = fringe.counts_in_band.max(1.0);
    let mut tables = vec![
        symmetric_outcome_table(correlators.xx, weight)?,
        symmetric_outcome_table(correlators.yy, weight)?,
    ];
    let mut steering_inputs = vec![correlators.xx, correlators.yy];

    let (mut zz, mut zz_counts, mut zz_entropy) = (None, None, None);
    if let Some(z_path) = &args.z_counts {
        let counts: ZCounts = read_json(z_path)
            .with_context(|| format!("reading z-basis counts {}", z_path.display()))?;
        let corrected = counts.efficiency_corrected(&cfg.channels);
        let correlator = correlator_from_counts(&corrected)?;
        let entropy = fbin::analysis::conditional_entropy(&corrected)?;
        steering_inputs.push(correlator.value);
        tables.push(corrected);
        zz = Some(correlator.value);
        zz_counts = Some(counts);
        zz_entropy = Some(entropy);
    }

    let steering = steering_test(&steering_inputs)?;
    let entropy = entropic_certificate(&tables)?;
    let entropy_bootstrap = if args.bootstrap >= 2 {
        let (mean, stddev) = bootstrap_entropy_sum(&tables, args.bootstrap, args.seed)?;
        let sigma_margin = if stddev > 0.0 {
            (entropy.bound - entropy.sum) / stddev
        } else {
            f64::INFINITY
        };
        Some(EntropyBootstrap {
            mean,
            stddev,
            sigma_margin,
        })
    } else {
        None
    };

    let report = CertifyReport {
        n_tags: stream.len(),
        n_coincidences: coins.len(),
        scan,
        background,
        scan_subtracted,
        correlators,
        coherence,
        zz,
        zz_counts,
        zz_conditional_entropy: zz_entropy,
        steering,
        entropy,
        entropy_bootstrap,
    };
    write_json(&args.out, &report)?;

    let mut inputs: Vec<&Path> = vec![&args.tags];
    if let Some(z) = &args.z_counts {
        inputs.push(z);
    }
    write_manifest(
        "certify",
        args.config.path_string(),
        &inputs,
        &[&args.out],
        Some(args.seed),
        &args.out,
    )
}

/// Reconstruction report: the estimate plus acquisition diagnostics.
#[derive(Serialize)]
struct TomoReport {
    result: TomographyResult,
    uncertainty: Option<TomographyUncertainty>,
    gram_condition: f64,
    n_settings: usize,
    total_counts: f64,
}

fn cmd_tomo(args: TomoArgs) -> anyhow::Result<()> {
    let cfg = args.config.load()?;
    let rule = PhaseSlotRule {
        slots_per_arm: args.slots,
    };
    let data: Vec<SettingData> = match (&args.counts, args.pairs_per_setting) {
        (Some(path), None) => read_json(path)
            .with_context(|| format!("reading setting counts {}", path.display()))?,
        (None, Some(pairs_per_setting)) => {
            let data = simulate_tomography_data(
                &cfg.source,
                &cfg.noise,
                &cfg.channels,
                &rule,
                pairs_per_setting,
                args.window,
                args.seed,
            )?;
            if let Some(out) = &args.counts_out {
                write_json(out, &data)?;
            }
            data
        }
        _ => {
            return Err(fbin::Error::Config(
                "pass exactly one of --counts or --pairs-per-setting".into(),
            )
            .into())
        }
    };

    let set = build_projector_set(&data, &cfg.source, &rule)?;
    let result = mle_reconstruct(&set)?;
    if !result.converged {
        return Err(fbin::Error::NonConvergence {
            what: "maximum-likelihood reconstruction".into(),
            iterations: result.iterations,
            residual: result.gradient_norm,
        }
        .into());
    }
    let uncert = if args.bootstrap >= 2 {
        Some(uncertainty(&set, &result, args.bootstrap, args.seed)?)
    } else {
        None
    };
    let total_counts: f64 = data.iter().map(SettingData::total).sum();
    let report = TomoReport {
        result,
        uncertainty: uncert,
        gram_condition: set.gram_condition,
        n_settings: data.len(),
        total_counts,
    };
    write_json(&args.out, &report)?;

    let mut inputs: Vec<&Path> = Vec::new();
    if let Some(c) = &args.counts {
        inputs.push(c);
    }
    let mut outputs: Vec<&Path> = vec![&args.out];
    if args.counts.is_none() {
        if let Some(c) = &args.counts_out {
            outputs.push(c);
        }
    }
    write_manifest(
        "tomo",
        args.config.path_string(),
        &inputs,
        &outputs,
        Some(args.seed),
        &args.out,
    )
}

/// The two correlators a key-rate estimate needs; a certify report's
/// top-level fields match this shape directly.
#[derive(Deserialize)]
struct CorrelatorInput {
    zz: f64,
    coherence: f64,
}

/// Key-rate report with optional absolute rates.
#[derive(Serialize)]
struct QkdOut {
    #[serde(flatten)]
    report: QkdReport,
    coincidence_rate: Option<f64>,
    /// secret_fraction × coincidence_rate, bits per second.
    secret_rate: Option<f64>,
}

fn cmd_qkd(args: QkdArgs) -> anyhow::Result<()> {
    let input: CorrelatorInput = read_json(&args.correlators)
        .with_context(|| format!("reading correlators {}", args.correlators.display()))?;
    let params = QkdParams {
        sifting_ratio: args.sifting_ratio,
        error_correction_inefficiency: args.error_correction_inefficiency,
    };
    let report = qkd_report(input.zz, input.coherence, &params)?;
    let secret_rate = args.rate.map(|r| r * report.secret_fraction);
    let out = QkdOut {
        report,
        coincidence_rate: args.rate,
        secret_rate,
    };
    write_json(&args.out, &out)?;
    write_manifest(
        "qkd",
        None,
        &[&args.correlators],
        &[&args.out],
        None,
        &args.out,
    )
}

/// Solution summary for a solved design.
#[derive(Serialize)]
struct FwiSolution {
    design: FwiDesign,
    glass_length: f64,
    short_arm_length: f64,
    opd: f64,
    widening_coefficient: f64,
    delay: f64,
    bin_spacing: f64,
}

/// Point evaluation of a design.
#[derive(Serialize)]
struct FwiEvaluation {
    opd: f64,
    widening_coefficient: f64,
    delay: f64,
    bin_spacing: f64,
    visibility: f64,
}

fn cmd_fwi(command: FwiCommand) -> anyhow::Result<()> {
    match command {
        FwiCommand::Solve(args) => {
            let design = solve_widened(args.n_glass, &args.air_gaps, args.target, args.double_pass)?;
            write_fwi_design(&args.out, &design)?;
            let opd = design.opd(0.0);
            let demux = demux_delay(opd)?;
            let solution = FwiSolution {
                glass_length: design
                    .long_arm
                    .iter()
                    .find(|s| s.index > 1.0)
                    .map_or(0.0, |s| s.length),
                short_arm_length: design.short_arm.first().map_or(0.0, |s| s.length),
                opd,
                widening_coefficient: design.widening_coefficient(),
                delay: demux.delay,
                bin_spacing: demux.bin_spacing,
                design,
            };
            let mut outputs: Vec<&Path> = vec![&args.out];
            if let Some(json) = &args.json {
                write_json(json, &solution)?;
                outputs.push(json);
            }
            write_manifest("fwi-solve", None, &[], &outputs, None, &args.out)
        }
        FwiCommand::Eval(args) => {
            let design = read_fwi_design(&args.design)
                .with_context(|| format!("reading design {}", args.design.display()))?;
            let opd = design.opd(0.0);
            let demux = demux_delay(opd)?;
            let visibility =
                demux_visibility(&design, args.gamma, args.delta_omega, args.spread)?;
            let eval = FwiEvaluation {
                opd,
                widening_coefficient: design.widening_coefficient(),
                delay: demux.delay,
                bin_spacing: demux.bin_spacing,
                visibility,
            };
            write_json(&args.out, &eval)?;
            write_manifest("fwi-eval", None, &[&args.design], &[&args.out], None, &args.out)
        }
        FwiCommand::Sweep(args) => {
            if args.steps < 2 {
                return Err(fbin::Error::Config("sweep needs at least 2 steps".into()).into());
            }
            let design = read_fwi_design(&args.design)
                .with_context(|| format!("reading design {}", args.design.display()))?;
            let mut rows = Vec::with_capacity(args.steps);
            for k in 0..args.steps {
                let alpha = args.max_alpha * k as f64 / (args.steps - 1) as f64;
                let delta_l = design.opd(alpha);
                // The sweep variable doubles as the angular spread so the
                // column shows how tolerant the design is to that much beam
                // divergence.
                let visibility = demux_visibility(&design, args.gamma, args.delta_omega, alpha)?;
                rows.push(vec![alpha, delta_l, visibility]);
            }
            write_csv(&args.out, "alpha,delta_l,visibility", rows)?;
            write_manifest("fwi-sweep", None, &[&args.design], &[&args.out], None, &args.out)
        }
    }
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Jti(args) => cmd_jti(args),
        Command::Certify(args) => cmd_certify(args),
        Command::Tomo(args) => cmd_tomo(args),
        Command::Qkd(args) => cmd_qkd(args),
        Command::Fwi(command) => cmd_fwi(command),
    }
}

/// Maps an error chain onto (kind, exit code): configuration problems exit
/// 2, data/format problems 3, non-convergence 4.
fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<fbin::Error>() {
            return match e {
                fbin::Error::Config(_) => ("config", 2),
                fbin::Error::NonConvergence { .. } => ("non-convergence", 4),
                _ => ("data", 3),
            };
        }
    }
    ("data", 3)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = classify(&err);
            let payload = serde_json::json!({
                "error": format!("{err:#}"),
                "kind": kind,
                "exit_code": code,
            });
            eprintln!("{payload}");
            ExitCode::from(code)
        }
    }
}
