//! Time-tag level Monte-Carlo model of the pair source and detection chain.
//!
//! The sampler draws pairs straight from the joint temporal density of
//! [`crate::jti`]: the time difference τ₋ = ts − ti is Laplace-distributed
//! with scale 1/γ, the time sum τ₊ = ts + ti follows the raised-cosine
//! fringe 1 + cos(Δω·τ₊ + θ) and is spread uniformly over the acquisition
//! window in whole fringe periods, so the fringe phase is preserved on the
//! absolute clock. Detection then applies, in order: per-channel efficiency
//! thinning, Gaussian timing jitter, dark counts, and uncorrelated
//! accidental pairs. A separate helper adds pump-leak background singles,
//! and [`route_z_basis`] models the frequency-bin demultiplexers used for
//! σZ⊗σZ measurements, including slow interferometer phase diffusion.
//!
//! Everything is driven by explicitly seeded ChaCha streams: the same seed
//! and configuration reproduce the same tags bit for bit, and partitioned
//! runs use [`derive_seed`] to give each partition an independent stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jti::SourceConfig;

/// Channel id of the directly detected signal photon.
pub const CHANNEL_SIGNAL: u8 = 0;
/// Channel id of the directly detected idler photon.
pub const CHANNEL_IDLER: u8 = 1;

/// σ = FWHM · this.
const FWHM_TO_SIGMA: f64 = 0.424_660_900_144_009_53;
/// Offset of the time-sum comb in units of 1/γ; exceeds the τ₋ clamp so
/// every timestamp stays positive after τ₋ spread and jitter.
const MARGIN_COHERENCE_TIMES: f64 = 24.0;
/// |τ₋| draws are clamped here (units of 1/γ); the clipped probability mass
/// is ~2e-9, far below anything a finite sample can resolve.
const TAU_MINUS_CLAMP: f64 = 20.0;

/// Detector and background noise parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Signal detector jitter, FWHM in seconds.
    pub jitter_fwhm_signal: f64,
    /// Idler detector jitter, FWHM in seconds.
    pub jitter_fwhm_idler: f64,
    /// Signal dark-count rate in counts/s.
    pub dark_rate_signal: f64,
    /// Idler dark-count rate in counts/s.
    pub dark_rate_idler: f64,
    /// Fraction of pairs that are uncorrelated accidentals (flat in the
    /// JTI plane).
    pub accidental_fraction: f64,
    /// Half-range of the accidental time difference; match it to the
    /// downstream coincidence window so accidentals form a flat floor there.
    pub accidental_window: f64,
    /// Fraction of single-photon tags contributed by pump leakage.
    pub pump_leak_fraction: f64,
    /// Interferometer phase-diffusion coefficient D in rad²/s; each arm's
    /// demultiplexing visibility decays as e^{−D·t} so the joint σZ⊗σZ
    /// correlator decays as e^{−2D·t}.
    pub phase_diffusion: f64,
}

impl NoiseConfig {
    /// Reference detectors: 60 ps FWHM jitter on both channels, no dark
    /// counts, no accidentals, no leak, no phase diffusion.
    pub fn default_noise() -> Self {
        Self {
            jitter_fwhm_signal: 60e-12,
            jitter_fwhm_idler: 60e-12,
            dark_rate_signal: 0.0,
            dark_rate_idler: 0.0,
            accidental_fraction: 0.0,
            accidental_window: 5e-9,
            pump_leak_fraction: 0.0,
            phase_diffusion: 0.0,
        }
    }

    /// Ideal detectors: everything off.
    pub fn noiseless() -> Self {
        Self {
            jitter_fwhm_signal: 0.0,
            jitter_fwhm_idler: 0.0,
            ..Self::default_noise()
        }
    }

    /// Range/finiteness checks.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("jitter_fwhm_signal", self.jitter_fwhm_signal),
            ("jitter_fwhm_idler", self.jitter_fwhm_idler),
            ("dark_rate_signal", self.dark_rate_signal),
            ("dark_rate_idler", self.dark_rate_idler),
            ("phase_diffusion", self.phase_diffusion),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("accidental_fraction", self.accidental_fraction),
            ("pump_leak_fraction", self.pump_leak_fraction),
        ] {
            if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                return Err(Error::Config(format!(
                    "{name} must lie in [0, 1), got {v}"
                )));
            }
        }
        if !(self.accidental_window.is_finite() && self.accidental_window > 0.0) {
            return Err(Error::Config(format!(
                "accidental_window must be positive, got {}",
                self.accidental_window
            )));
        }
        Ok(())
    }
}

/// Efficiencies and demultiplexer quality of the detection channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Direct (time-resolving path) signal detection efficiency.
    pub eta_signal: f64,
    /// Direct idler detection efficiency.
    pub eta_idler: f64,
    /// Transmission of the frequency-bin demultiplexer outputs,
    /// indexed `[arm][port]` with arm 0 = signal, arm 1 = idler.
    pub z_port_efficiency: [[f64; 2]; 2],
    /// Signal demultiplexer visibility (multi-mode interferometer).
    pub demux_visibility_signal: f64,
    /// Idler demultiplexer visibility (single-mode interferometer).
    pub demux_visibility_idler: f64,
}

impl ChannelModel {
    /// Reference channels: unit direct efficiencies, the measured
    /// demultiplexer port transmissions, and demux visibilities of 0.83
    /// (signal, multi-mode) and 0.92 (idler, single-mode).
    pub fn default_channels() -> Self {
        Self {
            eta_signal: 1.0,
            eta_idler: 1.0,
            z_port_efficiency: [[0.0723, 0.0429], [0.2635, 0.2499]],
            demux_visibility_signal: 0.83,
            demux_visibility_idler: 0.92,
        }
    }

    /// Range checks: every efficiency and visibility in [0, 1] (port
    /// efficiencies strictly positive so count normalization stays finite).
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_signal", self.eta_signal),
            ("eta_idler", self.eta_idler),
            ("demux_visibility_signal", self.demux_visibility_signal),
            ("demux_visibility_idler", self.demux_visibility_idler),
        ] {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::Config(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        for arm in 0..2 {
            for port in 0..2 {
                let v = self.z_port_efficiency[arm][port];
                if !(v.is_finite() && v > 0.0 && v <= 1.0) {
                    return Err(Error::Config(format!(
                        "z_port_efficiency[{arm}][{port}] must lie in (0, 1], got {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One detection event: channel id plus the timestamp in integer picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeTag {
    /// Timestamp in picoseconds from the acquisition origin.
    pub time_ps: u64,
    /// Detection channel.
    pub channel: u8,
}

/// A time-ordered list of detection events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTagStream {
    tags: Vec<TimeTag>,
}

impl TimeTagStream {
    /// Wraps tags, sorting them by (time, channel).
    pub fn new(mut tags: Vec<TimeTag>) -> Self {
        tags.sort_unstable();
        Self { tags }
    }

    /// The sorted tags.
    pub fn tags(&self) -> &[TimeTag] {
        &self.tags
    }

    /// Number of tags.
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    /// True when the stream holds no tags.
    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Latest timestamp, or 0 for an empty stream.
    pub fn span_ps(&self) -> u64 {
        self.tags.last().map_or(0, |t| t.time_ps)
    }

    /// Tags on one channel, as seconds.
    pub fn channel_times(&self, channel: u8) -> Vec<f64> {
        self.tags
            .iter()
            .filter(|t| t.channel == channel)
            .map(|t| t.time_ps as f64 * 1e-12)
            .collect()
    }
}

/// Merges streams by re-sorting the union; associative and commutative, so
/// partitioned simulations can be combined in any grouping.
pub fn merge_streams(streams: &[TimeTagStream]) -> TimeTagStream {
    let mut tags = Vec::with_capacity(streams.iter().map(TimeTagStream::len).sum());
    for s in streams {
        tags.extend_from_slice(&s.tags);
    }
    TimeTagStream::new(tags)
}

/// Derives the RNG seed for an independent substream (partitioned runs,
/// detection stage, background stages). SplitMix64 finalizer keeps derived
/// seeds decorrelated even for adjacent inputs.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Offset of the time-sum comb from the clock origin, rounded up to a whole
/// number of fringe periods so the absolute fringe phase is untouched.
/// Individual photons land no earlier than half this minus the τ₋ clamp,
/// which stays positive by construction.
pub fn emission_margin(cfg: &SourceConfig) -> f64 {
    let period = cfg.fringe_period();
    (MARGIN_COHERENCE_TIMES / (cfg.gamma * period)).ceil() * period
}

/// Inverse-CDF draw of the Laplace(scale = 1/γ) time difference, clamped to
/// ±20/γ.
fn sample_tau_minus<R: Rng>(rng: &mut R, gamma: f64) -> f64 {
    let u: f64 = rng.gen::<f64>() - 0.5;
    let magnitude = -(1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln() / gamma;
    let clamped = magnitude.min(TAU_MINUS_CLAMP / gamma);
    if u < 0.0 {
        -clamped
    } else {
        clamped
    }
}

/// Inverse-CDF draw from the raised-cosine density (1 + cos(ω·x + θ))/P on
/// one period P = 2π/ω: safeguarded Newton on the monotone CDF equation
/// g(x) = x + (sin(ωx + θ) − sin θ)/ω − u·P.
fn sample_raised_cosine<R: Rng>(rng: &mut R, omega: f64, theta: f64) -> f64 {
    let period = 2.0 * std::f64::consts::PI / omega;
    let u: f64 = rng.gen();
    let target = u * period;
    let g = |x: f64| x + ((omega * x + theta).sin() - theta.sin()) / omega - target;
    let (mut lo, mut hi) = (0.0, period);
    let mut x = target;
    for _ in 0..64 {
        let gx = g(x);
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = 1.0 + (omega * x + theta).cos();
        let step = if slope > 1e-3 { gx / slope } else { f64::NAN };
        let mut next = x - step;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() < 1e-18 {
            return next;
        }
        x = next;
    }
    x
}

/// Draws `n` pair emission times from the joint temporal density: returns
/// absolute `(ts, ti)` in seconds, time-sum spread over the acquisition
/// window in whole fringe periods (plus the safety margin), time-difference
/// Laplace(1/γ).
pub fn sample_pairs(cfg: &SourceConfig, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    let period = cfg.fringe_period();
    // Wall-clock times are half the time sum, so the τ₊ comb spans twice
    // the acquisition window.
    let slots = (2.0 * cfg.window / period).floor() as u64;
    if slots == 0 {
        return Err(Error::Config(format!(
            "window {:.3e} s is shorter than half a fringe period {:.3e} s",
            cfg.window, period
        )));
    }
    let margin = emission_margin(cfg);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let phase_part = sample_raised_cosine(&mut rng, cfg.delta_omega, cfg.theta);
        let slot = rng.gen_range(0..slots);
        let tau_plus = margin + slot as f64 * period + phase_part;
        let tau_minus = sample_tau_minus(&mut rng, cfg.gamma);
        pairs.push((0.5 * (tau_plus + tau_minus), 0.5 * (tau_plus - tau_minus)));
    }
    Ok(pairs)
}

fn jitter_sigma(fwhm: f64) -> f64 {
    fwhm * FWHM_TO_SIGMA
}

fn to_tag(time_s: f64, channel: u8) -> Result<TimeTag> {
    let ps = (time_s * 1e12).round();
    if !(0.0..=u64::MAX as f64).contains(&ps) {
        return Err(Error::Data(format!(
            "timestamp {time_s:.3e} s falls outside the acquisition clock"
        )));
    }
    Ok(TimeTag {
        time_ps: ps as u64,
        channel,
    })
}

/// Runs the detection chain over emitted pairs and returns the time-tag
/// stream: efficiency thinning, Gaussian jitter, dark counts, and a flat
/// accidental-pair floor, each on its own derived RNG stream.
pub fn apply_detection(
    pairs: &[(f64, f64)],
    cfg: &SourceConfig,
    noise: &NoiseConfig,
    channels: &ChannelModel,
    seed: u64,
) -> Result<TimeTagStream> {
    cfg.validate()?;
    noise.validate()?;
    channels.validate()?;

    let sigma_s = jitter_sigma(noise.jitter_fwhm_signal);
    let sigma_i = jitter_sigma(noise.jitter_fwhm_idler);
    let normal_s = (sigma_s > 0.0)
        .then(|| Normal::new(0.0, sigma_s))
        .transpose()
        .map_err(|e| Error::Config(format!("signal jitter: {e}")))?;
    let normal_i = (sigma_i > 0.0)
        .then(|| Normal::new(0.0, sigma_i))
        .transpose()
        .map_err(|e| Error::Config(format!("idler jitter: {e}")))?;

    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 1));
    let mut tags = Vec::with_capacity(2 * pairs.len());
    let mut surviving_pairs = 0usize;
    for &(ts, ti) in pairs {
        let keep_s = rng.gen::<f64>() < channels.eta_signal;
        let keep_i = rng.gen::<f64>() < channels.eta_idler;
        if keep_s && keep_i {
            surviving_pairs += 1;
        }
        if keep_s {
            let j = normal_s.map_or(0.0, |n| n.sample(&mut rng));
            tags.push(to_tag(ts + j, CHANNEL_SIGNAL)?);
        }
        if keep_i {
            let j = normal_i.map_or(0.0, |n| n.sample(&mut rng));
            tags.push(to_tag(ti + j, CHANNEL_IDLER)?);
        }
    }

    // Dark counts: homogeneous Poisson over the full clock span (photons
    // land within margin/2 + window + clamp/2 of the origin).
    let span = cfg.window + emission_margin(cfg);
    let mut dark_rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 2));
    for (rate, channel) in [
        (noise.dark_rate_signal, CHANNEL_SIGNAL),
        (noise.dark_rate_idler, CHANNEL_IDLER),
    ] {
        if rate <= 0.0 {
            continue;
        }
        let lambda = rate * span;
        let n_dark = Poisson::new(lambda)
            .map_err(|e| Error::Config(format!("dark-count rate: {e}")))?
            .sample(&mut dark_rng) as u64;
        for _ in 0..n_dark {
            tags.push(to_tag(dark_rng.gen_range(0.0..span), channel)?);
        }
    }

    // Accidentals: pairs flat in wall-clock and flat in time difference
    // across ±accidental_window — a constant floor in the JTI plane.
    if noise.accidental_fraction > 0.0 {
        let f = noise.accidental_fraction;
        let n_acc = (f / (1.0 - f) * surviving_pairs as f64).round() as usize;
        let mut acc_rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 3));
        let wall_clock_start = 0.5 * emission_margin(cfg);
        for _ in 0..n_acc {
            let ts = wall_clock_start + acc_rng.gen::<f64>() * cfg.window;
            let dt = (2.0 * acc_rng.gen::<f64>() - 1.0) * noise.accidental_window;
            tags.push(to_tag(ts, CHANNEL_SIGNAL)?);
            tags.push(to_tag(ts - dt, CHANNEL_IDLER)?);
        }
    }

    Ok(TimeTagStream::new(tags))
}

/// Draws `n` pump-leak tags over `[0, span)`: channel fair-coin, time
/// density ∝ 1 + cos(Δω·t) — the intensity beat of the bichromatic pump
/// (period 2π/Δω), phase-locked to the pair fringe's absolute clock.
pub fn pump_leak_tags(
    cfg: &SourceConfig,
    n: usize,
    span: f64,
    seed: u64,
) -> Result<Vec<TimeTag>> {
    cfg.validate()?;
    let period = cfg.fringe_period();
    let slots = (span / period).floor() as u64;
    if slots == 0 {
        return Err(Error::Config(format!(
            "span {span:.3e} s is shorter than one pump beat period {period:.3e} s"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut tags = Vec::with_capacity(n);
    for _ in 0..n {
        let x = sample_raised_cosine(&mut rng, cfg.delta_omega, 0.0);
        let slot = rng.gen_range(0..slots);
        let channel = if rng.gen::<bool>() {
            CHANNEL_SIGNAL
        } else {
            CHANNEL_IDLER
        };
        tags.push(to_tag(slot as f64 * period + x, channel)?);
    }
    Ok(tags)
}

/// Adds pump-leak background singles so that the requested fraction of all
/// tags in the result is leak. `leak_fraction = 0` returns the input
/// unchanged.
pub fn add_pump_leak(
    stream: &TimeTagStream,
    cfg: &SourceConfig,
    leak_fraction: f64,
    seed: u64,
) -> Result<TimeTagStream> {
    if !(leak_fraction.is_finite() && (0.0..1.0).contains(&leak_fraction)) {
        return Err(Error::Config(format!(
            "pump_leak_fraction must lie in [0, 1), got {leak_fraction}"
        )));
    }
    if leak_fraction == 0.0 || stream.is_empty() {
        return Ok(stream.clone());
    }
    let n_leak = (leak_fraction / (1.0 - leak_fraction) * stream.len() as f64).round() as usize;
    let span = stream.span_ps() as f64 * 1e-12 + cfg.fringe_period();
    let mut tags = stream.tags.clone();
    tags.extend(pump_leak_tags(cfg, n_leak, span, derive_seed(seed, 4))?);
    Ok(TimeTagStream::new(tags))
}

/// Outcome of routing one pair through both demultiplexers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZEvent {
    /// Pair wall-clock time (signal emission) in seconds.
    pub time: f64,
    /// Signal output port (0 or 1).
    pub port_signal: u8,
    /// Idler output port (0 or 1).
    pub port_idler: u8,
}

/// Coincidence counts behind the two demultiplexers, indexed
/// `[signal port][idler port]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZCounts {
    /// Raw coincidences per output pair.
    pub counts: [[u64; 2]; 2],
    /// Number of emitted pairs routed.
    pub n_pairs: usize,
}

impl ZCounts {
    /// Total recorded coincidences.
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Counts divided by the port-pair transmission products, as expected
    /// by the correlator and entropy estimators (relative scale only).
    pub fn efficiency_corrected(&self, channels: &ChannelModel) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for s in 0..2 {
            for i in 0..2 {
                let eta = channels.z_port_efficiency[0][s] * channels.z_port_efficiency[1][i];
                out[s][i] = self.counts[s][i] as f64 / eta;
            }
        }
        out
    }
}

/// Routes each pair through both frequency-bin demultiplexers and returns
/// the per-event outcomes.
///
/// The source's frequency bins are perfectly correlated (both photons in
/// bin 0 or both in bin 1, fair coin). Each arm then maps the bin to the
/// matching output port with probability (1 + V_arm·e^{−D·t})/2, where
/// V_arm is that demultiplexer's visibility and D the phase-diffusion
/// coefficient, so the joint correlator decays as V_s·V_i·e^{−2D·t}.
/// Finally each photon survives its port's transmission η.
pub fn route_z_events(
    pairs: &[(f64, f64)],
    channels: &ChannelModel,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<Vec<ZEvent>> {
    channels.validate()?;
    noise.validate()?;
    let d = noise.phase_diffusion;
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 5));
    let mut events = Vec::new();
    for &(ts, _ti) in pairs {
        let bin = u8::from(rng.gen::<bool>());
        let decay = (-d * ts).exp();
        let correct_s = 0.5 * (1.0 + channels.demux_visibility_signal * decay);
        let correct_i = 0.5 * (1.0 + channels.demux_visibility_idler * decay);
        let port_s = if rng.gen::<f64>() < correct_s { bin } else { 1 - bin };
        let port_i = if rng.gen::<f64>() < correct_i { bin } else { 1 - bin };
        let keep_s = rng.gen::<f64>() < channels.z_port_efficiency[0][port_s as usize];
        let keep_i = rng.gen::<f64>() < channels.z_port_efficiency[1][port_i as usize];
        if keep_s && keep_i {
            events.push(ZEvent {
                time: ts,
                port_signal: port_s,
                port_idler: port_i,
            });
        }
    }
    Ok(events)
}

/// Routing outcome of one pair with only one arm demultiplexed; the other
/// photon keeps its (jittered) detection time for phase-slot analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedEvent {
    /// Output port of the demultiplexed arm (0 or 1).
    pub port: u8,
    /// Detection time of the directly detected arm, in seconds.
    pub time_direct: f64,
}

/// Routes each pair with the frequency-bin demultiplexer on `z_arm`
/// ([`CHANNEL_SIGNAL`] or [`CHANNEL_IDLER`]) while the opposite photon is
/// detected directly with its timing jitter applied.
///
/// Port routing follows [`route_z_events`] for the chosen arm (fair-coin
/// frequency bin, visibility-limited port fidelity decaying with phase
/// diffusion, per-port transmission); the direct arm survives its channel
/// efficiency. Dark counts and accidentals are deliberately out of scope:
/// both are flat in the direct arm's detection phase, so for the mixed
/// settings they only rescale an already flat distribution.
pub fn route_mixed_events(
    pairs: &[(f64, f64)],
    channels: &ChannelModel,
    noise: &NoiseConfig,
    z_arm: u8,
    seed: u64,
) -> Result<Vec<MixedEvent>> {
    channels.validate()?;
    noise.validate()?;
    if z_arm != CHANNEL_SIGNAL && z_arm != CHANNEL_IDLER {
        return Err(Error::Config(format!(
            "z_arm must be {CHANNEL_SIGNAL} (signal) or {CHANNEL_IDLER} (idler), got {z_arm}"
        )));
    }
    let (demux_visibility, eta_direct, direct_jitter) = if z_arm == CHANNEL_SIGNAL {
        (
            channels.demux_visibility_signal,
            channels.eta_idler,
            noise.jitter_fwhm_idler,
        )
    } else {
        (
            channels.demux_visibility_idler,
            channels.eta_signal,
            noise.jitter_fwhm_signal,
        )
    };
    let sigma = jitter_sigma(direct_jitter);
    let normal = (sigma > 0.0)
        .then(|| Normal::new(0.0, sigma))
        .transpose()
        .map_err(|e| Error::Config(format!("direct-arm jitter: {e}")))?;
    let d = noise.phase_diffusion;
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 6));
    let mut events = Vec::new();
    for &(ts, ti) in pairs {
        let (t_z, t_direct) = if z_arm == CHANNEL_SIGNAL {
            (ts, ti)
        } else {
            (ti, ts)
        };
        let bin = u8::from(rng.gen::<bool>());
        let correct = 0.5 * (1.0 + demux_visibility * (-d * t_z).exp());
        let port = if rng.gen::<f64>() < correct { bin } else { 1 - bin };
        let keep_z = rng.gen::<f64>() < channels.z_port_efficiency[z_arm as usize][port as usize];
        let keep_direct = rng.gen::<f64>() < eta_direct;
        if keep_z && keep_direct {
            let j = normal.map_or(0.0, |n| n.sample(&mut rng));
            events.push(MixedEvent {
                port,
                time_direct: t_direct + j,
            });
        }
    }
    Ok(events)
}

/// [`route_z_events`] aggregated into the 2×2 coincidence table.
pub fn route_z_basis(
    pairs: &[(f64, f64)],
    channels: &ChannelModel,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<ZCounts> {
    let events = route_z_events(pairs, channels, noise, seed)?;
    let mut counts = [[0u64; 2]; 2];
    for e in &events {
        counts[e.port_signal as usize][e.port_idler as usize] += 1;
    }
    Ok(ZCounts {
        counts,
        n_pairs: pairs.len(),
    })
}
