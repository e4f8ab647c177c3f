//! Statistics on time-tag streams: coincidence matching, fringe-fold
//! histogramming, Bell-parameter scans, entropic and steering certificates,
//! key-rate estimates, and distributional self-tests.
//!
//! The measurement model throughout: a photon detected at time t heralds a
//! projection onto the equatorial Bloch axis at phase φ(t) = −Δω·t (mod 2π),
//! so the coincidence fringe along the time sum encodes every pairwise
//! equatorial correlator at once. Fits of that fringe feed the CHSH scan
//! ([`chsh_scan`]), the steering and entropy certificates, and the key-rate
//! report; σZ⊗σZ data arrives separately as demultiplexer port counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jti::{
    diagonal_profile, fit_visibility, JtiGrid, JtiHistogram, Profile, ProfileFit, SourceConfig,
    WeightedJti,
};
use crate::sim::{TimeTagStream, ZEvent, CHANNEL_IDLER, CHANNEL_SIGNAL};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
/// 2√2, the quantum bound of the CHSH combination.
pub const CHSH_QUANTUM_BOUND: f64 = 2.0 * std::f64::consts::SQRT_2;

/// All (signal, idler) tag pairs with |t_s − t_i| ≤ `window`, in seconds.
/// Every tag pair inside the window is reported (standard correlation
/// histogramming), so one tag may appear in several coincidences when the
/// rate is high.
pub fn coincidences(stream: &TimeTagStream, window: f64) -> Vec<(f64, f64)> {
    let signal = stream.channel_times(CHANNEL_SIGNAL);
    let idler = stream.channel_times(CHANNEL_IDLER);
    let mut out = Vec::new();
    let mut lo = 0usize;
    for &ts in &signal {
        while lo < idler.len() && idler[lo] < ts - window {
            lo += 1;
        }
        let mut j = lo;
        while j < idler.len() && idler[j] <= ts + window {
            out.push((ts, idler[j]));
            j += 1;
        }
    }
    out
}

/// Folding parameters for the coincidence histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldOptions {
    /// Frame length in fringe periods. The fold subtracts the same whole
    /// number of frames from both detection times, so the time difference
    /// is exact and the time-sum fringe phase is untouched.
    pub frame_periods: u32,
    /// Histogram bin width in seconds.
    pub bin_width: f64,
    /// Axis padding in seconds; coincidences with |t_s − t_i| ≤ 2·`tau_pad`
    /// always land inside the histogram, so set it to half the coincidence
    /// window.
    pub tau_pad: f64,
}

impl Default for FoldOptions {
    fn default() -> Self {
        Self {
            frame_periods: 2,
            bin_width: 16e-12,
            tau_pad: 2.5e-9,
        }
    }
}

impl FoldOptions {
    fn validate(&self) -> Result<()> {
        if self.frame_periods == 0 {
            return Err(Error::Config("frame_periods must be at least 1".into()));
        }
        if !(self.bin_width.is_finite() && self.bin_width > 0.0) {
            return Err(Error::Config(format!(
                "bin_width must be positive, got {}",
                self.bin_width
            )));
        }
        if !(self.tau_pad.is_finite() && self.tau_pad >= 0.0) {
            return Err(Error::Config(format!(
                "tau_pad must be nonnegative, got {}",
                self.tau_pad
            )));
        }
        Ok(())
    }
}

/// Folds coincidences into a two-dimensional histogram one frame long.
///
/// Each coincidence is shifted by a whole number of frames (frame = an
/// integer number of fringe periods), the same shift on both times: the
/// time difference survives exactly and the time-sum phase modulo the
/// fringe period is preserved, so long acquisitions compress into a small
/// grid without blurring either structure.
pub fn fold_coincidences(
    coins: &[(f64, f64)],
    cfg: &SourceConfig,
    opts: &FoldOptions,
) -> Result<JtiHistogram> {
    cfg.validate()?;
    opts.validate()?;
    let frame = f64::from(opts.frame_periods) * cfg.fringe_period();
    let n_bins = ((frame + 2.0 * opts.tau_pad) / opts.bin_width).ceil() as usize;
    let mut hist = JtiHistogram::new(opts.bin_width, -opts.tau_pad, -opts.tau_pad, n_bins, n_bins)?;
    for &(ts, ti) in coins {
        let shift = (0.5 * (ts + ti) / frame).floor() * frame;
        hist.accumulate(ts - shift, ti - shift);
    }
    Ok(hist)
}

/// Options for the Bell-parameter scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshScanOptions {
    /// Half-width of the |t_s − t_i| band kept for the fringe fit, seconds.
    pub tau_band: f64,
    /// Divide the fitted amplitude by the bin-averaging attenuation
    /// sin(Δω·w/2)/(Δω·w/2) of the histogram bin width w.
    pub sinc_correction: bool,
    /// Number of scan offsets over one beat period.
    pub n_offsets: usize,
}

impl Default for ChshScanOptions {
    fn default() -> Self {
        Self {
            tau_band: 800e-12,
            sinc_correction: true,
            n_offsets: 64,
        }
    }
}

/// Result of [`chsh_scan`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChshScan {
    /// Fringe visibility after the optional bin-width correction.
    pub visibility: ProfileFit,
    /// Fitted fringe phase (radians).
    pub theta: f64,
    /// Largest Bell parameter over analyzer settings: 2√2 · visibility.
    pub max_s: ProfileFit,
    /// Common analyzer time offsets scanned (seconds, one beat period).
    pub offsets: Vec<f64>,
    /// Bell parameter at each offset for the settings family
    /// (a, a+π/2, a+π/4, a−π/4) with a = Δω·t.
    pub s_curve: Vec<f64>,
    /// Total histogram counts inside the fitted band.
    pub counts_in_band: f64,
    /// Amplitude attenuation that was divided out (1.0 when disabled).
    pub sinc_factor: f64,
}

/// Extracts the time-sum fringe from a coincidence histogram and converts
/// it to a Bell-parameter scan.
///
/// Measuring both photons with equatorial projectors at phases summing to
/// φ gives the correlator E(φ) = V·cos(φ − θ); the CHSH combination over
/// the settings family (a, a+π/2, a+π/4, a−π/4) then equals
/// S(t) = −2√2·V·sin(2Δω·t − θ) for a common analyzer delay t, so its
/// extremum over t is 2√2·V. V and θ come from a least-squares fringe fit
/// of the diagonal band of the histogram.
pub fn chsh_scan(
    grid: &impl JtiGrid,
    cfg: &SourceConfig,
    opts: &ChshScanOptions,
) -> Result<ChshScan> {
    cfg.validate()?;
    if opts.n_offsets < 2 {
        return Err(Error::Config("n_offsets must be at least 2".into()));
    }
    let profile = diagonal_profile(grid, opts.tau_band)?;
    let fit = fit_visibility(&profile, cfg.delta_omega)?;
    let half_bin_phase = 0.5 * cfg.delta_omega * grid.bin_width();
    let sinc_factor = if opts.sinc_correction {
        half_bin_phase.sin() / half_bin_phase
    } else {
        1.0
    };
    let visibility = ProfileFit {
        value: fit.visibility.value / sinc_factor,
        stderr: fit.visibility.stderr / sinc_factor,
        residual_rms: fit.visibility.residual_rms,
    };
    let max_s = ProfileFit {
        value: CHSH_QUANTUM_BOUND * visibility.value,
        stderr: CHSH_QUANTUM_BOUND * visibility.stderr,
        residual_rms: fit.visibility.residual_rms,
    };
    let period = cfg.beat_period();
    let offsets: Vec<f64> = (0..opts.n_offsets)
        .map(|k| k as f64 / opts.n_offsets as f64 * period)
        .collect();
    let s_curve = offsets
        .iter()
        .map(|t| {
            -CHSH_QUANTUM_BOUND
                * visibility.value
                * (2.0 * cfg.delta_omega * t - fit.theta).sin()
        })
        .collect();
    Ok(ChshScan {
        visibility,
        theta: fit.theta,
        max_s,
        offsets,
        s_curve,
        counts_in_band: profile.values.iter().sum(),
        sinc_factor,
    })
}

/// Flat-background estimate from the wings of the time-difference axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackgroundEstimate {
    /// Estimated accidental level per bin.
    pub floor_per_bin: f64,
    /// Number of sideband bins the floor was averaged over.
    pub n_sideband_bins: usize,
    /// Histogram with the floor subtracted over the populated region.
    pub subtracted: WeightedJti,
}

/// Estimates the flat accidental floor from bins with |t_s − t_i| beyond
/// `sideband_start` (defaults to five coherence times, where the genuine
/// pair density has decayed below 1 %) and subtracts it from every bin
/// that can hold data.
///
/// Folded histograms can only be populated for |t_s − t_i| up to twice the
/// folding pad and for frame-local midpoints inside one frame; bins beyond
/// that coverage are structurally empty, so they are excluded from the
/// floor average and left at zero rather than driven negative. Populated
/// bins are *not* clamped at zero: near-empty fringe troughs carry Poisson
/// noise around the floor, and clamping would lift their mean, eating
/// fringe amplitude. Downstream sums and least-squares fits are linear, so
/// signed residuals average out correctly.
pub fn subtract_background(
    hist: &JtiHistogram,
    cfg: &SourceConfig,
    sideband_start: Option<f64>,
) -> Result<BackgroundEstimate> {
    cfg.validate()?;
    let start = match sideband_start {
        Some(s) if s.is_finite() && s > 0.0 => s,
        Some(s) => {
            return Err(Error::Config(format!(
                "sideband_start must be positive, got {s}"
            )))
        }
        None => 5.0 / cfg.gamma,
    };
    // A folded histogram (negative axis origins) is populated only on the
    // hexagon {|τ| ≤ 2·pad} ∩ {frame-local midpoint ∈ [0, frame)}; average
    // strictly inside it so structurally empty corners don't dilute the
    // floor. Unfolded histograms (origins ≥ 0) have no such constraint.
    let w = hist.bin_width();
    let pad = -hist.t0_s().max(hist.t0_i());
    // `tau_limit`/`mid_range` bound the floor average strictly inside the
    // coverage region; `support` is the full region a fold can populate.
    let (tau_limit, mid_range, support) = if pad > 0.0 {
        let frame = (hist.dims().0.min(hist.dims().1) as f64) * w - 2.0 * pad;
        (
            2.0 * pad - 2.0 * w,
            Some((w, frame - w)),
            Some((2.0 * pad, 0.0, frame)),
        )
    } else {
        (f64::INFINITY, None, None)
    };
    let (rows, cols) = hist.dims();
    let mut floor_sum = 0.0;
    let mut n_sideband = 0usize;
    for r in 0..rows {
        for c in 0..cols {
            let (ts, ti) = hist.bin_center(r, c);
            let tau = (ts - ti).abs();
            let mid_ok = mid_range
                .map_or(true, |(lo, hi)| (lo..=hi).contains(&(0.5 * (ts + ti))));
            if tau > start && tau <= tau_limit && mid_ok {
                floor_sum += f64::from(hist.count(r, c));
                n_sideband += 1;
            }
        }
    }
    if n_sideband == 0 {
        return Err(Error::Data(format!(
            "no sideband bins between |t_s − t_i| = {start:.3e} s and the coverage limit \
             {tau_limit:.3e} s; widen the histogram padding"
        )));
    }
    let floor = floor_sum / n_sideband as f64;
    let mut subtracted = WeightedJti::from_histogram(hist);
    for r in 0..rows {
        for c in 0..cols {
            let (ts, ti) = hist.bin_center(r, c);
            let in_support = support.map_or(true, |(tau_max, mid_lo, mid_hi)| {
                let mid = 0.5 * (ts + ti);
                (ts - ti).abs() <= tau_max && mid >= mid_lo && mid < mid_hi
            });
            if in_support {
                subtracted.values_mut()[r * cols + c] -= floor;
            }
        }
    }
    Ok(BackgroundEstimate {
        floor_per_bin: floor,
        n_sideband_bins: n_sideband,
        subtracted,
    })
}

/// Equatorial projector phase heralded by a detection at time `t`.
pub fn detection_phase(cfg: &SourceConfig, t: f64) -> f64 {
    (-cfg.delta_omega * t).rem_euclid(TWO_PI)
}

/// Joint ± outcome table of a symmetric binary channel with correlator `e`
/// and `total` events: p(same) = (1 + e)/2 split evenly between ++ and −−.
///
/// Equatorial measurements on the fringe have uniform single-party
/// marginals, so their joint statistics are fully determined by the
/// correlator; this converts a fitted fringe correlator (plus an event
/// budget) into the table form the entropy certificates consume.
pub fn symmetric_outcome_table(e: f64, total: f64) -> Result<[[f64; 2]; 2]> {
    if !(e.is_finite() && e.abs() <= 1.0) {
        return Err(Error::Config(format!("correlator {e} outside [−1, 1]")));
    }
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Config(format!("total weight {total} must be positive")));
    }
    let same = 0.25 * (1.0 + e) * total;
    let diff = 0.25 * (1.0 - e) * total;
    Ok([[same, diff], [diff, same]])
}

/// A ±1⊗±1 correlation estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Correlator {
    /// ⟨A⊗B⟩ estimate.
    pub value: f64,
    /// √((1 − E²)/N); treats the weights as event counts.
    pub stderr: f64,
    /// Total weight behind the estimate.
    pub total: f64,
}

/// Correlator of a 2×2 outcome table laid out `[a][b]` with outcome 0 ↦ +1.
pub fn correlator_from_counts(weights: &[[f64; 2]; 2]) -> Result<Correlator> {
    let mut total = 0.0;
    for row in weights {
        for &w in row {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Data(format!("invalid outcome weight {w}")));
            }
            total += w;
        }
    }
    if total <= 0.0 {
        return Err(Error::Data("empty outcome table".into()));
    }
    let value = (weights[0][0] + weights[1][1] - weights[0][1] - weights[1][0]) / total;
    let stderr = ((1.0 - value * value).max(0.0) / total).sqrt();
    Ok(Correlator {
        value,
        stderr,
        total,
    })
}

/// Every equatorial correlator implied by a fitted fringe (V, θ):
/// E(a, b) = V·cos(a + b − θ).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EquatorialCorrelators {
    /// ⟨σX ⊗ σX⟩ = V·cos θ.
    pub xx: f64,
    /// ⟨σX ⊗ σY⟩ = V·sin θ.
    pub xy: f64,
    /// ⟨σY ⊗ σX⟩ = V·sin θ.
    pub yx: f64,
    /// ⟨σY ⊗ σY⟩ = −V·cos θ.
    pub yy: f64,
}

impl EquatorialCorrelators {
    /// Builds the correlators from a fitted fringe amplitude and phase.
    pub fn from_fringe(visibility: f64, theta: f64) -> Self {
        Self {
            xx: visibility * theta.cos(),
            xy: visibility * theta.sin(),
            yx: visibility * theta.sin(),
            yy: -visibility * theta.cos(),
        }
    }

    /// Coherence √(XX² + XY²) = V, the basis-independent fringe amplitude.
    pub fn coherence(&self) -> f64 {
        self.xx.hypot(self.xy)
    }
}

/// Binary Shannon entropy in bits; 0·log 0 ≡ 0. NaN outside [0, 1].
pub fn binary_entropy(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    let term = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

fn entropy(ps: impl Iterator<Item = f64>) -> f64 {
    ps.filter(|&p| p > 0.0).map(|p| -p * p.log2()).sum()
}

/// Shannon entropy (bits) of the second party's outcome conditioned on the
/// first party's, H(B|A) = H(AB) − H(A), from a joint table laid out
/// `[a][b]`.
pub fn conditional_entropy(weights: &[[f64; 2]; 2]) -> Result<f64> {
    let mut total = 0.0;
    for row in weights {
        for &w in row {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Data(format!("invalid outcome weight {w}")));
            }
            total += w;
        }
    }
    if total <= 0.0 {
        return Err(Error::Data("empty outcome table".into()));
    }
    let p = |a: usize, b: usize| weights[a][b] / total;
    let joint = entropy((0..4).map(|k| p(k / 2, k % 2)));
    let marginal = entropy((0..2).map(|a| p(a, 0) + p(a, 1)));
    Ok(joint - marginal)
}

/// Entropic uncertainty certificate over complementary measurement bases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropicCertificate {
    /// Conditional entropy of each basis, in input order.
    pub terms: Vec<f64>,
    /// Sum of the terms.
    pub sum: f64,
    /// Lower bound obeyed by every separable state: (k − 1) bits for k
    /// mutually unbiased bases.
    pub bound: f64,
    /// True when the sum beats the separable bound.
    pub violated: bool,
}

/// Computes the summed conditional entropies of two or three complementary
/// bases; a sum below k − 1 bits certifies entanglement.
pub fn entropic_certificate(tables: &[[[f64; 2]; 2]]) -> Result<EntropicCertificate> {
    if !(2..=3).contains(&tables.len()) {
        return Err(Error::Config(format!(
            "entropic certificate needs 2 or 3 bases, got {}",
            tables.len()
        )));
    }
    let terms: Vec<f64> = tables
        .iter()
        .map(conditional_entropy)
        .collect::<Result<_>>()?;
    let sum = terms.iter().sum();
    let bound = (tables.len() - 1) as f64;
    Ok(EntropicCertificate {
        terms,
        sum,
        bound,
        violated: sum < bound,
    })
}

/// Multinomial resample of an outcome table holding its total fixed.
fn resample_table<R: Rng>(rng: &mut R, table: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let total: f64 = table.iter().flatten().sum();
    let n = total.round() as u64;
    let mut out = [[0.0f64; 2]; 2];
    // Sequential binomial thinning via inverse transform on cell boundaries.
    let mut remaining = n;
    let mut mass_left = total;
    for (idx, &w) in table.iter().flatten().enumerate() {
        if idx == 3 {
            out[1][1] = remaining as f64;
            break;
        }
        let p = if mass_left > 0.0 { (w / mass_left).clamp(0.0, 1.0) } else { 0.0 };
        let mut k = 0u64;
        for _ in 0..remaining {
            if rng.gen::<f64>() < p {
                k += 1;
            }
        }
        out[idx / 2][idx % 2] = k as f64;
        remaining -= k;
        mass_left -= w;
    }
    out
}

/// Parametric bootstrap of the entropic certificate: resamples each basis
/// table multinomially, returning the mean and standard deviation of the
/// entropy sum over `n_resamples` replicas.
pub fn bootstrap_entropy_sum(
    tables: &[[[f64; 2]; 2]],
    n_resamples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_resamples < 2 {
        return Err(Error::Config("need at least 2 bootstrap resamples".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut sums = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let replica: Vec<[[f64; 2]; 2]> =
            tables.iter().map(|t| resample_table(&mut rng, t)).collect();
        sums.push(entropic_certificate(&replica)?.sum);
    }
    let mean = sums.iter().sum::<f64>() / sums.len() as f64;
    let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (sums.len() - 1) as f64;
    Ok((mean, var.sqrt()))
}

/// Linear steering test over complementary bases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteeringTest {
    /// Mean absolute correlator, the left-hand side of the inequality.
    pub lhs: f64,
    /// Bound obeyed under local hidden states: 1/√k for k bases.
    pub bound: f64,
    /// True when the bound is exceeded.
    pub violated: bool,
    /// The correlators that entered the test.
    pub correlators: Vec<f64>,
}

/// Evaluates the k-basis steering inequality (k = 2 or 3): the mean of the
/// absolute basis correlators exceeds 1/√k only for steerable states.
pub fn steering_test(correlators: &[f64]) -> Result<SteeringTest> {
    if !(2..=3).contains(&correlators.len()) {
        return Err(Error::Config(format!(
            "steering test needs 2 or 3 correlators, got {}",
            correlators.len()
        )));
    }
    for &e in correlators {
        if !(e.is_finite() && e.abs() <= 1.0 + 1e-9) {
            return Err(Error::Data(format!("correlator {e} outside [−1, 1]")));
        }
    }
    let lhs =
        correlators.iter().map(|e| e.abs()).sum::<f64>() / correlators.len() as f64;
    let bound = (correlators.len() as f64).sqrt().recip();
    Ok(SteeringTest {
        lhs,
        bound,
        violated: lhs > bound,
        correlators: correlators.to_vec(),
    })
}

/// Key-rate model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QkdParams {
    /// Probability that a coincidence ends up in the key-generating basis
    /// pairing (basis-sifting factor q).
    pub sifting_ratio: f64,
    /// Error-correction inefficiency f ≥ 1 multiplying the bit-error
    /// entropy.
    pub error_correction_inefficiency: f64,
}

impl Default for QkdParams {
    fn default() -> Self {
        Self {
            sifting_ratio: 0.5,
            error_correction_inefficiency: 1.1,
        }
    }
}

/// Entanglement-based key-rate estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QkdReport {
    /// Key-basis correlator ⟨σZ⊗σZ⟩ the report was built from.
    pub zz: f64,
    /// Equatorial coherence C the phase-error estimate was built from.
    pub coherence: f64,
    /// Bit error rate (1 − ⟨σZσZ⟩)/2.
    pub qber_z: f64,
    /// Phase error rate (1 − C)/2.
    pub qber_equatorial: f64,
    /// q·(1 − f·H₂(qber_z) − H₂(qber_eq)); may be negative.
    pub raw_secret_fraction: f64,
    /// Secret bits per coincidence, clamped at zero.
    pub secret_fraction: f64,
    /// Parameters used.
    pub params: QkdParams,
}

/// Secret-key fraction of an entanglement-based protocol keyed in the σZ
/// basis with phase errors bounded by the equatorial coherence:
/// K/R = q·(1 − f·H₂(QBER_Z) − H₂(QBER_eq)), floored at zero.
pub fn qkd_report(zz: f64, coherence: f64, params: &QkdParams) -> Result<QkdReport> {
    if !(zz.is_finite() && zz.abs() <= 1.0) {
        return Err(Error::Config(format!("zz correlator {zz} outside [−1, 1]")));
    }
    if !(coherence.is_finite() && (0.0..=1.0).contains(&coherence)) {
        return Err(Error::Config(format!(
            "coherence {coherence} outside [0, 1]"
        )));
    }
    let q = params.sifting_ratio;
    if !(q.is_finite() && 0.0 < q && q <= 1.0) {
        return Err(Error::Config(format!("sifting_ratio {q} outside (0, 1]")));
    }
    let f = params.error_correction_inefficiency;
    if !(f.is_finite() && f >= 1.0) {
        return Err(Error::Config(format!(
            "error_correction_inefficiency {f} must be ≥ 1"
        )));
    }
    let qber_z = 0.5 * (1.0 - zz);
    let qber_eq = 0.5 * (1.0 - coherence);
    let raw = q * (1.0 - f * binary_entropy(qber_z) - binary_entropy(qber_eq));
    Ok(QkdReport {
        zz,
        coherence,
        qber_z,
        qber_equatorial: qber_eq,
        raw_secret_fraction: raw,
        secret_fraction: raw.max(0.0),
        params: *params,
    })
}

/// Kolmogorov–Smirnov result.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KsTest {
    /// Supremum distance between empirical and model CDF.
    pub statistic: f64,
    /// Asymptotic two-sided p-value (Stephens' finite-n scaling).
    pub p_value: f64,
    /// Sample size.
    pub n: usize,
}

/// Kolmogorov survival function Q(λ) = 2·Σ (−1)^{k−1} e^{−2k²λ²}.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sided KS test of `samples` against the Laplace(0, 1/γ) law of the
/// emission time difference.
pub fn ks_test_laplace(samples: &[f64], gamma: f64) -> Result<KsTest> {
    if samples.is_empty() {
        return Err(Error::Data("KS test needs at least one sample".into()));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let n = xs.len() as f64;
    let cdf = |x: f64| {
        if x < 0.0 {
            0.5 * (gamma * x).exp()
        } else {
            1.0 - 0.5 * (-gamma * x).exp()
        }
    };
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    Ok(KsTest {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
        n: xs.len(),
    })
}

/// Time-resolved σZ⊗σZ correlators from routed pair events, for decay fits:
/// events are split into `n_windows` equal time windows over [t_lo, t_hi)
/// and each non-empty window yields one correlator point at its midpoint.
pub fn windowed_z_correlators(
    events: &[ZEvent],
    n_windows: usize,
    t_lo: f64,
    t_hi: f64,
) -> Result<Profile> {
    if n_windows < 2 {
        return Err(Error::Config("need at least 2 time windows".into()));
    }
    if !(t_hi > t_lo) {
        return Err(Error::Config(format!(
            "empty time range [{t_lo}, {t_hi})"
        )));
    }
    let width = (t_hi - t_lo) / n_windows as f64;
    let mut same = vec![0u64; n_windows];
    let mut total = vec![0u64; n_windows];
    for e in events {
        if e.time < t_lo || e.time >= t_hi {
            continue;
        }
        let k = (((e.time - t_lo) / width) as usize).min(n_windows - 1);
        total[k] += 1;
        if e.port_signal == e.port_idler {
            same[k] += 1;
        }
    }
    let mut tau = Vec::new();
    let mut values = Vec::new();
    for k in 0..n_windows {
        if total[k] == 0 {
            continue;
        }
        tau.push(t_lo + (k as f64 + 0.5) * width);
        values.push((2 * same[k] as i64 - total[k] as i64) as f64 / total[k] as f64);
    }
    if tau.len() < 2 {
        return Err(Error::Data("fewer than 2 populated time windows".into()));
    }
    Ok(Profile { tau, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{bell_state, expectation, Observable};
    use crate::sim::{apply_detection, sample_pairs, ChannelModel, NoiseConfig, TimeTag};
    use approx::assert_abs_diff_eq;

    /// Source running at 10⁵ pairs/s for 1 s: tag spacing ≫ coincidence
    /// window, so matching is unambiguous.
    fn sparse_cfg() -> SourceConfig {
        let mut c = SourceConfig::default_source();
        c.window = 1.0;
        c
    }

    const TABLE_COUNTS: [[f64; 2]; 2] = [[264_897.0, 11_011.0], [25_411.0, 270_383.0]];

    #[test]
    fn coincidence_matching_finds_all_pairs_in_window() {
        let ps = |ns: f64| (ns * 1000.0) as u64;
        let stream = TimeTagStream::new(vec![
            TimeTag { time_ps: ps(100.0), channel: CHANNEL_SIGNAL },
            TimeTag { time_ps: ps(100.5), channel: CHANNEL_IDLER },
            TimeTag { time_ps: ps(103.0), channel: CHANNEL_IDLER },
            TimeTag { time_ps: ps(112.0), channel: CHANNEL_IDLER },
            TimeTag { time_ps: ps(114.0), channel: CHANNEL_SIGNAL },
        ]);
        let coins = coincidences(&stream, 3e-9);
        assert_eq!(coins.len(), 3);
        assert_abs_diff_eq!(coins[0].1 - coins[0].0, 0.5e-9, epsilon = 1e-15);
        assert_abs_diff_eq!(coins[1].1 - coins[1].0, 3.0e-9, epsilon = 1e-15);
        assert_abs_diff_eq!(coins[2].1 - coins[2].0, -2.0e-9, epsilon = 1e-15);
    }

    #[test]
    fn folding_preserves_time_difference_exactly_and_phase_modulo_period() {
        let cfg = sparse_cfg();
        let opts = FoldOptions::default();
        let frame = 2.0 * cfg.fringe_period();
        // A coincidence deep into the acquisition.
        let mid = 123_456.0 * frame + 0.3 * frame;
        let tau = 0.4e-9;
        let hist = fold_coincidences(&[(mid + tau / 2.0, mid - tau / 2.0)], &cfg, &opts).unwrap();
        assert_eq!(hist.total(), 1);
        let (r, c) = (0..hist.dims().0)
            .flat_map(|r| (0..hist.dims().1).map(move |c| (r, c)))
            .find(|&(r, c)| hist.count(r, c) == 1)
            .unwrap();
        let (ts, ti) = hist.bin_center(r, c);
        assert_abs_diff_eq!(ts - ti, tau, epsilon = opts.bin_width);
        let phase = (cfg.delta_omega * (ts + ti)).rem_euclid(TWO_PI);
        let want = (cfg.delta_omega * 2.0 * mid).rem_euclid(TWO_PI);
        let dphi = (phase - want + std::f64::consts::PI).rem_euclid(TWO_PI) - std::f64::consts::PI;
        assert!(dphi.abs() < 2.0 * cfg.delta_omega * opts.bin_width);
    }

    #[test]
    fn noiseless_pipeline_reaches_the_quantum_chsh_bound() {
        let mut cfg = sparse_cfg();
        cfg.theta = 0.7;
        let pairs = sample_pairs(&cfg, 100_000, 101).unwrap();
        let stream = apply_detection(
            &pairs,
            &cfg,
            &NoiseConfig::noiseless(),
            &ChannelModel::default_channels(),
            101,
        )
        .unwrap();
        let coins = coincidences(&stream, 5e-9);
        let hist = fold_coincidences(&coins, &cfg, &FoldOptions::default()).unwrap();
        let scan = chsh_scan(&hist, &cfg, &ChshScanOptions::default()).unwrap();
        assert_abs_diff_eq!(scan.max_s.value, CHSH_QUANTUM_BOUND, epsilon = 0.03);
        // Fitted fringe phase tracks the source phase.
        let dtheta = (scan.theta - 0.7 + std::f64::consts::PI).rem_euclid(TWO_PI)
            - std::f64::consts::PI;
        assert!(dtheta.abs() < 0.02, "theta off by {dtheta}");
        // The scan curve peaks at the fitted maximum.
        let curve_max = scan.s_curve.iter().cloned().fold(f64::MIN, f64::max);
        assert!(curve_max <= scan.max_s.value + 1e-9);
        assert!(curve_max > 0.98 * scan.max_s.value);
    }

    #[test]
    fn accidental_floor_dilutes_the_fringe_and_subtraction_restores_it() {
        let mut cfg = sparse_cfg();
        let mut noise = NoiseConfig::default_noise();
        noise.accidental_fraction = 0.25;
        cfg.theta = 0.0;
        let pairs = sample_pairs(&cfg, 150_000, 7).unwrap();
        let stream = apply_detection(
            &pairs,
            &cfg,
            &noise,
            &ChannelModel::default_channels(),
            7,
        )
        .unwrap();
        let coins = coincidences(&stream, 5e-9);
        let hist = fold_coincidences(&coins, &cfg, &FoldOptions::default()).unwrap();
        let raw = chsh_scan(&hist, &cfg, &ChshScanOptions::default()).unwrap();
        assert!(raw.visibility.value < 0.97, "raw V = {}", raw.visibility.value);
        let bg = subtract_background(&hist, &cfg, None).unwrap();
        assert!(bg.floor_per_bin > 0.0);
        let clean = chsh_scan(&bg.subtracted, &cfg, &ChshScanOptions::default()).unwrap();
        // With the floor removed, only the 60 ps jitter attenuation
        // (e^{−(Δω·σ₊)²/2} ≈ 0.983) should remain.
        assert!(
            clean.visibility.value > raw.visibility.value + 0.02,
            "subtraction did not raise V: {} vs {}",
            clean.visibility.value,
            raw.visibility.value
        );
        assert_abs_diff_eq!(clean.visibility.value, 0.983, epsilon = 0.012);
    }

    #[test]
    fn fringe_correlators_match_the_quantum_oracle() {
        let mut cfg = sparse_cfg();
        cfg.theta = 0.6;
        let pairs = sample_pairs(&cfg, 200_000, 11).unwrap();
        let stream = apply_detection(
            &pairs,
            &cfg,
            &NoiseConfig::noiseless(),
            &ChannelModel::default_channels(),
            11,
        )
        .unwrap();
        let coins = coincidences(&stream, 5e-9);
        let hist = fold_coincidences(&coins, &cfg, &FoldOptions::default()).unwrap();
        let scan = chsh_scan(&hist, &cfg, &ChshScanOptions::default()).unwrap();
        let eq = EquatorialCorrelators::from_fringe(scan.visibility.value, scan.theta);
        let state = bell_state(0.6);
        let tol = 4.0 * scan.visibility.stderr + 0.01;
        for (got, axis_s, axis_i) in [
            (eq.xx, 0.0, 0.0),
            (eq.xy, 0.0, std::f64::consts::FRAC_PI_2),
            (eq.yx, std::f64::consts::FRAC_PI_2, 0.0),
            (eq.yy, std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
        ] {
            let obs = Observable::product(
                "eq",
                &crate::quantum::pauli_equatorial(axis_s),
                &crate::quantum::pauli_equatorial(axis_i),
            )
            .unwrap();
            let want = expectation(&state, &obs);
            assert_abs_diff_eq!(got, want, epsilon = tol);
        }
        assert_abs_diff_eq!(eq.coherence(), scan.visibility.value, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_table_round_trips_the_correlator() {
        let table = symmetric_outcome_table(0.873, 1000.0).unwrap();
        let back = correlator_from_counts(&table).unwrap();
        assert_abs_diff_eq!(back.value, 0.873, epsilon = 1e-12);
        assert_abs_diff_eq!(
            conditional_entropy(&table).unwrap(),
            binary_entropy(0.5 * (1.0 - 0.873)),
            epsilon = 1e-12
        );
        assert!(symmetric_outcome_table(1.2, 10.0).is_err());
        assert!(symmetric_outcome_table(0.5, 0.0).is_err());
    }

    #[test]
    fn printed_count_arithmetic_is_reproduced() {
        let e = correlator_from_counts(&TABLE_COUNTS).unwrap();
        assert_abs_diff_eq!(e.value, 0.872_583_97, epsilon = 1e-8);
        assert!(e.stderr > 5e-4 && e.stderr < 8e-4);
        let h = conditional_entropy(&TABLE_COUNTS).unwrap();
        assert_abs_diff_eq!(h, 0.335_410_36, epsilon = 1e-8);
    }

    #[test]
    fn conditional_entropy_limits() {
        assert_abs_diff_eq!(
            conditional_entropy(&[[500.0, 0.0], [0.0, 500.0]]).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            conditional_entropy(&[[250.0, 250.0], [250.0, 250.0]]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!(conditional_entropy(&[[0.0, 0.0], [0.0, 0.0]]).is_err());
        assert!(conditional_entropy(&[[-1.0, 1.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn binary_entropy_shape() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert_abs_diff_eq!(binary_entropy(0.5), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(binary_entropy(0.11), binary_entropy(0.89), epsilon = 1e-12);
        assert!(binary_entropy(-0.1).is_nan());
    }

    #[test]
    fn entropic_certificate_limits_and_bounds() {
        let perfect = [[500.0, 0.0], [0.0, 500.0]];
        let cert = entropic_certificate(&[perfect, perfect, perfect]).unwrap();
        assert_eq!(cert.bound, 2.0);
        assert_abs_diff_eq!(cert.sum, 0.0, epsilon = 1e-12);
        assert!(cert.violated);
        let uniform = [[250.0, 250.0], [250.0, 250.0]];
        let cert = entropic_certificate(&[uniform, uniform, uniform]).unwrap();
        assert_abs_diff_eq!(cert.sum, 3.0, epsilon = 1e-12);
        assert!(!cert.violated);
        let two = entropic_certificate(&[perfect, uniform]).unwrap();
        assert_eq!(two.bound, 1.0);
        assert!(!two.violated); // sum = 1.0 is not strictly below the bound
        assert!(entropic_certificate(&[perfect]).is_err());
    }

    #[test]
    fn bootstrap_tracks_the_point_estimate() {
        let tables = [TABLE_COUNTS, TABLE_COUNTS, TABLE_COUNTS];
        let point = entropic_certificate(&tables).unwrap().sum;
        let (mean, sigma) = bootstrap_entropy_sum(&tables, 200, 99).unwrap();
        assert!(sigma > 0.0 && sigma < 0.02);
        assert_abs_diff_eq!(mean, point, epsilon = 4.0 * sigma);
    }

    #[test]
    fn steering_reproduces_the_reference_values() {
        let two = steering_test(&[0.912, 0.873]).unwrap();
        assert_abs_diff_eq!(two.lhs, 0.8925, epsilon = 1e-12);
        assert_abs_diff_eq!(two.bound, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert!(two.violated);
        let three = steering_test(&[0.912, 0.839, 0.873]).unwrap();
        assert_abs_diff_eq!(three.lhs, 0.874_666_67, epsilon = 1e-8);
        assert_abs_diff_eq!(three.bound, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert!(three.violated);
        let classical = steering_test(&[0.5, 0.5]).unwrap();
        assert!(!classical.violated);
        assert!(steering_test(&[0.9]).is_err());
        assert!(steering_test(&[0.9, 1.5]).is_err());
    }

    #[test]
    fn key_rate_corner_cases() {
        let params = QkdParams { sifting_ratio: 0.5, error_correction_inefficiency: 1.0 };
        // Perfect correlations: the full sifted fraction is secret.
        let ideal = qkd_report(1.0, 1.0, &params).unwrap();
        assert_abs_diff_eq!(ideal.secret_fraction, 0.5, epsilon = 1e-15);
        // A maximal error rate in either term kills the key.
        let dead_bit = qkd_report(0.0, 1.0, &params).unwrap();
        assert!(dead_bit.raw_secret_fraction <= 0.0);
        assert_eq!(dead_bit.secret_fraction, 0.0);
        let dead_phase = qkd_report(1.0, 0.0, &params).unwrap();
        assert!(dead_phase.raw_secret_fraction <= 0.0);
        // QBER arithmetic.
        let r = qkd_report(0.873, 0.7806, &QkdParams::default()).unwrap();
        assert_abs_diff_eq!(r.qber_z, 0.0635, epsilon = 1e-12);
        assert_abs_diff_eq!(r.qber_equatorial, 0.1097, epsilon = 1e-12);
        assert!(qkd_report(1.2, 0.5, &QkdParams::default()).is_err());
    }

    #[test]
    fn documented_assumption_set_reproduces_the_reference_rate() {
        let zz = correlator_from_counts(&TABLE_COUNTS).unwrap().value;
        let r = qkd_report(zz, 0.7806, &QkdParams::default()).unwrap();
        assert_abs_diff_eq!(r.secret_fraction, 0.062_395, epsilon = 1e-5);
        assert!((r.secret_fraction - 0.058).abs() < 0.01);
    }

    #[test]
    fn ks_accepts_the_true_law_and_rejects_a_wrong_scale() {
        let cfg = sparse_cfg();
        let pairs = sample_pairs(&cfg, 20_000, 55).unwrap();
        let diffs: Vec<f64> = pairs.iter().map(|&(a, b)| a - b).collect();
        let good = ks_test_laplace(&diffs, cfg.gamma).unwrap();
        assert!(good.p_value > 0.01, "p = {}", good.p_value);
        let bad = ks_test_laplace(&diffs, 1.5 * cfg.gamma).unwrap();
        assert!(bad.p_value < 1e-6, "p = {}", bad.p_value);
    }

    #[test]
    fn kolmogorov_survival_reference_point() {
        // Classical 5 % critical value of the Kolmogorov distribution.
        assert_abs_diff_eq!(kolmogorov_survival(1.358), 0.05, epsilon = 2e-3);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        assert!(kolmogorov_survival(3.0) < 1e-6);
    }

    #[test]
    fn windowed_correlators_recover_a_constant() {
        let events: Vec<ZEvent> = (0..4000)
            .map(|k| ZEvent {
                // Offset keeps events away from exact window boundaries.
                time: (k as f64 + 0.5) * 1e-6,
                port_signal: u8::from(k % 10 == 0),
                port_idler: 0,
            })
            .collect();
        let prof = windowed_z_correlators(&events, 8, 0.0, 4e-3).unwrap();
        assert_eq!(prof.tau.len(), 8);
        for v in &prof.values {
            assert_abs_diff_eq!(*v, 0.8, epsilon = 1e-9);
        }
    }
}
