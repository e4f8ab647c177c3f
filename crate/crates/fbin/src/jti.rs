//! Joint temporal intensity (JTI) of the photon pair.
//!
//! With both detectors time-resolving, the coincidence density over the two
//! detection times (ts, ti) carries all the information the certification
//! pipeline uses:
//!
//! ```text
//! J(ts, ti) ∝ e^{−γ|ts − ti|} · (1 + cos(Δω·(ts + ti) + θ))
//! ```
//!
//! * along the **antidiagonal** τ₋ = ts − ti the density rings down
//!   exponentially with the bin linewidth γ (coherence time 1/γ);
//! * along the **diagonal** τ₊ = ts + ti it beats at the bin spacing Δω —
//!   one fringe period is 2π/Δω in τ₊, i.e. a beat period T_b = π/Δω in
//!   common detection time — with a phase set by the pair phase θ.
//!
//! This module owns the analytic density, the 2-D coincidence histogram and
//! the two 1-D profiles with their least-squares fits (fringe visibility and
//! ringdown time). Everything here is deterministic; Monte-Carlo sampling of
//! the same density lives in [`crate::sim`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical source parameters shared by the analytic model and the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Frequency-bin spacing Δω in rad/s.
    pub delta_omega: f64,
    /// Bin linewidth γ in 1/s (ringdown time 1/γ).
    pub gamma: f64,
    /// Pair phase θ in rad.
    pub theta: f64,
    /// Mean pair emission rate in pairs/s (sets the wall-clock spread).
    pub pair_rate: f64,
    /// Acquisition window in s.
    pub window: f64,
}

impl SourceConfig {
    /// The reference instrument default: Δω/2π = 820 MHz, 1/γ = 581.4 ps, θ = 0,
    /// 10⁵ pairs/s over 1 ms.
    pub fn default_source() -> Self {
        Self {
            delta_omega: 2.0 * std::f64::consts::PI * 820.0e6,
            gamma: 1.0 / 581.4e-12,
            theta: 0.0,
            pair_rate: 1.0e5,
            window: 1.0e-3,
        }
    }

    /// Checks positivity and finiteness of every parameter (θ may be any
    /// finite real).
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("delta_omega", self.delta_omega),
            ("gamma", self.gamma),
            ("pair_rate", self.pair_rate),
            ("window", self.window),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        if !self.theta.is_finite() {
            return Err(Error::Config(format!(
                "theta must be finite, got {}",
                self.theta
            )));
        }
        Ok(())
    }

    /// Beat period T_b = π/Δω of the joint detection time along the diagonal.
    pub fn beat_period(&self) -> f64 {
        std::f64::consts::PI / self.delta_omega
    }

    /// Fringe period 2π/Δω of the diagonal profile in τ₊ = ts + ti.
    pub fn fringe_period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.delta_omega
    }

    /// True when at least one full fringe period fits inside the ±2/γ core
    /// of the ringdown, i.e. Δω ≥ π·γ/2. Below this the diagonal beat dies
    /// out before completing a cycle and visibility fits become unreliable.
    /// Constructors accept such configs; callers are expected to warn.
    pub fn is_well_resolved(&self) -> bool {
        self.delta_omega >= 0.5 * std::f64::consts::PI * self.gamma
    }
}

/// Bare model intensity e^{−γ|ts−ti|}·(1 + cos(Δω(ts+ti) + θ)), scale-free
/// (maximum 2 on the central fringe). Symmetric under ts ↔ ti.
pub fn jti_value(cfg: &SourceConfig, ts: f64, ti: f64) -> f64 {
    let ringdown = (-cfg.gamma * (ts - ti).abs()).exp();
    let fringe = 1.0 + (cfg.delta_omega * (ts + ti) + cfg.theta).cos();
    ringdown * fringe
}

/// Read-only view shared by integer- and real-valued JTI grids, so the
/// profile extractors work on raw histograms and background-subtracted ones
/// alike.
pub trait JtiGrid {
    /// Bin width in seconds (square bins).
    fn bin_width(&self) -> f64;
    /// Low edge of the signal-time axis.
    fn t0_s(&self) -> f64;
    /// Low edge of the idler-time axis.
    fn t0_i(&self) -> f64;
    /// (signal bins, idler bins).
    fn dims(&self) -> (usize, usize);
    /// Value of bin (signal row, idler column).
    fn value(&self, row: usize, col: usize) -> f64;
}

/// 2-D coincidence histogram over (ts, ti), row-major with the signal time
/// as the row index. Counts are u32; merging checks for overflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JtiHistogram {
    bin_width: f64,
    t0_s: f64,
    t0_i: f64,
    n_s: usize,
    n_i: usize,
    counts: Vec<u32>,
}

impl JtiHistogram {
    /// An empty histogram with the given geometry.
    pub fn new(bin_width: f64, t0_s: f64, t0_i: f64, n_s: usize, n_i: usize) -> Result<Self> {
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(Error::Config(format!(
                "bin_width must be finite and positive, got {bin_width}"
            )));
        }
        if n_s == 0 || n_i == 0 {
            return Err(Error::Config("histogram must have at least one bin per axis".into()));
        }
        if !t0_s.is_finite() || !t0_i.is_finite() {
            return Err(Error::Config("histogram origins must be finite".into()));
        }
        Ok(Self {
            bin_width,
            t0_s,
            t0_i,
            n_s,
            n_i,
            counts: vec![0; n_s * n_i],
        })
    }

    /// Reassembles a histogram from parts (used by the binary reader).
    pub fn from_counts(
        bin_width: f64,
        t0_s: f64,
        t0_i: f64,
        n_s: usize,
        n_i: usize,
        counts: Vec<u32>,
    ) -> Result<Self> {
        if counts.len() != n_s * n_i {
            return Err(Error::Format(format!(
                "count payload has {} entries, geometry wants {}",
                counts.len(),
                n_s * n_i
            )));
        }
        let mut h = Self::new(bin_width, t0_s, t0_i, n_s, n_i)?;
        h.counts = counts;
        Ok(h)
    }

    /// Adds one coincidence; pairs outside the grid are ignored and reported
    /// as `false`.
    pub fn accumulate(&mut self, ts: f64, ti: f64) -> bool {
        let row = (ts - self.t0_s) / self.bin_width;
        let col = (ti - self.t0_i) / self.bin_width;
        if row < 0.0 || col < 0.0 {
            return false;
        }
        let (row, col) = (row as usize, col as usize);
        if row >= self.n_s || col >= self.n_i {
            return false;
        }
        self.counts[row * self.n_i + col] += 1;
        true
    }

    /// Fills from a pair list, returning how many pairs landed in-grid.
    pub fn fill(&mut self, pairs: &[(f64, f64)]) -> usize {
        pairs
            .iter()
            .filter(|&&(ts, ti)| self.accumulate(ts, ti))
            .count()
    }

    /// Count of bin (signal row, idler column).
    pub fn count(&self, row: usize, col: usize) -> u32 {
        self.counts[row * self.n_i + col]
    }

    /// Total number of counts.
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Raw row-major payload.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Bin-center coordinates of (row, col).
    pub fn bin_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.t0_s + (row as f64 + 0.5) * self.bin_width,
            self.t0_i + (col as f64 + 0.5) * self.bin_width,
        )
    }

    /// Merges two histograms of identical geometry. Merging is commutative
    /// and associative; counts are checked for u32 overflow.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.bin_width != other.bin_width
            || self.t0_s != other.t0_s
            || self.t0_i != other.t0_i
            || self.n_s != other.n_s
            || self.n_i != other.n_i
        {
            return Err(Error::Config("cannot merge histograms with different geometry".into()));
        }
        let mut merged = self.clone();
        for (dst, &src) in merged.counts.iter_mut().zip(&other.counts) {
            *dst = dst.checked_add(src).ok_or_else(|| {
                Error::Data("histogram merge overflowed a u32 bin".into())
            })?;
        }
        Ok(merged)
    }
}

impl JtiGrid for JtiHistogram {
    fn bin_width(&self) -> f64 {
        self.bin_width
    }
    fn t0_s(&self) -> f64 {
        self.t0_s
    }
    fn t0_i(&self) -> f64 {
        self.t0_i
    }
    fn dims(&self) -> (usize, usize) {
        (self.n_s, self.n_i)
    }
    fn value(&self, row: usize, col: usize) -> f64 {
        f64::from(self.counts[row * self.n_i + col])
    }
}

/// Real-valued JTI grid, produced by background subtraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedJti {
    bin_width: f64,
    t0_s: f64,
    t0_i: f64,
    n_s: usize,
    n_i: usize,
    values: Vec<f64>,
}

impl WeightedJti {
    /// Builds from geometry plus a row-major value payload.
    pub fn from_values(
        bin_width: f64,
        t0_s: f64,
        t0_i: f64,
        n_s: usize,
        n_i: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != n_s * n_i {
            return Err(Error::Format(format!(
                "value payload has {} entries, geometry wants {}",
                values.len(),
                n_s * n_i
            )));
        }
        Ok(Self {
            bin_width,
            t0_s,
            t0_i,
            n_s,
            n_i,
            values,
        })
    }

    /// Copies geometry and counts from an integer histogram.
    pub fn from_histogram(h: &JtiHistogram) -> Self {
        Self {
            bin_width: h.bin_width,
            t0_s: h.t0_s,
            t0_i: h.t0_i,
            n_s: h.n_s,
            n_i: h.n_i,
            values: h.counts.iter().map(|&c| f64::from(c)).collect(),
        }
    }

    /// Mutable access for subtraction.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Raw row-major payload.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl JtiGrid for WeightedJti {
    fn bin_width(&self) -> f64 {
        self.bin_width
    }
    fn t0_s(&self) -> f64 {
        self.t0_s
    }
    fn t0_i(&self) -> f64 {
        self.t0_i
    }
    fn dims(&self) -> (usize, usize) {
        (self.n_s, self.n_i)
    }
    fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_i + col]
    }
}

/// A 1-D profile extracted from a JTI grid: bin-center coordinates (τ₊ for
/// the diagonal profile, τ₋ for the antidiagonal one) and the accumulated
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    /// Profile coordinate at each entry (seconds).
    pub tau: Vec<f64>,
    /// Accumulated grid values.
    pub values: Vec<f64>,
}

/// Sums grid values with |ts − ti| ≤ band into bins of constant ts + ti.
///
/// Only τ₊ rows whose full |τ₋| ≤ band stripe lies inside the grid are
/// reported: partially covered rows at the grid corners would otherwise
/// depress the profile ends and bias the fringe fit. The grid therefore
/// needs to be padded by at least `band` beyond the event support (the
/// histogram builders in this crate guarantee that).
pub fn diagonal_profile(grid: &impl JtiGrid, band: f64) -> Result<Profile> {
    if !(band.is_finite() && band > 0.0) {
        return Err(Error::Config(format!("band must be positive, got {band}")));
    }
    let (n_s, n_i) = grid.dims();
    let w = grid.bin_width();
    let off = grid.t0_s() - grid.t0_i();
    // Anti-diagonal index d = row − col; |τ₋ center| ≤ band ⟺ |off + d·w| ≤ band.
    let d_min = (((-band - off) / w).ceil()) as isize;
    let d_max = ((band - off) / w).floor() as isize;
    if d_min > d_max {
        return Err(Error::Config(format!(
            "band {band:.3e} s is narrower than one bin ({:.3e} s)",
            w
        )));
    }
    let mut tau = Vec::new();
    let mut values = Vec::new();
    for s in 0..(n_s + n_i - 1) {
        let s = s as isize;
        // row − col = d and row + col = s require matching parity.
        let mut complete = true;
        let mut sum = 0.0;
        let mut any = false;
        for d in d_min..=d_max {
            if (s + d) % 2 != 0 {
                continue;
            }
            let row = (s + d) / 2;
            let col = (s - d) / 2;
            if row < 0 || col < 0 || row >= n_s as isize || col >= n_i as isize {
                complete = false;
                break;
            }
            sum += grid.value(row as usize, col as usize);
            any = true;
        }
        if complete && any {
            tau.push(grid.t0_s() + grid.t0_i() + (s as f64 + 1.0) * w);
            values.push(sum);
        }
    }
    if tau.is_empty() {
        return Err(Error::Data("no fully covered diagonal rows inside the band".into()));
    }
    Ok(Profile { tau, values })
}

/// Sums grid values into bins of constant ts − ti (all τ₊ included).
pub fn antidiagonal_profile(grid: &impl JtiGrid) -> Profile {
    let (n_s, n_i) = grid.dims();
    let w = grid.bin_width();
    let mut tau = Vec::with_capacity(n_s + n_i - 1);
    let mut values = vec![0.0; n_s + n_i - 1];
    for d in -(n_i as isize - 1)..=(n_s as isize - 1) {
        tau.push(grid.t0_s() - grid.t0_i() + d as f64 * w);
    }
    for row in 0..n_s {
        for col in 0..n_i {
            let idx = (row as isize - col as isize + n_i as isize - 1) as usize;
            values[idx] += grid.value(row, col);
        }
    }
    Profile { tau, values }
}

/// A fitted scalar with its standard error and the fit's residual scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    /// Point estimate.
    pub value: f64,
    /// One-sigma standard error from the least-squares covariance.
    pub stderr: f64,
    /// Root-mean-square residual of the fit.
    pub residual_rms: f64,
}

/// Result of the diagonal fringe fit y = a + b·cos(Δω·τ₊ + θ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityFit {
    /// Visibility b/a, clamped into [0, 1], with stderr and residuals.
    pub visibility: ProfileFit,
    /// Fitted fringe phase θ ∈ (−π, π].
    pub theta: f64,
    /// Fitted offset a (mean level).
    pub offset: f64,
    /// Fitted fringe amplitude b ≥ 0.
    pub amplitude: f64,
}

/// Fits the diagonal profile with a + b·cos(Δω·τ₊ + θ) by linear least
/// squares in (a, p, q) = (a, b·cosθ, −b·sinθ) and reports V = b/a.
///
/// Requires the profile to span at least two fringe periods. Flat data is
/// not an error: it fits as b ≈ 0, i.e. visibility 0 with a large standard
/// error.
pub fn fit_visibility(profile: &Profile, delta_omega: f64) -> Result<VisibilityFit> {
    if !(delta_omega.is_finite() && delta_omega > 0.0) {
        return Err(Error::Config(format!(
            "delta_omega must be positive, got {delta_omega}"
        )));
    }
    let n = profile.tau.len();
    if n != profile.values.len() {
        return Err(Error::Data("profile coordinate/value length mismatch".into()));
    }
    if n < 4 {
        return Err(Error::Data(format!("need at least 4 profile points, got {n}")));
    }
    let span = profile.tau[n - 1] - profile.tau[0];
    let period = 2.0 * std::f64::consts::PI / delta_omega;
    if span < 2.0 * period {
        return Err(Error::Data(format!(
            "profile spans {span:.3e} s, need at least two fringe periods ({:.3e} s)",
            2.0 * period
        )));
    }

    // Normal equations for the design (1, cos Δωτ, sin Δωτ).
    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    for (&t, &y) in profile.tau.iter().zip(&profile.values) {
        let row = [1.0, (delta_omega * t).cos(), (delta_omega * t).sin()];
        for a in 0..3 {
            for b in 0..3 {
                xtx[a][b] += row[a] * row[b];
            }
            xty[a] += row[a] * y;
        }
    }
    let xtx = nalgebra::Matrix3::from_fn(|r, c| xtx[r][c]);
    let xty = nalgebra::Vector3::from_column_slice(&xty);
    let inv = xtx.try_inverse().ok_or_else(|| {
        Error::Data("degenerate fringe design matrix (profile grid too coarse)".into())
    })?;
    let beta = inv * xty;
    let (a, p, q) = (beta[0], beta[1], beta[2]);
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Data(format!(
            "fitted profile mean is {a:.3e}; cannot form a visibility"
        )));
    }

    let mut ssr = 0.0;
    for (&t, &y) in profile.tau.iter().zip(&profile.values) {
        let model = a + p * (delta_omega * t).cos() + q * (delta_omega * t).sin();
        ssr += (y - model) * (y - model);
    }
    let dof = (n - 3).max(1) as f64;
    let sigma_sq = ssr / dof;
    let cov = inv * sigma_sq;

    let b = (p * p + q * q).sqrt();
    let visibility = (b / a).clamp(0.0, 1.0);
    // θ from y = a + b cos(Δωτ + θ) = a + (b cosθ)·cos − (b sinθ)·sin.
    let theta = (-q).atan2(p);

    // Delta method for V = √(p²+q²)/a; isotropic fallback at b → 0 where
    // the gradient of b is undefined.
    let var_v = if b > 1e-12 * a {
        let g = [-b / (a * a), p / (a * b), q / (a * b)];
        let mut var = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                var += g[r] * cov[(r, c)] * g[c];
            }
        }
        var
    } else {
        (cov[(1, 1)].max(cov[(2, 2)])) / (a * a)
    };

    Ok(VisibilityFit {
        visibility: ProfileFit {
            value: visibility,
            stderr: var_v.max(0.0).sqrt(),
            residual_rms: sigma_sq.sqrt(),
        },
        theta,
        offset: a,
        amplitude: b,
    })
}

/// Options for the ringdown fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingdownOptions {
    /// Bins with |τ₋| below this are excluded: detector jitter rounds the
    /// Laplace cusp and would bias the slope. A typical choice is two to
    /// three jitter sigmas.
    pub exclude_center: f64,
    /// Optional upper cut |τ₋| ≤ max_abs_tau; use it when a flat accidental
    /// floor dominates the far tails.
    pub max_abs_tau: Option<f64>,
}

impl Default for RingdownOptions {
    fn default() -> Self {
        Self {
            exclude_center: 0.0,
            max_abs_tau: None,
        }
    }
}

/// Fits the antidiagonal profile with A·e^{−γ|τ₋|} by count-weighted linear
/// least squares on ln(values) and returns the coherence time 1/γ.
///
/// Weighting each log-residual by its count is the variance-correct choice
/// for Poisson data. Bins with non-positive values are skipped. A flat
/// floor under the exponential drags the fitted 1/γ long; the symptom is a
/// rising `residual_rms`, the cure is `max_abs_tau`.
pub fn fit_ringdown(profile: &Profile, options: &RingdownOptions) -> Result<ProfileFit> {
    if profile.tau.len() != profile.values.len() {
        return Err(Error::Data("profile coordinate/value length mismatch".into()));
    }
    let max_abs = options.max_abs_tau.unwrap_or(f64::INFINITY);
    if options.exclude_center < 0.0 || max_abs <= options.exclude_center {
        return Err(Error::Config(
            "ringdown window is empty (exclude_center must be ≥ 0 and < max_abs_tau)".into(),
        ));
    }

    // Weighted normal equations for ln y = ln A − γ·|τ|.
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut n_used = 0usize;
    for (&t, &y) in profile.tau.iter().zip(&profile.values) {
        let x = t.abs();
        if x < options.exclude_center || x > max_abs || y <= 0.0 {
            continue;
        }
        let w = y;
        let ln_y = y.ln();
        sw += w;
        sx += w * x;
        sy += w * ln_y;
        sxx += w * x * x;
        sxy += w * x * ln_y;
        n_used += 1;
    }
    if n_used < 3 {
        return Err(Error::Data(format!(
            "ringdown fit needs at least 3 usable bins, found {n_used}"
        )));
    }
    let det = sw * sxx - sx * sx;
    if det.abs() < f64::EPSILON * sw * sxx {
        return Err(Error::Data("degenerate ringdown design (all bins at one |τ₋|)".into()));
    }
    let slope = (sw * sxy - sx * sy) / det; // = −γ
    let intercept = (sxx * sy - sx * sxy) / det;
    let gamma = -slope;
    // Demand a resolvable decay across the fitted range, not just a positive
    // sign: exactly flat data produces a slope at rounding level.
    let x_span = profile
        .tau
        .iter()
        .zip(&profile.values)
        .filter(|&(&t, &y)| {
            let x = t.abs();
            x >= options.exclude_center && x <= max_abs && y > 0.0
        })
        .map(|(&t, _)| t.abs())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if !(gamma.is_finite() && gamma * (x_span.1 - x_span.0) > 1e-6) {
        return Err(Error::Data(format!(
            "profile shows no resolvable decay (fitted γ = {gamma:.3e})"
        )));
    }

    let (mut wssr, mut ssr) = (0.0, 0.0);
    for (&t, &y) in profile.tau.iter().zip(&profile.values) {
        let x = t.abs();
        if x < options.exclude_center || x > max_abs || y <= 0.0 {
            continue;
        }
        let r = y.ln() - (intercept + slope * x);
        wssr += y * r * r;
        ssr += r * r;
    }
    let dof = (n_used - 2).max(1) as f64;
    // Var(slope) for weighted LSQ with per-point variance 1/w, scaled by the
    // observed reduced chi-square so over-dispersed data widens the error.
    let chi_red = wssr / dof;
    let var_gamma = (sw / det) * chi_red;
    let stderr_inv_gamma = var_gamma.max(0.0).sqrt() / (gamma * gamma);

    Ok(ProfileFit {
        value: 1.0 / gamma,
        stderr: stderr_inv_gamma,
        residual_rms: (ssr / n_used as f64).sqrt(),
    })
}
