//! Field-widened Mach–Zehnder interferometer design.
//!
//! A frequency-bin demultiplexer is an unbalanced interferometer whose
//! optical path difference ΔL converts the bin spacing Δω into a π phase
//! difference between the bins, so that one bin exits bright and the other
//! dark at each output port. That requires
//!
//! ```text
//! ΔL = π·c / Δω,
//! ```
//!
//! about 18 cm of path imbalance for sub-GHz bin spacings — enormous by
//! interferometer standards. At that imbalance the phase acquired by an
//! off-axis input ray differs strongly from the on-axis one, so an ordinary
//! two-mirror design only works for a single, perfectly collimated spatial
//! mode.
//!
//! *Field widening* removes the first-order angular dependence by refractive
//! index engineering. For arms built from segments of length `L_j` and index
//! `n_j`, the path difference seen by a ray entering at angle α (from a
//! medium of index n₀) is, to second order in α,
//!
//! ```text
//! ΔL(α) = Σ_j (n_jl·L_jl − n_js·L_js)
//!         − (n₀²·sin²α / 2) · Σ_j (L_jl/n_jl − L_js/n_js),
//! ```
//!
//! where `l` and `s` label the long and short arm. Choosing the segment
//! lengths so that the second sum — the [widening
//! coefficient](FwiDesign::widening_coefficient) — vanishes while the first
//! sum holds the demultiplexing value gives an imbalanced interferometer that
//! accepts a spread of input angles: a glass rod in the long arm supplies
//! optical path length `n·L` while subtracting only `L/n` from the
//! coefficient, so air in the short arm can cancel the remainder.
//!
//! The module covers the three design tasks:
//!
//! * [`FwiDesign::opd`] — evaluate ΔL(α) for an arbitrary segment layout
//!   (including retro-reflected, double-pass geometries);
//! * [`solve_widened`] — solve the 2×2 linear system for the glass and
//!   short-arm lengths that meet a target ΔL with a widening coefficient of
//!   exactly zero;
//! * [`demux_visibility`] — estimate the port-extinction visibility of a
//!   design for frequency bins of Lorentzian width γ and a Gaussian spread
//!   of input angles.
//!
//! All lengths are in metres and angles in radians. The quadratic formula is
//! a small-angle expansion: beyond |α| ≈ 0.1 rad its neglected α⁴ terms grow
//! past typical fabrication tolerances, so treat results there as
//! qualitative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light used for the design arithmetic, in m/s.
///
/// Design targets in this module are quoted to three or four significant
/// figures, far coarser than the 0.07 % difference between the engineering
/// value 3×10⁸ m/s and the defined value, so the round constant is used
/// throughout.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Vacuum wavelength of the photons the demultiplexer is designed for, in
/// metres (telecom C-band).
///
/// Only the *carrier* phase `ω₀·ΔL/c` of the visibility model depends on it,
/// and then only through how fast an angular path change dephases the
/// output; every design length is wavelength-independent.
pub const CARRIER_WAVELENGTH: f64 = 1550e-9;

/// One homogeneous stretch of an interferometer arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSegment {
    /// Single-pass physical length in metres.
    pub length: f64,
    /// Refractive index of the segment medium (≥ 1).
    pub index: f64,
}

impl ArmSegment {
    /// A validated segment: finite non-negative length, finite index ≥ 1.
    pub fn new(length: f64, index: f64) -> Result<Self> {
        let seg = Self { length, index };
        seg.validate()?;
        Ok(seg)
    }

    fn validate(&self) -> Result<()> {
        if !self.length.is_finite() || self.length < 0.0 {
            return Err(Error::Config(format!(
                "segment length must be finite and non-negative, got {}",
                self.length
            )));
        }
        if !self.index.is_finite() || self.index < 1.0 {
            return Err(Error::Config(format!(
                "refractive index must be finite and at least 1, got {}",
                self.index
            )));
        }
        Ok(())
    }
}

/// Segment-level geometry of an unbalanced two-arm interferometer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwiDesign {
    /// Segments of the long (delayed) arm.
    pub long_arm: Vec<ArmSegment>,
    /// Segments of the short arm.
    pub short_arm: Vec<ArmSegment>,
    /// Retro-reflected geometry: every segment is traversed twice.
    ///
    /// Lengths in [`ArmSegment`] are always *single-pass*; this flag doubles
    /// them inside every formula, which keeps the data model aligned with
    /// how the hardware is measured and avoids silent factor-of-two errors.
    pub double_pass: bool,
    /// Refractive index n₀ of the medium the input beam arrives through
    /// (1 for air).
    pub input_index: f64,
}

impl FwiDesign {
    /// A validated design.
    pub fn new(
        long_arm: Vec<ArmSegment>,
        short_arm: Vec<ArmSegment>,
        double_pass: bool,
        input_index: f64,
    ) -> Result<Self> {
        let design = Self {
            long_arm,
            short_arm,
            double_pass,
            input_index,
        };
        design.validate()?;
        Ok(design)
    }

    /// Checks every segment and the input index.
    pub fn validate(&self) -> Result<()> {
        for seg in self.long_arm.iter().chain(self.short_arm.iter()) {
            seg.validate()?;
        }
        if !self.input_index.is_finite() || self.input_index < 1.0 {
            return Err(Error::Config(format!(
                "input index must be finite and at least 1, got {}",
                self.input_index
            )));
        }
        Ok(())
    }

    /// 2 for a double-pass (retro-reflected) design, 1 otherwise.
    pub fn path_multiplier(&self) -> f64 {
        if self.double_pass {
            2.0
        } else {
            1.0
        }
    }

    /// The on-axis optical path difference Σ(n·L, long) − Σ(n·L, short) in
    /// metres, including the double-pass factor.
    pub fn balanced_path(&self) -> f64 {
        let long: f64 = self.long_arm.iter().map(|s| s.index * s.length).sum();
        let short: f64 = self.short_arm.iter().map(|s| s.index * s.length).sum();
        self.path_multiplier() * (long - short)
    }

    /// The widening coefficient Σ(L/n, long) − Σ(L/n, short) in metres,
    /// including the double-pass factor.
    ///
    /// This is the factor multiplying −n₀²·sin²α/2 in [`opd`](Self::opd): a
    /// field-widened design has it exactly zero, so its path difference is
    /// independent of the input angle to first order.
    pub fn widening_coefficient(&self) -> f64 {
        let long: f64 = self.long_arm.iter().map(|s| s.length / s.index).sum();
        let short: f64 = self.short_arm.iter().map(|s| s.length / s.index).sum();
        self.path_multiplier() * (long - short)
    }

    /// Optical path difference ΔL(α) in metres for an input ray at angle α
    /// radians from the interferometer axis.
    ///
    /// Evaluates the second-order expansion
    /// `ΔL(α) = balanced_path − (n₀²·sin²α/2)·widening_coefficient`; the
    /// result is even in α. The expansion is trustworthy for |α| up to about
    /// 0.1 rad.
    pub fn opd(&self, alpha: f64) -> f64 {
        let tilt = self.input_index * alpha.sin();
        self.balanced_path() - 0.5 * tilt * tilt * self.widening_coefficient()
    }
}

/// The delay and frequency-bin spacing a path imbalance realizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemuxDelay {
    /// Arm-to-arm group delay ΔL/c in seconds.
    pub delay: f64,
    /// Bin spacing Δω = π·c/ΔL in rad/s that the imbalance demultiplexes.
    pub bin_spacing: f64,
}

/// Converts a path imbalance into its delay and the bin spacing it
/// demultiplexes.
///
/// The demultiplexing condition is ΔL = π·c/Δω (adjacent bins then differ by
/// π in interferometer phase and exit opposite ports), so a given imbalance
/// serves the spacing Δω = π·c/ΔL. Doubling ΔL halves the spacing.
pub fn demux_delay(delta_l: f64) -> Result<DemuxDelay> {
    if !delta_l.is_finite() || delta_l <= 0.0 {
        return Err(Error::Config(format!(
            "path difference must be finite and positive, got {delta_l}"
        )));
    }
    Ok(DemuxDelay {
        delay: delta_l / SPEED_OF_LIGHT,
        bin_spacing: std::f64::consts::PI * SPEED_OF_LIGHT / delta_l,
    })
}

/// Solves the field-widening design equations for the glass and short-arm
/// lengths.
///
/// Given the glass index, the fixed air gaps of the long arm (single-pass
/// lengths; mirrors, mounts and working distance), a target path difference
/// and the pass geometry, this solves the linear system
///
/// ```text
/// m·(Σa + n·g − s) = ΔL_target      (path difference)
/// m·(Σa + g/n − s) = 0              (widening coefficient)
/// ```
///
/// for the single-pass glass length `g` and short-arm air length `s`, where
/// `m` is 2 for double pass and 1 otherwise. Subtracting the equations gives
/// the closed form `g = ΔL_target / (m·(n − 1/n))` and then
/// `s = Σa + g/n`. The returned design carries the air gaps and the glass
/// rod in the long arm, a single air segment in the short arm, and has a
/// widening coefficient of exactly zero.
///
/// Fails with a configuration error when the requested target or index make
/// either solved length non-positive.
pub fn solve_widened(
    n_glass: f64,
    air_gaps: &[f64],
    delta_l_target: f64,
    double_pass: bool,
) -> Result<FwiDesign> {
    if !n_glass.is_finite() || n_glass <= 1.0 {
        return Err(Error::Config(format!(
            "glass index must be finite and greater than 1, got {n_glass}"
        )));
    }
    for &gap in air_gaps {
        if !gap.is_finite() || gap < 0.0 {
            return Err(Error::Config(format!(
                "air gap lengths must be finite and non-negative, got {gap}"
            )));
        }
    }
    if !delta_l_target.is_finite() {
        return Err(Error::Config(format!(
            "path difference target must be finite, got {delta_l_target}"
        )));
    }
    let multiplier = if double_pass { 2.0 } else { 1.0 };
    let glass = delta_l_target / (multiplier * (n_glass - 1.0 / n_glass));
    if glass <= 0.0 {
        return Err(Error::Config(format!(
            "solved glass length is not positive ({glass} m): the path \
             difference target must be positive"
        )));
    }
    // Computed exactly as `widening_coefficient` will re-derive it, so the
    // solved design's coefficient is zero to the last bit, not merely small.
    let air_total: f64 = air_gaps.iter().sum();
    let short = air_total + glass / n_glass;
    if short <= 0.0 {
        return Err(Error::Config(format!(
            "solved short-arm length is not positive ({short} m)"
        )));
    }
    let mut long_arm: Vec<ArmSegment> = air_gaps
        .iter()
        .map(|&gap| ArmSegment {
            length: gap,
            index: 1.0,
        })
        .collect();
    long_arm.push(ArmSegment {
        length: glass,
        index: n_glass,
    });
    FwiDesign::new(
        long_arm,
        vec![ArmSegment {
            length: short,
            index: 1.0,
        }],
        double_pass,
        1.0,
    )
}

/// Port-extinction visibility of a demultiplexer design.
///
/// # Model
///
/// The interferometer transmits frequency ω into a given port with
/// probability `cos²(ω·ΔL(α)/2c)`. One bin (the "aligned" bin, center ω₀
/// taken at [`CARRIER_WAVELENGTH`]) is tuned to exit that port fully at
/// normal incidence; the other bin sits Δω above it. Each bin has the
/// Lorentzian intensity spectrum of an exponential amplitude decay with
/// intensity rate γ (half-width γ/2 in angular frequency), and the input
/// beam carries a Gaussian spread of arrival angles with standard deviation
/// `alpha_spread`.
///
/// Averaging the transmission over one bin's lineshape has a closed form —
/// the Lorentzian's Fourier transform — leaving
///
/// ```text
/// T̄_bin = ½·(1 + ⟨ e^(−γ·ΔL(α)/2c) · cos φ_bin(α) ⟩_α),
/// ```
///
/// with `φ_aligned(α) = ω₀·(ΔL(α) − ΔL(0))/c` and `φ_other = φ_aligned +
/// Δω·ΔL(α)/c`. Only the angle average needs numeric quadrature (adaptive
/// Simpson, relative tolerance ~1e−8, integrating to ±8 standard
/// deviations). The returned figure is the contrast
///
/// ```text
/// V = (T̄_aligned − T̄_other) / (T̄_aligned + T̄_other).
/// ```
///
/// # Behavior
///
/// * γ → 0, no angular spread, ΔL on the demultiplexing condition: V = 1.
/// * Finite γ, perfect alignment: V = exp(−γ·ΔL/2c) — the bins' spectral
///   wings leak into the wrong port.
/// * A non-zero widening coefficient makes ΔL, and with it the carrier
///   phase, wander quadratically across the angular spread; the visibility
///   collapses once ω₀·ΔL(0)·n₀²·σ²/2c approaches a radian. A field-widened
///   design holds ΔL(α) constant and keeps the γ-limited visibility at any
///   spread.
///
/// The result can be negative (the "aligned" port goes anti-aligned) once
/// the angular dephasing exceeds π; values are always in [−1, 1].
pub fn demux_visibility(
    design: &FwiDesign,
    gamma: f64,
    delta_omega: f64,
    alpha_spread: f64,
) -> Result<f64> {
    design.validate()?;
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::Config(format!(
            "linewidth gamma must be finite and non-negative, got {gamma}"
        )));
    }
    if !delta_omega.is_finite() || delta_omega <= 0.0 {
        return Err(Error::Config(format!(
            "bin spacing must be finite and positive, got {delta_omega}"
        )));
    }
    if !alpha_spread.is_finite() || alpha_spread < 0.0 {
        return Err(Error::Config(format!(
            "angular spread must be finite and non-negative, got {alpha_spread}"
        )));
    }
    let dl0 = design.opd(0.0);
    if dl0 <= 0.0 {
        return Err(Error::Config(format!(
            "design has non-positive on-axis path difference ({dl0} m); the \
             long arm must be the delayed arm"
        )));
    }
    let carrier = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / CARRIER_WAVELENGTH;
    let damped_cos = |alpha: f64, offset_rate: f64| -> f64 {
        let dl = design.opd(alpha);
        let damping = (-0.5 * gamma * dl / SPEED_OF_LIGHT).exp();
        let phase = (carrier * (dl - dl0) + offset_rate * dl) / SPEED_OF_LIGHT;
        damping * phase.cos()
    };
    // ⟨damped cosine⟩ over the angular spread, for the aligned bin
    // (offset_rate = 0) and the neighboring bin (offset_rate = Δω).
    let averaged = |offset_rate: f64| -> Result<f64> {
        if alpha_spread == 0.0 {
            return Ok(damped_cos(0.0, offset_rate));
        }
        let sigma = alpha_spread;
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        // Even integrand: twice the half-line integral; the Gaussian mass
        // beyond 8σ is ~1e-15 and is ignored.
        let integrand =
            |alpha: f64| 2.0 * norm * (-0.5 * (alpha / sigma).powi(2)).exp() * damped_cos(alpha, offset_rate);
        adaptive_simpson(&integrand, 0.0, 8.0 * sigma, 1e-9, 48)
    };
    let aligned = averaged(0.0)?;
    let other = averaged(delta_omega)?;
    Ok((aligned - other) / (2.0 + aligned + other))
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute accuracy
/// `eps`, with interval bisection capped at `max_depth` levels.
pub(crate) fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    eps: f64,
    max_depth: usize,
) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        eps: f64,
        depth: usize,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let refined = left + right;
        // Richardson error estimate for composite vs single Simpson.
        if (refined - whole).abs() <= 15.0 * eps {
            return Ok(refined + (refined - whole) / 15.0);
        }
        if depth == 0 {
            return Err(Error::NonConvergence {
                what: "adaptive quadrature".into(),
                iterations: 0,
                residual: (refined - whole).abs(),
            });
        }
        let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)?;
        let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)?;
        Ok(l + r)
    }
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::Config(format!(
            "quadrature interval [{a}, {b}] must be finite and increasing"
        )));
    }
    let fa = f(a);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, eps, max_depth)
}
