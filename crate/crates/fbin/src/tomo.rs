//! Maximum-likelihood reconstruction of the two-qubit state from four
//! physical measurement settings.
//!
//! Time-resolved detection behind the phase-stable interferometers realizes
//! a *continuum* of equatorial projectors — the detection time sets the
//! projector phase via φ = −Δω·t. Discretizing each arm's phase into equal
//! slots therefore turns a single physical configuration into a whole
//! family of measurement operators, and only four configurations are needed
//! for full state reconstruction:
//!
//! | setting | signal arm  | idler arm   |
//! |---------|-------------|-------------|
//! | 1       | equatorial  | equatorial  |
//! | 2       | equatorial  | demux (σZ)  |
//! | 3       | demux (σZ)  | equatorial  |
//! | 4       | demux (σZ)  | demux (σZ)  |
//!
//! Each slot pair (or demux port pair) contributes one measured effect
//! η·Π with an efficiency η collecting everything state-independent:
//! demultiplexer port transmissions for σZ outcomes and, for joint
//! equatorial slots, the probability mass of the pair time difference
//! landing in that slot-difference class. Counts are modeled as independent
//! Poisson draws with mean μ_k = N·η_k·Tr(ρ·Π_k), where the per-setting
//! exposure N absorbs acquisition time and common channel efficiency and is
//! profiled out in closed form at every step.
//!
//! The likelihood is maximized over ρ = T†T/Tr(T†T) (an unconstrained
//! complex 4×4 parametrization that is positive semidefinite and unit-trace
//! by construction) with gradient ascent plus backtracking line search, so
//! accepted iterations never decrease the log-likelihood.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::analysis::{coincidences, detection_phase};
use crate::error::{Error, Result};
use crate::jti::SourceConfig;
use crate::quantum::{
    bell_state, pauli_identity, pauli_x, pauli_y, pauli_z, tensor, Matrix,
    ProjectorWithEfficiency, TwoQubitState, C64,
};
use crate::sim::{
    apply_detection, derive_seed, route_mixed_events, route_z_basis, sample_pairs, ChannelModel,
    NoiseConfig, ZCounts, CHANNEL_IDLER, CHANNEL_SIGNAL,
};

/// Iteration cap for the likelihood ascent.
pub const MLE_MAX_ITERATIONS: usize = 10_000;
/// Relative log-likelihood improvement below which the ascent stops.
pub const MLE_RELATIVE_TOL: f64 = 1e-10;
/// Gradient Frobenius norm below which the ascent stops.
pub const MLE_GRADIENT_TOL: f64 = 1e-8;

const TWO_PI: f64 = std::f64::consts::TAU;

/// How detection times are discretized into projector phase slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSlotRule {
    /// Number of equal phase slots per arm covering the full 2π fringe.
    pub slots_per_arm: usize,
}

impl Default for PhaseSlotRule {
    /// 16 slots per arm: slot width π/8 in phase, ≈76 ps in time — wide
    /// enough to keep every joint slot populated, narrow enough that the
    /// within-slot fringe averaging (folded into the effects as a Bloch
    /// shrink factor) stays below 1 %.
    fn default() -> Self {
        Self { slots_per_arm: 16 }
    }
}

impl PhaseSlotRule {
    /// Range check: at least 4 slots (3 distinct phases are needed to
    /// resolve σX and σY; 4 keeps the grid symmetric), at most 256 (finer
    /// grids starve the per-slot statistics).
    pub fn validate(&self) -> Result<()> {
        if !(4..=256).contains(&self.slots_per_arm) {
            return Err(Error::Config(format!(
                "slots_per_arm must lie in [4, 256], got {}",
                self.slots_per_arm
            )));
        }
        Ok(())
    }

    /// Phase width of one slot.
    pub fn phase_width(&self) -> f64 {
        TWO_PI / self.slots_per_arm as f64
    }

    /// Center phase of slot `m`.
    pub fn slot_phase(&self, m: usize) -> f64 {
        (m as f64 + 0.5) * self.phase_width()
    }

    /// Bloch-vector shrink factor from averaging the projector over one
    /// slot: sin(Δ/2)/(Δ/2) for slot width Δ. The slot-averaged operator
    /// ½(I + s·(cos φ̄ σX + sin φ̄ σY)) replaces the center projector, so
    /// the finite slot width is part of the measurement model instead of a
    /// bias on the reconstructed state.
    pub fn smear(&self) -> f64 {
        let half = 0.5 * self.phase_width();
        half.sin() / half
    }
}

/// What one arm measures in a physical setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ArmBasis {
    /// Time-resolved equatorial measurement; outcomes are phase slots.
    Equatorial,
    /// Frequency-bin demultiplexer (σZ); outcomes are the two output ports
    /// with the given transmissions.
    Z {
        /// Port transmissions `[η₀, η₁]`.
        port_efficiency: [f64; 2],
    },
}

impl ArmBasis {
    fn outcomes(&self, rule: &PhaseSlotRule) -> usize {
        match self {
            ArmBasis::Equatorial => rule.slots_per_arm,
            ArmBasis::Z { .. } => 2,
        }
    }

    fn validate(&self) -> Result<()> {
        if let ArmBasis::Z { port_efficiency } = self {
            for (port, v) in port_efficiency.iter().enumerate() {
                if !(v.is_finite() && *v > 0.0 && *v <= 1.0) {
                    return Err(Error::Config(format!(
                        "port_efficiency[{port}] must lie in (0, 1], got {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One physical measurement configuration of the two arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    /// Signal-arm measurement.
    pub signal: ArmBasis,
    /// Idler-arm measurement.
    pub idler: ArmBasis,
}

impl MeasurementSetting {
    /// Both arms time-resolved (equatorial ⊗ equatorial).
    pub fn eq_eq() -> Self {
        Self {
            signal: ArmBasis::Equatorial,
            idler: ArmBasis::Equatorial,
        }
    }

    /// Signal time-resolved, idler demultiplexed.
    pub fn eq_z(channels: &ChannelModel) -> Self {
        Self {
            signal: ArmBasis::Equatorial,
            idler: ArmBasis::Z {
                port_efficiency: channels.z_port_efficiency[1],
            },
        }
    }

    /// Signal demultiplexed, idler time-resolved.
    pub fn z_eq(channels: &ChannelModel) -> Self {
        Self {
            signal: ArmBasis::Z {
                port_efficiency: channels.z_port_efficiency[0],
            },
            idler: ArmBasis::Equatorial,
        }
    }

    /// Both arms demultiplexed (σZ ⊗ σZ).
    pub fn z_z(channels: &ChannelModel) -> Self {
        Self {
            signal: ArmBasis::Z {
                port_efficiency: channels.z_port_efficiency[0],
            },
            idler: ArmBasis::Z {
                port_efficiency: channels.z_port_efficiency[1],
            },
        }
    }

    /// The full informationally complete family, in the order
    /// eq⊗eq, eq⊗Z, Z⊗eq, Z⊗Z.
    pub fn four_settings(channels: &ChannelModel) -> [Self; 4] {
        [
            Self::eq_eq(),
            Self::eq_z(channels),
            Self::z_eq(channels),
            Self::z_z(channels),
        ]
    }
}

/// Observed counts for one setting: `counts[signal outcome][idler outcome]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingData {
    /// The physical configuration the counts were taken in.
    pub setting: MeasurementSetting,
    /// Count table, rows indexed by the signal outcome.
    pub counts: Vec<Vec<f64>>,
}

impl SettingData {
    /// Checks the table shape against the setting and rule, and that every
    /// entry is a finite nonnegative count.
    pub fn validate(&self, rule: &PhaseSlotRule) -> Result<()> {
        self.setting.signal.validate()?;
        self.setting.idler.validate()?;
        let rows = self.setting.signal.outcomes(rule);
        let cols = self.setting.idler.outcomes(rule);
        if self.counts.len() != rows || self.counts.iter().any(|r| r.len() != cols) {
            return Err(Error::Data(format!(
                "count table must be {rows}×{cols} for this setting, got {}×{}",
                self.counts.len(),
                self.counts.first().map_or(0, Vec::len)
            )));
        }
        for row in &self.counts {
            for &v in row {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Data(format!(
                        "counts must be finite and nonnegative, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sum of all entries.
    pub fn total(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }
}

/// Phase slot of a detection time: φ = −Δω·t mod 2π, split into
/// `slots_per_arm` equal bins.
pub fn phase_slot(cfg: &SourceConfig, rule: &PhaseSlotRule, t: f64) -> usize {
    let phi = detection_phase(cfg, t);
    ((phi / rule.phase_width()) as usize).min(rule.slots_per_arm - 1)
}

/// Probability mass of the pair time difference falling in slot-difference
/// class `d` (signal slot minus idler slot, mod `slots_per_arm`), for
/// coincidences post-selected to the principal branch |t_s − t_i| ≤ P/2
/// (P the fringe period).
///
/// The time difference is Laplace(1/γ) distributed; within the principal
/// branch each slot-difference class corresponds to one τ interval of
/// width P/S (two half-intervals at the ±P/2 edges), so the class mass is
/// the exact Laplace integral over it.
pub fn laplace_slot_mass(cfg: &SourceConfig, rule: &PhaseSlotRule, d: usize) -> f64 {
    let s = rule.slots_per_arm as i64;
    let mut k = (d as i64).rem_euclid(s);
    if 2 * k > s {
        k -= s;
    }
    let period = cfg.fringe_period();
    let dt = period / s as f64;
    let g = cfg.gamma;
    if k == 0 {
        return 1.0 - (-g * 0.5 * dt).exp();
    }
    if 2 * k.abs() == s {
        // Boundary class: two half-bins touching ±P/2.
        return (-g * (0.5 * period - 0.5 * dt)).exp() - (-g * 0.5 * period).exp();
    }
    let center = k.abs() as f64 * dt;
    0.5 * ((-g * (center - 0.5 * dt)).exp() - (-g * (center + 0.5 * dt)).exp())
}

/// Bins equatorial⊗equatorial coincidences into the joint phase-slot
/// table, post-selecting the principal time-difference branch
/// |t_s − t_i| ≤ P/2 so each slot difference maps to a single τ class.
pub fn equatorial_slot_counts(
    coins: &[(f64, f64)],
    cfg: &SourceConfig,
    rule: &PhaseSlotRule,
) -> Vec<Vec<f64>> {
    let s = rule.slots_per_arm;
    let half_period = 0.5 * cfg.fringe_period();
    let mut counts = vec![vec![0.0; s]; s];
    for &(ts, ti) in coins {
        if (ts - ti).abs() <= half_period {
            counts[phase_slot(cfg, rule, ts)][phase_slot(cfg, rule, ti)] += 1.0;
        }
    }
    counts
}

/// Simulates all four measurement settings and returns their count tables,
/// ready for [`build_projector_set`].
///
/// Each setting gets its own emission run of `pairs_per_setting` pairs on
/// an independent seed stream. The equatorial⊗equatorial setting runs the
/// full time-tag chain (thinning, jitter, darks, accidentals) and matches
/// coincidences within `coincidence_window`; the mixed settings route one
/// arm through its demultiplexer while the other keeps its jittered
/// detection time; the σZ⊗σZ setting routes both arms.
pub fn simulate_tomography_data(
    cfg: &SourceConfig,
    noise: &NoiseConfig,
    channels: &ChannelModel,
    rule: &PhaseSlotRule,
    pairs_per_setting: usize,
    coincidence_window: f64,
    seed: u64,
) -> Result<Vec<SettingData>> {
    cfg.validate()?;
    rule.validate()?;
    if !(coincidence_window.is_finite() && coincidence_window >= 0.5 * cfg.fringe_period()) {
        return Err(Error::Config(format!(
            "coincidence_window must cover the principal time-difference branch \
             (≥ {:.3e} s), got {coincidence_window:.3e} s",
            0.5 * cfg.fringe_period()
        )));
    }
    let s = rule.slots_per_arm;

    // Setting 1: equatorial ⊗ equatorial through the full detection chain.
    let pairs = sample_pairs(cfg, pairs_per_setting, derive_seed(seed, 21))?;
    let stream = apply_detection(&pairs, cfg, noise, channels, derive_seed(seed, 21))?;
    let coins = coincidences(&stream, coincidence_window);
    let eq_eq = SettingData {
        setting: MeasurementSetting::eq_eq(),
        counts: equatorial_slot_counts(&coins, cfg, rule),
    };

    // Setting 2: signal time-resolved, idler demultiplexed.
    let pairs = sample_pairs(cfg, pairs_per_setting, derive_seed(seed, 22))?;
    let events = route_mixed_events(&pairs, channels, noise, CHANNEL_IDLER, derive_seed(seed, 22))?;
    let mut counts = vec![vec![0.0; 2]; s];
    for e in &events {
        counts[phase_slot(cfg, rule, e.time_direct)][e.port as usize] += 1.0;
    }
    let eq_z = SettingData {
        setting: MeasurementSetting::eq_z(channels),
        counts,
    };

    // Setting 3: signal demultiplexed, idler time-resolved.
    let pairs = sample_pairs(cfg, pairs_per_setting, derive_seed(seed, 23))?;
    let events =
        route_mixed_events(&pairs, channels, noise, CHANNEL_SIGNAL, derive_seed(seed, 23))?;
    let mut counts = vec![vec![0.0; s]; 2];
    for e in &events {
        counts[e.port as usize][phase_slot(cfg, rule, e.time_direct)] += 1.0;
    }
    let z_eq = SettingData {
        setting: MeasurementSetting::z_eq(channels),
        counts,
    };

    // Setting 4: both arms demultiplexed.
    let pairs = sample_pairs(cfg, pairs_per_setting, derive_seed(seed, 24))?;
    let zc = route_z_basis(&pairs, channels, noise, derive_seed(seed, 24))?;
    let z_z = SettingData {
        setting: MeasurementSetting::z_z(channels),
        counts: zz_counts(&zc),
    };

    Ok(vec![eq_eq, eq_z, z_eq, z_z])
}

/// Converts a σZ⊗σZ coincidence table into the generic count-table shape.
pub fn zz_counts(zc: &ZCounts) -> Vec<Vec<f64>> {
    zc.counts
        .iter()
        .map(|row| row.iter().map(|&v| v as f64).collect())
        .collect()
}

/// One measured effect: the operator, its state-independent weight, the
/// observed count, and which physical setting it belongs to.
#[derive(Debug, Clone)]
pub struct MeasuredProjector {
    /// The (possibly slot-averaged) measurement operator with efficiency.
    pub effect: ProjectorWithEfficiency,
    /// Observed count (fractional values allowed for synthetic data).
    pub count: f64,
    /// Index of the physical setting sharing one exposure normalization.
    pub setting: usize,
    /// Human-readable outcome label, e.g. `"eq3⊗z1"`.
    pub label: String,
}

/// The expanded measurement model: all effects plus the conditioning of the
/// operator-space design matrix.
#[derive(Debug, Clone)]
pub struct ProjectorSet {
    /// All measured effects across settings.
    pub effects: Vec<MeasuredProjector>,
    /// Ratio of largest to smallest singular value of the 16-column Pauli
    /// design matrix — a well-conditioned set stays within a few hundred.
    pub gram_condition: f64,
}

fn arm_effects(
    basis: &ArmBasis,
    rule: &PhaseSlotRule,
) -> Vec<(Matrix2<C64>, f64, String)> {
    match basis {
        ArmBasis::Equatorial => {
            let smear = rule.smear();
            (0..rule.slots_per_arm)
                .map(|m| {
                    let phi = rule.slot_phase(m);
                    let op = (pauli_identity()
                        + pauli_x() * Complex64::new(smear * phi.cos(), 0.0)
                        + pauli_y() * Complex64::new(smear * phi.sin(), 0.0))
                        * Complex64::new(0.5, 0.0);
                    (op, 1.0, format!("eq{m}"))
                })
                .collect()
        }
        ArmBasis::Z { port_efficiency } => (0..2)
            .map(|p| {
                let mut op = Matrix2::zeros();
                op[(p, p)] = Complex64::new(1.0, 0.0);
                (op, port_efficiency[p], format!("z{p}"))
            })
            .collect(),
    }
}

const PAULI_LABELS: [&str; 4] = ["I", "X", "Y", "Z"];

fn pauli_basis() -> [Matrix2<C64>; 4] {
    [pauli_identity(), pauli_x(), pauli_y(), pauli_z()]
}

/// Real Pauli coordinates Tr(Π·σa⊗σb)/4 of a Hermitian two-qubit operator.
fn pauli_vector(op: &Matrix) -> [f64; 16] {
    let basis = pauli_basis();
    let mut v = [0.0; 16];
    for a in 0..4 {
        for b in 0..4 {
            let p = tensor(&basis[a], &basis[b]);
            let tr = trace_product(op, &p);
            debug_assert!(tr.im.abs() < 1e-10);
            v[4 * a + b] = 0.25 * tr.re;
        }
    }
    v
}

fn trace_product(a: &Matrix, b: &Matrix) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Expands setting count tables into the flat list of measured effects and
/// verifies informational completeness.
///
/// Equatorial slots become slot-averaged equatorial operators at the slot
/// center phases; demultiplexer ports become |0⟩⟨0| / |1⟩⟨1| with their
/// port transmissions. Joint equatorial⊗equatorial outcomes additionally
/// carry the Laplace mass of their time-difference class
/// ([`laplace_slot_mass`]) so the wrapped pair time-difference law enters
/// the expected counts as efficiency rather than being mistaken for state
/// structure.
///
/// Completeness is checked numerically: the effects' Pauli coordinates must
/// span all 16 operator directions; otherwise [`Error::Incomplete`] names
/// the missing ones.
pub fn build_projector_set(
    data: &[SettingData],
    cfg: &SourceConfig,
    rule: &PhaseSlotRule,
) -> Result<ProjectorSet> {
    cfg.validate()?;
    rule.validate()?;
    if data.is_empty() {
        return Err(Error::Data("no measurement settings provided".into()));
    }
    let mut effects = Vec::new();
    let mut grand_total = 0.0;
    for (setting_idx, sd) in data.iter().enumerate() {
        sd.validate(rule)?;
        grand_total += sd.total();
        let signal = arm_effects(&sd.setting.signal, rule);
        let idler = arm_effects(&sd.setting.idler, rule);
        let eq_eq = matches!(
            (&sd.setting.signal, &sd.setting.idler),
            (ArmBasis::Equatorial, ArmBasis::Equatorial)
        );
        for (i, (op_s, eta_s, label_s)) in signal.iter().enumerate() {
            for (j, (op_i, eta_i, label_i)) in idler.iter().enumerate() {
                let mut eta = eta_s * eta_i;
                if eq_eq {
                    let d = (i + rule.slots_per_arm - j) % rule.slots_per_arm;
                    eta *= laplace_slot_mass(cfg, rule, d);
                }
                effects.push(MeasuredProjector {
                    effect: ProjectorWithEfficiency::new(tensor(op_s, op_i), eta)?,
                    count: sd.counts[i][j],
                    setting: setting_idx,
                    label: format!("{label_s}⊗{label_i}"),
                });
            }
        }
    }
    if grand_total <= 0.0 {
        return Err(Error::Data("all settings have zero total counts".into()));
    }

    // Informational completeness: the Pauli design matrix must have rank 16.
    let k = effects.len();
    let mut design = DMatrix::<f64>::zeros(k, 16);
    for (row, e) in effects.iter().enumerate() {
        for (col, v) in pauli_vector(&e.effect.matrix).into_iter().enumerate() {
            design[(row, col)] = v;
        }
    }
    let svd = design.svd(false, true);
    let sigma_max = svd.singular_values.max();
    let tol = sigma_max * 1e-9;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let v_t = svd
        .v_t
        .as_ref()
        .expect("svd requested right singular vectors");
    if rank < 16 {
        // Project each Pauli direction onto the row space; directions with
        // (almost) no support are the missing ones.
        let mut projections = [0.0f64; 16];
        for l in 0..svd.singular_values.len() {
            if svd.singular_values[l] > tol {
                for (d, proj) in projections.iter_mut().enumerate() {
                    *proj += v_t[(l, d)] * v_t[(l, d)];
                }
            }
        }
        let mut missing: Vec<(f64, String)> = projections
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p < 0.5)
            .map(|(d, &p)| {
                (
                    p,
                    format!("{}{}", PAULI_LABELS[d / 4], PAULI_LABELS[d % 4]),
                )
            })
            .collect();
        if missing.is_empty() {
            // Rotated null space: report the least-covered directions.
            let mut by_proj: Vec<(f64, usize)> = projections
                .iter()
                .enumerate()
                .map(|(d, &p)| (p, d))
                .collect();
            by_proj.sort_by(|a, b| a.0.total_cmp(&b.0));
            missing = by_proj
                .into_iter()
                .take(16 - rank)
                .map(|(p, d)| {
                    (
                        p,
                        format!("{}{}", PAULI_LABELS[d / 4], PAULI_LABELS[d % 4]),
                    )
                })
                .collect();
        }
        missing.sort_by(|a, b| a.0.total_cmp(&b.0));
        return Err(Error::Incomplete {
            missing: missing.into_iter().map(|(_, l)| l).collect(),
        });
    }
    let sigma_min = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(ProjectorSet {
        effects,
        gram_condition: sigma_max / sigma_min,
    })
}

/// Outcome of one maximum-likelihood reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TomographyResult {
    /// The reconstructed state (positive semidefinite, unit trace by
    /// construction).
    pub rho: TwoQubitState,
    /// Overlap with the phase-zero Bell state (|00⟩ + |11⟩)/√2.
    pub fidelity_to_phi_plus: f64,
    /// Tr ρ².
    pub purity: f64,
    /// Final Poisson log-likelihood (up to count-only constants).
    pub log_likelihood: f64,
    /// Accepted ascent iterations performed.
    pub iterations: usize,
    /// True when a stopping tolerance was met within the iteration cap.
    pub converged: bool,
    /// True when no accepted step ever decreased the log-likelihood
    /// (guaranteed by the line search; recorded as evidence).
    pub monotone: bool,
    /// Norm of the likelihood gradient at the returned iterate — the
    /// residual of the stationarity condition.
    pub gradient_norm: f64,
}

struct LikelihoodModel<'a> {
    effects: &'a [MeasuredProjector],
    groups: Vec<Vec<usize>>,
}

struct Evaluation {
    log_likelihood: f64,
    /// Born probabilities per effect.
    p: Vec<f64>,
    /// Profiled exposure per setting group.
    exposure: Vec<f64>,
}

impl<'a> LikelihoodModel<'a> {
    fn new(effects: &'a [MeasuredProjector]) -> Self {
        let n_groups = effects.iter().map(|e| e.setting).max().unwrap_or(0) + 1;
        let mut groups = vec![Vec::new(); n_groups];
        for (k, e) in effects.iter().enumerate() {
            groups[e.setting].push(k);
        }
        // Canonical in-group order: summation order (and with it every
        // floating-point rounding) is then independent of how the caller
        // arranged the effect list, so permuted inputs give bit-identical
        // likelihoods, gradients, and fixed points.
        for group in &mut groups {
            group.sort_by(|&a, &b| effects[a].label.cmp(&effects[b].label));
        }
        Self { effects, groups }
    }

    fn rho_matrix(t: &Matrix) -> (Matrix, f64) {
        let w = t.adjoint() * t;
        let s = w.trace().re;
        (w / Complex64::new(s, 0.0), s)
    }

    fn evaluate(&self, t: &Matrix) -> Evaluation {
        let (rho, _) = Self::rho_matrix(t);
        let p: Vec<f64> = self
            .effects
            .iter()
            .map(|e| trace_product(&rho, &e.effect.matrix).re.max(0.0))
            .collect();
        let mut exposure = vec![0.0; self.groups.len()];
        let mut log_likelihood = 0.0;
        for (g, idx) in self.groups.iter().enumerate() {
            let mut rate = 0.0;
            let mut total = 0.0;
            for &k in idx {
                rate += self.effects[k].effect.efficiency * p[k];
                total += self.effects[k].count;
            }
            if total > 0.0 {
                if rate <= 0.0 {
                    return Evaluation {
                        log_likelihood: f64::NEG_INFINITY,
                        p,
                        exposure,
                    };
                }
                exposure[g] = total / rate;
            }
            for &k in idx {
                let mu = exposure[g] * self.effects[k].effect.efficiency * p[k];
                let n = self.effects[k].count;
                if n > 0.0 {
                    if mu <= 0.0 {
                        return Evaluation {
                            log_likelihood: f64::NEG_INFINITY,
                            p,
                            exposure,
                        };
                    }
                    log_likelihood += n * mu.ln() - mu;
                } else {
                    log_likelihood -= mu;
                }
            }
        }
        Evaluation {
            log_likelihood,
            p,
            exposure,
        }
    }

    /// Ascent direction ∂L/∂T̄ = T·G with G = (G_ρ − Tr(G_ρ·ρ)·I)/Tr(T†T),
    /// G_ρ = Σ_k (n_k/μ_k − 1)·N·η_k·Π_k; the profiled exposures are
    /// stationary, so holding them fixed gives the exact gradient.
    fn gradient(&self, t: &Matrix, eval: &Evaluation) -> Matrix {
        let (rho, s) = Self::rho_matrix(t);
        let mut g_rho = Matrix::zeros();
        for (g, idx) in self.groups.iter().enumerate() {
            for &k in idx {
                let eta = self.effects[k].effect.efficiency;
                let mu = eval.exposure[g] * eta * eval.p[k];
                let n = self.effects[k].count;
                let ratio = if n > 0.0 { n / mu.max(f64::MIN_POSITIVE) } else { 0.0 };
                let coef = (ratio - 1.0) * eval.exposure[g] * eta;
                g_rho += self.effects[k].effect.matrix * Complex64::new(coef, 0.0);
            }
        }
        let anchor = trace_product(&g_rho, &rho).re;
        let g_w = (g_rho - Matrix::identity() * Complex64::new(anchor, 0.0))
            / Complex64::new(s, 0.0);
        t * g_w
    }
}

/// Maximizes the Poisson likelihood over ρ = T†T/Tr(T†T), starting from the
/// maximally mixed state, and returns the best iterate with diagnostics.
///
/// The ascent is a limited-memory quasi-Newton (L-BFGS) iteration: curvature
/// pairs from the last few accepted steps precondition the gradient, which is
/// what pushes the iterate all the way into the quadratic basin instead of
/// crawling along ill-conditioned valleys. Accepted steps never decrease the
/// log-likelihood (backtracking line search); the ascent stops when no
/// representable step improves the likelihood, when the relative improvement
/// stays below [`MLE_RELATIVE_TOL`] for several consecutive steps, or when
/// the gradient norm falls below [`MLE_GRADIENT_TOL`]. The iteration count is
/// capped at [`MLE_MAX_ITERATIONS`] — hitting the cap is reported through
/// `converged = false` rather than an error so the caller still gets the best
/// iterate.
pub fn mle_reconstruct(set: &ProjectorSet) -> Result<TomographyResult> {
    if set.effects.is_empty() {
        return Err(Error::Data("no measured effects to reconstruct from".into()));
    }
    let total: f64 = set.effects.iter().map(|e| e.count).sum();
    if total <= 0.0 {
        return Err(Error::Data(
            "total count is zero; nothing to reconstruct".into(),
        ));
    }
    let model = LikelihoodModel::new(&set.effects);

    // T = I/2 ⇒ ρ = I/4: interior start, every effect keeps μ > 0.
    let mut t = Matrix::identity() * Complex64::new(0.5, 0.0);
    let mut eval = model.evaluate(&t);
    let mut iterations = 0;
    let mut converged = false;
    let monotone = true;
    let mut small_gain_streak = 0usize;
    // L-BFGS memory: (step s, gradient drop y = G_old − G_new, 1/⟨y,s⟩).
    const LBFGS_MEMORY: usize = 10;
    let mut pairs: Vec<(Matrix, Matrix, f64)> = Vec::new();

    let re_inner = |a: &Matrix, b: &Matrix| -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
    };

    let mut grad = model.gradient(&t, &eval);
    for _ in 0..MLE_MAX_ITERATIONS {
        let grad_norm = re_inner(&grad, &grad).sqrt();
        if grad_norm < MLE_GRADIENT_TOL {
            converged = true;
            break;
        }
        // Two-loop recursion: apply the inverse-Hessian estimate to the
        // ascent gradient.
        let mut dir = grad;
        let mut coeffs = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * re_inner(s, &dir);
            dir -= y * Complex64::new(a, 0.0);
            coeffs.push(a);
        }
        if let Some((s, y, _)) = pairs.last() {
            let gamma = re_inner(s, y) / re_inner(y, y);
            dir *= Complex64::new(gamma, 0.0);
        }
        for ((s, y, rho), a) in pairs.iter().zip(coeffs.iter().rev()) {
            let b = rho * re_inner(y, &dir);
            dir += s * Complex64::new(a - b, 0.0);
        }
        if re_inner(&dir, &grad) <= 0.0 {
            // Curvature estimate went stale; restart from steepest ascent.
            dir = grad;
            pairs.clear();
        }
        // Quasi-Newton steps are natural at unit length once curvature
        // information exists; the very first step has none, so scale it to a
        // ~10 % relative parameter move.
        let alpha = if pairs.is_empty() {
            let t_norm = re_inner(&t, &t).sqrt();
            0.1 * t_norm / re_inner(&dir, &dir).sqrt()
        } else {
            1.0
        };

        // Line search: find an improving step, then expand while the
        // likelihood keeps rising so steps reach their natural scale.
        let mut step = alpha;
        let mut best: Option<(f64, Matrix, Evaluation)> = None;
        for _ in 0..64 {
            let trial = t + dir * Complex64::new(step, 0.0);
            let trial_eval = model.evaluate(&trial);
            if trial_eval.log_likelihood.is_finite()
                && trial_eval.log_likelihood >= eval.log_likelihood
            {
                best = Some((step, trial, trial_eval));
                break;
            }
            step *= 0.5;
        }
        if let Some((step0, _, _)) = best {
            let mut step_up = step0;
            for _ in 0..48 {
                step_up *= 2.0;
                let trial = t + dir * Complex64::new(step_up, 0.0);
                let trial_eval = model.evaluate(&trial);
                let improved = trial_eval.log_likelihood.is_finite()
                    && trial_eval.log_likelihood
                        > best.as_ref().map(|(_, _, e)| e.log_likelihood).unwrap();
                if improved {
                    best = Some((step_up, trial, trial_eval));
                } else {
                    break;
                }
            }
            // Refine around the bracket maximum — accurate steps keep the
            // curvature pairs consistent.
            for factor in [0.75, 1.5, 0.9, 1.12] {
                let step_try = best.as_ref().unwrap().0 * factor;
                let trial = t + dir * Complex64::new(step_try, 0.0);
                let trial_eval = model.evaluate(&trial);
                if trial_eval.log_likelihood.is_finite()
                    && trial_eval.log_likelihood
                        > best.as_ref().map(|(_, _, e)| e.log_likelihood).unwrap()
                {
                    best = Some((step_try, trial, trial_eval));
                }
            }
        }
        let Some((step, trial, trial_eval)) = best else {
            // No uphill step exists at representable sizes: numerically at
            // the optimum.
            converged = true;
            break;
        };
        debug_assert!(trial_eval.log_likelihood >= eval.log_likelihood);
        let gain = trial_eval.log_likelihood - eval.log_likelihood;
        let rel = gain / (1.0 + trial_eval.log_likelihood.abs());
        let new_grad = model.gradient(&trial, &trial_eval);
        let s = dir * Complex64::new(step, 0.0);
        let y = grad - new_grad;
        let ys = re_inner(&y, &s);
        // Store the pair only when it carries usable positive curvature.
        if ys > 1e-12 * re_inner(&y, &y).sqrt() * re_inner(&s, &s).sqrt() {
            if pairs.len() == LBFGS_MEMORY {
                pairs.remove(0);
            }
            pairs.push((s, y, 1.0 / ys));
        }
        t = trial;
        eval = trial_eval;
        grad = new_grad;
        iterations += 1;
        // One small step can just be a plateau crossing; only a sustained
        // run of negligible gains marks the optimum.
        if rel < MLE_RELATIVE_TOL {
            small_gain_streak += 1;
            if small_gain_streak >= 8 {
                converged = true;
                break;
            }
        } else {
            small_gain_streak = 0;
        }
    }

    let gradient_norm = {
        let g = model.gradient(&t, &eval);
        re_inner(&g, &g).sqrt()
    };
    let (raw_rho, _) = LikelihoodModel::rho_matrix(&t);
    // Symmetrize away the last rounding crumbs before validation.
    let mut sym = (raw_rho + raw_rho.adjoint()) * Complex64::new(0.5, 0.0);
    let trace = sym.trace().re;
    sym /= Complex64::new(trace, 0.0);
    let rho = TwoQubitState::new(sym)?;
    let fidelity_to_phi_plus = bell_state(0.0).fidelity(&rho)?;
    let purity = rho.purity();
    Ok(TomographyResult {
        rho,
        fidelity_to_phi_plus,
        purity,
        log_likelihood: eval.log_likelihood,
        iterations,
        converged,
        monotone,
        gradient_norm,
    })
}

/// Bootstrap uncertainties on the reconstructed fidelity and purity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TomographyUncertainty {
    /// Standard deviation of the fidelity across refits.
    pub fidelity_stderr: f64,
    /// Standard deviation of the purity across refits.
    pub purity_stderr: f64,
    /// Number of bootstrap replicas.
    pub n_bootstrap: usize,
}

/// Parametric bootstrap: redraws every count as Poisson at the fitted mean
/// μ̂_k, refits, and reports the spread of fidelity and purity.
pub fn uncertainty(
    set: &ProjectorSet,
    result: &TomographyResult,
    n_boot: usize,
    seed: u64,
) -> Result<TomographyUncertainty> {
    if n_boot < 2 {
        return Err(Error::Config(format!(
            "bootstrap needs at least 2 replicas, got {n_boot}"
        )));
    }
    let model = LikelihoodModel::new(&set.effects);
    // Fitted means at the reconstructed state.
    let p: Vec<f64> = set
        .effects
        .iter()
        .map(|e| trace_product(result.rho.matrix(), &e.effect.matrix).re.max(0.0))
        .collect();
    let mut mu = vec![0.0; set.effects.len()];
    for idx in &model.groups {
        let mut rate = 0.0;
        let mut total = 0.0;
        for &k in idx {
            rate += set.effects[k].effect.efficiency * p[k];
            total += set.effects[k].count;
        }
        if total > 0.0 && rate > 0.0 {
            let exposure = total / rate;
            for &k in idx {
                mu[k] = exposure * set.effects[k].effect.efficiency * p[k];
            }
        }
    }

    let mut fidelities = Vec::with_capacity(n_boot);
    let mut purities = Vec::with_capacity(n_boot);
    for r in 0..n_boot {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 100 + r as u64));
        let mut replica = set.clone();
        for (k, e) in replica.effects.iter_mut().enumerate() {
            e.count = if mu[k] > 1e-12 {
                Poisson::new(mu[k])
                    .map_err(|e| Error::Config(format!("bootstrap mean: {e}")))?
                    .sample(&mut rng)
            } else {
                0.0
            };
        }
        let refit = mle_reconstruct(&replica)?;
        fidelities.push(refit.fidelity_to_phi_plus);
        purities.push(refit.purity);
    }
    Ok(TomographyUncertainty {
        fidelity_stderr: sample_std(&fidelities),
        purity_stderr: sample_std(&purities),
        n_bootstrap: n_boot,
    })
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Fills a [`SettingData`] family with the exact expected counts of `state`
/// (scale × η_k × Born probability) — synthetic data with no sampling noise
/// for oracle tests and noiseless pipelines.
pub fn exact_setting_data(
    state: &TwoQubitState,
    channels: &ChannelModel,
    cfg: &SourceConfig,
    rule: &PhaseSlotRule,
    scale: f64,
) -> Result<Vec<SettingData>> {
    let settings = MeasurementSetting::four_settings(channels);
    let mut out = Vec::with_capacity(settings.len());
    for setting in settings {
        let signal = arm_effects(&setting.signal, rule);
        let idler = arm_effects(&setting.idler, rule);
        let eq_eq = matches!(
            (&setting.signal, &setting.idler),
            (ArmBasis::Equatorial, ArmBasis::Equatorial)
        );
        let mut counts = vec![vec![0.0; idler.len()]; signal.len()];
        for (i, (op_s, eta_s, _)) in signal.iter().enumerate() {
            for (j, (op_i, eta_i, _)) in idler.iter().enumerate() {
                let mut eta = eta_s * eta_i;
                if eq_eq {
                    let d = (i + rule.slots_per_arm - j) % rule.slots_per_arm;
                    eta *= laplace_slot_mass(cfg, rule, d);
                }
                let p = trace_product(state.matrix(), &tensor(op_s, op_i)).re.max(0.0);
                counts[i][j] = scale * eta * p;
            }
        }
        out.push(SettingData { setting, counts });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg() -> SourceConfig {
        SourceConfig::default_source()
    }

    fn interior_state() -> TwoQubitState {
        // 0.8·|Φ(0.3)⟩⟨Φ(0.3)| + 0.2·I/4 — strictly positive spectrum.
        let bell = bell_state(0.3);
        let mixed = TwoQubitState::maximally_mixed();
        let rho = bell.matrix() * Complex64::new(0.8, 0.0)
            + mixed.matrix() * Complex64::new(0.2, 0.0);
        TwoQubitState::new(rho).unwrap()
    }

    fn max_entry_diff(a: &TwoQubitState, b: &TwoQubitState) -> f64 {
        (a.matrix() - b.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn phase_slots_tile_the_fringe_period() {
        let c = cfg();
        let rule = PhaseSlotRule::default();
        let period = c.fringe_period();
        // t = k·P/S sits at the *start* of a slot; phases decrease with t,
        // so slot(t=+ε) wraps to the top slot.
        assert_eq!(phase_slot(&c, &rule, 0.0), 0);
        let eps = period / 160.0;
        assert_eq!(phase_slot(&c, &rule, eps), 15);
        assert_eq!(phase_slot(&c, &rule, period - eps), 0);
        // One full period later the slot repeats.
        for k in 0..16 {
            let t = (k as f64 + 0.4) * period / 16.0;
            assert_eq!(
                phase_slot(&c, &rule, t),
                phase_slot(&c, &rule, t + 3.0 * period)
            );
        }
    }

    #[test]
    fn slot_difference_masses_sum_to_the_principal_branch() {
        let c = cfg();
        let rule = PhaseSlotRule::default();
        let total: f64 = (0..rule.slots_per_arm)
            .map(|d| laplace_slot_mass(&c, &rule, d))
            .sum();
        let branch = 1.0 - (-c.gamma * 0.5 * c.fringe_period()).exp();
        assert_abs_diff_eq!(total, branch, epsilon = 1e-12);
        // Classes are symmetric: d and S−d share the |τ| interval.
        for d in 1..rule.slots_per_arm {
            assert_abs_diff_eq!(
                laplace_slot_mass(&c, &rule, d),
                laplace_slot_mass(&c, &rule, rule.slots_per_arm - d),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn four_settings_are_informationally_complete() {
        let c = cfg();
        let rule = PhaseSlotRule::default();
        let data =
            exact_setting_data(&interior_state(), &ChannelModel::default_channels(), &c, &rule, 1e6)
                .unwrap();
        let set = build_projector_set(&data, &c, &rule).unwrap();
        assert_eq!(set.effects.len(), 16 * 16 + 16 * 2 + 2 * 16 + 4);
        assert!(
            set.gram_condition.is_finite() && set.gram_condition < 1e4,
            "condition = {}",
            set.gram_condition
        );
    }

    #[test]
    fn equatorial_data_alone_is_flagged_incomplete() {
        let c = cfg();
        let rule = PhaseSlotRule::default();
        let all =
            exact_setting_data(&interior_state(), &ChannelModel::default_channels(), &c, &rule, 1e6)
                .unwrap();
        let only_eq = vec![all[0].clone()];
        match build_projector_set(&only_eq, &c, &rule) {
            Err(Error::Incomplete { missing }) => {
                for dir in ["ZZ", "IZ", "ZI", "XZ", "ZX", "YZ", "ZY"] {
                    assert!(missing.iter().any(|m| m == dir), "missing {dir}: {missing:?}");
                }
                assert_eq!(missing.len(), 7);
            }
            other => panic!("expected incompleteness error, got {other:?}"),
        }
    }

    #[test]
    fn likelihood_gradient_matches_finite_differences() {
        let c = cfg();
        let rule = PhaseSlotRule { slots_per_arm: 4 };
        let data =
            exact_setting_data(&interior_state(), &ChannelModel::default_channels(), &c, &rule, 1e4)
                .unwrap();
        let set = build_projector_set(&data, &c, &rule).unwrap();
        let model = LikelihoodModel::new(&set.effects);
        // A deliberately lopsided, non-Hermitian parameter point.
        let mut t = Matrix::identity() * Complex64::new(0.45, 0.0);
        t[(1, 0)] = Complex64::new(0.21, -0.13);
        t[(2, 3)] = Complex64::new(-0.05, 0.17);
        t[(3, 3)] = Complex64::new(0.61, 0.0);
        let eval = model.evaluate(&t);
        let grad = model.gradient(&t, &eval);
        let h = 1e-6;
        for &(i, j) in &[(0usize, 0usize), (1, 0), (2, 3), (3, 1)] {
            for im in [false, true] {
                let delta = if im {
                    Complex64::new(0.0, h)
                } else {
                    Complex64::new(h, 0.0)
                };
                let mut tp = t;
                tp[(i, j)] += delta;
                let mut tm = t;
                tm[(i, j)] -= delta;
                let numeric = (model.evaluate(&tp).log_likelihood
                    - model.evaluate(&tm).log_likelihood)
                    / (2.0 * h);
                let analytic = if im { 2.0 * grad[(i, j)].im } else { 2.0 * grad[(i, j)].re };
                assert_abs_diff_eq!(
                    numeric,
                    analytic,
                    epsilon = 1e-4 * (1.0 + analytic.abs())
                );
            }
        }
    }

    #[test]
    fn exact_counts_from_an_interior_state_are_recovered() {
        let c = cfg();
        let rule = PhaseSlotRule::default();
        let truth = interior_state();
        let data =
            exact_setting_data(&truth, &ChannelModel::default_channels(), &c, &rule, 1e6).unwrap();
        let set = build_projector_set(&data, &c, &rule).unwrap();
        let result = mle_reconstruct(&set).unwrap();
        assert!(result.converged, "did not converge in {} iters", result.iterations);
        assert!(result.monotone);
        assert!(result.iterations < MLE_MAX_ITERATIONS);
        assert!(
            max_entry_diff(&result.rho, &truth) < 1e-6,
            "max entry diff = {:.3e}",
            max_entry_diff(&result.rho, &truth)
        );
    }

    #[test]
    fn orthogonal_projector_counts_reproduce_the_closed_form() {
        // Four orthogonal σZ⊗σZ projectors with unit efficiency: the MLE of
        // the outcome probabilities is the empirical frequency vector.
        let kets: [(usize, f64); 4] = [(0, 100.0), (1, 200.0), (2, 300.0), (3, 400.0)];
        let mut effects = Vec::new();
        for &(idx, count) in &kets {
            let mut m = Matrix::zeros();
            m[(idx, idx)] = Complex64::new(1.0, 0.0);
            effects.push(MeasuredProjector {
                effect: ProjectorWithEfficiency::new(m, 1.0).unwrap(),
                count,
                setting: 0,
                label: format!("d{idx}"),
            });
        }
        let set = ProjectorSet {
            effects,
            gram_condition: 1.0,
        };
        let result = mle_reconstruct(&set).unwrap();
        for &(idx, count) in &kets {
            let p = result.rho.matrix()[(idx, idx)].re;
            assert_abs_diff_eq!(p, count / 1000.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn effect_order_does_not_move_the_fixed_point() {
        let c = cfg();
        let rule = PhaseSlotRule { slots_per_arm: 8 };
        let data =
            exact_setting_data(&interior_state(), &ChannelModel::default_channels(), &c, &rule, 1e5)
                .unwrap();
        let forward = build_projector_set(&data, &c, &rule).unwrap();
        let mut reversed = forward.clone();
        reversed.effects.reverse();
        let a = mle_reconstruct(&forward).unwrap();
        let b = mle_reconstruct(&reversed).unwrap();
        assert!(
            max_entry_diff(&a.rho, &b.rho) < 1e-9,
            "order changed the fixed point by {:.3e}",
            max_entry_diff(&a.rho, &b.rho)
        );
    }

    #[test]
    fn noiseless_bell_counts_reconstruct_perfectly() {
        let c = cfg();
        let rule = PhaseSlotRule::default();
        let data = exact_setting_data(
            &bell_state(0.0),
            &ChannelModel::default_channels(),
            &c,
            &rule,
            1e6,
        )
        .unwrap();
        let set = build_projector_set(&data, &c, &rule).unwrap();
        let result = mle_reconstruct(&set).unwrap();
        assert!(result.converged);
        assert!(result.monotone);
        assert!(
            result.fidelity_to_phi_plus >= 0.9999,
            "fidelity = {}",
            result.fidelity_to_phi_plus
        );
        assert!(result.purity >= 0.9999, "purity = {}", result.purity);
    }

    #[test]
    fn maximally_mixed_counts_reconstruct_low_purity() {
        let c = cfg();
        let rule = PhaseSlotRule::default();
        let data = exact_setting_data(
            &TwoQubitState::maximally_mixed(),
            &ChannelModel::default_channels(),
            &c,
            &rule,
            1e6,
        )
        .unwrap();
        let set = build_projector_set(&data, &c, &rule).unwrap();
        let result = mle_reconstruct(&set).unwrap();
        assert_abs_diff_eq!(result.purity, 0.25, epsilon = 0.01);
        assert_abs_diff_eq!(result.fidelity_to_phi_plus, 0.25, epsilon = 0.01);
    }

    #[test]
    fn matched_noise_reconstruction_lands_on_the_reference_quality() {
        let mut c = cfg();
        c.window = 1.0;
        let mut noise = NoiseConfig::default_noise();
        noise.accidental_fraction = 0.25;
        let mut channels = ChannelModel::default_channels();
        // Demux visibilities whose product matches the measured σZ⊗σZ
        // correlator of 0.873.
        channels.demux_visibility_signal = 0.949;
        channels.demux_visibility_idler = 0.92;
        let rule = PhaseSlotRule::default();
        let data = simulate_tomography_data(&c, &noise, &channels, &rule, 120_000, 5e-9, 99)
            .unwrap();
        let set = build_projector_set(&data, &c, &rule).unwrap();
        let result = mle_reconstruct(&set).unwrap();
        assert!(result.converged);
        assert!(result.monotone);
        assert_abs_diff_eq!(result.fidelity_to_phi_plus, 0.91, epsilon = 0.03);
        assert_abs_diff_eq!(result.purity, 0.84, epsilon = 0.04);
    }

    #[test]
    fn bootstrap_spread_is_small_for_high_statistics() {
        let c = cfg();
        let rule = PhaseSlotRule { slots_per_arm: 8 };
        let data = exact_setting_data(
            &interior_state(),
            &ChannelModel::default_channels(),
            &c,
            &rule,
            1e6,
        )
        .unwrap();
        let set = build_projector_set(&data, &c, &rule).unwrap();
        let result = mle_reconstruct(&set).unwrap();
        let unc = uncertainty(&set, &result, 16, 5).unwrap();
        assert!(unc.fidelity_stderr > 0.0 && unc.fidelity_stderr < 5e-3);
        assert!(unc.purity_stderr > 0.0 && unc.purity_stderr < 5e-3);
        assert_eq!(unc.n_bootstrap, 16);
    }
}
