//! Domain types shared by every stage of the pipeline.
//!
//! Values are carried in the units the machining tables use: natural
//! frequencies in Hz, stiffnesses in N/m, depths of cut in mm, spindle
//! speeds in rev/min, immersion angles in degrees. Computations convert
//! to rad/s, metres, and radians internally.

mod params;
pub mod units;

pub use params::{flatten, Direction, ParamSlot, ParameterVector, SlotField, TieSpec};
pub use units::{convert_units, tooth_passing_omega, tooth_period, Unit};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("natural frequency must be > 0 Hz, got {0}")]
    BadNaturalFrequency(f64),
    #[error("stiffness must be > 0 N/m, got {0}")]
    BadStiffness(f64),
    #[error("damping ratio must lie in (0, 1), got {0}")]
    BadDampingRatio(f64),
    #[error("mode list for direction {0} is empty")]
    EmptyModeList(char),
    #[error("modes for direction {0} must be sorted by ascending natural frequency")]
    UnsortedModes(char),
    #[error("tangential coefficient must be > 0 N/mm^2, got {0}")]
    BadTangentialCoefficient(f64),
    #[error("radial ratio must be > 0, got {0}")]
    BadRadialRatio(f64),
    #[error("flute count must be >= 1, got {0}")]
    BadFluteCount(u32),
    #[error("immersion angles must satisfy 0 <= start < exit <= 360 deg, got start={0}, exit={1}")]
    BadImmersionAngles(f64, f64),
    #[error("boundary must contain at least one point")]
    EmptyBoundary,
    #[error("boundary speeds must be strictly increasing (violated at index {0})")]
    NonIncreasingSpeeds(usize),
    #[error("boundary depth at index {0} must be > 0 mm, got {1}")]
    NonPositiveDepth(usize, f64),
    #[error("weights length {got} does not match point count {expected}")]
    WeightLengthMismatch { got: usize, expected: usize },
    #[error("weights must be >= 0 with at least one positive entry")]
    BadWeights,
    #[error("no conversion between {from} and {to}")]
    UnknownUnitPair { from: Unit, to: Unit },
    #[error("tie group {group} mixes parameter kinds ({a} and {b})")]
    MixedTieKinds {
        group: usize,
        a: SlotField,
        b: SlotField,
    },
    #[error("tie group {group} references slot {slot} more than once or across groups")]
    OverlappingTieGroups { group: usize, slot: String },
    #[error("tie group {group} references a slot that does not exist: {slot}")]
    UnknownTieSlot { group: usize, slot: String },
    #[error("tie group {group} members carry different values ({a} vs {b}); \
             tied slots must agree before flattening")]
    InconsistentTieValues { group: usize, a: f64, b: f64 },
    #[error("parameter vector layout does not match the target dynamics")]
    LayoutMismatch,
}

/// One structural vibration mode: natural frequency (Hz), modal stiffness
/// (N/m) and viscous damping ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    natural_frequency_hz: f64,
    stiffness_n_per_m: f64,
    damping_ratio: f64,
}

impl Mode {
    pub fn new(
        natural_frequency_hz: f64,
        stiffness_n_per_m: f64,
        damping_ratio: f64,
    ) -> Result<Self, ModelError> {
        if !(natural_frequency_hz > 0.0) || !natural_frequency_hz.is_finite() {
            return Err(ModelError::BadNaturalFrequency(natural_frequency_hz));
        }
        if !(stiffness_n_per_m > 0.0) || !stiffness_n_per_m.is_finite() {
            return Err(ModelError::BadStiffness(stiffness_n_per_m));
        }
        if !(damping_ratio > 0.0 && damping_ratio < 1.0) {
            return Err(ModelError::BadDampingRatio(damping_ratio));
        }
        Ok(Self {
            natural_frequency_hz,
            stiffness_n_per_m,
            damping_ratio,
        })
    }

    pub fn natural_frequency_hz(&self) -> f64 {
        self.natural_frequency_hz
    }

    /// Natural frequency in rad/s.
    pub fn omega_n(&self) -> f64 {
        self.natural_frequency_hz * 2.0 * std::f64::consts::PI
    }

    pub fn stiffness_n_per_m(&self) -> f64 {
        self.stiffness_n_per_m
    }

    pub fn damping_ratio(&self) -> f64 {
        self.damping_ratio
    }
}

/// Modal parameters of the tool tip in the feed (x) and cross-feed (y)
/// directions. Each direction carries one or more modes sorted by
/// ascending natural frequency; that order fixes how parameter vectors
/// are laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalDynamics {
    x_modes: Vec<Mode>,
    y_modes: Vec<Mode>,
}

impl DirectionalDynamics {
    pub fn new(x_modes: Vec<Mode>, y_modes: Vec<Mode>) -> Result<Self, ModelError> {
        Self::check_direction(&x_modes, 'x')?;
        Self::check_direction(&y_modes, 'y')?;
        Ok(Self { x_modes, y_modes })
    }

    /// Single dominant mode in each direction.
    pub fn single(x: Mode, y: Mode) -> Self {
        Self {
            x_modes: vec![x],
            y_modes: vec![y],
        }
    }

    fn check_direction(modes: &[Mode], dir: char) -> Result<(), ModelError> {
        if modes.is_empty() {
            return Err(ModelError::EmptyModeList(dir));
        }
        for pair in modes.windows(2) {
            if pair[0].natural_frequency_hz >= pair[1].natural_frequency_hz {
                return Err(ModelError::UnsortedModes(dir));
            }
        }
        Ok(())
    }

    pub fn x_modes(&self) -> &[Mode] {
        &self.x_modes
    }

    pub fn y_modes(&self) -> &[Mode] {
        &self.y_modes
    }

    /// Smallest natural frequency across both directions, Hz.
    pub fn min_natural_frequency_hz(&self) -> f64 {
        self.x_modes
            .iter()
            .chain(&self.y_modes)
            .map(Mode::natural_frequency_hz)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest natural frequency across both directions, Hz.
    pub fn max_natural_frequency_hz(&self) -> f64 {
        self.x_modes
            .iter()
            .chain(&self.y_modes)
            .map(Mode::natural_frequency_hz)
            .fold(0.0, f64::max)
    }
}

/// Cutting parameters, fixed while fitting: force coefficients, flute
/// count, and radial immersion angles in degrees (0-180 is a full slot).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuttingParams {
    tangential_coefficient_n_mm2: f64,
    radial_ratio: f64,
    flute_count: u32,
    start_angle_deg: f64,
    exit_angle_deg: f64,
}

impl CuttingParams {
    pub fn new(
        tangential_coefficient_n_mm2: f64,
        radial_ratio: f64,
        flute_count: u32,
        start_angle_deg: f64,
        exit_angle_deg: f64,
    ) -> Result<Self, ModelError> {
        if !(tangential_coefficient_n_mm2 > 0.0) || !tangential_coefficient_n_mm2.is_finite() {
            return Err(ModelError::BadTangentialCoefficient(
                tangential_coefficient_n_mm2,
            ));
        }
        if !(radial_ratio > 0.0) || !radial_ratio.is_finite() {
            return Err(ModelError::BadRadialRatio(radial_ratio));
        }
        if flute_count < 1 {
            return Err(ModelError::BadFluteCount(flute_count));
        }
        if !(0.0 <= start_angle_deg && start_angle_deg < exit_angle_deg && exit_angle_deg <= 360.0)
        {
            return Err(ModelError::BadImmersionAngles(
                start_angle_deg,
                exit_angle_deg,
            ));
        }
        Ok(Self {
            tangential_coefficient_n_mm2,
            radial_ratio,
            flute_count,
            start_angle_deg,
            exit_angle_deg,
        })
    }

    pub fn tangential_coefficient_n_mm2(&self) -> f64 {
        self.tangential_coefficient_n_mm2
    }

    /// Tangential coefficient in N/m^2.
    pub fn tangential_coefficient_si(&self) -> f64 {
        self.tangential_coefficient_n_mm2 * 1e6
    }

    pub fn radial_ratio(&self) -> f64 {
        self.radial_ratio
    }

    pub fn flute_count(&self) -> u32 {
        self.flute_count
    }

    pub fn start_angle_deg(&self) -> f64 {
        self.start_angle_deg
    }

    pub fn exit_angle_deg(&self) -> f64 {
        self.exit_angle_deg
    }

    pub fn start_angle_rad(&self) -> f64 {
        self.start_angle_deg.to_radians()
    }

    pub fn exit_angle_rad(&self) -> f64 {
        self.exit_angle_deg.to_radians()
    }
}

/// A point on a stability boundary: spindle speed in rev/min, limiting
/// depth of cut in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub speed_rpm: f64,
    pub depth_mm: f64,
}

/// An ordered set of boundary records (experimental or sampled), with
/// optional per-point weights for the fitting objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySamples {
    points: Vec<BoundaryPoint>,
    weights: Option<Vec<f64>>,
}

impl BoundarySamples {
    pub fn new(points: Vec<BoundaryPoint>) -> Result<Self, ModelError> {
        Self::with_weights(points, None)
    }

    pub fn with_weights(
        points: Vec<BoundaryPoint>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::EmptyBoundary);
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.depth_mm > 0.0) || !p.depth_mm.is_finite() {
                return Err(ModelError::NonPositiveDepth(i, p.depth_mm));
            }
            if i > 0 && !(points[i - 1].speed_rpm < p.speed_rpm) {
                return Err(ModelError::NonIncreasingSpeeds(i));
            }
        }
        if let Some(w) = &weights {
            if w.len() != points.len() {
                return Err(ModelError::WeightLengthMismatch {
                    got: w.len(),
                    expected: points.len(),
                });
            }
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || !w.iter().any(|&x| x > 0.0) {
                return Err(ModelError::BadWeights);
            }
        }
        Ok(Self { points, weights })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self, ModelError> {
        Self::new(
            pairs
                .iter()
                .map(|&(speed_rpm, depth_mm)| BoundaryPoint { speed_rpm, depth_mm })
                .collect(),
        )
    }

    pub fn points(&self) -> &[BoundaryPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn speeds_rpm(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.speed_rpm).collect()
    }

    pub fn depths_mm(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.depth_mm).collect()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }
}

/// What a fit iteration did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IterationEvent {
    /// Plain Newton update.
    Step,
    /// Stall detected; a trial jump improved the objective and was kept.
    JumpAccepted,
    /// Stall detected; no trial jump improved the objective.
    JumpRejected,
    /// A multi-start guess was discarded after burn-in.
    RestartPruned,
}

impl IterationEvent {
    pub fn label(&self) -> &'static str {
        match self {
            IterationEvent::Step => "step",
            IterationEvent::JumpAccepted => "jump-accepted",
            IterationEvent::JumpRejected => "jump-rejected",
            IterationEvent::RestartPruned => "restart-pruned",
        }
    }
}

/// One row of a fit trajectory: the objective and parameters as evaluated
/// at the start of the iteration, plus the event the iteration produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub free_values: Vec<f64>,
    pub event: IterationEvent,
}

/// Why a fit stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    /// Objective fell below the configured threshold.
    Converged,
    /// Iteration budget exhausted.
    MaxIterations,
}

impl TerminationReason {
    pub fn label(&self) -> &'static str {
        match self {
            TerminationReason::Converged => "converged",
            TerminationReason::MaxIterations => "max-iterations",
        }
    }
}

/// Outcome of an inverse identification run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Best parameters seen over the surviving run.
    pub final_params: ParameterVector,
    /// Objective at `final_params`.
    pub final_objective: f64,
    /// Per-iteration trajectory of the surviving run, plus one
    /// `RestartPruned` record per discarded burn-in guess.
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub termination: TerminationReason,
}

impl FitReport {
    /// Number of genuine iterations (prune records excluded).
    pub fn iteration_count(&self) -> usize {
        self.history
            .iter()
            .filter(|r| r.event != IterationEvent::RestartPruned)
            .count()
    }
}
