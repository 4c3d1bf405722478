//! Inverse identification of in-process structural dynamics.
//!
//! A reference boundary (experimental records or synthetic samples) is
//! compared against the analytical boundary generated from guessed modal
//! parameters; the guess is updated by a multivariate Newton scheme on
//! the weighted mean-log-absolute-error objective. Multi-start burn-in,
//! stall-triggered trial jumps, and extra weight on boundary extrema keep
//! the iteration out of local minima.
//!
//! The optimizer works on engineering-scaled values (Hz, MN/m, damping
//! ratio) so the gradient components share a comparable magnitude; the
//! raw vectors at the API boundary stay in Hz, N/m, ratio.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    BoundarySamples, CuttingParams, FitReport, IterationEvent, IterationRecord, ParameterVector,
    SlotField, TerminationReason,
};
use crate::zoa::{build_sld, sample_at_speeds, SldSettings};

#[derive(Debug, Error)]
pub enum InverseError {
    #[error("candidate depth list length {got} does not match reference length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("weight list length {got} does not match reference length {expected}")]
    WeightLengthMismatch { expected: usize, got: usize },
    #[error("invalid fit options: {0}")]
    BadOptions(String),
    #[error("no initial guess produced a boundary covering the reference speeds: {0}")]
    Unfittable(String),
    #[error("objective became non-finite at iteration {iteration}: {detail}")]
    Numerical { iteration: usize, detail: String },
    #[error("objective evaluation failed: {0}")]
    Evaluation(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// How reference points are weighted in the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme {
    Uniform,
    /// Interior extrema of the reference boundary get `weight`, the rest 1,
    /// then everything is normalized to mean 1.
    CriticalPoints { weight: f64 },
}

/// Knobs for [`fit`]. `initial_guesses` must hold at least one vector;
/// all guesses must share one layout.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Update pace, in (0, 1].
    pub pace: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
    pub max_iterations: usize,
    /// Converged when the objective falls below this.
    pub objective_threshold: f64,
    /// Iterations without enough improvement before jumps are tried.
    pub stall_window: usize,
    /// Minimum relative improvement over the stall window.
    pub stall_improvement: f64,
    /// Relative size of trial jumps.
    pub jump_ratio: f64,
    pub initial_guesses: Vec<ParameterVector>,
    /// Burn-in iterations granted to every guess before all but the best
    /// are discarded.
    pub multistart_burn_in: usize,
    pub weight_scheme: WeightScheme,
    /// Envelope grid density used for boundary evaluation.
    pub grid_points: usize,
}

impl FitOptions {
    pub fn with_guesses(initial_guesses: Vec<ParameterVector>) -> Self {
        FitOptions {
            pace: 1.0,
            fd_step: 1e-4,
            max_iterations: 200,
            objective_threshold: 1e-3,
            stall_window: 8,
            stall_improvement: 0.01,
            jump_ratio: 0.05,
            initial_guesses,
            multistart_burn_in: 10,
            weight_scheme: WeightScheme::CriticalPoints { weight: 2.0 },
            grid_points: 2000,
        }
    }

    fn validate(&self) -> Result<(), InverseError> {
        let bad = |msg: &str| Err(InverseError::BadOptions(msg.to_string()));
        if !(self.pace > 0.0 && self.pace <= 1.0) {
            return bad("pace must lie in (0, 1]");
        }
        if !(self.fd_step > 0.0) {
            return bad("fd_step must be > 0");
        }
        if !(self.jump_ratio > 0.0) {
            return bad("jump_ratio must be > 0");
        }
        if !(self.objective_threshold >= 0.0) {
            return bad("objective_threshold must be >= 0");
        }
        if self.initial_guesses.is_empty() {
            return bad("at least one initial guess is required");
        }
        if self.max_iterations > 0 && self.multistart_burn_in >= self.max_iterations {
            return bad("multistart_burn_in must be smaller than max_iterations");
        }
        let m = self.initial_guesses[0].len();
        if self.initial_guesses.iter().any(|g| g.len() != m) {
            return bad("all initial guesses must share one layout");
        }
        if let WeightScheme::CriticalPoints { weight } = self.weight_scheme {
            if !(weight > 0.0) {
                return bad("critical-point weight must be > 0");
            }
        }
        Ok(())
    }
}

/// Weighted mean log absolute error between the reference depths and a
/// candidate depth list (mm). `weights`, when given, are normalized to
/// mean 1 so the uniform case reduces to the plain mean.
pub fn mlae(
    reference: &BoundarySamples,
    candidate_depths_mm: &[f64],
    weights: Option<&[f64]>,
) -> Result<f64, InverseError> {
    let n = reference.len();
    if candidate_depths_mm.len() != n {
        return Err(InverseError::LengthMismatch { expected: n, got: candidate_depths_mm.len() });
    }
    let scale = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(InverseError::WeightLengthMismatch { expected: n, got: w.len() });
            }
            let mean = w.iter().sum::<f64>() / n as f64;
            Some(1.0 / mean)
        }
        None => None,
    };
    let mut sum = 0.0;
    for (i, (p, &b)) in reference.points().iter().zip(candidate_depths_mm).enumerate() {
        let w = match (weights, scale) {
            (Some(w), Some(s)) => w[i] * s,
            _ => 1.0,
        };
        sum += w * (1.0 + (p.depth_mm - b).abs()).ln();
    }
    Ok(sum / n as f64)
}

/// Weights favouring the interior extrema of the reference boundary:
/// strict local minima/maxima of depth get `critical_weight`, everything
/// else 1, normalized to mean 1.
pub fn detect_critical_points(reference: &BoundarySamples, critical_weight: f64) -> Vec<f64> {
    let depths = reference.depths_mm();
    let n = depths.len();
    let mut w = vec![1.0; n];
    for i in 1..n.saturating_sub(1) {
        let valley = depths[i] < depths[i - 1] && depths[i] < depths[i + 1];
        let peak = depths[i] > depths[i - 1] && depths[i] > depths[i + 1];
        if valley || peak {
            w[i] = critical_weight;
        }
    }
    let mean = w.iter().sum::<f64>() / n as f64;
    for x in &mut w {
        *x /= mean;
    }
    w
}

/// Forward-difference gradient of `objective` with a relative step.
/// Tied parameters move jointly and occupy a single gradient slot. A
/// non-finite objective at a perturbed point shrinks the step tenfold, up
/// to three retries.
pub fn fd_sensitivity<F>(
    params: &ParameterVector,
    objective: F,
    fd_step: f64,
) -> Result<Vec<f64>, InverseError>
where
    F: Fn(&ParameterVector) -> Result<f64, InverseError> + Sync,
{
    let base = objective(params)?;
    fd_sensitivity_with_base(params, &objective, fd_step, base)
}

/// [`fd_sensitivity`] reusing an already-evaluated base objective.
pub fn fd_sensitivity_with_base<F>(
    params: &ParameterVector,
    objective: &F,
    fd_step: f64,
    base: f64,
) -> Result<Vec<f64>, InverseError>
where
    F: Fn(&ParameterVector) -> Result<f64, InverseError> + Sync,
{
    if !base.is_finite() {
        return Err(InverseError::Evaluation("base objective is not finite".into()));
    }
    let values = params.values().to_vec();
    let results: Vec<Result<f64, InverseError>> = (0..values.len())
        .into_par_iter()
        .map(|i| {
            let mut step = fd_step;
            for attempt in 0..4 {
                let mut v = values.clone();
                v[i] *= 1.0 + step;
                let f = params
                    .with_values(v)
                    .map_err(InverseError::from)
                    .and_then(|p| objective(&p));
                match f {
                    Ok(val) if val.is_finite() => {
                        return Ok((val - base) / (values[i] * step));
                    }
                    _ if attempt < 3 => step /= 10.0,
                    Ok(val) => {
                        return Err(InverseError::Evaluation(format!(
                            "objective non-finite ({val}) after step shrinking on parameter {i}"
                        )))
                    }
                    Err(e) => {
                        return Err(InverseError::Evaluation(format!(
                            "objective failed after step shrinking on parameter {i}: {e}"
                        )))
                    }
                }
            }
            unreachable!()
        })
        .collect();
    results.into_iter().collect()
}

/// Outcome of a Newton update.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Updated(Vec<f64>),
    /// Gradient vanished while the objective is still positive; the
    /// caller should try jumps instead of failing.
    ZeroGradient,
}

/// The update rule on raw value slices:
/// `v_i <- v_i - objective * s_i / ||s||^2 * pace`.
pub fn newton_step_values(
    values: &[f64],
    objective: f64,
    sensitivity: &[f64],
    pace: f64,
) -> StepOutcome {
    if objective == 0.0 {
        return StepOutcome::Updated(values.to_vec());
    }
    let norm_sq: f64 = sensitivity.iter().map(|s| s * s).sum();
    if norm_sq == 0.0 {
        return StepOutcome::ZeroGradient;
    }
    StepOutcome::Updated(
        values
            .iter()
            .zip(sensitivity)
            .map(|(v, s)| v - objective * s / norm_sq * pace)
            .collect(),
    )
}

/// [`newton_step_values`] on a parameter vector.
pub fn newton_step(
    params: &ParameterVector,
    objective: f64,
    sensitivity: &[f64],
    pace: f64,
) -> Result<Option<ParameterVector>, InverseError> {
    match newton_step_values(params.values(), objective, sensitivity, pace) {
        StepOutcome::Updated(values) => Ok(Some(params.with_values(values)?)),
        StepOutcome::ZeroGradient => Ok(None),
    }
}

/// Diverse initial guesses: each free value of `base` is scaled by
/// `1 + u` with `u` uniform in `[-spread, spread]`, seeded. Draws whose
/// dynamics violate the modal invariants are rejected and redrawn.
pub fn perturbed_guesses(
    base: &ParameterVector,
    count: usize,
    spread: f64,
    seed: u64,
) -> Result<Vec<ParameterVector>, InverseError> {
    if !(spread >= 0.0 && spread < 1.0) {
        return Err(InverseError::BadOptions("guess spread must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for g in 0..count {
        let mut accepted = None;
        for _ in 0..100 {
            let values: Vec<f64> = base
                .values()
                .iter()
                .map(|v| v * (1.0 + rng.gen_range(-spread..=spread)))
                .collect();
            if let Ok(candidate) = base.with_values(values) {
                if candidate.unflatten().is_ok() {
                    accepted = Some(candidate);
                    break;
                }
            }
        }
        match accepted {
            Some(c) => out.push(c),
            None => {
                return Err(InverseError::BadOptions(format!(
                    "could not draw a valid guess #{g} within 100 attempts"
                )))
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// fit internals
// ---------------------------------------------------------------------

struct FitContext<'a> {
    reference: &'a BoundarySamples,
    cutting: &'a CuttingParams,
    weights: Option<Vec<f64>>,
    scales: Vec<f64>,
    speed_range: (f64, f64),
    speeds: Vec<f64>,
    grid_points: usize,
}

impl FitContext<'_> {
    /// Objective at a parameter vector holding engineering-scaled values.
    fn evaluate(&self, scaled: &ParameterVector) -> Result<f64, InverseError> {
        let raw: Vec<f64> = scaled
            .values()
            .iter()
            .zip(&self.scales)
            .map(|(v, s)| v * s)
            .collect();
        let dynamics = scaled
            .with_values(raw)?
            .unflatten()
            .map_err(|e| InverseError::Evaluation(e.to_string()))?;
        let mut settings = SldSettings::covering(&dynamics, self.cutting, self.speed_range);
        settings.grid_points = self.grid_points;
        let curve = build_sld(&dynamics, self.cutting, self.speed_range, &settings)
            .map_err(|e| InverseError::Evaluation(e.to_string()))?;
        let samples = sample_at_speeds(&curve, &self.speeds)
            .map_err(|e| InverseError::Evaluation(e.to_string()))?;
        mlae(self.reference, &samples.depths_mm(), self.weights.as_deref())
    }

    fn clamp(&self, scaled: &ParameterVector, initial: &[f64]) -> ParameterVector {
        let values: Vec<f64> = scaled
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| match scaled.field_of(i) {
                SlotField::DampingRatio => v.clamp(1e-4, 0.5),
                SlotField::NaturalFrequency | SlotField::Stiffness => {
                    v.max(1e-6 * initial[i])
                }
            })
            .collect();
        scaled.with_values(values).expect("layout is unchanged")
    }
}

struct Run {
    params: ParameterVector, // scaled values
    objective: f64,
    initial_values: Vec<f64>,
    history: Vec<IterationRecord>,
    objectives: Vec<f64>,
    best: (f64, ParameterVector),
    last_jump: Option<usize>,
    next_iteration: usize,
    converged: bool,
}

impl Run {
    fn start(ctx: &FitContext<'_>, guess: &ParameterVector) -> Result<Run, InverseError> {
        let scaled_values: Vec<f64> = guess
            .values()
            .iter()
            .zip(&ctx.scales)
            .map(|(v, s)| v / s)
            .collect();
        let params = guess.with_values(scaled_values)?;
        let objective = ctx.evaluate(&params)?;
        if !objective.is_finite() {
            return Err(InverseError::Evaluation("initial objective non-finite".into()));
        }
        Ok(Run {
            initial_values: params.values().to_vec(),
            best: (objective, params.clone()),
            params,
            objective,
            history: Vec::new(),
            objectives: Vec::new(),
            last_jump: None,
            next_iteration: 0,
            converged: false,
        })
    }
}

fn record_values(params: &ParameterVector) -> Vec<f64> {
    params.values().to_vec()
}

fn run_iterations(
    ctx: &FitContext<'_>,
    run: &mut Run,
    until: usize,
    options: &FitOptions,
) -> Result<(), InverseError> {
    while run.next_iteration < until && !run.converged {
        let i = run.next_iteration;
        let f = run.objective;
        if f < run.best.0 {
            run.best = (f, run.params.clone());
        }
        if f < options.objective_threshold {
            run.history.push(IterationRecord {
                iteration: i,
                objective: f,
                free_values: record_values(&run.params),
                event: IterationEvent::Step,
            });
            run.objectives.push(f);
            run.converged = true;
            run.next_iteration += 1;
            return Ok(());
        }

        let gradient = fd_sensitivity_with_base(
            &run.params,
            &|p: &ParameterVector| ctx.evaluate(p),
            options.fd_step,
            f,
        )
        .map_err(|e| InverseError::Numerical { iteration: i, detail: e.to_string() })?;

        let newton = newton_step_values(run.params.values(), f, &gradient, options.pace);
        let (newton_params, zero_gradient) = match newton {
            StepOutcome::Updated(values) => (
                ctx.clamp(&run.params.with_values(values)?, &run.initial_values),
                false,
            ),
            StepOutcome::ZeroGradient => (run.params.clone(), true),
        };

        let window = options.stall_window;
        let stalled = zero_gradient
            || (window > 0
                && run.objectives.len() >= window
                && run.last_jump.map_or(true, |j| i - j >= window)
                && {
                    let past = run.objectives[run.objectives.len() - window];
                    past > 0.0 && (past - f) / past < options.stall_improvement
                });

        let mut event = IterationEvent::Step;
        let mut next: Option<(ParameterVector, f64)> = None;

        if stalled {
            run.last_jump = Some(i);
            let jump = try_jumps(ctx, &run.params, f, &run.initial_values, options)?;
            match jump {
                Some((p, fj)) => {
                    event = IterationEvent::JumpAccepted;
                    next = Some((p, fj));
                }
                None => {
                    event = IterationEvent::JumpRejected;
                }
            }
        }

        if next.is_none() {
            if zero_gradient {
                next = Some((run.params.clone(), f));
            } else {
                next = Some(advance(ctx, &run.params, newton_params, i)?);
            }
        }

        run.history.push(IterationRecord {
            iteration: i,
            objective: f,
            free_values: record_values(&run.params),
            event,
        });
        run.objectives.push(f);
        let (p_next, f_next) = next.expect("next state is always set");
        run.params = p_next;
        run.objective = f_next;
        run.next_iteration += 1;
    }
    if run.objective < run.best.0 {
        run.best = (run.objective, run.params.clone());
    }
    Ok(())
}

/// Evaluate the Newton candidate, halving the step toward the current
/// point while the objective stays non-finite.
fn advance(
    ctx: &FitContext<'_>,
    current: &ParameterVector,
    candidate: ParameterVector,
    iteration: usize,
) -> Result<(ParameterVector, f64), InverseError> {
    let mut trial = candidate;
    for _ in 0..7 {
        match ctx.evaluate(&trial) {
            Ok(f) if f.is_finite() => return Ok((trial, f)),
            _ => {
                let pulled: Vec<f64> = trial
                    .values()
                    .iter()
                    .zip(current.values())
                    .map(|(t, c)| 0.5 * (t + c))
                    .collect();
                trial = trial.with_values(pulled)?;
            }
        }
    }
    Err(InverseError::Numerical {
        iteration,
        detail: "objective stayed non-finite after halving the update step".into(),
    })
}

/// Trial jumps around `params`: each parameter alone by +/- the jump
/// ratio, then the joint combination of every individually improving
/// jump. Returns the best strictly improving candidate.
fn try_jumps(
    ctx: &FitContext<'_>,
    params: &ParameterVector,
    objective: f64,
    initial: &[f64],
    options: &FitOptions,
) -> Result<Option<(ParameterVector, f64)>, InverseError> {
    let m = params.len();
    let trials: Vec<(usize, f64)> = (0..m)
        .flat_map(|j| {
            [
                (j, 1.0 + options.jump_ratio),
                (j, 1.0 - options.jump_ratio),
            ]
        })
        .collect();
    let evaluated: Vec<Option<(usize, f64, ParameterVector, f64)>> = trials
        .par_iter()
        .map(|&(j, factor)| {
            let mut values = params.values().to_vec();
            values[j] *= factor;
            let p = ctx.clamp(&params.with_values(values).ok()?, initial);
            match ctx.evaluate(&p) {
                Ok(f) if f.is_finite() => Some((j, factor, p, f)),
                _ => None,
            }
        })
        .collect();

    let mut best: Option<(ParameterVector, f64)> = None;
    let mut improving: Vec<(usize, f64)> = Vec::new();
    for item in evaluated.into_iter().flatten() {
        let (j, factor, p, f) = item;
        if f < objective {
            improving.push((j, factor));
            if best.as_ref().map_or(true, |(_, fb)| f < *fb) {
                best = Some((p, f));
            }
        }
    }
    if improving.len() > 1 {
        let mut values = params.values().to_vec();
        for &(j, factor) in &improving {
            values[j] *= factor;
        }
        let p = ctx.clamp(&params.with_values(values)?, initial);
        if let Ok(f) = ctx.evaluate(&p) {
            if f.is_finite() && f < objective && best.as_ref().map_or(true, |(_, fb)| f < *fb) {
                best = Some((p, f));
            }
        }
    }
    Ok(best)
}

/// Identify structural dynamics parameters explaining `reference`.
///
/// Every guess runs a burn-in; the best survivor continues alone until
/// the objective threshold or the iteration budget is hit. The report
/// history carries one record per surviving iteration plus one pruned
/// record per discarded guess.
pub fn fit(
    reference: &BoundarySamples,
    cutting: &CuttingParams,
    options: &FitOptions,
) -> Result<FitReport, InverseError> {
    options.validate()?;

    let weights = match reference.weights() {
        Some(w) => {
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            Some(w.iter().map(|x| x / mean).collect())
        }
        None => match options.weight_scheme {
            WeightScheme::Uniform => None,
            WeightScheme::CriticalPoints { weight } => {
                Some(detect_critical_points(reference, weight))
            }
        },
    };

    let speeds = reference.speeds_rpm();
    let speed_range = (speeds[0] * 0.95, speeds[speeds.len() - 1] * 1.05);
    let ctx = FitContext {
        reference,
        cutting,
        weights,
        scales: options.initial_guesses[0].display_scales(),
        speed_range,
        speeds,
        grid_points: options.grid_points,
    };

    if options.max_iterations == 0 {
        return Ok(FitReport {
            final_params: options.initial_guesses[0].clone(),
            final_objective: f64::INFINITY,
            history: Vec::new(),
            converged: false,
            termination: TerminationReason::MaxIterations,
        });
    }

    // Burn-in phase over all guesses.
    let burn_in = options.multistart_burn_in.min(options.max_iterations);
    let mut runs: Vec<Run> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    for guess in &options.initial_guesses {
        match Run::start(&ctx, guess) {
            Ok(mut run) => {
                run_iterations(&ctx, &mut run, burn_in, options)?;
                if run.converged {
                    return Ok(finish(&ctx, run, Vec::new()));
                }
                runs.push(run);
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    if runs.is_empty() {
        return Err(InverseError::Unfittable(failures.join("; ")));
    }

    // Keep the best run, prune the rest.
    let survivor_idx = runs
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.objective.partial_cmp(&b.objective).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let mut pruned_records = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        if i != survivor_idx {
            pruned_records.push(IterationRecord {
                iteration: burn_in,
                objective: run.objective,
                free_values: record_values(&run.params),
                event: IterationEvent::RestartPruned,
            });
        }
    }
    let mut survivor = runs.swap_remove(survivor_idx);
    run_iterations(&ctx, &mut survivor, options.max_iterations, options)?;
    Ok(finish(&ctx, survivor, pruned_records))
}

fn finish(ctx: &FitContext<'_>, mut run: Run, pruned: Vec<IterationRecord>) -> FitReport {
    if run.objective < run.best.0 {
        run.best = (run.objective, run.params.clone());
    }
    let burn_len = run
        .history
        .iter()
        .position(|r| r.iteration >= pruned.first().map_or(usize::MAX, |p| p.iteration))
        .unwrap_or(run.history.len());
    let mut history = Vec::with_capacity(run.history.len() + pruned.len());
    history.extend_from_slice(&run.history[..burn_len]);
    history.extend(pruned);
    history.extend_from_slice(&run.history[burn_len..]);

    let raw: Vec<f64> = run
        .best
        .1
        .values()
        .iter()
        .zip(&ctx.scales)
        .map(|(v, s)| v * s)
        .collect();
    let final_params = run
        .best
        .1
        .with_values(raw)
        .expect("layout is unchanged");
    FitReport {
        final_params,
        final_objective: run.best.0,
        history,
        converged: run.converged,
        termination: if run.converged {
            TerminationReason::Converged
        } else {
            TerminationReason::MaxIterations
        },
    }
}
