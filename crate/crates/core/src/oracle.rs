//! Brute-force stability verdicts, independent of the lobe bookkeeping.
//!
//! For a fixed spindle speed and depth the closed-loop characteristic
//! function D(iw) = a0 L^2 + a1 L + 1 is evaluated along a chatter
//! frequency scan, where L is the regenerative gain at that depth and
//! tooth period. Counting encirclements of the origin by the D locus
//! decides stability; bisection on depth then recovers the limit. This
//! path shares `frf` and `directional_factors` with the analytical
//! engine but none of its eigenvalue/phase bookkeeping, so agreement
//! between the two is a genuine cross-check.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::model::{tooth_period, CuttingParams, DirectionalDynamics};
use crate::zoa::{directional_factors, frf, FreqScan};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("frequency scan too coarse near {omega} rad/s: phase jump {jump} > pi after refinement")]
    Resolution { omega: f64, jump: f64 },
    #[error("bracket ({lo}, {hi}) mm does not straddle the stability limit")]
    Bracket { lo: f64, hi: f64 },
    #[error("invalid bisection tolerance {0}")]
    BadTolerance(f64),
    #[error("depth must be >= 0 mm, got {0}")]
    NegativeDepth(f64),
}

/// A wide scan for encirclement counting: from near zero up to well past
/// the highest mode, so the locus starts and ends close to +1.
pub fn oracle_scan(dynamics: &DirectionalDynamics) -> FreqScan {
    FreqScan {
        omega_min: 1.0,
        omega_max: 2.5 * dynamics.max_natural_frequency_hz() * 2.0 * PI,
        steps: 3000,
    }
}

struct CharacteristicFn<'a> {
    dynamics: &'a DirectionalDynamics,
    factors: (f64, f64, f64, f64),
    gain: f64,
    period: f64,
}

impl CharacteristicFn<'_> {
    fn eval(&self, omega: f64) -> Complex64 {
        let fx = frf(self.dynamics.x_modes(), omega);
        let fy = frf(self.dynamics.y_modes(), omega);
        let (axx, axy, ayx, ayy) = self.factors;
        let a0 = fx * fy * (axx * ayy - axy * ayx);
        let a1 = fx * axx + fy * ayy;
        let delay = Complex64::new(0.0, -omega * self.period).exp();
        let lambda = -self.gain * (Complex64::new(1.0, 0.0) - delay);
        a0 * lambda * lambda + a1 * lambda + Complex64::new(1.0, 0.0)
    }
}

/// Principal angle from `a` to `b`, in (-pi, pi].
fn principal_angle(a: Complex64, b: Complex64) -> f64 {
    (b * a.conj()).arg()
}

const MAX_REFINE_DEPTH: u32 = 28;
const SMOOTH_STEP: f64 = PI / 2.0;

fn winding_segment(
    f: &CharacteristicFn<'_>,
    omega_a: f64,
    d_a: Complex64,
    omega_b: f64,
    d_b: Complex64,
    depth: u32,
) -> Result<f64, OracleError> {
    let jump = principal_angle(d_a, d_b);
    if jump.abs() <= SMOOTH_STEP {
        return Ok(jump);
    }
    if depth == 0 {
        if jump.abs() > PI - 1e-9 {
            return Err(OracleError::Resolution { omega: omega_a, jump: jump.abs() });
        }
        return Ok(jump);
    }
    let omega_m = 0.5 * (omega_a + omega_b);
    let d_m = f.eval(omega_m);
    Ok(winding_segment(f, omega_a, d_a, omega_m, d_m, depth - 1)?
        + winding_segment(f, omega_m, d_m, omega_b, d_b, depth - 1)?)
}

/// Decide whether a cut at `speed_rpm` and `depth_mm` is chatter-free.
///
/// Scans the characteristic locus over `freq_scan`, refining locally
/// wherever the phase step exceeds pi/2; a jump that still exceeds pi at
/// the maximum refinement depth is reported as a resolution error.
pub fn is_stable(
    dynamics: &DirectionalDynamics,
    cutting: &CuttingParams,
    speed_rpm: f64,
    depth_mm: f64,
    freq_scan: &FreqScan,
) -> Result<bool, OracleError> {
    if depth_mm < 0.0 {
        return Err(OracleError::NegativeDepth(depth_mm));
    }
    if depth_mm == 0.0 {
        return Ok(true);
    }
    let factors = directional_factors(
        cutting.radial_ratio(),
        cutting.start_angle_rad(),
        cutting.exit_angle_rad(),
    );
    let f = CharacteristicFn {
        dynamics,
        factors,
        gain: cutting.flute_count() as f64 * cutting.tangential_coefficient_si() * depth_mm * 1e-3
            / (4.0 * PI),
        period: tooth_period(speed_rpm, cutting.flute_count()),
    };

    let omegas: Vec<f64> = freq_scan.omegas().collect();
    let mut total = 0.0;
    let mut prev_omega = omegas[0];
    let mut prev_d = f.eval(prev_omega);
    for &omega in &omegas[1..] {
        let d = f.eval(omega);
        total += winding_segment(&f, prev_omega, prev_d, omega, d, MAX_REFINE_DEPTH)?;
        prev_omega = omega;
        prev_d = d;
    }
    // One conjugate pair of unstable roots adds a full turn over the
    // whole axis, i.e. |total| ~ pi over positive frequencies alone.
    Ok(total.abs() < PI / 2.0)
}

fn bisect_with<F>(
    bracket: (f64, f64),
    tol_mm: f64,
    mut stable: F,
) -> Result<f64, OracleError>
where
    F: FnMut(f64) -> Result<bool, OracleError>,
{
    if !(tol_mm > 0.0) {
        return Err(OracleError::BadTolerance(tol_mm));
    }
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) || !stable(lo)? || stable(hi)? {
        return Err(OracleError::Bracket { lo, hi });
    }
    while hi - lo > tol_mm {
        let mid = 0.5 * (lo + hi);
        if stable(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisect the limiting depth of cut at one spindle speed. The bracket
/// must straddle the limit: `lo` stable, `hi` unstable. Default
/// tolerance is 1e-4 mm.
pub fn depth_limit_bisect(
    dynamics: &DirectionalDynamics,
    cutting: &CuttingParams,
    speed_rpm: f64,
    bracket: (f64, f64),
    tol_mm: f64,
    freq_scan: &FreqScan,
) -> Result<f64, OracleError> {
    bisect_with(bracket, tol_mm, |depth| {
        is_stable(dynamics, cutting, speed_rpm, depth, freq_scan)
    })
}

/// Bisect with an automatically grown bracket, starting from a hint for
/// the unstable side. Convenience for validation sweeps.
pub fn depth_limit_auto(
    dynamics: &DirectionalDynamics,
    cutting: &CuttingParams,
    speed_rpm: f64,
    hi_hint_mm: f64,
    tol_mm: f64,
    freq_scan: &FreqScan,
) -> Result<f64, OracleError> {
    let mut hi = hi_hint_mm.max(tol_mm);
    let mut grow = 0;
    while is_stable(dynamics, cutting, speed_rpm, hi, freq_scan)? {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(OracleError::Bracket { lo: 0.0, hi });
        }
    }
    depth_limit_bisect(dynamics, cutting, speed_rpm, (0.0, hi), tol_mm, freq_scan)
}
