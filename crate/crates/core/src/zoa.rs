//! Zero-order frequency-domain stability lobes.
//!
//! The boundary is generated analytically: for each candidate chatter
//! frequency the oriented transfer function yields a quadratic eigenvalue
//! problem; each root with a negative real part maps to one limiting
//! depth of cut and, per lobe number, one spindle speed. Sweeping the
//! chatter frequency traces the lobe branches, and their pointwise
//! minimum over a uniform speed grid is the stability boundary.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{BoundaryPoint, BoundarySamples, CuttingParams, DirectionalDynamics, Mode};

#[derive(Debug, Error)]
pub enum ZoaError {
    #[error("engagement is degenerate: both characteristic coefficients vanish")]
    DegenerateEngagement,
    #[error("frequency scan [{omega_min}, {omega_max}] rad/s must be increasing with >= 2 steps and cover every natural frequency")]
    InvalidFreqScan { omega_min: f64, omega_max: f64 },
    #[error("speed range ({0}, {1}) rev/min is invalid")]
    InvalidSpeedRange(f64, f64),
    #[error("no lobe branch intersects the requested speed range")]
    EmptyCurve,
    #[error("requested speeds outside the boundary's range: {0:?}")]
    SpeedsOutOfRange(Vec<f64>),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Chatter-frequency scan: `steps` evenly spaced frequencies over
/// [`omega_min`, `omega_max`] rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqScan {
    pub omega_min: f64,
    pub omega_max: f64,
    pub steps: usize,
}

impl FreqScan {
    /// Default band around the modal frequencies: [0.8 min fn, 1.6 max fn],
    /// 2000 steps.
    pub fn around(dynamics: &DirectionalDynamics) -> Self {
        let lo = 0.8 * dynamics.min_natural_frequency_hz() * 2.0 * PI;
        let hi = 1.6 * dynamics.max_natural_frequency_hz() * 2.0 * PI;
        FreqScan { omega_min: lo, omega_max: hi, steps: 2000 }
    }

    pub fn omegas(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.steps;
        let (lo, hi) = (self.omega_min, self.omega_max);
        (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
    }

    fn validate(&self, dynamics: &DirectionalDynamics) -> Result<(), ZoaError> {
        let covers = self.omega_min <= dynamics.min_natural_frequency_hz() * 2.0 * PI
            && self.omega_max >= dynamics.max_natural_frequency_hz() * 2.0 * PI;
        if !(self.omega_min >= 0.0 && self.omega_min < self.omega_max && self.steps >= 2 && covers)
        {
            return Err(ZoaError::InvalidFreqScan {
                omega_min: self.omega_min,
                omega_max: self.omega_max,
            });
        }
        Ok(())
    }
}

/// Knobs for [`build_sld`]: chatter-frequency scan, lobe count, and the
/// density of the uniform speed grid carrying the envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct SldSettings {
    pub freq_scan: FreqScan,
    pub max_lobes: usize,
    pub grid_points: usize,
}

impl SldSettings {
    pub fn for_dynamics(dynamics: &DirectionalDynamics) -> Self {
        SldSettings {
            freq_scan: FreqScan::around(dynamics),
            max_lobes: 10,
            grid_points: 2000,
        }
    }

    /// Like [`Self::for_dynamics`], but with the lobe count raised until
    /// the slowest requested speed is reachable from the highest scanned
    /// chatter frequency.
    pub fn covering(
        dynamics: &DirectionalDynamics,
        cutting: &CuttingParams,
        speed_range: (f64, f64),
    ) -> Self {
        let mut s = Self::for_dynamics(dynamics);
        let t_max = 60.0 / (cutting.flute_count() as f64 * speed_range.0.max(1.0));
        let k_needed = (s.freq_scan.omega_max * t_max / (2.0 * PI)).ceil() as usize + 1;
        s.max_lobes = s.max_lobes.max(k_needed.min(200));
        s
    }
}

/// One point on a lobe branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LobePoint {
    pub speed_rpm: f64,
    pub depth_mm: f64,
    /// Chatter frequency, rad/s.
    pub chatter_omega: f64,
    pub lobe_index: usize,
}

/// A parametric lobe branch: one eigenvalue root, one lobe number,
/// points ordered by scan frequency. `scan_indices` records which scan
/// step produced each point so interpolation never bridges gaps where
/// the root's real part turned positive.
#[derive(Debug, Clone, PartialEq)]
pub struct LobeBranch {
    pub root_index: usize,
    pub lobe_index: usize,
    pub points: Vec<LobePoint>,
    scan_indices: Vec<usize>,
}

/// A stability lobe diagram: the raw branches for diagnostics plus the
/// envelope (pointwise minimum depth) on a uniform speed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SldCurve {
    pub branches: Vec<LobeBranch>,
    envelope: BoundarySamples,
    speed_range: (f64, f64),
}

impl SldCurve {
    pub fn envelope(&self) -> &BoundarySamples {
        &self.envelope
    }

    pub fn speed_range(&self) -> (f64, f64) {
        self.speed_range
    }
}

/// Tool-tip frequency response at `omega` rad/s: the modal sum
/// sum_j (wn_j^2 / k_j) / (wn_j^2 - w^2 + 2 i xi_j wn_j w), in m/N.
pub fn frf(modes: &[Mode], omega: f64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for m in modes {
        let wn = m.omega_n();
        let num = wn * wn / m.stiffness_n_per_m();
        let den = Complex64::new(
            wn * wn - omega * omega,
            2.0 * m.damping_ratio() * wn * omega,
        );
        sum += num / den;
    }
    sum
}

/// Averaged directional milling factors (axx, axy, ayx, ayy) for a cut
/// between `start` and `exit` (radians), with radial-to-tangential force
/// ratio `radial_ratio`.
pub fn directional_factors(radial_ratio: f64, start: f64, exit: f64) -> (f64, f64, f64, f64) {
    let kr = radial_ratio;
    let eval = |phi: f64| {
        let (s2, c2) = (2.0 * phi).sin_cos();
        (
            0.5 * (c2 - 2.0 * kr * phi + kr * s2),
            0.5 * (-s2 - 2.0 * phi + kr * c2),
            0.5 * (-s2 + 2.0 * phi + kr * c2),
            0.5 * (-c2 - 2.0 * kr * phi - kr * s2),
        )
    };
    let (xx_e, xy_e, yx_e, yy_e) = eval(exit);
    let (xx_s, xy_s, yx_s, yy_s) = eval(start);
    (xx_e - xx_s, xy_e - xy_s, yx_e - yx_s, yy_e - yy_s)
}

/// Roots of a0 L^2 + a1 L + 1 = 0 where a0 = Fxx Fyy (axx ayy - axy ayx)
/// and a1 = axx Fxx + ayy Fyy. A vanishing quadratic coefficient leaves a
/// single root.
pub fn characteristic_eigenvalues(
    frf_x: Complex64,
    frf_y: Complex64,
    factors: (f64, f64, f64, f64),
) -> Result<(Complex64, Option<Complex64>), ZoaError> {
    let (axx, axy, ayx, ayy) = factors;
    let a0 = frf_x * frf_y * (axx * ayy - axy * ayx);
    let a1 = frf_x * axx + frf_y * ayy;
    let zero = Complex64::new(0.0, 0.0);
    if a0 == zero && a1 == zero {
        return Err(ZoaError::DegenerateEngagement);
    }
    if a0 == zero {
        return Ok((-Complex64::new(1.0, 0.0) / a1, None));
    }
    // Stable quadratic: pick the larger-magnitude numerator, recover the
    // sibling root from the product L1 L2 = 1/a0.
    let disc = (a1 * a1 - 4.0 * a0).sqrt();
    let u = if (a1 + disc).norm_sqr() >= (a1 - disc).norm_sqr() {
        -(a1 + disc) / 2.0
    } else {
        -(a1 - disc) / 2.0
    };
    if u == zero {
        // a1 = 0 and disc = 0: double root of a0 L^2 + 1 with a0 != 0
        let r = (-1.0 / a0).sqrt();
        return Ok((r, Some(-r)));
    }
    Ok((u / a0, Some(1.0 / u)))
}

/// Map one eigenvalue at one chatter frequency and lobe number to a
/// boundary point. Only roots with a negative real part yield a positive
/// depth; anything else is rejected.
pub fn lobe_point(
    lambda: Complex64,
    chatter_omega: f64,
    lobe_index: usize,
    cutting: &CuttingParams,
) -> Option<LobePoint> {
    if !(lambda.re < 0.0) {
        return None;
    }
    let kappa = lambda.im / lambda.re;
    let depth_m = -(2.0 * PI * lambda.re / (cutting.flute_count() as f64
        * cutting.tangential_coefficient_si()))
        * (1.0 + kappa * kappa);
    let psi = kappa.atan();
    let eps = PI - 2.0 * psi;
    let period = (eps + 2.0 * PI * lobe_index as f64) / chatter_omega;
    let speed_rpm = 60.0 / (cutting.flute_count() as f64 * period);
    if !depth_m.is_finite() || !speed_rpm.is_finite() {
        return None;
    }
    Some(LobePoint {
        speed_rpm,
        depth_mm: depth_m * 1e3,
        chatter_omega,
        lobe_index,
    })
}

/// Build the stability lobe diagram for `dynamics` and `cutting` over
/// `speed_range` rev/min.
pub fn build_sld(
    dynamics: &DirectionalDynamics,
    cutting: &CuttingParams,
    speed_range: (f64, f64),
    settings: &SldSettings,
) -> Result<SldCurve, ZoaError> {
    settings.freq_scan.validate(dynamics)?;
    let (speed_lo, speed_hi) = speed_range;
    if !(speed_lo > 0.0 && speed_lo < speed_hi) {
        return Err(ZoaError::InvalidSpeedRange(speed_lo, speed_hi));
    }
    let grid_points = settings.grid_points.max(2);

    let factors = directional_factors(
        cutting.radial_ratio(),
        cutting.start_angle_rad(),
        cutting.exit_angle_rad(),
    );

    // Eigenvalues per scan frequency, in scan order.
    let omegas: Vec<f64> = settings.freq_scan.omegas().collect();
    let mut roots: Vec<(f64, [Option<Complex64>; 2])> = omegas
        .par_iter()
        .map(|&omega| {
            let fx = frf(dynamics.x_modes(), omega);
            let fy = frf(dynamics.y_modes(), omega);
            match characteristic_eigenvalues(fx, fy, factors) {
                Ok((l0, l1)) => (omega, [Some(l0), l1]),
                Err(_) => (omega, [None, None]),
            }
        })
        .collect();

    // Keep each root family continuous along the scan: pair the current
    // roots with the previous step's by nearest distance, otherwise branch
    // polylines jump between families and corrupt the envelope.
    let mut prev: Option<[Complex64; 2]> = None;
    for (_, pair) in roots.iter_mut() {
        if let [Some(c0), Some(c1)] = *pair {
            match prev {
                Some([p0, p1]) => {
                    let keep = (c0 - p0).norm_sqr() + (c1 - p1).norm_sqr();
                    let swap = (c0 - p1).norm_sqr() + (c1 - p0).norm_sqr();
                    if swap < keep {
                        pair.swap(0, 1);
                    }
                }
                None => {
                    // scale-stable initial ordering
                    if (c0.re, c0.im) > (c1.re, c1.im) {
                        pair.swap(0, 1);
                    }
                }
            }
            prev = Some([pair[0].unwrap(), pair[1].unwrap()]);
        } else {
            prev = None;
        }
    }

    // Group boundary points into branches keyed by (root, lobe index).
    let mut branches: Vec<LobeBranch> = Vec::new();
    let mut branch_of = std::collections::HashMap::new();
    for (scan_idx, (omega, pair)) in roots.iter().enumerate() {
        for (root_index, lambda) in pair.iter().enumerate() {
            let Some(lambda) = lambda else { continue };
            for lobe_index in 0..settings.max_lobes {
                let Some(point) = lobe_point(*lambda, *omega, lobe_index, cutting) else {
                    continue;
                };
                let key = (root_index, lobe_index);
                let idx = *branch_of.entry(key).or_insert_with(|| {
                    branches.push(LobeBranch {
                        root_index,
                        lobe_index,
                        points: Vec::new(),
                        scan_indices: Vec::new(),
                    });
                    branches.len() - 1
                });
                branches[idx].points.push(point);
                branches[idx].scan_indices.push(scan_idx);
            }
        }
    }

    // Pointwise minimum over every branch segment, on a uniform grid.
    let grid_step = (speed_hi - speed_lo) / (grid_points - 1) as f64;
    let grid_speed = |i: usize| speed_lo + grid_step * i as f64;
    let mut depths = vec![f64::INFINITY; grid_points];
    for branch in &branches {
        for w in 0..branch.points.len().saturating_sub(1) {
            // skip pairs that are not adjacent in the scan (sign-change gap)
            if branch.scan_indices[w + 1] != branch.scan_indices[w] + 1 {
                continue;
            }
            let (a, b) = (&branch.points[w], &branch.points[w + 1]);
            let (n_lo, n_hi, d_lo, d_hi) = if a.speed_rpm <= b.speed_rpm {
                (a.speed_rpm, b.speed_rpm, a.depth_mm, b.depth_mm)
            } else {
                (b.speed_rpm, a.speed_rpm, b.depth_mm, a.depth_mm)
            };
            if n_hi < speed_lo || n_lo > speed_hi {
                continue;
            }
            let i_start = ((n_lo - speed_lo) / grid_step).ceil().max(0.0) as usize;
            let i_end = (((n_hi - speed_lo) / grid_step).floor() as usize).min(grid_points - 1);
            for i in i_start..=i_end {
                let s = grid_speed(i);
                let depth = if n_hi > n_lo {
                    d_lo + (d_hi - d_lo) * (s - n_lo) / (n_hi - n_lo)
                } else {
                    d_lo.min(d_hi)
                };
                if depth < depths[i] {
                    depths[i] = depth;
                }
            }
        }
    }

    let covered: Vec<BoundaryPoint> = depths
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_finite())
        .map(|(i, &d)| BoundaryPoint { speed_rpm: grid_speed(i), depth_mm: d })
        .collect();
    if covered.is_empty() {
        return Err(ZoaError::EmptyCurve);
    }
    let envelope = BoundarySamples::new(covered)?;
    Ok(SldCurve {
        branches,
        envelope,
        speed_range,
    })
}

/// Sample the envelope at the requested speeds by linear interpolation
/// on the envelope grid. Speeds outside the covered range are reported
/// together in one error.
pub fn sample_at_speeds(curve: &SldCurve, speeds_rpm: &[f64]) -> Result<BoundarySamples, ZoaError> {
    let env = curve.envelope.points();
    let lo = env[0].speed_rpm;
    let hi = env[env.len() - 1].speed_rpm;
    let offenders: Vec<f64> = speeds_rpm
        .iter()
        .copied()
        .filter(|&s| s < lo || s > hi)
        .collect();
    if !offenders.is_empty() {
        return Err(ZoaError::SpeedsOutOfRange(offenders));
    }
    let mut out = Vec::with_capacity(speeds_rpm.len());
    for &s in speeds_rpm {
        let idx = env.partition_point(|p| p.speed_rpm < s);
        let depth = if idx < env.len() && env[idx].speed_rpm == s {
            env[idx].depth_mm
        } else {
            let (a, b) = (&env[idx - 1], &env[idx]);
            a.depth_mm + (b.depth_mm - a.depth_mm) * (s - a.speed_rpm) / (b.speed_rpm - a.speed_rpm)
        };
        out.push(BoundaryPoint { speed_rpm: s, depth_mm: depth });
    }
    Ok(BoundarySamples::new(out)?)
}

/// Evenly spaced speeds over an inclusive range.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{flatten, TieSpec};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn ex1() -> (DirectionalDynamics, CuttingParams) {
        let m = Mode::new(903.0, 12.53e6, 0.03).unwrap();
        (
            DirectionalDynamics::single(m, m),
            CuttingParams::new(556.31, 0.404, 2, 0.0, 180.0).unwrap(),
        )
    }

    fn ex3_cutting() -> CuttingParams {
        CuttingParams::new(2173.0, 0.268, 3, 126.9, 180.0).unwrap()
    }

    #[test]
    fn frf_static_limit_is_compliance_sum() {
        let m1 = Mode::new(903.0, 12.53e6, 0.03).unwrap();
        let m2 = Mode::new(1400.0, 8.0e6, 0.05).unwrap();
        let phi = frf(&[m1, m2], 0.0);
        assert_relative_eq!(phi.re, 1.0 / 12.53e6 + 1.0 / 8.0e6, max_relative = 1e-14);
        assert_abs_diff_eq!(phi.im, 0.0);
    }

    #[test]
    fn frf_resonance_is_purely_imaginary() {
        let m = Mode::new(903.0, 12.53e6, 0.03).unwrap();
        let phi = frf(&[m], m.omega_n());
        assert_abs_diff_eq!(phi.re, 0.0, epsilon = 1e-20);
        assert_relative_eq!(phi.im, -1.0 / (2.0 * 0.03 * 12.53e6), max_relative = 1e-12);
        assert_relative_eq!(phi.norm(), 1.0 / (2.0 * 0.03 * 12.53e6), max_relative = 1e-12);
    }

    #[test]
    fn frf_matches_multiprecision_evaluation() {
        // fn=903 Hz, k=12.53 MN/m, xi=0.03 at omega = 2*pi*800, evaluated
        // with 50-digit arithmetic and frozen here.
        let m = Mode::new(903.0, 12.53e6, 0.03).unwrap();
        let phi = frf(&[m], 2.0 * PI * 800.0);
        assert_relative_eq!(phi.re, 3.496493796988598372495e-7, max_relative = 1e-14);
        assert_relative_eq!(phi.im, -8.639923101817683691112e-8, max_relative = 1e-14);
    }

    #[test]
    fn slot_factors_match_closed_form() {
        let kr = 0.404;
        let (axx, axy, ayx, ayy) = directional_factors(kr, 0.0, PI);
        assert_relative_eq!(axx, -PI * kr, max_relative = 1e-14);
        assert_relative_eq!(axy, -PI, max_relative = 1e-14);
        assert_relative_eq!(ayx, PI, max_relative = 1e-14);
        assert_relative_eq!(ayy, -PI * kr, max_relative = 1e-14);
    }

    #[test]
    fn empty_engagement_gives_zero_factors() {
        let (axx, axy, ayx, ayy) = directional_factors(0.3, 1.2, 1.2);
        assert_abs_diff_eq!(axx, 0.0);
        assert_abs_diff_eq!(axy, 0.0);
        assert_abs_diff_eq!(ayx, 0.0);
        assert_abs_diff_eq!(ayy, 0.0);
    }

    /// Adaptive Simpson integration of the factor derivatives over the
    /// engagement arc, used as the independent quadrature oracle.
    fn simpson_factors(kr: f64, start: f64, exit: f64) -> (f64, f64, f64, f64) {
        fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, eps: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() < 15.0 * eps {
                left + right + (left + right - whole) / 15.0
            } else {
                simpson(f, a, m, fa, flm, fm, eps / 2.0, depth - 1)
                    + simpson(f, m, b, fm, frm, fb, eps / 2.0, depth - 1)
            }
        }
        let integrate = |f: &dyn Fn(f64) -> f64| {
            let m = 0.5 * (start + exit);
            simpson(&f, start, exit, f(start), f(m), f(exit), 1e-13, 40)
        };
        let dxx = |p: f64| -(2.0 * p).sin() - kr + kr * (2.0 * p).cos();
        let dxy = |p: f64| -(2.0 * p).cos() - 1.0 - kr * (2.0 * p).sin();
        let dyx = |p: f64| -(2.0 * p).cos() + 1.0 - kr * (2.0 * p).sin();
        let dyy = |p: f64| (2.0 * p).sin() - kr - kr * (2.0 * p).cos();
        (integrate(&dxx), integrate(&dxy), integrate(&dyx), integrate(&dyy))
    }

    #[test]
    fn partial_immersion_factors_match_quadrature_oracle() {
        let c = ex3_cutting();
        let (axx, axy, ayx, ayy) =
            directional_factors(c.radial_ratio(), c.start_angle_rad(), c.exit_angle_rad());
        let (qxx, qxy, qyx, qyy) =
            simpson_factors(c.radial_ratio(), c.start_angle_rad(), c.exit_angle_rad());
        assert_relative_eq!(axx, qxx, max_relative = 1e-10);
        assert_relative_eq!(axy, qxy, max_relative = 1e-10);
        assert_relative_eq!(ayx, qyx, max_relative = 1e-10);
        assert_relative_eq!(ayy, qyy, max_relative = 1e-10);
        // 50-digit closed-form evaluations, frozen
        assert_relative_eq!(axx, 0.5198005917075159441085, max_relative = 1e-13);
        assert_relative_eq!(axy, -1.235531867438203821474, max_relative = 1e-13);
        assert_relative_eq!(ayx, 0.6180077981797741892188, max_relative = 1e-13);
        assert_relative_eq!(ayy, -1.016549222093134050974, max_relative = 1e-13);
    }

    #[test]
    fn eigenvalues_linear_degenerate_case() {
        // a0 = 0 requires a zero engagement determinant; synthesize it by
        // calling with factors whose determinant vanishes: axx=2, others 0
        // with frf_y = 0 is not constructible, so drive the linear branch
        // directly through factors (0-determinant) and unit FRFs.
        let one = Complex64::new(1.0, 0.0);
        // axx ayy - axy ayx = 0, a1 = 2
        let (l0, l1) = characteristic_eigenvalues(one, one, (2.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(l1.is_none());
        assert_relative_eq!(l0.re, -0.5, max_relative = 1e-15);
        assert_abs_diff_eq!(l0.im, 0.0);
    }

    #[test]
    fn eigenvalues_pure_quadratic_case() {
        let one = Complex64::new(1.0, 0.0);
        // a0 = 1: axx ayy - axy ayx = 1 via axy = -1, ayx = 1; a1 = 0
        let (l0, l1) = characteristic_eigenvalues(one, one, (0.0, -1.0, 1.0, 0.0)).unwrap();
        let l1 = l1.unwrap();
        assert_abs_diff_eq!(l0.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l1.re, 0.0, epsilon = 1e-15);
        let (hi, lo) = if l0.im > l1.im { (l0, l1) } else { (l1, l0) };
        assert_relative_eq!(hi.im, 1.0, max_relative = 1e-15);
        assert_relative_eq!(lo.im, -1.0, max_relative = 1e-15);
    }

    #[test]
    fn eigenvalues_degenerate_engagement_rejected() {
        let one = Complex64::new(1.0, 0.0);
        assert!(matches!(
            characteristic_eigenvalues(one, one, (0.0, 0.0, 0.0, 0.0)),
            Err(ZoaError::DegenerateEngagement)
        ));
    }

    #[test]
    fn eigenvalues_match_multiprecision_solve() {
        // Ex.1 at omega_c = 2*pi*920: roots of the characteristic
        // quadratic solved at 50 digits and frozen here.
        let (d, c) = ex1();
        let omega = 2.0 * PI * 920.0;
        let fx = frf(d.x_modes(), omega);
        let fy = frf(d.y_modes(), omega);
        let factors = directional_factors(c.radial_ratio(), c.start_angle_rad(), c.exit_angle_rad());
        let (l0, l1) = characteristic_eigenvalues(fx, fy, factors).unwrap();
        let l1 = l1.unwrap();
        let expect = [
            Complex64::new(-262248.4742071730738143, -45638.38242914532674679),
            Complex64::new(156952.3753440682464711, 214995.5256478468201421),
        ];
        // order-insensitive match
        let (m0, m1) = if (l0 - expect[0]).norm() < (l0 - expect[1]).norm() {
            (expect[0], expect[1])
        } else {
            (expect[1], expect[0])
        };
        assert_relative_eq!(l0.re, m0.re, max_relative = 1e-11);
        assert_relative_eq!(l0.im, m0.im, max_relative = 1e-11);
        assert_relative_eq!(l1.re, m1.re, max_relative = 1e-11);
        assert_relative_eq!(l1.im, m1.im, max_relative = 1e-11);
    }

    #[test]
    fn lobe_point_kappa_zero_identity() {
        let c = CuttingParams::new(556.31, 0.404, 2, 0.0, 180.0).unwrap();
        let omega = 2.0 * PI * 920.0;
        let p = lobe_point(Complex64::new(-1.0, 0.0), omega, 0, &c).unwrap();
        // kappa = 0 -> psi = 0, eps = pi, depth = 2*pi/(Nt*Kt) in metres
        assert_relative_eq!(p.depth_mm, PI / 556.31e6 * 1e3, max_relative = 1e-13);
        let period = 60.0 / (c.flute_count() as f64 * p.speed_rpm);
        assert_relative_eq!(period, PI / omega, max_relative = 1e-12);
    }

    #[test]
    fn lobe_point_rejects_positive_real_part() {
        let c = CuttingParams::new(556.31, 0.404, 2, 0.0, 180.0).unwrap();
        assert!(lobe_point(Complex64::new(1.0, 0.0), 5000.0, 0, &c).is_none());
        assert!(lobe_point(Complex64::new(0.0, 1.0), 5000.0, 0, &c).is_none());
    }

    #[test]
    fn lobe_family_speed_ratio_identity() {
        let c = CuttingParams::new(556.31, 0.404, 2, 0.0, 180.0).unwrap();
        let lambda = Complex64::new(-2.0e5, 0.7e5);
        let omega = 2.0 * PI * 950.0;
        let k = 3;
        let a = lobe_point(lambda, omega, k, &c).unwrap();
        let b = lobe_point(lambda, omega, k + 1, &c).unwrap();
        assert_relative_eq!(a.depth_mm, b.depth_mm, max_relative = 1e-14);
        let kappa = lambda.im / lambda.re;
        let eps = PI - 2.0 * kappa.atan();
        let expected_ratio = (eps + 2.0 * (k + 1) as f64 * PI) / (eps + 2.0 * k as f64 * PI);
        // periods scale as the phase totals, so speeds scale inversely
        assert_relative_eq!(a.speed_rpm / b.speed_rpm, expected_ratio, max_relative = 1e-13);
    }

    #[test]
    fn build_sld_produces_positive_envelope_below_branches() {
        let (d, c) = ex1();
        let settings = SldSettings::covering(&d, &c, (5000.0, 25000.0));
        let curve = build_sld(&d, &c, (5000.0, 25000.0), &settings).unwrap();
        let env = curve.envelope().points();
        assert!(env.len() > 1800);
        for p in env {
            assert!(p.depth_mm > 0.0 && p.depth_mm.is_finite());
        }
        // envelope is pointwise <= every branch point near the same speed
        let samples = sample_at_speeds(&curve, &[6000.0, 9000.0, 12000.0, 20000.0]).unwrap();
        for bp in samples.points() {
            for branch in &curve.branches {
                for lp in &branch.points {
                    if (lp.speed_rpm - bp.speed_rpm).abs() < 1e-9 {
                        assert!(bp.depth_mm <= lp.depth_mm + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn scaling_invariance_of_envelope() {
        let (d, c) = ex1();
        let settings = SldSettings::covering(&d, &c, (5000.0, 25000.0));
        let speeds = linspace(5200.0, 24000.0, 25);
        let base = sample_at_speeds(&build_sld(&d, &c, (5000.0, 25000.0), &settings).unwrap(), &speeds).unwrap();

        let scale = 2.7;
        let p = flatten(&d, &TieSpec::none()).unwrap();
        let mut vals = p.values().to_vec();
        vals[1] *= scale; // k_x
        vals[4] *= scale; // k_y
        let d2 = p.with_values(vals).unwrap().unflatten().unwrap();
        let c2 = CuttingParams::new(
            c.tangential_coefficient_n_mm2() * scale,
            c.radial_ratio(),
            c.flute_count(),
            c.start_angle_deg(),
            c.exit_angle_deg(),
        )
        .unwrap();
        let scaled = sample_at_speeds(&build_sld(&d2, &c2, (5000.0, 25000.0), &settings).unwrap(), &speeds).unwrap();
        for (a, b) in base.points().iter().zip(scaled.points()) {
            assert_relative_eq!(a.depth_mm, b.depth_mm, max_relative = 1e-9);
        }
    }

    #[test]
    fn reflection_symmetry_of_envelope() {
        // swapping x and y dynamics while swapping axx<->ayy and
        // axy<->ayx leaves a0 and a1 unchanged; check on the raw
        // coefficients at a handful of frequencies.
        let x = Mode::new(900.0, 9.0e6, 0.02).unwrap();
        let y = Mode::new(950.0, 10.0e6, 0.01).unwrap();
        let factors = (0.7, -2.0, 2.2, -0.5);
        let swapped = (factors.3, factors.2, factors.1, factors.0);
        for f_hz in [850.0, 900.0, 925.0, 950.0, 1000.0] {
            let w = 2.0 * PI * f_hz;
            let fx = frf(&[x], w);
            let fy = frf(&[y], w);
            let (l0a, l1a) = characteristic_eigenvalues(fx, fy, factors).unwrap();
            let (l0b, l1b) = characteristic_eigenvalues(fy, fx, swapped).unwrap();
            let mut a = [l0a, l1a.unwrap()];
            let mut b = [l0b, l1b.unwrap()];
            a.sort_by(|p, q| p.re.partial_cmp(&q.re).unwrap());
            b.sort_by(|p, q| p.re.partial_cmp(&q.re).unwrap());
            for (u, v) in a.iter().zip(&b) {
                assert_relative_eq!(u.re, v.re, max_relative = 1e-12);
                assert_relative_eq!(u.im, v.im, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn sample_at_knots_and_midpoints() {
        let (d, c) = ex1();
        let settings = SldSettings::covering(&d, &c, (5000.0, 25000.0));
        let curve = build_sld(&d, &c, (5000.0, 25000.0), &settings).unwrap();
        let env = curve.envelope().points();
        let knots = [env[10], env[500], env[1500]];
        let speeds: Vec<f64> = knots.iter().map(|p| p.speed_rpm).collect();
        let s = sample_at_speeds(&curve, &speeds).unwrap();
        for (got, want) in s.points().iter().zip(&knots) {
            assert_eq!(got.depth_mm, want.depth_mm);
        }
        // midpoint -> arithmetic mean of neighbours
        let mid = 0.5 * (env[100].speed_rpm + env[101].speed_rpm);
        let sm = sample_at_speeds(&curve, &[mid]).unwrap();
        assert_relative_eq!(
            sm.points()[0].depth_mm,
            0.5 * (env[100].depth_mm + env[101].depth_mm),
            max_relative = 1e-12
        );
    }

    #[test]
    fn sample_out_of_range_lists_offenders() {
        let (d, c) = ex1();
        let settings = SldSettings::covering(&d, &c, (5000.0, 25000.0));
        let curve = build_sld(&d, &c, (5000.0, 25000.0), &settings).unwrap();
        let err = sample_at_speeds(&curve, &[100.0, 12000.0, 90000.0]).unwrap_err();
        match err {
            ZoaError::SpeedsOutOfRange(v) => assert_eq!(v, vec![100.0, 90000.0]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_curve_error_when_range_unreachable() {
        let (d, c) = ex1();
        let mut settings = SldSettings::for_dynamics(&d);
        settings.max_lobes = 1;
        // with one lobe the boundary lives near 27-54 krev/min; 100-200
        // rev/min is unreachable
        assert!(matches!(
            build_sld(&d, &c, (100.0, 200.0), &settings),
            Err(ZoaError::EmptyCurve)
        ));
    }
}
