//! Engineering-unit conversions used at IO boundaries.
//!
//! Internally every angle is radians and every frequency is rad/s; the
//! conversions here exist so that configs, record files, and reports can
//! speak the units the machining literature uses (Hz, MN/m, mm, degrees,
//! N/mm², rev/min).

use std::f64::consts::PI;
use std::fmt;

use super::ModelError;

/// Units supported by [`convert_units`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Hertz,
    RadPerSec,
    RevPerMin,
    NewtonPerMeter,
    MeganewtonPerMeter,
    Millimeter,
    Meter,
    Degree,
    Radian,
    NewtonPerMm2,
    NewtonPerM2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Dimension {
    AngularRate,
    Stiffness,
    Length,
    Angle,
    Pressure,
}

impl Unit {
    /// (dimension, factor to the dimension's base unit).
    fn base(self) -> (Dimension, f64) {
        match self {
            Unit::Hertz => (Dimension::AngularRate, 2.0 * PI),
            Unit::RadPerSec => (Dimension::AngularRate, 1.0),
            Unit::RevPerMin => (Dimension::AngularRate, 2.0 * PI / 60.0),
            Unit::NewtonPerMeter => (Dimension::Stiffness, 1.0),
            Unit::MeganewtonPerMeter => (Dimension::Stiffness, 1e6),
            Unit::Millimeter => (Dimension::Length, 1e-3),
            Unit::Meter => (Dimension::Length, 1.0),
            Unit::Degree => (Dimension::Angle, PI / 180.0),
            Unit::Radian => (Dimension::Angle, 1.0),
            Unit::NewtonPerMm2 => (Dimension::Pressure, 1e6),
            Unit::NewtonPerM2 => (Dimension::Pressure, 1.0),
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::Hertz => "Hz",
            Unit::RadPerSec => "rad/s",
            Unit::RevPerMin => "rev/min",
            Unit::NewtonPerMeter => "N/m",
            Unit::MeganewtonPerMeter => "MN/m",
            Unit::Millimeter => "mm",
            Unit::Meter => "m",
            Unit::Degree => "deg",
            Unit::Radian => "rad",
            Unit::NewtonPerMm2 => "N/mm^2",
            Unit::NewtonPerM2 => "N/m^2",
        };
        f.write_str(s)
    }
}

/// Convert `value` between two units of the same dimension.
///
/// Rejects cross-dimension pairs (e.g. Hz to mm).
pub fn convert_units(value: f64, from: Unit, to: Unit) -> Result<f64, ModelError> {
    let (df, ff) = from.base();
    let (dt, ft) = to.base();
    if df != dt {
        return Err(ModelError::UnknownUnitPair { from, to });
    }
    Ok(value * (ff / ft))
}

/// Tooth-passing angular frequency in rad/s for a spindle speed in rev/min.
pub fn tooth_passing_omega(speed_rpm: f64, flute_count: u32) -> f64 {
    speed_rpm * flute_count as f64 * 2.0 * PI / 60.0
}

/// Tooth period in seconds for a spindle speed in rev/min.
pub fn tooth_period(speed_rpm: f64, flute_count: u32) -> f64 {
    60.0 / (speed_rpm * flute_count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hz_to_rad_per_sec() {
        let w = convert_units(903.0, Unit::Hertz, Unit::RadPerSec).unwrap();
        assert_relative_eq!(w, 2.0 * PI * 903.0, max_relative = 1e-15);
        assert!((w - 5673.87).abs() < 0.5);
    }

    #[test]
    fn mn_per_m_to_n_per_m() {
        let k = convert_units(12.53, Unit::MeganewtonPerMeter, Unit::NewtonPerMeter).unwrap();
        assert_relative_eq!(k, 1.253e7, max_relative = 1e-15);
    }

    #[test]
    fn deg_to_rad() {
        let a = convert_units(180.0, Unit::Degree, Unit::Radian).unwrap();
        assert_relative_eq!(a, PI, max_relative = 1e-15);
    }

    #[test]
    fn rejects_cross_dimension() {
        assert!(convert_units(1.0, Unit::Hertz, Unit::Millimeter).is_err());
        assert!(convert_units(1.0, Unit::Degree, Unit::NewtonPerMeter).is_err());
    }

    #[test]
    fn there_and_back_is_identity() {
        let pairs = [
            (Unit::Hertz, Unit::RadPerSec),
            (Unit::NewtonPerMeter, Unit::MeganewtonPerMeter),
            (Unit::Millimeter, Unit::Meter),
            (Unit::Degree, Unit::Radian),
            (Unit::NewtonPerMm2, Unit::NewtonPerM2),
            (Unit::RevPerMin, Unit::RadPerSec),
        ];
        for &(a, b) in &pairs {
            for v in [1.0f64, 903.0, 0.03, 5500.0, 1.7e-3] {
                let roundtrip =
                    convert_units(convert_units(v, a, b).unwrap(), b, a).unwrap();
                assert_relative_eq!(roundtrip, v, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn tooth_passing_helpers() {
        assert_relative_eq!(tooth_period(6000.0, 4), 60.0 / 24000.0, max_relative = 1e-15);
        assert_relative_eq!(
            tooth_passing_omega(6000.0, 4),
            24000.0 * 2.0 * PI / 60.0,
            max_relative = 1e-15
        );
    }
}
