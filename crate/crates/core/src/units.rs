//! Physical constants and unit handling.
//!
//! Every rate inside the crate is an angular frequency in rad/s. Human-facing
//! quantities follow the "2π × MHz" convention: a frequency written as
//! `12.2 MHz` means 2π × 12.2 × 10⁶ rad/s unless the caller opts into
//! angular input.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Bohr magneton (J/T).
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Atomic mass unit (kg).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Bohr radius (m).
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;

/// Mass of a ⁴⁰Ca⁺ ion (kg).
pub const CA40_MASS: f64 = 39.962_590_9 * ATOMIC_MASS_UNIT;

/// 2π × `mhz` MHz, in rad/s.
#[inline]
pub fn mhz(mhz: f64) -> f64 {
    2.0 * PI * mhz * 1e6
}

/// 2π × `khz` kHz, in rad/s.
#[inline]
pub fn khz(khz: f64) -> f64 {
    2.0 * PI * khz * 1e3
}

/// Angular rate in rad/s expressed as "2π × MHz".
#[inline]
pub fn to_mhz(rad_per_s: f64) -> f64 {
    rad_per_s / (2.0 * PI * 1e6)
}

#[inline]
pub fn to_khz(rad_per_s: f64) -> f64 {
    rad_per_s / (2.0 * PI * 1e3)
}

/// Physical dimension a configuration value must carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Angular rate; stored in rad/s.
    Frequency,
    Length,
    Time,
    Temperature,
    MagneticField,
    /// Number density; stored in m⁻³.
    Density,
    /// Density per squared RF volt; stored in m⁻³·V⁻².
    DensityCoefficient,
    Voltage,
    Mass,
    Current,
    /// Angular rate per unit current; stored in rad/s/A.
    FrequencyPerCurrent,
    /// Electric dipole moment; stored in C·m.
    DipoleMoment,
    /// Counts per second.
    CountRate,
    /// Plain number, optionally with `ppm` or `%`.
    Dimensionless,
}

struct UnitDef {
    suffix: &'static str,
    factor: f64,
    /// Multiply by 2π under the default "2π ×" convention.
    cyclic: bool,
}

const fn u(suffix: &'static str, factor: f64) -> UnitDef {
    UnitDef { suffix, factor, cyclic: false }
}

const fn cyc(suffix: &'static str, factor: f64) -> UnitDef {
    UnitDef { suffix, factor, cyclic: true }
}

fn units_for(dim: Dimension) -> &'static [UnitDef] {
    match dim {
        Dimension::Frequency => {
            const U: &[UnitDef] = &[
            cyc("GHz", 1e9),
            cyc("MHz", 1e6),
            cyc("kHz", 1e3),
            cyc("Hz", 1.0),
            u("rad/s", 1.0),
        ];
            U
        },
        Dimension::Length => {
            const U: &[UnitDef] = &[
            u("nm", 1e-9),
            u("um", 1e-6),
            u("µm", 1e-6),
            u("mm", 1e-3),
            u("cm", 1e-2),
            u("m", 1.0),
        ];
            U
        },
        Dimension::Time => {
            const U: &[UnitDef] = &[
            u("ns", 1e-9),
            u("us", 1e-6),
            u("µs", 1e-6),
            u("ms", 1e-3),
            u("s", 1.0),
        ];
            U
        },
        Dimension::Temperature => {
            const U: &[UnitDef] = &[u("uK", 1e-6), u("µK", 1e-6), u("mK", 1e-3), u("K", 1.0)];
            U
        },
        Dimension::MagneticField => {
            const U: &[UnitDef] = &[u("mG", 1e-7), u("G", 1e-4), u("mT", 1e-3), u("T", 1.0)];
            U
        },
        Dimension::Density => {
            const U: &[UnitDef] = &[u("cm-3", 1e6), u("m-3", 1.0)];
            U
        },
        Dimension::DensityCoefficient => {
            const U: &[UnitDef] = &[u("V-2cm-3", 1e6), u("V-2m-3", 1.0)];
            U
        },
        Dimension::Voltage => {
            const U: &[UnitDef] = &[u("kV", 1e3), u("V", 1.0)];
            U
        },
        Dimension::Mass => {
            const U: &[UnitDef] = &[u("amu", ATOMIC_MASS_UNIT), u("kg", 1.0)];
            U
        },
        Dimension::Current => {
            const U: &[UnitDef] = &[u("mA", 1e-3), u("A", 1.0)];
            U
        },
        Dimension::FrequencyPerCurrent => {
            const U: &[UnitDef] = &[
            cyc("kHz/mA", 1e6),
            cyc("MHz/A", 1e6),
            cyc("kHz/A", 1e3),
            cyc("Hz/A", 1.0),
        ];
            U
        },
        Dimension::DipoleMoment => {
            const U: &[UnitDef] = &[u("ea0", ELEMENTARY_CHARGE * BOHR_RADIUS), u("Cm", 1.0)];
            U
        },
        Dimension::CountRate => {
            const U: &[UnitDef] = &[u("Mcps", 1e6), u("kcps", 1e3), u("cps", 1.0)];
            U
        },
        Dimension::Dimensionless => {
            const U: &[UnitDef] = &[u("ppm", 1e-6), u("%", 1e-2), u("", 1.0)];
            U
        },
    }
}

/// Parses `"<number> <unit>"` (space optional) into SI units.
///
/// A unit suffix is mandatory for every dimension except
/// [`Dimension::Dimensionless`]. With `angular == false`, cyclic frequency
/// units are multiplied by 2π.
pub fn parse_quantity(text: &str, dim: Dimension, angular: bool) -> std::result::Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit() || c == '.' || c == '+' || c == '-'
                || ((c == 'e' || c == 'E') && i > 0 && next_is_numeric(text, i)))
        })
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (number, unit) = text.split_at(split);
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse number in {text:?}"))?;
    let unit = unit.trim();
    if unit.is_empty() && dim != Dimension::Dimensionless {
        return Err(format!("missing unit suffix in {text:?} (expected {:?})", dim));
    }
    let def = units_for(dim)
        .iter()
        .find(|d| d.suffix == unit)
        .ok_or_else(|| {
            let known: Vec<_> = units_for(dim).iter().map(|d| d.suffix).collect();
            format!("unit {unit:?} not valid for {dim:?}; expected one of {known:?}")
        })?;
    let mut si = value * def.factor;
    if def.cyclic && !angular {
        si *= 2.0 * PI;
    }
    if !si.is_finite() {
        return Err(format!("non-finite value {text:?}"));
    }
    Ok(si)
}

fn next_is_numeric(text: &str, i: usize) -> bool {
    text[i + 1..]
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_digit() || c == '-' || c == '+')
}

/// Like [`parse_quantity`] but reports failures as a data error.
pub fn quantity(text: &str, dim: Dimension, angular: bool, source_name: &str, line: usize) -> Result<f64> {
    parse_quantity(text, dim, angular).map_err(|m| Error::data(source_name, line, 1, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_defaults_to_cyclic_convention() {
        let v = parse_quantity("12.2MHz", Dimension::Frequency, false).unwrap();
        assert!((v - mhz(12.2)).abs() < 1e-6);
        let a = parse_quantity("12.2 MHz", Dimension::Frequency, true).unwrap();
        assert!((a - 12.2e6).abs() < 1e-6);
    }

    #[test]
    fn lengths_and_exponents() {
        assert!((parse_quantity("37um", Dimension::Length, false).unwrap() - 37e-6).abs() < 1e-18);
        assert!((parse_quantity("5.4e8 cm-3", Dimension::Density, false).unwrap() - 5.4e14).abs() < 1.0);
        assert!((parse_quantity("1500 ppm", Dimension::Dimensionless, false).unwrap() - 1.5e-3).abs() < 1e-15);
        assert!((parse_quantity("0.97", Dimension::Dimensionless, false).unwrap() - 0.97).abs() < 1e-15);
        assert!((parse_quantity("-3.5e-2 mm", Dimension::Length, false).unwrap() + 3.5e-5).abs() < 1e-18);
    }

    #[test]
    fn missing_or_wrong_unit_is_rejected() {
        assert!(parse_quantity("11.8", Dimension::Length, false).is_err());
        assert!(parse_quantity("11.8 MHz", Dimension::Length, false).is_err());
        assert!(parse_quantity("abc mm", Dimension::Length, false).is_err());
    }

    #[test]
    fn gauss_to_tesla() {
        assert!((parse_quantity("0.134 G", Dimension::MagneticField, false).unwrap() - 1.34e-5).abs() < 1e-18);
    }
}
