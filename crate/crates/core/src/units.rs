// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Unit-suffixed quantities and the frequency convention conversions.
//!
//! Every physical value entering from a configuration or program file carries
//! an explicit suffix (`"385 kHz"`, `"200 us"`, `"20 MHz/ms"`). Internally all
//! values are SI: seconds, Hz (ordinary, not angular), Hz/s, tesla, radians.

use std::f64::consts::{PI, TAU};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    Time,
    ChirpRate,
    Field,
    Angle,
    Dimensionless,
}

impl Dimension {
    fn name(self) -> &'static str {
        match self {
            Dimension::Frequency => "frequency",
            Dimension::Time => "time",
            Dimension::ChirpRate => "chirp rate",
            Dimension::Field => "magnetic field",
            Dimension::Angle => "angle",
            Dimension::Dimensionless => "dimensionless",
        }
    }
}

// Unit scales as decimal exponents, so that `200 us` parses to the double
// nearest 2e-4 (dividing by 1e6 rounds once; multiplying by 1e-6 need not).
fn frequency_exp(unit: &str) -> Option<i32> {
    Some(match unit {
        "Hz" => 0,
        "kHz" => 3,
        "MHz" => 6,
        "GHz" => 9,
        _ => return None,
    })
}

fn time_exp(unit: &str) -> Option<i32> {
    Some(match unit {
        "s" => 0,
        "ms" => -3,
        "us" | "µs" | "μs" => -6,
        "ns" => -9,
        _ => return None,
    })
}

enum Scale {
    Pow10(i32),
    Factor(f64),
}

impl Scale {
    fn apply(self, v: f64) -> f64 {
        match self {
            Scale::Pow10(k) if k >= 0 => v * 10f64.powi(k),
            Scale::Pow10(k) => v / 10f64.powi(-k),
            Scale::Factor(f) => v * f,
        }
    }
}

fn unit_scale(dim: Dimension, unit: &str) -> Option<Scale> {
    let exp = match dim {
        Dimension::Frequency => frequency_exp(unit)?,
        Dimension::Time => time_exp(unit)?,
        Dimension::ChirpRate => {
            let (num, den) = unit.split_once('/')?;
            frequency_exp(num)? - time_exp(den)?
        }
        Dimension::Field => match unit {
            "T" => 0,
            "mT" => -3,
            "uT" | "µT" => -6,
            _ => return None,
        },
        Dimension::Angle => {
            return match unit {
                "rad" => Some(Scale::Factor(1.0)),
                "deg" => Some(Scale::Factor(PI / 180.0)),
                _ => None,
            }
        }
        Dimension::Dimensionless => match unit {
            "" => 0,
            _ => return None,
        },
    };
    Some(Scale::Pow10(exp))
}

/// Parses `"<number> <unit>"` into an SI value of the requested dimension.
///
/// The space between number and unit is optional. Dimensionless values take
/// no suffix.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| {
            c.is_alphabetic() && !(matches!(c, 'e' | 'E') && is_exponent(text, i))
                || c == 'µ'
                || c == 'μ'
        })
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (number, unit) = text.split_at(split);
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|_| Error::Unit(format!("cannot parse number in `{text}`")))?;
    let unit = unit.trim();
    if unit.is_empty() && dim != Dimension::Dimensionless {
        return Err(Error::Unit(format!(
            "`{text}` is missing a {} unit suffix",
            dim.name()
        )));
    }
    let scale = unit_scale(dim, unit).ok_or_else(|| {
        Error::Unit(format!("`{unit}` is not a {} unit (in `{text}`)", dim.name()))
    })?;
    if !value.is_finite() {
        return Err(Error::Unit(format!("`{text}` is not finite")));
    }
    Ok(scale.apply(value))
}

// `1e-3 s` style exponents: an `e` followed by a digit or sign, preceded by a digit.
fn is_exponent(text: &str, i: usize) -> bool {
    let bytes = text.as_bytes();
    let prev_digit = i > 0 && (bytes[i - 1].is_ascii_digit() || bytes[i - 1] == b'.');
    let next = bytes.get(i + 1).copied();
    prev_digit && matches!(next, Some(b'0'..=b'9' | b'-' | b'+'))
}

/// Ordinary frequency (Hz) to angular frequency (rad/s).
#[inline]
pub fn angular(f_hz: f64) -> f64 {
    TAU * f_hz
}

/// A FWHM linewidth in Hz to the amplitude decay rate in rad/s.
///
/// A Lorentzian power response of FWHM `κ` corresponds to a field amplitude
/// that decays as `exp(-π κ t)`.
#[inline]
pub fn fwhm_to_amplitude_decay(fwhm_hz: f64) -> f64 {
    0.5 * angular(fwhm_hz)
}

#[inline]
pub fn fwhm_to_hwhm(fwhm_hz: f64) -> f64 {
    0.5 * fwhm_hz
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_suffixes() {
        assert_eq!(parse_quantity("385 kHz", Dimension::Frequency).unwrap(), 385e3);
        assert_eq!(parse_quantity("7.09395GHz", Dimension::Frequency).unwrap(), 7.09395e9);
        assert!((parse_quantity("200 us", Dimension::Time).unwrap() - 200e-6).abs() < 1e-18);
        assert!((parse_quantity("200 µs", Dimension::Time).unwrap() - 200e-6).abs() < 1e-18);
        assert!((parse_quantity("20 MHz/ms", Dimension::ChirpRate).unwrap() - 2e10).abs() < 1e-3);
        assert!((parse_quantity("46 mT", Dimension::Field).unwrap() - 0.046).abs() < 1e-15);
        assert_eq!(parse_quantity("1e-3 s", Dimension::Time).unwrap(), 1e-3);
        assert_eq!(parse_quantity("0.6", Dimension::Dimensionless).unwrap(), 0.6);
    }

    #[test]
    fn rejects_missing_or_wrong_units() {
        assert!(parse_quantity("385", Dimension::Frequency).is_err());
        assert!(parse_quantity("385 ms", Dimension::Frequency).is_err());
        assert!(parse_quantity("abc kHz", Dimension::Frequency).is_err());
        assert!(parse_quantity("3 kHz", Dimension::Dimensionless).is_err());
    }

    #[test]
    fn linewidth_conversions() {
        // κ = 200 kHz FWHM: amplitude decays at π·200e3 per second.
        assert!((fwhm_to_amplitude_decay(200e3) - PI * 200e3).abs() < 1e-9);
        assert_eq!(fwhm_to_hwhm(400e3), 200e3);
        assert!((angular(1.0) - TAU).abs() < 1e-15);
    }
}
