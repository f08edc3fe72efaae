// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Serde adapters for unit-suffixed strings.
//!
//! Values are read with [`chirpmem::units::parse_quantity`] and written back
//! in the SI base unit, so an effective configuration round-trips exactly.

macro_rules! quantity_module {
    ($name:ident, $dim:expr, $unit:literal) => {
        pub mod $name {
            use chirpmem::units::{parse_quantity, Dimension};
            use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

            pub const UNIT: &str = $unit;

            pub fn to_string(v: f64) -> String {
                format!("{v:e} {}", $unit)
            }

            pub fn parse(s: &str) -> Result<f64, chirpmem::Error> {
                parse_quantity(s, $dim)
            }

            pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&to_string(*v))
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                let s = String::deserialize(d)?;
                parse_quantity(&s, $dim).map_err(D::Error::custom)
            }

            pub mod option {
                use super::*;

                pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
                    match v {
                        Some(v) => s.serialize_some(&to_string(*v)),
                        None => s.serialize_none(),
                    }
                }

                pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
                    Option::<String>::deserialize(d)?
                        .map(|s| parse_quantity(&s, $dim).map_err(D::Error::custom))
                        .transpose()
                }
            }

            pub mod list {
                use super::*;
                use serde::ser::SerializeSeq;

                pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
                    let mut seq = s.serialize_seq(Some(v.len()))?;
                    for x in v {
                        seq.serialize_element(&to_string(*x))?;
                    }
                    seq.end()
                }

                pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
                    Vec::<String>::deserialize(d)?
                        .iter()
                        .map(|s| parse_quantity(s, $dim).map_err(D::Error::custom))
                        .collect()
                }
            }
        }
    };
}

quantity_module!(hz, Dimension::Frequency, "Hz");
quantity_module!(seconds, Dimension::Time, "s");
quantity_module!(hz_per_s, Dimension::ChirpRate, "Hz/s");
quantity_module!(rad, Dimension::Angle, "rad");
