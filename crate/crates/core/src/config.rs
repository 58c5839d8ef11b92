// SPDX-License-Identifier: Apache-2.0

//! Structured TOML configuration, shipped presets and `key=value` overrides.
//!
//! A configuration is assembled in layers: preset, then config file, then
//! overrides, each layer replacing keys of the previous one. Frequencies in
//! the file are given in Hz (`sigma_c_hz`) or rad/s (`sigma_c_rad_s`); the
//! last one written wins.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::params::{PumpDrive, PumpLevel, ResonatorParams};

const ANOMALOUS_TOML: &str = include_str!("../presets/anomalous.toml");
const NORMAL_TOML: &str = include_str!("../presets/normal.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Anomalous,
    Normal,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::Anomalous, Preset::Normal];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Anomalous => "anomalous",
            Preset::Normal => "normal",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            Preset::Anomalous => ANOMALOUS_TOML,
            Preset::Normal => NORMAL_TOML,
        }
    }

    pub fn config(self) -> Config {
        ConfigBuilder::from_preset(self)
            .build()
            .expect("shipped presets are valid")
    }

    pub fn resonator(self) -> ResonatorParams {
        self.config().resonator
    }

    pub fn pump(self) -> PumpDrive {
        self.config().pump
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anomalous" => Ok(Preset::Anomalous),
            "normal" => Ok(Preset::Normal),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected `anomalous` or `normal`)"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A validated resonator + pump pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub resonator: ResonatorParams,
    pub pump: PumpDrive,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    resonator: ResonatorParams,
    pump: RawPump,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPump {
    sigma_c_hz: Option<f64>,
    sigma_c_rad_s: Option<f64>,
    a_in: Option<f64>,
    p_in: Option<f64>,
    mode_l: u32,
}

const RESONATOR_KEYS: &[&str] = &[
    "f0", "fsr", "d2", "q0", "r", "radius", "a_eff", "n0", "n2", "eta_override", "gap_nm",
];
const PUMP_KEYS: &[&str] = &["sigma_c_hz", "sigma_c_rad_s", "a_in", "p_in", "mode_l"];

/// Keys that occupy the same slot; writing one removes the others.
const EXCLUSIVE: &[&[&str]] = &[&["sigma_c_hz", "sigma_c_rad_s"], &["a_in", "p_in"]];

#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    table: Table,
    preset: Option<Preset>,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_preset(preset: Preset) -> Self {
        let table = preset.source().parse::<Table>().expect("preset TOML parses");
        ConfigBuilder {
            table,
            preset: Some(preset),
        }
    }

    pub fn preset(&self) -> Option<Preset> {
        self.preset
    }

    /// Merge a TOML document on top of the current layers.
    pub fn merge_toml(mut self, text: &str) -> Result<Self> {
        let doc: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        for (section, value) in doc {
            let Value::Table(entries) = value else {
                return Err(Error::Config(format!("top-level key `{section}` must be a section")));
            };
            for (k, v) in entries {
                self.insert(&section, &k, v)?;
            }
        }
        Ok(self)
    }

    /// Apply one `key=value` override. `key` is either `section.field` or a
    /// bare field name that is unique across sections.
    pub fn set(mut self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let (section, field) = match key.split_once('.') {
            Some((s, f)) => (s.to_string(), f.to_string()),
            None => (resolve_section(key)?.to_string(), key.to_string()),
        };
        let value = parse_value(raw.trim())?;
        self.insert(&section, &field, value)?;
        Ok(self)
    }

    fn insert(&mut self, section: &str, field: &str, value: Value) -> Result<()> {
        let allowed = match section {
            "resonator" => RESONATOR_KEYS,
            "pump" => PUMP_KEYS,
            other => return Err(Error::Config(format!("unknown section `{other}`"))),
        };
        if !allowed.contains(&field) {
            return Err(Error::Config(format!("unknown key `{section}.{field}`")));
        }
        let value = match (field, value) {
            ("mode_l", v) => v,
            (_, Value::Integer(i)) => Value::Float(i as f64),
            (_, v) => v,
        };
        let entry = self
            .table
            .entry(section.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        let Value::Table(t) = entry else {
            return Err(Error::Config(format!("`{section}` is not a section")));
        };
        for group in EXCLUSIVE {
            if group.contains(&field) {
                for other in group.iter().filter(|k| **k != field) {
                    t.remove(*other);
                }
            }
        }
        t.insert(field.to_string(), value);
        Ok(())
    }

    pub fn build(&self) -> Result<Config> {
        let raw: RawConfig = Value::Table(self.table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let pump = &raw.pump;
        let sigma_c = match (pump.sigma_c_hz, pump.sigma_c_rad_s) {
            (Some(hz), None) => 2.0 * PI * hz,
            (None, Some(rad)) => rad,
            (None, None) => return Err(Error::Config("missing `pump.sigma_c_hz`".into())),
            (Some(_), Some(_)) => {
                return Err(Error::Config("give only one of sigma_c_hz / sigma_c_rad_s".into()))
            }
        };
        let drive = match (pump.a_in, pump.p_in) {
            (Some(a), None) => PumpDrive::with_amplitude(a, sigma_c, pump.mode_l),
            (None, Some(w)) => PumpDrive::with_power(w, sigma_c, pump.mode_l),
            (Some(a), Some(w)) => PumpDrive::with_both(&raw.resonator, w, a, sigma_c, pump.mode_l)?,
            (None, None) => return Err(Error::Config("missing `pump.a_in` or `pump.p_in`".into())),
        };
        raw.resonator.validate()?;
        drive.validate(&raw.resonator)?;
        Ok(Config {
            resonator: raw.resonator,
            pump: drive,
        })
    }
}

fn resolve_section(field: &str) -> Result<&'static str> {
    if RESONATOR_KEYS.contains(&field) {
        Ok("resonator")
    } else if PUMP_KEYS.contains(&field) {
        Ok("pump")
    } else {
        Err(Error::Config(format!("unknown key `{field}`")))
    }
}

fn parse_value(raw: &str) -> Result<Value> {
    // Reuse the TOML value grammar so `2e6`, `4` and `"x"` all behave as in files.
    let doc: Table = format!("v = {raw}")
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse value `{raw}`")))?;
    Ok(doc["v"].clone())
}

/// Write a config back as TOML (frequencies in Hz).
pub fn to_toml(cfg: &Config) -> String {
    let r = &cfg.resonator;
    let mut out = String::from("[resonator]\n");
    for (k, v) in [
        ("f0", r.f0),
        ("fsr", r.fsr),
        ("d2", r.d2),
        ("q0", r.q0),
        ("r", r.r),
        ("radius", r.radius),
        ("a_eff", r.a_eff),
        ("n0", r.n0),
        ("n2", r.n2),
    ] {
        out.push_str(&format!("{k} = {v:e}\n"));
    }
    if let Some(e) = r.eta_override {
        out.push_str(&format!("eta_override = {e:e}\n"));
    }
    if let Some(g) = r.gap_nm {
        out.push_str(&format!("gap_nm = {g:e}\n"));
    }
    out.push_str("\n[pump]\n");
    out.push_str(&format!("sigma_c_rad_s = {:e}\n", cfg.pump.sigma_c));
    match cfg.pump.level {
        PumpLevel::Amplitude(a) => out.push_str(&format!("a_in = {a:e}\n")),
        PumpLevel::Power(w) => out.push_str(&format!("p_in = {w:e}\n")),
    }
    out.push_str(&format!("mode_l = {}\n", cfg.pump.mode_l));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anomalous_preset_snapshot() {
        let c = Preset::Anomalous.config();
        let r = &c.resonator;
        assert_eq!(r.radius, 23e-6);
        assert_eq!(r.fsr, 989.592e9);
        assert_eq!(r.f0, 193.251e12);
        assert!((r.d2 - 1.435 * 2.0 * PI * 1e7).abs() <= 1e-15 * r.d2.abs());
        assert_eq!(r.a_eff, 1.10e-12);
        assert_eq!((r.q0, r.r, r.n2, r.n0), (1e6, 1.222, 2.6e-19, 2.0));
        assert_eq!(c.pump.sigma_c, 2.0 * PI * 8e9);
        assert_eq!(c.pump.level, PumpLevel::Amplitude(1e10));
        assert_eq!(c.pump.mode_l, 4);
    }

    #[test]
    fn normal_preset_snapshot() {
        let c = Preset::Normal.config();
        let r = &c.resonator;
        assert_eq!(r.radius, 23e-6);
        assert_eq!(r.fsr, 1019.553e9);
        assert_eq!(r.f0, 193.797e12);
        assert!((r.d2 + 5.676 * 2.0 * PI * 1e8).abs() <= 1e-15 * r.d2.abs());
        assert_eq!(r.a_eff, 0.968e-12);
        assert_eq!((r.q0, r.r, r.n2), (1e6, 1.222, 2.6e-19));
        assert_eq!(c.pump.sigma_c, 2.0 * PI * 18e9);
        assert_eq!(c.pump.level, PumpLevel::Amplitude(4e10));
    }

    #[test]
    fn overrides_apply_after_preset_last_write_wins() {
        let base = Preset::Normal.config();
        let c = ConfigBuilder::from_preset(Preset::Normal)
            .set("q0=3e6")
            .unwrap()
            .set("resonator.q0 = 2e6")
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(c.resonator.q0, 2e6);
        let k_base = base.resonator.derived_rates().unwrap().kappa0;
        let k_new = c.resonator.derived_rates().unwrap().kappa0;
        assert!((k_base / k_new - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exclusive_slots_replace_each_other() {
        let c = ConfigBuilder::from_preset(Preset::Anomalous)
            .set("p_in=0.5")
            .unwrap()
            .set("sigma_c_rad_s=1e10")
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(c.pump.level, PumpLevel::Power(0.5));
        assert_eq!(c.pump.sigma_c, 1e10);
    }

    #[test]
    fn file_layer_and_comments() {
        let text = "# comment\n[resonator]\nq0 = 2e6 # inline\n[pump]\nmode_l = 3\n";
        let c = ConfigBuilder::from_preset(Preset::Anomalous)
            .merge_toml(text)
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(c.resonator.q0, 2e6);
        assert_eq!(c.pump.mode_l, 3);
    }

    #[test]
    fn unknown_keys_and_presets_rejected() {
        assert!(ConfigBuilder::from_preset(Preset::Normal).set("bogus=1").is_err());
        assert!(ConfigBuilder::from_preset(Preset::Normal).set("pump.q0=1").is_err());
        assert!(ConfigBuilder::new().merge_toml("[extra]\nx = 1\n").is_err());
        assert!("weird".parse::<Preset>().is_err());
        assert!(ConfigBuilder::new().build().is_err());
    }

    #[test]
    fn toml_round_trip() {
        for p in Preset::ALL {
            let c = p.config();
            let back = ConfigBuilder::new().merge_toml(&to_toml(&c)).unwrap().build().unwrap();
            assert_eq!(back.resonator, c.resonator);
            assert_eq!(back.pump.level, c.pump.level);
            assert!((back.pump.sigma_c - c.pump.sigma_c).abs() <= 1e-15 * c.pump.sigma_c);
        }
    }
}
