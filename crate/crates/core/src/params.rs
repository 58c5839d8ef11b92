// SPDX-License-Identifier: Apache-2.0

//! Resonator and pump configuration plus the rates derived from them.
//!
//! Angular quantities are held in rad/s throughout; only `f0` and `fsr` are
//! stored in Hz because that is how resonator geometry is usually quoted.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light in vacuum, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;

/// Physical description of a ring resonator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    /// Cold resonance of the pump mode, Hz.
    pub f0: f64,
    /// Free spectral range, Hz.
    pub fsr: f64,
    /// Second-order dispersion D2, rad/s (positive = anomalous).
    pub d2: f64,
    /// Intrinsic quality factor.
    pub q0: f64,
    /// Coupling ratio κ_ex / κ0.
    pub r: f64,
    /// Mean ring radius, m.
    pub radius: f64,
    /// Effective mode area, m².
    pub a_eff: f64,
    /// Linear refractive index.
    pub n0: f64,
    /// Kerr index, m²/W.
    pub n2: f64,
    /// Replaces the computed per-photon Kerr shift (rad/s) when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_override: Option<f64>,
    /// Bus-ring gap in nm. Documentation only; `r` is what the physics uses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_nm: Option<f64>,
}

/// Loss and coupling rates (rad/s) and the Kerr coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    pub omega0: f64,
    pub kappa0: f64,
    pub kappa_ex: f64,
    pub kappa: f64,
    /// Per-photon Kerr frequency shift, rad/s.
    pub eta: f64,
    /// Effective mode volume, m³.
    pub v_eff: f64,
}

impl DerivedRates {
    /// Loaded quality factor ω0/κ.
    pub fn q_total(&self) -> f64 {
        self.omega0 / self.kappa
    }

    /// External (coupling) quality factor ω0/κ_ex.
    pub fn q_ex(&self) -> f64 {
        self.omega0 / self.kappa_ex
    }

    pub fn q0(&self) -> f64 {
        self.omega0 / self.kappa0
    }
}

fn require_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be finite and > 0, got {v}")))
    }
}

impl ResonatorParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("f0", self.f0)?;
        require_positive("fsr", self.fsr)?;
        require_positive("q0", self.q0)?;
        require_positive("r", self.r)?;
        require_positive("radius", self.radius)?;
        require_positive("a_eff", self.a_eff)?;
        require_positive("n2", self.n2)?;
        if !self.d2.is_finite() {
            return Err(Error::validation("d2", "must be finite"));
        }
        if !(self.n0.is_finite() && self.n0 >= 1.0) {
            return Err(Error::validation("n0", format!("must be >= 1, got {}", self.n0)));
        }
        if let Some(eta) = self.eta_override {
            if !(eta.is_finite() && eta >= 0.0) {
                return Err(Error::validation("eta_override", format!("must be >= 0, got {eta}")));
            }
        }
        Ok(())
    }

    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.f0
    }

    /// D1 = 2π·FSR.
    pub fn d1(&self) -> f64 {
        2.0 * PI * self.fsr
    }

    /// Validate and compute κ0, κ_ex, κ, η and V_eff.
    pub fn derived_rates(&self) -> Result<DerivedRates> {
        self.validate()?;
        let omega0 = self.omega0();
        let kappa0 = omega0 / self.q0;
        let kappa_ex = self.r * kappa0;
        let kappa = kappa0 + kappa_ex;
        let v_eff = self.a_eff * 2.0 * PI * self.radius;
        let eta = match self.eta_override {
            Some(eta) => eta,
            None => HBAR * omega0 * omega0 * C_LIGHT * self.n2 / (self.n0 * self.n0 * v_eff),
        };
        Ok(DerivedRates {
            omega0,
            kappa0,
            kappa_ex,
            kappa,
            eta,
            v_eff,
        })
    }

    /// ω_l = ω0 + D1·l + (D2/2)·l², higher orders dropped.
    pub fn resonance_frequency(&self, l: i32) -> f64 {
        let l = f64::from(l);
        self.omega0() + self.d1() * l + 0.5 * self.d2 * l * l
    }

    /// Integrated dispersion ω_l − ω0 − D1·l.
    pub fn integrated_dispersion(&self, l: i32) -> f64 {
        let l = f64::from(l);
        0.5 * self.d2 * l * l
    }

    /// Cold-cavity detuning of mode `l` relative to the equidistant comb grid:
    /// Δ_l = σ_c + (D2/2)·l².
    pub fn cold_detuning(&self, sigma_c: f64, l: i32) -> f64 {
        sigma_c + self.integrated_dispersion(l)
    }
}

/// How the pump strength is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpLevel {
    /// Bus-waveguide power, W.
    Power(f64),
    /// Incident amplitude A_in = sqrt(P_in/ħΩ0), s^(-1/2).
    Amplitude(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpDrive {
    pub level: PumpLevel,
    /// σ_c = ω0 − Ω0, rad/s.
    pub sigma_c: f64,
    /// Signal at −l, idler at +l.
    pub mode_l: u32,
}

impl PumpDrive {
    pub fn with_amplitude(a_in: f64, sigma_c: f64, mode_l: u32) -> Self {
        PumpDrive {
            level: PumpLevel::Amplitude(a_in),
            sigma_c,
            mode_l,
        }
    }

    pub fn with_power(p_in: f64, sigma_c: f64, mode_l: u32) -> Self {
        PumpDrive {
            level: PumpLevel::Power(p_in),
            sigma_c,
            mode_l,
        }
    }

    /// Build from both representations, rejecting them unless a_in²·ħΩ0 = p_in.
    pub fn with_both(p: &ResonatorParams, p_in: f64, a_in: f64, sigma_c: f64, mode_l: u32) -> Result<Self> {
        let d = Self::with_amplitude(a_in, sigma_c, mode_l);
        let implied = d.p_in(p);
        if ((implied - p_in) / p_in.abs().max(f64::MIN_POSITIVE)).abs() > 1e-9 {
            return Err(Error::validation(
                "p_in",
                format!("inconsistent with a_in: a_in²·ħΩ0 = {implied:e} W but p_in = {p_in:e} W"),
            ));
        }
        Ok(d)
    }

    pub fn validate(&self, p: &ResonatorParams) -> Result<()> {
        if self.mode_l < 1 {
            return Err(Error::validation("mode_l", "must be >= 1"));
        }
        if !self.sigma_c.is_finite() {
            return Err(Error::validation("sigma_c", "must be finite"));
        }
        let v = match self.level {
            PumpLevel::Power(v) => ("p_in", v),
            PumpLevel::Amplitude(v) => ("a_in", v),
        };
        if !(v.1.is_finite() && v.1 >= 0.0) {
            return Err(Error::validation(v.0, format!("must be >= 0, got {}", v.1)));
        }
        if self.pump_omega(p) <= 0.0 {
            return Err(Error::validation("sigma_c", "pump frequency ω0 − σ_c must be positive"));
        }
        Ok(())
    }

    /// Pump laser angular frequency Ω0 = ω0 − σ_c.
    pub fn pump_omega(&self, p: &ResonatorParams) -> f64 {
        p.omega0() - self.sigma_c
    }

    pub fn a_in(&self, p: &ResonatorParams) -> f64 {
        match self.level {
            PumpLevel::Amplitude(a) => a,
            PumpLevel::Power(w) => (w / (HBAR * self.pump_omega(p))).sqrt(),
        }
    }

    pub fn p_in(&self, p: &ResonatorParams) -> f64 {
        match self.level {
            PumpLevel::Power(w) => w,
            PumpLevel::Amplitude(a) => a * a * HBAR * self.pump_omega(p),
        }
    }

    pub fn mode_detuning(&self, p: &ResonatorParams) -> f64 {
        p.cold_detuning(self.sigma_c, self.mode_l as i32)
    }
}

/// Sampled refractive index n(ω), linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexTable {
    omega: Vec<f64>,
    index: Vec<f64>,
}

impl IndexTable {
    /// `points` are `(ω [rad/s], n)` pairs with strictly increasing ω.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::validation("index_table", "needs at least two points"));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::validation("index_table", "frequencies must be strictly increasing"));
        }
        if points.iter().any(|&(w, n)| !w.is_finite() || !(n.is_finite() && n > 0.0)) {
            return Err(Error::validation("index_table", "entries must be finite with n > 0"));
        }
        Ok(IndexTable {
            omega: points.iter().map(|p| p.0).collect(),
            index: points.iter().map(|p| p.1).collect(),
        })
    }

    pub fn n_at(&self, omega: f64) -> Result<f64> {
        let lo = self.omega[0];
        let hi = *self.omega.last().unwrap();
        if !(omega >= lo && omega <= hi) {
            return Err(Error::Range { value: omega, min: lo, max: hi });
        }
        let k = match self.omega.partition_point(|&w| w <= omega) {
            0 => 0,
            k if k >= self.omega.len() => self.omega.len() - 2,
            k => k - 1,
        };
        let t = (omega - self.omega[k]) / (self.omega[k + 1] - self.omega[k]);
        Ok(self.index[k] + t * (self.index[k + 1] - self.index[k]))
    }
}

/// Δk = [2ω_p n(ω_p) − ω_s n(ω_s) − ω_i n(ω_i)] / c, in 1/m.
pub fn phase_mismatch(table: &IndexTable, wp: f64, ws: f64, wi: f64) -> Result<f64> {
    let np = table.n_at(wp)?;
    let ns = table.n_at(ws)?;
    let ni = table.n_at(wi)?;
    Ok((2.0 * wp * np - ws * ns - wi * ni) / C_LIGHT)
}
