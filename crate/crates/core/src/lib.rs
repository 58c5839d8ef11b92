// SPDX-License-Identifier: Apache-2.0

//! Kerr microresonator OPO simulator: mean-field steady states, quantum noise
//! spectra of the signal/idler pair and Duan-criterion entanglement.

pub mod config;
pub mod entanglement;
pub mod error;
pub mod fluctuations;
pub mod optimize;
pub mod params;
pub mod steady_state;
pub mod sweeps;

pub use config::{Config, ConfigBuilder, Preset};
pub use error::{Error, Result};
pub use params::{DerivedRates, IndexTable, PumpDrive, PumpLevel, ResonatorParams};
pub use steady_state::{NormalizedDrive, Stage, SteadyState};
pub use fluctuations::{LinearizedSystem, NoiseSpectrum};
pub use entanglement::{DetectionAngles, EntanglementPoint};
pub use sweeps::{Axis, AxisName, Format, Spacing, SweepPlan, SweepResult, Target};
