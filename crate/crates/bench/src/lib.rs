// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benchmarks.

use kqfc_core::fluctuations::linearize;
use kqfc_core::steady_state::{steady_state_at, ContinuationOptions};
use kqfc_core::{LinearizedSystem, NormalizedDrive, Preset, Stage, SteadyState};

/// Stage IV state of a preset at its default pump.
pub fn stage_four(preset: Preset) -> (NormalizedDrive, SteadyState) {
    let c = preset.config();
    steady_state_at(&c.resonator, &c.pump, Stage::IV, &ContinuationOptions::default())
        .expect("presets solve")
        .expect("stage IV exists at the preset pump")
}

pub fn stage_four_system(preset: Preset) -> LinearizedSystem {
    let (nd, ss) = stage_four(preset);
    linearize(&preset.resonator(), &nd, &ss).expect("presets linearize")
}
