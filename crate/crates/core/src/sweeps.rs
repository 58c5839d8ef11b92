// SPDX-License-Identifier: Apache-2.0

//! Multi-parameter studies over a base configuration.
//!
//! A plan names a target quantity and a list of axes. Cells are visited in
//! row-major order (the last axis varies fastest). Axes other than `omega`
//! and `phi` change the operating point; cells that share an operating point
//! share one steady-state solve. Frequencies on axes and in outputs are in Hz.
//!
//! Plan files use the configuration format plus a few top-level keys:
//!
//! ```toml
//! target = "QSWEEP"     # STEADY | THRESHOLD | MAP_RF | MAP_ANGLE | BANDWIDTH | QSWEEP
//! stage = "IV"
//! preset = "anomalous"
//!
//! [pump]
//! sigma_c_hz = 3e9
//!
//! [[axes]]
//! name = "q0"
//! spacing = "log"
//! min = 1e5
//! max = 1e7
//! count = 25
//!
//! [options]
//! workers = 4
//! ```

use rayon::prelude::*;
use serde::de::Error as _;
use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::f64::consts::TAU;
use std::fmt;
use std::io;
use std::str::FromStr;
use toml::{Table, Value};

use crate::config::{Config, ConfigBuilder, Preset};
use crate::entanglement::{entanglement_bandwidth, min_over_idler_angle, optimize_angles};
use crate::error::{Error, Result};
use crate::fluctuations::{linearize, output_spectrum, LinearizedSystem};
use crate::params::PumpLevel;
use crate::steady_state::{steady_state_at, threshold_power, ContinuationOptions, Stage, ThresholdOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Target {
    Steady,
    Threshold,
    MapRf,
    MapAngle,
    Bandwidth,
    Qsweep,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Steady => "STEADY",
            Target::Threshold => "THRESHOLD",
            Target::MapRf => "MAP_RF",
            Target::MapAngle => "MAP_ANGLE",
            Target::Bandwidth => "BANDWIDTH",
            Target::Qsweep => "QSWEEP",
        }
    }

    /// Output columns appended after the axis columns.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Target::Steady => &["a_p", "a_si", "psi", "theta_cap", "f_drive", "stable"],
            Target::Threshold => &["p_th_w", "a_in_th"],
            Target::MapRf => &["c_s", "theta_s", "theta_i", "dx_minus_sq", "dy_plus_sq"],
            Target::MapAngle => &["c_s", "theta_i"],
            Target::Bandwidth => &["width_hz", "f_star_hz", "cs_extremum", "f_lo_hz", "f_hi_hz", "edge_clipped"],
            Target::Qsweep => &["width_hz", "cs_extremum", "p_th_w", "edge_clipped"],
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        [
            Target::Steady,
            Target::Threshold,
            Target::MapRf,
            Target::MapAngle,
            Target::Bandwidth,
            Target::Qsweep,
        ]
        .into_iter()
        .find(|t| t.name() == norm)
        .ok_or_else(|| Error::validation("target", format!("unknown target `{s}`")))
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Sweepable parameters. `sigma_c` and `omega` are in Hz, `phi` in rad,
/// `p_in` in W.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    Q0,
    R,
    SigmaC,
    AIn,
    PIn,
    ModeL,
    Omega,
    Phi,
}

impl AxisName {
    pub const ALL: [AxisName; 8] = [
        AxisName::Q0,
        AxisName::R,
        AxisName::SigmaC,
        AxisName::AIn,
        AxisName::PIn,
        AxisName::ModeL,
        AxisName::Omega,
        AxisName::Phi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AxisName::Q0 => "q0",
            AxisName::R => "r",
            AxisName::SigmaC => "sigma_c",
            AxisName::AIn => "a_in",
            AxisName::PIn => "p_in",
            AxisName::ModeL => "mode_l",
            AxisName::Omega => "omega",
            AxisName::Phi => "phi",
        }
    }

    /// Axes that only select where an operating point is read out.
    fn is_inner(self) -> bool {
        matches!(self, AxisName::Omega | AxisName::Phi)
    }
}

impl FromStr for AxisName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AxisName::ALL.into_iter().find(|a| a.name() == s.trim()).ok_or_else(|| {
            let names: Vec<_> = AxisName::ALL.iter().map(|a| a.name()).collect();
            Error::validation("axes.name", format!("unknown parameter `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

impl fmt::Display for AxisName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: AxisName,
    pub spacing: Spacing,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn linear(name: AxisName, min: f64, max: f64, count: usize) -> Self {
        Axis {
            name,
            spacing: Spacing::Linear,
            min,
            max,
            count,
        }
    }

    pub fn log(name: AxisName, min: f64, max: f64, count: usize) -> Self {
        Axis {
            name,
            spacing: Spacing::Log,
            min,
            max,
            count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = format!("axes.{}", self.name);
        if self.count < 1 {
            return Err(Error::validation(field, "count must be >= 1"));
        }
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::validation(field, "min and max must be finite"));
        }
        if self.spacing == Spacing::Log && !(self.min > 0.0 && self.max > 0.0) {
            return Err(Error::validation(field, "log spacing needs min > 0 and max > 0"));
        }
        if self.name == AxisName::ModeL
            && self.values().iter().any(|&v| v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64)
        {
            return Err(Error::validation(field, "mode_l values must be integers >= 1"));
        }
        Ok(())
    }

    /// Grid points; both ends are hit exactly.
    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.min];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| {
                if k + 1 == self.count {
                    return self.max;
                }
                let t = k as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.min + t * (self.max - self.min),
                    Spacing::Log => self.min * (self.max / self.min).powf(t),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    /// Worker threads; 0 uses every available core. Not part of the
    /// serialized plan, so output does not depend on it.
    #[serde(skip)]
    pub workers: usize,
    pub threshold: ThresholdOptions,
    /// Mode pair used for the threshold column of QSWEEP.
    pub threshold_mode_l: u32,
    pub continuation: ContinuationOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            workers: 0,
            threshold: ThresholdOptions::default(),
            threshold_mode_l: 1,
            continuation: ContinuationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub target: Target,
    pub stage: Stage,
    pub base: Config,
    pub axes: Vec<Axis>,
    pub options: SweepOptions,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxis {
    name: String,
    #[serde(default)]
    spacing: Spacing,
    min: f64,
    max: f64,
    count: i64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptions {
    workers: Option<usize>,
    ceiling_w: Option<f64>,
    rel_tol: Option<f64>,
    threshold_mode_l: Option<u32>,
}

impl SweepPlan {
    /// The default Q0 axis of a QSWEEP plan without axes.
    pub fn default_q0_axis() -> Axis {
        Axis::log(AxisName::Q0, 1e5, 1e7, 25)
    }

    /// Parse a plan file. `base` supplies the configuration layers below the
    /// file (a `preset` key in the file replaces them); `overrides` are
    /// `key=value` assignments applied last.
    pub fn from_toml(text: &str, base: ConfigBuilder, overrides: &[String]) -> Result<Self> {
        let mut doc: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let take_str = |doc: &mut Table, key: &str| -> Result<Option<String>> {
            match doc.remove(key) {
                None => Ok(None),
                Some(Value::String(s)) => Ok(Some(s)),
                Some(_) => Err(Error::Config(format!("`{key}` must be a string"))),
            }
        };
        let target: Target = take_str(&mut doc, "target")?
            .ok_or_else(|| Error::Config("plan is missing `target`".into()))?
            .parse()?;
        let stage: Stage = take_str(&mut doc, "stage")?.as_deref().unwrap_or("IV").parse()?;
        let mut builder = match take_str(&mut doc, "preset")? {
            Some(name) => ConfigBuilder::from_preset(name.parse::<Preset>()?),
            None => base,
        };

        let raw_axes: Vec<RawAxis> = match doc.remove("axes") {
            None => Vec::new(),
            Some(v) => v.try_into().map_err(|e: toml::de::Error| Error::Config(format!("axes: {}", e.message())))?,
        };
        let mut axes = raw_axes
            .into_iter()
            .map(|a| {
                let name: AxisName = a.name.parse()?;
                let count = usize::try_from(a.count)
                    .map_err(|_| Error::validation(format!("axes.{name}"), "count must be >= 1"))?;
                Ok(Axis {
                    name,
                    spacing: a.spacing,
                    min: a.min,
                    max: a.max,
                    count,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if target == Target::Qsweep && axes.is_empty() {
            axes.push(Self::default_q0_axis());
        }

        let raw_opts: RawOptions = match doc.remove("options") {
            None => RawOptions::default(),
            Some(v) => v
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("options: {}", e.message())))?,
        };
        let mut options = SweepOptions::default();
        if let Some(w) = raw_opts.workers {
            options.workers = w;
        }
        if let Some(c) = raw_opts.ceiling_w {
            options.threshold.ceiling = c;
        }
        if let Some(t) = raw_opts.rel_tol {
            options.threshold.rel_tol = t;
        }
        if let Some(l) = raw_opts.threshold_mode_l {
            options.threshold_mode_l = l;
        }

        if !doc.is_empty() {
            let rest = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
            builder = builder.merge_toml(&rest)?;
        }
        for o in overrides {
            builder = builder.set(o)?;
        }
        let plan = SweepPlan {
            target,
            stage,
            base: builder.build()?,
            axes,
            options,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, a) in self.axes.iter().enumerate() {
            a.validate()?;
            if self.axes[..k].iter().any(|b| b.name == a.name) {
                return Err(Error::validation("axes", format!("`{}` appears twice", a.name)));
            }
            if a.name == AxisName::AIn && self.has_axis(AxisName::PIn) {
                return Err(Error::validation("axes", "a_in and p_in cannot both be swept"));
            }
        }
        let need = |name: AxisName, yes: bool| -> Result<()> {
            match (self.has_axis(name), yes) {
                (false, true) => Err(Error::validation("axes", format!("target {} needs a `{name}` axis", self.target))),
                (true, false) => Err(Error::validation("axes", format!("target {} takes no `{name}` axis", self.target))),
                _ => Ok(()),
            }
        };
        match self.target {
            Target::MapRf => {
                need(AxisName::Omega, true)?;
                need(AxisName::Phi, false)
            }
            Target::MapAngle => {
                need(AxisName::Omega, true)?;
                need(AxisName::Phi, true)
            }
            _ => {
                need(AxisName::Omega, false)?;
                need(AxisName::Phi, false)
            }
        }?;
        if self.options.threshold_mode_l < 1 {
            return Err(Error::validation("options.threshold_mode_l", "must be >= 1"));
        }
        Ok(())
    }

    pub fn has_axis(&self, name: AxisName) -> bool {
        self.axes.iter().any(|a| a.name == name)
    }

    /// Axis columns, then the target's outputs.
    pub fn columns(&self) -> Vec<String> {
        self.axes
            .iter()
            .map(|a| a.name.name().to_string())
            .chain(self.target.outputs().iter().map(|s| s.to_string()))
            .collect()
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "kebab-case")]
pub enum CellStatus {
    Ok,
    AbsentStage,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Row-major cell index.
    pub cell: usize,
    /// Axis values of the cell, in axis order.
    pub coords: Vec<f64>,
    #[serde(flatten)]
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub plan: SweepPlan,
    /// One row per successful cell, laid out as [`SweepPlan::columns`].
    pub records: Vec<Vec<f64>>,
    /// One entry per cell, in row-major order.
    pub diagnostics: Vec<Diagnostic>,
}

impl SweepResult {
    pub fn columns(&self) -> Vec<String> {
        self.plan.columns()
    }

    /// Column `name` of every record.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns().iter().position(|c| c == name)?;
        Some(self.records.iter().map(|r| r[k]).collect())
    }

    pub fn count(&self, pred: impl Fn(&CellStatus) -> bool) -> usize {
        self.diagnostics.iter().filter(|d| pred(&d.status)).count()
    }
}

struct RecordView<'a> {
    columns: &'a [String],
    values: &'a [f64],
}

impl Serialize for RecordView<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.columns.len()))?;
        for (c, v) in self.columns.iter().zip(self.values) {
            m.serialize_entry(c, v)?;
        }
        m.end()
    }
}

impl Serialize for SweepResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let columns = self.columns();
        let records: Vec<RecordView> = self
            .records
            .iter()
            .map(|r| RecordView {
                columns: &columns,
                values: r,
            })
            .collect();
        let mut st = s.serialize_struct("SweepResult", 3)?;
        st.serialize_field("plan", &self.plan)?;
        st.serialize_field("records", &records)?;
        st.serialize_field("diagnostics", &self.diagnostics)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for SweepResult {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            plan: SweepPlan,
            records: Vec<serde_json::Map<String, serde_json::Value>>,
            diagnostics: Vec<Diagnostic>,
        }
        let raw = Raw::deserialize(d)?;
        let columns = raw.plan.columns();
        let records = raw
            .records
            .iter()
            .map(|m| {
                if m.len() != columns.len() {
                    return Err(D::Error::custom("record does not match the plan's columns"));
                }
                columns
                    .iter()
                    .map(|c| match m.get(c) {
                        Some(serde_json::Value::Null) => Ok(f64::NAN),
                        Some(v) => v.as_f64().ok_or_else(|| D::Error::custom(format!("`{c}` is not a number"))),
                        None => Err(D::Error::custom(format!("record is missing `{c}`"))),
                    })
                    .collect()
            })
            .collect::<std::result::Result<_, _>>()?;
        Ok(SweepResult {
            plan: raw.plan,
            records,
            diagnostics: raw.diagnostics,
        })
    }
}

/// Cached per operating point.
enum GroupData {
    Values(Vec<f64>),
    Linearized(Box<LinearizedSystem>),
}

fn apply_axis(cfg: &mut Config, name: AxisName, v: f64) {
    match name {
        AxisName::Q0 => cfg.resonator.q0 = v,
        AxisName::R => cfg.resonator.r = v,
        AxisName::SigmaC => cfg.pump.sigma_c = TAU * v,
        AxisName::AIn => cfg.pump.level = PumpLevel::Amplitude(v),
        AxisName::PIn => cfg.pump.level = PumpLevel::Power(v),
        AxisName::ModeL => cfg.pump.mode_l = v as u32,
        AxisName::Omega | AxisName::Phi => {}
    }
}

fn stage_linearized(plan: &SweepPlan, cfg: &Config) -> Result<Option<LinearizedSystem>> {
    let Some((nd, ss)) = steady_state_at(&cfg.resonator, &cfg.pump, plan.stage, &plan.options.continuation)? else {
        return Ok(None);
    };
    linearize(&cfg.resonator, &nd, &ss).map(Some)
}

fn eval_group(plan: &SweepPlan, cfg: &Config) -> Result<Option<GroupData>> {
    cfg.resonator.validate()?;
    cfg.pump.validate(&cfg.resonator)?;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    match plan.target {
        Target::Steady => {
            let found = steady_state_at(&cfg.resonator, &cfg.pump, plan.stage, &plan.options.continuation)?;
            Ok(found.map(|(_, s)| {
                GroupData::Values(vec![s.a_p, s.a_si, s.psi, s.theta_cap, s.f_drive, flag(s.stable)])
            }))
        }
        Target::Threshold => {
            let th = threshold_power(&cfg.resonator, cfg.pump.sigma_c, cfg.pump.mode_l, &plan.options.threshold)?;
            Ok(Some(GroupData::Values(vec![th.p_th, th.a_in_th])))
        }
        Target::Bandwidth => {
            let Some(lin) = stage_linearized(plan, cfg)? else {
                return Ok(None);
            };
            let bw = entanglement_bandwidth(&lin, &lin.default_omega_grid())?;
            Ok(Some(GroupData::Values(vec![
                bw.width_hz,
                bw.omega_star / TAU,
                bw.cs_extremum,
                bw.omega_lo / TAU,
                bw.omega_hi / TAU,
                flag(bw.edge_clipped),
            ])))
        }
        Target::Qsweep => {
            let th = threshold_power(
                &cfg.resonator,
                cfg.pump.sigma_c,
                plan.options.threshold_mode_l,
                &plan.options.threshold,
            )?;
            let Some(lin) = stage_linearized(plan, cfg)? else {
                return Ok(None);
            };
            let bw = entanglement_bandwidth(&lin, &lin.default_omega_grid())?;
            Ok(Some(GroupData::Values(vec![
                bw.width_hz,
                bw.cs_extremum,
                th.p_th,
                flag(bw.edge_clipped),
            ])))
        }
        Target::MapRf | Target::MapAngle => Ok(stage_linearized(plan, cfg)?.map(|l| GroupData::Linearized(Box::new(l)))),
    }
}

fn eval_cell(plan: &SweepPlan, data: &GroupData, omega_hz: f64, phi: f64) -> Result<Vec<f64>> {
    match data {
        GroupData::Values(v) => Ok(v.clone()),
        GroupData::Linearized(lin) => {
            let spec = output_spectrum(lin, TAU * omega_hz)?;
            Ok(match plan.target {
                Target::MapAngle => {
                    let (cs, ti) = min_over_idler_angle(&spec, phi);
                    vec![cs, ti]
                }
                _ => {
                    let p = optimize_angles(&spec);
                    vec![p.c_s, p.angles.theta_s, p.angles.theta_i, p.dx_minus_sq, p.dy_plus_sq]
                }
            })
        }
    }
}

/// Row-major multi-index of `cell`.
fn unravel(mut cell: usize, counts: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; counts.len()];
    for k in (0..counts.len()).rev() {
        idx[k] = cell % counts[k];
        cell /= counts[k];
    }
    idx
}

/// Evaluate every cell of `plan`. Validation failures abort before any
/// computation; failures inside a cell are recorded in its diagnostic.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepResult> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.options.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| sweep_in_pool(plan)))
}

fn sweep_in_pool(plan: &SweepPlan) -> SweepResult {
    let grids: Vec<Vec<f64>> = plan.axes.iter().map(Axis::values).collect();
    let counts: Vec<usize> = plan.axes.iter().map(|a| a.count).collect();
    let outer: Vec<usize> = (0..plan.axes.len()).filter(|&k| !plan.axes[k].name.is_inner()).collect();
    let outer_counts: Vec<usize> = outer.iter().map(|&k| counts[k]).collect();
    let n_groups: usize = outer_counts.iter().product();
    let n_cells = plan.cell_count();

    let groups: Vec<Result<Option<GroupData>>> = (0..n_groups)
        .into_par_iter()
        .map(|g| {
            let gi = unravel(g, &outer_counts);
            let mut cfg = plan.base.clone();
            for (j, &k) in outer.iter().enumerate() {
                apply_axis(&mut cfg, plan.axes[k].name, grids[k][gi[j]]);
            }
            eval_group(plan, &cfg)
        })
        .collect();

    let axis_pos = |name: AxisName| plan.axes.iter().position(|a| a.name == name);
    let (omega_k, phi_k) = (axis_pos(AxisName::Omega), axis_pos(AxisName::Phi));
    let cells: Vec<(Vec<f64>, CellStatus, Option<Vec<f64>>)> = (0..n_cells)
        .into_par_iter()
        .map(|c| {
            let idx = unravel(c, &counts);
            let coords: Vec<f64> = idx.iter().enumerate().map(|(k, &i)| grids[k][i]).collect();
            let g = outer.iter().fold(0, |acc, &k| acc * counts[k] + idx[k]);
            let omega = omega_k.map_or(0.0, |k| coords[k]);
            let phi = phi_k.map_or(0.0, |k| coords[k]);
            let (status, out) = match &groups[g] {
                Err(e) => (CellStatus::Error(e.to_string()), None),
                Ok(None) => (CellStatus::AbsentStage, None),
                Ok(Some(data)) => match eval_cell(plan, data, omega, phi) {
                    Ok(v) => (CellStatus::Ok, Some(v)),
                    Err(e) => (CellStatus::Error(e.to_string()), None),
                },
            };
            (coords, status, out)
        })
        .collect();

    let mut records = Vec::new();
    let mut diagnostics = Vec::with_capacity(n_cells);
    for (cell, (coords, status, out)) in cells.into_iter().enumerate() {
        if let Some(out) = out {
            records.push(coords.iter().copied().chain(out).collect());
        }
        diagnostics.push(Diagnostic { cell, coords, status });
    }
    SweepResult {
        plan: plan.clone(),
        records,
        diagnostics,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown format `{s}` (expected csv or json)"))),
        }
    }
}

/// Seventeen significant digits: enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// JSON formatter writing every float with [`format_f64`].
#[derive(Default)]
pub struct ExactFloatFormatter;

impl serde_json::ser::Formatter for ExactFloatFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format_f64(v).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(v))
    }
}

/// Serialize `value` as one line of JSON with exact floats.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloatFormatter);
    value.serialize(&mut ser).map_err(|e| Error::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Write a CSV table with a header row; floats use [`format_f64`].
pub fn write_csv<W: io::Write>(w: W, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let io_err = |e: csv::Error| Error::Io(e.to_string());
    out.write_record(header).map_err(io_err)?;
    for row in rows {
        out.write_record(&row).map_err(io_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn emit(result: &SweepResult, format: Format) -> Vec<u8> {
    match format {
        Format::Json => to_json_bytes(result).expect("sweep results serialize"),
        Format::Csv => {
            let mut header = result.columns();
            header.push("status".into());
            let rows = result
                .records
                .iter()
                .map(|r| r.iter().map(|&v| format_f64(v)).chain(["ok".to_string()]).collect());
            let mut out = Vec::new();
            write_csv(&mut out, &header, rows).expect("writing to memory");
            out
        }
    }
}
