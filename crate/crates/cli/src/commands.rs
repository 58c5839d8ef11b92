// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::{PI, TAU};
use std::fmt::Display;
use std::io::Write;

use kqfc_core::entanglement::{entanglement_bandwidth, entanglement_map, optimize_angles, squeezing_map};
use kqfc_core::fluctuations::{linearize, output_spectrum, SpectrumRecord};
use kqfc_core::steady_state::{
    classify_stages, normalize_drive, steady_state_at, threshold_power, ContinuationOptions, Normalization,
    ThresholdOptions,
};
use kqfc_core::sweeps::{emit, run_sweep, CellStatus};
use kqfc_core::{Config, ConfigBuilder, Error, LinearizedSystem, Preset, Stage, SweepPlan};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::output::{Cell, Table};
use crate::{Cli, CliError, Command, FreqArgs};

fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn compute(e: impl Display) -> CliError {
    CliError::Compute(e.to_string())
}

/// Pump flags rewritten as `--set` assignments so they layer last.
fn pump_overrides(cli: &Cli) -> Vec<String> {
    let p = &cli.pump;
    let mut out = Vec::new();
    if let Some(v) = p.sigma_c {
        let key = if cli.global.rad_s { "sigma_c_rad_s" } else { "sigma_c_hz" };
        out.push(format!("{key}={v:?}"));
    }
    if let Some(v) = p.mode_l {
        out.push(format!("mode_l={v}"));
    }
    if let Some(v) = p.a_in {
        out.push(format!("a_in={v:?}"));
    }
    if let Some(v) = p.p_in {
        out.push(format!("p_in={v:?}"));
    }
    if let Some(v) = p.q0 {
        out.push(format!("q0={v:?}"));
    }
    if let Some(v) = p.r {
        out.push(format!("r={v:?}"));
    }
    out
}

/// Preset and config file, without the per-key overrides.
fn base_builder(cli: &Cli) -> Result<ConfigBuilder, CliError> {
    let mut b = match &cli.global.preset {
        Some(name) => ConfigBuilder::from_preset(name.parse::<Preset>().map_err(usage)?),
        None => ConfigBuilder::new(),
    };
    if let Some(path) = &cli.global.config {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        b = b.merge_toml(&text).map_err(usage)?;
    }
    Ok(b)
}

fn overrides(cli: &Cli) -> Vec<String> {
    let mut all = cli.global.set.clone();
    all.extend(pump_overrides(cli));
    all
}

struct Ctx<'a> {
    cli: &'a Cli,
    preset: Option<Preset>,
    config: Config,
}

impl Ctx<'_> {
    fn stage(&self) -> Stage {
        self.cli.global.stage
    }

    fn meta(&self) -> Result<Value, CliError> {
        let p = &self.config.resonator;
        let rates = p.derived_rates().map_err(compute)?;
        let nd = normalize_drive(p, &self.config.pump).map_err(compute)?;
        Ok(json!({
            "preset": self.preset.map(Preset::name),
            "stage": self.stage().name(),
            "config": self.config,
            "rates": rates,
            "normalization": Normalization::new(&rates),
            "zeta0": nd.zeta0,
            "delta_l": nd.delta_l,
            "f_drive": nd.f,
            "a_in": self.config.pump.a_in(p),
            "p_in": self.config.pump.p_in(p),
        }))
    }

    fn linearized(&self) -> Result<LinearizedSystem, CliError> {
        let c = &self.config;
        let stage = self.stage();
        let (nd, ss) = steady_state_at(&c.resonator, &c.pump, stage, &ContinuationOptions::default())
            .map_err(compute)?
            .ok_or_else(|| {
                compute(format!(
                    "stage {stage} does not exist at A_in = {:e}",
                    c.pump.a_in(&c.resonator)
                ))
            })?;
        linearize(&c.resonator, &nd, &ss).map_err(compute)
    }

    fn write(&self, bytes: &[u8]) -> Result<(), CliError> {
        match &self.cli.global.out {
            Some(path) => std::fs::write(path, bytes).map_err(|e| compute(format!("{}: {e}", path.display()))),
            None => std::io::stdout().write_all(bytes).map_err(compute),
        }
    }

    fn emit(&self, table: &Table) -> Result<(), CliError> {
        self.write(&table.render(self.cli.global.format))
    }
}

/// Sideband grid in rad/s; `None` means each system's default grid.
fn requested_grid(f: &FreqArgs, rad_s: bool) -> Result<Option<Vec<f64>>, CliError> {
    let (Some(lo), Some(hi)) = (f.f_min, f.f_max) else {
        return Ok(None);
    };
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(usage("frequency range needs 0 < f-min <= f-max"));
    }
    if f.f_points == 0 {
        return Err(usage("f-points must be at least 1"));
    }
    let scale = if rad_s { 1.0 } else { TAU };
    let (lo, hi) = (scale * lo, scale * hi);
    let n = f.f_points;
    if n == 1 {
        return Ok(Some(vec![lo]));
    }
    let mut grid: Vec<f64> = (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect();
    grid[n - 1] = hi;
    Ok(Some(grid))
}

fn grid_or_default(f: &FreqArgs, rad_s: bool, lin: &LinearizedSystem) -> Result<Vec<f64>, CliError> {
    Ok(requested_grid(f, rad_s)?.unwrap_or_else(|| lin.default_omega_grid()))
}

fn hz(omega: f64) -> f64 {
    omega / TAU
}

fn summary(text: String) {
    eprintln!("{text}");
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.global.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.workers)
            .build_global()
            .map_err(usage)?;
    }
    let base = base_builder(cli)?;
    if let Command::Sweep { plan } = &cli.command {
        return sweep(cli, base, plan);
    }
    let preset = base.preset();
    let mut b = base;
    for s in overrides(cli) {
        b = b.set(&s).map_err(usage)?;
    }
    let config = b.build().map_err(usage)?;
    let ctx = Ctx { cli, preset, config };
    let rad_s = cli.global.rad_s;
    match &cli.command {
        Command::Steady { points } => steady(&ctx, *points),
        Command::Threshold { ceiling, rel_tol } => threshold(&ctx, *ceiling, *rel_tol),
        Command::Spectrum { freq } => {
            requested_grid(freq, rad_s)?;
            spectrum(&ctx, freq)
        }
        Command::Duan { freq } => {
            requested_grid(freq, rad_s)?;
            duan(&ctx, freq)
        }
        Command::MapRf {
            r_min,
            r_max,
            r_points,
            freq,
        } => map_rf(&ctx, *r_min, *r_max, *r_points, freq),
        Command::MapAngle { phi_points, freq } => {
            requested_grid(freq, rad_s)?;
            map_angle(&ctx, *phi_points, freq)
        }
        Command::Bandwidth { freq } => {
            requested_grid(freq, rad_s)?;
            bandwidth(&ctx, freq)
        }
        Command::Sweep { .. } => unreachable!("handled above"),
    }
}

fn steady(ctx: &Ctx, points: usize) -> Result<(), CliError> {
    if points < 2 {
        return Err(usage("steady needs at least 2 points"));
    }
    let c = &ctx.config;
    let top = c.pump.a_in(&c.resonator);
    if !(top > 0.0) {
        return Err(usage("steady sweeps from 0 to A_in, which must be positive"));
    }
    let mut grid: Vec<f64> = (0..points).map(|k| top * k as f64 / (points - 1) as f64).collect();
    grid[points - 1] = top;
    let pts = classify_stages(
        &c.resonator,
        c.pump.sigma_c,
        c.pump.mode_l,
        &grid,
        &ContinuationOptions::default(),
    )
    .map_err(compute)?;

    let mut t = Table::new(
        "steady",
        &["a_in", "stage", "a_p", "a_si", "theta", "psi", "residual"],
        ctx.meta()?,
    );
    let mut counts = [0usize; 5];
    for pt in &pts {
        for s in &pt.states {
            let stage = s.stage.unwrap_or(Stage::Unstable);
            counts[stage as usize] += 1;
            t.push(vec![
                pt.a_in.into(),
                stage.name().into(),
                s.a_p.into(),
                s.a_si.into(),
                s.theta_cap.into(),
                s.psi.into(),
                s.max_residual(&pt.drive).into(),
            ]);
        }
    }
    ctx.emit(&t)?;
    let first = |stage: Stage| {
        pts.iter()
            .find(|p| p.stage(stage).is_some_and(|s| s.above_threshold))
            .map(|p| p.a_in)
    };
    let jump = match first(Stage::II) {
        Some(a) => format!("the upward sweep enters stage II at A_in = {a:.4e}"),
        None => "the upward sweep stays in stage I".into(),
    };
    let lower = match pts.iter().find(|p| p.stage(Stage::III).is_some_and(|s| s.above_threshold)) {
        Some(p) => format!("stage III persists on the way down to A_in = {:.4e}", p.a_in),
        None => "no stage III state was found".into(),
    };
    summary(format!(
        "steady: {points} pump amplitudes from 0 to {top:.4e} s^-1/2 at mode pair l = {}; \
         states by stage I/II/III/IV/UNSTABLE = {}/{}/{}/{}/{}; {jump}; {lower}.",
        c.pump.mode_l, counts[0], counts[1], counts[2], counts[3], counts[4]
    ));
    Ok(())
}

fn threshold(ctx: &Ctx, ceiling: f64, rel_tol: f64) -> Result<(), CliError> {
    if !(ceiling > 0.0 && rel_tol > 0.0) {
        return Err(usage("ceiling and rel-tol must be positive"));
    }
    let c = &ctx.config;
    let th = threshold_power(&c.resonator, c.pump.sigma_c, c.pump.mode_l, &ThresholdOptions { ceiling, rel_tol })
        .map_err(compute)?;
    let mut t = Table::new("threshold", &["sigma_c_hz", "mode_l", "p_th_w", "a_in_th"], ctx.meta()?);
    t.push(vec![
        hz(c.pump.sigma_c).into(),
        (c.pump.mode_l as f64).into(),
        th.p_th.into(),
        th.a_in_th.into(),
    ]);
    ctx.emit(&t)?;
    summary(format!(
        "threshold: mode pair l = {} at σ_c/2π = {:.4e} Hz starts oscillating at P_th = {:.6e} W (A_in = {:.6e} s^-1/2).",
        c.pump.mode_l,
        hz(c.pump.sigma_c),
        th.p_th,
        th.a_in_th
    ));
    Ok(())
}

fn spectrum(ctx: &Ctx, freq: &FreqArgs) -> Result<(), CliError> {
    let lin = ctx.linearized()?;
    let grid = grid_or_default(freq, ctx.cli.global.rad_s, &lin)?;
    let spectra = grid
        .par_iter()
        .map(|&w| output_spectrum(&lin, w))
        .collect::<Result<Vec<_>, Error>>()
        .map_err(compute)?;
    let mut cols = vec!["omega_hz".to_string()];
    for r in 1..=4 {
        for c in 1..=4 {
            cols.push(format!("re_s{r}{c}"));
            cols.push(format!("im_s{r}{c}"));
        }
    }
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new("spectrum", &col_refs, ctx.meta()?);
    let mut nested = Vec::with_capacity(spectra.len());
    for s in &spectra {
        let mut row: Vec<Cell> = vec![hz(s.omega).into()];
        for z in s.rows().iter().flatten() {
            row.push(z.re.into());
            row.push(z.im.into());
        }
        t.push(row);
        let rec = SpectrumRecord::from(s);
        nested.push(json!({ "omega_hz": hz(rec.omega), "s_a": rec.s_a }));
    }
    t.json_records = Some(Value::Array(nested));
    ctx.emit(&t)?;
    summary(format!(
        "spectrum: stage {} output noise matrix at {} sideband frequencies from {:.4e} to {:.4e} Hz; κ/2π = {:.4e} Hz.",
        ctx.stage(),
        grid.len(),
        hz(grid[0]),
        hz(grid[grid.len() - 1]),
        hz(lin.kappa)
    ));
    Ok(())
}

fn duan(ctx: &Ctx, freq: &FreqArgs) -> Result<(), CliError> {
    let lin = ctx.linearized()?;
    let grid = grid_or_default(freq, ctx.cli.global.rad_s, &lin)?;
    let pts = grid
        .par_iter()
        .map(|&w| output_spectrum(&lin, w).map(|s| optimize_angles(&s)))
        .collect::<Result<Vec<_>, Error>>()
        .map_err(compute)?;
    let mut t = Table::new(
        "duan",
        &["f_hz", "cs_min", "theta_s", "theta_i", "phi_rad", "dx_minus_sq", "dy_plus_sq", "g"],
        ctx.meta()?,
    );
    for p in &pts {
        t.push(vec![
            hz(p.omega).into(),
            p.c_s.into(),
            p.angles.theta_s.into(),
            p.angles.theta_i.into(),
            p.angles.phi.into(),
            p.dx_minus_sq.into(),
            p.dy_plus_sq.into(),
            p.g.into(),
        ]);
    }
    ctx.emit(&t)?;
    let best = pts.iter().min_by(|a, b| a.c_s.total_cmp(&b.c_s)).expect("non-empty grid");
    let entangled = pts.iter().filter(|p| p.is_entangled()).count();
    summary(format!(
        "duan: stage {} over {} frequencies; extremal C_s = {:.6} at f = {:.4e} Hz (θ_s = {:.4}, θ_i = {:.4}); \
         {entangled} frequencies show entanglement.",
        ctx.stage(),
        pts.len(),
        best.c_s,
        hz(best.omega),
        best.angles.theta_s,
        best.angles.theta_i
    ));
    Ok(())
}

fn map_rf(ctx: &Ctx, r_min: f64, r_max: f64, r_points: usize, freq: &FreqArgs) -> Result<(), CliError> {
    if !(r_min > 0.0 && r_max >= r_min && r_max.is_finite()) || r_points == 0 {
        return Err(usage("coupling range needs 0 < r-min <= r-max and r-points >= 1"));
    }
    let grid = requested_grid(freq, ctx.cli.global.rad_s)?;
    let r_grid: Vec<f64> = if r_points == 1 {
        vec![r_min]
    } else {
        let mut v: Vec<f64> = (0..r_points)
            .map(|k| r_min + (r_max - r_min) * k as f64 / (r_points - 1) as f64)
            .collect();
        v[r_points - 1] = r_max;
        v
    };
    let c = &ctx.config;
    let rows = entanglement_map(
        &c.resonator,
        &c.pump,
        ctx.stage(),
        &r_grid,
        grid.as_deref(),
        &ContinuationOptions::default(),
    );
    let mut t = Table::new("map-rf", &["r", "f_hz", "cs_min", "theta_s", "theta_i"], ctx.meta()?);
    let mut diagnostics = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    let blank = |t: &mut Table, r: f64| match &grid {
        Some(g) => g
            .iter()
            .for_each(|&w| t.push(vec![r.into(), hz(w).into(), Cell::Empty, Cell::Empty, Cell::Empty])),
        None => t.push(vec![r.into(), Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty]),
    };
    for row in &rows {
        match &row.cells {
            Ok(Some(cells)) => {
                for p in cells {
                    t.push(vec![
                        row.r.into(),
                        hz(p.omega).into(),
                        p.c_s.into(),
                        p.angles.theta_s.into(),
                        p.angles.theta_i.into(),
                    ]);
                    if best.is_none_or(|b| p.c_s < b.0) {
                        best = Some((p.c_s, row.r, hz(p.omega)));
                    }
                }
            }
            Ok(None) => {
                blank(&mut t, row.r);
                diagnostics.push(json!({ "r": row.r, "status": "absent-stage" }));
            }
            Err(e) => {
                blank(&mut t, row.r);
                eprintln!("kqfc: map-rf row r = {} failed: {e}", row.r);
                diagnostics.push(json!({ "r": row.r, "status": "error", "message": e.to_string() }));
            }
        }
    }
    let failed = rows.iter().filter(|r| r.cells.is_err()).count();
    if failed == rows.len() {
        return Err(compute(format!("every row of the map failed; first: {}", rows[0].cells.as_ref().unwrap_err())));
    }
    t.extra.push(("diagnostics", Value::Array(diagnostics)));
    ctx.emit(&t)?;
    let absent = rows.iter().filter(|r| matches!(r.cells, Ok(None))).count();
    let extreme = match best {
        Some((cs, r, f)) => format!("extremal C_s = {cs:.6} at r = {r:.4}, f = {f:.4e} Hz"),
        None => "no row produced values".into(),
    };
    summary(format!(
        "map-rf: stage {} over {} coupling ratios from {r_min} to {r_max}; {absent} rows without that stage, \
         {failed} rows failed; {extreme}.",
        ctx.stage(),
        rows.len()
    ));
    Ok(())
}

fn map_angle(ctx: &Ctx, phi_points: usize, freq: &FreqArgs) -> Result<(), CliError> {
    if phi_points < 2 {
        return Err(usage("phi-points must be at least 2"));
    }
    let lin = ctx.linearized()?;
    let grid = grid_or_default(freq, ctx.cli.global.rad_s, &lin)?;
    let mut phi: Vec<f64> = (0..phi_points)
        .map(|k| -PI + TAU * k as f64 / (phi_points - 1) as f64)
        .collect();
    phi[phi_points - 1] = PI;
    let map = squeezing_map(&lin, &grid, &phi).map_err(compute)?;
    let mut t = Table::new("map-angle", &["f_hz", "phi_rad", "cs"], ctx.meta()?);
    for (k, &w) in map.omega.iter().enumerate() {
        for (j, &p) in map.phi.iter().enumerate() {
            t.push(vec![hz(w).into(), p.into(), map.cs[k][j].into()]);
        }
    }
    let optimum: Vec<Value> = (0..map.omega.len())
        .map(|k| {
            json!({
                "f_hz": hz(map.omega[k]),
                "phi_rad": map.best_phi[k],
                "cs": map.best_cs[k],
                "sum_angle_rad": map.best_sum_angle[k],
            })
        })
        .collect();
    t.extra.push(("optimum", Value::Array(optimum)));
    ctx.emit(&t)?;
    let k = (0..map.omega.len())
        .min_by(|&a, &b| map.best_cs[a].total_cmp(&map.best_cs[b]))
        .expect("non-empty grid");
    summary(format!(
        "map-angle: stage {} over {} frequencies × {phi_points} readout angles; extremal C_s = {:.6} at \
         f = {:.4e} Hz, φ = {:.4} rad, θ_s+θ_i = {:.4} rad.",
        ctx.stage(),
        map.omega.len(),
        map.best_cs[k],
        hz(map.omega[k]),
        map.best_phi[k],
        map.best_sum_angle[k]
    ));
    Ok(())
}

fn bandwidth(ctx: &Ctx, freq: &FreqArgs) -> Result<(), CliError> {
    let lin = ctx.linearized()?;
    let grid = grid_or_default(freq, ctx.cli.global.rad_s, &lin)?;
    let bw = entanglement_bandwidth(&lin, &grid).map_err(compute)?;
    let mut t = Table::new(
        "bandwidth",
        &["width_hz", "f_star_hz", "cs_extremum", "f_lo_hz", "f_hi_hz", "edge_clipped"],
        ctx.meta()?,
    );
    t.push(vec![
        bw.width_hz.into(),
        hz(bw.omega_star).into(),
        bw.cs_extremum.into(),
        hz(bw.omega_lo).into(),
        hz(bw.omega_hi).into(),
        Cell::Bool(bw.edge_clipped),
    ]);
    ctx.emit(&t)?;
    summary(format!(
        "bandwidth: stage {} C_s reaches {:.6} at f = {:.4e} Hz; the 1/e interval [{:.4e}, {:.4e}] Hz gives \
         δf = {:.4e} Hz{}.",
        ctx.stage(),
        bw.cs_extremum,
        hz(bw.omega_star),
        hz(bw.omega_lo),
        hz(bw.omega_hi),
        bw.width_hz,
        if bw.edge_clipped { " (clipped at the grid edge)" } else { "" }
    ));
    Ok(())
}

fn sweep(cli: &Cli, base: ConfigBuilder, path: &std::path::Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut plan = SweepPlan::from_toml(&text, base, &overrides(cli)).map_err(usage)?;
    if cli.global.workers > 0 {
        plan.options.workers = cli.global.workers;
    }
    plan.validate().map_err(usage)?;
    let result = run_sweep(&plan).map_err(compute)?;
    let bytes = emit(&result, cli.global.format);
    match &cli.global.out {
        Some(p) => std::fs::write(p, &bytes).map_err(|e| compute(format!("{}: {e}", p.display())))?,
        None => std::io::stdout().write_all(&bytes).map_err(compute)?,
    }
    let absent = result
        .diagnostics
        .iter()
        .filter(|d| d.status == CellStatus::AbsentStage)
        .count();
    let failed = result
        .diagnostics
        .iter()
        .filter(|d| matches!(d.status, CellStatus::Error(_)))
        .count();
    summary(format!(
        "sweep: target {} over {} cells; {} records written, {absent} cells without stage {}, {failed} cells failed.",
        plan.target,
        plan.cell_count(),
        result.records.len(),
        plan.stage
    ));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("kqfc").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn pump_flags_become_trailing_overrides() {
        let c = cli(&["--set", "q0=3e6", "steady", "--sigma-c", "8e9", "--mode-l", "4", "--q0", "2e6"]);
        assert_eq!(overrides(&c), ["q0=3e6", "sigma_c_hz=8000000000.0", "mode_l=4", "q0=2000000.0"]);
        let c = cli(&["--rad-s", "--sigma-c", "1.5", "threshold"]);
        assert_eq!(pump_overrides(&c), ["sigma_c_rad_s=1.5"]);
    }

    #[test]
    fn requested_grid_is_log_spaced_with_exact_ends() {
        let f = FreqArgs {
            f_min: Some(1e6),
            f_max: Some(1e9),
            f_points: 4,
        };
        let g = requested_grid(&f, false).unwrap().unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g[0], TAU * 1e6);
        assert_eq!(g[3], TAU * 1e9);
        assert!((g[1] / g[0] - 10.0).abs() < 1e-12);
        let r = requested_grid(&f, true).unwrap().unwrap();
        assert_eq!(r[0], 1e6);
        assert_eq!(r[3], 1e9);
    }

    #[test]
    fn requested_grid_rejects_bad_ranges() {
        let bad = |lo, hi, n| {
            let f = FreqArgs {
                f_min: Some(lo),
                f_max: Some(hi),
                f_points: n,
            };
            matches!(requested_grid(&f, false), Err(CliError::Usage(_)))
        };
        assert!(bad(0.0, 1.0, 3));
        assert!(bad(2.0, 1.0, 3));
        assert!(bad(1.0, 2.0, 0));
        let none = FreqArgs {
            f_min: None,
            f_max: None,
            f_points: 10,
        };
        assert!(requested_grid(&none, false).unwrap().is_none());
    }
}
