// SPDX-License-Identifier: Apache-2.0

//! Quadrature spectra, the Duan value C_s and its optimization over the
//! detection angles.
//!
//! Quadratures are x̂ = (â + â†)/√2 and ŷ = (−iâ + iâ†)/√2, so vacuum has
//! variance 1/2 and C_s = (Δx̂₋)² + (Δŷ₊)² − |cos(θ_s − θ_i)| vanishes there.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI, TAU};

use crate::error::{Error, Result};
use crate::fluctuations::{linearize, output_spectrum, CMatrix4, LinearizedSystem, NoiseSpectrum};
use crate::optimize::{bisect, golden_section, nelder_mead_2d};
use crate::params::{PumpDrive, ResonatorParams};
use crate::steady_state::{steady_state_at, ContinuationOptions, Stage};

/// C_s values within this distance of zero are not reported as entangled.
pub const ENTANGLEMENT_GUARD: f64 = 1e-9;

/// Wrap an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionAngles {
    pub theta_s: f64,
    pub theta_i: f64,
    /// Readout angle θ_s − θ_i.
    pub phi: f64,
}

impl DetectionAngles {
    pub fn new(theta_s: f64, theta_i: f64) -> Self {
        let (theta_s, theta_i) = (wrap_angle(theta_s), wrap_angle(theta_i));
        DetectionAngles {
            theta_s,
            theta_i,
            phi: wrap_angle(theta_s - theta_i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntanglementPoint {
    /// rad/s
    pub omega: f64,
    pub angles: DetectionAngles,
    pub dx_minus_sq: f64,
    pub dy_plus_sq: f64,
    pub g: f64,
    pub c_s: f64,
}

impl EntanglementPoint {
    /// True only when C_s is below zero by more than the guard band.
    pub fn is_entangled(&self) -> bool {
        self.c_s < -ENTANGLEMENT_GUARD
    }
}

/// Rotation to (x̂_s, x̂_i, ŷ_s, ŷ_i).
pub fn p_matrix(angles: &DetectionAngles) -> CMatrix4 {
    let es = Complex64::from_polar(1.0, -angles.theta_s);
    let ei = Complex64::from_polar(1.0, -angles.theta_i);
    let i = Complex64::i();
    let z = Complex64::new(0.0, 0.0);
    let rows = [
        [es, es.conj(), z, z],
        [z, z, ei, ei.conj()],
        [-i * es, i * es.conj(), z, z],
        [z, z, -i * ei, i * ei.conj()],
    ];
    CMatrix4::from_fn(|r, c| rows[r][c]) * Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)
}

/// Sum/difference basis (ŷ₊, x̂₊, ŷ₋, x̂₋).
pub fn q_matrix() -> CMatrix4 {
    let rows = [[0.0, 0.0, 1.0, 1.0], [1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0], [1.0, -1.0, 0.0, 0.0]];
    CMatrix4::from_fn(|r, c| Complex64::new(rows[r][c] * std::f64::consts::FRAC_1_SQRT_2, 0.0))
}

/// S_X(ω) = Q·P·S_a(ω)·(Q·P)ᵀ.
pub fn quadrature_spectrum(spec: &NoiseSpectrum, angles: &DetectionAngles) -> CMatrix4 {
    let qp = q_matrix() * p_matrix(angles);
    qp * spec.s_a * qp.transpose()
}

fn bilinear(v: &[Complex64; 4], s: &CMatrix4) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for r in 0..4 {
        let mut row = Complex64::new(0.0, 0.0);
        for c in 0..4 {
            row += s[(r, c)] * v[c];
        }
        acc += v[r] * row;
    }
    acc.re
}

/// ((Δx̂₋)², (Δŷ₊)²) from the two relevant rows of Q·P.
fn variances(s: &CMatrix4, theta_s: f64, theta_i: f64) -> (f64, f64) {
    let es = Complex64::from_polar(0.5, -theta_s);
    let ei = Complex64::from_polar(0.5, -theta_i);
    let i = Complex64::i();
    let x_minus = [es, es.conj(), -ei, -ei.conj()];
    let y_plus = [-i * es, i * es.conj(), -i * ei, i * ei.conj()];
    (bilinear(&x_minus, s), bilinear(&y_plus, s))
}

fn cs_at(s: &CMatrix4, theta_s: f64, theta_i: f64) -> f64 {
    let (dx, dy) = variances(s, theta_s, theta_i);
    dx + dy - (theta_s - theta_i).cos().abs()
}

pub fn duan_value(spec: &NoiseSpectrum, angles: &DetectionAngles) -> EntanglementPoint {
    let (dx_minus_sq, dy_plus_sq) = variances(&spec.s_a, angles.theta_s, angles.theta_i);
    let g = (angles.theta_s - angles.theta_i).cos();
    EntanglementPoint {
        omega: spec.omega,
        angles: *angles,
        dx_minus_sq,
        dy_plus_sq,
        g,
        c_s: dx_minus_sq + dy_plus_sq - g.abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSearch {
    /// Points per angle in the coarse grid.
    pub grid: usize,
    /// Simplex diameter at which refinement stops, rad.
    pub xtol: f64,
}

impl Default for AngleSearch {
    fn default() -> Self {
        AngleSearch { grid: 64, xtol: 1e-6 }
    }
}

fn grid_angle(k: usize, n: usize) -> f64 {
    -PI + (k + 1) as f64 * TAU / n as f64
}

/// Of (θ_s, θ_i) and (θ_s + π, θ_i + π), which give the same C_s, the
/// lexicographically smaller after wrapping.
fn canonical_pair(theta_s: f64, theta_i: f64) -> DetectionAngles {
    let a = DetectionAngles::new(theta_s, theta_i);
    let b = DetectionAngles::new(theta_s + PI, theta_i + PI);
    if (b.theta_s, b.theta_i) < (a.theta_s, a.theta_i) {
        b
    } else {
        a
    }
}

pub fn optimize_angles(spec: &NoiseSpectrum) -> EntanglementPoint {
    optimize_angles_with(spec, &AngleSearch::default())
}

/// Global minimum of C_s over (θ_s, θ_i): coarse grid, then Nelder–Mead from
/// the best grid point. The refined result is never worse than the grid.
pub fn optimize_angles_with(spec: &NoiseSpectrum, search: &AngleSearch) -> EntanglementPoint {
    let n = search.grid.max(1);
    let s = &spec.s_a;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            let (ts, ti) = (grid_angle(a, n), grid_angle(b, n));
            let c = cs_at(s, ts, ti);
            if c < best.0 {
                best = (c, ts, ti);
            }
        }
    }
    let step = TAU / n as f64;
    let (x, v) = nelder_mead_2d(|p| cs_at(s, p[0], p[1]), [best.1, best.2], 0.5 * step, search.xtol, 4000);
    let (ts, ti) = if v <= best.0 { (x[0], x[1]) } else { (best.1, best.2) };
    duan_value(spec, &canonical_pair(ts, ti))
}

/// min over θ_i of C_s(φ + θ_i, θ_i): a 64-point scan refined by golden
/// section. Returns (C_s, θ_i).
pub fn min_over_idler_angle(spec: &NoiseSpectrum, phi: f64) -> (f64, f64) {
    const N: usize = 64;
    let s = &spec.s_a;
    let f = |ti: f64| cs_at(s, phi + ti, ti);
    let (mut best_c, mut best_t) = (f64::INFINITY, 0.0);
    for k in 0..N {
        let t = grid_angle(k, N);
        let c = f(t);
        if c < best_c {
            best_c = c;
            best_t = t;
        }
    }
    let h = TAU / N as f64;
    let (t, c) = golden_section(f, best_t - h, best_t + h, 1e-9);
    if c <= best_c {
        (c, wrap_angle(t))
    } else {
        (best_c, best_t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezingMap {
    /// rad/s
    pub omega: Vec<f64>,
    /// rad
    pub phi: Vec<f64>,
    /// `cs[k][j]` at `omega[k]`, `phi[j]`.
    pub cs: Vec<Vec<f64>>,
    /// Readout angle minimizing each row; ties within 1e-12 go to the
    /// smallest |φ|.
    pub best_phi: Vec<f64>,
    pub best_cs: Vec<f64>,
    /// θ_s + θ_i at the row optimum: the frequency-dependent squeezing angle.
    pub best_sum_angle: Vec<f64>,
}

/// C_s over (ω, φ), each cell minimized over the idler angle.
pub fn squeezing_map(lin: &LinearizedSystem, omega_grid: &[f64], phi_grid: &[f64]) -> Result<SqueezingMap> {
    if omega_grid.is_empty() || phi_grid.is_empty() {
        return Err(Error::validation("grid", "omega and phi grids must be non-empty"));
    }
    let rows: Vec<Vec<(f64, f64)>> = omega_grid
        .par_iter()
        .map(|&w| {
            let spec = output_spectrum(lin, w)?;
            Ok(phi_grid.iter().map(|&phi| min_over_idler_angle(&spec, phi)).collect())
        })
        .collect::<Result<_>>()?;
    let mut map = SqueezingMap {
        omega: omega_grid.to_vec(),
        phi: phi_grid.to_vec(),
        cs: Vec::with_capacity(rows.len()),
        best_phi: Vec::with_capacity(rows.len()),
        best_cs: Vec::with_capacity(rows.len()),
        best_sum_angle: Vec::with_capacity(rows.len()),
    };
    for row in rows {
        let mut j_best = 0;
        for j in 1..row.len() {
            let (c, cb) = (row[j].0, row[j_best].0);
            let closer = phi_grid[j].abs() < phi_grid[j_best].abs()
                || (phi_grid[j].abs() == phi_grid[j_best].abs() && phi_grid[j] < phi_grid[j_best]);
            if c < cb - 1e-12 || ((c - cb).abs() <= 1e-12 && closer) {
                j_best = j;
            }
        }
        let phi = phi_grid[j_best];
        let ti = row[j_best].1;
        map.best_phi.push(phi);
        map.best_cs.push(row[j_best].0);
        map.best_sum_angle.push(wrap_angle(phi + 2.0 * ti));
        map.cs.push(row.into_iter().map(|c| c.0).collect());
    }
    Ok(map)
}

/// One row (fixed r) of an r × f entanglement map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapRow {
    pub r: f64,
    /// `Ok(None)` when the requested stage does not exist for this r.
    pub cells: std::result::Result<Option<Vec<EntanglementPoint>>, Error>,
}

/// Re-solve the configured stage for each coupling ratio and record the
/// angle-optimized C_s on the frequency grid. `omega_grid = None` uses each
/// row's default grid.
pub fn entanglement_map(
    p: &ResonatorParams,
    d: &PumpDrive,
    stage: Stage,
    r_grid: &[f64],
    omega_grid: Option<&[f64]>,
    opts: &ContinuationOptions,
) -> Vec<MapRow> {
    r_grid
        .par_iter()
        .map(|&r| {
            let row = || -> Result<Option<Vec<EntanglementPoint>>> {
                let mut p = p.clone();
                p.r = r;
                let Some((nd, ss)) = steady_state_at(&p, d, stage, opts)? else {
                    return Ok(None);
                };
                let lin = linearize(&p, &nd, &ss)?;
                let grid = omega_grid.map(<[f64]>::to_vec).unwrap_or_else(|| lin.default_omega_grid());
                let cells = grid
                    .iter()
                    .map(|&w| output_spectrum(&lin, w).map(|s| optimize_angles(&s)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Some(cells))
            };
            MapRow { r, cells: row() }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    /// Width of the 1/e interval, Hz.
    pub width_hz: f64,
    /// rad/s
    pub omega_star: f64,
    pub cs_extremum: f64,
    /// Interval edges, rad/s.
    pub omega_lo: f64,
    pub omega_hi: f64,
    /// The interval reached an end of the grid.
    pub edge_clipped: bool,
}

/// 1/e width of the dip of `profile` around its minimum on `grid` (rad/s,
/// ascending). Edges are bisected between neighbouring samples until the
/// bracket is below `rel_tol` of the width.
pub fn bandwidth_from_profile<F: Fn(f64) -> Result<f64> + Sync>(
    profile: F,
    grid: &[f64],
    rel_tol: f64,
) -> Result<Bandwidth> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation("omega_grid", "needs two or more strictly increasing points"));
    }
    let values: Vec<f64> = grid.par_iter().map(|&w| profile(w)).collect::<Result<_>>()?;
    let (k_star, &c_star) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    if !(c_star < -ENTANGLEMENT_GUARD) {
        return Err(Error::NoEntanglement { min_cs: c_star });
    }
    let level = c_star / E;
    let inside = |c: f64| c <= level;
    let mut lo = k_star;
    while lo > 0 && inside(values[lo - 1]) {
        lo -= 1;
    }
    let mut hi = k_star;
    while hi + 1 < grid.len() && inside(values[hi + 1]) {
        hi += 1;
    }
    let rough = (grid[hi] - grid[lo]).max(grid[k_star] * 1e-6).max(f64::MIN_POSITIVE);
    let tol = rel_tol * rough;
    let g = |w: f64| profile(w).map(|c| c - level).unwrap_or(f64::NAN);
    let edge_lo = if lo == 0 {
        grid[0]
    } else {
        bisect(&g, grid[lo - 1], grid[lo], tol).unwrap_or(grid[lo])
    };
    let edge_hi = if hi + 1 == grid.len() {
        grid[hi]
    } else {
        bisect(&g, grid[hi], grid[hi + 1], tol).unwrap_or(grid[hi])
    };
    Ok(Bandwidth {
        width_hz: (edge_hi - edge_lo) / TAU,
        omega_star: grid[k_star],
        cs_extremum: c_star,
        omega_lo: edge_lo,
        omega_hi: edge_hi,
        edge_clipped: lo == 0 || hi + 1 == grid.len(),
    })
}

/// Entanglement bandwidth of a linearized state with per-frequency optimal
/// detection angles.
pub fn entanglement_bandwidth(lin: &LinearizedSystem, omega_grid: &[f64]) -> Result<Bandwidth> {
    bandwidth_from_profile(|w| output_spectrum(lin, w).map(|s| optimize_angles(&s).c_s), omega_grid, 1e-4)
}
