// SPDX-License-Identifier: Apache-2.0

//! Mean-field steady states of the pump/signal/idler triplet.
//!
//! Everything here works in normalized units: time is measured in 1/κ, so
//! detunings are ζ = σ_c/κ and δ = Δ_l/κ, and amplitudes are scaled so that
//! the Kerr shift per unit |a|² is one (a = sqrt(η/κ)·α). In these units the
//! normalized drive is F = sqrt(2κ_ex·η/κ³)·A_in.
//!
//! With x = A_p² and y = A² the stationary conditions read
//!
//! ```text
//! x² = 1 + (δ − 2x − 3y)²
//! F² = x(1 + 2y/x)² + x[ζ − x − 2(y/x)(δ − 3y)]²
//! sinΘ = 1/x,   cosΘ = (δ − 3y − 2x)/x
//! F·sinψ = A_p[ζ − x − 2(y/x)(δ − 3y)],   F·cosψ = A_p(1 + 2y/x)
//! ```
//!
//! and for y = 0 only the last three survive, giving the cubic
//! F² = x(1 + (ζ − x)²).

use nalgebra::SMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optimize::{bisect, golden_section};
use crate::params::{DerivedRates, PumpDrive, ResonatorParams, HBAR};

/// Largest accepted residual of a stationary relation (normalized units).
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Solutions closer than this in (A_p, A) are the same solution.
pub const MERGE_TOL: f64 = 1e-8;
/// A state is stable when no Jacobian eigenvalue has real part above this.
///
/// Above threshold the phase-difference mode has an exactly zero eigenvalue,
/// so the comparison cannot be against zero itself.
pub const STABILITY_TOL: f64 = 1e-7;

const SQRT3: f64 = 1.732_050_807_568_877_2;
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedDrive {
    pub f: f64,
    pub zeta0: f64,
    pub delta_l: f64,
    pub d3_over_2: f64,
}

impl NormalizedDrive {
    pub fn new(f: f64, zeta0: f64, d3_over_2: f64) -> Self {
        NormalizedDrive {
            f,
            zeta0,
            delta_l: zeta0 + d3_over_2,
            d3_over_2,
        }
    }

    pub fn with_f(self, f: f64) -> Self {
        NormalizedDrive { f, ..self }
    }
}

/// Scale factors between physical and normalized quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub kappa: f64,
    pub kappa0: f64,
    pub kappa_ex: f64,
    pub eta: f64,
    /// F / A_in = sqrt(2κ_ex·η/κ³), s^(1/2).
    pub drive_scale: f64,
}

impl Normalization {
    pub fn new(rates: &DerivedRates) -> Self {
        Normalization {
            kappa: rates.kappa,
            kappa0: rates.kappa0,
            kappa_ex: rates.kappa_ex,
            eta: rates.eta,
            drive_scale: (2.0 * rates.kappa_ex * rates.eta / rates.kappa.powi(3)).sqrt(),
        }
    }
}

pub fn normalize_drive(p: &ResonatorParams, d: &PumpDrive) -> Result<NormalizedDrive> {
    let rates = p.derived_rates()?;
    d.validate(p)?;
    if !(rates.kappa > 0.0) {
        return Err(Error::validation("kappa", "total loss rate must be positive"));
    }
    let scale = Normalization::new(&rates).drive_scale;
    Ok(NormalizedDrive::new(
        scale * d.a_in(p),
        d.sigma_c / rates.kappa,
        p.integrated_dispersion(d.mode_l as i32) / rates.kappa,
    ))
}

/// Inverse of [`normalize_drive`]; the pump level comes back as an amplitude.
pub fn denormalize_drive(p: &ResonatorParams, nd: &NormalizedDrive, mode_l: u32) -> Result<PumpDrive> {
    let rates = p.derived_rates()?;
    let scale = Normalization::new(&rates).drive_scale;
    if !(scale > 0.0) {
        return Err(Error::validation("eta", "a zero Kerr coefficient cannot be denormalized"));
    }
    let d3 = p.integrated_dispersion(mode_l as i32) / rates.kappa;
    if (d3 - nd.d3_over_2).abs() > 1e-9 * d3.abs().max(1.0) {
        return Err(Error::validation(
            "d3_over_2",
            format!("{} does not match mode {mode_l} of this resonator ({d3})", nd.d3_over_2),
        ));
    }
    let d = PumpDrive::with_amplitude(nd.f / scale, nd.zeta0 * rates.kappa, mode_l);
    d.validate(p)?;
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    I,
    II,
    III,
    IV,
    #[serde(rename = "UNSTABLE")]
    Unstable,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::I => "I",
            Stage::II => "II",
            Stage::III => "III",
            Stage::IV => "IV",
            Stage::Unstable => "UNSTABLE",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Stage::I),
            "II" | "2" => Ok(Stage::II),
            "III" | "3" => Ok(Stage::III),
            "IV" | "4" => Ok(Stage::IV),
            "UNSTABLE" => Ok(Stage::Unstable),
            _ => Err(Error::Config(format!("unknown stage `{s}` (expected I, II, III, IV)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchKind {
    Below,
    Above,
}

/// Identifies the monotone piece of the response curve a solution sits on.
///
/// Below threshold the segments are the pieces of the cubic between its
/// turning points (0 lower, 1 middle, 2 upper). Above threshold they are the
/// monotone pieces of F²(v) along the parametrization used by
/// [`solve_above_threshold`]. Neither depends on F, so continuation in the
/// pump level can follow a branch by its id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Branch {
    pub kind: BranchKind,
    pub segment: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub a_p: f64,
    pub a_si: f64,
    /// Θ = θ_s + θ_i − 2θ_p. Below threshold the signal/idler frame is
    /// locked to the pump phase, so Θ = 0.
    pub theta_cap: f64,
    /// ψ = θ_in − θ_p with θ_in = 0.
    pub psi: f64,
    pub f_drive: f64,
    /// `None` until [`classify_stages`] labels the state, except that
    /// unstable solutions always carry [`Stage::Unstable`].
    pub stage: Option<Stage>,
    pub above_threshold: bool,
    pub branch: Branch,
    pub stable: bool,
}

impl SteadyState {
    pub fn x(&self) -> f64 {
        self.a_p * self.a_p
    }

    pub fn y(&self) -> f64 {
        self.a_si * self.a_si
    }

    /// Mean-field phases (θ_p, θ_s, θ_i).
    pub fn phases(&self) -> (f64, f64, f64) {
        let theta_p = -self.psi;
        let theta_si = 0.5 * (self.theta_cap + 2.0 * theta_p);
        (theta_p, theta_si, theta_si)
    }

    /// Complex normalized amplitudes (a_p, a_s, a_i).
    pub fn fields(&self) -> [Complex64; 3] {
        let (tp, ts, ti) = self.phases();
        [
            Complex64::from_polar(self.a_p, tp),
            Complex64::from_polar(self.a_si, ts),
            Complex64::from_polar(self.a_si, ti),
        ]
    }

    /// Residuals of the six stationary relations, each scaled by
    /// max(1, |lhs|, |rhs|). Below threshold the three relations obtained by
    /// dividing the signal equation by A do not apply and report zero.
    pub fn residuals(&self, nd: &NormalizedDrive) -> [f64; 6] {
        let rel = |lhs: f64, rhs: f64| (lhs - rhs).abs() / 1f64.max(lhs.abs()).max(rhs.abs());
        let (x, y) = (self.x(), self.y());
        let (z, dl, f) = (nd.zeta0, nd.delta_l, nd.f);
        let q = if x > 0.0 { y / x } else { 0.0 };
        let cos_part = self.a_p * (1.0 + 2.0 * q);
        let sin_part = self.a_p * (z - x - 2.0 * q * (dl - 3.0 * y));
        let r2 = rel(f * f, cos_part * cos_part + sin_part * sin_part);
        let (r5, r6) = if f > 0.0 {
            (rel(self.psi.sin(), sin_part / f), rel(self.psi.cos(), cos_part / f))
        } else {
            (rel(self.a_p, 0.0), 0.0)
        };
        if !self.above_threshold {
            return [0.0, r2, 0.0, 0.0, r5, r6];
        }
        let r1 = rel(x * x, 1.0 + (dl - 2.0 * x - 3.0 * y).powi(2));
        let r3 = rel(self.theta_cap.sin(), 1.0 / x);
        let r4 = rel(self.theta_cap.cos(), (dl - 3.0 * y - 2.0 * x) / x);
        [r1, r2, r3, r4, r5, r6]
    }

    pub fn max_residual(&self, nd: &NormalizedDrive) -> f64 {
        self.residuals(nd).into_iter().fold(0.0, f64::max)
    }
}

/// Right-hand side of the normalized three-mode mean-field equations.
pub fn mean_field_rhs(nd: &NormalizedDrive, a: &[Complex64; 3]) -> [Complex64; 3] {
    let [p, s, i] = *a;
    let (np, ns, ni) = (p.norm_sqr(), s.norm_sqr(), i.norm_sqr());
    let dp = I * (np * p + 2.0 * ns * p + 2.0 * ni * p + 2.0 * p.conj() * s * i) - p - I * nd.zeta0 * p
        + nd.f;
    let ds = I * (2.0 * np * s + ns * s + 2.0 * ni * s + p * p * i.conj()) - s - I * nd.delta_l * s;
    let di = I * (2.0 * np * i + 2.0 * ns * i + ni * i + p * p * s.conj()) - i - I * nd.delta_l * i;
    [dp, ds, di]
}

/// Jacobian of [`mean_field_rhs`] in the basis (a_p, a_p*, a_s, a_s*, a_i, a_i*).
pub fn full_jacobian(nd: &NormalizedDrive, a: &[Complex64; 3]) -> SMatrix<Complex64, 6, 6> {
    let [p, s, i] = *a;
    let (pc, sc, ic) = (p.conj(), s.conj(), i.conj());
    let tot = 2.0 * (p.norm_sqr() + s.norm_sqr() + i.norm_sqr());
    let one = Complex64::new(1.0, 0.0);
    let rp = [
        I * tot - one - I * nd.zeta0,
        I * (p * p + 2.0 * s * i),
        I * (2.0 * sc * p + 2.0 * pc * i),
        I * (2.0 * s * p),
        I * (2.0 * ic * p + 2.0 * pc * s),
        I * (2.0 * i * p),
    ];
    let rs = [
        I * (2.0 * pc * s + 2.0 * p * ic),
        I * (2.0 * p * s),
        I * tot - one - I * nd.delta_l,
        I * s * s,
        I * (2.0 * s * ic),
        I * (2.0 * s * i + p * p),
    ];
    let ri = [
        I * (2.0 * pc * i + 2.0 * p * sc),
        I * (2.0 * p * i),
        I * (2.0 * i * sc),
        I * (2.0 * s * i + p * p),
        I * tot - one - I * nd.delta_l,
        I * i * i,
    ];
    let conj_row = |r: &[Complex64; 6]| [r[1].conj(), r[0].conj(), r[3].conj(), r[2].conj(), r[5].conj(), r[4].conj()];
    let rows = [rp, conj_row(&rp), rs, conj_row(&rs), ri, conj_row(&ri)];
    SMatrix::from_fn(|r, c| rows[r][c])
}

/// Real form of a matrix acting on (z, z*) pairs: the same linear map written
/// on (Re z, Im z). Eigenvalues are unchanged.
pub(crate) fn real_form<const N: usize>(m: &SMatrix<Complex64, N, N>) -> SMatrix<f64, N, N> {
    let half = Complex64::new(0.5, 0.0);
    let w = SMatrix::<Complex64, N, N>::from_fn(|r, c| match (r / 2 == c / 2, r % 2, c % 2) {
        (false, _, _) => Complex64::new(0.0, 0.0),
        (true, 0, _) => half,
        (true, _, 0) => -0.5 * I,
        _ => 0.5 * I,
    });
    let w_inv = SMatrix::<Complex64, N, N>::from_fn(|r, c| match (r / 2 == c / 2, r % 2, c % 2) {
        (false, _, _) => Complex64::new(0.0, 0.0),
        (true, 0, 0) | (true, 1, 0) => Complex64::new(1.0, 0.0),
        (true, 0, _) => I,
        _ => -I,
    });
    (w * m * w_inv).map(|z| z.re)
}

/// Largest real part among the eigenvalues of a (z, z*)-structured matrix.
pub(crate) fn max_growth_rate<const N: usize>(m: &SMatrix<Complex64, N, N>) -> f64 {
    let r = real_form(m);
    nalgebra::DMatrix::from_column_slice(N, N, r.as_slice())
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn is_stable(nd: &NormalizedDrive, fields: &[Complex64; 3]) -> bool {
    max_growth_rate(&full_jacobian(nd, fields)) < STABILITY_TOL
}

/// Sign-change roots of a monotone segment; returns the root if bracketed.
fn segment_root<F: Fn(f64) -> f64>(g: F, a: f64, b: f64) -> Option<f64> {
    bisect(&g, a, b, 0.0)
}

fn below_state(nd: &NormalizedDrive, x: f64, segment: usize) -> SteadyState {
    let mut ss = SteadyState {
        a_p: x.max(0.0).sqrt(),
        a_si: 0.0,
        theta_cap: 0.0,
        psi: (nd.zeta0 - x).atan2(1.0),
        f_drive: nd.f,
        stage: None,
        above_threshold: false,
        branch: Branch {
            kind: BranchKind::Below,
            segment,
        },
        stable: true,
    };
    ss.stable = is_stable(nd, &ss.fields());
    if !ss.stable {
        ss.stage = Some(Stage::Unstable);
    }
    ss
}

/// Turning points x∓ of the cubic F² = x(1 + (ζ − x)²), present for ζ > √3.
pub fn cubic_turning_points(zeta0: f64) -> Option<(f64, f64)> {
    (zeta0 > SQRT3).then(|| {
        let r = (zeta0 * zeta0 - 3.0).sqrt();
        ((2.0 * zeta0 - r) / 3.0, (2.0 * zeta0 + r) / 3.0)
    })
}

/// Interval of A_p² in which a below-threshold state amplifies the mode-l
/// pair, present for δ > √3.
pub fn parametric_gain_window(delta_l: f64) -> Option<(f64, f64)> {
    (delta_l > SQRT3).then(|| {
        let r = (delta_l * delta_l - 3.0).sqrt();
        ((2.0 * delta_l - r) / 3.0, (2.0 * delta_l + r) / 3.0)
    })
}

/// All non-negative roots of F² = x(1 + (ζ − x)²), ascending in A_p.
pub fn solve_below_threshold(nd: &NormalizedDrive) -> Vec<SteadyState> {
    let f2 = nd.f * nd.f;
    let z = nd.zeta0;
    if f2 == 0.0 {
        return vec![below_state(nd, 0.0, 0)];
    }
    let g = |x: f64| x * (1.0 + (z - x) * (z - x)) - f2;
    let mut bounds = vec![0.0];
    if let Some((lo, hi)) = cubic_turning_points(z) {
        bounds.push(lo);
        bounds.push(hi);
    }
    let top = bounds.last().copied().unwrap_or(0.0).max(0.0) + f2 + 1.0;
    bounds.push(top);
    let mut out: Vec<SteadyState> = Vec::with_capacity(3);
    for (k, w) in bounds.windows(2).enumerate() {
        if let Some(x) = segment_root(g, w[0], w[1]) {
            let ss = below_state(nd, x, if bounds.len() == 2 { 0 } else { k });
            if !out.iter().any(|o| (o.a_p - ss.a_p).abs() < MERGE_TOL) {
                out.push(ss);
            }
        }
    }
    out
}

/// Above-threshold curve parametrized by v ∈ (−U, U), U = sqrt(δ² − 3):
/// c = δ − 3y = sqrt(v² + 3), x = (2c + v)/3, y = (δ − c)/3.
fn above_xy(delta: f64, v: f64) -> (f64, f64) {
    let c = (v * v + 3.0).sqrt();
    ((2.0 * c + v) / 3.0, (delta - c) / 3.0)
}

fn above_f2(nd: &NormalizedDrive, x: f64, y: f64) -> f64 {
    let (z, dl) = (nd.zeta0, nd.delta_l);
    let a = x + 2.0 * y;
    let b = z * x - x * x - 2.0 * y * (dl - 3.0 * y);
    (a * a + b * b) / x
}

fn above_state(nd: &NormalizedDrive, x: f64, y: f64, segment: usize) -> SteadyState {
    let dl = nd.delta_l;
    let theta_cap = (1.0 / x).atan2((dl - 3.0 * y - 2.0 * x) / x);
    let fc = x.sqrt() * (1.0 + 2.0 * y / x);
    let fs = x.sqrt() * (nd.zeta0 - x - 2.0 * (y / x) * (dl - 3.0 * y));
    let mut ss = SteadyState {
        a_p: x.sqrt(),
        a_si: y.sqrt(),
        theta_cap,
        psi: fs.atan2(fc),
        f_drive: nd.f,
        stage: None,
        above_threshold: true,
        branch: Branch {
            kind: BranchKind::Above,
            segment,
        },
        stable: true,
    };
    ss.stable = is_stable(nd, &ss.fields());
    if !ss.stable {
        ss.stage = Some(Stage::Unstable);
    }
    ss
}

/// Monotone pieces of F²(v) on [−U, U], as v-breakpoints.
fn above_segments(nd: &NormalizedDrive) -> Option<Vec<f64>> {
    let dl = nd.delta_l;
    if !(dl > SQRT3) {
        return None;
    }
    let u = (dl * dl - 3.0).sqrt();
    let h = |v: f64| {
        let (x, y) = above_xy(dl, v);
        above_f2(nd, x, y)
    };
    const N: usize = 2048;
    let vs: Vec<f64> = (0..=N).map(|k| -u + 2.0 * u * k as f64 / N as f64).collect();
    let hs: Vec<f64> = vs.iter().map(|&v| h(v)).collect();
    let mut bps = vec![-u];
    for k in 1..N {
        let (l, m, r) = (hs[k - 1], hs[k], hs[k + 1]);
        let is_min = m <= l && m < r;
        let is_max = m >= l && m > r;
        if is_min || is_max {
            let sign = if is_min { 1.0 } else { -1.0 };
            let (v, _) = golden_section(|v| sign * h(v), vs[k - 1], vs[k + 1], 1e-14 * u.max(1.0));
            bps.push(v);
        }
    }
    bps.push(u);
    Some(bps)
}

/// All solutions with A > 0, ascending in A_p. Empty when δ ≤ √3 or when F
/// lies outside the range of the above-threshold curve.
pub fn solve_above_threshold(nd: &NormalizedDrive) -> Vec<SteadyState> {
    let Some(bps) = above_segments(nd) else {
        return Vec::new();
    };
    let dl = nd.delta_l;
    let f2 = nd.f * nd.f;
    let g = |v: f64| {
        let (x, y) = above_xy(dl, v);
        above_f2(nd, x, y) - f2
    };
    let mut out: Vec<SteadyState> = Vec::new();
    for (k, w) in bps.windows(2).enumerate() {
        let Some(v) = segment_root(g, w[0], w[1]) else { continue };
        let (x, y) = above_xy(dl, v);
        if !(y > 0.0) {
            continue;
        }
        let ss = above_state(nd, x, y, k);
        if ss.max_residual(nd) > RESIDUAL_TOL {
            continue;
        }
        if !out
            .iter()
            .any(|o| (o.a_p - ss.a_p).abs() < MERGE_TOL && (o.a_si - ss.a_si).abs() < MERGE_TOL)
        {
            out.push(ss);
        }
    }
    out.sort_by(|a, b| a.a_p.total_cmp(&b.a_p));
    out
}

/// Every stationary solution, below then above threshold.
pub fn solve_all(nd: &NormalizedDrive) -> Vec<SteadyState> {
    let mut v = solve_below_threshold(nd);
    v.extend(solve_above_threshold(nd));
    v
}

/// Integrate the mean-field equations with RK4 until the drift is below
/// `1e-10` or τ reaches `t_max`.
pub fn relax(nd: &NormalizedDrive, start: [Complex64; 3], t_max: f64) -> [Complex64; 3] {
    // The intracavity intensity never exceeds the largest below-threshold root
    // by much, so that root bounds the Kerr frequencies.
    let x_top = solve_below_threshold(nd).last().map_or(0.0, SteadyState::x);
    let mut a = start;
    let size = a.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let dt = 0.2 / (1.0 + nd.zeta0.abs() + nd.delta_l.abs() + 6.0 * size.max(x_top));
    let add = |a: &[Complex64; 3], k: &[Complex64; 3], h: f64| [a[0] + k[0] * h, a[1] + k[1] * h, a[2] + k[2] * h];
    let mut t = 0.0;
    while t < t_max {
        let k1 = mean_field_rhs(nd, &a);
        let k2 = mean_field_rhs(nd, &add(&a, &k1, 0.5 * dt));
        let k3 = mean_field_rhs(nd, &add(&a, &k2, 0.5 * dt));
        let k4 = mean_field_rhs(nd, &add(&a, &k3, dt));
        for j in 0..3 {
            a[j] += (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (dt / 6.0);
        }
        t += dt;
        if t > 20.0 && mean_field_rhs(nd, &a).iter().map(|z| z.norm()).sum::<f64>() < 1e-10 {
            break;
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    /// Largest accepted change of A_p between neighbouring grid points while
    /// following one branch.
    pub tolerance: f64,
    /// Normalized time allowed for relaxation after a branch ends.
    pub relax_time: f64,
    /// Grid intervals between 0 and the target amplitude in [`steady_state_at`].
    pub points_to_target: usize,
    /// Upper end of the [`steady_state_at`] grid as a multiple of the target.
    pub top_factor: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            tolerance: 1.0,
            relax_time: 4000.0,
            points_to_target: 100,
            top_factor: 3.0,
        }
    }
}

/// All labeled states at one pump amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePoint {
    pub a_in: f64,
    pub drive: NormalizedDrive,
    pub states: Vec<SteadyState>,
}

impl StagePoint {
    pub fn stage(&self, stage: Stage) -> Option<&SteadyState> {
        self.states.iter().find(|s| s.stage == Some(stage))
    }
}

fn same_solution(a: &SteadyState, b: &SteadyState) -> bool {
    a.branch == b.branch && (a.a_p - b.a_p).abs() < MERGE_TOL && (a.a_si - b.a_si).abs() < MERGE_TOL
}

/// One continuation pass over `order`, returning the tracked solution index
/// at each visited grid point.
fn continuation_pass(
    grid: &[f64],
    drives: &[NormalizedDrive],
    sols: &[Vec<SteadyState>],
    order: &[usize],
    start: usize,
    opts: &ContinuationOptions,
) -> Result<Vec<usize>> {
    let mut picked = vec![usize::MAX; grid.len()];
    picked[order[0]] = start;
    for w in order.windows(2) {
        let (from, to) = (w[0], w[1]);
        let prev = &sols[from][picked[from]];
        let stable: Vec<usize> = (0..sols[to].len()).filter(|&j| sols[to][j].stable).collect();
        if stable.is_empty() {
            return Err(Error::TrackingGap {
                from: grid[from],
                to: grid[to],
                detail: "no stable state at the destination point".into(),
            });
        }
        let same = stable
            .iter()
            .copied()
            .filter(|&j| sols[to][j].branch == prev.branch)
            .min_by(|&a, &b| (sols[to][a].a_p - prev.a_p).abs().total_cmp(&(sols[to][b].a_p - prev.a_p).abs()));
        let next = match same {
            Some(j) => {
                let jump = (sols[to][j].a_p - prev.a_p).abs();
                if jump > opts.tolerance {
                    return Err(Error::TrackingGap {
                        from: grid[from],
                        to: grid[to],
                        detail: format!("A_p changes by {jump:.3e} along one branch (tolerance {:.3e})", opts.tolerance),
                    });
                }
                j
            }
            None => {
                let mut seed = prev.fields();
                seed[1] += Complex64::new(1e-4, 0.0);
                seed[2] += Complex64::new(0.0, 0.7e-4);
                let end = relax(&drives[to], seed, opts.relax_time);
                let (xr, yr) = (end[0].norm_sqr(), 0.5 * (end[1].norm_sqr() + end[2].norm_sqr()));
                let dist = |s: &SteadyState| (s.x() - xr).abs() + (s.y() - yr).abs();
                stable
                    .iter()
                    .copied()
                    .min_by(|&a, &b| dist(&sols[to][a]).total_cmp(&dist(&sols[to][b])))
                    .expect("non-empty")
            }
        };
        picked[to] = next;
    }
    Ok(picked)
}

/// Label the coexisting states along an increasing pump-amplitude grid.
///
/// An upward pass starts on the lowest stable state and labels what it
/// follows I (below threshold) or II (above); a downward pass starting from
/// where the upward pass ended labels III (above) or IV (below). When a
/// followed branch ends, the mean-field equations are integrated from the
/// last state (with a small signal/idler seed) and the nearest stable state
/// is taken. Each point lists the upward state, the downward state (both even
/// when they coincide) and every unstable solution.
pub fn classify_stages(
    p: &ResonatorParams,
    sigma_c: f64,
    l: u32,
    a_in_grid: &[f64],
    opts: &ContinuationOptions,
) -> Result<Vec<StagePoint>> {
    if a_in_grid.len() < 2 {
        return Err(Error::validation("a_in_grid", "needs at least two points"));
    }
    if a_in_grid.windows(2).any(|w| !(w[1] > w[0])) || !(a_in_grid[0] >= 0.0) {
        return Err(Error::validation("a_in_grid", "must be non-negative and strictly increasing"));
    }
    let drives: Vec<NormalizedDrive> = a_in_grid
        .iter()
        .map(|&a| normalize_drive(p, &PumpDrive::with_amplitude(a, sigma_c, l)))
        .collect::<Result<_>>()?;
    let sols: Vec<Vec<SteadyState>> = drives.par_iter().map(solve_all).collect();

    let n = a_in_grid.len();
    let start = (0..sols[0].len())
        .filter(|&j| sols[0][j].stable)
        .min_by(|&a, &b| sols[0][a].x().total_cmp(&sols[0][b].x()))
        .ok_or_else(|| Error::TrackingGap {
            from: a_in_grid[0],
            to: a_in_grid[0],
            detail: "no stable state at the first grid point".into(),
        })?;
    let up_order: Vec<usize> = (0..n).collect();
    let up = continuation_pass(a_in_grid, &drives, &sols, &up_order, start, opts)?;
    let down_order: Vec<usize> = (0..n).rev().collect();
    let down = continuation_pass(a_in_grid, &drives, &sols, &down_order, up[n - 1], opts)?;

    Ok((0..n)
        .map(|k| {
            let mut states = Vec::new();
            let mut u = sols[k][up[k]];
            u.stage = Some(if u.above_threshold { Stage::II } else { Stage::I });
            states.push(u);
            let mut d = sols[k][down[k]];
            d.stage = Some(if d.above_threshold { Stage::III } else { Stage::IV });
            states.push(d);
            for s in &sols[k] {
                if !s.stable && !states.iter().any(|t| same_solution(t, s)) {
                    states.push(*s);
                }
            }
            states.sort_by_key(|s| s.stage);
            StagePoint {
                a_in: a_in_grid[k],
                drive: drives[k],
                states,
            }
        })
        .collect())
}

/// Grid from 0 to `top_factor`·`a_in` with `a_in` as an exact node; returns
/// the grid and the index of that node.
pub fn target_grid(a_in: f64, opts: &ContinuationOptions) -> (Vec<f64>, usize) {
    let n = opts.points_to_target.max(1);
    let total = ((opts.top_factor.max(1.0) * n as f64).round() as usize).max(n);
    let grid = (0..=total).map(|k| a_in * k as f64 / n as f64).collect();
    (grid, n)
}

/// The state carrying `stage` at the configured pump level, located by
/// running [`classify_stages`] on [`target_grid`]. `Ok(None)` when that stage
/// does not exist there.
pub fn steady_state_at(
    p: &ResonatorParams,
    d: &PumpDrive,
    stage: Stage,
    opts: &ContinuationOptions,
) -> Result<Option<(NormalizedDrive, SteadyState)>> {
    let nd = normalize_drive(p, d)?;
    let a_in = d.a_in(p);
    if a_in == 0.0 {
        let mut s = solve_below_threshold(&nd)[0];
        return Ok(matches!(stage, Stage::I | Stage::IV).then(|| {
            s.stage = Some(stage);
            (nd, s)
        }));
    }
    let (grid, k) = target_grid(a_in, opts);
    let pts = classify_stages(p, d.sigma_c, d.mode_l, &grid, opts)?;
    Ok(pts[k].stage(stage).map(|s| (nd, *s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOptions {
    /// Largest pump power searched, W.
    pub ceiling: f64,
    /// Relative width of the final bisection bracket.
    pub rel_tol: f64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions {
            ceiling: 10.0,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub p_th: f64,
    pub a_in_th: f64,
}

/// Lowest pump power at which the lower below-threshold state of mode pair
/// `l` stops being stable, so that the upward sweep leaves stage I.
///
/// The search climbs a doubling ladder from 1 pW to find the first unstable
/// power, then bisects to `rel_tol`.
pub fn threshold_power(p: &ResonatorParams, sigma_c: f64, l: u32, opts: &ThresholdOptions) -> Result<Threshold> {
    let probe = PumpDrive::with_power(0.0, sigma_c, l);
    let nd0 = normalize_drive(p, &probe)?;
    let rates = p.derived_rates()?;
    let scale = Normalization::new(&rates).drive_scale;
    let omega_p = probe.pump_omega(p);
    let ceiling_err = Error::ThresholdAboveCeiling { ceiling: opts.ceiling };
    if !(nd0.delta_l > SQRT3) || !(scale > 0.0) {
        return Err(ceiling_err);
    }
    let lower_turn = cubic_turning_points(nd0.zeta0).map(|t| t.0);
    let stage_one_holds = |power: f64| {
        let f = scale * (power / (HBAR * omega_p)).sqrt();
        let nd = nd0.with_f(f);
        let lowest = solve_below_threshold(&nd)[0];
        let on_lower = lower_turn.is_none_or(|t| lowest.x() <= t);
        on_lower && lowest.stable
    };
    let mut lo = 0.0;
    let mut hi = 1e-12_f64.min(opts.ceiling);
    while stage_one_holds(hi) {
        if hi >= opts.ceiling {
            return Err(ceiling_err);
        }
        lo = hi;
        hi = (2.0 * hi).min(opts.ceiling);
    }
    while hi - lo > opts.rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if stage_one_holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Threshold {
        p_th: hi,
        a_in_th: (hi / (HBAR * omega_p)).sqrt(),
    })
}
