// SPDX-License-Identifier: Apache-2.0

//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls the solver paths under test: the mean-field equations
//! are written out again, cubic roots come from the trigonometric/Cardano
//! formulas and spectra come from simulating the linear Langevin equations.

#![allow(dead_code)]

use kqfc_core::fluctuations::{CMatrix4, LinearizedSystem};
use kqfc_core::steady_state::NormalizedDrive;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

const I: C = C::new(0.0, 1.0);

/// Normalized three-mode mean-field equations written from the coupled-mode
/// model: self/cross phase modulation, pump depletion and parametric gain.
pub fn rhs(nd: &NormalizedDrive, a: [C; 3]) -> [C; 3] {
    let [p, s, i] = a;
    let (np, ns, ni) = (p.norm_sqr(), s.norm_sqr(), i.norm_sqr());
    [
        -(1.0 + I * nd.zeta0) * p + I * (np + 2.0 * ns + 2.0 * ni) * p + 2.0 * I * p.conj() * s * i + nd.f,
        -(1.0 + I * nd.delta_l) * s + I * (2.0 * np + ns + 2.0 * ni) * s + I * p * p * i.conj(),
        -(1.0 + I * nd.delta_l) * i + I * (2.0 * np + 2.0 * ns + ni) * i + I * p * p * s.conj(),
    ]
}

/// Real roots of x³ − 2ζx² + (1 + ζ²)x − f² = 0, ascending, each polished
/// by one Newton step.
pub fn cubic_roots(f: f64, zeta: f64) -> Vec<f64> {
    let (b, c, d) = (-2.0 * zeta, 1.0 + zeta * zeta, -f * f);
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = q * q / 4.0 + p * p * p / 27.0;
    let mut roots = if disc > 0.0 {
        let sq = disc.sqrt();
        vec![(-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt() + shift]
    } else if p == 0.0 {
        vec![shift]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        (0..3).map(|k| m * (phi - 2.0 * PI * k as f64 / 3.0).cos() + shift).collect()
    };
    for x in roots.iter_mut() {
        let g = ((*x + b) * *x + c) * *x + d;
        let dg = (3.0 * *x + 2.0 * b) * *x + c;
        if dg.abs() > 1e-6 {
            *x -= g / dg;
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

fn pack(z: &DVector<f64>) -> [C; 3] {
    [C::new(z[0], z[1]), C::new(z[2], z[3]), C::new(z[4], z[5])]
}

fn residual(nd: &NormalizedDrive, z: &DVector<f64>) -> DVector<f64> {
    let r = rhs(nd, pack(z));
    DVector::from_iterator(6, r.iter().flat_map(|c| [c.re, c.im]))
}

/// Damped Newton on the six real stationary equations. The Jacobian is
/// taken by central differences and inverted by SVD, which absorbs the
/// signal/idler phase freedom. Returns the fields and the final residual.
pub fn newton_full(nd: &NormalizedDrive, start: [C; 3]) -> ([C; 3], f64) {
    let mut z = DVector::from_iterator(6, start.iter().flat_map(|c| [c.re, c.im]));
    let mut g = residual(nd, &z);
    for _ in 0..200 {
        let norm = g.norm();
        if norm < 1e-14 {
            break;
        }
        let mut jac = DMatrix::zeros(6, 6);
        for k in 0..6 {
            let h = 1e-7 * z[k].abs().max(1.0);
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += h;
            zm[k] -= h;
            jac.set_column(k, &((residual(nd, &zp) - residual(nd, &zm)) / (2.0 * h)));
        }
        let svd = jac.svd(true, true);
        let cut = 1e-9 * svd.singular_values.max();
        let Ok(step) = svd.solve(&(-&g), cut) else { break };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &z + &step * t;
            let gt = residual(nd, &trial);
            if gt.norm() < norm {
                z = trial;
                g = gt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (pack(&z), g.norm())
}

/// Central-difference Wirtinger Jacobian of the signal/idler equations with
/// the pump held fixed, in the basis (a_s, a_s*, a_i, a_i*) rotated by
/// (θ_s, −θ_s, θ_i, −θ_i). Normalized units.
pub fn numerical_drift(nd: &NormalizedDrive, a: [C; 3], theta_s: f64, theta_i: f64) -> CMatrix4 {
    let f = |s: C, i: C| {
        let r = rhs(nd, [a[0], s, i]);
        [r[1], r[1].conj(), r[2], r[2].conj()]
    };
    let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let h = 1e-5 * scale;
    let mut j = CMatrix4::zeros();
    for (var, base) in [(0usize, a[1]), (2usize, a[2])] {
        let eval = |dz: C| {
            if var == 0 {
                f(base + dz, a[2])
            } else {
                f(a[1], base + dz)
            }
        };
        let (xp, xm) = (eval(C::new(h, 0.0)), eval(C::new(-h, 0.0)));
        let (yp, ym) = (eval(C::new(0.0, h)), eval(C::new(0.0, -h)));
        for row in 0..4 {
            let dx = (xp[row] - xm[row]) / (2.0 * h);
            let dy = (yp[row] - ym[row]) / (2.0 * h);
            j[(row, var)] = 0.5 * (dx - I * dy);
            j[(row, var + 1)] = 0.5 * (dx + I * dy);
        }
    }
    let phase = [theta_s, -theta_s, theta_i, -theta_i];
    CMatrix4::from_fn(|r, c| C::from_polar(1.0, -phase[r]) * j[(r, c)] * C::from_polar(1.0, phase[c]))
}

/// Σ_n Mⁿ·hⁿ/(n + k)!, the building block of the exact step of a linear
/// system driven by piecewise-constant noise.
fn phi_series(m: &CMatrix4, h: f64, k: u32) -> CMatrix4 {
    let mh = m * C::new(h, 0.0);
    let mut term = CMatrix4::identity() / C::new((1..=k).map(f64::from).product::<f64>(), 0.0);
    let mut sum = term;
    for n in 1..60 {
        term = term * mh / C::new(f64::from(n + k), 0.0);
        sum += term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    sum
}

pub struct LangevinRun {
    /// Frequencies in units of κ.
    pub omega: Vec<f64>,
    /// `mean[q][w]` and its standard error for quadrature `q` at `omega[w]`.
    pub mean: Vec<Vec<f64>>,
    pub sem: Vec<Vec<f64>>,
    pub steps: usize,
}

/// Simulate the output fluctuations of `lin` with classical vacuum noise
/// (⟨ξξ*⟩ = ½δ) and estimate the spectra of the real quadratures uᵀ·a_out
/// by Hann-windowed periodograms of independent segments.
///
/// Noise is held constant over each step of length `dt` (units of 1/κ), so
/// the step is exact for that noise; the output is the step average, whose
/// spectrum carries a sinc² factor that is divided out.
pub fn langevin_quadrature_spectra(
    lin: &LinearizedSystem,
    omega: &[f64],
    quads: &[[C; 4]],
    dt: f64,
    seg_len: usize,
    segments_per_chain: usize,
    chains: usize,
    seed: u64,
) -> LangevinRun {
    use rayon::prelude::*;
    let m = lin.m_a / C::new(lin.kappa, 0.0);
    let t_in = lin.t_in[(0, 0)] / lin.kappa.sqrt();
    let t_loss = lin.t_loss[(0, 0)] / lin.kappa.sqrt();
    let phi = phi_series(&m, dt, 0);
    let psi = phi_series(&m, dt, 1) * C::new(dt, 0.0);
    let gamma = phi_series(&m, dt, 2) * C::new(dt * dt, 0.0);
    let window: Vec<f64> = (0..seg_len).map(|n| (PI * n as f64 / seg_len as f64).sin().powi(2)).collect();
    let w2: f64 = window.iter().map(|w| w * w).sum();
    let burn_in = (40.0 / dt) as usize;

    let per_chain: Vec<Vec<Vec<Vec<f64>>>> = (0..chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(chain as u64 * 0x9E37_79B9));
            let normal = Normal::new(0.0, (dt / 4.0).sqrt()).expect("valid sigma");
            let draw = |rng: &mut ChaCha20Rng| C::new(normal.sample(rng), normal.sample(rng));
            let mut x = nalgebra::Vector4::<C>::zeros();
            let step = |x: &mut nalgebra::Vector4<C>, rng: &mut ChaCha20Rng| {
                let (zi_s, zi_i, zl_s, zl_i) = (draw(rng), draw(rng), draw(rng), draw(rng));
                let xi_in = nalgebra::Vector4::new(zi_s, zi_s.conj(), zi_i, zi_i.conj());
                let xi_loss = nalgebra::Vector4::new(zl_s, zl_s.conj(), zl_i, zl_i.conj());
                let u = (xi_in * C::new(t_in, 0.0) + xi_loss * C::new(t_loss, 0.0)) / C::new(dt, 0.0);
                let avg = (psi * *x + gamma * u) / C::new(dt, 0.0);
                *x = phi * *x + psi * u;
                avg * C::new(t_in, 0.0) - xi_in / C::new(dt, 0.0)
            };
            for _ in 0..burn_in {
                step(&mut x, &mut rng);
            }
            let rot: Vec<C> = omega.iter().map(|w| C::from_polar(1.0, -w * dt)).collect();
            let mut out = vec![vec![Vec::with_capacity(segments_per_chain); omega.len()]; quads.len()];
            for _ in 0..segments_per_chain {
                let mut acc = vec![vec![C::new(0.0, 0.0); omega.len()]; quads.len()];
                let mut ph = vec![C::new(1.0, 0.0); omega.len()];
                for (n, w) in window.iter().enumerate() {
                    let y = step(&mut x, &mut rng);
                    for (q, u) in quads.iter().enumerate() {
                        let val = (u[0] * y[0] + u[1] * y[1] + u[2] * y[2] + u[3] * y[3]).re * w;
                        for k in 0..omega.len() {
                            acc[q][k] += ph[k] * val;
                        }
                    }
                    for k in 0..omega.len() {
                        ph[k] *= rot[k];
                    }
                    if n % 1024 == 1023 {
                        for p in ph.iter_mut() {
                            *p /= p.norm();
                        }
                    }
                }
                for q in 0..quads.len() {
                    for k in 0..omega.len() {
                        let half = 0.5 * omega[k] * dt;
                        let sinc2 = (half.sin() / half).powi(2);
                        out[q][k].push(dt * acc[q][k].norm_sqr() / w2 / sinc2);
                    }
                }
            }
            out
        })
        .collect();

    let mut mean = vec![vec![0.0; omega.len()]; quads.len()];
    let mut sem = vec![vec![0.0; omega.len()]; quads.len()];
    for q in 0..quads.len() {
        for k in 0..omega.len() {
            let samples: Vec<f64> = per_chain.iter().flat_map(|c| c[q][k].iter().copied()).collect();
            let n = samples.len() as f64;
            let mu = samples.iter().sum::<f64>() / n;
            let var = samples.iter().map(|s| (s - mu).powi(2)).sum::<f64>() / (n - 1.0);
            mean[q][k] = mu;
            sem[q][k] = (var / n).sqrt();
        }
    }
    LangevinRun {
        omega: omega.to_vec(),
        mean,
        sem,
        steps: chains * (burn_in + segments_per_chain * seg_len),
    }
}

/// Re(uᵀ·S·u): the spectrum of the real quadrature uᵀ·a.
pub fn quadrature_value(s: &CMatrix4, u: &[C; 4]) -> f64 {
    let mut acc = C::new(0.0, 0.0);
    for r in 0..4 {
        for c in 0..4 {
            acc += u[r] * s[(r, c)] * u[c];
        }
    }
    acc.re
}

/// Quadrature vectors for x_s − x_i and y_s + y_i at detection angles θ_s, θ_i.
pub fn epr_vectors(theta_s: f64, theta_i: f64) -> [[C; 4]; 2] {
    let e = |t: f64| C::from_polar(0.5, t);
    [
        [e(-theta_s), e(theta_s), -e(-theta_i), -e(theta_i)],
        [-I * e(-theta_s), I * e(theta_s), -I * e(-theta_i), I * e(theta_i)],
    ]
}

/// Single-mode quadratures X_s, Y_s, X_i, Y_i of the rotated basis.
pub fn single_mode_vectors() -> [[C; 4]; 4] {
    let h = C::new(0.5, 0.0);
    let z = C::new(0.0, 0.0);
    [
        [h, h, z, z],
        [-I * h, I * h, z, z],
        [z, z, h, h],
        [z, z, -I * h, I * h],
    ]
}
