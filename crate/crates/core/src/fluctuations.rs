// SPDX-License-Identifier: Apache-2.0

//! Linearized signal/idler fluctuations and their output noise spectra.
//!
//! The fluctuation vector is (δa_s e^{−iθ_s}, δa_s† e^{iθ_s}, δa_i e^{−iθ_i},
//! δa_i† e^{iθ_i}) with θ_s, θ_i the mean-field phases. The pump is classical.

use nalgebra::{Matrix4, SMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ResonatorParams;
use crate::steady_state::{max_growth_rate, NormalizedDrive, SteadyState, RESIDUAL_TOL, STABILITY_TOL};

pub type CMatrix4 = SMatrix<Complex64, 4, 4>;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSystem {
    /// Drift matrix, rad/s.
    pub m_a: CMatrix4,
    pub t_in: Matrix4<f64>,
    pub t_loss: Matrix4<f64>,
    pub m_c: Matrix4<f64>,
    /// Total loss rate κ, rad/s; the unit of the normalized drift matrix.
    pub kappa: f64,
    /// Mean-field phases that define the rotated fluctuation basis.
    pub theta_s: f64,
    pub theta_i: f64,
}

/// Input-noise correlation pattern: ⟨δa δa†⟩ = 1 for vacuum inputs.
pub fn noise_correlation() -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(0, 1)] = 1.0;
    m[(2, 3)] = 1.0;
    m
}

/// Drift matrix in units of κ for a state with A_p² = x, A² = y.
pub fn drift_matrix_normalized(nd: &NormalizedDrive, ss: &SteadyState) -> CMatrix4 {
    let (x, y) = (ss.x(), ss.y());
    let d = Complex64::new(-1.0, 0.0) - I * nd.delta_l + I * (2.0 * x + 4.0 * y);
    let g = I * (2.0 * y + x * Complex64::from_polar(1.0, -ss.theta_cap));
    let iy = I * y;
    let z = [
        [d, iy, 2.0 * iy, g],
        [-iy, d.conj(), g.conj(), -2.0 * iy],
        [2.0 * iy, g, d, iy],
        [g.conj(), -2.0 * iy, -iy, d.conj()],
    ];
    SMatrix::from_fn(|r, c| z[r][c])
}

/// Linearize about `ss`. Refuses states whose stationary residual exceeds
/// the solver tolerance.
pub fn linearize(p: &ResonatorParams, nd: &NormalizedDrive, ss: &SteadyState) -> Result<LinearizedSystem> {
    let residual = ss.max_residual(nd);
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::NotConverged {
            residual,
            tolerance: RESIDUAL_TOL,
        });
    }
    let rates = p.derived_rates()?;
    let (_, theta_s, theta_i) = ss.phases();
    Ok(LinearizedSystem {
        m_a: drift_matrix_normalized(nd, ss) * Complex64::new(rates.kappa, 0.0),
        t_in: Matrix4::from_diagonal_element((2.0 * rates.kappa_ex).sqrt()),
        t_loss: Matrix4::from_diagonal_element((2.0 * rates.kappa0).sqrt()),
        m_c: noise_correlation(),
        kappa: rates.kappa,
        theta_s,
        theta_i,
    })
}

impl LinearizedSystem {
    /// Eigenvalues of the drift matrix, rad/s.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let r = crate::steady_state::real_form(&self.m_a);
        nalgebra::DMatrix::from_column_slice(4, 4, r.as_slice())
            .complex_eigenvalues()
            .iter()
            .copied()
            .collect()
    }

    /// Largest eigenvalue real part, rad/s.
    pub fn max_growth_rate(&self) -> f64 {
        max_growth_rate(&self.m_a)
    }

    pub fn is_stable(&self) -> bool {
        self.max_growth_rate() < STABILITY_TOL * self.kappa
    }

    /// Largest |Im λ| of the drift matrix, rad/s: where the squeezing
    /// resonance of a detuned pair sits.
    pub fn characteristic_frequency(&self) -> f64 {
        self.eigenvalues().iter().map(|l| l.im.abs()).fold(0.0, f64::max)
    }

    /// Logarithmic grid from 1e-3·κ to max(10, 3·ω_c/κ)·κ plus a linear
    /// refinement over [0.5, 1.5]·ω_c; rad/s, ascending, no duplicates.
    pub fn default_omega_grid(&self) -> Vec<f64> {
        let k = self.kappa;
        let wc = self.characteristic_frequency();
        let top = (3.0 * wc / k).max(10.0) * k;
        let (lo, n_log) = (1e-3 * k, 240usize);
        let ratio = (top / lo).ln();
        let mut g: Vec<f64> = (0..n_log)
            .map(|j| lo * (ratio * j as f64 / (n_log - 1) as f64).exp())
            .collect();
        if wc > 1e-3 * k {
            let n_lin = 121usize;
            g.extend((0..n_lin).map(|j| wc * (0.5 + j as f64 / (n_lin - 1) as f64)));
        }
        g.sort_by(f64::total_cmp);
        g.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        g
    }
}

/// Output spectral density matrix at one sideband frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpectrum {
    /// rad/s
    pub omega: f64,
    pub s_a: CMatrix4,
}

impl NoiseSpectrum {
    pub fn rows(&self) -> [[Complex64; 4]; 4] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.s_a[(r, c)]))
    }
}

/// Serializable form of a [`NoiseSpectrum`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub omega: f64,
    pub s_a: [[Complex64; 4]; 4],
}

impl From<&NoiseSpectrum> for SpectrumRecord {
    fn from(s: &NoiseSpectrum) -> Self {
        SpectrumRecord {
            omega: s.omega,
            s_a: s.rows(),
        }
    }
}

fn to_complex(m: &Matrix4<f64>) -> CMatrix4 {
    m.map(|v| Complex64::new(v, 0.0))
}

/// (s·I − M)⁻¹·T by LU solve; `None` when singular.
fn resolvent_times(m: &CMatrix4, s: Complex64, t: &CMatrix4) -> Option<CMatrix4> {
    let a = CMatrix4::identity() * s - m;
    a.lu().solve(t)
}

/// S_a(ω) = R(ω)·M_c·R(−ω)ᵀ + L(ω)·M_c·L(−ω)ᵀ with
/// R(ω) = T_a(iω − M_a)⁻¹T_in − I and L(ω) = T_a(iω − M_a)⁻¹T_loss.
pub fn output_spectrum(lin: &LinearizedSystem, omega: f64) -> Result<NoiseSpectrum> {
    let t_in = to_complex(&lin.t_in);
    let t_loss = to_complex(&lin.t_loss);
    let m_c = to_complex(&lin.m_c);
    let eye = CMatrix4::identity();
    let singular = || Error::Singular { omega };
    let plus = Complex64::new(0.0, omega);
    let minus = Complex64::new(0.0, -omega);
    let r_p = t_in * resolvent_times(&lin.m_a, plus, &t_in).ok_or_else(singular)? - eye;
    let r_m = t_in * resolvent_times(&lin.m_a, minus, &t_in).ok_or_else(singular)? - eye;
    let l_p = t_in * resolvent_times(&lin.m_a, plus, &t_loss).ok_or_else(singular)?;
    let l_m = t_in * resolvent_times(&lin.m_a, minus, &t_loss).ok_or_else(singular)?;
    let s_a = r_p * m_c * r_m.transpose() + l_p * m_c * l_m.transpose();
    if s_a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(singular());
    }
    Ok(NoiseSpectrum { omega, s_a })
}
