//! Parameter types, unit conventions and the quadrature basis.
//!
//! Everything downstream of [`normalize`] works in dimensionless units:
//! rates are measured in units of the total cavity loss rate Γ, time in
//! units of 1/Γ and field amplitudes in units of √(Γ/η). Physical units
//! only appear at the command-line boundary.

use std::f64::consts::PI;

use nalgebra::Matrix6;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default dimensionless analysis frequency ω/Γ.
pub const DEFAULT_OMEGA: f64 = 1.5e-2;
/// Default output coupling ratio γ/Γ.
pub const DEFAULT_GAMMA_RATIO: f64 = 0.55;

/// Laboratory parameters of the three-mode resonator.
///
/// All rates are angular rates (rad/s). Losses are taken equal for the
/// pump, signal and idler modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Pump wavelength λ_p (m).
    pub pump_wavelength: f64,
    pub intrinsic_q: f64,
    pub loaded_q: f64,
    /// Total loss rate Γ = γ + μ.
    pub linewidth: f64,
    /// Output coupling rate γ.
    pub coupling_rate: f64,
    /// Internal loss rate μ (scattering, absorption).
    pub loss_rate: f64,
    /// Kerr coefficient η (rad/s per photon).
    pub nonlinearity: f64,
    /// Input pump power P_in (W).
    pub input_power: f64,
    /// Pump detuning Δ_p = ω_p − Ω_p.
    pub pump_detuning: f64,
    /// Mode dispersion D3 = 2ω_p − ω_s − ω_i.
    pub dispersion: f64,
    /// Noise analysis frequency ω.
    pub analysis_frequency: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pump_wavelength", self.pump_wavelength),
            ("intrinsic_q", self.intrinsic_q),
            ("loaded_q", self.loaded_q),
            ("linewidth", self.linewidth),
            ("coupling_rate", self.coupling_rate),
            ("loss_rate", self.loss_rate),
            ("nonlinearity", self.nonlinearity),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {value}"
                )));
            }
        }
        if !(self.input_power.is_finite() && self.input_power >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "input_power must be non-negative, got {}",
                self.input_power
            )));
        }
        if !(self.analysis_frequency.is_finite() && self.analysis_frequency > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "analysis_frequency must be strictly positive, got {}",
                self.analysis_frequency
            )));
        }
        for (name, value) in [
            ("pump_detuning", self.pump_detuning),
            ("dispersion", self.dispersion),
        ] {
            if !value.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        let total = self.coupling_rate + self.loss_rate;
        if ((total - self.linewidth) / self.linewidth).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "linewidth {} differs from coupling + loss = {}",
                self.linewidth, total
            )));
        }
        Ok(())
    }

    /// Pump carrier angular frequency Ω_p = 2πc/λ_p.
    pub fn pump_carrier_frequency(&self) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / self.pump_wavelength
    }
}

/// Dimensionless control parameters of the normalized model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedParams {
    /// Normalized pump power F².
    pub f2: f64,
    /// Pump detuning Δ_p/Γ.
    pub delta_p: f64,
    /// Dispersion D3/Γ.
    pub d3: f64,
    /// Analysis frequency ω/Γ.
    pub omega: f64,
    /// Escape efficiency γ/Γ.
    pub gamma_ratio: f64,
}

impl Default for NormalizedParams {
    fn default() -> Self {
        Self {
            f2: 0.0,
            delta_p: 0.0,
            d3: 0.0,
            omega: DEFAULT_OMEGA,
            gamma_ratio: DEFAULT_GAMMA_RATIO,
        }
    }
}

impl NormalizedParams {
    pub fn new(f2: f64, delta_p: f64, d3: f64, omega: f64, gamma_ratio: f64) -> Result<Self> {
        let p = Self {
            f2,
            delta_p,
            d3,
            omega,
            gamma_ratio,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f2.is_finite() && self.f2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "F2 must be non-negative, got {}",
                self.f2
            )));
        }
        if !(self.gamma_ratio > 0.0 && self.gamma_ratio <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma_ratio must lie in (0, 1], got {}",
                self.gamma_ratio
            )));
        }
        if !(self.delta_p.is_finite() && self.d3.is_finite() && self.omega.is_finite()) {
            return Err(Error::InvalidParameter(
                "delta_p, d3 and omega must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn with_f2(self, f2: f64) -> Self {
        Self { f2, ..self }
    }

    /// Real pump drive amplitude F = √F².
    pub fn drive(&self) -> f64 {
        self.f2.sqrt()
    }

    /// Common signal/idler detuning Δ = Δ_s = Δ_i.
    ///
    /// Energy conservation of the carriers, 2Ω_p = Ω_s + Ω_i, gives
    /// Δ_s + Δ_i = 2Δ_p − D3; the symmetric split is the one compatible
    /// with a stationary signal-idler pair of equal amplitude.
    pub fn signal_detuning(&self) -> f64 {
        self.delta_p - 0.5 * self.d3
    }
}

/// Maps laboratory parameters to the dimensionless model.
pub fn normalize(p: &PhysicalParams) -> Result<NormalizedParams> {
    p.validate()?;
    let gamma = p.linewidth;
    let f2 = 2.0 * p.coupling_rate * p.nonlinearity * p.input_power
        / (HBAR * p.pump_carrier_frequency() * gamma.powi(3));
    NormalizedParams::new(
        f2,
        p.pump_detuning / gamma,
        p.dispersion / gamma,
        p.analysis_frequency / gamma,
        p.coupling_rate / gamma,
    )
}

/// Inverse of [`normalize`]: restores laboratory units using the linewidth,
/// Kerr coefficient, wavelength and quality factors of `reference`.
pub fn denormalize(n: &NormalizedParams, reference: &PhysicalParams) -> Result<PhysicalParams> {
    n.validate()?;
    let gamma = reference.linewidth;
    let positive = |v: f64| v > 0.0;
    if !positive(gamma) || !positive(reference.nonlinearity) || !positive(reference.pump_wavelength)
    {
        return Err(Error::InvalidParameter(
            "reference must have positive linewidth, nonlinearity and wavelength".into(),
        ));
    }
    let coupling = n.gamma_ratio * gamma;
    let omega_p = reference.pump_carrier_frequency();
    let input_power =
        n.f2 * HBAR * omega_p * gamma.powi(3) / (2.0 * coupling * reference.nonlinearity);
    let out = PhysicalParams {
        coupling_rate: coupling,
        loss_rate: gamma - coupling,
        input_power,
        pump_detuning: n.delta_p * gamma,
        dispersion: n.d3 * gamma,
        analysis_frequency: n.omega * gamma,
        ..*reference
    };
    Ok(out)
}

/// Canonical representative of an angle in (−π, π].
pub fn canonical_phase(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Mean field α = A e^{iθ} in polar form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexAmplitude {
    pub modulus: f64,
    pub phase: f64,
}

impl ComplexAmplitude {
    pub fn new(modulus: f64, phase: f64) -> Self {
        debug_assert!(modulus >= 0.0);
        Self {
            modulus,
            phase: canonical_phase(phase),
        }
    }

    pub fn from_complex(z: Complex64) -> Self {
        let modulus = z.norm();
        let phase = if modulus == 0.0 { 0.0 } else { z.arg() };
        Self::new(modulus, phase)
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.modulus, self.phase)
    }

    pub fn intensity(self) -> f64 {
        self.modulus * self.modulus
    }
}

/// Index of each quadrature in the ordered fluctuation vector
/// {y_p, x_p, y_+, x_+, y_−, x_−}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrature {
    PumpPhase = 0,
    PumpAmplitude = 1,
    SumPhase = 2,
    SumAmplitude = 3,
    DiffPhase = 4,
    DiffAmplitude = 5,
}

impl Quadrature {
    pub const ALL: [Quadrature; 6] = [
        Quadrature::PumpPhase,
        Quadrature::PumpAmplitude,
        Quadrature::SumPhase,
        Quadrature::SumAmplitude,
        Quadrature::DiffPhase,
        Quadrature::DiffAmplitude,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Quadrature::PumpPhase => "y_p",
            Quadrature::PumpAmplitude => "x_p",
            Quadrature::SumPhase => "y_+",
            Quadrature::SumAmplitude => "x_+",
            Quadrature::DiffPhase => "y_-",
            Quadrature::DiffAmplitude => "x_-",
        }
    }
}

/// Quadrature conventions: x = (a + a†)/√2, y = −i(a − a†)/√2, so
/// [x, y] = i and each vacuum quadrature has variance 1/2.
///
/// Two bases are used. The *mode* basis is (x_p, y_p, x_s, y_s, x_i, y_i),
/// with quadratures measured relative to each mode's mean-field phase. The
/// *ordered* basis is the [`Quadrature`] ordering, built from signal/idler
/// sums and differences x_± = (x_s ± x_i)/√2.
pub struct QuadratureConvention;

impl QuadratureConvention {
    pub const VACUUM_VARIANCE: f64 = 0.5;

    /// Orthogonal T with ordered = T · mode.
    pub fn mode_to_ordered() -> Matrix6<f64> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut t = Matrix6::zeros();
        t[(0, 1)] = 1.0;
        t[(1, 0)] = 1.0;
        t[(2, 3)] = h;
        t[(2, 5)] = h;
        t[(3, 2)] = h;
        t[(3, 4)] = h;
        t[(4, 3)] = h;
        t[(4, 5)] = -h;
        t[(5, 2)] = h;
        t[(5, 4)] = -h;
        t
    }

    /// Symplectic form in the mode basis, [R_j, R_k] = i Ω_jk.
    pub fn mode_symplectic_form() -> Matrix6<f64> {
        let mut om = Matrix6::zeros();
        for k in 0..3 {
            om[(2 * k, 2 * k + 1)] = 1.0;
            om[(2 * k + 1, 2 * k)] = -1.0;
        }
        om
    }

    /// Symplectic form in the ordered basis (phase quadrature first in each pair).
    pub fn ordered_symplectic_form() -> Matrix6<f64> {
        let t = Self::mode_to_ordered();
        t * Self::mode_symplectic_form() * t.transpose()
    }
}
