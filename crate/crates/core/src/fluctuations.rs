//! Linearized quantum fluctuations around a steady state and their output
//! noise spectra.
//!
//! Fluctuations are written as δa_j = e^{iθ_j}(δx_j + iδy_j)/√2, i.e. as
//! amplitude and phase quadratures relative to each mean field, then moved
//! to the ordered sum/difference basis of [`Quadrature`](crate::model::Quadrature).
//! The sign convention is fixed here once for all callers:
//!
//! ```text
//! dδX/dτ = drift · δX + input_coupling · δX_in + loss_coupling · δX_loss
//! ```
//!
//! so a state is stable when every non-neutral drift eigenvalue has a
//! negative real part. Inputs are vacuum with symmetrized quadrature
//! spectral density 1/2, and the output obeys δX_out = −δX_in + √(2γ/Γ) δX.

use nalgebra::{DMatrix, Matrix3, Matrix6, SMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NormalizedParams, QuadratureConvention};
use crate::steady_state::{
    mean_field_jacobian, BranchKind, MeanFields, SteadyState, RESIDUAL_TOLERANCE,
};

/// Growth rates above this are treated as unstable.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// Eigenvalues smaller than this in modulus are candidates for the neutral
/// signal-idler phase mode of an oscillating state.
pub const NEUTRAL_TOLERANCE: f64 = 1e-7;

/// Linear fluctuation dynamics in the ordered quadrature basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationSystem {
    pub drift: Matrix6<f64>,
    pub input_coupling: Matrix6<f64>,
    pub loss_coupling: Matrix6<f64>,
    pub base: SteadyState,
}

/// Real drift matrix in the mode basis (x_p, y_p, x_s, y_s, x_i, y_i), with
/// each quadrature measured relative to the phase of its mean field.
pub fn mode_basis_drift(alpha: &MeanFields, n: &NormalizedParams) -> Matrix6<f64> {
    let (j, k) = mean_field_jacobian(alpha, n);
    let rot: Vec<Complex64> = alpha
        .iter()
        .map(|a| {
            if a.norm() == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                a / a.norm()
            }
        })
        .collect();
    let jr = Matrix3::from_fn(|r, c| rot[r].conj() * j[(r, c)] * rot[c]);
    let kr = Matrix3::from_fn(|r, c| rot[r].conj() * k[(r, c)] * rot[c].conj());

    let mut m = Matrix6::zeros();
    for r in 0..3 {
        for c in 0..3 {
            let s = jr[(r, c)] + kr[(r, c)];
            let d = jr[(r, c)] - kr[(r, c)];
            m[(2 * r, 2 * c)] = s.re;
            m[(2 * r, 2 * c + 1)] = -d.im;
            m[(2 * r + 1, 2 * c)] = s.im;
            m[(2 * r + 1, 2 * c + 1)] = d.re;
        }
    }
    m
}

/// Drift matrix in the ordered basis {y_p, x_p, y_+, x_+, y_−, x_−}.
pub fn ordered_drift(alpha: &MeanFields, n: &NormalizedParams) -> Matrix6<f64> {
    let t = QuadratureConvention::mode_to_ordered();
    t * mode_basis_drift(alpha, n) * t.transpose()
}

pub(crate) fn linearize_unchecked(state: &SteadyState) -> FluctuationSystem {
    let n = &state.params;
    let g = n.gamma_ratio;
    FluctuationSystem {
        drift: ordered_drift(&state.fields(), n),
        input_coupling: Matrix6::identity() * (2.0 * g).sqrt(),
        loss_coupling: Matrix6::identity() * (2.0 * (1.0 - g)).sqrt(),
        base: *state,
    }
}

/// Linearizes the Langevin equations about a steady state.
pub fn linearize(state: &SteadyState) -> Result<FluctuationSystem> {
    let r = state.residual();
    if r.is_nan() || r > RESIDUAL_TOLERANCE {
        return Err(Error::Precondition(format!(
            "not a steady state: residual {r:.3e} exceeds {RESIDUAL_TOLERANCE:.0e}"
        )));
    }
    Ok(linearize_unchecked(state))
}

impl FluctuationSystem {
    /// Pump-classical system on {y_+, x_+, y_−, x_−}.
    pub fn pump_classical(&self) -> (SMatrix<f64, 4, 4>, SMatrix<f64, 4, 4>, SMatrix<f64, 4, 4>) {
        (
            self.drift.fixed_view::<4, 4>(2, 2).into_owned(),
            self.input_coupling.fixed_view::<4, 4>(2, 2).into_owned(),
            self.loss_coupling.fixed_view::<4, 4>(2, 2).into_owned(),
        )
    }

    /// Largest coupling between the difference block and the rest.
    pub fn block_leakage(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..4 {
            for b in 4..6 {
                worst = worst
                    .max(self.drift[(a, b)].abs())
                    .max(self.drift[(b, a)].abs());
            }
        }
        worst
    }

    /// The 2×2 difference block on {y_−, x_−}.
    pub fn difference_block(&self) -> SMatrix<f64, 2, 2> {
        self.drift.fixed_view::<2, 2>(4, 4).into_owned()
    }
}

/// Drift eigenvalues and the resulting stability verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub stable: bool,
    /// Largest real part among the non-neutral eigenvalues.
    pub max_growth: f64,
    pub eigenvalues: Vec<Complex64>,
    /// Neutral phase-difference eigenvalue excluded from the verdict.
    pub neutral: Option<Complex64>,
}

fn classify(matrix: DMatrix<f64>, kind: BranchKind) -> Stability {
    let mut eigenvalues: Vec<Complex64> = matrix
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect();
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));

    // An oscillating state is invariant under θ_s → θ_s + ε, θ_i → θ_i − ε,
    // which leaves exactly one zero eigenvalue in the difference block.
    let mut neutral_index = None;
    if kind == BranchKind::Oscillating {
        neutral_index = eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() < NEUTRAL_TOLERANCE)
            .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .map(|(i, _)| i);
    }
    let max_growth = eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != neutral_index)
        .map(|(_, z)| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Stability {
        stable: max_growth < -STABILITY_MARGIN,
        max_growth,
        neutral: neutral_index.map(|i| eigenvalues[i]),
        eigenvalues,
    }
}

/// Stability of the full three-mode fluctuation system.
pub fn stability(fs: &FluctuationSystem) -> Stability {
    classify(
        DMatrix::from_iterator(6, 6, fs.drift.iter().copied()),
        fs.base.kind,
    )
}

/// Stability of the pump-classical {±} system.
pub fn pump_classical_stability(fs: &FluctuationSystem) -> Stability {
    let (drift, _, _) = fs.pump_classical();
    classify(
        DMatrix::from_iterator(4, 4, drift.iter().copied()),
        fs.base.kind,
    )
}

/// Symmetrized output quadrature spectral matrix at one analysis frequency.
///
/// The basis is a sequence of (phase, amplitude) quadrature pairs: the full
/// ordered basis for `N = 6`, {y_+, x_+, y_−, x_−} for `N = 4`. Vacuum is
/// 1/2 on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity<const N: usize> {
    pub omega: f64,
    pub matrix: SMatrix<f64, N, N>,
}

pub type FullSpectrum = SpectralDensity<6>;
pub type PumpClassicalSpectrum = SpectralDensity<4>;

impl<const N: usize> SpectralDensity<N> {
    pub fn vacuum(omega: f64) -> Self {
        Self {
            omega,
            matrix: SMatrix::identity() * QuadratureConvention::VACUUM_VARIANCE,
        }
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.matrix[(i, i)]
    }

    /// Symplectic form of N/2 consecutive (y, x) pairs, [R_j, R_k] = iΩ_jk.
    pub fn symplectic_form() -> SMatrix<f64, N, N> {
        let mut om = SMatrix::zeros();
        for k in 0..N / 2 {
            om[(2 * k, 2 * k + 1)] = -1.0;
            om[(2 * k + 1, 2 * k)] = 1.0;
        }
        om
    }

    pub fn symmetry_error(&self) -> f64 {
        (self.matrix - self.matrix.transpose()).abs().max()
    }

    /// Smallest eigenvalue of the Hermitian matrix S + (i/2)Ω; a physical
    /// spectrum has it non-negative.
    pub fn physicality_margin(&self) -> f64 {
        let a = Self::symplectic_form() * 0.5;
        let mut h = DMatrix::zeros(2 * N, 2 * N);
        for r in 0..N {
            for c in 0..N {
                h[(r, c)] = self.matrix[(r, c)];
                h[(r + N, c + N)] = self.matrix[(r, c)];
                h[(r, c + N)] = -a[(r, c)];
                h[(r + N, c)] = a[(r, c)];
            }
        }
        h.symmetric_eigenvalues().min()
    }
}

/// Solves the linear Langevin system in frequency space and returns the
/// symmetrized output spectrum ½·Re(A_in A_in† + A_loss A_loss†), where
/// A_in = C G C − 1, A_loss = C G L and G = (−iω − drift)⁻¹.
fn output_spectrum_of(
    drift: &DMatrix<f64>,
    coupling: &DMatrix<f64>,
    loss: &DMatrix<f64>,
    omega: f64,
) -> Result<DMatrix<f64>> {
    let n = drift.nrows();
    let to_c = |m: &DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
    let mut resolvent = -to_c(drift);
    for i in 0..n {
        resolvent[(i, i)] -= Complex64::new(0.0, omega);
    }
    let g = resolvent
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Precondition(format!("singular resolvent at omega = {omega}")))?;
    let c = to_c(coupling);
    let l = to_c(loss);
    let a_in = &c * &g * &c - DMatrix::<Complex64>::identity(n, n);
    let a_loss = &c * &g * &l;
    let s = (&a_in * a_in.adjoint() + &a_loss * a_loss.adjoint()).map(|z| 0.5 * z.re);
    Ok((&s + s.transpose()) * 0.5)
}

fn to_static<const N: usize>(m: &DMatrix<f64>) -> SMatrix<f64, N, N> {
    SMatrix::from_fn(|r, c| m[(r, c)])
}

fn to_dynamic<const N: usize>(m: &SMatrix<f64, N, N>) -> DMatrix<f64> {
    DMatrix::from_fn(N, N, |r, c| m[(r, c)])
}

/// Output spectral matrix of all three modes.
pub fn output_spectrum(fs: &FluctuationSystem, omega: f64) -> Result<FullSpectrum> {
    let st = stability(fs);
    if !st.stable {
        return Err(Error::Unstable {
            max_growth: st.max_growth,
        });
    }
    let s = output_spectrum_of(
        &to_dynamic(&fs.drift),
        &to_dynamic(&fs.input_coupling),
        &to_dynamic(&fs.loss_coupling),
        omega,
    )?;
    Ok(SpectralDensity {
        omega,
        matrix: to_static(&s),
    })
}

/// Output spectrum of the {±} subspace with the pump treated classically
/// (pump fluctuations set to zero).
pub fn pump_classical_spectrum(
    fs: &FluctuationSystem,
    omega: f64,
) -> Result<PumpClassicalSpectrum> {
    let st = pump_classical_stability(fs);
    if !st.stable {
        return Err(Error::Unstable {
            max_growth: st.max_growth,
        });
    }
    let (drift, coupling, loss) = fs.pump_classical();
    let s = output_spectrum_of(
        &to_dynamic(&drift),
        &to_dynamic(&coupling),
        &to_dynamic(&loss),
        omega,
    )?;
    Ok(SpectralDensity {
        omega,
        matrix: to_static(&s),
    })
}
