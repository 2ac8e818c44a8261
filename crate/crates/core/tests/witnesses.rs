mod common;

use chi3_opo::entanglement::{
    self, duan_rotated, duan_witness, schmidt_rotation_2d, schmidt_transform_4d, schmidt_witness,
    vlf_optimize, vlf_witness, Combination, Partition, SchmidtTransform4D,
};
use chi3_opo::fluctuations::{self, FullSpectrum, PumpClassicalSpectrum};
use chi3_opo::model::QuadratureConvention;
use common::{from_mode_basis, random_stable_states, spectrum_of};
use nalgebra::{Matrix4, Matrix6};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OMEGA: f64 = 0.015;

/// Symplectic map of a local phase rotation on mode `m`.
fn rotation(m: usize, phi: f64) -> Matrix6<f64> {
    let mut s = Matrix6::identity();
    let (sn, c) = phi.sin_cos();
    s[(2 * m, 2 * m)] = c;
    s[(2 * m, 2 * m + 1)] = -sn;
    s[(2 * m + 1, 2 * m)] = sn;
    s[(2 * m + 1, 2 * m + 1)] = c;
    s
}

fn squeezer(m: usize, r: f64) -> Matrix6<f64> {
    let mut s = Matrix6::identity();
    s[(2 * m, 2 * m)] = (-r).exp();
    s[(2 * m + 1, 2 * m + 1)] = r.exp();
    s
}

fn beam_splitter(a: usize, b: usize, t: f64) -> Matrix6<f64> {
    let mut s = Matrix6::identity();
    let (sn, c) = t.sin_cos();
    for q in 0..2 {
        s[(2 * a + q, 2 * a + q)] = c;
        s[(2 * a + q, 2 * b + q)] = sn;
        s[(2 * b + q, 2 * a + q)] = -sn;
        s[(2 * b + q, 2 * b + q)] = c;
    }
    s
}

fn local_gaussian(rng: &mut ChaCha8Rng, m: usize) -> Matrix6<f64> {
    rotation(m, rng.random_range(-3.2..3.2))
        * squeezer(m, rng.random_range(-1.5..1.5))
        * rotation(m, rng.random_range(-3.2..3.2))
}

/// Positive semidefinite classical noise confined to the given modes.
fn classical_noise(rng: &mut ChaCha8Rng, modes: &[usize]) -> Matrix6<f64> {
    let mut l = Matrix6::zeros();
    for &m in modes {
        for q in 0..2 {
            for c in 0..6 {
                l[(2 * m + q, c)] = rng.random_range(-0.5..0.5);
            }
        }
    }
    l * l.transpose() * rng.random_range(0.0..1.0)
}

/// A state that is a product across `partition`, with arbitrary Gaussian
/// correlations inside the two-mode side and classical noise on each side.
fn separable_state(seed: u64, partition: Partition) -> FullSpectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = partition.isolated_mode();
    let rest: Vec<usize> = (0..3).filter(|&m| m != k).collect();
    let mut s = local_gaussian(&mut rng, k);
    for &m in &rest {
        s = local_gaussian(&mut rng, m) * s;
    }
    s = beam_splitter(rest[0], rest[1], rng.random_range(-1.6..1.6)) * s;
    for &m in &rest {
        s = local_gaussian(&mut rng, m) * s;
    }
    let v = s * s.transpose() * QuadratureConvention::VACUUM_VARIANCE
        + classical_noise(&mut rng, &[k])
        + classical_noise(&mut rng, &rest);
    from_mode_basis(&v)
}

/// Fully separable product of single-mode states plus classical noise that
/// may correlate all modes.
fn product_state(seed: u64) -> FullSpectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Matrix6::identity();
    for m in 0..3 {
        s = local_gaussian(&mut rng, m) * s;
    }
    let mut v = s * s.transpose() * QuadratureConvention::VACUUM_VARIANCE;
    // Rank-one classical correlations between all quadratures.
    let w = nalgebra::Vector6::from_fn(|_, _| rng.random_range(-0.7..0.7));
    v += w * w.transpose();
    from_mode_basis(&v)
}

fn reduced(s6: &FullSpectrum) -> PumpClassicalSpectrum {
    PumpClassicalSpectrum {
        omega: s6.omega,
        matrix: s6.matrix.fixed_view::<4, 4>(2, 2).into_owned(),
    }
}

fn signal_idler_separable(seed: u64) -> FullSpectrum {
    // Product across s|ip also factorizes s|i after tracing out the pump.
    separable_state(seed, Partition::SignalVsIdlerPump)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn separable_states_never_violate_bipartite_witnesses(seed in any::<u64>()) {
        for s6 in [signal_idler_separable(seed), product_state(seed)] {
            let s4 = reduced(&s6);
            prop_assert!(duan_witness(&s4) >= -1e-12);
            let (rotated, _) = duan_rotated(&s4, &schmidt_rotation_2d(&s4));
            prop_assert!(rotated >= -1e-12);
        }
    }

    #[test]
    fn separable_states_never_violate_tripartite_witnesses(seed in any::<u64>()) {
        for p in Partition::ALL {
            let s6 = separable_state(seed, p);
            prop_assert!(schmidt_witness(&s6, p).witness.margin() >= -1e-12);
            for w in entanglement::schmidt_witness_candidates(&s6, p) {
                prop_assert!(w.witness.margin() >= -1e-12, "{:?}", w.form);
            }
            prop_assert!(vlf_optimize(&s6, p).witness.margin() >= -1e-9);
        }
        let s6 = product_state(seed);
        for p in Partition::ALL {
            prop_assert!(vlf_optimize(&s6, p).witness.margin() >= -1e-9);
        }
    }

    #[test]
    fn schmidt_transform_diagonalizes_the_pump_sum_block(seed in any::<u64>()) {
        let s6 = separable_state(seed, Partition::PumpVsSignalIdler);
        check_schmidt_transform(&s6);
    }
}

fn check_schmidt_transform(s6: &FullSpectrum) {
    let t = schmidt_transform_4d(s6);
    let block = SchmidtTransform4D::block(s6);
    let scale = 1.0 + block.amax();
    assert!(t.diagonalization_residual(s6) <= 1e-10 * scale);
    assert!(t.orthogonality_error() <= 1e-12);
    assert!(t.variances.windows(2).all(|w| w[0] <= w[1]));
    // Power sums fix the spectrum: tr(Bᵏ) = Σ λᵏ for k = 1..4.
    let mut power: Matrix4<f64> = Matrix4::identity();
    for k in 1..=4 {
        power *= block;
        let sum: f64 = t.variances.iter().map(|v| v.powi(k)).sum();
        assert!((power.trace() - sum).abs() <= 1e-10 * scale.powi(k));
    }
    for k in 0..4 {
        let q = t.quadrature(k);
        assert!((q.norm() - 1.0).abs() <= 1e-12);
        assert!((entanglement::variance(s6, &q) - t.variances[k]).abs() <= 1e-10 * scale);
    }
}

#[test]
fn schmidt_transform_on_model_states() {
    for s in random_stable_states(21, 100) {
        check_schmidt_transform(&spectrum_of(&s, OMEGA));
    }
}

#[test]
fn two_mode_witness_reduces_to_duan() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut checked = 0;
    for s in random_stable_states(22, 30) {
        let fs = fluctuations::linearize(&s).unwrap();
        let s6 = fluctuations::output_spectrum(&fs, OMEGA).unwrap();
        let w = vlf_witness(&s6, [0.0, h, -h], [0.0, h, h], Partition::SignalVsIdlerPump).unwrap();
        assert!((w.bound - 1.0).abs() <= 1e-12);
        // The ± block of the full spectrum carries the same Duan sum.
        assert!((w.margin() - duan_witness(&reduced(&s6))).abs() <= 1e-12);
        if let Ok(s4) = fluctuations::pump_classical_spectrum(&fs, OMEGA) {
            // x_− is untouched by the pump, y_+ is not, so only the x_− part must agree.
            assert!((s4.variance(3) - s6.variance(5)).abs() <= 1e-12);
            checked += 1;
        }
    }
    assert!(checked >= 10);
}

/// Smallest symplectic eigenvalue of the partial transpose across `partition`.
fn min_pt_symplectic_eigenvalue(v: &Matrix6<f64>, partition: Partition) -> f64 {
    let k = partition.isolated_mode();
    let mut flip = Matrix6::identity();
    flip[(2 * k + 1, 2 * k + 1)] = -1.0;
    let vt = flip * v * flip;
    let om = QuadratureConvention::mode_symplectic_form();
    // Eigenvalues of Ω·V come in pairs ±iν.
    (om * vt)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn optimizer_reaches_the_epr_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..6 {
        let r = rng.random_range(0.1..1.2);
        // TMSV = 50:50 beam splitter on oppositely squeezed vacua, then local rotations.
        let s = rotation(1, rng.random_range(-3.0..3.0))
            * rotation(2, rng.random_range(-3.0..3.0))
            * beam_splitter(1, 2, std::f64::consts::FRAC_PI_4)
            * squeezer(1, r)
            * squeezer(2, -r);
        let v = s * s.transpose() * QuadratureConvention::VACUUM_VARIANCE;
        let nu = min_pt_symplectic_eigenvalue(&v, Partition::SignalVsIdlerPump);
        assert!((nu - 0.5 * (-2.0 * r).exp()).abs() <= 1e-10);
        let opt = vlf_optimize(&from_mode_basis(&v), Partition::SignalVsIdlerPump);
        assert!(
            (opt.witness.margin() - (2.0 * nu - 1.0)).abs() <= 1e-6,
            "r = {r}: {} vs {}",
            opt.witness.margin(),
            2.0 * nu - 1.0
        );
        assert!((opt.u.norm() - 1.0).abs() <= 1e-9 && (opt.v.norm() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn optimizer_never_loses_to_its_starting_points() {
    for s in random_stable_states(24, 15) {
        let s6 = spectrum_of(&s, OMEGA);
        for p in Partition::ALL {
            let opt = vlf_optimize(&s6, p).witness.margin();
            assert!(opt <= schmidt_witness(&s6, p).witness.margin() + 1e-12);
        }
    }
}

#[test]
fn model_states_are_signal_idler_symmetric() {
    for s in random_stable_states(25, 10) {
        let s6 = spectrum_of(&s, OMEGA);
        assert!(entanglement::partition_symmetry_check(&s6));
        let a = schmidt_witness(&s6, Partition::SignalVsIdlerPump).witness;
        let b = schmidt_witness(&s6, Partition::IdlerVsSignalPump).witness;
        assert!((a.margin() - b.margin()).abs() <= 1e-9);
    }
}

#[test]
fn asymmetric_noise_breaks_partition_symmetry() {
    let s = beam_splitter(1, 2, std::f64::consts::FRAC_PI_4) * squeezer(1, 0.6) * squeezer(2, -0.6);
    let mut v = s * s.transpose() * QuadratureConvention::VACUUM_VARIANCE;
    v[(4, 4)] += 0.3;
    v[(0, 2)] += 0.1;
    v[(2, 0)] += 0.1;
    assert!(!entanglement::partition_symmetry_check(&from_mode_basis(
        &v
    )));
}

#[test]
fn decoupled_pump_splits_the_schmidt_basis() {
    let mut checked = 0;
    for s in random_stable_states(26, 20) {
        let fs = fluctuations::linearize(&s).unwrap();
        let Ok(s4) = fluctuations::pump_classical_spectrum(&fs, OMEGA) else {
            continue;
        };
        let mut m = Matrix6::identity() * QuadratureConvention::VACUUM_VARIANCE;
        m.fixed_view_mut::<4, 4>(2, 2).copy_from(&s4.matrix);
        let s6 = FullSpectrum {
            omega: OMEGA,
            matrix: m,
        };
        let plus = s4.matrix.fixed_view::<2, 2>(0, 0).into_owned();
        let eig = plus.symmetric_eigen();
        let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        if (lo - 0.5).abs() < 1e-6 || (hi - 0.5).abs() < 1e-6 || hi - lo < 1e-6 {
            continue;
        }
        let t = schmidt_transform_4d(&s6);
        let rot = schmidt_rotation_2d(&s4);
        let (sn, c) = rot.theta_plus.sin_cos();
        let mut saw_plus = false;
        for k in 0..4 {
            let row = t.u.row(k);
            let pump = row[0].hypot(row[1]);
            let sum = row[2].hypot(row[3]);
            assert!(pump.min(sum) <= 1e-9, "row {k} mixes pump and sum");
            if (t.variances[k] - lo).abs() <= 1e-12 * (1.0 + lo) {
                // (x_+, y_+) = ±(sin θ_+, cos θ_+)
                let overlap = row[2] * sn + row[3] * c;
                assert!((overlap.abs() - 1.0).abs() <= 1e-9);
                saw_plus = true;
            }
        }
        assert!(saw_plus);
        checked += 1;
    }
    assert!(checked >= 5);
}

#[test]
fn rotation_lands_on_the_least_noisy_axes() {
    for s in random_stable_states(27, 20) {
        let fs = fluctuations::linearize(&s).unwrap();
        let Ok(s4) = fluctuations::pump_classical_spectrum(&fs, OMEGA) else {
            continue;
        };
        let rot = schmidt_rotation_2d(&s4);
        let scale = 1.0 + s4.matrix.amax();
        assert!(rot.diagonalization_residual(&s4) <= 1e-12 * scale);
        let min_eig = |r: usize| {
            s4.matrix
                .fixed_view::<2, 2>(r, r)
                .symmetric_eigen()
                .eigenvalues
                .min()
        };
        let (rotated, c) = duan_rotated(&s4, &rot);
        assert!((rotated + c.abs() - min_eig(0) - min_eig(2)).abs() <= 1e-10 * scale);
        // The difference quadrature read off the full spectrum sees the same minimum.
        let s6 = fluctuations::output_spectrum(&fs, OMEGA).unwrap();
        let x: Combination = rot.difference_amplitude();
        assert!((entanglement::variance(&s6, &x) - min_eig(2)).abs() <= 1e-10 * scale);
    }
}
