#![allow(dead_code)]

use std::f64::consts::PI;

use chi3_opo::fluctuations::{self, FullSpectrum};
use chi3_opo::model::{NormalizedParams, QuadratureConvention};
use chi3_opo::steady_state::{classical_rhs, solve_all, BranchKind, SteadyState};
use nalgebra::Matrix6;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn spectrum_of(s: &SteadyState, omega: f64) -> FullSpectrum {
    fluctuations::output_spectrum(&fluctuations::linearize(s).unwrap(), omega).unwrap()
}

/// Wraps a mode-basis covariance as an ordered-basis spectrum.
pub fn from_mode_basis(v: &Matrix6<f64>) -> FullSpectrum {
    let t = QuadratureConvention::mode_to_ordered();
    FullSpectrum {
        omega: 0.0,
        matrix: t * v * t.transpose(),
    }
}

pub fn params(f2: f64, delta_p: f64, d3: f64) -> NormalizedParams {
    NormalizedParams {
        f2,
        delta_p,
        d3,
        ..Default::default()
    }
}

/// Real roots of P·(1 + (Δp − P)²) = F² by Cardano / Viète.
pub fn kerr_cubic_roots(f2: f64, dp: f64) -> Vec<f64> {
    let (b, c, d) = (-2.0 * dp, 1.0 + dp * dp, -f2);
    let p = c - b * b / 3.0;
    let q = (2.0 * b * b * b - 9.0 * b * c + 27.0 * d) / 27.0;
    let shift = -b / 3.0;
    let disc = q * q / 4.0 + p * p * p / 27.0;
    let mut roots = if disc < 0.0 {
        let r = 2.0 * (-p / 3.0).sqrt();
        let phi = ((3.0 * q / (2.0 * p)) * (-3.0 / p).sqrt())
            .clamp(-1.0, 1.0)
            .acos()
            / 3.0;
        (0..3)
            .map(|k| r * (phi - 2.0 * PI * k as f64 / 3.0).cos() + shift)
            .collect::<Vec<_>>()
    } else {
        let s = disc.sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt() + shift]
    };
    // One Newton step removes the cancellation error of the closed form.
    for r in &mut roots {
        let f = *r * (1.0 + (dp - *r).powi(2)) - f2;
        let df = 1.0 + (dp - *r).powi(2) - 2.0 * *r * (dp - *r);
        *r -= f / df;
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// Stable fixed points at random operating points, oscillating ones preferred.
pub fn random_stable_states(seed: u64, count: usize) -> Vec<SteadyState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let n = params(
            rng.random_range(1.0..30.0),
            rng.random_range(-1.0..3.0),
            rng.random_range(-8.0..-3.5),
        );
        let states = solve_all(&n);
        if let Some(s) = states
            .iter()
            .filter(|s| s.stable)
            .max_by_key(|s| s.kind == BranchKind::Oscillating)
        {
            out.push(*s);
        }
    }
    out
}

/// Central differences of the right-hand side with respect to quadratures
/// measured relative to each mean-field phase.
pub fn finite_difference_drift(s: &SteadyState) -> Matrix6<f64> {
    let a = s.fields();
    let n = &s.params;
    let phase: Vec<Complex64> = a
        .iter()
        .map(|z| {
            if z.norm() == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                z / z.norm()
            }
        })
        .collect();
    let mut m = Matrix6::zeros();
    for j in 0..3 {
        for (col, dir) in [(2 * j, phase[j]), (2 * j + 1, I * phase[j])] {
            let h = 1e-5 * (1.0 + a[j].norm());
            let mut plus = a;
            let mut minus = a;
            plus[j] += h * dir;
            minus[j] -= h * dir;
            let fp = classical_rhs(&plus, n);
            let fm = classical_rhs(&minus, n);
            for k in 0..3 {
                let d = phase[k].conj() * (fp[k] - fm[k]) / (2.0 * h);
                m[(2 * k, col)] = d.re;
                m[(2 * k + 1, col)] = d.im;
            }
        }
    }
    m
}
