//! Time-domain check of the spectral pipeline.
//!
//! The linearized Langevin equations are integrated as an Itô SDE with the
//! Euler–Maruyama scheme, driven by independent vacuum noise on the coupling
//! and loss ports (increments of variance dt/2 per quadrature). The output
//! field δX_out = C·δX − δX_in is sampled at step midpoints, Hann-windowed
//! over segments of fixed length after a discarded transient, and
//! Fourier-transformed at the analysis frequency. Periodograms are averaged
//! over segments and trajectories; error bars are standard errors across
//! trajectories.
//!
//! Trajectory k draws from `ChaCha8Rng::seed_from_u64(seed)` on stream k,
//! so results do not depend on the number of worker threads.

use std::f64::consts::PI;

use nalgebra::Matrix6;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluctuations::{self, FluctuationSystem, FullSpectrum, SpectralDensity};
use crate::model::QuadratureConvention;

/// Largest accepted normalized time step.
pub const MAX_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub seed: u64,
    /// Normalized time step (units of 1/Γ).
    pub dt: f64,
    /// Discarded initial interval.
    pub transient: f64,
    /// Length of each Hann-windowed segment.
    pub segment_length: f64,
    pub segments_per_trajectory: usize,
    pub n_trajectories: usize,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            dt: MAX_DT,
            transient: 10.0,
            segment_length: 4000.0,
            segments_per_trajectory: 1,
            n_trajectories: 2000,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::InvalidParameter(format!(
                "dt must lie in (0, {MAX_DT}], got {}",
                self.dt
            )));
        }
        let long_enough = self.segment_length >= 100.0 * self.dt;
        if self.transient.is_nan() || self.transient < 0.0 || !long_enough {
            return Err(Error::InvalidParameter(
                "transient must be non-negative and segments at least 100 steps long".into(),
            ));
        }
        if self.segments_per_trajectory == 0 || self.n_trajectories < 2 {
            return Err(Error::InvalidParameter(
                "need at least one segment and two trajectories".into(),
            ));
        }
        Ok(())
    }

    /// Total simulated time per trajectory.
    pub fn duration(&self) -> f64 {
        self.transient + self.segment_length * self.segments_per_trajectory as f64
    }
}

/// Ensemble spectrum estimate with error bars.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeRun {
    pub config: SdeConfig,
    pub spectrum: FullSpectrum,
    /// Standard error of every matrix element across trajectories.
    pub std_error: Matrix6<f64>,
    /// Ensemble mean of the j-th segment of every trajectory.
    pub segment_means: Vec<Matrix6<f64>>,
    pub segment_std_errors: Vec<Matrix6<f64>>,
}

impl SdeRun {
    /// Largest |estimate − reference| / standard error over all elements.
    pub fn max_z_score(&self, reference: &FullSpectrum) -> f64 {
        z_scores(&self.spectrum.matrix, &reference.matrix, &self.std_error).max()
    }

    pub fn agrees_with(&self, reference: &FullSpectrum, sigmas: f64) -> bool {
        self.max_z_score(reference) <= sigmas
    }

    /// Largest z-score between the first and last segment estimates.
    pub fn stationarity_z_score(&self) -> f64 {
        let (first, last) = (0, self.segment_means.len() - 1);
        let se = self.segment_std_errors[first].zip_map(&self.segment_std_errors[last], |a, b| {
            (a * a + b * b).sqrt()
        });
        z_scores(&self.segment_means[first], &self.segment_means[last], &se).max()
    }
}

fn z_scores(a: &Matrix6<f64>, b: &Matrix6<f64>, se: &Matrix6<f64>) -> Matrix6<f64> {
    Matrix6::from_fn(|r, c| {
        let d = (a[(r, c)] - b[(r, c)]).abs();
        if se[(r, c)] > 0.0 {
            d / se[(r, c)]
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    })
}

/// Unit phasor e^{iθ} advanced by multiplication, re-anchored periodically.
struct Phasor {
    step: Complex64,
    rate: f64,
    offset: f64,
    value: Complex64,
    n: usize,
}

impl Phasor {
    fn new(rate: f64, offset: f64, dt: f64) -> Self {
        Self {
            step: Complex64::from_polar(1.0, rate * dt),
            rate,
            offset,
            value: Complex64::from_polar(1.0, offset),
            n: 0,
        }
    }

    fn advance(&mut self, dt: f64) {
        self.n += 1;
        if self.n.is_multiple_of(4096) {
            self.value = Complex64::from_polar(1.0, self.offset + self.rate * dt * self.n as f64);
        } else {
            self.value *= self.step;
        }
    }
}

/// A 6×6 map with a fast path for the diagonal couplings.
enum Linear {
    Diagonal([f64; 6]),
    Dense(Box<[[f64; 6]; 6]>),
}

impl Linear {
    fn new(m: &Matrix6<f64>) -> Self {
        if (0..6).all(|r| (0..6).all(|c| r == c || m[(r, c)] == 0.0)) {
            Self::Diagonal(std::array::from_fn(|k| m[(k, k)]))
        } else {
            Self::Dense(Box::new(std::array::from_fn(|r| {
                std::array::from_fn(|c| m[(r, c)])
            })))
        }
    }

    #[inline(always)]
    fn apply_add(&self, x: &[f64; 6], out: &mut [f64; 6]) {
        match self {
            Self::Diagonal(d) => {
                for k in 0..6 {
                    out[k] += d[k] * x[k];
                }
            }
            Self::Dense(m) => {
                for (o, row) in out.iter_mut().zip(m.iter()) {
                    for (v, xc) in row.iter().zip(x) {
                        *o += v * xc;
                    }
                }
            }
        }
    }
}

fn simulate_trajectory(
    fs: &FluctuationSystem,
    cfg: &SdeConfig,
    omega: f64,
    index: u64,
) -> Vec<Matrix6<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let dt = cfg.dt;
    let noise_scale = (QuadratureConvention::VACUUM_VARIANCE * dt).sqrt();
    let propagator = Linear::new(&(Matrix6::identity() + fs.drift * dt));
    let coupling = Linear::new(&fs.input_coupling);
    let loss = Linear::new(&fs.loss_coupling);

    let mut w_in = [0.0; 6];
    let mut w_loss = [0.0; 6];
    let draw = |rng: &mut ChaCha8Rng, w_in: &mut [f64; 6], w_loss: &mut [f64; 6]| {
        for w in w_in.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *w = z * noise_scale;
        }
        for w in w_loss.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *w = z * noise_scale;
        }
    };
    let step = |x: &[f64; 6], w_in: &[f64; 6], w_loss: &[f64; 6]| {
        let mut next = [0.0; 6];
        propagator.apply_add(x, &mut next);
        coupling.apply_add(w_in, &mut next);
        loss.apply_add(w_loss, &mut next);
        next
    };

    let mut x = [0.0; 6];
    let transient_steps = (cfg.transient / dt).round() as usize;
    for _ in 0..transient_steps {
        draw(&mut rng, &mut w_in, &mut w_loss);
        x = step(&x, &w_in, &w_loss);
    }

    let seg_steps = (cfg.segment_length / dt).round() as usize;
    let length = seg_steps as f64 * dt;
    let mut periodograms = Vec::with_capacity(cfg.segments_per_trajectory);
    for _ in 0..cfg.segments_per_trajectory {
        // Midpoint sample times t_n = (n + 1/2) dt.
        let mut carrier = Phasor::new(omega, 0.5 * omega * dt, dt);
        let mut hann = Phasor::new(2.0 * PI / length, PI * dt / length, dt);
        let mut acc = [Complex64::new(0.0, 0.0); 6];
        let mut window_energy = 0.0;
        for _ in 0..seg_steps {
            draw(&mut rng, &mut w_in, &mut w_loss);
            let next = step(&x, &w_in, &w_loss);
            let mut mid = [0.0; 6];
            for k in 0..6 {
                mid[k] = 0.5 * (x[k] + next[k]);
            }
            let mut out = [0.0; 6];
            for k in 0..6 {
                out[k] = -w_in[k] / dt;
            }
            coupling.apply_add(&mid, &mut out);
            let w = 0.5 * (1.0 - hann.value.re);
            window_energy += w * w * dt;
            let phase = carrier.value * (w * dt);
            for (a, o) in acc.iter_mut().zip(out.iter()) {
                *a += phase * *o;
            }
            x = next;
            carrier.advance(dt);
            hann.advance(dt);
        }
        let p = Matrix6::from_fn(|r, c| (acc[r] * acc[c].conj()).re / window_energy);
        periodograms.push(p);
    }
    periodograms
}

fn mean_and_error(samples: &[Matrix6<f64>]) -> (Matrix6<f64>, Matrix6<f64>) {
    let n = samples.len() as f64;
    let mean = samples.iter().fold(Matrix6::zeros(), |acc, s| acc + s) / n;
    let var = samples
        .iter()
        .fold(Matrix6::zeros(), |acc, s| acc + (s - mean).map(|d| d * d))
        / (n - 1.0);
    (mean, var.map(|v| (v / n).sqrt()))
}

/// Ensemble estimate of the output spectrum at `omega`.
pub fn simulate_linear(fs: &FluctuationSystem, cfg: &SdeConfig, omega: f64) -> Result<SdeRun> {
    cfg.validate()?;
    let st = fluctuations::stability(fs);
    if !st.stable {
        return Err(Error::Unstable {
            max_growth: st.max_growth,
        });
    }
    let per_trajectory: Vec<Vec<Matrix6<f64>>> = (0..cfg.n_trajectories as u64)
        .into_par_iter()
        .map(|k| simulate_trajectory(fs, cfg, omega, k))
        .collect();

    let trajectory_means: Vec<Matrix6<f64>> = per_trajectory
        .iter()
        .map(|segs| segs.iter().fold(Matrix6::zeros(), |a, s| a + s) / segs.len() as f64)
        .collect();
    let (mean, std_error) = mean_and_error(&trajectory_means);

    let mut segment_means = Vec::new();
    let mut segment_std_errors = Vec::new();
    for j in 0..cfg.segments_per_trajectory {
        let column: Vec<Matrix6<f64>> = per_trajectory.iter().map(|segs| segs[j]).collect();
        let (m, e) = mean_and_error(&column);
        segment_means.push(m);
        segment_std_errors.push(e);
    }

    Ok(SdeRun {
        config: *cfg,
        spectrum: SpectralDensity {
            omega,
            matrix: (mean + mean.transpose()) * 0.5,
        },
        std_error,
        segment_means,
        segment_std_errors,
    })
}
