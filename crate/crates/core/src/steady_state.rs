//! Classical mean-field steady states of the three-mode Kerr oscillator.
//!
//! In normalized units the mean fields obey
//!
//! ```text
//! dα_p/dτ = −(1 + iΔ_p) α_p + i[(|α_p|² + 2|α_s|² + 2|α_i|²) α_p + 2 α_p* α_s α_i] + F
//! dα_s/dτ = −(1 + iΔ)   α_s + i[(2|α_p|² + |α_s|² + 2|α_i|²) α_s + α_p² α_i*]
//! dα_i/dτ = −(1 + iΔ)   α_i + i[(2|α_p|² + 2|α_s|² + |α_i|²) α_i + α_p² α_s*]
//! ```
//!
//! with Δ = Δ_p − D3/2. Fixed points come in two families: pump-only states
//! (α_s = α_i = 0) given by the single-mode Kerr cubic, and oscillating
//! states with |α_s| = |α_i| = A > 0. Writing P = A_p² and Q = A², the
//! oscillating family satisfies
//!
//! ```text
//! P² = 1 + (Δ − 2P − 3Q)²
//! F² P = (P + 2Q)² + (P Δ_p − P² − 2QΔ + 6Q²)²
//! ```
//!
//! obtained by eliminating the phases from the fixed-point conditions.

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fluctuations;
use crate::model::{ComplexAmplitude, NormalizedParams};

/// Maximum residual accepted for a returned fixed point.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Signal intensity below which a solution counts as non-oscillating.
pub const OSCILLATION_THRESHOLD: f64 = 1e-8;
/// Seeds per axis of the multi-start Newton search.
pub const SEEDS_PER_AXIS: usize = 32;
/// Roots closer than this (in P + Q) are merged.
pub const DEDUP_DISTANCE: f64 = 1e-6;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Mean fields (α_p, α_s, α_i).
pub type MeanFields = [Complex64; 3];

/// Right-hand side of the normalized classical equations of motion.
pub fn classical_rhs(alpha: &MeanFields, n: &NormalizedParams) -> MeanFields {
    let [ap, as_, ai] = *alpha;
    let (np, ns, ni) = (ap.norm_sqr(), as_.norm_sqr(), ai.norm_sqr());
    let det_s = n.signal_detuning();
    let pump = -(1.0 + I * n.delta_p) * ap
        + I * ((np + 2.0 * ns + 2.0 * ni) * ap + 2.0 * ap.conj() * as_ * ai)
        + n.drive();
    let signal =
        -(1.0 + I * det_s) * as_ + I * ((2.0 * np + ns + 2.0 * ni) * as_ + ap * ap * ai.conj());
    let idler =
        -(1.0 + I * det_s) * ai + I * ((2.0 * np + 2.0 * ns + ni) * ai + ap * ap * as_.conj());
    [pump, signal, idler]
}

/// Largest component modulus of [`classical_rhs`].
pub fn residual(alpha: &MeanFields, n: &NormalizedParams) -> f64 {
    classical_rhs(alpha, n)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Wirtinger derivatives of [`classical_rhs`]: the linear response is
/// dα̇ = J·dα + K·dα*.
pub fn mean_field_jacobian(
    alpha: &MeanFields,
    n: &NormalizedParams,
) -> (Matrix3<Complex64>, Matrix3<Complex64>) {
    let [ap, as_, ai] = *alpha;
    let total = ap.norm_sqr() + as_.norm_sqr() + ai.norm_sqr();
    let det_s = n.signal_detuning();
    let mut j = Matrix3::zeros();
    let mut k = Matrix3::zeros();

    j[(0, 0)] = -(1.0 + I * n.delta_p) + I * 2.0 * total;
    k[(0, 0)] = I * (ap * ap + 2.0 * as_ * ai);
    j[(0, 1)] = I * 2.0 * (as_.conj() * ap + ap.conj() * ai);
    k[(0, 1)] = I * 2.0 * as_ * ap;
    j[(0, 2)] = I * 2.0 * (ai.conj() * ap + ap.conj() * as_);
    k[(0, 2)] = I * 2.0 * ai * ap;

    for (row, other) in [(1usize, 2usize), (2, 1)] {
        let own = alpha[row];
        let partner = alpha[other];
        j[(row, row)] = -(1.0 + I * det_s) + I * 2.0 * total;
        k[(row, row)] = I * own * own;
        j[(row, 0)] = I * 2.0 * (ap.conj() * own + ap * partner.conj());
        k[(row, 0)] = I * 2.0 * ap * own;
        j[(row, other)] = I * 2.0 * partner.conj() * own;
        k[(row, other)] = I * (2.0 * partner * own + ap * ap);
    }
    (j, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchKind {
    PumpOnly,
    Oscillating,
}

impl BranchKind {
    pub fn label(self) -> &'static str {
        match self {
            BranchKind::PumpOnly => "pump-only",
            BranchKind::Oscillating => "oscillating",
        }
    }
}

/// One classical fixed point, gauge-fixed to θ_s = θ_i.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub pump: ComplexAmplitude,
    pub signal: ComplexAmplitude,
    pub idler: ComplexAmplitude,
    pub kind: BranchKind,
    pub stable: bool,
    pub params: NormalizedParams,
}

impl SteadyState {
    /// Builds a state from mean fields and classifies its stability.
    pub fn from_fields(alpha: MeanFields, params: NormalizedParams) -> Self {
        let kind = if alpha[1].norm_sqr() > OSCILLATION_THRESHOLD {
            BranchKind::Oscillating
        } else {
            BranchKind::PumpOnly
        };
        let mut state = Self {
            pump: ComplexAmplitude::from_complex(alpha[0]),
            signal: ComplexAmplitude::from_complex(alpha[1]),
            idler: ComplexAmplitude::from_complex(alpha[2]),
            kind,
            stable: false,
            params,
        };
        let fs = fluctuations::linearize_unchecked(&state);
        state.stable = fluctuations::stability(&fs).stable;
        state
    }

    pub fn fields(&self) -> MeanFields {
        [
            self.pump.to_complex(),
            self.signal.to_complex(),
            self.idler.to_complex(),
        ]
    }

    pub fn residual(&self) -> f64 {
        residual(&self.fields(), &self.params)
    }

    /// Intracavity pump intensity A_p².
    pub fn pump_intensity(&self) -> f64 {
        self.pump.intensity()
    }

    /// Signal (= idler) intensity A².
    pub fn signal_intensity(&self) -> f64 {
        self.signal.intensity()
    }

    /// The same state with signal and idler exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            signal: self.idler,
            idler: self.signal,
            ..*self
        }
    }
}

/// Bracketed root of a continuous function with f(lo)·f(hi) ≤ 0, bisected
/// down to adjacent floating-point values.
fn bracketed_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    let fhi = f(hi);
    if fhi == 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Pump-only fixed points: real roots P = A_p² ≥ 0 of
/// F² = P[1 + (Δ_p − P)²], located on the monotone pieces of the cubic.
pub fn solve_pump_only(n: &NormalizedParams) -> Vec<SteadyState> {
    let f2 = n.f2;
    let dp = n.delta_p;
    let cubic = |p: f64| p * (1.0 + (dp - p) * (dp - p)) - f2;

    if f2 == 0.0 {
        return vec![SteadyState::from_fields([Complex64::new(0.0, 0.0); 3], *n)];
    }

    // Critical points of the cubic: 3P² − 4Δ_p P + 1 + Δ_p² = 0.
    let mut knots = vec![0.0];
    let disc = 4.0 * dp * dp - 3.0 * (1.0 + dp * dp);
    if disc > 0.0 {
        let r = disc.sqrt();
        for c in [(2.0 * dp - r) / 3.0, (2.0 * dp + r) / 3.0] {
            if c > 0.0 && c < f2 {
                knots.push(c);
            }
        }
    }
    // P ≤ F² on every root, and the cubic is non-negative at P = F².
    knots.push(f2);

    let mut roots: Vec<f64> = Vec::new();
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if cubic(a) * cubic(b) <= 0.0 {
            let p = bracketed_root(cubic, a, b);
            if roots.iter().all(|q| (q - p).abs() > 1e-9 * (1.0 + p)) {
                roots.push(p);
            }
        }
    }

    roots
        .into_iter()
        .map(|p| {
            let ap = n.drive() / Complex64::new(1.0, dp - p);
            SteadyState::from_fields([ap, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)], *n)
        })
        .collect()
}

/// Amplitude equations of the oscillating family in (P, Q) = (A_p², A²).
fn amplitude_system(pq: Vector2<f64>, n: &NormalizedParams) -> (Vector2<f64>, Matrix2<f64>) {
    let (p, q) = (pq[0], pq[1]);
    let dp = n.delta_p;
    let ds = n.signal_detuning();
    let mismatch = ds - 2.0 * p - 3.0 * q;
    let h = p * dp - p * p - 2.0 * q * ds + 6.0 * q * q;
    let g = Vector2::new(
        p * p - 1.0 - mismatch * mismatch,
        (p + 2.0 * q).powi(2) + h * h - n.f2 * p,
    );
    let jac = Matrix2::new(
        2.0 * p + 4.0 * mismatch,
        6.0 * mismatch,
        2.0 * (p + 2.0 * q) + 2.0 * h * (dp - 2.0 * p) - n.f2,
        4.0 * (p + 2.0 * q) + 2.0 * h * (12.0 * q - 2.0 * ds),
    );
    (g, jac)
}

/// Damped Newton iteration on [`amplitude_system`].
fn newton_amplitudes(seed: Vector2<f64>, n: &NormalizedParams) -> Option<Vector2<f64>> {
    let mut x = seed;
    let (mut g, mut jac) = amplitude_system(x, n);
    let scale = 1.0 + n.f2;
    for _ in 0..100 {
        let norm = g.norm();
        if norm < 1e-13 * scale {
            return Some(x);
        }
        let step = jac.lu().solve(&(-g))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = x + step * t;
            let (gt, jt) = amplitude_system(trial, n);
            if gt.norm() < (1.0 - 1e-4 * t) * norm {
                x = trial;
                g = gt;
                jac = jt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || !x.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    (g.norm() < 1e-11 * scale).then_some(x)
}

/// Mean fields of an oscillating state from its intensities, with θ_s = θ_i.
fn fields_from_intensities(p: f64, q: f64, n: &NormalizedParams) -> MeanFields {
    let amp_p = p.sqrt();
    let amp = q.sqrt();
    let ds = n.signal_detuning();
    let mismatch = ds - 2.0 * p - 3.0 * q;
    // F e^{-iθ_p} from the pump equation.
    let drive_rot = Complex64::new(
        amp_p * (1.0 + 2.0 * q / p),
        n.delta_p * amp_p - (p + 4.0 * q) * amp_p - 2.0 * q * mismatch / amp_p,
    );
    let theta_p = -drive_rot.arg();
    // e^{2i(θ_p − θ)} = (mismatch − i)/P from the signal equation.
    let phi = Complex64::new(mismatch, -1.0).arg();
    let theta = theta_p - 0.5 * phi;
    [
        Complex64::from_polar(amp_p, theta_p),
        Complex64::from_polar(amp, theta),
        Complex64::from_polar(amp, theta),
    ]
}

/// Newton refinement of a symmetric (α_s = α_i) fixed point on the full
/// complex equations.
fn polish_symmetric(alpha: MeanFields, n: &NormalizedParams) -> MeanFields {
    let mut a = alpha;
    for _ in 0..8 {
        let r = classical_rhs(&a, n);
        if r.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-14 * (1.0 + n.f2) {
            break;
        }
        let (j, k) = mean_field_jacobian(&a, n);
        // Unknowns (α_p, α) with α_s = α_i = α; equations for pump and signal.
        let coeffs = [
            [
                (j[(0, 0)], k[(0, 0)]),
                (j[(0, 1)] + j[(0, 2)], k[(0, 1)] + k[(0, 2)]),
            ],
            [
                (j[(1, 0)], k[(1, 0)]),
                (j[(1, 1)] + j[(1, 2)], k[(1, 1)] + k[(1, 2)]),
            ],
        ];
        let mut m = Matrix4::zeros();
        for (row, eq) in coeffs.iter().enumerate() {
            for (col, &(jj, kk)) in eq.iter().enumerate() {
                let s = jj + kk;
                let d = jj - kk;
                m[(2 * row, 2 * col)] = s.re;
                m[(2 * row, 2 * col + 1)] = -d.im;
                m[(2 * row + 1, 2 * col)] = s.im;
                m[(2 * row + 1, 2 * col + 1)] = d.re;
            }
        }
        let rhs = Vector4::new(-r[0].re, -r[0].im, -r[1].re, -r[1].im);
        let Some(dx) = m.lu().solve(&rhs) else { break };
        let trial_p = a[0] + Complex64::new(dx[0], dx[1]);
        let trial_s = a[1] + Complex64::new(dx[2], dx[3]);
        let trial = [trial_p, trial_s, trial_s];
        if residual(&trial, n) >= residual(&a, n) {
            break;
        }
        a = trial;
    }
    a
}

/// Oscillating fixed points (A > 0), found by multi-start damped Newton on
/// the amplitude equations and then completed with their phases.
pub fn solve_oscillating(n: &NormalizedParams) -> Vec<SteadyState> {
    if n.f2 == 0.0 {
        return Vec::new();
    }
    // On the oscillating family P ≤ Δ and Q ≤ Δ/3.
    let span = 10f64.max(1.25 * n.signal_detuning().abs() + 1.0);
    let cell = span / SEEDS_PER_AXIS as f64;

    let mut roots: Vec<Vector2<f64>> = Vec::new();
    for ip in 0..SEEDS_PER_AXIS {
        for iq in 0..SEEDS_PER_AXIS {
            let seed = Vector2::new((ip as f64 + 0.5) * cell, (iq as f64 + 0.5) * cell);
            let Some(root) = newton_amplitudes(seed, n) else {
                continue;
            };
            if root[0] <= 0.0 || root[1] <= OSCILLATION_THRESHOLD {
                continue;
            }
            if roots
                .iter()
                .all(|r| (r[0] - root[0]).abs() + (r[1] - root[1]).abs() > DEDUP_DISTANCE)
            {
                roots.push(root);
            }
        }
    }
    roots.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));

    roots
        .into_iter()
        .filter_map(|r| {
            let alpha = polish_symmetric(fields_from_intensities(r[0], r[1], n), n);
            (residual(&alpha, n) <= RESIDUAL_TOLERANCE
                && alpha[1].norm_sqr() > OSCILLATION_THRESHOLD)
                .then(|| SteadyState::from_fields(alpha, *n))
        })
        .collect()
}

/// All fixed points: pump-only states first, then oscillating ones.
pub fn solve_all(n: &NormalizedParams) -> Vec<SteadyState> {
    let mut states = solve_pump_only(n);
    states.extend(solve_oscillating(n));
    states
}

/// A steady state tagged with the branch it was matched to along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub branch: usize,
    pub state: SteadyState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: Vec<f64>,
    pub points: Vec<Vec<BranchPoint>>,
}

impl SweepResult {
    pub fn iter_states(&self) -> impl Iterator<Item = (f64, &BranchPoint)> {
        self.axis
            .iter()
            .zip(&self.points)
            .flat_map(|(&x, pts)| pts.iter().map(move |p| (x, p)))
    }
}

/// Largest (P, Q) jump still accepted as continuation of a branch.
const BRANCH_MATCH_RADIUS: f64 = 1.0;

/// Solves every grid point (concurrently) and links the solutions into
/// branches by nearest-neighbour matching in (A_p², A²).
pub fn sweep<F>(grid: &[f64], params_at: F) -> SweepResult
where
    F: Fn(f64) -> NormalizedParams + Sync,
{
    let solved: Vec<Vec<SteadyState>> =
        grid.par_iter().map(|&v| solve_all(&params_at(v))).collect();

    let mut next_branch = 0usize;
    let mut previous: Vec<BranchPoint> = Vec::new();
    let mut points = Vec::with_capacity(solved.len());
    for states in solved {
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (i, s) in states.iter().enumerate() {
            for (j, prev) in previous.iter().enumerate() {
                if prev.state.kind != s.kind {
                    continue;
                }
                let d = (prev.state.pump_intensity() - s.pump_intensity()).abs()
                    + (prev.state.signal_intensity() - s.signal_intensity()).abs();
                if d < BRANCH_MATCH_RADIUS {
                    candidates.push((d, i, j));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut assigned: Vec<Option<usize>> = vec![None; states.len()];
        let mut used = vec![false; previous.len()];
        for (_, i, j) in candidates {
            if assigned[i].is_none() && !used[j] {
                assigned[i] = Some(previous[j].branch);
                used[j] = true;
            }
        }
        let current: Vec<BranchPoint> = states
            .into_iter()
            .zip(assigned)
            .map(|(state, branch)| {
                let branch = branch.unwrap_or_else(|| {
                    next_branch += 1;
                    next_branch - 1
                });
                BranchPoint { branch, state }
            })
            .collect();
        points.push(current.clone());
        previous = current;
    }
    SweepResult {
        axis: grid.to_vec(),
        points,
    }
}

/// Fixed points along a grid of pump powers F².
pub fn sweep_power(base: &NormalizedParams, f2_grid: &[f64]) -> SweepResult {
    sweep(f2_grid, |f2| base.with_f2(f2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(f2: f64, delta_p: f64, d3: f64) -> NormalizedParams {
        NormalizedParams {
            f2,
            delta_p,
            d3,
            ..Default::default()
        }
    }

    #[test]
    fn vacuum_is_a_fixed_point() {
        let z = [Complex64::new(0.0, 0.0); 3];
        assert_eq!(classical_rhs(&z, &params(0.0, 0.3, -1.0)), z);
    }

    #[test]
    fn empty_cavity_derivative_is_the_drive() {
        let z = [Complex64::new(0.0, 0.0); 3];
        let r = classical_rhs(&z, &params(4.0, 0.0, 0.0));
        assert_eq!(r[0], Complex64::new(2.0, 0.0));
        assert_eq!(r[1], Complex64::new(0.0, 0.0));
        assert_eq!(r[2], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn pump_only_at_unit_intensity() {
        let states = solve_pump_only(&params(2.0, 0.0, 0.0));
        assert_eq!(states.len(), 1);
        assert!((states[0].pump_intensity() - 1.0).abs() < 1e-12);
        assert!(states[0].residual() < RESIDUAL_TOLERANCE);
    }

    #[test]
    fn zero_drive_has_only_the_vacuum() {
        let states = solve_pump_only(&params(0.0, 1.0, -2.0));
        assert_eq!(states.len(), 1);
        assert_eq!(states[0].pump_intensity(), 0.0);
        assert!(solve_oscillating(&params(0.0, 1.0, -2.0)).is_empty());
    }

    #[test]
    fn kerr_bistability_gives_three_roots() {
        // For Δ_p = 3 the cubic has a local maximum 5.09 at P = 1.18 and a
        // local minimum 2.91 at P = 2.82, so F² = 4 crosses it three times.
        let states = solve_pump_only(&params(4.0, 3.0, 10.0));
        assert_eq!(states.len(), 3);
        for s in &states {
            assert!(s.residual() < RESIDUAL_TOLERANCE);
        }
        assert!(states[0].stable);
        assert!(!states[1].stable);
        assert!(states[2].stable);
    }

    #[test]
    fn no_oscillation_on_resonance_with_phase_matching() {
        for f2 in [0.5, 2.0, 8.0, 30.0, 50.0] {
            assert!(solve_oscillating(&params(f2, 0.0, 0.0)).is_empty());
        }
    }

    #[test]
    fn oscillating_states_are_fixed_points() {
        let n = params(5.0, 0.0, -4.0);
        let states = solve_oscillating(&n);
        assert!(!states.is_empty());
        for s in &states {
            assert!(s.residual() <= RESIDUAL_TOLERANCE);
            assert!((s.signal.modulus - s.idler.modulus).abs() < 1e-15);
            assert_eq!(s.signal.phase, s.idler.phase);
            assert_eq!(s.kind, BranchKind::Oscillating);
            let swapped = s.swapped();
            assert!(swapped.residual() <= RESIDUAL_TOLERANCE);
        }
    }

    #[test]
    fn sweep_of_zero_power() {
        let r = sweep_power(&params(0.0, 0.0, 0.0), &[0.0]);
        assert_eq!(r.points.len(), 1);
        assert_eq!(r.points[0].len(), 1);
        assert_eq!(r.points[0][0].state.kind, BranchKind::PumpOnly);
    }

    #[test]
    fn sweep_keeps_branch_labels_continuous() {
        let grid: Vec<f64> = (0..40).map(|k| 2.0 + 0.1 * k as f64).collect();
        let r = sweep_power(&params(0.0, 0.0, -4.0), &grid);
        // The upper oscillating branch must keep one label across consecutive points.
        let mut labels = std::collections::BTreeSet::new();
        for (_, bp) in r.iter_states() {
            if bp.state.kind == BranchKind::Oscillating && bp.state.stable {
                labels.insert(bp.branch);
            }
        }
        assert!(!labels.is_empty() && labels.len() <= 2, "{labels:?}");
    }
}
