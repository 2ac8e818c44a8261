//! Entanglement witnesses evaluated on output spectral matrices.
//!
//! Bipartite tests use the pump-classical {y_+, x_+, y_−, x_−} spectrum:
//! the Duan sum Δ²x_− + Δ²y_+ − 1 and its version in the principal axes of
//! each 2×2 block. Tripartite tests use the full spectrum and variance
//! inequalities of van Loock–Furusawa type for a chosen bipartition K|R:
//!
//! ```text
//! Δ²u + Δ²v ≥ |[u_K, v_K]| + |[u_R, v_R]|        ([x, y] = i)
//! ```
//!
//! where u_K is the restriction of the linear combination u to the modes in
//! K. Every separable state across K|R satisfies it; a negative margin
//! (left minus right) certifies inseparability of that bipartition.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use nalgebra::{Matrix4, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluctuations::{self, FluctuationSystem, FullSpectrum, PumpClassicalSpectrum};
use crate::model::QuadratureConvention;

/// Coefficients of a real linear quadrature combination in the mode basis
/// (x_p, y_p, x_s, y_s, x_i, y_i).
pub type Combination = SVector<f64, 6>;

const PUMP: usize = 0;
const SIGNAL: usize = 1;
const IDLER: usize = 2;

// Indices in the pump-classical ordering.
const Y_PLUS: usize = 0;
const X_PLUS: usize = 1;
const Y_MINUS: usize = 2;
const X_MINUS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partition {
    /// {p | s, i}
    PumpVsSignalIdler,
    /// {s | i, p}
    SignalVsIdlerPump,
    /// {i | s, p}
    IdlerVsSignalPump,
}

impl Partition {
    pub const ALL: [Partition; 3] = [
        Partition::PumpVsSignalIdler,
        Partition::SignalVsIdlerPump,
        Partition::IdlerVsSignalPump,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Partition::PumpVsSignalIdler => "p|si",
            Partition::SignalVsIdlerPump => "s|ip",
            Partition::IdlerVsSignalPump => "i|sp",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.label() == s)
    }

    /// The mode on the single-mode side of the cut.
    pub fn isolated_mode(self) -> usize {
        match self {
            Partition::PumpVsSignalIdler => PUMP,
            Partition::SignalVsIdlerPump => SIGNAL,
            Partition::IdlerVsSignalPump => IDLER,
        }
    }
}

/// Full spectrum expressed in the mode basis.
pub fn mode_basis_matrix(s6: &FullSpectrum) -> nalgebra::Matrix6<f64> {
    let t = QuadratureConvention::mode_to_ordered();
    t.transpose() * s6.matrix * t
}

pub fn variance(s6: &FullSpectrum, c: &Combination) -> f64 {
    let ordered = QuadratureConvention::mode_to_ordered() * c;
    (ordered.transpose() * s6.matrix * ordered)[(0, 0)]
}

/// Imaginary part of [u_M, v_M] for the restriction to mode `m`.
fn mode_commutator(u: &Combination, v: &Combination, m: usize) -> f64 {
    u[2 * m] * v[2 * m + 1] - u[2 * m + 1] * v[2 * m]
}

/// Separability bound |[u_K, v_K]| + |[u_R, v_R]| for the bipartition.
pub fn separability_bound(u: &Combination, v: &Combination, partition: Partition) -> f64 {
    let k = partition.isolated_mode();
    let inner = mode_commutator(u, v, k);
    let rest: f64 = (0..3)
        .filter(|&m| m != k)
        .map(|m| mode_commutator(u, v, m))
        .sum();
    inner.abs() + rest.abs()
}

/// Variance sum of a witness and its separability bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VlfValue {
    pub value: f64,
    pub bound: f64,
}

impl VlfValue {
    pub fn margin(&self) -> f64 {
        self.value - self.bound
    }

    pub fn violated(&self) -> bool {
        self.margin() < 0.0
    }
}

/// Witness for arbitrary combinations u, v.
pub fn combination_witness(
    s6: &FullSpectrum,
    u: &Combination,
    v: &Combination,
    partition: Partition,
) -> VlfValue {
    VlfValue {
        value: variance(s6, u) + variance(s6, v),
        bound: separability_bound(u, v, partition),
    }
}

/// van Loock–Furusawa witness with u = Σ h_k x_k and v = Σ g_k y_k over
/// the modes (p, s, i). The bound is |h_k g_k| + |h_m g_m + h_n g_n| for
/// the isolated mode k.
pub fn vlf_witness(
    s6: &FullSpectrum,
    h: [f64; 3],
    g: [f64; 3],
    partition: Partition,
) -> Result<VlfValue> {
    if h.iter().all(|&c| c == 0.0) || g.iter().all(|&c| c == 0.0) {
        return Err(Error::InvalidArgument(
            "witness coefficient vectors must be non-zero".into(),
        ));
    }
    let mut u = Combination::zeros();
    let mut v = Combination::zeros();
    for m in 0..3 {
        u[2 * m] = h[m];
        v[2 * m + 1] = g[m];
    }
    Ok(combination_witness(s6, &u, &v, partition))
}

/// Duan sum Δ²x_− + Δ²y_+ − 1.
pub fn duan_witness(s4: &PumpClassicalSpectrum) -> f64 {
    s4.variance(X_MINUS) + s4.variance(Y_PLUS) - 1.0
}

/// Angles of the quadrature rotations that diagonalize the sum and
/// difference blocks.
///
/// θ_+ puts y_+^rot = cos θ_+ y_+ + sin θ_+ x_+ on the low-noise axis of the
/// sum block and θ_− puts x_−^rot = −sin θ_− y_− + cos θ_− x_− on the
/// low-noise axis of the difference block. Both lie in (−π/2, π/2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchmidtRotation2D {
    pub theta_plus: f64,
    pub theta_minus: f64,
}

fn half_angle(y: f64, x: f64) -> f64 {
    let mut t = 0.5 * y.atan2(x);
    if t <= -FRAC_PI_2 {
        t += std::f64::consts::PI;
    }
    t
}

fn is_isotropic(a: f64, b: f64, d: f64) -> bool {
    (a - d).abs() <= 1e-12 * (a + d).abs() && b.abs() <= 1e-12 * (a + d).abs()
}

/// Variance of cos θ·y + sin θ·x for a (y, x) block [[a, b], [b, d]].
fn rotated_phase_variance(a: f64, b: f64, d: f64, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    a * c * c + 2.0 * b * c * s + d * s * s
}

/// Variance of −sin θ·y + cos θ·x for a (y, x) block [[a, b], [b, d]].
fn rotated_amplitude_variance(a: f64, b: f64, d: f64, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    a * s * s - 2.0 * b * c * s + d * c * c
}

impl SchmidtRotation2D {
    pub fn from_spectrum(s4: &PumpClassicalSpectrum) -> Self {
        let m = &s4.matrix;
        Self::from_blocks(
            [
                m[(Y_PLUS, Y_PLUS)],
                m[(Y_PLUS, X_PLUS)],
                m[(X_PLUS, X_PLUS)],
            ],
            [
                m[(Y_MINUS, Y_MINUS)],
                m[(Y_MINUS, X_MINUS)],
                m[(X_MINUS, X_MINUS)],
            ],
        )
    }

    /// Blocks given as [var y, cov(y, x), var x].
    pub fn from_blocks(plus: [f64; 3], minus: [f64; 3]) -> Self {
        let [a, b, d] = plus;
        let theta_plus = if is_isotropic(a, b, d) {
            0.0
        } else {
            half_angle(-2.0 * b, d - a)
        };
        let [a, b, d] = minus;
        let theta_minus = if is_isotropic(a, b, d) {
            0.0
        } else {
            half_angle(2.0 * b, a - d)
        };
        Self {
            theta_plus,
            theta_minus,
        }
    }

    /// C = cos(θ_+ − θ_−).
    pub fn overlap(&self) -> f64 {
        (self.theta_plus - self.theta_minus).cos()
    }

    /// Largest off-diagonal element of the rotated blocks.
    pub fn diagonalization_residual(&self, s4: &PumpClassicalSpectrum) -> f64 {
        let m = &s4.matrix;
        let off = |ia: usize, ib: usize, theta: f64| {
            let (a, b, d) = (m[(ia, ia)], m[(ia, ib)], m[(ib, ib)]);
            let (s, c) = theta.sin_cos();
            // Row (c, s) against row (−s, c).
            (-s * c * a + (c * c - s * s) * b + s * c * d).abs()
        };
        off(Y_PLUS, X_PLUS, self.theta_plus).max(off(Y_MINUS, X_MINUS, self.theta_minus))
    }

    /// x_−^rot as a mode-basis combination.
    pub fn difference_amplitude(&self) -> Combination {
        let (s, c) = self.theta_minus.sin_cos();
        let h = FRAC_1_SQRT_2;
        let mut u = Combination::zeros();
        u[2] = c * h;
        u[3] = -s * h;
        u[4] = -c * h;
        u[5] = s * h;
        u
    }

    /// y_+^rot as a mode-basis combination.
    pub fn sum_phase(&self) -> Combination {
        let (s, c) = self.theta_plus.sin_cos();
        let h = FRAC_1_SQRT_2;
        let mut v = Combination::zeros();
        v[2] = s * h;
        v[3] = c * h;
        v[4] = s * h;
        v[5] = c * h;
        v
    }
}

pub fn schmidt_rotation_2d(s4: &PumpClassicalSpectrum) -> SchmidtRotation2D {
    SchmidtRotation2D::from_spectrum(s4)
}

/// Duan sum in the rotated quadratures, Δ²x_−^rot + Δ²y_+^rot − |C|, and C.
pub fn duan_rotated(s4: &PumpClassicalSpectrum, rot: &SchmidtRotation2D) -> (f64, f64) {
    let m = &s4.matrix;
    let vy = rotated_phase_variance(
        m[(Y_PLUS, Y_PLUS)],
        m[(Y_PLUS, X_PLUS)],
        m[(X_PLUS, X_PLUS)],
        rot.theta_plus,
    );
    let vx = rotated_amplitude_variance(
        m[(Y_MINUS, Y_MINUS)],
        m[(Y_MINUS, X_MINUS)],
        m[(X_MINUS, X_MINUS)],
        rot.theta_minus,
    );
    let c = rot.overlap();
    (vx + vy - c.abs(), c)
}

/// Orthogonal eigenbasis of the {x_p, y_p, x_+, y_+} block of the full
/// spectrum. Row k of `u` is the k-th Schmidt quadrature; rows are sorted by
/// ascending variance, so rows 0 and 1 are the two least noisy ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchmidtTransform4D {
    pub u: Matrix4<f64>,
    pub variances: [f64; 4],
}

/// Ordered-basis indices of (x_p, y_p, x_+, y_+).
const PUMP_SUM_INDICES: [usize; 4] = [1, 0, 3, 2];

impl SchmidtTransform4D {
    pub fn block(s6: &FullSpectrum) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| s6.matrix[(PUMP_SUM_INDICES[r], PUMP_SUM_INDICES[c])])
    }

    pub fn from_spectrum(s6: &FullSpectrum) -> Self {
        let block = Self::block(s6);
        let eig = block.symmetric_eigen();
        let spread = eig.eigenvalues.max() - eig.eigenvalues.min();
        if spread <= 1e-12 * eig.eigenvalues.abs().max() {
            let v = block[(0, 0)];
            return Self {
                u: Matrix4::identity(),
                variances: [v; 4],
            };
        }
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .total_cmp(&eig.eigenvalues[b])
                .then_with(|| {
                    let va = eig.eigenvectors.column(a);
                    let vb = eig.eigenvectors.column(b);
                    let ka: Vec<f64> = va.iter().map(|x| -x.abs()).collect();
                    let kb: Vec<f64> = vb.iter().map(|x| -x.abs()).collect();
                    ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
                })
        });
        let mut u = Matrix4::zeros();
        let mut variances = [0.0; 4];
        for (row, &k) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(k).into_owned();
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v = -v;
                }
            }
            u.set_row(row, &v.transpose());
            variances[row] = eig.eigenvalues[k];
        }
        Self { u, variances }
    }

    /// Largest off-diagonal element of U·S·Uᵀ.
    pub fn diagonalization_residual(&self, s6: &FullSpectrum) -> f64 {
        let d = self.u * Self::block(s6) * self.u.transpose();
        let mut worst: f64 = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                if r != c {
                    worst = worst.max(d[(r, c)].abs());
                }
            }
        }
        worst
    }

    pub fn orthogonality_error(&self) -> f64 {
        (self.u * self.u.transpose() - Matrix4::identity())
            .abs()
            .max()
    }

    /// Schmidt quadrature `k` (ascending noise) as a mode-basis combination.
    pub fn quadrature(&self, k: usize) -> Combination {
        let row = self.u.row(k);
        let h = FRAC_1_SQRT_2;
        let mut c = Combination::zeros();
        c[0] = row[0];
        c[1] = row[1];
        c[2] = row[2] * h;
        c[3] = row[3] * h;
        c[4] = row[2] * h;
        c[5] = row[3] * h;
        c
    }
}

pub fn schmidt_transform_4d(s6: &FullSpectrum) -> SchmidtTransform4D {
    SchmidtTransform4D::from_spectrum(s6)
}

/// Which pair of Schmidt-type quadratures a tripartite witness uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VlfForm {
    /// Δ²ξ + Δ²ξ' over the two least noisy Schmidt quadratures.
    SchmidtPair,
    /// Δ²x_−^rot + Δ²ξ_k with ξ_k one of the two least noisy quadratures.
    DifferenceAndSchmidt { index: usize },
}

impl VlfForm {
    pub fn label(&self) -> String {
        match self {
            VlfForm::SchmidtPair => "xi-pair".to_string(),
            VlfForm::DifferenceAndSchmidt { index } => format!("xminus-xi{index}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchmidtWitness {
    pub form: VlfForm,
    pub witness: VlfValue,
    pub u: Combination,
    pub v: Combination,
}

/// Candidate Schmidt-mode witnesses for one bipartition.
pub fn schmidt_witness_candidates(s6: &FullSpectrum, partition: Partition) -> Vec<SchmidtWitness> {
    let schmidt = SchmidtTransform4D::from_spectrum(s6);
    let minus = difference_rotation(s6);
    let x_minus = minus.difference_amplitude();
    let xi = [schmidt.quadrature(0), schmidt.quadrature(1)];
    let mut out = vec![SchmidtWitness {
        form: VlfForm::SchmidtPair,
        witness: combination_witness(s6, &xi[0], &xi[1], partition),
        u: xi[0],
        v: xi[1],
    }];
    for (index, x) in xi.iter().enumerate() {
        out.push(SchmidtWitness {
            form: VlfForm::DifferenceAndSchmidt { index },
            witness: combination_witness(s6, &x_minus, x, partition),
            u: x_minus,
            v: *x,
        });
    }
    out
}

/// Schmidt-mode witness with the smallest margin for one bipartition.
pub fn schmidt_witness(s6: &FullSpectrum, partition: Partition) -> SchmidtWitness {
    schmidt_witness_candidates(s6, partition)
        .into_iter()
        .min_by(|a, b| a.witness.margin().total_cmp(&b.witness.margin()))
        .expect("at least one candidate")
}

/// Rotation of the difference block read off the full spectrum; it
/// coincides with the pump-classical one because pump noise does not reach
/// the difference subspace.
fn difference_rotation(s6: &FullSpectrum) -> SchmidtRotation2D {
    let m = &s6.matrix;
    SchmidtRotation2D::from_blocks([0.5, 0.0, 0.5], [m[(4, 4)], m[(4, 5)], m[(5, 5)]])
}

/// Result of the numerical witness search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VlfOptimum {
    pub u: Combination,
    pub v: Combination,
    pub witness: VlfValue,
}

const OPTIMIZER_SEED: u64 = 0x5eed_0fc0_ffee;
const RANDOM_STARTS: usize = 12;
const MAX_ITERATIONS: usize = 4000;

struct Objective<'a> {
    s: nalgebra::Matrix6<f64>,
    partition: Partition,
    spectrum: &'a FullSpectrum,
}

impl Objective<'_> {
    fn value(&self, u: &Combination, v: &Combination) -> f64 {
        let w = combination_witness(self.spectrum, u, v, self.partition);
        w.margin()
    }

    /// Euclidean gradient of the margin with respect to (u, v).
    fn gradient(&self, u: &Combination, v: &Combination) -> (Combination, Combination) {
        let k = self.partition.isolated_mode();
        let inner = mode_commutator(u, v, k);
        let rest: f64 = (0..3)
            .filter(|&m| m != k)
            .map(|m| mode_commutator(u, v, m))
            .sum();
        let mut gu = self.s * u * 2.0;
        let mut gv = self.s * v * 2.0;
        for m in 0..3 {
            let sign = if m == k {
                inner.signum()
            } else {
                rest.signum()
            };
            let sign = if (m == k && inner == 0.0) || (m != k && rest == 0.0) {
                0.0
            } else {
                sign
            };
            // d/du of u_x v_y − u_y v_x and d/dv likewise.
            gu[2 * m] -= sign * v[2 * m + 1];
            gu[2 * m + 1] += sign * v[2 * m];
            gv[2 * m + 1] -= sign * u[2 * m];
            gv[2 * m] += sign * u[2 * m + 1];
        }
        (gu, gv)
    }
}

fn tangent(g: &Combination, x: &Combination) -> Combination {
    g - x * g.dot(x)
}

/// Riemannian gradient descent on the product of unit spheres with
/// Armijo backtracking; never increases the objective.
fn descend(
    obj: &Objective<'_>,
    mut u: Combination,
    mut v: Combination,
) -> (Combination, Combination, f64) {
    u /= u.norm();
    v /= v.norm();
    let mut f = obj.value(&u, &v);
    let mut step = 0.25;
    for _ in 0..MAX_ITERATIONS {
        let (gu, gv) = obj.gradient(&u, &v);
        let (tu, tv) = (tangent(&gu, &u), tangent(&gv, &v));
        let g2 = tu.norm_squared() + tv.norm_squared();
        if g2 < 1e-26 {
            break;
        }
        let mut accepted = false;
        while step > 1e-14 {
            let nu = (u - tu * step).normalize();
            let nv = (v - tv * step).normalize();
            let nf = obj.value(&nu, &nv);
            if nf <= f - 1e-4 * step * g2 {
                u = nu;
                v = nv;
                f = nf;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (u, v, f)
}

/// Numerically minimizes the witness margin over unit-norm combinations u, v,
/// starting from the Schmidt-mode witnesses, the Duan pair and a fixed set of
/// pseudo-random directions.
pub fn vlf_optimize(s6: &FullSpectrum, partition: Partition) -> VlfOptimum {
    let obj = Objective {
        s: mode_basis_matrix(s6),
        partition,
        spectrum: s6,
    };
    let mut starts: Vec<(Combination, Combination)> = schmidt_witness_candidates(s6, partition)
        .into_iter()
        .map(|c| (c.u, c.v))
        .collect();
    let rot = SchmidtRotation2D {
        theta_plus: 0.0,
        theta_minus: 0.0,
    };
    starts.push((rot.difference_amplitude(), rot.sum_phase()));
    let mut rng = ChaCha8Rng::seed_from_u64(OPTIMIZER_SEED);
    for _ in 0..RANDOM_STARTS {
        let u = Combination::from_fn(|_, _| rng.random::<f64>() - 0.5);
        let v = Combination::from_fn(|_, _| rng.random::<f64>() - 0.5);
        starts.push((u, v));
    }

    let mut best: Option<VlfOptimum> = None;
    for (u0, v0) in starts {
        let (u, v, f) = descend(&obj, u0, v0);
        if best.as_ref().is_none_or(|b| f < b.witness.margin()) {
            best = Some(VlfOptimum {
                u,
                v,
                witness: combination_witness(s6, &u, &v, partition),
            });
        }
    }
    best.expect("non-empty start set")
}

/// Exchanges the signal and idler coefficients of a combination.
pub fn mirror(c: &Combination) -> Combination {
    let mut m = *c;
    m[2] = c[4];
    m[3] = c[5];
    m[4] = c[2];
    m[5] = c[3];
    m
}

/// Checks that the {s|i,p} and {i|s,p} witnesses agree to 1e-9 for mirrored
/// combinations: the Schmidt-mode witnesses and the optimized {s|i,p}
/// witness.
pub fn partition_symmetry_check(s6: &FullSpectrum) -> bool {
    let mut pairs: Vec<(Combination, Combination)> =
        schmidt_witness_candidates(s6, Partition::SignalVsIdlerPump)
            .into_iter()
            .map(|c| (c.u, c.v))
            .collect();
    let opt = vlf_optimize(s6, Partition::SignalVsIdlerPump);
    pairs.push((opt.u, opt.v));
    pairs.iter().all(|(u, v)| {
        let a = combination_witness(s6, u, v, Partition::SignalVsIdlerPump);
        let b = combination_witness(s6, &mirror(u), &mirror(v), Partition::IdlerVsSignalPump);
        (a.value - b.value).abs() <= 1e-9 && (a.bound - b.bound).abs() <= 1e-9
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VlfEntry {
    pub form: VlfForm,
    pub witness: VlfValue,
    pub violated: bool,
}

/// All witnesses at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub duan: f64,
    pub duan_rotated: f64,
    /// cos(θ_+ − θ_−)
    pub c: f64,
    pub rotation: SchmidtRotation2D,
    pub schmidt_variances: [f64; 4],
    pub vlf: BTreeMap<Partition, VlfEntry>,
    pub duan_violated: bool,
    pub duan_rotated_violated: bool,
}

impl WitnessReport {
    pub fn from_spectra(s4: &PumpClassicalSpectrum, s6: &FullSpectrum) -> Self {
        let duan = duan_witness(s4);
        let rotation = schmidt_rotation_2d(s4);
        let (duan_rotated, c) = duan_rotated(s4, &rotation);
        let schmidt = schmidt_transform_4d(s6);
        let vlf = Partition::ALL
            .into_iter()
            .map(|p| {
                let w = schmidt_witness(s6, p);
                (
                    p,
                    VlfEntry {
                        form: w.form,
                        witness: w.witness,
                        violated: w.witness.violated(),
                    },
                )
            })
            .collect();
        Self {
            duan,
            duan_rotated,
            c,
            rotation,
            schmidt_variances: schmidt.variances,
            vlf,
            duan_violated: duan < 0.0,
            duan_rotated_violated: duan_rotated < 0.0,
        }
    }
}

/// Spectra and witnesses for a linearized steady state.
pub fn witness_report(fs: &FluctuationSystem, omega: f64) -> Result<WitnessReport> {
    let s4 = fluctuations::pump_classical_spectrum(fs, omega)?;
    let s6 = fluctuations::output_spectrum(fs, omega)?;
    Ok(WitnessReport::from_spectra(&s4, &s6))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SMatrix;

    fn s4_from(m: [[f64; 4]; 4]) -> PumpClassicalSpectrum {
        PumpClassicalSpectrum {
            omega: 0.0,
            matrix: SMatrix::<f64, 4, 4>::from_fn(|r, c| m[r][c]),
        }
    }

    #[test]
    fn vacuum_duan_is_zero() {
        assert_eq!(duan_witness(&PumpClassicalSpectrum::vacuum(0.0)), 0.0);
    }

    #[test]
    fn vacuum_rotated_duan_is_non_negative() {
        let v = PumpClassicalSpectrum::vacuum(0.0);
        for (tp, tm) in [(0.0, 0.0), (0.3, -0.2), (1.5, 0.1)] {
            let rot = SchmidtRotation2D {
                theta_plus: tp,
                theta_minus: tm,
            };
            let (w, c) = duan_rotated(&v, &rot);
            assert!((w - (1.0 - c.abs())).abs() < 1e-15);
            assert!(w >= 0.0);
        }
    }

    #[test]
    fn diagonal_blocks_need_no_rotation() {
        let s = s4_from([
            [0.2, 0.0, 0.0, 0.0],
            [0.0, 3.0, 0.0, 0.0],
            [0.0, 0.0, 5.0, 0.0],
            [0.0, 0.0, 0.0, 0.3],
        ]);
        let rot = schmidt_rotation_2d(&s);
        assert_eq!(rot.theta_plus, 0.0);
        assert_eq!(rot.theta_minus, 0.0);
        let (w, c) = duan_rotated(&s, &rot);
        assert_eq!(c, 1.0);
        assert_eq!(w, duan_witness(&s));
    }

    #[test]
    fn rotation_picks_low_noise_axes() {
        let s = s4_from([
            [2.0, 0.7, 0.0, 0.0],
            [0.7, 0.6, 0.0, 0.0],
            [0.0, 0.0, 9.0, 0.05],
            [0.0, 0.0, 0.05, 0.3],
        ]);
        let rot = schmidt_rotation_2d(&s);
        assert!(rot.diagonalization_residual(&s) < 1e-12);
        let m = &s.matrix;
        let vy = rotated_phase_variance(m[(0, 0)], m[(0, 1)], m[(1, 1)], rot.theta_plus);
        let plus_min = {
            let b = nalgebra::Matrix2::<f64>::new(2.0, 0.7, 0.7, 0.6);
            b.symmetric_eigenvalues().min()
        };
        assert!((vy - plus_min).abs() < 1e-12);
        assert!(rot.theta_plus.abs() > 0.5);
        assert!(rot.theta_minus.abs() < 0.01);
    }

    #[test]
    fn isotropic_block_maps_to_zero_angle() {
        let rot = SchmidtRotation2D::from_blocks([0.7, 0.0, 0.7], [0.5, 0.0, 0.5]);
        assert_eq!(rot.theta_plus, 0.0);
        assert_eq!(rot.theta_minus, 0.0);
    }

    #[test]
    fn two_mode_vlf_reduces_to_duan() {
        let h = FRAC_1_SQRT_2;
        let v = FullSpectrum::vacuum(0.0);
        let w = vlf_witness(&v, [0.0, h, -h], [0.0, h, h], Partition::SignalVsIdlerPump).unwrap();
        assert!((w.bound - 1.0).abs() < 1e-15);
        assert!((w.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficients_are_rejected() {
        let v = FullSpectrum::vacuum(0.0);
        assert!(matches!(
            vlf_witness(&v, [0.0; 3], [1.0, 0.0, 0.0], Partition::PumpVsSignalIdler),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn vacuum_schmidt_transform_is_identity() {
        let t = schmidt_transform_4d(&FullSpectrum::vacuum(0.0));
        assert_eq!(t.u, Matrix4::identity());
        assert_eq!(t.variances, [0.5; 4]);
    }

    #[test]
    fn vacuum_is_symmetric_and_never_violates() {
        let v = FullSpectrum::vacuum(0.0);
        assert!(partition_symmetry_check(&v));
        for p in Partition::ALL {
            assert!(vlf_optimize(&v, p).witness.margin() >= -1e-12);
        }
    }

    #[test]
    fn partition_labels_round_trip() {
        for p in Partition::ALL {
            assert_eq!(Partition::from_label(p.label()), Some(p));
        }
    }
}
