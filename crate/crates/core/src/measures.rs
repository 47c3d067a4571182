//! Entanglement, steering and Bell-nonlocality measures.
//!
//! Everything except concurrence and negativity depends on the state only
//! through the correlation matrix `R = TᵀT`, and then only through its
//! spectrum. Closed forms for the generalized Werner family are kept apart
//! from the generic path so the two can be checked against each other.

use crate::matcore::{herm_eigen, kron, partial_transpose, ComplexMatrix, Mat3, PauliBasis, Subsystem, SymMatrix3, C64};
use crate::states::{bloch_decompose, check_unit, corr_r, DensityMatrix2Q, StateError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use thiserror::Error;

/// Arguments of θ and χ at or below this are treated as zero.
pub const ZERO_EPS: f64 = 1e-12;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("measurement directions invalid: {0}")]
    BadDirections(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("matrix is not symmetric: max |R - Rᵀ| = {0:.3e}")]
    NotSymmetric(f64),
    #[error("non-finite correlation matrix")]
    NonFinite,
}

/// θ(x) = max(x, 0), with |x| ≤ 1e-12 mapped to exactly 0.
#[inline]
pub fn theta(x: f64) -> f64 {
    if x > ZERO_EPS {
        x
    } else {
        0.0
    }
}

/// Heaviside step: 1 for x > 1e-12, else 0.
#[inline]
pub fn chi(x: f64) -> u8 {
    u8::from(x > ZERO_EPS)
}

/// Correlation matrix R with its cached spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrMatrixR {
    m: SymMatrix3,
    raw_eigenvalues: [f64; 3],
}

impl CorrMatrixR {
    pub fn new(m: SymMatrix3) -> Self {
        let raw_eigenvalues = m.eigenvalues();
        Self { m, raw_eigenvalues }
    }

    /// Accepts a general 3×3 matrix if it is symmetric within 1e-9.
    pub fn from_mat3(m: &Mat3) -> Result<Self, MeasureError> {
        if !m.is_finite() {
            return Err(MeasureError::NonFinite);
        }
        let asym = m.max_abs_diff(&m.transpose());
        if asym > 1e-9 {
            return Err(MeasureError::NotSymmetric(asym));
        }
        Ok(Self::new(SymMatrix3::from_mat3_symmetrized(m)))
    }

    pub fn matrix(&self) -> &SymMatrix3 {
        &self.m
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        self.m.to_mat3().0
    }

    /// Ascending eigenvalues before clamping.
    pub fn raw_eigenvalues(&self) -> [f64; 3] {
        self.raw_eigenvalues
    }

    /// Ascending eigenvalues clamped at 0, as used by every measure.
    pub fn eigenvalues(&self) -> [f64; 3] {
        self.raw_eigenvalues.map(|x| x.max(0.0))
    }

    /// Smallest eigenvalue before clamping; a quality metric for noisy input.
    pub fn min_raw_eigenvalue(&self) -> f64 {
        self.raw_eigenvalues[0]
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues().iter().sum()
    }

    /// Tr R above 3 + 1e-9 cannot come from a physical two-qubit state.
    pub fn trace_flagged(&self) -> bool {
        self.m.trace() > 3.0 + 1e-9
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.m.scale(s))
    }

    pub fn sum(&self, other: &Self) -> Self {
        Self::new(self.m.add(&other.m))
    }
}

/// FEF = ½θ(Tr√R − 1).
pub fn fef(r: &CorrMatrixR) -> f64 {
    let tr_sqrt: f64 = r.eigenvalues().iter().map(|x| x.sqrt()).sum();
    0.5 * theta(tr_sqrt - 1.0)
}

/// Sum of the two largest eigenvalues of R.
pub fn m_param(r: &CorrMatrixR) -> f64 {
    let e = r.eigenvalues();
    e[1] + e[2]
}

/// B = √θ(M − 1).
pub fn bell_b(r: &CorrMatrixR) -> f64 {
    theta(m_param(r) - 1.0).sqrt()
}

/// B′ = θ(√M − 1)/(√2 − 1).
pub fn bell_bprime(r: &CorrMatrixR) -> f64 {
    theta(m_param(r).sqrt() - 1.0) / (SQRT_2 - 1.0)
}

/// S = √(½θ(Tr R − 1)).
pub fn steering_s(r: &CorrMatrixR) -> f64 {
    (0.5 * theta(r.trace() - 1.0)).sqrt()
}

/// S₃ = θ(√Tr R − 1)/(√3 − 1).
pub fn steering_s3(r: &CorrMatrixR) -> f64 {
    theta(r.trace().sqrt() - 1.0) / (SQRT_3 - 1.0)
}

/// S₂ = θ(√(Tr R − λ_min) − 1)/(√2 − 1); identical to B′.
pub fn steering_s2(r: &CorrMatrixR) -> f64 {
    let e = r.eigenvalues();
    theta((e[0] + e[1] + e[2] - e[0]).sqrt() - 1.0) / (SQRT_2 - 1.0)
}

/// Wootters concurrence. The square roots of the eigenvalues of ρρ̃ are the
/// singular values of τ = V†(σ₂⊗σ₂)V*, where the columns of V are the
/// eigenvectors of ρ scaled by √λ. They are read off as the positive half of
/// the spectrum of the Hermitian embedding [[0, τ], [τ†, 0]], which keeps
/// absolute accuracy for rank-deficient states.
pub fn concurrence(rho: &DensityMatrix2Q) -> f64 {
    let pauli = PauliBasis::new();
    let yy = kron(&pauli.sigma2, &pauli.sigma2);
    let eig = herm_eigen(rho.matrix()).expect("validated density matrix is Hermitian");
    let v = ComplexMatrix::from_fn(4, 4, |r, k| eig.vectors[(r, k)] * eig.values[k].max(0.0).sqrt());
    let tau = &(&v.adjoint() * &yy) * &v.conj();
    let embed = ComplexMatrix::from_fn(8, 8, |r, c| match (r < 4, c < 4) {
        (true, false) => tau[(r, c - 4)],
        (false, true) => tau[(c, r - 4)].conj(),
        _ => C64::new(0.0, 0.0),
    });
    let spectrum = herm_eigen(&embed).expect("embedding is Hermitian").values;
    // ascending: the last four are the singular values, largest last
    theta(spectrum[7] - spectrum[6] - spectrum[5] - spectrum[4].max(0.0))
}

/// N = θ(−2 μ_min) with μ_min the smallest eigenvalue of ρ^Γ.
pub fn negativity(rho: &DensityMatrix2Q) -> f64 {
    let pt = partial_transpose(rho.matrix(), Subsystem::Second);
    let mu_min = herm_eigen(&pt).expect("partial transpose is Hermitian").values[0];
    theta(-2.0 * mu_min)
}

/// All scalar measures of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSet {
    pub fef: f64,
    /// Needs the density matrix; `None` when only R is known.
    pub concurrence: Option<f64>,
    /// Needs the density matrix; `None` when only R is known.
    pub negativity: Option<f64>,
    #[serde(rename = "steering_S")]
    pub steering_s: f64,
    #[serde(rename = "steering_S3")]
    pub steering_s3: f64,
    #[serde(rename = "steering_S2")]
    pub steering_s2: f64,
    #[serde(rename = "bell_B")]
    pub bell_b: f64,
    #[serde(rename = "bell_Bprime")]
    pub bell_bprime: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "hierarchy_H")]
    pub hierarchy_h: u8,
}

impl MeasureSet {
    pub const NAMES: [&'static str; 10] = [
        "fef",
        "concurrence",
        "negativity",
        "steering_S",
        "steering_S3",
        "steering_S2",
        "bell_B",
        "bell_Bprime",
        "M",
        "hierarchy_H",
    ];

    pub fn from_r(r: &CorrMatrixR) -> Self {
        let mut ms = Self {
            fef: fef(r),
            concurrence: None,
            negativity: None,
            steering_s: steering_s(r),
            steering_s3: steering_s3(r),
            steering_s2: steering_s2(r),
            bell_b: bell_b(r),
            bell_bprime: bell_bprime(r),
            m: m_param(r),
            hierarchy_h: 0,
        };
        ms.hierarchy_h = hierarchy_h(&ms);
        ms
    }

    pub fn from_state(rho: &DensityMatrix2Q) -> Self {
        let r = corr_r(&bloch_decompose(rho));
        Self {
            concurrence: Some(concurrence(rho)),
            negativity: Some(negativity(rho)),
            ..Self::from_r(&r)
        }
    }

    /// Value by field name; `None` for unknown names or absent fields.
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "fef" => Some(self.fef),
            "concurrence" => self.concurrence,
            "negativity" => self.negativity,
            "steering_S" => Some(self.steering_s),
            "steering_S3" => Some(self.steering_s3),
            "steering_S2" => Some(self.steering_s2),
            "bell_B" => Some(self.bell_b),
            "bell_Bprime" => Some(self.bell_bprime),
            "M" => Some(self.m),
            "hierarchy_H" => Some(f64::from(self.hierarchy_h)),
            _ => None,
        }
    }

    /// Largest difference over the fields present in both sets.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        Self::NAMES
            .iter()
            .filter_map(|n| Some((self.get(n)? - other.get(n)?).abs()))
            .fold(0.0, f64::max)
    }
}

/// χ(B) + χ(S) + χ(FEF).
pub fn hierarchy_h(ms: &MeasureSet) -> u8 {
    chi(ms.bell_b) + chi(ms.steering_s) + chi(ms.fef)
}

/// Alice's unit vectors and Bob's orthonormal vectors for n ∈ {2, 3}
/// measurement settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementDirections {
    alice: Vec<[f64; 3]>,
    bob: Vec<[f64; 3]>,
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize3(a: [f64; 3]) -> [f64; 3] {
    let n = dot3(&a, &a).sqrt();
    a.map(|x| x / n)
}

impl MeasurementDirections {
    const TOL: f64 = 1e-12;

    pub fn new(alice: Vec<[f64; 3]>, bob: Vec<[f64; 3]>) -> Result<Self, MeasureError> {
        let n = alice.len();
        if !(2..=3).contains(&n) || bob.len() != n {
            return Err(MeasureError::BadDirections(format!(
                "need 2 or 3 settings per party, got {} and {}",
                alice.len(),
                bob.len()
            )));
        }
        for (k, a) in alice.iter().enumerate() {
            if (dot3(a, a).sqrt() - 1.0).abs() > Self::TOL {
                return Err(MeasureError::BadDirections(format!("alice[{k}] is not a unit vector")));
            }
        }
        for i in 0..n {
            for j in i..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot3(&bob[i], &bob[j]) - expect).abs() > Self::TOL {
                    return Err(MeasureError::BadDirections(format!(
                        "bob vectors {i} and {j} are not orthonormal"
                    )));
                }
            }
        }
        Ok(Self { alice, bob })
    }

    pub fn n(&self) -> usize {
        self.alice.len()
    }

    pub fn alice(&self) -> &[[f64; 3]] {
        &self.alice
    }

    pub fn bob(&self) -> &[[f64; 3]] {
        &self.bob
    }

    /// Random unit vectors for Alice and a random orthonormal set for Bob.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Self, MeasureError> {
        let mut gauss = || -> [f64; 3] {
            loop {
                let v: [f64; 3] = std::array::from_fn(|_| rng.sample(rand_distr::StandardNormal));
                if dot3(&v, &v) > 1e-6 {
                    return normalize3(v);
                }
            }
        };
        let alice = (0..n).map(|_| gauss()).collect();
        let frame = random_frame(&mut gauss);
        Self::new(alice, frame[..n.min(3)].to_vec())
    }
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn random_frame(gauss: &mut impl FnMut() -> [f64; 3]) -> [[f64; 3]; 3] {
    let e0 = gauss();
    let e1 = loop {
        let g = gauss();
        let d = dot3(&g, &e0);
        let w = [g[0] - d * e0[0], g[1] - d * e0[1], g[2] - d * e0[2]];
        if dot3(&w, &w) > 1e-6 {
            break normalize3(w);
        }
    };
    [e0, e1, cross(&e0, &e1)]
}

/// F_n = (1/√n)|Σ_i Tr(ρ A_i⊗B_i)| with A_i = â_i·σ, B_i = b̂_i·σ.
pub fn cjwr_f(rho: &DensityMatrix2Q, dirs: &MeasurementDirections) -> f64 {
    let pauli = PauliBasis::new();
    let total: f64 = dirs
        .alice
        .iter()
        .zip(&dirs.bob)
        .map(|(a, b)| rho.matrix().trace_product(&kron(&pauli.dot(a), &pauli.dot(b))).re)
        .sum();
    total.abs() / (dirs.n() as f64).sqrt()
}

/// Same functional evaluated from the Stokes matrix: (1/√n)|Σ âᵢᵀ T b̂ᵢ|.
pub fn cjwr_f_from_t(t: &Mat3, dirs: &MeasurementDirections) -> f64 {
    let total: f64 = dirs.alice.iter().zip(&dirs.bob).map(|(a, b)| dot3(a, &t.mul_vec(b))).sum();
    total.abs() / (dirs.n() as f64).sqrt()
}

fn rotate_frame(frame: &[[f64; 3]; 3], axis: usize, angle: f64) -> [[f64; 3]; 3] {
    // rotation about one of the frame's own axes
    let (i, j) = match axis {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    };
    let (s, c) = angle.sin_cos();
    let mut out = *frame;
    for k in 0..3 {
        out[i][k] = c * frame[i][k] + s * frame[j][k];
        out[j][k] = -s * frame[i][k] + c * frame[j][k];
    }
    out
}

/// Σ_i |T b̂_i| over the first n frame vectors; the CJWR value once Alice
/// aligns each â_i with T b̂_i.
fn best_alice_sum(t: &Mat3, frame: &[[f64; 3]; 3], n: usize) -> f64 {
    frame[..n]
        .iter()
        .map(|b| {
            let tb = t.mul_vec(b);
            dot3(&tb, &tb).sqrt()
        })
        .sum()
}

/// Maximizes the CJWR functional over measurement directions by random
/// restarts plus coordinate ascent of Bob's frame on the rotation group,
/// with Alice's vectors set optimally for each frame.
pub fn optimize_cjwr(t: &Mat3, n: usize, restarts: usize, seed: u64) -> Result<(f64, MeasurementDirections), MeasureError> {
    if !(2..=3).contains(&n) {
        return Err(MeasureError::BadDirections(format!("n must be 2 or 3, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, [[f64; 3]; 3])> = None;
    for _ in 0..restarts.max(1) {
        let mut gauss = || -> [f64; 3] {
            loop {
                let v: [f64; 3] = std::array::from_fn(|_| rng.sample(rand_distr::StandardNormal));
                if dot3(&v, &v) > 1e-6 {
                    return normalize3(v);
                }
            }
        };
        let mut frame = random_frame(&mut gauss);
        let mut value = best_alice_sum(t, &frame, n);
        let mut step = 0.5;
        while step > 1e-6 {
            let mut improved = false;
            for axis in 0..3 {
                for sign in [1.0, -1.0] {
                    let cand = rotate_frame(&frame, axis, sign * step);
                    let v = best_alice_sum(t, &cand, n);
                    if v > value {
                        value = v;
                        frame = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, frame));
        }
    }
    let (_, frame) = best.expect("at least one restart");
    let bob: Vec<[f64; 3]> = frame[..n].to_vec();
    let alice: Vec<[f64; 3]> = bob
        .iter()
        .map(|b| {
            let tb = t.mul_vec(b);
            if dot3(&tb, &tb) > 1e-24 {
                normalize3(tb)
            } else {
                [0.0, 0.0, 1.0]
            }
        })
        .collect();
    let dirs = MeasurementDirections::new(alice, bob)?;
    Ok((cjwr_f_from_t(t, &dirs), dirs))
}

/// Mixing-parameter thresholds of the generalized Werner family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Separable iff p ≤ p_e.
    pub p_e: f64,
    /// Unsteerable (three settings) iff p ≤ p_s.
    pub p_s: f64,
    /// Bell local iff p ≤ p_b.
    pub p_b: f64,
}

pub fn thresholds(q: f64) -> Result<Thresholds, MeasureError> {
    let q = check_unit("q", q)?;
    let s = q * (1.0 - q);
    Ok(Thresholds {
        p_e: 1.0 / (1.0 + 4.0 * s.sqrt()),
        p_s: (1.0 + 8.0 * s).powf(-0.5),
        p_b: (1.0 + 4.0 * s).powf(-0.5),
    })
}

/// Closed-form measures of the generalized Werner state ρ_GW(p, q).
pub fn gws_oracle(p: f64, q: f64) -> Result<MeasureSet, MeasureError> {
    let p = check_unit("p", p)?;
    let q = check_unit("q", q)?;
    let s = q * (1.0 - q);
    let ent = 0.5 * theta(p * (1.0 + 4.0 * s.sqrt()) - 1.0);
    let m = p * p * (1.0 + 4.0 * s);
    let bprime = theta(p * (1.0 + 4.0 * s).sqrt() - 1.0) / (SQRT_2 - 1.0);
    let mut ms = MeasureSet {
        fef: ent,
        concurrence: Some(ent),
        negativity: Some(ent),
        steering_s: (0.5 * theta(8.0 * p * p * s + p * p - 1.0)).sqrt(),
        steering_s3: theta(p * (1.0 + 8.0 * s).sqrt() - 1.0) / (SQRT_3 - 1.0),
        steering_s2: bprime,
        bell_b: theta(p * p * (1.0 + 4.0 * s) - 1.0).sqrt(),
        bell_bprime: bprime,
        m,
        hierarchy_h: 0,
    };
    ms.hierarchy_h = hierarchy_h(&ms);
    Ok(ms)
}

/// Werner-state correlation class; each boundary belongs to the weaker class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WernerRegion {
    Separable,
    EntangledUnsteerable,
    SteerableLocal,
    Nonlocal,
}

impl WernerRegion {
    pub fn label(&self) -> &'static str {
        match self {
            WernerRegion::Separable => "separable",
            WernerRegion::EntangledUnsteerable => "entangled-unsteerable",
            WernerRegion::SteerableLocal => "steerable-local",
            WernerRegion::Nonlocal => "nonlocal",
        }
    }
}

pub fn classify_werner(p: f64) -> Result<WernerRegion, MeasureError> {
    let p = check_unit("p", p)?;
    Ok(if p <= 1.0 / 3.0 {
        WernerRegion::Separable
    } else if p <= 1.0 / SQRT_3 {
        WernerRegion::EntangledUnsteerable
    } else if p <= FRAC_1_SQRT_2 {
        WernerRegion::SteerableLocal
    } else {
        WernerRegion::Nonlocal
    })
}
