//! Two-qubit states in the basis {|HH⟩, |HV⟩, |VH⟩, |VV⟩} with |H⟩ = (1, 0)ᵀ,
//! the Werner-like state families, and the Bloch/Stokes decomposition.

use crate::matcore::{c, herm_eigen, herm_eigvals, kron, ComplexMatrix, Mat3, PauliBasis, SymMatrix3, C64, HERMITIAN_TOL};
use crate::measures::CorrMatrixR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use thiserror::Error;

const STATE_TOL: f64 = 1e-9;
const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("expected a 4x4 matrix, got {0}x{1}")]
    BadDims(usize, usize),
    #[error("density matrix is not Hermitian: max |rho - rho†| = {0:.3e}")]
    NotHermitian(f64),
    #[error("density matrix trace {0} differs from 1")]
    BadTrace(f64),
    #[error("density matrix is not positive semidefinite: min eigenvalue {0:.3e}")]
    NotPositive(f64),
    #[error("non-finite entry in state")]
    NonFinite,
    #[error("parameter {name} = {value} outside [0, 1]")]
    ParamOutOfRange { name: &'static str, value: f64 },
    #[error("amplitudes are not normalized: norm² = {0}")]
    NotNormalized(f64),
    #[error("rank must be in 1..=4, got {0}")]
    BadRank(usize),
    #[error("correlation matrix does not correspond to a physical state: {0}")]
    Unphysical(String),
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<f64, StateError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(StateError::ParamOutOfRange { name, value })
    }
}

/// Validated two-qubit density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix2Q(ComplexMatrix);

impl DensityMatrix2Q {
    /// Validates hermiticity, unit trace and positivity (all to 1e-9).
    pub fn new(m: ComplexMatrix) -> Result<Self, StateError> {
        if m.dims() != (4, 4) {
            return Err(StateError::BadDims(m.rows(), m.cols()));
        }
        if !m.is_finite() {
            return Err(StateError::NonFinite);
        }
        let defect = m.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(StateError::NotHermitian(defect));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(StateError::BadTrace(tr.re));
        }
        let min_eig = herm_eigvals(&m).map_err(|_| StateError::NonFinite)?[0];
        if min_eig < -STATE_TOL {
            return Err(StateError::NotPositive(min_eig));
        }
        Ok(Self(m))
    }

    pub fn maximally_mixed() -> Self {
        Self(ComplexMatrix::identity(4).scale_re(0.25))
    }

    pub fn from_pure(psi: &PureState2Q) -> Self {
        Self(ComplexMatrix::outer(&psi.amplitudes()))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn purity(&self) -> f64 {
        self.0.trace_product(&self.0).re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        herm_eigvals(&self.0).expect("validated density matrix is Hermitian")
    }

    /// (U_A ⊗ U_B) ρ (U_A ⊗ U_B)†.
    pub fn apply_local(&self, ua: &ComplexMatrix, ub: &ComplexMatrix) -> Self {
        let u = kron(ua, ub);
        Self(&(&u * &self.0) * &u.adjoint())
    }

    /// Convex mixture `w·self + (1 - w)·other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self, StateError> {
        check_unit("weight", w)?;
        Ok(Self(&self.0.scale_re(w) + &other.0.scale_re(1.0 - w)))
    }

    /// Reduced state of the first qubit.
    pub fn reduced_first(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(2, 2, |a, a2| self.0[(2 * a, 2 * a2)] + self.0[(2 * a + 1, 2 * a2 + 1)])
    }

    /// Reduced state of the second qubit.
    pub fn reduced_second(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(2, 2, |b, b2| self.0[(b, b2)] + self.0[(2 + b, 2 + b2)])
    }
}

#[derive(Serialize, Deserialize)]
struct DensityMatrixJson {
    re: [[f64; 4]; 4],
    im: [[f64; 4]; 4],
}

impl Serialize for DensityMatrix2Q {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut re = [[0.0; 4]; 4];
        let mut im = [[0.0; 4]; 4];
        for r in 0..4 {
            for col in 0..4 {
                re[r][col] = self.0[(r, col)].re;
                im[r][col] = self.0[(r, col)].im;
            }
        }
        DensityMatrixJson { re, im }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix2Q {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = DensityMatrixJson::deserialize(d)?;
        let m = ComplexMatrix::from_fn(4, 4, |r, col| c(raw.re[r][col], raw.im[r][col]));
        DensityMatrix2Q::new(m).map_err(serde::de::Error::custom)
    }
}

/// a|HH⟩ + b|HV⟩ + c|VH⟩ + d|VV⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureState2Q {
    amps: [C64; 4],
}

impl PureState2Q {
    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Result<Self, StateError> {
        let amps = [a, b, c, d];
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(StateError::NonFinite);
        }
        let n2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(StateError::NotNormalized(n2));
        }
        Ok(Self { amps })
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(amps: [C64; 4]) -> Result<Self, StateError> {
        let n = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n <= 0.0 || !n.is_finite() {
            return Err(StateError::NotNormalized(n * n));
        }
        let amps = amps.map(|z| z / n);
        Self::new(amps[0], amps[1], amps[2], amps[3])
    }

    pub fn amplitudes(&self) -> [C64; 4] {
        self.amps
    }

    pub fn a(&self) -> C64 {
        self.amps[0]
    }
    pub fn b(&self) -> C64 {
        self.amps[1]
    }
    pub fn c(&self) -> C64 {
        self.amps[2]
    }
    pub fn d(&self) -> C64 {
        self.amps[3]
    }

    /// 2|ad − bc|, the common value of every measure on a pure state.
    pub fn two_abs_ad_minus_bc(&self) -> f64 {
        2.0 * (self.a() * self.d() - self.b() * self.c()).norm()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }
}

fn ket(a: f64, b: f64, c_: f64, d: f64) -> [C64; 4] {
    [c(a, 0.0), c(b, 0.0), c(c_, 0.0), c(d, 0.0)]
}

/// |ψ⁻⟩ = (|HV⟩ − |VH⟩)/√2.
pub fn singlet_ket() -> [C64; 4] {
    ket(0.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0)
}

/// |ψ⁺⟩ = (|HV⟩ + |VH⟩)/√2.
pub fn triplet_ket() -> [C64; 4] {
    ket(0.0, FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0)
}

pub fn singlet() -> DensityMatrix2Q {
    DensityMatrix2Q(ComplexMatrix::outer(&singlet_ket()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WernerParams {
    p: f64,
}

impl WernerParams {
    pub fn new(p: f64) -> Result<Self, StateError> {
        Ok(Self { p: check_unit("p", p)? })
    }
    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Shared (p, q) parameters of the generalized Werner and dephased families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixParams {
    p: f64,
    q: f64,
}

pub type GwsParams = MixParams;
pub type DephasedBellParams = MixParams;

impl MixParams {
    pub fn new(p: f64, q: f64) -> Result<Self, StateError> {
        Ok(Self {
            p: check_unit("p", p)?,
            q: check_unit("q", q)?,
        })
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn q(&self) -> f64 {
        self.q
    }
}

fn noisy_pure(p: f64, psi: &[C64; 4]) -> DensityMatrix2Q {
    let pure = ComplexMatrix::outer(psi).scale_re(p);
    let noise = ComplexMatrix::identity(4).scale_re((1.0 - p) / 4.0);
    DensityMatrix2Q(&pure + &noise)
}

/// ρ_W = p|ψ⁻⟩⟨ψ⁻| + (1 − p) I/4.
pub fn werner(p: f64) -> Result<DensityMatrix2Q, StateError> {
    let params = WernerParams::new(p)?;
    Ok(noisy_pure(params.p(), &singlet_ket()))
}

/// p|ψ_q⟩⟨ψ_q| + (1 − p) I/4 with |ψ_q⟩ = √q|HV⟩ − √(1−q)|VH⟩.
pub fn gws(p: f64, q: f64) -> Result<DensityMatrix2Q, StateError> {
    let params = GwsParams::new(p, q)?;
    let q = params.q();
    Ok(noisy_pure(params.p(), &ket(0.0, q.sqrt(), -(1.0 - q).sqrt(), 0.0)))
}

/// Generalized Werner state built on |φ_q⟩ = √q|HH⟩ + √(1−q)|VV⟩.
pub fn gws_phi(p: f64, q: f64) -> Result<DensityMatrix2Q, StateError> {
    let params = GwsParams::new(p, q)?;
    let q = params.q();
    Ok(noisy_pure(params.p(), &ket(q.sqrt(), 0.0, 0.0, (1.0 - q).sqrt())))
}

/// p|ψ⁻_q⟩⟨ψ⁻_q| + (1 − p)|ψ⁺_q⟩⟨ψ⁺_q| with |ψ±_q⟩ = √q|HV⟩ ± √(1−q)|VH⟩.
pub fn dephased_bell(p: f64, q: f64) -> Result<DensityMatrix2Q, StateError> {
    let params = DephasedBellParams::new(p, q)?;
    let (p, q) = (params.p(), params.q());
    let minus = ComplexMatrix::outer(&ket(0.0, q.sqrt(), -(1.0 - q).sqrt(), 0.0));
    let plus = ComplexMatrix::outer(&ket(0.0, q.sqrt(), (1.0 - q).sqrt(), 0.0));
    Ok(DensityMatrix2Q(&minus.scale_re(p) + &plus.scale_re(1.0 - p)))
}

/// Bloch vectors of each qubit and the two-qubit Stokes matrix T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochDecomposition {
    pub u: [f64; 3],
    pub v: [f64; 3],
    #[serde(rename = "T", with = "mat3_rows")]
    pub t: Mat3,
}

mod mat3_rows {
    use crate::matcore::Mat3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat3, s: S) -> Result<S::Ok, S::Error> {
        m.0.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat3, D::Error> {
        <[[f64; 3]; 3]>::deserialize(d).map(Mat3)
    }
}

impl BlochDecomposition {
    /// u_i = Tr[ρ(σ_i⊗I)], v_i = Tr[ρ(I⊗σ_i)], T_ij = Tr[ρ(σ_i⊗σ_j)].
    pub fn from_state(rho: &DensityMatrix2Q) -> Self {
        let pauli = PauliBasis::new();
        let expect = |i: usize, j: usize| rho.matrix().trace_product(&kron(pauli.sigma(i), pauli.sigma(j))).re;
        let u = std::array::from_fn(|i| expect(i + 1, 0));
        let v = std::array::from_fn(|j| expect(0, j + 1));
        let t = Mat3::from_fn(|i, j| expect(i + 1, j + 1));
        Self { u, v, t }
    }

    /// ρ = ¼(I + u·σ⊗I + I⊗v·σ + Σ T_ij σ_i⊗σ_j).
    pub fn reassemble(&self) -> ComplexMatrix {
        let pauli = PauliBasis::new();
        let mut m = ComplexMatrix::identity(4);
        for i in 0..3 {
            m = &m + &kron(pauli.sigma(i + 1), &pauli.identity2).scale_re(self.u[i]);
            m = &m + &kron(&pauli.identity2, pauli.sigma(i + 1)).scale_re(self.v[i]);
            for j in 0..3 {
                m = &m + &kron(pauli.sigma(i + 1), pauli.sigma(j + 1)).scale_re(self.t.0[i][j]);
            }
        }
        m.scale_re(0.25)
    }

    /// T Tᵀ, the matrix the collective measurement reaches directly.
    pub fn t_tt(&self) -> SymMatrix3 {
        SymMatrix3::from_mat3_symmetrized(&self.t.mul(&self.t.transpose()))
    }
}

pub fn bloch_decompose(rho: &DensityMatrix2Q) -> BlochDecomposition {
    BlochDecomposition::from_state(rho)
}

/// R = TᵀT.
pub fn corr_r(decomp: &BlochDecomposition) -> CorrMatrixR {
    CorrMatrixR::new(SymMatrix3::from_mat3_symmetrized(&decomp.t.transpose().mul(&decomp.t)))
}

/// The state with u = v = 0 and T = −√R, i.e. the singlet-like Bell-diagonal
/// state (up to local rotations) with correlation matrix R. Fails when that
/// state is not positive.
pub fn bell_diagonal_from_r(r: &SymMatrix3) -> Result<DensityMatrix2Q, StateError> {
    let eig = r.eigen();
    if eig.values[0] < -STATE_TOL {
        return Err(StateError::Unphysical(format!(
            "negative eigenvalue {:.3e} in R",
            eig.values[0]
        )));
    }
    let root = eig.apply(|x| x.max(0.0).sqrt());
    let decomp = BlochDecomposition {
        u: [0.0; 3],
        v: [0.0; 3],
        t: root.to_mat3().scale(-1.0),
    };
    DensityMatrix2Q::new(decomp.reassemble()).map_err(|e| StateError::Unphysical(e.to_string()))
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im)
}

pub fn random_pure_with<R: Rng + ?Sized>(rng: &mut R) -> PureState2Q {
    loop {
        let amps: [C64; 4] = std::array::from_fn(|_| complex_gaussian(rng));
        if let Ok(psi) = PureState2Q::normalized(amps) {
            return psi;
        }
    }
}

/// Haar-random pure state.
pub fn random_pure(seed: u64) -> PureState2Q {
    random_pure_with(&mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn random_density_with<R: Rng + ?Sized>(rng: &mut R, rank: usize) -> Result<DensityMatrix2Q, StateError> {
    if !(1..=4).contains(&rank) {
        return Err(StateError::BadRank(rank));
    }
    let g = ComplexMatrix::from_fn(4, rank, |_, _| complex_gaussian(rng));
    let gg = &g * &g.adjoint();
    let tr = gg.trace().re;
    let m = gg.scale_re(1.0 / tr);
    // exact Hermitian symmetrization of rounding
    let m = ComplexMatrix::from_fn(4, 4, |r, col| (m[(r, col)] + m[(col, r)].conj()) * 0.5);
    DensityMatrix2Q::new(m)
}

/// ρ ∝ G G† with G a 4×rank complex Gaussian matrix.
pub fn random_density(seed: u64, rank: usize) -> Result<DensityMatrix2Q, StateError> {
    random_density_with(&mut ChaCha8Rng::seed_from_u64(seed), rank)
}

/// Haar-random 2×2 unitary: Gram-Schmidt QR of a complex Gaussian matrix
/// (positive diagonal of R fixes the phases).
pub fn random_unitary2<R: Rng + ?Sized>(rng: &mut R) -> ComplexMatrix {
    let g: [C64; 4] = std::array::from_fn(|_| complex_gaussian(rng));
    let col0 = [g[0], g[2]];
    let col1 = [g[1], g[3]];
    let n0 = (col0[0].norm_sqr() + col0[1].norm_sqr()).sqrt();
    let q0 = [col0[0] / n0, col0[1] / n0];
    let proj = q0[0].conj() * col1[0] + q0[1].conj() * col1[1];
    let w = [col1[0] - proj * q0[0], col1[1] - proj * q0[1]];
    let n1 = (w[0].norm_sqr() + w[1].norm_sqr()).sqrt();
    let q1 = [w[0] / n1, w[1] / n1];
    ComplexMatrix::from_row_major(2, 2, vec![q0[0], q1[0], q0[1], q1[1]])
}

/// Eigenvalues of the partially transposed state, ascending.
pub fn partial_transpose_spectrum(rho: &DensityMatrix2Q) -> Vec<f64> {
    let pt = crate::matcore::partial_transpose(rho.matrix(), crate::matcore::Subsystem::Second);
    herm_eigen(&pt).expect("partial transpose of a Hermitian matrix is Hermitian").values
}
