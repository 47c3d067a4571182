//! Two-copy collective measurement of the correlation matrix.
//!
//! Photons 1 and 2 carry the first copy of ρ, photons 3 and 4 the second.
//! Photons 1 and 3 are projected locally onto polarization states, while
//! photons 2 and 4 meet at a beam splitter whose coincidences project them
//! onto the singlet. A fraction of pairs fails to interfere and contributes
//! distinguishable-photon statistics instead.

use crate::matcore::{c, ComplexMatrix, PauliBasis, SymMatrix3, C64};
use crate::measures::{CorrMatrixR, MeasureError};
use crate::states::{bloch_decompose, check_unit, singlet_ket, DensityMatrix2Q, StateError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use std::io::{Read, Write};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollectiveError {
    #[error("{name} = {value} is out of range")]
    BadParam { name: &'static str, value: f64 },
    #[error("Pauli index {0} out of range 1..=3")]
    BadIndex(usize),
    #[error("probability {value} for {setting} ({regime}) outside [0, 1]")]
    BadProbability {
        setting: ProjectionSetting,
        regime: Regime,
        value: f64,
    },
    #[error("missing records: {0}")]
    MissingRecords(String),
    #[error("count ratio {ratio:.6} is outside the range reachable by the model")]
    RatioOutOfRange { ratio: f64 },
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Single-photon polarization projector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Polarization {
    pub const ALL: [Polarization; 6] = [
        Polarization::H,
        Polarization::V,
        Polarization::D,
        Polarization::A,
        Polarization::R,
        Polarization::L,
    ];

    /// Bloch vector: H/V along σ₃, D/A along σ₁, R/L along σ₂.
    pub fn bloch(self) -> [f64; 3] {
        match self {
            Polarization::H => [0.0, 0.0, 1.0],
            Polarization::V => [0.0, 0.0, -1.0],
            Polarization::D => [1.0, 0.0, 0.0],
            Polarization::A => [-1.0, 0.0, 0.0],
            Polarization::R => [0.0, 1.0, 0.0],
            Polarization::L => [0.0, -1.0, 0.0],
        }
    }

    pub fn ket(self) -> [C64; 2] {
        let h = FRAC_1_SQRT_2;
        match self {
            Polarization::H => [c(1.0, 0.0), c(0.0, 0.0)],
            Polarization::V => [c(0.0, 0.0), c(1.0, 0.0)],
            Polarization::D => [c(h, 0.0), c(h, 0.0)],
            Polarization::A => [c(h, 0.0), c(-h, 0.0)],
            Polarization::R => [c(h, 0.0), c(0.0, h)],
            Polarization::L => [c(h, 0.0), c(0.0, -h)],
        }
    }

    pub fn projector(self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.ket())
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Polarization::H => "H",
            Polarization::V => "V",
            Polarization::D => "D",
            Polarization::A => "A",
            Polarization::R => "R",
            Polarization::L => "L",
        }
    }
}

impl std::fmt::Display for Polarization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Polarization {
    type Err = CollectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Polarization::ALL
            .into_iter()
            .find(|p| p.symbol() == s)
            .ok_or_else(|| CollectiveError::Csv(format!("unknown polarization {s:?}")))
    }
}

/// Local projections on photon 1 (Alice) and photon 3 (Bob).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProjectionSetting {
    pub alice: Polarization,
    pub bob: Polarization,
}

impl ProjectionSetting {
    pub fn new(alice: Polarization, bob: Polarization) -> Self {
        Self { alice, bob }
    }

    /// All 36 settings, Alice outer, in `Polarization::ALL` order.
    pub fn all() -> Vec<ProjectionSetting> {
        Polarization::ALL
            .iter()
            .flat_map(|&a| Polarization::ALL.iter().map(move |&b| ProjectionSetting::new(a, b)))
            .collect()
    }

    /// Position in `all()`.
    pub fn index(&self) -> usize {
        let pos = |p: Polarization| Polarization::ALL.iter().position(|&x| x == p).unwrap();
        6 * pos(self.alice) + pos(self.bob)
    }
}

impl std::fmt::Display for ProjectionSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.alice, self.bob)
    }
}

/// Measurement regime of a record.
///
/// `Wide` records come from the widened coincidence window; the copies are
/// then white noise but the beam splitter is still tuned, so they follow the
/// tuned forward model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Tuned,
    Detuned,
    Wide,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Tuned => "tuned",
            Regime::Detuned => "detuned",
            Regime::Wide => "wide",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Regime::Tuned => 0,
            Regime::Detuned => 1,
            Regime::Wide => 2,
        }
    }

    pub fn interferes(self) -> bool {
        !matches!(self, Regime::Detuned)
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = CollectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tuned" => Ok(Regime::Tuned),
            "detuned" => Ok(Regime::Detuned),
            "wide" => Ok(Regime::Wide),
            _ => Err(CollectiveError::Csv(format!("unknown regime {s:?}"))),
        }
    }
}

/// Four-fold coincidence count for one setting and regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting: ProjectionSetting,
    pub regime: Regime,
    pub counts: u64,
    pub exposure: f64,
}

impl CountRecord {
    pub fn new(setting: ProjectionSetting, regime: Regime, counts: u64, exposure: f64) -> Result<Self, CollectiveError> {
        if !(exposure > 0.0 && exposure.is_finite()) {
            return Err(CollectiveError::BadParam {
                name: "exposure",
                value: exposure,
            });
        }
        Ok(Self {
            setting,
            regime,
            counts,
            exposure,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceModel {
    non_interfering_fraction: f64,
}

impl Default for InterferenceModel {
    fn default() -> Self {
        Self {
            non_interfering_fraction: 0.567,
        }
    }
}

impl InterferenceModel {
    pub fn new(non_interfering_fraction: f64) -> Result<Self, CollectiveError> {
        let f = check_unit("non_interfering_fraction", non_interfering_fraction)?;
        Ok(Self {
            non_interfering_fraction: f,
        })
    }

    pub fn non_interfering_fraction(&self) -> f64 {
        self.non_interfering_fraction
    }
}

/// P⁻ = |ψ⁻⟩⟨ψ⁻|.
pub fn singlet_projector() -> ComplexMatrix {
    ComplexMatrix::outer(&singlet_ket())
}

/// Π = −4P⁻.
pub fn pi_operator() -> ComplexMatrix {
    singlet_projector().scale_re(-4.0)
}

/// Operator applied to photons 2 and 4 when estimating A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionConvention {
    /// Π = −4P⁻; A + B = TTᵀ, and A alone is exact only when u = 0.
    #[default]
    Singlet,
    /// I₄ + Π = Σ σ_k⊗σ_k, which yields TTᵀ without the B term.
    Complement,
}

impl ProjectionConvention {
    pub fn operator(self) -> ComplexMatrix {
        match self {
            ProjectionConvention::Singlet => pi_operator(),
            ProjectionConvention::Complement => &ComplexMatrix::identity(4) + &pi_operator(),
        }
    }
}

/// Tr[(ρ⊗ρ) X₁ ⊗ Y₂₄ ⊗ Z₃] by direct summation over the 16-dimensional
/// index space, copy 1 on photons (1,2) and copy 2 on photons (3,4).
pub fn two_copy_expectation(rho: &DensityMatrix2Q, x1: &ComplexMatrix, y24: &ComplexMatrix, z3: &ComplexMatrix) -> f64 {
    let m = rho.matrix();
    let mut acc = c(0.0, 0.0);
    for a1 in 0..2 {
        for a2 in 0..2 {
            for a3 in 0..2 {
                for a4 in 0..2 {
                    for b1 in 0..2 {
                        let x = x1[(b1, a1)];
                        if x == c(0.0, 0.0) {
                            continue;
                        }
                        for b3 in 0..2 {
                            let z = z3[(b3, a3)];
                            if z == c(0.0, 0.0) {
                                continue;
                            }
                            for b2 in 0..2 {
                                for b4 in 0..2 {
                                    let y = y24[(2 * b2 + b4, 2 * a2 + a4)];
                                    acc += m[(2 * a1 + a2, 2 * b1 + b2)] * m[(2 * a3 + a4, 2 * b3 + b4)] * x * y * z;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    acc.re
}

fn check_index(i: usize) -> Result<(), CollectiveError> {
    if (1..=3).contains(&i) {
        Ok(())
    } else {
        Err(CollectiveError::BadIndex(i))
    }
}

/// A_ij = Tr[(ρ⊗ρ) σ_i ⊗ Π ⊗ σ_j] with the requested photon-2/4 operator.
pub fn collective_a_with(rho: &DensityMatrix2Q, i: usize, j: usize, convention: ProjectionConvention) -> Result<f64, CollectiveError> {
    check_index(i)?;
    check_index(j)?;
    let pauli = PauliBasis::new();
    Ok(two_copy_expectation(rho, pauli.sigma(i), &convention.operator(), pauli.sigma(j)))
}

pub fn collective_a(rho: &DensityMatrix2Q, i: usize, j: usize) -> Result<f64, CollectiveError> {
    collective_a_with(rho, i, j, ProjectionConvention::Singlet)
}

/// B_ij = Tr[(ρ⊗ρ) σ_i ⊗ I₄ ⊗ σ_j] = u_i u_j.
pub fn collective_b(rho: &DensityMatrix2Q, i: usize, j: usize) -> Result<f64, CollectiveError> {
    check_index(i)?;
    check_index(j)?;
    let pauli = PauliBasis::new();
    Ok(two_copy_expectation(rho, pauli.sigma(i), &ComplexMatrix::identity(4), pauli.sigma(j)))
}

fn sym_from_entries(f: impl Fn(usize, usize) -> Result<f64, CollectiveError>) -> Result<SymMatrix3, CollectiveError> {
    let mut m = crate::matcore::Mat3::ZERO;
    for i in 0..3 {
        for j in 0..3 {
            m.0[i][j] = f(i + 1, j + 1)?;
        }
    }
    Ok(SymMatrix3::from_mat3_symmetrized(&m))
}

/// R_ij = A_ij + B_ij, which equals TTᵀ.
pub fn r_from_collective(rho: &DensityMatrix2Q) -> CorrMatrixR {
    let m = sym_from_entries(|i, j| Ok(collective_a(rho, i, j)? + collective_b(rho, i, j)?)).expect("indices in range");
    CorrMatrixR::new(m)
}

/// R estimated under a convention, without the B term.
///
/// With `Singlet` this is the balanced-state approximation A ≈ TTᵀ, off by
/// −uuᵀ for states with local polarization.
pub fn r_from_a_only(rho: &DensityMatrix2Q, convention: ProjectionConvention) -> CorrMatrixR {
    let m = sym_from_entries(|i, j| collective_a_with(rho, i, j, convention)).expect("indices in range");
    CorrMatrixR::new(m)
}

/// Parameters of the two-copy state that the coincidence model depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Bloch vector of photons 1 and 3.
    pub u: [f64; 3],
    /// T v.
    pub w: [f64; 3],
    /// |v|².
    pub kappa: f64,
    /// TTᵀ.
    pub r: SymMatrix3,
}

impl ModelParams {
    pub fn from_state(rho: &DensityMatrix2Q) -> Self {
        let d = bloch_decompose(rho);
        Self {
            u: d.u,
            w: d.t.mul_vec(&d.v),
            kappa: d.v.iter().map(|x| x * x).sum(),
            r: SymMatrix3::from_mat3_symmetrized(&d.t.mul(&d.t.transpose())),
        }
    }

    /// Unpolarized copies characterized by R alone.
    pub fn from_r(r: &CorrMatrixR) -> Self {
        Self {
            u: [0.0; 3],
            w: [0.0; 3],
            kappa: 0.0,
            r: *r.matrix(),
        }
    }

    /// Coincidence probability per two-copy trial.
    pub fn probability(&self, setting: ProjectionSetting, regime: Regime, model: &InterferenceModel) -> f64 {
        let basis = ProbabilityBasis::new(setting);
        basis.probability(self, regime, model.non_interfering_fraction())
    }
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Setting-dependent pieces of the closed-form coincidence probability.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ProbabilityBasis {
    pub(crate) sa: [f64; 3],
    pub(crate) sb: [f64; 3],
}

impl ProbabilityBasis {
    pub(crate) fn new(setting: ProjectionSetting) -> Self {
        Self {
            sa: setting.alice.bloch(),
            sb: setting.bob.bloch(),
        }
    }

    /// Distinguishable photons: ½ Tr[ρ_A|a⟩⟨a|] Tr[ρ_A|b⟩⟨b|].
    pub(crate) fn detuned(&self, p: &ModelParams) -> f64 {
        0.125 * (1.0 + dot3(&self.sa, &p.u)) * (1.0 + dot3(&self.sb, &p.u))
    }

    /// Ideal interference: Tr[(ρ⊗ρ)|a⟩⟨a| ⊗ P⁻ ⊗ |b⟩⟨b|].
    pub(crate) fn singlet(&self, p: &ModelParams) -> f64 {
        let rs = [
            p.r.get(0, 0) * self.sb[0] + p.r.get(0, 1) * self.sb[1] + p.r.get(0, 2) * self.sb[2],
            p.r.get(1, 0) * self.sb[0] + p.r.get(1, 1) * self.sb[1] + p.r.get(1, 2) * self.sb[2],
            p.r.get(2, 0) * self.sb[0] + p.r.get(2, 1) * self.sb[1] + p.r.get(2, 2) * self.sb[2],
        ];
        (1.0 / 16.0)
            * ((1.0 + dot3(&self.sa, &p.u)) * (1.0 + dot3(&self.sb, &p.u))
                - p.kappa
                - dot3(&self.sa, &p.w)
                - dot3(&self.sb, &p.w)
                - dot3(&self.sa, &rs))
    }

    pub(crate) fn probability(&self, p: &ModelParams, regime: Regime, f: f64) -> f64 {
        let d = self.detuned(p);
        if regime.interferes() {
            f * d + (1.0 - f) * self.singlet(p)
        } else {
            d
        }
    }
}

fn check_events(mean_events: f64) -> Result<(), CollectiveError> {
    if mean_events > 0.0 && mean_events.is_finite() {
        Ok(())
    } else {
        Err(CollectiveError::BadParam {
            name: "mean_events",
            value: mean_events,
        })
    }
}

fn poisson_draw(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

/// Expected counts for each (setting, regime): probability × mean_events,
/// exposure 1, in regime-major order.
pub fn expected_counts(
    params: &ModelParams,
    model: &InterferenceModel,
    mean_events: f64,
    regimes: &[Regime],
) -> Result<Vec<(ProjectionSetting, Regime, f64)>, CollectiveError> {
    check_events(mean_events)?;
    let mut out = Vec::with_capacity(36 * regimes.len());
    for &regime in regimes {
        for setting in ProjectionSetting::all() {
            let prob = params.probability(setting, regime, model);
            // rounding slack only; a genuinely negative value means bad input
            if !(-1e-12..=1.0 + 1e-12).contains(&prob) || !prob.is_finite() {
                return Err(CollectiveError::BadProbability {
                    setting,
                    regime,
                    value: prob,
                });
            }
            out.push((setting, regime, prob.clamp(0.0, 1.0) * mean_events));
        }
    }
    Ok(out)
}

/// Poisson counts for every setting in the given regimes. Each record has
/// its own substream keyed by (seed, setting index, regime), so the result
/// does not depend on thread scheduling.
pub fn simulate_params(
    params: &ModelParams,
    model: &InterferenceModel,
    mean_events: f64,
    seed: u64,
    regimes: &[Regime],
) -> Result<Vec<CountRecord>, CollectiveError> {
    let expected = expected_counts(params, model, mean_events, regimes)?;
    Ok(expected
        .par_iter()
        .map(|&(setting, regime, mean)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(3 * setting.index() as u64 + regime.stream());
            CountRecord {
                setting,
                regime,
                counts: poisson_draw(mean, &mut rng),
                exposure: 1.0,
            }
        })
        .collect())
}

/// Tuned and detuned counts for all 36 settings. `mean_events` is the number
/// of two-copy trials per setting; the Poisson mean of a record is its
/// coincidence probability times exposure times `mean_events`.
pub fn simulate_counts(
    rho: &DensityMatrix2Q,
    model: &InterferenceModel,
    mean_events: f64,
    seed: u64,
) -> Result<Vec<CountRecord>, CollectiveError> {
    simulate_params(&ModelParams::from_state(rho), model, mean_events, seed, &[Regime::Tuned, Regime::Detuned])
}

/// Wide-window counts from white-noise copies, plus the detuned reference
/// that fixes the overall rate.
pub fn white_noise_counts(model: &InterferenceModel, mean_events: f64, seed: u64) -> Result<Vec<CountRecord>, CollectiveError> {
    let params = ModelParams::from_state(&DensityMatrix2Q::maximally_mixed());
    simulate_params(&params, model, mean_events, seed, &[Regime::Wide, Regime::Detuned])
}

/// R_W(p) = p² r_bell + (1 − p²) r_noise.
pub fn interpolate_r(r_bell: &CorrMatrixR, r_noise: &CorrMatrixR, p: f64) -> Result<CorrMatrixR, CollectiveError> {
    let p = check_unit("p", p)?;
    let w = p * p;
    Ok(CorrMatrixR::new(r_bell.matrix().scale(w).add(&r_noise.matrix().scale(1.0 - w))))
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    alice: String,
    bob: String,
    regime: String,
    counts: u64,
    exposure: f64,
}

/// Writes records as CSV with header `alice,bob,regime,counts,exposure`.
pub fn write_counts_csv<W: Write>(out: W, records: &[CountRecord]) -> Result<(), CollectiveError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            alice: r.setting.alice.to_string(),
            bob: r.setting.bob.to_string(),
            regime: r.regime.to_string(),
            counts: r.counts,
            exposure: r.exposure,
        })
        .map_err(|e| CollectiveError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| CollectiveError::Csv(e.to_string()))
}

pub fn read_counts_csv<R: Read>(input: R) -> Result<Vec<CountRecord>, CollectiveError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| CollectiveError::Csv(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["alice", "bob", "regime", "counts", "exposure"] {
        return Err(CollectiveError::Csv(format!("unexpected header {headers:?}")));
    }
    rdr.deserialize::<CsvRow>()
        .map(|row| {
            let row = row.map_err(|e| CollectiveError::Csv(e.to_string()))?;
            let setting = ProjectionSetting::new(row.alice.parse()?, row.bob.parse()?);
            CountRecord::new(setting, row.regime.parse()?, row.counts, row.exposure)
        })
        .collect()
}
