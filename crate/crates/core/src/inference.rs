//! Maximum-likelihood reconstruction of R from coincidence counts and
//! Monte Carlo error bars for derived measures.
//!
//! The likelihood is Poisson over every record, with mean
//! `η · exposure · P(setting, regime)` and `P` the closed-form coincidence
//! probability of the collective module. Besides R the model carries the
//! nuisance parameters η (overall rate), u (Bloch vector of photons 1 and 3),
//! w = T v and κ = |v|².
//!
//! R is searched through one of two factorizations, both of which keep R
//! positive semidefinite. Each run first climbs the unconstrained likelihood
//! by damped Newton steps in factor space. If that optimum has an eigenvalue
//! above 1, the factor is pulled back inside and the likelihood plus a
//! vanishing log-barrier μ log det(I − R) is maximized along a decreasing
//! sequence of μ. Nelder–Mead takes over whenever a Newton step cannot make
//! progress.

use crate::collective::{CollectiveError, CountRecord, InterferenceModel, ModelParams, ProbabilityBasis, Regime};
use crate::matcore::{Mat3, SymMatrix3};
use crate::measures::CorrMatrixR;
use crate::states::DensityMatrix2Q;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("missing records: {0}")]
    MissingRecords(String),
    #[error("data do not determine R: {0}")]
    Unidentifiable(String),
    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },
    #[error("only {succeeded} of the required {required} resamples succeeded")]
    TooFewResamples { succeeded: usize, required: usize },
    #[error("count ratio {ratio:.6} implies fraction {estimate:.4}, outside [0, 1] by more than {tolerance:.2e}")]
    RatioOutOfRange { ratio: f64, estimate: f64, tolerance: f64 },
    #[error(transparent)]
    Collective(#[from] CollectiveError),
}

/// Factorization of R used by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Parametrization {
    /// R = LLᵀ with L lower triangular.
    #[default]
    #[serde(rename = "cholesky_R")]
    CholeskyR,
    /// R = TᵀT with T an unconstrained 3×3 matrix.
    #[serde(rename = "direct_T")]
    DirectT,
}

impl Parametrization {
    fn factor_len(self) -> usize {
        match self {
            Parametrization::CholeskyR => 6,
            Parametrization::DirectT => 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleConfig {
    pub max_iterations: usize,
    /// Stop once one iteration improves the log-likelihood by less than this.
    pub convergence_tol: f64,
    pub parametrization: Parametrization,
    pub non_interfering_fraction: f64,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            convergence_tol: 1e-10,
            parametrization: Parametrization::CholeskyR,
            non_interfering_fraction: InterferenceModel::default().non_interfering_fraction(),
        }
    }
}

impl MleConfig {
    pub fn with_parametrization(self, parametrization: Parametrization) -> Self {
        Self { parametrization, ..self }
    }

    fn validate(&self) -> Result<(), InferenceError> {
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(InferenceError::BadConfig(format!("convergence_tol = {}", self.convergence_tol)));
        }
        if self.max_iterations == 0 {
            return Err(InferenceError::BadConfig("max_iterations = 0".into()));
        }
        let f = self.non_interfering_fraction;
        if !(0.0..1.0).contains(&f) {
            return Err(InferenceError::BadConfig(format!(
                "non_interfering_fraction = {f}; R is unobservable unless it is below 1"
            )));
        }
        Ok(())
    }
}

/// Result of a reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub r: CorrMatrixR,
    /// Σ (n ln μ − μ) over records, without the ln n! constant.
    pub log_likelihood: f64,
    pub iterations: usize,
    /// True when the unconstrained optimum had an eigenvalue above 1.
    pub physicality_clamp_applied: bool,
    pub parametrization: Parametrization,
    /// Fitted expected counts per unit exposure and unit probability.
    pub rate: f64,
    pub u: [f64; 3],
    pub w: [f64; 3],
    pub kappa: f64,
}

struct Obs {
    basis: ProbabilityBasis,
    interferes: bool,
    exposure: f64,
    n: f64,
}

struct Problem {
    obs: Vec<Obs>,
    f: f64,
    param: Parametrization,
    /// Σ (n ln n − n), added back when reporting the log-likelihood.
    saturated: f64,
}

const NUISANCE: usize = 8;

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn quad(a: &[f64; 3], m: &Mat3, b: &[f64; 3]) -> f64 {
    dot3(a, &m.mul_vec(b))
}

/// Lower-triangular L with LLᵀ = R for positive semidefinite R; a vanishing
/// pivot zeroes its column.
fn cholesky_psd(r: &SymMatrix3) -> Mat3 {
    let mut l = Mat3::ZERO;
    for j in 0..3 {
        let d = r.get(j, j) - (0..j).map(|k| l.0[j][k] * l.0[j][k]).sum::<f64>();
        if d <= 1e-300 {
            continue;
        }
        let ljj = d.sqrt();
        l.0[j][j] = ljj;
        for i in j + 1..3 {
            l.0[i][j] = (r.get(i, j) - (0..j).map(|k| l.0[i][k] * l.0[j][k]).sum::<f64>()) / ljj;
        }
    }
    l
}

const CHOL_IDX: [(usize, usize); 6] = [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)];

impl Parametrization {
    fn factor(self, theta: &[f64]) -> Mat3 {
        match self {
            Parametrization::CholeskyR => {
                let mut l = Mat3::ZERO;
                for (k, &(i, j)) in CHOL_IDX.iter().enumerate() {
                    l.0[i][j] = theta[k];
                }
                l
            }
            Parametrization::DirectT => Mat3::from_fn(|i, j| theta[3 * i + j]),
        }
    }

    fn r_of(self, theta: &[f64]) -> Mat3 {
        let x = self.factor(theta);
        match self {
            Parametrization::CholeskyR => x.mul(&x.transpose()),
            Parametrization::DirectT => x.transpose().mul(&x),
        }
    }

    /// ∂R/∂θ_k for each factor parameter.
    fn r_derivatives(self, theta: &[f64]) -> Vec<Mat3> {
        let x = self.factor(theta);
        let unit = |i: usize, j: usize| Mat3::from_fn(|a, b| if a == i && b == j { 1.0 } else { 0.0 });
        match self {
            Parametrization::CholeskyR => CHOL_IDX
                .iter()
                .map(|&(i, j)| {
                    let e = unit(i, j);
                    e.mul(&x.transpose()).add(&x.mul(&e.transpose()))
                })
                .collect(),
            Parametrization::DirectT => (0..9)
                .map(|k| {
                    let e = unit(k / 3, k % 3);
                    e.transpose().mul(&x).add(&x.transpose().mul(&e))
                })
                .collect(),
        }
    }

    fn encode(self, r: &SymMatrix3) -> Vec<f64> {
        match self {
            Parametrization::CholeskyR => {
                let l = cholesky_psd(r);
                CHOL_IDX.iter().map(|&(i, j)| l.0[i][j]).collect()
            }
            Parametrization::DirectT => {
                let root = r.eigen().apply(|x| x.max(0.0).sqrt()).to_mat3();
                root.0.iter().flatten().copied().collect()
            }
        }
    }

    /// Shrinks eigenvalues of R above `1 − margin` to that value; positivity
    /// is built into both factorizations.
    fn project_inside(self, theta: &mut [f64], margin: f64) {
        let top = 1.0 - margin;
        let r = SymMatrix3::from_mat3_symmetrized(&self.r_of(theta));
        let eig = r.eigen();
        if eig.values[2] <= top {
            return;
        }
        match self {
            Parametrization::CholeskyR => {
                let clamped = eig.apply(|x| x.clamp(0.0, top));
                let enc = self.encode(&clamped);
                theta[..6].copy_from_slice(&enc);
            }
            Parametrization::DirectT => {
                // shrink singular values: T ← T V diag(min(1, √(top/λ))) Vᵀ
                let shrink = eig.apply(|x| if x > top { (top / x).sqrt() } else { 1.0 }).to_mat3();
                let t = self.factor(theta).mul(&shrink);
                theta[..9].copy_from_slice(&t.0.iter().flatten().copied().collect::<Vec<_>>());
            }
        }
    }
}

impl Problem {
    fn new(records: &[CountRecord], config: &MleConfig) -> Result<Self, InferenceError> {
        check_coverage(records)?;
        let obs: Vec<Obs> = records
            .iter()
            .map(|r| Obs {
                basis: ProbabilityBasis::new(r.setting),
                interferes: r.regime.interferes(),
                exposure: r.exposure,
                n: r.counts as f64,
            })
            .collect();
        let saturated = obs.iter().filter(|o| o.n > 0.0).map(|o| o.n * o.n.ln() - o.n).sum();
        Ok(Self {
            obs,
            f: config.non_interfering_fraction,
            param: config.parametrization,
            saturated,
        })
    }

    fn dim(&self) -> usize {
        self.param.factor_len() + NUISANCE
    }

    fn split<'t>(&self, theta: &'t [f64]) -> (&'t [f64], f64, [f64; 3], [f64; 3], f64) {
        let k = self.param.factor_len();
        let n = &theta[k..];
        (&theta[..k], n[0].exp(), [n[1], n[2], n[3]], [n[4], n[5], n[6]], n[7])
    }

    /// Log-likelihood relative to the saturated model, and optionally its
    /// gradient. `None` where some mean is negative, or zero with counts.
    fn eval(&self, theta: &[f64], want_grad: bool) -> Option<(f64, Vec<f64>)> {
        let (factor, eta, u, w, kappa) = self.split(theta);
        let k = self.param.factor_len();
        let r = self.param.r_of(factor);
        let dr = if want_grad { self.param.r_derivatives(factor) } else { Vec::new() };
        let mut ll = 0.0;
        let mut grad = vec![0.0; if want_grad { self.dim() } else { 0 }];
        for o in &self.obs {
            let (sa, sb) = (&o.basis.sa, &o.basis.sb);
            let (a, b) = (dot3(sa, &u), dot3(sb, &u));
            let d = 0.125 * (1.0 + a) * (1.0 + b);
            let p = if o.interferes {
                let q = ((1.0 + a) * (1.0 + b) - kappa - dot3(sa, &w) - dot3(sb, &w) - quad(sa, &r, sb)) / 16.0;
                self.f * d + (1.0 - self.f) * q
            } else {
                d
            };
            let scale = eta * o.exposure;
            let mu = scale * p;
            if !(mu.is_finite()) || mu < 0.0 || (mu == 0.0 && o.n > 0.0) {
                return None;
            }
            ll += if o.n > 0.0 { o.n * (mu / o.n).ln() - (mu - o.n) } else { -mu };
            if !want_grad {
                continue;
            }
            let c = if mu > 0.0 { o.n / mu - 1.0 } else { -1.0 };
            let q_w = if o.interferes { (1.0 - self.f) / 16.0 } else { 0.0 };
            for (kk, dri) in dr.iter().enumerate() {
                grad[kk] += c * scale * (-q_w) * quad(sa, dri, sb);
            }
            grad[k] += c * mu;
            let du = if o.interferes { self.f / 8.0 + (1.0 - self.f) / 16.0 } else { 0.125 };
            for i in 0..3 {
                grad[k + 1 + i] += c * scale * du * ((1.0 + b) * sa[i] + (1.0 + a) * sb[i]);
                grad[k + 4 + i] += c * scale * (-q_w) * (sa[i] + sb[i]);
            }
            grad[k + 7] += c * scale * (-q_w);
        }
        Some((ll, grad))
    }

    fn value(&self, theta: &[f64]) -> f64 {
        self.eval(theta, false).map_or(f64::NEG_INFINITY, |(l, _)| l)
    }

    /// Hessian by central differences of the analytic gradient.
    fn hessian(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        let mut x = theta.to_vec();
        for i in 0..n {
            let step = 1e-6 * theta[i].abs().max(1.0);
            x[i] = theta[i] + step;
            let gp = self.eval(&x, true)?.1;
            x[i] = theta[i] - step;
            let gm = self.eval(&x, true)?.1;
            x[i] = theta[i];
            for j in 0..n {
                h[(i, j)] = (gp[j] - gm[j]) / (2.0 * step);
            }
        }
        Some((&h + h.transpose()) * 0.5)
    }

    fn initial(&self) -> Result<Vec<f64>, InferenceError> {
        let det: Vec<&Obs> = self.obs.iter().filter(|o| !o.interferes).collect();
        let det_rate: f64 = det.iter().map(|o| o.n / o.exposure).sum();
        if det_rate <= 0.0 {
            return Err(InferenceError::Unidentifiable("detuned records have no counts".into()));
        }
        let eta = det_rate / (0.125 * det.len() as f64);

        // linear inversion with unpolarized copies: z = εa εb R_ij
        let mut acc = [[0.0f64; 3]; 3];
        let mut weight = [[0.0f64; 3]; 3];
        for o in self.obs.iter().filter(|o| o.interferes) {
            let rate = o.n / (o.exposure * eta);
            let z = 1.0 - 16.0 * (rate - self.f / 8.0) / (1.0 - self.f);
            let i = o.basis.sa.iter().position(|x| *x != 0.0).unwrap();
            let j = o.basis.sb.iter().position(|x| *x != 0.0).unwrap();
            acc[i][j] += o.basis.sa[i] * o.basis.sb[j] * z;
            weight[i][j] += 1.0;
        }
        let r0 = Mat3::from_fn(|i, j| acc[i][j] / weight[i][j]);
        let r0 = SymMatrix3::from_mat3_symmetrized(&r0).eigen().apply(|x| x.clamp(0.02, 0.98));
        let mut theta = self.param.encode(&r0);
        theta.push(eta.ln());
        theta.extend_from_slice(&[0.0; 7]);
        Ok(theta)
    }

    fn report_ll(&self, rel: f64) -> f64 {
        rel + self.saturated
    }
}

fn check_coverage(records: &[CountRecord]) -> Result<(), InferenceError> {
    let mut interf = BTreeSet::new();
    let mut det = BTreeSet::new();
    for r in records {
        if r.regime.interferes() {
            interf.insert(r.setting);
        } else {
            det.insert(r.setting);
        }
    }
    let all = crate::collective::ProjectionSetting::all();
    let missing_i: Vec<String> = all.iter().filter(|s| !interf.contains(s)).map(|s| s.to_string()).collect();
    let missing_d: Vec<String> = all.iter().filter(|s| !det.contains(s)).map(|s| s.to_string()).collect();
    if !missing_i.is_empty() || !missing_d.is_empty() {
        return Err(InferenceError::MissingRecords(format!(
            "interfering: [{}]; detuned: [{}]",
            missing_i.join(" "),
            missing_d.join(" ")
        )));
    }
    Ok(())
}

fn solve_damped(a: &DMatrix<f64>, rhs: &DVector<f64>, lambda: &mut f64) -> DVector<f64> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(1e-300, f64::max);
    let mut lam = lambda.max(1e-10 * scale);
    loop {
        let m = a + DMatrix::identity(n, n) * lam;
        if let Some(ch) = m.cholesky() {
            *lambda = lam;
            return ch.solve(rhs);
        }
        lam = (lam * 10.0).max(1e-8 * scale);
    }
}

/// Nelder–Mead on the projected objective; returns the best point found.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], max_evals: usize) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), f(start)));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += 1e-3 * start[i].abs().max(1.0);
        let v = f(&x);
        simplex.push((x, v));
    }
    let mut evals = n + 1;
    while evals < max_evals {
        // maximizing: best first
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let worst = simplex[n].clone();
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (worst.0[j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr > simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
        } else if fr > simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = along(0.5);
            let fc = f(&xc);
            evals += 1;
            if fc > worst.1 {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..n).map(|j| best[j] + 0.5 * (p.0[j] - best[j])).collect();
                    p.1 = f(&x);
                    p.0 = x;
                }
                evals += n;
            }
        }
        let spread = simplex.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
            - simplex.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        if spread.is_finite() && spread < 1e-13 {
            break;
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    simplex.swap_remove(0)
}

/// Barrier term μ log det(I − R) and its factor-space derivatives, or
/// `None` when an eigenvalue of R reaches 1.
struct Barrier {
    value: f64,
    grad: Vec<f64>,
    hess: DMatrix<f64>,
}

impl Parametrization {
    fn r_second(self, k: usize, l: usize) -> Mat3 {
        let unit = |idx: usize| match self {
            Parametrization::CholeskyR => {
                let (i, j) = CHOL_IDX[idx];
                Mat3::from_fn(|a, b| if a == i && b == j { 1.0 } else { 0.0 })
            }
            Parametrization::DirectT => Mat3::from_fn(|a, b| if a == idx / 3 && b == idx % 3 { 1.0 } else { 0.0 }),
        };
        let (ek, el) = (unit(k), unit(l));
        match self {
            Parametrization::CholeskyR => ek.mul(&el.transpose()).add(&el.mul(&ek.transpose())),
            Parametrization::DirectT => ek.transpose().mul(&el).add(&el.transpose().mul(&ek)),
        }
    }

    fn barrier(self, theta: &[f64], mu: f64, with_derivatives: bool) -> Option<Barrier> {
        let k = self.factor_len();
        let r = SymMatrix3::from_mat3_symmetrized(&self.r_of(&theta[..k]));
        let eig = r.eigen();
        if eig.values[2] >= 1.0 {
            return None;
        }
        let value = mu * eig.values.iter().map(|x| (1.0 - x).ln()).sum::<f64>();
        let n = k + NUISANCE;
        let mut grad = vec![0.0; n];
        let mut hess = DMatrix::zeros(n, n);
        if with_derivatives {
            let m = eig.apply(|x| 1.0 / (1.0 - x)).to_mat3();
            let dr = self.r_derivatives(&theta[..k]);
            let mdr: Vec<Mat3> = dr.iter().map(|d| m.mul(d)).collect();
            for a in 0..k {
                grad[a] = -mu * mdr[a].trace();
                for b in 0..=a {
                    let h = -mu * (mdr[b].mul(&mdr[a]).trace() + m.mul(&self.r_second(a, b)).trace());
                    hess[(a, b)] = h;
                    hess[(b, a)] = h;
                }
            }
        }
        Some(Barrier { value, grad, hess })
    }
}

enum Step {
    Improved(f64),
    Stalled,
}

struct Optimizer<'p> {
    problem: &'p Problem,
    theta: Vec<f64>,
    /// Barrier weight; 0 for the unconstrained phase.
    mu: f64,
    phi: f64,
    lambda: f64,
    iterations: usize,
    last_grad_norm: f64,
}

impl<'p> Optimizer<'p> {
    /// Log-likelihood plus barrier.
    fn objective(&self, theta: &[f64]) -> f64 {
        let ll = self.problem.value(theta);
        if self.mu == 0.0 {
            return ll;
        }
        match self.problem.param.barrier(theta, self.mu, false) {
            Some(b) => ll + b.value,
            None => f64::NEG_INFINITY,
        }
    }

    fn derivatives(&self) -> Option<(f64, Vec<f64>, DMatrix<f64>)> {
        let (ll, mut g) = self.problem.eval(&self.theta, true)?;
        let mut h = self.problem.hessian(&self.theta)?;
        let mut phi = ll;
        if self.mu > 0.0 {
            let b = self.problem.param.barrier(&self.theta, self.mu, true)?;
            phi += b.value;
            g.iter_mut().zip(&b.grad).for_each(|(x, y)| *x += y);
            h += b.hess;
        }
        Some((phi, g, h))
    }

    fn newton_step(&mut self) -> Step {
        let Some((phi, g, h)) = self.derivatives() else {
            return Step::Stalled;
        };
        self.phi = phi;
        self.last_grad_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let gv = DVector::from_vec(g);
        self.lambda *= 0.1;
        let d = solve_damped(&(-h), &gv, &mut self.lambda);
        let slope = gv.dot(&d);
        let mut t = 1.0;
        for _ in 0..50 {
            let cand: Vec<f64> = self.theta.iter().zip(d.iter()).map(|(x, dx)| x + t * dx).collect();
            let v = self.objective(&cand);
            if v >= phi + 1e-4 * t * slope && v >= phi {
                self.theta = cand;
                self.phi = v;
                return Step::Improved(v - phi);
            }
            t *= 0.5;
        }
        Step::Stalled
    }

    fn simplex_rescue(&mut self) -> bool {
        let (best, v) = nelder_mead(|x| self.objective(x), &self.theta, 400 * self.theta.len());
        if v > self.phi + 1e-12 {
            self.theta = best;
            self.phi = v;
            true
        } else {
            false
        }
    }

    fn run(&mut self, tol: f64, max_iterations: usize) -> Result<(), InferenceError> {
        self.phi = self.objective(&self.theta);
        let mut rescued = false;
        loop {
            if self.iterations >= max_iterations {
                return Err(InferenceError::NoConvergence {
                    iterations: self.iterations,
                    gradient_norm: self.last_grad_norm,
                });
            }
            self.iterations += 1;
            match self.newton_step() {
                Step::Improved(delta) if delta < tol => return Ok(()),
                Step::Improved(_) => rescued = false,
                Step::Stalled => {
                    if rescued || !self.simplex_rescue() {
                        return Ok(());
                    }
                    rescued = true;
                }
            }
        }
    }
}

fn max_eig(problem: &Problem, theta: &[f64]) -> f64 {
    let k = problem.param.factor_len();
    SymMatrix3::from_mat3_symmetrized(&problem.param.r_of(&theta[..k])).eigenvalues()[2]
}

/// Barrier weights of the constrained phase, from coarse to negligible.
const BARRIER_SCHEDULE: [f64; 8] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-6, 1e-8, 1e-10];

/// Maximum-likelihood R from tuned (or wide) and detuned records covering
/// all 36 settings.
pub fn mle_reconstruct(records: &[CountRecord], config: &MleConfig) -> Result<Reconstruction, InferenceError> {
    config.validate()?;
    let problem = Problem::new(records, config)?;
    let theta = problem.initial()?;
    let ll = problem.value(&theta);
    if !ll.is_finite() {
        return Err(InferenceError::Unidentifiable("starting point has zero likelihood".into()));
    }
    let mut opt = Optimizer {
        problem: &problem,
        theta,
        mu: 0.0,
        phi: ll,
        lambda: 0.0,
        iterations: 0,
        last_grad_norm: f64::NAN,
    };
    opt.run(config.convergence_tol, config.max_iterations)?;
    let clamp = max_eig(&problem, &opt.theta) > 1.0;
    if clamp {
        // restart strictly inside eig(R) < 1 and follow the barrier path
        problem.param.project_inside(&mut opt.theta, 1e-3);
        for mu in BARRIER_SCHEDULE {
            opt.mu = mu;
            opt.lambda = 0.0;
            opt.run(config.convergence_tol, config.max_iterations)?;
        }
    }

    let (factor, eta, u, w, kappa) = problem.split(&opt.theta);
    let r = SymMatrix3::from_mat3_symmetrized(&problem.param.r_of(factor));
    Ok(Reconstruction {
        r: CorrMatrixR::new(r),
        log_likelihood: problem.report_ll(problem.value(&opt.theta)),
        iterations: opt.iterations,
        physicality_clamp_applied: clamp,
        parametrization: config.parametrization,
        rate: eta,
        u,
        w,
        kappa,
    })
}

/// Fraction of non-interfering pairs from calibration records of a known
/// reference state, by matching the total interfering-to-detuned count
/// ratio. Estimates outside [0, 1] by less than five standard deviations of
/// counting noise are clamped; larger excursions are an error.
pub fn estimate_interference_fraction(records: &[CountRecord], reference: &DensityMatrix2Q) -> Result<f64, InferenceError> {
    let params = ModelParams::from_state(reference);
    let (mut rate_i, mut rate_d, mut var_i, mut var_d) = (0.0, 0.0, 0.0, 0.0);
    let (mut d_i, mut q_i, mut d_d) = (0.0, 0.0, 0.0);
    for r in records {
        let basis = ProbabilityBasis::new(r.setting);
        let n = r.counts as f64;
        if r.regime.interferes() {
            rate_i += n / r.exposure;
            var_i += n / (r.exposure * r.exposure);
            d_i += basis.detuned(&params);
            q_i += basis.singlet(&params);
        } else {
            rate_d += n / r.exposure;
            var_d += n / (r.exposure * r.exposure);
            d_d += basis.detuned(&params);
        }
    }
    if rate_i <= 0.0 || rate_d <= 0.0 {
        return Err(InferenceError::MissingRecords("calibration needs interfering and detuned counts".into()));
    }
    if (d_i - q_i).abs() < 1e-12 {
        return Err(InferenceError::Unidentifiable("reference state shows no interference contrast".into()));
    }
    let ratio = rate_i / rate_d;
    let estimate = (ratio * d_d - q_i) / (d_i - q_i);
    let rel = (var_i / (rate_i * rate_i) + var_d / (rate_d * rate_d)).sqrt();
    let tolerance = 5.0 * ratio * rel * d_d / (d_i - q_i).abs() + 1e-9;
    if estimate < -tolerance || estimate > 1.0 + tolerance {
        return Err(InferenceError::RatioOutOfRange {
            ratio,
            estimate,
            tolerance,
        });
    }
    Ok(estimate.clamp(0.0, 1.0))
}

/// Point value with asymmetric percentile bars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBar {
    pub value: f64,
    pub plus: f64,
    pub minus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMode {
    /// Poisson draws about each observed count.
    #[default]
    Poisson,
    /// Normal draws with variance equal to the observed count.
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub n_samples: usize,
    pub lower_percentile: f64,
    pub upper_percentile: f64,
    pub seed: u64,
    pub mode: ResampleMode,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            lower_percentile: 15.87,
            upper_percentile: 84.13,
            seed: 0,
            mode: ResampleMode::Poisson,
        }
    }
}

/// Minimum number of successful resamples for a valid error bar.
pub const MIN_RESAMPLES: usize = 100;

impl MonteCarloConfig {
    fn validate(&self) -> Result<(), InferenceError> {
        let (lo, hi) = (self.lower_percentile, self.upper_percentile);
        if !(0.0 < lo && lo < hi && hi < 100.0) {
            return Err(InferenceError::BadConfig(format!("percentiles {lo}, {hi}")));
        }
        if self.n_samples < MIN_RESAMPLES {
            return Err(InferenceError::BadConfig(format!(
                "n_samples = {} is below {MIN_RESAMPLES}",
                self.n_samples
            )));
        }
        Ok(())
    }
}

/// Linear-interpolation percentile of sorted data.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn resample(records: &[CountRecord], mode: ResampleMode, rng: &mut ChaCha8Rng) -> Vec<CountRecord> {
    records
        .iter()
        .map(|r| {
            let n = r.counts as f64;
            let counts = if r.counts == 0 {
                0
            } else {
                match mode {
                    ResampleMode::Poisson => Poisson::new(n).expect("positive mean").sample(rng) as u64,
                    ResampleMode::Normal => {
                        let x: f64 = Normal::new(n, n.sqrt()).expect("positive sd").sample(rng);
                        x.round().max(0.0) as u64
                    }
                }
            };
            CountRecord { counts, ..*r }
        })
        .collect()
}

/// Error bars for every value returned by `extractor`. The point values come
/// from the observed counts; each resample redraws all counts on its own
/// substream (seed, sample index) and reruns the extractor. Failed resamples
/// are dropped.
pub fn monte_carlo_errors<F>(records: &[CountRecord], config: &MonteCarloConfig, extractor: F) -> Result<Vec<ErrorBar>, InferenceError>
where
    F: Fn(&[CountRecord]) -> Result<Vec<f64>, InferenceError> + Sync,
{
    config.validate()?;
    let point = extractor(records)?;
    let samples: Vec<Vec<f64>> = (0..config.n_samples)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64);
            let drawn = resample(records, config.mode, &mut rng);
            extractor(&drawn).ok().filter(|v| v.len() == point.len())
        })
        .collect();
    if samples.len() < MIN_RESAMPLES {
        return Err(InferenceError::TooFewResamples {
            succeeded: samples.len(),
            required: MIN_RESAMPLES,
        });
    }
    Ok(point
        .iter()
        .enumerate()
        .map(|(m, &value)| {
            let mut column: Vec<f64> = samples.iter().map(|s| s[m]).collect();
            column.sort_by(f64::total_cmp);
            let lo = percentile(&column, config.lower_percentile);
            let hi = percentile(&column, config.upper_percentile);
            ErrorBar {
                value,
                plus: (hi - value).max(0.0),
                minus: (value - lo).max(0.0),
            }
        })
        .collect())
}

/// Records whose counts equal their expected values, rounded; for
/// noiseless tests of the estimator.
pub fn expected_records(
    params: &ModelParams,
    model: &InterferenceModel,
    mean_events: f64,
    regimes: &[Regime],
) -> Result<Vec<CountRecord>, InferenceError> {
    Ok(crate::collective::expected_counts(params, model, mean_events, regimes)?
        .into_iter()
        .map(|(setting, regime, mean)| CountRecord {
            setting,
            regime,
            counts: mean.round() as u64,
            exposure: 1.0,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collective::{simulate_counts, simulate_params, white_noise_counts};
    use crate::states::{random_density, singlet, werner};

    fn config(p: Parametrization) -> MleConfig {
        MleConfig::default().with_parametrization(p)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let model = InterferenceModel::default();
        let recs = simulate_counts(&random_density(4, 4).unwrap(), &model, 1e4, 1).unwrap();
        for p in [Parametrization::CholeskyR, Parametrization::DirectT] {
            let prob = Problem::new(&recs, &config(p)).unwrap();
            let mut theta = prob.initial().unwrap();
            let k = p.factor_len();
            theta[k + 1] = 0.05;
            theta[k + 4] = -0.03;
            theta[k + 7] = 0.1;
            let (_, g) = prob.eval(&theta, true).unwrap();
            for i in 0..theta.len() {
                let h = 1e-6;
                let mut a = theta.clone();
                a[i] += h;
                let mut b = theta.clone();
                b[i] -= h;
                let fd = (prob.value(&a) - prob.value(&b)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-4 * g[i].abs().max(1.0), "{p:?} {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn noiseless_counts_give_exact_r() {
        let model = InterferenceModel::default();
        let rho = random_density(11, 4).unwrap();
        let params = ModelParams::from_state(&rho);
        let recs = expected_records(&params, &model, 1e12, &[Regime::Tuned, Regime::Detuned]).unwrap();
        let truth = params.r;
        for p in [Parametrization::CholeskyR, Parametrization::DirectT] {
            let rec = mle_reconstruct(&recs, &config(p)).unwrap();
            let diff = rec.r.matrix().add(&truth.scale(-1.0)).max_abs();
            assert!(diff < 1e-6, "{p:?}: {diff}");
        }
    }

    #[test]
    fn werner_reconstruction_within_tolerance() {
        let model = InterferenceModel::default();
        let recs = simulate_counts(&werner(0.8).unwrap(), &model, 1e5, 3).unwrap();
        let rec = mle_reconstruct(&recs, &MleConfig::default()).unwrap();
        let target = SymMatrix3::new(0.64, 0.0, 0.0, 0.64, 0.0, 0.64);
        assert!(rec.r.matrix().add(&target.scale(-1.0)).max_abs() <= 0.02, "{:?}", rec.r);
        assert!(!rec.physicality_clamp_applied);
    }

    #[test]
    fn parametrizations_agree_on_clamped_singlet() {
        let model = InterferenceModel::default();
        let recs = simulate_counts(&singlet(), &model, 1e5, 8).unwrap();
        let a = mle_reconstruct(&recs, &config(Parametrization::CholeskyR)).unwrap();
        let b = mle_reconstruct(&recs, &config(Parametrization::DirectT)).unwrap();
        let diff = a.r.matrix().add(&b.r.matrix().scale(-1.0)).max_abs();
        assert!(diff < 1e-4, "{diff}: {:?} vs {:?}", a.r, b.r);
        for rec in [&a, &b] {
            let e = rec.r.raw_eigenvalues();
            assert!(e[0] >= -1e-12 && e[2] <= 1.0 + 1e-9, "{e:?}");
        }
    }

    #[test]
    fn white_noise_reconstruction_is_small() {
        let model = InterferenceModel::default();
        let recs = white_noise_counts(&model, 1e5, 2).unwrap();
        let a = mle_reconstruct(&recs, &config(Parametrization::CholeskyR)).unwrap();
        let b = mle_reconstruct(&recs, &config(Parametrization::DirectT)).unwrap();
        assert!(a.r.matrix().max_abs() <= 0.05);
        let diff = a.r.matrix().add(&b.r.matrix().scale(-1.0)).max_abs();
        assert!(diff < 1e-4, "{diff}");
    }

    #[test]
    fn missing_settings_are_reported() {
        let model = InterferenceModel::default();
        let mut recs = simulate_counts(&singlet(), &model, 1e3, 1).unwrap();
        recs.retain(|r| !(r.regime == Regime::Detuned && r.setting.index() == 5));
        assert!(matches!(
            mle_reconstruct(&recs, &MleConfig::default()),
            Err(InferenceError::MissingRecords(_))
        ));
    }

    #[test]
    fn config_validation() {
        let bad = MleConfig {
            convergence_tol: 0.0,
            ..MleConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = MleConfig {
            non_interfering_fraction: 1.0,
            ..MleConfig::default()
        };
        assert!(bad.validate().is_err());
        let mc = MonteCarloConfig {
            lower_percentile: 90.0,
            ..MonteCarloConfig::default()
        };
        assert!(mc.validate().is_err());
    }

    #[test]
    fn fraction_estimates() {
        for (f, seed) in [(0.567, 1), (0.0, 2), (1.0, 3)] {
            let model = InterferenceModel::new(f).unwrap();
            let recs = simulate_counts(&singlet(), &model, 1e5, seed).unwrap();
            let est = estimate_interference_fraction(&recs, &singlet()).unwrap();
            match f {
                0.0 => assert!(est < 0.01, "{est}"),
                1.0 => assert!(est > 0.99, "{est}"),
                _ => assert!((est - f).abs() < 0.01, "{est}"),
            }
        }
    }

    #[test]
    fn fraction_outside_range_is_an_error() {
        // calibrating against the wrong reference pushes the ratio far out
        let model = InterferenceModel::new(0.0).unwrap();
        let params = ModelParams::from_state(&singlet());
        let mut recs = simulate_params(&params, &model, 1e6, 4, &[Regime::Tuned, Regime::Detuned]).unwrap();
        for r in recs.iter_mut().filter(|r| r.regime == Regime::Tuned) {
            r.counts *= 4;
        }
        assert!(matches!(
            estimate_interference_fraction(&recs, &singlet()),
            Err(InferenceError::RatioOutOfRange { .. })
        ));
    }

    #[test]
    fn percentile_interpolates_linearly() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 50.0), 2.0);
        assert!((percentile(&v, 15.87) - 0.6348).abs() < 1e-12);
        assert_eq!(percentile(&[7.0], 84.13), 7.0);
    }

    #[test]
    fn monte_carlo_is_seeded_and_bars_nonnegative() {
        let recs = simulate_counts(&werner(0.9).unwrap(), &InterferenceModel::default(), 1e4, 5).unwrap();
        let cfg = MonteCarloConfig {
            n_samples: 120,
            seed: 17,
            ..MonteCarloConfig::default()
        };
        let extract = |r: &[CountRecord]| -> Result<Vec<f64>, InferenceError> {
            let rec = mle_reconstruct(r, &MleConfig::default())?;
            Ok(vec![rec.r.trace()])
        };
        let a = monte_carlo_errors(&recs, &cfg, extract).unwrap();
        let b = monte_carlo_errors(&recs, &cfg, extract).unwrap();
        assert_eq!(a, b);
        assert!(a[0].plus > 0.0 && a[0].minus > 0.0);
        let too_few = monte_carlo_errors(&recs, &cfg, |_| Err(InferenceError::BadConfig("x".into())));
        assert!(too_few.is_err());
    }

    #[test]
    fn cholesky_psd_handles_rank_deficiency() {
        let r = SymMatrix3::new(1.0, 1.0, 0.0, 1.0, 0.0, 0.0);
        let l = cholesky_psd(&r);
        let back = SymMatrix3::from_mat3_symmetrized(&l.mul(&l.transpose()));
        assert!(back.add(&r.scale(-1.0)).max_abs() < 1e-15);
    }
}
