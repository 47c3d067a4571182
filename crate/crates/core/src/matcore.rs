//! Small dense linear algebra for two-qubit work: complex matrices up to
//! 16×16, a cyclic Jacobi eigensolver for Hermitian matrices (n ≤ 4 in
//! practice), 3×3 real helpers, Kronecker products and partial transposes.

use num_complex::Complex64;
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};
use thiserror::Error;

pub type C64 = Complex64;

/// Entrywise tolerance on `max |m - m†|` for anything treated as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-9;

/// Jacobi sweeps stop once the off-diagonal Frobenius norm drops below this.
const JACOBI_OFF_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("matrix is not Hermitian: max |m - m†| = {defect:.3e} exceeds {HERMITIAN_TOL:e}")]
    NotHermitian { defect: f64 },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("Jacobi iteration did not converge (off-diagonal norm {off:.3e})")]
    NoConvergence { off: f64 },
}

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for col in 0..self.cols {
                let z = self[(r, col)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for col in 0..cols {
                data.push(f(r, col));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds from row-major entries. Panics if the length does not match.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length");
        Self { rows, cols, data }
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length");
        Self {
            rows,
            cols,
            data: data.iter().map(|&x| C64::new(x, 0.0)).collect(),
        }
    }

    /// |ψ⟩⟨ψ| for a column vector given as a slice.
    pub fn outer(ket: &[C64]) -> Self {
        let n = ket.len();
        Self::from_fn(n, n, |r, c| ket[r] * ket[c].conj())
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |r, c| if r == c { C64::new(values[r], 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Tr(self · other) without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Entrywise `max |m - m†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= HERMITIAN_TOL
    }

    fn checked_mul(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols, rhs.rows,
            "matrix product needs conforming dims ({:?} x {:?})",
            self.dims(),
            rhs.dims()
        );
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self[(r, c)] * v[c]).sum())
            .collect()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.checked_mul(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dims(), rhs.dims(), "matrix sum needs equal dims");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dims(), rhs.dims(), "matrix difference needs equal dims");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ar, ac) = a.dims();
    let (br, bc) = b.dims();
    ComplexMatrix::from_fn(ar * br, ac * bc, |r, c| a[(r / br, c / bc)] * b[(r % br, c % bc)])
}

/// The three Pauli matrices and the 2×2 identity.
#[derive(Debug, Clone)]
pub struct PauliBasis {
    pub sigma1: ComplexMatrix,
    pub sigma2: ComplexMatrix,
    pub sigma3: ComplexMatrix,
    pub identity2: ComplexMatrix,
}

impl Default for PauliBasis {
    fn default() -> Self {
        Self::new()
    }
}

impl PauliBasis {
    pub fn new() -> Self {
        let z = c(0.0, 0.0);
        let one = c(1.0, 0.0);
        let i = c(0.0, 1.0);
        Self {
            sigma1: ComplexMatrix::from_row_major(2, 2, vec![z, one, one, z]),
            sigma2: ComplexMatrix::from_row_major(2, 2, vec![z, -i, i, z]),
            sigma3: ComplexMatrix::from_row_major(2, 2, vec![one, z, z, -one]),
            identity2: ComplexMatrix::identity(2),
        }
    }

    /// σ_k for k ∈ {1, 2, 3}; k = 0 gives the identity.
    pub fn sigma(&self, k: usize) -> &ComplexMatrix {
        match k {
            0 => &self.identity2,
            1 => &self.sigma1,
            2 => &self.sigma2,
            3 => &self.sigma3,
            _ => panic!("Pauli index {k} out of range 0..=3"),
        }
    }

    /// n̂·σ for a real 3-vector.
    pub fn dot(&self, n: &[f64; 3]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(2, 2);
        for (k, nk) in n.iter().enumerate() {
            out = &out + &self.sigma(k + 1).scale_re(*nk);
        }
        out
    }
}

/// Which qubit of a two-qubit operator gets transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    First,
    Second,
}

/// Partial transpose of a 4×4 operator on qubit pair (first, second),
/// basis index = 2·a + b.
pub fn partial_transpose(m: &ComplexMatrix, subsystem: Subsystem) -> ComplexMatrix {
    assert_eq!(m.dims(), (4, 4), "partial transpose needs a 4x4 matrix");
    ComplexMatrix::from_fn(4, 4, |r, col| {
        let (a, b) = (r / 2, r % 2);
        let (a2, b2) = (col / 2, col % 2);
        match subsystem {
            Subsystem::Second => m[(2 * a + b2, 2 * a2 + b)],
            Subsystem::First => m[(2 * a2 + b, 2 * a + b2)],
        }
    })
}

/// Eigenpairs of a Hermitian matrix; values ascending, vectors as columns.
#[derive(Debug, Clone)]
pub struct HermEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermEigen {
    /// V Λ V†.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let lambda = ComplexMatrix::diag(&self.values);
        &(&self.vectors * &lambda) * &self.vectors.adjoint()
    }

    /// V f(Λ) V†.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let mapped: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        let lambda = ComplexMatrix::diag(&mapped);
        &(&self.vectors * &lambda) * &self.vectors.adjoint()
    }
}

fn off_diagonal_norm(m: &ComplexMatrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for r in 0..n {
        for c in 0..n {
            if r != c {
                s += m[(r, c)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic complex Jacobi. Each rotation first removes the phase of the
/// pivot element and then applies the real symmetric Jacobi rotation.
pub fn herm_eigen(m: &ComplexMatrix) -> Result<HermEigen, MatError> {
    if !m.is_square() {
        return Err(MatError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if !m.is_finite() {
        return Err(MatError::NonFinite);
    }
    let defect = m.hermiticity_defect();
    if defect > HERMITIAN_TOL {
        return Err(MatError::NotHermitian { defect });
    }
    let n = m.rows();
    // symmetrize so rounding in the input cannot accumulate
    let mut a = ComplexMatrix::from_fn(n, n, |r, c| (m[(r, c)] + m[(c, r)].conj()) * 0.5);
    let mut v = ComplexMatrix::identity(n);
    let scale = a.max_abs().max(1.0);

    let mut sweeps = 0;
    while off_diagonal_norm(&a) >= JACOBI_OFF_TOL * scale {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(MatError::NoConvergence {
                off: off_diagonal_norm(&a),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r < f64::MIN_POSITIVE {
                    continue;
                }
                let phase = apq / r; // e^{iα}
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                // U restricted to (p, q): diag(1, e^{-iα}) · [[c, s], [-s, c]]
                let upp = c(cs, 0.0);
                let upq = c(sn, 0.0);
                let uqp = -phase.conj() * sn;
                let uqq = phase.conj() * cs;
                // A ← A U
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * upp + akq * uqp;
                    a[(k, q)] = akp * upq + akq * uqq;
                }
                // A ← U† A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = upp.conj() * apk + uqp.conj() * aqk;
                    a[(q, k)] = upq.conj() * apk + uqq.conj() * aqk;
                }
                a[(p, q)] = c(0.0, 0.0);
                a[(q, p)] = c(0.0, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * upp + vkq * uqp;
                    v[(k, q)] = vkp * upq + vkq * uqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, col| v[(r, order[col])]);
    Ok(HermEigen { values, vectors })
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn herm_eigvals(m: &ComplexMatrix) -> Result<Vec<f64>, MatError> {
    herm_eigen(m).map(|e| e.values)
}

// ---------------------------------------------------------------------------
// 3×3 real matrices
// ---------------------------------------------------------------------------

/// Row-major real 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);

    pub fn identity() -> Self {
        Self::diag([1.0, 1.0, 1.0])
    }

    pub fn diag(d: [f64; 3]) -> Self {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            m[i][i] = d[i];
        }
        Mat3(m)
    }

    pub fn from_fn(f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = f(i, j);
            }
        }
        Mat3(m)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|i, j| self.0[j][i])
    }

    pub fn mul(&self, rhs: &Mat3) -> Self {
        Self::from_fn(|i, j| (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum())
    }

    pub fn mul_vec(&self, v: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..3).map(|k| self.0[i][k] * v[k]).sum();
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_fn(|i, j| self.0[i][j] * s)
    }

    pub fn add(&self, rhs: &Mat3) -> Self {
        Self::from_fn(|i, j| self.0[i][j] + rhs.0[i][j])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn max_abs_diff(&self, other: &Mat3) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs_diff(&Mat3::ZERO)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    pub fn to_complex(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(3, 3, |i, j| c(self.0[i][j], 0.0))
    }

    pub fn column(&self, j: usize) -> [f64; 3] {
        [self.0[0][j], self.0[1][j], self.0[2][j]]
    }
}

/// Real symmetric 3×3 matrix stored as its six independent entries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymMatrix3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl SymMatrix3 {
    pub fn new(xx: f64, xy: f64, xz: f64, yy: f64, yz: f64, zz: f64) -> Self {
        Self { xx, xy, xz, yy, yz, zz }
    }

    /// Symmetric part of a general 3×3 matrix.
    pub fn from_mat3_symmetrized(m: &Mat3) -> Self {
        let a = &m.0;
        Self {
            xx: a[0][0],
            xy: 0.5 * (a[0][1] + a[1][0]),
            xz: 0.5 * (a[0][2] + a[2][0]),
            yy: a[1][1],
            yz: 0.5 * (a[1][2] + a[2][1]),
            zz: a[2][2],
        }
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.xx, self.xy, self.xz, self.yy, self.yz, self.zz]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i.min(j), i.max(j)) {
            (0, 0) => self.xx,
            (0, 1) => self.xy,
            (0, 2) => self.xz,
            (1, 1) => self.yy,
            (1, 2) => self.yz,
            (2, 2) => self.zz,
            _ => panic!("index ({i}, {j}) out of range for 3x3"),
        }
    }

    pub fn to_mat3(&self) -> Mat3 {
        Mat3::from_fn(|i, j| self.get(i, j))
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_array(self.to_array().map(|x| x * s))
    }

    pub fn add(&self, rhs: &SymMatrix3) -> Self {
        let a = self.to_array();
        let b = rhs.to_array();
        Self::from_array(std::array::from_fn(|k| a[k] + b[k]))
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Eigen-decomposition (ascending) via the Hermitian Jacobi solver.
    pub fn eigen(&self) -> SymEigen3 {
        let herm = herm_eigen(&self.to_mat3().to_complex()).expect("real symmetric input is Hermitian");
        let values = [herm.values[0], herm.values[1], herm.values[2]];
        // eigenvectors of a real symmetric matrix can be chosen real; strip the
        // common phase of each column
        let vectors = Mat3::from_fn(|i, j| {
            let col: Vec<C64> = (0..3).map(|r| herm.vectors[(r, j)]).collect();
            let pivot = col.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            let phase = pivot.conj() / pivot.norm();
            (col[i] * phase).re
        });
        SymEigen3 { values, vectors }
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        let v = herm_eigvals(&self.to_mat3().to_complex()).expect("real symmetric input is Hermitian");
        [v[0], v[1], v[2]]
    }
}

/// Real eigen-decomposition of a symmetric 3×3 matrix; ascending values,
/// eigenvectors as the columns of `vectors`.
#[derive(Debug, Clone, Copy)]
pub struct SymEigen3 {
    pub values: [f64; 3],
    pub vectors: Mat3,
}

impl SymEigen3 {
    /// V diag(f(λ)) Vᵀ.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> SymMatrix3 {
        let d = self.values.map(f);
        let v = &self.vectors;
        let m = Mat3::from_fn(|i, j| (0..3).map(|k| v.0[i][k] * d[k] * v.0[j][k]).sum());
        SymMatrix3::from_mat3_symmetrized(&m)
    }
}

/// Singular values of a real 3×3 matrix in descending order, from the
/// eigenvalues of TᵀT. Values within -1e-12 of zero are clamped to 0.
pub fn svd_singular_values(t: &Mat3) -> Result<[f64; 3], MatError> {
    if !t.is_finite() {
        return Err(MatError::NonFinite);
    }
    let gram = SymMatrix3::from_mat3_symmetrized(&t.transpose().mul(t));
    let ev = gram.eigenvalues();
    let sv = |x: f64| if x < 0.0 { 0.0 } else { x.sqrt() };
    Ok([sv(ev[2]), sv(ev[1]), sv(ev[0])])
}
