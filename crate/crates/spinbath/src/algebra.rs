//! Dense complex linear algebra for small spin Hilbert spaces: spin operators
//! for arbitrary spin quantum number, tensor-product embedding, and Hermitian
//! matrix exponentials via eigendecomposition.
//!
//! All Hamiltonians are expressed in angular frequency (rad/ms); time is in ms.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Elementwise tolerance for Hermiticity checks.
pub const HERMITICITY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum AlgebraError {
    #[error("invalid spin quantum number {0}: 2s must be a positive integer")]
    InvalidSpin(f64),
    #[error("shape mismatch: operator dim {op_dim} does not match site dim {site_dim}")]
    ShapeMismatch { op_dim: usize, site_dim: usize },
    #[error("matrix is not Hermitian: max |H - H^dag| = {deviation:.3e} exceeds tolerance")]
    NotHermitian { deviation: f64 },
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// Returns true when `s` is a non-negative half-integer (0, 1/2, 1, 3/2, ...).
pub fn is_half_integer(s: f64) -> bool {
    let doubled = 2.0 * s;
    doubled >= 0.0 && (doubled - doubled.round()).abs() < 1e-9
}

/// Hilbert-space dimension 2s+1 of a spin-s particle.
pub fn spin_dim(s: f64) -> usize {
    (2.0 * s).round() as usize + 1
}

/// Angular-momentum matrices for a single spin.
///
/// `sz` is diagonal with entries s, s-1, ..., -s. The operators satisfy
/// [sx, sy] = i sz (and cyclic) and sx^2 + sy^2 + sz^2 = s(s+1) I.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub s: f64,
    pub sx: CMatrix,
    pub sy: CMatrix,
    pub sz: CMatrix,
}

impl SpinOperators {
    pub fn new(s: f64) -> Result<Self, AlgebraError> {
        if !is_half_integer(s) || s < 0.5 {
            return Err(AlgebraError::InvalidSpin(s));
        }
        let dim = spin_dim(s);
        let m_of = |i: usize| s - i as f64;

        let mut sz = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            sz[(i, i)] = C64::new(m_of(i), 0.0);
        }
        // S+ |s,m> = sqrt(s(s+1) - m(m+1)) |s,m+1>; row index m+1 sits above m.
        let mut sp = CMatrix::zeros(dim, dim);
        for i in 1..dim {
            let m = m_of(i);
            sp[(i - 1, i)] = C64::new((s * (s + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
        let sm = sp.adjoint();
        let sx = (&sp + &sm).scale(0.5);
        let sy = (&sp - &sm) * C64::new(0.0, -0.5);
        Ok(Self { s, sx, sy, sz })
    }

    pub fn dim(&self) -> usize {
        spin_dim(self.s)
    }

    /// Operators as an [sx, sy, sz] array, for tensor contractions.
    pub fn vector(&self) -> [&CMatrix; 3] {
        [&self.sx, &self.sy, &self.sz]
    }
}

/// Kronecker product a (x) b.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Identity matrix of dimension `dim`.
pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

/// Embeds `op` acting on factor `site` into the tensor product over `dims`,
/// with identities on every other factor.
pub fn embed(op: &CMatrix, site: usize, dims: &[usize]) -> Result<CMatrix, AlgebraError> {
    assert!(site < dims.len(), "site index out of range");
    if op.nrows() != dims[site] || op.ncols() != dims[site] {
        return Err(AlgebraError::ShapeMismatch {
            op_dim: op.nrows(),
            site_dim: dims[site],
        });
    }
    let pre: usize = dims[..site].iter().product();
    let post: usize = dims[site + 1..].iter().product();
    let mut out = kron(&identity(pre), op);
    if post > 1 {
        out = kron(&out, &identity(post));
    }
    Ok(out)
}

/// Maximum elementwise deviation from Hermiticity.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..=i {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// A matrix validated to be Hermitian within tolerance.
#[derive(Debug, Clone)]
pub struct HermitianMatrix {
    m: CMatrix,
}

impl HermitianMatrix {
    /// Validates Hermiticity relative to the matrix scale.
    pub fn new(m: CMatrix) -> Result<Self, AlgebraError> {
        if m.nrows() != m.ncols() {
            return Err(AlgebraError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let scale = m.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        let dev = hermiticity_deviation(&m);
        if dev > HERMITICITY_TOL * scale {
            return Err(AlgebraError::NotHermitian { deviation: dev });
        }
        Ok(Self { m })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted ascending.
///
/// One decomposition serves every evolution time: the propagator at time t is
/// V exp(-i lambda t) V^dag.
#[derive(Debug, Clone)]
pub struct Eigendecomposition {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

impl Eigendecomposition {
    pub fn new(h: &HermitianMatrix) -> Self {
        let se = nalgebra::SymmetricEigen::new(h.m.clone());
        let dim = h.dim();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));

        let mut values = DVector::zeros(dim);
        let mut vectors = CMatrix::zeros(dim, dim);
        for (k, &src) in order.iter().enumerate() {
            values[k] = se.eigenvalues[src];
            let mut col = se.eigenvectors.column(src).clone_owned();
            // Fix the gauge: largest-modulus component made real positive.
            let mut best = 0;
            for i in 1..dim {
                if col[i].norm_sqr() > col[best].norm_sqr() {
                    best = i;
                }
            }
            let phase = col[best] / col[best].norm();
            col /= phase;
            vectors.set_column(k, &col);
        }
        Self { values, vectors }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Phase factors exp(-i lambda_k t).
    pub fn phases(&self, t: f64) -> CVector {
        CVector::from_iterator(
            self.dim(),
            self.values.iter().map(|&l| C64::from_polar(1.0, -l * t)),
        )
    }

    /// Unitary propagator exp(-i H t).
    pub fn propagator(&self, t: f64) -> CMatrix {
        let phases = self.phases(t);
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[k];
        }
        scaled * self.vectors.adjoint()
    }
}

/// exp(-i H t) for Hermitian `h` in rad/ms and `t` in ms.
pub fn expm_hermitian(h: &HermitianMatrix, t: f64) -> CMatrix {
    Eigendecomposition::new(h).propagator(t)
}
