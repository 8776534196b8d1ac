//! Dense forward operators, spectral norms and the preconditioned resolvents
//! `(G + AᵀA)⁻¹` and `(G̃ + AAᵀ)⁻¹`.
//!
//! Operators are immutable once built. Gram products and Cholesky factors
//! are computed lazily and published at most once through
//! [`once_cell::race::OnceBox`], so concurrent readers may race to compute a
//! value but never observe a torn one.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;
use core::str::FromStr;

use once_cell::race::OnceBox;

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{self, orthonormalize_columns, Cholesky, Matrix};
use crate::rng::{self, Stream};

/// Discretized forward operator `A` (or `A_h`).
pub struct DenseOperator {
    matrix: Matrix,
    fingerprint: u64,
    gram: OnceBox<Matrix>,
    outer_gram: OnceBox<Matrix>,
}

impl DenseOperator {
    pub fn new(matrix: Matrix) -> Self {
        let fingerprint = fingerprint_of(&matrix);
        Self {
            matrix,
            fingerprint,
            gram: OnceBox::new(),
            outer_gram: OnceBox::new(),
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        Self::new(Matrix::from_rows(rows))
    }

    pub fn identity(n: usize) -> Self {
        Self::new(Matrix::identity(n))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Matrix::zeros(rows, cols))
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self::new(Matrix::from_diagonal(d))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Content hash of shape and entry bits; keys the factorization caches.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.as_slice().iter().all(|&v| v == 0.0)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("operator apply", self.cols(), x.len())?;
        Ok(self.matrix.mul_vec(x))
    }

    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("operator adjoint", self.rows(), y.len())?;
        Ok(self.matrix.tr_mul_vec(y))
    }

    /// `AᵀA`, cached.
    pub fn gram(&self) -> &Matrix {
        self.gram.get_or_init(|| Box::new(self.matrix.gram()))
    }

    /// `AAᵀ`, cached.
    pub fn outer_gram(&self) -> &Matrix {
        self.outer_gram
            .get_or_init(|| Box::new(self.matrix.outer_gram()))
    }

    pub fn spectral_norm(&self, cfg: &PowerIterationConfig) -> Result<f64> {
        spectral_norm(self, cfg)
    }
}

impl Clone for DenseOperator {
    fn clone(&self) -> Self {
        Self::new(self.matrix.clone())
    }
}

impl fmt::Debug for DenseOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DenseOperator")
            .field("rows", &self.rows())
            .field("cols", &self.cols())
            .field("fingerprint", &format_args!("{:016x}", self.fingerprint))
            .finish()
    }
}

impl PartialEq for DenseOperator {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

// FNV-1a over the shape and the raw entry bits.
fn fingerprint_of(m: &Matrix) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut feed = |word: u64| {
        for b in word.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    feed(m.rows() as u64);
    feed(m.cols() as u64);
    for v in m.as_slice() {
        feed(v.to_bits());
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIterationConfig {
    /// Relative change of the singular-value estimate that ends the loop.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for PowerIterationConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-13,
            max_iterations: 200_000,
            seed: 0x5eed,
        }
    }
}

/// Largest singular value of `op`, by power iteration on `opᵀop` from a
/// seeded Gaussian start vector. A zero operator has norm 0.
pub fn spectral_norm(op: &DenseOperator, cfg: &PowerIterationConfig) -> Result<f64> {
    if !(cfg.tolerance > 0.0) {
        return Err(invalid("tolerance", cfg.tolerance, "must be positive"));
    }
    if cfg.max_iterations == 0 {
        return Err(invalid("max_iterations", 0.0, "must be at least 1"));
    }
    if op.is_zero() {
        return Ok(0.0);
    }
    let a = op.matrix();
    let mut r = rng::stream(cfg.seed, Stream::PowerIteration);
    let mut v = rng::gaussian_vec(&mut r, op.cols());
    let nv = linalg::norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut w = vec![0.0; op.rows()];
    let mut estimate = 0.0;
    for it in 1..=cfg.max_iterations {
        a.mul_vec_into(&v, &mut w);
        let sigma = linalg::norm(&w);
        a.tr_mul_vec_into(&w, &mut v);
        let nv = linalg::norm(&v);
        if nv == 0.0 {
            // start vector in the null space; `sigma` is exact for that subspace
            return Ok(sigma);
        }
        v.iter_mut().for_each(|x| *x /= nv);
        if it > 1 && (sigma - estimate).abs() <= cfg.tolerance * sigma {
            return Ok(sigma);
        }
        estimate = sigma;
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iterations,
        estimate,
    })
}

/// `‖a − b‖₂`.
pub fn operator_distance(
    a: &DenseOperator,
    b: &DenseOperator,
    cfg: &PowerIterationConfig,
) -> Result<f64> {
    check_len("operator distance (rows)", a.rows(), b.rows())?;
    check_len("operator distance (cols)", a.cols(), b.cols())?;
    let diff = DenseOperator::new(a.matrix().sub(b.matrix()));
    spectral_norm(&diff, cfg)
}

/// Entries of the experiment preconditioner catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CatalogId {
    G1,
    G2,
    G3,
    G4,
    G5,
    G6,
    G7,
    G8,
}

impl CatalogId {
    pub const ALL: [CatalogId; 8] = [
        CatalogId::G1,
        CatalogId::G2,
        CatalogId::G3,
        CatalogId::G4,
        CatalogId::G5,
        CatalogId::G6,
        CatalogId::G7,
        CatalogId::G8,
    ];

    /// Multiplier of `λ_max`: the scalar for G1-G4, the minimal diagonal
    /// entry for G5-G8.
    pub fn factor(self) -> f64 {
        match self {
            CatalogId::G1 => 1e-6,
            CatalogId::G2 | CatalogId::G5 | CatalogId::G7 => 1e-4,
            CatalogId::G3 | CatalogId::G6 | CatalogId::G8 => 1e-3,
            CatalogId::G4 => 1e-2,
        }
    }
}

impl fmt::Display for CatalogId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = CatalogId::ALL.iter().position(|c| c == self).unwrap() + 1;
        write!(f, "G{i}")
    }
}

impl FromStr for CatalogId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let idx = t
            .strip_prefix('G')
            .or_else(|| t.strip_prefix('g'))
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|i| (1..=8).contains(i))
            .ok_or_else(|| Error::UnknownCatalogId(s.to_string()))?;
        Ok(CatalogId::ALL[idx - 1])
    }
}

/// How a preconditioner is requested before `λ_max` and `n` are known.
#[derive(Clone, Debug, PartialEq)]
pub enum PreconditionerSpec {
    Catalog(CatalogId),
    Scalar(f64),
    Diagonal(Vec<f64>),
    Spd(Matrix),
}

#[derive(Clone, Debug, PartialEq)]
pub enum PreconditionerKind {
    Scalar(f64),
    Diagonal(Vec<f64>),
    SymmetricPositiveDefinite(Matrix),
}

struct Factored {
    key: u64,
    chol: Cholesky,
}

/// The operator `G`, plus cached factorizations of `G + AᵀA` and of the
/// data-space companion `G̃ + AAᵀ`.
pub struct Preconditioner {
    kind: PreconditionerKind,
    dim: usize,
    label: Option<CatalogId>,
    // Eigenvalues, when known from construction (G5-G8).
    spectrum: Option<Vec<f64>>,
    model_cache: OnceBox<Factored>,
    data_cache: OnceBox<Factored>,
}

/// Cholesky factor that is either borrowed from a cache or freshly owned.
pub enum Factor<'a> {
    Cached(&'a Cholesky),
    Owned(Cholesky),
}

impl Deref for Factor<'_> {
    type Target = Cholesky;

    fn deref(&self) -> &Cholesky {
        match self {
            Factor::Cached(c) => c,
            Factor::Owned(c) => c,
        }
    }
}

impl Preconditioner {
    fn build(kind: PreconditionerKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            label: None,
            spectrum: None,
            model_cache: OnceBox::new(),
            data_cache: OnceBox::new(),
        }
    }

    /// `G = μ I_n`.
    pub fn scalar(mu: f64, n: usize) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(invalid("mu", mu, "scalar preconditioner must be positive"));
        }
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        Ok(Self::build(PreconditionerKind::Scalar(mu), n))
    }

    pub fn diagonal(d: Vec<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        if let Some(&bad) = d.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(invalid("diagonal", bad, "entries must be positive"));
        }
        let n = d.len();
        Ok(Self::build(PreconditionerKind::Diagonal(d), n))
    }

    /// Symmetric positive-definite matrix; symmetry is checked to 1e-12
    /// relative and definiteness by a Cholesky factorization.
    pub fn spd(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                context: "SPD preconditioner",
                expected: m.rows(),
                found: m.cols(),
            });
        }
        if m.asymmetry() > 1e-12 {
            return Err(Error::NotPositiveDefinite);
        }
        Cholesky::factor(&m)?;
        let n = m.rows();
        Ok(Self::build(PreconditionerKind::SymmetricPositiveDefinite(m), n))
    }

    pub fn kind(&self) -> &PreconditionerKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> Option<CatalogId> {
        self.label
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self.kind, PreconditionerKind::Scalar(_))
    }

    /// `μ` for the scalar kind.
    pub fn scalar_value(&self) -> Option<f64> {
        match self.kind {
            PreconditionerKind::Scalar(mu) => Some(mu),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        let body = match &self.kind {
            PreconditionerKind::Scalar(mu) => format!("scalar(mu={mu:e})"),
            PreconditionerKind::Diagonal(d) => {
                let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = d.iter().cloned().fold(0.0, f64::max);
                format!("diagonal(n={}, min={lo:e}, max={hi:e})", d.len())
            }
            PreconditionerKind::SymmetricPositiveDefinite(m) => format!("spd(n={})", m.rows()),
        };
        match self.label {
            Some(id) => format!("{id}:{body}"),
            None => body,
        }
    }

    /// `G x`
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("preconditioner apply", self.dim, x.len())?;
        Ok(match &self.kind {
            PreconditionerKind::Scalar(mu) => x.iter().map(|v| mu * v).collect(),
            PreconditionerKind::Diagonal(d) => x.iter().zip(d).map(|(v, di)| v * di).collect(),
            PreconditionerKind::SymmetricPositiveDefinite(m) => m.mul_vec(x),
        })
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            PreconditionerKind::Scalar(mu) => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = mu * v;
                }
            }
            PreconditionerKind::Diagonal(d) => {
                for ((o, v), di) in out.iter_mut().zip(x).zip(d) {
                    *o = v * di;
                }
            }
            PreconditionerKind::SymmetricPositiveDefinite(m) => m.mul_vec_into(x, out),
        }
    }

    /// Dense `n × n` form of `G`.
    pub fn to_matrix(&self) -> Matrix {
        match &self.kind {
            PreconditionerKind::Scalar(mu) => Matrix::from_diagonal(&vec![*mu; self.dim]),
            PreconditionerKind::Diagonal(d) => Matrix::from_diagonal(d),
            PreconditionerKind::SymmetricPositiveDefinite(m) => m.clone(),
        }
    }

    /// Eigenvalues of `G`, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev = match (&self.kind, &self.spectrum) {
            (_, Some(s)) => s.clone(),
            (PreconditionerKind::Scalar(mu), None) => vec![*mu; self.dim],
            (PreconditionerKind::Diagonal(d), None) => d.clone(),
            (PreconditionerKind::SymmetricPositiveDefinite(m), None) => linalg::symmetric_eigen(m).0,
        };
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// `‖G‖`
    pub fn norm(&self) -> f64 {
        match &self.kind {
            PreconditionerKind::Scalar(mu) => *mu,
            PreconditionerKind::Diagonal(d) => d.iter().cloned().fold(0.0, f64::max),
            PreconditionerKind::SymmetricPositiveDefinite(_) => self.eigenvalues()[0],
        }
    }

    /// `‖G^{1/2}‖ = √‖G‖`
    pub fn sqrt_norm(&self) -> f64 {
        libm::sqrt(self.norm())
    }

    /// `sᵀ G s = ‖G^{1/2} s‖²`
    pub fn quadratic_form(&self, s: &[f64]) -> Result<f64> {
        let gs = self.apply(s)?;
        Ok(linalg::dot(s, &gs))
    }

    fn model_matrix(&self, op: &DenseOperator) -> Matrix {
        let mut m = op.gram().clone();
        match &self.kind {
            PreconditionerKind::Scalar(mu) => m.add_diagonal(&vec![*mu; self.dim]),
            PreconditionerKind::Diagonal(d) => m.add_diagonal(d),
            PreconditionerKind::SymmetricPositiveDefinite(g) => m.add_scaled(1.0, g),
        }
        m
    }

    fn data_matrix(&self, op: &DenseOperator) -> Result<Matrix> {
        let mut m = op.outer_gram().clone();
        match &self.kind {
            PreconditionerKind::Scalar(mu) => m.add_diagonal(&vec![*mu; op.rows()]),
            _ if op.rows() != op.cols() => {
                return Err(Error::Unsupported(
                    "data-space companion of a non-scalar preconditioner needs a square operator",
                ))
            }
            PreconditionerKind::Diagonal(d) => m.add_diagonal(d),
            PreconditionerKind::SymmetricPositiveDefinite(g) => m.add_scaled(1.0, g),
        }
        Ok(m)
    }

    /// Cholesky factor of `G + opᵀop`.
    pub fn model_factor<'a>(&'a self, op: &DenseOperator) -> Result<Factor<'a>> {
        check_len("preconditioner vs operator columns", self.dim, op.cols())?;
        cached_factor(&self.model_cache, op.fingerprint(), || {
            Cholesky::factor(&self.model_matrix(op))
        })
    }

    /// Cholesky factor of `G̃ + op opᵀ`.
    pub fn data_factor<'a>(&'a self, op: &DenseOperator) -> Result<Factor<'a>> {
        check_len("preconditioner vs operator columns", self.dim, op.cols())?;
        cached_factor(&self.data_cache, op.fingerprint(), || {
            Cholesky::factor(&self.data_matrix(op)?)
        })
    }

    /// Solves `(G + opᵀop) z = rhs`.
    pub fn resolvent_solve(&self, op: &DenseOperator, rhs: &[f64]) -> Result<Vec<f64>> {
        check_len("resolvent right-hand side", op.cols(), rhs.len())?;
        Ok(self.model_factor(op)?.solve(rhs))
    }

    /// Returns `(G̃ + op opᵀ)⁻¹ r`, with `G̃ = μ I` for scalar `G` and
    /// `G̃ = G` for square discrete operators.
    pub fn companion_resolvent_apply(&self, op: &DenseOperator, r: &[f64]) -> Result<Vec<f64>> {
        check_len("companion resolvent argument", op.rows(), r.len())?;
        Ok(self.data_factor(op)?.solve(r))
    }
}

fn cached_factor<'a>(
    slot: &'a OnceBox<Factored>,
    key: u64,
    compute: impl Fn() -> Result<Cholesky>,
) -> Result<Factor<'a>> {
    if let Some(f) = slot.get() {
        if f.key == key {
            return Ok(Factor::Cached(&f.chol));
        }
        // cache belongs to another operator; do not evict it
        return compute().map(Factor::Owned);
    }
    let f = slot.get_or_try_init(|| compute().map(|chol| Box::new(Factored { key, chol })))?;
    if f.key == key {
        Ok(Factor::Cached(&f.chol))
    } else {
        compute().map(Factor::Owned)
    }
}

impl Clone for Preconditioner {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind.clone(),
            dim: self.dim,
            label: self.label,
            spectrum: self.spectrum.clone(),
            model_cache: OnceBox::new(),
            data_cache: OnceBox::new(),
        }
    }
}

impl fmt::Debug for Preconditioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Preconditioner")
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("label", &self.label)
            .finish()
    }
}

impl PartialEq for Preconditioner {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.dim == other.dim
    }
}

/// `diag_n(a)`: the minimal entry `a` first, then `n − 1` uniform draws on
/// `[a, n·a]`.
fn catalog_diagonal(n: usize, a: f64, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, Stream::PreconditionerDiagonal);
    let top = n as f64 * a;
    let mut d = Vec::with_capacity(n);
    d.push(a);
    for _ in 1..n {
        d.push(a + (top - a) * rng::uniform(&mut r));
    }
    d
}

/// Random orthogonal matrix from orthonormalized Gaussian columns.
pub fn random_orthogonal(n: usize, seed: u64) -> Result<Matrix> {
    let mut r = rng::stream(seed, Stream::PreconditionerRotation);
    let g = Matrix::new(n, n, rng::gaussian_vec(&mut r, n * n))?;
    orthonormalize_columns(&g)
}

/// Builds `G` from a catalog id or an explicit specification.
pub fn make_preconditioner(
    spec: &PreconditionerSpec,
    n: usize,
    lambda_max: f64,
    seed: u64,
) -> Result<Preconditioner> {
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(invalid("lambda_max", lambda_max, "must be positive"));
    }
    let mut g = match spec {
        PreconditionerSpec::Scalar(mu) => Preconditioner::scalar(*mu, n)?,
        PreconditionerSpec::Diagonal(d) => {
            check_len("explicit diagonal preconditioner", n, d.len())?;
            Preconditioner::diagonal(d.clone())?
        }
        PreconditionerSpec::Spd(m) => {
            check_len("explicit SPD preconditioner", n, m.rows())?;
            Preconditioner::spd(m.clone())?
        }
        PreconditionerSpec::Catalog(id) => {
            let a = id.factor() * lambda_max;
            let mut g = match id {
                CatalogId::G1 | CatalogId::G2 | CatalogId::G3 | CatalogId::G4 => {
                    Preconditioner::scalar(a, n)?
                }
                CatalogId::G5 | CatalogId::G6 => Preconditioner::diagonal(catalog_diagonal(n, a, seed))?,
                CatalogId::G7 | CatalogId::G8 => {
                    let d = catalog_diagonal(n, a, seed);
                    let u = random_orthogonal(n, seed)?;
                    let mut scaled = u.clone();
                    for i in 0..n {
                        for j in 0..n {
                            scaled.set(i, j, u.get(i, j) * d[j]);
                        }
                    }
                    let mut m = scaled.matmul(&u.transpose());
                    m.symmetrize();
                    let mut g = Preconditioner::spd(m)?;
                    g.spectrum = Some(d);
                    g
                }
            };
            g.label = Some(*id);
            g
        }
    };
    if g.spectrum.is_none() {
        if let PreconditionerKind::Diagonal(d) = &g.kind {
            g.spectrum = Some(d.clone());
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn apply_examples() {
        let id = DenseOperator::identity(3);
        assert_eq!(id.apply(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let z = DenseOperator::zeros(2, 2);
        assert_eq!(z.apply(&[5.0, -7.0]).unwrap(), vec![0.0, 0.0]);
        let row = DenseOperator::from_rows(&[&[1.0, 1.0]]);
        assert_eq!(row.apply(&[1.0, 1.0]).unwrap(), vec![2.0]);
        assert!(matches!(
            row.apply(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn adjoint_examples() {
        let id = DenseOperator::identity(2);
        assert_eq!(id.apply_adjoint(&[4.0, 5.0]).unwrap(), vec![4.0, 5.0]);
        let row = DenseOperator::from_rows(&[&[1.0, 1.0]]);
        assert_eq!(row.apply_adjoint(&[2.0]).unwrap(), vec![2.0, 2.0]);
        let z = DenseOperator::zeros(3, 2);
        assert_eq!(z.apply_adjoint(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert!(row.apply_adjoint(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn spectral_norm_examples() {
        let cfg = PowerIterationConfig::default();
        let id = DenseOperator::identity(5);
        assert!((id.spectral_norm(&cfg).unwrap() - 1.0).abs() < 1e-12);
        let d = DenseOperator::diagonal(&[1.0, 2.0, 3.0]);
        assert!((d.spectral_norm(&cfg).unwrap() - 3.0).abs() < 1e-10);
        let nil = DenseOperator::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!((nil.spectral_norm(&cfg).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_reports_non_convergence() {
        let cfg = PowerIterationConfig {
            tolerance: 1e-15,
            max_iterations: 2,
            seed: 1,
        };
        let d = DenseOperator::diagonal(&[1.0, 0.999, 0.5]);
        assert!(matches!(
            d.spectral_norm(&cfg),
            Err(Error::NotConverged { iterations: 2, .. })
        ));
    }

    #[test]
    fn catalog_scalar_entries() {
        let g = make_preconditioner(&PreconditionerSpec::Catalog(CatalogId::G1), 3, 2.0, 9).unwrap();
        assert_eq!(g.scalar_value(), Some(2e-6));
        for (id, f) in [(CatalogId::G2, 1e-4), (CatalogId::G3, 1e-3), (CatalogId::G4, 1e-2)] {
            let g = make_preconditioner(&PreconditionerSpec::Catalog(id), 4, 1.0, 0).unwrap();
            assert_eq!(g.scalar_value(), Some(f));
        }
    }

    #[test]
    fn catalog_diagonal_degenerate_size() {
        let g = make_preconditioner(&PreconditionerSpec::Catalog(CatalogId::G5), 1, 1.0, 3).unwrap();
        assert_eq!(g.kind(), &PreconditionerKind::Diagonal(vec![1e-4]));
    }

    #[test]
    fn catalog_diagonal_range() {
        let n = 10;
        let g = make_preconditioner(&PreconditionerSpec::Catalog(CatalogId::G6), n, 2.0, 3).unwrap();
        let a = 2e-3;
        let PreconditionerKind::Diagonal(d) = g.kind() else {
            panic!("expected diagonal")
        };
        assert_eq!(d[0], a);
        assert!(d.iter().all(|&v| v >= a && v <= n as f64 * a));
    }

    #[test]
    fn rotated_catalog_keeps_spectrum() {
        let s = 11;
        let g5 = make_preconditioner(&PreconditionerSpec::Catalog(CatalogId::G5), 4, 1.0, s).unwrap();
        let g7 = make_preconditioner(&PreconditionerSpec::Catalog(CatalogId::G7), 4, 1.0, s).unwrap();
        assert!(matches!(g7.kind(), PreconditionerKind::SymmetricPositiveDefinite(_)));
        let PreconditionerKind::SymmetricPositiveDefinite(m) = g7.kind() else {
            unreachable!()
        };
        let (ev, _) = linalg::symmetric_eigen(m);
        let expect = g5.eigenvalues();
        assert!(close(&ev, &expect, 1e-15), "{ev:?} vs {expect:?}");
    }

    #[test]
    fn catalog_is_deterministic() {
        for id in CatalogId::ALL {
            let a = make_preconditioner(&PreconditionerSpec::Catalog(id), 6, 0.7, 42).unwrap();
            let b = make_preconditioner(&PreconditionerSpec::Catalog(id), 6, 0.7, 42).unwrap();
            let (ma, mb) = (a.to_matrix(), b.to_matrix());
            assert!(ma
                .as_slice()
                .iter()
                .zip(mb.as_slice())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn catalog_id_parsing() {
        assert_eq!("G7".parse::<CatalogId>().unwrap(), CatalogId::G7);
        assert_eq!("g2".parse::<CatalogId>().unwrap(), CatalogId::G2);
        assert!(matches!("G9".parse::<CatalogId>(), Err(Error::UnknownCatalogId(_))));
        assert!("H1".parse::<CatalogId>().is_err());
        assert_eq!(CatalogId::G8.to_string(), "G8");
    }

    #[test]
    fn resolvent_examples() {
        let g = Preconditioner::scalar(4.0, 2).unwrap();
        let z = g.resolvent_solve(&DenseOperator::zeros(3, 2), &[2.0, -8.0]).unwrap();
        assert!(close(&z, &[0.5, -2.0], 1e-15));

        let g = Preconditioner::scalar(1.0, 1).unwrap();
        let z = g.resolvent_solve(&DenseOperator::from_rows(&[&[1.0]]), &[2.0]).unwrap();
        assert!(close(&z, &[1.0], 1e-15));

        let g = Preconditioner::scalar(1.0, 2).unwrap();
        let z = g.resolvent_solve(&DenseOperator::identity(2), &[2.0, 2.0]).unwrap();
        assert!(close(&z, &[1.0, 1.0], 1e-15));
    }

    #[test]
    fn companion_examples() {
        let g = Preconditioner::scalar(2.0, 1).unwrap();
        let w = g.companion_resolvent_apply(&DenseOperator::zeros(1, 1), &[4.0]).unwrap();
        assert!(close(&w, &[2.0], 1e-15));
        let g = Preconditioner::scalar(1.0, 1).unwrap();
        let w = g.companion_resolvent_apply(&DenseOperator::from_rows(&[&[1.0]]), &[2.0]).unwrap();
        assert!(close(&w, &[1.0], 1e-15));
    }

    #[test]
    fn companion_rejects_non_square_general_g() {
        let g = Preconditioner::diagonal(vec![1.0, 2.0]).unwrap();
        let op = DenseOperator::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(
            g.companion_resolvent_apply(&op, &[1.0, 1.0, 1.0]),
            Err(Error::Unsupported(_))
        ));
        // the model-space resolvent is still fine
        assert!(g.resolvent_solve(&op, &[1.0, 1.0]).is_ok());
    }

    #[test]
    fn cache_follows_operator_identity() {
        let g = Preconditioner::scalar(1.0, 1).unwrap();
        let a = DenseOperator::from_rows(&[&[1.0]]);
        let b = DenseOperator::from_rows(&[&[3.0]]);
        assert!(close(&g.resolvent_solve(&a, &[2.0]).unwrap(), &[1.0], 1e-15));
        assert!(close(&g.resolvent_solve(&b, &[10.0]).unwrap(), &[1.0], 1e-15));
        assert!(matches!(g.model_factor(&a).unwrap(), Factor::Cached(_)));
        assert!(matches!(g.model_factor(&b).unwrap(), Factor::Owned(_)));
    }

    #[test]
    fn spd_rejects_indefinite_and_asymmetric() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(Preconditioner::spd(m), Err(Error::NotPositiveDefinite)));
        let m = Matrix::from_rows(&[&[1.0, 0.1], &[0.0, 1.0]]);
        assert!(Preconditioner::spd(m).is_err());
        assert!(Preconditioner::scalar(0.0, 2).is_err());
        assert!(Preconditioner::diagonal(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn distance_examples() {
        let cfg = PowerIterationConfig::default();
        let a = DenseOperator::diagonal(&[3.0, 1.0]);
        let b = DenseOperator::diagonal(&[1.0, 1.0]);
        assert_eq!(operator_distance(&a, &a, &cfg).unwrap(), 0.0);
        let i2 = DenseOperator::identity(2);
        let z2 = DenseOperator::zeros(2, 2);
        assert!((operator_distance(&i2, &z2, &cfg).unwrap() - 1.0).abs() < 1e-12);
        assert!((operator_distance(&a, &b, &cfg).unwrap() - 2.0).abs() < 1e-12);
        assert!(operator_distance(&a, &DenseOperator::identity(3), &cfg).is_err());
    }
}
