//! Dense complex-matrix numerics and real-subspace arithmetic.
//!
//! Every Lie algebra here is a real subspace of gl(N,C). A matrix X is
//! identified with the real vector vec(X) = [Re X (row major), Im X (row
//! major)] of length 2N^2, so the real inner product Re tr(X Y*) becomes the
//! Euclidean dot product.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("matrix is not Hermitian (residual {0:e})")]
    NotHermitian(f64),
    #[error("ambient dimensions differ ({0} vs {1})")]
    AmbientMismatch(usize, usize),
    #[error("operators do not commute (residual {0:e})")]
    NonCommuting(f64),
    #[error("operator does not preserve the domain (residual {0:e})")]
    NotInvariant(f64),
    #[error("singular linear system")]
    Singular,
}

/// Numerical thresholds shared by all modules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub eps_rank: f64,
    pub eps_orth: f64,
    pub eps_herm: f64,
    pub eps_pd: f64,
    pub eps_comm: f64,
    pub eps_cluster: f64,
    pub eps_member: f64,
    pub eps_nilzero: f64,
    pub eps_weight: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps_rank: 1e-9,
            eps_orth: 1e-10,
            eps_herm: 1e-10,
            eps_pd: 1e-12,
            eps_comm: 1e-8,
            eps_cluster: 1e-6,
            eps_member: 1e-7,
            eps_nilzero: 1e-9,
            eps_weight: 1e-8,
        }
    }
}

impl Tolerances {
    /// Overrides one named threshold. Returns false for unknown keys.
    pub fn set(&mut self, key: &str, value: f64) -> bool {
        let slot = match key {
            "eps_rank" => &mut self.eps_rank,
            "eps_orth" => &mut self.eps_orth,
            "eps_herm" => &mut self.eps_herm,
            "eps_pd" => &mut self.eps_pd,
            "eps_comm" => &mut self.eps_comm,
            "eps_cluster" => &mut self.eps_cluster,
            "eps_member" => &mut self.eps_member,
            "eps_nilzero" => &mut self.eps_nilzero,
            "eps_weight" => &mut self.eps_weight,
            _ => return false,
        };
        *slot = value;
        true
    }
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(n: usize) -> CMatrix {
    CMatrix::zeros(n, n)
}

pub fn from_real(m: &RMatrix) -> CMatrix {
    m.map(|v| c(v, 0.0))
}

pub fn conj(m: &CMatrix) -> CMatrix {
    m.map(|z| z.conj())
}

pub fn scale(m: &CMatrix, s: f64) -> CMatrix {
    m.map(|z| z * s)
}

pub fn bracket(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Real inner product Re tr(A B*).
pub fn inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn frob(a: &CMatrix) -> f64 {
    inner(a, a).sqrt()
}

pub fn one_norm(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_of(x: &CMatrix) -> DVector<f64> {
    let n = x.nrows();
    let mut v = DVector::zeros(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = x[(i, j)].re;
            v[n * n + i * n + j] = x[(i, j)].im;
        }
    }
    v
}

pub fn mat_of(v: &[f64], n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| c(v[i * n + j], v[n * n + i * n + j]))
}

pub fn mat_of_col(m: &RMatrix, j: usize, n: usize) -> CMatrix {
    let col: Vec<f64> = m.column(j).iter().copied().collect();
    mat_of(&col, n)
}

/// Matrix exponential by scaling and squaring with a degree 13 Pade core.
pub fn matexp(x: &CMatrix) -> CMatrix {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = x.nrows();
    if n == 0 {
        return x.clone();
    }
    let norm = one_norm(x);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = scale(x, 0.5f64.powi(s));
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let cb = |k: usize| c(B[k], 0.0);
    let u_inner = &a6 * (&a6 * cb(13) + &a4 * cb(11) + &a2 * cb(9))
        + &a6 * cb(7)
        + &a4 * cb(5)
        + &a2 * cb(3)
        + &id * cb(1);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * cb(12) + &a4 * cb(10) + &a2 * cb(8))
        + &a6 * cb(6)
        + &a4 * cb(4)
        + &a2 * cb(2)
        + &id * cb(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Pade denominator is invertible after scaling");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

pub fn hermitian_part(x: &CMatrix) -> CMatrix {
    scale(&(x + x.adjoint()), 0.5)
}

/// Logarithm of a Hermitian positive definite matrix via unitary diagonalization.
pub fn hermitian_log(p: &CMatrix, eps_herm: f64, eps_pd: f64) -> Result<CMatrix, NumError> {
    let res = frob(&(p - p.adjoint()));
    if res > eps_herm * (1.0 + frob(p)) {
        return Err(NumError::NotHermitian(res));
    }
    let eig = SymmetricEigen::new(hermitian_part(p));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= eps_pd {
        return Err(NumError::NotPositiveDefinite(min));
    }
    let d = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| c(l.ln(), 0.0)));
    let v = &eig.eigenvectors;
    Ok(hermitian_part(&(v * d * v.adjoint())))
}

/// One-sided Jacobi SVD of an r×c matrix: thin U (r×m, m = min(r,c)),
/// singular values sorted descending (length m) and full V (c×c), with
/// A = U diag(s) V[:, ..m]*. Always terminates, unlike the implicit-shift
/// QR SVD on some rank-deficient inputs.
fn jacobi_svd<T>(a: &DMatrix<T>) -> (DMatrix<T>, Vec<f64>, DMatrix<T>)
where
    T: nalgebra::ComplexField<RealField = f64> + Copy,
{
    let (r, k) = a.shape();
    let m = r.min(k);
    let mut u = a.clone();
    let mut v = DMatrix::<T>::identity(k, k);
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = T::zero();
                for i in 0..r {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    alpha += x.modulus_squared();
                    beta += y.modulus_squared();
                    gamma += x.conjugate() * y;
                }
                let g = gamma.modulus();
                if g <= 1e-15 * (alpha * beta).sqrt() || g <= 1e-300 * scale {
                    continue;
                }
                rotated = true;
                let e = gamma.unscale(g);
                let zeta = (beta - alpha) / (2.0 * g);
                let t = if zeta >= 0.0 { 1.0 } else { -1.0 } / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut u, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = x.scale(c) - y.scale(s) * e.conjugate();
                        mat[(i, q)] = x.scale(s) * e + y.scale(c);
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..k).map(|j| u.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));
    let mut uo = DMatrix::<T>::zeros(r, m);
    let mut vo = DMatrix::<T>::zeros(k, k);
    let mut sv = Vec::with_capacity(m);
    let tiny = 1e-300_f64.max(f64::EPSILON * 1e-3 * scale);
    let mut filled = 0;
    for (dst, &j) in order.iter().enumerate() {
        vo.set_column(dst, &v.column(j));
        if dst < m {
            sv.push(norms[j]);
            if norms[j] > tiny && filled == dst {
                uo.set_column(dst, &u.column(j).unscale(norms[j]));
                filled = dst + 1;
            }
        }
    }
    // Complete U with orthonormal vectors for the vanishing singular values.
    let mut cand = 0;
    for dst in filled..m {
        loop {
            let mut w = DVector::<T>::zeros(r);
            w[cand % r] = T::one();
            cand += 1;
            for _ in 0..2 {
                for j in 0..dst {
                    let col = uo.column(j).clone_owned();
                    let proj = col.dotc(&w);
                    w -= col * proj;
                }
            }
            let nw = w.norm();
            if nw > 1e-8 {
                uo.set_column(dst, &w.unscale(nw));
                break;
            }
            assert!(cand < 4 * r + 4, "left singular basis completion failed");
        }
    }
    (uo, sv, vo)
}

/// SVD of a real matrix: thin U (rows × min), singular values sorted
/// descending (length min(rows, cols)) and full V (cols × cols).
pub fn svd_full(m: &RMatrix) -> (RMatrix, Vec<f64>, RMatrix) {
    jacobi_svd(m)
}

/// Minimum-norm least-squares solution, singular values below rcond·s_max cut.
pub fn lstsq(a: &RMatrix, b: &DVector<f64>, rcond: f64) -> DVector<f64> {
    let (_, cols) = a.shape();
    if cols == 0 {
        return DVector::zeros(0);
    }
    let (u, s, v) = svd_full(a);
    let smax = s.first().copied().unwrap_or(0.0);
    let utb = u.transpose() * b;
    let mut x = DVector::zeros(cols);
    for (j, &sj) in s.iter().enumerate() {
        if sj > rcond * smax && sj > 0.0 {
            x += v.column(j) * (utb[j] / sj);
        }
    }
    x
}

/// Orthonormal basis of the column space, rank decided against eps.
pub fn orth_columns(m: &RMatrix, eps: f64) -> RMatrix {
    let (rows, cols) = m.shape();
    if cols == 0 || rows == 0 {
        return RMatrix::zeros(rows, 0);
    }
    let (u, s, _) = svd_full(m);
    let rank = s.iter().take(cols.min(rows)).filter(|&&v| v > eps).count();
    u.columns(0, rank).into_owned()
}

/// Orthonormal basis of the null space of m (as columns), rank decided against eps.
pub fn null_space(m: &RMatrix, eps: f64) -> RMatrix {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return RMatrix::zeros(0, 0);
    }
    if rows == 0 {
        return RMatrix::identity(cols, cols);
    }
    let (_, s, v) = svd_full(m);
    let rank = s.iter().take(cols.min(rows)).filter(|&&x| x > eps).count();
    v.columns(rank, cols - rank).into_owned()
}

/// Orthonormal basis of the complex column space.
pub fn complex_orth(m: &CMatrix, eps: f64) -> CMatrix {
    let (rows, cols) = m.shape();
    if cols == 0 || rows == 0 {
        return CMatrix::zeros(rows, 0);
    }
    let (u, s, _) = jacobi_svd(m);
    let rank = s.iter().take(rows.min(cols)).filter(|&&v| v > eps).count();
    u.columns(0, rank).into_owned()
}

/// Spectral-norm of a real matrix.
pub fn spectral_norm(m: &RMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let (_, s, _) = svd_full(m);
    s[0]
}

/// A real subspace of gl(N,C) = R^{2N^2}, stored as an orthonormal basis
/// in the columns of `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSubspace {
    pub n: usize,
    pub basis: RMatrix,
}

/// Result of a joint sum/intersection computation; both dimensions come
/// from the same singular values, so dim(a+b) + dim(a∩b) = dim a + dim b.
#[derive(Debug, Clone)]
pub struct SumIntersection {
    pub sum: RealSubspace,
    pub intersection: RealSubspace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubspaceOp {
    Intersect,
    Sum,
    OrthocomplementIn,
}

impl RealSubspace {
    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn zero(n: usize) -> Self {
        RealSubspace { n, basis: RMatrix::zeros(2 * n * n, 0) }
    }

    pub fn full(n: usize) -> Self {
        RealSubspace { n, basis: RMatrix::identity(2 * n * n, 2 * n * n) }
    }

    /// Span of real vectors given as columns.
    pub fn from_columns(n: usize, cols: &RMatrix, eps: f64) -> Self {
        RealSubspace { n, basis: orth_columns(cols, eps) }
    }

    pub fn span(n: usize, mats: &[CMatrix], eps: f64) -> Self {
        let mut cols = RMatrix::zeros(2 * n * n, mats.len());
        for (j, m) in mats.iter().enumerate() {
            cols.set_column(j, &vec_of(m));
        }
        Self::from_columns(n, &cols, eps)
    }

    pub fn matrices(&self) -> Vec<CMatrix> {
        (0..self.dim()).map(|j| mat_of_col(&self.basis, j, self.n)).collect()
    }

    pub fn element(&self, coords: &[f64]) -> CMatrix {
        let v = &self.basis * DVector::from_column_slice(coords);
        mat_of(v.as_slice(), self.n)
    }

    pub fn coords(&self, x: &CMatrix) -> DVector<f64> {
        self.basis.transpose() * vec_of(x)
    }

    pub fn project(&self, x: &CMatrix) -> CMatrix {
        let v = &self.basis * (self.basis.transpose() * vec_of(x));
        mat_of(v.as_slice(), self.n)
    }

    /// Distance of x from the subspace.
    pub fn residual(&self, x: &CMatrix) -> f64 {
        frob(&(x - self.project(x)))
    }

    pub fn gram_defect(&self) -> f64 {
        let g = self.basis.transpose() * &self.basis;
        (g - RMatrix::identity(self.dim(), self.dim())).abs().max()
    }

    fn check(&self, other: &Self) -> Result<(), NumError> {
        if self.ambient() != other.ambient() {
            Err(NumError::AmbientMismatch(self.ambient(), other.ambient()))
        } else {
            Ok(())
        }
    }

    pub fn sum_intersection(&self, other: &Self, eps: f64) -> Result<SumIntersection, NumError> {
        self.check(other)?;
        let (da, db) = (self.dim(), other.dim());
        let amb = self.ambient();
        if da == 0 || db == 0 {
            let sum = if da == 0 { other.clone() } else { self.clone() };
            return Ok(SumIntersection { sum, intersection: RealSubspace::zero(self.n) });
        }
        let mut m = RMatrix::zeros(amb, da + db);
        m.view_mut((0, 0), (amb, da)).copy_from(&self.basis);
        m.view_mut((0, da), (amb, db)).copy_from(&(-&other.basis));
        let (u, s, v) = svd_full(&m);
        let rank = s.iter().take((da + db).min(amb)).filter(|&&x| x > eps).count();
        let sum = RealSubspace { n: self.n, basis: u.columns(0, rank).into_owned() };
        let null = v.columns(rank, da + db - rank).into_owned();
        let inter_cols = &self.basis * null.rows(0, da);
        // The null vectors are orthonormal in R^{da+db}; the map to the
        // intersection scales by 1/sqrt(2) up to O(eps), so a QR-type
        // orthonormalization keeps the dimension fixed.
        let inter = gram_schmidt(&inter_cols);
        Ok(SumIntersection { sum, intersection: RealSubspace { n: self.n, basis: inter } })
    }

    pub fn intersect(&self, other: &Self, eps: f64) -> Result<Self, NumError> {
        Ok(self.sum_intersection(other, eps)?.intersection)
    }

    pub fn sum(&self, other: &Self, eps: f64) -> Result<Self, NumError> {
        Ok(self.sum_intersection(other, eps)?.sum)
    }

    /// Orthogonal complement of self inside `within`.
    pub fn orthocomplement_in(&self, within: &Self, eps: f64) -> Result<Self, NumError> {
        self.check(within)?;
        if self.dim() == 0 {
            return Ok(within.clone());
        }
        // Coordinates (in `within`) of vectors orthogonal to self.
        let m = self.basis.transpose() * &within.basis;
        let null = null_space(&m, eps);
        let cols = &within.basis * null;
        Ok(RealSubspace { n: self.n, basis: gram_schmidt(&cols) })
    }

    pub fn contains(&self, other: &Self, eps: f64) -> bool {
        other.matrices().iter().all(|m| self.residual(m) < eps)
    }

    /// Spectral-norm distance between orthogonal projectors; infinite when
    /// the dimensions differ.
    pub fn distance(&self, other: &Self) -> f64 {
        if self.dim() != other.dim() || self.ambient() != other.ambient() {
            return f64::INFINITY;
        }
        let pa = &self.basis * self.basis.transpose();
        let pb = &other.basis * other.basis.transpose();
        spectral_norm(&(pa - pb))
    }

    /// Image of the subspace under a real-linear map on matrices.
    pub fn image<F: Fn(&CMatrix) -> CMatrix>(&self, f: F, eps: f64) -> Self {
        let mats: Vec<CMatrix> = self.matrices().iter().map(f).collect();
        RealSubspace::span(self.n, &mats, eps)
    }

    /// Matrix of a real-linear map restricted to self, in basis coordinates,
    /// together with the residual of the image outside self.
    pub fn restrict<F: Fn(&CMatrix) -> CMatrix>(&self, f: F) -> (RMatrix, f64) {
        let d = self.dim();
        let mut m = RMatrix::zeros(d, d);
        let mut res: f64 = 0.0;
        for (j, b) in self.matrices().iter().enumerate() {
            let img = f(b);
            let v = vec_of(&img);
            let cvec = self.basis.transpose() * &v;
            let back = &self.basis * &cvec;
            res = res.max((v - back).norm());
            m.set_column(j, &cvec);
        }
        (m, res)
    }
}

/// Modified Gram-Schmidt on columns that are already known to be linearly
/// independent (used where the rank was fixed by an earlier decision).
pub fn gram_schmidt(cols: &RMatrix) -> RMatrix {
    let mut q = cols.clone();
    for j in 0..q.ncols() {
        for _ in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).into_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let nrm = q.column(j).norm();
        if nrm > 0.0 {
            q.column_mut(j).scale_mut(1.0 / nrm);
        }
    }
    q
}

/// Spec-style dispatcher over the binary subspace operations.
pub fn subspace_ops(
    a: &RealSubspace,
    b: &RealSubspace,
    op: SubspaceOp,
    eps_rank: f64,
) -> Result<RealSubspace, NumError> {
    match op {
        SubspaceOp::Intersect => a.intersect(b, eps_rank),
        SubspaceOp::Sum => a.sum(b, eps_rank),
        SubspaceOp::OrthocomplementIn => a.orthocomplement_in(b, eps_rank),
    }
}

/// One eigenvalue cluster of a spectral decomposition.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub value: Complex64,
    pub mult: usize,
    /// Spectral projector onto the generalized eigenspace.
    pub projector: CMatrix,
    /// Orthonormal basis of the generalized eigenspace.
    pub basis: CMatrix,
    /// Norm of the nilpotent part restricted to this cluster.
    pub nil_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Spectral {
    pub clusters: Vec<Cluster>,
    pub semisimple: CMatrix,
    pub nilpotent: CMatrix,
    pub min_gap: f64,
    pub max_projector_norm: f64,
}

impl Spectral {
    pub fn is_semisimple(&self, tol: f64) -> bool {
        self.clusters.iter().all(|c| c.nil_norm <= tol)
    }
}

const PROJECTOR_LIMIT: f64 = 1e6;

fn lex(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    a.re.partial_cmp(&b.re)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
}

/// Swap the adjacent diagonal entries k, k+1 of the upper triangular t,
/// updating the unitary z so that z t z* is preserved.
fn swap_schur(t: &mut CMatrix, z: &mut CMatrix, k: usize) {
    let n = t.nrows();
    let a = t[(k, k)];
    let b = t[(k, k + 1)];
    let d = t[(k + 1, k + 1)];
    // Eigenvector of the 2x2 block for the eigenvalue d.
    let x0 = b;
    let x1 = d - a;
    let r = (x0.norm_sqr() + x1.norm_sqr()).sqrt();
    if r == 0.0 {
        return;
    }
    let cs = x0 / r;
    let sn = x1 / r;
    // Unitary G with first column (cs, sn).
    let g = [[cs, -sn.conj()], [sn, cs.conj()]];
    // t <- G* t G on rows/cols k, k+1.
    for j in 0..n {
        let u = t[(k, j)];
        let v = t[(k + 1, j)];
        t[(k, j)] = g[0][0].conj() * u + g[1][0].conj() * v;
        t[(k + 1, j)] = g[0][1].conj() * u + g[1][1].conj() * v;
    }
    for i in 0..n {
        let u = t[(i, k)];
        let v = t[(i, k + 1)];
        t[(i, k)] = u * g[0][0] + v * g[1][0];
        t[(i, k + 1)] = u * g[0][1] + v * g[1][1];
    }
    t[(k + 1, k)] = ZERO;
    for i in 0..n {
        let u = z[(i, k)];
        let v = z[(i, k + 1)];
        z[(i, k)] = u * g[0][0] + v * g[1][0];
        z[(i, k + 1)] = u * g[0][1] + v * g[1][1];
    }
}

/// Solve A X - X B = R for upper triangular A, B with disjoint spectra.
fn triangular_sylvester(a: &CMatrix, b: &CMatrix, r: &CMatrix) -> CMatrix {
    let m = a.nrows();
    let p = b.nrows();
    let mut x = CMatrix::zeros(m, p);
    for j in 0..p {
        let mut rhs: Vec<Complex64> = (0..m).map(|i| r[(i, j)]).collect();
        for l in 0..j {
            let blj = b[(l, j)];
            for (i, v) in rhs.iter_mut().enumerate() {
                *v += x[(i, l)] * blj;
            }
        }
        let bjj = b[(j, j)];
        for i in (0..m).rev() {
            let mut s = rhs[i];
            for k in (i + 1)..m {
                s -= a[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = s / (a[(i, i)] - bjj);
        }
    }
    x
}

/// Bring the eigenvalues whose index set (positions on the diagonal) is
/// `members` to the leading block by adjacent swaps. Returns the new
/// positions permutation-free (the leading |members| entries).
fn move_to_front(t: &mut CMatrix, z: &mut CMatrix, labels: &mut [usize], target: usize) {
    let n = t.nrows();
    let mut filled = 0;
    for pos in 0..n {
        if labels[pos] == target {
            let mut p = pos;
            while p > filled {
                swap_schur(t, z, p - 1);
                labels.swap(p - 1, p);
                p -= 1;
            }
            filled += 1;
        }
    }
}

/// Spectral decomposition with adaptive clustering: eigenvalues closer than
/// eps_cluster (scaled by the spectral radius) start in a common cluster, and
/// clusters whose spectral projectors are numerically unbounded are merged
/// with their nearest neighbour (perturbed Jordan blocks).
pub fn spectral_decomposition(m: &CMatrix, eps_cluster: f64) -> Spectral {
    let n = m.nrows();
    if n == 0 {
        return Spectral {
            clusters: vec![],
            semisimple: m.clone(),
            nilpotent: m.clone(),
            min_gap: f64::INFINITY,
            max_projector_norm: 0.0,
        };
    }
    let (z0, t0) = schur(m);
    let eig: Vec<Complex64> = (0..n).map(|i| t0[(i, i)]).collect();
    let radius = eig.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    // Single linkage at the initial radius.
    let mut label: Vec<usize> = (0..n).collect();
    let find = |label: &mut Vec<usize>, mut i: usize| {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    };
    for i in 0..n {
        for j in (i + 1)..n {
            if (eig[i] - eig[j]).norm() <= eps_cluster * radius {
                let (ri, rj) = (find(&mut label, i), find(&mut label, j));
                if ri != rj {
                    label[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    loop {
        let roots: Vec<usize> = (0..n).map(|i| find(&mut label, i)).collect();
        let mut ids: Vec<usize> = roots.clone();
        ids.sort_unstable();
        ids.dedup();
        let means: Vec<Complex64> = ids
            .iter()
            .map(|&r| {
                let members: Vec<usize> = (0..n).filter(|&i| roots[i] == r).collect();
                members.iter().map(|&i| eig[i]).sum::<Complex64>() / members.len() as f64
            })
            .collect();
        let mut clusters = Vec::with_capacity(ids.len());
        let mut worst: Option<(usize, f64)> = None;
        for (ci, &r) in ids.iter().enumerate() {
            let mut t = t0.clone();
            let mut z = z0.clone();
            let mut lab: Vec<usize> = roots.clone();
            move_to_front(&mut t, &mut z, &mut lab, r);
            let k = lab.iter().filter(|&&l| l == r).count();
            let projector = if k == n {
                identity(n)
            } else {
                let a = t.view((0, 0), (k, k)).into_owned();
                let b = t.view((k, k), (n - k, n - k)).into_owned();
                let cc = t.view((0, k), (k, n - k)).into_owned();
                let x = triangular_sylvester(&a, &b, &(-cc));
                let mut blk = CMatrix::zeros(n, n);
                for i in 0..k {
                    blk[(i, i)] = ONE;
                }
                blk.view_mut((0, k), (k, n - k)).copy_from(&(-x));
                &z * blk * z.adjoint()
            };
            let pn = projector.norm();
            if pn > PROJECTOR_LIMIT * (k as f64).sqrt() || !pn.is_finite() {
                if worst.map_or(true, |(_, w)| pn > w) {
                    worst = Some((ci, pn));
                }
            }
            let value = means[ci];
            let basis = z.columns(0, k).into_owned();
            let nil = (m - identity(n) * value) * &projector;
            clusters.push(Cluster { value, mult: k, projector, basis, nil_norm: nil.norm() });
        }
        if let Some((ci, _)) = worst {
            if ids.len() > 1 {
                // Merge with the nearest other cluster.
                let mut best = (usize::MAX, f64::INFINITY);
                for (cj, mj) in means.iter().enumerate() {
                    if cj != ci {
                        let d = (means[ci] - mj).norm();
                        if d < best.1 {
                            best = (cj, d);
                        }
                    }
                }
                let (ra, rb) = (ids[ci], ids[best.0]);
                let (lo, hi) = (ra.min(rb), ra.max(rb));
                for l in label.iter_mut() {
                    if *l == hi {
                        *l = lo;
                    }
                }
                for i in 0..n {
                    let r = find(&mut label, i);
                    label[i] = r;
                }
                continue;
            }
        }
        clusters.sort_by(|a, b| lex(&a.value, &b.value));
        let mut semisimple = CMatrix::zeros(n, n);
        for cl in &clusters {
            semisimple += &cl.projector * cl.value;
        }
        let nilpotent = m - &semisimple;
        let mut min_gap = f64::INFINITY;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                min_gap = min_gap.min((clusters[i].value - clusters[j].value).norm());
            }
        }
        let max_projector_norm = clusters.iter().map(|c| c.projector.norm()).fold(0.0, f64::max);
        return Spectral { clusters, semisimple, nilpotent, min_gap, max_projector_norm };
    }
}

/// A joint generalized eigenspace of commuting operators, in coordinates of
/// the (complexified) domain.
#[derive(Debug, Clone)]
pub struct JointEigenspace {
    pub values: Vec<Complex64>,
    pub basis: CMatrix,
}

impl JointEigenspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Joint eigenspaces of commuting real operators given as matrices in the
/// coordinates of a common d-dimensional real domain; the result covers the
/// complexified domain C^d.
pub fn simultaneous_eigensplit_coords(
    ops: &[RMatrix],
    eps_cluster: f64,
    eps_comm: f64,
) -> Result<Vec<JointEigenspace>, NumError> {
    let d = ops.first().map_or(0, |m| m.nrows());
    for i in 0..ops.len() {
        for j in (i + 1)..ops.len() {
            let comm = &ops[i] * &ops[j] - &ops[j] * &ops[i];
            let scale = 1.0 + ops[i].norm() * ops[j].norm();
            let r = comm.norm();
            if r > eps_comm * scale {
                return Err(NumError::NonCommuting(r));
            }
        }
    }
    let mut out = vec![JointEigenspace { values: vec![], basis: CMatrix::identity(d, d) }];
    for op in ops {
        let cop = from_real(op);
        let mut next = Vec::new();
        for sp in out {
            if sp.dim() == 0 {
                continue;
            }
            let restricted = sp.basis.adjoint() * &cop * &sp.basis;
            let spec = spectral_decomposition(&restricted, eps_cluster);
            for cl in spec.clusters {
                let mut values = sp.values.clone();
                values.push(cl.value);
                next.push(JointEigenspace { values, basis: &sp.basis * &cl.basis });
            }
        }
        out = next;
    }
    out.sort_by(|a, b| {
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            let o = lex(x, y);
            if o != std::cmp::Ordering::Equal {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    });
    Ok(out)
}

/// Joint eigenspaces of commuting real-linear maps on a real subspace of
/// gl(N,C). Operators must preserve the domain.
pub fn simultaneous_eigensplit(
    ops: &[&dyn Fn(&CMatrix) -> CMatrix],
    domain: &RealSubspace,
    tol: &Tolerances,
) -> Result<Vec<JointEigenspace>, NumError> {
    let mut mats = Vec::with_capacity(ops.len());
    for op in ops {
        let (m, res) = domain.restrict(|x| op(x));
        if res > tol.eps_rank * (1.0 + m.norm()) {
            return Err(NumError::NotInvariant(res));
        }
        mats.push(m);
    }
    simultaneous_eigensplit_coords(&mats, tol.eps_cluster, tol.eps_comm)
}

/// Complex matrix of gl(N,C) represented by a complex coordinate vector on a
/// real subspace; used to look at complexified weight vectors.
pub fn complex_element(domain: &RealSubspace, coords: &[Complex64]) -> (CMatrix, CMatrix) {
    let re: Vec<f64> = coords.iter().map(|z| z.re).collect();
    let im: Vec<f64> = coords.iter().map(|z| z.im).collect();
    (domain.element(&re), domain.element(&im))
}

/// Real span of the real and imaginary parts of complex coordinate columns.
pub fn real_cut(cols: &CMatrix, eps: f64) -> RMatrix {
    let (d, k) = cols.shape();
    let mut m = RMatrix::zeros(d, 2 * k);
    for j in 0..k {
        for i in 0..d {
            m[(i, 2 * j)] = cols[(i, j)].re;
            m[(i, 2 * j + 1)] = cols[(i, j)].im;
        }
    }
    orth_columns(&m, eps)
}

/// Coefficients of the characteristic polynomial (monic, highest degree
/// first) computed from the eigenvalues.
pub fn charpoly_from_eigenvalues(eig: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![ONE];
    for &l in eig {
        let mut next = vec![ZERO; coeffs.len() + 1];
        for (i, &a) in coeffs.iter().enumerate() {
            next[i] += a;
            next[i + 1] -= a * l;
        }
        coeffs = next;
    }
    coeffs
}

/// Complex Schur form m = Z T Z*: Householder reduction to Hessenberg form,
/// then single-shift QR with Wilkinson shifts and an absolute deflation test
/// (eigenvalues at or near zero would stall a purely relative one).
pub fn schur(m: &CMatrix) -> (CMatrix, CMatrix) {
    let n = m.nrows();
    let mut h = m.clone();
    let mut z = identity(n);
    if n <= 1 {
        return (z, h);
    }
    for k in 0..n - 2 {
        let x: Vec<Complex64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let xn = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if xn == 0.0 {
            continue;
        }
        let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { ONE };
        let mut v = x.clone();
        v[0] += phase * xn;
        let vn = v.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        for e in v.iter_mut() {
            *e /= vn;
        }
        // h <- (I - 2vv*) h (I - 2vv*) on rows/cols k+1..n.
        for j in 0..n {
            let mut d = ZERO;
            for (i, vi) in v.iter().enumerate() {
                d += vi.conj() * h[(k + 1 + i, j)];
            }
            for (i, vi) in v.iter().enumerate() {
                h[(k + 1 + i, j)] -= *vi * d * 2.0;
            }
        }
        for mat in [&mut h, &mut z] {
            for i in 0..n {
                let mut d = ZERO;
                for (j, vj) in v.iter().enumerate() {
                    d += mat[(i, k + 1 + j)] * vj;
                }
                for (j, vj) in v.iter().enumerate() {
                    mat[(i, k + 1 + j)] -= d * vj.conj() * 2.0;
                }
            }
        }
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
    }
    let norm = h.norm().max(f64::MIN_POSITIVE);
    let eps = f64::EPSILON;
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        let mut l = hi;
        while l > 0 {
            let sub = h[(l, l - 1)].norm();
            if sub <= eps * (h[(l - 1, l - 1)].norm() + h[(l, l)].norm()) || sub <= eps * norm {
                h[(l, l - 1)] = ZERO;
                break;
            }
            l -= 1;
        }
        if l == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        assert!(total < 100 * n * n, "Schur iteration failed to converge");
        let shift = if iter % 11 == 10 {
            h[(hi, hi)] + Complex64::new(0.75, 0.5) * h[(hi, hi - 1)].norm()
        } else {
            let a = h[(hi - 1, hi - 1)];
            let b = h[(hi - 1, hi)];
            let c = h[(hi, hi - 1)];
            let d = h[(hi, hi)];
            let half = (a - d) * 0.5;
            let disc = (half * half + b * c).sqrt();
            let m1 = (a + d) * 0.5 + disc;
            let m2 = (a + d) * 0.5 - disc;
            if (m1 - d).norm() < (m2 - d).norm() { m1 } else { m2 }
        };
        let mut x = h[(l, l)] - shift;
        let mut y = h[(l + 1, l)];
        for k in l..hi {
            if k > l {
                x = h[(k, k - 1)];
                y = h[(k + 1, k - 1)];
            }
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            if r == 0.0 {
                continue;
            }
            let (cs, sn) = if x.norm() == 0.0 {
                (0.0, y.conj() / y.norm())
            } else {
                (x.norm() / r, (x / x.norm()) * y.conj() / r)
            };
            let j0 = if k > l { k - 1 } else { k };
            for j in j0..n {
                let u = h[(k, j)];
                let w = h[(k + 1, j)];
                h[(k, j)] = u * cs + sn * w;
                h[(k + 1, j)] = -sn.conj() * u + w * cs;
            }
            let i1 = (k + 2).min(hi);
            for i in 0..=i1 {
                let u = h[(i, k)];
                let w = h[(i, k + 1)];
                h[(i, k)] = u * cs + sn.conj() * w;
                h[(i, k + 1)] = -sn * u + w * cs;
            }
            for i in 0..n {
                let u = z[(i, k)];
                let w = z[(i, k + 1)];
                z[(i, k)] = u * cs + sn.conj() * w;
                z[(i, k + 1)] = -sn * u + w * cs;
            }
            if k > l {
                h[(k + 1, k - 1)] = ZERO;
            }
        }
    }
    for j in 0..n {
        for i in j + 1..n {
            h[(i, j)] = ZERO;
        }
    }
    (z, h)
}

pub fn eigenvalues(m: &CMatrix) -> Vec<Complex64> {
    if m.nrows() == 0 {
        return vec![];
    }
    let (_, t) = schur(m);
    let mut e: Vec<Complex64> = (0..m.nrows()).map(|i| t[(i, i)]).collect();
    e.sort_by(lex);
    e
}
