//! The adjoint H-action on q for a reductive symmetric pair (g, sigma):
//! Jordan decomposition, closed orbits, Cartan subspaces and weights.

use crate::gradmap::isotropy_and_slice;
use crate::liegroup::{
    centralizer, random_in, split_involution, theta, GroupPoint, InvolutionSpec, LieError,
    Scenario, Which,
};
use crate::numkernel::{
    bracket, charpoly_from_eigenvalues, eigenvalues, frob, orth_columns, real_cut, scale,
    spectral_decomposition, svd_full, CMatrix, NumError, RMatrix, RealSubspace, Tolerances,
};
use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum SymError {
    #[error("eigenvalue clusters separated by {0:e}; decomposition unreliable")]
    IllConditioned(f64),
    #[error("element is not in q (residual {0:e})")]
    NotInQ(f64),
    #[error("no maximal abelian extension found after {0} attempts")]
    ExtensionStalled(usize),
    #[error("element is semisimple; its orbit is already closed")]
    AlreadyClosed,
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// g = h ⊕ q with the theta-splits of both summands.
#[derive(Debug, Clone)]
pub struct SymmetricPairData {
    pub n: usize,
    pub algebra: RealSubspace,
    pub sigma: InvolutionSpec,
    pub h: RealSubspace,
    pub q: RealSubspace,
    pub hk: RealSubspace,
    pub hp: RealSubspace,
    pub qk: RealSubspace,
    pub qp: RealSubspace,
    pub center: RealSubspace,
    pub tol: Tolerances,
}

impl SymmetricPairData {
    pub fn new(algebra: RealSubspace, sigma: InvolutionSpec, tol: Tolerances) -> Result<Self, SymError> {
        let eps = tol.eps_rank;
        let (h, q) = split_involution(|x| sigma.apply(x), &algebra, eps)?;
        let (hk, hp) = split_involution(theta, &h, eps)?;
        let (qk, qp) = split_involution(theta, &q, eps)?;
        let center = centralizer(&algebra, &algebra.matrices(), eps);
        Ok(SymmetricPairData { n: algebra.n, algebra, sigma, h, q, hk, hp, qk, qp, center, tol })
    }

    pub fn from_scenario(s: &Scenario, which: Which) -> Result<Self, SymError> {
        let sigma = match which {
            Which::Sigma1 => s.sigma1.clone(),
            _ => s.sigma2.clone(),
        };
        Self::new(s.algebra().clone(), sigma, s.tol)
    }

    /// The slice pair (h^x ⊕ q^x, sigma2) at a zero-fiber point x.
    pub fn at_point(s: &Scenario, x: &GroupPoint) -> Result<Self, SymError> {
        let sd = isotropy_and_slice(s, x)?;
        let algebra = sd.hx.sum(&sd.qx, s.tol.eps_rank)?;
        Self::new(algebra, s.sigma2.clone(), s.tol)
    }

    /// Largest residual of [h,h] ⊂ h, [h,q] ⊂ q, [q,q] ⊂ h over basis pairs.
    pub fn bracket_defect(&self) -> f64 {
        let hm = self.h.matrices();
        let qm = self.q.matrices();
        let mut r: f64 = 0.0;
        for a in &hm {
            for b in &hm {
                r = r.max(self.h.residual(&bracket(a, b)));
            }
            for b in &qm {
                r = r.max(self.q.residual(&bracket(a, b)));
            }
        }
        for a in &qm {
            for b in &qm {
                r = r.max(self.h.residual(&bracket(a, b)));
            }
        }
        r
    }

    fn check_in_q(&self, xi: &CMatrix) -> Result<(), SymError> {
        let r = self.q.residual(xi);
        if r > self.tol.eps_member * (1.0 + frob(xi)) {
            return Err(SymError::NotInQ(r));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct JordanParts {
    pub semisimple: CMatrix,
    pub nilpotent: CMatrix,
    pub min_gap: f64,
}

/// Additive Jordan decomposition in the defining representation.
pub fn jordan_chevalley(pair: &SymmetricPairData, xi: &CMatrix) -> Result<JordanParts, SymError> {
    pair.check_in_q(xi)?;
    let eps = pair.tol.eps_cluster;
    let spec = spectral_decomposition(xi, eps);
    let radius = spec.clusters.iter().map(|c| c.value.norm()).fold(1.0, f64::max);
    if spec.min_gap < 10.0 * eps * radius {
        return Err(SymError::IllConditioned(spec.min_gap));
    }
    let semisimple = pair.algebra.project(&spec.semisimple);
    let nilpotent = xi - &semisimple;
    Ok(JordanParts { semisimple, nilpotent, min_gap: spec.min_gap })
}

/// Closed orbit iff xi is semisimple.
pub fn is_closed_orbit(pair: &SymmetricPairData, xi: &CMatrix) -> Result<bool, SymError> {
    let jc = jordan_chevalley(pair, xi)?;
    Ok(frob(&jc.nilpotent) < pair.tol.eps_nilzero * (1.0 + frob(xi)))
}

/// Gradient value [xi_k, xi_p] ∈ h ∩ p.
pub fn phi_h(pair: &SymmetricPairData, xi: &CMatrix) -> CMatrix {
    let xk = pair.qk.project(xi);
    let xp = pair.qp.project(xi);
    pair.hp.project(&bracket(&xk, &xp))
}

#[derive(Debug, Clone, Copy)]
pub struct HFlowParams {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for HFlowParams {
    fn default() -> Self {
        HFlowParams { max_iters: 5_000, tol: 1e-15 }
    }
}

#[derive(Debug, Clone)]
pub struct HFlowResult {
    pub endpoint: CMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub final_norm: f64,
    pub charpoly_drift: f64,
}

fn ad_exp(beta: &CMatrix, s: f64, xi: &CMatrix) -> CMatrix {
    let g = crate::numkernel::matexp(&scale(beta, -s));
    let gi = crate::numkernel::matexp(&scale(beta, s));
    g * xi * gi
}

/// Newton direction for |Ad(exp(-Y)) xi|^2 over Y ∈ h ∩ p: the Hessian at
/// Y = 0 is 4 A^T A with A: Y ↦ [Y, xi], so the step solves [Y, xi] ≈ xi/2
/// in the least-squares sense.
fn newton_direction(pair: &SymmetricPairData, xi: &CMatrix) -> Option<CMatrix> {
    let basis = pair.hp.matrices();
    if basis.is_empty() {
        return None;
    }
    let d = 2 * pair.n * pair.n;
    let mut a = RMatrix::zeros(d, basis.len());
    for (j, y) in basis.iter().enumerate() {
        a.set_column(j, &crate::numkernel::vec_of(&bracket(y, xi)));
    }
    let rhs = crate::numkernel::vec_of(xi) * 0.5;
    if a.norm() == 0.0 {
        return None;
    }
    let sol = crate::numkernel::lstsq(&a, &rhs, 1e-10);
    let mut y = CMatrix::zeros(pair.n, pair.n);
    for (j, b) in basis.iter().enumerate() {
        y += scale(b, sol[j]);
    }
    Some(y)
}

/// Flow xi <- Ad(exp(-s Y)) xi decreasing |xi|^2 along the H-orbit, with Y
/// the Newton-preconditioned gradient; converges to the closed orbit in the
/// closure.
pub fn phi_h_flow(pair: &SymmetricPairData, xi: &CMatrix, params: &HFlowParams) -> HFlowResult {
    let scale0 = frob(xi).max(f64::MIN_POSITIVE);
    let mut cur = xi.clone();
    let mut beta = phi_h(pair, &cur);
    let mut iters = 0;
    let mut stagnant = 0;
    // Relative to the current norm: on a null-cone orbit both shrink together.
    let done = |b: &CMatrix, x: &CMatrix| {
        let nx = frob(x);
        frob(b) <= params.tol * nx * nx || nx <= 1e-12 * scale0
    };
    while !done(&beta, &cur) && iters < params.max_iters && stagnant < 20 {
        iters += 1;
        let f0 = frob(&cur).powi(2);
        let b0 = frob(&beta);
        let mut dirs: Vec<(CMatrix, f64)> = Vec::new();
        if let Some(y) = newton_direction(pair, &cur) {
            dirs.push((y, 1.0));
        }
        dirs.push((beta.clone(), 1.0 / scale0));
        let mut accepted = false;
        for (dir, s0) in dirs {
            let slope = 2.0 * crate::numkernel::inner(&bracket(&dir, &cur), &cur);
            if slope <= 0.0 {
                continue;
            }
            let mut s = s0;
            while s * frob(&dir) > 1e-16 {
                let cand = ad_exp(&dir, s, &cur);
                let f1 = frob(&cand).powi(2);
                let armijo = f1 <= f0 - 1e-4 * s * slope;
                let resolved = !armijo
                    && f1 <= f0 * (1.0 + 1e-14)
                    && frob(&phi_h(pair, &cand)) < 0.9 * b0;
                if armijo || resolved {
                    cur = pair.q.project(&cand);
                    beta = phi_h(pair, &cur);
                    let progress = f1 < f0 * (1.0 - 1e-13) || frob(&beta) < 0.99 * b0;
                    stagnant = if progress { 0 } else { stagnant + 1 };
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    let drift = {
        let a = charpoly_from_eigenvalues(&eigenvalues(xi));
        let b = charpoly_from_eigenvalues(&eigenvalues(&cur));
        crate::gradmap::invariant_drift(&a, &b)
    };
    HFlowResult {
        converged: done(&beta, &cur),
        final_norm: frob(&beta),
        endpoint: cur,
        iterations: iters,
        charpoly_drift: drift,
    }
}

/// Singular values of Z ↦ [Z, xi] from h to q.
pub fn ad_singular_values(pair: &SymmetricPairData, xi: &CMatrix) -> Vec<f64> {
    let hm = pair.h.matrices();
    if hm.is_empty() {
        return vec![];
    }
    let d = 2 * pair.n * pair.n;
    let mut m = RMatrix::zeros(d, hm.len());
    for (j, z) in hm.iter().enumerate() {
        m.set_column(j, &crate::numkernel::vec_of(&bracket(z, xi)));
    }
    let (_, s, _) = svd_full(&m);
    s.into_iter().take(hm.len()).collect()
}

/// Orbit-closedness decided by the Phi_H flow: the orbit dimension (rank of
/// ad xi on h) is preserved along the flow iff the limit stays in the orbit.
pub fn closed_by_flow(pair: &SymmetricPairData, xi: &CMatrix, params: &HFlowParams) -> Result<bool, SymError> {
    let sc = frob(xi);
    if sc == 0.0 {
        return Ok(true);
    }
    // A nilpotent with an N-block is only resolved to eps^(1/N) in floating
    // point; singular values below that floor count as zero.
    let nu = f64::EPSILON.powf(1.0 / pair.n as f64);
    let (lo, hi) = (10.0 * nu, (100.0 * nu).max(1e-3));
    let rank = |x: &CMatrix| -> Result<usize, SymError> {
        let sv = ad_singular_values(pair, x);
        let mut r = 0;
        for v in sv {
            let rel = v / sc;
            if rel > lo && rel < hi {
                return Err(SymError::IllConditioned(rel));
            }
            if rel >= hi {
                r += 1;
            }
        }
        Ok(r)
    };
    let r0 = rank(xi)?;
    let flow = phi_h_flow(pair, xi, params);
    let r1 = rank(&flow.endpoint)?;
    Ok(r1 == r0)
}

/// A restricted weight: values on the ordered c-basis (imaginary parts on
/// the t-part, real parts on the a-part) and its complex weight space in
/// coordinates of the pair's algebra.
#[derive(Debug, Clone, Serialize)]
pub struct Weight {
    pub values: Vec<f64>,
    /// Leading entries of `values` that belong to the t-part.
    pub n_t: usize,
    pub mult: usize,
    #[serde(skip)]
    pub space: CMatrix,
}

impl Weight {
    /// The ad-eigenvalue at a point of c: imaginary on the t-part, real on
    /// the a-part.
    pub fn eval(&self, coords: &[f64]) -> Complex64 {
        let mut z = Complex64::new(0.0, 0.0);
        for (i, (a, b)) in self.values.iter().zip(coords).enumerate() {
            if i < self.n_t {
                z.im += a * b;
            } else {
                z.re += a * b;
            }
        }
        z
    }

    /// Orthogonal projection of c-coordinates onto the kernel of the weight.
    pub fn project_to_kernel(&self, coords: &mut [f64]) {
        for range in [0..self.n_t, self.n_t..self.values.len()] {
            let w = &self.values[range.clone()];
            let ww: f64 = w.iter().map(|x| x * x).sum();
            if ww == 0.0 {
                continue;
            }
            let dot: f64 = w.iter().zip(&coords[range.clone()]).map(|(a, b)| a * b).sum();
            for (c, a) in coords[range].iter_mut().zip(w) {
                *c -= dot / ww * a;
            }
        }
    }

    pub fn is_zero(&self, eps: f64) -> bool {
        self.values.iter().all(|v| v.abs() < eps)
    }
}

#[derive(Debug, Clone)]
pub struct CartanSubspaceData {
    /// Orthonormal basis: t-part first, then a-part.
    pub basis: Vec<CMatrix>,
    pub n_t: usize,
    pub c: RealSubspace,
    pub t: RealSubspace,
    pub a: RealSubspace,
    pub weights: Vec<Weight>,
}

impl CartanSubspaceData {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn element(&self, coords: &[f64]) -> CMatrix {
        let mut m = CMatrix::zeros(self.c.n, self.c.n);
        for (b, x) in self.basis.iter().zip(coords) {
            m += scale(b, *x);
        }
        m
    }

    pub fn coords(&self, x: &CMatrix) -> Vec<f64> {
        self.basis.iter().map(|b| crate::numkernel::inner(b, x)).collect()
    }
}

/// Build Cartan data from commuting t-part (in k) and a-part (in p) elements.
pub fn cartan_from_parts(
    pair: &SymmetricPairData,
    t_mats: &[CMatrix],
    a_mats: &[CMatrix],
) -> Result<CartanSubspaceData, SymError> {
    let eps = pair.tol.eps_rank;
    let n = pair.n;
    let t = RealSubspace::span(n, t_mats, eps);
    let a = RealSubspace::span(n, a_mats, eps);
    let mut basis = t.matrices();
    let n_t = basis.len();
    basis.extend(a.matrices());
    let c = RealSubspace::span(n, &basis, eps);
    let weights = restricted_weights(pair, &basis, n_t)?;
    Ok(CartanSubspaceData { basis, n_t, c, t, a, weights })
}

/// Greedy theta-stable Cartan subspace: flow a random element to the zero
/// fiber of Phi_H, take its theta-parts, then add random theta-homogeneous
/// elements of the q-centralizer until it is self-centralizing.
pub fn cartan_subspace<R: Rng>(pair: &SymmetricPairData, rng: &mut R) -> Result<CartanSubspaceData, SymError> {
    let eps = pair.tol.eps_rank;
    for attempt in 0..20 {
        let mut t_mats: Vec<CMatrix> = Vec::new();
        let mut a_mats: Vec<CMatrix> = Vec::new();
        if pair.q.dim() > 0 {
            let xi = random_in(&pair.q, rng, 1.0);
            let flow = phi_h_flow(pair, &xi, &HFlowParams::default());
            let xk = pair.qk.project(&flow.endpoint);
            let xp = pair.qp.project(&flow.endpoint);
            if frob(&xk) > 1e-6 {
                t_mats.push(scale(&xk, 1.0 / frob(&xk)));
            }
            if frob(&xp) > 1e-6 {
                a_mats.push(scale(&xp, 1.0 / frob(&xp)));
            }
        }
        let mut ok = false;
        for _ in 0..=pair.q.dim() {
            let mut all = t_mats.clone();
            all.extend(a_mats.iter().cloned());
            let c = RealSubspace::span(pair.n, &all, eps);
            let z = centralizer(&pair.q, &all, eps);
            if z.dim() == c.dim() {
                ok = z.distance(&c) < 1e-6;
                break;
            }
            let zk = z.intersect(&pair.qk, eps)?;
            let zp = z.intersect(&pair.qp, eps)?;
            let tk = RealSubspace::span(pair.n, &t_mats, eps);
            let ap = RealSubspace::span(pair.n, &a_mats, eps);
            let rk = tk.orthocomplement_in(&zk, eps)?;
            let rp = ap.orthocomplement_in(&zp, eps)?;
            let pick_k = match (rk.dim(), rp.dim()) {
                (0, 0) => break,
                (_, 0) => true,
                (0, _) => false,
                _ => rng.random_bool(0.5),
            };
            let src = if pick_k { &rk } else { &rp };
            let y = random_in(src, rng, 1.0);
            let y = scale(&y, 1.0 / frob(&y));
            if pick_k {
                t_mats.push(y);
            } else {
                a_mats.push(y);
            }
        }
        if ok {
            return cartan_from_parts(pair, &t_mats, &a_mats);
        }
        let _ = attempt;
    }
    Err(SymError::ExtensionStalled(20))
}

/// Joint eigensplit of ad(c) on the complexified algebra.
pub fn restricted_weights(
    pair: &SymmetricPairData,
    basis: &[CMatrix],
    n_t: usize,
) -> Result<Vec<Weight>, SymError> {
    let ops: Vec<RMatrix> = basis.iter().map(|b| pair.algebra.restrict(|m| bracket(b, m)).0).collect();
    let d = pair.algebra.dim();
    if ops.is_empty() {
        return Ok(vec![Weight { values: vec![], n_t: 0, mult: d, space: CMatrix::identity(d, d) }]);
    }
    let split = crate::numkernel::simultaneous_eigensplit_coords(&ops, pair.tol.eps_cluster, pair.tol.eps_comm)?;
    let mut out: Vec<Weight> = split
        .into_iter()
        .map(|sp| {
            let values = sp
                .values
                .iter()
                .enumerate()
                .map(|(i, z)| if i < n_t { z.im } else { z.re })
                .collect();
            Weight { values, n_t, mult: sp.basis.ncols(), space: sp.basis }
        })
        .collect();
    out.sort_by(|a, b| {
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
            .find(|o| *o != std::cmp::Ordering::Equal)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(out)
}

fn find_weight(ws: &[Weight], values: &[f64], eps: f64) -> Option<usize> {
    ws.iter().position(|w| w.values.iter().zip(values).all(|(a, b)| (a - b).abs() < eps))
}

fn residual_in(space: &CMatrix, v: &DVector<Complex64>) -> f64 {
    let proj = space * (space.adjoint() * v);
    (v - proj).norm()
}

fn complex_bracket_coords(alg: &RealSubspace, u: &DVector<Complex64>, v: &DVector<Complex64>) -> DVector<Complex64> {
    let part = |w: &DVector<Complex64>, f: fn(&Complex64) -> f64| -> CMatrix {
        let c: Vec<f64> = w.iter().map(f).collect();
        alg.element(&c)
    };
    let (ur, ui) = (part(u, |z| z.re), part(u, |z| z.im));
    let (vr, vi) = (part(v, |z| z.re), part(v, |z| z.im));
    let br = bracket(&ur, &vr) - bracket(&ui, &vi);
    let bi = bracket(&ur, &vi) + bracket(&ui, &vr);
    let cr = alg.coords(&br);
    let ci = alg.coords(&bi);
    DVector::from_fn(cr.len(), |i, _| Complex64::new(cr[i], ci[i]))
}

/// Defects of sigma(g_λ) = g_{-λ} and [g_λ, g_μ] ⊂ g_{λ+μ} over sampled
/// basis vectors; also the completeness count.
#[derive(Debug, Clone, Serialize)]
pub struct WeightChecks {
    pub total_dim: usize,
    pub algebra_dim: usize,
    pub sigma_defect: f64,
    pub grading_defect: f64,
    pub symmetric: bool,
}

pub fn check_weights(pair: &SymmetricPairData, c: &CartanSubspaceData) -> WeightChecks {
    let ws = &c.weights;
    let eps = 1e-6;
    let (smat, _) = pair.algebra.restrict(|m| pair.sigma.apply(m));
    let sc = crate::numkernel::from_real(&smat);
    let mut sigma_defect: f64 = 0.0;
    let mut symmetric = true;
    for w in ws {
        let neg: Vec<f64> = w.values.iter().map(|v| -v).collect();
        match find_weight(ws, &neg, eps) {
            Some(j) => {
                symmetric &= ws[j].mult == w.mult;
                for col in 0..w.space.ncols() {
                    let v = &sc * w.space.column(col);
                    sigma_defect = sigma_defect.max(residual_in(&ws[j].space, &v));
                }
            }
            None => symmetric = false,
        }
    }
    let mut grading_defect: f64 = 0.0;
    for a in ws {
        for b in ws {
            let u = a.space.column(0).into_owned();
            let v = b.space.column(0).into_owned();
            let br = complex_bracket_coords(&pair.algebra, &u, &v);
            let sum: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
            let r = match find_weight(ws, &sum, eps) {
                Some(j) => residual_in(&ws[j].space, &br),
                None => br.norm(),
            };
            grading_defect = grading_defect.max(r);
        }
    }
    WeightChecks {
        total_dim: ws.iter().map(|w| w.mult).sum(),
        algebra_dim: pair.algebra.dim(),
        sigma_defect,
        grading_defect,
        symmetric,
    }
}

/// q = [h, eta0] ⊕ c ⊕ (q ∩ sum of the weight spaces vanishing at eta0).
#[derive(Debug, Clone)]
pub struct SliceDecomposition {
    pub bracket_part: RealSubspace,
    pub cartan: RealSubspace,
    pub third: RealSubspace,
    pub vanishing: Vec<usize>,
}

impl SliceDecomposition {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.bracket_part.dim(), self.cartan.dim(), self.third.dim())
    }
}

pub fn slice_at_semisimple(
    pair: &SymmetricPairData,
    c: &CartanSubspaceData,
    eta0: &CMatrix,
) -> Result<SliceDecomposition, SymError> {
    let eps = pair.tol.eps_rank;
    let coords = c.coords(eta0);
    let bracket_part = pair.h.image(|z| bracket(z, eta0), eps);
    let mut vanishing = Vec::new();
    let mut cols: Vec<CMatrix> = Vec::new();
    for (i, w) in c.weights.iter().enumerate() {
        if !w.is_zero(1e-6) && w.eval(&coords).norm() < pair.tol.eps_weight * (1.0 + frob(eta0)) {
            vanishing.push(i);
            cols.push(w.space.clone());
        }
    }
    let third = if cols.is_empty() {
        RealSubspace::zero(pair.n)
    } else {
        let d = pair.algebra.dim();
        let total: usize = cols.iter().map(|m| m.ncols()).sum();
        let mut all = CMatrix::zeros(d, total);
        let mut j = 0;
        for m in &cols {
            all.view_mut((0, j), (d, m.ncols())).copy_from(m);
            j += m.ncols();
        }
        let cut = real_cut(&all, eps);
        let span = RealSubspace::from_columns(pair.n, &(&pair.algebra.basis * cut), eps);
        span.intersect(&pair.q, eps)?
    };
    Ok(SliceDecomposition { bracket_part, cartan: c.c.clone(), third, vanishing })
}

/// Null cone = nilpotent elements of q; central components exclude membership.
pub fn in_null_cone(pair: &SymmetricPairData, xi: &CMatrix) -> Result<bool, SymError> {
    let sc = 1.0 + frob(xi);
    if frob(&pair.center.project(xi)) > pair.tol.eps_nilzero * sc {
        return Ok(false);
    }
    let jc = jordan_chevalley(pair, xi)?;
    Ok(frob(&jc.semisimple) < pair.tol.eps_nilzero * sc)
}

/// For xi on a non-closed orbit: the semisimple part (a point of the closed
/// orbit in its closure) and the nilpotent part, certified nilpotent and
/// commuting with the semisimple part.
pub fn nonclosed_witness(pair: &SymmetricPairData, xi: &CMatrix) -> Result<(CMatrix, CMatrix), SymError> {
    let jc = jordan_chevalley(pair, xi)?;
    let sc = 1.0 + frob(xi);
    if frob(&jc.nilpotent) < pair.tol.eps_nilzero * sc {
        return Err(SymError::AlreadyClosed);
    }
    let comm = frob(&bracket(&jc.semisimple, &jc.nilpotent));
    if comm > 1e-7 * sc * sc {
        return Err(SymError::IllConditioned(comm));
    }
    Ok((jc.semisimple, jc.nilpotent))
}

/// Random nilpotent in q: a random vector in the positive eigenspaces of
/// ad(h0) on q for a random hyperbolic h0 ∈ h ∩ p.
pub fn random_nilpotent<R: Rng>(pair: &SymmetricPairData, rng: &mut R) -> Option<CMatrix> {
    if pair.hp.dim() == 0 || pair.q.dim() == 0 {
        return None;
    }
    let h0 = random_in(&pair.hp, rng, 1.0);
    let (m, _) = pair.q.restrict(|x| bracket(&h0, x));
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > 1e-3 * top.max(1e-300)).collect();
    if cols.is_empty() || top <= 1e-9 {
        return None;
    }
    let mut coords = DVector::<f64>::zeros(pair.q.dim());
    for &j in &cols {
        let w: f64 = rng.sample(rand_distr::StandardNormal);
        coords += eig.eigenvectors.column(j) * w;
    }
    let x = pair.q.element(coords.as_slice());
    let nrm = frob(&x);
    (nrm > 0.0).then(|| scale(&x, 1.0 / nrm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SampleKind {
    Semisimple,
    Nilpotent,
    Mixed,
}

/// Random q-element of a chosen kind: generic semisimple, nilpotent, or
/// semisimple-plus-nilpotent built inside the centralizer pair of a
/// non-regular element of a Cartan subspace.
pub fn random_slice_point<R: Rng>(
    pair: &SymmetricPairData,
    c: &CartanSubspaceData,
    kind: SampleKind,
    rng: &mut R,
) -> Option<CMatrix> {
    match kind {
        SampleKind::Semisimple => {
            if pair.q.dim() == 0 {
                return None;
            }
            let x = random_in(&pair.q, rng, 1.0);
            Some(scale(&x, 1.0 / frob(&x)))
        }
        SampleKind::Nilpotent => random_nilpotent(pair, rng),
        SampleKind::Mixed => {
            let nonzero: Vec<&Weight> = c.weights.iter().filter(|w| !w.is_zero(1e-6)).collect();
            if nonzero.is_empty() || c.dim() < 1 {
                return None;
            }
            for _ in 0..10 {
                let w = nonzero[rng.random_range(0..nonzero.len())];
                let mut v: Vec<f64> = (0..c.dim()).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
                w.project_to_kernel(&mut v);
                let s = c.element(&v);
                if frob(&s) < 1e-3 {
                    continue;
                }
                let s = scale(&s, 1.0 / frob(&s));
                let z = centralizer(&pair.algebra, std::slice::from_ref(&s), pair.tol.eps_rank);
                let Ok(sub) = SymmetricPairData::new(z, pair.sigma.clone(), pair.tol) else { continue };
                if let Some(nil) = random_nilpotent(&sub, rng) {
                    return Some(s + nil);
                }
            }
            None
        }
    }
}

/// Complex dimension of the weight-space sum as an orthonormal check.
pub fn weight_space_rank(ws: &[Weight]) -> usize {
    let d: usize = ws.first().map_or(0, |w| w.space.nrows());
    let total: usize = ws.iter().map(|w| w.mult).sum();
    let mut all = CMatrix::zeros(d, total);
    let mut j = 0;
    for w in ws {
        all.view_mut((0, j), (d, w.mult)).copy_from(&w.space);
        j += w.mult;
    }
    crate::numkernel::complex_orth(&all, 1e-8).ncols()
}

#[allow(dead_code)]
fn orth(m: &RMatrix) -> RMatrix {
    orth_columns(m, 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::preset;
    use crate::numkernel::{c, identity, matexp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sl2r_theta() -> SymmetricPairData {
        // sl(2,R) with sigma = theta: h = so(2), q = symmetric traceless.
        let tol = Tolerances::default();
        let g = RealSubspace::span(
            2,
            &[
                CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]),
                CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
                CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
            ],
            1e-12,
        );
        let sigma = InvolutionSpec::new(identity(2), false, true).unwrap();
        SymmetricPairData::new(g, sigma, tol).unwrap()
    }

    fn sl2r_diag() -> SymmetricPairData {
        let tol = Tolerances::default();
        let pair = sl2r_theta();
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        SymmetricPairData::new(pair.algebra, InvolutionSpec::inner(a).unwrap(), tol).unwrap()
    }

    #[test]
    fn sl2_pair_dims_and_brackets() {
        let p = sl2r_theta();
        assert_eq!((p.h.dim(), p.q.dim()), (1, 2));
        assert!(p.bracket_defect() < 1e-12);
    }

    #[test]
    fn semisimple_element_has_zero_nilpotent_part() {
        let p = sl2r_theta();
        let x = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        let jc = jordan_chevalley(&p, &x).unwrap();
        assert!(frob(&jc.nilpotent) < 1e-12);
        assert!(is_closed_orbit(&p, &x).unwrap());
    }

    #[test]
    fn nilpotent_element_is_not_closed() {
        let p = sl2r_diag();
        let e = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let jc = jordan_chevalley(&p, &e).unwrap();
        assert!(frob(&jc.semisimple) < 1e-12);
        assert!(!is_closed_orbit(&p, &e).unwrap());
        assert!(in_null_cone(&p, &e).unwrap());
        assert!(!closed_by_flow(&p, &e, &HFlowParams::default()).unwrap());
        let (s, n) = nonclosed_witness(&p, &e).unwrap();
        assert!(frob(&s) < 1e-12 && frob(&(n - e)) < 1e-12);
    }

    #[test]
    fn zero_is_closed_and_in_null_cone() {
        let p = sl2r_diag();
        let z = CMatrix::zeros(2, 2);
        assert!(is_closed_orbit(&p, &z).unwrap());
        assert!(in_null_cone(&p, &z).unwrap());
    }

    #[test]
    fn semisimple_witness_is_already_closed() {
        let p = sl2r_diag();
        let x = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(nonclosed_witness(&p, &x), Err(SymError::AlreadyClosed)));
        assert!(!in_null_cone(&p, &x).unwrap());
    }

    #[test]
    fn jordan_synthesis_recovered() {
        // X = S + N in sl(4,C) pushed into q of the (sl4C, sigma2) pair of a preset.
        let s = preset("sl4c_su22_so4c", Tolerances::default()).unwrap();
        let pair = SymmetricPairData::from_scenario(&s, Which::Sigma2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cs = cartan_subspace(&pair, &mut rng).unwrap();
        let mut found = 0;
        for _ in 0..20 {
            let Some(x) = random_slice_point(&pair, &cs, SampleKind::Mixed, &mut rng) else { continue };
            let jc = jordan_chevalley(&pair, &x).unwrap();
            assert!(frob(&bracket(&jc.semisimple, &jc.nilpotent)) < 1e-9);
            assert!(pair.q.residual(&jc.semisimple) < 1e-9);
            assert!(frob(&jc.nilpotent) > 1e-3);
            let nn = jc.nilpotent.pow(4);
            assert!(frob(&nn) < 1e-8 * frob(&jc.nilpotent).powi(4).max(1.0));
            found += 1;
        }
        assert!(found > 5);
    }

    #[test]
    fn phi_h_vanishes_on_k_and_p_and_cartan() {
        let s = preset("sl4c_su22_kc", Tolerances::default()).unwrap();
        let pair = SymmetricPairData::from_scenario(&s, Which::Sigma2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xk = random_in(&pair.qk, &mut rng, 1.0);
        let xp = random_in(&pair.qp, &mut rng, 1.0);
        assert!(frob(&phi_h(&pair, &xk)) < 1e-12);
        assert!(frob(&phi_h(&pair, &xp)) < 1e-12);
        let cs = cartan_subspace(&pair, &mut rng).unwrap();
        let v: Vec<f64> = (0..cs.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(frob(&phi_h(&pair, &cs.element(&v))) < 1e-9);
    }

    #[test]
    fn phi_h_gradient_identity() {
        let s = preset("sl4c_su22_so4c", Tolerances::default()).unwrap();
        let pair = SymmetricPairData::from_scenario(&s, Which::Sigma2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let xi = random_in(&pair.q, &mut rng, 1.0);
            let eta = random_in(&pair.hp, &mut rng, 1.0);
            let zeta = random_in(&pair.h, &mut rng, 1.0);
            let f = |t: f64| {
                let g = matexp(&scale(&zeta, t));
                let gi = matexp(&scale(&zeta, -t));
                let x = &g * &xi * &gi;
                crate::numkernel::inner(&phi_h(&pair, &x), &eta)
            };
            let h = 1e-5;
            let fd = (f(h) - f(-h)) / (2.0 * h);
            // d/dt <[x_k, x_p], eta> along Ad(exp(t zeta)) equals
            // <[zeta,xi]_k, xi_p> + <xi_k, [zeta,xi]_p> paired with eta.
            let d = bracket(&zeta, &xi);
            let exact = crate::numkernel::inner(
                &(bracket(&pair.qk.project(&d), &pair.qp.project(&xi))
                    + bracket(&pair.qk.project(&xi), &pair.qp.project(&d))),
                &eta,
            );
            assert!((fd - exact).abs() < 1e-6, "{fd} vs {exact}");
        }
    }

    #[test]
    fn sl2_pair_weights() {
        let p = sl2r_diag();
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        // diag(1,-1) lies in h for this pair; use the theta pair where it is in q.
        let _ = a.clone();
        let q = sl2r_theta();
        let cs = cartan_from_parts(&q, &[], &[scale(&a, 1.0 / 2f64.sqrt())]).unwrap();
        let vals: Vec<f64> = cs.weights.iter().map(|w| w.values[0] * 2f64.sqrt()).collect();
        assert_eq!(vals.len(), 3);
        for (v, e) in vals.iter().zip([-2.0, 0.0, 2.0]) {
            assert!((v - e).abs() < 1e-9);
        }
        let chk = check_weights(&q, &cs);
        assert_eq!(chk.total_dim, 3);
        assert!(chk.symmetric && chk.sigma_defect < 1e-9 && chk.grading_defect < 1e-9);
        let _ = p;
    }

    #[test]
    fn cartan_subspace_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = preset("sl2c_sl2r_sl2r", Tolerances::default()).unwrap();
        let pair = SymmetricPairData::from_scenario(&s, Which::Sigma1).unwrap();
        for _ in 0..5 {
            let cs = cartan_subspace(&pair, &mut rng).unwrap();
            assert_eq!(cs.dim(), 1);
        }
        let q = sl2r_theta();
        let cs = cartan_subspace(&q, &mut rng).unwrap();
        assert_eq!(cs.dim(), 1);
        let chk = check_weights(&q, &cs);
        assert_eq!(chk.total_dim, 3);
    }

    #[test]
    fn abelian_q_is_its_own_cartan() {
        // so(2) ⊕ R-line: q = diagonal real traceless in sl(2,R) with sigma = Ad(diag(1,-1)) restricted.
        let tol = Tolerances::default();
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        let g = RealSubspace::span(2, &[a.clone()], 1e-12);
        let sigma = InvolutionSpec::new(identity(2), false, true).unwrap();
        let pair = SymmetricPairData::new(g, sigma, tol).unwrap();
        assert_eq!(pair.q.dim(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cs = cartan_subspace(&pair, &mut rng).unwrap();
        assert!(cs.c.distance(&pair.q) < 1e-10);
    }

    #[test]
    fn slice_lemma_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for name in ["sl2c_sl2r_so2c", "sl4c_su22_kc", "sl4c_su22_so4c"] {
            let s = preset(name, Tolerances::default()).unwrap();
            let pair = SymmetricPairData::from_scenario(&s, Which::Sigma2).unwrap();
            let cs = cartan_subspace(&pair, &mut rng).unwrap();
            let zero = CMatrix::zeros(s.n(), s.n());
            let d0 = slice_at_semisimple(&pair, &cs, &zero).unwrap();
            assert_eq!(d0.bracket_part.dim(), 0);
            assert_eq!(d0.cartan.dim() + d0.third.dim(), pair.q.dim());
            for _ in 0..10 {
                let v: Vec<f64> = (0..cs.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let d = slice_at_semisimple(&pair, &cs, &cs.element(&v)).unwrap();
                let (a, b, c3) = d.dims();
                assert_eq!(a + b + c3, pair.q.dim(), "{name}");
                assert_eq!(c3, 0);
            }
        }
    }

    #[test]
    fn weights_complete_and_symmetric_on_presets() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for name in ["sl2c_sl2r_so2c", "sl4c_su22_kc", "sl4c_su22_so4c"] {
            let s = preset(name, Tolerances::default()).unwrap();
            let pair = SymmetricPairData::from_scenario(&s, Which::Sigma1).unwrap();
            let cs = cartan_subspace(&pair, &mut rng).unwrap();
            let chk = check_weights(&pair, &cs);
            assert_eq!(chk.total_dim, chk.algebra_dim, "{name}");
            assert_eq!(weight_space_rank(&cs.weights), chk.algebra_dim);
            assert!(chk.symmetric, "{name}");
            assert!(chk.sigma_defect < 1e-7 && chk.grading_defect < 1e-7, "{name} {chk:?}");
            let zero = cs.weights.iter().find(|w| w.is_zero(1e-6)).unwrap();
            assert!(zero.mult >= cs.dim());
        }
    }

    #[test]
    fn flow_and_jordan_agree_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let s = preset("sl4c_su22_kc", Tolerances::default()).unwrap();
        let pair = SymmetricPairData::from_scenario(&s, Which::Sigma2).unwrap();
        let cs = cartan_subspace(&pair, &mut rng).unwrap();
        let mut checked = 0;
        for i in 0..30 {
            let kind = [SampleKind::Semisimple, SampleKind::Nilpotent, SampleKind::Mixed][i % 3];
            let Some(x) = random_slice_point(&pair, &cs, kind, &mut rng) else { continue };
            let (ra, rb) = (is_closed_orbit(&pair, &x), closed_by_flow(&pair, &x, &HFlowParams::default()));
            let (Ok(a), Ok(b)) = (ra, rb) else { continue };
            assert_eq!(a, b, "{kind:?}");
            assert_eq!(a, kind == SampleKind::Semisimple);
            checked += 1;
        }
        assert!(checked >= 25);
    }
}
