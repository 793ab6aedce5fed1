//! Fundamental and standard Cartan subsets, reduction to the torus T0,
//! extended weights, normal forms, the finite class table and Weyl groups.

use crate::gradmap::phi;
use crate::liegroup::{centralizer, random_in, GroupPoint, LieError, Scenario};
use crate::numkernel::{
    bracket, frob, matexp, real_cut, scale, simultaneous_eigensplit_coords, vec_of, CMatrix,
    NumError, RMatrix, RealSubspace,
};
use crate::symmpair::SymError;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum CartanError {
    #[error("no maximal abelian extension found after {0} attempts")]
    ExtensionStalled(usize),
    #[error("torus reduction failed after {restarts} restarts (residual {residual:e})")]
    NotReduced { restarts: usize, residual: f64 },
    #[error("point is not in the zero fiber (|Phi| = {0:e})")]
    NotInZeroFiber(f64),
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
    #[error("pattern lattice too coarse: refinement found a new pattern")]
    LatticeTooCoarse,
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error(transparent)]
    Num(#[from] NumError),
}

fn combo(basis: &[CMatrix], coords: &[f64], n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for (b, c) in basis.iter().zip(coords) {
        m += scale(b, *c);
    }
    m
}

fn coords_in(basis: &[CMatrix], x: &CMatrix) -> Vec<f64> {
    basis.iter().map(|b| crate::numkernel::inner(b, x)).collect()
}

/// Maximal abelian subspace of `domain` containing `start`, built by adding
/// random elements of the centralizer. Returns an orthonormal basis that
/// begins with an orthonormal basis of span(start).
pub fn greedy_abelian<R: Rng>(
    domain: &RealSubspace,
    start: &[CMatrix],
    rng: &mut R,
    eps: f64,
) -> Vec<CMatrix> {
    let n = domain.n;
    let mut cur: Vec<CMatrix> = RealSubspace::span(n, start, eps).matrices();
    loop {
        let z = centralizer(domain, &cur, eps);
        let here = RealSubspace::span(n, &cur, eps);
        let rest = match here.orthocomplement_in(&z, eps) {
            Ok(r) => r,
            Err(_) => break,
        };
        if rest.dim() == 0 {
            break;
        }
        let y = random_in(&rest, rng, 1.0);
        cur.push(scale(&y, 1.0 / frob(&y)));
        cur = RealSubspace::span(n, &cur, eps).matrices();
    }
    cur
}

/// t0 ⊂ k^{-σ2} ∩ k^{-σ1} maximal abelian and a0 maximal abelian in its
/// centralizer inside p^{-σ2} ∩ p^{-σ1}.
#[derive(Debug, Clone)]
pub struct FundamentalCartanData {
    pub t_basis: Vec<CMatrix>,
    pub a_basis: Vec<CMatrix>,
    pub t0: RealSubspace,
    pub a0: RealSubspace,
    pub dk: RealSubspace,
    pub dp: RealSubspace,
}

impl FundamentalCartanData {
    pub fn dim_t(&self) -> usize {
        self.t_basis.len()
    }

    pub fn dim_a(&self) -> usize {
        self.a_basis.len()
    }

    pub fn c0_basis(&self) -> Vec<CMatrix> {
        let mut b = self.t_basis.clone();
        b.extend(self.a_basis.iter().cloned());
        b
    }

    pub fn t_element(&self, coords: &[f64]) -> CMatrix {
        combo(&self.t_basis, coords, self.t0.n)
    }

    pub fn t_coords(&self, x: &CMatrix) -> Vec<f64> {
        coords_in(&self.t_basis, x)
    }

    /// Centralizer-rank certificates of both maximality conditions.
    pub fn certify(&self, s: &Scenario) -> Result<bool, CartanError> {
        let eps = s.tol.eps_rank;
        let zt = centralizer(&self.dk, &self.t_basis, eps);
        let t_max = zt.dim() == self.dim_t();
        let both = s.g2m.intersect(&s.g1m, eps)?;
        let zc = centralizer(&both, &self.c0_basis(), eps);
        Ok(t_max && zc.dim() == self.dim_t() + self.dim_a())
    }
}

pub fn fundamental_cartan<R: Rng>(s: &Scenario, rng: &mut R) -> Result<FundamentalCartanData, CartanError> {
    let eps = s.tol.eps_rank;
    let n = s.n();
    let dk = s.k2m.intersect(&s.k1m, eps)?;
    let dp = s.p2m.intersect(&s.p1m, eps)?;
    let build = |t: Vec<CMatrix>, a: Vec<CMatrix>| FundamentalCartanData {
        t0: RealSubspace::span(n, &t, eps),
        a0: RealSubspace::span(n, &a, eps),
        t_basis: t,
        a_basis: a,
        dk: dk.clone(),
        dp: dp.clone(),
    };
    if let Some((t, a)) = &s.c0_hint {
        let inside = t.iter().all(|m| dk.residual(m) < 1e-10) && a.iter().all(|m| dp.residual(m) < 1e-10);
        if inside {
            let f = build(
                RealSubspace::span(n, t, eps).matrices(),
                RealSubspace::span(n, a, eps).matrices(),
            );
            if f.certify(s)? {
                return Ok(f);
            }
        }
    }
    for _ in 0..20 {
        let t = greedy_abelian(&dk, &[], rng, eps);
        let zp = centralizer(&dp, &t, eps);
        let a = greedy_abelian(&zp, &[], rng, eps);
        let f = build(t, a);
        if f.certify(s)? {
            return Ok(f);
        }
    }
    Err(CartanError::ExtensionStalled(20))
}

/// Solution of k1·x·k2⁻¹ = n·exp(η), η in the span of an abelian basis.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub k1: CMatrix,
    pub k2: CMatrix,
    pub eta: Vec<f64>,
    pub residual: f64,
    pub restarts: usize,
}

struct LmProblem<'a> {
    x: &'a CMatrix,
    left: &'a [CMatrix],
    right: &'a [CMatrix],
    n: &'a CMatrix,
    cb: &'a [CMatrix],
}

impl LmProblem<'_> {
    fn residual(&self, a: &CMatrix, b: &CMatrix, eta: &[f64]) -> (CMatrix, CMatrix, CMatrix) {
        let y = a * self.x * b.adjoint();
        let e = self.n * matexp(&combo(self.cb, eta, self.x.nrows()));
        let r = &y - &e;
        (y, e, r)
    }

    /// Levenberg–Marquardt on |A x B* − n exp(η)|² with multiplicative
    /// updates A ← exp(δa)A, B ← exp(δb)B.
    fn solve(&self, mut a: CMatrix, mut b: CMatrix, mut eta: Vec<f64>, iters: usize) -> (CMatrix, CMatrix, Vec<f64>, f64) {
        let nl = self.left.len();
        let nr = self.right.len();
        let nc = self.cb.len();
        let m = nl + nr + nc;
        let dim = self.x.nrows();
        let (mut y, mut e, mut r) = self.residual(&a, &b, &eta);
        let mut f = frob(&r).powi(2);
        let mut mu = 1e-3;
        for _ in 0..iters {
            if f < 1e-28 {
                break;
            }
            let d = 2 * dim * dim;
            let mut jac = RMatrix::zeros(d, m);
            for (j, l) in self.left.iter().enumerate() {
                jac.set_column(j, &vec_of(&(l * &y)));
            }
            for (j, q) in self.right.iter().enumerate() {
                jac.set_column(nl + j, &vec_of(&(-(&y * q))));
            }
            for (j, c) in self.cb.iter().enumerate() {
                jac.set_column(nl + nr + j, &vec_of(&(-(&e * c))));
            }
            let rv = vec_of(&r);
            let jt = jac.transpose();
            let h = &jt * &jac;
            let g = &jt * &rv;
            let mut improved = false;
            for _ in 0..30 {
                let mut hm = h.clone();
                let damp = mu * (1.0 + h.diagonal().max());
                for i in 0..m {
                    hm[(i, i)] += damp;
                }
                let Some(ch) = hm.cholesky() else {
                    mu *= 10.0;
                    continue;
                };
                let delta = -ch.solve(&g);
                let da = combo(self.left, &delta.as_slice()[..nl], dim);
                let db = combo(self.right, &delta.as_slice()[nl..nl + nr], dim);
                let a2 = matexp(&da) * &a;
                let b2 = matexp(&db) * &b;
                let eta2: Vec<f64> = eta.iter().zip(&delta.as_slice()[nl + nr..]).map(|(x, y)| x + y).collect();
                let (y2, e2, r2) = self.residual(&a2, &b2, &eta2);
                let f2 = frob(&r2).powi(2);
                if f2 < f {
                    a = a2;
                    b = b2;
                    eta = eta2;
                    y = y2;
                    e = e2;
                    r = r2;
                    f = f2;
                    mu = (mu / 3.0).max(1e-15);
                    improved = true;
                    break;
                }
                mu *= 4.0;
                if mu > 1e12 {
                    break;
                }
            }
            if !improved {
                break;
            }
        }
        (a, b, eta, f.sqrt())
    }
}

/// Find (k1, k2) in the identity components of K1, K2 (spanned by `left`,
/// `right`) and η with k1·x·k2⁻¹ = n·exp(Σ η_j cb_j), by LM with restarts.
#[allow(clippy::too_many_arguments)]
pub fn reduce_to_set<R: Rng>(
    x: &CMatrix,
    left: &RealSubspace,
    right: &RealSubspace,
    n: &CMatrix,
    cb: &[CMatrix],
    start: Option<&[f64]>,
    rng: &mut R,
    max_restarts: usize,
    tol: f64,
) -> Result<Reduction, CartanError> {
    let lm = left.matrices();
    let rm = right.matrices();
    let prob = LmProblem { x, left: &lm, right: &rm, n, cb };
    let dim = x.nrows();
    let id = CMatrix::identity(dim, dim);
    let mut best: Option<(CMatrix, CMatrix, Vec<f64>, f64)> = None;
    for restart in 0..=max_restarts {
        let (a0, b0, e0) = if restart == 0 {
            (id.clone(), id.clone(), start.map_or_else(|| vec![0.0; cb.len()], |s| s.to_vec()))
        } else {
            let a = matexp(&random_in(left, rng, 2.0));
            let b = matexp(&random_in(right, rng, 2.0));
            let e: Vec<f64> = (0..cb.len()).map(|_| rng.random_range(-PI..PI)).collect();
            (a, b, e)
        };
        let sol = prob.solve(a0, b0, e0, 400);
        let done = sol.3 < tol;
        if best.as_ref().is_none_or(|b| sol.3 < b.3) {
            best = Some(sol);
        }
        if done {
            let (k1, k2, eta, residual) = best.unwrap();
            return Ok(Reduction { k1, k2, eta, residual, restarts: restart });
        }
    }
    let residual = best.map_or(f64::INFINITY, |b| b.3);
    Err(CartanError::NotReduced { restarts: max_restarts, residual })
}

/// k1·k·k2⁻¹ = exp(η) with η ∈ t0.
pub fn reduce_to_torus<R: Rng>(
    s: &Scenario,
    f: &FundamentalCartanData,
    k: &CMatrix,
    rng: &mut R,
) -> Result<Reduction, CartanError> {
    let id = CMatrix::identity(s.n(), s.n());
    reduce_to_set(k, &s.k1, &s.k2, &id, &f.t_basis, None, rng, 40, 1e-8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Part {
    K,
    P,
}

/// Joint eigenspace of ad(t0) and τ = σ2σ1 inside k^C or p^C.
#[derive(Debug, Clone, Serialize)]
pub struct ExtendedWeight {
    /// ad(η) acts by i·Σ lambda_j η_j.
    pub lambda: Vec<f64>,
    pub a: [f64; 2],
    pub part: Part,
    pub mult: usize,
    #[serde(skip)]
    pub space: CMatrix,
}

impl ExtendedWeight {
    pub fn a(&self) -> Complex64 {
        Complex64::new(self.a[0], self.a[1])
    }

    pub fn eval(&self, eta: &[f64]) -> f64 {
        self.lambda.iter().zip(eta).map(|(a, b)| a * b).sum()
    }

    /// Eigenvalue of τ_k, k = exp(η), on this space.
    pub fn tau_k(&self, eta: &[f64]) -> Complex64 {
        self.a() * Complex64::from_polar(1.0, 2.0 * self.eval(eta))
    }

    pub fn selected(&self, eta: &[f64], tol: f64) -> bool {
        (self.tau_k(eta) - 1.0).norm() < tol
    }

    pub fn is_zero(&self) -> bool {
        self.lambda.iter().all(|v| v.abs() < 1e-8)
    }
}

pub fn extended_weights(s: &Scenario, f: &FundamentalCartanData) -> Result<Vec<ExtendedWeight>, CartanError> {
    let n = s.n();
    let id = CMatrix::identity(n, n);
    let mut out = Vec::new();
    for (part, dom) in [(Part::K, &s.k), (Part::P, &s.p)] {
        if dom.dim() == 0 {
            continue;
        }
        let mut ops: Vec<RMatrix> = f.t_basis.iter().map(|t| dom.restrict(|m| bracket(t, m)).0).collect();
        ops.push(dom.restrict(|m| s.tau_x(&id, &id, m)).0);
        let split = simultaneous_eigensplit_coords(&ops, s.tol.eps_cluster, s.tol.eps_comm)?;
        let d = f.dim_t();
        for sp in split {
            out.push(ExtendedWeight {
                lambda: sp.values[..d].iter().map(|z| z.im).collect(),
                a: [sp.values[d].re, sp.values[d].im],
                part,
                mult: sp.basis.ncols(),
                space: sp.basis,
            });
        }
    }
    Ok(out)
}

/// kk = k^{σ2} ∩ Ad(k⁻¹)k^{σ1}, pp = p^{-σ2} ∩ Ad(k⁻¹)p^{-σ1} at k = exp(η),
/// by the extended-weight selection and by direct intersection.
#[derive(Debug, Clone)]
pub struct Intersections {
    pub kk: RealSubspace,
    pub pp: RealSubspace,
    pub kk_direct: RealSubspace,
    pub pp_direct: RealSubspace,
    pub distance: f64,
}

pub fn direct_intersections(s: &Scenario, k: &CMatrix) -> Result<(RealSubspace, RealSubspace), CartanError> {
    direct_intersections_eps(s, k, s.tol.eps_rank)
}

pub fn direct_intersections_eps(s: &Scenario, k: &CMatrix, eps: f64) -> Result<(RealSubspace, RealSubspace), CartanError> {
    let kinv = k.adjoint();
    let k1 = s.k1.image(|m| &kinv * m * k, eps);
    let p1m = s.p1m.image(|m| &kinv * m * k, eps);
    Ok((s.k2.intersect(&k1, eps)?, s.p2m.intersect(&p1m, eps)?))
}

pub fn weight_intersections(
    s: &Scenario,
    ew: &[ExtendedWeight],
    eta: &[f64],
) -> Result<(RealSubspace, RealSubspace), CartanError> {
    let eps = s.tol.eps_rank;
    let n = s.n();
    let tol = 1e-8;
    let mut res = Vec::new();
    for (part, dom) in [(Part::K, &s.k), (Part::P, &s.p)] {
        let cols: Vec<&CMatrix> = ew.iter().filter(|w| w.part == part && w.selected(eta, tol)).map(|w| &w.space).collect();
        let fixed = if cols.is_empty() {
            RealSubspace::zero(n)
        } else {
            let d = dom.dim();
            let total: usize = cols.iter().map(|m| m.ncols()).sum();
            let mut all = CMatrix::zeros(d, total);
            let mut j = 0;
            for m in cols {
                all.view_mut((0, j), (d, m.ncols())).copy_from(m);
                j += m.ncols();
            }
            let cut = real_cut(&all, eps);
            RealSubspace::from_columns(n, &(&dom.basis * cut), eps)
        };
        let sign = if part == Part::K { 1.0 } else { -1.0 };
        let proj = fixed.image(|m| scale(&(m + scale(&s.sigma2.apply(m), sign)), 0.5), eps);
        res.push(proj);
    }
    let pp = res.pop().unwrap();
    let kk = res.pop().unwrap();
    Ok((kk, pp))
}

pub fn intersection_algebras(
    s: &Scenario,
    f: &FundamentalCartanData,
    ew: &[ExtendedWeight],
    eta: &[f64],
) -> Result<Intersections, CartanError> {
    let k = matexp(&f.t_element(eta));
    let (kk_direct, pp_direct) = direct_intersections(s, &k)?;
    let (kk, pp) = weight_intersections(s, ew, eta)?;
    if kk.dim() != kk_direct.dim() || pp.dim() != pp_direct.dim() {
        return Err(CartanError::InternalInconsistency(format!(
            "intersection dims: weights ({}, {}) vs direct ({}, {})",
            kk.dim(),
            pp.dim(),
            kk_direct.dim(),
            pp_direct.dim()
        )));
    }
    let distance = kk.distance(&kk_direct).max(pp.distance(&pp_direct));
    if distance > 1e-8 {
        return Err(CartanError::InternalInconsistency(format!("intersection distance {distance:e}")));
    }
    Ok(Intersections { kk, pp, kk_direct, pp_direct, distance })
}

/// One entry of the class invariant: squared norms of the t- and a-parts of
/// a weight of ad(c), the τ_n eigenvalue when the t-part vanishes, and the
/// multiplicity.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct InvariantEntry {
    pub t_norm2: f64,
    pub a_norm2: f64,
    pub tau: Option<[f64; 2]>,
    pub mult: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ClassInvariants {
    pub dim_t: usize,
    pub dim_a: usize,
    pub entries: Vec<InvariantEntry>,
}

const INV_TOL: f64 = 1e-6;

fn rnd(x: f64) -> i64 {
    (x / INV_TOL).round() as i64
}

impl InvariantEntry {
    fn key(&self) -> (i64, i64, i64, i64) {
        let (a, b) = self.tau.map_or((i64::MIN, i64::MIN), |t| (rnd(t[0]), rnd(t[1])));
        (rnd(self.t_norm2), rnd(self.a_norm2), a, b)
    }

    fn close(&self, o: &Self) -> bool {
        let tau_close = match (self.tau, o.tau) {
            (None, None) => true,
            (Some(a), Some(b)) => (a[0] - b[0]).abs() < 1e-5 && (a[1] - b[1]).abs() < 1e-5,
            _ => false,
        };
        tau_close && (self.t_norm2 - o.t_norm2).abs() < 1e-5 && (self.a_norm2 - o.a_norm2).abs() < 1e-5
    }
}

impl ClassInvariants {
    pub fn matches(&self, o: &Self) -> bool {
        self.dim_t == o.dim_t
            && self.dim_a == o.dim_a
            && self.entries.len() == o.entries.len()
            && self.entries.iter().zip(&o.entries).all(|(a, b)| a.mult == b.mult && a.close(b))
    }

    fn sort_key(&self) -> (std::cmp::Reverse<usize>, usize, Vec<((i64, i64, i64, i64), usize)>) {
        (
            std::cmp::Reverse(self.dim_t),
            self.dim_a,
            self.entries.iter().map(|e| (e.key(), e.mult)).collect(),
        )
    }
}

/// Joint spectrum of (ad c, τ_n) on g, reduced to conjugation invariants.
pub fn class_invariants(
    s: &Scenario,
    n: &CMatrix,
    basis: &[CMatrix],
    n_t: usize,
) -> Result<ClassInvariants, CartanError> {
    let g = s.algebra();
    let mut ops: Vec<RMatrix> = basis.iter().map(|b| g.restrict(|m| bracket(b, m)).0).collect();
    ops.push(s.tau_matrix(n));
    // Normal forms near walls commute only to the accuracy of the reduction.
    let split = simultaneous_eigensplit_coords(&ops, s.tol.eps_cluster, s.tol.eps_comm.max(1e-6))?;
    let d = basis.len();
    let mut entries: Vec<InvariantEntry> = Vec::new();
    for sp in split {
        let t_norm2: f64 = sp.values[..n_t].iter().map(|z| z.im * z.im).sum();
        let a_norm2: f64 = sp.values[n_t..d].iter().map(|z| z.re * z.re).sum();
        let tau = if t_norm2 < 1e-10 { Some([sp.values[d].re, sp.values[d].im]) } else { None };
        let e = InvariantEntry { t_norm2, a_norm2, tau, mult: sp.basis.ncols() };
        match entries.iter_mut().find(|x| x.close(&e)) {
            Some(x) => x.mult += e.mult,
            None => entries.push(e),
        }
    }
    entries.sort_by(|a, b| a.key().cmp(&b.key()).then(a.mult.cmp(&b.mult)));
    Ok(ClassInvariants { dim_t: n_t, dim_a: d - n_t, entries })
}

/// C = n·exp(t ⊕ a) with n = exp(η1) ∈ T0.
#[derive(Debug, Clone)]
pub struct StandardCartanSubset {
    pub class_id: usize,
    pub n: CMatrix,
    /// η1 in t0 coordinates.
    pub eta1: Vec<f64>,
    /// Orthonormal basis of c: t-part first.
    pub basis: Vec<CMatrix>,
    pub n_t: usize,
    pub t: RealSubspace,
    pub a: RealSubspace,
    pub invariants: ClassInvariants,
}

impl StandardCartanSubset {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn c(&self) -> RealSubspace {
        RealSubspace::span(self.n.nrows(), &self.basis, 1e-12)
    }

    pub fn element(&self, coords: &[f64]) -> CMatrix {
        combo(&self.basis, coords, self.n.nrows())
    }

    pub fn point(&self, coords: &[f64]) -> CMatrix {
        &self.n * matexp(&self.element(coords))
    }
}

/// Standard Cartan subset through exp(η), η ∈ t0, given a maximal abelian
/// a ⊂ pp(η) containing a0: t = Z_{t0}(a), n = exp(η1) with η1 ⊥ t.
fn standard_from(
    s: &Scenario,
    f: &FundamentalCartanData,
    eta: &[f64],
    a_basis: Vec<CMatrix>,
) -> Result<(StandardCartanSubset, Vec<f64>), CartanError> {
    let eps = s.tol.eps_rank;
    let n = s.n();
    let t = centralizer(&f.t0, &a_basis, eps);
    let eta_m = f.t_element(eta);
    let eta2 = t.project(&eta_m);
    let eta1 = &eta_m - &eta2;
    let nmat = matexp(&eta1);
    let mut basis = t.matrices();
    let n_t = basis.len();
    basis.extend(a_basis.iter().cloned());
    let invariants = class_invariants(s, &nmat, &basis, n_t)?;
    let a = RealSubspace::span(n, &a_basis, eps);
    let eta2_c = coords_in(&basis, &eta2);
    Ok((
        StandardCartanSubset {
            class_id: usize::MAX,
            n: nmat,
            eta1: f.t_coords(&eta1),
            basis,
            n_t,
            t,
            a,
            invariants,
        },
        eta2_c,
    ))
}

/// Standard Cartan subset through the torus point exp(η).
pub fn standard_at<R: Rng>(
    s: &Scenario,
    f: &FundamentalCartanData,
    eta: &[f64],
    rng: &mut R,
) -> Result<StandardCartanSubset, CartanError> {
    let k = matexp(&f.t_element(eta));
    let (_, pp) = direct_intersections(s, &k)?;
    let a = greedy_abelian(&pp, &f.a_basis, rng, s.tol.eps_rank);
    Ok(standard_from(s, f, eta, a)?.0)
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub k1: CMatrix,
    pub k2: CMatrix,
    pub cartan: StandardCartanSubset,
    /// η' in coordinates of `cartan.basis`.
    pub eta: Vec<f64>,
    pub residual: f64,
    pub restarts: usize,
}

/// Find κ ∈ exp(kk) with Ad(κ)ξ ∈ a by LM on [Ad(κ)ξ, ρ] = 0 for a regular ρ ∈ a.
fn conjugate_into<R: Rng>(
    kk: &RealSubspace,
    xi: &CMatrix,
    rho: &CMatrix,
    rng: &mut R,
) -> Option<(CMatrix, CMatrix)> {
    let n = xi.nrows();
    let zs = kk.matrices();
    let sc = 1.0 + frob(xi) * frob(rho);
    for restart in 0..20 {
        let mut kappa = if restart == 0 { CMatrix::identity(n, n) } else { matexp(&random_in(kk, rng, 2.0)) };
        let mut cur = &kappa * xi * kappa.adjoint();
        let mut r = bracket(&cur, rho);
        let mut f = frob(&r).powi(2);
        let mut mu = 1e-3;
        for _ in 0..300 {
            if f.sqrt() < 1e-13 * sc || zs.is_empty() {
                break;
            }
            let d = 2 * n * n;
            let mut jac = RMatrix::zeros(d, zs.len());
            for (j, z) in zs.iter().enumerate() {
                jac.set_column(j, &vec_of(&bracket(&bracket(z, &cur), rho)));
            }
            let jt = jac.transpose();
            let h = &jt * &jac;
            let g = &jt * vec_of(&r);
            let mut improved = false;
            for _ in 0..30 {
                let mut hm = h.clone();
                let damp = mu * (1.0 + h.diagonal().max());
                for i in 0..zs.len() {
                    hm[(i, i)] += damp;
                }
                let Some(ch) = hm.cholesky() else {
                    mu *= 10.0;
                    continue;
                };
                let delta = -ch.solve(&g);
                let step = matexp(&combo(&zs, delta.as_slice(), n));
                let cand = &step * &cur * step.adjoint();
                let r2 = bracket(&cand, rho);
                let f2 = frob(&r2).powi(2);
                if f2 < f {
                    kappa = step * kappa;
                    cur = cand;
                    r = r2;
                    f = f2;
                    mu = (mu / 3.0).max(1e-15);
                    improved = true;
                    break;
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        if f.sqrt() < 1e-10 * sc {
            return Some((kappa, cur));
        }
    }
    None
}

/// Conjugate a zero-fiber point into a standard Cartan subset:
/// k1·x·k2⁻¹ = n·exp(η'), η' ∈ c.
pub fn normalize_to_cartan<R: Rng>(
    s: &Scenario,
    f: &FundamentalCartanData,
    x: &GroupPoint,
    rng: &mut R,
) -> Result<Normalized, CartanError> {
    let eps = s.tol.eps_rank;
    let nrm = phi(s, x).norm;
    if nrm > 1e-8 {
        return Err(CartanError::NotInZeroFiber(nrm));
    }
    let red = reduce_to_torus(s, f, &x.k, rng)?;
    let n0 = matexp(&f.t_element(&red.eta));
    let xi1 = &red.k2 * &x.xi * red.k2.adjoint();
    // Endpoints of numerical flows sit within roundoff of the zero fiber, so
    // near walls the rank threshold is relaxed until pp contains ξ.
    let mut found = None;
    let mut miss = f64::INFINITY;
    for e in [eps, 1e-7, 1e-6, 1e-5, 1e-4] {
        let (kk, pp) = direct_intersections_eps(s, &n0, e)?;
        miss = pp.residual(&xi1);
        if miss <= 1e-6 * (1.0 + frob(&xi1)) {
            found = Some((kk, pp));
            break;
        }
    }
    let Some((kk, pp)) = found else {
        return Err(CartanError::InternalInconsistency(format!("Ad(k2)ξ misses pp by {miss:e}")));
    };
    let xi1 = pp.project(&xi1);
    let a = greedy_abelian(&pp, &f.a_basis, rng, eps);
    let a_sp = RealSubspace::span(s.n(), &a, eps);
    let (kappa, xi2) = if a_sp.dim() == 0 || frob(&xi1) < 1e-14 {
        (CMatrix::identity(s.n(), s.n()), xi1.clone())
    } else {
        let mut found = None;
        for _ in 0..10 {
            let rho = random_in(&a_sp, rng, 1.0);
            if centralizer(&pp, std::slice::from_ref(&rho), eps).dim() != a_sp.dim() {
                continue;
            }
            if let Some(sol) = conjugate_into(&kk, &xi1, &rho, rng) {
                found = Some(sol);
                break;
            }
        }
        found.ok_or_else(|| CartanError::InternalInconsistency("no conjugation into a".into()))?
    };
    let (cartan, eta2) = standard_from(s, f, &red.eta, a)?;
    let xi2 = a_sp.project(&xi2);
    let k1 = &n0 * &kappa * n0.adjoint() * &red.k1;
    let k2 = &kappa * &red.k2;
    let mut eta = eta2;
    let xc = coords_in(&cartan.basis, &xi2);
    for (e, v) in eta.iter_mut().zip(xc) {
        *e += v;
    }
    let target = cartan.point(&eta);
    let residual = frob(&(&k1 * &x.value * k2.adjoint() - target));
    if residual > 1e-6 * (1.0 + frob(&x.value)) {
        return Err(CartanError::InternalInconsistency(format!("normal form residual {residual:e}")));
    }
    Ok(Normalized { k1, k2, cartan, eta, residual, restarts: red.restarts })
}

/// Period lattice {c : exp(Σ c_j b_j) = I} of an abelian compact basis, as
/// basis vectors in coordinates.
pub fn period_lattice(basis: &[CMatrix]) -> Vec<Vec<f64>> {
    let d = basis.len();
    if d == 0 {
        return vec![];
    }
    let n = basis[0].nrows();
    // Joint eigenvalues: b_j acts by i·M[r][j] on a common eigenbasis.
    let ops: Vec<RMatrix> = {
        // Work in C^n via the realification of left multiplication.
        let sp = RealSubspace::full(n);
        basis.iter().map(|b| sp.restrict(|m| b * m).0).collect()
    };
    let split = match simultaneous_eigensplit_coords(&ops, 1e-8, 1e-6) {
        Ok(s) => s,
        Err(_) => return vec![],
    };
    let rows: Vec<Vec<f64>> = split.iter().map(|sp| sp.values.iter().map(|z| z.im).collect()).collect();
    let is_period = |c: &[f64]| {
        rows.iter().all(|r| {
            let v: f64 = r.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() / (2.0 * PI);
            (v - v.round()).abs() < 1e-8
        })
    };
    // Candidate periods from d independent rows and small integer targets.
    let mut cands: Vec<Vec<f64>> = Vec::new();
    let idx: Vec<usize> = (0..rows.len()).collect();
    let subsets = choose(&idx, d);
    let range: Vec<i64> = (-2..=2).collect();
    for sub in subsets {
        let m = RMatrix::from_fn(d, d, |i, j| rows[sub[i]][j]);
        let Some(inv) = m.clone().try_inverse() else { continue };
        if m.determinant().abs() < 1e-8 {
            continue;
        }
        for ints in product(&range, d) {
            if ints.iter().all(|&v| v == 0) {
                continue;
            }
            let rhs = DVector::from_fn(d, |i, _| 2.0 * PI * ints[i] as f64);
            let c = &inv * rhs;
            let cv: Vec<f64> = c.iter().cloned().collect();
            if is_period(&cv) {
                cands.push(cv);
            }
        }
    }
    cands.sort_by(|a, b| norm(a).partial_cmp(&norm(b)).unwrap());
    let mut out: Vec<Vec<f64>> = Vec::new();
    for c in cands {
        let mut m = RMatrix::zeros(d, out.len() + 1);
        for (j, v) in out.iter().chain(std::iter::once(&c)).enumerate() {
            for i in 0..d {
                m[(i, j)] = v[i];
            }
        }
        if m.rank(1e-8) == out.len() + 1 {
            out.push(c);
            if out.len() == d {
                break;
            }
        }
    }
    // Canonical signs: first nonzero coordinate positive.
    for v in out.iter_mut() {
        if let Some(x) = v.iter().find(|x| x.abs() > 1e-12) {
            if *x < 0.0 {
                for e in v.iter_mut() {
                    *e = -*e;
                }
            }
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn choose(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        for mut rest in choose(&items[i + 1..], k - 1) {
            rest.insert(0, items[i]);
            out.push(rest);
        }
    }
    out
}

fn product(range: &[i64], d: usize) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for v in &out {
            for &r in range {
                let mut w = v.clone();
                w.push(r);
                next.push(w);
            }
        }
        out = next;
    }
    out
}

/// Reduce coordinates modulo a lattice given by basis vectors (acting on the
/// leading coordinates), to the cell centered at 0.
pub fn reduce_mod(v: &[f64], lattice: &[Vec<f64>]) -> Vec<f64> {
    let d = lattice.len();
    if d == 0 {
        return v.to_vec();
    }
    let m = RMatrix::from_fn(d, d, |i, j| lattice[j][i]);
    let inv = m.try_inverse().expect("lattice basis is independent");
    let head = DVector::from_fn(d, |i, _| v[i]);
    let c = &inv * head;
    let mut out = v.to_vec();
    for (j, l) in lattice.iter().enumerate() {
        let r = c[j].round();
        for i in 0..d {
            out[i] -= r * l[i];
        }
    }
    out
}

/// Scenario data shared by the Cartan-set operations.
#[derive(Debug, Clone)]
pub struct CartanContext {
    pub fundamental: FundamentalCartanData,
    pub weights: Vec<ExtendedWeight>,
    /// Period lattice of T0 in t0 coordinates.
    pub lattice: Vec<Vec<f64>>,
}

impl CartanContext {
    pub fn new(s: &Scenario, seed: u64) -> Result<Self, CartanError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fundamental = fundamental_cartan(s, &mut rng)?;
        let weights = extended_weights(s, &fundamental)?;
        let lattice = period_lattice(&fundamental.t_basis);
        Ok(CartanContext { fundamental, weights, lattice })
    }

    /// Bit pattern of extended weights with a·e^{2iλ(η)} = 1.
    pub fn pattern(&self, eta: &[f64]) -> Vec<bool> {
        self.weights.iter().map(|w| w.selected(eta, 1e-8)).collect()
    }
}

/// Affine hyperplane {η : ⟨normal, η⟩ = offset} in t0 coordinates.
#[derive(Debug, Clone)]
pub struct Wall {
    pub normal: Vec<f64>,
    pub offset: f64,
}

pub fn walls(ctx: &CartanContext) -> Vec<Wall> {
    let d = ctx.fundamental.dim_t();
    let cell: Vec<Vec<f64>> = ctx.lattice.iter().map(|v| v.iter().map(|x| x / 2.0).collect()).collect();
    // Range of ⟨2λ, η⟩ over the half-period cell centered at 0.
    let mut out: Vec<Wall> = Vec::new();
    for w in &ctx.weights {
        if w.is_zero() {
            continue;
        }
        let normal: Vec<f64> = w.lambda.iter().map(|x| 2.0 * x).collect();
        let reach: f64 = cell.iter().map(|v| normal.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().abs()).sum::<f64>() * 0.5 + 1.0;
        let phase = w.a[1].atan2(w.a[0]);
        let mlo = ((-reach + phase) / (2.0 * PI)).floor() as i64 - 1;
        let mhi = ((reach + phase) / (2.0 * PI)).ceil() as i64 + 1;
        for m in mlo..=mhi {
            let offset = 2.0 * PI * m as f64 - phase;
            let nn = norm(&normal);
            let un: Vec<f64> = normal.iter().map(|x| x / nn).collect();
            let uo = offset / nn;
            let dup = out.iter().any(|o| {
                let same = o.normal.iter().zip(&un).all(|(a, b)| (a - b).abs() < 1e-9) && (o.offset - uo).abs() < 1e-9;
                let opp = o.normal.iter().zip(&un).all(|(a, b)| (a + b).abs() < 1e-9) && (o.offset + uo).abs() < 1e-9;
                same || opp
            });
            if !dup {
                out.push(Wall { normal: un, offset: uo });
            }
        }
    }
    let _ = d;
    out
}

/// Generic points on every flat of the wall arrangement (including the
/// open chambers), one per flat.
pub fn flat_points<R: Rng>(ctx: &CartanContext, rng: &mut R) -> Vec<Vec<f64>> {
    let d = ctx.fundamental.dim_t();
    let ws = walls(ctx);
    let mut pts = Vec::new();
    let idx: Vec<usize> = (0..ws.len()).collect();
    for r in 0..=d {
        for sub in choose(&idx, r) {
            let a = RMatrix::from_fn(r, d, |i, j| ws[sub[i]].normal[j]);
            if r > 0 && a.rank(1e-8) < r {
                continue;
            }
            let b = DVector::from_fn(r, |i, _| ws[sub[i]].offset);
            let (base, free) = if r == 0 {
                (DVector::zeros(d), RMatrix::identity(d, d))
            } else {
                let base = crate::numkernel::lstsq(&a, &b, 1e-12);
                let null = crate::numkernel::null_space(&a, 1e-10);
                (base, null)
            };
            // A small generic displacement inside the flat keeps the point
            // off the other walls while staying near the vertex region.
            let coeffs = DVector::from_fn(free.ncols(), |_, _| rng.random_range(-0.3..0.3));
            let p = base + &free * coeffs;
            let v: Vec<f64> = p.iter().cloned().collect();
            pts.push(reduce_mod(&v, &ctx.lattice));
        }
    }
    pts
}

fn grid_points(ctx: &CartanContext, res: usize) -> Vec<Vec<f64>> {
    let d = ctx.fundamental.dim_t();
    let lat = &ctx.lattice;
    let mut out = Vec::new();
    let total = res.pow(d as u32);
    for k in 0..total {
        let mut idx = k;
        let mut p = vec![0.0; d];
        for l in lat.iter().take(d) {
            let i = idx % res;
            idx /= res;
            let frac = (i as f64 + 0.5) / res as f64 - 0.5;
            for (pi, li) in p.iter_mut().zip(l) {
                *pi += frac * li;
            }
        }
        out.push(p);
    }
    out
}

/// Representatives of the equivalence classes of standard Cartan subsets,
/// deduplicated by invariants and sorted; independent of any caller seed.
pub fn classify_cartan_sets(s: &Scenario, ctx: &CartanContext) -> Result<Vec<StandardCartanSubset>, CartanError> {
    let f = &ctx.fundamental;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_ca27);
    let pts = if f.dim_t() == 0 { vec![vec![]] } else { flat_points(ctx, &mut rng) };
    let mut patterns: Vec<Vec<bool>> = Vec::new();
    let mut reps: Vec<Vec<f64>> = Vec::new();
    for p in pts {
        let pat = ctx.pattern(&p);
        if !patterns.contains(&pat) {
            patterns.push(pat);
            reps.push(p);
        }
    }
    if f.dim_t() > 0 {
        // Grid sweeps at two resolutions must not reveal new patterns.
        for res in [32usize, 64] {
            let res = if f.dim_t() > 2 { res / 4 } else { res };
            for p in grid_points(ctx, res) {
                if !patterns.contains(&ctx.pattern(&p)) {
                    return Err(CartanError::LatticeTooCoarse);
                }
            }
        }
    }
    let mut classes: Vec<StandardCartanSubset> = Vec::new();
    for (i, p) in reps.iter().enumerate() {
        let mut r = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let c = standard_at(s, f, p, &mut r)?;
        if c.dim() != f.dim_t() + f.dim_a() {
            return Err(CartanError::InternalInconsistency(format!(
                "standard Cartan subset of dim {} at {:?}",
                c.dim(),
                p
            )));
        }
        if !classes.iter().any(|o| o.invariants.matches(&c.invariants)) {
            classes.push(c);
        }
    }
    classes.sort_by(|a, b| a.invariants.sort_key().cmp(&b.invariants.sort_key()));
    for (i, c) in classes.iter_mut().enumerate() {
        c.class_id = i;
    }
    Ok(classes)
}

/// Class id of a standard Cartan subset by invariant matching.
pub fn match_class(table: &[StandardCartanSubset], c: &StandardCartanSubset) -> Option<usize> {
    table.iter().find(|o| o.invariants.matches(&c.invariants)).map(|o| o.class_id)
}

/// x ↦ L x + b on c-coordinates, translations modulo the period lattice.
#[derive(Debug, Clone, Serialize)]
pub struct AffineMap {
    pub linear: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
}

impl AffineMap {
    pub fn identity(d: usize) -> Self {
        AffineMap {
            linear: (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
            translation: vec![0.0; d],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.linear
            .iter()
            .zip(&self.translation)
            .map(|(row, b)| row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect()
    }

    pub fn compose(&self, o: &Self, lattice: &[Vec<f64>]) -> Self {
        let d = self.translation.len();
        let linear = (0..d)
            .map(|i| (0..d).map(|j| (0..d).map(|k| self.linear[i][k] * o.linear[k][j]).sum()).collect())
            .collect();
        let translation = reduce_mod(&self.apply(&o.translation), lattice);
        AffineMap { linear, translation }
    }

    pub fn close_to(&self, o: &Self, lattice: &[Vec<f64>], tol: f64) -> bool {
        let lin = self
            .linear
            .iter()
            .flatten()
            .zip(o.linear.iter().flatten())
            .all(|(a, b)| (a - b).abs() < tol);
        let diff: Vec<f64> = self.translation.iter().zip(&o.translation).map(|(a, b)| a - b).collect();
        lin && reduce_mod(&diff, lattice).iter().all(|x| x.abs() < tol)
    }

    fn canonical(mut self, lattice: &[Vec<f64>]) -> Self {
        for v in self.linear.iter_mut().flatten() {
            let r = v.round();
            if (*v - r).abs() < 1e-6 {
                *v = r;
            }
            if v.abs() < 1e-12 {
                *v = 0.0;
            }
        }
        self.translation = reduce_mod(&self.translation, lattice);
        for v in self.translation.iter_mut() {
            if v.abs() < 1e-9 {
                *v = 0.0;
            }
        }
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeylGroupReport {
    pub order: usize,
    pub elements: Vec<AffineMap>,
    pub generators: Vec<AffineMap>,
    pub lattice: Vec<Vec<f64>>,
    pub probes: usize,
    pub probe_coords: Vec<f64>,
    /// Distinct images of the probe found by the search.
    pub orbit_points: usize,
    /// True when the closure under composition is finite and the last half of
    /// the probes found nothing new.
    pub complete: bool,
}

/// Gauss–Newton for η with y = n·exp(Σ η_j b_j), from a starting guess.
fn solve_eta(y: &CMatrix, c: &StandardCartanSubset, start: &[f64]) -> Option<Vec<f64>> {
    let empty = RealSubspace::zero(y.nrows());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    reduce_to_set(y, &empty, &empty, &c.n, &c.basis, Some(start), &mut rng, 0, 1e-11)
        .ok()
        .map(|r| r.eta)
}

/// Elements of N(C)/Z(C) in K1×K2 acting on c-coordinates, found from random
/// orbit points of a strongly regular probe and closed under composition.
pub fn weyl_group<R: Rng>(
    s: &Scenario,
    c: &StandardCartanSubset,
    budget: usize,
    rng: &mut R,
) -> Result<WeylGroupReport, CartanError> {
    let d = c.dim();
    let t_basis: Vec<CMatrix> = c.basis[..c.n_t].to_vec();
    let tl = period_lattice(&t_basis);
    let lattice: Vec<Vec<f64>> = tl
        .iter()
        .map(|v| {
            let mut w = v.clone();
            w.resize(d, 0.0);
            w
        })
        .collect();
    // Strongly regular probe: q^x = c and τ_x semisimple.
    let mut probe = vec![0.0; d];
    let cspace = c.c();
    for _ in 0..50 {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-0.6..0.6)).collect();
        let x = c.point(&v);
        let gp = crate::liegroup::cartan_factor(s, &x)?;
        let sd = crate::gradmap::isotropy_and_slice(s, &gp)?;
        if sd.qx.distance(&cspace) < 1e-8 && sd.tau_semisimple {
            probe = v;
            break;
        }
    }
    let x = c.point(&probe);
    let mut found: Vec<AffineMap> = vec![AffineMap::identity(d)];
    let mut images: Vec<Vec<f64>> = vec![reduce_mod(&probe, &lattice)];
    let mut half_count = 1;
    let delta = 1e-4;
    for trial in 0..budget {
        if trial == budget / 2 {
            half_count = found.len();
        }
        let k1 = matexp(&random_in(&s.k1, rng, 3.0));
        let k2 = matexp(&random_in(&s.k2, rng, 3.0));
        let y = &k1 * &x * k2.adjoint();
        let Ok(red) = reduce_to_set(&y, &s.k1, &s.k2, &c.n, &c.basis, None, rng, 30, 1e-11) else { continue };
        let g1 = &red.k1 * &k1;
        let g2 = &red.k2 * &k2;
        let base = red.eta.clone();
        let mut linear = vec![vec![0.0; d]; d];
        let mut ok = true;
        for j in 0..d {
            let mut plus = probe.clone();
            plus[j] += delta;
            let mut minus = probe.clone();
            minus[j] -= delta;
            let yp = &g1 * c.point(&plus) * g2.adjoint();
            let ym = &g1 * c.point(&minus) * g2.adjoint();
            let (Some(ep), Some(em)) = (solve_eta(&yp, c, &base), solve_eta(&ym, c, &base)) else {
                ok = false;
                break;
            };
            for i in 0..d {
                linear[i][j] = (ep[i] - em[i]) / (2.0 * delta);
            }
        }
        if !ok {
            continue;
        }
        let lx: Vec<f64> = (0..d).map(|i| (0..d).map(|j| linear[i][j] * probe[j]).sum()).collect();
        let translation: Vec<f64> = base.iter().zip(&lx).map(|(b, l)| b - l).collect();
        let map = AffineMap { linear, translation }.canonical(&lattice);
        let img = reduce_mod(&base, &lattice);
        if !images.iter().any(|p| {
            let diff: Vec<f64> = p.iter().zip(&img).map(|(a, b)| a - b).collect();
            reduce_mod(&diff, &lattice).iter().all(|v| v.abs() < 1e-6)
        }) {
            images.push(img);
        }
        if !found.iter().any(|m| m.close_to(&map, &lattice, 1e-4)) {
            found.push(map);
        }
    }
    let half_closure = closure(&found[..half_count.max(1)], &lattice);
    let full = closure(&found, &lattice);
    // Greedy generating set: keep a found map only if it enlarges the group.
    let mut generators: Vec<AffineMap> = Vec::new();
    let mut cur = 1;
    for m in found.iter().skip(1) {
        let mut trial = generators.clone();
        trial.push(m.clone());
        let order = closure(&trial, &lattice).map_or(usize::MAX, |e| e.len());
        if order > cur {
            cur = order;
            generators = trial;
        }
    }
    let (elements, finite) = match full {
        Some(e) => (e, true),
        None => (found.clone(), false),
    };
    let complete = finite && half_closure.is_some_and(|h| h.len() == elements.len());
    Ok(WeylGroupReport {
        order: elements.len(),
        generators,
        elements,
        lattice,
        probes: budget,
        probe_coords: probe,
        orbit_points: images.len(),
        complete,
    })
}

/// Group generated by affine maps modulo the lattice; None when it exceeds
/// 10⁴ elements.
fn closure(gens: &[AffineMap], lattice: &[Vec<f64>]) -> Option<Vec<AffineMap>> {
    let d = gens.first().map_or(0, |g| g.translation.len());
    let mut elements = vec![AffineMap::identity(d)];
    let mut i = 0;
    while i < elements.len() {
        for g in gens {
            let m = g.compose(&elements[i], lattice).canonical(lattice);
            if !elements.iter().any(|e| e.close_to(&m, lattice, 1e-4)) {
                elements.push(m);
            }
        }
        if elements.len() > 10_000 {
            return None;
        }
        i += 1;
    }
    Some(elements)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::{cartan_factor, preset};
    use crate::numkernel::Tolerances;

    fn ctx(name: &str) -> (Scenario, CartanContext) {
        let s = preset(name, Tolerances::default()).unwrap();
        let c = CartanContext::new(&s, 1).unwrap();
        (s, c)
    }

    #[test]
    fn fundamental_dims() {
        for (name, dt, da) in [
            ("sl2c_sl2r_so2c", 1, 0),
            ("sl4c_su22_kc", 2, 0),
            ("sl4c_su22_so4c", 2, 1),
            ("sl2c_sl2r_sl2r", 1, 0),
        ] {
            let (s, c) = ctx(name);
            assert_eq!((c.fundamental.dim_t(), c.fundamental.dim_a()), (dt, da), "{name}");
            assert!(c.fundamental.certify(&s).unwrap());
        }
    }

    #[test]
    fn greedy_fundamental_matches_hint_dims() {
        for name in ["sl4c_su22_kc", "sl4c_su22_so4c"] {
            let mut s = preset(name, Tolerances::default()).unwrap();
            let hinted = CartanContext::new(&s, 1).unwrap();
            s.c0_hint = None;
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let f = fundamental_cartan(&s, &mut rng).unwrap();
            assert_eq!(f.dim_t(), hinted.fundamental.dim_t());
            assert_eq!(f.dim_a(), hinted.fundamental.dim_a());
        }
    }

    #[test]
    fn torus_point_reduces_to_itself() {
        let (s, c) = ctx("sl4c_su22_kc");
        let k = matexp(&c.fundamental.t_element(&[0.3, -0.2]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = reduce_to_torus(&s, &c.fundamental, &k, &mut rng).unwrap();
        assert_eq!(r.restarts, 0);
        assert!(r.residual < 1e-12);
        assert!((r.eta[0] - 0.3).abs() < 1e-9 && (r.eta[1] + 0.2).abs() < 1e-9);
    }

    #[test]
    fn random_compact_elements_reduce() {
        let (s, c) = ctx("sl4c_su22_kc");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let k = crate::liegroup::haar_su(4, &mut rng);
            let r = reduce_to_torus(&s, &c.fundamental, &k, &mut rng).unwrap();
            let lhs = &r.k1 * &k * r.k2.adjoint();
            let rhs = matexp(&c.fundamental.t_element(&r.eta));
            assert!(frob(&(lhs - rhs)) < 1e-10);
        }
    }

    #[test]
    fn extended_weights_complete() {
        for name in ["sl2c_sl2r_so2c", "sl4c_su22_kc", "sl4c_su22_so4c", "sl2c_sl2r_sl2r"] {
            let (s, c) = ctx(name);
            let k: usize = c.weights.iter().filter(|w| w.part == Part::K).map(|w| w.mult).sum();
            let p: usize = c.weights.iter().filter(|w| w.part == Part::P).map(|w| w.mult).sum();
            assert_eq!((k, p), (s.k.dim(), s.p.dim()), "{name}");
            for w in &c.weights {
                assert!((w.a().norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn equal_involutions_give_trivial_tau() {
        let (_, c) = ctx("sl2c_sl2r_sl2r");
        assert!(c.weights.iter().all(|w| (w.a() - 1.0).norm() < 1e-9));
    }

    #[test]
    fn intersections_agree_at_zero_and_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for name in ["sl2c_sl2r_so2c", "sl4c_su22_kc", "sl4c_su22_so4c"] {
            let (s, c) = ctx(name);
            let d = c.fundamental.dim_t();
            let i0 = intersection_algebras(&s, &c.fundamental, &c.weights, &vec![0.0; d]).unwrap();
            assert!(i0.distance < 1e-8);
            for _ in 0..10 {
                let eta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                intersection_algebras(&s, &c.fundamental, &c.weights, &eta).unwrap();
            }
        }
    }

    #[test]
    fn sl2_class_table_and_weyl_group() {
        let (s, c) = ctx("sl2c_sl2r_so2c");
        let table = classify_cartan_sets(&s, &c).unwrap();
        assert!(!table.is_empty());
        let c0 = &table[0];
        assert_eq!((c0.n_t, c0.dim() - c0.n_t), (1, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = weyl_group(&s, c0, 40, &mut rng).unwrap();
        assert_eq!(w.order, 4, "{w:?}");
    }

    #[test]
    fn su22kc_classes() {
        let (s, c) = ctx("sl4c_su22_kc");
        let table = classify_cartan_sets(&s, &c).unwrap();
        let types: Vec<(usize, usize)> = table.iter().map(|c| (c.n_t, c.dim() - c.n_t)).collect();
        for t in [(2, 0), (1, 1), (0, 2)] {
            assert!(types.contains(&t), "{types:?}");
        }
    }

    #[test]
    fn sl2r_pair_has_two_classes() {
        let (s, c) = ctx("sl2c_sl2r_sl2r");
        let table = classify_cartan_sets(&s, &c).unwrap();
        assert_eq!(table.len(), 2);
    }

    #[test]
    fn normalize_recovers_class() {
        let (s, c) = ctx("sl4c_su22_kc");
        let table = classify_cartan_sets(&s, &c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for cl in &table {
            let v: Vec<f64> = (0..cl.dim()).map(|_| rng.random_range(-0.4..0.4)).collect();
            let k1 = matexp(&random_in(&s.k1, &mut rng, 1.0));
            let k2 = matexp(&random_in(&s.k2, &mut rng, 1.0));
            let x = &k1 * cl.point(&v) * k2.adjoint();
            let gp = cartan_factor(&s, &x).unwrap();
            let nz = normalize_to_cartan(&s, &c.fundamental, &gp, &mut rng).unwrap();
            assert!(nz.residual < 1e-7);
            assert_eq!(match_class(&table, &nz.cartan), Some(cl.class_id));
        }
    }
}
