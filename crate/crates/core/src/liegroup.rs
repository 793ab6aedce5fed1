//! Matrix realizations of reductive groups with two commuting involutions.

use crate::numkernel::{
    bracket, c, conj, frob, from_real, hermitian_log, identity, matexp, scale, CMatrix, NumError,
    RMatrix, RealSubspace, Tolerances, I, ONE, ZERO,
};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("point is not in the group (p-membership residual {0:e})")]
    NotInGroup(f64),
    #[error("domain is not invariant under the involution (residual {0:e})")]
    NotInvariant(f64),
    #[error("involution conjugator is singular")]
    SingularConjugator,
    #[error("scenario failed validation: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Cartan involution on the algebra.
pub fn theta(x: &CMatrix) -> CMatrix {
    -x.adjoint()
}

/// An involution X -> A eps(X) A^-1 where eps is one of X, conj(X), -X^T,
/// -X^* (selected by the two flags). On the group the matching maps are
/// g, conj(g), g^-T, g^-*.
#[derive(Debug, Clone, PartialEq)]
pub struct InvolutionSpec {
    pub a: CMatrix,
    pub a_inv: CMatrix,
    pub antiholomorphic: bool,
    pub transpose: bool,
}

impl InvolutionSpec {
    pub fn new(a: CMatrix, antiholomorphic: bool, transpose: bool) -> Result<Self, LieError> {
        let a_inv = a.clone().try_inverse().ok_or(LieError::SingularConjugator)?;
        Ok(InvolutionSpec { a, a_inv, antiholomorphic, transpose })
    }

    pub fn conjugation(n: usize) -> Self {
        Self::new(identity(n), true, false).expect("identity is invertible")
    }

    pub fn inner(a: CMatrix) -> Result<Self, LieError> {
        Self::new(a, false, false)
    }

    fn eps(&self, x: &CMatrix) -> CMatrix {
        match (self.antiholomorphic, self.transpose) {
            (false, false) => x.clone(),
            (true, false) => conj(x),
            (false, true) => -x.transpose(),
            (true, true) => -x.adjoint(),
        }
    }

    fn eps_group(&self, g: &CMatrix) -> CMatrix {
        let inv = || g.clone().try_inverse().expect("group elements are invertible");
        match (self.antiholomorphic, self.transpose) {
            (false, false) => g.clone(),
            (true, false) => conj(g),
            (false, true) => inv().transpose(),
            (true, true) => inv().adjoint(),
        }
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        &self.a * self.eps(x) * &self.a_inv
    }

    pub fn apply_group(&self, g: &CMatrix) -> CMatrix {
        &self.a * self.eps_group(g) * &self.a_inv
    }
}

/// A real basis of g inside gl(N,C).
#[derive(Debug, Clone)]
pub struct ReductiveGroupData {
    pub name: String,
    pub n: usize,
    pub algebra: RealSubspace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Sigma1,
    Sigma2,
    Theta,
    TauFixed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    fn push(&mut self, name: &str, residual: f64, threshold: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            passed: residual.is_finite() && residual <= threshold,
            residual,
            threshold,
        });
    }
}

/// Split a domain into the +1 and -1 eigenspaces of a real-linear involution.
pub fn split_involution<F: Fn(&CMatrix) -> CMatrix>(
    op: F,
    domain: &RealSubspace,
    eps: f64,
) -> Result<(RealSubspace, RealSubspace), LieError> {
    let mats = domain.matrices();
    let mut plus = Vec::with_capacity(mats.len());
    let mut minus = Vec::with_capacity(mats.len());
    let mut res: f64 = 0.0;
    for m in &mats {
        let s = op(m);
        res = res.max(domain.residual(&s));
        plus.push(scale(&(m + &s), 0.5));
        minus.push(scale(&(m - &s), 0.5));
    }
    if res > eps.max(1e-9) * 10.0 {
        return Err(LieError::NotInvariant(res));
    }
    let p = RealSubspace::span(domain.n, &plus, eps);
    let q = RealSubspace::span(domain.n, &minus, eps);
    if p.dim() + q.dim() != domain.dim() {
        return Err(LieError::NotInvariant(
            (p.dim() as f64 + q.dim() as f64 - domain.dim() as f64).abs(),
        ));
    }
    Ok((p, q))
}

/// Centralizer of a set of matrices inside a domain.
pub fn centralizer(domain: &RealSubspace, of: &[CMatrix], eps: f64) -> RealSubspace {
    if of.is_empty() || domain.dim() == 0 {
        return domain.clone();
    }
    let n = domain.n;
    let amb = 2 * n * n;
    let mats = domain.matrices();
    let mut m = RMatrix::zeros(amb * of.len(), domain.dim());
    for (j, b) in mats.iter().enumerate() {
        for (i, x) in of.iter().enumerate() {
            let v = crate::numkernel::vec_of(&bracket(x, b));
            m.view_mut((i * amb, j), (amb, 1)).copy_from(&v);
        }
    }
    let null = crate::numkernel::null_space(&m, eps);
    RealSubspace { n, basis: crate::numkernel::gram_schmidt(&(&domain.basis * null)) }
}

/// Group, involutions and the eigenspace caches used everywhere downstream.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub group: ReductiveGroupData,
    pub sigma1: InvolutionSpec,
    pub sigma2: InvolutionSpec,
    pub tol: Tolerances,
    pub k: RealSubspace,
    pub p: RealSubspace,
    pub g1: RealSubspace,
    pub g1m: RealSubspace,
    pub g2: RealSubspace,
    pub g2m: RealSubspace,
    pub k1: RealSubspace,
    pub k1m: RealSubspace,
    pub p1: RealSubspace,
    pub p1m: RealSubspace,
    pub k2: RealSubspace,
    pub k2m: RealSubspace,
    pub p2: RealSubspace,
    pub p2m: RealSubspace,
    pub center: RealSubspace,
    /// Algebra closed under multiplication by i.
    pub is_complex: bool,
    /// K is all of SU(N), so Haar sampling is available.
    pub k_is_su: bool,
    /// Preferred basis for the fundamental Cartan subspace (t0, a0).
    pub c0_hint: Option<(Vec<CMatrix>, Vec<CMatrix>)>,
}

/// Checks every structural requirement on raw scenario data.
pub fn validate(
    group: &ReductiveGroupData,
    s1: &InvolutionSpec,
    s2: &InvolutionSpec,
    tol: &Tolerances,
) -> ValidationReport {
    let mut rep = ValidationReport { checks: vec![] };
    let alg = &group.algebra;
    let basis = alg.matrices();
    let eps = tol.eps_rank;
    rep.push("basis_orthonormal", alg.gram_defect(), tol.eps_orth);
    let mut closure: f64 = 0.0;
    for (i, x) in basis.iter().enumerate() {
        for y in basis.iter().skip(i + 1) {
            closure = closure.max(alg.residual(&bracket(x, y)));
        }
    }
    rep.push("bracket_closure", closure, eps);
    let th = basis.iter().map(|b| alg.residual(&theta(b))).fold(0.0, f64::max);
    rep.push("theta_stable", th, eps);
    for (label, s) in [("sigma1", s1), ("sigma2", s2)] {
        let pres = basis.iter().map(|b| alg.residual(&s.apply(b))).fold(0.0, f64::max);
        rep.push(&format!("{label}_preserves_algebra"), pres, eps);
        let inv = basis.iter().map(|b| frob(&(s.apply(&s.apply(b)) - b))).fold(0.0, f64::max);
        rep.push(&format!("{label}_involutive"), inv, eps);
        let com = basis
            .iter()
            .map(|b| frob(&(s.apply(&theta(b)) - theta(&s.apply(b)))))
            .fold(0.0, f64::max);
        rep.push(&format!("{label}_commutes_with_theta"), com, eps);
        let aut = basis
            .iter()
            .enumerate()
            .flat_map(|(i, x)| basis.iter().skip(i + 1).map(move |y| (x, y)))
            .map(|(x, y)| frob(&(s.apply(&bracket(x, y)) - bracket(&s.apply(x), &s.apply(y)))))
            .fold(0.0, f64::max);
        rep.push(&format!("{label}_is_automorphism"), aut, eps);
        if pres <= eps * 10.0 {
            let ok = split_involution(|x| s.apply(x), alg, eps)
                .map(|(p, q)| (p.dim() + q.dim()) as f64 - alg.dim() as f64)
                .unwrap_or(f64::INFINITY);
            rep.push(&format!("{label}_dimension_sum"), ok.abs(), 0.0);
        }
    }
    if th <= eps * 10.0 {
        let ok = split_involution(theta, alg, eps)
            .map(|(p, q)| (p.dim() + q.dim()) as f64 - alg.dim() as f64)
            .unwrap_or(f64::INFINITY);
        rep.push("cartan_dimension_sum", ok.abs(), 0.0);
    }
    // tau = sigma2 sigma1 on the center: semisimple, unit-modulus spectrum.
    let center = centralizer(alg, &basis, eps);
    if center.dim() > 0 {
        let (m, _) = center.restrict(|x| s2.apply(&s1.apply(x)));
        let spec = crate::numkernel::spectral_decomposition(&from_real(&m), tol.eps_cluster);
        let nil = spec.clusters.iter().map(|c| c.nil_norm).fold(0.0, f64::max);
        let modulus = spec.clusters.iter().map(|c| (c.value.norm() - 1.0).abs()).fold(0.0, f64::max);
        rep.push("tau_center_semisimple", nil, tol.eps_cluster);
        rep.push("tau_center_unit_modulus", modulus, tol.eps_cluster);
    } else {
        rep.push("tau_center_semisimple", 0.0, tol.eps_cluster);
        rep.push("tau_center_unit_modulus", 0.0, tol.eps_cluster);
    }
    rep
}

impl Scenario {
    pub fn new(
        group: ReductiveGroupData,
        sigma1: InvolutionSpec,
        sigma2: InvolutionSpec,
        tol: Tolerances,
    ) -> Result<Self, LieError> {
        let rep = validate(&group, &sigma1, &sigma2, &tol);
        if !rep.passed() {
            let names: Vec<String> = rep
                .failures()
                .iter()
                .map(|c| format!("{} (residual {:e})", c.name, c.residual))
                .collect();
            return Err(LieError::Invalid(names.join(", ")));
        }
        let eps = tol.eps_rank;
        let alg = &group.algebra;
        let (k, p) = split_involution(theta, alg, eps)?;
        let s1 = |x: &CMatrix| sigma1.apply(x);
        let s2 = |x: &CMatrix| sigma2.apply(x);
        let (g1, g1m) = split_involution(s1, alg, eps)?;
        let (g2, g2m) = split_involution(s2, alg, eps)?;
        let (k1, k1m) = split_involution(s1, &k, eps)?;
        let (p1, p1m) = split_involution(s1, &p, eps)?;
        let (k2, k2m) = split_involution(s2, &k, eps)?;
        let (p2, p2m) = split_involution(s2, &p, eps)?;
        let basis = alg.matrices();
        let center = centralizer(alg, &basis, eps);
        let n = group.n;
        let is_complex = basis.iter().all(|b| alg.residual(&(b * I)) < eps * 10.0);
        let su = su_basis(n);
        let k_is_su = k.dim() == n * n - 1 && su.iter().all(|b| k.residual(b) < eps * 10.0);
        Ok(Scenario {
            name: group.name.clone(),
            group,
            sigma1,
            sigma2,
            tol,
            k,
            p,
            g1,
            g1m,
            g2,
            g2m,
            k1,
            k1m,
            p1,
            p1m,
            k2,
            k2m,
            p2,
            p2m,
            center,
            is_complex,
            k_is_su,
            c0_hint: None,
        })
    }

    pub fn n(&self) -> usize {
        self.group.n
    }

    pub fn dim(&self) -> usize {
        self.group.algebra.dim()
    }

    pub fn algebra(&self) -> &RealSubspace {
        &self.group.algebra
    }

    /// tau_x = sigma2 Ad(x^-1) sigma1 Ad(x) applied to X.
    pub fn tau_x(&self, x: &CMatrix, x_inv: &CMatrix, m: &CMatrix) -> CMatrix {
        self.sigma2.apply(&(x_inv * self.sigma1.apply(&(x * m * x_inv)) * x))
    }

    /// Matrix of tau_x on the algebra, in algebra coordinates.
    pub fn tau_matrix(&self, x: &CMatrix) -> RMatrix {
        let x_inv = x.clone().try_inverse().expect("group elements are invertible");
        self.algebra().restrict(|m| self.tau_x(x, &x_inv, m)).0
    }
}

/// Recompute the validation report of a constructed scenario.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    validate(&s.group, &s.sigma1, &s.sigma2, &s.tol)
}

/// Involution eigenspace split of a domain inside the scenario's algebra.
pub fn eigenspace_split(
    s: &Scenario,
    which: Which,
    domain: &RealSubspace,
) -> Result<(RealSubspace, RealSubspace), LieError> {
    let eps = s.tol.eps_rank;
    match which {
        Which::Sigma1 => split_involution(|x| s.sigma1.apply(x), domain, eps),
        Which::Sigma2 => split_involution(|x| s.sigma2.apply(x), domain, eps),
        Which::Theta => split_involution(theta, domain, eps),
        Which::TauFixed => {
            let tau = |x: &CMatrix| s.sigma2.apply(&s.sigma1.apply(x));
            let (m, res) = domain.restrict(tau);
            if res > eps * 10.0 {
                return Err(LieError::NotInvariant(res));
            }
            let d = domain.dim();
            let null = crate::numkernel::null_space(&(m - RMatrix::identity(d, d)), eps);
            let fixed = RealSubspace {
                n: domain.n,
                basis: crate::numkernel::gram_schmidt(&(&domain.basis * null)),
            };
            let rest = fixed.orthocomplement_in(domain, eps)?;
            Ok((fixed, rest))
        }
    }
}

/// x = k exp(xi) with k in the unitary part and xi in p.
#[derive(Debug, Clone)]
pub struct GroupPoint {
    pub value: CMatrix,
    pub k: CMatrix,
    pub xi: CMatrix,
}

impl GroupPoint {
    pub fn from_factors(k: CMatrix, xi: CMatrix) -> Self {
        GroupPoint { value: &k * matexp(&xi), k, xi }
    }

    pub fn identity(n: usize) -> Self {
        GroupPoint { value: identity(n), k: identity(n), xi: CMatrix::zeros(n, n) }
    }

    pub fn inverse_value(&self) -> CMatrix {
        // x^-1 = exp(-xi) k*
        matexp(&(-&self.xi)) * self.k.adjoint()
    }
}

pub fn cartan_factor(s: &Scenario, x: &CMatrix) -> Result<GroupPoint, LieError> {
    let tol = &s.tol;
    let pmat = x.adjoint() * x;
    let l = hermitian_log(&pmat, tol.eps_herm * (1.0 + frob(&pmat)), tol.eps_pd)?;
    let xi_raw = scale(&l, 0.5);
    let xi = s.p.project(&xi_raw);
    let res = frob(&(&xi_raw - &xi));
    if res > tol.eps_member * (1.0 + frob(&xi_raw)) {
        return Err(LieError::NotInGroup(res));
    }
    let k = x * matexp(&(-&xi));
    Ok(GroupPoint { value: x.clone(), k, xi })
}

/// Basis of sl(N,C) as a real Lie algebra (dimension 2(N^2-1)).
pub fn sl_basis(n: usize) -> Vec<CMatrix> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mut e = CMatrix::zeros(n, n);
                e[(i, j)] = ONE;
                out.push(e.clone());
                out.push(e * I);
            }
        }
    }
    for i in 0..n.saturating_sub(1) {
        let mut h = CMatrix::zeros(n, n);
        h[(i, i)] = ONE;
        h[(i + 1, i + 1)] = -ONE;
        out.push(h.clone());
        out.push(h * I);
    }
    out
}

/// Basis of su(N).
pub fn su_basis(n: usize) -> Vec<CMatrix> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut a = CMatrix::zeros(n, n);
            a[(i, j)] = ONE;
            a[(j, i)] = -ONE;
            out.push(a);
            let mut b = CMatrix::zeros(n, n);
            b[(i, j)] = I;
            b[(j, i)] = I;
            out.push(b);
        }
    }
    for i in 0..n.saturating_sub(1) {
        let mut h = CMatrix::zeros(n, n);
        h[(i, i)] = I;
        h[(i + 1, i + 1)] = -I;
        out.push(h);
    }
    out
}

pub fn sl_group(n: usize, tol: &Tolerances) -> ReductiveGroupData {
    ReductiveGroupData {
        name: format!("sl{n}c"),
        n,
        algebra: RealSubspace::span(n, &sl_basis(n), tol.eps_rank),
    }
}

fn diag(entries: &[f64]) -> CMatrix {
    let n = entries.len();
    CMatrix::from_fn(n, n, |i, j| if i == j { c(entries[i], 0.0) } else { ZERO })
}

fn entry(n: usize, list: &[(usize, usize, Complex64)]) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for &(i, j, v) in list {
        m[(i, j)] = v;
    }
    m
}

pub const PRESETS: [&str; 4] = ["sl2c_sl2r_so2c", "sl4c_su22_kc", "sl4c_su22_so4c", "sl2c_sl2r_sl2r"];

/// Built-in scenarios. The first three are the complex group SL(N,C) with a
/// real form and a complexified symmetric subgroup; the fourth pairs two
/// copies of the real form SL(2,R).
pub fn preset(name: &str, tol: Tolerances) -> Result<Scenario, LieError> {
    let i22 = diag(&[1.0, 1.0, -1.0, -1.0]);
    let (n, s1, s2, hint) = match name {
        "sl2c_sl2r_so2c" => {
            let t0 = vec![diag(&[1.0, -1.0]) * I];
            (2, InvolutionSpec::conjugation(2), InvolutionSpec::new(identity(2), false, true)?, Some((t0, vec![])))
        }
        "sl2c_sl2r_sl2r" => {
            let t0 = vec![diag(&[1.0, -1.0]) * I];
            (2, InvolutionSpec::conjugation(2), InvolutionSpec::conjugation(2), Some((t0, vec![])))
        }
        "sl4c_su22_kc" => {
            // i eta_{t,s} with eta symmetric on the (1,4) and (2,3) entries.
            let t0 = vec![
                entry(4, &[(1, 2, I), (2, 1, I)]),
                entry(4, &[(0, 3, I), (3, 0, I)]),
            ];
            (
                4,
                InvolutionSpec::new(i22.clone(), true, true)?,
                InvolutionSpec::inner(i22.clone())?,
                Some((t0, vec![])),
            )
        }
        "sl4c_su22_so4c" => {
            let t0 = vec![
                entry(4, &[(1, 2, ONE), (2, 1, -ONE)]),
                entry(4, &[(0, 3, ONE), (3, 0, -ONE)]),
            ];
            let a0 = vec![diag(&[1.0, -1.0, -1.0, 1.0])];
            (
                4,
                InvolutionSpec::new(i22.clone(), true, true)?,
                InvolutionSpec::new(i22.clone(), false, true)?,
                Some((t0, a0)),
            )
        }
        other => return Err(LieError::UnknownPreset(other.to_string())),
    };
    let mut group = sl_group(n, &tol);
    group.name = name.to_string();
    let mut s = Scenario::new(group, s1, s2, tol)?;
    s.c0_hint = hint.map(|(t, a)| {
        (
            t.iter().map(|m| scale(m, 1.0 / frob(m))).collect(),
            a.iter().map(|m| scale(m, 1.0 / frob(m))).collect(),
        )
    });
    Ok(s)
}

/// Gaussian element of a subspace with coordinates of standard deviation `sd`.
pub fn random_in<R: Rng>(space: &RealSubspace, rng: &mut R, sd: f64) -> CMatrix {
    let coords: Vec<f64> = (0..space.dim()).map(|_| rng.sample::<f64, _>(StandardNormal) * sd).collect();
    space.element(&coords)
}

/// Element of a subspace with uniformly random direction and norm in [0, r].
pub fn random_ball<R: Rng>(space: &RealSubspace, rng: &mut R, r: f64) -> CMatrix {
    if space.dim() == 0 {
        return CMatrix::zeros(space.n, space.n);
    }
    let x = random_in(space, rng, 1.0);
    let nx = frob(&x);
    let radius = r * rng.random::<f64>().powf(1.0 / space.dim() as f64);
    scale(&x, radius / nx.max(1e-300))
}

/// Haar-random element of SU(N).
pub fn haar_su<R: Rng>(n: usize, rng: &mut R) -> CMatrix {
    let z = CMatrix::from_fn(n, n, |_, _| {
        c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let qr = z.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = q.clone();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..n {
            u[(i, j)] = q[(i, j)] * ph;
        }
    }
    let det = u.determinant();
    let root = det.powf(1.0 / n as f64);
    u.map(|v| v / root)
}

/// Random element of the compact part K of G.
pub fn random_compact<R: Rng>(s: &Scenario, rng: &mut R) -> CMatrix {
    if s.k_is_su {
        return haar_su(s.n(), rng);
    }
    let mut k = identity(s.n());
    for _ in 0..4 {
        k = k * matexp(&random_in(&s.k, rng, 2.0));
    }
    k
}

/// Random element of the compact part of G_j (j = 1, 2).
pub fn random_compact_sub<R: Rng>(space: &RealSubspace, rng: &mut R) -> CMatrix {
    let mut k = identity(space.n);
    for _ in 0..4 {
        k = k * matexp(&random_in(space, rng, 2.0));
    }
    k
}

/// Random point k exp(xi) with Haar-like k and |xi| <= r.
pub fn random_point<R: Rng>(s: &Scenario, rng: &mut R, r: f64) -> GroupPoint {
    GroupPoint::from_factors(random_compact(s, rng), random_ball(&s.p, rng, r))
}

/// Serialized matrix: row-major nested [re, im] pairs.
pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &CMatrix) -> MatrixJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_json(m: &MatrixJson) -> Result<CMatrix, LieError> {
    let n = m.len();
    if n == 0 || m.iter().any(|row| row.len() != n) {
        return Err(LieError::Malformed("matrix must be square and non-empty".into()));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| c(m[i][j][0], m[i][j][1])))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvolutionJson {
    #[serde(rename = "A")]
    pub a: MatrixJson,
    pub antiholomorphic: bool,
    #[serde(default)]
    pub transpose: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioJson {
    pub name: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algebra_basis: Option<Vec<MatrixJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<InvolutionJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<InvolutionJson>,
}

fn involution_from_json(j: &InvolutionJson, n: usize) -> Result<InvolutionSpec, LieError> {
    let a = matrix_from_json(&j.a)?;
    if a.nrows() != n {
        return Err(LieError::Malformed(format!("involution matrix must be {n}x{n}")));
    }
    InvolutionSpec::new(a, j.antiholomorphic, j.transpose)
}

pub fn involution_to_json(s: &InvolutionSpec) -> InvolutionJson {
    InvolutionJson { a: matrix_to_json(&s.a), antiholomorphic: s.antiholomorphic, transpose: s.transpose }
}

/// Build a scenario from its JSON description.
pub fn scenario_from_json(j: &ScenarioJson, tol: Tolerances) -> Result<Scenario, LieError> {
    if j.n == 0 {
        return Err(LieError::Malformed("N must be positive".into()));
    }
    let base = match &j.preset {
        Some(p) => Some(preset(p, tol)?),
        None => None,
    };
    if let Some(b) = &base {
        if b.n() != j.n {
            return Err(LieError::Malformed(format!("preset {} has N = {}", b.name, b.n())));
        }
    }
    let algebra = match (&j.algebra_basis, &base) {
        (Some(basis), _) => {
            let mats = basis.iter().map(matrix_from_json).collect::<Result<Vec<_>, _>>()?;
            if mats.iter().any(|m| m.nrows() != j.n) {
                return Err(LieError::Malformed(format!("basis matrices must be {0}x{0}", j.n)));
            }
            let sp = RealSubspace::span(j.n, &mats, tol.eps_rank);
            if sp.dim() != mats.len() {
                return Err(LieError::Malformed("algebra basis is linearly dependent".into()));
            }
            sp
        }
        (None, Some(b)) => b.group.algebra.clone(),
        (None, None) => return Err(LieError::Malformed("algebra_basis or preset required".into())),
    };
    let pick = |given: &Option<InvolutionJson>, fallback: Option<&InvolutionSpec>| match (given, fallback) {
        (Some(g), _) => involution_from_json(g, j.n),
        (None, Some(f)) => Ok(f.clone()),
        (None, None) => Err(LieError::Malformed("sigma1 and sigma2 are required".into())),
    };
    let s1 = pick(&j.sigma1, base.as_ref().map(|b| &b.sigma1))?;
    let s2 = pick(&j.sigma2, base.as_ref().map(|b| &b.sigma2))?;
    let group = ReductiveGroupData { name: j.name.clone(), n: j.n, algebra };
    let mut s = Scenario::new(group, s1, s2, tol)?;
    if let Some(b) = base {
        if j.algebra_basis.is_none() && j.sigma1.is_none() && j.sigma2.is_none() {
            s.c0_hint = b.c0_hint;
        }
    }
    Ok(s)
}

pub fn scenario_to_json(s: &Scenario) -> ScenarioJson {
    ScenarioJson {
        name: s.name.clone(),
        n: s.n(),
        algebra_basis: Some(s.algebra().matrices().iter().map(matrix_to_json).collect()),
        preset: None,
        sigma1: Some(involution_to_json(&s.sigma1)),
        sigma2: Some(involution_to_json(&s.sigma2)),
    }
}

/// Coordinates of a vector in an orthonormal real basis.
pub fn coords_of(space: &RealSubspace, x: &CMatrix) -> DVector<f64> {
    space.coords(x)
}
