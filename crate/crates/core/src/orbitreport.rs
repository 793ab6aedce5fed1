//! Per-point orbit classification: closedness, regularity, isotropy,
//! Cartan class, proper-region membership and the non-closed factorization.

use crate::cartanset::{classify_cartan_sets, match_class, normalize_to_cartan, CartanContext, CartanError, StandardCartanSubset};
use crate::gradmap::{flow_to_closed, isotropy_and_slice, FlowParams, GradError};
use crate::liegroup::{cartan_factor, random_point, GroupPoint, LieError, Scenario};
use crate::numkernel::{
    frob, from_real, lstsq, matexp, scale, spectral_decomposition, CMatrix, RMatrix, RealSubspace, Tolerances,
};
use crate::symmpair::{in_null_cone, SymError, SymmetricPairData};
use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum OrbitError {
    #[error("inconclusive: {reason}")]
    Inconclusive { reason: String, diagnostics: Box<Diagnostics> },
    #[error("scenario diagnostic: {0}")]
    Scenario(String),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Cartan(#[from] CartanError),
    #[error(transparent)]
    Sym(#[from] SymError),
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyParams {
    /// Flow to the zero fiber and normalize into the class table.
    pub assign_class: bool,
    pub flow: FlowParams,
    /// τ_x nil-norm above this (relative) marks a certified non-closed orbit;
    /// between eps_cluster and this the verdict is inconclusive.
    pub nil_certain: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams { assign_class: true, flow: FlowParams::default(), nil_certain: 1e-3 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub tolerances: Tolerances,
    pub nil_certain: f64,
    pub tau_nil_norm: f64,
    pub flow_iterations: usize,
    pub flow_final_norm: Option<f64>,
    pub normalize_restarts: Option<usize>,
    pub factorization_residual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OrbitReport {
    pub point: GroupPoint,
    pub closed: bool,
    pub orbit_dim: usize,
    pub regular: bool,
    pub strongly_regular: bool,
    pub isotropy_dim: usize,
    pub isotropy_compact: bool,
    pub proper_point: bool,
    pub cartan_class: Option<usize>,
    pub closed_base: Option<GroupPoint>,
    pub nil_witness: Option<CMatrix>,
    pub diagnostics: Diagnostics,
}

/// Scenario-level data shared by every classification: maximal orbit
/// dimension and, lazily, the Cartan class table.
pub struct OrbitContext {
    pub scenario: Scenario,
    pub cartan: CartanContext,
    pub max_orbit_dim: usize,
    table: OnceLock<Result<Vec<StandardCartanSubset>, CartanError>>,
}

impl OrbitContext {
    pub fn new(s: Scenario, seed: u64) -> Result<Self, OrbitError> {
        let cartan = CartanContext::new(&s, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_7864);
        let mut best = 0;
        for _ in 0..100 {
            let x = random_point(&s, &mut rng, 1.0);
            best = best.max(isotropy_and_slice(&s, &x)?.orbit_tangent.dim());
        }
        let expected = s.dim() - cartan.fundamental.dim_t() - cartan.fundamental.dim_a();
        if best != expected {
            return Err(OrbitError::Scenario(format!(
                "maximal orbit dimension {best} from samples, {expected} from dim g - dim c0"
            )));
        }
        Ok(OrbitContext { scenario: s, cartan, max_orbit_dim: best, table: OnceLock::new() })
    }

    pub fn class_table(&self) -> Result<&[StandardCartanSubset], CartanError> {
        self.table
            .get_or_init(|| classify_cartan_sets(&self.scenario, &self.cartan))
            .as_ref()
            .map(|v| v.as_slice())
            .map_err(|e| e.clone())
    }
}

/// Re tr(XY) negative definite on the subspace.
fn trace_form_negative(space: &RealSubspace) -> bool {
    let ms = space.matrices();
    let d = ms.len();
    if d == 0 {
        return true;
    }
    let g = RMatrix::from_fn(d, d, |i, j| (&ms[i] * &ms[j]).trace().re);
    let ev = SymmetricEigen::new(g).eigenvalues;
    ev.iter().all(|&v| v < -1e-9)
}

/// Non-closed factorization x = x0·exp(ξ) from the multiplicative Jordan
/// decomposition τ_x = τ_{x0}·exp(2 ad ξ).
pub fn nonclosed_factorization(s: &Scenario, x: &GroupPoint) -> Result<(GroupPoint, CMatrix, f64), OrbitError> {
    let g = s.algebra();
    let d = g.dim();
    let xinv = x.inverse_value();
    let tau = g.restrict(|m| s.tau_x(&x.value, &xinv, m)).0;
    let spec = spectral_decomposition(&from_real(&tau), s.tol.eps_cluster);
    let ss = &spec.semisimple;
    let ss_inv = ss.clone().try_inverse().ok_or_else(|| OrbitError::Scenario("singular τ semisimple part".into()))?;
    let unip = ss_inv * from_real(&tau);
    let nilp = &unip - CMatrix::identity(d, d);
    // log of a unipotent operator: finite series.
    let mut log = CMatrix::zeros(d, d);
    let mut pow = nilp.clone();
    for k in 1..=d {
        let c = if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
        log += scale(&pow, c);
        pow = &pow * &nilp;
        if frob(&pow) < 1e-300 {
            break;
        }
    }
    let target: Vec<f64> = log.iter().map(|z| z.re * 0.5).collect();
    let imag: f64 = log.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    // Least squares for ad ξ = log/2 over ξ ∈ g.
    let basis = g.matrices();
    let mut a = RMatrix::zeros(d * d, d);
    for (j, b) in basis.iter().enumerate() {
        let m = g.restrict(|y| b * y - y * b).0;
        for (i, v) in m.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    let rhs = DVector::from_vec(target);
    let sol = lstsq(&a, &rhs, 1e-12);
    let fit = (&a * &sol - &rhs).norm() + imag;
    let xi = g.element(sol.as_slice());
    let x0v = &x.value * matexp(&scale(&xi, -1.0));
    let x0 = cartan_factor(s, &x0v)?;
    let residual = frob(&(&x.value - &x0.value * matexp(&xi)));
    Ok((x0, xi, residual.max(fit)))
}

fn certify_witness(s: &Scenario, x0: &GroupPoint, xi: &CMatrix) -> Result<bool, OrbitError> {
    let sd = isotropy_and_slice(s, x0)?;
    if !sd.tau_semisimple {
        return Ok(false);
    }
    let sc = 1.0 + frob(xi);
    if sd.qx.residual(xi) > 1e-6 * sc {
        return Ok(false);
    }
    let algebra = sd.hx.sum(&sd.qx, s.tol.eps_rank).map_err(SymError::from)?;
    let pair = SymmetricPairData::new(algebra, s.sigma2.clone(), s.tol)?;
    Ok(in_null_cone(&pair, xi)?)
}

pub fn classify<R: Rng>(
    ctx: &OrbitContext,
    x: &GroupPoint,
    params: &ClassifyParams,
    rng: &mut R,
) -> Result<OrbitReport, OrbitError> {
    let s = &ctx.scenario;
    let sd = isotropy_and_slice(s, x)?;
    let orbit_dim = sd.orbit_tangent.dim();
    let isotropy_dim = sd.hx.dim();
    let regular = orbit_dim == ctx.max_orbit_dim;
    let isotropy_compact = trace_form_negative(&sd.hx);
    let mut diagnostics = Diagnostics {
        tolerances: s.tol,
        nil_certain: params.nil_certain,
        tau_nil_norm: sd.tau_nil_norm,
        flow_iterations: 0,
        flow_final_norm: None,
        normalize_restarts: None,
        factorization_residual: None,
    };
    let closed = if sd.tau_semisimple {
        true
    } else if sd.tau_nil_norm >= params.nil_certain {
        false
    } else {
        return Err(OrbitError::Inconclusive {
            reason: format!("τ_x nil-norm {:e} between thresholds", sd.tau_nil_norm),
            diagnostics: Box::new(diagnostics),
        });
    };
    let mut report = OrbitReport {
        point: x.clone(),
        closed,
        orbit_dim,
        regular,
        strongly_regular: regular && closed,
        isotropy_dim,
        isotropy_compact,
        proper_point: closed && isotropy_compact,
        cartan_class: None,
        closed_base: None,
        nil_witness: None,
        diagnostics: diagnostics.clone(),
    };
    if closed {
        if params.assign_class {
            let (end, trace) = match flow_to_closed(s, x, &params.flow) {
                Ok(r) => r,
                Err(GradError::MaxItersExceeded { trace, .. }) => {
                    diagnostics.flow_iterations = trace.iterations;
                    diagnostics.flow_final_norm = Some(trace.final_norm);
                    return Err(OrbitError::Inconclusive {
                        reason: "flow did not reach the zero fiber".into(),
                        diagnostics: Box::new(diagnostics),
                    });
                }
                Err(GradError::Lie(e)) => return Err(e.into()),
                Err(e) => {
                    return Err(OrbitError::Inconclusive { reason: e.to_string(), diagnostics: Box::new(diagnostics) })
                }
            };
            diagnostics.flow_iterations = trace.iterations;
            diagnostics.flow_final_norm = Some(trace.final_norm);
            let nz = normalize_to_cartan(s, &ctx.cartan.fundamental, &end, rng)?;
            diagnostics.normalize_restarts = Some(nz.restarts);
            let table = ctx.class_table()?;
            report.cartan_class = match_class(table, &nz.cartan);
            if report.cartan_class.is_none() {
                return Err(OrbitError::Inconclusive {
                    reason: "normal form matches no class of the table".into(),
                    diagnostics: Box::new(diagnostics),
                });
            }
        }
    } else {
        let (x0, xi, residual) = nonclosed_factorization(s, x)?;
        diagnostics.factorization_residual = Some(residual);
        if residual > 1e-6 || !certify_witness(s, &x0, &xi)? {
            return Err(OrbitError::Inconclusive {
                reason: format!("non-closed factorization not certified (residual {residual:e})"),
                diagnostics: Box::new(diagnostics),
            });
        }
        report.closed_base = Some(x0);
        report.nil_witness = Some(xi);
    }
    report.diagnostics = diagnostics;
    Ok(report)
}

/// Per-point seed derived from a run seed and the point index.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Classify a batch in parallel; results are in input order and depend only
/// on (seed, index), never on the number of jobs.
pub fn classify_batch(
    ctx: &OrbitContext,
    xs: &[GroupPoint],
    params: &ClassifyParams,
    seed: u64,
    jobs: usize,
) -> Vec<Result<OrbitReport, OrbitError>> {
    if params.assign_class {
        let _ = ctx.class_table();
    }
    let jobs = jobs.max(1).min(xs.len().max(1));
    let mut out: Vec<Option<Result<OrbitReport, OrbitError>>> = vec![None; xs.len()];
    let chunk = xs.len().div_ceil(jobs).max(1);
    std::thread::scope(|sc| {
        for (ci, slot) in out.chunks_mut(chunk).enumerate() {
            let start = ci * chunk;
            sc.spawn(move || {
                for (j, r) in slot.iter_mut().enumerate() {
                    let i = start + j;
                    let mut rng = ChaCha8Rng::seed_from_u64(point_seed(seed, i));
                    *r = Some(classify(ctx, &xs[i], params, &mut rng));
                }
            });
        }
    });
    out.into_iter().map(|r| r.expect("every slot filled")).collect()
}

pub fn proper_region_probe(
    ctx: &OrbitContext,
    xs: &[GroupPoint],
    seed: u64,
) -> Vec<Result<bool, OrbitError>> {
    let params = ClassifyParams { assign_class: false, ..Default::default() };
    classify_batch(ctx, xs, &params, seed, 1).into_iter().map(|r| r.map(|o| o.proper_point)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::preset;
    use crate::numkernel::c;

    fn sl2_point(t: f64) -> CMatrix {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = c(0.0, t).exp();
        m[(1, 1)] = c(0.0, -t).exp();
        m
    }

    fn ctx(name: &str) -> OrbitContext {
        OrbitContext::new(preset(name, Tolerances::default()).unwrap(), 1).unwrap()
    }

    #[test]
    fn sl2_fundamental_domain_verdicts() {
        let ctx = ctx("sl2c_sl2r_so2c");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ClassifyParams::default();
        let q = std::f64::consts::PI / 8.0;
        let rows: Vec<(bool, bool, bool)> = (0..5)
            .map(|i| {
                let x = cartan_factor(&ctx.scenario, &sl2_point(q * i as f64)).unwrap();
                let r = classify(&ctx, &x, &p, &mut rng).unwrap();
                (r.closed, r.strongly_regular, r.proper_point)
            })
            .collect();
        assert_eq!(
            rows,
            vec![(true, false, true), (true, true, true), (true, false, false), (true, true, true), (true, false, true)]
        );
        let x = cartan_factor(&ctx.scenario, &sl2_point(2.0 * q)).unwrap();
        let r = classify(&ctx, &x, &p, &mut rng).unwrap();
        assert_eq!(r.isotropy_dim, 1);
        assert!(!r.isotropy_compact);
    }

    #[test]
    fn nonclosed_point_gets_witness() {
        let ctx = ctx("sl2c_sl2r_so2c");
        let s = &ctx.scenario;
        let x0 = cartan_factor(s, &sl2_point(std::f64::consts::FRAC_PI_4)).unwrap();
        let pair = SymmetricPairData::at_point(s, &x0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nil = crate::symmpair::random_nilpotent(&pair, &mut rng).unwrap();
        let x = cartan_factor(s, &(&x0.value * matexp(&nil))).unwrap();
        let r = classify(&ctx, &x, &ClassifyParams::default(), &mut rng).unwrap();
        assert!(!r.closed);
        let base = r.closed_base.unwrap();
        let xi = r.nil_witness.unwrap();
        assert!(frob(&(&x.value - &base.value * matexp(&xi))) < 1e-6);
    }

    #[test]
    fn identity_with_equal_involutions() {
        let ctx = ctx("sl2c_sl2r_sl2r");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = classify(&ctx, &GroupPoint::identity(2), &ClassifyParams::default(), &mut rng).unwrap();
        assert!(r.closed);
        assert_eq!(r.isotropy_dim, 3);
        assert!(!r.isotropy_compact);
    }

    #[test]
    fn batch_is_job_independent() {
        let ctx = ctx("sl2c_sl2r_so2c");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<GroupPoint> = (0..6).map(|_| random_point(&ctx.scenario, &mut rng, 1.0)).collect();
        let p = ClassifyParams::default();
        let a = classify_batch(&ctx, &xs, &p, 9, 1);
        let b = classify_batch(&ctx, &xs, &p, 9, 3);
        for (x, y) in a.iter().zip(&b) {
            let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
            assert_eq!((x.closed, x.cartan_class, x.orbit_dim), (y.closed, y.cartan_class, y.orbit_dim));
        }
    }
}
