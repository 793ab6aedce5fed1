//! The explicit gradient map on G, its zero fiber, a discrete gradient flow
//! and the infinitesimal isotropy/slice data at a point.

use crate::liegroup::{cartan_factor, GroupPoint, LieError, Scenario};
use crate::numkernel::{
    charpoly_from_eigenvalues, eigenvalues, frob, from_real, hermitian_log, matexp,
    spectral_decomposition, null_space, gram_schmidt, CMatrix, RMatrix, RealSubspace, I,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum GradError {
    #[error("norm test and membership test disagree (|Phi| = {norm:e}, distance = {distance:e})")]
    InternalInconsistency { norm: f64, distance: f64 },
    #[error("flow did not converge after {} iterations (|Phi| = {:e})", .trace.iterations, .trace.final_norm)]
    MaxItersExceeded { point: Box<GroupPoint>, trace: FlowTrace },
    #[error(transparent)]
    Lie(#[from] LieError),
}

/// Phi(x) = (beta1, beta2) in p^{sigma1} + p^{sigma2}.
#[derive(Debug, Clone)]
pub struct GradientValue {
    pub beta1: CMatrix,
    pub beta2: CMatrix,
    pub norm: f64,
    /// Distance of the raw formula values from p^{sigma1}, p^{sigma2}.
    pub residual: f64,
}

pub fn ad(g: &CMatrix, g_inv: &CMatrix, x: &CMatrix) -> CMatrix {
    g * x * g_inv
}

pub fn phi(s: &Scenario, x: &GroupPoint) -> GradientValue {
    let adk = ad(&x.k, &x.k.adjoint(), &x.xi);
    let b1 = &adk + s.sigma1.apply(&adk);
    let b2 = -(&x.xi + s.sigma2.apply(&x.xi));
    let beta1 = s.p1.project(&b1);
    let beta2 = s.p2.project(&b2);
    let residual = frob(&(&b1 - &beta1)).max(frob(&(&b2 - &beta2)));
    let norm = (frob(&beta1).powi(2) + frob(&beta2).powi(2)).sqrt();
    GradientValue { beta1, beta2, norm, residual }
}

/// The zero-fiber subspace p^{-sigma2} ∩ Ad(k^-1) p^{-sigma1} for a unitary k.
pub fn zero_fiber_space(s: &Scenario, k: &CMatrix) -> Result<RealSubspace, LieError> {
    let kinv = k.adjoint();
    let moved = s.p1m.image(|m| ad(&kinv, k, m), s.tol.eps_rank);
    Ok(s.p2m.intersect(&moved, s.tol.eps_rank)?)
}

/// Norm test, cross-checked against membership of xi in the zero-fiber space.
pub fn in_zero_fiber(s: &Scenario, x: &GroupPoint, tol: f64) -> Result<bool, GradError> {
    let v = phi(s, x);
    let space = zero_fiber_space(s, &x.k)?;
    let distance = space.residual(&x.xi);
    let by_norm = v.norm < tol;
    let by_member = distance < tol;
    if by_norm != by_member {
        // Near the threshold the two measures may straddle it; only a clear
        // disagreement signals a defect.
        let clear = (by_norm && distance > 100.0 * tol) || (by_member && v.norm > 100.0 * tol);
        if clear {
            return Err(GradError::InternalInconsistency { norm: v.norm, distance });
        }
    }
    Ok(by_norm)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct FlowParams {
    pub tol_converge: f64,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub initial_step: f64,
    pub stall_step: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            tol_converge: 1e-9,
            max_iters: 100_000,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            initial_step: 1.0,
            stall_step: 1e-14,
        }
    }
}

impl FlowParams {
    pub fn set(&mut self, key: &str, value: f64) -> bool {
        match key {
            "tol_converge" => self.tol_converge = value,
            "max_iters" => self.max_iters = value as usize,
            "armijo_c" => self.armijo_c = value,
            "armijo_shrink" => self.armijo_shrink = value,
            "initial_step" => self.initial_step = value,
            "stall_step" => self.stall_step = value,
            _ => return false,
        }
        true
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowStep {
    pub norm: f64,
    pub step: f64,
}

/// Per-iteration gradient norms and accepted step sizes; points are kept
/// only at the two ends.
#[derive(Debug, Clone, Serialize)]
pub struct FlowTrace {
    pub steps: Vec<FlowStep>,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    pub initial_norm: f64,
    pub final_norm: f64,
    pub invariant_drift: f64,
}

/// Characteristic polynomial coefficients of tau_x; constant on orbits.
pub fn orbit_invariants(s: &Scenario, x: &CMatrix) -> Vec<Complex64> {
    let m = from_real(&s.tau_matrix(x));
    charpoly_from_eigenvalues(&eigenvalues(&m))
}

pub fn invariant_drift(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

/// Discrete gradient flow x <- exp(-s beta1) x exp(s beta2) with Armijo
/// backtracking on |Phi|^2. Every iterate lies on the orbit of the input.
pub fn flow_to_closed(
    s: &Scenario,
    x: &GroupPoint,
    params: &FlowParams,
) -> Result<(GroupPoint, FlowTrace), GradError> {
    flow_with(s, x, params, true)
}

pub fn flow_with(
    s: &Scenario,
    x: &GroupPoint,
    params: &FlowParams,
    track_invariants: bool,
) -> Result<(GroupPoint, FlowTrace), GradError> {
    let inv0 = if track_invariants { orbit_invariants(s, &x.value) } else { vec![] };
    let mut cur = x.clone();
    let mut g = phi(s, &cur);
    let initial_norm = g.norm;
    let mut steps = Vec::new();
    let mut stalled = false;
    let mut iters = 0;
    while g.norm >= params.tol_converge && iters < params.max_iters {
        let xinv = cur.inverse_value();
        let tangent = -ad(&xinv, &cur.value, &g.beta1) + &g.beta2;
        let slope = frob(&tangent).powi(2);
        let f0 = g.norm * g.norm;
        let mut step = params.initial_step;
        let mut accepted = None;
        while step >= params.stall_step {
            let cand = matexp(&(&g.beta1 * Complex64::new(-step, 0.0)))
                * &cur.value
                * matexp(&(&g.beta2 * Complex64::new(step, 0.0)));
            if let Ok(gp) = cartan_factor(s, &cand) {
                let gn = phi(s, &gp);
                if gn.norm * gn.norm <= f0 - params.armijo_c * step * slope {
                    accepted = Some((gp, gn));
                    break;
                }
            }
            step *= params.armijo_shrink;
        }
        iters += 1;
        match accepted {
            Some((gp, gn)) => {
                cur = gp;
                g = gn;
                steps.push(FlowStep { norm: g.norm, step });
            }
            None => {
                stalled = true;
                break;
            }
        }
    }
    let converged = g.norm < params.tol_converge;
    let drift = if track_invariants {
        invariant_drift(&inv0, &orbit_invariants(s, &cur.value))
    } else {
        0.0
    };
    let trace = FlowTrace {
        steps,
        iterations: iters,
        converged,
        stalled,
        initial_norm,
        final_norm: g.norm,
        invariant_drift: drift,
    };
    if converged {
        Ok((cur, trace))
    } else {
        Err(GradError::MaxItersExceeded { point: Box::new(cur), trace })
    }
}

/// Isotropy algebra h^x, slice q^x, the operator tau_x, and the checks of the
/// infinitesimal slice decomposition (meaningful on the zero fiber).
#[derive(Debug, Clone)]
pub struct SliceData {
    pub hx: RealSubspace,
    pub qx: RealSubspace,
    /// g^{sigma2} + Ad(x^-1) g^{sigma1}: the tangent space of the orbit, moved to e.
    pub orbit_tangent: RealSubspace,
    /// tau_x in algebra coordinates.
    pub tau: RMatrix,
    pub tau_fixed: RealSubspace,
    pub tau_semisimple: bool,
    pub tau_nil_norm: f64,
}

impl SliceData {
    /// dim(g^{sigma2} + Ad(x^-1) g^{sigma1}) + dim q^x == dim g.
    pub fn slice_dimension_identity(&self, dim_g: usize) -> bool {
        self.orbit_tangent.dim() + self.qx.dim() == dim_g
    }

    /// g^{tau_x} == h^x ⊕ q^x, compared as subspaces.
    pub fn fixed_space_defect(&self, eps: f64) -> f64 {
        match self.hx.sum(&self.qx, eps) {
            Ok(sum) => sum.distance(&self.tau_fixed),
            Err(_) => f64::INFINITY,
        }
    }
}

pub fn isotropy_and_slice(s: &Scenario, x: &GroupPoint) -> Result<SliceData, LieError> {
    let eps = s.tol.eps_rank;
    let xv = &x.value;
    let xinv = x.inverse_value();
    let moved_plus = s.g1.image(|m| ad(&xinv, xv, m), eps);
    let moved_minus = s.g1m.image(|m| ad(&xinv, xv, m), eps);
    let si = s.g2.sum_intersection(&moved_plus, eps)?;
    let qx = s.g2m.intersect(&moved_minus, eps)?;
    let tau = s.algebra().restrict(|m| s.tau_x(xv, &xinv, m)).0;
    let d = tau.nrows();
    let shift = &tau - RMatrix::identity(d, d);
    let null = null_space(&shift, eps * (1.0 + tau.norm()));
    let tau_fixed = RealSubspace { n: s.n(), basis: gram_schmidt(&(&s.algebra().basis * null)) };
    let spec = spectral_decomposition(&from_real(&tau), s.tol.eps_cluster);
    let scale = 1.0 + tau.norm();
    let tau_nil_norm = spec.clusters.iter().map(|c| c.nil_norm).fold(0.0, f64::max) / scale;
    Ok(SliceData {
        hx: si.intersection,
        qx,
        orbit_tangent: si.sum,
        tau,
        tau_fixed,
        tau_semisimple: tau_nil_norm < s.tol.eps_cluster,
        tau_nil_norm,
    })
}

/// Kahler potential psi(x) = |log(x* x)|^2 on G.
pub fn potential(x: &CMatrix) -> f64 {
    let p = x.adjoint() * x;
    let l = hermitian_log(&p, 1e-6, 0.0).expect("x* x is positive definite");
    frob(&l).powi(2)
}

/// The metric induced by the potential: g(V, V) = (d²/dt² psi(x + tV) +
/// d²/dt² psi(x + itV)) / 4, polarized. Second derivatives use a five-point
/// stencil.
pub fn induced_metric(x: &CMatrix, v: &CMatrix, w: &CMatrix, h: f64) -> f64 {
    let second = |dir: &CMatrix| {
        let f = |t: f64| potential(&(x + dir * Complex64::new(t, 0.0)));
        (-f(2.0 * h) + 16.0 * f(h) - 30.0 * f(0.0) + 16.0 * f(-h) - f(-2.0 * h)) / (12.0 * h * h)
    };
    let levi = |dir: &CMatrix| 0.25 * (second(dir) + second(&(dir * I)));
    (levi(&(v + w)) - levi(&(v - w))) / 4.0
}

/// Both sides of the gradient identity dΦ^ξ(ζ_M) = ⟨ξ_M, ζ_M⟩ at x, for
/// ξ = (ξ1, ξ2) ∈ p^{σ1} ⊕ p^{σ2} and ζ = (ζ1, ζ2) ∈ g^{σ1} ⊕ g^{σ2}. The left
/// side is a central difference with step h along exp(tζ1)·x·exp(−tζ2).
pub fn gradient_identity(
    s: &Scenario,
    x: &GroupPoint,
    xi: (&CMatrix, &CMatrix),
    zeta: (&CMatrix, &CMatrix),
    h: f64,
) -> Result<(f64, f64), LieError> {
    let component = |t: f64| -> Result<f64, LieError> {
        let moved = matexp(&(zeta.0 * Complex64::new(t, 0.0))) * &x.value * matexp(&(zeta.1 * Complex64::new(-t, 0.0)));
        let v = phi(s, &cartan_factor(s, &moved)?);
        Ok((&v.beta1 * xi.0).trace().re + (&v.beta2 * xi.1).trace().re)
    };
    let lhs = (component(h)? - component(-h)?) / (2.0 * h);
    let xm = xi.0 * &x.value - &x.value * xi.1;
    let zm = zeta.0 * &x.value - &x.value * zeta.1;
    Ok((lhs, induced_metric(&x.value, &xm, &zm, 1e-3)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::{preset, random_ball, random_compact, random_in, random_point, GroupPoint};
    use crate::numkernel::{identity, scale, Tolerances};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sl2() -> Scenario {
        preset("sl2c_sl2r_so2c", Tolerances::default()).unwrap()
    }

    fn x_t(t: f64) -> CMatrix {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = Complex64::new(0.0, t);
        m[(1, 1)] = Complex64::new(0.0, -t);
        matexp(&m)
    }

    #[test]
    fn identity_has_zero_gradient() {
        let s = sl2();
        let v = phi(&s, &GroupPoint::identity(2));
        assert!(v.norm < 1e-15);
        assert!(in_zero_fiber(&s, &GroupPoint::identity(2), 1e-9).unwrap());
    }

    #[test]
    fn sl2_torus_points_in_zero_fiber() {
        let s = sl2();
        for i in 0..20 {
            let t = i as f64 * 0.37;
            let gp = cartan_factor(&s, &x_t(t)).unwrap();
            assert!(in_zero_fiber(&s, &gp, 1e-9).unwrap());
        }
    }

    #[test]
    fn generic_p_point_not_in_zero_fiber() {
        let s = sl2();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xi = random_ball(&s.p2, &mut rng, 1.0);
        let gp = GroupPoint::from_factors(identity(2), xi);
        assert!(!in_zero_fiber(&s, &gp, 1e-9).unwrap());
    }

    #[test]
    fn literal_substitution_equal_involutions() {
        let s = preset("sl2c_sl2r_sl2r", Tolerances::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xi = random_ball(&s.p2, &mut rng, 1.0);
        let v = phi(&s, &GroupPoint::from_factors(identity(2), xi.clone()));
        assert!(frob(&(&v.beta1 - (&xi + s.sigma1.apply(&xi)))) < 1e-12);
        assert!(frob(&(&v.beta2 + scale(&xi, 2.0))) < 1e-12);
    }

    #[test]
    fn flow_fixed_point_takes_no_steps() {
        let s = sl2();
        let gp = cartan_factor(&s, &x_t(0.3)).unwrap();
        let (x0, trace) = flow_to_closed(&s, &gp, &FlowParams::default()).unwrap();
        assert_eq!(trace.iterations, 0);
        assert!(frob(&(x0.value - gp.value)) < 1e-14);
    }

    #[test]
    fn flow_converges_and_preserves_invariants() {
        for name in ["sl2c_sl2r_so2c", "sl4c_su22_kc", "sl4c_su22_so4c"] {
            let s = preset(name, Tolerances::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..5 {
                let gp = random_point(&s, &mut rng, 1.5);
                let (x0, trace) = flow_to_closed(&s, &gp, &FlowParams::default()).unwrap();
                assert!(phi(&s, &x0).norm < 1e-9);
                assert!(trace.invariant_drift < 1e-7, "{name}: drift {}", trace.invariant_drift);
                assert!(trace.steps.windows(2).all(|w| w[1].norm <= w[0].norm));
                assert!(trace.iterations < 10_000);
            }
        }
    }

    #[test]
    fn isotropy_at_identity_equal_involutions() {
        let s = preset("sl2c_sl2r_sl2r", Tolerances::default()).unwrap();
        let sd = isotropy_and_slice(&s, &GroupPoint::identity(2)).unwrap();
        assert!(sd.hx.distance(&s.g2) < 1e-10);
        assert!(sd.qx.distance(&s.g2m) < 1e-10);
        assert!((sd.tau.clone() - RMatrix::identity(6, 6)).norm() < 1e-12);
    }

    #[test]
    fn equivariance_on_samples() {
        let s = preset("sl4c_su22_kc", Tolerances::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let gp = random_point(&s, &mut rng, 1.5);
            let k1 = crate::liegroup::random_compact_sub(&s.k1, &mut rng);
            let k2 = crate::liegroup::random_compact_sub(&s.k2, &mut rng);
            let moved = cartan_factor(&s, &(&k1 * &gp.value * k2.adjoint())).unwrap();
            let a = phi(&s, &gp);
            let b = phi(&s, &moved);
            assert!(frob(&(b.beta1 - ad(&k1, &k1.adjoint(), &a.beta1))) < 1e-9);
            assert!(frob(&(b.beta2 - ad(&k2, &k2.adjoint(), &a.beta2))) < 1e-9);
        }
        let _ = random_compact(&s, &mut rng);
    }

    #[test]
    fn gradient_identity_on_samples() {
        let s = preset("sl2c_sl2r_so2c", Tolerances::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let x = random_point(&s, &mut rng, 1.0);
            let (a, b) = (random_in(&s.p1, &mut rng, 1.0), random_in(&s.p2, &mut rng, 1.0));
            let (c, d) = (random_in(&s.g1, &mut rng, 1.0), random_in(&s.g2, &mut rng, 1.0));
            let (lhs, rhs) = gradient_identity(&s, &x, (&a, &b), (&c, &d), 1e-5).unwrap();
            assert!((lhs - rhs).abs() < 1e-6 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
        }
    }
}
