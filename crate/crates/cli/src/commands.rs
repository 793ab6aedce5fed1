//! The `coset` commands. Each returns a JSON value; the caller renders it.

use crate::fixtures;
use clap::{Parser, ValueEnum};
use coset_core::cartanset::StandardCartanSubset;
use coset_core::gradmap::{FlowTrace, GradError};
use coset_core::liegroup::{matrix_from_json, matrix_to_json, scenario_from_json, validate_scenario, MatrixJson, ScenarioJson};
use coset_core::numkernel::{eigenvalues, from_real, identity};
use coset_core::orbitreport::{OrbitError, OrbitReport};
use coset_core::{
    cartan_factor, classify_batch, flow_to_closed, in_zero_fiber, phi, preset, weyl_group, CMatrix, ClassifyParams,
    FlowParams, GroupPoint, OrbitContext, Scenario, Tolerances,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Io(_) => 1,
            CliError::Compute(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Info,
    Phi,
    Flow,
    Classify,
    Cartans,
    Weyl,
    Example,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "coset", about = "Double coset orbits of real reductive groups")]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// Example name for `example`: sl2, su22kc or su22so4c.
    pub name: Option<String>,
    #[arg(long, conflicts_with = "preset")]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Threshold override KEY=VAL; repeatable.
    #[arg(long = "tol", value_name = "KEY=VAL")]
    pub tol: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

/// Parsed overrides for the numerical thresholds, the flow and the
/// classifier.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol: Tolerances,
    pub classify: ClassifyParams,
}

pub fn parse_overrides(items: &[String]) -> Result<Overrides, CliError> {
    let mut o = Overrides::default();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Invalid(format!("--tol expects KEY=VAL, got {item:?}")))?;
        let val: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Invalid(format!("--tol {k}: {v:?} is not a number")))?;
        if !val.is_finite() || val < 0.0 {
            return Err(CliError::Invalid(format!("--tol {k}: value must be finite and non-negative")));
        }
        let k = k.trim();
        let known = o.tol.set(k, val) || o.classify.flow.set(k, val) || {
            if k == "nil_certain" {
                o.classify.nil_certain = val;
                true
            } else {
                false
            }
        };
        if !known {
            return Err(CliError::Invalid(format!("--tol: unknown key {k:?}")));
        }
    }
    Ok(o)
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn load_scenario(cfg: &RunConfig, tol: Tolerances) -> Result<Scenario, CliError> {
    match (&cfg.scenario, &cfg.preset) {
        (Some(path), _) => {
            let text = read(path)?;
            let j: ScenarioJson = serde_json::from_str(&text)
                .map_err(|e| CliError::Invalid(format!("{}: parse error: {e}", path.display())))?;
            scenario_from_json(&j, tol).map_err(|e| CliError::Invalid(format!("scenario rejected: {e}")))
        }
        (None, Some(name)) => preset(name, tol).map_err(|e| CliError::Invalid(e.to_string())),
        (None, None) => Err(CliError::Invalid("one of --scenario or --preset is required".into())),
    }
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum PointsFile {
    Wrapped { points: Vec<MatrixJson> },
    Bare(Vec<MatrixJson>),
}

pub fn load_points(cfg: &RunConfig, s: &Scenario) -> Result<Vec<GroupPoint>, CliError> {
    let path = cfg.points.as_ref().ok_or_else(|| CliError::Invalid("--points is required".into()))?;
    let text = read(path)?;
    if text.trim().is_empty() {
        return Ok(vec![]);
    }
    let raw = match serde_json::from_str::<PointsFile>(&text)
        .map_err(|e| CliError::Invalid(format!("{}: parse error: {e}", path.display())))?
    {
        PointsFile::Wrapped { points } | PointsFile::Bare(points) => points,
    };
    raw.iter()
        .enumerate()
        .map(|(i, m)| {
            let x = matrix_from_json(m).map_err(|e| CliError::Invalid(format!("point {i}: {e}")))?;
            if x.nrows() != s.n() {
                return Err(CliError::Invalid(format!("point {i}: expected {0}x{0}", s.n())));
            }
            cartan_factor(s, &x).map_err(|e| CliError::Invalid(format!("point {i}: {e}")))
        })
        .collect()
}

fn mat(m: &CMatrix) -> Value {
    json!(matrix_to_json(m))
}

fn complex_list(zs: &[coset_core::Complex64]) -> Value {
    let mut v: Vec<[f64; 2]> = zs.iter().map(|z| [z.re, z.im]).collect();
    v.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    json!(v)
}

pub fn execute(cfg: &RunConfig) -> Result<(Value, i32), CliError> {
    let o = parse_overrides(&cfg.tol)?;
    if cfg.command == Command::Example {
        let name = cfg.name.as_deref().ok_or_else(|| {
            CliError::Invalid(format!("example requires a name: one of {:?}", fixtures::NAMES))
        })?;
        if !fixtures::NAMES.contains(&name) {
            return Err(CliError::Invalid(format!("unknown example {name:?}; expected one of {:?}", fixtures::NAMES)));
        }
        let rep = fixtures::run(name, cfg.seed, o.tol).map_err(CliError::Compute)?;
        let code = rep.exit_code();
        let mut v = serde_json::to_value(&rep).expect("serializable");
        v["command"] = json!("example");
        v["all_pass"] = json!(rep.rows.iter().all(|r| r.pass));
        return Ok((v, code));
    }
    if cfg.name.is_some() {
        return Err(CliError::Invalid("unexpected positional argument".into()));
    }
    let s = load_scenario(cfg, o.tol)?;
    let jobs = cfg.jobs.max(1);
    let mut v = match cfg.command {
        Command::Info => info(&s),
        Command::Phi => phi_cmd(&s, &load_points(cfg, &s)?)?,
        Command::Flow => flow_cmd(&s, &load_points(cfg, &s)?, &o.classify.flow, jobs),
        Command::Classify => {
            let pts = load_points(cfg, &s)?;
            let ctx = OrbitContext::new(s, cfg.seed).map_err(|e| CliError::Compute(e.to_string()))?;
            classify_cmd(&ctx, &pts, &o.classify, cfg.seed, jobs)
        }
        Command::Cartans => cartans_cmd(s, cfg.seed, false)?,
        Command::Weyl => cartans_cmd(s, cfg.seed, true)?,
        Command::Example => unreachable!(),
    };
    v["command"] = json!(format!("{:?}", cfg.command).to_lowercase());
    v["seed"] = json!(cfg.seed);
    v["tolerances"] = serde_json::to_value(o.tol).expect("serializable");
    Ok((v, 0))
}

pub fn info(s: &Scenario) -> Value {
    let rep = validate_scenario(s);
    let (tau_c, _) = s.center.restrict(|x| s.tau_x(&identity(s.n()), &identity(s.n()), x));
    let spectrum = if s.center.dim() == 0 { vec![] } else { eigenvalues(&from_real(&tau_c)) };
    json!({
        "scenario": s.name,
        "N": s.n(),
        "dims": {
            "g": s.dim(),
            "k": s.k.dim(),
            "p": s.p.dim(),
            "g_sigma1": s.g1.dim(),
            "g_minus_sigma1": s.g1m.dim(),
            "g_sigma2": s.g2.dim(),
            "g_minus_sigma2": s.g2m.dim(),
            "center": s.center.dim(),
        },
        "validation": rep.checks.iter().map(|c| json!({
            "name": c.name, "passed": c.passed, "residual": c.residual, "threshold": c.threshold,
        })).collect::<Vec<_>>(),
        "valid": rep.passed(),
        "tau_center_spectrum": complex_list(&spectrum),
        "is_complex": s.is_complex,
    })
}

fn phi_cmd(s: &Scenario, pts: &[GroupPoint]) -> Result<Value, CliError> {
    let tol = s.tol.eps_member;
    let rows: Vec<Value> = pts
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let g = phi(s, x);
            let zero = match in_zero_fiber(s, x, tol) {
                Ok(b) => json!(b),
                Err(e) => json!({"error": e.to_string()}),
            };
            json!({
                "index": i,
                "beta1": mat(&g.beta1),
                "beta2": mat(&g.beta2),
                "norm": g.norm,
                "residual": g.residual,
                "in_zero_fiber": zero,
            })
        })
        .collect();
    Ok(json!({"points": rows, "zero_fiber_tol": tol}))
}

fn trace_json(t: &FlowTrace) -> Value {
    let mut csv = String::from("iteration,norm,step\n");
    for (i, st) in t.steps.iter().enumerate() {
        csv.push_str(&format!("{i},{:.16e},{:.16e}\n", st.norm, st.step));
    }
    json!({
        "iterations": t.iterations,
        "converged": t.converged,
        "stalled": t.stalled,
        "initial_norm": t.initial_norm,
        "final_norm": t.final_norm,
        "invariant_drift": t.invariant_drift,
        "csv": csv,
    })
}

/// Order-preserving parallel map; results never depend on `jobs`.
fn par_map<T: Sync, R: Send>(xs: &[T], jobs: usize, f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, xs.len().max(1));
    let chunk = xs.len().div_ceil(jobs).max(1);
    let f = &f;
    std::thread::scope(|sc| {
        let handles: Vec<_> = xs
            .chunks(chunk)
            .enumerate()
            .map(|(ci, part)| sc.spawn(move || part.iter().enumerate().map(|(j, x)| f(ci * chunk + j, x)).collect::<Vec<R>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn flow_cmd(s: &Scenario, pts: &[GroupPoint], params: &FlowParams, jobs: usize) -> Value {
    let rows = par_map(pts, jobs, |i, x| match flow_to_closed(s, x, params) {
        Ok((end, trace)) => json!({"index": i, "status": "converged", "endpoint": mat(&end.value), "trace": trace_json(&trace)}),
        Err(GradError::MaxItersExceeded { point, trace }) => {
            json!({"index": i, "status": "not_converged", "endpoint": mat(&point.value), "trace": trace_json(&trace)})
        }
        Err(e) => json!({"index": i, "status": "error", "error": e.to_string()}),
    });
    json!({"points": rows, "flow": serde_json::to_value(params).expect("serializable")})
}

pub fn report_json(i: usize, r: &Result<OrbitReport, OrbitError>) -> Value {
    match r {
        Ok(o) => json!({
            "index": i,
            "verdict": if o.closed { "closed" } else { "non_closed" },
            "point": mat(&o.point.value),
            "closed": o.closed,
            "orbit_dim": o.orbit_dim,
            "regular": o.regular,
            "strongly_regular": o.strongly_regular,
            "isotropy_dim": o.isotropy_dim,
            "isotropy_compact": o.isotropy_compact,
            "proper_point": o.proper_point,
            "cartan_class": o.cartan_class,
            "closed_base": o.closed_base.as_ref().map(|b| mat(&b.value)),
            "nil_witness": o.nil_witness.as_ref().map(mat),
            "diagnostics": serde_json::to_value(&o.diagnostics).expect("serializable"),
        }),
        Err(OrbitError::Inconclusive { reason, diagnostics }) => json!({
            "index": i,
            "verdict": "inconclusive",
            "reason": reason,
            "diagnostics": serde_json::to_value(diagnostics.as_ref()).expect("serializable"),
        }),
        Err(e) => json!({"index": i, "verdict": "error", "reason": e.to_string()}),
    }
}

pub fn classify_cmd(ctx: &OrbitContext, pts: &[GroupPoint], params: &ClassifyParams, seed: u64, jobs: usize) -> Value {
    let results = classify_batch(ctx, pts, params, seed, jobs);
    let count = |f: &dyn Fn(&Result<OrbitReport, OrbitError>) -> bool| results.iter().filter(|r| f(r)).count();
    json!({
        "scenario": ctx.scenario.name,
        "max_orbit_dim": ctx.max_orbit_dim,
        "points": results.iter().enumerate().map(|(i, r)| report_json(i, r)).collect::<Vec<_>>(),
        "summary": {
            "total": results.len(),
            "closed": count(&|r| matches!(r, Ok(o) if o.closed)),
            "non_closed": count(&|r| matches!(r, Ok(o) if !o.closed)),
            "strongly_regular": count(&|r| matches!(r, Ok(o) if o.strongly_regular)),
            "inconclusive": count(&|r| matches!(r, Err(OrbitError::Inconclusive { .. }))),
            "errors": count(&|r| matches!(r, Err(e) if !matches!(e, OrbitError::Inconclusive { .. }))),
        },
    })
}

fn class_json(c: &StandardCartanSubset) -> Value {
    json!({
        "class_id": c.class_id,
        "dim_t": c.n_t,
        "dim_a": c.dim() - c.n_t,
        "eta1": c.eta1,
        "n": mat(&c.n),
        "basis": c.basis.iter().map(mat).collect::<Vec<_>>(),
        "invariants": serde_json::to_value(&c.invariants).expect("serializable"),
    })
}

fn cartans_cmd(s: Scenario, seed: u64, full_weyl: bool) -> Result<Value, CliError> {
    let compute = |e: &dyn std::fmt::Display| CliError::Compute(e.to_string());
    let ctx = OrbitContext::new(s, seed).map_err(|e| compute(&e))?;
    let table = ctx.class_table().map_err(|e| compute(&e))?;
    let mut classes = vec![];
    for c in table {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c.class_id as u64 + 1).wrapping_mul(0x9e37_79b9));
        let w = weyl_group(&ctx.scenario, c, 100, &mut rng).map_err(|e| compute(&e))?;
        let mut v = class_json(c);
        v["weyl_order"] = json!(w.order);
        v["weyl_complete"] = json!(w.complete);
        if full_weyl {
            v["weyl"] = serde_json::to_value(&w).expect("serializable");
        }
        classes.push(v);
    }
    let f = &ctx.cartan.fundamental;
    Ok(json!({
        "scenario": ctx.scenario.name,
        "fundamental": {"dim_t": f.dim_t(), "dim_a": f.dim_a()},
        "classes": classes,
    }))
}
