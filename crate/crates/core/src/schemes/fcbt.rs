//! Cache-only beamforming driver.

use super::init::initialize_fcbt;
use super::{OuterLoopSettings, Scheme, SchemeSolution, SchemeStatus, TraceRecord, RATE_FLOOR};
use crate::error::Result;
use crate::ir::{build_fcbt_ir, ProblemConstants};
use crate::linalg::CVec;
use crate::model::{group_rates, latency, sinr_edge, BeamKind, BeamformerSet, Delivery, Instance};
use crate::solver::{solve, SolveStatus};

/// Relative shrink of the auxiliaries at the first start; later starts are
/// previous optima and only need to clear the boundary.
const FIRST_MARGIN: f64 = 1e-3;
const LATER_MARGIN: f64 = 1e-9;

fn exact_latency(inst: &Instance, beams: &[CVec]) -> Result<(f64, Vec<f64>)> {
    let rates = group_rates(inst, &sinr_edge(inst, beams));
    Ok((latency(Delivery::CacheOnly, inst.config.file_size, 0.0, &rates, &[])?, rates))
}

/// Successive convex approximation over the beamformers with every requested
/// file served from cache.
///
/// The instance's cache is treated as full regardless of its placement. Each
/// iteration linearizes the SINR around the current beams with the exact
/// interference, solves the convex surrogate and keeps the result only if the
/// delivery-time bound decreased, so the recorded objective never increases.
pub fn solve_fcbt(inst: &Instance, settings: &OuterLoopSettings) -> Result<SchemeSolution> {
    settings.validate()?;
    let full;
    let inst = if inst.all_requested_cached() {
        inst
    } else {
        full = inst.with_full_cache();
        &full
    };
    let k = ProblemConstants::new(inst, RATE_FLOOR);
    let mut beams = initialize_fcbt(inst);
    let mut bound = exact_latency(inst, &beams)?.0;
    let mut trace = vec![TraceRecord { outer_iter: 0, inner_iter: 0, objective: bound, approx_error: None, lambda: None, rho: None }];
    let mut status = SchemeStatus::MaxIterations;
    let mut inaccurate = 0;
    let mut iterations = 0;
    for t in 1..=settings.max_inner_iterations {
        iterations = t;
        let margin = if t == 1 { FIRST_MARGIN } else { LATER_MARGIN };
        let (ir, layout) = build_fcbt_ir(inst, &k, &beams, margin);
        let report = solve(&ir, &settings.solver)?;
        if report.status == SolveStatus::Inaccurate {
            inaccurate += 1;
        }
        let point = layout.read(&report.x);
        let next = if point.delivery_time < bound {
            beams = point.beams;
            point.delivery_time
        } else {
            bound
        };
        let change = (bound - next).abs() / bound;
        bound = next;
        trace.push(TraceRecord { outer_iter: 0, inner_iter: t, objective: bound, approx_error: None, lambda: None, rho: None });
        if change <= settings.epsilon {
            status = SchemeStatus::Converged;
            break;
        }
    }
    let (latency, rates) = exact_latency(inst, &beams)?;
    Ok(SchemeSolution {
        scheme: Scheme::Fcbt,
        status,
        latency,
        tau: 0.0,
        beams: BeamformerSet { kind: BeamKind::CacheOnly, edge: beams, joint: Vec::new(), quantization: Vec::new() },
        edge_rates: rates,
        joint_rates: Vec::new(),
        fronthaul_rates: vec![f64::INFINITY; inst.num_errhs()],
        relaxed_latency: None,
        relaxed: None,
        approx_error: None,
        extraction: None,
        trace,
        outer_iterations: 1,
        inner_iterations: iterations,
        inaccurate_solves: inaccurate,
    })
}
