//! Feasible starting points for the drivers.

use num_complex::Complex64;

use super::{OuterLoopSettings, STREAM_INIT};
use crate::ir::restrict;
use crate::linalg::{identity, outer, random_unit, real_scale, real_scale_vec, sub_block, trace_re, CMat, CVec};
use crate::model::{BeamKind, BeamformerSet, Instance};

/// Fraction of the power budget the initial points use, keeping them interior.
const POWER_MARGIN: f64 = 1e-3;

/// Channel-matched beams: group `g`'s block at eRRH `i` points along the sum of
/// its members' channels there, with `(1 - 1e-3) P / G` power.
pub fn initialize_fcbt(inst: &Instance) -> Vec<CVec> {
    let nt = inst.antennas();
    let groups = inst.num_groups();
    let per_block = (1.0 - POWER_MARGIN) * inst.power() / groups as f64;
    (0..groups)
        .map(|g| {
            let mut w = CVec::zeros(inst.stacked_dim());
            for i in 0..inst.num_errhs() {
                let mut dir = CVec::zeros(nt);
                for &k in &inst.groups.members[g] {
                    dir += inst.channels[k].rows(i * nt, nt);
                }
                if dir.norm() < 1e-12 {
                    dir = CVec::from_element(nt, Complex64::new(1.0, 0.0));
                }
                let dir = real_scale_vec(&dir, per_block.sqrt() / dir.norm());
                w.rows_mut(i * nt, nt).copy_from(&dir);
            }
            w
        })
        .collect()
}

/// Random cached parts, fronthaul-sized fetched parts and identity
/// quantization noise, then scaled per eRRH into the power budget.
///
/// The fetched part of every group at eRRH `i` is `sqrt(delta (e^C - 1) / n_i) v_i`
/// with `n_i` the number of groups fetched there and `v_i` one random unit
/// vector, so that `ln|sum v v^H + I| = ln(1 + delta (e^C - 1)) < C`.
/// For [`BeamKind::Pipelined`] the `edge` beams are independent random beams on
/// the caching eRRHs.
pub fn initialize_partial(inst: &Instance, settings: &OuterLoopSettings, kind: BeamKind) -> BeamformerSet {
    let mut rng = crate::model::stream_rng(inst.seed, STREAM_INIT);
    let nt = inst.antennas();
    let groups = inst.num_groups();
    let power = inst.power();
    let delta = settings.delta;
    let capacity = inst.config.fronthaul_capacity;
    let mut joint = vec![CVec::zeros(inst.stacked_dim()); groups];
    let mut edge = vec![CVec::zeros(inst.stacked_dim()); if kind == BeamKind::Pipelined { groups } else { 0 }];
    let mut quant = Vec::with_capacity(inst.num_errhs());
    for i in 0..inst.num_errhs() {
        let fetched = inst.fetch_count(i);
        let cached = groups - fetched;
        let v_dir = random_unit(&mut rng, nt);
        for g in 0..groups {
            let block = if inst.cached(g, i) {
                real_scale_vec(&random_unit(&mut rng, nt), (delta * power / cached as f64).sqrt())
            } else {
                real_scale_vec(&v_dir, (delta * capacity.exp_m1() / fetched as f64).sqrt())
            };
            joint[g].rows_mut(i * nt, nt).copy_from(&block);
        }
        let mut q = if fetched > 0 { identity(nt) } else { CMat::zeros(nt, nt) };
        let used: f64 = joint.iter().map(|w| w.rows(i * nt, nt).norm_squared()).sum::<f64>() + trace_re(&q);
        let budget = (1.0 - POWER_MARGIN) * power;
        if used > budget {
            let c2 = budget / used;
            for w in joint.iter_mut() {
                let scaled = real_scale_vec(&w.rows(i * nt, nt).into_owned(), c2.sqrt());
                w.rows_mut(i * nt, nt).copy_from(&scaled);
            }
            q = real_scale(&q, c2);
        }
        quant.push(q);
        if kind == BeamKind::Pipelined && cached > 0 {
            let share = (1.0 - POWER_MARGIN) * delta.min(1.0) * power / cached as f64;
            for g in (0..groups).filter(|&g| inst.cached(g, i)) {
                let b = real_scale_vec(&random_unit(&mut rng, nt), share.sqrt());
                edge[g].rows_mut(i * nt, nt).copy_from(&b);
            }
        }
    }
    BeamformerSet { kind, edge, joint, quantization: quant }
}

/// Lifted matrices of a vector start: `w w^H + eps I`, rescaled per eRRH so the
/// power budget still holds strictly.
pub(crate) struct LiftedStart {
    pub joint: Vec<CMat>,
    pub quant: Vec<CMat>,
    /// Edge matrices on the caching eRRHs of each group (`0 x 0` where none).
    pub edge: Vec<CMat>,
}

pub(crate) fn lift_start(inst: &Instance, set: &BeamformerSet) -> LiftedStart {
    let nt = inst.antennas();
    let n = inst.stacked_dim();
    let groups = inst.num_groups();
    let budget = (1.0 - POWER_MARGIN) * inst.power();
    let ridge = 1e-4 * inst.power() / (groups * nt) as f64;
    let mut joint: Vec<CMat> = set.joint.iter().map(|w| outer(w) + real_scale(&identity(n), ridge)).collect();
    let mut quant = set.quantization.clone();
    // Congruence scaling per eRRH keeps every fronthaul ratio ln|A_i| - ln|Omega_i| unchanged.
    for i in 0..inst.num_errhs() {
        let used: f64 = joint.iter().map(|m| trace_re(&sub_block(m, i * nt, nt))).sum::<f64>() + trace_re(&quant[i]);
        if used > budget {
            let c = (budget / used).sqrt();
            let mut d = vec![1.0; n];
            for r in inst.block(i) {
                d[r] = c;
            }
            for m in joint.iter_mut() {
                congruence(m, &d);
            }
            quant[i] = real_scale(&quant[i], c * c);
        }
    }
    let mut edge = Vec::with_capacity(groups);
    for g in 0..groups {
        let caching = inst.caching_errhs(g);
        if set.kind != BeamKind::Pipelined || caching.is_empty() {
            edge.push(CMat::zeros(0, 0));
            continue;
        }
        let w = restrict(&set.edge[g], &caching, nt);
        edge.push(outer(&w) + real_scale(&identity(w.len()), ridge));
    }
    if set.kind == BeamKind::Pipelined {
        for i in 0..inst.num_errhs() {
            let mut used = 0.0;
            let mut parts = Vec::new();
            for (g, m) in edge.iter().enumerate() {
                if let Some(pos) = inst.caching_errhs(g).iter().position(|&c| c == i) {
                    used += trace_re(&sub_block(m, pos * nt, nt));
                    parts.push((g, pos));
                }
            }
            if used > budget {
                let c = (budget / used).sqrt();
                for (g, pos) in parts {
                    let mut d = vec![1.0; edge[g].nrows()];
                    for r in pos * nt..(pos + 1) * nt {
                        d[r] = c;
                    }
                    congruence(&mut edge[g], &d);
                }
            }
        }
    }
    LiftedStart { joint, quant, edge }
}

/// `m <- D m D` for diagonal `D`.
fn congruence(m: &mut CMat, d: &[f64]) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            m[(r, c)] *= d[r] * d[c];
        }
    }
}
