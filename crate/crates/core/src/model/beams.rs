use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::instance::Instance;
use crate::linalg::{trace_re, CMat, CVec};

/// Which transmission structure a beamformer set describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamKind {
    /// Every group served from eRRH caches only.
    CacheOnly,
    /// One phase after fetching: cached and fetched parts merged per eRRH.
    Bypass,
    /// Cached parts sent while fetching, then a merged phase.
    Pipelined,
}

/// Beamformers of one solution.
///
/// `edge` holds the cache-only beams (all of FCBT, or the phase sent while
/// fetching); `joint` holds the merged beams of the post-fetch phase;
/// `quantization` holds one fronthaul noise covariance per eRRH, zero where
/// nothing is fetched. Unused parts are empty vectors.
#[derive(Clone, Debug)]
pub struct BeamformerSet {
    pub kind: BeamKind,
    pub edge: Vec<CVec>,
    pub joint: Vec<CVec>,
    pub quantization: Vec<CMat>,
}

impl BeamformerSet {
    /// Cached part `u_g`: the joint beam restricted to eRRHs holding the file.
    pub fn cache_part(&self, inst: &Instance, g: usize) -> CVec {
        mask(inst, &self.joint[g], |i| inst.cached(g, i))
    }

    /// Fetched part `v_g`: the joint beam restricted to eRRHs lacking the file.
    pub fn fetch_part(&self, inst: &Instance, g: usize) -> CVec {
        mask(inst, &self.joint[g], |i| !inst.cached(g, i))
    }

    /// Per-eRRH transmit power of the edge beams.
    pub fn edge_power(&self, inst: &Instance) -> Vec<f64> {
        per_errh_power(inst, &self.edge, &[])
    }

    /// Per-eRRH transmit power of the joint beams plus quantization noise.
    pub fn joint_power(&self, inst: &Instance) -> Vec<f64> {
        per_errh_power(inst, &self.joint, &self.quantization)
    }
}

fn mask(inst: &Instance, v: &CVec, keep: impl Fn(usize) -> bool) -> CVec {
    let mut out = v.clone();
    for i in 0..inst.num_errhs() {
        if !keep(i) {
            for r in inst.block(i) {
                out[r] = Complex64::new(0.0, 0.0);
            }
        }
    }
    out
}

pub(crate) fn per_errh_power(inst: &Instance, beams: &[CVec], quant: &[CMat]) -> Vec<f64> {
    (0..inst.num_errhs())
        .map(|i| {
            let b: f64 = beams.iter().map(|w| inst.block(i).map(|r| w[r].norm_sqr()).sum::<f64>()).sum();
            b + quant.get(i).map(trace_re).unwrap_or(0.0)
        })
        .collect()
}
