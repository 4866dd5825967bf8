//! System model: configuration, random instances, beamformer containers and
//! the closed-form SINR / rate / fronthaul / latency evaluators.

mod beams;
mod config;
mod instance;
mod metrics;

pub use beams::{BeamKind, BeamformerSet};
pub use config::NetworkConfig;
pub(crate) use instance::stream_rng;
pub use instance::{path_gain, CacheState, Instance, MulticastGroups};
pub use metrics::{
    delay_tau, fronthaul_rates, fronthaul_rates_sdr, group_rates, latency, rate, sinr_edge,
    sinr_edge_sdr, sinr_joint, sinr_joint_sdr, Delivery,
};
