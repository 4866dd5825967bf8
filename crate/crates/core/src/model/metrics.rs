use super::instance::Instance;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_logdet, inner, quad_form, sub_block, sub_vec, CMat, CVec};

/// `ln(1 + sinr)` in nats/s/Hz.
pub fn rate(sinr: f64) -> f64 {
    sinr.ln_1p()
}

fn sinr_from_gains(inst: &Instance, gain: impl Fn(usize, usize) -> f64, extra: impl Fn(usize) -> f64) -> Vec<f64> {
    let sigma2 = inst.config.noise_power;
    (0..inst.num_users())
        .map(|k| {
            let own = inst.groups.group_of_user[k];
            let mut interference = 0.0;
            for g in 0..inst.num_groups() {
                if g != own {
                    interference += gain(k, g);
                }
            }
            gain(k, own) / (interference + extra(k) + sigma2)
        })
        .collect()
}

/// Per-user SINR when groups are served by `beams` alone (no quantization noise).
pub fn sinr_edge(inst: &Instance, beams: &[CVec]) -> Vec<f64> {
    sinr_from_gains(inst, |k, g| inner(&inst.channels[k], &beams[g]).norm_sqr(), |_| 0.0)
}

/// Per-user SINR of the merged phase: quantization noise `h^H Omega h` joins the interference.
pub fn sinr_joint(inst: &Instance, beams: &[CVec], quant: &[CMat]) -> Vec<f64> {
    sinr_from_gains(
        inst,
        |k, g| inner(&inst.channels[k], &beams[g]).norm_sqr(),
        |k| quant_power(inst, k, quant),
    )
}

/// Matrix (lifted) form of [`sinr_edge`]; each matrix is stacked `N x N`.
pub fn sinr_edge_sdr(inst: &Instance, mats: &[CMat]) -> Vec<f64> {
    sinr_from_gains(inst, |k, g| quad_form(&inst.channels[k], &mats[g]), |_| 0.0)
}

/// Matrix (lifted) form of [`sinr_joint`].
pub fn sinr_joint_sdr(inst: &Instance, mats: &[CMat], quant: &[CMat]) -> Vec<f64> {
    sinr_from_gains(inst, |k, g| quad_form(&inst.channels[k], &mats[g]), |k| quant_power(inst, k, quant))
}

fn quant_power(inst: &Instance, k: usize, quant: &[CMat]) -> f64 {
    let nt = inst.antennas();
    quant
        .iter()
        .enumerate()
        .map(|(i, q)| quad_form(&sub_vec(&inst.channels[k], i * nt, nt), q))
        .sum()
}

/// Multicast rate of each group: the minimum member rate.
pub fn group_rates(inst: &Instance, sinr: &[f64]) -> Vec<f64> {
    inst.groups
        .members
        .iter()
        .map(|m| m.iter().map(|&k| rate(sinr[k])).fold(f64::INFINITY, f64::min))
        .collect()
}

fn fronthaul_from_blocks(inst: &Instance, quant: &[CMat], fetched: impl Fn(usize, usize) -> CMat) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(inst.num_errhs());
    for i in 0..inst.num_errhs() {
        if inst.fetch_count(i) == 0 {
            out.push(f64::INFINITY);
            continue;
        }
        let q = quant
            .get(i)
            .ok_or_else(|| Error::Precondition(format!("missing quantization noise for eRRH {i}")))?;
        let ln_q = hermitian_logdet(q)
            .ok_or_else(|| Error::Precondition(format!("quantization noise of eRRH {i} is not positive definite")))?;
        let mut a = q.clone();
        for g in 0..inst.num_groups() {
            if !inst.cached(g, i) {
                a += fetched(g, i);
            }
        }
        let ln_a = hermitian_logdet(&a)
            .ok_or_else(|| Error::Precondition(format!("fronthaul covariance of eRRH {i} is singular")))?;
        out.push(ln_a - ln_q);
    }
    Ok(out)
}

/// Fronthaul rate `ln|A_i| - ln|Omega_i|` per eRRH, `+inf` where nothing is fetched.
pub fn fronthaul_rates(inst: &Instance, beams: &[CVec], quant: &[CMat]) -> Result<Vec<f64>> {
    let nt = inst.antennas();
    fronthaul_from_blocks(inst, quant, |g, i| {
        let v = sub_vec(&beams[g], i * nt, nt);
        &v * v.adjoint()
    })
}

/// Lifted form of [`fronthaul_rates`] using the diagonal blocks of each matrix.
pub fn fronthaul_rates_sdr(inst: &Instance, mats: &[CMat], quant: &[CMat]) -> Result<Vec<f64>> {
    let nt = inst.antennas();
    fronthaul_from_blocks(inst, quant, |g, i| sub_block(&mats[g], i * nt, nt))
}

/// Fetch delay `tau0 + S / min_i g_i` over fetching eRRHs, `0` if nothing is fetched.
pub fn delay_tau(inst: &Instance, fronthaul: &[f64]) -> f64 {
    let slowest = fronthaul.iter().copied().filter(|r| r.is_finite()).fold(f64::INFINITY, f64::min);
    if slowest.is_infinite() {
        return 0.0;
    }
    inst.config.fetch_overhead + inst.config.file_size / slowest
}

/// Delivery structure used to turn rates into a latency.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delivery {
    /// `max_g S / r_g` using the edge rates.
    CacheOnly,
    /// `max_g S / r_g + tau` using the joint rates.
    Bypass,
    /// `max_g (S - tau r1_g) / r2_g + tau`; requires `tau r1_g <= S`.
    Pipelined,
}

pub fn latency(delivery: Delivery, file_size: f64, tau: f64, edge_rates: &[f64], joint_rates: &[f64]) -> Result<f64> {
    let s = file_size;
    match delivery {
        Delivery::CacheOnly => Ok(edge_rates.iter().map(|&r| s / r).fold(0.0, f64::max)),
        Delivery::Bypass => Ok(joint_rates.iter().map(|&r| s / r).fold(0.0, f64::max) + tau),
        Delivery::Pipelined => {
            let mut worst: f64 = 0.0;
            for (g, &r2) in joint_rates.iter().enumerate() {
                let r1 = edge_rates.get(g).copied().unwrap_or(0.0);
                let left = s - tau * r1;
                if left < -1e-9 * s {
                    return Err(Error::Precondition(format!(
                        "group {g} sends {} nats while fetching, more than the file size {s}",
                        tau * r1
                    )));
                }
                let t = if left <= 0.0 { 0.0 } else { left / r2 };
                worst = worst.max(t);
            }
            Ok(worst + tau)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;
    use crate::model::{CacheState, NetworkConfig};
    use num_complex::Complex64;

    fn single_user(power_db: f64) -> Instance {
        let cfg = NetworkConfig {
            num_errhs: 1,
            num_users: 1,
            num_groups: 1,
            num_files: 1,
            cache_fraction: 1.0,
            power_db,
            ..Default::default()
        };
        let h = CVec::from_element(1, Complex64::new(1.0, 0.0));
        Instance::from_parts(cfg, vec![h], CacheState::full(1, 1), vec![0]).unwrap()
    }

    #[test]
    fn single_user_rate_and_latency() {
        let inst = single_user(10.0 * 4f64.log10());
        let w = CVec::from_element(1, Complex64::new(2.0, 0.0));
        let s = sinr_edge(&inst, &[w]);
        assert!((s[0] - 4.0).abs() < 1e-12);
        let r = group_rates(&inst, &s);
        let l = latency(Delivery::CacheOnly, 1.5, 0.0, &r, &[]).unwrap();
        assert!((l - 1.5 / 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn tau_is_zero_without_fetching() {
        let inst = single_user(20.0);
        let g = fronthaul_rates(&inst, &[CVec::zeros(1)], &[CMat::zeros(1, 1)]).unwrap();
        assert!(g[0].is_infinite());
        assert_eq!(delay_tau(&inst, &g), 0.0);
    }

    #[test]
    fn fronthaul_rate_of_scalar_link() {
        let inst = single_user(20.0).with_empty_cache();
        let v = CVec::from_element(1, Complex64::new(3f64.sqrt(), 0.0));
        let g = fronthaul_rates(&inst, &[v], &[identity(1)]).unwrap();
        assert!((g[0] - 4f64.ln()).abs() < 1e-12);
        let tau = delay_tau(&inst, &g);
        assert!((tau - (0.01 + 1.5 / 4f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn pipelined_precondition_enforced() {
        assert!(latency(Delivery::Pipelined, 1.0, 1.0, &[2.0], &[1.0]).is_err());
        let l = latency(Delivery::Pipelined, 1.0, 0.5, &[1.0], &[1.0]).unwrap();
        assert!((l - 0.5 - 0.5).abs() < 1e-12);
    }
}
