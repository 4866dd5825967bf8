mod common;

use cmll::linalg::{CMat, CVec};
use cmll::model::{
    delay_tau, fronthaul_rates, latency, rate, sinr_edge, sinr_joint, CacheState, Delivery, Instance, NetworkConfig,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn cvec(values: &[Complex64]) -> CVec {
    CVec::from_column_slice(values)
}

/// Instance with explicit channels; every requested file is cached iff `cached`.
fn toy(errhs: usize, antennas: usize, channels: Vec<CVec>, requests: Vec<usize>, cached: bool) -> Instance {
    let users = channels.len();
    let files = requests.iter().max().unwrap() + 1;
    let groups = {
        let mut r = requests.clone();
        r.sort();
        r.dedup();
        r.len()
    };
    let cfg = NetworkConfig {
        num_errhs: errhs,
        num_users: users,
        num_groups: groups,
        antennas,
        num_files: files,
        cache_fraction: if cached { 1.0 } else { 0.0 },
        ..Default::default()
    };
    let cache = if cached { CacheState::full(files, errhs) } else { CacheState::empty(files, errhs) };
    Instance::from_parts(cfg, channels, cache, requests).unwrap()
}

#[test]
fn full_and_empty_caching() {
    let full = Instance::generate(&NetworkConfig { cache_fraction: 1.0, ..Default::default() }, 1).unwrap();
    for f in 0..full.config.num_files {
        for i in 0..full.num_errhs() {
            assert!(full.cache.is_cached(f, i));
        }
    }
    let empty = Instance::generate(&NetworkConfig { cache_fraction: 0.0, ..Default::default() }, 1).unwrap();
    assert_eq!(empty.config.cache_capacity(), 0.0);
    assert!((0..empty.num_errhs()).all(|i| empty.cache.files_at(i) == 0));
}

#[test]
fn default_draw_caches_five_files_and_is_reproducible() {
    let cfg = NetworkConfig::default();
    let a = Instance::generate(&cfg, 7).unwrap();
    let b = Instance::generate(&cfg, 7).unwrap();
    for i in 0..a.num_errhs() {
        assert_eq!(a.cache.files_at(i), 5);
    }
    assert_eq!(a.errh_positions, b.errh_positions);
    assert_eq!(a.user_positions, b.user_positions);
    assert_eq!(a.channels, b.channels);
    assert_eq!(a.requests, b.requests);
    for p in a.errh_positions.iter().chain(&a.user_positions) {
        assert!((p[0] * p[0] + p[1] * p[1]).sqrt() <= cfg.cell_radius);
    }
    assert_eq!(a.num_groups(), 3);
}

#[test]
fn edge_sinr_examples() {
    let one = toy(1, 1, vec![cvec(&[c(1.0)])], vec![0], true);
    assert!((sinr_edge(&one, &[cvec(&[c(2.0)])])[0] - 4.0).abs() < 1e-15);
    assert_eq!(sinr_edge(&one, &[cvec(&[c(0.0)])])[0], 0.0);
    let two = toy(1, 1, vec![cvec(&[c(1.0)]), cvec(&[c(1.0)])], vec![0, 1], true);
    let s = sinr_edge(&two, &[cvec(&[c(1.0)]), cvec(&[c(1.0)])]);
    assert!((s[0] - 0.5).abs() < 1e-15);
}

#[test]
fn joint_sinr_examples() {
    let one = toy(1, 1, vec![cvec(&[c(1.0)])], vec![0], false);
    let q = CMat::from_element(1, 1, c(1.0));
    assert!((sinr_joint(&one, &[cvec(&[c(1.0)])], &[q])[0] - 0.5).abs() < 1e-15);
}

#[test]
fn joint_sinr_matches_scalar_arithmetic() {
    // Two eRRHs with two antennas, three users in two groups, written out by hand.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h: Vec<CVec> = (0..3).map(|_| common::random_cvec(&mut rng, 4)).collect();
    let w: Vec<CVec> = (0..2).map(|_| common::random_cvec(&mut rng, 4)).collect();
    let q: Vec<CMat> = (0..2).map(|_| common::random_hpd(&mut rng, 2, 0.1)).collect();
    let inst = toy(2, 2, h.clone(), vec![0, 1, 0], false);
    let got = sinr_joint(&inst, &w, &q);
    for k in 0..3 {
        let own = [0, 1, 0][k];
        let gain = |g: usize| {
            let mut z = Complex64::new(0.0, 0.0);
            for n in 0..4 {
                z += h[k][n].conj() * w[g][n];
            }
            z.norm_sqr()
        };
        let mut noise = 0.0;
        for (i, qi) in q.iter().enumerate() {
            for a in 0..2 {
                for b in 0..2 {
                    noise += (h[k][2 * i + a].conj() * qi[(a, b)] * h[k][2 * i + b]).re;
                }
            }
        }
        let expect = gain(own) / (gain(1 - own) + noise + 1.0);
        assert!((got[k] - expect).abs() <= 1e-12 * expect.max(1.0), "user {k}: {} vs {expect}", got[k]);
    }
}

#[test]
fn rate_examples() {
    assert_eq!(rate(0.0), 0.0);
    assert!((rate(std::f64::consts::E - 1.0) - 1.0).abs() < 1e-15);
    assert!((rate(4.0) - 5f64.ln()).abs() < 1e-15);
}

#[test]
fn fronthaul_examples() {
    let cached = toy(1, 1, vec![cvec(&[c(1.0)])], vec![0], true);
    let g = fronthaul_rates(&cached, &[cvec(&[c(1.0)])], &[CMat::identity(1, 1)]).unwrap();
    assert!(g[0].is_infinite());
    let scalar = toy(1, 1, vec![cvec(&[c(1.0)])], vec![0], false);
    let g = fronthaul_rates(&scalar, &[cvec(&[c(1.0)])], &[CMat::identity(1, 1)]).unwrap();
    assert!((g[0] - 2f64.ln()).abs() < 1e-14);
    let pair = toy(1, 2, vec![cvec(&[c(1.0), c(0.0)])], vec![0], false);
    let g = fronthaul_rates(&pair, &[cvec(&[c(1.0), c(1.0)])], &[CMat::identity(2, 2)]).unwrap();
    assert!((g[0] - 3f64.ln()).abs() < 1e-14);
}

#[test]
fn delay_examples() {
    let inst = toy(1, 1, vec![cvec(&[c(1.0)])], vec![0], false);
    assert_eq!(delay_tau(&inst, &[f64::INFINITY]), 0.0);
    assert!((delay_tau(&inst, &[2f64.ln()]) - (0.01 + 1.5 / 2f64.ln())).abs() < 1e-12);
    assert!((delay_tau(&inst, &[2f64.ln()]) - 2.17404).abs() < 1e-5);
    let mut two = toy(2, 1, vec![cvec(&[c(1.0), c(1.0)])], vec![0], false);
    two.config.fetch_overhead = 0.0;
    two.config.file_size = 1.0;
    assert!((delay_tau(&two, &[1.0, 2.0]) - 1.0).abs() < 1e-15);
}

#[test]
fn latency_examples() {
    assert!((latency(Delivery::CacheOnly, 1.5, 0.0, &[0.5, 0.75], &[]).unwrap() - 3.0).abs() < 1e-15);
    let tau = 2.0;
    let edge = [0.75, 1.5 / tau];
    assert!((latency(Delivery::Pipelined, 1.5, tau, &[1.5 / tau, 1.5 / tau], &[0.3, 0.9]).unwrap() - tau).abs() < 1e-15);
    assert!(latency(Delivery::Pipelined, 1.5, tau, &edge, &[0.3, 0.9]).unwrap() >= tau);
    assert!((latency(Delivery::Bypass, 1.2, 0.5, &[], &[0.6]).unwrap() - 2.5).abs() < 1e-15);
    assert!(latency(Delivery::Pipelined, 1.5, 2.0, &[1.0], &[1.0]).is_err());
}

fn random_instance(seed: u64, antennas: usize) -> Instance {
    Instance::generate(&NetworkConfig { antennas, ..Default::default() }, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_sinr_without_noise_is_edge_sinr(seed in 0u64..10_000, antennas in 1usize..3) {
        let inst = random_instance(seed, antennas);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<CVec> = (0..inst.num_groups()).map(|_| common::random_cvec(&mut rng, inst.stacked_dim())).collect();
        let zero = vec![CMat::zeros(antennas, antennas); inst.num_errhs()];
        prop_assert_eq!(sinr_joint(&inst, &w, &zero), sinr_edge(&inst, &w));
    }

    #[test]
    fn fronthaul_rate_is_nonnegative(seed in 0u64..10_000, antennas in 1usize..4) {
        let inst = random_instance(seed, antennas);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let w: Vec<CVec> = (0..inst.num_groups()).map(|_| common::random_cvec(&mut rng, inst.stacked_dim())).collect();
        let q: Vec<CMat> = (0..inst.num_errhs()).map(|_| common::random_hpd(&mut rng, antennas, 1e-3)).collect();
        for g in fronthaul_rates(&inst, &w, &q).unwrap() {
            prop_assert!(g >= -1e-12);
        }
    }

    #[test]
    fn delay_never_grows_when_a_link_speeds_up(rates in prop::collection::vec(0.05f64..5.0, 3), which in 0usize..3, boost in 0.0f64..3.0) {
        let inst = random_instance(1, 1);
        let before = delay_tau(&inst, &rates);
        let mut faster = rates.clone();
        faster[which] += boost;
        prop_assert!(delay_tau(&inst, &faster) <= before);
    }

    #[test]
    fn pipelined_latency_reductions(s in 0.1f64..3.0, tau in 0.0f64..2.0, r in prop::collection::vec(0.05f64..4.0, 1..4)) {
        let zero = vec![0.0; r.len()];
        let pipe = latency(Delivery::Pipelined, s, tau, &zero, &r).unwrap();
        let bulk = latency(Delivery::Bypass, s, tau, &[], &r).unwrap();
        prop_assert_eq!(pipe.to_bits(), bulk.to_bits());
        let no_fetch = latency(Delivery::Pipelined, s, 0.0, &r, &r).unwrap();
        let cache_only = latency(Delivery::CacheOnly, s, 0.0, &r, &[]).unwrap();
        prop_assert_eq!(no_fetch.to_bits(), cache_only.to_bits());
    }

    #[test]
    fn evaluators_are_pure(seed in 0u64..10_000) {
        let inst = random_instance(seed, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<CVec> = (0..inst.num_groups()).map(|_| common::random_cvec(&mut rng, inst.stacked_dim())).collect();
        let q: Vec<CMat> = (0..inst.num_errhs()).map(|_| common::random_hpd(&mut rng, 2, 0.1)).collect();
        let a = (sinr_joint(&inst, &w, &q), fronthaul_rates(&inst, &w, &q).unwrap());
        let b = (sinr_joint(&inst, &w, &q), fronthaul_rates(&inst, &w, &q).unwrap());
        prop_assert_eq!(a, b);
    }
}
