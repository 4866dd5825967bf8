use cmll::experiments::{run_convergence, run_sweep, SweepParam, SweepSpec};
use cmll::model::NetworkConfig;
use cmll::schemes::{OuterLoopSettings, Scheme};

fn spec(param: SweepParam, grid: Vec<f64>, trials: usize, schemes: Vec<Scheme>) -> SweepSpec {
    SweepSpec { param, grid, network: NetworkConfig::default(), trials, base_seed: 100, schemes }
}

fn csv_bytes(spec: &SweepSpec, threads: usize) -> (Vec<u8>, Vec<u8>) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let result = pool.install(|| run_sweep(spec, &OuterLoopSettings::default())).unwrap();
    let (mut rows, mut cells) = (Vec::new(), Vec::new());
    result.write_csv(&mut rows).unwrap();
    result.write_summary_csv(&mut cells).unwrap();
    (rows, cells)
}

#[test]
fn fcbt_ignores_the_cache_fraction() {
    let s = spec(SweepParam::Xi, vec![0.0, 1.0], 2, vec![Scheme::Fcbt]);
    let result = run_sweep(&s, &OuterLoopSettings::default()).unwrap();
    let at_zero = result.paired_latencies(0.0, Scheme::Fcbt);
    let at_one = result.paired_latencies(1.0, Scheme::Fcbt);
    assert_eq!(at_zero.len(), 2);
    for (a, b) in at_zero.iter().zip(&at_one) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn one_row_per_grid_point_scheme_and_trial() {
    let s = spec(SweepParam::C, vec![1.0, 2.0], 2, vec![Scheme::Fcbt, Scheme::Pcpt]);
    let result = run_sweep(&s, &OuterLoopSettings::default()).unwrap();
    assert_eq!(result.rows.len(), 2 * 2 * 2);
    assert_eq!(result.cells.len(), 2 * 2);
    assert!(result.rows.iter().all(|r| r.param_name == "C" && r.latency_s.is_some()));
    let seeds: Vec<u64> = result.rows.iter().filter(|r| r.param_value == 1.0 && r.scheme == Scheme::Fcbt).map(|r| r.seed).collect();
    assert_eq!(seeds, vec![100, 101]);
}

#[test]
fn sweep_output_does_not_depend_on_thread_count() {
    let s = spec(SweepParam::S, vec![1.2, 2.0], 2, vec![Scheme::Fcbt, Scheme::Pcbt]);
    assert_eq!(csv_bytes(&s, 1), csv_bytes(&s, 3));
}

#[test]
fn invalid_sweeps_are_rejected() {
    let settings = OuterLoopSettings::default();
    assert!(run_sweep(&spec(SweepParam::Xi, vec![], 1, vec![Scheme::Fcbt]), &settings).is_err());
    assert!(run_sweep(&spec(SweepParam::Xi, vec![0.5, 0.2], 1, vec![Scheme::Fcbt]), &settings).is_err());
    assert!(run_sweep(&spec(SweepParam::Xi, vec![1.5], 1, vec![Scheme::Fcbt]), &settings).is_err());
    assert!(run_sweep(&spec(SweepParam::Xi, vec![0.5], 0, vec![Scheme::Fcbt]), &settings).is_err());
}

#[test]
fn convergence_traces_carry_the_penalty_residual_only_for_coupled_schemes() {
    let settings = OuterLoopSettings::default();
    let net = NetworkConfig::default();
    let fcbt = run_convergence(&net, Scheme::Fcbt, &[3], &settings).unwrap();
    assert!(!fcbt.rows.is_empty());
    assert!(fcbt.rows.iter().all(|r| r.approx_error.is_none() && r.lambda.is_none()));
    let pcpt = run_convergence(&net, Scheme::Pcpt, &[3], &settings).unwrap();
    assert!(pcpt.rows.iter().any(|r| r.approx_error.is_some()));
    let again = run_convergence(&net, Scheme::Pcpt, &[3], &settings).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    pcpt.write_csv(&mut a).unwrap();
    again.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
}
