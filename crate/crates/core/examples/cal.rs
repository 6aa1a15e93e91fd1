use oab_core::estimators::*;
use oab_core::montecarlo::RandomStream;
use oab_core::simbench::*;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("bench");
    if mode == "bench" {
        let cfg = SuiteConfig::default();
        let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(20240);
        let root = RandomStream::from_seed(seed);
        let t = Instant::now();
        let suite = generate_suite(&cfg, root.derive(0));
        let bench_cfg = BenchConfig {
            estimators: cfg.estimators.clone(),
            capping: cfg.capping(),
            n_log: cfg.n_log,
            n_online: cfg.n_online,
            n_mc: cfg.n_mc,
            bootstrap_resamples: cfg.bootstrap_resamples,
            value_log_base: cfg.value_log_base,
        };
        let result = run_benchmark(&suite, &bench_cfg, root.derive(1)).unwrap();
        println!("bench took {:?}", t.elapsed());
        for row in result.summary_rows() {
            println!(
                "{:<11} corr={:?} [{:?},{:?}] prec={:?} fnr={:?} ci={:?}",
                row.estimator, row.correlation, row.correlation_q10, row.correlation_q90,
                row.precision, row.fnr, row.ci_size_ratio
            );
        }
        // per-test detail
        for r in &result.records {
            print!(
                "{:<22} online {:+.5} ({})",
                r.test_id, r.online.uplift, r.online_decision.name()
            );
            for (name, off) in &r.offline {
                print!("  {}={:+.5}({})", name, off.uplift, off.decision.name());
            }
            println!();
        }
    } else {
        // sweep shape on the heavy-tail scenario
        let (env, pi_p, pi_t) = heavy_tail_scenario();
        let root = RandomStream::from_seed(7);
        let data = simulate_log(&env, &pi_p, 100_000, root.derive(0)).unwrap();
        let inst = env.enumerable();
        let truth = enumeration::policy_value(&inst, &pi_t).unwrap();
        println!("truth E_t[R] = {truth:.4}, E_p[R] = {:.4}", enumeration::policy_value(&inst, &pi_p).unwrap());
        let grid: Vec<f64> = (0..14).map(|i| 2.0f64.powi(i)).collect();
        let rows = capping_sweep(&data, &pi_t, &grid, CapMode::Max).unwrap();
        for r in &rows {
            let half = 1.6448536269514722 * r.variance.sqrt();
            println!(
                "c={:>8.1} var={:>12.6e} half={:>9.5} bias={:>9.5} capfrac={:.4}  bias<1%={} half<1%={}",
                r.c, r.variance, half, r.bias_bound, r.capped_fraction,
                r.bias_bound < 0.01 * truth, half < 0.01 * truth
            );
        }
    }
}
