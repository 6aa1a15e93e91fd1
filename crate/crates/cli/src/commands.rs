//! Subcommand implementations.

use std::path::Path;

use oab_core::csvio;
use oab_core::estimators::{
    capping_sweep, estimate_cis, estimate_dr, estimate_is, estimate_ncis,
    estimate_nis, estimate_piece_ncis, estimate_point_ncis, build_value_partition,
    BootstrapConfig, CappingRule, EstimatorError, EstimatorKind, EstimatorReport, McConfig,
    ValueModel, WeightSource,
};
use oab_core::logmodel::{read_log, write_log, LogDataset};
use oab_core::montecarlo::{McError, RandomStream};
use oab_core::policy::{Context, PlackettLuce, RankedAction};
use oab_core::simbench::{
    generate_suite, run_benchmark, simulate_log, simulate_online, table1_scenario, BenchConfig,
    Decision, Environment, SuiteConfig,
};

use crate::{
    BenchArgs, EstimateArgs, Failure, GenLogArgs, QuantilesArgs, SweepArgs, Table1Args,
};

impl From<EstimatorError> for Failure {
    fn from(err: EstimatorError) -> Self {
        match &err {
            EstimatorError::ZeroDenominator { .. }
            | EstimatorError::ProbeBudgetExhausted { .. }
            | EstimatorError::MonteCarlo(McError::DegenerateOverlap { .. }) => {
                Failure::degenerate(err.to_string())
            }
            _ => Failure::usage(err.to_string()),
        }
    }
}

fn load_policy(path: &Path, what: &str) -> Result<PlackettLuce, Failure> {
    PlackettLuce::from_file(path)
        .map_err(|e| Failure::usage(format!("cannot load {what} policy {path:?}: {e}")))
}

fn load_log(path: &Path) -> Result<LogDataset, Failure> {
    read_log(path).map_err(|e| Failure::usage(format!("cannot read log {path:?}: {e}")))
}

pub fn gen_log(args: GenLogArgs) -> Result<(), Failure> {
    let env = Environment::from_file(&args.env)
        .map_err(|e| Failure::usage(format!("cannot load environment {:?}: {e}", args.env)))?;
    let policy = load_policy(&args.logging_policy, "logging")?;
    let stream = RandomStream::from_seed(args.seed);
    let data = simulate_log(&env, &policy, args.n, stream)
        .map_err(|e| Failure::usage(e.to_string()))?;
    write_log(&data, &args.out)
        .map_err(|e| Failure::usage(format!("cannot write {:?}: {e}", args.out)))?;
    println!(
        "wrote {}: n={} k={} r_max={}",
        args.out.display(),
        data.n(),
        data.k,
        data.r_max
    );
    Ok(())
}

fn require_cap(args: &EstimateArgs) -> Result<CappingRule, Failure> {
    let c = args
        .cap
        .ok_or_else(|| Failure::usage("--cap is required by the capped estimators"))?;
    CappingRule::new(args.cap_mode, c).map_err(Failure::from)
}

fn print_report(report: &EstimatorReport) {
    println!(
        "{:<11} estimate={:>12.6}  ci90=[{:.6}, {:.6}]  n={}  capped={:.4}  sum_w={:.3}",
        report.estimator_name,
        report.estimate,
        report.ci_low,
        report.ci_high,
        report.n_used,
        report.capped_fraction,
        report.sum_weights
    );
}

pub fn estimate(args: EstimateArgs) -> Result<(), Failure> {
    let data = load_log(&args.log)?;
    let target = load_policy(&args.target_policy, "target")?;
    let logging = match &args.logging_policy {
        Some(path) => Some(load_policy(path, "logging")?),
        None => None,
    };

    let needs_cap = args.estimators.iter().any(|k| {
        matches!(
            k,
            EstimatorKind::Cis
                | EstimatorKind::Ncis
                | EstimatorKind::PieceNcis
                | EstimatorKind::PointNcis
        )
    });
    let capping = if needs_cap { Some(require_cap(&args)?) } else { None };
    if args.estimators.contains(&EstimatorKind::PointNcis) && logging.is_none() {
        return Err(Failure::usage(
            "point-ncis samples fresh actions and needs --logging-policy",
        ));
    }
    if args.recompute_propensities && logging.is_none() {
        return Err(Failure::usage(
            "--recompute-propensities needs --logging-policy",
        ));
    }

    // Model-based estimators fit on the first half and everything is
    // evaluated on the second, so reports stay comparable and the models
    // never see the evaluation data.
    let needs_model = args
        .estimators
        .iter()
        .any(|k| matches!(k, EstimatorKind::PieceNcis | EstimatorKind::Dr));
    let (eval_data, value_model) = if needs_model {
        let half = data.n() / 2;
        if half == 0 {
            return Err(Failure::usage(
                "log too small to hold out a model-fitting half",
            ));
        }
        let fit = LogDataset::new(data.samples[..half].to_vec(), data.k, data.r_max)
            .map_err(|e| Failure::usage(e.to_string()))?;
        let eval = LogDataset::new(data.samples[half..].to_vec(), data.k, data.r_max)
            .map_err(|e| Failure::usage(e.to_string()))?;
        println!(
            "value model fitted on held-out first half (n={}); estimates use the second half (n={})",
            fit.n(),
            eval.n()
        );
        let model = ValueModel::fit_per_segment(&fit, 10.0);
        (eval, Some(model))
    } else {
        (data, None)
    };

    let root = RandomStream::from_seed(args.seed);
    let bootstrap = BootstrapConfig::new(args.bootstrap, root.derive(0));
    let mut reports = Vec::new();
    for &kind in &args.estimators {
        let report = match kind {
            EstimatorKind::Is => {
                let source = if args.recompute_propensities {
                    WeightSource::Recompute(logging.as_ref().unwrap())
                } else {
                    WeightSource::FromLog
                };
                estimate_is(&eval_data, &target, source, &bootstrap)?
            }
            EstimatorKind::Nis => estimate_nis(&eval_data, &target, &bootstrap)?,
            EstimatorKind::Dr => {
                let vm = value_model.clone().unwrap();
                let model =
                    move |ctx: &Context, _: &RankedAction| vm.predict(ctx);
                estimate_dr(
                    &eval_data,
                    &target,
                    &model,
                    args.n_mc,
                    root.derive(2),
                    &bootstrap,
                )?
            }
            EstimatorKind::Cis => {
                estimate_cis(&eval_data, &target, capping.unwrap(), &bootstrap)?
            }
            EstimatorKind::Ncis => {
                estimate_ncis(&eval_data, &target, capping.unwrap(), &bootstrap)?
            }
            EstimatorKind::PieceNcis => {
                let partition = build_value_partition(value_model.as_ref().unwrap());
                estimate_piece_ncis(&eval_data, &target, capping.unwrap(), &partition, &bootstrap)?
            }
            EstimatorKind::PointNcis => {
                let mc = McConfig {
                    n_mc: args.n_mc,
                    adaptive: args.adaptive_cap,
                    ..McConfig::default()
                };
                estimate_point_ncis(
                    &eval_data,
                    &target,
                    logging.as_ref().unwrap(),
                    capping.unwrap(),
                    &mc,
                    root.derive(1),
                    &bootstrap,
                )?
            }
        };
        print_report(&report);
        reports.push(report);
    }

    let mut out = String::new();
    for report in &reports {
        out.push_str(&serde_json::to_string(report).expect("reports serialize"));
        out.push('\n');
    }
    std::fs::write(&args.out, out)
        .map_err(|e| Failure::usage(format!("cannot write {:?}: {e}", args.out)))?;
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let data = load_log(&args.log)?;
    let target = load_policy(&args.target_policy, "target")?;
    let rows = capping_sweep(&data, &target, &args.c_grid, args.cap_mode)?;
    csvio::write_sweep(&args.out, &rows)
        .map_err(|e| Failure::usage(format!("cannot write {:?}: {e}", args.out)))?;
    println!("wrote {} ({} rows)", args.out.display(), rows.len());
    Ok(())
}

pub fn quantiles(args: QuantilesArgs) -> Result<(), Failure> {
    let data = load_log(&args.log)?;
    let target = load_policy(&args.target_policy, "target")?;
    let logging = load_policy(&args.logging_policy, "logging")?;
    let contexts: Vec<Context> = data.samples.iter().map(|s| s.context.clone()).collect();
    let table = oab_core::estimators::weight_quantiles(
        &logging,
        &target,
        &contexts,
        &args.quantiles,
        RandomStream::from_seed(args.seed),
    )?;
    csvio::write_quantiles(&args.out, &table)
        .map_err(|e| Failure::usage(format!("cannot write {:?}: {e}", args.out)))?;
    println!(
        "wrote {} ({} quantiles over {} contexts)",
        args.out.display(),
        table.quantiles.len(),
        table.n_contexts
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.3}"),
        None => "NaN".to_string(),
    }
}

pub fn bench(args: BenchArgs) -> Result<(), Failure> {
    let cfg = SuiteConfig::from_file(&args.suite)
        .map_err(|e| Failure::usage(format!("cannot load suite {:?}: {e}", args.suite)))?;
    let root = RandomStream::from_seed(args.seed);
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
    let result = run_benchmark(&suite, &bench_cfg, root.derive(1))
        .map_err(|e| Failure::usage(e.to_string()))?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Failure::usage(format!("cannot create {:?}: {e}", args.out)))?;
    let records_path = args.out.join("records.csv");
    let summary_path = args.out.join("summary.csv");
    csvio::write_rows(&records_path, &result.record_rows())
        .map_err(|e| Failure::usage(e.to_string()))?;
    csvio::write_rows(&summary_path, &result.summary_rows())
        .map_err(|e| Failure::usage(e.to_string()))?;

    println!("{} tests, {} estimators", suite.len(), cfg.estimators.len());
    println!(
        "{:<11} {:>18} {:>18} {:>18} {:>8}",
        "estimator", "correlation", "precision", "fnr", "ci-size"
    );
    for row in result.summary_rows() {
        println!(
            "{:<11} {:>6} [{:>5},{:>5}] {:>6} [{:>5},{:>5}] {:>6} [{:>5},{:>5}] {:>8}",
            row.estimator,
            fmt_opt(row.correlation),
            fmt_opt(row.correlation_q10),
            fmt_opt(row.correlation_q90),
            fmt_opt(row.precision),
            fmt_opt(row.precision_q10),
            fmt_opt(row.precision_q90),
            fmt_opt(row.fnr),
            fmt_opt(row.fnr_q10),
            fmt_opt(row.fnr_q90),
            fmt_opt(row.ci_size_ratio),
        );
    }
    println!("wrote {} and {}", records_path.display(), summary_path.display());
    Ok(())
}

pub fn table1(args: Table1Args) -> Result<(), Failure> {
    let sc = table1_scenario();
    let inst = sc.env.enumerable();
    let true_t = oab_core::estimators::enumeration::policy_value(&inst, &sc.pi_t)?;
    let true_p = oab_core::estimators::enumeration::policy_value(&inst, &sc.pi_p)?;
    let ncis_limit =
        oab_core::estimators::enumeration::ncis_asymptotic_value(&inst, &sc.pi_t, &sc.pi_p, sc.capping)?;

    let root = RandomStream::from_seed(args.seed);
    let online = simulate_online(&sc.env, &sc.pi_p, &sc.pi_t, args.n, root.derive(0))
        .map_err(|e| Failure::usage(e.to_string()))?;
    let data = simulate_log(&sc.env, &sc.pi_p, args.n, root.derive(1))
        .map_err(|e| Failure::usage(e.to_string()))?;
    let log_mean: f64 = data.samples.iter().map(|s| s.reward).sum::<f64>() / data.n() as f64;

    let bootstrap = BootstrapConfig::new(1000, root.derive(2));
    let ncis = estimate_ncis(&data, &sc.pi_t, sc.capping, &bootstrap)?;
    let mc = McConfig::default();
    let point = estimate_point_ncis(
        &data,
        &sc.pi_t,
        &sc.pi_p,
        sc.capping,
        &mc,
        root.derive(3),
        &bootstrap,
    )?;

    let decision = |report: &EstimatorReport| {
        oab_core::simbench::decide(report.ci_low - log_mean, report.ci_high - log_mean)
    };
    let ncis_decision = decision(&ncis);
    let point_decision = decision(&point);

    let mut all_ok = true;
    let mut check = |label: &str, ok: bool, detail: String| {
        all_ok &= ok;
        println!("[{}] {label}: {detail}", if ok { "pass" } else { "FAIL" });
    };
    check(
        "true E_t[R]",
        (true_t - 2.1).abs() < 1e-9,
        format!("{true_t:.6} (exact 2.1)"),
    );
    check(
        "logged E_p[R]",
        (log_mean - true_p).abs() < 0.01,
        format!("{log_mean:.4} vs exact {true_p:.1}"),
    );
    check(
        "NCIS underestimates",
        (1.76..=1.84).contains(&ncis.estimate),
        format!("{:.4} (asymptote {ncis_limit:.4})", ncis.estimate),
    );
    check(
        "PointNCIS recovers truth",
        (2.05..=2.15).contains(&point.estimate),
        format!("{:.4}", point.estimate),
    );
    check(
        "NCIS decision negative",
        ncis_decision == Decision::Negative,
        format!("{}", ncis_decision.name()),
    );
    check(
        "PointNCIS decision positive",
        point_decision == Decision::Positive,
        format!("{}", point_decision.name()),
    );
    println!(
        "online uplift {:.4} [{:.4}, {:.4}] ({})",
        online.uplift,
        online.ci_low,
        online.ci_high,
        online.decision().name()
    );

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::usage(format!("cannot create {dir:?}: {e}")))?;
        let path = dir.join("table1.jsonl");
        let mut text = serde_json::to_string(&ncis).expect("serializes");
        text.push('\n');
        text.push_str(&serde_json::to_string(&point).expect("serializes"));
        text.push('\n');
        std::fs::write(&path, text)
            .map_err(|e| Failure::usage(format!("cannot write {path:?}: {e}")))?;
        println!("wrote {}", path.display());
    }

    if all_ok {
        Ok(())
    } else {
        Err(Failure::degenerate("table1 regression checks failed"))
    }
}
