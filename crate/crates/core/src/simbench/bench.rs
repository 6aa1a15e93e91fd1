//! Running an estimator suite over many simulated A/B tests.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ab::{decide, simulate_log, simulate_online, BenchError, Decision, OnlineResult};
use super::env::Environment;
use crate::estimators::ops::{
    prepare_cis, prepare_dr, prepare_is, prepare_ncis, prepare_nis, prepare_piece_ncis,
    prepare_point_ncis, McConfig, PreparedEstimate,
};
use crate::estimators::weights::compute_weights;
use crate::estimators::{
    build_value_partition, quantile_sorted, BootstrapConfig, CappingRule, EstimatorKind,
    EstimatorReport, ValueModel, WeightSource,
};
use crate::montecarlo::RandomStream;
use crate::policy::PlackettLuce;

/// One synthetic A/B test: the environment and the two policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbTestSpec {
    pub id: String,
    pub env: Environment,
    pub pi_p: PlackettLuce,
    pub pi_t: PlackettLuce,
}

/// Benchmark-wide settings.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub estimators: Vec<EstimatorKind>,
    pub capping: CappingRule,
    pub n_log: usize,
    pub n_online: usize,
    pub n_mc: usize,
    pub bootstrap_resamples: usize,
    pub value_log_base: f64,
}

/// One estimator's offline verdict on one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineEstimate {
    pub report: EstimatorReport,
    pub uplift: f64,
    pub uplift_ci_low: f64,
    pub uplift_ci_high: f64,
    pub decision: Decision,
}

/// Everything measured on one simulated A/B test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbTestRecord {
    pub test_id: String,
    pub online: OnlineResult,
    pub online_decision: Decision,
    pub offline: BTreeMap<String, OfflineEstimate>,
}

/// Decision-quality metrics of one estimator across a suite.
///
/// `confusion[online][offline]` counts tests by decision pair in the order
/// positive/neutral/negative; the nine cells let any alternative
/// precision/FNR definition be recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub estimator: String,
    pub correlation: Option<f64>,
    pub correlation_q10: Option<f64>,
    pub correlation_q90: Option<f64>,
    pub precision: Option<f64>,
    pub precision_q10: Option<f64>,
    pub precision_q90: Option<f64>,
    pub fnr: Option<f64>,
    pub fnr_q10: Option<f64>,
    pub fnr_q90: Option<f64>,
    /// Mean offline interval width relative to CIS; absent without CIS.
    pub ci_size_ratio: Option<f64>,
    pub confusion: [[u32; 3]; 3],
}

/// Full benchmark output.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub records: Vec<AbTestRecord>,
    pub summaries: BTreeMap<String, BenchmarkSummary>,
}

fn prepare_for(
    kind: EstimatorKind,
    spec: &AbTestSpec,
    data: &crate::logmodel::LogDataset,
    weights: &[f64],
    value_model: Option<&ValueModel>,
    cfg: &BenchConfig,
    stream: RandomStream,
) -> Result<PreparedEstimate, BenchError> {
    let prepared = match kind {
        EstimatorKind::Is => prepare_is(data, weights),
        EstimatorKind::Nis => prepare_nis(data, weights),
        EstimatorKind::Cis => prepare_cis(data, weights, cfg.capping),
        EstimatorKind::Ncis => prepare_ncis(data, weights, cfg.capping),
        EstimatorKind::Dr => {
            let vm = value_model.expect("value model fitted when DR requested").clone();
            let model = move |ctx: &crate::policy::Context, _: &crate::policy::RankedAction| {
                vm.predict(ctx)
            };
            prepare_dr(data, &spec.pi_t, weights, &model, cfg.n_mc.max(1), stream)?
        }
        EstimatorKind::PieceNcis => {
            let vm = value_model.expect("value model fitted when PieceNCIS requested");
            let partition = build_value_partition(vm);
            prepare_piece_ncis(data, weights, cfg.capping, &partition)?
        }
        EstimatorKind::PointNcis => {
            let mc = McConfig {
                n_mc: cfg.n_mc,
                ..McConfig::default()
            };
            prepare_point_ncis(
                data,
                &spec.pi_t,
                &spec.pi_p,
                weights,
                cfg.capping,
                &mc,
                stream,
            )?
        }
    };
    Ok(prepared)
}

fn run_one_test(
    spec: &AbTestSpec,
    cfg: &BenchConfig,
    stream: RandomStream,
) -> Result<AbTestRecord, BenchError> {
    let online = simulate_online(&spec.env, &spec.pi_p, &spec.pi_t, cfg.n_online, stream.derive(0))?;
    let data = simulate_log(&spec.env, &spec.pi_p, cfg.n_log, stream.derive(1))?;
    let weights = compute_weights(&data, &spec.pi_t, WeightSource::FromLog)?;

    // The value model is fitted on a disjoint simulated log so the
    // partition never sees the evaluation data.
    let needs_model = cfg
        .estimators
        .iter()
        .any(|k| matches!(k, EstimatorKind::PieceNcis | EstimatorKind::Dr));
    let value_model = if needs_model {
        let fit_log = simulate_log(&spec.env, &spec.pi_p, cfg.n_log, stream.derive(2))?;
        Some(ValueModel::fit_per_segment(&fit_log, cfg.value_log_base))
    } else {
        None
    };

    let bootstrap = BootstrapConfig::new(cfg.bootstrap_resamples, stream.derive(3));
    let baseline: Vec<f64> = data.samples.iter().map(|s| s.reward).collect();

    let mut offline = BTreeMap::new();
    for (ei, &kind) in cfg.estimators.iter().enumerate() {
        let prepared = prepare_for(
            kind,
            spec,
            &data,
            &weights,
            value_model.as_ref(),
            cfg,
            stream.derive2(4, ei as u64),
        )?;
        let report = prepared.report(&bootstrap)?;
        let (uplift, lo, hi) = prepared.uplift_ci(&baseline, &bootstrap)?;
        offline.insert(
            kind.name().to_string(),
            OfflineEstimate {
                report,
                uplift,
                uplift_ci_low: lo,
                uplift_ci_high: hi,
                decision: decide(lo, hi),
            },
        );
    }
    Ok(AbTestRecord {
        test_id: spec.id.clone(),
        online,
        online_decision: online.decision(),
        offline,
    })
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

struct TestOutcome {
    online_uplift: f64,
    online_decision: Decision,
    offline_uplift: f64,
    offline_decision: Decision,
    ci_width: f64,
}

fn metrics(outcomes: &[&TestOutcome]) -> (Option<f64>, Option<f64>, Option<f64>) {
    let xs: Vec<f64> = outcomes.iter().map(|o| o.offline_uplift).collect();
    let ys: Vec<f64> = outcomes.iter().map(|o| o.online_uplift).collect();
    let correlation = pearson(&xs, &ys);
    let offline_pos = outcomes
        .iter()
        .filter(|o| o.offline_decision == Decision::Positive)
        .count();
    let true_pos = outcomes
        .iter()
        .filter(|o| {
            o.offline_decision == Decision::Positive && o.online_decision == Decision::Positive
        })
        .count();
    let precision = (offline_pos > 0).then(|| true_pos as f64 / offline_pos as f64);
    let online_pos = outcomes
        .iter()
        .filter(|o| o.online_decision == Decision::Positive)
        .count();
    // False negatives are sign flips only: online-positive declared
    // negative offline. Neutrals are visible in the confusion table.
    let flips = outcomes
        .iter()
        .filter(|o| {
            o.online_decision == Decision::Positive && o.offline_decision == Decision::Negative
        })
        .count();
    let fnr = (online_pos > 0).then(|| flips as f64 / online_pos as f64);
    (correlation, precision, fnr)
}

fn summarize(
    estimator: &str,
    outcomes: &[TestOutcome],
    cis_mean_width: Option<f64>,
    resamples: usize,
    stream: RandomStream,
) -> BenchmarkSummary {
    let refs: Vec<&TestOutcome> = outcomes.iter().collect();
    let (correlation, precision, fnr) = metrics(&refs);

    // 10%/90% bands from bootstrapping over tests.
    let n = outcomes.len();
    let mut corr_reps = Vec::new();
    let mut prec_reps = Vec::new();
    let mut fnr_reps = Vec::new();
    for b in 0..resamples {
        let mut rng = stream.derive(b as u64).rng();
        let resample: Vec<&TestOutcome> = (0..n).map(|_| &outcomes[rng.index(n)]).collect();
        let (c, p, f) = metrics(&resample);
        if let Some(c) = c {
            corr_reps.push(c);
        }
        if let Some(p) = p {
            prec_reps.push(p);
        }
        if let Some(f) = f {
            fnr_reps.push(f);
        }
    }
    let band = |mut reps: Vec<f64>| -> (Option<f64>, Option<f64>) {
        if reps.is_empty() {
            return (None, None);
        }
        reps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (
            Some(quantile_sorted(&reps, 0.10)),
            Some(quantile_sorted(&reps, 0.90)),
        )
    };
    let (correlation_q10, correlation_q90) = band(corr_reps);
    let (precision_q10, precision_q90) = band(prec_reps);
    let (fnr_q10, fnr_q90) = band(fnr_reps);

    let mut confusion = [[0u32; 3]; 3];
    for o in outcomes {
        confusion[o.online_decision.index()][o.offline_decision.index()] += 1;
    }
    let mean_width = outcomes.iter().map(|o| o.ci_width).sum::<f64>() / n as f64;
    let ci_size_ratio = cis_mean_width.map(|w| mean_width / w);

    BenchmarkSummary {
        estimator: estimator.to_string(),
        correlation,
        correlation_q10,
        correlation_q90,
        precision,
        precision_q10,
        precision_q90,
        fnr,
        fnr_q10,
        fnr_q90,
        ci_size_ratio,
        confusion,
    }
}

/// Runs every test in the suite (in parallel, reproducibly) and summarizes
/// each estimator's decision quality against the online ground truth.
pub fn run_benchmark(
    suite: &[AbTestSpec],
    cfg: &BenchConfig,
    stream: RandomStream,
) -> Result<BenchmarkResult, BenchError> {
    if suite.is_empty() {
        return Err(BenchError::ZeroSamples);
    }
    let records: Vec<Result<AbTestRecord, BenchError>> = suite
        .par_iter()
        .enumerate()
        .map(|(t, spec)| run_one_test(spec, cfg, stream.derive(t as u64)))
        .collect();
    let records = records.into_iter().collect::<Result<Vec<_>, _>>()?;

    let outcomes_for = |name: &str| -> Vec<TestOutcome> {
        records
            .iter()
            .map(|r| {
                let off = &r.offline[name];
                TestOutcome {
                    online_uplift: r.online.uplift,
                    online_decision: r.online_decision,
                    offline_uplift: off.uplift,
                    offline_decision: off.decision,
                    ci_width: off.uplift_ci_high - off.uplift_ci_low,
                }
            })
            .collect()
    };

    let cis_mean_width = cfg.estimators.contains(&EstimatorKind::Cis).then(|| {
        let outcomes = outcomes_for(EstimatorKind::Cis.name());
        outcomes.iter().map(|o| o.ci_width).sum::<f64>() / outcomes.len() as f64
    });

    let summary_stream = stream.derive(suite.len() as u64 + 1_000_000);
    let mut summaries = BTreeMap::new();
    for &kind in &cfg.estimators {
        let outcomes = outcomes_for(kind.name());
        summaries.insert(
            kind.name().to_string(),
            summarize(
                kind.name(),
                &outcomes,
                cis_mean_width,
                cfg.bootstrap_resamples,
                summary_stream,
            ),
        );
    }
    Ok(BenchmarkResult { records, summaries })
}

/// One CSV row per (test, estimator): the decision-box plot data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecordRow {
    pub test_id: String,
    pub estimator: String,
    pub online_uplift: f64,
    pub online_ci_low: f64,
    pub online_ci_high: f64,
    pub online_decision: String,
    pub offline_uplift: f64,
    pub offline_ci_low: f64,
    pub offline_ci_high: f64,
    pub offline_decision: String,
}

impl BenchmarkResult {
    pub fn record_rows(&self) -> Vec<BenchRecordRow> {
        let mut rows = Vec::new();
        for record in &self.records {
            for (name, off) in &record.offline {
                rows.push(BenchRecordRow {
                    test_id: record.test_id.clone(),
                    estimator: name.clone(),
                    online_uplift: record.online.uplift,
                    online_ci_low: record.online.ci_low,
                    online_ci_high: record.online.ci_high,
                    online_decision: record.online_decision.name().to_string(),
                    offline_uplift: off.uplift,
                    offline_ci_low: off.uplift_ci_low,
                    offline_ci_high: off.uplift_ci_high,
                    offline_decision: off.decision.name().to_string(),
                });
            }
        }
        rows
    }

    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.summaries
            .values()
            .map(|s| SummaryRow {
                estimator: s.estimator.clone(),
                correlation: s.correlation,
                correlation_q10: s.correlation_q10,
                correlation_q90: s.correlation_q90,
                precision: s.precision,
                precision_q10: s.precision_q10,
                precision_q90: s.precision_q90,
                fnr: s.fnr,
                fnr_q10: s.fnr_q10,
                fnr_q90: s.fnr_q90,
                ci_size_ratio: s.ci_size_ratio,
            })
            .collect()
    }
}

/// One CSV row per estimator: the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub correlation: Option<f64>,
    pub correlation_q10: Option<f64>,
    pub correlation_q90: Option<f64>,
    pub precision: Option<f64>,
    pub precision_q10: Option<f64>,
    pub precision_q90: Option<f64>,
    pub fnr: Option<f64>,
    pub fnr_q10: Option<f64>,
    pub fnr_q90: Option<f64>,
    pub ci_size_ratio: Option<f64>,
}
