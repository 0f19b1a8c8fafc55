//! Data generation, training and scoring of every method on every test case.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::config::ExperimentConfig;
use super::suite::{evaluation_cases, make_test_suite, Arity, TestCase, TestKind};
use crate::baselines::{fit_mean_model, mean_shift_distribution, pool_all, predict_mean, pseudobulk};
use crate::error::{Error, Result};
use crate::genmodel::{generate_domain, Domain, GroundTruthModel, PerturbationLabel};
use crate::metrics::{energy_distance, mean_difference, mmd_squared_median, SampleSet};
use crate::numeric::SeededRng;
use crate::pdae::{predict, train_with_callback, EpochRecord, PdaeModel, PredictionWeights, TrainHistory};

/// Scored prediction methods. `Oracle` resamples the true test distribution
/// and shows the finite-sample floor of each metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    PoolAll,
    Pseudobulk,
    LinearRegression,
    Pdae,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::PoolAll,
        Method::Pseudobulk,
        Method::LinearRegression,
        Method::Pdae,
        Method::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::PoolAll => "pool_all",
            Method::Pseudobulk => "pseudobulk",
            Method::LinearRegression => "linear_regression",
            Method::Pdae => "pdae",
            Method::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }

    fn index(self) -> u64 {
        Method::ALL.iter().position(|m| *m == self).unwrap() as u64
    }
}

/// One (seed, method, test case) evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub seed: u64,
    pub method: Method,
    pub case_id: usize,
    pub kind: TestKind,
    pub arity: Arity,
    pub label: PerturbationLabel,
    /// Energy distance with `beta = 1`.
    pub ed: f64,
    /// Gaussian-kernel MMD² with median-heuristic bandwidth.
    pub mmd2: f64,
    pub mean_diff: f64,
}

/// Mean and sample standard deviation over seeds of the per-seed averages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub method: Method,
    pub kind: TestKind,
    pub seeds: usize,
    pub cases: usize,
    pub ed: Stat,
    pub mmd2: Stat,
    pub mean_diff: Stat,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Per (method, kind): average over test cases within each seed, then
    /// mean and std over seeds. Ordered by method, then kind.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut out = Vec::new();
        for method in Method::ALL {
            for kind in [TestKind::Id, TestKind::Ood] {
                if let Some(row) = self.summary(method, kind) {
                    out.push(row);
                }
            }
        }
        out
    }

    pub fn summary(&self, method: Method, kind: TestKind) -> Option<AggregateRow> {
        let rows: Vec<&EvalRow> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.kind == kind)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let mut per_seed = [Vec::new(), Vec::new(), Vec::new()];
        let mut cases = 0;
        for s in &seeds {
            let mine: Vec<&&EvalRow> = rows.iter().filter(|r| r.seed == *s).collect();
            cases = cases.max(mine.len());
            let n = mine.len() as f64;
            per_seed[0].push(mine.iter().map(|r| r.ed).sum::<f64>() / n);
            per_seed[1].push(mine.iter().map(|r| r.mmd2).sum::<f64>() / n);
            per_seed[2].push(mine.iter().map(|r| r.mean_diff).sum::<f64>() / n);
        }
        Some(AggregateRow {
            method,
            kind,
            seeds: seeds.len(),
            cases,
            ed: Stat::of(&per_seed[0]),
            mmd2: Stat::of(&per_seed[1]),
            mean_diff: Stat::of(&per_seed[2]),
        })
    }
}

/// Result of training and evaluating under one data seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub domains: Vec<Domain>,
    pub model: PdaeModel,
    pub history: TrainHistory,
    pub rows: Vec<EvalRow>,
}

/// One row of a noise sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub noise_std: f64,
    pub report: EvalReport,
}

// Stream ids under the per-seed root generator.
const STREAM_DATA: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_TRAIN: u64 = 3;
const STREAM_TRUTH: u64 = 1 << 16;
const STREAM_METHOD: u64 = 1 << 20;

/// Training domains for `seed`, with ground-truth latents retained.
pub fn generate_training_data(config: &ExperimentConfig, seed: u64) -> Result<Vec<Domain>> {
    config.validate()?;
    let truth = config.ground_truth()?;
    let mut rng = SeededRng::new(seed).fork(STREAM_DATA);
    config
        .training_labels
        .iter()
        .map(|a| generate_domain(&truth, a, config.n_per_domain, &mut rng))
        .collect()
}

/// Fresh model for `seed`, trained on `domains`.
pub fn train_pdae<F>(
    config: &ExperimentConfig,
    domains: &[Domain],
    seed: u64,
    on_epoch: F,
) -> Result<(PdaeModel, TrainHistory)>
where
    F: FnMut(&EpochRecord, &PdaeModel),
{
    let root = SeededRng::new(seed);
    let d_x = domains
        .first()
        .map(|d| d.x.cols())
        .ok_or_else(|| Error::invalid("no training domains"))?;
    let model = PdaeModel::init(
        d_x,
        config.num_perturbations(),
        &config.architecture,
        &mut root.fork(STREAM_INIT),
    )?;
    let mut train = config.train.clone();
    train.seed = root.fork(STREAM_TRAIN).seed();
    train_with_callback(model, domains, &train, on_epoch)
}

/// At most `n` rows, chosen without replacement when the set is larger.
fn subsample(set: SampleSet, n: usize, rng: &mut SeededRng) -> Result<SampleSet> {
    if set.rows() <= n {
        return Ok(set);
    }
    let mut idx: Vec<usize> = (0..set.rows()).collect();
    rng.shuffle(&mut idx);
    idx.truncate(n);
    SampleSet::new(set.select_rows(&idx))
}

fn score(pred: &SampleSet, truth: &SampleSet) -> Result<(f64, f64, f64)> {
    Ok((
        energy_distance(pred, truth, 1.0)?,
        mmd_squared_median(pred, truth)?,
        mean_difference(pred, truth)?,
    ))
}

/// Scores every method on every case. Test samples and predictions are drawn
/// from generators derived from `seed` and the case id, so results do not
/// depend on which other cases or methods are evaluated.
pub fn evaluate_methods(
    config: &ExperimentConfig,
    truth: &GroundTruthModel,
    domains: &[Domain],
    model: &PdaeModel,
    cases: &[TestCase],
    seed: u64,
) -> Result<Vec<EvalRow>> {
    if domains.is_empty() {
        return Err(Error::invalid("no training domains"));
    }
    let root = SeededRng::new(seed);
    let mean_model = fit_mean_model(domains)?;
    let reference = SampleSet::new(domains[0].x.clone())?;
    let uniform = PredictionWeights::uniform(domains.len())?;
    let n = config.n_test;
    let mut rows = Vec::with_capacity(cases.len() * Method::ALL.len());
    for case in cases {
        let id = case.id as u64;
        let truth_set = SampleSet::new(
            generate_domain(truth, &case.label, n, &mut root.fork(STREAM_TRUTH + id))?.x,
        )?;
        for method in Method::ALL {
            let mut rng = root.fork(STREAM_METHOD + id * 8 + method.index());
            let pred = match method {
                Method::PoolAll => subsample(pool_all(domains)?, n, &mut rng)?,
                Method::Pseudobulk => subsample(pseudobulk(domains, &case.label)?, n, &mut rng)?,
                Method::LinearRegression => {
                    let mu = predict_mean(&mean_model, &case.label)?;
                    subsample(mean_shift_distribution(&reference, &mu)?, n, &mut rng)?
                }
                Method::Pdae => predict(model, domains, &case.label, &uniform, Some(n), &mut rng)?,
                Method::Oracle => SampleSet::new(generate_domain(truth, &case.label, n, &mut rng)?.x)?,
            };
            let (ed, mmd2, mean_diff) = score(&pred, &truth_set)?;
            rows.push(EvalRow {
                seed,
                method,
                case_id: case.id,
                kind: case.kind,
                arity: case.arity,
                label: case.label.clone(),
                ed,
                mmd2,
                mean_diff,
            });
        }
    }
    Ok(rows)
}

/// Test-split cases of the configured suite.
pub fn test_cases(config: &ExperimentConfig) -> Result<Vec<TestCase>> {
    let suite = make_test_suite(&mut SeededRng::new(config.suite_seed), config.draws_per_setting)?;
    Ok(evaluation_cases(&suite))
}

/// Generate, train and evaluate for one seed.
pub fn run_seed<F>(
    config: &ExperimentConfig,
    seed: u64,
    cases: &[TestCase],
    on_epoch: F,
) -> Result<SeedRun>
where
    F: FnMut(&EpochRecord, &PdaeModel),
{
    let domains = generate_training_data(config, seed)?;
    let (model, history) = train_pdae(config, &domains, seed, on_epoch)?;
    let rows = evaluate_methods(config, &config.ground_truth()?, &domains, &model, cases, seed)?;
    Ok(SeedRun {
        seed,
        domains,
        model,
        history,
        rows,
    })
}

/// Every method on every test case for every configured seed.
pub fn run_simulation(config: &ExperimentConfig) -> Result<EvalReport> {
    let cases = test_cases(config)?;
    let mut report = EvalReport::default();
    for &seed in &config.seeds {
        report.rows.extend(run_seed(config, seed, &cases, |_, _| {})?.rows);
    }
    Ok(report)
}

/// ID test cases at each configured observation-noise level.
pub fn run_noise_sweep(config: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    if config.sweep_noise_dims == 0 {
        return Err(Error::invalid("the noise sweep needs sweep_noise_dims > 0"));
    }
    let cases: Vec<TestCase> = test_cases(config)?
        .into_iter()
        .filter(|c| c.kind == TestKind::Id)
        .collect();
    let mut out = Vec::with_capacity(config.sweep_noise_stds.len());
    for &sigma in &config.sweep_noise_stds {
        let cfg = config.with_observation_noise(sigma);
        let mut report = EvalReport::default();
        for &seed in &cfg.seeds {
            report.rows.extend(run_seed(&cfg, seed, &cases, |_, _| {})?.rows);
        }
        out.push(SweepPoint {
            noise_std: sigma,
            report,
        });
    }
    Ok(out)
}

/// Short human-readable label such as `[1, 0.5, 0]`.
pub fn format_label(a: &PerturbationLabel) -> String {
    let parts: Vec<String> = a.as_slice().iter().map(|v| format!("{v}")).collect();
    format!("[{}]", parts.join(", "))
}
