//! One function per subcommand. Each is a pure function of its inputs,
//! configuration and seed, apart from the manifest timestamps.

use std::fs;
use std::path::{Path, PathBuf};

use pdae_core::genmodel::PerturbationLabel;
use pdae_core::harness::{
    evaluate_methods, generate_training_data, run_seed, run_theory_suite, test_cases, train_pdae, EvalReport,
    ExperimentConfig, TestKind, TheoryCheck,
};
use pdae_core::pdae::{predict, EpochRecord, PdaeModel, PredictionWeights};
use pdae_core::SeededRng;

use crate::checkpoint::Checkpoint;
use crate::config::config_hash;
use crate::data::{columns, fmt_f64, read_dataset, write_dataset, write_matrix_csv};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::report::{check_line, format_summary, write_checks, write_rows, write_summary};

/// Seed used by single-seed commands: the first configured seed.
fn primary_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seeds[0]
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn sidecar_manifest(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// Prints training progress every `every` epochs (and at the last one).
fn progress(label: String, total: usize, quiet: bool) -> impl FnMut(&EpochRecord, &PdaeModel) {
    let every = (total / 10).max(1);
    move |r, _| {
        if !quiet && (r.epoch % every == 0 || r.epoch + 1 == total) {
            eprintln!("[{label}] epoch {}/{total} perturbation loss {:.6}", r.epoch + 1, r.perturbation);
        }
    }
}

pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let seed = primary_seed(cfg);
    let manifest = RunManifest::start("generate", Some(config_hash(cfg)), Some(seed));
    let domains = generate_training_data(cfg, seed)?;
    let files = write_dataset(out, &domains, true)?;
    manifest.finish_in(out, &files)?;
    Ok(files)
}

pub fn cmd_train(cfg: &ExperimentConfig, data: &Path, out: &Path, quiet: bool) -> CliResult<Checkpoint> {
    let seed = primary_seed(cfg);
    let manifest = RunManifest::start("train", Some(config_hash(cfg)), Some(seed));
    let domains = read_dataset(data)?;
    let (model, history) = train_pdae(cfg, &domains, seed, progress("train".into(), cfg.train.epochs, quiet))?;
    let ckpt = Checkpoint::new(&model, &history);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    ckpt.save(out)?;
    manifest.finish(&sidecar_manifest(out), &[out.to_path_buf()])?;
    Ok(ckpt)
}

/// `uniform`, `control` (all weight on domain 0) or a comma-separated list.
pub fn parse_weights(spec: &str, num_domains: usize) -> CliResult<PredictionWeights> {
    let w = match spec.trim() {
        "uniform" => PredictionWeights::uniform(num_domains),
        "control" | "control-only" => PredictionWeights::one_hot(num_domains, 0),
        list => {
            let values = parse_list(list, "--weights")?;
            if values.len() != num_domains {
                return Err(CliError::usage(format!(
                    "--weights has {} entries for {num_domains} domains",
                    values.len()
                )));
            }
            PredictionWeights::new(values)
        }
    };
    w.map_err(|e| CliError::usage(format!("--weights: {e}")))
}

pub fn parse_list(s: &str, flag: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("{flag}: `{}` is not a number", p.trim())))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_predict(
    checkpoint: &Path,
    data: &Path,
    label: &[f64],
    weights: &str,
    samples: Option<usize>,
    seed: u64,
    out: &Path,
) -> CliResult<usize> {
    let manifest = RunManifest::start("predict", None, Some(seed));
    let model = Checkpoint::load(checkpoint)?.model()?;
    let domains = read_dataset(data)?;
    if domains[0].x.cols() != model.observed_dim() {
        return Err(CliError::usage(format!(
            "checkpoint expects {} observed columns, data has {}",
            model.observed_dim(),
            domains[0].x.cols()
        )));
    }
    let omega = parse_weights(weights, domains.len())?;
    let a = PerturbationLabel::new(label.to_vec())?;
    let pred = predict(&model, &domains, &a, &omega, samples, &mut SeededRng::new(seed))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_matrix_csv(out, &columns("x", pred.dim()), pred.points())?;
    manifest.finish(&sidecar_manifest(out), &[out.to_path_buf()])?;
    Ok(pred.rows())
}

pub fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: &Path, data: &Path, out: &Path) -> CliResult<EvalReport> {
    let seed = primary_seed(cfg);
    let manifest = RunManifest::start("evaluate", Some(config_hash(cfg)), Some(seed));
    let model = Checkpoint::load(checkpoint)?.model()?;
    let domains = read_dataset(data)?;
    let rows = evaluate_methods(cfg, &cfg.ground_truth()?, &domains, &model, &test_cases(cfg)?, seed)?;
    let report = EvalReport { rows };
    ensure_dir(out)?;
    let files = [out.join("rows.csv"), out.join("summary.csv")];
    write_rows(&files[0], &report.rows)?;
    write_summary(&files[1], &report)?;
    manifest.finish_in(out, &files)?;
    Ok(report)
}

pub fn cmd_reproduce_table1(cfg: &ExperimentConfig, out: &Path, quiet: bool) -> CliResult<EvalReport> {
    let manifest = RunManifest::start("reproduce-table1", Some(config_hash(cfg)), cfg.seeds.first().copied());
    ensure_dir(out)?;
    let cases = test_cases(cfg)?;
    let rows_path = out.join("rows.csv");
    let mut report = EvalReport::default();
    for &seed in &cfg.seeds {
        let run = run_seed(cfg, seed, &cases, progress(format!("seed {seed}"), cfg.train.epochs, quiet))?;
        report.rows.extend(run.rows);
        // flushed after every seed so a later failure keeps finished work
        write_rows(&rows_path, &report.rows)?;
    }
    let summary_path = out.join("summary.csv");
    write_summary(&summary_path, &report)?;
    if !quiet {
        eprint!("{}", format_summary(&report));
    }
    manifest.finish_in(out, &[rows_path, summary_path])?;
    Ok(report)
}

pub fn sweep_file(index: usize, sigma: f64) -> String {
    format!("sweep_{index}_sigma_{sigma}.csv")
}

pub fn cmd_sweep_noise(cfg: &ExperimentConfig, out: &Path, quiet: bool) -> CliResult<Vec<(f64, EvalReport)>> {
    let manifest = RunManifest::start("sweep-noise", Some(config_hash(cfg)), cfg.seeds.first().copied());
    if cfg.sweep_noise_dims == 0 {
        return Err(CliError::usage("sweep_noise_dims must be positive"));
    }
    ensure_dir(out)?;
    let cases: Vec<_> = test_cases(cfg)?
        .into_iter()
        .filter(|c| c.kind == TestKind::Id)
        .collect();
    let mut files = Vec::new();
    let mut points = Vec::new();
    let mut summary = Vec::new();
    for (i, &sigma) in cfg.sweep_noise_stds.iter().enumerate() {
        let point_cfg = cfg.with_observation_noise(sigma);
        let mut report = EvalReport::default();
        for &seed in &point_cfg.seeds {
            let tag = format!("sigma {sigma} seed {seed}");
            let run = run_seed(&point_cfg, seed, &cases, progress(tag, point_cfg.train.epochs, quiet))?;
            report.rows.extend(run.rows);
        }
        let path = out.join(sweep_file(i, sigma));
        write_rows(&path, &report.rows)?;
        files.push(path);
        for a in report.aggregate() {
            summary.push(vec![
                fmt_f64(sigma),
                a.method.as_str().to_string(),
                a.kind.as_str().to_string(),
                fmt_f64(a.ed.mean),
                fmt_f64(a.ed.std),
                fmt_f64(a.mmd2.mean),
                fmt_f64(a.mmd2.std),
                fmt_f64(a.mean_diff.mean),
                fmt_f64(a.mean_diff.std),
            ]);
        }
        points.push((sigma, report));
    }
    let path = out.join("sweep_summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e))?;
    w.write_record([
        "noise_std",
        "method",
        "kind",
        "ed_mean",
        "ed_std",
        "mmd2_mean",
        "mmd2_std",
        "mean_diff_mean",
        "mean_diff_std",
    ])
    .map_err(|e| CliError::io(&path, e))?;
    for r in &summary {
        w.write_record(r).map_err(|e| CliError::io(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    files.push(path);
    manifest.finish_in(out, &files)?;
    Ok(points)
}

/// Runs the default theory scenarios, printing one line per check. Fails
/// with a verification error if any check fails.
pub fn cmd_verify_theory(seed: u64, out: Option<&Path>) -> CliResult<Vec<TheoryCheck>> {
    let manifest = RunManifest::start("verify-theory", None, Some(seed));
    let checks = run_theory_suite(seed)?;
    for c in &checks {
        println!("{}", check_line(c));
    }
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let path = dir.join("theory.csv");
        write_checks(&path, &checks)?;
        manifest.finish_in(dir, &[path])?;
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(checks)
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}
