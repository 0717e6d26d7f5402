//! Subcommand implementations. Every command validates its inputs before
//! any compute, streams progress to stderr, and leaves a manifest beside its
//! outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;
use voxl_core::coreset::{compress as coreset_compress, CoresetConfig};
use voxl_core::dqn::{load_checkpoint, save_checkpoint, QNetwork};
use voxl_core::eval::{benchmark_epoch, paired_t_test, OraclePolicy, ValuePolicy};
use voxl_core::lifelong::{
    evaluate_case, run_curriculum, task_test_cases, LifelongReport, TaskCase,
};
use voxl_core::seed;
use voxl_core::volume::{load_volume, make_phantom, save_volume, PhantomConfig, VolumeError};

use crate::config::{load_json, load_run_config, RunConfig};
use crate::{CliError, MethodArg};

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    seed_value: u64,
    config_echo: serde_json::Value,
    outputs: &[&str],
) -> Result<(), CliError> {
    write_json(
        &out_dir.join("manifest.json"),
        &json!({
            "command": command,
            "seed": seed_value,
            "config": config_echo,
            "outputs": outputs,
        }),
    )
}

pub fn compress(
    input: &Path,
    out: &Path,
    method: Option<MethodArg>,
    ratio: Option<usize>,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let mut cfg: CoresetConfig = match config {
        Some(p) => load_json(p)?,
        None => CoresetConfig::default(),
    };
    if let Some(m) = method {
        cfg.method = m.into();
    }
    if let Some(n) = ratio {
        cfg.n_ratio = n;
    }
    cfg.validate()
        .map_err(|e| CliError::usage(format!("coreset: {e}")))?;

    let vol = load_volume(input)?;
    eprintln!(
        "compressing {} ({}x{}x{}) with {} at N={}",
        input.display(),
        vol.dims().x,
        vol.dims().y,
        vol.dims().z,
        cfg.method.name(),
        cfg.n_ratio
    );
    let t0 = Instant::now();
    let result = coreset_compress(&vol, &cfg, None)?;
    let wall_secs = t0.elapsed().as_secs_f64();
    save_volume(&result.volume, out)?;

    let sidecar = out.with_extension("json");
    write_json(
        &sidecar,
        &json!({
            "command": "compress",
            "input": input.display().to_string(),
            "output": out.display().to_string(),
            "config": cfg,
            "input_dims": <[usize; 3]>::from(vol.dims()),
            "output_dims": <[usize; 3]>::from(result.volume.dims()),
            "wall_secs": wall_secs,
        }),
    )?;
    eprintln!(
        "wrote {} ({}x{}x{}) and {}",
        out.display(),
        result.volume.dims().x,
        result.volume.dims().y,
        result.volume.dims().z,
        sidecar.display()
    );
    Ok(())
}

pub fn phantom(config: &Path, out: &Path, seed_override: Option<u64>) -> Result<(), CliError> {
    let mut cfg: PhantomConfig = load_json(config)?;
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    let (vol, landmark) = make_phantom(&cfg).map_err(|e| match e {
        VolumeError::EllipsoidOutOfBounds { .. } | VolumeError::NegativeNoiseSigma(_) => {
            CliError::usage(format!("phantom config: {e}"))
        }
        other => CliError::from(other),
    })?;
    save_volume(&vol, out)?;
    write_json(
        &out.with_extension("json"),
        &json!({
            "command": "phantom",
            "config": cfg,
            "landmark": <[i64; 3]>::from(landmark),
            "dims": <[usize; 3]>::from(vol.dims()),
            "intensity_range": vol.intensity_range(),
        }),
    )?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

pub fn train(
    config_path: &Path,
    out: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg = load_run_config(config_path)?;
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    let ckpt_dir = out_dir.join("checkpoints");
    ensure_dir(&ckpt_dir)?;

    eprintln!(
        "training {} task(s) over {} round(s), seed {}, pipeline {}",
        cfg.tasks.len(),
        cfg.curriculum.rounds.len(),
        cfg.seed,
        cfg.coreset
            .as_ref()
            .map(|c| c.method.name())
            .unwrap_or("full-resolution")
    );
    let t0 = Instant::now();
    let outcome = run_curriculum(
        &cfg.curriculum,
        &cfg.tasks,
        &cfg.env,
        cfg.coreset.as_ref(),
        cfg.seed,
    )?;
    eprintln!("training done in {:.1}s", t0.elapsed().as_secs_f64());

    let report_json = serde_json::to_value(&outcome.report)
        .map_err(|e| CliError::runtime(format!("report serialization failed: {e}")))?;
    write_json(&out_dir.join("report.json"), &report_json)?;
    write_bytes(
        &out_dir.join("report.csv"),
        outcome.report.to_csv_string().as_bytes(),
    )?;
    for agent in &outcome.agents {
        save_checkpoint(&agent.net, ckpt_dir.join(format!("{}.voxlnet", agent.task)))?;
    }
    let config_echo = serde_json::to_value(&cfg)
        .map_err(|e| CliError::runtime(format!("config echo failed: {e}")))?;
    write_manifest(
        &out_dir,
        "train",
        cfg.seed,
        config_echo,
        &["report.json", "report.csv", "checkpoints/"],
    )?;
    for s in &outcome.report.summaries {
        eprintln!(
            "round {} task {} env {}: mean error {:.3} +- {:.3} over {} case(s)",
            s.round, s.task, s.environment, s.mean_error, s.stddev_error, s.cases
        );
    }
    Ok(())
}

enum EvalPolicy {
    Net(Box<QNetwork>),
    Oracle,
}

impl ValuePolicy for EvalPolicy {
    fn q_values(
        &self,
        spec: &voxl_core::rlenv::EnvSpec,
        state: &voxl_core::rlenv::AgentState,
        obs: &voxl_core::volume::Volume3D,
    ) -> Result<[f64; voxl_core::rlenv::Action::COUNT], voxl_core::dqn::DqnError> {
        match self {
            EvalPolicy::Net(net) => net.q_values(spec, state, obs),
            EvalPolicy::Oracle => OraclePolicy.q_values(spec, state, obs),
        }
    }
}

/// Evaluate all cases of one task, splitting independent cases across
/// `threads` scoped workers. Results are ordered by case index either way.
fn evaluate_cases(
    policy: &EvalPolicy,
    cases: &[TaskCase],
    start: voxl_core::eval::EvalStart,
    master_seed: u64,
    task_idx: usize,
    threads: usize,
) -> Result<Vec<f64>, CliError> {
    let eval_seed = |case_idx: usize| {
        seed::derive(master_seed, &[task_idx as u64, 0xE7A1, case_idx as u64])
    };
    if threads <= 1 {
        return cases
            .iter()
            .enumerate()
            .map(|(i, case)| {
                evaluate_case(policy, case, start, eval_seed(i)).map_err(CliError::from)
            })
            .collect();
    }
    let mut results: Vec<Option<Result<f64, CliError>>> = (0..cases.len()).map(|_| None).collect();
    let chunk = cases.len().div_ceil(threads);
    std::thread::scope(|scope| {
        for (chunk_no, (slot_chunk, case_chunk)) in
            results.chunks_mut(chunk).zip(cases.chunks(chunk)).enumerate()
        {
            scope.spawn(move || {
                for (j, (slot, case)) in slot_chunk.iter_mut().zip(case_chunk.iter()).enumerate() {
                    *slot = Some(
                        evaluate_case(policy, case, start, eval_seed(chunk_no * chunk + j))
                            .map_err(CliError::from),
                    );
                }
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every case slot is filled"))
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    config_path: &Path,
    checkpoints: Option<&Path>,
    out: Option<&Path>,
    seed_override: Option<u64>,
    baseline: Option<&Path>,
    oracle: bool,
    threads: usize,
) -> Result<(), CliError> {
    let mut cfg = load_run_config(config_path)?;
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    ensure_dir(&out_dir)?;
    let ckpt_dir = checkpoints
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir).join("checkpoints"));

    let method_label = if oracle {
        "oracle".to_string()
    } else {
        cfg.coreset
            .as_ref()
            .map(|c| c.method.name().to_string())
            .unwrap_or_else(|| "conventional".to_string())
    };

    let baseline_report: Option<LifelongReport> = match baseline {
        Some(p) => Some(load_json(p)?),
        None => None,
    };

    let mut task_means = Vec::new();
    let mut task_ps: Vec<Option<f64>> = Vec::new();
    let mut all_errors = Vec::new();
    let mut per_task_json = Vec::new();
    for (task_idx, task) in cfg.tasks.iter().enumerate() {
        let policy = if oracle {
            EvalPolicy::Oracle
        } else {
            let path = ckpt_dir.join(format!("{}.voxlnet", task.name));
            let net = load_checkpoint(&path)?;
            if net.obs_dims() != cfg.env.obs_dims {
                return Err(CliError::runtime(format!(
                    "checkpoint {}: shape mismatch: network observation dims {:?} vs config env.obs_dims {:?}",
                    path.display(),
                    <[usize; 3]>::from(net.obs_dims()),
                    <[usize; 3]>::from(cfg.env.obs_dims),
                )));
            }
            EvalPolicy::Net(Box::new(net))
        };

        let cases = task_test_cases(
            task,
            task_idx,
            cfg.curriculum.test_volumes_per_modality,
            &cfg.env,
            cfg.coreset.as_ref(),
            cfg.seed,
        )?;
        eprintln!(
            "evaluating task {} on {} case(s) with {}",
            task.name,
            cases.len(),
            method_label
        );
        let errors = evaluate_cases(
            &policy,
            &cases,
            cfg.env.eval_start,
            cfg.seed,
            task_idx,
            threads,
        )?;

        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        task_means.push(mean);

        let p = match &baseline_report {
            Some(base) => {
                let final_round = base.cases.iter().map(|c| c.round).max().unwrap_or(0);
                let base_errors: Vec<f64> = base
                    .cases
                    .iter()
                    .filter(|c| c.round == final_round && c.task == task.name)
                    .map(|c| c.error)
                    .collect();
                if base_errors.len() != errors.len() {
                    return Err(CliError::usage(format!(
                        "baseline case list for task {} has {} cases, this config has {}",
                        task.name,
                        base_errors.len(),
                        errors.len()
                    )));
                }
                Some(paired_t_test(&errors, &base_errors)?.p_value)
            }
            None => None,
        };
        task_ps.push(p);

        per_task_json.push(json!({
            "task": task.name,
            "errors": errors,
            "mean_error": mean,
            "p_vs_baseline": p,
        }));
        all_errors.extend(errors);
    }

    let avg_cases = all_errors.iter().sum::<f64>() / all_errors.len() as f64;
    let avg_task_means = task_means.iter().sum::<f64>() / task_means.len() as f64;

    // Table-shaped CSV: rows are methods, columns are tasks plus the two
    // labeled averages (over all cases, and of per-task means).
    let mut csv = String::from("method");
    for task in &cfg.tasks {
        csv.push_str(&format!(",{}", task.name));
    }
    csv.push_str(",avg_cases,avg_task_means\n");
    csv.push_str(&method_label);
    for mean in &task_means {
        csv.push_str(&format!(",{mean:.6}"));
    }
    csv.push_str(&format!(",{avg_cases:.6},{avg_task_means:.6}\n"));
    if baseline_report.is_some() {
        let ps: Vec<f64> = task_ps.iter().map(|p| p.unwrap_or(f64::NAN)).collect();
        let mean_p = ps.iter().sum::<f64>() / ps.len() as f64;
        csv.push_str("p_vs_baseline");
        for p in &ps {
            csv.push_str(&format!(",{p:.6}"));
        }
        csv.push_str(&format!(",{mean_p:.6},{mean_p:.6}\n"));
    }
    write_bytes(&out_dir.join("eval_table.csv"), csv.as_bytes())?;

    write_json(
        &out_dir.join("eval_report.json"),
        &json!({
            "method": method_label,
            "seed": cfg.seed,
            "tasks": per_task_json,
            "avg_cases": avg_cases,
            "avg_task_means": avg_task_means,
        }),
    )?;
    let config_echo = serde_json::to_value(&cfg)
        .map_err(|e| CliError::runtime(format!("config echo failed: {e}")))?;
    write_manifest(
        &out_dir,
        "eval",
        cfg.seed,
        config_echo,
        &["eval_table.csv", "eval_report.json"],
    )?;
    eprintln!("mean error over all cases: {avg_cases:.3} voxels");
    Ok(())
}

pub fn bench(
    config_path: &Path,
    out: Option<&Path>,
    seed_override: Option<u64>,
    threads: usize,
) -> Result<(), CliError> {
    if threads > 1 {
        return Err(CliError::usage(
            "the timing benchmark must run single-threaded; drop --threads",
        ));
    }
    let mut cfg = load_run_config(config_path)?;
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    ensure_dir(&out_dir)?;

    let mut spec = cfg.bench.clone();
    spec.seed = cfg.seed;
    eprintln!(
        "benchmarking full ({:?} obs) vs coreset ({:?} obs), {} episode(s) x {} timed epoch(s)",
        <[usize; 3]>::from(spec.full.obs_dims),
        <[usize; 3]>::from(spec.coreset.obs_dims),
        spec.full.episodes_per_epoch,
        spec.full.timed_epochs,
    );
    let report = benchmark_epoch(&spec)?;
    let report_json = serde_json::to_value(&report)
        .map_err(|e| CliError::runtime(format!("report serialization failed: {e}")))?;
    write_json(&out_dir.join("timing.json"), &report_json)?;
    write_bytes(&out_dir.join("timing.csv"), report.to_csv_string().as_bytes())?;
    let config_echo = serde_json::to_value(&cfg)
        .map_err(|e| CliError::runtime(format!("config echo failed: {e}")))?;
    write_manifest(
        &out_dir,
        "bench",
        cfg.seed,
        config_echo,
        &["timing.json", "timing.csv"],
    )?;
    for arm in &report.arms {
        eprintln!(
            "{} (erb={}): {:.3}s per epoch",
            arm.pipeline, arm.with_erb, arm.mean_epoch_secs
        );
    }
    eprintln!(
        "speedup full/coreset: {:.2}x without ERB, {:.2}x with ERB",
        report.speedup_no_erb, report.speedup_with_erb
    );
    Ok(())
}
