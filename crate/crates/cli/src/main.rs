use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use ckm_cli::bench::{run_bench, BenchConfig};
use ckm_cli::recon::{reconstruct, DiffusionRuntime, Method};
use ckm_cli::selftest::run_selftest;
use ckm_cli::tasks::{build_spec, Task, DEFAULT_MASK_FRAC, DEFAULT_NOISE_STD, DEFAULT_SR_FACTOR};
use ckm_diffusion::{
    condition_from_observation, load_model, sample, save_model, CheckpointMeta, Codec,
    DdmSchedule, IdentityCodec, ModelConfig, SampleConfig, Trainer, TrainerConfig,
};
use ckm_envgen::{build_dataset, entry_file, DatasetManifest, EnvironmentSpec, PropagationParams,
                 Split};
use ckm_grid::{apply_degradation, io as grid_io, CkmGrid, ValueMap};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ckmforge", version, about = "Channel-knowledge-map reconstruction toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic gain-map corpus with a train/test manifest
    GenData {
        #[arg(long)]
        maps: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        buildings: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a degradation operator plus noise to a stored map
    Degrade {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = DEFAULT_MASK_FRAC)]
        mask_frac: f64,
        #[arg(long, default_value_t = DEFAULT_SR_FACTOR)]
        factor: usize,
        #[arg(long, default_value_t = DEFAULT_NOISE_STD)]
        noise_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a full map from a stored observation
    Reconstruct {
        #[arg(long)]
        method: String,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Conditional draws averaged per image (posterior-mean estimate).
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the conditional diffusion model on a dataset manifest
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Model preset: tiny | desk | paper, or a path to a JSON ModelConfig
        #[arg(long, default_value = "tiny")]
        config: String,
        #[arg(long)]
        iters: usize,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a map from a trained model, optionally conditioned on an observation
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        condition: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a reconstruction against ground truth
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        recon: PathBuf,
        #[arg(long, default_value_t = false)]
        exclude_buildings: bool,
    },
    /// Run all methods x tasks over a dataset's test split
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated method names
        #[arg(long)]
        methods: String,
        /// Comma-separated task names
        #[arg(long)]
        tasks: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Conditional draws averaged per image (posterior-mean estimate).
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_NOISE_STD)]
        noise_std: f64,
        #[arg(long, default_value_t = DEFAULT_MASK_FRAC)]
        mask_frac: f64,
        #[arg(long, default_value_t = DEFAULT_SR_FACTOR)]
        factor: usize,
        #[arg(long, default_value_t = false)]
        exclude_buildings: bool,
        /// Cap on test maps (all by default)
        #[arg(long)]
        max_maps: Option<usize>,
    },
    /// Run the oracle and gradient-check suites
    Selftest,
}

const EXIT_USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse(); // clap exits 2 on flag errors by itself
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_diffusion(path: &Path, steps: usize, seed: u64, samples: usize) -> Result<DiffusionRuntime> {
    let (net, _meta) = load_model(path)?;
    Ok(DiffusionRuntime { net, steps, seed, samples })
}

fn model_config(arg: &str) -> Result<ModelConfig> {
    Ok(match arg {
        "tiny" => ModelConfig::tiny(),
        "desk" => ModelConfig::desk(),
        "paper" => ModelConfig::paper_scale(),
        path => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading model config {path}"))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?
        }
    })
}

fn run(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::GenData { maps, size, seed, buildings, out } => {
            let template = EnvironmentSpec {
                height: size,
                width: size,
                building_count: buildings,
                building_size_range: ((size / 10).max(1), (size / 5).max(2)),
                tx_position: (size / 2, size / 2),
                seed,
            };
            fs::create_dir_all(&out)?;
            fs::write(
                out.join("gen_config.json"),
                serde_json::to_string_pretty(&serde_json::json!({
                    "maps": maps,
                    "height": template.height,
                    "width": template.width,
                    "building_count": template.building_count,
                    "building_size_range": template.building_size_range,
                    "seed": template.seed,
                    "value_map": "radio_map_seer",
                }))?,
            )?;
            let manifest = build_dataset(
                maps,
                &template,
                &PropagationParams::default(),
                ValueMap::RADIO_MAP_SEER,
                &out,
            )?;
            println!(
                "wrote {} maps ({} train / {} test) under {}",
                manifest.entries.len(),
                manifest.split_entries(Split::Train).count(),
                manifest.split_entries(Split::Test).count(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Degrade { task, mask_frac, factor, noise_std, seed, input, out } => {
            let task = match Task::parse(&task) {
                Ok(t) => t,
                Err(e) => return Ok(usage_exit(e)),
            };
            let grid = grid_io::read_ckm(&input)?;
            let spec = build_spec(task, grid.shape(), mask_frac, factor, noise_std, seed)?;
            let obs = apply_degradation(&grid, &spec)?;
            grid_io::write_observation(&out, &obs)?;
            println!("{} observation with {} values -> {}", task.name(), obs.values.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Reconstruct { method, obs, out, checkpoint, steps, samples, seed } => {
            let method = match Method::parse(&method) {
                Ok(m) => m,
                Err(e) => return Ok(usage_exit(e)),
            };
            let observation = grid_io::read_observation(&obs)?;
            let diffusion = match (&checkpoint, method.needs_checkpoint()) {
                (Some(p), _) => Some(load_diffusion(p, steps, seed, samples)?),
                (None, true) => bail!("method '{}' needs --checkpoint", method.name()),
                (None, false) => None,
            };
            let img = reconstruct(
                &observation,
                method,
                ValueMap::RADIO_MAP_SEER,
                diffusion.as_ref(),
                seed,
            )?;
            grid_io::write_pixel_image(&out, &img)?;
            println!("{} reconstruction -> {}", method.name(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Train { manifest, config, iters, batch, seed, out } => {
            let model = model_config(&config)?;
            let manifest_dir = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
            let m = DatasetManifest::load(&manifest)?;
            let corpus: Vec<CkmGrid> = m
                .split_entries(Split::Train)
                .map(|e| Ok(grid_io::read_ckm(&entry_file(&manifest_dir, e))?))
                .collect::<Result<_>>()?;
            anyhow::ensure!(!corpus.is_empty(), "manifest has no train entries");

            let mut cfg = TrainerConfig::new(model, iters);
            cfg.batch_size = batch;
            cfg.seed = seed;
            if let Some(dir) = out.parent() {
                if !dir.as_os_str().is_empty() {
                    fs::create_dir_all(dir)?;
                }
            }
            fs::write(
                out.with_extension("config.json"),
                serde_json::to_string_pretty(&cfg)?,
            )?;

            let mut trainer = Trainer::new(cfg.clone())?;
            let codec = IdentityCodec;
            let log_path = out.with_extension("losses.jsonl");
            let mut log = std::io::BufWriter::new(
                fs::OpenOptions::new().create(true).append(true).open(&log_path)?,
            );
            let meta = |steps| CheckpointMeta {
                config: cfg.model.clone(),
                schedule: DdmSchedule::new(50).expect("static schedule"),
                codec_id: codec.id().to_string(),
                mixture: cfg.mixture.clone(),
                trained_steps: steps,
            };
            for i in 0..iters {
                let outcome = trainer.step(&corpus, &codec)?;
                writeln!(
                    log,
                    "{}",
                    serde_json::json!({
                        "step": outcome.step,
                        "loss": outcome.loss,
                        "batch_seed": outcome.batch_seed,
                    })
                )?;
                if (i + 1) % 50 == 0 {
                    log.flush()?;
                    eprintln!("step {}/{iters}: loss {:.5}", i + 1, outcome.loss);
                }
                if (i + 1) % 1000 == 0 && i + 1 < iters {
                    save_model(&out, trainer.net(), &meta(trainer.steps_done()))?;
                }
            }
            log.flush()?;
            save_model(&out, trainer.net(), &meta(trainer.steps_done()))?;
            println!("trained {iters} steps -> {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Sample { checkpoint, condition, steps, seed, out } => {
            let (net, _meta) = load_model(&checkpoint)?;
            let cond = condition
                .map(|p| -> Result<_> {
                    let obs = grid_io::read_observation(&p)?;
                    Ok(condition_from_observation(&obs)?)
                })
                .transpose()?;
            let img = sample(
                &net,
                &IdentityCodec,
                cond.as_ref(),
                &SampleConfig {
                    schedule: DdmSchedule::new(steps)?,
                    seed,
                },
            )?;
            grid_io::write_pixel_image(&out, &img)?;
            println!("sample -> {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Eval { truth, recon, exclude_buildings } => {
            let t = grid_io::read_ckm(&truth)?;
            let r = grid_io::read_pixel_image(&recon)?;
            let report = ckm_metrics::compute_report(
                &[t],
                &[r],
                &ckm_metrics::MetricsConfig {
                    exclude_buildings,
                    ..Default::default()
                },
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Bench {
            manifest,
            methods,
            tasks,
            out,
            checkpoint,
            steps,
            samples,
            seed,
            noise_std,
            mask_frac,
            factor,
            exclude_buildings,
            max_maps,
        } => {
            let method_names: Vec<String> = methods.split(',').map(|s| s.trim().to_string()).collect();
            let task_names: Vec<String> = tasks.split(',').map(|s| s.trim().to_string()).collect();
            for name in &method_names {
                if let Err(e) = Method::parse(name) {
                    return Ok(usage_exit(e));
                }
            }
            for name in &task_names {
                if let Err(e) = Task::parse(name) {
                    return Ok(usage_exit(e));
                }
            }
            let needs_ckpt = method_names.iter().any(|m| m == "ckmdiff");
            let diffusion = match (&checkpoint, needs_ckpt) {
                (Some(p), _) => Some(load_diffusion(p, steps, seed, samples)?),
                (None, true) => bail!("method 'ckmdiff' needs --checkpoint"),
                (None, false) => None,
            };
            let cfg = BenchConfig {
                manifest,
                methods: method_names,
                tasks: task_names,
                out_dir: out,
                noise_std,
                mask_frac,
                sr_factor: factor,
                sample_steps: steps,
                sample_draws: samples,
                seed,
                exclude_buildings,
                checkpoint,
                max_maps,
            };
            let result = run_bench(&cfg, diffusion.as_ref())?;
            println!(
                "{}",
                fs::read_to_string(cfg.out_dir.join("report.txt"))?
            );
            anyhow::ensure!(!result.rows.is_empty(), "no method/task combination produced a row");
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Selftest => Ok(if run_selftest() {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(1)
        }),
    }
}

fn usage_exit(e: anyhow::Error) -> ExitCode {
    eprintln!("usage error: {e:#}");
    ExitCode::from(EXIT_USAGE)
}
