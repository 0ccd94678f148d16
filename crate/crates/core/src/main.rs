//! Command-line front end. Exit codes: 0 success, 1 usage or configuration
//! error, 2 data or format error, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use deeplight::dataset::{generate_dataset, make_manifest_for, Raster, SceneSpec, Split};
use deeplight::harness::{ablate_on, eval_document, init_threads, matrix_json, train, RunConfig, TrainOptions, TrainingData};
use deeplight::kv::KeyValues;
use deeplight::metrics::{evaluate_pair, method_notes, report_section};
use deeplight::{Ablation, Error};

#[derive(Parser)]
#[command(name = "deeplight", version, about = "Multi-modal nighttime-light super-resolution")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        hr_size: usize,
        #[arg(long, default_value_t = 8)]
        scale: usize,
        #[arg(long, default_value_t = 0.1)]
        val_frac: f64,
        #[arg(long, default_value_t = 0.1)]
        test_frac: f64,
        /// Extra scene parameters as `key=value` (e.g. `noise_sigma=0.02`).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Train one model.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ablation: Option<Ablation>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from the latest checkpoint in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Score a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "val")]
        split: Split,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        baseline: Option<Baseline>,
    },
    /// Train every ablation variant and write the comparison matrix.
    Ablate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        matrix: PathBuf,
        /// Where the per-variant runs go; defaults to the matrix's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score one prediction raster against a reference raster.
    Metrics {
        pred: PathBuf,
        target: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Bicubic,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn load_config(path: Option<&Path>, data: Option<PathBuf>) -> deeplight::Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = data {
        cfg.data_dir = d;
    }
    Ok(cfg)
}

fn write_json(path: &Path, v: &serde_json::Value) -> deeplight::Result<()> {
    let text = serde_json::to_string_pretty(v).expect("json values always serialize");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn run(cmd: Cmd) -> deeplight::Result<()> {
    match cmd {
        Cmd::Gen {
            out,
            scenes,
            seed,
            hr_size,
            scale,
            val_frac,
            test_frac,
            set,
        } => {
            let mut spec = SceneSpec {
                hr_size,
                scale_r: scale,
                ..SceneSpec::default()
            };
            let overrides = KeyValues::parse(&set.join("\n"))?;
            spec.update_from_kv(&overrides, "")?;
            let manifest = make_manifest_for(&spec, scenes, (1.0 - val_frac - test_frac, val_frac, test_frac), seed)?;
            let stats = generate_dataset(&out, &manifest)?;
            println!(
                "wrote {} scenes to {} (train {}, val {}, test {}); dark fraction {:.4}, ISP zero:one {:.1}",
                stats.scenes,
                out.display(),
                manifest.train.len(),
                manifest.val.len(),
                manifest.test.len(),
                stats.dark_fraction,
                stats.isp_zero_ratio
            );
        }
        Cmd::Train {
            data,
            config,
            out,
            ablation,
            steps,
            seed,
            resume,
        } => {
            let mut cfg = load_config(config.as_deref(), data)?;
            if let Some(a) = ablation {
                cfg = cfg.with_ablation(a);
            }
            if let Some(s) = steps {
                cfg.steps = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let summary = train(&cfg, &out, &TrainOptions { resume, stop_after: None })?;
            let first = summary.records.first().map_or(f64::NAN, |r| r.loss);
            let last = summary.records.last().map_or(f64::NAN, |r| r.loss);
            println!(
                "trained {} ({} steps): loss {first:.5} -> {last:.5}, val PSNR {:.3} dB; checkpoints in {}",
                cfg.ablation,
                cfg.steps,
                summary.final_eval.get("psnr").unwrap_or(f64::NAN),
                out.display()
            );
        }
        Cmd::Eval {
            data,
            ckpt,
            split,
            report,
            baseline,
        } => {
            let doc = eval_document(&ckpt, &data, split, baseline.is_some())?;
            write_json(&report, &doc)?;
            let psnr = |key: &str| doc[key]["aggregate"]["psnr"].as_f64().unwrap_or(f64::NAN);
            match baseline {
                Some(_) => println!("PSNR model {:.3} dB, bicubic {:.3} dB", psnr("model"), psnr("baseline_bicubic")),
                None => println!("PSNR model {:.3} dB", psnr("model")),
            }
        }
        Cmd::Ablate {
            data,
            config,
            matrix,
            out,
        } => {
            let cfg = load_config(config.as_deref(), data)?;
            cfg.validate()?;
            let runs = out.unwrap_or_else(|| matrix.parent().map(Path::to_path_buf).unwrap_or_default().join("ablation_runs"));
            let data = TrainingData::load(&cfg.data_dir)?;
            let rows = ablate_on(&cfg, &data, &runs);
            write_json(&matrix, &matrix_json(&rows, &cfg))?;
            for r in &rows {
                match &r.outcome {
                    Ok(_) => println!("{:<12} PSNR {:.3}", r.ablation.label(), r.psnr().unwrap_or(f64::NAN)),
                    Err(e) => println!("{:<12} failed: {e}", r.ablation.label()),
                }
            }
        }
        Cmd::Metrics { pred, target, report } => {
            let (p, t) = (Raster::read(&pred)?, Raster::read(&target)?);
            let r = evaluate_pair(&p, &t)?;
            for (name, m) in deeplight::metrics::METRIC_NAMES.iter().zip(r.columns()) {
                match m.flag {
                    Some(f) => println!("{name:<5} {:>12} ({})", m.value, f.name()),
                    None => println!("{name:<5} {:>12.6}", m.value),
                }
            }
            if let Some(path) = report {
                let mut doc = report_section(&[0], &[r])?;
                doc["metadata"] = serde_json::json!({ "pred": pred.display().to_string(), "target": target.display().to_string(), "notes": method_notes() });
                write_json(&path, &doc)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

