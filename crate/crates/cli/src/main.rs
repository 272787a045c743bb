//! `rganet` command-line tool: dataset synthesis, training, inference,
//! evaluation, gradient checking, ablations and config inspection.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use rganet_cli::{
    dataset, load_run_config, run_gradient_suite, synth::SmokeParams, synth_smoke,
};
use rganet_network::{
    infer, load_checkpoint, make_ablation_variant, param_count, AblationCase,
};
use rganet_training::{report, train, RunConfig, TrainOptions};

#[derive(Parser)]
#[command(name = "rganet", version, about = "Surgical-smoke removal network toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CaseArg {
    #[value(name = "no_dha")]
    NoDha,
    #[value(name = "no_ada")]
    NoAda,
    #[value(name = "no_crossgating")]
    NoCrossgating,
}

impl From<CaseArg> for AblationCase {
    fn from(c: CaseArg) -> Self {
        match c {
            CaseArg::NoDha => AblationCase::NoDha,
            CaseArg::NoAda => AblationCase::NoAda,
            CaseArg::NoCrossgating => AblationCase::NoCrossgating,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a paired dataset by compositing synthetic smoke over clean PNGs.
    Synth {
        /// Directory of clean PNG images.
        #[arg(long)]
        data: PathBuf,
        /// Output dataset root (gets input/ and target/ subdirectories).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train on a paired dataset (input/ + target/ directories).
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Resume from an existing checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        steps: u64,
        #[arg(long, default_value_t = 4)]
        batch: usize,
    },
    /// Restore a directory of PNGs with a trained checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare restored images against targets and report metrics as JSON.
    Eval {
        /// Directory of restored PNGs.
        pred: PathBuf,
        /// Directory of ground-truth PNGs (matched by filename stem).
        target: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the fp64 gradient verification suite (nonzero exit on failure).
    Gradcheck,
    /// Train and evaluate a single-component ablation variant.
    Ablate {
        #[arg(long)]
        case: CaseArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        steps: u64,
        #[arg(long, default_value_t = 4)]
        batch: usize,
    },
    /// Print the resolved config and its parameter count.
    Inspect {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse(); // clap exits with code 2 on usage errors
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Synth { data, out, seed } => cmd_synth(&data, &out, seed),
        Command::Train {
            config,
            data,
            out,
            checkpoint,
            seed,
            steps,
            batch,
        } => {
            let run = load_run_config(config.as_deref())?;
            cmd_train(&run, &data, &out, checkpoint.as_deref(), seed, steps, batch)
        }
        Command::Infer {
            checkpoint,
            data,
            out,
        } => cmd_infer(&checkpoint, &data, &out),
        Command::Eval { pred, target, out } => cmd_eval(&pred, &target, out.as_deref()),
        Command::Gradcheck => cmd_gradcheck(),
        Command::Ablate {
            case,
            config,
            data,
            out,
            seed,
            steps,
            batch,
        } => {
            let mut run = load_run_config(config.as_deref())?;
            run.model = make_ablation_variant(&run.model, case.into());
            println!("ablation case: {}", AblationCase::from(case));
            cmd_train(&run, &data, &out, None, seed, steps, batch)?;
            // evaluate the trained variant on the same dataset
            let ckpt = out.join("checkpoint.rgan");
            let restored = out.join("restored");
            cmd_infer(&ckpt, &data.join("input"), &restored)?;
            cmd_eval(&restored, &data.join("target"), Some(&out.join("metrics.json")))
        }
        Command::Inspect { config } => cmd_inspect(config.as_deref()),
    }
}

fn cmd_synth(data: &Path, out: &Path, seed: u64) -> anyhow::Result<()> {
    let clean = dataset::list_pngs(data)?;
    if clean.is_empty() {
        bail!("no PNG files found in {}", data.display());
    }
    std::fs::create_dir_all(out.join("input"))?;
    std::fs::create_dir_all(out.join("target"))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for (stem, path) in &clean {
        let img = dataset::load_png(path)?;
        let params = SmokeParams::sample(&mut rng);
        let smoky = synth_smoke(&img, &params)?;
        dataset::save_png(&out.join("input").join(format!("{stem}.png")), &smoky)?;
        dataset::save_png(&out.join("target").join(format!("{stem}.png")), &img)?;
    }
    println!("wrote {} pairs to {}", clean.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    run: &RunConfig,
    data: &Path,
    out: &Path,
    resume: Option<&Path>,
    seed: u64,
    steps: u64,
    batch: usize,
) -> anyhow::Result<()> {
    let samples = dataset::load_dataset(data)?;
    println!(
        "training on {} pairs for {steps} steps (batch {batch}, seed {seed})",
        samples.len()
    );
    let opts = TrainOptions {
        steps,
        batch,
        seed,
        checkpoint_every: 0,
        out_dir: Some(out.to_path_buf()),
        augment_enabled: true,
    };
    let report = train(run, &samples, &opts, resume).context("training failed")?;
    if let Some(last) = report.log.last() {
        println!(
            "final step {}: l2 {:.6} ssim_term {:.6} total {:.6}",
            last.step, last.l2, last.ssim_term, last.total
        );
    }
    if let Some(path) = &report.checkpoint {
        println!("checkpoint: {}", path.display());
    }
    Ok(())
}

fn cmd_infer(checkpoint: &Path, data: &Path, out: &Path) -> anyhow::Result<()> {
    let decoded = load_checkpoint(checkpoint)?;
    let files = dataset::list_pngs(data)?;
    if files.is_empty() {
        bail!("no PNG files found in {}", data.display());
    }
    std::fs::create_dir_all(out)?;
    for (stem, path) in &files {
        let img = dataset::load_png(path)?;
        let restored = infer(&decoded.params, &decoded.config, &img)?;
        dataset::save_png(&out.join(format!("{stem}.png")), &restored)?;
    }
    println!("restored {} images into {}", files.len(), out.display());
    Ok(())
}

fn cmd_eval(pred: &Path, target: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let pairs = dataset::pair_dirs(pred, target)?;
    if pairs.is_empty() {
        bail!("no image pairs to evaluate");
    }
    let mut loaded = Vec::with_capacity(pairs.len());
    for (stem, p, t) in pairs {
        loaded.push((stem, dataset::load_png(&p)?, dataset::load_png(&t)?));
    }
    let rep = report(&loaded)?;
    let json = serde_json::to_string_pretty(&rep)?;
    match out {
        Some(path) => {
            std::fs::write(path, &json)?;
            println!(
                "psnr {:.3} ssim {:.4} ms_ssim {:.4} mae {:.3} ciede2000 {:.3} -> {}",
                rep.psnr,
                rep.ssim,
                rep.ms_ssim,
                rep.mae,
                rep.ciede2000,
                path.display()
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_gradcheck() -> anyhow::Result<()> {
    let outcomes = run_gradient_suite();
    let mut failures = 0;
    for o in &outcomes {
        println!(
            "gradcheck {:<18} err {:.3e}  tol {:.0e}  {}",
            o.name,
            o.err,
            o.tol,
            if o.passed() { "PASS" } else { "FAIL" }
        );
        if !o.passed() {
            failures += 1;
        }
    }
    if failures > 0 {
        bail!("{failures} gradient checks failed");
    }
    Ok(())
}

fn cmd_inspect(config: Option<&Path>) -> anyhow::Result<()> {
    let run = load_run_config(config)?;
    println!("{}", serde_json::to_string_pretty(&run)?);
    println!("parameters: {}", param_count(&run.model));
    Ok(())
}
