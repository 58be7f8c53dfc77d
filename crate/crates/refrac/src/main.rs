//! Command line tool for the refractive Gaussian reconstruction pipeline.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use refrac::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
use refrac::config::Config;
use refrac::imageio;
use refrac::objmesh;
use refrac::pipeline;
use refrac::scene::SceneFile;
use refrac::synth;

#[derive(Parser)]
#[command(name = "refrac", version, about = "Refractive water-surface and Gaussian scene reconstruction")]
struct Cli {
    /// Cap renderer parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON configuration file; omitted fields use built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// key=value overrides (flags win over the file), e.g. train.iterations=100.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed override applied to both generation and training.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene with ground-truth images.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for scene.json and view PNGs.
        #[arg(long, default_value = "scene_out")]
        out: PathBuf,
    },
    /// Train on a scene; writes a checkpoint and a metric log.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Path to scene.json.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "train_out")]
        out: PathBuf,
    },
    /// Render scene views from a checkpoint.
    Render {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Which split to render: train, test or all.
        #[arg(long, default_value = "all")]
        split: String,
        /// Bypass the water surface (render the scene as if drained).
        #[arg(long)]
        dewater: bool,
        #[arg(long, default_value = "render_out")]
        out: PathBuf,
    },
    /// Shorthand for `render --dewater`.
    Dewater {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "all")]
        split: String,
        #[arg(long, default_value = "render_out")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint: PSNR/SSIM per view plus surface RMSE.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Split to evaluate.
        #[arg(long, default_value = "test")]
        split: String,
        /// Where to write report.csv (defaults next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render through a substituted height-field mesh (OBJ) without retraining.
    EditSurface {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Replacement surface mesh.
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value = "edit_out")]
        out: PathBuf,
    },
}

/// Errors that are the caller's fault (bad flags, bad config, missing
/// inputs) exit with 2; everything else with 1.
enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

type CliResult = Result<(), CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

fn load_config(args: &ConfigArgs) -> Result<Config, CliError> {
    let mut cfg = match &args.config {
        Some(p) => Config::load(p).map_err(|e| CliError::Usage(format!("{e:#}")))?,
        None => Config::default(),
    };
    for s in &args.set {
        cfg.apply_override(s)
            .map_err(|e| CliError::Usage(format!("{e:#}")))?;
    }
    if let Some(seed) = args.seed {
        cfg.generate.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn load_scene_checked(path: &Path) -> Result<(SceneFile, PathBuf), CliError> {
    if !path.exists() {
        return usage(format!("scene file not found: {}", path.display()));
    }
    let scene = SceneFile::load(path).map_err(|e| CliError::Usage(format!("{e:#}")))?;
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    scene
        .validate(&dir)
        .map_err(|e| CliError::Usage(format!("{e:#}")))?;
    Ok((scene, dir))
}

fn load_checkpoint_checked(path: &Path) -> Result<Checkpoint, CliError> {
    load_checkpoint(path).map_err(|e| match e {
        CheckpointError::Missing(_) | CheckpointError::Version { .. } => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Runtime(other.into()),
    })
}

fn runtime(e: anyhow::Error) -> CliError {
    CliError::Runtime(e)
}

fn cmd_generate(args: &ConfigArgs, out: &Path) -> CliResult {
    let cfg = load_config(args)?;
    let scene =
        synth::generate_synthetic_scene(&cfg.generate, out).map_err(|e| {
            // Bad spec values are usage errors; disk trouble is runtime.
            if e.to_string().contains("unknown") || e.to_string().contains("must") {
                CliError::Usage(format!("{e:#}"))
            } else {
                runtime(e)
            }
        })?;
    println!(
        "generated {} views ({} train / {} test) in {}",
        scene.views.len(),
        scene.views.iter().filter(|v| v.split == "train").count(),
        scene.views.iter().filter(|v| v.split == "test").count(),
        out.display()
    );
    Ok(())
}

fn cmd_train(args: &ConfigArgs, scene_path: &Path, out: &Path) -> CliResult {
    let cfg = load_config(args)?;
    let (scene, dir) = load_scene_checked(scene_path)?;
    std::fs::create_dir_all(out).map_err(|e| runtime(e.into()))?;

    let mut log = String::from("iteration,l1,ssim_loss,opacity_loss,total,psnr_db\n");
    let model = pipeline::train_on_scene(&scene, &dir, &cfg.train, |r| {
        let _ = writeln!(
            log,
            "{},{:.6},{:.6},{:.6},{:.6},{:.4}",
            r.iteration, r.l1, r.ssim_loss, r.opacity_loss, r.total, r.psnr
        );
        println!(
            "iter {:>6}  loss {:.5}  psnr {:.2} dB",
            r.iteration, r.total, r.psnr
        );
    })
    .map_err(runtime)?;

    std::fs::write(out.join("train_log.csv"), log).map_err(|e| runtime(e.into()))?;
    save_checkpoint(
        &out.join("checkpoint.ckpt"),
        &Checkpoint {
            field: model.field,
            net: Some(model.net),
            refraction: scene.refraction.into(),
        },
    )
    .map_err(|e| runtime(e.into()))?;
    if let (Some(first), Some(last)) = (model.records.first(), model.records.last()) {
        println!(
            "done: psnr {:.2} -> {:.2} dB over {} iterations",
            first.psnr,
            last.psnr,
            cfg.train.iterations
        );
    }
    Ok(())
}

fn cmd_render(
    args: &ConfigArgs,
    checkpoint: &Path,
    scene_path: &Path,
    split: &str,
    dewater: bool,
    out: &Path,
) -> CliResult {
    let cfg = load_config(args)?;
    let ckpt = load_checkpoint_checked(checkpoint)?;
    let (scene, _) = load_scene_checked(scene_path)?;
    std::fs::create_dir_all(out).map_err(|e| runtime(e.into()))?;
    let mut count = 0;
    for v in &scene.views {
        if split != "all" && v.split != split {
            continue;
        }
        let cam = v.camera();
        let img = pipeline::render_view(
            ckpt.net.as_ref(),
            &ckpt.field,
            ckpt.refraction,
            &cfg.train,
            &cam,
            dewater,
        )
        .map_err(runtime)?;
        imageio::save_png(&out.join(&v.image), &img.colors, img.width, img.height)
            .map_err(runtime)?;
        count += 1;
    }
    if count == 0 {
        return usage(format!("no views in split '{split}'"));
    }
    println!("rendered {count} views into {}", out.display());
    Ok(())
}

fn cmd_eval(
    args: &ConfigArgs,
    checkpoint: &Path,
    scene_path: &Path,
    split: &str,
    out: Option<&Path>,
) -> CliResult {
    let cfg = load_config(args)?;
    let ckpt = load_checkpoint_checked(checkpoint)?;
    let (scene, dir) = load_scene_checked(scene_path)?;
    let report = pipeline::evaluate(
        ckpt.net.as_ref(),
        &ckpt.field,
        ckpt.refraction,
        &cfg.train,
        &scene,
        &dir,
        split,
    )
    .map_err(runtime)?;
    print!("{}", report.to_csv());
    println!(
        "mean psnr {:.3} dB, mean ssim {:.4} ({} views, {:.1} s)",
        report.mean_psnr,
        report.mean_ssim,
        report.per_view.len(),
        report.elapsed_seconds
    );
    if let Some(r) = report.surface_rmse {
        println!("surface rmse {:.6} ({} rays, {} missed)", r.rmse, r.rays_used, r.rays_missed);
    }
    let csv_path = out
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| checkpoint.with_extension("report.csv"));
    report.write_csv(&csv_path).map_err(runtime)?;
    Ok(())
}

fn cmd_edit_surface(
    args: &ConfigArgs,
    checkpoint: &Path,
    scene_path: &Path,
    mesh_path: &Path,
    out: &Path,
) -> CliResult {
    let cfg = load_config(args)?;
    let ckpt = load_checkpoint_checked(checkpoint)?;
    let (scene, _) = load_scene_checked(scene_path)?;
    if !mesh_path.exists() {
        return usage(format!("mesh file not found: {}", mesh_path.display()));
    }
    let mesh = objmesh::load_obj(mesh_path).map_err(|e| CliError::Usage(format!("{e:#}")))?;
    objmesh::validate_heightfield(&mesh)
        .map_err(|e| CliError::Usage(format!("{e:#}")))?;
    std::fs::create_dir_all(out).map_err(|e| runtime(e.into()))?;
    for v in &scene.views {
        let cam = v.camera();
        let img = pipeline::render_with_mesh(&mesh, &ckpt.field, ckpt.refraction, &cfg.train, &cam)
            .map_err(runtime)?;
        imageio::save_png(&out.join(&v.image), &img.colors, img.width, img.height)
            .map_err(runtime)?;
    }
    println!("rendered {} views through {}", scene.views.len(), mesh_path.display());
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    match &cli.command {
        Command::Generate { cfg, out } => cmd_generate(cfg, out),
        Command::Train { cfg, scene, out } => cmd_train(cfg, scene, out),
        Command::Render {
            cfg,
            checkpoint,
            scene,
            split,
            dewater,
            out,
        } => cmd_render(cfg, checkpoint, scene, split, *dewater, out),
        Command::Dewater {
            cfg,
            checkpoint,
            scene,
            split,
            out,
        } => cmd_render(cfg, checkpoint, scene, split, true, out),
        Command::Eval {
            cfg,
            checkpoint,
            scene,
            split,
            out,
        } => cmd_eval(cfg, checkpoint, scene, split, out.as_deref()),
        Command::EditSurface {
            cfg,
            checkpoint,
            scene,
            mesh,
            out,
        } => cmd_edit_surface(cfg, checkpoint, scene, mesh, out),
    }
}

fn main() -> ExitCode {
    // clap itself exits with 2 on bad arguments, matching the contract.
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
