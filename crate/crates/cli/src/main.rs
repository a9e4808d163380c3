use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use nfmp::checkpoint;
use nfmp::eval::{EvalOptions, OracleTruth};
use nfmp::inference::{extract_mesh, fit_embedding, interpolate_embedding, motion_for, render_image, FitOptions, TrajOptions};
use nfmp::io::{self, read_scene, write_dataset, write_image, write_text, write_trajectory};
use nfmp::model::TrainConfig;
use nfmp::tasks::{gen_dataset, inject_distractor, interior_grid, make_grid, Split};
use nfmp::{eval_report, init_model, train, Config, ModelDims, NfmpModel, SceneSamples, TaskKind, TaskSpec};

/// Neural field movement primitives.
#[derive(Parser)]
#[command(name = "nfmp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic task dataset.
    GenData(GenData),
    /// Train a model on a dataset and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset against its ground truth.
    Eval(EvalArgs),
    /// Fit an embedding to one scene and write its reconstruction and motion.
    Infer(InferArgs),
    /// Interpolate between two training embeddings.
    Sweep(SweepArgs),
    /// Extract the zero level set of an SDF model as OBJ.
    Mesh(MeshArgs),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    task: Option<TaskKind>,
    /// Points per parameter axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "train")]
    split: String,
    /// Keep only grid points strictly inside the unit box.
    #[arg(long)]
    interior: bool,
    /// Add a distractor blob to every image scene, seeded with this value.
    #[arg(long)]
    distractor: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Overrides on top of the dataset configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Inference overrides on top of the checkpoint configuration.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// A `demo_NNN` directory, PGM/PPM image or SDF sample file.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Index of the first training demo.
    #[arg(long)]
    from: usize,
    /// Index of the second training demo.
    #[arg(long)]
    to: usize,
    #[arg(long, default_value_t = 11)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Training demo whose embedding is meshed.
    #[arg(long, conflicts_with = "scene")]
    demo: Option<usize>,
    /// Scene to fit an embedding to before meshing.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn seed_override(cfg: &mut Config) -> Result<()> {
    if let Ok(v) = std::env::var("NFMP_SEED") {
        cfg.seed = v.trim().parse().with_context(|| format!("NFMP_SEED `{v}` is not an unsigned integer"))?;
        info!("seed {} from NFMP_SEED", cfg.seed);
    }
    Ok(())
}

fn apply_file(cfg: &mut Config, path: &Option<PathBuf>) -> Result<()> {
    if let Some(p) = path {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.apply(&text).with_context(|| format!("in {}", p.display()))?;
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<NfmpModel> {
    checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn load_scene(path: &Path) -> Result<SceneSamples> {
    let scene = if path.is_dir() {
        read_scene(path)?
    } else {
        match path.extension().and_then(|e| e.to_str()) {
            Some("pgm" | "ppm") => io::read_image(path)?,
            _ => io::decode_sdf(&fs::read(path).with_context(|| format!("reading {}", path.display()))?)?,
        }
    };
    Ok(scene)
}

fn gen_data(a: &GenData) -> Result<()> {
    let mut cfg = Config::default();
    apply_file(&mut cfg, &a.config)?;
    if let Some(k) = a.task {
        cfg.task_kind = k;
    }
    seed_override(&mut cfg)?;
    let split: Split = match a.split.as_str() {
        "train" => Split::Train,
        "test" => Split::Test,
        s => bail!("unknown split `{s}`, expected train or test"),
    };
    let g = a.grid.unwrap_or(match split {
        Split::Train => cfg.grid_train,
        Split::Test => cfg.grid_test,
    });
    match split {
        Split::Train => cfg.grid_train = g,
        Split::Test => cfg.grid_test = g,
    }
    let dim = cfg.task_kind.param_dim();
    let grid = if a.interior { interior_grid(g, dim)? } else { make_grid(g, dim)? };
    ensure!(!grid.is_empty(), "grid {g} has no interior points");
    let spec = TaskSpec::from_config(&cfg);
    info!("generating {} {} demos ({split})", grid.len(), cfg.task_kind);
    let mut demos = gen_dataset(&spec, &grid, split)?;
    if let Some(seed) = a.distractor {
        ensure!(cfg.task_kind.is_image(), "distractors apply to image tasks only");
        for (i, d) in demos.iter_mut().enumerate() {
            d.scene = inject_distractor(&d.scene, seed.wrapping_add(i as u64))?;
        }
    }
    write_dataset(&a.out, &cfg, split, &demos)?;
    info!("wrote {}", a.out.display());
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = io::read_dataset_config(&a.data).with_context(|| format!("reading dataset config in {}", a.data.display()))?;
    let kind = cfg.task_kind;
    apply_file(&mut cfg, &a.config)?;
    ensure!(cfg.task_kind == kind, "config task {} does not match dataset task {kind}", cfg.task_kind);
    if let Some(s) = a.steps {
        ensure!(s > 0, "--steps must be at least 1");
        cfg.train_steps = s;
    }
    seed_override(&mut cfg)?;
    let demos = io::load_demos(&a.data)?;
    let channels = demos[0].scene.channels;
    let dims = ModelDims::for_task(kind, channels, demos.len());
    let model = init_model(&cfg, &dims)?;
    info!("training {kind} model: {} parameters, {} demos, {} steps", model.param_count(), demos.len(), cfg.train_steps);
    let start = std::time::Instant::now();
    let (model, history) = train(model, &demos, &TrainConfig::from_config(&cfg))?;
    let last = history.last().expect("at least one step");
    info!("done in {:.1}s, final loss {:.3e}", start.elapsed().as_secs_f64(), last.total);
    checkpoint::save(&model, &a.out)?;
    info!("wrote {}", a.out.display());
    Ok(())
}

fn run_eval(a: &EvalArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    let data_cfg = io::read_dataset_config(&a.data)?;
    ensure!(
        data_cfg.task_kind == model.config.task_kind,
        "dataset task {} does not match model task {}",
        data_cfg.task_kind,
        model.config.task_kind
    );
    let mut cfg = model.config.clone();
    apply_file(&mut cfg, &a.config)?;
    seed_override(&mut cfg)?;
    let scenes = io::load_scenes(&a.data)?;
    let params = io::load_meta(&a.data)?.into_iter().map(|m| m.params).collect();
    let truth = OracleTruth { spec: TaskSpec::from_config(&data_cfg), params };
    let report = eval_report(&model, &scenes, &truth, &EvalOptions::from_config(&cfg))?;
    report.save_csv(&a.report)?;
    let agg = &report.aggregate;
    info!(
        "joint_err_deg {:?} success_rate {:?} scene_mse {:?} chamfer {:?} failures {}",
        agg.joint_err_mean, agg.success_rate, agg.scene_mse_mean, agg.chamfer_mean, agg.failures
    );
    ensure!(agg.failures == 0, "{} demos failed, see {}", agg.failures, a.report.display());
    Ok(())
}

fn write_outputs(model: &NfmpModel, z: &[f64], dir: &Path, stem: &str, seed: u64) -> Result<()> {
    let c = &model.config;
    if model.dims.scene_dim == 2 {
        let img = render_image(model, z, c.image_res, c.image_res)?;
        let ext = if model.dims.channels == 1 { "pgm" } else { "ppm" };
        write_image(dir.join(format!("{stem}.{ext}")), &img)?;
    } else {
        extract_mesh(model, z, c.mesh_res, ([-1.0; 3], [1.0; 3]))?.save_obj(dir.join(format!("{stem}.obj")))?;
    }
    let traj = motion_for(model, z, c.traj_k, &TrajOptions::from_config(c), seed)?;
    write_trajectory(dir.join(format!("{stem}.csv")), &traj)?;
    Ok(())
}

fn run_infer(a: &InferArgs) -> Result<()> {
    let mut model = load_model(&a.ckpt)?;
    seed_override(&mut model.config)?;
    let scene = load_scene(&a.scene)?;
    let fit = fit_embedding(&model, &scene, &FitOptions::from_config(&model.config))?;
    info!("fit loss {:.3e}", fit.loss);
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let alpha: Vec<String> = fit.weights.alpha().iter().map(|v| v.to_string()).collect();
    write_text(a.out.join("alpha.txt"), &format!("{}\n", alpha.join(" ")))?;
    write_text(a.out.join("config.txt"), &model.config.to_text())?;
    write_outputs(&model, &fit.z, &a.out, "inferred", model.config.seed)
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    let mut model = load_model(&a.ckpt)?;
    seed_override(&mut model.config)?;
    let n = model.num_demos();
    ensure!(a.from < n && a.to < n, "demo indices must be below {n}");
    ensure!(a.steps >= 2, "--steps must be at least 2");
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_text(a.out.join("config.txt"), &format!("# sweep: {} -> {}, {} steps\n{}", a.from, a.to, a.steps, model.config.to_text()))?;
    let (za, zb) = (model.embedding(a.from).to_vec(), model.embedding(a.to).to_vec());
    for i in 0..a.steps {
        let s = i as f64 / (a.steps - 1) as f64;
        let z = interpolate_embedding(&za, &zb, s)?;
        write_outputs(&model, &z, &a.out, &format!("step_{i:02}"), model.config.seed)?;
        info!("step {i}: s = {s:.3}");
    }
    Ok(())
}

fn run_mesh(a: &MeshArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    ensure!(model.dims.scene_dim == 3, "mesh needs an sdfbox model, got {}", model.config.task_kind);
    let z = match (a.demo, &a.scene) {
        (Some(i), None) => {
            ensure!(i < model.num_demos(), "demo index must be below {}", model.num_demos());
            model.embedding(i).to_vec()
        }
        (None, Some(p)) => fit_embedding(&model, &load_scene(p)?, &FitOptions::from_config(&model.config))?.z,
        _ => bail!("give exactly one of --demo or --scene"),
    };
    let mesh = extract_mesh(&model, &z, a.res.unwrap_or(model.config.mesh_res), ([-1.0; 3], [1.0; 3]))?;
    mesh.save_obj(&a.out)?;
    info!("{} vertices, {} triangles -> {}", mesh.vertices.len(), mesh.triangles.len(), a.out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Infer(a) => run_infer(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Mesh(a) => run_mesh(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already include their io cause in the message.
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.ends_with(&cause) {
                    msg = if msg.is_empty() { cause } else { format!("{msg}: {cause}") };
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
