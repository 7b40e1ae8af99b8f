//! gen-lab: reproducible experiment pipelines for mesh-based spatial
//! function learning, covering dataset generation, training, evaluation,
//! node position optimization and figure emission.

mod config;
mod svg;

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use gen_lab_core::autodiff::{write_atomic, Checkpoint};
use gen_lab_core::datasets::{generate_dataset, load_dataset, save_dataset, GenerateConfig};
use gen_lab_core::gen_model::{diameter_steps, GenParams, GenSpec, NpParams, NpSpec};
use gen_lab_core::geometry::SpaceKind;
use gen_lab_core::parallel;
use gen_lab_core::representation::RepKind;
use gen_lab_core::train_eval::{
    evaluate_gen, evaluate_np, loss_history_csv, mse_on_scenarios, optimize_node_positions,
    train_gen, train_np, EvalReport, MeshOptConfig, Split, TrainConfig,
};

use config::{ensure_output_dir, load_config_file, parse_mesh_sizes, resolve_seed, write_resolved};

#[derive(Parser)]
#[command(
    name = "gen-lab",
    version,
    about = "Mesh-based spatial function learning experiments"
)]
struct Cli {
    /// Worker threads for parallel seeds/houses (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset directory (manifest + one JSON-lines file per house)
    Generate(GenerateArgs),
    /// Train a model; writes checkpoints, loss histories and an eval report
    Train(TrainArgs),
    /// Evaluate a checkpoint across mesh sizes
    Evaluate(EvaluateArgs),
    /// Optimize node positions on one held-out house with frozen weights
    OptimizeMesh(OptimizeMeshArgs),
    /// Render an MSE-vs-mesh-order chart from evaluation CSVs
    Plot(PlotArgs),
    /// Verify analytic gradients against central finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SpaceArg {
    Square,
    /// Square task with denser source layouts (6-10 heater rectangles)
    SquareDense,
    Sphere,
    /// Square inputs with a single global integral target
    SquareGlobal,
}

impl SpaceArg {
    fn base_config(self) -> GenerateConfig {
        match self {
            SpaceArg::Square => GenerateConfig::square_desk(),
            SpaceArg::SquareDense => GenerateConfig::square_desk_dense(),
            SpaceArg::Sphere => GenerateConfig::sphere_desk(),
            SpaceArg::SquareGlobal => GenerateConfig::global_desk(),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON file holding a full generation config (flags override it)
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    space: Option<SpaceArg>,
    #[arg(long)]
    houses: Option<usize>,
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long)]
    train_houses: Option<usize>,
    #[arg(long)]
    inputs: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    test_queries: Option<usize>,
    #[arg(long)]
    oracle_resolution: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct GenerateFileConfig {
    space: Option<SpaceArg>,
    seed: Option<u64>,
    /// Full generation config; flags still win over individual fields
    #[serde(default)]
    overrides: Option<GenerateConfig>,
}

#[derive(Serialize)]
struct ResolvedGenerate<'a> {
    command: &'a str,
    seed: u64,
    config: &'a GenerateConfig,
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let file: GenerateFileConfig = load_config_file(args.config.as_deref())?;
    let mut cfg = match (&file.overrides, args.space.or(file.space)) {
        (Some(full), _) => full.clone(),
        (None, Some(space)) => space.base_config(),
        (None, None) => bail!("--space or a config file with overrides is required"),
    };
    if let Some(h) = args.houses {
        cfg.houses = h;
    }
    if let Some(s) = args.scenarios {
        cfg.scenarios_per_house = s;
    }
    if let Some(t) = args.train_houses {
        cfg.train_houses = t;
    } else if cfg.train_houses >= cfg.houses {
        // keep the default 4:1 split when only --houses was given
        cfg.train_houses = (cfg.houses * 4) / 5;
    }
    if let Some(v) = args.inputs {
        cfg.inputs_per_scenario = v;
    }
    if let Some(v) = args.queries {
        cfg.queries_per_scenario = v;
    }
    if let Some(v) = args.test_queries {
        cfg.test_queries_per_scenario = v;
    }
    if let Some(v) = args.oracle_resolution {
        cfg.oracle_resolution = v;
    }
    if cfg.train_houses == 0 || cfg.train_houses >= cfg.houses {
        bail!(
            "split needs at least one train and one test house (got {} train of {})",
            cfg.train_houses,
            cfg.houses
        );
    }
    let seed = resolve_seed(args.seed, file.seed)?;

    ensure_output_dir(&args.out, args.force)?;
    let dataset = generate_dataset(&cfg, seed)?;
    save_dataset(&args.out, &dataset)?;
    write_resolved(
        &args.out,
        &ResolvedGenerate {
            command: "generate",
            seed,
            config: &cfg,
        },
    )?;

    let m = &dataset.manifest;
    println!(
        "dataset {}: {:?}/{:?}, {} houses x {} scenarios (train {} / test {}), {} inputs, {}/{} queries, oracle m={}, seed {}",
        args.out.display(),
        m.space,
        m.task,
        m.house_count,
        m.scenarios_per_house,
        m.train_houses.len(),
        m.test_houses.len(),
        m.inputs_per_scenario,
        m.queries_per_scenario,
        m.test_queries_per_scenario,
        m.oracle_resolution,
        m.seed,
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModelArg {
    Gen,
    Np,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RepArg {
    Soft,
    Bilinear,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Mesh orders to cycle during training: `2..5` or `2,3,4,5`
    #[arg(long)]
    mesh: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Cosine-decay floor as a fraction of the initial rate (1.0 = constant)
    #[arg(long)]
    final_lr_fraction: Option<f64>,
    #[arg(long, value_enum)]
    rep: Option<RepArg>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Comma-separated training seeds; one run per seed
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct TrainFileConfig {
    model: Option<ModelArg>,
    mesh: Option<Vec<usize>>,
    epochs: Option<usize>,
    lr: Option<f64>,
    final_lr_fraction: Option<f64>,
    rep: Option<RepArg>,
    temperature: Option<f64>,
    seeds: Option<Vec<u64>>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ResolvedTrain {
    command: &'static str,
    dataset: PathBuf,
    model: ModelArg,
    mesh_sizes: Vec<usize>,
    epochs: usize,
    learning_rate: f64,
    final_lr_fraction: f64,
    rep: RepArg,
    temperature: f64,
    seeds: Vec<u64>,
}

fn gen_spec_for(
    dataset: &gen_lab_core::datasets::Dataset,
    rep: RepArg,
    temperature: f64,
) -> GenSpec {
    let base = match dataset.manifest.space {
        SpaceKind::UnitSquare => {
            if dataset.manifest.task == gen_lab_core::datasets::TaskKind::GlobalIntegral {
                GenSpec {
                    input_dims: vec![3],
                    ..GenSpec::square_default()
                }
            } else {
                GenSpec::square_default()
            }
        }
        SpaceKind::UnitSphere => GenSpec::sphere_default(),
    };
    GenSpec {
        rep: match rep {
            RepArg::Soft => RepKind::SoftNearest,
            RepArg::Bilinear => RepKind::BilinearGrid,
        },
        temperature,
        ..base
    }
}

fn np_spec_for(dataset: &gen_lab_core::datasets::Dataset) -> NpSpec {
    match dataset.manifest.space {
        SpaceKind::UnitSquare => NpSpec::default_for(SpaceKind::UnitSquare, 2, 3),
        SpaceKind::UnitSphere => NpSpec::default_for(SpaceKind::UnitSphere, 1, 1),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let file: TrainFileConfig = load_config_file(args.config.as_deref())?;
    let dataset = load_dataset(&args.dataset)
        .with_context(|| format!("loading dataset {}", args.dataset.display()))?;
    let model = args.model.or(file.model).unwrap_or(ModelArg::Gen);
    let mesh_sizes = match &args.mesh {
        Some(text) => parse_mesh_sizes(text)?,
        None => file.mesh.clone().unwrap_or_else(|| vec![2, 3, 4, 5]),
    };
    let epochs = args.epochs.or(file.epochs).unwrap_or(match model {
        ModelArg::Gen => 50,
        ModelArg::Np => 300,
    });
    let lr = args.lr.or(file.lr).unwrap_or(3e-3);
    let final_lr_fraction = args
        .final_lr_fraction
        .or(file.final_lr_fraction)
        .unwrap_or(1.0);
    let rep = args.rep.or(file.rep).unwrap_or(RepArg::Soft);
    let temperature = args.temperature.or(file.temperature).unwrap_or(1.0);
    let seeds: Vec<u64> = match &args.seeds {
        Some(text) => text
            .split(',')
            .map(|s| s.trim().parse().with_context(|| format!("bad seed {s:?}")))
            .collect::<Result<_>>()?,
        None => match &file.seeds {
            Some(list) => list.clone(),
            None => vec![resolve_seed(args.seed, file.seed)?],
        },
    };

    ensure_output_dir(&args.out, args.force)?;
    write_resolved(
        &args.out,
        &ResolvedTrain {
            command: "train",
            dataset: args.dataset.clone(),
            model,
            mesh_sizes: mesh_sizes.clone(),
            epochs,
            learning_rate: lr,
            final_lr_fraction,
            rep,
            temperature,
            seeds: seeds.clone(),
        },
    )?;

    let out = args.out.clone();
    let results: Vec<Result<EvalReport>> = parallel::map_indexed(seeds.len(), |i| {
        let seed = seeds[i];
        let cfg = TrainConfig {
            epochs,
            learning_rate: lr,
            final_lr_fraction,
            mesh_sizes: mesh_sizes.clone(),
            scenarios_per_step: 1,
            seed,
            checkpoint_path: Some(out.join(format!("checkpoint_seed{seed}.json"))),
        };
        let mut report = EvalReport::default();
        match model {
            ModelArg::Gen => {
                let spec = gen_spec_for(&dataset, rep, temperature);
                let (params, run) = train_gen(&dataset, &spec, &cfg)?;
                write_atomic(
                    &out.join(format!("loss_seed{seed}.csv")),
                    loss_history_csv(&run.loss_history).as_bytes(),
                )?;
                report.extend(evaluate_gen(
                    &params,
                    &dataset,
                    Split::Train,
                    &mesh_sizes,
                    seed,
                )?);
                report.extend(evaluate_gen(
                    &params,
                    &dataset,
                    Split::Test,
                    &mesh_sizes,
                    seed,
                )?);
            }
            ModelArg::Np => {
                let spec = np_spec_for(&dataset);
                let (params, run) = train_np(&dataset, &spec, &cfg)?;
                write_atomic(
                    &out.join(format!("loss_seed{seed}.csv")),
                    loss_history_csv(&run.loss_history).as_bytes(),
                )?;
                report.extend(evaluate_np(&params, &dataset, Split::Train, seed)?);
                report.extend(evaluate_np(&params, &dataset, Split::Test, seed)?);
            }
        }
        Ok(report)
    });

    let mut combined = EvalReport::default();
    for r in results {
        combined.extend(r?);
    }
    combined.write(&args.out.join("eval.csv"))?;
    for row in &combined.rows {
        println!(
            "{} k={} seed={} {}: mse {:.6}",
            row.model, row.mesh_k, row.seed, row.split, row.mse
        );
    }
    println!("wrote {}", args.out.join("eval.csv").display());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Mesh orders to evaluate: `2..7` or `2,4,6`
    #[arg(long, default_value = "2..5")]
    mesh: String,
    /// Mesh orders the checkpoint was trained on; extra evaluated sizes are
    /// flagged as extrapolation rows
    #[arg(long)]
    trained_mesh: Option<String>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Seed label recorded in the report rows
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let ckpt = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let mesh_sizes = parse_mesh_sizes(&args.mesh)?;
    let report = if let Ok(params) = GenParams::from_checkpoint(&ckpt) {
        match &args.trained_mesh {
            Some(text) => {
                let trained = parse_mesh_sizes(text)?;
                gen_lab_core::train_eval::generalization_probe(
                    &params,
                    &dataset,
                    &trained,
                    &mesh_sizes,
                    args.seed,
                )?
            }
            None => evaluate_gen(&params, &dataset, args.split.into(), &mesh_sizes, args.seed)?,
        }
    } else {
        let params = NpParams::from_checkpoint(&ckpt)?;
        evaluate_np(&params, &dataset, args.split.into(), args.seed)?
    };
    report.write(&args.out)?;
    for row in &report.rows {
        println!(
            "{} k={}{} {}: mse {:.6}",
            row.model,
            row.mesh_k,
            if row.extrapolation { "*" } else { "" },
            row.split,
            row.mse
        );
    }
    Ok(())
}

#[derive(Args)]
struct OptimizeMeshArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// House id to adapt to (defaults to the first test house)
    #[arg(long)]
    house: Option<usize>,
    /// Mesh orders; k^2 nodes are placed per order
    #[arg(long, default_value = "3")]
    mesh: String,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 3e-4)]
    lr: f64,
    /// Scenarios of the house used for position optimization; the rest are
    /// held out for the before/after report
    #[arg(long, default_value_t = 4)]
    opt_scenarios: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

fn cmd_optimize_mesh(args: OptimizeMeshArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let ckpt = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let params = GenParams::from_checkpoint(&ckpt)?;
    let seed = resolve_seed(args.seed, None)?;
    let mesh_sizes = parse_mesh_sizes(&args.mesh)?;
    let house_id = args
        .house
        .or_else(|| dataset.manifest.test_houses.first().copied())
        .ok_or_else(|| anyhow!("dataset has no test house"))?;
    let house = dataset
        .houses
        .get(house_id)
        .ok_or_else(|| anyhow!("house {house_id} not in dataset"))?;
    if args.opt_scenarios >= house.scenarios.len() {
        bail!(
            "house {house_id} has {} scenarios; --opt-scenarios must leave some held out",
            house.scenarios.len()
        );
    }
    ensure_output_dir(&args.out, args.force)?;

    let opt: Vec<_> = house.scenarios[..args.opt_scenarios].iter().collect();
    let held: Vec<_> = house.scenarios[args.opt_scenarios..].iter().collect();

    let mut csv = String::from("mesh_k,seed,variant,before_mse,after_mse\n");
    for &k in &mesh_sizes {
        // two well-spread initializations per mesh size
        for variant in 0..2u64 {
            let cfg = MeshOptConfig {
                steps: args.steps,
                learning_rate: args.lr,
                ..MeshOptConfig::new(k, seed, variant)
            };
            let run = optimize_node_positions(&params, &opt, &cfg)?;
            let t = diameter_steps(k);
            let before = mse_on_scenarios(&params, &held, &run.initial_mesh, t)?;
            let after = mse_on_scenarios(&params, &held, &run.mesh, t)?;
            csv.push_str(&format!("{k},{seed},{variant},{before},{after}\n"));

            let mesh_json = serde_json::to_vec_pretty(&run.mesh.to_json())?;
            write_atomic(
                &args.out.join(format!("mesh_k{k}_v{variant}.json")),
                &mesh_json,
            )?;
            let overlay = svg::mesh_overlay(
                &run.mesh,
                &format!("house {house_id}, k={k}, init {variant}"),
            );
            write_atomic(
                &args.out.join(format!("mesh_k{k}_v{variant}.svg")),
                overlay.as_bytes(),
            )?;
            println!("k={k} init {variant}: held-out mse {before:.5} -> {after:.5}");
        }
    }
    write_atomic(&args.out.join("mesh_opt.csv"), csv.as_bytes())?;
    write_resolved(
        &args.out,
        &serde_json::json!({
            "command": "optimize-mesh",
            "dataset": args.dataset,
            "checkpoint": args.checkpoint,
            "house": house_id,
            "mesh_sizes": mesh_sizes,
            "steps": args.steps,
            "lr": args.lr,
            "opt_scenarios": args.opt_scenarios,
            "seed": seed,
        }),
    )?;
    Ok(())
}

#[derive(Args)]
struct PlotArgs {
    /// Evaluation CSVs (train/evaluate output); may repeat
    #[arg(long, required = true, num_args = 1..)]
    reports: Vec<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value = "test MSE by mesh order")]
    title: String,
    #[arg(short, long)]
    out: PathBuf,
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &args.reports {
        rows.extend(EvalReport::read(path)?.rows);
    }
    rows.retain(|r| r.split == args.split);
    if rows.is_empty() {
        bail!("no rows for split {:?} in the given reports", args.split);
    }

    let k_range: Vec<usize> = {
        let mut ks: Vec<usize> = rows.iter().map(|r| r.mesh_k).filter(|&k| k > 0).collect();
        ks.sort_unstable();
        ks.dedup();
        if ks.is_empty() {
            vec![2, 5]
        } else {
            ks
        }
    };

    let mut models: Vec<String> = rows.iter().map(|r| r.model.clone()).collect();
    models.sort();
    models.dedup();
    let mut series = Vec::new();
    for model in models {
        let model_rows: Vec<_> = rows.iter().filter(|r| r.model == model).collect();
        let mut ks: Vec<usize> = model_rows.iter().map(|r| r.mesh_k).collect();
        ks.sort_unstable();
        ks.dedup();
        let mut points = Vec::new();
        for k in ks {
            let mses: Vec<f64> = model_rows
                .iter()
                .filter(|r| r.mesh_k == k)
                .map(|r| r.mse)
                .collect();
            let mean = mses.iter().sum::<f64>() / mses.len() as f64;
            let var = if mses.len() > 1 {
                mses.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (mses.len() - 1) as f64
            } else {
                0.0
            };
            if k == 0 {
                // meshless baseline: draw as a flat band across the k range
                points.push((*k_range.first().unwrap(), mean, var.sqrt()));
                points.push((*k_range.last().unwrap(), mean, var.sqrt()));
            } else {
                points.push((k, mean, var.sqrt()));
            }
        }
        series.push(svg::Series {
            label: model,
            points,
        });
    }
    let chart = svg::mse_chart(&series, &args.title);
    write_atomic(&args.out, chart.as_bytes())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 2)]
    mesh_k: usize,
    #[arg(long, default_value_t = 8)]
    latent: usize,
    #[arg(long, default_value_t = 4)]
    message: usize,
    #[arg(long, default_value_t = 8)]
    samples: usize,
    #[arg(long, default_value_t = 8)]
    queries: usize,
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    #[arg(long, default_value_t = 1e-5)]
    threshold: f64,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    use gen_lab_core::autodiff::{finite_diff_grad, max_rel_err, Tensor, REL_ERR_FLOOR};
    use gen_lab_core::gen_model::{InputSample, QuerySample};
    use gen_lab_core::rng::DetRng;
    use gen_lab_core::train_eval::{gen_loss_and_grads, gen_scalar_loss};

    let seed = resolve_seed(args.seed, None)?;
    let spec = GenSpec {
        latent_dim: args.latent,
        message_dim: args.message,
        rep: RepKind::SoftNearest,
        ..GenSpec::square_default()
    };
    let params = GenParams::init(spec, seed.wrapping_add(1));
    let mesh = gen_lab_core::geometry::square_grid_mesh(args.mesh_k)?;
    let positions = mesh.positions_tensor();
    let t_steps = diameter_steps(args.mesh_k);
    let mut rng = DetRng::derive(seed, &[42]);
    let samples: Vec<InputSample> = (0..args.samples)
        .map(|i| InputSample {
            x: vec![rng.uniform01(), rng.uniform01()],
            channel: i % 2,
            value: if i % 2 == 0 {
                vec![rng.uniform(-5.0, 5.0), 0.0, 0.0]
            } else {
                vec![0.0, rng.uniform(-3.0, 3.0), 1.0]
            },
        })
        .collect();
    let queries: Vec<QuerySample> = (0..args.queries)
        .map(|_| QuerySample {
            x: vec![rng.uniform01(), rng.uniform01()],
            channel: 0,
            target: Some(vec![rng.uniform(-3.0, 3.0)]),
        })
        .collect();

    let (loss, analytic_params, analytic_pos) =
        gen_loss_and_grads(&params, &mesh, &positions, &samples, &queries, t_steps)?;
    let flat = params.flatten();
    let mut f_params = |theta: &[f64]| {
        let mut p = params.clone();
        p.load_flat(theta);
        gen_scalar_loss(&p, &mesh, &positions, &samples, &queries, t_steps).expect("forward")
    };
    let fd_params = finite_diff_grad(&mut f_params, &flat, args.step);
    let err_params = max_rel_err(&analytic_params, &fd_params, REL_ERR_FLOOR);

    let n = mesh.node_count();
    let mut f_pos = |pos: &[f64]| {
        let p = Tensor::matrix(n, 2, pos.to_vec());
        gen_scalar_loss(&params, &mesh, &p, &samples, &queries, t_steps).expect("forward")
    };
    let fd_pos = finite_diff_grad(&mut f_pos, positions.data(), args.step);
    let err_pos = max_rel_err(&analytic_pos, &fd_pos, REL_ERR_FLOOR);

    println!(
        "loss {loss:.6}: {} parameters rel err {err_params:.3e}, {} node coords rel err {err_pos:.3e} (threshold {:.0e})",
        flat.len(),
        positions.len(),
        args.threshold
    );
    if err_params >= args.threshold || err_pos >= args.threshold {
        bail!("gradient check failed");
    }
    println!("gradient check passed");
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(jobs) = cli.jobs {
        // may already be initialized when embedded in tests; ignore
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cli.jobs;

    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::OptimizeMesh(args) => cmd_optimize_mesh(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
