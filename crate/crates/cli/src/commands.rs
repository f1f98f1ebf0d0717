use std::fmt::Write as _;
use std::path::Path;

use ftfof::baselines::{cycloid, polynomial, random_bezier, Baseline, Gait};
use ftfof::constraints::{read_polygons_jsonl, sample_climbable, write_polygons_jsonl};
use ftfof::geometry::{CompositeTrajectory, ControlPolygon, FREE_COORD_NAMES};
use ftfof::kinematics::{solve_motion_bounds, MotionBounds, PositionBound, VelocityBound};
use ftfof::optimizer::{nsga2, rhs_select, Problem, TrajectoryProblem};
use ftfof::plot;
use ftfof::strategies::{jitter, max_detachment, StrategyContext};
use ftfof::surrogate::{
    mean_dilate, prepare, train, Dataset, ForceChannel, ForcePredictor, OraclePredictor, TrainedModels,
    DEFAULT_VALIDATION_FRACTION,
};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::manifest::RunManifest;
use crate::{Cli, CliError, Command, ForceSource, TrainFlags};

type CmdResult = Result<(), CliError>;

#[derive(Serialize)]
struct BoundsFile {
    #[serde(flatten)]
    bounds: MotionBounds,
    position_solution: PositionBound,
    velocity_solution: VelocityBound,
}

/// The trajectory chosen from the front, as written by `optimize`.
#[derive(Serialize, Deserialize)]
struct Selected {
    index: usize,
    objective_names: Vec<String>,
    objectives: Vec<f64>,
    decision: Vec<f64>,
    polygon: ControlPolygon,
}

pub fn run(cli: &Cli) -> CmdResult {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let seed = cfg.seed;
    cfg.bound_solver.seed = seed;
    cfg.train.seed = seed;
    cfg.optimize.nsga2.seed = seed;
    cfg.oracle.seed = seed;
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Bounds => bounds(cfg, out),
        Command::Sample { n, bounds } => sample(cfg, out, *n, bounds.as_deref()),
        Command::Datagen { set } => datagen(cfg, out, set),
        Command::Train { dataset, hyper } => train_cmd(cfg, out, dataset, hyper),
        Command::Eval {
            dataset,
            models,
            validation_fraction,
        } => eval(cfg, out, dataset, models, *validation_fraction),
        Command::Optimize {
            source,
            bounds,
            pop_size,
            generations,
            dry_run,
        } => {
            if let Some(p) = pop_size {
                cfg.optimize.nsga2.pop_size = *p;
            }
            if let Some(g) = generations {
                cfg.optimize.nsga2.generations = *g;
            }
            optimize(cfg, out, source, bounds.as_deref(), *dry_run)
        }
        Command::Compare {
            selected,
            source,
            bounds,
            baseline,
        } => {
            let chosen: Vec<Baseline> = Baseline::ALL
                .into_iter()
                .filter(|b| baseline.is_empty() || baseline.iter().any(|a| Baseline::from(*a) == *b))
                .collect();
            compare(cfg, out, selected, source, bounds.as_deref(), &chosen)
        }
    }
}

fn manifest(command: &str, cfg: &Config, out: &Path) -> Result<RunManifest, CliError> {
    let json = serde_json::to_vec(cfg).map_err(|e| CliError::usage(e.to_string()))?;
    Ok(RunManifest::new(command, &json, cfg.seed, out))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    std::fs::write(path, contents).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn load_bounds(m: &mut RunManifest, path: Option<&Path>, cfg: &Config) -> Result<MotionBounds, CliError> {
    let bounds = match path {
        None => cfg.bounds,
        Some(p) => {
            let bytes = m.read_input(p)?;
            serde_json::from_slice(&bytes).map_err(|e| CliError::data(format!("invalid bounds {}: {e}", p.display())))?
        }
    };
    bounds.validate()?;
    Ok(bounds)
}

fn load_models(m: &mut RunManifest, path: &Path) -> Result<TrainedModels, CliError> {
    let bytes = m.read_input(path)?;
    let models: TrainedModels = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::data(format!("invalid checkpoint {}: {e}", path.display())))?;
    for model in [&models.detachment, &models.prepressure] {
        model
            .validate()
            .map_err(|e| CliError::data(format!("invalid checkpoint {}: {e}", path.display())))?;
    }
    Ok(models)
}

fn load_dataset(m: &mut RunManifest, path: &Path, fraction: f64, seed: u64) -> Result<Dataset, CliError> {
    let bytes = m.read_input(path)?;
    let ds = Dataset::read_jsonl(&bytes[..], fraction, seed)
        .map_err(|e| CliError::data(format!("invalid dataset {}: {e}", path.display())))?;
    if ds.is_empty() {
        return Err(CliError::data(format!("dataset {} is empty", path.display())));
    }
    Ok(ds)
}

/// The two force predictors, either trained models or the noise-free oracle.
enum Predictors {
    Models(Box<TrainedModels>),
    Oracle(OraclePredictor, OraclePredictor),
}

impl Predictors {
    fn resolve(m: &mut RunManifest, source: &ForceSource, cfg: &Config) -> Result<Self, CliError> {
        if source.oracle || cfg.optimize.use_oracle {
            let params = ftfof::surrogate::OracleParams {
                noise_sigma: 0.0,
                ..cfg.oracle
            };
            params.validate()?;
            let make = |channel| OraclePredictor { params, channel };
            return Ok(Predictors::Oracle(
                make(ForceChannel::Detachment),
                make(ForceChannel::PrePressure),
            ));
        }
        match &source.models {
            Some(p) => Ok(Predictors::Models(Box::new(load_models(m, p)?))),
            None => Err(CliError::usage("either --models or --oracle is required")),
        }
    }

    fn pair(&self) -> (&dyn ForcePredictor, &dyn ForcePredictor) {
        match self {
            Predictors::Models(t) => (&t.detachment, &t.prepressure),
            Predictors::Oracle(d, p) => (d, p),
        }
    }
}

fn bounds(cfg: Config, out: &Path) -> CmdResult {
    cfg.leg.validate()?;
    let mut m = manifest("bounds", &cfg, out)?;
    m.plan(&["bounds.json"]);
    m.begin()?;
    let (b, position_solution, velocity_solution) = solve_motion_bounds(&cfg.leg, &cfg.bound_solver)?;
    let [px, pz] = b.position();
    let [vx, vz] = b.velocity();
    println!(
        "position: raw ({:.4}, {:.4}) m x safety {:.2} = ({px:.4}, {pz:.4}) m",
        b.position_raw[0], b.position_raw[1], b.position_safety
    );
    println!(
        "velocity: raw ({:.4}, {:.4}) m/s x safety {:.2} = ({vx:.4}, {vz:.4}) m/s",
        b.velocity_raw[0], b.velocity_raw[1], b.velocity_safety
    );
    let file = BoundsFile {
        bounds: b,
        position_solution,
        velocity_solution,
    };
    write_file(&m.path("bounds.json"), to_json(&file)?)?;
    m.finish()
}

fn sample(cfg: Config, out: &Path, n: Option<usize>, bounds_path: Option<&Path>) -> CmdResult {
    let n = n.unwrap_or(cfg.sample_count);
    if n == 0 {
        return Err(CliError::usage("sample count must be at least 1"));
    }
    let mut m = manifest("sample", &cfg, out)?;
    let b = load_bounds(&mut m, bounds_path, &cfg)?;
    let policy = cfg.policy(&b)?;
    m.plan(&["climbable.jsonl"]);
    m.begin()?;
    let polys = sample_climbable(&policy, n, cfg.seed)?;
    let mut buf = Vec::new();
    write_polygons_jsonl(&polys, &mut buf)?;
    write_file(&m.path("climbable.jsonl"), buf)?;
    println!("sampled {n} climbable polygons");
    m.finish()
}

fn datagen(cfg: Config, out: &Path, set: &Path) -> CmdResult {
    cfg.oracle.validate()?;
    let mut m = manifest("datagen", &cfg, out)?;
    let bytes = m.read_input(set)?;
    let polys = read_polygons_jsonl(&bytes[..])
        .map_err(|e| CliError::data(format!("invalid climbable set {}: {e}", set.display())))?;
    if polys.is_empty() {
        return Err(CliError::data(format!("climbable set {} is empty", set.display())));
    }
    m.plan(&["dataset.jsonl"]);
    m.begin()?;
    let ds = Dataset::generate(&polys, cfg.grid, &cfg.oracle, cfg.seed)?;
    let mut buf = Vec::new();
    ds.write_jsonl(&mut buf)?;
    write_file(&m.path("dataset.jsonl"), buf)?;
    println!("labelled {} trajectories", ds.len());
    m.finish()
}

fn apply_train_flags(cfg: &mut Config, f: &TrainFlags) {
    let t = &mut cfg.train;
    if let Some(v) = f.epochs {
        t.epochs = v;
    }
    if let Some(v) = f.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = f.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = f.lr_decay {
        t.lr_decay = v;
    }
    if let Some(v) = f.alpha {
        t.alpha = v;
    }
    if let Some(v) = f.gamma {
        t.gamma = v;
    }
    if let Some(v) = f.hidden_size {
        t.hidden_size = v;
    }
    if let Some(v) = f.clip_norm {
        t.clip_norm = v;
    }
    if let Some(v) = f.loss {
        t.loss = v.into();
    }
}

fn check_fraction(f: f64) -> Result<f64, CliError> {
    if f > 0.0 && f < 1.0 {
        Ok(f)
    } else {
        Err(CliError::usage("validation fraction must lie in (0, 1)"))
    }
}

fn train_cmd(mut cfg: Config, out: &Path, dataset: &Path, flags: &TrainFlags) -> CmdResult {
    apply_train_flags(&mut cfg, flags);
    cfg.train.validate()?;
    let fraction = check_fraction(flags.validation_fraction.unwrap_or(DEFAULT_VALIDATION_FRACTION))?;
    let mut m = manifest("train", &cfg, out)?;
    let ds = load_dataset(&mut m, dataset, fraction, cfg.seed)?;
    m.plan(&["models.json", "loss.csv", "loss.svg"]);
    m.begin()?;
    println!(
        "split: {} train / {} validation ({:.1}% train)",
        ds.train.len(),
        ds.validation.len(),
        100.0 * ds.train.len() as f64 / ds.len() as f64
    );
    let models = train(&ds, &cfg.train)?;
    write_file(&m.path("models.json"), serde_json::to_vec(&models).map_err(|e| CliError::data(e.to_string()))?)?;

    let (dh, ph) = (&models.detachment_history, &models.prepressure_history);
    let mut csv = String::from("epoch,detachment_train,detachment_validation,prepressure_train,prepressure_validation\n");
    for e in 0..dh.train_loss.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            e + 1,
            dh.train_loss[e],
            dh.validation_loss[e],
            ph.train_loss[e],
            ph.validation_loss[e]
        );
    }
    write_file(&m.path("loss.csv"), csv)?;
    let curve = |v: &[f64]| -> Vec<(f64, f64)> { v.iter().enumerate().map(|(i, y)| ((i + 1) as f64, *y)).collect() };
    let svg = plot::lines(
        "Training loss",
        "epoch",
        "loss",
        &[
            ("detachment train", curve(&dh.train_loss)),
            ("detachment validation", curve(&dh.validation_loss)),
            ("pre-pressure train", curve(&ph.train_loss)),
            ("pre-pressure validation", curve(&ph.validation_loss)),
        ],
    );
    write_file(&m.path("loss.svg"), svg)?;
    if let (Some(d), Some(p)) = (dh.validation_loss.last(), ph.validation_loss.last()) {
        println!("final validation DILATE: detachment {d:.4}, pre-pressure {p:.4}");
    }
    m.finish()
}

fn eval(cfg: Config, out: &Path, dataset: &Path, models_path: &Path, fraction: Option<f64>) -> CmdResult {
    let fraction = check_fraction(fraction.unwrap_or(DEFAULT_VALIDATION_FRACTION))?;
    let mut m = manifest("eval", &cfg, out)?;
    let models = load_models(&mut m, models_path)?;
    let ds = load_dataset(&mut m, dataset, fraction, cfg.seed)?;
    m.plan(&["eval.csv"]);
    m.begin()?;
    let mut csv = String::from("channel,split,items,dilate\n");
    for (name, model, channel) in [
        ("detachment", &models.detachment, ForceChannel::Detachment),
        ("pre-pressure", &models.prepressure, ForceChannel::PrePressure),
    ] {
        for (split, idx) in [("train", &ds.train), ("validation", &ds.validation)] {
            let (xs, ys) = prepare(model, &ds, idx, channel);
            let loss = mean_dilate(model, &xs, &ys, models.config.alpha, models.config.gamma)
                .map_err(|e| CliError::data(e.to_string()))?;
            let _ = writeln!(csv, "{name},{split},{},{loss}", idx.len());
            println!("{name} {split}: {loss:.4} over {} items", idx.len());
        }
    }
    write_file(&m.path("eval.csv"), csv)?;
    m.finish()
}

fn plot_columns(cfg: &Config) -> Result<(usize, usize), CliError> {
    let find = |s| {
        cfg.optimize
            .objectives
            .iter()
            .position(|o| *o == s)
            .ok_or_else(|| CliError::usage(format!("plot axis {s} is not an objective")))
    };
    Ok((find(cfg.optimize.plot_axes[0])?, find(cfg.optimize.plot_axes[1])?))
}

fn forces_csv(traj: &CompositeTrajectory, det: &[f64], pre: &[f64]) -> String {
    let mut s = String::from("t,detachment_force,pre_pressure\n");
    for ((t, d), p) in traj.times.iter().zip(det).zip(pre) {
        let _ = writeln!(s, "{t},{d},{p}");
    }
    s
}

fn optimize(cfg: Config, out: &Path, source: &ForceSource, bounds_path: Option<&Path>, dry_run: bool) -> CmdResult {
    let rhs = cfg.optimize.rhs()?;
    let (xcol, ycol) = plot_columns(&cfg)?;
    cfg.optimize.nsga2.validate()?;
    let mut m = manifest("optimize", &cfg, out)?;
    let b = load_bounds(&mut m, bounds_path, &cfg)?;
    let policy = cfg.policy(&b)?;
    let predictors = Predictors::resolve(&mut m, source, &cfg)?;
    let (det, pre) = predictors.pair();
    let problem = TrajectoryProblem::new(
        &policy,
        cfg.optimize.objectives.clone(),
        det,
        pre,
        cfg.optimize.strategy,
        cfg.grid,
    )?;
    if dry_run {
        m.begin()?;
        println!(
            "configuration valid: {} objectives, population {}, {} generations",
            cfg.optimize.objectives.len(),
            cfg.optimize.nsga2.pop_size,
            cfg.optimize.nsga2.generations
        );
        return m.finish();
    }
    m.plan(&[
        "front.csv",
        "front.svg",
        "front.json",
        "history.csv",
        "selected.json",
        "selected_trajectory.csv",
        "selected_forces.csv",
    ]);
    m.begin()?;
    let result = nsga2(&problem, &cfg.optimize.nsga2)?;
    let front = result.front;
    if front.is_empty() {
        return Err(ftfof::Error::Infeasible("no feasible trajectory in the final population".into()).into());
    }
    let index = rhs_select(&front.objective_matrix(), &rhs)?;
    let row = &front.rows[index];
    let polygon = match &row.polygon {
        Some(p) => p.clone(),
        None => problem
            .polygon(&row.decision)
            .ok_or_else(|| CliError::data("selected decision vector does not form a polygon"))?,
    };

    let mut buf = Vec::new();
    front.write_csv(&mut buf, &FREE_COORD_NAMES)?;
    write_file(&m.path("front.csv"), buf)?;
    write_file(&m.path("front.svg"), front.to_svg(xcol, ycol, Some(index))?)?;
    write_file(&m.path("front.json"), to_json(&front)?)?;

    let mut hist = String::from("generation,feasible");
    for n in &front.objective_names {
        let _ = write!(hist, ",best_{n}");
    }
    hist.push('\n');
    for g in &result.history {
        let _ = write!(hist, "{},{}", g.generation, g.feasible);
        for v in &g.best {
            let _ = write!(hist, ",{v}");
        }
        hist.push('\n');
    }
    write_file(&m.path("history.csv"), hist)?;

    let traj = polygon.sample(cfg.grid)?;
    let selected = Selected {
        index,
        objective_names: front.objective_names.clone(),
        objectives: row.objectives.clone(),
        decision: row.decision.clone(),
        polygon,
    };
    write_file(&m.path("selected.json"), to_json(&selected)?)?;
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).map_err(|e| CliError::data(e.to_string()))?;
    write_file(&m.path("selected_trajectory.csv"), buf)?;
    let fd = det.predict_series(&traj)?;
    let fp = pre.predict_series(&traj)?;
    write_file(&m.path("selected_forces.csv"), forces_csv(&traj, &fd, &fp))?;

    println!("front: {} trajectories; selected row {index}", front.len());
    for (n, v) in selected.objective_names.iter().zip(&selected.objectives) {
        println!("  {n} = {v:.6}");
    }
    m.finish()
}

fn compare(
    cfg: Config,
    out: &Path,
    selected_path: &Path,
    source: &ForceSource,
    bounds_path: Option<&Path>,
    baselines: &[Baseline],
) -> CmdResult {
    cfg.optimize.strategy.validate()?;
    let mut m = manifest("compare", &cfg, out)?;
    let bytes = m.read_input(selected_path)?;
    let selected: Selected = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::data(format!("invalid selection {}: {e}", selected_path.display())))?;
    let predictors = Predictors::resolve(&mut m, source, &cfg)?;
    let b = load_bounds(&mut m, bounds_path, &cfg)?;
    let policy = if baselines.contains(&Baseline::RandomBezier) {
        Some(cfg.policy(&b)?)
    } else {
        None
    };
    m.plan(&["comparison.csv", "comparison.svg"]);
    m.begin()?;

    let poly = &selected.polygon;
    let optimal = poly.sample(cfg.grid)?;
    let start = poly.point(0);
    let gait = Gait {
        start,
        stride: poly.point(15).x - start.x,
        height: optimal.position.iter().map(|p| p.z - start.z).fold(0.0, f64::max),
        durations: poly.durations(),
    };
    let mut columns: Vec<(&str, CompositeTrajectory)> = Vec::new();
    for bl in baselines {
        let traj = match bl {
            Baseline::Polynomial => polynomial(&gait, cfg.grid)?,
            Baseline::Cycloidal => cycloid(&gait, cfg.grid)?,
            Baseline::RandomBezier => random_bezier(policy.as_ref().expect("policy built"), cfg.grid, cfg.seed)?,
        };
        columns.push((bl.label(), traj));
    }
    columns.push(("Optimal", optimal));

    let (det, pre) = predictors.pair();
    let mut rows: Vec<(&str, Vec<f64>)> = vec![
        ("max detachment force (N)", vec![]),
        ("max pre-pressure (N)", vec![]),
        ("f_s7 jitter", vec![]),
    ];
    for (_, traj) in &columns {
        let ctx = StrategyContext::new(traj, det, pre, cfg.optimize.strategy)?;
        rows[0].1.push(max_detachment(&ctx)?);
        rows[1].1.push(ctx.prepressure.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        rows[2].1.push(jitter(&ctx.detachment, cfg.optimize.strategy.jitter_threshold)?);
    }
    let names: Vec<&str> = columns.iter().map(|(n, _)| *n).collect();
    let mut csv = format!("metric,{}\n", names.join(","));
    for (metric, vals) in &rows {
        let cells: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(csv, "{metric},{}", cells.join(","));
        println!("{metric}: {}", cells.join(" | "));
    }
    write_file(&m.path("comparison.csv"), csv)?;
    write_file(&m.path("comparison.svg"), plot::bars("Trajectory comparison", &names, &rows))?;
    m.finish()
}
