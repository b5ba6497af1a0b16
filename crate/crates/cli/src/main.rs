//! Command-line workflow: train a teacher, collect frames, distill students,
//! evaluate, ablate, and preview the visual domains.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deskrace::config::{ExperimentConfig, Manifest};
use deskrace::distill::{student_log_csv, train_student, StudentConfig};
use deskrace::error::ResultExt;
use deskrace::eval::{evaluate, report_csv, reports_table, run_ablation, AblationSetup, AblationTable, EvalReport};
use deskrace::nn::checkpoint::{self, CheckpointMeta};
use deskrace::nn::PolicyNet;
use deskrace::parallel::{self, Exec};
use deskrace::ppo::{checkpoint_name, collect_observations, train_teacher, TeacherOutput};
use deskrace::randomize::{self, PatchSource, RandConfig, RandFn};
use deskrace::render::{Frame, ObservationStore, VisualDomain};
use deskrace::rng::stream;
use deskrace::sim::CarState;
use deskrace::{Error, Result};

#[derive(Parser)]
#[command(name = "deskrace", version, about = "Teacher/student training for a miniature racing simulator")]
struct Cli {
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file, or the name of a built-in preset (desk, full).
    #[arg(long, short, default_value = "configs/desk.json")]
    config: String,

    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the PPO teacher on the training domain.
    TrainTeacher {
        #[command(flatten)]
        common: Common,
        /// Override the number of iterations.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Drive teacher checkpoints and keep a random subset of the frames.
    Collect {
        #[command(flatten)]
        common: Common,
        /// Teacher iterations to drive with; defaults to the ablation checkpoints.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<usize>,
    },
    /// Train one student from a teacher checkpoint.
    Distill {
        #[command(flatten)]
        common: Common,
        /// Teacher iteration; defaults to the last one.
        #[arg(long)]
        teacher: Option<usize>,
        /// `all`, `none`, or `without:<function>`.
        #[arg(long, default_value = "all")]
        rand: String,
        /// Student name; defaults to one derived from the randomization.
        #[arg(long)]
        name: Option<String>,
    },
    /// Evaluate a checkpoint with greedy actions.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum, default_value = "both")]
        domain: DomainChoice,
        /// Identifier used in the report; defaults to the file stem.
        #[arg(long)]
        id: Option<String>,
    },
    /// Baseline, AllRand, and leave-one-out students for each checkpoint.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Write PNG frames of both domains and of each randomization function.
    RenderPreview {
        #[command(flatten)]
        common: Common,
    },
    /// Gather evaluation reports into one table.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainChoice {
    Train,
    Test,
    Both,
}

/// Configuration problems exit with 2, everything else with 1.
fn is_config_error(err: &Error) -> bool {
    match err {
        Error::Config(_) => true,
        Error::Context { source, .. } => is_config_error(source),
        _ => false,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.sequential {
        parallel::set_mode(Exec::Sequential);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if is_config_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let path = Path::new(&common.config);
    let mut cfg = match ExperimentConfig::preset(&common.config) {
        Some(preset) if !path.exists() => preset,
        _ => ExperimentConfig::load(path)?,
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn command_line() -> Vec<String> {
    std::env::args().collect()
}

fn write_manifest(cfg: &ExperimentConfig, dir: &Path, outputs: &[PathBuf]) -> Result<()> {
    let outputs = outputs
        .iter()
        .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
        .collect();
    Manifest::new(cfg, command_line(), outputs).write(dir)?;
    Ok(())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn teacher_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("teacher")
}

fn store_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("observations").join("observations.robs")
}

fn load_teacher(cfg: &ExperimentConfig, iteration: usize) -> Result<PolicyNet<f32>> {
    let path = teacher_dir(cfg).join(checkpoint_name(iteration));
    let (net, _) = checkpoint::load(&path).with_context(|| format!("teacher checkpoint {iteration}"))?;
    Ok(net)
}

fn default_checkpoints(cfg: &ExperimentConfig, given: &[usize]) -> Vec<usize> {
    if given.is_empty() {
        cfg.ablation_checkpoints.clone()
    } else {
        given.to_vec()
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::TrainTeacher { common, iterations } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = iterations {
                cfg.teacher.iterations = n;
                cfg.ablation_checkpoints.retain(|&c| c <= n);
            }
            cfg.validate()?;
            train_teacher_cmd(&cfg)
        }
        Command::Collect { common, checkpoints } => {
            let cfg = load_config(&common)?;
            collect_cmd(&cfg, &default_checkpoints(&cfg, &checkpoints))
        }
        Command::Distill { common, teacher, rand, name } => {
            let cfg = load_config(&common)?;
            distill_cmd(&cfg, teacher.unwrap_or(cfg.teacher.iterations), &rand, name)
        }
        Command::Eval { common, model, trials, domain, id } => {
            let mut cfg = load_config(&common)?;
            if let Some(t) = trials {
                cfg.eval.trials = t;
            }
            cfg.validate()?;
            eval_cmd(&cfg, &model, domain, id)
        }
        Command::Ablate { common, checkpoints, trials } => {
            let mut cfg = load_config(&common)?;
            if let Some(t) = trials {
                cfg.eval.trials = t;
            }
            cfg.validate()?;
            ablate_cmd(&cfg, &default_checkpoints(&cfg, &checkpoints))
        }
        Command::RenderPreview { common } => preview_cmd(&load_config(&common)?),
        Command::Report { common } => report_cmd(&load_config(&common)?),
    }
}

fn train_teacher_cmd(cfg: &ExperimentConfig) -> Result<()> {
    let env = cfg.environment()?;
    let dir = teacher_dir(cfg);
    let output = TeacherOutput {
        dir: Some(dir.clone()),
        snapshots: Vec::new(),
    };
    let run = train_teacher(&env, &cfg.train_domain, &cfg.net, &cfg.teacher, cfg.seeds.teacher, &output)?;
    let mut outputs = run.checkpoints.clone();
    outputs.push(dir.join("training_log.csv"));
    write_manifest(cfg, &dir, &outputs)?;
    if let Some(last) = run.log.last() {
        log::info!(
            "trained {} iterations; last completion {:.0}%",
            last.iteration,
            100.0 * last.completion_rate
        );
    }
    Ok(())
}

fn collect_cmd(cfg: &ExperimentConfig, checkpoints: &[usize]) -> Result<()> {
    let env = cfg.environment()?;
    let teachers = checkpoints.iter().map(|&c| load_teacher(cfg, c)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&PolicyNet<f32>> = teachers.iter().collect();
    let store = collect_observations(
        &refs,
        &env,
        &cfg.train_domain,
        cfg.collect.target_count,
        cfg.collect.sample_count,
        cfg.seeds.collect,
    )?;
    let path = store_path(cfg);
    store.save(&path)?;
    log::info!("kept {} frames in {}", store.len(), path.display());
    write_manifest(cfg, path.parent().expect("store path has a parent"), &[path.clone(), path.with_extension("json")])
}

fn parse_rand(spec: &str) -> Result<RandConfig> {
    match spec {
        "all" => Ok(RandConfig::all()),
        "none" => Ok(RandConfig::none()),
        other => {
            let name = other
                .strip_prefix("without:")
                .ok_or_else(|| Error::Config(format!("unknown randomization {other:?}; use all, none or without:<function>")))?;
            let f = RandFn::ALL
                .into_iter()
                .find(|f| f.name() == name)
                .ok_or_else(|| Error::Config(format!("unknown randomization function {name:?}")))?;
            Ok(RandConfig::all().without(f))
        }
    }
}

fn distill_cmd(cfg: &ExperimentConfig, iteration: usize, rand: &str, name: Option<String>) -> Result<()> {
    let randomization = RandConfig {
        seed: cfg.student.randomization.seed,
        ..parse_rand(rand)?
    };
    let name = name.unwrap_or_else(|| format!("{}_{}", iteration, rand.replace(':', "_")));
    let teacher = load_teacher(cfg, iteration)?;
    let store = ObservationStore::load(&store_path(cfg)).context("run `collect` first")?;
    let student_cfg = StudentConfig {
        randomization,
        ..cfg.student.clone()
    };
    let run = train_student(&teacher, &store, &student_cfg, cfg.seeds.student)?;
    let dir = cfg.output_dir.join("students").join(&name);
    fs::create_dir_all(&dir)?;
    let model = dir.join("student.rdnn");
    let meta = CheckpointMeta {
        architecture: cfg.net.clone(),
        seed: cfg.seeds.student,
        iteration: Some(student_cfg.iterations),
        note: Some(format!("student of teacher {iteration}, randomization {rand}")),
    };
    checkpoint::save(&run.student, &model, &meta)?;
    let log_path = write(&dir.join("student_log.csv"), student_log_csv(&run.log))?;
    write_manifest(cfg, &dir, &[model.clone(), checkpoint::sidecar_path(&model), log_path])
}

fn domains(cfg: &ExperimentConfig, choice: DomainChoice) -> Vec<&VisualDomain> {
    match choice {
        DomainChoice::Train => vec![&cfg.train_domain],
        DomainChoice::Test => vec![&cfg.test_domain],
        DomainChoice::Both => vec![&cfg.train_domain, &cfg.test_domain],
    }
}

fn eval_cmd(cfg: &ExperimentConfig, model: &Path, choice: DomainChoice, id: Option<String>) -> Result<()> {
    let env = cfg.environment()?;
    let (net, _) = checkpoint::load(model)?;
    let id = id.unwrap_or_else(|| {
        model
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into())
    });
    let dir = cfg.output_dir.join("eval").join(&id);
    fs::create_dir_all(&dir)?;
    let mut outputs = Vec::new();
    let mut reports = Vec::new();
    for domain in domains(cfg, choice) {
        let report = evaluate(&net, &env, domain, &cfg.eval, &id)?;
        outputs.push(write(&dir.join(format!("report_{}.json", domain.id)), serde_json::to_vec_pretty(&report)?)?);
        reports.push(report);
    }
    print!("{}", reports_table(&reports));
    write_manifest(cfg, &dir, &outputs)
}

fn ablate_cmd(cfg: &ExperimentConfig, checkpoints: &[usize]) -> Result<()> {
    let env = cfg.environment()?;
    let teachers = checkpoints
        .iter()
        .map(|&c| Ok((c.to_string(), load_teacher(cfg, c)?)))
        .collect::<Result<Vec<_>>>()?;
    let store = ObservationStore::load(&store_path(cfg)).context("run `collect` first")?;
    let base = RandConfig {
        seed: cfg.student.randomization.seed,
        ..RandConfig::all()
    };
    let setup = AblationSetup {
        env: &env,
        train_domain: &cfg.train_domain,
        test_domain: &cfg.test_domain,
        store: &store,
        base: &base,
        student: &cfg.student,
        eval: cfg.eval,
        seed: cfg.seeds.student,
    };
    let table = run_ablation(&teachers, &setup)?;
    let dir = cfg.output_dir.join("ablation");
    fs::create_dir_all(&dir)?;
    let outputs = vec![
        write(&dir.join("ablation.csv"), table.to_csv())?,
        write(&dir.join("ablation.txt"), table.to_table())?,
        write(&dir.join("ablation.json"), serde_json::to_vec_pretty(&table)?)?,
    ];
    print!("{}", table.to_table());
    write_manifest(cfg, &dir, &outputs)
}

fn save_png(frame: &Frame, path: &Path) -> Result<PathBuf> {
    let img = image::RgbImage::from_raw(frame.width() as u32, frame.height() as u32, frame.data().to_vec())
        .ok_or_else(|| Error::Dimension(format!("frame buffer does not match {}x{}", frame.width(), frame.height())))?;
    img.save(path)
        .map_err(|e| Error::Io(std::io::Error::other(format!("writing {}: {e}", path.display()))))?;
    Ok(path.to_path_buf())
}

fn preview_cmd(cfg: &ExperimentConfig) -> Result<()> {
    let env = cfg.environment()?;
    let dir = cfg.output_dir.join("preview");
    fs::create_dir_all(&dir)?;
    let at = |s: f64, domain: &VisualDomain| {
        let ([x, y], heading) = env.track.point_at(s);
        let state = CarState {
            x,
            y,
            heading,
            progress: s,
            ..CarState::at_start(&env.track)
        };
        env.renderer.render(&env.track, &state, domain).frame
    };
    let start = CarState::at_start(&env.track).progress;
    let train = at(start, &cfg.train_domain);
    let test = at(start, &cfg.test_domain);
    let mut outputs = vec![save_png(&train, &dir.join("train.png"))?, save_png(&test, &dir.join("test.png"))?];

    let len = env.track.length();
    let pool: Vec<Frame> = (1..8).map(|i| at((start + len * i as f64 / 8.0) % len, &cfg.train_domain)).collect();
    let patches = PatchSource::new(&pool)?;
    let rand = &cfg.student.randomization;
    for (i, f) in RandFn::ALL.into_iter().enumerate() {
        let mut img = train.clone();
        let mut rng = stream(rand.seed, &[i as u64]);
        randomize::apply_single(&mut img, f, rand, Some(&patches), &mut rng)?;
        outputs.push(save_png(&img, &dir.join(format!("{}.png", f.name())))?);
    }
    log::info!("wrote {} previews to {}", outputs.len(), dir.display());
    write_manifest(cfg, &dir, &outputs)
}

fn report_cmd(cfg: &ExperimentConfig) -> Result<()> {
    let eval_dir = cfg.output_dir.join("eval");
    let mut paths = Vec::new();
    if eval_dir.is_dir() {
        for entry in fs::read_dir(&eval_dir)? {
            let sub = entry?.path();
            if !sub.is_dir() {
                continue;
            }
            for file in fs::read_dir(&sub)? {
                let p = file?.path();
                let is_report = p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("report_") && n.ends_with(".json"));
                if is_report {
                    paths.push(p);
                }
            }
        }
    }
    paths.sort();
    let reports = paths
        .iter()
        .map(|p| {
            let bytes = fs::read(p)?;
            serde_json::from_slice::<EvalReport>(&bytes).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = cfg.output_dir.join("report");
    fs::create_dir_all(&dir)?;
    let mut text = reports_table(&reports);
    let ablation = cfg.output_dir.join("ablation").join("ablation.json");
    if ablation.exists() {
        let table: AblationTable = serde_json::from_slice(&fs::read(&ablation)?)?;
        text.push('\n');
        text.push_str(&table.to_table());
    }
    let outputs = vec![write(&dir.join("summary.txt"), &text)?, write(&dir.join("summary.csv"), report_csv(&reports))?];
    print!("{text}");
    write_manifest(cfg, &dir, &outputs)
}
