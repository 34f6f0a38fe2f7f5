//! The `drail` command line.
//!
//! Results go to stdout as JSON (or to `--out`), progress to stderr. Exit
//! status is 0 on success, 2 for usage and configuration errors and 1 for
//! everything else.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drail_core::arg::{ArgReport, Comparison, FeatureExtractor, RndConfig};
use drail_core::bench::{self, BcHyper, BenchConfig, Env, TinyPolicy};
use drail_core::dataset::Dataset;
use drail_core::fractal::{self, Family, FractalSpec};
use drail_core::saliency::{attention_in_mask, heatmap, occlusion_saliency, SaliencyMap};
use drail_core::stats::paired_t_test;
use drail_core::Image;
use serde::Serialize;
use serde_json::json;

use crate::config::{self, PlanFile};
use crate::dataio::{self, BenchInfo};
use crate::error::{Error, Result};
use crate::manifest::{self, Run};
use crate::report::{self, ArgJson, PolicyEvalJson, ResultFile};
use crate::{checkpoint, exec};

#[derive(Debug, Parser)]
#[command(name = "drail", version, about = "Dual-region augmentation for imitation learning datasets")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Manifest path. Defaults to `run.json` in a directory output or
    /// `<file>.run.json` next to a file output; stdout-only runs write none.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render scripted benchmark episodes into a dataset directory.
    GenBench(GenBench),
    /// Write augmented copies of a dataset.
    Augment(Augment),
    /// Behavior-clone a tiny policy and save its checkpoint.
    TrainBc(TrainBc),
    /// Action error and closed-loop endpoint error of a policy.
    EvalPolicy(EvalPolicy),
    /// Absolute RND gap between demonstration and test observations.
    EvalArg(EvalArg),
    /// Saliency heatmaps and attention-in-mask scores.
    Saliency(Saliency),
    /// Write the fractal texture corpus as PNGs.
    ExportFractals(ExportFractals),
    /// Join result files into a method table.
    Report(ReportCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EnvArg {
    Demo,
    Test,
}

impl From<EnvArg> for Env {
    fn from(e: EnvArg) -> Self {
        match e {
            EnvArg::Demo => Env::Demo,
            EnvArg::Test => Env::Test,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenBench {
    #[arg(long, value_enum, default_value = "demo")]
    #[serde(skip)]
    pub env: EnvArg,
    /// Episode count (40 demonstration / 20 test by convention).
    #[arg(long, default_value_t = 40)]
    pub episodes: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Held-out hue rotation of the test target, in turns.
    #[arg(long)]
    pub test_hue_delta: Option<f64>,
    /// Clutter blobs in the test background.
    #[arg(long)]
    pub clutter: Option<usize>,
    /// Distractor count range in the test env, as MIN,MAX.
    #[arg(long, value_parser = parse_range)]
    pub distractors: Option<(usize, usize)>,
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected MIN,MAX")?;
    let a: usize = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a > b {
        return Err("MIN must not exceed MAX".into());
    }
    Ok((a, b))
}

#[derive(Debug, Args, Serialize)]
pub struct Augment {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Augmentation plan (TOML).
    #[arg(long, conflicts_with = "preset")]
    pub plan: Option<PathBuf>,
    /// Built-in plan: drail, no-irr, no-rel or no-dual.
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides the plan's master seed; required with --preset.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 2)]
    pub copies: usize,
    /// Also keep the source episodes in the output.
    #[arg(long)]
    pub keep_source: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainBc {
    /// Training dataset; repeat to concatenate several.
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Encoder input resolution, as HxW.
    #[arg(long, default_value = "32x32", value_parser = parse_hw)]
    pub downsample: (usize, usize),
}

fn parse_hw(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once('x').ok_or("expected HxW")?;
    let h: usize = h.parse().map_err(|e| format!("{e}"))?;
    let w: usize = w.parse().map_err(|e| format!("{e}"))?;
    if h == 0 || w == 0 {
        return Err("sizes must be >= 1".into());
    }
    Ok((h, w))
}

#[derive(Debug, Args, Serialize)]
pub struct EvalPolicy {
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Method name in reports; defaults to the checkpoint file stem.
    #[arg(long)]
    pub label: Option<String>,
    /// Endpoint distance counted as success, in pixels.
    #[arg(long, default_value_t = 2.0)]
    pub success_threshold_px: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorArg {
    FlattenDownsample,
    RandomConv,
    TinyPolicyEncoder,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArg {
    #[arg(long)]
    pub demo_dir: PathBuf,
    #[arg(long)]
    pub test_dir: PathBuf,
    #[arg(long, value_enum, default_value = "tiny-policy-encoder")]
    pub extractor: ExtractorArg,
    /// Policy whose encoder provides the features.
    #[arg(long)]
    pub policy_checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = drail_core::arg::DEFAULT_RESAMPLES)]
    pub resamples: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub label: Option<String>,
    /// Earlier eval-arg output to compare against with a paired t-test.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub rnd_epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub rnd_lr: f64,
    /// `sgd` or `adam`.
    #[arg(long, default_value = "sgd")]
    pub rnd_optimizer: String,
    /// Standardize features with demo mean and std (clipped to ±5) before RND.
    #[arg(long)]
    pub standardize_features: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencyMethod {
    Gradient,
    Occlusion,
}

#[derive(Debug, Args, Serialize)]
pub struct Saliency {
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for heatmaps and attention.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Frames to analyse, spread evenly over the dataset.
    #[arg(long, default_value_t = 50)]
    pub frames: usize,
    #[arg(long, value_enum, default_value = "gradient")]
    pub method: SaliencyMethod,
    #[arg(long, default_value_t = 8)]
    pub patch: usize,
    #[arg(long, default_value_t = 4)]
    pub stride: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportFractals {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = fractal::DEFAULT_CORPUS_SIZE)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Restrict to one family: ifs_flame, julia or fbm.
    #[arg(long)]
    pub family: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportCmd {
    /// eval-arg and eval-policy outputs. The first method with ARG values
    /// is the reference for significance.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Only use policy evaluations on this dataset (the `dataset` field).
    #[arg(long)]
    pub eval_dataset: Option<String>,
    /// Also write the plain-text table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn main(args: impl IntoIterator<Item = OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let workers = cli.workers;
    exec::with_workers(workers, || match &cli.command {
        Command::GenBench(a) => gen_bench(a, cli),
        Command::Augment(a) => augment(a, cli),
        Command::TrainBc(a) => train_bc(a, cli),
        Command::EvalPolicy(a) => eval_policy(a, cli),
        Command::EvalArg(a) => eval_arg(a, cli),
        Command::Saliency(a) => saliency(a, cli),
        Command::ExportFractals(a) => export_fractals(a, cli),
        Command::Report(a) => report_cmd(a, cli),
    })?
}

fn config_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn finish(cli: &Cli, run: Run, out: Option<&Path>, is_dir: bool) -> Result<()> {
    let path = match (&cli.manifest, out) {
        (Some(p), _) => p.clone(),
        (None, Some(o)) => manifest::path_for(o, is_dir),
        (None, None) => return Ok(()),
    };
    manifest::write(&run.finish(), &path)
}

/// JSON result to `out` when given, stdout otherwise.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            dataio::write_json(p, value)
        }
        None => {
            let text = serde_json::to_string_pretty(value).expect("result serializes");
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
    }
}

fn bench_config(a: &GenBench) -> BenchConfig {
    let mut c = BenchConfig::default();
    if let Some(d) = a.test_hue_delta {
        c.test_hue_delta = d;
    }
    if let Some(n) = a.clutter {
        c.clutter = n;
    }
    if let Some(r) = a.distractors {
        c.distractors = r;
    }
    c
}

fn gen_bench(a: &GenBench, cli: &Cli) -> Result<()> {
    let env: Env = a.env.into();
    let cfg = bench_config(a);
    let mut conf = config_json(a);
    conf["env"] = json!(env.name());
    conf["bench"] = config_json(&dataio::BenchConfigFile::from(cfg));
    let run = Run::start("gen-bench", conf, cli.workers).seed("seed", a.seed);
    let data = exec::generate_episodes(a.episodes, env, a.seed, &cfg)?;
    dataio::save_dataset(&data, &a.out, Some(BenchInfo::new(cfg, env, a.seed)))?;
    eprintln!("wrote {} {} episodes to {}", data.episodes.len(), env.name(), a.out.display());
    finish(cli, run, Some(&a.out), true)?;
    emit(
        &json!({"out": a.out, "env": env.name(), "seed": a.seed, "episodes": data.episodes.len(), "frames": data.frame_count()}),
        None,
    )
}

fn load_plan(a: &Augment) -> Result<PlanFile> {
    let mut plan = match (&a.plan, &a.preset) {
        (Some(p), None) => PlanFile::load(p)?,
        (None, Some(name)) => {
            let seed = a.seed.ok_or_else(|| Error::Config("--preset needs --seed".into()))?;
            config::preset(name, seed)?
        }
        _ => return Err(Error::Config("give exactly one of --plan or --preset".into())),
    };
    if let Some(s) = a.seed {
        plan.master_seed = s;
    }
    Ok(plan)
}

fn augment(a: &Augment, cli: &Cli) -> Result<()> {
    let plan_file = load_plan(a)?;
    let mut conf = config_json(a);
    conf["plan"] = config_json(&plan_file);
    let run = Run::start("augment", conf, cli.workers).seed("master_seed", plan_file.master_seed);
    let source = dataio::load_dataset(&a.input)?;
    if source.episodes.is_empty() {
        return Err(Error::Config(format!("{}: no episodes to augment", a.input.display())));
    }
    let plan = plan_file.build(source.meta.height.min(source.meta.width))?;
    let out = exec::augment_dataset(&source, &plan, a.copies)?;
    for s in &out.skipped {
        eprintln!("skipped episode {}: {}", s.id, s.reason);
    }
    let mut data = out.dataset;
    if a.keep_source && a.copies > 0 {
        let mut all = source.episodes.clone();
        all.append(&mut data.episodes);
        data.episodes = all;
    }
    dataio::save_dataset(&data, &a.out, None)?;
    eprintln!("wrote {} episodes to {}", data.episodes.len(), a.out.display());
    finish(cli, run, Some(&a.out), true)?;
    let skipped: Vec<_> = out.skipped.iter().map(|s| json!({"id": s.id, "reason": s.reason})).collect();
    emit(&json!({"out": a.out, "episodes": data.episodes.len(), "frames": data.frame_count(), "skipped": skipped}), None)
}

fn load_training_data(paths: &[PathBuf]) -> Result<Dataset> {
    let mut all: Option<Dataset> = None;
    for p in paths {
        let d = dataio::load_dataset(p)?;
        all = Some(match all {
            None => d,
            Some(mut acc) => {
                if acc.meta != d.meta {
                    return Err(Error::Config(format!("{}: dimensions differ from the first dataset", p.display())));
                }
                acc.episodes.extend(d.episodes);
                acc
            }
        });
    }
    all.ok_or_else(|| Error::Config("no training data".into()))
}

fn train_bc(a: &TrainBc, cli: &Cli) -> Result<()> {
    let run = Run::start("train-bc", config_json(a), cli.workers).seed("seed", a.seed);
    let data = load_training_data(&a.data)?;
    if data.frame_count() == 0 {
        return Err(Error::Config("training data has no frames".into()));
    }
    let hyper = BcHyper {
        lr: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: a.seed,
        downsample: a.downsample,
        ..BcHyper::default()
    };
    eprintln!("training on {} frames for {} epochs", data.frame_count(), a.epochs);
    let mut out = exec::train_bc(&data, &hyper)?;
    out.policy.round_to_f32();
    checkpoint::save(&out.policy, &a.out)?;
    eprintln!("loss {:.6} -> {:.6}, saved {}", out.initial_loss, out.final_loss, a.out.display());
    finish(cli, run, Some(&a.out), false)?;
    emit(
        &json!({
            "checkpoint": a.out,
            "frames": data.frame_count(),
            "initial_loss": out.initial_loss,
            "epoch_losses": out.epoch_losses,
            "final_loss": out.final_loss,
        }),
        None,
    )
}

fn default_label(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "policy".into())
}

fn dataset_name(root: &Path) -> String {
    match dataio::read_meta(root) {
        Ok(Some(m)) => m.bench.map(|b| b.env).unwrap_or_else(|| root.display().to_string()),
        _ => root.display().to_string(),
    }
}

fn check_dims(policy: &TinyPolicy, data: &Dataset, path: &Path) -> Result<()> {
    let d = policy.dims();
    let m = data.meta;
    if (d.obs_height, d.obs_width, d.obs_channels, d.state_dim, d.action_dim)
        != (m.height, m.width, m.channels, m.state_dim, m.action_dim)
    {
        return Err(Error::Config(format!(
            "{}: policy expects {}x{}x{} observations, state {} and action {}; dataset has {}x{}x{}, {} and {}",
            path.display(),
            d.obs_height,
            d.obs_width,
            d.obs_channels,
            d.state_dim,
            d.action_dim,
            m.height,
            m.width,
            m.channels,
            m.state_dim,
            m.action_dim
        )));
    }
    Ok(())
}

fn eval_policy(a: &EvalPolicy, cli: &Cli) -> Result<()> {
    let run = Run::start("eval-policy", config_json(a), cli.workers);
    let policy = checkpoint::load(&a.policy)?;
    let data = dataio::load_dataset(&a.data)?;
    check_dims(&policy, &data, &a.policy)?;
    let bench = dataio::read_meta(&a.data)?.and_then(|m| m.bench);
    let eval = match &bench {
        Some(b) => exec::eval_policy(&policy, &data, &b.scenes()?)?,
        None => {
            eprintln!("{}: no benchmark info, skipping closed-loop rollouts", a.data.display());
            bench::PolicyEval { mse: bench::action_mse(&policy, &data)?, endpoint_errors: Vec::new() }
        }
    };
    let label = a.label.clone().unwrap_or_else(|| default_label(&a.policy));
    let result = PolicyEvalJson::new(&label, &dataset_name(&a.data), data.frame_count(), &eval, a.success_threshold_px);
    eprintln!("{label}: mse {:.6}, mean endpoint error {:.3} px", result.mse, result.mean_endpoint_error);
    finish(cli, run, a.out.as_deref(), false)?;
    emit(&result, a.out.as_deref())
}

fn observations(data: &Dataset) -> Vec<&Image> {
    data.observations().collect()
}

fn eval_arg(a: &EvalArg, cli: &Cli) -> Result<()> {
    let run = Run::start("eval-arg", config_json(a), cli.workers).seed("seed", a.seed);
    if a.resamples < 2 {
        return Err(Error::Config("--resamples must be >= 2".into()));
    }
    let extractor = match a.extractor {
        ExtractorArg::FlattenDownsample => FeatureExtractor::flatten_default(),
        ExtractorArg::RandomConv => FeatureExtractor::random_conv_default(a.seed),
        ExtractorArg::TinyPolicyEncoder => {
            let path = a
                .policy_checkpoint
                .as_ref()
                .ok_or_else(|| Error::Config("tiny-policy-encoder needs --policy-checkpoint".into()))?;
            FeatureExtractor::TinyPolicyEncoder(checkpoint::load(path)?)
        }
    };
    let cfg = RndConfig {
        lr: a.rnd_lr,
        epochs: a.rnd_epochs,
        optimizer: report::parse_optimizer(&a.rnd_optimizer)?,
        standardize: a.standardize_features,
        ..RndConfig::default()
    };
    let demo = dataio::load_dataset(&a.demo_dir)?;
    let test = dataio::load_dataset(&a.test_dir)?;
    if demo.frame_count() == 0 || test.frame_count() == 0 {
        return Err(Error::Config("demo and test datasets must both have frames".into()));
    }
    eprintln!(
        "ARG over {} demo / {} test frames, {} resamplings",
        demo.frame_count(),
        test.frame_count(),
        a.resamples
    );
    let mut r: ArgReport = exec::arg_protocol(&extractor, &observations(&demo), &observations(&test), a.resamples, a.seed, &cfg)?;
    if let Some(path) = &a.reference {
        let reference = match ResultFile::load(path)? {
            ResultFile::Arg(x) => x,
            ResultFile::PolicyEval(_) => return Err(Error::Config(format!("{}: not an ARG result", path.display()))),
        };
        if reference.base_seed != r.base_seed || reference.values.len() != r.values.len() {
            return Err(Error::Config(format!(
                "{}: reference used a different seed or resample count",
                path.display()
            )));
        }
        r.comparison =
            Some(Comparison { against: reference.label.clone(), test: paired_t_test(&r.values, &reference.values)? });
    }
    let label = a.label.clone().unwrap_or_else(|| {
        a.policy_checkpoint.as_deref().map(default_label).unwrap_or_else(|| extractor.name().into())
    });
    let result = ArgJson::new(&label, &r);
    eprintln!("{label}: ARG {:.6e} \u{00b1} {:.3e}", result.mean, result.std);
    finish(cli, run, a.out.as_deref(), false)?;
    emit(&result, a.out.as_deref())
}

/// `n` indices spread evenly over `0..total`.
fn spread(total: usize, n: usize) -> Vec<usize> {
    let n = n.min(total);
    (0..n).map(|i| i * total / n).collect()
}

fn saliency(a: &Saliency, cli: &Cli) -> Result<()> {
    let run = Run::start("saliency", config_json(a), cli.workers);
    let policy = checkpoint::load(&a.policy)?;
    let data = dataio::load_dataset(&a.data)?;
    check_dims(&policy, &data, &a.policy)?;
    let all: Vec<(&str, usize, &Image, &[f64], Option<&drail_core::Mask>)> = data
        .episodes
        .iter()
        .flat_map(|ep| {
            ep.frames
                .iter()
                .zip(&ep.states)
                .enumerate()
                .map(move |(i, (f, s))| (ep.id.as_str(), i, &f.observation, s.as_slice(), f.mask.as_ref()))
        })
        .collect();
    let picked: Vec<_> = spread(all.len(), a.frames).into_iter().map(|i| all[i]).collect();
    let maps: Vec<(SaliencyMap, Option<f64>)> = match a.method {
        SaliencyMethod::Gradient => {
            let frames: Vec<_> = picked.iter().map(|p| (p.2, p.3, p.4)).collect();
            exec::saliency_batch(&policy, &frames)?
        }
        SaliencyMethod::Occlusion => {
            let fill = mean_color(&data);
            picked
                .iter()
                .map(|p| {
                    let state = p.3;
                    let scorer = |o: &Image| policy.act(o, state).map(|v| v.iter().map(|x| x * x).sum()).unwrap_or(0.0);
                    let map = occlusion_saliency(&scorer, p.2, a.patch, a.stride, &fill)?;
                    let att = match p.4 {
                        Some(m) => attention_in_mask(&map, m)?,
                        None => None,
                    };
                    Ok((map, att))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let dir = a.out.join("heatmaps");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut rows = Vec::with_capacity(maps.len());
    for (p, (map, att)) in picked.iter().zip(&maps) {
        let name = format!("{}_{:06}.png", p.0, p.1);
        dataio::write_image(&dir.join(&name), &heatmap(map))?;
        rows.push((p.0.to_string(), p.1, *att));
    }
    let csv_path = a.out.join("attention.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|source| Error::Csv { path: csv_path.clone(), source })?;
    let csv_err = |source| Error::Csv { path: csv_path.clone(), source };
    w.write_record(["episode", "frame", "attention_in_mask"]).map_err(csv_err)?;
    for (ep, i, att) in &rows {
        let att = att.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([ep.as_str(), &i.to_string(), &att]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let scored: Vec<f64> = rows.iter().filter_map(|r| r.2).collect();
    let mean = if scored.is_empty() { None } else { Some(scored.iter().sum::<f64>() / scored.len() as f64) };
    eprintln!("{} maps written to {}", rows.len(), dir.display());
    finish(cli, run, Some(&a.out), true)?;
    emit(
        &json!({"out": a.out, "frames": rows.len(), "scored_frames": scored.len(), "mean_attention_in_mask": mean}),
        None,
    )
}

fn mean_color(data: &Dataset) -> Vec<f32> {
    let c = data.meta.channels;
    let mut acc = vec![0.0f64; c];
    let mut n = 0usize;
    for o in data.observations() {
        for (a, v) in acc.iter_mut().zip(o.mean_color()) {
            *a += v as f64;
        }
        n += 1;
    }
    acc.iter().map(|a| (a / n.max(1) as f64) as f32).collect()
}

fn export_fractals(a: &ExportFractals, cli: &Cli) -> Result<()> {
    let run = Run::start("export-fractals", config_json(a), cli.workers).seed("seed", a.seed);
    if a.size < fractal::MIN_SIZE {
        return Err(Error::Config(format!("--size must be >= {}", fractal::MIN_SIZE)));
    }
    let specs: Vec<FractalSpec> = match &a.family {
        None => (0..a.count).map(|i| fractal::corpus_spec(a.seed, i, a.size)).collect(),
        Some(name) => {
            let family = Family::parse(name)
                .ok_or_else(|| Error::Config(format!("unknown family {name:?} (ifs_flame, julia, fbm)")))?;
            (0..a.count)
                .map(|i| FractalSpec { family, seed: fractal::corpus_spec(a.seed, i, a.size).seed, size: a.size })
                .collect()
        }
    };
    let images = config::generate_corpus(&specs)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut files = Vec::with_capacity(images.len());
    for (i, (spec, img)) in specs.iter().zip(&images).enumerate() {
        let name = format!("{i:04}_{}.png", spec.family.name());
        dataio::write_image(&a.out.join(&name), img)?;
        files.push(json!({"file": name, "family": spec.family.name(), "seed": spec.seed}));
    }
    eprintln!("wrote {} textures to {}", files.len(), a.out.display());
    finish(cli, run, Some(&a.out), true)?;
    emit(&json!({"out": a.out, "textures": files}), None)
}

fn report_cmd(a: &ReportCmd, cli: &Cli) -> Result<()> {
    let run = Run::start("report", config_json(a), cli.workers);
    let files = a.inputs.iter().map(|p| ResultFile::load(p)).collect::<Result<Vec<_>>>()?;
    let rep = report::aggregate(&files, a.eval_dataset.as_deref())?;
    let table = report::table(&rep);
    eprint!("{table}");
    if let Some(p) = &a.table {
        fs::write(p, &table).map_err(|e| Error::io(p, e))?;
    }
    finish(cli, run, a.out.as_deref(), false)?;
    emit(&rep, a.out.as_deref())
}
