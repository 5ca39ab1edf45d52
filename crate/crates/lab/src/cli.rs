//! Command-line surface. Each command (except `mock-vlm`) works inside
//! `<output_root>/<timestamp>-<command>/{config,logs,artifacts}`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use effecterase_core::model::{Model, ModelConfig, TaskKind};
use effecterase_core::rng::derive_seed;
use effecterase_core::sample::{insert_objects, remove_objects};
use effecterase_core::VideoTensor;
use serde_json::json;

use crate::checkpoint::load_checkpoint;
use crate::config::RunConfig;
use crate::dataset::{load_dataset, synth_dataset};
use crate::error::{LabError, Result};
use crate::eval::{eval_set, video_dirs, write_report, EvalOptions};
use crate::frames::{read_mask_dir, read_video_dir, write_video_dir};
use crate::mock::{MockReply, MockVlmServer};
use crate::trainloop::{train_loop, MODEL_STREAM};
use crate::vlm::{mean_score, VlmClient, QSCORE_PROMPT_VERSION};

#[derive(Debug, Parser)]
#[command(name = "effecterase", version, about = "Synthesize paired effect videos, train, sample and evaluate.")]
pub struct Cli {
    /// TOML configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Parent of run directories [default: runs, or `output_root` from the config]
    #[arg(long, global = true)]
    pub runs_dir: Option<PathBuf>,
    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
    /// Plain log output (also enabled by a non-empty NO_COLOR).
    #[arg(long, global = true, default_value_t = false)]
    pub no_color: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic triplet dataset.
    Synth(SynthArgs),
    /// Train on a dataset directory.
    Train(TrainArgs),
    /// Remove masked objects and their effects from a video.
    Remove(RemoveArgs),
    /// Insert an object (with effects) into a background video.
    Insert(InsertArgs),
    /// Compare predicted videos against references.
    Eval(EvalArgs),
    /// Score videos with the VLM judge.
    Qscore(QscoreArgs),
    /// Serve a local mock of the VLM endpoint.
    MockVlm(MockVlmArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Remove(_) => "remove",
            Command::Insert(_) => "insert",
            Command::Eval(_) => "eval",
            Command::Qscore(_) => "qscore",
            Command::MockVlm(_) => "mock-vlm",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset directory, must be empty or absent [default: <run>/artifacts/dataset]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of scenes [default: 4]
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Objects per scene [default: 2]
    #[arg(long)]
    pub objects: Option<usize>,
    /// Frames per video [default: 8]
    #[arg(long)]
    pub frames: Option<usize>,
    /// Frame height [default: 32]
    #[arg(long)]
    pub height: Option<usize>,
    /// Frame width [default: 48]
    #[arg(long)]
    pub width: Option<usize>,
    /// Ken Burns variants per configuration, 0 to 5 [default: 5]
    #[arg(long)]
    pub camera_variants: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Tiny,
    Small,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// Optimizer steps [default: 1000]
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Seed for initialization, data order and noise [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// AdamW learning rate [default: 0.0001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Triplets per step via gradient accumulation [default: 1]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Weight of the effect-consistency loss [default: 0.1]
    #[arg(long)]
    pub lambda_ec: Option<f64>,
    /// Steps between checkpoints, 0 for first and last only [default: 100]
    #[arg(long)]
    pub checkpoint_interval: Option<u64>,
    /// Model size preset, replacing the [model] table [default: the config's model, tiny]
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Args)]
pub struct SampleFlags {
    /// Checkpoint directory (`step_<N>`).
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Euler steps [default: 50]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Noise seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output video directory [default: <run>/artifacts/output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RemoveArgs {
    /// Video directory with the objects present.
    #[arg(long)]
    pub video: PathBuf,
    /// Mask directory of the objects to remove.
    #[arg(long)]
    pub mask: PathBuf,
    #[command(flatten)]
    pub sample: SampleFlags,
}

#[derive(Debug, Args)]
pub struct InsertArgs {
    /// Background video directory.
    #[arg(long)]
    pub background: PathBuf,
    /// Video directory showing the object to insert.
    #[arg(long)]
    pub object: PathBuf,
    /// Mask directory of the object.
    #[arg(long)]
    pub mask: PathBuf,
    #[command(flatten)]
    pub sample: SampleFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted videos: a video directory or a directory of sample directories.
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference videos, paired with predictions by sample id.
    #[arg(long)]
    pub gt: PathBuf,
    /// Subdirectory of each predicted sample, e.g. `background`.
    #[arg(long)]
    pub pred_component: Option<String>,
    /// Subdirectory of each reference sample, e.g. `background`.
    #[arg(long)]
    pub gt_component: Option<String>,
    /// Also score predictions with the VLM judge.
    #[arg(long, default_value_t = false)]
    pub qscore: bool,
    /// Seed of the random-projection feature extractor [default: 0]
    #[arg(long)]
    pub extractor_seed: Option<u64>,
    /// Extra copy of the report [default: only <run>/artifacts/report.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VlmFlags {
    /// Endpoint URL [default: http://127.0.0.1:8765/v1/score]
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent with each request [default: qwen-vl]
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the bearer token [default: EFFECTERASE_VLM_TOKEN]
    #[arg(long)]
    pub token_env: Option<String>,
    /// Retries on transport errors and HTTP 5xx [default: 3]
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Frames sent per video [default: 4]
    #[arg(long)]
    pub frames: Option<usize>,
    /// First retry delay in milliseconds, doubled per retry [default: 500]
    #[arg(long)]
    pub backoff_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct QscoreArgs {
    /// A video directory or a directory of sample directories.
    #[arg(long)]
    pub videos: PathBuf,
    /// Subdirectory of each sample to score, e.g. `background`.
    #[arg(long)]
    pub component: Option<String>,
    #[command(flatten)]
    pub vlm: VlmFlags,
    /// Extra copy of the report [default: only <run>/artifacts/qscore.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MockVlmArgs {
    /// Port on 127.0.0.1
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    /// Reply text for every request
    #[arg(long, default_value = "8")]
    pub reply: String,
    /// Answer this many first requests with HTTP 500
    #[arg(long, default_value_t = 0)]
    pub fail_first: usize,
}

/// What a finished command reports on stdout.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub run_dir: Option<PathBuf>,
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(output_root: &Path, command: &str) -> Result<Self> {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string();
        let mut root = output_root.join(format!("{stamp}-{command}"));
        let mut n = 1;
        while root.exists() {
            n += 1;
            root = output_root.join(format!("{stamp}-{command}-{n}"));
        }
        for sub in ["config", "logs", "artifacts"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(|e| LabError::io(&p, e))?;
        }
        Ok(Self { root })
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn artifacts(&self) -> PathBuf {
        self.root.join("artifacts")
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

/// Config file merged with the command's flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(dir) = &cli.runs_dir {
        cfg.output_root = dir.clone();
    }
    match &cli.command {
        Command::Synth(a) => {
            if let Some(s) = a.seed {
                cfg.synth.seed = s;
            }
            let s = &mut cfg.synth;
            s.scenes = a.scenes.unwrap_or(s.scenes);
            s.objects = a.objects.unwrap_or(s.objects);
            s.frames = a.frames.unwrap_or(s.frames);
            s.height = a.height.unwrap_or(s.height);
            s.width = a.width.unwrap_or(s.width);
            s.camera_variants = a.camera_variants.unwrap_or(s.camera_variants);
        }
        Command::Train(a) => {
            if let Some(s) = a.seed {
                cfg.train.seed = s;
            }
            let t = &mut cfg.train;
            t.max_steps = a.max_steps.unwrap_or(t.max_steps);
            t.learning_rate = a.lr.unwrap_or(t.learning_rate);
            t.batch_size = a.batch_size.unwrap_or(t.batch_size);
            t.lambda_ec = a.lambda_ec.unwrap_or(t.lambda_ec);
            t.checkpoint_interval = a.checkpoint_interval.unwrap_or(t.checkpoint_interval);
            match a.preset {
                Some(Preset::Tiny) => cfg.model = ModelConfig::tiny(),
                Some(Preset::Small) => cfg.model = ModelConfig::small(),
                None => {}
            }
        }
        Command::Remove(RemoveArgs { sample, .. }) | Command::Insert(InsertArgs { sample, .. }) => {
            if let Some(s) = sample.seed {
                cfg.sample.seed = s;
            }
            cfg.sample.steps = sample.steps.unwrap_or(cfg.sample.steps);
            cfg.sample.task =
                if matches!(cli.command, Command::Remove(_)) { TaskKind::Removal } else { TaskKind::Insertion };
        }
        Command::Qscore(a) => {
            let v = &mut cfg.vlm;
            let f = &a.vlm;
            if let Some(e) = &f.endpoint {
                v.endpoint = e.clone();
            }
            if let Some(m) = &f.model {
                v.model = m.clone();
            }
            if let Some(t) = &f.token_env {
                v.token_env = t.clone();
            }
            v.max_retries = f.max_retries.unwrap_or(v.max_retries);
            v.frames_per_request = f.frames.unwrap_or(v.frames_per_request);
            v.backoff_ms = f.backoff_ms.unwrap_or(v.backoff_ms);
        }
        Command::Eval(_) | Command::MockVlm(_) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Resolves the configuration, creates the run directory and runs the command.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve_config(cli)?;
    if let Command::MockVlm(a) = &cli.command {
        return run_mock(a);
    }
    let run = RunDir::create(&cfg.output_root, cli.command.name())?;
    write_file(&run.config().join("resolved.toml"), &cfg.to_toml()?)?;
    let argv: Vec<String> = std::env::args().collect();
    write_file(&run.config().join("command.txt"), &(argv.join(" ") + "\n"))?;
    let log_path = run.logs().join("run.log");
    let log_file = fs::File::create(&log_path).map_err(|e| LabError::io(&log_path, e))?;
    crate::logging::attach_file(log_file);
    log::info!("{} run in {}", cli.command.name(), run.root.display());
    let summary = match &cli.command {
        Command::Synth(a) => cmd_synth(&cfg, a, &run)?,
        Command::Train(a) => cmd_train(&cfg, a, &run)?,
        Command::Remove(a) => {
            let (model, ckpt) = load_model(&a.sample.ckpt)?;
            let video = read_video_dir(&a.video)?;
            let mask = read_mask_dir(&a.mask)?;
            let out = remove_objects(&model, &video, &mask, &cfg.sample)?;
            write_output(&out, &a.sample, &run, &ckpt)?
        }
        Command::Insert(a) => {
            let (model, ckpt) = load_model(&a.sample.ckpt)?;
            let background = read_video_dir(&a.background)?;
            let object = read_video_dir(&a.object)?;
            let mask = read_mask_dir(&a.mask)?;
            let out = insert_objects(&model, &background, &object, &mask, &cfg.sample)?;
            write_output(&out, &a.sample, &run, &ckpt)?
        }
        Command::Eval(a) => cmd_eval(&cfg, a, &run)?,
        Command::Qscore(a) => cmd_qscore(&cfg, a, &run)?,
        Command::MockVlm(_) => unreachable!("handled above"),
    };
    log::logger().flush();
    Ok(Outcome { run_dir: Some(run.root), summary })
}

fn cmd_synth(cfg: &RunConfig, a: &SynthArgs, run: &RunDir) -> Result<serde_json::Value> {
    let out = a.out.clone().unwrap_or_else(|| run.artifacts().join("dataset"));
    let records = synth_dataset(&cfg.synth, &out)?;
    Ok(json!({ "command": "synth", "dataset": out, "samples": records.len() }))
}

fn cmd_train(cfg: &RunConfig, a: &TrainArgs, run: &RunDir) -> Result<serde_json::Value> {
    let data = load_dataset(&a.data)?;
    log::info!("loaded {} triplets from {}", data.len(), a.data.display());
    let first = &data[0].1.object_video;
    cfg.model
        .check_video_size(first.height(), first.width())
        .map_err(|e| LabError::config(format!("model does not fit the dataset: {e}")))?;
    let samples: Vec<_> = data.into_iter().map(|(_, s)| s).collect();
    let model = Model::new(&cfg.model, derive_seed(cfg.train.seed, MODEL_STREAM))?;
    let ckpt_root = run.artifacts().join("checkpoints");
    let loss_log = run.logs().join("loss.jsonl");
    let outcome = train_loop(&samples, model, &cfg.train, &ckpt_root, &loss_log)?;
    let last = outcome.history.last().map(|r| r.total);
    Ok(json!({
        "command": "train",
        "steps": outcome.history.len(),
        "final_total": last,
        "checkpoints": outcome.checkpoints,
        "loss_log": loss_log,
    }))
}

fn load_model(dir: &Path) -> Result<(Model, PathBuf)> {
    let (model, meta) = load_checkpoint(dir)?;
    log::info!("loaded checkpoint {} (step {})", dir.display(), meta.step);
    Ok((model, dir.to_path_buf()))
}

fn write_output(video: &VideoTensor, flags: &SampleFlags, run: &RunDir, ckpt: &Path) -> Result<serde_json::Value> {
    let out = flags.out.clone().unwrap_or_else(|| run.artifacts().join("output"));
    write_video_dir(video, &out)?;
    Ok(json!({
        "output": out,
        "checkpoint": ckpt,
        "frames": video.frames(),
        "height": video.height(),
        "width": video.width(),
    }))
}

fn cmd_eval(cfg: &RunConfig, a: &EvalArgs, run: &RunDir) -> Result<serde_json::Value> {
    let opts = EvalOptions {
        pred_component: a.pred_component.clone(),
        gt_component: a.gt_component.clone(),
        extractor_seed: a.extractor_seed.unwrap_or(0),
    };
    let client = if a.qscore { Some(VlmClient::new(cfg.vlm.clone())?) } else { None };
    let report = eval_set(&a.pred, &a.gt, &opts, client.as_ref())?;
    let path = run.artifacts().join("report.json");
    write_report(&report, &path)?;
    if let Some(extra) = &a.out {
        write_report(&report, extra)?;
    }
    let agg = serde_json::to_value(&report.aggregate).expect("aggregate serializes");
    Ok(json!({ "command": "eval", "report": path, "count": report.count, "aggregate": agg }))
}

fn cmd_qscore(cfg: &RunConfig, a: &QscoreArgs, run: &RunDir) -> Result<serde_json::Value> {
    let dirs = video_dirs(&a.videos, a.component.as_deref())?;
    let videos = dirs.iter().map(|(_, p)| read_video_dir(p)).collect::<Result<Vec<_>>>()?;
    let client = VlmClient::new(cfg.vlm.clone())?;
    let refs: Vec<&VideoTensor> = videos.iter().collect();
    let scores = client.score_batch(&refs)?;
    let rows: Vec<_> = dirs.iter().zip(&scores).map(|((id, _), s)| json!({ "id": id, "qscore": s })).collect();
    let report = json!({
        "prompt_version": QSCORE_PROMPT_VERSION,
        "model": cfg.vlm.model,
        "count": scores.len(),
        "samples": rows,
        "mean": mean_score(&scores),
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    let path = run.artifacts().join("qscore.json");
    write_file(&path, &text)?;
    if let Some(extra) = &a.out {
        write_file(extra, &text)?;
    }
    Ok(json!({ "command": "qscore", "report": path, "count": scores.len(), "mean": mean_score(&scores) }))
}

fn run_mock(a: &MockVlmArgs) -> Result<Outcome> {
    let script = vec![MockReply::status(500); a.fail_first];
    let server = MockVlmServer::start(a.port, script, MockReply::text(&a.reply))?;
    log::info!("mock VLM listening on {}", server.endpoint());
    println!("{}", json!({ "command": "mock-vlm", "endpoint": server.endpoint() }));
    server.wait();
    Ok(Outcome { run_dir: None, summary: json!({ "command": "mock-vlm" }) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flags_fail() {
        assert!(Cli::try_parse_from(["effecterase", "synth", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["effecterase", "synth", "--scenes", "2"]).is_ok());
    }

    #[test]
    fn flags_override_config_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[train]\nlearning_rate = 0.5\nmax_steps = 3\n").unwrap();
        let cli = Cli::try_parse_from([
            "effecterase",
            "--config",
            path.to_str().unwrap(),
            "train",
            "--data",
            "x",
            "--lr",
            "0.25",
        ])
        .unwrap();
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.train.learning_rate, 0.25);
        assert_eq!(cfg.train.max_steps, 3);
    }

    #[test]
    fn insert_sets_the_task() {
        let cli = Cli::try_parse_from([
            "effecterase", "insert", "--background", "b", "--object", "o", "--mask", "m", "--ckpt", "c",
        ])
        .unwrap();
        assert_eq!(resolve_config(&cli).unwrap().sample.task, TaskKind::Insertion);
    }

    #[test]
    fn invalid_config_is_a_config_error() {
        let cli = Cli::try_parse_from(["effecterase", "train", "--data", "x", "--lr=-1"]).unwrap();
        let err = resolve_config(&cli).unwrap_err();
        assert_eq!(err.class().code(), 2);
    }
}
