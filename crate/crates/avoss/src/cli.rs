//! Operator surface: dataset synthesis, training, evaluation, baseline
//! comparison and the muting grid search, driven by a JSON run config.
//! Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baseline::{evaluate_baseline, single_clue_config};
use crate::error::{Error, Result};
use crate::mixsim::dataset::{derive_seed, synthesize_dataset, IdRange};
use crate::mixsim::{load_dataset, write_dataset, MixSpec, MixtureSample};
use crate::model::checkpoint::Checkpoint;
use crate::model::{ClueMode, Model, ModelConfig};
use crate::train::{evaluate, grid_search_muting, run_training, EvalReport, TrainConfig};

const VAL_SEED_SALT: u64 = 0x56a1_0000;
const TEST_SEED_SALT: u64 = 0x7e57_0000;

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

fn default_run_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

fn default_split_sizes() -> [usize; 3] {
    [512, 64, 64]
}

fn default_speakers_per_split() -> u64 {
    48
}

fn default_noises_per_split() -> u64 {
    24
}

/// Dataset sizing and location. Desk-scale defaults; the reference corpus
/// counts sit behind the explicit --paper-scale flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub dir: PathBuf,
    /// train/val/test sample counts.
    pub split_sizes: [usize; 3],
    pub speakers_per_split: u64,
    pub noises_per_split: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: default_data_dir(),
            split_sizes: default_split_sizes(),
            speakers_per_split: default_speakers_per_split(),
            noises_per_split: default_noises_per_split(),
        }
    }
}

/// The whole run configuration; every section has defaults, unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub mix: MixSpec,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub run_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            mix: MixSpec::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            run_dir: default_run_dir(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.mix.validate()?;
        self.train.validate()?;
        if self.data.split_sizes.contains(&0) {
            return Err(Error::Config("split_sizes must all be >= 1".into()));
        }
        if self.data.speakers_per_split < 4 {
            return Err(Error::Config("need at least 4 speakers per split".into()));
        }
        Ok(())
    }

    /// Mixture spec for one split: disjoint seed, and the oracle-label frame
    /// grid pinned to the model configuration.
    fn split_spec(&self, split: Split) -> MixSpec {
        let mut spec = self.mix.clone();
        spec.sample_rate = self.model.sample_rate;
        spec.vad_window_len = self.model.window_len;
        spec.vad_hop = self.model.hop;
        spec.seed = match split {
            Split::Train => self.mix.seed,
            Split::Val => derive_seed(self.mix.seed, VAL_SEED_SALT),
            Split::Test => derive_seed(self.mix.seed, TEST_SEED_SALT),
        };
        if split == Split::Test {
            // Off-screen speech may be entirely absent at test time.
            spec.off_duration_range_s = [0.0, self.mix.off_duration_range_s[1]];
        }
        spec
    }

    fn split_pools(&self, split: Split) -> (IdRange, IdRange) {
        let s = self.data.speakers_per_split;
        let n = self.data.noises_per_split;
        let k = split as u64;
        (IdRange::new(k * s, s), IdRange::new(k * n, n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train = 0,
    Val = 1,
    Test = 2,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other}"))),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "avoss",
    about = "Audio-visual speech enhancement with selective off-screen speech extraction",
    version
)]
pub struct Cli {
    /// Root that all relative paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize train/val/test datasets with disjoint speaker pools.
    Synth(SynthArgs),
    /// Train a model (or one baseline half) on a synthesized dataset.
    Train(TrainArgs),
    /// Evaluate a finished run on a dataset split.
    Eval(EvalArgs),
    /// Compare a trained proposed model against the two-model baseline.
    Compare(CompareArgs),
    /// Grid search over the muting probabilities.
    GridMute(GridMuteArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the dataset output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use the reference corpus sizes (20000/5000/3000). Slow.
    #[arg(long)]
    pub paper_scale: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the run directory.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Disable the off-screen activity attention.
    #[arg(long)]
    pub no_attention: bool,
    /// Disable the muting strategy (p_on = p_off = 0).
    #[arg(long)]
    pub no_muting: bool,
    /// Train one baseline half instead of the full model.
    #[arg(long, value_parser = ["visual", "voiceprint"])]
    pub baseline: Option<String>,
    /// Warm-start parameters from a checkpoint, with a re-initialized
    /// optimizer and schedule.
    #[arg(long)]
    pub resume_reinit: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Run directory containing best.ckpt.
    #[arg(long)]
    pub run: PathBuf,
    /// Dataset root (defaults to the data dir recorded in the run config).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Print the machine-readable report instead of the table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub proposed: PathBuf,
    #[arg(long)]
    pub visual: PathBuf,
    #[arg(long)]
    pub voiceprint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct GridMuteArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated probabilities, e.g. 0,0.2,0.4.
    #[arg(long, default_value = "0,0.2,0.4")]
    pub p_on: String,
    #[arg(long, default_value = "0,0.2,0.4")]
    pub p_off: String,
    /// Output CSV path (defaults to <run_dir>/grid_mute.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(&cli.workdir, args),
        Command::Train(args) => cmd_train(&cli.workdir, args),
        Command::Eval(args) => cmd_eval(&cli.workdir, args),
        Command::Compare(args) => cmd_compare(&cli.workdir, args),
        Command::GridMute(args) => cmd_grid_mute(&cli.workdir, args),
    }
}

fn resolve(workdir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        workdir.join(path)
    }
}

pub fn cmd_synth(workdir: &Path, args: SynthArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&resolve(workdir, &args.config))?;
    if let Some(out) = args.out {
        cfg.data.dir = out;
    }
    if args.paper_scale {
        eprintln!(
            "warning: --paper-scale synthesizes 20000/5000/3000 samples; this will take a while"
        );
        cfg.data.split_sizes = [20_000, 5_000, 3_000];
    }
    let root = resolve(workdir, &cfg.data.dir);
    for (split, &count) in [Split::Train, Split::Val, Split::Test]
        .iter()
        .zip(cfg.data.split_sizes.iter())
    {
        let spec = cfg.split_spec(*split);
        let (speakers, noises) = cfg.split_pools(*split);
        let samples =
            synthesize_dataset(&spec, cfg.model.lip_dim, &speakers, &noises, count)?;
        let dir = root.join(split.name());
        write_dataset(&dir, &samples, &spec)?;
        println!(
            "synth {}: {} samples, speakers [{}, {}), condition {} -> {}",
            split.name(),
            count,
            speakers.start,
            speakers.start + speakers.count,
            spec.interference_mode.label(),
            dir.display()
        );
    }
    let snapshot = root.join("config.json");
    fs::write(&snapshot, serde_json::to_string_pretty(&cfg)?)?;
    Ok(())
}

fn load_split(root: &Path, split: Split, model: &ModelConfig) -> Result<Vec<MixtureSample>> {
    let dir = root.join(split.name());
    let (samples, _) = load_dataset(&dir, Some(model.frame_grid()))?;
    Ok(samples)
}

pub fn cmd_train(workdir: &Path, args: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&resolve(workdir, &args.config))?;
    if let Some(dir) = args.run_dir {
        cfg.run_dir = dir;
    }
    if args.no_attention {
        cfg.model.use_attention = false;
    }
    if args.no_muting {
        cfg.train.p_on = 0.0;
        cfg.train.p_off = 0.0;
    }
    let model_cfg = match args.baseline.as_deref() {
        Some("visual") => single_clue_config(ClueMode::VisualOnly, &cfg.model)?,
        Some("voiceprint") => single_clue_config(ClueMode::VoiceprintOnly, &cfg.model)?,
        Some(other) => return Err(Error::Config(format!("unknown baseline kind {other}"))),
        None => cfg.model.clone(),
    };
    if args.baseline.is_some() && (cfg.train.p_on > 0.0 || cfg.train.p_off > 0.0) {
        // Muting can zero a single-clue model's training target.
        eprintln!("note: muting disabled for baseline training");
        cfg.train.p_on = 0.0;
        cfg.train.p_off = 0.0;
    }

    let model = match &args.resume_reinit {
        Some(ckpt_path) => {
            let ckpt = Checkpoint::load(&resolve(workdir, ckpt_path))?;
            if ckpt.model.cfg != model_cfg {
                return Err(Error::Config(
                    "checkpoint configuration does not match the requested model".into(),
                ));
            }
            println!(
                "resuming from {} (epoch {}), optimizer re-initialized",
                ckpt_path.display(),
                ckpt.epoch
            );
            ckpt.model
        }
        None => Model::new(model_cfg.clone(), cfg.train.seed)?,
    };

    let data_root = resolve(workdir, &cfg.data.dir);
    let train_set = load_split(&data_root, Split::Train, &model_cfg)?;
    let val_set = load_split(&data_root, Split::Val, &model_cfg)?;

    let run_dir = resolve(workdir, &cfg.run_dir);
    fs::create_dir_all(&run_dir)?;
    fs::write(
        run_dir.join("config.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "run": cfg,
            "model_effective": model_cfg,
            "baseline": args.baseline,
        }))?,
    )?;

    let outcome = run_training(model, cfg.train.clone(), &train_set, &val_set, &run_dir)?;
    println!(
        "trained {} epochs (best val loss {:.4}) -> {}",
        outcome.epochs_run,
        outcome.best_val_loss,
        run_dir.display()
    );
    Ok(())
}

fn report_table(rows: &[(String, bool, bool, &EvalReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>3} {:>3} {:>14} {:>12} {:>12}\n",
        "Method", "AM", "MS", "SI-SDRi (dB)", "SDRi (dB)", "#Params"
    ));
    for (name, am, ms, report) in rows {
        out.push_str(&format!(
            "{:<24} {:>3} {:>3} {:>14.2} {:>12.2} {:>12}\n",
            name,
            if *am { "x" } else { "-" },
            if *ms { "x" } else { "-" },
            report.mean_si_sdri_db,
            report.mean_sdri_db,
            report.param_count
        ));
    }
    out
}

fn condition_table(report: &EvalReport) -> String {
    let mut out = String::new();
    for (condition, stats) in &report.per_condition {
        out.push_str(&format!(
            "  condition {:<10} n={:<4} SI-SDRi {:>7.2} dB  SDRi {:>7.2} dB\n",
            condition, stats.n, stats.mean_si_sdri_db, stats.mean_sdri_db
        ));
    }
    if let Some(acc) = report.attention_accuracy {
        out.push_str(&format!("  attention frame accuracy {:.1}%\n", 100.0 * acc));
    }
    out
}

fn run_flags(run_dir: &Path) -> (bool, bool) {
    // Best effort: read the config snapshot to label AM/MS columns.
    let path = run_dir.join("config.json");
    let Ok(text) = fs::read_to_string(path) else {
        return (false, false);
    };
    let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) else {
        return (false, false);
    };
    let am = v["model_effective"]["use_attention"].as_bool().unwrap_or(false);
    let p_on = v["run"]["train"]["p_on"].as_f64().unwrap_or(0.0);
    let p_off = v["run"]["train"]["p_off"].as_f64().unwrap_or(0.0);
    (am, p_on > 0.0 || p_off > 0.0)
}

pub fn cmd_eval(workdir: &Path, args: EvalArgs) -> Result<()> {
    let run_dir = resolve(workdir, &args.run);
    let ckpt_path = run_dir.join("best.ckpt");
    if !ckpt_path.exists() {
        return Err(Error::Data(format!(
            "{}: no best.ckpt (is this a finished run directory?)",
            run_dir.display()
        )));
    }
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let data_root = match &args.data {
        Some(dir) => resolve(workdir, dir),
        None => {
            let cfg_path = run_dir.join("config.json");
            let text = fs::read_to_string(&cfg_path)
                .map_err(|e| Error::Data(format!("{}: {e}", cfg_path.display())))?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            let dir = v["run"]["data"]["dir"]
                .as_str()
                .ok_or_else(|| Error::Data("run config lacks data.dir".into()))?;
            resolve(workdir, Path::new(dir))
        }
    };
    let split = Split::parse(&args.split)?;
    let dataset = load_split(&data_root, split, &ckpt.model.cfg)?;
    let report = evaluate(&ckpt.model, &dataset)?;
    let out_path = run_dir.join(format!("eval_{}.json", split.name()));
    fs::write(&out_path, serde_json::to_string_pretty(&report)?)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        let (am, ms) = run_flags(&run_dir);
        let label = match ckpt.model.cfg.clue_mode {
            ClueMode::Both => "proposed",
            ClueMode::VisualOnly => "baseline/visual",
            ClueMode::VoiceprintOnly => "baseline/voiceprint",
        };
        print!(
            "{}",
            report_table(&[(label.to_string(), am, ms, &report)])
        );
        print!("{}", condition_table(&report));
        let count = ckpt.model.count_parameters();
        for (component, n) in &count.by_component {
            println!("  params {component:<20} {n}");
        }
        println!("report written to {}", out_path.display());
    }
    Ok(())
}

pub fn cmd_compare(workdir: &Path, args: CompareArgs) -> Result<()> {
    let proposed_dir = resolve(workdir, &args.proposed);
    let proposed = Checkpoint::load(&proposed_dir.join("best.ckpt"))?;
    let visual = Checkpoint::load(&resolve(workdir, &args.visual).join("best.ckpt"))?;
    let voiceprint = Checkpoint::load(&resolve(workdir, &args.voiceprint).join("best.ckpt"))?;
    let split = Split::parse(&args.split)?;
    let dataset = load_split(&resolve(workdir, &args.data), split, &proposed.model.cfg)?;

    let proposed_report = evaluate(&proposed.model, &dataset)?;
    let baseline_report = evaluate_baseline(&visual.model, &voiceprint.model, &dataset)?;
    let combined = serde_json::json!({
        "split": split.name(),
        "proposed": proposed_report,
        "baseline": baseline_report,
    });
    fs::write(
        proposed_dir.join(format!("compare_{}.json", split.name())),
        serde_json::to_string_pretty(&combined)?,
    )?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&combined)?);
    } else {
        let (am, ms) = run_flags(&proposed_dir);
        print!(
            "{}",
            report_table(&[
                ("baseline (mix outputs)".to_string(), false, false, &baseline_report),
                ("proposed".to_string(), am, ms, &proposed_report),
            ])
        );
    }
    Ok(())
}

fn parse_prob_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad probability {s}: {e}")))
        })
        .collect()
}

pub fn cmd_grid_mute(workdir: &Path, args: GridMuteArgs) -> Result<()> {
    let cfg = RunConfig::load(&resolve(workdir, &args.config))?;
    let p_on = parse_prob_list(&args.p_on)?;
    let p_off = parse_prob_list(&args.p_off)?;
    let data_root = resolve(workdir, &cfg.data.dir);
    let train_set = load_split(&data_root, Split::Train, &cfg.model)?;
    let val_set = load_split(&data_root, Split::Val, &cfg.model)?;
    let report = grid_search_muting(&cfg.model, &cfg.train, &p_on, &p_off, &train_set, &val_set)?;
    let out = match args.out {
        Some(p) => resolve(workdir, &p),
        None => {
            let run_dir = resolve(workdir, &cfg.run_dir);
            fs::create_dir_all(&run_dir)?;
            run_dir.join("grid_mute.csv")
        }
    };
    fs::write(&out, report.to_csv())?;
    print!("{}", report.to_csv());
    println!("grid written to {}", out.display());
    Ok(())
}
