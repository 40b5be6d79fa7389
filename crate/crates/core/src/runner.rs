//! Run configuration and the four commands behind the `pmrl` binary:
//! synthetic data generation, training, backtesting and run comparison.
//!
//! Every command is deterministic given its resolved config and seed. Output
//! files carry no timestamps, so two runs of the same command produce
//! byte-identical files.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agents::{ddpg_train, pg_train, ppo_train, write_log, DdpgConfig, EpochRecord, PgConfig, PpoConfig};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::evaluation::{
    backtest, compare_runs, compute_metrics, plot_csv, write_file, Agent, Comparison, FollowLoser,
    FollowWinner, MetricsConfig, MetricsReport, Ucrp,
};
use crate::market_data::{gen_synthetic, write_ohlcv, FeatureSet, Manifest, Panel, SyntheticSpec};
use crate::ndcore::ParamStore;
use crate::policies::{ArchConfig, GaussianPolicy, IIEActor, InputShape, QCritic};

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const METRICS_JSON_FILE: &str = "metrics.json";
pub const METRICS_CSV_FILE: &str = "metrics.csv";
pub const PLOT_FILE: &str = "plot.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

const ACTOR: &str = "actor/";
const CRITIC: &str = "critic/";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Pg,
    Ddpg,
    Ppo,
    Ucrp,
    Winner,
    Loser,
}

impl AgentKind {
    pub fn is_trainable(self) -> bool {
        matches!(self, AgentKind::Pg | AgentKind::Ddpg | AgentKind::Ppo)
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Pg => "pg",
            AgentKind::Ddpg => "ddpg",
            AgentKind::Ppo => "ppo",
            AgentKind::Ucrp => "ucrp",
            AgentKind::Winner => "winner",
            AgentKind::Loser => "loser",
        }
    }
}

/// Inclusive training and test date ranges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
}

impl Split {
    pub fn validate(&self, problems: &mut Vec<String>) {
        if self.train_start > self.train_end {
            problems.push(format!(
                "split: train_start {} is after train_end {}",
                self.train_start, self.train_end
            ));
        }
        if self.test_start > self.test_end {
            problems.push(format!(
                "split: test_start {} is after test_end {}",
                self.test_start, self.test_end
            ));
        }
        if self.train_end >= self.test_start {
            problems.push(format!(
                "split: training span ends {} but the test span starts {}; the test span must come strictly after training",
                self.train_end, self.test_start
            ));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Whether UCRP spreads weight over cash as well as the risky assets.
    pub ucrp_include_cash: bool,
    /// Days of price history follow-the-winner/loser rank assets over.
    pub lookback: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            ucrp_include_cash: true,
            lookback: 5,
        }
    }
}

/// Everything one run needs. Relative paths are resolved against the
/// directory of the config file when it is loaded.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    /// Data manifest.
    pub data: PathBuf,
    pub agent: AgentKind,
    pub env: EnvConfig,
    pub arch: ArchConfig,
    pub pg: PgConfig,
    pub ddpg: DdpgConfig,
    pub ppo: PpoConfig,
    pub baselines: BaselineConfig,
    pub metrics: MetricsConfig,
    pub split: Split,
    pub seed: u64,
    /// Where outputs go. Left out of the snapshot, which lives there.
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub features: Option<FeatureSet>,
    pub out_dir: Option<PathBuf>,
}

const FIELDS: &[&str] = &[
    "data", "agent", "env", "arch", "pg", "ddpg", "ppo", "baselines", "metrics", "split", "seed", "out_dir",
];

fn take<T: DeserializeOwned>(obj: &mut Map<String, Value>, key: &str, problems: &mut Vec<String>) -> Option<T> {
    let value = obj.remove(key)?;
    match serde_json::from_value(value) {
        Ok(v) => Some(v),
        Err(e) => {
            problems.push(format!("{key}: {e}"));
            None
        }
    }
}

fn required<T>(value: Option<T>, key: &str, present: bool, problems: &mut Vec<String>) -> Option<T> {
    if value.is_none() && !present {
        problems.push(format!("missing required field `{key}`"));
    }
    value
}

impl RunConfig {
    /// A config with every optional section at its default.
    pub fn new(data: impl Into<PathBuf>, agent: AgentKind, split: Split, seed: u64) -> Self {
        Self {
            data: data.into(),
            agent,
            env: EnvConfig::default(),
            arch: ArchConfig::default(),
            pg: PgConfig::default(),
            ddpg: DdpgConfig::default(),
            ppo: PpoConfig::default(),
            baselines: BaselineConfig::default(),
            metrics: MetricsConfig::default(),
            split,
            seed,
            out_dir: None,
        }
    }

    /// Reads, resolves, overrides and validates a config file.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base, overrides)
    }

    /// Parses config text, collecting every problem before giving up.
    /// Relative paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path, overrides: &Overrides) -> Result<Self> {
        let mut problems = Vec::new();
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("not valid JSON: {e}")]))?;
        let Value::Object(mut obj) = value else {
            return Err(Error::Config(vec!["config must be a JSON object".into()]));
        };
        let present = |k: &str| obj.contains_key(k);
        let (has_data, has_agent, has_split, has_seed) =
            (present("data"), present("agent"), present("split"), present("seed"));

        let data: Option<PathBuf> = take(&mut obj, "data", &mut problems);
        let agent: Option<AgentKind> = take(&mut obj, "agent", &mut problems);
        let env: Option<EnvConfig> = take(&mut obj, "env", &mut problems);
        let arch: Option<ArchConfig> = take(&mut obj, "arch", &mut problems);
        let pg: Option<PgConfig> = take(&mut obj, "pg", &mut problems);
        let ddpg: Option<DdpgConfig> = take(&mut obj, "ddpg", &mut problems);
        let ppo: Option<PpoConfig> = take(&mut obj, "ppo", &mut problems);
        let baselines: Option<BaselineConfig> = take(&mut obj, "baselines", &mut problems);
        let metrics: Option<MetricsConfig> = take(&mut obj, "metrics", &mut problems);
        let split: Option<Split> = take(&mut obj, "split", &mut problems);
        let seed: Option<u64> = take(&mut obj, "seed", &mut problems);
        let out_dir: Option<PathBuf> = take(&mut obj, "out_dir", &mut problems);
        for key in obj.keys() {
            problems.push(format!("unknown field `{key}`, expected one of {}", FIELDS.join(", ")));
        }

        let data = required(data, "data", has_data, &mut problems);
        let agent = required(agent, "agent", has_agent, &mut problems);
        let split = required(split, "split", has_split, &mut problems);
        let seed = required(overrides.seed.or(seed), "seed", has_seed, &mut problems);

        let (Some(data), Some(agent), Some(split), Some(seed)) = (data, agent, split, seed) else {
            return Err(Error::Config(problems));
        };
        let mut cfg = RunConfig::new(resolve(base, &data), agent, split, seed);
        let parse_failed = !problems.is_empty();
        cfg.env = env.unwrap_or_default();
        cfg.arch = arch.unwrap_or_default();
        cfg.pg = pg.unwrap_or_default();
        cfg.ddpg = ddpg.unwrap_or_default();
        cfg.ppo = ppo.unwrap_or_default();
        cfg.baselines = baselines.unwrap_or_default();
        cfg.metrics = metrics.unwrap_or_default();
        cfg.out_dir = overrides.out_dir.clone().or_else(|| out_dir.map(|p| resolve(base, &p)));
        if let Some(f) = &overrides.features {
            cfg.env.features = f.clone();
        }
        cfg.collect_problems(&mut problems);
        if parse_failed || !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        Ok(cfg)
    }

    pub fn collect_problems(&self, problems: &mut Vec<String>) {
        self.env.validate(problems);
        self.arch.validate(self.env.window, problems);
        self.pg.validate(problems);
        self.ddpg.validate(problems);
        self.ppo.validate(problems);
        self.metrics.validate(problems);
        self.split.validate(problems);
        if self.baselines.lookback == 0 {
            problems.push("baselines.lookback must be at least 1".into());
        }
        if self.out_dir.is_none() {
            problems.push("no output directory: set `out_dir` or pass --out".into());
        }
        if !self.data.is_file() {
            problems.push(format!("data manifest {} does not exist", self.data.display()));
        } else if let Ok(manifest) = Manifest::load(&self.data) {
            let base = self.data.parent().unwrap_or(Path::new(""));
            for asset in &manifest.assets {
                let p = resolve(base, asset);
                if !p.is_file() {
                    problems.push(format!("data file {} does not exist", p.display()));
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        self.collect_problems(&mut problems);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// The resolved config with every default written out. The data path is
    /// made absolute so the snapshot runs from any working directory.
    pub fn snapshot(&self) -> String {
        let mut cfg = self.clone();
        if let Ok(abs) = std::path::absolute(&cfg.data) {
            cfg.data = abs;
        }
        serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n"
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Error::Config(vec!["no output directory: set `out_dir` or pass --out".into()]))
    }

    fn input_shape(&self) -> InputShape {
        InputShape {
            features: self.env.features.len(),
            window: self.env.window,
        }
    }

    fn load_panel(&self) -> Result<Panel> {
        let manifest = Manifest::load(&self.data)?;
        manifest.load_panel(self.data.parent().unwrap_or(Path::new("")))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))? + "\n";
    write_file(path, text.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Writes one OHLCV CSV per synthetic asset plus a manifest listing them.
/// Returns the manifest path.
pub fn cmd_gen_data(spec_path: &Path, out_dir: &Path, seed: u64) -> Result<PathBuf> {
    let spec: SyntheticSpec = read_json(spec_path)?;
    let panel = gen_synthetic(&spec, &mut ChaCha8Rng::seed_from_u64(seed))?;
    create_dir(out_dir)?;
    let mut assets = Vec::new();
    for series in panel.to_series() {
        let file = PathBuf::from(format!("{}.csv", series.asset_id));
        write_ohlcv(&series, &out_dir.join(&file))?;
        assets.push(file);
    }
    let manifest = Manifest {
        assets,
        start: None,
        end: None,
        features: FeatureSet::default(),
        window: crate::market_data::DEFAULT_WINDOW,
    };
    let path = out_dir.join(MANIFEST_FILE);
    manifest.save(&path)?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub agent: AgentKind,
    pub epochs: usize,
    pub aborted_epochs: usize,
    pub parameters: usize,
    /// APV of the deterministic policy over the clean training span.
    pub initial_training_apv: f64,
    pub final_training_apv: f64,
}

/// The trainable networks of a run.
enum Model {
    Pg(IIEActor),
    Ddpg(IIEActor, QCritic),
    Ppo(GaussianPolicy),
}

impl Model {
    fn init(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let shape = cfg.input_shape();
        let arch = cfg.arch.clone();
        Ok(match cfg.agent {
            AgentKind::Pg => Model::Pg(IIEActor::new(arch, shape, rng)?),
            AgentKind::Ddpg => {
                let actor = IIEActor::new(arch.clone(), shape, rng)?;
                Model::Ddpg(actor, QCritic::new(arch, shape, rng)?)
            }
            AgentKind::Ppo => Model::Ppo(GaussianPolicy::new(arch, shape, rng)?),
            other => {
                return Err(Error::Config(vec![format!(
                    "agent `{}` has no parameters to train",
                    other.name()
                )]))
            }
        })
    }

    /// All parameters under one namespace: `actor/…` and `critic/…`.
    fn checkpoint(&self) -> ParamStore {
        match self {
            Model::Pg(a) => a.params.extract_prefixed("", ACTOR),
            Model::Ddpg(a, c) => {
                let mut out = a.params.extract_prefixed("", ACTOR);
                for (name, t) in c.params.iter() {
                    out.insert(format!("{CRITIC}{name}"), t.clone());
                }
                out
            }
            Model::Ppo(p) => p.params.clone(),
        }
    }

    fn restore(&mut self, ck: &ParamStore) -> Result<()> {
        self.checkpoint().check_compatible(ck)?;
        match self {
            Model::Pg(a) => a.params = ck.extract_prefixed(ACTOR, ""),
            Model::Ddpg(a, c) => {
                a.params = ck.extract_prefixed(ACTOR, "");
                c.params = ck.extract_prefixed(CRITIC, "");
            }
            Model::Ppo(p) => p.params = ck.clone(),
        }
        Ok(())
    }

    fn agent(&mut self) -> &mut dyn Agent {
        match self {
            Model::Pg(a) | Model::Ddpg(a, _) => a,
            Model::Ppo(p) => p,
        }
    }

    fn train(&mut self, panel: &Panel, cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Vec<EpochRecord>> {
        match self {
            Model::Pg(a) => pg_train(a, panel, &cfg.env, &cfg.pg, rng),
            Model::Ddpg(a, c) => ddpg_train(a, c, panel, &cfg.env, &cfg.ddpg, rng),
            Model::Ppo(p) => ppo_train(p, panel, &cfg.env, &cfg.ppo, rng),
        }
    }
}

/// APV of `agent` trading every decision day of `panel` without noise.
fn span_apv(agent: &mut dyn Agent, panel: &Panel, env: &EnvConfig) -> Result<f64> {
    let end = panel.len() - 1;
    Ok(backtest(agent, panel, env.window - 1, end, env)?.final_value())
}

/// Trains the configured agent on the training span.
///
/// Writes the resolved config, the checkpoint, the JSON-lines epoch log and a
/// summary with the training-span APV before and after.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    if !cfg.agent.is_trainable() {
        return Err(Error::Config(vec![format!(
            "agent `{}` is a fixed rule; only pg, ddpg and ppo can be trained",
            cfg.agent.name()
        )]));
    }
    let out = cfg.out_dir()?;
    let panel = cfg.load_panel()?.restrict(Some(cfg.split.train_start), Some(cfg.split.train_end))?;
    if panel.len() <= cfg.env.window {
        return Err(Error::Data(format!(
            "training span has {} trading days; window {} needs at least {}",
            panel.len(),
            cfg.env.window,
            cfg.env.window + 1
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::init(cfg, &mut rng)?;
    let initial = span_apv(model.agent(), &panel, &cfg.env)?;
    let log = model.train(&panel, cfg, &mut rng)?;
    let final_apv = span_apv(model.agent(), &panel, &cfg.env)?;
    let checkpoint = model.checkpoint();

    create_dir(out)?;
    write_file(&out.join(CONFIG_FILE), cfg.snapshot().as_bytes())?;
    checkpoint.save(&out.join(CHECKPOINT_FILE))?;
    write_log(&log, &out.join(TRAIN_LOG_FILE))?;
    let summary = TrainSummary {
        agent: cfg.agent,
        epochs: log.len(),
        aborted_epochs: log.iter().filter(|r| r.aborted.is_some()).count(),
        parameters: checkpoint.scalar_count(),
        initial_training_apv: initial,
        final_training_apv: final_apv,
    };
    write_json(&out.join(TRAIN_SUMMARY_FILE), &summary)?;
    Ok(summary)
}

pub fn cmd_train(config: &Path, overrides: &Overrides) -> Result<TrainSummary> {
    train(&RunConfig::load(config, overrides)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BacktestSummary {
    pub metrics: MetricsReport,
    pub reference: MetricsReport,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Why the agent's replay stopped early, if it did.
    pub terminated: Option<String>,
}

fn fixed_rule(cfg: &RunConfig) -> Option<Box<dyn Agent>> {
    let lookback = cfg.baselines.lookback;
    Some(match cfg.agent {
        AgentKind::Ucrp => Box::new(Ucrp {
            include_cash: cfg.baselines.ucrp_include_cash,
        }),
        AgentKind::Winner => Box::new(FollowWinner { lookback }),
        AgentKind::Loser => Box::new(FollowLoser { lookback }),
        AgentKind::Pg | AgentKind::Ddpg | AgentKind::Ppo => return None,
    })
}

/// Refuses a checkpoint whose recorded training span reaches into the test span.
fn check_lookahead(checkpoint: &Path, cfg: &RunConfig) -> Result<()> {
    let snapshot = checkpoint.parent().unwrap_or(Path::new("")).join(CONFIG_FILE);
    if !snapshot.is_file() {
        return Ok(());
    }
    let value: Value = read_json(&snapshot)?;
    let Some(train_end) = value
        .pointer("/split/train_end")
        .and_then(Value::as_str)
        .and_then(|s| s.parse::<NaiveDate>().ok())
    else {
        return Ok(());
    };
    if train_end >= cfg.split.test_start {
        return Err(Error::InvalidArgument(format!(
            "checkpoint {} was trained through {train_end}, which overlaps the test span starting {}",
            checkpoint.display(),
            cfg.split.test_start
        )));
    }
    Ok(())
}

/// Evaluates the configured agent on the test span only.
///
/// `checkpoint` defaults to the one in the output directory. Writes the
/// equity curve, the metrics as JSON and CSV, and a plot-ready CSV of the
/// curve next to UCRP.
pub fn backtest_run(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<BacktestSummary> {
    cfg.validate()?;
    let out = cfg.out_dir()?;
    let full = cfg.load_panel()?;
    let panel = full.restrict(None, Some(cfg.split.test_end))?;
    let start = panel.calendar().partition_point(|&d| d < cfg.split.test_start);
    if start + 1 < cfg.env.window {
        return Err(Error::Data(format!(
            "test span starts at trading day {start}, but a window of {} needs {} days of history",
            cfg.env.window,
            cfg.env.window - 1
        )));
    }
    if start + 1 >= panel.len() {
        return Err(Error::Data(format!(
            "test span {}..{} holds fewer than two trading days",
            cfg.split.test_start, cfg.split.test_end
        )));
    }
    let end = panel.len() - 1;

    let mut rule = fixed_rule(cfg);
    let mut model = None;
    if rule.is_none() {
        let default_path = out.join(CHECKPOINT_FILE);
        let path = checkpoint.unwrap_or(&default_path);
        check_lookahead(path, cfg)?;
        let mut m = Model::init(cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
        m.restore(&ParamStore::load(path)?)?;
        model = Some(m);
    }
    let agent: &mut dyn Agent = match (rule.as_deref_mut(), model.as_mut()) {
        (Some(r), _) => r,
        (None, Some(m)) => m.agent(),
        (None, None) => unreachable!("either a rule or a trained model"),
    };
    let curve = backtest(agent, &panel, start, end, &cfg.env)?;
    let mut ucrp = Ucrp {
        include_cash: cfg.baselines.ucrp_include_cash,
    };
    let reference = backtest(&mut ucrp, &panel, start, end, &cfg.env)?;
    let metrics = compute_metrics(&curve, &cfg.metrics)?;
    let reference_metrics = compute_metrics(&reference, &cfg.metrics)?;

    create_dir(out)?;
    write_file(&out.join(CONFIG_FILE), cfg.snapshot().as_bytes())?;
    curve.write_csv(&out.join(CURVE_FILE))?;
    write_json(&out.join(METRICS_JSON_FILE), &metrics)?;
    write_file(
        &out.join(METRICS_CSV_FILE),
        MetricsReport::to_csv(std::slice::from_ref(&metrics))?.as_bytes(),
    )?;
    write_file(&out.join(PLOT_FILE), plot_csv(&curve, &reference).as_bytes())?;
    Ok(BacktestSummary {
        metrics,
        reference: reference_metrics,
        start: panel.calendar()[start],
        end: *curve.dates.last().expect("curve has a start date"),
        terminated: curve.terminated.clone(),
    })
}

pub fn cmd_backtest(config: &Path, checkpoint: Option<&Path>, overrides: &Overrides) -> Result<BacktestSummary> {
    backtest_run(&RunConfig::load(config, overrides)?, checkpoint)
}

fn load_metrics(dirs: &[PathBuf]) -> Result<Vec<MetricsReport>> {
    dirs.iter()
        .map(|dir| {
            let path = dir.join(METRICS_JSON_FILE);
            if !path.is_file() {
                return Err(Error::InvalidArgument(format!(
                    "run {} has no {METRICS_JSON_FILE}; backtest it first",
                    dir.display()
                )));
            }
            read_json(&path)
        })
        .collect()
}

/// Paired one-sided Welch tests of group A against group B, written to
/// `comparison.csv` and `comparison.json` under `out_dir`.
pub fn cmd_compare(a: &[PathBuf], b: &[PathBuf], out_dir: &Path) -> Result<Comparison> {
    for (side, dirs) in [("A", a), ("B", b)] {
        if dirs.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "group {side} has {} run(s); a comparison needs at least 2 per side",
                dirs.len()
            )));
        }
    }
    let comparison = compare_runs(&load_metrics(a)?, &load_metrics(b)?)?;
    create_dir(out_dir)?;
    write_file(&out_dir.join("comparison.csv"), comparison.to_csv()?.as_bytes())?;
    write_file(&out_dir.join("comparison.json"), (comparison.to_json() + "\n").as_bytes())?;
    Ok(comparison)
}
