//! Run orchestration behind the command-line tool: configuration loading,
//! training followed by held-out evaluation, replay-verified pathway export,
//! and offline inspection of caches and oracle logs.
//!
//! A run configuration is a TOML file. Relative paths resolve against the
//! file's directory.
//!
//! ```toml
//! task_id = "toy-similarity"
//! seed = 7
//!
//! [paths]
//! building_blocks = "blocks.smi"
//! leads_train = "leads_train.smi"
//! leads_eval = "leads_eval.smi"
//! output_dir = "out"
//! # templates = "templates.jsonl"   (built-in library when absent)
//! # cache = "cache.jsonl"           (in-memory when absent)
//!
//! [budget]
//! total = 600
//! train = 450
//! eval = 150
//!
//! [oracle]
//! kind = "similarity_to_target"
//! target = "CC(=O)Nc1ccc(O)cc1"
//! ```
//!
//! Optional tables: `[env]` (`k_max`, `t_max`), `[proposer]` (`mode` =
//! `"heuristic"` or `"remote"` with `endpoint`, `timeout_secs`), `[policy]`
//! (`hidden`, `activation`, `[policy.features]`), `[grpo]` and `[eval]`
//! (`selection`, `rollouts_per_lead`).

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemtools::ChemTools;
use crate::environment::{
    replay_pathway, EnvConfig, EnvError, EnvState, Environment, Expansion, HeuristicProposer, PathwayStep, Proposer,
    ReactionCache, RemoteProposer, DEFAULT_K_MAX, DEFAULT_T_MAX,
};
use crate::evalmetrics::{curve_csv, MetricsError, MetricsReport, ScoreHistory};
use crate::fingerprints::splitmix64;
use crate::grpo::{run_episode, train, GrpoConfig, GrpoError, Selection, StepLog};
use crate::molgraph::{parse_smiles, parse_smiles_lines, Molecule};
use crate::oracles::{build_oracle, read_oracle_log, Oracle, OracleError, OracleMeter, OracleSpec};
use crate::policy::{Activation, Architecture, FeatureConfig, Featurizer, PolicyError, PolicyParams};
use crate::reactions::{load_templates, TemplateLibrary};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error("pathway record {record}, step {step}: {msg}")]
    ReplayMismatch { record: usize, step: usize, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl RunError {
    /// Process exit status: 2 configuration, 3 budget, 4 replay, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::BudgetExhausted(_) => 3,
            RunError::ReplayMismatch { .. } => 4,
            RunError::Grpo(GrpoError::Config(_)) | RunError::Policy(PolicyError::Config(_)) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default)]
    pub templates: Option<PathBuf>,
    pub building_blocks: PathBuf,
    pub leads_train: PathBuf,
    pub leads_eval: PathBuf,
    #[serde(default)]
    pub cache: Option<PathBuf>,
    /// Checkpoint read by `eval`; defaults to `policy.bin` in the output directory.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSplit {
    pub total: usize,
    pub train: usize,
    pub eval: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub k_max: usize,
    pub t_max: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection { k_max: DEFAULT_K_MAX, t_max: DEFAULT_T_MAX }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProposerConfig {
    #[default]
    Heuristic,
    Remote {
        endpoint: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
}

fn default_timeout_secs() -> u64 {
    crate::environment::DEFAULT_TIMEOUT.as_secs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub features: FeatureConfig,
    /// Hidden units; 0 selects the linear scorer.
    pub hidden: usize,
    pub activation: Activation,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { features: FeatureConfig::default(), hidden: 0, activation: Activation::Tanh }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalSelection {
    #[default]
    Greedy,
    Sample,
    Random,
}

impl EvalSelection {
    fn selection(self) -> Selection {
        match self {
            EvalSelection::Greedy => Selection::Greedy,
            EvalSelection::Sample => Selection::Sample,
            EvalSelection::Random => Selection::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub selection: EvalSelection,
    pub rollouts_per_lead: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { selection: EvalSelection::Greedy, rollouts_per_lead: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task_id: String,
    #[serde(default)]
    pub seed: u64,
    pub paths: Paths,
    pub budget: BudgetSplit,
    pub oracle: OracleSpec,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub proposer: ProposerConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub grpo: GrpoConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    /// Parses and validates `text`, resolving relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, RunError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        let p = &mut cfg.paths;
        for path in [&mut p.building_blocks, &mut p.leads_train, &mut p.leads_eval, &mut p.output_dir] {
            *path = base.join(&*path);
        }
        for path in [&mut p.templates, &mut p.cache, &mut p.checkpoint].into_iter().flatten() {
            *path = base.join(&*path);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let b = self.budget;
        if b.train + b.eval != b.total {
            return Err(RunError::Config(format!(
                "budget split {} + {} does not sum to total {}",
                b.train, b.eval, b.total
            )));
        }
        if self.env.k_max == 0 || self.env.t_max == 0 {
            return Err(RunError::Config("k_max and t_max must be positive".into()));
        }
        if self.eval.rollouts_per_lead == 0 {
            return Err(RunError::Config("rollouts_per_lead must be positive".into()));
        }
        let p = &self.paths;
        for f in [&p.building_blocks, &p.leads_train, &p.leads_eval].into_iter().chain(&p.templates) {
            if !f.is_file() {
                return Err(RunError::Config(format!("missing file {}", f.display())));
            }
        }
        self.grpo.validate().map_err(|e| RunError::Config(e.to_string()))?;
        build_oracle(&self.oracle).map_err(|e| RunError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths.checkpoint.clone().unwrap_or_else(|| self.paths.output_dir.join("policy.bin"))
    }
}

/// Reads a SMILES-per-line file; any unparsable line is a configuration error.
pub fn read_molecules(path: &Path) -> Result<Vec<Molecule>, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    let mols =
        parse_smiles_lines(&text).map_err(|(line, e)| RunError::Config(format!("{}:{line}: {e}", path.display())))?;
    Ok(mols.into_iter().map(|(_, m)| m).collect())
}

/// Seeds for the independent random streams of a run.
#[derive(Debug, Clone, Copy)]
pub struct Seeds {
    pub proposer: u64,
    pub init: u64,
    pub train: u64,
    pub eval: u64,
}

impl Seeds {
    pub fn from_root(root: u64) -> Self {
        Seeds {
            proposer: splitmix64(root ^ 0x01),
            init: splitmix64(root ^ 0x02),
            train: splitmix64(root ^ 0x03),
            eval: splitmix64(root ^ 0x04),
        }
    }
}

/// Everything a run needs, loaded and validated.
pub struct Session {
    pub config: RunConfig,
    pub library: Arc<TemplateLibrary>,
    pub env: Environment,
    pub featurizer: Featurizer,
    pub oracle: Oracle,
    pub train_leads: Vec<Molecule>,
    pub eval_leads: Vec<Molecule>,
    pub seeds: Seeds,
}

impl Session {
    pub fn new(config: RunConfig) -> Result<Self, RunError> {
        config.validate()?;
        let library = Arc::new(match &config.paths.templates {
            Some(p) => load_templates(p).map_err(|e| RunError::Config(e.to_string()))?,
            None => TemplateLibrary::default_library(),
        });
        let oracle = build_oracle(&config.oracle).map_err(|e| RunError::Config(e.to_string()))?;
        let blocks = read_molecules(&config.paths.building_blocks)?;
        let train_leads = read_molecules(&config.paths.leads_train)?;
        let eval_leads = read_molecules(&config.paths.leads_eval)?;
        if train_leads.is_empty() || eval_leads.is_empty() {
            return Err(RunError::Config("lead files must not be empty".into()));
        }
        let seeds = Seeds::from_root(config.seed);
        let proposer: Arc<dyn Proposer> = match &config.proposer {
            ProposerConfig::Heuristic => Arc::new(HeuristicProposer::new(
                library.clone(),
                blocks,
                config.env.k_max,
                seeds.proposer,
                oracle.similarity_target(),
            )),
            ProposerConfig::Remote { endpoint, timeout_secs } => {
                Arc::new(RemoteProposer::new(endpoint.clone(), Duration::from_secs(*timeout_secs)))
            }
        };
        let cache = Arc::new(match &config.paths.cache {
            Some(p) => ReactionCache::open(p, &library)?,
            None => ReactionCache::in_memory(),
        });
        let env_cfg = EnvConfig { task_id: config.task_id.clone(), k_max: config.env.k_max, t_max: config.env.t_max };
        let env = Environment::new(env_cfg, library.clone(), proposer, cache, oracle.describe());
        let featurizer =
            Featurizer::new(config.policy.features, ChemTools::default(), oracle.similarity_target().cloned())?;
        Ok(Session { config, library, env, featurizer, oracle, train_leads, eval_leads, seeds })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.featurizer.dim(),
            hidden: self.config.policy.hidden,
            activation: self.config.policy.activation,
        }
    }

    pub fn initial_params(&self) -> PolicyParams {
        PolicyParams::init(self.architecture(), self.seeds.init)
    }
}

/// A finished episode: lead, steps, terminal product and its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayRecord {
    pub lead: String,
    pub steps: Vec<PathwayStep>,
    pub product: String,
    pub score: f64,
}

impl PathwayRecord {
    fn from_state(state: &EnvState, score: f64) -> Self {
        PathwayRecord {
            lead: state.lead.canonical_smiles().to_string(),
            steps: state.pathway.clone(),
            product: state.molecule.canonical_smiles().to_string(),
            score,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub records: Vec<PathwayRecord>,
    /// Set when the meter ran out before every planned episode was scored.
    pub budget_exhausted: bool,
}

impl EvalOutcome {
    /// Terminal scores as a history with call indices `1..=n`.
    pub fn terminal_history(&self) -> Result<ScoreHistory, MetricsError> {
        ScoreHistory::new(
            self.records
                .iter()
                .enumerate()
                .map(|(i, r)| crate::oracles::OracleCall { call: i + 1, smiles: r.product.clone(), score: r.score })
                .collect(),
        )
    }
}

/// Rolls out `rollouts` episodes per lead and scores each terminal molecule
/// with `meter`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy(
    env: &Environment,
    featurizer: &Featurizer,
    params: &PolicyParams,
    oracle: &Oracle,
    meter: &OracleMeter,
    leads: &[Molecule],
    selection: Selection,
    rollouts: usize,
    seed: u64,
) -> Result<EvalOutcome, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for lead in leads {
        for _ in 0..rollouts {
            if meter.remaining() == 0 {
                return Ok(EvalOutcome { records, budget_exhausted: true });
            }
            let e = run_episode(env, featurizer, params, lead, selection, &mut rng)?;
            let score = meter.evaluate(oracle, &e.final_state.molecule)?;
            records.push(PathwayRecord::from_state(&e.final_state, score));
        }
    }
    Ok(EvalOutcome { records, budget_exhausted: false })
}

/// Baseline that scores every candidate product with the oracle and moves to
/// the best one while it improves on the current molecule. Lookahead calls are
/// charged to `meter`; a lead whose own score cannot be paid for is skipped.
pub fn greedy_oracle_baseline(
    env: &Environment,
    oracle: &Oracle,
    meter: &OracleMeter,
    leads: &[Molecule],
) -> Result<EvalOutcome, RunError> {
    let mut records = Vec::new();
    let mut exhausted = false;
    'leads: for lead in leads {
        let mut state = EnvState::new(lead.clone());
        let Ok(mut current) = meter.evaluate(oracle, lead) else {
            exhausted = true;
            break;
        };
        while state.depth() < env.config().t_max {
            let space = match env.propose(&state)?.as_ref() {
                Expansion::Terminal => break,
                Expansion::Actions(space) => space.clone(),
            };
            let mut best: Option<(usize, f64)> = None;
            for (slot, a) in space.candidates().iter().enumerate() {
                let crate::environment::Action::Reaction(r) = a else { continue };
                match meter.evaluate(oracle, &r.product) {
                    Ok(s) => {
                        if best.is_none_or(|(_, b)| s > b) {
                            best = Some((slot, s));
                        }
                    }
                    Err(OracleError::BudgetExhausted { .. }) => {
                        exhausted = true;
                        records.push(PathwayRecord::from_state(&state, current));
                        break 'leads;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            match best {
                Some((slot, s)) if s > current => {
                    state = env.step_slot(&state, &space, slot)?.state;
                    current = s;
                }
                _ => break,
            }
        }
        records.push(PathwayRecord::from_state(&state, current));
    }
    Ok(EvalOutcome { records, budget_exhausted: exhausted })
}

/// Replays every record from its lead and checks each step's product and the
/// final product.
pub fn verify_pathways(lib: &TemplateLibrary, records: &[PathwayRecord]) -> Result<(), RunError> {
    for (i, r) in records.iter().enumerate() {
        let lead =
            parse_smiles(&r.lead).map_err(|e| RunError::ReplayMismatch { record: i, step: 0, msg: e.to_string() })?;
        let end = replay_pathway(lib, &lead, &r.steps).map_err(|e| match e {
            EnvError::ReplayMismatch { step, msg } => RunError::ReplayMismatch { record: i, step, msg },
            other => RunError::ReplayMismatch { record: i, step: 0, msg: other.to_string() },
        })?;
        if end.canonical_smiles() != r.product {
            return Err(RunError::ReplayMismatch {
                record: i,
                step: r.steps.len(),
                msg: format!("recorded product {} but replay ends at {}", r.product, end.canonical_smiles()),
            });
        }
    }
    Ok(())
}

/// Writes `records` as JSON lines after replay verification; nothing is
/// written when any record fails.
pub fn export_pathways(lib: &TemplateLibrary, records: &[PathwayRecord], path: &Path) -> Result<(), RunError> {
    verify_pathways(lib, records)?;
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_pathways(path: &Path) -> Result<Vec<PathwayRecord>, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, l)| {
            serde_json::from_str(l).map_err(|e| RunError::Config(format!("{}:{}: {e}", path.display(), no + 1)))
        })
        .collect()
}

/// Best record per distinct product, best first, at most `n`.
pub fn top_pathways(records: &[PathwayRecord], n: usize) -> Vec<PathwayRecord> {
    let mut sorted: Vec<&PathwayRecord> = records.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.product.cmp(&b.product)));
    let mut seen = HashSet::new();
    sorted.into_iter().filter(|r| seen.insert(r.product.clone())).take(n).cloned().collect()
}

/// Artifact file names inside the output directory.
pub mod artifacts {
    pub const CHECKPOINT: &str = "policy.bin";
    pub const TRAIN_LOG: &str = "train_log.jsonl";
    pub const TRAIN_ORACLE_LOG: &str = "train_oracle.jsonl";
    pub const EVAL_ORACLE_LOG: &str = "eval_oracle.jsonl";
    pub const EVAL_EPISODES: &str = "eval_episodes.jsonl";
    pub const PATHWAYS: &str = "pathways.jsonl";
    pub const METRICS: &str = "metrics.txt";
    pub const TRAIN_CURVE: &str = "train_curve.csv";
    pub const EVAL_CURVE: &str = "eval_curve.csv";
}

/// Number of top pathways exported per run.
pub const EXPORTED_PATHWAYS: usize = 10;

#[derive(Debug, Clone)]
pub struct OptimizeSummary {
    pub report: String,
    pub train_log: Vec<StepLog>,
    pub eval: EvalOutcome,
    pub train_exhausted: bool,
}

impl OptimizeSummary {
    pub fn budget_exhausted(&self) -> bool {
        self.train_exhausted || self.eval.budget_exhausted
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), RunError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    for item in items {
        serde_json::to_writer(&mut f, item).expect("record serializes");
        f.write_all(b"\n").map_err(io_err(path))?;
    }
    f.flush().map_err(io_err(path))
}

fn section(name: &str, history: &ScoreHistory, budget: usize) -> Result<String, RunError> {
    if history.is_empty() {
        return Ok(format!("[{name}]\nbudget = {budget}\ncalls = 0\n"));
    }
    Ok(format!("[{name}]\n{}", MetricsReport::compute(history, budget)?.to_text()))
}

fn eval_artifacts(session: &Session, meter: &OracleMeter, eval: &EvalOutcome) -> Result<String, RunError> {
    let out = &session.config.paths.output_dir;
    meter.write_log(out.join(artifacts::EVAL_ORACLE_LOG))?;
    export_pathways(&session.library, &eval.records, &out.join(artifacts::EVAL_EPISODES))?;
    export_pathways(&session.library, &top_pathways(&eval.records, EXPORTED_PATHWAYS), &out.join(artifacts::PATHWAYS))?;
    let history = ScoreHistory::new(meter.log())?;
    let curve = out.join(artifacts::EVAL_CURVE);
    fs::write(&curve, curve_csv(&history)).map_err(io_err(&curve))?;
    section("eval", &history, session.config.budget.eval)
}

fn report_header(session: &Session) -> String {
    format!(
        "task_id = {}\nseed = {}\nlibrary_digest = {}\noracle = {}\n",
        session.config.task_id,
        session.config.seed,
        session.library.digest(),
        session.oracle.describe()
    )
}

/// Trains under the training meter, evaluates the held-out leads under the
/// evaluation meter and writes every artifact to the output directory.
pub fn run_optimize(session: &Session) -> Result<OptimizeSummary, RunError> {
    let cfg = &session.config;
    let out = &cfg.paths.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;

    let train_meter = OracleMeter::new(cfg.budget.train);
    let outcome = train(
        &session.env,
        &session.featurizer,
        &session.oracle,
        &train_meter,
        &session.train_leads,
        session.initial_params(),
        &cfg.grpo,
        session.seeds.train,
    )?;
    outcome.params.save(out.join(artifacts::CHECKPOINT))?;
    train_meter.write_log(out.join(artifacts::TRAIN_ORACLE_LOG))?;
    let mut log_lines = vec![serde_json::json!({ "event": "config", "config": cfg })];
    log_lines.extend(outcome.log.iter().map(|s| {
        let mut v = serde_json::to_value(s).expect("step log serializes");
        v["event"] = "step".into();
        v
    }));
    write_jsonl(&out.join(artifacts::TRAIN_LOG), &log_lines)?;

    let eval_meter = OracleMeter::new(cfg.budget.eval);
    let eval = evaluate_policy(
        &session.env,
        &session.featurizer,
        &outcome.params,
        &session.oracle,
        &eval_meter,
        &session.eval_leads,
        cfg.eval.selection.selection(),
        cfg.eval.rollouts_per_lead,
        session.seeds.eval,
    )?;
    let eval_section = eval_artifacts(session, &eval_meter, &eval)?;
    let train_history = ScoreHistory::new(train_meter.log())?;
    let curve = out.join(artifacts::TRAIN_CURVE);
    fs::write(&curve, curve_csv(&train_history)).map_err(io_err(&curve))?;
    let report =
        format!("{}{}{}", report_header(session), eval_section, section("train", &train_history, cfg.budget.train)?);
    let path = out.join(artifacts::METRICS);
    fs::write(&path, &report).map_err(io_err(&path))?;
    Ok(OptimizeSummary { report, train_log: outcome.log, eval, train_exhausted: outcome.budget_exhausted })
}

/// Evaluates a saved checkpoint on the held-out leads.
pub fn run_eval(
    session: &Session,
    checkpoint: &Path,
    selection: EvalSelection,
) -> Result<(String, EvalOutcome), RunError> {
    let cfg = &session.config;
    let out = &cfg.paths.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let params = PolicyParams::load(checkpoint, Some(session.architecture())).map_err(|e| match e {
        PolicyError::Io(e) => RunError::Config(format!("{}: {e}", checkpoint.display())),
        other => RunError::Config(other.to_string()),
    })?;
    let meter = OracleMeter::new(cfg.budget.eval);
    let eval = evaluate_policy(
        &session.env,
        &session.featurizer,
        &params,
        &session.oracle,
        &meter,
        &session.eval_leads,
        selection.selection(),
        cfg.eval.rollouts_per_lead,
        session.seeds.eval,
    )?;
    let report = format!("{}{}", report_header(session), eval_artifacts(session, &meter, &eval)?);
    Ok((report, eval))
}

/// Metrics report recomputed from an oracle log file.
pub fn metrics_from_log(log: &Path, budget: usize) -> Result<(MetricsReport, ScoreHistory), RunError> {
    let calls = read_oracle_log(log).map_err(|e| RunError::Config(e.to_string()))?;
    let history = ScoreHistory::new(calls)?;
    Ok((MetricsReport::compute(&history, budget)?, history))
}

/// Summary of a cache file: per task and library digest, record counts, and
/// how many records restore under `lib`.
pub fn cache_stats(path: &Path, lib: &TemplateLibrary) -> Result<String, RunError> {
    if !path.is_file() {
        return Err(RunError::Config(format!("missing cache file {}", path.display())));
    }
    let summary = crate::environment::cache_file_summary(path).map_err(|e| RunError::Config(e.to_string()))?;
    let loaded = ReactionCache::open(path, lib)?.stats();
    let mut s = String::new();
    for (task, digest, n, terminal) in summary {
        let current = if digest == lib.digest() { " (current library)" } else { "" };
        s.push_str(&format!("task {task} digest {digest}{current}: {n} records, {terminal} terminal\n"));
    }
    s.push_str(&format!("restorable under current library: {}\n", loaded.entries));
    Ok(s)
}

/// Eval Top-10 of the trained policy and two references on one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seed: u64,
    pub trained: f64,
    pub random: f64,
    pub greedy_oracle: f64,
    pub train_calls: usize,
}

/// Trains on the session's training leads, then scores the held-out leads
/// three ways, each under its own evaluation meter: the trained policy with
/// the configured selection, a uniformly random policy, and
/// [`greedy_oracle_baseline`]. Each score is the Top-10 over the terminal
/// molecules of the held-out episodes.
pub fn compare_with_baselines(session: &Session) -> Result<Comparison, RunError> {
    let cfg = &session.config;
    let train_meter = OracleMeter::new(cfg.budget.train);
    let outcome = train(
        &session.env,
        &session.featurizer,
        &session.oracle,
        &train_meter,
        &session.train_leads,
        session.initial_params(),
        &cfg.grpo,
        session.seeds.train,
    )?;
    let top10 =
        |e: &EvalOutcome| -> Result<f64, RunError> { Ok(crate::evalmetrics::top_k(&e.terminal_history()?, 10)?) };
    let run = |params: &PolicyParams, selection: Selection| {
        evaluate_policy(
            &session.env,
            &session.featurizer,
            params,
            &session.oracle,
            &OracleMeter::new(cfg.budget.eval),
            &session.eval_leads,
            selection,
            cfg.eval.rollouts_per_lead,
            session.seeds.eval,
        )
    };
    let trained = top10(&run(&outcome.params, cfg.eval.selection.selection())?)?;
    let random = top10(&run(&session.initial_params(), Selection::Uniform)?)?;
    let greedy =
        greedy_oracle_baseline(&session.env, &session.oracle, &OracleMeter::new(cfg.budget.eval), &session.eval_leads)?;
    Ok(Comparison { seed: cfg.seed, trained, random, greedy_oracle: top10(&greedy)?, train_calls: train_meter.used() })
}
