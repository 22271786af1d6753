//! End-to-end rebuttal generation. A run decomposes the review, gathers
//! per-point paper context, optionally plans an argumentative perspective
//! per point, drafts point responses, and merges them.
//!
//! Six modes control which stages execute:
//!
//! * `direct`: one whole-review response, no decomposition or retrieval.
//! * `decomp`: per-point responses with the full paper as context.
//! * `drg`: per-point responses over top-k retrieved paragraphs.
//! * `drpg`: adds perspective proposal, scoring, and gated selection.
//! * `drpg-c` / `drpg-j`: as `drpg`, but only clarification-kind or
//!   justification-kind candidates survive to selection.
//!
//! Every run emits a [`RunTrace`]; with a trace directory each stage is
//! persisted as it completes, so a failed run leaves the finished prefix
//! on disk.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_artifact, load_records, persist_artifact, persist_records, Paper, Rebuttal, RebuttalUnit,
    Review, ReviewPoint, Validate,
};
use crate::decomposer::decompose;
use crate::error::{Error, Result};
use crate::executor::{merge, respond_point, respond_whole};
use crate::planner::{
    propose_perspectives, score_matrix, select, PerspectiveCandidate, PerspectiveKind,
    PlannerModel, ScoreMatrix, SelectionOutcome,
};
use crate::providers::{ChatProvider, EmbedProvider, EmbeddingVector, GenerationRequest};
use crate::retriever::{build_index, retrieve_vec, EmbeddingIndex, RetrievedContext};

/// Which stages a run executes. Serialized in kebab case ("drpg-c").
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Direct,
    Decomp,
    Drg,
    #[default]
    Drpg,
    DrpgC,
    DrpgJ,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Direct,
        Mode::Decomp,
        Mode::Drg,
        Mode::Drpg,
        Mode::DrpgC,
        Mode::DrpgJ,
    ];

    pub fn uses_decomposer(self) -> bool {
        self != Mode::Direct
    }

    pub fn uses_retriever(self) -> bool {
        matches!(self, Mode::Drg | Mode::Drpg | Mode::DrpgC | Mode::DrpgJ)
    }

    pub fn uses_planner(self) -> bool {
        matches!(self, Mode::Drpg | Mode::DrpgC | Mode::DrpgJ)
    }

    /// Candidate-kind restriction applied before selection, if any.
    pub fn kind_restriction(self) -> Option<PerspectiveKind> {
        match self {
            Mode::DrpgC => Some(PerspectiveKind::Clarification),
            Mode::DrpgJ => Some(PerspectiveKind::Justification),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Direct => "direct",
            Mode::Decomp => "decomp",
            Mode::Drg => "drg",
            Mode::Drpg => "drpg",
            Mode::DrpgC => "drpg-c",
            Mode::DrpgJ => "drpg-j",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown mode {s:?}; expected one of direct, decomp, drg, drpg, drpg-c, drpg-j"
                ))
            })
    }
}

/// Sampling settings for one provider role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleConfig {
    pub temperature: f64,
    pub model: String,
}

impl Default for RoleConfig {
    fn default() -> Self {
        RoleConfig {
            temperature: 0.0,
            model: "default".to_string(),
        }
    }
}

impl RoleConfig {
    fn validate(&self, role: &str) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Config(format!(
                "{role} temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if self.model.trim().is_empty() {
            return Err(Error::Config(format!("{role} model name is blank")));
        }
        Ok(())
    }

    fn apply(&self, req: &GenerationRequest) -> GenerationRequest {
        req.clone()
            .with_temperature(self.temperature)
            .with_model(&self.model)
    }
}

/// Full configuration of a generation run. Loadable from a TOML file;
/// unspecified fields take the defaults shown in [`Default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Paragraphs retrieved per review point.
    pub k: usize,
    /// Minimum softmax confidence for keeping the argmax perspective.
    pub threshold: f64,
    /// Cap on proposer candidates that reach scoring.
    pub max_candidates: usize,
    /// Concurrency width for per-point stages.
    pub jobs: usize,
    /// Seed forwarded to seeded providers; the run itself draws no
    /// randomness beyond provider behavior.
    pub seed: u64,
    pub decomposer: RoleConfig,
    pub proposer: RoleConfig,
    pub executor: RoleConfig,
    pub judge: RoleConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::Drpg,
            k: 15,
            threshold: 0.8,
            max_candidates: 5,
            jobs: 4,
            seed: 0,
            decomposer: RoleConfig::default(),
            proposer: RoleConfig::default(),
            executor: RoleConfig::default(),
            judge: RoleConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        if self.max_candidates == 0 {
            return Err(Error::Config("max_candidates must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.decomposer.validate("decomposer")?;
        self.proposer.validate("proposer")?;
        self.executor.validate("executor")?;
        self.judge.validate("judge")?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

impl Validate for PipelineConfig {
    fn validate(&self) -> Result<()> {
        PipelineConfig::validate(self)
    }
}

/// Rewrites outgoing requests with the per-role temperature and model
/// name from the config, keyed on the request's system prompt.
pub(crate) struct RoleTuned<'a> {
    pub(crate) inner: &'a dyn ChatProvider,
    pub(crate) cfg: &'a PipelineConfig,
}

impl ChatProvider for RoleTuned<'_> {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        use crate::providers::mock::{classify_role, Role};
        let role = match classify_role(&req.system_prompt) {
            Role::Decomposer => &self.cfg.decomposer,
            Role::Proposer => &self.cfg.proposer,
            Role::ExecutorPoint | Role::ExecutorWhole => &self.cfg.executor,
            Role::Judge => &self.cfg.judge,
            _ => return self.inner.generate(req),
        };
        self.inner.generate(&role.apply(req))
    }
}

/// The planner's full record for one review point: the candidates that
/// reached scoring, their per-paragraph and mean scores, and the gated
/// selection. A point where proposal or restriction produced nothing
/// usable carries `failure` instead and counts as a fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub point_index: usize,
    pub candidates: Vec<PerspectiveCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreMatrix>,
    pub mean_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl PlanRecord {
    fn fallback(point_index: usize, failure: String) -> Self {
        PlanRecord {
            point_index,
            candidates: Vec::new(),
            scores: None,
            mean_scores: Vec::new(),
            selection: None,
            failure: Some(failure),
        }
    }

    /// True when the point kept a perspective rather than falling back.
    pub fn used_perspective(&self) -> bool {
        self.selection.as_ref().is_some_and(|s| !s.fell_back)
    }

    pub fn chosen(&self) -> Option<&PerspectiveCandidate> {
        self.selection.as_ref().and_then(|s| s.chosen.as_ref())
    }
}

impl Validate for PlanRecord {
    fn validate(&self) -> Result<()> {
        if self.mean_scores.len() != self.candidates.len() {
            return Err(Error::Config(format!(
                "plan for point {}: {} mean scores for {} candidates",
                self.point_index,
                self.mean_scores.len(),
                self.candidates.len()
            )));
        }
        match (&self.selection, &self.failure) {
            (None, None) => Err(Error::Config(format!(
                "plan for point {} has neither selection nor failure",
                self.point_index
            ))),
            (Some(sel), _) if sel.all_scores.len() != self.candidates.len() => {
                Err(Error::Config(format!(
                    "plan for point {}: selection scores do not match candidates",
                    self.point_index
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Everything a run produced, stage by stage. Stages a mode skips stay
/// empty. Serialized as a directory: `config.json` plus one JSONL file
/// per stage and the final `rebuttal.json` / `rebuttal.md`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub config: PipelineConfig,
    pub paper_id: String,
    pub review_id: String,
    pub points: Vec<ReviewPoint>,
    pub contexts: Vec<RetrievedContext>,
    pub plans: Vec<PlanRecord>,
    pub units: Vec<RebuttalUnit>,
}

pub const TRACE_CONFIG_FILE: &str = "config.json";
pub const TRACE_POINTS_FILE: &str = "points.jsonl";
pub const TRACE_CONTEXTS_FILE: &str = "contexts.jsonl";
pub const TRACE_PLANS_FILE: &str = "plans.jsonl";
pub const TRACE_UNITS_FILE: &str = "units.jsonl";
pub const TRACE_REBUTTAL_FILE: &str = "rebuttal.json";
pub const TRACE_REBUTTAL_TEXT_FILE: &str = "rebuttal.md";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TraceMeta {
    paper_id: String,
    review_id: String,
    config: PipelineConfig,
}

impl Validate for TraceMeta {
    fn validate(&self) -> Result<()> {
        self.config.validate()
    }
}

impl RunTrace {
    fn empty(config: PipelineConfig, paper_id: &str, review_id: &str) -> Self {
        RunTrace {
            config,
            paper_id: paper_id.to_string(),
            review_id: review_id.to_string(),
            points: Vec::new(),
            contexts: Vec::new(),
            plans: Vec::new(),
            units: Vec::new(),
        }
    }

    /// Writes the whole trace to `dir`, creating it if needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let sink = TraceSink::new(Some(dir.as_ref()))?;
        sink.write_meta(self)?;
        sink.write_stage(TRACE_POINTS_FILE, &self.points)?;
        sink.write_stage(TRACE_CONTEXTS_FILE, &self.contexts)?;
        sink.write_stage(TRACE_PLANS_FILE, &self.plans)?;
        sink.write_stage(TRACE_UNITS_FILE, &self.units)
    }

    /// Reads a trace directory. Stage files a partial run never reached
    /// may be absent and load as empty; `config.json` is required.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: TraceMeta = load_artifact(dir.join(TRACE_CONFIG_FILE))?;
        let stage = |name: &str| dir.join(name);
        let mut trace = RunTrace::empty(meta.config, &meta.paper_id, &meta.review_id);
        if stage(TRACE_POINTS_FILE).exists() {
            trace.points = load_records(stage(TRACE_POINTS_FILE))?;
        }
        if stage(TRACE_CONTEXTS_FILE).exists() {
            trace.contexts = load_records(stage(TRACE_CONTEXTS_FILE))?;
        }
        if stage(TRACE_PLANS_FILE).exists() {
            trace.plans = load_records(stage(TRACE_PLANS_FILE))?;
        }
        if stage(TRACE_UNITS_FILE).exists() {
            trace.units = load_records(stage(TRACE_UNITS_FILE))?;
        }
        Ok(trace)
    }

    /// Fraction of points answered with a kept perspective. Only defined
    /// for planner modes; other traces have no selection stage to measure.
    pub fn perspective_usage(&self) -> Result<f64> {
        if !self.config.mode.uses_planner() {
            return Err(Error::WrongMode(format!(
                "perspective usage is defined for drpg, drpg-c and drpg-j runs, not {}",
                self.config.mode
            )));
        }
        if self.points.is_empty() {
            return Err(Error::EmptySet("trace has no review points".into()));
        }
        let used = self.plans.iter().filter(|p| p.used_perspective()).count();
        Ok(used as f64 / self.points.len() as f64)
    }
}

/// Incremental trace writer. With no directory every write is a no-op.
struct TraceSink {
    dir: Option<PathBuf>,
}

impl TraceSink {
    fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        Ok(TraceSink {
            dir: dir.map(Path::to_path_buf),
        })
    }

    fn write_meta(&self, trace: &RunTrace) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let meta = TraceMeta {
            paper_id: trace.paper_id.clone(),
            review_id: trace.review_id.clone(),
            config: trace.config.clone(),
        };
        persist_artifact(&meta, dir.join(TRACE_CONFIG_FILE))
    }

    fn write_stage<T: Serialize>(&self, name: &str, items: &[T]) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        persist_records(items, dir.join(name))
    }

    fn write_rebuttal(&self, rebuttal: &Rebuttal) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        persist_artifact(rebuttal, dir.join(TRACE_REBUTTAL_FILE))?;
        let path = dir.join(TRACE_REBUTTAL_TEXT_FILE);
        std::fs::write(&path, format!("{}\n", rebuttal.merged_text))
            .map_err(|e| Error::io(&path, e))
    }
}

/// Runs `f(0..n)` across at most `jobs` worker threads and returns the
/// results in index order. Workers claim indices through a shared counter
/// and stop claiming new ones once any call fails; indices below the
/// first failure are always completed.
fn fan_out<T, F>(n: usize, jobs: usize, f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let width = jobs.min(n).max(1);
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<T>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..width {
            s.spawn(|| loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = f(i);
                if result.is_err() {
                    stop.store(true, Ordering::Relaxed);
                }
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .unwrap()
                .unwrap_or_else(|| Err(Error::provider("point skipped after earlier stage failure")))
        })
        .collect()
}

/// Splits stage results into the prefix of successes before the first
/// failure (by index) and that failure, if any.
fn take_prefix<T>(results: Vec<Result<T>>) -> (Vec<T>, Option<Error>) {
    let mut ok = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => return (ok, Some(e)),
        }
    }
    (ok, None)
}

/// Generates a rebuttal for `review` against `paper`. `planner` is
/// required by the planner modes and ignored elsewhere. With a trace
/// directory each stage is persisted as soon as it completes.
pub fn run(
    paper: &Paper,
    review: &Review,
    cfg: &PipelineConfig,
    chat: &dyn ChatProvider,
    embed: &dyn EmbedProvider,
    planner: Option<&PlannerModel>,
    trace_dir: Option<&Path>,
) -> Result<(Rebuttal, RunTrace)> {
    run_with_index(paper, review, cfg, chat, embed, planner, None, trace_dir)
}

/// As [`run`], but reuses an existing paragraph embedding index instead
/// of embedding the paper again. The index must belong to `paper` and
/// the same encoder as `embed`.
#[allow(clippy::too_many_arguments)]
pub fn run_with_index(
    paper: &Paper,
    review: &Review,
    cfg: &PipelineConfig,
    chat: &dyn ChatProvider,
    embed: &dyn EmbedProvider,
    planner: Option<&PlannerModel>,
    index: Option<&EmbeddingIndex>,
    trace_dir: Option<&Path>,
) -> Result<(Rebuttal, RunTrace)> {
    cfg.validate()?;
    paper.validate()?;
    review.validate()?;
    if review.paper_id != paper.id {
        return Err(Error::Config(format!(
            "review {} targets paper {}, not {}",
            review.id, review.paper_id, paper.id
        )));
    }
    let model = if cfg.mode.uses_planner() {
        let m = planner.ok_or_else(|| {
            Error::Config(format!("mode {} needs a planner model", cfg.mode))
        })?;
        if m.encoder_dim() != embed.dim() {
            return Err(Error::DimensionMismatch {
                expected: m.encoder_dim(),
                actual: embed.dim(),
            });
        }
        Some(m)
    } else {
        None
    };
    if let Some(idx) = index {
        if idx.paper_id != paper.id || idx.len() != paper.paragraphs.len() {
            return Err(Error::Config(format!(
                "embedding index belongs to paper {} ({} paragraphs), run is on {} ({})",
                idx.paper_id,
                idx.len(),
                paper.id,
                paper.paragraphs.len()
            )));
        }
    }

    let chat = RoleTuned { inner: chat, cfg };
    let mut trace = RunTrace::empty(cfg.clone(), &paper.id, &review.id);
    let sink = TraceSink::new(trace_dir)?;
    sink.write_meta(&trace)?;

    if cfg.mode == Mode::Direct {
        let rebuttal = respond_whole(review, paper, &chat)?;
        trace.units = rebuttal.units.clone();
        sink.write_stage(TRACE_POINTS_FILE, &trace.points)?;
        sink.write_stage(TRACE_CONTEXTS_FILE, &trace.contexts)?;
        sink.write_stage(TRACE_PLANS_FILE, &trace.plans)?;
        sink.write_stage(TRACE_UNITS_FILE, &trace.units)?;
        sink.write_rebuttal(&rebuttal)?;
        return Ok((rebuttal, trace));
    }

    trace.points = decompose(review, &chat)?;
    sink.write_stage(TRACE_POINTS_FILE, &trace.points)?;
    let n = trace.points.len();

    // Paragraph sets per point: everything in decomp mode, retrieved
    // top-k otherwise. The index embeds the paper once; points are
    // embedded in one batch.
    let built_index = if cfg.mode.uses_retriever() && index.is_none() {
        Some(build_index(paper, embed)?)
    } else {
        None
    };
    let local_index = if cfg.mode.uses_retriever() {
        index.or(built_index.as_ref())
    } else {
        None
    };
    if let Some(idx) = local_index {
        let point_texts: Vec<String> = trace.points.iter().map(|p| p.text.clone()).collect();
        let point_vecs = embed.embed(&point_texts)?;
        for (i, vec) in point_vecs.iter().enumerate() {
            trace.contexts.push(retrieve_vec(vec, i, idx, cfg.k)?);
        }
    }
    sink.write_stage(TRACE_CONTEXTS_FILE, &trace.contexts)?;

    let context_paragraphs = |i: usize| -> Result<Vec<(usize, &str)>> {
        if cfg.mode == Mode::Decomp {
            return Ok(paper
                .paragraphs
                .iter()
                .map(|p| (p.index, p.text.as_str()))
                .collect());
        }
        trace.contexts[i]
            .paragraph_indices
            .iter()
            .map(|&j| {
                let text = paper
                    .paragraphs
                    .get(j)
                    .ok_or(Error::IndexOutOfRange {
                        index: j,
                        len: paper.paragraphs.len(),
                    })?
                    .text
                    .as_str();
                Ok((j, text))
            })
            .collect()
    };

    if let Some(model) = model {
        let idx = local_index.expect("planner modes retrieve");
        let plan_one = |i: usize| -> Result<PlanRecord> {
            let mut candidates = match propose_perspectives(&trace.points[i], &chat) {
                Ok(c) => c,
                Err(e @ (Error::Parse(_) | Error::SchemaViolation { .. })) => {
                    log::warn!("point {i}: proposer output unusable, falling back: {e}");
                    return Ok(PlanRecord::fallback(i, format!("proposer parse failure: {e}")));
                }
                Err(e) => return Err(e),
            };
            if let Some(kind) = cfg.mode.kind_restriction() {
                candidates.retain(|c| c.kind == kind);
            }
            candidates.truncate(cfg.max_candidates);
            if candidates.is_empty() {
                return Ok(PlanRecord::fallback(
                    i,
                    format!("no {} candidates proposed", cfg.mode),
                ));
            }
            let cand_texts: Vec<String> = candidates.iter().map(|c| c.text.clone()).collect();
            let cand_vecs = embed.embed(&cand_texts)?;
            let para_vecs: Vec<EmbeddingVector> = trace.contexts[i]
                .paragraph_indices
                .iter()
                .map(|&j| idx.vectors()[j].clone())
                .collect();
            let scores = score_matrix(model, &cand_vecs, &para_vecs)?;
            let mean_scores: Vec<f64> = scores
                .raw
                .iter()
                .map(|row| row.iter().sum::<f64>() / row.len() as f64)
                .collect();
            let selection = select(&candidates, &mean_scores, cfg.threshold);
            Ok(PlanRecord {
                point_index: i,
                candidates,
                scores: Some(scores),
                mean_scores,
                selection: Some(selection),
                failure: None,
            })
        };
        let (plans, err) = take_prefix(fan_out(n, cfg.jobs, plan_one));
        trace.plans = plans;
        sink.write_stage(TRACE_PLANS_FILE, &trace.plans)?;
        if let Some(e) = err {
            return Err(e);
        }
    }

    let respond_one = |i: usize| -> Result<RebuttalUnit> {
        let paragraphs = context_paragraphs(i)?;
        let perspective = trace.plans.get(i).and_then(|p| p.chosen());
        respond_point(&trace.points[i], &paragraphs, perspective, &chat)
    };
    let (units, err) = take_prefix(fan_out(n, cfg.jobs, respond_one));
    trace.units = units;
    sink.write_stage(TRACE_UNITS_FILE, &trace.units)?;
    if let Some(e) = err {
        return Err(e);
    }

    let rebuttal = merge(&trace.units, &trace.points, &review.id)?;
    sink.write_rebuttal(&rebuttal)?;
    Ok((rebuttal, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Paragraph;
    use crate::providers::mock::{InstrumentedChat, InstrumentedEmbed, MockChat, MockEmbed, Role};

    fn test_paper(paragraphs: usize) -> Paper {
        let paras = (0..paragraphs)
            .map(|i| Paragraph::new(i, format!("Paragraph {i} explains method detail {i}.")))
            .collect();
        Paper::new("p1", "A Study", paras).unwrap()
    }

    fn test_review() -> Review {
        Review::new(
            "r1",
            "p1",
            "The evaluation is too narrow. The method lacks novelty. Important baselines are missing.",
        )
        .unwrap()
    }

    fn mock_planner(dim: usize) -> PlannerModel {
        PlannerModel::new(dim, &[8, 4], 7, "mock-9")
    }

    #[test]
    fn config_defaults_and_toml_round_trip() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.k, 15);
        assert_eq!(cfg.threshold, 0.8);
        assert_eq!(cfg.max_candidates, 5);
        assert_eq!(cfg.mode, Mode::Drpg);
        cfg.validate().unwrap();

        let text = "mode = \"drpg-c\"\nk = 3\n\n[executor]\ntemperature = 0.5\nmodel = \"big\"\n";
        let parsed = PipelineConfig::from_toml_str(text).unwrap();
        assert_eq!(parsed.mode, Mode::DrpgC);
        assert_eq!(parsed.k, 3);
        assert_eq!(parsed.executor.temperature, 0.5);
        assert_eq!(parsed.executor.model, "big");
        assert_eq!(parsed.threshold, 0.8);

        assert!(PipelineConfig::from_toml_str("k = 0").is_err());
        assert!(PipelineConfig::from_toml_str("threshold = 1.5").is_err());
        assert!(PipelineConfig::from_toml_str("unknown_key = 1").is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in Mode::ALL {
            assert_eq!(mode.as_str().parse::<Mode>().unwrap(), mode);
            let json = serde_json::to_string(&mode).unwrap();
            assert_eq!(json, format!("\"{mode}\""));
        }
        assert!("deep".parse::<Mode>().is_err());
    }

    #[test]
    fn direct_mode_uses_only_the_whole_review_executor() {
        let chat = InstrumentedChat::new(MockChat::new(9));
        let embed = InstrumentedEmbed::new(MockEmbed::new(16, 9));
        let cfg = PipelineConfig::default().with_mode(Mode::Direct);
        let (rebuttal, trace) =
            run(&test_paper(4), &test_review(), &cfg, &chat, &embed, None, None).unwrap();
        assert_eq!(rebuttal.units.len(), 1);
        assert!(trace.points.is_empty());
        assert!(trace.contexts.is_empty());
        assert!(trace.plans.is_empty());
        assert_eq!(embed.batch_calls(), 0);
        assert_eq!(chat.count(Role::ExecutorWhole), 1);
        assert_eq!(chat.count(Role::Decomposer), 0);
        assert_eq!(chat.count(Role::Proposer), 0);
        assert!(trace.perspective_usage().is_err());
    }

    #[test]
    fn decomp_mode_gives_every_point_the_full_paper() {
        let chat = InstrumentedChat::new(MockChat::new(9));
        let embed = InstrumentedEmbed::new(MockEmbed::new(16, 9));
        let cfg = PipelineConfig::default().with_mode(Mode::Decomp);
        let paper = test_paper(4);
        let (rebuttal, trace) =
            run(&paper, &test_review(), &cfg, &chat, &embed, None, None).unwrap();
        assert_eq!(rebuttal.units.len(), trace.points.len());
        assert!(trace.points.len() > 1);
        assert!(trace.contexts.is_empty());
        assert!(trace.plans.is_empty());
        assert_eq!(embed.batch_calls(), 0);
        for unit in &rebuttal.units {
            assert_eq!(unit.context_indices, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn drg_mode_retrieves_k_paragraphs_and_skips_planning() {
        let chat = InstrumentedChat::new(MockChat::new(9));
        let embed = InstrumentedEmbed::new(MockEmbed::new(16, 9));
        let cfg = PipelineConfig {
            k: 2,
            ..PipelineConfig::default().with_mode(Mode::Drg)
        };
        let (rebuttal, trace) =
            run(&test_paper(5), &test_review(), &cfg, &chat, &embed, None, None).unwrap();
        assert_eq!(trace.contexts.len(), trace.points.len());
        for (ctx, unit) in trace.contexts.iter().zip(&rebuttal.units) {
            assert_eq!(ctx.paragraph_indices.len(), 2);
            assert_eq!(unit.context_indices, ctx.paragraph_indices);
        }
        assert!(trace.plans.is_empty());
        assert_eq!(chat.count(Role::Proposer), 0);
        assert!(embed.batch_calls() > 0);
    }

    #[test]
    fn drpg_mode_plans_every_point() {
        let chat = InstrumentedChat::new(MockChat::new(9));
        let embed = InstrumentedEmbed::new(MockEmbed::new(16, 9));
        let cfg = PipelineConfig {
            k: 3,
            ..PipelineConfig::default()
        };
        let model = mock_planner(16);
        let (rebuttal, trace) = run(
            &test_paper(6),
            &test_review(),
            &cfg,
            &chat,
            &embed,
            Some(&model),
            None,
        )
        .unwrap();
        assert_eq!(trace.plans.len(), trace.points.len());
        assert_eq!(chat.count(Role::Proposer), trace.points.len());
        for plan in &trace.plans {
            assert!(plan.failure.is_none());
            assert!(!plan.candidates.is_empty());
            let sel = plan.selection.as_ref().unwrap();
            assert_eq!(sel.all_scores.len(), plan.candidates.len());
            let (rows, cols) = plan.scores.as_ref().unwrap().shape();
            assert_eq!(rows, plan.candidates.len());
            assert_eq!(cols, 3);
        }
        let usage = trace.perspective_usage().unwrap();
        assert!((0.0..=1.0).contains(&usage));
        for (unit, plan) in rebuttal.units.iter().zip(&trace.plans) {
            assert_eq!(unit.perspective_used.as_ref(), plan.chosen());
        }
    }

    #[test]
    fn kind_restricted_modes_only_score_that_kind() {
        for (mode, kind) in [
            (Mode::DrpgC, PerspectiveKind::Clarification),
            (Mode::DrpgJ, PerspectiveKind::Justification),
        ] {
            let chat = MockChat::new(9);
            let embed = MockEmbed::new(16, 9);
            let cfg = PipelineConfig {
                k: 3,
                ..PipelineConfig::default().with_mode(mode)
            };
            let model = mock_planner(16);
            let (_, trace) = run(
                &test_paper(6),
                &test_review(),
                &cfg,
                &chat,
                &embed,
                Some(&model),
                None,
            )
            .unwrap();
            for plan in &trace.plans {
                assert!(plan.candidates.iter().all(|c| c.kind == kind));
            }
        }
    }

    #[test]
    fn planner_mode_without_model_is_rejected() {
        let err = run(
            &test_paper(3),
            &test_review(),
            &PipelineConfig::default(),
            &MockChat::new(1),
            &MockEmbed::new(16, 1),
            None,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));

        let wrong_dim = mock_planner(8);
        let err = run(
            &test_paper(3),
            &test_review(),
            &PipelineConfig::default(),
            &MockChat::new(1),
            &MockEmbed::new(16, 1),
            Some(&wrong_dim),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn mismatched_review_and_index_are_rejected() {
        let paper = test_paper(3);
        let review = Review::new("r1", "other-paper", "Some complaint.").unwrap();
        let err = run(
            &paper,
            &review,
            &PipelineConfig::default().with_mode(Mode::Direct),
            &MockChat::new(1),
            &MockEmbed::new(16, 1),
            None,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));

        let embed = MockEmbed::new(16, 1);
        let other = test_paper(2);
        let mut other = other;
        other.id = "p2".into();
        let index = build_index(&other, &embed).unwrap();
        let err = run_with_index(
            &paper,
            &test_review(),
            &PipelineConfig::default().with_mode(Mode::Drg),
            &MockChat::new(1),
            &embed,
            None,
            Some(&index),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn trace_round_trips_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let chat = MockChat::new(42);
        let embed = MockEmbed::new(16, 42);
        let cfg = PipelineConfig {
            k: 2,
            ..PipelineConfig::default()
        };
        let model = mock_planner(16);
        let (rebuttal, trace) = run(
            &test_paper(5),
            &test_review(),
            &cfg,
            &chat,
            &embed,
            Some(&model),
            Some(dir.path()),
        )
        .unwrap();
        let loaded = RunTrace::load(dir.path()).unwrap();
        assert_eq!(loaded, trace);
        let on_disk: Rebuttal = load_artifact(dir.path().join(TRACE_REBUTTAL_FILE)).unwrap();
        assert_eq!(on_disk, rebuttal);
        let text = std::fs::read_to_string(dir.path().join(TRACE_REBUTTAL_TEXT_FILE)).unwrap();
        assert_eq!(text.trim_end(), rebuttal.merged_text);
    }

    #[test]
    fn identical_seeds_give_byte_identical_traces() {
        let mut dirs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let chat = MockChat::new(42);
            let embed = MockEmbed::new(16, 42);
            let model = mock_planner(16);
            let cfg = PipelineConfig {
                k: 2,
                jobs: 3,
                ..PipelineConfig::default()
            };
            run(
                &test_paper(5),
                &test_review(),
                &cfg,
                &chat,
                &embed,
                Some(&model),
                Some(dir.path()),
            )
            .unwrap();
            dirs.push(dir);
        }
        for name in [
            TRACE_CONFIG_FILE,
            TRACE_POINTS_FILE,
            TRACE_CONTEXTS_FILE,
            TRACE_PLANS_FILE,
            TRACE_UNITS_FILE,
            TRACE_REBUTTAL_FILE,
            TRACE_REBUTTAL_TEXT_FILE,
        ] {
            let a = std::fs::read(dirs[0].path().join(name)).unwrap();
            let b = std::fs::read(dirs[1].path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }

    #[test]
    fn failed_stage_leaves_completed_prefix_on_disk() {
        use crate::providers::mock::ScriptedChat;
        let dir = tempfile::tempdir().unwrap();
        // Decomposer succeeds, first executor call fails.
        let mock = MockChat::new(9);
        let decomposer_reply = mock
            .generate(&GenerationRequest::new(
                crate::prompts::DECOMPOSER_SYSTEM,
                &test_review().text,
            ))
            .unwrap();
        let chat = ScriptedChat::new(vec![
            Ok(decomposer_reply),
            Err(Error::provider("backend down")),
        ]);
        let cfg = PipelineConfig {
            jobs: 1,
            ..PipelineConfig::default().with_mode(Mode::Decomp)
        };
        let err = run(
            &test_paper(3),
            &test_review(),
            &cfg,
            &chat,
            &MockEmbed::new(16, 9),
            None,
            Some(dir.path()),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Provider { .. }));
        let partial = RunTrace::load(dir.path()).unwrap();
        assert!(!partial.points.is_empty());
        assert!(partial.units.is_empty());
        assert!(!dir.path().join(TRACE_REBUTTAL_FILE).exists());
    }

    #[test]
    fn proposer_parse_failure_becomes_recorded_fallback() {
        use crate::providers::mock::ScriptedChat;
        let mock = MockChat::new(9);
        let review = Review::new("r1", "p1", "Only one concern here.").unwrap();
        let decomposer_reply = mock
            .generate(&GenerationRequest::new(
                crate::prompts::DECOMPOSER_SYSTEM,
                &review.text,
            ))
            .unwrap();
        // Proposer emits prose with no tagged entries, then the executor
        // answers normally.
        let chat = ScriptedChat::new(vec![
            Ok(decomposer_reply),
            Ok("I cannot propose perspectives for this.".into()),
            Ok("We thank the reviewer and clarify the setup.".into()),
        ]);
        let cfg = PipelineConfig {
            k: 2,
            jobs: 1,
            ..PipelineConfig::default()
        };
        let model = mock_planner(16);
        let (rebuttal, trace) = run(
            &test_paper(4),
            &review,
            &cfg,
            &chat,
            &MockEmbed::new(16, 9),
            Some(&model),
            None,
        )
        .unwrap();
        assert_eq!(trace.plans.len(), 1);
        let plan = &trace.plans[0];
        assert!(plan.failure.as_deref().unwrap().contains("parse failure"));
        assert!(plan.selection.is_none());
        assert!(!plan.used_perspective());
        assert_eq!(trace.perspective_usage().unwrap(), 0.0);
        assert!(rebuttal.units[0].perspective_used.is_none());
    }

    #[test]
    fn fan_out_preserves_order_and_reports_first_failure() {
        let results = fan_out(20, 4, |i| {
            std::thread::sleep(std::time::Duration::from_micros((20 - i as u64) * 10));
            Ok::<usize, Error>(i * i)
        });
        let values: Vec<usize> = results.into_iter().map(|r| r.unwrap()).collect();
        assert_eq!(values, (0..20).map(|i| i * i).collect::<Vec<_>>());

        let results = fan_out(10, 3, |i| {
            if i == 4 {
                Err(Error::provider("boom"))
            } else {
                Ok(i)
            }
        });
        let (prefix, err) = take_prefix(results);
        assert_eq!(prefix, vec![0, 1, 2, 3]);
        assert!(matches!(err, Some(Error::Provider { .. })));
    }

    #[test]
    fn role_config_reaches_provider_requests() {
        use crate::providers::mock::RecordingChat;
        let chat = RecordingChat::new(MockChat::new(9));
        let cfg = PipelineConfig {
            executor: RoleConfig {
                temperature: 0.7,
                model: "writer".into(),
            },
            decomposer: RoleConfig {
                temperature: 0.1,
                model: "splitter".into(),
            },
            ..PipelineConfig::default().with_mode(Mode::Decomp)
        };
        run(
            &test_paper(3),
            &test_review(),
            &cfg,
            &chat,
            &MockEmbed::new(16, 9),
            None,
            None,
        )
        .unwrap();
        let requests = chat.requests();
        let decomposer_reqs: Vec<_> = requests
            .iter()
            .filter(|r| classify(r) == Role::Decomposer)
            .collect();
        let executor_reqs: Vec<_> = requests
            .iter()
            .filter(|r| classify(r) == Role::ExecutorPoint)
            .collect();
        assert_eq!(decomposer_reqs.len(), 1);
        assert_eq!(decomposer_reqs[0].model_name, "splitter");
        assert_eq!(decomposer_reqs[0].temperature, 0.1);
        assert!(!executor_reqs.is_empty());
        for req in executor_reqs {
            assert_eq!(req.model_name, "writer");
            assert_eq!(req.temperature, 0.7);
        }
    }

    fn classify(req: &GenerationRequest) -> Role {
        crate::providers::mock::classify_role(&req.system_prompt)
    }

    #[test]
    fn zero_scorer_falls_back_everywhere() {
        let chat = MockChat::new(9);
        let embed = MockEmbed::new(16, 9);
        let model = PlannerModel::zeros(16, &[4], "mock-9");
        let cfg = PipelineConfig {
            k: 2,
            ..PipelineConfig::default()
        };
        let (rebuttal, trace) = run(
            &test_paper(5),
            &test_review(),
            &cfg,
            &chat,
            &embed,
            Some(&model),
            None,
        )
        .unwrap();
        assert_eq!(trace.perspective_usage().unwrap(), 0.0);
        for plan in &trace.plans {
            let sel = plan.selection.as_ref().unwrap();
            assert!(sel.fell_back);
            assert!((sel.confidence - 1.0 / plan.candidates.len() as f64).abs() < 1e-12);
        }
        for unit in &rebuttal.units {
            assert!(unit.perspective_used.is_none());
        }
    }
}
