//! Command-line front end: one subcommand per workflow. Every command
//! runs against a provider backend selected by the global `--provider`
//! flag; the default deterministic mock backend makes re-runs with the
//! same inputs byte-identical.
//!
//! Errors print one line, `error[CODE]: message`, and map to stable
//! exit codes (see [`crate::error::Error::exit_code`]).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};

use crate::corpus::{
    load_artifact, load_records, persist_artifact, persist_records, recover_initial_score,
    segment_paper, Paper, Rebuttal, Review, SegmentationPolicy,
};
use crate::dialogue::{render_trajectory, simulate_rounds, DEFAULT_ROUNDS};
use crate::error::{Error, Result};
use crate::evaluation::{build_report, compare, judge, ComparisonRecord, JudgeRecord};
use crate::pipeline::{run as run_pipeline, Mode, PipelineConfig, PlanRecord, RunTrace};
use crate::planner::{prepare_samples, train, PlannerModel, TrainConfig, TrainingSampleRecord};
use crate::providers::mock::{MockChat, MockEmbed};
use crate::providers::remote::RemoteProvider;
use crate::providers::{ChatProvider, EmbedProvider, Limited, ProviderConfig, RetryPolicy};
use crate::retriever::RetrievedContext;

#[derive(Parser)]
#[command(
    name = "rebuttal",
    version,
    about = "Generate point-by-point paper rebuttals, train the perspective scorer, and evaluate systems"
)]
struct Cli {
    /// Provider backend: "mock:SEED" or "mock:SEED:DIM" for the
    /// deterministic offline stack (DIM defaults to 64), or
    /// "remote:CONFIG.toml" for an HTTP backend.
    #[arg(long, global = true, default_value = "mock:0")]
    provider: String,

    /// Concurrency width for per-point stages; overrides the config.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a rebuttal for one review and write it with a full
    /// stage-by-stage trace.
    Rebut {
        /// Paper file: structured JSON, or raw text to be segmented.
        #[arg(long)]
        paper: PathBuf,
        /// Review file: structured JSON, or raw text.
        #[arg(long)]
        review: PathBuf,
        /// Pipeline mode; overrides the config file.
        #[arg(long, value_parser = Mode::from_str)]
        mode: Option<Mode>,
        /// Pipeline config (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the rebuttal and its run trace.
        #[arg(long)]
        out: PathBuf,
        /// Perspective scorer checkpoint; an untrained seeded scorer is
        /// used when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train the perspective scorer on ingested samples and write a
    /// checkpoint plus a metrics file.
    TrainPlanner {
        /// Training samples (JSONL).
        #[arg(long)]
        samples: PathBuf,
        /// Training config (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Held-out samples (JSONL) for accuracy reporting.
        #[arg(long)]
        eval_samples: Option<PathBuf>,
        /// Hidden layer widths, comma separated.
        #[arg(long, default_value = "256,128,64")]
        hidden: String,
        /// Weight initialization seed.
        #[arg(long, default_value_t = 0)]
        model_seed: u64,
    },
    /// Print the scored perspective matrix behind one point's plan.
    PlanExplain {
        /// Run trace directory written by `rebut`.
        #[arg(long)]
        trace: PathBuf,
        /// Review point index.
        #[arg(long)]
        point: usize,
    },
    /// Evaluation operations over rebuttal artifacts.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Simulate multi-round reviewer-author discussion.
    Simulate {
        /// Paper file: structured JSON, or raw text to be segmented.
        #[arg(long)]
        paper: PathBuf,
        /// Review file: structured JSON, or raw text.
        #[arg(long)]
        review: PathBuf,
        /// Number of discussion rounds.
        #[arg(long, default_value_t = DEFAULT_ROUNDS)]
        rounds: usize,
        /// Pipeline mode; overrides the config file.
        #[arg(long, value_parser = Mode::from_str)]
        mode: Option<Mode>,
        /// Pipeline config (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Perspective scorer checkpoint; an untrained seeded scorer is
        /// used when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Directory for the transcript, score series, and round traces.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dataset preparation utilities.
    #[command(subcommand)]
    Ingest(IngestCommand),
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Run one pairwise comparison game and print the record as JSON.
    Compare {
        /// Review file (JSON).
        #[arg(long)]
        review: PathBuf,
        /// First system's rebuttal (JSON).
        #[arg(long)]
        a: PathBuf,
        /// Second system's rebuttal (JSON).
        #[arg(long)]
        b: PathBuf,
        /// System name for side A; defaults to the file stem.
        #[arg(long)]
        name_a: Option<String>,
        /// System name for side B; defaults to the file stem.
        #[arg(long)]
        name_b: Option<String>,
    },
    /// Fit ratings from comparison records and print the report table.
    Elo {
        /// Comparison records (JSONL).
        #[arg(long)]
        records: PathBuf,
        /// Judge records (JSONL) for the mean-score column.
        #[arg(long)]
        judge_records: Option<PathBuf>,
        /// Write the machine-readable report here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-score a rebuttal with the reviewer judge and print the record.
    Judge {
        /// Review file (JSON).
        #[arg(long)]
        review: PathBuf,
        /// Rebuttal file (JSON).
        #[arg(long)]
        rebuttal: PathBuf,
        /// The reviewer's pre-rebuttal score (1-10).
        #[arg(long)]
        score: i64,
        /// System name; defaults to the rebuttal file stem.
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Subcommand)]
enum IngestCommand {
    /// Fill in missing initial review scores from discussion text and
    /// the known final score.
    RecoverScores {
        /// Review records (JSONL); text holds the discussion.
        #[arg(long)]
        records: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Chat and embedding providers plus the seed that drives any
/// order-randomization a command performs.
struct Backend {
    chat: Box<dyn ChatProvider>,
    embed: Box<dyn EmbedProvider>,
    seed: u64,
}

const DEFAULT_MOCK_DIM: usize = 64;

#[derive(serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RemoteSpec {
    #[serde(flatten)]
    provider: ProviderConfig,
    embed_model: String,
    embed_dim: usize,
}

impl Default for RemoteSpec {
    fn default() -> Self {
        RemoteSpec {
            provider: ProviderConfig::default(),
            embed_model: "embedding".to_string(),
            embed_dim: 1024,
        }
    }
}

fn parse_provider(spec: &str) -> Result<Backend> {
    if let Some(rest) = spec.strip_prefix("mock:") {
        let mut parts = rest.split(':');
        let seed: u64 = parts
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Config(format!("bad mock seed in provider {spec:?}")))?;
        let dim = match parts.next() {
            Some(d) => d
                .parse()
                .ok()
                .filter(|d| *d > 0)
                .ok_or_else(|| Error::Config(format!("bad mock dim in provider {spec:?}")))?,
            None => DEFAULT_MOCK_DIM,
        };
        if parts.next().is_some() {
            return Err(Error::Config(format!(
                "provider {spec:?} has trailing components; expected mock:SEED[:DIM]"
            )));
        }
        return Ok(Backend {
            chat: Box::new(MockChat::new(seed)),
            embed: Box::new(MockEmbed::new(dim, seed)),
            seed,
        });
    }
    if let Some(path) = spec.strip_prefix("remote:") {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(PathBuf::from(path), e))?;
        let remote: RemoteSpec = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("provider config parse: {e}")))?;
        let retry = RetryPolicy {
            retry_limit: remote.provider.retry_limit,
            ..RetryPolicy::default()
        };
        let width = remote.provider.max_concurrent;
        let chat =
            RemoteProvider::new(remote.provider.clone(), &remote.embed_model, remote.embed_dim)?;
        let embed =
            RemoteProvider::new(remote.provider.clone(), &remote.embed_model, remote.embed_dim)?;
        return Ok(Backend {
            chat: Box::new(Limited::new(chat, width, retry.clone())),
            embed: Box::new(Limited::new(embed, width, retry)),
            seed: 0,
        });
    }
    Err(Error::Config(format!(
        "unknown provider {spec:?}; expected mock:SEED[:DIM] or remote:CONFIG_FILE"
    )))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unnamed".to_string())
}

fn is_structured(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("json" | "jsonl")
    )
}

/// Loads a paper from structured JSON, or segments raw text into
/// paragraphs with the file stem as id and title.
fn load_paper(path: &Path) -> Result<Paper> {
    if is_structured(path) {
        return load_artifact(path);
    }
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = file_stem(path);
    segment_paper(&stem, &stem, &raw, &SegmentationPolicy::default())
}

/// Loads a review from structured JSON, or wraps raw text as a review
/// of `paper_id` with the file stem as id.
fn load_review(path: &Path, paper_id: &str) -> Result<Review> {
    if is_structured(path) {
        return load_artifact(path);
    }
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Review::new(file_stem(path), paper_id, raw.trim())
}

fn load_pipeline_config(
    path: Option<&Path>,
    mode: Option<Mode>,
    jobs: Option<usize>,
) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Loads the scorer checkpoint, or builds an untrained seeded scorer
/// matching the embedding dimension when no checkpoint is given.
fn load_or_init_model(
    path: Option<&Path>,
    cfg: &PipelineConfig,
    embed: &dyn EmbedProvider,
) -> Result<Option<PlannerModel>> {
    if !cfg.mode.uses_planner() {
        return Ok(None);
    }
    let model = match path {
        Some(p) => {
            let model = PlannerModel::load(p)?;
            if model.encoder_name() != embed.name() {
                log::warn!(
                    "checkpoint was trained on encoder {:?}, provider embeds with {:?}",
                    model.encoder_name(),
                    embed.name()
                );
            }
            model
        }
        None => {
            log::warn!("no scorer checkpoint given; using an untrained seeded scorer");
            PlannerModel::new(embed.dim(), &[64, 32], cfg.seed, &embed.name())
        }
    };
    Ok(Some(model))
}

fn parse_hidden(text: &str) -> Result<Vec<usize>> {
    let dims: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad hidden layer list {text:?}")))?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Config(format!("bad hidden layer list {text:?}")));
    }
    Ok(dims)
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::Config(format!("serialization: {e}")))
}

/// Parses argv and runs the selected command, returning the process
/// exit code. Errors are printed as one `error[CODE]: message` line.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init()
        .ok();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let backend = parse_provider(&cli.provider)?;
    match cli.command {
        Command::Rebut {
            paper,
            review,
            mode,
            config,
            out,
            model,
        } => cmd_rebut(&backend, &paper, &review, mode, config.as_deref(), &out, model.as_deref(), cli.jobs),
        Command::TrainPlanner {
            samples,
            config,
            out,
            eval_samples,
            hidden,
            model_seed,
        } => cmd_train_planner(
            &backend,
            &samples,
            config.as_deref(),
            &out,
            eval_samples.as_deref(),
            &hidden,
            model_seed,
        ),
        Command::PlanExplain { trace, point } => cmd_plan_explain(&trace, point),
        Command::Eval(eval) => match eval {
            EvalCommand::Compare {
                review,
                a,
                b,
                name_a,
                name_b,
            } => cmd_eval_compare(&backend, &review, &a, &b, name_a, name_b),
            EvalCommand::Elo {
                records,
                judge_records,
                out,
            } => cmd_eval_elo(&records, judge_records.as_deref(), out.as_deref()),
            EvalCommand::Judge {
                review,
                rebuttal,
                score,
                name,
            } => cmd_eval_judge(&backend, &review, &rebuttal, score, name),
        },
        Command::Simulate {
            paper,
            review,
            rounds,
            mode,
            config,
            model,
            out,
        } => cmd_simulate(
            &backend,
            &paper,
            &review,
            rounds,
            mode,
            config.as_deref(),
            model.as_deref(),
            out.as_deref(),
            cli.jobs,
        ),
        Command::Ingest(IngestCommand::RecoverScores { records, out }) => {
            cmd_recover_scores(&backend, &records, out.as_deref())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_rebut(
    backend: &Backend,
    paper_path: &Path,
    review_path: &Path,
    mode: Option<Mode>,
    config: Option<&Path>,
    out: &Path,
    model_path: Option<&Path>,
    jobs: Option<usize>,
) -> Result<()> {
    let cfg = load_pipeline_config(config, mode, jobs)?;
    let paper = load_paper(paper_path)?;
    let review = load_review(review_path, &paper.id)?;
    let model = load_or_init_model(model_path, &cfg, backend.embed.as_ref())?;
    let (rebuttal, trace) = run_pipeline(
        &paper,
        &review,
        &cfg,
        backend.chat.as_ref(),
        backend.embed.as_ref(),
        model.as_ref(),
        Some(out),
    )?;
    println!(
        "mode {}: {} unit(s) for review {}",
        cfg.mode,
        rebuttal.units.len(),
        review.id
    );
    if cfg.mode.uses_planner() {
        println!("perspective usage: {:.2}", trace.perspective_usage()?);
    }
    println!("wrote {}", out.join("rebuttal.json").display());
    Ok(())
}

fn cmd_train_planner(
    backend: &Backend,
    samples: &Path,
    config: Option<&Path>,
    out: &Path,
    eval_samples: Option<&Path>,
    hidden: &str,
    model_seed: u64,
) -> Result<()> {
    let cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<TrainConfig>(&text)
                .map_err(|e| Error::Config(format!("config parse: {e}")))?
        }
        None => TrainConfig::default(),
    };
    let hidden = parse_hidden(hidden)?;
    let records: Vec<TrainingSampleRecord> = load_records(samples)?;
    let prepared = prepare_samples(&records, backend.embed.as_ref())?;
    let eval = match eval_samples {
        Some(p) => {
            let records: Vec<TrainingSampleRecord> = load_records(p)?;
            Some(prepare_samples(&records, backend.embed.as_ref())?)
        }
        None => None,
    };
    let mut model = PlannerModel::new(
        backend.embed.dim(),
        &hidden,
        model_seed,
        &backend.embed.name(),
    );
    let report = train(&mut model, &prepared, eval.as_deref(), &cfg)?;
    model.save(out)?;
    let metrics_path = out.with_extension("metrics.json");
    persist_artifact(&report, &metrics_path)?;
    println!("trained on {} sample(s), {} step(s)", prepared.len(), report.steps);
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        println!("epoch {}: mean loss {loss:.6}", i + 1);
    }
    if let Some(acc) = report.eval_accuracy {
        println!("held-out selection accuracy: {acc:.3}");
    }
    println!("wrote {} and {}", out.display(), metrics_path.display());
    Ok(())
}

/// Lays out one plan as a text matrix: candidates as rows, retrieved
/// paragraphs as columns, sigmoid scores in the cells with values under
/// the display cutoff masked to ".".
fn render_plan(
    point_text: &str,
    plan: &PlanRecord,
    context: Option<&RetrievedContext>,
    threshold: f64,
) -> String {
    let mut out = format!("point {}: {}\n", plan.point_index, point_text);
    if let Some(failure) = &plan.failure {
        out.push_str(&format!("no plan was scored: {failure}\n"));
        return out;
    }
    let columns: Vec<String> = match context {
        Some(c) => c.paragraph_indices.iter().map(|i| format!("p{i}")).collect(),
        None => (0..plan
            .scores
            .as_ref()
            .map_or(0, |s| s.shape().1))
            .map(|i| format!("c{i}"))
            .collect(),
    };
    out.push_str("scores are sigmoid activations; '.' marks masked cells below 0.20\n\n");
    let head: Vec<String> = columns.iter().map(|c| format!("{c:>6}")).collect();
    out.push_str(&format!("    # {}  {:>7}\n", head.join(" "), "mean"));
    if let Some(scores) = &plan.scores {
        for (i, row) in scores.sigmoid.iter().enumerate() {
            let marker = if plan
                .selection
                .as_ref()
                .is_some_and(|s| !s.fell_back && crate::planner::argmax(&s.all_scores) == i)
            {
                '>'
            } else {
                ' '
            };
            let cells: Vec<String> = row
                .iter()
                .zip(&scores.mask[i])
                .map(|(v, keep)| {
                    if *keep {
                        format!("{v:>6.2}")
                    } else {
                        format!("{:>6}", ".")
                    }
                })
                .collect();
            out.push_str(&format!(
                "{marker} {i:>3} {}  {:>7.3}\n",
                cells.join(" "),
                plan.mean_scores[i]
            ));
        }
    }
    out.push('\n');
    for (i, cand) in plan.candidates.iter().enumerate() {
        out.push_str(&format!("  {i:>3} {}\n", cand.text));
    }
    if let Some(sel) = &plan.selection {
        let outcome = match &sel.chosen {
            Some(c) => format!("kept: {}", c.text),
            None => "fell back to no perspective".to_string(),
        };
        out.push_str(&format!(
            "\nconfidence {:.3} against threshold {threshold:.2}; {outcome}\n",
            sel.confidence
        ));
    }
    out
}

fn cmd_plan_explain(trace_dir: &Path, point: usize) -> Result<()> {
    let trace = RunTrace::load(trace_dir)?;
    if !trace.config.mode.uses_planner() {
        return Err(Error::WrongMode(format!(
            "trace was recorded in mode {}, which plans no perspectives",
            trace.config.mode
        )));
    }
    let plan = trace
        .plans
        .iter()
        .find(|p| p.point_index == point)
        .ok_or(Error::IndexOutOfRange {
            index: point,
            len: trace.plans.len(),
        })?;
    let point_text = trace
        .points
        .iter()
        .find(|p| p.index == point)
        .map(|p| p.text.as_str())
        .unwrap_or("(point text not in trace)");
    let context = trace.contexts.iter().find(|c| c.point_index == point);
    print!(
        "{}",
        render_plan(point_text, plan, context, trace.config.threshold)
    );
    Ok(())
}

fn cmd_eval_compare(
    backend: &Backend,
    review_path: &Path,
    a_path: &Path,
    b_path: &Path,
    name_a: Option<String>,
    name_b: Option<String>,
) -> Result<()> {
    use rand::SeedableRng;
    let review: Review = load_artifact(review_path)?;
    let a: Rebuttal = load_artifact(a_path)?;
    let b: Rebuttal = load_artifact(b_path)?;
    let name_a = name_a.unwrap_or_else(|| file_stem(a_path));
    let name_b = name_b.unwrap_or_else(|| file_stem(b_path));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(backend.seed);
    let record = compare(
        &review,
        &name_a,
        &a,
        &name_b,
        &b,
        backend.chat.as_ref(),
        &mut rng,
    )?;
    println!("{}", to_json(&record)?);
    Ok(())
}

fn cmd_eval_elo(
    records_path: &Path,
    judge_records: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let comparisons: Vec<ComparisonRecord> = load_records(records_path)?;
    let judges: Vec<JudgeRecord> = match judge_records {
        Some(p) => load_records(p)?,
        None => Vec::new(),
    };
    let report = build_report(&comparisons, &judges)?;
    print!("{}", report.render());
    if let [a, b] = report.matrix.systems.as_slice() {
        println!("gap({a}, {b}) = {:+.2}", report.elo.gap(a, b).unwrap());
    }
    if let Some(path) = out {
        persist_artifact(&report, path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_eval_judge(
    backend: &Backend,
    review_path: &Path,
    rebuttal_path: &Path,
    score: i64,
    name: Option<String>,
) -> Result<()> {
    let review: Review = load_artifact(review_path)?;
    let rebuttal: Rebuttal = load_artifact(rebuttal_path)?;
    let system = name.unwrap_or_else(|| file_stem(rebuttal_path));
    let record = judge(&review, &system, &rebuttal, score, backend.chat.as_ref())?;
    println!("{}", to_json(&record)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    backend: &Backend,
    paper_path: &Path,
    review_path: &Path,
    rounds: usize,
    mode: Option<Mode>,
    config: Option<&Path>,
    model_path: Option<&Path>,
    out: Option<&Path>,
    jobs: Option<usize>,
) -> Result<()> {
    let cfg = load_pipeline_config(config, mode, jobs)?;
    let paper = load_paper(paper_path)?;
    let review = load_review(review_path, &paper.id)?;
    let model = load_or_init_model(model_path, &cfg, backend.embed.as_ref())?;
    let transcript = simulate_rounds(
        &paper,
        &review,
        &cfg,
        rounds,
        backend.chat.as_ref(),
        backend.embed.as_ref(),
        model.as_ref(),
        out,
    )?;
    print!("{}", render_trajectory(&transcript));
    if let Some(dir) = out {
        println!("wrote {}", dir.join(crate::dialogue::TRANSCRIPT_FILE).display());
    }
    Ok(())
}

fn cmd_recover_scores(backend: &Backend, records_path: &Path, out: Option<&Path>) -> Result<()> {
    let reviews: Vec<Review> = load_records(records_path)?;
    let mut updated = Vec::with_capacity(reviews.len());
    let mut recovered = 0usize;
    let mut kept = 0usize;
    for mut review in reviews {
        if review.initial_score.is_some() {
            kept += 1;
        } else {
            let final_score = review.final_score.ok_or_else(|| {
                Error::Config(format!(
                    "review {} has neither initial_score nor final_score",
                    review.id
                ))
            })?;
            let score =
                recover_initial_score(&review.text, final_score, backend.chat.as_ref())?;
            review.initial_score = Some(score);
            review.validate()?;
            recovered += 1;
        }
        updated.push(review);
    }
    match out {
        Some(path) => {
            persist_records(&updated, path)?;
            println!(
                "recovered {recovered} score(s), kept {kept} existing; wrote {}",
                path.display()
            );
        }
        None => {
            for review in &updated {
                println!("{}", to_json(review)?);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Paragraph;
    use crate::evaluation::Verdict;

    fn args(rest: &[&str]) -> Vec<String> {
        std::iter::once("rebuttal".to_string())
            .chain(rest.iter().map(|s| s.to_string()))
            .collect()
    }

    fn write_fixtures(dir: &Path) -> (PathBuf, PathBuf) {
        let paras = (0..6)
            .map(|i| Paragraph::new(i, format!("Paragraph {i} presents the method details.")))
            .collect();
        let paper = Paper::new("p1", "A Study", paras).unwrap();
        let review = Review::new(
            "r1",
            "p1",
            "The baselines are weak. The ablation is missing.",
        )
        .unwrap();
        let paper_path = dir.join("paper.json");
        let review_path = dir.join("review.json");
        persist_artifact(&paper, &paper_path).unwrap();
        persist_artifact(&review, &review_path).unwrap();
        (paper_path, review_path)
    }

    #[test]
    fn provider_specs_parse() {
        let backend = parse_provider("mock:42").unwrap();
        assert_eq!(backend.seed, 42);
        assert_eq!(backend.embed.dim(), DEFAULT_MOCK_DIM);
        let backend = parse_provider("mock:7:16").unwrap();
        assert_eq!(backend.embed.dim(), 16);
        assert!(parse_provider("mock:x").is_err());
        assert!(parse_provider("mock:1:0").is_err());
        assert!(parse_provider("mock:1:2:3").is_err());
        assert!(parse_provider("local").is_err());
        assert!(parse_provider("remote:/does/not/exist.toml").is_err());
    }

    #[test]
    fn hidden_lists_parse() {
        assert_eq!(parse_hidden("256,128,64").unwrap(), vec![256, 128, 64]);
        assert_eq!(parse_hidden(" 8 , 4 ").unwrap(), vec![8, 4]);
        assert!(parse_hidden("8,,4").is_err());
        assert!(parse_hidden("8,0").is_err());
        assert!(parse_hidden("abc").is_err());
    }

    #[test]
    fn unknown_mode_exits_with_config_code() {
        let dir = tempfile::tempdir().unwrap();
        let (paper, review) = write_fixtures(dir.path());
        let code = run_from(args(&[
            "rebut",
            "--paper",
            paper.to_str().unwrap(),
            "--review",
            review.to_str().unwrap(),
            "--mode",
            "deep",
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ]));
        assert_eq!(code, 2);
    }

    #[test]
    fn help_succeeds() {
        assert_eq!(run_from(args(&["--help"])), 0);
        assert_eq!(run_from(args(&["eval", "--help"])), 0);
    }

    #[test]
    fn rebut_writes_outputs_for_every_mode() {
        let dir = tempfile::tempdir().unwrap();
        let (paper, review) = write_fixtures(dir.path());
        for mode in ["direct", "decomp", "drg", "drpg", "drpg-c", "drpg-j"] {
            let out = dir.path().join(format!("out-{mode}"));
            let code = run_from(args(&[
                "rebut",
                "--provider",
                "mock:42:16",
                "--paper",
                paper.to_str().unwrap(),
                "--review",
                review.to_str().unwrap(),
                "--mode",
                mode,
                "--out",
                out.to_str().unwrap(),
            ]));
            assert_eq!(code, 0, "mode {mode}");
            assert!(out.join("rebuttal.json").exists());
            assert!(out.join("config.json").exists());
        }
    }

    #[test]
    fn rebut_reads_raw_text_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let paper = dir.path().join("study.md");
        let long = "This paragraph carries enough prose to clear the segmentation floor. "
            .repeat(4);
        std::fs::write(&paper, format!("{long}\n\n{long}\n\n{long}")).unwrap();
        let review = dir.path().join("review.txt");
        std::fs::write(&review, "The study lacks a control group.").unwrap();
        let out = dir.path().join("out");
        let code = run_from(args(&[
            "rebut",
            "--provider",
            "mock:1:16",
            "--paper",
            paper.to_str().unwrap(),
            "--review",
            review.to_str().unwrap(),
            "--mode",
            "decomp",
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        let trace = RunTrace::load(&out).unwrap();
        assert_eq!(trace.paper_id, "study");
        assert_eq!(trace.review_id, "review");
    }

    #[test]
    fn plan_explain_renders_the_stored_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let (paper, review) = write_fixtures(dir.path());
        let out = dir.path().join("out");
        assert_eq!(
            run_from(args(&[
                "rebut",
                "--provider",
                "mock:42:16",
                "--paper",
                paper.to_str().unwrap(),
                "--review",
                review.to_str().unwrap(),
                "--mode",
                "drpg",
                "--out",
                out.to_str().unwrap(),
            ])),
            0
        );
        assert_eq!(
            run_from(args(&["plan-explain", "--trace", out.to_str().unwrap(), "--point", "0"])),
            0
        );
        // A point index past the decomposition is a range error (exit 1).
        assert_eq!(
            run_from(args(&["plan-explain", "--trace", out.to_str().unwrap(), "--point", "99"])),
            1
        );

        // Direct traces have no plans to explain: wrong-mode exit 2.
        let direct_out = dir.path().join("out-direct");
        assert_eq!(
            run_from(args(&[
                "rebut",
                "--provider",
                "mock:42:16",
                "--paper",
                paper.to_str().unwrap(),
                "--review",
                review.to_str().unwrap(),
                "--mode",
                "direct",
                "--out",
                direct_out.to_str().unwrap(),
            ])),
            0
        );
        assert_eq!(
            run_from(args(&[
                "plan-explain",
                "--trace",
                direct_out.to_str().unwrap(),
                "--point",
                "0"
            ])),
            2
        );
    }

    #[test]
    fn render_plan_masks_low_scores_and_marks_the_choice() {
        use crate::planner::{
            CandidateSource, PerspectiveCandidate, PerspectiveKind, ScoreMatrix, SelectionOutcome,
        };
        let candidate = |text: &str, kind| PerspectiveCandidate {
            text: text.to_string(),
            kind,
            source: CandidateSource::Proposed,
        };
        let plan = PlanRecord {
            point_index: 1,
            candidates: vec![
                candidate("Clarification: covered in the text.", PerspectiveKind::Clarification),
                candidate("Justification: the choice is sound.", PerspectiveKind::Justification),
            ],
            scores: Some(ScoreMatrix {
                raw: vec![vec![2.0, 0.1], vec![-3.0, -2.0]],
                sigmoid: vec![vec![0.88, 0.52], vec![0.05, 0.12]],
                mask: vec![vec![true, true], vec![false, false]],
            }),
            mean_scores: vec![1.05, -2.5],
            selection: Some(SelectionOutcome {
                chosen: Some(candidate(
                    "Clarification: covered in the text.",
                    PerspectiveKind::Clarification,
                )),
                confidence: 0.97,
                all_scores: vec![1.05, -2.5],
                fell_back: false,
            }),
            failure: None,
        };
        let context = RetrievedContext {
            point_index: 1,
            paragraph_indices: vec![4, 11],
            similarities: vec![0.9, 0.8],
        };
        let text = render_plan("The ablation is missing.", &plan, Some(&context), 0.8);
        assert!(text.contains("point 1: The ablation is missing."));
        assert!(text.contains("p4"));
        assert!(text.contains("p11"));
        assert!(text.contains("0.88"));
        assert!(text.contains('.'), "masked cells render as dots");
        assert!(text.lines().any(|l| l.starts_with("> ")), "choice marker");
        assert!(text.contains("confidence 0.970"));
        assert!(text.contains("kept: Clarification"));

        let fallback = PlanRecord {
            selection: Some(SelectionOutcome {
                chosen: None,
                confidence: 0.4,
                all_scores: vec![1.05, -2.5],
                fell_back: true,
            }),
            ..plan
        };
        let text = render_plan("The ablation is missing.", &fallback, Some(&context), 0.8);
        assert!(text.contains("fell back to no perspective"));
        assert!(!text.lines().any(|l| l.starts_with("> ")));
    }

    #[test]
    fn eval_compare_and_judge_run_on_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let (paper, review) = write_fixtures(dir.path());
        for system in ["alpha", "beta"] {
            let out = dir.path().join(system);
            assert_eq!(
                run_from(args(&[
                    "rebut",
                    "--provider",
                    "mock:42:16",
                    "--paper",
                    paper.to_str().unwrap(),
                    "--review",
                    review.to_str().unwrap(),
                    "--mode",
                    if system == "alpha" { "direct" } else { "decomp" },
                    "--out",
                    out.to_str().unwrap(),
                ])),
                0
            );
        }
        let a = dir.path().join("alpha/rebuttal.json");
        let b = dir.path().join("beta/rebuttal.json");
        let code = run_from(args(&[
            "eval",
            "compare",
            "--provider",
            "mock:3",
            "--review",
            review.to_str().unwrap(),
            "--a",
            a.to_str().unwrap(),
            "--b",
            b.to_str().unwrap(),
            "--name-a",
            "alpha",
            "--name-b",
            "beta",
        ]));
        assert_eq!(code, 0);
        let code = run_from(args(&[
            "eval",
            "judge",
            "--review",
            review.to_str().unwrap(),
            "--rebuttal",
            a.to_str().unwrap(),
            "--score",
            "5",
            "--name",
            "alpha",
        ]));
        assert_eq!(code, 0);
        // Out-of-rubric reference score is a config error.
        let code = run_from(args(&[
            "eval",
            "judge",
            "--review",
            review.to_str().unwrap(),
            "--rebuttal",
            a.to_str().unwrap(),
            "--score",
            "11",
        ]));
        assert_eq!(code, 2);
    }

    #[test]
    fn eval_elo_reports_on_records_file() {
        let dir = tempfile::tempdir().unwrap();
        let record = |verdict| ComparisonRecord {
            review_id: "r1".into(),
            system_a: "a".into(),
            system_b: "b".into(),
            order_swapped: false,
            verdict,
            rationale: String::new(),
            forced_tie: false,
        };
        let mut records: Vec<ComparisonRecord> =
            (0..75).map(|_| record(Verdict::AWins)).collect();
        records.extend((0..25).map(|_| record(Verdict::BWins)));
        let path = dir.path().join("records.jsonl");
        persist_records(&records, &path).unwrap();
        let out = dir.path().join("report.json");
        let code = run_from(args(&[
            "eval",
            "elo",
            "--records",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        let report: crate::evaluation::EvalReport = load_artifact(&out).unwrap();
        let gap = report.elo.gap("a", "b").unwrap();
        assert!((gap - 400.0 * 3.0f64.log10()).abs() < 1e-6);
    }

    #[test]
    fn simulate_writes_transcript() {
        let dir = tempfile::tempdir().unwrap();
        let (paper, review) = write_fixtures(dir.path());
        let out = dir.path().join("discussion");
        let code = run_from(args(&[
            "simulate",
            "--provider",
            "mock:9:16",
            "--paper",
            paper.to_str().unwrap(),
            "--review",
            review.to_str().unwrap(),
            "--rounds",
            "2",
            "--mode",
            "drg",
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        assert!(out.join(crate::dialogue::TRANSCRIPT_FILE).exists());
        assert!(out.join(crate::dialogue::TRAJECTORY_FILE).exists());
    }

    #[test]
    fn recover_scores_fills_missing_initials() {
        let dir = tempfile::tempdir().unwrap();
        let with_final = Review::new("r1", "p1", "Discussion: the reviewer asked, authors answered.")
            .unwrap()
            .with_scores(None, Some(6))
            .unwrap();
        let complete = Review::new("r2", "p1", "Another discussion.")
            .unwrap()
            .with_scores(Some(4), Some(5))
            .unwrap();
        let path = dir.path().join("reviews.jsonl");
        persist_records([&with_final, &complete], &path).unwrap();
        let out = dir.path().join("recovered.jsonl");
        let code = run_from(args(&[
            "ingest",
            "recover-scores",
            "--provider",
            "mock:4",
            "--records",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        let recovered: Vec<Review> = load_records(&out).unwrap();
        assert!(recovered[0].initial_score.is_some());
        assert_eq!(recovered[1].initial_score, Some(4));

        // A record with no final score cannot be recovered.
        let broken = Review::new("r3", "p1", "No scores at all.").unwrap();
        persist_records([&broken], &path).unwrap();
        let code = run_from(args(&[
            "ingest",
            "recover-scores",
            "--records",
            path.to_str().unwrap(),
        ]));
        assert_eq!(code, 2);
    }

    #[test]
    fn train_planner_round_trips_a_checkpoint() {
        use crate::planner::{synthetic_dataset, SyntheticSpec};
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            train_samples: 40,
            eval_samples: 10,
            ..SyntheticSpec::default()
        };
        let (train_recs, eval_recs) = synthetic_dataset(&spec);
        let train_path = dir.path().join("train.jsonl");
        let eval_path = dir.path().join("eval.jsonl");
        persist_records(&train_recs, &train_path).unwrap();
        persist_records(&eval_recs, &eval_path).unwrap();
        let ckpt = dir.path().join("scorer.bin");
        let cfg_path = dir.path().join("train.toml");
        std::fs::write(&cfg_path, "epochs = 1\noptimizer = \"adam\"\n").unwrap();
        let code = run_from(args(&[
            "train-planner",
            "--provider",
            "mock:1234:32",
            "--samples",
            train_path.to_str().unwrap(),
            "--eval-samples",
            eval_path.to_str().unwrap(),
            "--config",
            cfg_path.to_str().unwrap(),
            "--hidden",
            "16,8",
            "--out",
            ckpt.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        let model = PlannerModel::load(&ckpt).unwrap();
        assert_eq!(model.encoder_dim(), 32);
        assert_eq!(model.hidden_dims(), &[16, 8]);
        assert_eq!(model.encoder_name(), "mock-1234");
        assert!(ckpt.with_extension("metrics.json").exists());
    }
}
