//! Rebuttal quality evaluation: pairwise comparison with position-swap
//! debiasing, win-rate matrices, Bradley-Terry rating fits reported on
//! the Elo scale, and simulated reviewer re-scoring with its reward.
//!
//! Ratings use the logistic base-10 model with a 400-point scale: a
//! rating gap d predicts a win probability 1 / (1 + 10^(-d/400)), so a
//! 75% head-to-head record fits to a gap of 400*log10(3), about 190.85.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Rebuttal, Review, Validate};
use crate::error::{Error, Result};
use crate::prompts;
use crate::providers::{ChatProvider, GenerationRequest};

/// Comparison outcome in the (a, b) frame, after un-swapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    AWins,
    BWins,
    Tie,
}

impl Verdict {
    /// The same outcome seen with the two sides exchanged. Flipping
    /// twice restores the original verdict.
    pub fn flipped(self) -> Verdict {
        match self {
            Verdict::AWins => Verdict::BWins,
            Verdict::BWins => Verdict::AWins,
            Verdict::Tie => Verdict::Tie,
        }
    }
}

/// One judged game between two systems' rebuttals to the same review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub review_id: String,
    pub system_a: String,
    pub system_b: String,
    /// Whether system B was shown as "Response 1".
    pub order_swapped: bool,
    pub verdict: Verdict,
    pub rationale: String,
    /// Set when both comparator replies lacked a verdict sentence and
    /// the game was recorded as a tie by policy.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forced_tie: bool,
}

impl ComparisonRecord {
    pub fn validate(&self) -> Result<()> {
        if self.system_a.trim().is_empty() || self.system_b.trim().is_empty() {
            return Err(Error::Config("comparison with blank system name".into()));
        }
        if self.system_a == self.system_b {
            return Err(Error::Config(format!(
                "comparison of {} against itself",
                self.system_a
            )));
        }
        Ok(())
    }
}

impl Validate for ComparisonRecord {
    fn validate(&self) -> Result<()> {
        ComparisonRecord::validate(self)
    }
}

/// One simulated re-scoring of a rebuttal by the reviewer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRecord {
    pub review_id: String,
    pub system: String,
    /// Post-rebuttal score on the 1-10 rubric.
    pub score: i64,
    /// The judge's reasoning, everything before the final score sentence.
    pub rationale_cot: String,
}

impl JudgeRecord {
    pub fn validate(&self) -> Result<()> {
        if !(1..=10).contains(&self.score) {
            return Err(Error::Config(format!(
                "judge score {} outside the 1-10 rubric",
                self.score
            )));
        }
        if self.system.trim().is_empty() {
            return Err(Error::Config("judge record with blank system name".into()));
        }
        Ok(())
    }
}

impl Validate for JudgeRecord {
    fn validate(&self) -> Result<()> {
        JudgeRecord::validate(self)
    }
}

/// Verdict in the frame the comparator saw (first/second presentation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Presented {
    FirstBetter,
    SecondBetter,
    Similar,
}

fn verdict_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)I think (?:response ([12]) is better|two responses are similar in quality)")
            .unwrap()
    })
}

/// Extracts the verdict from the comparator's closing sentence. The last
/// verdict phrase in the text wins; its span is returned for stripping
/// the rationale.
fn parse_presented(text: &str) -> Result<(Presented, usize)> {
    let m = verdict_regex()
        .captures_iter(text)
        .last()
        .ok_or_else(|| Error::VerdictParse("no verdict sentence found".into()))?;
    let whole = m.get(0).unwrap();
    let presented = match m.get(1).map(|g| g.as_str()) {
        Some("1") => Presented::FirstBetter,
        Some("2") => Presented::SecondBetter,
        Some(_) => unreachable!("regex only captures 1 or 2"),
        None => Presented::Similar,
    };
    Ok((presented, whole.start()))
}

fn comparison_user(review: &Review, first: &Rebuttal, second: &Rebuttal) -> String {
    format!(
        "Review:\n{}\n\nResponse 1:\n{}\n\nResponse 2:\n{}",
        review.text, first.merged_text, second.merged_text
    )
}

/// Runs one pairwise game. The two rebuttals are shown in an order drawn
/// from `rng`, the comparator's closing verdict is parsed and mapped
/// back to the (a, b) frame. A reply without a verdict is re-prompted
/// once; a second failure records a tie with [`ComparisonRecord::forced_tie`].
pub fn compare<R: Rng + ?Sized>(
    review: &Review,
    system_a: &str,
    rebuttal_a: &Rebuttal,
    system_b: &str,
    rebuttal_b: &Rebuttal,
    chat: &dyn ChatProvider,
    rng: &mut R,
) -> Result<ComparisonRecord> {
    if system_a == system_b {
        return Err(Error::Config(format!(
            "cannot compare {system_a} against itself"
        )));
    }
    for (system, rebuttal) in [(system_a, rebuttal_a), (system_b, rebuttal_b)] {
        if rebuttal.merged_text.trim().is_empty() {
            return Err(Error::EmptyDocument(format!("rebuttal of {system} is empty")));
        }
        if rebuttal.review_id != review.id {
            return Err(Error::Config(format!(
                "rebuttal of {system} answers review {}, not {}",
                rebuttal.review_id, review.id
            )));
        }
    }

    let order_swapped = rng.gen_bool(0.5);
    let (first, second) = if order_swapped {
        (rebuttal_b, rebuttal_a)
    } else {
        (rebuttal_a, rebuttal_b)
    };
    let user = comparison_user(review, first, second);
    let req = GenerationRequest::new(prompts::COMPARE_SYSTEM, &user);
    let mut raw = chat.generate(&req)?;
    let mut forced_tie = false;
    let (presented, rationale) = match parse_presented(&raw) {
        Ok((p, at)) => (p, raw[..at].trim().to_string()),
        Err(first_err) => {
            log::warn!("comparator verdict unparseable, re-prompting: {first_err}");
            let retry = GenerationRequest::new(
                prompts::COMPARE_SYSTEM,
                format!("{user}\n\n{}", prompts::VERDICT_REPAIR_REMINDER),
            );
            raw = chat.generate(&retry)?;
            match parse_presented(&raw) {
                Ok((p, at)) => (p, raw[..at].trim().to_string()),
                Err(second_err) => {
                    log::warn!("comparator verdict failed twice, recording tie: {second_err}");
                    forced_tie = true;
                    (Presented::Similar, raw.trim().to_string())
                }
            }
        }
    };

    let unswapped = match presented {
        Presented::FirstBetter => Verdict::AWins,
        Presented::SecondBetter => Verdict::BWins,
        Presented::Similar => Verdict::Tie,
    };
    let verdict = if order_swapped {
        unswapped.flipped()
    } else {
        unswapped
    };
    Ok(ComparisonRecord {
        review_id: review.id.clone(),
        system_a: system_a.to_string(),
        system_b: system_b.to_string(),
        order_swapped,
        verdict,
        rationale,
        forced_tie,
    })
}

/// Win percentages between every ordered pair of systems. Ties count
/// half for each side; pairs that never played have no rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateMatrix {
    /// Sorted system names; rows and columns follow this order.
    pub systems: Vec<String>,
    /// rates[i][j]: percentage of games system i took from system j.
    pub rates: Vec<Vec<Option<f64>>>,
    /// games[i][j]: number of games between i and j.
    pub games: Vec<Vec<usize>>,
}

impl WinRateMatrix {
    pub fn rate(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.systems.iter().position(|s| s == a)?;
        let j = self.systems.iter().position(|s| s == b)?;
        self.rates[i][j]
    }
}

/// (wins of i over j, games between i and j), kept for both orders of (i, j).
type PairTally = BTreeMap<(usize, usize), (f64, usize)>;

/// Effective win and game counts per ordered system pair.
fn tally(records: &[ComparisonRecord]) -> Result<(Vec<String>, PairTally)> {
    for r in records {
        r.validate()?;
    }
    let mut systems: Vec<String> = records
        .iter()
        .flat_map(|r| [r.system_a.clone(), r.system_b.clone()])
        .collect();
    systems.sort();
    systems.dedup();
    let pos = |name: &str| systems.iter().position(|s| s == name).unwrap();
    // (i, j) -> (wins of i over j, games), kept for both orders.
    let mut counts: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for r in records {
        let a = pos(&r.system_a);
        let b = pos(&r.system_b);
        let (wa, wb) = match r.verdict {
            Verdict::AWins => (1.0, 0.0),
            Verdict::BWins => (0.0, 1.0),
            Verdict::Tie => (0.5, 0.5),
        };
        let e = counts.entry((a, b)).or_insert((0.0, 0));
        e.0 += wa;
        e.1 += 1;
        let e = counts.entry((b, a)).or_insert((0.0, 0));
        e.0 += wb;
        e.1 += 1;
    }
    Ok((systems, counts))
}

/// Builds the win-rate matrix: (wins + half the ties) / games, as a
/// percentage, for every ordered pair with at least one game.
pub fn win_rates(records: &[ComparisonRecord]) -> Result<WinRateMatrix> {
    let (systems, counts) = tally(records)?;
    let n = systems.len();
    let mut rates = vec![vec![None; n]; n];
    let mut games = vec![vec![0; n]; n];
    for (&(i, j), &(wins, played)) in &counts {
        rates[i][j] = Some(100.0 * wins / played as f64);
        games[i][j] = played;
    }
    Ok(WinRateMatrix {
        systems,
        rates,
        games,
    })
}

/// Jointly fitted strength ratings on the Elo scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloTable {
    pub ratings: BTreeMap<String, f64>,
    /// The anchoring value; the mean rating equals this.
    pub base: f64,
    /// Majorize-minimize sweeps performed before convergence.
    pub iterations: usize,
    /// Whether the gradient norm fell below 1e-8 within the sweep cap.
    pub converged: bool,
}

impl EloTable {
    pub fn gap(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.ratings.get(a)? - self.ratings.get(b)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratings.values().any(|r| !r.is_finite()) {
            return Err(Error::Config("non-finite rating".into()));
        }
        if self.ratings.is_empty() {
            return Err(Error::EmptySet("rating table is empty".into()));
        }
        let mean = self.ratings.values().sum::<f64>() / self.ratings.len() as f64;
        if (mean - self.base).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "ratings anchor broken: mean {mean}, base {}",
                self.base
            )));
        }
        Ok(())
    }
}

impl Validate for EloTable {
    fn validate(&self) -> Result<()> {
        EloTable::validate(self)
    }
}

const ELO_BASE: f64 = 1000.0;
const GRAD_TOLERANCE: f64 = 1e-8;
const MAX_SWEEPS: usize = 10_000;

/// Maximum-likelihood strength fit with ties counted as half a win for
/// each side, reported on the Elo scale and mean-anchored at 1000.
///
/// The fit runs majorize-minimize sweeps until the gradient norm of the
/// log-likelihood (in log-strength coordinates) is below 1e-8. Systems
/// must form one connected comparison graph, and no system may have won
/// or lost all of its games: such a system's maximum-likelihood rating
/// is infinite, so the degenerate fit is refused up front.
pub fn fit_elo(records: &[ComparisonRecord]) -> Result<EloTable> {
    let (systems, counts) = tally(records)?;
    let n = systems.len();
    if n < 2 {
        return Err(Error::EmptySet(format!(
            "rating fit needs at least two systems, found {n}"
        )));
    }

    // Connectivity check over the pairs that played.
    let mut component = vec![usize::MAX; n];
    let mut stack = vec![0];
    component[0] = 0;
    while let Some(i) = stack.pop() {
        for &(a, b) in counts.keys() {
            if a == i && component[b] == usize::MAX {
                component[b] = 0;
                stack.push(b);
            }
        }
    }
    if let Some(isolated) = component.iter().position(|&c| c == usize::MAX) {
        return Err(Error::DisconnectedGraph(format!(
            "system {} shares no comparison path with {}",
            systems[isolated], systems[0]
        )));
    }

    // Effective win totals; a zero on either side makes the MLE infinite.
    let mut wins = vec![0.0; n];
    let mut losses = vec![0.0; n];
    for (&(i, _), &(w, g)) in &counts {
        wins[i] += w;
        losses[i] += g as f64 - w;
    }
    for i in 0..n {
        if wins[i] == 0.0 || losses[i] == 0.0 {
            let word = if wins[i] == 0.0 { "lost" } else { "won" };
            return Err(Error::DegenerateData(format!(
                "system {} {word} every game; its maximum-likelihood rating is infinite",
                systems[i]
            )));
        }
    }

    let mut strengths = vec![1.0f64; n];
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        // Gradient in log-strength coordinates: wins_i minus expected
        // wins. Every unordered pair appears under both orders, and the
        // (i, j) entry carries all games of the pair, so system i's
        // expectation accumulates exactly once per opponent.
        let mut grad = wins.clone();
        for (&(i, j), &(_, g)) in &counts {
            grad[i] -= g as f64 * strengths[i] / (strengths[i] + strengths[j]);
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < GRAD_TOLERANCE {
            converged = true;
            break;
        }

        let mut denom = vec![0.0f64; n];
        for (&(i, j), &(_, g)) in &counts {
            denom[i] += g as f64 / (strengths[i] + strengths[j]);
        }
        let next: Vec<f64> = (0..n).map(|i| wins[i] / denom[i]).collect();
        let log_mean = next.iter().map(|s| s.ln()).sum::<f64>() / n as f64;
        let scale = log_mean.exp();
        strengths = next.into_iter().map(|s| s / scale).collect();
        iterations += 1;
    }

    let elos: Vec<f64> = strengths.iter().map(|s| 400.0 * s.log10()).collect();
    let mean = elos.iter().sum::<f64>() / n as f64;
    let ratings = systems
        .into_iter()
        .zip(&elos)
        .map(|(name, e)| (name, ELO_BASE + e - mean))
        .collect();
    let table = EloTable {
        ratings,
        base: ELO_BASE,
        iterations,
        converged,
    };
    table.validate()?;
    Ok(table)
}

fn score_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)My final score is (\d+)").unwrap())
}

/// Splits judge output into (reasoning, score). The score comes from the
/// last "My final score is X" sentence and must sit in the 1-10 rubric.
pub fn parse_judge_output(text: &str) -> Result<(String, i64)> {
    let m = score_regex()
        .captures_iter(text)
        .last()
        .ok_or_else(|| Error::ScoreParse("no final score sentence found".into()))?;
    let digits = m.get(1).unwrap().as_str();
    let score: i64 = digits
        .parse()
        .map_err(|_| Error::ScoreParse(format!("unreadable score {digits:?}")))?;
    if !(1..=10).contains(&score) {
        return Err(Error::ScoreParse(format!(
            "score {score} outside the 1-10 rubric"
        )));
    }
    let rationale = text[..m.get(0).unwrap().start()].trim().to_string();
    Ok((rationale, score))
}

/// Asks the judge to re-score the paper after reading `rebuttal`,
/// given the reviewer's pre-rebuttal score.
pub fn judge(
    review: &Review,
    system: &str,
    rebuttal: &Rebuttal,
    initial_score: i64,
    chat: &dyn ChatProvider,
) -> Result<JudgeRecord> {
    if !(1..=10).contains(&initial_score) {
        return Err(Error::Config(format!(
            "initial score {initial_score} outside the 1-10 rubric"
        )));
    }
    if rebuttal.merged_text.trim().is_empty() {
        return Err(Error::EmptyDocument("rebuttal is empty".into()));
    }
    let user = format!(
        "Your review:\n{}\n\nYour original score: {initial_score}\n\nAuthor response:\n{}",
        review.text, rebuttal.merged_text
    );
    let raw = chat.generate(&GenerationRequest::new(prompts::JUDGE_SYSTEM, user))?;
    let (rationale_cot, score) = parse_judge_output(&raw)?;
    let record = JudgeRecord {
        review_id: review.id.clone(),
        system: system.to_string(),
        score,
        rationale_cot,
    };
    record.validate()?;
    Ok(record)
}

/// Reward for a predicted score against the actual one: 0.25^|gap|.
/// 1 for an exact match, decaying fourfold per point of error.
pub fn judge_reward(predicted: i64, actual: i64) -> f64 {
    0.25f64.powi((predicted - actual).unsigned_abs() as i32)
}

/// Fraction of aligned (predicted, actual) pairs that match exactly.
pub fn exact_match_rate(predicted: &[i64], actual: &[i64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: predicted.len(),
            actual: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptySet("no score pairs to match".into()));
    }
    let hits = predicted
        .iter()
        .zip(actual)
        .filter(|(p, a)| p == a)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Everything the evaluation emits for a system set: the win-rate
/// matrix, the rating fit, and mean judge scores where available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub matrix: WinRateMatrix,
    pub elo: EloTable,
    pub mean_judge_scores: BTreeMap<String, f64>,
}

impl Validate for EvalReport {
    fn validate(&self) -> Result<()> {
        self.elo.validate()
    }
}

/// Fits ratings and aggregates judge scores into one report.
pub fn build_report(
    comparisons: &[ComparisonRecord],
    judges: &[JudgeRecord],
) -> Result<EvalReport> {
    let matrix = win_rates(comparisons)?;
    let elo = fit_elo(comparisons)?;
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for j in judges {
        j.validate()?;
        let e = sums.entry(j.system.clone()).or_insert((0.0, 0));
        e.0 += j.score as f64;
        e.1 += 1;
    }
    let mean_judge_scores = sums
        .into_iter()
        .map(|(system, (total, count))| (system, total / count as f64))
        .collect();
    Ok(EvalReport {
        matrix,
        elo,
        mean_judge_scores,
    })
}

impl EvalReport {
    /// Plain-text table: one row per system, win rate against every
    /// opponent, Elo rating, and mean judge score where present.
    pub fn render(&self) -> String {
        let systems = &self.matrix.systems;
        let name_width = systems
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(6)
            .max("System".len());
        let mut columns: Vec<String> = systems.iter().map(|s| format!("vs {s}")).collect();
        columns.push("Elo".to_string());
        columns.push("Judge".to_string());
        let widths: Vec<usize> = columns.iter().map(|c| c.len().max(7)).collect();

        let mut out = String::new();
        out.push_str(&format!("{:<name_width$}", "System"));
        for (c, &w) in columns.iter().zip(&widths) {
            out.push_str(&format!(" | {c:>w$}"));
        }
        out.push('\n');
        let total = name_width + widths.iter().map(|w| w + 3).sum::<usize>();
        out.push_str(&"-".repeat(total));
        out.push('\n');

        for (i, system) in systems.iter().enumerate() {
            out.push_str(&format!("{system:<name_width$}"));
            for (j, &w) in widths.iter().enumerate().take(systems.len()) {
                let cell = match self.matrix.rates[i][j] {
                    Some(r) => format!("{r:.1}"),
                    None => "-".to_string(),
                };
                out.push_str(&format!(" | {cell:>w$}"));
            }
            let elo = self.elo.ratings.get(system).copied().unwrap_or(f64::NAN);
            out.push_str(&format!(" | {:>w$}", format!("{elo:.1}"), w = widths[systems.len()]));
            let judge_cell = match self.mean_judge_scores.get(system) {
                Some(s) => format!("{s:.2}"),
                None => "-".to_string(),
            };
            out.push_str(&format!(" | {judge_cell:>w$}", w = widths[systems.len() + 1]));
            out.push('\n');
        }
        if !self.elo.converged {
            out.push_str("note: rating fit did not converge\n");
        }
        out
    }
}
