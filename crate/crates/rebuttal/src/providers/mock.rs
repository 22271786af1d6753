//! Deterministic offline providers.
//!
//! [`MockEmbed`] hashes each token to a fixed random direction and sums
//! them, so texts sharing tokens get correlated vectors: token overlap
//! shows up as cosine similarity. [`MockChat`] recognizes which role is
//! calling by its system prompt and simulates a plausible reply. Both are
//! pure functions of (inputs, seed), which makes every offline pipeline
//! run bit-reproducible.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ChatProvider, EmbedProvider, EmbeddingVector, GenerationRequest};
use crate::corpus::segment::split_sentences;
use crate::error::{Error, Result};
use crate::prompts;

/// 64-bit FNV-1a.
pub fn stable_hash(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // Separator byte so ["ab","c"] != ["a","bc"].
        h ^= 0x1f;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Hash-based embedding provider. Same (text, seed, dim) always yields
/// the same unit vector.
#[derive(Debug, Clone)]
pub struct MockEmbed {
    dim: usize,
    seed: u64,
}

impl MockEmbed {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 2, "embedding dim must be >= 2");
        MockEmbed { dim, seed }
    }

    fn direction(&self, key: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(key ^ self.seed.rotate_left(17));
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        v
    }

    fn embed_text(&self, text: &str) -> EmbeddingVector {
        let toks = tokens(text);
        let mut sum = vec![0.0; self.dim];
        if toks.is_empty() {
            sum = self.direction(stable_hash(&["whole-text", text]));
        } else {
            for tok in &toks {
                let dir = self.direction(stable_hash(&["token", tok]));
                for (s, d) in sum.iter_mut().zip(&dir) {
                    *s += d;
                }
            }
        }
        let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut sum {
                *x /= norm;
            }
        } else {
            sum = self.direction(stable_hash(&["degenerate", text]));
        }
        EmbeddingVector::new(sum)
    }
}

impl EmbedProvider for MockEmbed {
    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> String {
        format!("mock-{}", self.seed)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        texts
            .iter()
            .map(|t| {
                if t.trim().is_empty() {
                    return Err(Error::provider("cannot embed blank text"));
                }
                Ok(self.embed_text(t))
            })
            .collect()
    }
}

/// Which pipeline role issued a chat request, recognized by its system
/// prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Decomposer,
    Proposer,
    ExecutorPoint,
    ExecutorWhole,
    Judge,
    Comparator,
    ScoreRecovery,
    GtExtraction,
    Other,
}

pub fn classify_role(system_prompt: &str) -> Role {
    match system_prompt {
        p if p == prompts::DECOMPOSER_SYSTEM => Role::Decomposer,
        p if p == prompts::PERSPECTIVE_GENERATOR_SYSTEM => Role::Proposer,
        p if p == prompts::EXECUTOR_POINT_SYSTEM => Role::ExecutorPoint,
        p if p == prompts::EXECUTOR_WHOLE_SYSTEM => Role::ExecutorWhole,
        p if p == prompts::JUDGE_SYSTEM => Role::Judge,
        p if p == prompts::COMPARE_SYSTEM => Role::Comparator,
        p if p == prompts::SCORE_RECOVERY_SYSTEM => Role::ScoreRecovery,
        p if p == prompts::GT_EXTRACTION_SYSTEM => Role::GtExtraction,
        _ => Role::Other,
    }
}

/// Role-aware chat simulator. Replies are derived from a hash of
/// (seed, prompts), so identical requests always get identical replies
/// and the simulator is safe under concurrent callers.
#[derive(Debug, Clone)]
pub struct MockChat {
    seed: u64,
}

impl MockChat {
    pub fn new(seed: u64) -> Self {
        MockChat { seed }
    }

    fn hash(&self, req: &GenerationRequest) -> u64 {
        stable_hash(&[
            &self.seed.to_string(),
            &req.system_prompt,
            &req.user_prompt,
        ])
    }

    fn simulate(&self, req: &GenerationRequest) -> String {
        let h = self.hash(req);
        let user = req.user_prompt.trim();
        match classify_role(&req.system_prompt) {
            Role::Decomposer => {
                let mut sentences = split_sentences(user);
                if sentences.is_empty() {
                    sentences = vec![user.to_string()];
                }
                serde_json::to_string_pretty(&sentences).unwrap()
            }
            Role::Proposer => {
                let snippet = head_tokens(user, 8);
                let entries: Vec<String> = (0..5)
                    .map(|i| {
                        let tag = if i % 2 == 0 {
                            "Clarification"
                        } else {
                            "Justification"
                        };
                        format!(
                            "{tag}: angle {} holds that the concern about {snippet} {}",
                            (h.rotate_left(i as u32 * 7) % 97),
                            if i % 2 == 0 {
                                "rests on a misreading of the presented material."
                            } else {
                                "does not diminish the contribution."
                            }
                        )
                    })
                    .collect();
                serde_json::to_string_pretty(&entries).unwrap()
            }
            Role::ExecutorPoint => format!(
                "We thank the reviewer for raising {}. Drawing on the retrieved \
                 passages (digest {:016x}), the presented evidence already covers \
                 this concern, and our design choice remains sound.",
                head_tokens(user, 8),
                h
            ),
            Role::ExecutorWhole => format!(
                "We thank the reviewer for the careful reading. Addressing the \
                 review as a whole (digest {:016x}): the questions raised are \
                 answered by the material presented, as detailed point by point \
                 in the following passage. {}",
                h,
                head_tokens(user, 12)
            ),
            Role::Judge => {
                let score = 1 + h % 10;
                format!(
                    "The response engages with the review directly and cites \
                     material consistent with the paper (digest {:016x}). Some \
                     concerns remain only partially addressed. My final score is {}",
                    h.rotate_left(13),
                    score
                )
            }
            Role::Comparator => {
                let rationale = format!(
                    "Response quality differs mainly in evidential grounding \
                     (digest {:016x}).",
                    h
                );
                match h % 3 {
                    0 => format!("{rationale} I think response 1 is better"),
                    1 => format!("{rationale} I think response 2 is better"),
                    _ => format!("{rationale} I think two responses are similar in quality"),
                }
            }
            Role::ScoreRecovery => {
                let score = 1 + h % 10;
                format!(
                    "{{\"opinion\": \"The discussion shows {} signals: reviewer \
                      engagement, author clarifications, and a settled tone near \
                      the end.\", \"initial_score\": \"{score}\"}}",
                    2 + h % 3
                )
            }
            Role::GtExtraction => {
                let tag = if h.is_multiple_of(2) {
                    "Clarification"
                } else {
                    "Justification"
                };
                format!(
                    "{tag}: the authors argued that {} was already handled by the study design.",
                    head_tokens(user, 6)
                )
            }
            Role::Other => format!("mock reply {h:016x} to: {}", head_tokens(user, 10)),
        }
    }
}

fn head_tokens(text: &str, n: usize) -> String {
    let toks = tokens(text);
    if toks.is_empty() {
        "the raised point".to_string()
    } else {
        toks[..toks.len().min(n)].join(" ")
    }
}

impl ChatProvider for MockChat {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        req.validate()?;
        Ok(self.simulate(req))
    }
}

/// Replays a fixed list of replies in order. For wiring tests where the
/// reply content must be controlled exactly.
pub struct ScriptedChat {
    replies: Mutex<VecDeque<Result<String>>>,
    calls: AtomicUsize,
}

impl ScriptedChat {
    pub fn new(replies: Vec<Result<String>>) -> Self {
        ScriptedChat {
            replies: Mutex::new(replies.into_iter().collect()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn of_strings(replies: &[&str]) -> Self {
        Self::new(replies.iter().map(|r| Ok((*r).to_string())).collect())
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatProvider for ScriptedChat {
    fn generate(&self, _req: &GenerationRequest) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(Error::provider("scripted replies exhausted")))
    }
}

/// Routes judge-role requests to a fixed reply script; every other role
/// falls through to the wrapped provider. Lets a test pin the judged
/// scores and reasoning while the rest of the stack runs normally.
pub struct JudgeScripted<P> {
    inner: P,
    replies: Mutex<VecDeque<Result<String>>>,
}

impl<P> JudgeScripted<P> {
    pub fn new(inner: P, replies: &[&str]) -> Self {
        JudgeScripted {
            inner,
            replies: Mutex::new(replies.iter().map(|r| Ok((*r).to_string())).collect()),
        }
    }

    pub fn with_results(inner: P, replies: Vec<Result<String>>) -> Self {
        JudgeScripted {
            inner,
            replies: Mutex::new(replies.into_iter().collect()),
        }
    }
}

impl<P: ChatProvider> ChatProvider for JudgeScripted<P> {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        if classify_role(&req.system_prompt) == Role::Judge {
            self.replies
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or_else(|| Err(Error::provider("judge script exhausted")))
        } else {
            self.inner.generate(req)
        }
    }
}

/// Chat wrapper keeping every request for structural assertions on
/// assembled prompts.
pub struct RecordingChat<P> {
    pub inner: P,
    requests: Mutex<Vec<GenerationRequest>>,
}

impl<P> RecordingChat<P> {
    pub fn new(inner: P) -> Self {
        RecordingChat {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl<P: ChatProvider> ChatProvider for RecordingChat<P> {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        self.requests.lock().unwrap().push(req.clone());
        self.inner.generate(req)
    }
}

/// Chat wrapper counting calls per role.
pub struct InstrumentedChat<P> {
    pub inner: P,
    counts: Mutex<std::collections::BTreeMap<Role, usize>>,
}

impl<P> InstrumentedChat<P> {
    pub fn new(inner: P) -> Self {
        InstrumentedChat {
            inner,
            counts: Mutex::new(Default::default()),
        }
    }

    pub fn count(&self, role: Role) -> usize {
        *self.counts.lock().unwrap().get(&role).unwrap_or(&0)
    }

    pub fn total(&self) -> usize {
        self.counts.lock().unwrap().values().sum()
    }
}

impl<P: ChatProvider> ChatProvider for InstrumentedChat<P> {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        *self
            .counts
            .lock()
            .unwrap()
            .entry(classify_role(&req.system_prompt))
            .or_insert(0) += 1;
        self.inner.generate(req)
    }
}

/// Embed wrapper counting batch calls and texts.
pub struct InstrumentedEmbed<P> {
    pub inner: P,
    batch_calls: AtomicUsize,
    texts_embedded: AtomicUsize,
}

impl<P> InstrumentedEmbed<P> {
    pub fn new(inner: P) -> Self {
        InstrumentedEmbed {
            inner,
            batch_calls: AtomicUsize::new(0),
            texts_embedded: AtomicUsize::new(0),
        }
    }

    pub fn batch_calls(&self) -> usize {
        self.batch_calls.load(Ordering::SeqCst)
    }

    pub fn texts_embedded(&self) -> usize {
        self.texts_embedded.load(Ordering::SeqCst)
    }
}

impl<P: EmbedProvider> EmbedProvider for InstrumentedEmbed<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn name(&self) -> String {
        self.inner.name()
    }

    fn batch_limit(&self) -> usize {
        self.inner.batch_limit()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        self.batch_calls.fetch_add(1, Ordering::SeqCst);
        self.texts_embedded.fetch_add(texts.len(), Ordering::SeqCst);
        self.inner.embed_batch(texts)
    }
}
