//! Paragraph retrieval: embed a paper once, then pick the top-K most
//! relevant paragraphs per review point by cosine similarity.
//!
//! Retrieval is exact: a full descending sort over all paragraphs with
//! ties broken by lower paragraph index, truncated to K. Indexes are
//! immutable after build and can be cached on disk keyed by paper id,
//! encoder name, and vector width.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Paper;
use crate::corpus::ReviewPoint;
use crate::error::{Error, Result};
use crate::providers::{EmbedProvider, EmbeddingVector};

/// Cosine similarity dot(a,b)/(|a||b|), in [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// All paragraph vectors of one paper, aligned to paragraph indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    pub paper_id: String,
    pub encoder: String,
    pub dim: usize,
    vectors: Vec<EmbeddingVector>,
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    paper_id: String,
    encoder: String,
    dim: usize,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct IndexRow {
    index: usize,
    values: EmbeddingVector,
}

impl EmbeddingIndex {
    pub fn new(
        paper_id: impl Into<String>,
        encoder: impl Into<String>,
        dim: usize,
        vectors: Vec<EmbeddingVector>,
    ) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptySet("index needs at least one vector".into()));
        }
        for v in &vectors {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.dim(),
                });
            }
            v.validate()?;
        }
        Ok(EmbeddingIndex {
            paper_id: paper_id.into(),
            encoder: encoder.into(),
            dim,
            vectors,
        })
    }

    pub fn vectors(&self) -> &[EmbeddingVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// JSONL cache: a header line, then one (paragraph index, vector)
    /// row per paragraph.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let header = IndexHeader {
            paper_id: self.paper_id.clone(),
            encoder: self.encoder.clone(),
            dim: self.dim,
            count: self.vectors.len(),
        };
        let mut lines = vec![serde_json::to_string(&header)
            .map_err(|e| Error::Parse(format!("index header: {e}")))?];
        for (index, values) in self.vectors.iter().enumerate() {
            let row = IndexRow {
                index,
                values: values.clone(),
            };
            lines.push(
                serde_json::to_string(&row).map_err(|e| Error::Parse(format!("index row: {e}")))?,
            );
        }
        file.write_all((lines.join("\n") + "\n").as_bytes())
            .map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .ok_or_else(|| Error::SchemaViolation {
                line: 1,
                message: "index cache is empty".into(),
            })?;
        let header: IndexHeader =
            serde_json::from_str(&header_line).map_err(|e| Error::SchemaViolation {
                line: 1,
                message: format!("index header: {e}"),
            })?;
        let mut vectors = vec![None; header.count];
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: IndexRow =
                serde_json::from_str(&line).map_err(|e| Error::SchemaViolation {
                    line: lineno + 2,
                    message: format!("index row: {e}"),
                })?;
            if row.index >= header.count {
                return Err(Error::SchemaViolation {
                    line: lineno + 2,
                    message: format!("row index {} outside count {}", row.index, header.count),
                });
            }
            vectors[row.index] = Some(row.values);
        }
        let vectors: Vec<EmbeddingVector> = vectors
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| Error::SchemaViolation {
                    line: 1,
                    message: format!("index cache missing row {i}"),
                })
            })
            .collect::<Result<_>>()?;
        EmbeddingIndex::new(header.paper_id, header.encoder, header.dim, vectors)
    }
}

/// Embed every paragraph of the paper, in paragraph order.
pub fn build_index(paper: &Paper, embed: &dyn EmbedProvider) -> Result<EmbeddingIndex> {
    let texts: Vec<String> = paper.paragraphs.iter().map(|p| p.text.clone()).collect();
    if texts.is_empty() {
        return Err(Error::EmptyDocument(format!("paper {}", paper.id)));
    }
    let vectors = embed.embed(&texts)?;
    EmbeddingIndex::new(&paper.id, embed.name(), embed.dim(), vectors)
}

/// Reuse a cached index when its header matches this paper and encoder;
/// rebuild and rewrite the cache otherwise.
pub fn load_or_build_index(
    paper: &Paper,
    embed: &dyn EmbedProvider,
    cache_path: impl AsRef<Path>,
) -> Result<EmbeddingIndex> {
    let cache_path = cache_path.as_ref();
    if cache_path.exists() {
        match EmbeddingIndex::load(cache_path) {
            Ok(index)
                if index.paper_id == paper.id
                    && index.encoder == embed.name()
                    && index.dim == embed.dim()
                    && index.len() == paper.paragraphs.len() =>
            {
                return Ok(index);
            }
            Ok(_) => log::info!("index cache at {} is stale; rebuilding", cache_path.display()),
            Err(e) => log::warn!("index cache at {} unreadable ({e}); rebuilding", cache_path.display()),
        }
    }
    let index = build_index(paper, embed)?;
    index.save(cache_path)?;
    Ok(index)
}

/// Top-K paragraphs for one review point, most similar first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub point_index: usize,
    pub paragraph_indices: Vec<usize>,
    pub similarities: Vec<f64>,
}

impl RetrievedContext {
    pub fn validate(&self) -> Result<()> {
        if self.paragraph_indices.len() != self.similarities.len() {
            return Err(Error::Config(
                "retrieved indices and similarities must be parallel".into(),
            ));
        }
        if self
            .similarities
            .windows(2)
            .any(|w| w[0] < w[1])
        {
            return Err(Error::Config("similarities must be non-increasing".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &i in &self.paragraph_indices {
            if !seen.insert(i) {
                return Err(Error::Config(format!("paragraph {i} retrieved twice")));
            }
        }
        Ok(())
    }

    /// Paragraph texts in retrieval order.
    pub fn texts<'p>(&self, paper: &'p Paper) -> Result<Vec<&'p str>> {
        self.paragraph_indices
            .iter()
            .map(|&i| {
                paper
                    .paragraphs
                    .get(i)
                    .map(|p| p.text.as_str())
                    .ok_or(Error::IndexOutOfRange {
                        index: i,
                        len: paper.paragraphs.len(),
                    })
            })
            .collect()
    }
}

/// Exact top-k against a precomputed point vector: full descending sort
/// with index tie-breaking, truncated to min(k, paragraph count).
pub fn retrieve_vec(
    point_vec: &EmbeddingVector,
    point_index: usize,
    index: &EmbeddingIndex,
    k: usize,
) -> Result<RetrievedContext> {
    assert!(k >= 1, "k must be >= 1");
    let mut sims = Vec::with_capacity(index.len());
    for (i, v) in index.vectors().iter().enumerate() {
        sims.push((i, cosine(point_vec, v)?));
    }
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sims.truncate(k.min(index.len()));
    Ok(RetrievedContext {
        point_index,
        paragraph_indices: sims.iter().map(|(i, _)| *i).collect(),
        similarities: sims.iter().map(|(_, s)| *s).collect(),
    })
}

/// Embed the point text and retrieve its top-k paragraphs.
pub fn retrieve(
    point: &ReviewPoint,
    index: &EmbeddingIndex,
    k: usize,
    embed: &dyn EmbedProvider,
) -> Result<RetrievedContext> {
    let point_vec = embed.embed_one(&point.text)?;
    retrieve_vec(&point_vec, point.index, index, k)
}

/// Share of the paper's characters the retrieval step dropped.
pub fn reduction_ratio(paper: &Paper, context: &RetrievedContext) -> f64 {
    let total = paper.total_char_len();
    if total == 0 {
        return 0.0;
    }
    let selected: usize = context
        .paragraph_indices
        .iter()
        .map(|&i| {
            assert!(i < paper.paragraphs.len(), "retrieved index out of range");
            paper.paragraphs[i].char_len
        })
        .sum();
    1.0 - selected as f64 / total as f64
}
