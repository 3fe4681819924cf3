use std::cmp::Ordering;
use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::seed::fnv1a;
use crate::text::word_forms;

pub const DEFAULT_DIM: usize = 256;

/// Text to fixed-length vector.
pub trait Embedder: Send + Sync {
    fn id(&self) -> String;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, SynthError>;
}

/// Scale to unit length; the zero vector stays zero.
pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Bag of lowercased word tokens hashed into `dim` buckets, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedEmbedder {
    pub dim: usize,
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

impl HashedEmbedder {
    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for w in word_forms(text) {
            v[(fnv1a(w.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        l2_normalize(&mut v);
        v
    }
}

impl Embedder for HashedEmbedder {
    fn id(&self) -> String {
        format!("hashed-bow-{}", self.dim)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, SynthError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Client for `POST /embed {"texts": [...]}` returning `{"vectors": [[...]]}`.
pub struct RemoteEmbedder {
    endpoint: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, timeout_ms: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            agent,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}", self.endpoint)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, SynthError> {
        let url = format!("{}/embed", self.endpoint.trim_end_matches('/'));
        let resp: EmbedResponse = self
            .agent
            .post(&url)
            .send_json(EmbedRequest { texts })
            .and_then(|mut r| r.body_mut().read_json())
            .map_err(|e| SynthError::Backend(format!("{url}: {e}")))?;
        if resp.vectors.len() != texts.len() {
            return Err(SynthError::Backend(format!(
                "{url}: {} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        Ok(resp
            .vectors
            .into_iter()
            .map(|mut v| {
                l2_normalize(&mut v);
                v
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub text: String,
    pub vector: Vec<f64>,
}

/// Exact nearest-neighbour index over unit vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalIndex {
    pub embedder_id: String,
    pub entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

fn rank(a: &Hit, b: &Hit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

impl RetrievalIndex {
    pub fn build(embedder: &dyn Embedder, docs: &[(String, String)]) -> Result<Self, SynthError> {
        let texts: Vec<String> = docs.iter().map(|(_, t)| t.clone()).collect();
        let vectors = embedder.embed(&texts)?;
        Ok(Self {
            embedder_id: embedder.id(),
            entries: docs
                .iter()
                .zip(vectors)
                .map(|((id, text), mut vector)| {
                    l2_normalize(&mut vector);
                    IndexEntry {
                        id: id.clone(),
                        text: text.clone(),
                        vector,
                    }
                })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Exact top-k by cosine, ties broken by id; `pool` restricts the candidates.
    pub fn retrieve_top_k(
        &self,
        query: &[f64],
        k: usize,
        pool: Option<&HashSet<String>>,
    ) -> Result<Vec<Hit>, SynthError> {
        let mut hits: Vec<Hit> = self
            .entries
            .iter()
            .filter(|e| pool.is_none_or(|p| p.contains(&e.id)))
            .map(|e| Hit {
                id: e.id.clone(),
                score: cosine(query, &e.vector),
            })
            .collect();
        if k > hits.len() {
            return Err(SynthError::KTooLarge { k, available: hits.len() });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, rank);
            hits.truncate(k);
        }
        hits.sort_by(rank);
        Ok(hits)
    }
}
