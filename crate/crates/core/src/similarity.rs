//! Distributional similarity between real and synthetic corpora.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extractor::parallel_map;
use crate::synth::cosine;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_FLAG_THRESHOLD: f64 = 0.98;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("need at least {need} vectors, got {got}")]
    TooSmall { need: usize, got: usize },
    #[error("{0} set is empty")]
    Empty(&'static str),
    #[error("vector dimensions differ: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("projection file: {0}")]
    Projection(String),
}

/// A vector with the id of the text it embeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedded {
    pub id: String,
    pub vector: Vec<f64>,
}

impl Embedded {
    pub fn new(id: impl Into<String>, vector: Vec<f64>) -> Self {
        Self { id: id.into(), vector }
    }
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn sim(a: &[f64], b: &[f64]) -> f64 {
    cosine(a, b).clamp(-1.0, 1.0)
}

fn check_dims(sets: &[&[Embedded]]) -> Result<(), SimilarityError> {
    let mut dim = None;
    for v in sets.iter().flat_map(|s| s.iter()) {
        match dim {
            None => dim = Some(v.vector.len()),
            Some(d) if d != v.vector.len() => return Err(SimilarityError::Dimension(d, v.vector.len())),
            _ => {}
        }
    }
    Ok(())
}

/// Mean over vectors of the mean cosine to their `k` nearest other vectors.
pub fn internal_coherence(vectors: &[Embedded], k: usize) -> Result<f64, SimilarityError> {
    if k == 0 || vectors.len() < k + 1 {
        return Err(SimilarityError::TooSmall {
            need: k.max(1) + 1,
            got: vectors.len(),
        });
    }
    check_dims(&[vectors])?;
    let idx: Vec<usize> = (0..vectors.len()).collect();
    let per: Vec<f64> = parallel_map(&idx, threads(), |&i| {
        let mut sims: Vec<f64> = vectors
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| sim(&vectors[i].vector, &v.vector))
            .collect();
        sims.sort_by(|a, b| b.total_cmp(a));
        sims[..k].iter().sum::<f64>() / k as f64
    });
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Mean over synthetic vectors of the cosine to the nearest real vector.
pub fn cross_set_similarity(synthetic: &[Embedded], real: &[Embedded]) -> Result<f64, SimilarityError> {
    if synthetic.is_empty() {
        return Err(SimilarityError::Empty("synthetic"));
    }
    if real.is_empty() {
        return Err(SimilarityError::Empty("real"));
    }
    check_dims(&[synthetic, real])?;
    let best: Vec<f64> = parallel_map(synthetic, threads(), |s| {
        real.iter()
            .map(|r| sim(&s.vector, &r.vector))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    Ok(best.iter().sum::<f64>() / best.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedPair {
    pub synthetic_id: String,
    pub real_id: String,
    pub similarity: f64,
}

/// Every (synthetic, real) pair at or above `threshold`, most similar first.
pub fn leakage_check(synthetic: &[Embedded], real: &[Embedded], threshold: f64) -> Vec<FlaggedPair> {
    let per: Vec<Vec<FlaggedPair>> = parallel_map(synthetic, threads(), |s| {
        real.iter()
            .filter_map(|r| {
                let similarity = sim(&s.vector, &r.vector);
                (similarity >= threshold).then(|| FlaggedPair {
                    synthetic_id: s.id.clone(),
                    real_id: r.id.clone(),
                    similarity,
                })
            })
            .collect()
    });
    let mut flagged: Vec<FlaggedPair> = per.into_iter().flatten().collect();
    flagged.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.synthetic_id.cmp(&b.synthetic_id))
            .then_with(|| a.real_id.cmp(&b.real_id))
    });
    flagged
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub embedder_id: String,
    pub k: usize,
    pub flag_threshold: f64,
    pub real_count: usize,
    pub synthetic_count: usize,
    pub internal_coherence_real: f64,
    pub internal_coherence_synthetic: f64,
    pub cross_set_similarity: f64,
    pub flagged: Vec<FlaggedPair>,
}

pub fn similarity_report(
    embedder_id: &str,
    synthetic: &[Embedded],
    real: &[Embedded],
    k: usize,
    flag_threshold: f64,
) -> Result<SimilarityReport, SimilarityError> {
    Ok(SimilarityReport {
        embedder_id: embedder_id.to_string(),
        k,
        flag_threshold,
        real_count: real.len(),
        synthetic_count: synthetic.len(),
        internal_coherence_real: internal_coherence(real, k)?,
        internal_coherence_synthetic: internal_coherence(synthetic, k)?,
        cross_set_similarity: cross_set_similarity(synthetic, real)?,
        flagged: leakage_check(synthetic, real, flag_threshold),
    })
}

/// One row of the projection input: id, source label, vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub id: String,
    pub source: String,
    pub vector: Vec<f64>,
}

/// CSV with columns `id,source,v0,...`; floats are written in shortest round-trip form.
pub fn export_projection(rows: &[ProjectionRow]) -> Result<String, SimilarityError> {
    let dim = rows.first().map_or(0, |r| r.vector.len());
    if let Some(r) = rows.iter().find(|r| r.vector.len() != dim) {
        return Err(SimilarityError::Dimension(dim, r.vector.len()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "source".to_string()];
    header.extend((0..dim).map(|i| format!("v{i}")));
    let err = |e: csv::Error| SimilarityError::Projection(e.to_string());
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.id.clone(), r.source.clone()];
        rec.extend(r.vector.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| SimilarityError::Projection(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

pub fn parse_projection(text: &str) -> Result<Vec<ProjectionRow>, SimilarityError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| SimilarityError::Projection(e.to_string()))?;
        if rec.len() < 2 {
            return Err(SimilarityError::Projection(format!("row {}: missing id or source", line + 1)));
        }
        let vector = rec
            .iter()
            .skip(2)
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SimilarityError::Projection(format!("row {}: {e}", line + 1)))?;
        out.push(ProjectionRow {
            id: rec[0].to_string(),
            source: rec[1].to_string(),
            vector,
        });
    }
    Ok(out)
}
