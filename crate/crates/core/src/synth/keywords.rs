use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::text::word_forms;

/// Default number of keywords kept for prompt sampling.
pub const DEFAULT_TOP_N: usize = 200;

pub const STOPWORD_LIST_ID: &str = "english-basic";

/// A small English function-word list plus report boilerplate.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by",
    "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for", "from",
    "further", "had", "has", "have", "having", "he", "her", "here", "hers", "him", "his", "how", "i",
    "if", "in", "into", "is", "it", "its", "itself", "just", "me", "more", "most", "my", "no", "nor",
    "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "out", "over", "own", "per",
    "same", "she", "should", "so", "some", "such", "than", "that", "the", "their", "them", "then",
    "there", "these", "they", "this", "those", "through", "to", "too", "under", "until", "up", "upon",
    "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will",
    "with", "within", "without", "would", "you", "your", "seen", "noted", "x", "s",
];

pub fn default_stopwords() -> HashSet<String> {
    STOPWORDS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordTable {
    /// `(term, frequency)`, by frequency descending then term ascending.
    pub terms: Vec<(String, usize)>,
    pub stopword_list: String,
    pub top_n: usize,
}

impl KeywordTable {
    /// No term survived stopword and numeric filtering.
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn words(&self) -> Vec<String> {
        self.terms.iter().map(|(t, _)| t.clone()).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("rank\tterm\tfrequency\n");
        for (i, (t, f)) in self.terms.iter().enumerate() {
            out.push_str(&format!("{}\t{t}\t{f}\n", i + 1));
        }
        out
    }
}

fn is_numeric(term: &str) -> bool {
    term.chars().all(|c| c.is_ascii_digit() || c == '.' || c == '-')
}

/// Most frequent lowercased word tokens, excluding stopwords and numbers.
pub fn extract_keywords<S: AsRef<str>>(
    texts: &[S],
    top_n: usize,
    stopwords: &HashSet<String>,
    stopword_list: &str,
) -> Result<KeywordTable, SynthError> {
    if texts.is_empty() {
        return Err(SynthError::EmptyCorpus);
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in texts {
        for w in word_forms(t.as_ref()) {
            if !stopwords.contains(&w) && !is_numeric(&w) {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    let mut terms: Vec<(String, usize)> = counts.into_iter().collect();
    // BTreeMap order makes the stable sort break ties lexicographically
    terms.sort_by(|a, b| b.1.cmp(&a.1));
    terms.truncate(top_n);
    if terms.is_empty() {
        tracing::warn!("keyword table is empty");
    }
    Ok(KeywordTable {
        terms,
        stopword_list: stopword_list.to_string(),
        top_n,
    })
}
