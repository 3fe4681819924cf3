//! Code-point offset helpers, tokenizers, and negation/uncertainty cue detection.
//!
//! Every offset in this crate counts Unicode scalar values, not bytes, so that
//! a span computed here highlights the same characters in any client.

use serde::{Deserialize, Serialize};

/// Number of code points in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Slice `text` by code-point offsets `[start, end)`.
pub fn slice_chars(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let index = CharIndex::new(text);
    index.slice(text, start, end)
}

/// Byte offsets of every code point boundary, for repeated slicing of one text.
#[derive(Debug, Clone)]
pub struct CharIndex {
    bytes: Vec<usize>,
}

impl CharIndex {
    pub fn new(text: &str) -> Self {
        let mut bytes: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        bytes.push(text.len());
        Self { bytes }
    }

    /// Length of the indexed text in code points.
    pub fn len(&self) -> usize {
        self.bytes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_offset(&self, char_offset: usize) -> Option<usize> {
        self.bytes.get(char_offset).copied()
    }

    pub fn char_offset(&self, byte_offset: usize) -> Option<usize> {
        self.bytes.binary_search(&byte_offset).ok()
    }

    pub fn slice<'a>(&self, text: &'a str, start: usize, end: usize) -> Option<&'a str> {
        if start > end {
            return None;
        }
        let b0 = self.byte_offset(start)?;
        let b1 = self.byte_offset(end)?;
        text.get(b0..b1)
    }
}

/// Code-point offsets of every (possibly overlapping) occurrence of `needle`.
pub fn find_all(haystack: &str, needle: &str) -> Vec<usize> {
    if needle.is_empty() {
        return Vec::new();
    }
    let index = CharIndex::new(haystack);
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let byte = from + pos;
        if let Some(c) = index.char_offset(byte) {
            out.push(c);
        }
        // advance by one code point so overlapping matches are seen
        from = byte + haystack[byte..].chars().next().map_or(1, char::len_utf8);
    }
    out
}

/// Collapse whitespace runs to a single space and trim both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A token with code-point offsets into its host text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Whitespace tokenization, the convention of the RadGraph token indices.
pub fn whitespace_tokens(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut current: Option<(usize, String)> = None;
    let mut pos = 0;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if let Some((start, tok)) = current.take() {
                out.push(Token { start, end: pos, text: tok });
            }
        } else {
            current.get_or_insert_with(|| (pos, String::new())).1.push(ch);
        }
        pos += 1;
    }
    if let Some((start, tok)) = current {
        out.push(Token { start, end: pos, text: tok });
    }
    out
}

/// Lowercased word tokens: alphanumeric runs, keeping inner `-` and `'`.
pub fn word_tokens(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() {
            let c = chars[i];
            let joiner = (c == '-' || c == '\'')
                && i + 1 < chars.len()
                && chars[i + 1].is_alphanumeric();
            if c.is_alphanumeric() || joiner {
                i += 1;
            } else {
                break;
            }
        }
        let word: String = chars[start..i].iter().collect::<String>().to_lowercase();
        out.push(Token { start, end: i, text: word });
    }
    out
}

/// Lowercased word forms of `text`, for phrase matching.
pub fn word_forms(text: &str) -> Vec<String> {
    word_tokens(text).into_iter().map(|t| t.text).collect()
}

const CLAUSE_PUNCT: &[char] = &[',', ';', ':', '.', '!', '?', '(', ')'];
const CLAUSE_WORDS: &[&str] = &["but", "however", "although", "though", "whereas"];

/// Clause ordinal of each word token: punctuation and contrastive conjunctions open a new clause.
pub fn clause_ids(text: &str, tokens: &[Token]) -> Vec<usize> {
    let chars: Vec<char> = text.chars().collect();
    let mut ids = Vec::with_capacity(tokens.len());
    let mut clause = 0;
    let mut prev_end = 0;
    for tok in tokens {
        if chars[prev_end..tok.start].iter().any(|c| CLAUSE_PUNCT.contains(c)) {
            clause += 1;
        }
        if CLAUSE_WORDS.contains(&tok.text.as_str()) {
            clause += 1;
        }
        ids.push(clause);
        prev_end = tok.end;
    }
    ids
}

/// Find non-overlapping occurrences of multi-word `phrases` in `words`, longest first at each position.
///
/// Returns `(first_token, last_token_inclusive, phrase_index)`.
pub fn match_phrases(words: &[String], phrases: &[Vec<String>]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let mut best: Option<(usize, usize)> = None;
        for (pi, phrase) in phrases.iter().enumerate() {
            let n = phrase.len();
            if n == 0 || i + n > words.len() {
                continue;
            }
            if words[i..i + n] == phrase[..] && best.is_none_or(|(len, _)| n > len) {
                best = Some((n, pi));
            }
        }
        match best {
            Some((n, pi)) => {
                out.push((i, i + n - 1, pi));
                i += n;
            }
            None => i += 1,
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CuePolarity {
    Negation,
    Uncertainty,
}

/// Negation and uncertainty cue vocabulary, shared by the rule baseline and the judge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueLexicon {
    pub negation: Vec<String>,
    pub uncertainty: Vec<String>,
}

impl Default for CueLexicon {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            negation: owned(&[
                "no",
                "not",
                "without",
                "free of",
                "negative for",
                "absence of",
                "resolution of",
            ]),
            uncertainty: owned(&[
                "possible",
                "possibly",
                "may represent",
                "could be",
                "may be",
                "likely",
                "probable",
                "suspicious for",
                "concerning for",
                "questionable",
                "cannot be excluded",
                "versus",
            ]),
        }
    }
}

/// A cue occurrence in token coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CueHit {
    pub polarity: CuePolarity,
    pub first: usize,
    pub last: usize,
    pub clause: usize,
}

/// Cue analysis of one text: its word tokens, clause ids, and cue occurrences.
#[derive(Debug, Clone)]
pub struct CueScan {
    pub tokens: Vec<Token>,
    pub clauses: Vec<usize>,
    pub hits: Vec<CueHit>,
}

impl CueScan {
    pub fn new(text: &str, cues: &CueLexicon) -> Self {
        let tokens = word_tokens(text);
        let clauses = clause_ids(text, &tokens);
        let words: Vec<String> = tokens.iter().map(|t| t.text.clone()).collect();
        let mut phrases: Vec<Vec<String>> = Vec::new();
        let mut polarity = Vec::new();
        for (list, pol) in [
            (&cues.negation, CuePolarity::Negation),
            (&cues.uncertainty, CuePolarity::Uncertainty),
        ] {
            for cue in list {
                phrases.push(word_forms(cue));
                polarity.push(pol);
            }
        }
        let hits = match_phrases(&words, &phrases)
            .into_iter()
            .map(|(first, last, pi)| CueHit {
                polarity: polarity[pi],
                first,
                last,
                clause: clauses[first],
            })
            .collect();
        Self { tokens, clauses, hits }
    }

    /// Token range `[first, last]` covering the code-point span `[start, end)`, if it aligns with words.
    pub fn token_range(&self, start: usize, end: usize) -> Option<(usize, usize)> {
        let first = self.tokens.iter().position(|t| t.start < end && t.end > start)?;
        let last = self.tokens.iter().rposition(|t| t.start < end && t.end > start)?;
        Some((first, last))
    }

    /// The nearest cue preceding token `first` within its clause.
    pub fn governing_cue(&self, first: usize) -> Option<CueHit> {
        let clause = self.clauses[first];
        self.hits
            .iter()
            .filter(|h| h.clause == clause && h.last < first)
            .max_by_key(|h| h.last)
            .copied()
    }

    /// Cue occurrences of `polarity` anywhere in the clause of token `first`, outside `[first, last]`.
    pub fn clause_has(&self, first: usize, last: usize, polarity: CuePolarity) -> bool {
        let clause = self.clauses[first];
        self.hits.iter().any(|h| {
            h.clause == clause && h.polarity == polarity && (h.last < first || h.first > last)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_by_code_points() {
        let t = "é no effusion";
        assert_eq!(slice_chars(t, 5, 13), Some("effusion"));
        assert_eq!(char_len(t), 13);
        assert_eq!(slice_chars(t, 3, 2), None);
        assert_eq!(slice_chars(t, 0, 14), None);
    }

    #[test]
    fn find_all_reports_char_offsets() {
        assert_eq!(find_all("ée ée", "é"), vec![0, 3]);
        assert_eq!(find_all("aaa", "aa"), vec![0, 1]);
        assert!(find_all("abc", "").is_empty());
    }

    #[test]
    fn whitespace_tokens_track_offsets() {
        let toks = whitespace_tokens("  no acute\tpneumonia ");
        let spans: Vec<_> = toks.iter().map(|t| (t.start, t.end, t.text.as_str())).collect();
        assert_eq!(spans, vec![(2, 4, "no"), (5, 10, "acute"), (11, 20, "pneumonia")]);
    }

    #[test]
    fn word_tokens_keep_inner_hyphen() {
        let forms = word_forms("Post-operative changes, 2.5 cm.");
        assert_eq!(forms, vec!["post-operative", "changes", "2", "5", "cm"]);
    }

    #[test]
    fn clauses_split_on_punctuation_and_but() {
        let text = "no effusion, possible edema but clear lungs";
        let toks = word_tokens(text);
        assert_eq!(clause_ids(text, &toks), vec![0, 0, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn governing_cue_is_nearest_in_clause() {
        let cues = CueLexicon::default();
        let scan = CueScan::new("No effusion, possible focal edema.", &cues);
        let (f, _) = scan.token_range(2, 10).unwrap();
        assert_eq!(scan.governing_cue(f).unwrap().polarity, CuePolarity::Negation);
        let (f, _) = scan.token_range(28, 33).unwrap();
        let hit = scan.governing_cue(f).unwrap();
        assert_eq!(hit.polarity, CuePolarity::Uncertainty);
        assert_eq!(f - hit.last, 2);
    }
}
