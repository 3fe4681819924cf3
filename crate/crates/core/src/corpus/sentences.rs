use std::collections::BTreeMap;

use super::{CorpusError, EntitySpan, Report, Sentence, Split};
use crate::text::CharIndex;

/// Tokens ending in `.` that never close a sentence (compared lowercased).
const ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "a.m.", "p.m.", "e.g.", "i.e.", "vs.", "approx.", "cf.", "st.",
    "fig.", "pt.",
];

/// Candidate sentence starts (code-point offsets), always including 0.
fn candidate_starts(chars: &[char]) -> Vec<usize> {
    let mut starts = vec![0];
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') {
            // absorb runs like "?!" and closing quotes/brackets
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j], '.' | '!' | '?' | '"' | '\'' | ')' | ']') {
                j += 1;
            }
            let at_break = j == chars.len() || chars[j].is_whitespace();
            if at_break && !(c == '.' && is_abbreviation(chars, i)) {
                let mut k = j;
                while k < chars.len() && chars[k].is_whitespace() {
                    k += 1;
                }
                if k < chars.len() {
                    starts.push(k);
                }
            }
            i = j;
        } else {
            i += 1;
        }
    }
    starts
}

fn is_abbreviation(chars: &[char], dot: usize) -> bool {
    let mut s = dot;
    while s > 0 && !chars[s - 1].is_whitespace() {
        s -= 1;
    }
    let token: String = chars[s..=dot].iter().collect::<String>().to_lowercase();
    ABBREVIATIONS.contains(&token.as_str())
}

/// Split a report into sentences, rebasing gold spans into sentence coordinates.
///
/// Boundaries fall after `.`, `!` or `?` followed by whitespace or the end of
/// text, except after listed abbreviations. Inter-sentence whitespace stays
/// with the preceding sentence, so the sentences tile the report. Two
/// candidate sentences are merged when a gold span would cross their boundary.
pub fn split_sentences(report: &Report) -> Vec<Sentence> {
    let chars: Vec<char> = report.text.chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    let starts: Vec<usize> = candidate_starts(&chars)
        .into_iter()
        .filter(|&b| !report.gold.iter().any(|s| s.start < b && b < s.end))
        .collect();
    let index = CharIndex::new(&report.text);
    let mut out: Vec<Sentence> = Vec::with_capacity(starts.len());
    for (n, &start) in starts.iter().enumerate() {
        let end = starts.get(n + 1).copied().unwrap_or(chars.len());
        let gold = report
            .gold
            .iter()
            .filter(|s| s.start >= start && s.end <= end)
            .map(|s| s.shifted(-(start as isize)))
            .collect();
        out.push(Sentence {
            report_id: report.id.clone(),
            index: n,
            text: index.slice(&report.text, start, end).unwrap_or_default().to_string(),
            report_offset: start,
            gold,
        });
    }
    out
}

/// Split every report, preserving report order.
pub fn split_corpus(reports: &[Report]) -> Vec<Sentence> {
    reports.iter().flat_map(split_sentences).collect()
}

/// Reassemble one report's text and absolute gold spans from its sentences.
pub fn reassemble(sentences: &[Sentence]) -> Result<(String, Vec<EntitySpan>), CorpusError> {
    let mut ordered: Vec<&Sentence> = sentences.iter().collect();
    ordered.sort_by_key(|s| s.index);
    let mut text = String::new();
    let mut gold = Vec::new();
    let mut offset = 0;
    for s in ordered {
        if s.report_offset != offset {
            return Err(CorpusError::NonContiguous(s.report_id.clone()));
        }
        text.push_str(&s.text);
        gold.extend(s.gold.iter().map(|g| g.shifted(offset as isize)));
        offset += s.char_len();
    }
    Ok((text, gold))
}

/// Rebuild reports from a sentence corpus, grouped by report id in first-seen order.
///
/// The split tag is not part of the sentence format; rebuilt reports carry `split`.
pub fn reports_from_sentences(sentences: &[Sentence], split: Split) -> Result<Vec<Report>, CorpusError> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<Sentence>> = BTreeMap::new();
    for s in sentences {
        let entry = groups.entry(&s.report_id).or_default();
        if entry.is_empty() {
            order.push(&s.report_id);
        }
        entry.push(s.clone());
    }
    order
        .into_iter()
        .map(|id| {
            let (text, gold) = reassemble(&groups[id])?;
            Ok(Report {
                id: id.to_string(),
                text,
                gold,
                split,
                source: String::new(),
            })
        })
        .collect()
}
