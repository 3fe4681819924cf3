//! Line-delimited JSON helpers shared by every file format of the pipeline.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Record {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| IoError::Record {
                path: origin.to_string(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, IoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| IoError::File {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| IoError::Record {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<(), IoError> {
    let path = path.as_ref();
    let wrap = |source| IoError::File {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| wrap(e.into()))?;
        w.write_all(b"\n").map_err(wrap)?;
    }
    w.flush().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_reports_line_numbers() {
        let err = parse_jsonl::<u32>("1\n\n2\nx\n", "mem").unwrap_err();
        assert!(err.to_string().starts_with("mem:4:"));
        assert_eq!(parse_jsonl::<u32>("1\n2\n", "mem").unwrap(), vec![1, 2]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        write_jsonl(&p, &["a".to_string(), "b".to_string()]).unwrap();
        assert_eq!(read_jsonl::<String>(&p).unwrap(), vec!["a", "b"]);
        assert_eq!(std::fs::read_to_string(&p).unwrap(), to_jsonl(&["a", "b"]));
    }
}
