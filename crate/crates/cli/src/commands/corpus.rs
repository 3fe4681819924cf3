use clap::{Args, ValueEnum};
use radlabel::corpus::{build_entity_dataset, corpus_stats, parse_radgraph, split_sentences, Split};
use radlabel::extractor::instruction_for;
use radlabel::{Report, Sentence};
use serde::Serialize;
use serde_json::json;

use super::{entity_list, read_corpus};
use crate::error::CliResult;
use crate::settings::RunConfig;
use crate::stage::Stage;

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {}

pub fn ingest(cfg: &RunConfig, args: &IngestArgs) -> CliResult<()> {
    let mut st = Stage::new("ingest", cfg);
    let path = cfg.corpus(st.name)?;
    let bytes = st.read(path)?;
    let reports = parse_radgraph(&bytes).map_err(|e| st.invalid(format!("{}: {e}", path.display())))?;
    st.write_jsonl("reports.jsonl", &reports)?;
    st.write_json("corpus_stats.json", &corpus_stats(&reports))?;
    st.finish(args)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {}

pub fn split(cfg: &RunConfig, args: &SplitArgs) -> CliResult<()> {
    let mut st = Stage::new("split", cfg);
    let reports: Vec<Report> = st.read_jsonl(cfg.corpus(st.name)?)?;
    let mut all = Vec::new();
    let mut by_split: Vec<(Split, Vec<Sentence>)> = vec![(Split::Train, vec![]), (Split::Dev, vec![]), (Split::Test, vec![])];
    for r in &reports {
        let sentences = split_sentences(r);
        let bucket = by_split.iter_mut().find(|(s, _)| *s == r.split).expect("every split listed");
        bucket.1.extend(sentences.iter().cloned());
        all.extend(sentences);
    }
    st.write_jsonl("sentences.jsonl", &all)?;
    for (split, sentences) in &by_split {
        let tag = serde_json::to_value(split).expect("split serializes");
        st.write_jsonl(&format!("sentences-{}.jsonl", tag.as_str().unwrap_or_default()), sentences)?;
    }
    st.finish(args)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// Example records with the expected span list.
    Examples,
    /// `instruction` / `input` / `output` records, output as a JSON string.
    Instruction,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildDatasetArgs {
    /// Entity types to build; all four when omitted.
    #[arg(long = "entity")]
    pub entities: Vec<String>,
    /// Keep only sentences that contain the target entity.
    #[arg(long)]
    pub no_negatives: bool,
    #[arg(long, value_enum, default_value = "examples")]
    pub format: DatasetFormat,
}

pub fn build_dataset(cfg: &RunConfig, args: &BuildDatasetArgs) -> CliResult<()> {
    let mut st = Stage::new("build-dataset", cfg);
    let entities = entity_list(&st, &args.entities)?;
    let sentences = read_corpus(&mut st)?;
    let mut summary = String::from("entity_type\texamples\tpositive\tnegative\n");
    for entity in entities {
        let ds = build_entity_dataset(&sentences, entity, !args.no_negatives);
        summary.push_str(&format!("{entity}\t{}\t{}\t{}\n", ds.len(), ds.positive_count, ds.negative_count));
        let name = format!("dataset-{entity}.jsonl");
        match args.format {
            DatasetFormat::Examples => st.write_jsonl(&name, &ds.examples)?,
            DatasetFormat::Instruction => {
                let instruction = instruction_for(entity);
                let rows: Vec<serde_json::Value> = ds
                    .examples
                    .iter()
                    .map(|e| {
                        json!({
                            "example_id": e.example_id,
                            "instruction": instruction,
                            "input": e.text,
                            "output": serde_json::to_string(&e.expected_output).expect("spans serialize"),
                        })
                    })
                    .collect();
                st.write_jsonl(&name, &rows)?
            }
        }
    }
    st.write("datasets.tsv", summary.as_bytes())?;
    st.finish(args)?;
    Ok(())
}
