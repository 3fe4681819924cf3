use std::path::PathBuf;

use clap::Args;
use radlabel::similarity::{export_projection, similarity_report, Embedded, ProjectionRow, DEFAULT_FLAG_THRESHOLD, DEFAULT_K};
use serde::Serialize;
use serde_json::Value;

use super::read_corpus;
use super::synth::build_embedder;
use crate::error::CliResult;
use crate::settings::RunConfig;
use crate::stage::Stage;

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimilarityArgs {
    /// Synthetic sentences or reports (JSON lines with `report_id` and `text`).
    #[arg(long)]
    pub synthetic: PathBuf,
    /// `hashed`, `hashed:<dim>` or `remote:<url>`.
    #[arg(long, default_value = "hashed")]
    pub embedder: String,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_FLAG_THRESHOLD)]
    pub flag_threshold: f64,
}

pub fn similarity(cfg: &RunConfig, args: &SimilarityArgs) -> CliResult<()> {
    let mut st = Stage::new("similarity", cfg);
    let embedder = build_embedder(&st, &args.embedder)?;
    let real = read_corpus(&mut st)?;
    let synth_rows: Vec<Value> = st.read_jsonl(&args.synthetic)?;
    let mut synth = Vec::with_capacity(synth_rows.len());
    for (i, row) in synth_rows.iter().enumerate() {
        let text = row["text"]
            .as_str()
            .ok_or_else(|| st.invalid(format!("{}: row {} has no text", args.synthetic.display(), i + 1)))?;
        let base = row["report_id"].as_str().map_or_else(|| format!("row{i}"), str::to_string);
        let id = match row["index"].as_u64() {
            Some(ix) => format!("{base}#{ix}"),
            None => base,
        };
        synth.push((id, text.to_string()));
    }
    let real_texts: Vec<String> = real.iter().map(|s| s.text.clone()).collect();
    let synth_texts: Vec<String> = synth.iter().map(|(_, t)| t.clone()).collect();
    let real_vecs = embedder.embed(&real_texts).map_err(|e| st.module(e))?;
    let synth_vecs = embedder.embed(&synth_texts).map_err(|e| st.module(e))?;
    let real_e: Vec<Embedded> = real.iter().zip(real_vecs).map(|(s, v)| Embedded::new(s.id().to_string(), v)).collect();
    let synth_e: Vec<Embedded> = synth.iter().zip(synth_vecs).map(|((id, _), v)| Embedded::new(id.clone(), v)).collect();
    let report = similarity_report(&embedder.id(), &synth_e, &real_e, args.k, args.flag_threshold)
        .map_err(|e| st.module(e))?;
    let mut flagged = String::from("synthetic_id\treal_id\tsimilarity\n");
    for f in &report.flagged {
        flagged.push_str(&format!("{}\t{}\t{:.6}\n", f.synthetic_id, f.real_id, f.similarity));
    }
    let rows: Vec<ProjectionRow> = real_e
        .iter()
        .map(|e| (e, "real"))
        .chain(synth_e.iter().map(|e| (e, "synthetic")))
        .map(|(e, source)| ProjectionRow {
            id: e.id.clone(),
            source: source.to_string(),
            vector: e.vector.clone(),
        })
        .collect();
    let csv = export_projection(&rows).map_err(|e| st.module(e))?;
    st.write_json("similarity.json", &report)?;
    st.write("flagged.tsv", flagged.as_bytes())?;
    st.write("projection.csv", csv.as_bytes())?;
    st.finish(args)?;
    Ok(())
}
