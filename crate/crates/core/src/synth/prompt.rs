use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::corpus::{EntitySpan, EntityType};

/// Requested output shape; labels use the extractor's span record keys.
pub const OUTPUT_SCHEMA: &str = r#"{"text": string, "labels": [{"entity_type": "ANAT-DP" | "OBS-DP" | "OBS-DA" | "OBS-U", "entity_value": string, "start_position": int, "end_position": int}]}"#;

/// A labeled demonstration sentence drawn from the retrieval pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: String,
    pub text: String,
    pub labels: Vec<EntitySpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPrompt {
    pub instruction: String,
    pub keywords: Vec<String>,
    pub exemplars: Vec<Exemplar>,
    pub schema: String,
    /// The rendered prompt sent to the generator.
    pub text: String,
}

impl GenerationPrompt {
    pub fn exemplar_ids(&self) -> Vec<String> {
        self.exemplars.iter().map(|e| e.id.clone()).collect()
    }
}

fn instruction() -> String {
    let mut s = String::from(
        "Write one new chest radiograph report sentence and label its entities at the same time. \
         Entity types:\n",
    );
    for t in EntityType::ALL {
        s.push_str(&format!("- {}: {}\n", t.as_str(), t.description()));
    }
    s.push_str(
        "Every entity_value must be copied verbatim from the sentence, and its positions are \
         character offsets into the sentence (end exclusive).",
    );
    s
}

/// Assemble the few-shot generation prompt; needs 2 or 3 exemplars.
pub fn build_prompt(
    keywords: &[String],
    exemplars: Vec<Exemplar>,
    schema: &str,
) -> Result<GenerationPrompt, SynthError> {
    if !(2..=3).contains(&exemplars.len()) {
        return Err(SynthError::ExemplarCount(exemplars.len()));
    }
    let instruction = instruction();
    let mut text = format!("{instruction}\n");
    for (i, ex) in exemplars.iter().enumerate() {
        let labels = serde_json::to_string(&ex.labels).expect("spans serialize");
        text.push_str(&format!("\nExample {}\nSentence: {}\nLabels: {labels}\n", i + 1, ex.text.trim_end()));
    }
    text.push_str(&format!("\nUse these keywords: {}\n", keywords.join(", ")));
    text.push_str(&format!("Reply with one JSON object of the form {schema}\n"));
    Ok(GenerationPrompt {
        instruction,
        keywords: keywords.to_vec(),
        exemplars,
        schema: schema.to_string(),
        text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityType::*;

    fn exemplars() -> Vec<Exemplar> {
        vec![
            Exemplar {
                id: "r1/0".into(),
                text: "Possible small effusion. ".into(),
                labels: vec![EntitySpan::new(ObsU, "effusion", 15, 23)],
            },
            Exemplar {
                id: "r2/1".into(),
                text: "The heart is normal.".into(),
                labels: vec![EntitySpan::new(AnatDp, "heart", 4, 9)],
            },
        ]
    }

    #[test]
    fn contains_demonstrations_and_keywords() {
        let kw: Vec<String> = ["lung", "pneumonia", "enlarged"].iter().map(|s| s.to_string()).collect();
        let p = build_prompt(&kw, exemplars(), OUTPUT_SCHEMA).unwrap();
        for needle in ["Possible small effusion.", "The heart is normal.", "lung", "pneumonia", "enlarged"] {
            assert!(p.text.contains(needle), "{needle}");
        }
        assert!(p.text.contains(r#""entity_type":"OBS-U","entity_value":"effusion""#));
        assert_eq!(p, build_prompt(&kw, exemplars(), OUTPUT_SCHEMA).unwrap());
    }

    #[test]
    fn exemplar_count_is_checked() {
        let mut one = exemplars();
        one.truncate(1);
        assert!(matches!(build_prompt(&[], one, OUTPUT_SCHEMA), Err(SynthError::ExemplarCount(1))));
        let mut four = exemplars();
        four.extend(exemplars());
        assert!(build_prompt(&[], four, OUTPUT_SCHEMA).is_err());
    }
}
