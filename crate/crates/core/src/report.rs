//! Provenance attached to every file the command-line tool writes.

use serde::{Deserialize, Serialize};

/// Schema version, RNG seed and the exact command line of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub schema_version: u32,
    pub seed: u64,
    pub invocation: Vec<String>,
}

impl Provenance {
    pub fn new(seed: u64, invocation: Vec<String>) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            seed,
            invocation,
        }
    }

    /// Lines for the `#` header of a CSV file.
    pub fn header_lines(&self) -> Vec<String> {
        vec![
            format!("schema_version: {}", self.schema_version),
            format!("seed: {}", self.seed),
            format!("invocation: {}", self.invocation.join(" ")),
        ]
    }
}

/// A JSON document: provenance followed by the payload fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub body: T,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Body {
        value: f64,
    }

    #[test]
    fn report_round_trip() {
        let r = Report {
            provenance: Provenance::new(7, vec!["meshlab".into(), "hom".into()]),
            body: Body { value: 0.81 },
        };
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"seed\":7") && json.contains("\"value\":0.81"));
        let back: Report<Body> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.provenance.header_lines()[2], "invocation: meshlab hom");
    }
}
