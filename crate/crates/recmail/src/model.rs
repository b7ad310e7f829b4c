//! Domain types shared by the whole pipeline: job postings, candidate
//! profiles, component kinds and slot markers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("missing id in {0} document")]
    MissingId(&'static str),
}

/// A job posting as it arrives from the job portal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct JobPosting {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub company: String,
    #[serde(default)]
    pub description: String,
}

/// A candidate profile. `name` feeds the greeting auto-fill slot; every
/// other text field participates in qualification matching.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CandidateProfile {
    pub id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub headline: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub preferred_titles: Vec<String>,
    #[serde(default)]
    pub work_experience: Vec<String>,
    #[serde(default)]
    pub education: Vec<String>,
    #[serde(default)]
    pub resume: String,
    #[serde(default)]
    pub following: BTreeSet<String>,
}

impl JobPosting {
    /// All free-text fields, used for qualification extraction.
    pub fn text_fields(&self) -> Vec<&str> {
        vec![&self.title, &self.company, &self.description]
    }
}

impl CandidateProfile {
    /// All free-text fields, used for qualification extraction.
    /// `name` and `following` are structured fields and stay out.
    pub fn text_fields(&self) -> Vec<&str> {
        let mut fields: Vec<&str> = vec![&self.headline];
        fields.extend(self.keywords.iter().map(String::as_str));
        fields.extend(self.preferred_titles.iter().map(String::as_str));
        fields.extend(self.work_experience.iter().map(String::as_str));
        fields.extend(self.education.iter().map(String::as_str));
        fields.push(&self.resume);
        fields
    }
}

/// The three component classes a template element can belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    /// Structural content, never pair-specific; expanded from the library.
    Functional,
    /// Pair-specific content filled at generation time.
    CaseSpecific,
    /// Case-specific but resolvable directly from structured fields.
    AutoFill,
}

/// An inline placeholder `[% name %]` standing in for a nested component.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SlotMarker {
    pub component_name: String,
}

impl SlotMarker {
    pub fn new(component_name: impl Into<String>) -> Self {
        SlotMarker {
            component_name: component_name.into(),
        }
    }

    /// Serialized form, exactly `[% name %]` with single spaces.
    pub fn render(&self) -> String {
        format!("[% {} %]", self.component_name)
    }

    /// Yields the component names of all markers in `text`, left to right.
    pub fn find_all(text: &str) -> Vec<&str> {
        let mut names = Vec::new();
        let mut rest = text;
        while let Some(start) = rest.find("[% ") {
            let after = &rest[start + 3..];
            match after.find(" %]") {
                Some(end) => {
                    names.push(&after[..end]);
                    rest = &after[end + 3..];
                }
                None => break,
            }
        }
        names
    }
}

fn parse_doc<T: serde::de::DeserializeOwned>(
    raw: &str,
    what: &'static str,
) -> Result<T, ModelError> {
    let value: serde_json::Value = serde_json::from_str(raw)
        .map_err(|e| ModelError::MalformedDocument(format!("{what}: {e}")))?;
    let id_present = value
        .get("id")
        .and_then(|v| v.as_str())
        .is_some_and(|s| !s.is_empty());
    if !id_present {
        return Err(ModelError::MissingId(what));
    }
    serde_json::from_value(value).map_err(|e| ModelError::MalformedDocument(format!("{what}: {e}")))
}

/// Parses a job and a candidate JSON document. Unknown keys are ignored,
/// missing optional fields default to empty.
pub fn load_pair(job_json: &str, candidate_json: &str) -> Result<(JobPosting, CandidateProfile), ModelError> {
    let job = parse_doc::<JobPosting>(job_json, "job")?;
    let cand = parse_doc::<CandidateProfile>(candidate_json, "candidate")?;
    Ok((job, cand))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_pair_copies_fields() {
        let job = r#"{"id":"j1","title":"Softwareudvikler","company":"Acme","description":"..."}"#;
        let cand = r#"{"id":"c1","name":"Kim"}"#;
        let (j, c) = load_pair(job, cand).unwrap();
        assert_eq!(j.title, "Softwareudvikler");
        assert_eq!(c.name, "Kim");
        assert!(c.following.is_empty());
    }

    #[test]
    fn missing_id_is_an_error() {
        let err = load_pair(r#"{"title":"x"}"#, r#"{"id":"c1"}"#).unwrap_err();
        assert!(matches!(err, ModelError::MissingId("job")));
    }

    #[test]
    fn unknown_keys_are_ignored() {
        let job = r#"{"id":"j1","title":"t","salary":"1 mio"}"#;
        let (j, _) = load_pair(job, r#"{"id":"c1"}"#).unwrap();
        assert_eq!(j.id, "j1");
    }

    #[test]
    fn round_trip_preserves_fields() {
        let job = r#"{"id":"j1","title":"t","company":"Acme","description":"d"}"#;
        let (j, _) = load_pair(job, r#"{"id":"c1"}"#).unwrap();
        let back: JobPosting = serde_json::from_str(&serde_json::to_string(&j).unwrap()).unwrap();
        assert_eq!(back, j);
    }

    #[test]
    fn marker_scan_finds_names_in_order() {
        let names = SlotMarker::find_all("Hej [% candidate_name %], [% intro %]");
        assert_eq!(names, vec!["candidate_name", "intro"]);
    }
}
