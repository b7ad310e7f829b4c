//! Qualification dictionary and gazetteer matching.
//!
//! The dictionary is ingested from ESCO-style CSV exports (leaf labels
//! only). Extraction is direct dictionary matching over token n-grams:
//! longest span wins, ties go to the leftmost span, spans never overlap.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::model::{CandidateProfile, JobPosting};

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("bad row at line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("taxonomy has no entries")]
    EmptyTaxonomy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualKind {
    Skill,
    Occupation,
    Language,
}

impl QualKind {
    /// Precedence for duplicate surfaces: Language > Occupation > Skill.
    fn precedence(self) -> u8 {
        match self {
            QualKind::Language => 2,
            QualKind::Occupation => 1,
            QualKind::Skill => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    Da,
    En,
}

/// One dictionary entry with a normalized surface form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QualEntry {
    pub surface: String,
    pub kind: QualKind,
    pub lang: Lang,
    pub canonical_id: String,
}

/// The qualification dictionary with a first-token lookup index.
#[derive(Debug, Clone)]
pub struct QualificationTaxonomy {
    by_surface: BTreeMap<String, QualEntry>,
    /// first token -> surfaces starting with it
    index: HashMap<String, Vec<String>>,
    max_ngram: usize,
}

/// Normalizes text for matching: Unicode NFC, lowercase, punctuation to
/// spaces except intra-word hyphens, whitespace collapsed.
pub fn normalize(text: &str) -> String {
    let nfc: String = text.nfc().collect::<String>().to_lowercase();
    let chars: Vec<char> = nfc.chars().collect();
    let mut out = String::with_capacity(nfc.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            out.push(c);
        } else if c == '-'
            && i > 0
            && i + 1 < chars.len()
            && chars[i - 1].is_alphanumeric()
            && chars[i + 1].is_alphanumeric()
        {
            out.push(c);
        } else {
            out.push(' ');
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn tokenize(text: &str) -> Vec<String> {
    normalize(text).split_whitespace().map(str::to_string).collect()
}

impl QualificationTaxonomy {
    pub fn from_entries(entries: impl IntoIterator<Item = QualEntry>) -> Result<Self, TaxonomyError> {
        let mut by_surface: BTreeMap<String, QualEntry> = BTreeMap::new();
        for entry in entries {
            match by_surface.get(&entry.surface) {
                Some(existing) if existing.kind.precedence() >= entry.kind.precedence() => {}
                _ => {
                    by_surface.insert(entry.surface.clone(), entry);
                }
            }
        }
        if by_surface.is_empty() {
            return Err(TaxonomyError::EmptyTaxonomy);
        }
        let mut index: HashMap<String, Vec<String>> = HashMap::new();
        let mut max_ngram = 1;
        for surface in by_surface.keys() {
            let first = surface.split_whitespace().next().unwrap().to_string();
            index.entry(first).or_default().push(surface.clone());
            max_ngram = max_ngram.max(surface.split_whitespace().count());
        }
        Ok(QualificationTaxonomy {
            by_surface,
            index,
            max_ngram,
        })
    }

    pub fn max_ngram(&self) -> usize {
        self.max_ngram
    }

    pub fn len(&self) -> usize {
        self.by_surface.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_surface.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &QualEntry> {
        self.by_surface.values()
    }

    fn lookup(&self, surface: &str) -> Option<&QualEntry> {
        self.by_surface.get(surface)
    }
}

/// Ingests CSV rows `label,kind,lang,id`. Labels are normalized;
/// duplicate surfaces with conflicting kinds resolve by precedence
/// Language > Occupation > Skill.
pub fn ingest_taxonomy(csv_text: &str) -> Result<QualificationTaxonomy, TaxonomyError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(csv_text.as_bytes());
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let record = record.map_err(|e| TaxonomyError::BadRow {
            line,
            reason: e.to_string(),
        })?;
        let bad = |reason: &str| TaxonomyError::BadRow {
            line,
            reason: reason.to_string(),
        };
        if record.len() != 4 {
            return Err(bad(&format!("expected 4 columns, got {}", record.len())));
        }
        let surface = normalize(&record[0]);
        if surface.is_empty() {
            return Err(bad("empty label"));
        }
        let kind = match &record[1] {
            "skill" => QualKind::Skill,
            "occupation" => QualKind::Occupation,
            "language" => QualKind::Language,
            other => return Err(bad(&format!("unknown kind {other:?}"))),
        };
        let lang = match &record[2] {
            "da" => Lang::Da,
            "en" => Lang::En,
            other => return Err(bad(&format!("unknown lang {other:?}"))),
        };
        let id = record[3].to_string();
        if id.is_empty() {
            return Err(bad("empty id"));
        }
        entries.push(QualEntry {
            surface,
            kind,
            lang,
            canonical_id: id,
        });
    }
    QualificationTaxonomy::from_entries(entries)
}

/// Extracts all dictionary entries occurring as token spans in `text`.
/// Overlaps resolve longest-first, then leftmost.
pub fn extract(text: &str, taxonomy: &QualificationTaxonomy) -> BTreeSet<QualEntry> {
    let tokens = tokenize(text);
    let mut spans: Vec<(usize, usize, &QualEntry)> = Vec::new();
    for start in 0..tokens.len() {
        let Some(candidates) = taxonomy.index.get(&tokens[start]) else {
            continue;
        };
        for surface in candidates {
            let len = surface.split_whitespace().count();
            if start + len > tokens.len() {
                continue;
            }
            if tokens[start..start + len].join(" ") == *surface {
                spans.push((len, start, taxonomy.lookup(surface).unwrap()));
            }
        }
    }
    resolve_overlaps(spans)
}

/// Longest-then-leftmost overlap resolution over (length, start, entry)
/// candidate spans.
pub fn resolve_overlaps<'a>(
    mut spans: Vec<(usize, usize, &'a QualEntry)>,
) -> BTreeSet<QualEntry> {
    spans.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut out = BTreeSet::new();
    for (len, start, entry) in spans {
        let end = start + len;
        if taken.iter().any(|&(s, e)| start < e && s < end) {
            continue;
        }
        taken.push((start, end));
        out.insert(entry.clone());
    }
    out
}

/// Matched qualifications for a (job, candidate) pair. The `languages`
/// list never contains the configured default language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct MatchResult {
    pub skills: Vec<String>,
    pub occupations: Vec<String>,
    pub languages: Vec<String>,
}

impl MatchResult {
    pub fn is_empty(&self) -> bool {
        self.skills.is_empty() && self.occupations.is_empty() && self.languages.is_empty()
    }
}

/// Extracts qualifications from all job text fields and all candidate
/// text fields separately, intersects by canonical id and partitions the
/// result into skills, occupations and non-default language skills.
pub fn match_pair(
    job: &JobPosting,
    candidate: &CandidateProfile,
    taxonomy: &QualificationTaxonomy,
    default_language: &str,
) -> MatchResult {
    let job_text = job.text_fields().join("\n");
    let cand_text = candidate.text_fields().join("\n");
    let job_entries = extract(&job_text, taxonomy);
    let cand_entries = extract(&cand_text, taxonomy);
    let cand_ids: BTreeSet<&str> = cand_entries.iter().map(|e| e.canonical_id.as_str()).collect();

    let default_language = normalize(default_language);
    let mut result = MatchResult::default();
    let mut seen_ids = BTreeSet::new();
    for entry in &job_entries {
        if !cand_ids.contains(entry.canonical_id.as_str()) || !seen_ids.insert(&entry.canonical_id) {
            continue;
        }
        // Display form: the label in the job's language (Danish
        // deployment) when available, else any surface for the id.
        let surface = display_surface(entry, taxonomy);
        match entry.kind {
            QualKind::Language => {
                if surface != default_language {
                    result.languages.push(surface);
                }
            }
            QualKind::Occupation => result.occupations.push(surface),
            QualKind::Skill => result.skills.push(surface),
        }
    }
    result.skills.sort();
    result.occupations.sort();
    result.languages.sort();
    result
}

fn display_surface(entry: &QualEntry, taxonomy: &QualificationTaxonomy) -> String {
    if entry.lang == Lang::Da {
        return entry.surface.clone();
    }
    taxonomy
        .entries()
        .filter(|e| e.canonical_id == entry.canonical_id && e.lang == Lang::Da)
        .map(|e| e.surface.clone())
        .next()
        .unwrap_or_else(|| entry.surface.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> QualificationTaxonomy {
        ingest_taxonomy(
            "label,kind,lang,id\n\
             Python,skill,en,s1\n\
             data engineer,occupation,en,o1\n\
             sql,skill,en,s2\n\
             excel,skill,en,s3\n\
             engelsk,language,da,l-en\n\
             dansk,language,da,l-da\n",
        )
        .unwrap()
    }

    #[test]
    fn ingestion_normalizes_and_counts() {
        let tax = ingest_taxonomy(
            "label,kind,lang,id\nPython,skill,en,s1\ndata engineer,occupation,en,o1\n",
        )
        .unwrap();
        assert_eq!(tax.len(), 2);
        assert_eq!(tax.max_ngram(), 2);
        assert!(tax.lookup("python").is_some());
    }

    #[test]
    fn duplicate_label_resolves_language_over_skill() {
        let tax = ingest_taxonomy(
            "label,kind,lang,id\nengelsk,skill,da,s9\nengelsk,language,da,l1\n",
        )
        .unwrap();
        assert_eq!(tax.len(), 1);
        assert_eq!(tax.lookup("engelsk").unwrap().kind, QualKind::Language);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(
            ingest_taxonomy("label,kind,lang,id\n"),
            Err(TaxonomyError::EmptyTaxonomy)
        ));
    }

    #[test]
    fn bad_kind_is_reported_with_line() {
        let err = ingest_taxonomy("label,kind,lang,id\nx,skill,en,s1\ny,verb,en,s2\n").unwrap_err();
        assert!(matches!(err, TaxonomyError::BadRow { line: 3, .. }));
    }

    #[test]
    fn extract_finds_dictionary_hits() {
        let found = extract("Erfaren data engineer med Python", &fixture());
        let surfaces: Vec<&str> = found.iter().map(|e| e.surface.as_str()).collect();
        assert_eq!(surfaces, vec!["data engineer", "python"]);
    }

    #[test]
    fn extract_respects_token_boundaries() {
        let tax = ingest_taxonomy("label,kind,lang,id\ndata engineer,occupation,en,o1\n").unwrap();
        assert!(extract("data engineering", &tax).is_empty());
    }

    #[test]
    fn extract_is_idempotent_under_normalization() {
        let tax = fixture();
        let raw = "Erfaren DATA   engineer, med Python!";
        assert_eq!(extract(&normalize(raw), &tax), extract(raw, &tax));
    }

    #[test]
    fn match_intersects_by_id() {
        let tax = fixture();
        let job = JobPosting {
            id: "j".into(),
            description: "python sql".into(),
            ..Default::default()
        };
        let cand = CandidateProfile {
            id: "c".into(),
            resume: "python excel".into(),
            ..Default::default()
        };
        let m = match_pair(&job, &cand, &tax, "dansk");
        assert_eq!(m.skills, vec!["python"]);
        assert!(m.occupations.is_empty());
        assert!(m.languages.is_empty());
    }

    #[test]
    fn default_language_is_excluded() {
        let tax = fixture();
        let job = JobPosting {
            id: "j".into(),
            description: "engelsk og dansk".into(),
            ..Default::default()
        };
        let cand = CandidateProfile {
            id: "c".into(),
            resume: "engelsk dansk".into(),
            ..Default::default()
        };
        let m = match_pair(&job, &cand, &tax, "dansk");
        assert_eq!(m.languages, vec!["engelsk"]);
    }

    #[test]
    fn disjoint_sets_match_nothing() {
        let tax = fixture();
        let job = JobPosting {
            id: "j".into(),
            description: "sql".into(),
            ..Default::default()
        };
        let cand = CandidateProfile {
            id: "c".into(),
            resume: "excel".into(),
            ..Default::default()
        };
        assert!(match_pair(&job, &cand, &tax, "dansk").is_empty());
    }

    #[test]
    fn match_is_field_order_invariant() {
        let tax = fixture();
        let job = JobPosting {
            id: "j".into(),
            title: "python".into(),
            description: "data engineer".into(),
            ..Default::default()
        };
        let swapped = JobPosting {
            id: "j".into(),
            title: "data engineer".into(),
            description: "python".into(),
            ..Default::default()
        };
        let cand = CandidateProfile {
            id: "c".into(),
            headline: "python data engineer".into(),
            ..Default::default()
        };
        assert_eq!(
            match_pair(&job, &cand, &tax, "dansk"),
            match_pair(&swapped, &cand, &tax, "dansk")
        );
    }
}
