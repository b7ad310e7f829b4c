//! Python bindings for the recmail pipeline. Structured results cross
//! the boundary as JSON strings; inputs are plain strings and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use recmail::composer::{generate as generate_impl, join_list, GenerationConfig};
use recmail::evalkit::{
    average_sentence_bleu, bleu, bleu_tokenize, summarize_study, Corpus, TaskLog,
};
use recmail::model::load_pair;
use recmail::postprocess::{check_clean, postprocess};
use recmail::taxonomy::{extract, ingest_taxonomy, QualKind, QualificationTaxonomy};
use recmail::template::{
    build_library, load_library, save_library, AnnotatedTemplate, ComponentLibrary,
    ComponentRegistry,
};

fn value_error(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// A component library built from annotated templates.
#[pyclass(name = "Library")]
struct Library {
    inner: ComponentLibrary,
}

#[pymethods]
impl Library {
    /// Builds a library from `(id, markup)` pairs.
    #[staticmethod]
    fn from_templates(templates: Vec<(String, String)>) -> PyResult<Self> {
        let parsed = templates
            .into_iter()
            .map(|(id, markup)| AnnotatedTemplate::from_markup(id, &markup))
            .collect::<Result<Vec<_>, _>>()
            .map_err(value_error)?;
        let inner =
            build_library(&parsed, &ComponentRegistry::default_set()).map_err(value_error)?;
        Ok(Library { inner })
    }

    #[staticmethod]
    fn from_json(raw: &str) -> PyResult<Self> {
        let inner = load_library(raw.as_bytes()).map_err(value_error)?;
        Ok(Library { inner })
    }

    fn to_json(&self) -> String {
        String::from_utf8(save_library(&self.inner)).expect("library JSON is UTF-8")
    }

    fn component_names(&self) -> Vec<String> {
        self.inner.entries.keys().cloned().collect()
    }

    fn contents_of(&self, name: &str) -> Option<Vec<String>> {
        self.inner.contents_of(name).map(|c| c.to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.entries.values().map(Vec::len).sum()
    }
}

/// A qualification gazetteer loaded from CSV.
#[pyclass(name = "Taxonomy")]
struct Taxonomy {
    inner: QualificationTaxonomy,
}

#[pymethods]
impl Taxonomy {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        let inner = ingest_taxonomy(text).map_err(value_error)?;
        Ok(Taxonomy { inner })
    }

    /// Extracts qualifications as `(surface, kind, canonical_id)` tuples.
    fn extract(&self, text: &str) -> Vec<(String, String, String)> {
        extract(text, &self.inner)
            .into_iter()
            .map(|entry| {
                let kind = match entry.kind {
                    QualKind::Skill => "skill",
                    QualKind::Occupation => "occupation",
                    QualKind::Language => "language",
                };
                (entry.surface, kind.to_string(), entry.canonical_id)
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Generates one email; returns the full result (body, fills, trace,
/// template source) as a JSON string.
#[pyfunction]
#[pyo3(signature = (job_json, candidate_json, library, taxonomy, config_json=None, seed=None))]
fn generate(
    job_json: &str,
    candidate_json: &str,
    library: PyRef<'_, Library>,
    taxonomy: PyRef<'_, Taxonomy>,
    config_json: Option<&str>,
    seed: Option<u64>,
) -> PyResult<String> {
    let (job, candidate) = load_pair(job_json, candidate_json).map_err(value_error)?;
    let mut config = match config_json {
        Some(raw) => GenerationConfig::from_json(raw).map_err(value_error)?,
        None => GenerationConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let email = generate_impl(&job, &candidate, &library.inner, &taxonomy.inner, &config)
        .map_err(value_error)?;
    serde_json::to_string(&email).map_err(value_error)
}

/// Punctuation deduplication, spacing repair and sentence capitalization.
#[pyfunction]
fn postprocess_text(text: &str) -> String {
    postprocess(text).value
}

/// Returns the first cleanliness violation, or None for clean text.
#[pyfunction]
fn clean_violation(text: &str) -> Option<String> {
    check_clean(text).err()
}

/// Joins items with commas and a final "og".
#[pyfunction]
fn join_danish_list(items: Vec<String>) -> PyResult<String> {
    join_list(&items).map_err(value_error)
}

fn build_corpus(pairs: Vec<(String, Vec<String>)>) -> Corpus {
    Corpus {
        pairs: pairs
            .into_iter()
            .map(|(hyp, refs)| {
                (
                    bleu_tokenize(&hyp),
                    refs.iter().map(|r| bleu_tokenize(r)).collect(),
                )
            })
            .collect(),
    }
}

/// Corpus-level BLEU over `(hypothesis, references)` pairs.
#[pyfunction]
#[pyo3(signature = (pairs, max_n=4))]
fn corpus_bleu(pairs: Vec<(String, Vec<String>)>, max_n: usize) -> PyResult<f64> {
    bleu(&build_corpus(pairs), max_n).map_err(value_error)
}

/// Mean of per-sentence smoothed BLEU over `(hypothesis, references)` pairs.
#[pyfunction]
#[pyo3(signature = (pairs, max_n=4, smooth=true))]
fn mean_sentence_bleu(pairs: Vec<(String, Vec<String>)>, max_n: usize, smooth: bool) -> PyResult<f64> {
    average_sentence_bleu(&build_corpus(pairs), max_n, smooth).map_err(value_error)
}

/// Summarizes recruiter task logs (a JSON array) into per-condition
/// means and time deltas, returned as a JSON string.
#[pyfunction]
fn summarize_study_json(logs_json: &str) -> PyResult<String> {
    let logs: Vec<TaskLog> = serde_json::from_str(logs_json).map_err(value_error)?;
    let summary = summarize_study(&logs).map_err(value_error)?;
    serde_json::to_string(&summary).map_err(value_error)
}

#[pymodule]
fn recmail_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Library>()?;
    m.add_class::<Taxonomy>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(postprocess_text, m)?)?;
    m.add_function(wrap_pyfunction!(clean_violation, m)?)?;
    m.add_function(wrap_pyfunction!(join_danish_list, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_bleu, m)?)?;
    m.add_function(wrap_pyfunction!(mean_sentence_bleu, m)?)?;
    m.add_function(wrap_pyfunction!(summarize_study_json, m)?)?;
    Ok(())
}
