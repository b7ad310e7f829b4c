//! Template-based recruitment email generation.
//!
//! The pipeline parses tag-annotated email templates into a component
//! library, selects and expands a template for a (job, candidate) pair,
//! extracts matched qualifications from a gazetteer-style taxonomy,
//! composes a motivational sentence, fills the remaining slots and
//! post-processes the text. Evaluation helpers (BLEU, study-log
//! aggregation) live in [`evalkit`].

pub mod composer;
pub mod evalkit;
pub mod model;
pub mod postprocess;
pub mod taxonomy;
pub mod template;

pub use composer::{GeneratedEmail, GenerationConfig, TemplateSource};
pub use model::{CandidateProfile, ComponentKind, JobPosting, SlotMarker};
pub use taxonomy::{MatchResult, QualificationTaxonomy};
pub use template::{AnnotatedTemplate, ComponentLibrary, ComponentRegistry};
