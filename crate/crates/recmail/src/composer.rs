//! Email generation: template selection with company override, iterative
//! slot expansion, motivational sentence composition and slot filling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CandidateProfile, ComponentKind, JobPosting, SlotMarker};
use crate::postprocess::{postprocess_with, PostprocessOptions};
use crate::taxonomy::{match_pair, MatchResult, QualificationTaxonomy};
use crate::template::{normalize_company, ComponentLibrary, SKELETON_FOLLOWER, SKELETON_NON_FOLLOWER};

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("expansion depth exceeded at component {0:?} (cyclic library?)")]
    DepthExceeded(String),
    #[error("unknown component {0:?}")]
    UnknownComponent(String),
    #[error("cannot join an empty list")]
    EmptyList,
    #[error("no motivation templates in the library")]
    NoMotivationTemplates,
    #[error("no fill rule for slot {0:?}")]
    UnfillableSlot(String),
    #[error("trace replay mismatch at component {0:?}")]
    TraceMismatch(String),
}

/// Where the email's template came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemplateSource {
    CompanySpecific,
    SynthesizedFollower,
    SynthesizedNonFollower,
}

fn default_language() -> String {
    "dansk".to_string()
}
fn default_depth() -> usize {
    16
}
fn default_fallback_motivations() -> Vec<String> {
    vec![
        "Vi synes, at din profil er et rigtig godt match til stillingen.".to_string(),
        "Din baggrund passer godt til det, vi leder efter.".to_string(),
    ]
}
fn default_skill_conj() -> String {
    "dine kompetencer inden for {}".to_string()
}
fn default_occupation_conj() -> String {
    "din erfaring som {}".to_string()
}
fn default_language_conj() -> String {
    "Dine sprogkundskaber i {} er desuden et stort plus.".to_string()
}
fn default_pair_connector() -> String {
    " og ".to_string()
}
fn default_fallback_clause() -> String {
    "din spændende profil".to_string()
}
fn default_neutral_salutation() -> String {
    "kandidat".to_string()
}
fn default_recruiter_name() -> String {
    "rekrutteringsteamet".to_string()
}
fn default_apply_link() -> String {
    "https://example.com/apply".to_string()
}

/// Knobs for the generation pipeline. Clause templates carry exactly one
/// `{}` slot; the connector strings ship with Danish defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub seed: u64,
    pub default_language: String,
    pub max_expansion_depth: usize,
    pub fallback_motivations: Vec<String>,
    pub skill_conj: String,
    pub occupation_conj: String,
    pub language_conj: String,
    pub pair_connector: String,
    /// Stands in for a missing side of a two-slot motivation template.
    pub fallback_clause: String,
    /// Used for the candidate-name slot when the profile has no name.
    pub neutral_salutation: String,
    pub recruiter_name: String,
    pub apply_link: String,
    /// Wrap case-specific insertions in `{...}` in the output.
    pub mark_fills: bool,
    /// Extra abbreviations for the post-processing step.
    pub abbreviations: Option<Vec<String>>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            seed: 0,
            default_language: default_language(),
            max_expansion_depth: default_depth(),
            fallback_motivations: default_fallback_motivations(),
            skill_conj: default_skill_conj(),
            occupation_conj: default_occupation_conj(),
            language_conj: default_language_conj(),
            pair_connector: default_pair_connector(),
            fallback_clause: default_fallback_clause(),
            neutral_salutation: default_neutral_salutation(),
            recruiter_name: default_recruiter_name(),
            apply_link: default_apply_link(),
            mark_fills: false,
            abbreviations: None,
        }
    }
}

impl GenerationConfig {
    pub fn from_json(raw: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(raw)
    }

    fn postprocess_options(&self) -> PostprocessOptions {
        let mut options = PostprocessOptions::default();
        if let Some(extra) = &self.abbreviations {
            options.abbreviations.extend(extra.iter().cloned());
        }
        options
    }
}

/// One random choice made during expansion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub depth: usize,
    pub component_name: String,
    pub chosen_index: usize,
}

pub type ExpansionTrace = Vec<TraceStep>;

/// The final email plus everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedEmail {
    pub body: String,
    pub template_source: TemplateSource,
    pub fills: Vec<(String, String)>,
    pub seed: u64,
    pub trace: ExpansionTrace,
}

/// Picks the template for a pair: a stored company template always wins;
/// otherwise the skeleton matching the candidate's follower status.
pub fn select_template(
    job: &JobPosting,
    candidate: &CandidateProfile,
    library: &ComponentLibrary,
    rng: &mut impl Rng,
) -> (String, TemplateSource) {
    let company = normalize_company(&job.company);
    if !company.is_empty() {
        if let Some(bodies) = library.company_templates.get(&company) {
            if !bodies.is_empty() {
                let index = rng.random_range(0..bodies.len());
                return (bodies[index].clone(), TemplateSource::CompanySpecific);
            }
        }
    }
    let is_follower = !company.is_empty()
        && candidate
            .following
            .iter()
            .any(|f| normalize_company(f) == company);
    let (key, source) = if is_follower {
        (SKELETON_FOLLOWER, TemplateSource::SynthesizedFollower)
    } else {
        (SKELETON_NON_FOLLOWER, TemplateSource::SynthesizedNonFollower)
    };
    let skeletons = library.contents_of(key).expect("library invariant: skeletons exist");
    let index = rng.random_range(0..skeletons.len());
    (skeletons[index].clone(), source)
}

enum Chooser<'a> {
    Random(&'a mut dyn FnMut(usize) -> usize),
    Replay(std::vec::IntoIter<TraceStep>),
}

fn expand_inner(
    template_text: &str,
    library: &ComponentLibrary,
    max_depth: usize,
    chooser: &mut Chooser<'_>,
) -> Result<(String, ExpansionTrace), ComposeError> {
    let mut current = template_text.to_string();
    let mut trace = ExpansionTrace::new();
    for depth in 0.. {
        let functional: Vec<String> = SlotMarker::find_all(&current)
            .into_iter()
            .filter(|name| library.kind_of(name) == Some(ComponentKind::Functional))
            .map(str::to_string)
            .collect();
        // unknown markers fail fast
        if let Some(unknown) = SlotMarker::find_all(&current)
            .into_iter()
            .find(|name| library.kind_of(name).is_none())
        {
            return Err(ComposeError::UnknownComponent(unknown.to_string()));
        }
        if functional.is_empty() {
            return Ok((current, trace));
        }
        if depth >= max_depth {
            return Err(ComposeError::DepthExceeded(functional[0].clone()));
        }
        // replace this pass's functional markers left to right
        let mut next = String::with_capacity(current.len());
        let mut rest = current.as_str();
        for name in &functional {
            let marker = SlotMarker::new(name).render();
            let at = rest.find(&marker).expect("marker still present");
            next.push_str(&rest[..at]);
            let contents = library
                .contents_of(name)
                .filter(|c| !c.is_empty())
                .ok_or_else(|| ComposeError::UnknownComponent(name.clone()))?;
            let chosen_index = match chooser {
                Chooser::Random(pick) => pick(contents.len()),
                Chooser::Replay(steps) => {
                    let step = steps
                        .next()
                        .ok_or_else(|| ComposeError::TraceMismatch(name.clone()))?;
                    if step.component_name != *name || step.chosen_index >= contents.len() {
                        return Err(ComposeError::TraceMismatch(name.clone()));
                    }
                    step.chosen_index
                }
            };
            next.push_str(&contents[chosen_index]);
            trace.push(TraceStep {
                depth,
                component_name: name.clone(),
                chosen_index,
            });
            rest = &rest[at + marker.len()..];
        }
        next.push_str(rest);
        current = next;
    }
    unreachable!()
}

/// Iteratively replaces functional markers with randomly chosen library
/// contents until none remain. Case-specific and auto-fill markers stay.
pub fn expand(
    template_text: &str,
    library: &ComponentLibrary,
    rng: &mut impl Rng,
    config: &GenerationConfig,
) -> Result<(String, ExpansionTrace), ComposeError> {
    let mut pick = |n: usize| rng.random_range(0..n);
    expand_inner(
        template_text,
        library,
        config.max_expansion_depth,
        &mut Chooser::Random(&mut pick),
    )
}

/// Re-runs an expansion with the recorded choices forced; reproduces the
/// identical template.
pub fn replay_expand(
    template_text: &str,
    library: &ComponentLibrary,
    trace: &ExpansionTrace,
    config: &GenerationConfig,
) -> Result<String, ComposeError> {
    let mut chooser = Chooser::Replay(trace.clone().into_iter());
    let (text, _) = expand_inner(template_text, library, config.max_expansion_depth, &mut chooser)?;
    Ok(text)
}

/// Joins items with commas and a final "og": `a, b og c`.
pub fn join_list(items: &[String]) -> Result<String, ComposeError> {
    match items {
        [] => Err(ComposeError::EmptyList),
        [only] => Ok(only.clone()),
        [head @ .., last] => Ok(format!("{} og {}", head.join(", "), last)),
    }
}

fn fill_one_slot(template: &str, value: &str) -> String {
    template.replacen("{}", value, 1)
}

/// Builds the motivational sentence from the matched qualifications, or
/// picks a fallback when nothing matched.
pub fn compose_motivation(
    matched: &MatchResult,
    motivation_templates: &[String],
    rng: &mut impl Rng,
    config: &GenerationConfig,
) -> Result<String, ComposeError> {
    if motivation_templates.is_empty() {
        return Err(ComposeError::NoMotivationTemplates);
    }
    if matched.is_empty() {
        let index = rng.random_range(0..config.fallback_motivations.len());
        return Ok(config.fallback_motivations[index].clone());
    }
    let template = &motivation_templates[rng.random_range(0..motivation_templates.len())];
    let slots = template.matches("{}").count();

    let skill_clause = (!matched.skills.is_empty())
        .then(|| fill_one_slot(&config.skill_conj, &join_list(&matched.skills).unwrap()));
    let occupation_clause = (!matched.occupations.is_empty())
        .then(|| fill_one_slot(&config.occupation_conj, &join_list(&matched.occupations).unwrap()));

    let mut text = match slots {
        0 => template.clone(),
        1 => {
            let combined = match (&skill_clause, &occupation_clause) {
                (Some(s), Some(o)) => format!("{s}{}{o}", config.pair_connector),
                (Some(s), None) => s.clone(),
                (None, Some(o)) => o.clone(),
                // only languages matched
                (None, None) => config.fallback_clause.clone(),
            };
            fill_one_slot(template, &combined)
        }
        _ => {
            let first = skill_clause.clone().unwrap_or_else(|| config.fallback_clause.clone());
            let second = occupation_clause
                .clone()
                .unwrap_or_else(|| config.fallback_clause.clone());
            fill_one_slot(&fill_one_slot(template, &first), &second)
        }
    };
    if !matched.languages.is_empty() {
        let language_clause =
            fill_one_slot(&config.language_conj, &join_list(&matched.languages).unwrap());
        text = format!("{text} {language_clause}");
    }
    Ok(text)
}

/// Resolves the remaining case-specific and auto-fill markers against
/// structured fields, the motivation text and the configuration.
pub fn fill_slots(
    expanded_template: &str,
    job: &JobPosting,
    candidate: &CandidateProfile,
    matched: &MatchResult,
    motivation_text: &str,
    config: &GenerationConfig,
) -> Result<(String, Vec<(String, String)>), ComposeError> {
    let mut fills = Vec::new();
    let mut out = String::with_capacity(expanded_template.len());
    let mut rest = expanded_template;
    for name in SlotMarker::find_all(expanded_template) {
        let marker = SlotMarker::new(name).render();
        let at = rest.find(&marker).expect("marker still present");
        out.push_str(&rest[..at]);
        let non_empty_or = |value: &str, fallback: &str| {
            if value.is_empty() {
                fallback.to_string()
            } else {
                value.to_string()
            }
        };
        let value = match name {
            "candidate_name" => non_empty_or(&candidate.name, &config.neutral_salutation),
            "job_title" => non_empty_or(&job.title, "stillingen"),
            "company_name" => non_empty_or(&job.company, "virksomheden"),
            "recruiter_name" => config.recruiter_name.clone(),
            "apply_link" => config.apply_link.clone(),
            "motivation" => motivation_text.to_string(),
            "matched_skills" => match join_list(&matched.skills) {
                Ok(joined) => joined,
                Err(_) => config.fallback_clause.clone(),
            },
            "matched_occupations" => match join_list(&matched.occupations) {
                Ok(joined) => joined,
                Err(_) => config.fallback_clause.clone(),
            },
            other => return Err(ComposeError::UnfillableSlot(other.to_string())),
        };
        if config.mark_fills {
            out.push('{');
            out.push_str(&value);
            out.push('}');
        } else {
            out.push_str(&value);
        }
        fills.push((name.to_string(), value));
        rest = &rest[at + marker.len()..];
    }
    out.push_str(rest);
    Ok((out, fills))
}

/// The full pipeline for one pair: select, expand, match, compose, fill,
/// post-process. Deterministic given inputs and `config.seed`.
pub fn generate(
    job: &JobPosting,
    candidate: &CandidateProfile,
    library: &ComponentLibrary,
    taxonomy: &QualificationTaxonomy,
    config: &GenerationConfig,
) -> Result<GeneratedEmail, ComposeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (template, template_source) = select_template(job, candidate, library, &mut rng);
    let (expanded, trace) = expand(&template, library, &mut rng, config)?;
    let matched = match_pair(job, candidate, taxonomy, &config.default_language);
    let needs_motivation = SlotMarker::find_all(&expanded)
        .iter()
        .any(|name| *name == "motivation");
    let motivation_text = if needs_motivation {
        let templates = library.contents_of("motivation").unwrap_or(&[]);
        compose_motivation(&matched, templates, &mut rng, config)?
    } else {
        String::new()
    };
    let (filled, fills) = fill_slots(&expanded, job, candidate, &matched, &motivation_text, config)?;
    let body = postprocess_with(&filled, &config.postprocess_options()).value;
    Ok(GeneratedEmail {
        body,
        template_source,
        fills,
        seed: config.seed,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::{build_library, AnnotatedTemplate, ComponentRegistry};

    fn library() -> ComponentLibrary {
        let registry = ComponentRegistry::default_set();
        let templates = vec![
            AnnotatedTemplate::from_markup(
                "g1",
                "<template><greeting>Hej <candidate_name>Navn</candidate_name>,</greeting>\n<motivation>Vi lagde mærke til {}.</motivation>\n<signature>Venlig hilsen <recruiter_name>NN</recruiter_name></signature></template>",
            )
            .unwrap(),
            AnnotatedTemplate::from_markup(
                "g2",
                "<template audience=\"follower\"><greeting>Kære <candidate_name>Navn</candidate_name>,</greeting>\n<follower_note>Du følger <company_name>X</company_name>.</follower_note>\n<motivation>Vi bemærkede {} og {}.</motivation></template>",
            )
            .unwrap(),
            AnnotatedTemplate::from_markup(
                "c1",
                "<template company=\"Acme\"><greeting>Hej <candidate_name>N</candidate_name>,</greeting> søg hos Acme!</template>",
            )
            .unwrap(),
        ];
        build_library(&templates, &registry).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn company_template_always_wins() {
        let lib = library();
        let job = JobPosting {
            id: "j".into(),
            company: "ACME".into(),
            ..Default::default()
        };
        let cand = CandidateProfile {
            id: "c".into(),
            ..Default::default()
        };
        for seed in 0..20 {
            let (_, source) = select_template(&job, &cand, &lib, &mut rng(seed));
            assert_eq!(source, TemplateSource::CompanySpecific);
        }
    }

    #[test]
    fn follower_branch_uses_follower_skeleton() {
        let lib = library();
        let job = JobPosting {
            id: "j".into(),
            company: "Beta".into(),
            ..Default::default()
        };
        let mut cand = CandidateProfile {
            id: "c".into(),
            ..Default::default()
        };
        cand.following.insert("beta".into());
        let (_, source) = select_template(&job, &cand, &lib, &mut rng(1));
        assert_eq!(source, TemplateSource::SynthesizedFollower);
    }

    #[test]
    fn selection_is_deterministic_per_seed() {
        let lib = library();
        let job = JobPosting {
            id: "j".into(),
            company: "Beta".into(),
            ..Default::default()
        };
        let cand = CandidateProfile {
            id: "c".into(),
            ..Default::default()
        };
        let a = select_template(&job, &cand, &lib, &mut rng(5));
        let b = select_template(&job, &cand, &lib, &mut rng(5));
        assert_eq!(a, b);
    }

    #[test]
    fn expand_leaves_autofill_markers() {
        let lib = library();
        let config = GenerationConfig::default();
        let (text, _) =
            expand("[% greeting %]", &lib, &mut rng(0), &config).unwrap();
        assert!(text.contains("[% candidate_name %]"));
        assert!(!text.contains("[% greeting %]"));
    }

    #[test]
    fn expand_without_markers_is_identity() {
        let lib = library();
        let config = GenerationConfig::default();
        let (text, trace) = expand("Ingen pladsholdere.", &lib, &mut rng(0), &config).unwrap();
        assert_eq!(text, "Ingen pladsholdere.");
        assert!(trace.is_empty());
    }

    #[test]
    fn cyclic_library_exceeds_depth() {
        let mut lib = library();
        lib.entries
            .insert("intro".to_string(), vec!["[% intro %]".to_string()]);
        lib.kinds
            .insert("intro".to_string(), ComponentKind::Functional);
        let config = GenerationConfig::default();
        let err = expand("[% intro %]", &lib, &mut rng(0), &config).unwrap_err();
        assert!(matches!(err, ComposeError::DepthExceeded(ref n) if n == "intro"));
    }

    #[test]
    fn join_list_grammar() {
        let v = |items: &[&str]| items.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(join_list(&v(&["a"])).unwrap(), "a");
        assert_eq!(join_list(&v(&["a", "b"])).unwrap(), "a og b");
        assert_eq!(join_list(&v(&["a", "b", "c"])).unwrap(), "a, b og c");
        assert!(matches!(join_list(&[]), Err(ComposeError::EmptyList)));
    }

    #[test]
    fn motivation_combines_skill_and_occupation_clauses() {
        let config = GenerationConfig::default();
        let matched = MatchResult {
            skills: vec!["python".into(), "sql".into()],
            occupations: vec!["data engineer".into()],
            languages: vec![],
        };
        let templates = vec!["Vi bemærkede {}.".to_string()];
        let text = compose_motivation(&matched, &templates, &mut rng(0), &config).unwrap();
        let expected = format!(
            "Vi bemærkede {}{}{}.",
            fill_one_slot(&config.skill_conj, "python og sql"),
            config.pair_connector,
            fill_one_slot(&config.occupation_conj, "data engineer"),
        );
        assert_eq!(text, expected);
    }

    #[test]
    fn empty_match_uses_fallback() {
        let config = GenerationConfig::default();
        let templates = vec!["Vi bemærkede {}.".to_string()];
        let text =
            compose_motivation(&MatchResult::default(), &templates, &mut rng(3), &config).unwrap();
        assert!(config.fallback_motivations.contains(&text));
    }

    #[test]
    fn two_slot_template_with_skills_only() {
        let config = GenerationConfig::default();
        let matched = MatchResult {
            skills: vec!["python".into()],
            occupations: vec![],
            languages: vec![],
        };
        let templates = vec!["Vi så {} samt {}.".to_string()];
        let text = compose_motivation(&matched, &templates, &mut rng(0), &config).unwrap();
        let expected = format!(
            "Vi så {} samt {}.",
            fill_one_slot(&config.skill_conj, "python"),
            config.fallback_clause,
        );
        assert_eq!(text, expected);
    }

    #[test]
    fn language_clause_is_appended() {
        let config = GenerationConfig::default();
        let matched = MatchResult {
            skills: vec!["python".into()],
            occupations: vec![],
            languages: vec!["engelsk".into()],
        };
        let templates = vec!["Vi så {}.".to_string()];
        let text = compose_motivation(&matched, &templates, &mut rng(0), &config).unwrap();
        assert!(text.contains("engelsk"));
        assert!(text.ends_with(&fill_one_slot(&config.language_conj, "engelsk")));
    }

    #[test]
    fn fill_resolves_autofill_slots() {
        let config = GenerationConfig::default();
        let job = JobPosting {
            id: "j".into(),
            title: "Softwareudvikler".into(),
            company: "Acme".into(),
            ..Default::default()
        };
        let cand = CandidateProfile {
            id: "c".into(),
            name: "Kim".into(),
            ..Default::default()
        };
        let (text, fills) = fill_slots(
            "Hej [% candidate_name %], om [% job_title %] hos [% company_name %]",
            &job,
            &cand,
            &MatchResult::default(),
            "",
            &config,
        )
        .unwrap();
        assert_eq!(text, "Hej Kim, om Softwareudvikler hos Acme");
        assert_eq!(fills.len(), 3);
    }

    #[test]
    fn unmapped_slot_is_unfillable() {
        let config = GenerationConfig::default();
        let err = fill_slots(
            "[% budget %]",
            &JobPosting::default(),
            &CandidateProfile::default(),
            &MatchResult::default(),
            "",
            &config,
        )
        .unwrap_err();
        assert!(matches!(err, ComposeError::UnfillableSlot(ref n) if n == "budget"));
    }

    #[test]
    fn generate_is_deterministic_and_marker_free() {
        let lib = library();
        let tax = crate::taxonomy::ingest_taxonomy(
            "label,kind,lang,id\npython,skill,en,s1\n",
        )
        .unwrap();
        let job = JobPosting {
            id: "j".into(),
            title: "Udvikler".into(),
            company: "Beta".into(),
            description: "python".into(),
        };
        let cand = CandidateProfile {
            id: "c".into(),
            name: "Kim".into(),
            resume: "python".into(),
            ..Default::default()
        };
        let config = GenerationConfig {
            seed: 7,
            ..Default::default()
        };
        let a = generate(&job, &cand, &lib, &tax, &config).unwrap();
        let b = generate(&job, &cand, &lib, &tax, &config).unwrap();
        assert_eq!(a, b);
        assert!(!a.body.contains("[%"));
    }

    #[test]
    fn trace_replay_reproduces_template() {
        let lib = library();
        let config = GenerationConfig { seed: 11, ..Default::default() };
        let mut r = rng(11);
        let (expanded, trace) =
            expand("[% skeleton_non_follower %]", &lib, &mut r, &config).unwrap();
        let replayed =
            replay_expand("[% skeleton_non_follower %]", &lib, &trace, &config).unwrap();
        assert_eq!(replayed, expanded);
    }
}
