//! The rediscovery pipeline.
//!
//! Eight query methods, a rank classifier, and an escalation engine: derive
//! a query from the missing page's copy (or its tags or neighborhood), run
//! it, classify where the target URI lands, and fall through to the next
//! method only for URIs still undiscovered. A lookup table of success
//! probabilities by title length predicts whether the title query is worth
//! running at all.

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::{strip_stopwords_from_title, ExtractedDoc};
use crate::docfreq::DfProvider;
use crate::providers::{Engine, ProviderError, TagSet};
use crate::search::{Index, ResultPage, SearchQuery};
use crate::signature::{make_signature, SignatureError, SignatureInput, TermBucket};
use crate::stopwords::StopwordSet;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("rank must be at least 1, got {0}")]
    InvalidRank(u64),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("combination must have at least one step")]
    EmptyCombination,
    #[error("combination repeats method {0}")]
    RepeatedMethod(MethodId),
    #[error("title must be non-empty")]
    EmptyTitle,
    #[error("no title length known for {uri}")]
    MissingTitleLength { uri: String },
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Index(#[from] crate::search::IndexError),
    #[error(transparent)]
    Uri(#[from] crate::uri::UriError),
}

/// The eight query methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodId {
    /// 5-term lexical signature of the page.
    LS5,
    /// 7-term lexical signature of the page.
    LS7,
    /// Title as unquoted keywords.
    TI,
    /// Title as a quoted phrase.
    TIQ,
    /// Social bookmarking tags.
    TA,
    /// 5-term signature of the inlink neighborhood.
    LNLS5,
    /// 7-term signature of the inlink neighborhood.
    LNLS7,
    /// Title with stop words removed, unquoted.
    #[serde(rename = "TI_NOSW")]
    TiNosw,
}

impl MethodId {
    pub const ALL: [MethodId; 8] = [
        MethodId::LS5,
        MethodId::LS7,
        MethodId::TI,
        MethodId::TIQ,
        MethodId::TA,
        MethodId::LNLS5,
        MethodId::LNLS7,
        MethodId::TiNosw,
    ];
}

impl std::fmt::Display for MethodId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MethodId::LS5 => "LS5",
            MethodId::LS7 => "LS7",
            MethodId::TI => "TI",
            MethodId::TIQ => "TIQ",
            MethodId::TA => "TA",
            MethodId::LNLS5 => "LNLS5",
            MethodId::LNLS7 => "LNLS7",
            MethodId::TiNosw => "TI_NOSW",
        };
        write!(f, "{s}")
    }
}

impl FromStr for MethodId {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "LS5" => Ok(MethodId::LS5),
            "LS7" => Ok(MethodId::LS7),
            "TI" => Ok(MethodId::TI),
            "TIQ" => Ok(MethodId::TIQ),
            "TA" => Ok(MethodId::TA),
            "LNLS5" => Ok(MethodId::LNLS5),
            "LNLS7" => Ok(MethodId::LNLS7),
            "TI_NOSW" => Ok(MethodId::TiNosw),
            other => Err(PipelineError::UnknownMethod(other.to_string())),
        }
    }
}

/// The four retrieval outcomes, ordered from best to worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankClass {
    Top1,
    Top10,
    Top100,
    Undiscovered,
}

impl std::fmt::Display for RankClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RankClass::Top1 => "top1",
            RankClass::Top10 => "top10",
            RankClass::Top100 => "top100",
            RankClass::Undiscovered => "undiscovered",
        };
        write!(f, "{s}")
    }
}

/// Classify a 1-based rank: 1 is top, 2–10 top-10, 11–100 top-100, anything
/// deeper (or absent) counts as undiscovered — nobody pages past 100.
pub fn classify(rank: Option<u64>) -> Result<RankClass, PipelineError> {
    match rank {
        None => Ok(RankClass::Undiscovered),
        Some(0) => Err(PipelineError::InvalidRank(0)),
        Some(1) => Ok(RankClass::Top1),
        Some(r) if r <= 10 => Ok(RankClass::Top10),
        Some(r) if r <= 100 => Ok(RankClass::Top100),
        Some(_) => Ok(RankClass::Undiscovered),
    }
}

/// The atomic evaluation datum: one method, one engine, one URI, one rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub uri: String,
    pub method: MethodId,
    pub engine_id: String,
    pub rank: Option<u64>,
    pub rank_class: RankClass,
    pub query_terms: Vec<String>,
    pub quoted: bool,
    /// False when the method could not run for this URI (no title, no tags,
    /// no neighborhood); such records count as undiscovered.
    pub available: bool,
}

impl RankRecord {
    fn unavailable(uri: &str, method: MethodId, engine_id: &str) -> Self {
        Self {
            uri: uri.to_string(),
            method,
            engine_id: engine_id.to_string(),
            rank: None,
            rank_class: RankClass::Undiscovered,
            query_terms: Vec::new(),
            quoted: false,
            available: false,
        }
    }
}

/// An ordered fallback chain, e.g. `TI-LS5`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinationSpec {
    pub steps: Vec<MethodId>,
}

impl CombinationSpec {
    pub fn new(steps: Vec<MethodId>) -> Result<Self, PipelineError> {
        if steps.is_empty() {
            return Err(PipelineError::EmptyCombination);
        }
        for (i, step) in steps.iter().enumerate() {
            if steps[..i].contains(step) {
                return Err(PipelineError::RepeatedMethod(*step));
            }
        }
        Ok(Self { steps })
    }

    pub fn label(&self) -> String {
        self.steps
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }
}

impl FromStr for CombinationSpec {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let steps = s
            .split('-')
            .map(MethodId::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        CombinationSpec::new(steps)
    }
}

impl std::fmt::Display for CombinationSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// When to fall through to the next method in a combination.
///
/// The table-replicating default escalates only on undiscovered; stricter
/// settings escalate whenever the result class is worse than the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EscalationPolicy {
    /// Accept any discovered result (escalate only on undiscovered).
    Top100,
    /// Accept top-10 or better.
    Top10,
    /// Accept only the top rank.
    Top1,
}

impl Default for EscalationPolicy {
    fn default() -> Self {
        EscalationPolicy::Top100
    }
}

impl EscalationPolicy {
    pub fn accepts(&self, class: RankClass) -> bool {
        let bound = match self {
            EscalationPolicy::Top100 => RankClass::Top100,
            EscalationPolicy::Top10 => RankClass::Top10,
            EscalationPolicy::Top1 => RankClass::Top1,
        };
        class <= bound
    }
}

/// Everything a method might need to derive its query for one URI.
pub struct MethodInputs<'a> {
    pub doc: &'a ExtractedDoc,
    pub tags: Option<&'a TagSet>,
    pub bucket: Option<&'a TermBucket>,
    pub df: &'a dyn DfProvider,
    pub stopwords: &'a StopwordSet,
}

/// A derived query, or the reason the method cannot run for this URI.
#[derive(Debug, Clone, PartialEq)]
pub enum Derivation {
    Query(SearchQuery),
    Unavailable(&'static str),
}

/// Build the query a method would send for this URI.
///
/// Missing inputs (no title, no tags, no neighborhood, nothing scoreable)
/// yield [`Derivation::Unavailable`] — an expected data condition, distinct
/// from hard errors such as a df provider failure.
pub fn derive_query(method: MethodId, inputs: &MethodInputs<'_>) -> Result<Derivation, PipelineError> {
    let keywords = |terms: Vec<String>| Derivation::Query(SearchQuery::keywords(terms));
    match method {
        MethodId::LS5 | MethodId::LS7 => {
            let n = if method == MethodId::LS5 { 5 } else { 7 };
            if inputs.doc.term_freqs.is_empty() {
                return Ok(Derivation::Unavailable("no scoreable terms"));
            }
            let sig = make_signature(SignatureInput::Doc(inputs.doc), n, inputs.df)?;
            Ok(keywords(sig.term_list()))
        }
        MethodId::LNLS5 | MethodId::LNLS7 => {
            let n = if method == MethodId::LNLS5 { 5 } else { 7 };
            let Some(bucket) = inputs.bucket else {
                return Ok(Derivation::Unavailable("no neighborhood"));
            };
            if bucket.term_freqs.is_empty() {
                return Ok(Derivation::Unavailable("no scoreable terms"));
            }
            let sig = make_signature(SignatureInput::Bucket(bucket), n, inputs.df)?;
            Ok(keywords(sig.term_list()))
        }
        MethodId::TI | MethodId::TIQ => {
            let Some(title) = inputs.doc.title.as_deref() else {
                return Ok(Derivation::Unavailable("no title"));
            };
            let terms: Vec<String> = title.split_whitespace().map(str::to_string).collect();
            if terms.is_empty() {
                return Ok(Derivation::Unavailable("no title"));
            }
            if method == MethodId::TIQ {
                Ok(Derivation::Query(SearchQuery::phrase(terms)))
            } else {
                Ok(keywords(terms))
            }
        }
        MethodId::TiNosw => {
            let Some(title) = inputs.doc.title.as_deref() else {
                return Ok(Derivation::Unavailable("no title"));
            };
            let stripped = strip_stopwords_from_title(title, inputs.stopwords);
            let terms: Vec<String> = stripped.split_whitespace().map(str::to_string).collect();
            if terms.is_empty() {
                return Ok(Derivation::Unavailable("title is all stop words"));
            }
            Ok(keywords(terms))
        }
        MethodId::TA => {
            let Some(tags) = inputs.tags else {
                return Ok(Derivation::Unavailable("no tags"));
            };
            if tags.tags.is_empty() {
                return Ok(Derivation::Unavailable("no tags"));
            }
            // All available tags (the provider already caps at ten), most
            // frequent first.
            Ok(keywords(tags.tags.clone()))
        }
    }
}

/// Run one method for one URI: derive, execute, classify.
pub fn run_method(
    method: MethodId,
    target_uri: &str,
    engine: &Engine,
    inputs: &MethodInputs<'_>,
) -> Result<RankRecord, PipelineError> {
    Ok(run_method_detailed(method, target_uri, engine, inputs)?.0)
}

/// [`run_method`] plus the raw result page (when the method ran), for
/// callers that want to show candidate URIs.
pub fn run_method_detailed(
    method: MethodId,
    target_uri: &str,
    engine: &Engine,
    inputs: &MethodInputs<'_>,
) -> Result<(RankRecord, Option<ResultPage>), PipelineError> {
    let query = match derive_query(method, inputs)? {
        Derivation::Query(q) => q,
        Derivation::Unavailable(_) => {
            return Ok((
                RankRecord::unavailable(target_uri, method, engine.engine_id()),
                None,
            ));
        }
    };
    let page = engine.search(&query)?;
    let rank = Index::rank_of(&page, target_uri)?.map(u64::from);
    let rank_class = classify(rank)?;
    Ok((
        RankRecord {
            uri: crate::uri::normalize(target_uri)?,
            method,
            engine_id: engine.engine_id().to_string(),
            rank,
            rank_class,
            query_terms: query.terms,
            quoted: query.quoted,
            available: true,
        },
        Some(page),
    ))
}

/// Fold lazily produced step records into a combination outcome: stop at
/// the first record the policy accepts; the final record is that one, or
/// the last step's record when every step fell through.
pub fn fold_combination<I, E>(
    records: I,
    policy: EscalationPolicy,
) -> Result<(RankRecord, Vec<RankRecord>), E>
where
    I: IntoIterator<Item = Result<RankRecord, E>>,
{
    let mut trail: Vec<RankRecord> = Vec::new();
    for record in records {
        let record = record?;
        let accepted = policy.accepts(record.rank_class);
        trail.push(record);
        if accepted {
            break;
        }
    }
    let last = trail.last().expect("combination has at least one step").clone();
    Ok((last, trail))
}

/// Execute a fallback chain for one URI. Later steps run only for URIs the
/// earlier steps left undiscovered (or, under stricter policies, ranked
/// worse than the acceptance bound). Returns the final record and the full
/// executed trail.
pub fn run_combination(
    spec: &CombinationSpec,
    target_uri: &str,
    engine: &Engine,
    inputs: &MethodInputs<'_>,
    policy: EscalationPolicy,
) -> Result<(RankRecord, Vec<RankRecord>), PipelineError> {
    fold_combination(
        spec.steps
            .iter()
            .map(|&method| run_method(method, target_uri, engine, inputs)),
        policy,
    )
}

/// Success probabilities for one title length: the chance a title query
/// returns its URI top ranked, in the top 10, in the top 100. Cumulative,
/// so `p1 <= p10 <= p100`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRow {
    pub title_length: u64,
    pub p1: f64,
    pub p10: f64,
    pub p100: f64,
}

/// Distill per-length success probabilities from title-query records.
///
/// `title_lengths` maps each record's URI to its title length in terms.
/// Lengths with no records are omitted; rows come back sorted by length.
pub fn build_probability_table(
    records: &[RankRecord],
    title_lengths: &HashMap<String, u64>,
) -> Result<Vec<ProbabilityRow>, PipelineError> {
    let mut groups: HashMap<u64, (u64, u64, u64, u64)> = HashMap::new();
    for record in records {
        let length = *title_lengths
            .get(&record.uri)
            .ok_or_else(|| PipelineError::MissingTitleLength {
                uri: record.uri.clone(),
            })?;
        let entry = groups.entry(length).or_insert((0, 0, 0, 0));
        entry.0 += 1;
        if let Some(rank) = record.rank {
            if rank == 1 {
                entry.1 += 1;
            }
            if rank <= 10 {
                entry.2 += 1;
            }
            if rank <= 100 {
                entry.3 += 1;
            }
        }
    }
    let mut rows: Vec<ProbabilityRow> = groups
        .into_iter()
        .map(|(title_length, (n, top1, top10, top100))| ProbabilityRow {
            title_length,
            p1: top1 as f64 / n as f64,
            p10: top10 as f64 / n as f64,
            p100: top100 as f64 / n as f64,
        })
        .collect();
    rows.sort_by_key(|r| r.title_length);
    Ok(rows)
}

/// What to do with a title before spending queries on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TitlePrediction {
    /// The table says titles of this length perform well enough.
    RunTitleFirst,
    /// Expected performance is poor; go straight to lexical signatures.
    SkipToLs,
    /// This length never occurred in the data; no prediction.
    UnknownLength,
}

/// Predict whether a title query is worth running: look up the title's
/// length and compare its top-10 success probability with `threshold`.
pub fn predict_title_worth(
    title: &str,
    table: &[ProbabilityRow],
    threshold: f64,
) -> Result<TitlePrediction, PipelineError> {
    let length = title.split_whitespace().count() as u64;
    if length == 0 {
        return Err(PipelineError::EmptyTitle);
    }
    match table.iter().find(|row| row.title_length == length) {
        Some(row) if row.p10 >= threshold => Ok(TitlePrediction::RunTitleFirst),
        Some(_) => Ok(TitlePrediction::SkipToLs),
        None => Ok(TitlePrediction::UnknownLength),
    }
}
