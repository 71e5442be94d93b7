//! Experiment harness.
//!
//! Replays the full protocol at desk scale: ingest a corpus manifest, apply
//! the sampling filters (minimum length, English), run every method and
//! fallback combination over every accepted URI against one engine, and
//! aggregate the outcomes into the familiar percentage tables plus title
//! analytics.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::{
    extract_text, passes_corpus_filter, title_stats, ExtractedDoc, FilterDecision, RawPage,
    DEFAULT_ENGLISH_RATIO, DEFAULT_MIN_TERMS,
};
use crate::docfreq::DfProvider;
use crate::pipeline::{
    build_probability_table, run_combination, run_method, CombinationSpec, EscalationPolicy,
    MethodId, MethodInputs, PipelineError, ProbabilityRow, RankClass, RankRecord,
};
use crate::providers::{Engine, TagSet};
use crate::signature::{build_term_bucket, TermBucket};
use crate::stopwords::StopwordSet;
use crate::uri;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error("manifest {path} line {line}: {message}")]
    ManifestLine {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate URI in manifest: {first:?} and {second:?} both normalize to {normalized}")]
    DuplicateUri {
        normalized: String,
        first: String,
        second: String,
    },
    #[error("entry {uri}: cannot read {path}: {source}")]
    EntryIo {
        uri: String,
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no documents survive the corpus filters")]
    EmptyAfterFilter,
    #[error("output {path}: {source}")]
    OutputIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("records file {path} line {line}: {message}")]
    BadRecords {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Uri(#[from] uri::UriError),
    #[error(transparent)]
    Content(#[from] crate::content::ContentError),
    #[error(transparent)]
    Signature(#[from] crate::signature::SignatureError),
}

/// One corpus entry: a URI and its cached copy, plus optional annotations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub uri: String,
    /// Inline markup for tiny fixtures…
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub html: Option<String>,
    /// …or a path relative to the manifest file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub html_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inlink_paths: Option<Vec<PathBuf>>,
}

/// A corpus manifest: JSONL, one entry per line, with an optional leading
/// `{"manifest_version": …}` header line.
#[derive(Debug, Clone)]
pub struct CorpusManifest {
    pub version: String,
    pub entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path).map_err(|e| EvalError::Manifest {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();

        #[derive(Deserialize)]
        struct Header {
            manifest_version: String,
        }

        let mut version = "1".to_string();
        let mut entries = Vec::new();
        let mut seen: HashMap<String, String> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if lineno == 0 {
                if let Ok(header) = serde_json::from_str::<Header>(line) {
                    version = header.manifest_version;
                    continue;
                }
            }
            let entry: ManifestEntry =
                serde_json::from_str(line).map_err(|e| EvalError::ManifestLine {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            if entry.html.is_none() && entry.html_path.is_none() {
                return Err(EvalError::ManifestLine {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("entry {} has neither html nor html_path", entry.uri),
                });
            }
            let normalized = uri::normalize(&entry.uri)?;
            if let Some(first) = seen.insert(normalized.clone(), entry.uri.clone()) {
                return Err(EvalError::DuplicateUri {
                    normalized,
                    first,
                    second: entry.uri.clone(),
                });
            }
            entries.push(entry);
        }

        let manifest = Self {
            version,
            entries,
            base_dir,
        };
        // Referenced paths must exist at load time.
        for entry in &manifest.entries {
            for p in manifest.entry_paths(entry) {
                if !p.exists() {
                    return Err(EvalError::Manifest {
                        path: path.display().to_string(),
                        message: format!("entry {}: missing file {}", entry.uri, p.display()),
                    });
                }
            }
        }
        Ok(manifest)
    }

    fn entry_paths(&self, entry: &ManifestEntry) -> Vec<PathBuf> {
        let mut out = Vec::new();
        if let Some(p) = &entry.html_path {
            out.push(self.base_dir.join(p));
        }
        for p in entry.inlink_paths.iter().flatten() {
            out.push(self.base_dir.join(p));
        }
        out
    }

    /// The raw page for an entry, from inline markup or disk.
    pub fn raw_page(&self, entry: &ManifestEntry) -> Result<RawPage, EvalError> {
        let body = if let Some(html) = &entry.html {
            html.as_bytes().to_vec()
        } else {
            let path = self.base_dir.join(entry.html_path.as_ref().expect("validated"));
            fs::read(&path).map_err(|source| EvalError::EntryIo {
                uri: entry.uri.clone(),
                path: path.display().to_string(),
                source,
            })?
        };
        Ok(RawPage::new(&entry.uri, body)?)
    }

    /// Extract every entry, unfiltered: the searchable universe.
    pub fn extract_all(&self, stopwords: &StopwordSet) -> Result<Vec<ExtractedDoc>, EvalError> {
        self.entries
            .iter()
            .map(|entry| Ok(extract_text(&self.raw_page(entry)?, stopwords)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IngestFilters {
    pub min_terms: u64,
    pub english_ratio: f64,
}

impl Default for IngestFilters {
    fn default() -> Self {
        Self {
            min_terms: DEFAULT_MIN_TERMS,
            english_ratio: DEFAULT_ENGLISH_RATIO,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Rejection {
    pub uri: String,
    pub reason: String,
}

#[derive(Debug)]
pub struct IngestReport {
    pub accepted: Vec<ExtractedDoc>,
    pub rejected: Vec<Rejection>,
}

/// Extract every manifest entry and apply the corpus filters. Every entry
/// lands either in `accepted` or in `rejected` with a reason.
pub fn ingest(
    manifest: &CorpusManifest,
    filters: &IngestFilters,
    stopwords: &StopwordSet,
) -> Result<IngestReport, EvalError> {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for entry in &manifest.entries {
        let doc = extract_text(&manifest.raw_page(entry)?, stopwords);
        match passes_corpus_filter(&doc, filters.min_terms, filters.english_ratio) {
            FilterDecision::Accepted => accepted.push(doc),
            FilterDecision::Rejected(reason) => rejected.push(Rejection {
                uri: doc.uri,
                reason: reason.to_string(),
            }),
        }
    }
    Ok(IngestReport { accepted, rejected })
}

/// Per-URI side inputs: tags and neighborhood term buckets.
#[derive(Default)]
pub struct AuxData {
    pub tags: HashMap<String, TagSet>,
    pub buckets: HashMap<String, TermBucket>,
}

/// Collect tags and inlink buckets from the manifest annotations.
///
/// Inlink pages referenced by bare paths get `file:` pseudo-URIs; they only
/// serve bucket deduplication.
pub fn collect_aux(
    manifest: &CorpusManifest,
    stopwords: &StopwordSet,
    inlink_cap: usize,
) -> Result<AuxData, EvalError> {
    let mut aux = AuxData::default();
    for entry in &manifest.entries {
        let normalized = uri::normalize(&entry.uri)?;
        if let Some(tags) = &entry.tags {
            let cleaned: Vec<String> = tags
                .iter()
                .map(|t| t.trim().to_lowercase())
                .filter(|t| !t.is_empty())
                .take(10)
                .collect();
            if !cleaned.is_empty() {
                aux.tags.insert(
                    normalized.clone(),
                    TagSet {
                        uri: normalized.clone(),
                        tags: cleaned,
                    },
                );
            }
        }
        if let Some(paths) = &entry.inlink_paths {
            let mut pages = Vec::new();
            for rel in paths {
                let path = manifest.base_dir.join(rel);
                let body = fs::read(&path).map_err(|source| EvalError::EntryIo {
                    uri: entry.uri.clone(),
                    path: path.display().to_string(),
                    source,
                })?;
                let pseudo_uri = format!("file:///{}", rel.display().to_string().replace('\\', "/"));
                let page = RawPage::new(&pseudo_uri, body)?;
                pages.push(extract_text(&page, stopwords));
            }
            if !pages.is_empty() {
                let bucket = build_term_bucket(&normalized, &pages, inlink_cap)?;
                aux.buckets.insert(normalized.clone(), bucket);
            }
        }
    }
    Ok(aux)
}

#[derive(Debug, Clone, Serialize)]
pub struct ComboOutcome {
    pub label: String,
    pub uri: String,
    pub final_record: RankRecord,
    pub trail: Vec<RankRecord>,
}

#[derive(Debug, Default)]
pub struct ExperimentOutput {
    pub singles: Vec<RankRecord>,
    pub combos: Vec<ComboOutcome>,
}

/// Run every method and combination over every document. Deterministic for
/// local-sim and fixture engines: documents are processed in sorted URI
/// order and per-document work is independent.
pub fn run_experiment(
    docs: &[ExtractedDoc],
    methods: &[MethodId],
    combos: &[CombinationSpec],
    engine: &Engine,
    aux: &AuxData,
    df: &dyn DfProvider,
    stopwords: &StopwordSet,
    policy: EscalationPolicy,
    jobs: Option<usize>,
) -> Result<ExperimentOutput, EvalError> {
    let mut sorted: Vec<&ExtractedDoc> = docs.iter().collect();
    sorted.sort_by(|a, b| a.uri.cmp(&b.uri));

    let run_doc = |doc: &&ExtractedDoc| -> Result<(Vec<RankRecord>, Vec<ComboOutcome>), EvalError> {
        let inputs = MethodInputs {
            doc,
            tags: aux.tags.get(&doc.uri),
            bucket: aux.buckets.get(&doc.uri),
            df,
            stopwords,
        };
        let mut singles = Vec::with_capacity(methods.len());
        for &method in methods {
            singles.push(run_method(method, &doc.uri, engine, &inputs)?);
        }
        let mut combo_outcomes = Vec::with_capacity(combos.len());
        for combo in combos {
            let (final_record, trail) = run_combination(combo, &doc.uri, engine, &inputs, policy)?;
            combo_outcomes.push(ComboOutcome {
                label: combo.label(),
                uri: doc.uri.clone(),
                final_record,
                trail,
            });
        }
        Ok((singles, combo_outcomes))
    };

    let per_doc: Vec<Result<(Vec<RankRecord>, Vec<ComboOutcome>), EvalError>> = match jobs {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool");
            pool.install(|| sorted.par_iter().map(run_doc).collect())
        }
        _ => sorted.par_iter().map(run_doc).collect(),
    };

    let mut output = ExperimentOutput::default();
    for result in per_doc {
        let (singles, combos) = result?;
        output.singles.extend(singles);
        output.combos.extend(combos);
    }
    Ok(output)
}

/// One row of a results table: disjoint-bucket percentages for a method or
/// combination on one engine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub label: String,
    pub engine_id: String,
    pub n: u64,
    pub top: f64,
    pub top10: f64,
    pub top100: f64,
    pub undiscovered: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AggregateTable {
    pub rows: Vec<AggregateRow>,
}

/// Percent with one decimal, half-up — the rounding the published tables
/// use.
pub fn percent_half_up(count: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (count as f64 * 1000.0 / n as f64).round() / 10.0
}

/// Group labeled records and aggregate each group's rank classes into
/// disjoint percentages. Groups appear in first-seen order.
pub fn aggregate<'a, I>(labeled: I) -> AggregateTable
where
    I: IntoIterator<Item = (&'a str, &'a RankRecord)>,
{
    struct Counts {
        n: u64,
        by_class: [u64; 4],
    }
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: HashMap<(String, String), Counts> = HashMap::new();
    for (label, record) in labeled {
        let key = (label.to_string(), record.engine_id.clone());
        let counts = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Counts {
                n: 0,
                by_class: [0; 4],
            }
        });
        counts.n += 1;
        counts.by_class[record.rank_class as usize] += 1;
    }
    let rows = order
        .into_iter()
        .map(|key| {
            let counts = &groups[&key];
            AggregateRow {
                label: key.0,
                engine_id: key.1,
                n: counts.n,
                top: percent_half_up(counts.by_class[RankClass::Top1 as usize], counts.n),
                top10: percent_half_up(counts.by_class[RankClass::Top10 as usize], counts.n),
                top100: percent_half_up(counts.by_class[RankClass::Top100 as usize], counts.n),
                undiscovered: percent_half_up(
                    counts.by_class[RankClass::Undiscovered as usize],
                    counts.n,
                ),
            }
        })
        .collect();
    AggregateTable { rows }
}

impl std::fmt::Display for AggregateTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{:<14} {:<14} {:>5} {:>6} {:>6} {:>6} {:>6}",
            "label", "engine", "n", "top", "top10", "top100", "undis"
        )?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<14} {:<14} {:>5} {:>6.1} {:>6.1} {:>6.1} {:>6.1}",
                row.label, row.engine_id, row.n, row.top, row.top10, row.top100, row.undiscovered
            )?;
        }
        Ok(())
    }
}

/// One histogram cell: how many URIs with this factor value landed in this
/// rank class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistRow {
    pub value: u64,
    pub rank_class: RankClass,
    pub count: u64,
}

#[derive(Debug, Default)]
pub struct TitleAnalysis {
    pub length_hist: Vec<HistRow>,
    pub char_hist: Vec<HistRow>,
    pub mean_chars_hist: Vec<HistRow>,
    pub stopword_hist: Vec<HistRow>,
    pub probability_table: Vec<ProbabilityRow>,
}

const ALL_CLASSES: [RankClass; 4] = [
    RankClass::Top1,
    RankClass::Top10,
    RankClass::Top100,
    RankClass::Undiscovered,
];

fn histogram(points: &[(u64, RankClass)], fill_gaps: bool) -> Vec<HistRow> {
    let mut counts: HashMap<(u64, RankClass), u64> = HashMap::new();
    for &(value, class) in points {
        *counts.entry((value, class)).or_insert(0) += 1;
    }
    if points.is_empty() {
        return Vec::new();
    }
    let values: Vec<u64> = if fill_gaps {
        let min = points.iter().map(|p| p.0).min().unwrap();
        let max = points.iter().map(|p| p.0).max().unwrap();
        (min..=max).collect()
    } else {
        let mut vs: Vec<u64> = points.iter().map(|p| p.0).collect();
        vs.sort_unstable();
        vs.dedup();
        vs
    };
    let mut rows = Vec::new();
    for value in values {
        for class in ALL_CLASSES {
            rows.push(HistRow {
                value,
                rank_class: class,
                count: counts.get(&(value, class)).copied().unwrap_or(0),
            });
        }
    }
    rows
}

/// The four title-factor histograms (length in terms, characters, mean
/// characters per term, stop words) bucketed by rank class, plus the
/// probability lookup table. Gap lengths inside the occupied range show up
/// as zero-count rows so absent lengths stay visible; the character
/// histogram only lists occupied values.
pub fn title_analysis(
    docs: &[ExtractedDoc],
    ti_records: &[RankRecord],
    stopwords: &StopwordSet,
) -> Result<TitleAnalysis, EvalError> {
    let titles: HashMap<&str, &str> = docs
        .iter()
        .filter_map(|d| d.title.as_deref().map(|t| (d.uri.as_str(), t)))
        .collect();

    let mut length_points = Vec::new();
    let mut char_points = Vec::new();
    let mut mean_points = Vec::new();
    let mut stop_points = Vec::new();
    let mut title_lengths: HashMap<String, u64> = HashMap::new();
    let mut usable_records = Vec::new();

    for record in ti_records {
        if record.method != MethodId::TI {
            continue;
        }
        let Some(title) = titles.get(record.uri.as_str()) else {
            continue;
        };
        let stats = title_stats(title, stopwords).map_err(|e| EvalError::Manifest {
            path: record.uri.clone(),
            message: e.to_string(),
        })?;
        length_points.push((stats.term_count, record.rank_class));
        char_points.push((stats.char_count, record.rank_class));
        mean_points.push((stats.mean_chars_per_term.round() as u64, record.rank_class));
        stop_points.push((stats.stopword_count, record.rank_class));
        title_lengths.insert(record.uri.clone(), stats.term_count);
        usable_records.push(record.clone());
    }

    Ok(TitleAnalysis {
        length_hist: histogram(&length_points, true),
        char_hist: histogram(&char_points, false),
        mean_chars_hist: histogram(&mean_points, true),
        stopword_hist: histogram(&stop_points, true),
        probability_table: build_probability_table(&usable_records, &title_lengths)?,
    })
}

// ---- output files ----

fn create(path: &Path) -> Result<fs::File, EvalError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| EvalError::OutputIo {
            path: path.display().to_string(),
            source,
        })?;
    }
    fs::File::create(path).map_err(|source| EvalError::OutputIo {
        path: path.display().to_string(),
        source,
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::OutputIo {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_records_jsonl(path: &Path, records: &[RankRecord]) -> Result<(), EvalError> {
    let mut file = create(path)?;
    for record in records {
        let line = serde_json::to_string(record).expect("serializable record");
        writeln!(file, "{line}").map_err(io_err(path))?;
    }
    Ok(())
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<RankRecord>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::OutputIo {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(line).map_err(|e| EvalError::BadRecords {
                path: path.display().to_string(),
                line: lineno + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(records)
}

pub fn write_combos_jsonl(path: &Path, combos: &[ComboOutcome]) -> Result<(), EvalError> {
    let mut file = create(path)?;
    for combo in combos {
        let line = serde_json::to_string(combo).expect("serializable outcome");
        writeln!(file, "{line}").map_err(io_err(path))?;
    }
    Ok(())
}

pub fn write_aggregate_csv(path: &Path, table: &AggregateTable) -> Result<(), EvalError> {
    let mut file = create(path)?;
    writeln!(file, "label,engine_id,n,top,top10,top100,undiscovered").map_err(io_err(path))?;
    for row in &table.rows {
        writeln!(
            file,
            "{},{},{},{:.1},{:.1},{:.1},{:.1}",
            row.label, row.engine_id, row.n, row.top, row.top10, row.top100, row.undiscovered
        )
        .map_err(io_err(path))?;
    }
    Ok(())
}

pub fn write_hist_csv(path: &Path, factor: &str, rows: &[HistRow]) -> Result<(), EvalError> {
    let mut file = create(path)?;
    writeln!(file, "factor,value,rank_class,count").map_err(io_err(path))?;
    for row in rows {
        writeln!(file, "{},{},{},{}", factor, row.value, row.rank_class, row.count)
            .map_err(io_err(path))?;
    }
    Ok(())
}

pub fn write_probability_csv(path: &Path, rows: &[ProbabilityRow]) -> Result<(), EvalError> {
    let mut file = create(path)?;
    writeln!(file, "title_length,p1,p10,p100").map_err(io_err(path))?;
    for row in rows {
        writeln!(file, "{},{},{},{}", row.title_length, row.p1, row.p10, row.p100)
            .map_err(io_err(path))?;
    }
    Ok(())
}

pub fn write_rejections_csv(path: &Path, rejections: &[Rejection]) -> Result<(), EvalError> {
    let mut file = create(path)?;
    writeln!(file, "uri,reason").map_err(io_err(path))?;
    for r in rejections {
        writeln!(file, "{},{}", r.uri, r.reason).map_err(io_err(path))?;
    }
    Ok(())
}
