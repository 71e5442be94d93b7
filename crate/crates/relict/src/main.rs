//! Command-line frontend: build the local index, rediscover a single URI,
//! replay the full evaluation protocol, and analyze title performance.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use relict::config::Runtime;
use relict::content::{extract_text, ExtractedDoc};
use relict::docfreq::DfProvider;
use relict::eval::{
    aggregate, collect_aux, ingest, read_records_jsonl, run_experiment, title_analysis,
    write_aggregate_csv, write_combos_jsonl, write_hist_csv, write_probability_csv,
    write_records_jsonl, write_rejections_csv, AuxData, CorpusManifest, IngestFilters,
};
use relict::pipeline::{
    fold_combination, predict_title_worth, run_method_detailed, CombinationSpec, EscalationPolicy,
    MethodId, MethodInputs, ProbabilityRow, RankRecord, TitlePrediction,
};
use relict::providers::{Engine, InlinkStore, PageFetcher, TagStore, TagSet};
use relict::search::{Index, ResultPage};
use relict::signature::{build_term_bucket, TermBucket};
use relict::uri;

#[derive(Parser)]
#[command(name = "relict", version, about = "Rediscover missing web pages")]
struct Cli {
    /// Config file (also via RELICT_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the local search index from a corpus manifest.
    BuildIndex(BuildIndexArgs),
    /// Run the rediscovery workflow for one URI.
    Rediscover(RediscoverArgs),
    /// Run methods and combinations over a whole manifest.
    Evaluate(EvaluateArgs),
    /// Title factor histograms and the probability lookup table.
    AnalyzeTitles(AnalyzeTitlesArgs),
}

#[derive(Args)]
struct BuildIndexArgs {
    /// Corpus manifest (JSONL).
    #[arg(long)]
    corpus: PathBuf,
    /// Output index file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RediscoverArgs {
    /// The missing URI; its cached copy must be in the corpus manifest.
    uri: String,
    /// Corpus manifest (overrides the config).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Fallback chain, e.g. TI-LS5.
    #[arg(long)]
    combo: Option<String>,
    /// Engine binding name from the config.
    #[arg(long)]
    engine: Option<String>,
    /// How many candidate URIs to print.
    #[arg(long, default_value_t = 5)]
    top: usize,
    /// Probability table CSV for the title-skip predictor.
    #[arg(long)]
    prob_table: Option<PathBuf>,
    /// Predictor threshold τ on P10.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated methods (default: all eight).
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated combinations, e.g. TI-LS5,LS7-TI-LS5.
    #[arg(long)]
    combos: Option<String>,
    #[arg(long)]
    engine: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Worker threads for per-URI parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value_t = 50)]
    min_terms: u64,
    #[arg(long, default_value_t = 0.10)]
    english_ratio: f64,
}

#[derive(Args)]
struct AnalyzeTitlesArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Records JSONL from `evaluate`.
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap would exit 2; 2 means "rediscovery exhausted" here.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let config_path = cli.config.clone();
    let outcome = match cli.command {
        Command::BuildIndex(args) => cmd_build_index(config_path.as_deref(), &args),
        Command::Rediscover(args) => cmd_rediscover(config_path.as_deref(), &args),
        Command::Evaluate(args) => cmd_evaluate(config_path.as_deref(), &args),
        Command::AnalyzeTitles(args) => cmd_analyze_titles(config_path.as_deref(), &args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_build_index(config: Option<&Path>, args: &BuildIndexArgs) -> Result<ExitCode> {
    let runtime = Runtime::new(config)?;
    let manifest = CorpusManifest::load(&args.corpus)?;
    let docs = manifest.extract_all(&runtime.stopwords)?;
    let index = Index::build(&docs, &runtime.stopwords)?;
    if args.out.exists() {
        if let Ok(existing) = Index::load(&args.out) {
            if existing.content_hash_hex() == index.content_hash_hex() {
                println!(
                    "index up to date: {} docs, hash {}",
                    index.doc_count(),
                    index.content_hash_hex()
                );
                return Ok(ExitCode::SUCCESS);
            }
        }
    }
    index.save(&args.out)?;
    println!(
        "indexed {} docs into {} (hash {})",
        index.doc_count(),
        args.out.display(),
        index.content_hash_hex()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_prob_table(path: &Path) -> Result<Vec<ProbabilityRow>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("probability table {}", path.display()))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && line.starts_with("title_length") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("{} line {}: expected 4 columns", path.display(), lineno + 1);
        }
        rows.push(ProbabilityRow {
            title_length: fields[0].trim().parse()?,
            p1: fields[1].trim().parse()?,
            p10: fields[2].trim().parse()?,
            p100: fields[3].trim().parse()?,
        });
    }
    Ok(rows)
}

/// Tags for one URI: provider fixture first, manifest annotation second.
fn tags_for(
    runtime: &Runtime,
    manifest: &CorpusManifest,
    aux_from_manifest: &AuxData,
    target: &str,
) -> Result<Option<TagSet>> {
    if let Some(rel) = &runtime.config.providers.tags {
        let store = TagStore::load(&runtime.base.join(rel))?;
        if let Some(tags) = store.fetch_tags(target)? {
            return Ok(Some(tags));
        }
    }
    let _ = manifest;
    Ok(aux_from_manifest.tags.get(&uri::normalize(target)?).cloned())
}

/// Neighborhood bucket for one URI: backlink provider plus page fetcher
/// when configured, manifest inlink paths otherwise.
fn bucket_for(
    runtime: &Runtime,
    aux_from_manifest: &AuxData,
    target: &str,
) -> Result<Option<TermBucket>> {
    let providers = &runtime.config.providers;
    if let (Some(inlinks_rel), Some(pages_rel)) = (&providers.inlinks, &providers.pages) {
        let inlink_store = InlinkStore::load(&runtime.base.join(inlinks_rel))?;
        if let Some(inlinks) = inlink_store.fetch_inlinks(target, providers.inlink_cap)? {
            let fetcher = PageFetcher::fixture(&runtime.base.join(pages_rel))?;
            let mut pages: Vec<ExtractedDoc> = Vec::new();
            for link in &inlinks.inlinks {
                if let Some(page) = fetcher.fetch_page(link)? {
                    pages.push(extract_text(&page, &runtime.stopwords));
                }
            }
            if !pages.is_empty() {
                return Ok(Some(build_term_bucket(target, &pages, providers.inlink_cap)?));
            }
        }
    }
    Ok(aux_from_manifest.buckets.get(&uri::normalize(target)?).cloned())
}

fn engine_for(
    runtime: &Runtime,
    requested: Option<&str>,
    universe: &[ExtractedDoc],
) -> Result<Engine> {
    let name = requested
        .map(str::to_string)
        .or_else(|| runtime.config.default_engine.clone())
        .unwrap_or_else(|| "local".to_string());
    if runtime.config.engines.contains_key(&name) {
        return Ok(runtime.build_engine(&name, Some(universe))?);
    }
    if name == "local" {
        // Implicit local simulator over the manifest universe.
        let mut index = Index::build(universe, &runtime.stopwords)?;
        if let Some(ranking) = runtime.config.ranking {
            index.set_ranking(ranking);
        }
        return Ok(Engine::local_sim("local", std::sync::Arc::new(index), 100));
    }
    bail!("no engine named {name:?} in config");
}

fn cmd_rediscover(config: Option<&Path>, args: &RediscoverArgs) -> Result<ExitCode> {
    let runtime = Runtime::new(config)?;
    let manifest_path = args
        .manifest
        .clone()
        .or_else(|| runtime.config.manifest.as_ref().map(|m| runtime.base.join(m)))
        .ok_or_else(|| anyhow!("no corpus manifest: pass --manifest or set it in the config"))?;
    let manifest = CorpusManifest::load(&manifest_path)?;
    let target = uri::normalize(&args.uri)?;

    let universe = manifest.extract_all(&runtime.stopwords)?;
    let doc = universe
        .iter()
        .find(|d| d.uri == target)
        .ok_or_else(|| anyhow!("{target} is not in the corpus manifest (no cached copy to work from)"))?;

    let engine = engine_for(&runtime, args.engine.as_deref(), &universe)?;
    let df = runtime.build_df_provider(&universe)?;
    let aux = collect_aux(&manifest, &runtime.stopwords, runtime.config.providers.inlink_cap)?;
    let tags = tags_for(&runtime, &manifest, &aux, &target)?;
    let bucket = bucket_for(&runtime, &aux, &target)?;
    let inputs = MethodInputs {
        doc,
        tags: tags.as_ref(),
        bucket: bucket.as_ref(),
        df: df.as_ref(),
        stopwords: &runtime.stopwords,
    };

    let combo_text = args
        .combo
        .clone()
        .or_else(|| runtime.config.combination.clone())
        .unwrap_or_else(|| "TI-LS5".to_string());
    let mut combo = CombinationSpec::from_str(&combo_text)?;
    let policy = runtime.config.escalate_unless.unwrap_or_default();

    if let Some(table_path) = &args.prob_table {
        let table = parse_prob_table(table_path)?;
        let tau = args
            .threshold
            .or(runtime.config.title_skip_threshold)
            .unwrap_or(0.5);
        if let Some(title) = doc.title.as_deref() {
            let decision = predict_title_worth(title, &table, tau)?;
            let is_title_step =
                |m: &MethodId| matches!(m, MethodId::TI | MethodId::TIQ | MethodId::TiNosw);
            match decision {
                TitlePrediction::SkipToLs => {
                    let trimmed: Vec<MethodId> = combo
                        .steps
                        .iter()
                        .copied()
                        .skip_while(is_title_step)
                        .collect();
                    println!(
                        "predictor: title length {} scores below τ={tau}; skipping the title query",
                        title.split_whitespace().count()
                    );
                    if !trimmed.is_empty() {
                        combo = CombinationSpec::new(trimmed)?;
                    }
                }
                TitlePrediction::RunTitleFirst => {
                    println!("predictor: title query worth running (P10 at or above τ={tau})");
                }
                TitlePrediction::UnknownLength => {
                    println!("predictor: no data for this title length; running the title anyway");
                }
            }
        }
    }

    // Step through manually so the winning result page is available for the
    // candidate listing.
    let mut pages: Vec<Option<ResultPage>> = Vec::new();
    let (final_record, trail) = fold_combination(
        combo.steps.iter().map(|&method| {
            run_method_detailed(method, &target, &engine, &inputs).map(|(record, page)| {
                pages.push(page);
                record
            })
        }),
        policy,
    )?;

    println!("rediscovering {target} via {} on engine {}", combo.label(), engine.engine_id());
    for (i, record) in trail.iter().enumerate() {
        let query = if record.available {
            let joined = record.query_terms.join(" ");
            if record.quoted {
                format!("\"{joined}\"")
            } else {
                joined
            }
        } else {
            "(method unavailable)".to_string()
        };
        let rank = record
            .rank
            .map(|r| r.to_string())
            .unwrap_or_else(|| "-".to_string());
        println!(
            "step {}: {:<8} class={:<12} rank={:<4} query={}",
            i + 1,
            record.method.to_string(),
            record.rank_class.to_string(),
            rank,
            query
        );
    }

    if policy.accepts(final_record.rank_class) {
        println!(
            "discovered at rank {} with {}",
            final_record.rank.unwrap_or(0),
            final_record.method
        );
        if let Some(Some(page)) = pages.last() {
            println!("top candidates:");
            for (i, hit) in page.hits.iter().take(args.top).enumerate() {
                println!("  {:>2}. {}  (score {:.4})", i + 1, hit.uri, hit.score);
            }
        }
        Ok(ExitCode::SUCCESS)
    } else {
        println!("undiscovered: all {} steps exhausted", trail.len());
        Ok(ExitCode::from(2))
    }
}

fn parse_methods(text: Option<&str>) -> Result<Vec<MethodId>> {
    match text {
        None => Ok(MethodId::ALL.to_vec()),
        Some(list) => list
            .split(',')
            .map(|m| MethodId::from_str(m.trim()).map_err(Into::into))
            .collect(),
    }
}

fn parse_combos(text: Option<&str>) -> Result<Vec<CombinationSpec>> {
    match text {
        None => Ok(vec![CombinationSpec::from_str("TI-LS5")?]),
        Some(list) => list
            .split(',')
            .map(|c| CombinationSpec::from_str(c.trim()).map_err(Into::into))
            .collect(),
    }
}

fn cmd_evaluate(config: Option<&Path>, args: &EvaluateArgs) -> Result<ExitCode> {
    let runtime = Runtime::new(config)?;
    let manifest = CorpusManifest::load(&args.manifest)?;
    let universe = manifest.extract_all(&runtime.stopwords)?;

    let filters = IngestFilters {
        min_terms: args.min_terms,
        english_ratio: args.english_ratio,
    };
    let report = ingest(&manifest, &filters, &runtime.stopwords)?;
    eprintln!(
        "corpus: {} accepted, {} rejected of {} entries",
        report.accepted.len(),
        report.rejected.len(),
        manifest.entries.len()
    );
    if report.accepted.is_empty() {
        bail!("no documents survive the corpus filters");
    }

    let engine = engine_for(&runtime, args.engine.as_deref(), &universe)?;
    let df = runtime.build_df_provider(&universe)?;
    let aux = collect_aux(&manifest, &runtime.stopwords, runtime.config.providers.inlink_cap)?;
    let methods = parse_methods(args.methods.as_deref())?;
    let combos = parse_combos(args.combos.as_deref())?;
    let policy = runtime.config.escalate_unless.unwrap_or_default();

    let output = run_experiment(
        &report.accepted,
        &methods,
        &combos,
        &engine,
        &aux,
        df.as_ref(),
        &runtime.stopwords,
        policy,
        args.jobs,
    )?;

    let labeled: Vec<(String, &RankRecord)> = output
        .singles
        .iter()
        .map(|r| (r.method.to_string(), r))
        .chain(output.combos.iter().map(|c| (c.label.clone(), &c.final_record)))
        .collect();
    let table = aggregate(labeled.iter().map(|(l, r)| (l.as_str(), *r)));

    std::fs::create_dir_all(&args.out_dir)?;
    write_records_jsonl(&args.out_dir.join("records.jsonl"), &output.singles)?;
    write_combos_jsonl(&args.out_dir.join("combos.jsonl"), &output.combos)?;
    write_aggregate_csv(&args.out_dir.join("tables.csv"), &table)?;
    write_rejections_csv(&args.out_dir.join("rejections.csv"), &report.rejected)?;
    let meta = serde_json::json!({
        "manifest": args.manifest.display().to_string(),
        "manifest_version": manifest.version,
        "stopwords_sha256": runtime.stopwords.content_hash(),
        "engine_id": engine.engine_id(),
        "df_provider": df.provider_id(),
        "df_n_docs": df.n_docs(),
        "min_terms": args.min_terms,
        "english_ratio": args.english_ratio,
        "methods": methods.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "combos": combos.iter().map(|c| c.label()).collect::<Vec<_>>(),
        "accepted": report.accepted.len(),
        "rejected": report.rejected.len(),
    });
    std::fs::write(
        args.out_dir.join("run_meta.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;

    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze_titles(config: Option<&Path>, args: &AnalyzeTitlesArgs) -> Result<ExitCode> {
    let runtime = Runtime::new(config)?;
    let manifest = CorpusManifest::load(&args.manifest)?;
    let docs = manifest.extract_all(&runtime.stopwords)?;
    let records = read_records_jsonl(&args.records)?;
    let ti_records: Vec<RankRecord> = records
        .into_iter()
        .filter(|r| r.method == MethodId::TI)
        .collect();

    let analysis = title_analysis(&docs, &ti_records, &runtime.stopwords)?;
    std::fs::create_dir_all(&args.out_dir)?;
    write_hist_csv(
        &args.out_dir.join("hist_title_length.csv"),
        "title_length_terms",
        &analysis.length_hist,
    )?;
    write_hist_csv(
        &args.out_dir.join("hist_title_chars.csv"),
        "title_length_chars",
        &analysis.char_hist,
    )?;
    write_hist_csv(
        &args.out_dir.join("hist_mean_chars.csv"),
        "mean_chars_per_term",
        &analysis.mean_chars_hist,
    )?;
    write_hist_csv(
        &args.out_dir.join("hist_stopwords.csv"),
        "stopword_count",
        &analysis.stopword_hist,
    )?;
    write_probability_csv(
        &args.out_dir.join("probability_table.csv"),
        &analysis.probability_table,
    )?;
    println!(
        "analyzed {} title records; {} probability rows",
        ti_records.len(),
        analysis.probability_table.len()
    );
    Ok(ExitCode::SUCCESS)
}
