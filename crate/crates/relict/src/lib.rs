//! Rediscovery of missing ("404") web pages.
//!
//! When a page disappears from its URI, a copy of its content usually
//! survives somewhere: in a search-engine cache, an archive, or simply in the
//! pages that used to link to it. From such a copy this crate derives search
//! queries along four routes and runs them against a pluggable search
//! backend until the page is found again:
//!
//! - **LS5 / LS7** — 5- and 7-term lexical signatures: the page's top terms
//!   ranked by TF-IDF ([`signature`]).
//! - **TI / TIQ / TI_NOSW** — the page title, queried as keywords, as an
//!   exact phrase, or with stop words removed ([`content`]).
//! - **TA** — social bookmarking tags attached to the URI ([`providers`]).
//! - **LNLS5 / LNLS7** — lexical signatures computed from a bucket of words
//!   aggregated over pages that link to the missing page ([`signature`]).
//!
//! Queries escalate through a configurable fallback chain ([`pipeline`]);
//! ranks are classified as top-1, top-10, top-100 or undiscovered. A local
//! inverted-index engine ([`search`]) stands in for commercial search APIs
//! so the whole process runs offline and deterministically, and
//! [`eval`] replays the full experimental protocol over a corpus manifest.

pub mod config;
pub mod content;
pub mod docfreq;
pub mod eval;
pub mod pipeline;
pub mod providers;
pub mod search;
pub mod signature;
pub mod stopwords;
pub mod uri;

pub use content::{ExtractedDoc, RawPage, TitleStats};
pub use docfreq::{DfProvider, DfRecord};
pub use pipeline::{MethodId, RankClass, RankRecord};
pub use search::{Index, ResultPage, SearchQuery};
pub use signature::{LexicalSignature, TermBucket};
pub use stopwords::StopwordSet;
