//! URI normalization.
//!
//! Deciding whether a search hit "is" the page we are looking for needs an
//! equivalence rule over URIs. The rule here: lowercase scheme and host,
//! strip a leading `www.`, drop default ports and fragments, and drop the
//! trailing slash of an otherwise empty path. Query strings are preserved.

use thiserror::Error;
use url::Url;

#[derive(Debug, Error)]
pub enum UriError {
    #[error("empty URI")]
    Empty,
    #[error("cannot parse URI {uri:?}: {source}")]
    Parse {
        uri: String,
        #[source]
        source: url::ParseError,
    },
}

/// Normalize a URI to its canonical comparison form.
///
/// Scheme-less inputs ("example.org/a") are treated as `http://`.
pub fn normalize(raw: &str) -> Result<String, UriError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(UriError::Empty);
    }
    let with_scheme = if trimmed.contains("://") {
        trimmed.to_string()
    } else {
        format!("http://{trimmed}")
    };
    let url = Url::parse(&with_scheme).map_err(|source| UriError::Parse {
        uri: raw.to_string(),
        source,
    })?;

    let scheme = url.scheme().to_ascii_lowercase();
    let host = url
        .host_str()
        .map(|h| h.to_ascii_lowercase())
        .unwrap_or_default();
    let host = host.strip_prefix("www.").unwrap_or(&host);

    let mut out = format!("{scheme}://{host}");
    // Url::port() is already None when the port is the scheme default.
    if let Some(port) = url.port() {
        out.push_str(&format!(":{port}"));
    }
    let path = url.path();
    if path != "/" {
        out.push_str(path);
    }
    if let Some(query) = url.query() {
        out.push('?');
        out.push_str(query);
    }
    // Fragments are dropped.
    Ok(out)
}

/// Whether two URIs denote the same page under [`normalize`].
pub fn equivalent(a: &str, b: &str) -> bool {
    match (normalize(a), normalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}
