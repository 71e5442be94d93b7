//! HTTP transport abstraction.
//!
//! Remote providers never talk to the network directly; they go through
//! [`HttpTransport`]. That keeps the offline guarantee testable: swap in a
//! [`CountingTransport`] and assert that nothing escaped.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

#[derive(Debug, Error)]
#[error("transport error for {url}: {message}")]
pub struct TransportError {
    pub url: String,
    pub message: String,
    /// 5xx and timeouts are worth retrying; 4xx is not.
    pub retryable: bool,
}

#[derive(Debug, Clone)]
pub struct TransportResponse {
    pub status: u16,
    pub body: String,
}

pub trait HttpTransport: Send + Sync {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<TransportResponse, TransportError>;
}

/// Real transport backed by ureq.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new() -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(20))
                .build(),
        }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport for UreqTransport {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<TransportResponse, TransportError> {
        let mut req = self.agent.get(url);
        for (k, v) in headers {
            req = req.set(k, v);
        }
        match req.call() {
            Ok(resp) => {
                let status = resp.status();
                let body = resp.into_string().map_err(|e| TransportError {
                    url: url.to_string(),
                    message: format!("body read: {e}"),
                    retryable: true,
                })?;
                Ok(TransportResponse { status, body })
            }
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                Err(TransportError {
                    url: url.to_string(),
                    message: format!("HTTP {status}: {body}"),
                    retryable: status >= 500,
                })
            }
            Err(e) => Err(TransportError {
                url: url.to_string(),
                message: e.to_string(),
                retryable: true,
            }),
        }
    }
}

/// Counts every outbound request and fails it. Configured as the transport
/// in test mode, it proves that local-sim and fixture bindings never touch
/// the network.
#[derive(Default)]
pub struct CountingTransport {
    attempts: AtomicUsize,
}

impl CountingTransport {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

impl HttpTransport for CountingTransport {
    fn get(&self, url: &str, _headers: &[(String, String)]) -> Result<TransportResponse, TransportError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        Err(TransportError {
            url: url.to_string(),
            message: "network disabled".to_string(),
            retryable: false,
        })
    }
}

/// Serves canned bodies keyed by URL; used to exercise remote code paths
/// without sockets.
#[derive(Default)]
pub struct StaticTransport {
    responses: Mutex<HashMap<String, TransportResponse>>,
    requests: AtomicUsize,
}

impl StaticTransport {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn insert(&self, url: &str, status: u16, body: &str) {
        self.responses.lock().unwrap().insert(
            url.to_string(),
            TransportResponse {
                status,
                body: body.to_string(),
            },
        );
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl HttpTransport for StaticTransport {
    fn get(&self, url: &str, _headers: &[(String, String)]) -> Result<TransportResponse, TransportError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        match self.responses.lock().unwrap().get(url) {
            Some(resp) if resp.status < 400 => Ok(resp.clone()),
            Some(resp) => Err(TransportError {
                url: url.to_string(),
                message: format!("HTTP {}", resp.status),
                retryable: resp.status >= 500,
            }),
            None => Err(TransportError {
                url: url.to_string(),
                message: "no canned response".to_string(),
                retryable: false,
            }),
        }
    }
}
