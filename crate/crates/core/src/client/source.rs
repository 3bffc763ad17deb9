use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;

use crate::rdf::{ntriples, Graph, Iri};
use crate::trs::wire::{BasePageDocument, ChangeLogPageDocument, TrsDocument};
use crate::trs::{BasePage, ChangeLogPage, TrsServer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FetchError {
    #[error("server unreachable: {0}")]
    Unreachable(String),
    #[error("unexpected HTTP status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// The client's view of one TRS server. Every method corresponds to one
/// HTTP GET.
pub trait TrsSource: Send + Sync {
    fn server_id(&self) -> &str;

    /// Current cutoff order from the TRS entry document.
    fn cutoff_order(&self) -> Result<u64, FetchError>;

    fn base_page(&self, n: usize) -> Result<BasePage, FetchError>;

    fn changelog_page(&self, n: usize) -> Result<ChangeLogPage, FetchError>;

    /// Current resource body; `Ok(None)` for a 404.
    fn fetch(&self, uri: &Iri) -> Result<Option<Graph>, FetchError>;
}

/// Reads an in-process [`TrsServer`] directly.
#[derive(Debug, Clone)]
pub struct LocalSource {
    server: Arc<TrsServer>,
}

impl LocalSource {
    pub fn new(server: Arc<TrsServer>) -> Self {
        LocalSource { server }
    }
}

impl TrsSource for LocalSource {
    fn server_id(&self) -> &str {
        self.server.id()
    }

    fn cutoff_order(&self) -> Result<u64, FetchError> {
        Ok(self.server.serve_descriptor().cutoff_order)
    }

    fn base_page(&self, n: usize) -> Result<BasePage, FetchError> {
        Ok(self.server.serve_base_page(n))
    }

    fn changelog_page(&self, n: usize) -> Result<ChangeLogPage, FetchError> {
        Ok(self.server.serve_changelog_page(n))
    }

    fn fetch(&self, uri: &Iri) -> Result<Option<Graph>, FetchError> {
        Ok(self.server.serve_resource(uri).map(|g| (*g).clone()))
    }
}

/// Talks to a server's HTTP surface.
pub struct HttpSource {
    server_id: String,
    base_url: String,
    agent: ureq::Agent,
}

impl HttpSource {
    /// `base_url` is the service origin, e.g. `http://127.0.0.1:8081`; the
    /// TRS lives under `{base_url}/trs`.
    pub fn new(server_id: impl Into<String>, base_url: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(10)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        HttpSource {
            server_id: server_id.into(),
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            agent,
        }
    }

    fn get(&self, url: &str) -> Result<(u16, String), FetchError> {
        let mut response = self
            .agent
            .get(url)
            .call()
            .map_err(|e| FetchError::Unreachable(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| FetchError::Malformed(e.to_string()))?;
        Ok((status, body))
    }

    fn get_json<T: serde::de::DeserializeOwned>(&self, url: &str) -> Result<T, FetchError> {
        match self.get(url)? {
            (200, body) => serde_json::from_str(&body).map_err(|e| FetchError::Malformed(e.to_string())),
            (status, _) => Err(FetchError::Status(status)),
        }
    }

    /// Resource URIs under `{base_url}/resources/` are dereferenced as is;
    /// any other URI is fetched by its last path segment.
    fn resource_url(&self, uri: &Iri) -> String {
        let prefix = format!("{}/resources/", self.base_url);
        if uri.as_str().starts_with(&prefix) {
            return uri.as_str().to_owned();
        }
        let id = uri.as_str().rsplit('/').next().unwrap_or_default();
        format!("{prefix}{id}")
    }
}

impl TrsSource for HttpSource {
    fn server_id(&self) -> &str {
        &self.server_id
    }

    fn cutoff_order(&self) -> Result<u64, FetchError> {
        let doc: TrsDocument = self.get_json(&format!("{}/trs", self.base_url))?;
        Ok(doc.cutoff_order)
    }

    fn base_page(&self, n: usize) -> Result<BasePage, FetchError> {
        let doc: BasePageDocument = self.get_json(&crate::trs::http::base_page_url(&self.base_url, n))?;
        let members = doc
            .base
            .iter()
            .map(Iri::new)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| FetchError::Malformed(e.to_string()))?;
        Ok(BasePage {
            members,
            cutoff_order: doc.cutoff_order,
            next: doc.next.map(|_| n + 1),
        })
    }

    fn changelog_page(&self, n: usize) -> Result<ChangeLogPage, FetchError> {
        let doc: ChangeLogPageDocument =
            self.get_json(&crate::trs::http::changelog_page_url(&self.base_url, n))?;
        Ok(ChangeLogPage {
            events: doc.change_log,
            cutoff_order: doc.cutoff_order,
            next: doc.next.map(|_| n + 1),
        })
    }

    fn fetch(&self, uri: &Iri) -> Result<Option<Graph>, FetchError> {
        match self.get(&self.resource_url(uri))? {
            (200, body) => ntriples::parse_ntriples(&body)
                .map(Some)
                .map_err(|e| FetchError::Malformed(e.to_string())),
            (404 | 410, _) => Ok(None),
            (status, _) => Err(FetchError::Status(status)),
        }
    }
}

/// Wraps a source and injects failures: whole-server outages, per-resource
/// failures, and a request counter. Used to exercise retry and dirty-set
/// handling.
pub struct FaultySource<S> {
    inner: S,
    down: AtomicBool,
    failing: Mutex<HashMap<Iri, u32>>,
    always_failing: Mutex<BTreeSet<Iri>>,
    requests: AtomicU64,
}

impl<S: TrsSource> FaultySource<S> {
    pub fn new(inner: S) -> Self {
        FaultySource {
            inner,
            down: AtomicBool::new(false),
            failing: Mutex::new(HashMap::new()),
            always_failing: Mutex::new(BTreeSet::new()),
            requests: AtomicU64::new(0),
        }
    }

    pub fn set_down(&self, down: bool) {
        self.down.store(down, Ordering::SeqCst);
    }

    /// The next `times` fetches of `uri` fail.
    pub fn fail_fetches(&self, uri: Iri, times: u32) {
        self.failing.lock().insert(uri, times);
    }

    /// Fetches of `uri` fail until [`FaultySource::heal`] is called.
    pub fn break_resource(&self, uri: Iri) {
        self.always_failing.lock().insert(uri);
    }

    pub fn heal(&self, uri: &Iri) {
        self.always_failing.lock().remove(uri);
        self.failing.lock().remove(uri);
    }

    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    fn gate(&self) -> Result<(), FetchError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        if self.down.load(Ordering::SeqCst) {
            return Err(FetchError::Unreachable("injected outage".into()));
        }
        Ok(())
    }
}

impl<S: TrsSource> TrsSource for FaultySource<S> {
    fn server_id(&self) -> &str {
        self.inner.server_id()
    }

    fn cutoff_order(&self) -> Result<u64, FetchError> {
        self.gate()?;
        self.inner.cutoff_order()
    }

    fn base_page(&self, n: usize) -> Result<BasePage, FetchError> {
        self.gate()?;
        self.inner.base_page(n)
    }

    fn changelog_page(&self, n: usize) -> Result<ChangeLogPage, FetchError> {
        self.gate()?;
        self.inner.changelog_page(n)
    }

    fn fetch(&self, uri: &Iri) -> Result<Option<Graph>, FetchError> {
        self.gate()?;
        if self.always_failing.lock().contains(uri) {
            return Err(FetchError::Status(500));
        }
        {
            let mut failing = self.failing.lock();
            if let Some(left) = failing.get_mut(uri) {
                if *left > 0 {
                    *left -= 1;
                    return Err(FetchError::Status(503));
                }
            }
        }
        self.inner.fetch(uri)
    }
}

impl<S: TrsSource + ?Sized> TrsSource for Arc<S> {
    fn server_id(&self) -> &str {
        (**self).server_id()
    }

    fn cutoff_order(&self) -> Result<u64, FetchError> {
        (**self).cutoff_order()
    }

    fn base_page(&self, n: usize) -> Result<BasePage, FetchError> {
        (**self).base_page(n)
    }

    fn changelog_page(&self, n: usize) -> Result<ChangeLogPage, FetchError> {
        (**self).changelog_page(n)
    }

    fn fetch(&self, uri: &Iri) -> Result<Option<Graph>, FetchError> {
        (**self).fetch(uri)
    }
}
