use std::time::Duration;

use serde::Deserialize;
use ureq::{Agent, RequestBuilder};

use super::{validate_key, Precondition, RemoteObject, RemoteStore, SyncError, Version};

/// Object store spoken to over plain HTTP verbs.
///
/// * `GET|PUT|DELETE <base>/<key>`, version in the `ETag` response header
/// * `If-Match: <version>` / `If-None-Match: *` on preconditioned puts, 412 on mismatch
/// * `GET <base>?prefix=<p>` returns `[{"key":..,"version":..,"size":..}]`
pub struct HttpStore {
    base: String,
    token: Option<String>,
    agent: Agent,
}

impl std::fmt::Debug for HttpStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpStore")
            .field("base", &self.base)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

#[derive(Deserialize)]
struct ListedObject {
    key: String,
    version: String,
    size: u64,
}

type Response = ureq::http::Response<ureq::Body>;

impl HttpStore {
    pub fn new(base: &str, token: Option<String>) -> Result<Self, SyncError> {
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(SyncError::StoreUnreachable(format!("unsupported remote url {base}")));
        }
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Ok(HttpStore { base: base.trim_end_matches('/').to_owned(), token, agent })
    }

    fn url(&self, key: &str) -> Result<String, SyncError> {
        validate_key(key)?;
        Ok(format!("{}/{key}", self.base))
    }

    fn authed<B>(&self, req: RequestBuilder<B>) -> RequestBuilder<B> {
        match &self.token {
            Some(t) => req.header("Authorization", format!("Bearer {t}")),
            None => req,
        }
    }

    fn unreachable(&self, e: ureq::Error) -> SyncError {
        SyncError::StoreUnreachable(format!("{}: {e}", self.base))
    }

    fn version_of(&self, response: &Response) -> Result<Version, SyncError> {
        response
            .headers()
            .get("etag")
            .and_then(|v| v.to_str().ok())
            .map(Version::new)
            .ok_or_else(|| SyncError::Protocol("response carries no ETag".into()))
    }

    fn status_error(&self, key: &str, response: &Response) -> SyncError {
        match response.status().as_u16() {
            404 => SyncError::NotFound(key.to_owned()),
            412 => SyncError::PreconditionFailed(key.to_owned()),
            401 | 403 => SyncError::Protocol(format!("access denied ({})", response.status())),
            s if s >= 500 => SyncError::StoreUnreachable(format!("{} answered {s}", self.base)),
            s => SyncError::Protocol(format!("unexpected status {s} for {key}")),
        }
    }
}

impl RemoteStore for HttpStore {
    fn put_object(&self, key: &str, bytes: &[u8], precondition: Precondition) -> Result<Version, SyncError> {
        let mut req = self.authed(self.agent.put(&self.url(key)?));
        req = match &precondition {
            Precondition::None => req,
            Precondition::Absent => req.header("If-None-Match", "*"),
            Precondition::Matches(v) => req.header("If-Match", v.as_str()),
        };
        let response = req.send(bytes).map_err(|e| self.unreachable(e))?;
        if !response.status().is_success() {
            return Err(self.status_error(key, &response));
        }
        self.version_of(&response)
    }

    fn get_object(&self, key: &str) -> Result<(Vec<u8>, Version), SyncError> {
        let mut response = self.authed(self.agent.get(&self.url(key)?)).call().map_err(|e| self.unreachable(e))?;
        if !response.status().is_success() {
            return Err(self.status_error(key, &response));
        }
        let version = self.version_of(&response)?;
        let bytes = response
            .body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_vec()
            .map_err(|e| self.unreachable(e))?;
        Ok((bytes, version))
    }

    fn list(&self, prefix: &str) -> Result<Vec<RemoteObject>, SyncError> {
        let req = self.authed(self.agent.get(&self.base)).query("prefix", prefix);
        let mut response = req.call().map_err(|e| self.unreachable(e))?;
        if !response.status().is_success() {
            return Err(self.status_error("?prefix", &response));
        }
        let body = response
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_vec()
            .map_err(|e| self.unreachable(e))?;
        let listed: Vec<ListedObject> =
            serde_json::from_slice(&body).map_err(|e| SyncError::Protocol(format!("bad listing: {e}")))?;
        let mut out: Vec<RemoteObject> = listed
            .into_iter()
            .map(|o| RemoteObject { key: o.key, version: Version::new(o.version), size: o.size })
            .collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        Ok(out)
    }

    fn delete(&self, key: &str) -> Result<(), SyncError> {
        let response =
            self.authed(self.agent.delete(&self.url(key)?)).call().map_err(|e| self.unreachable(e))?;
        if !response.status().is_success() {
            return Err(self.status_error(key, &response));
        }
        Ok(())
    }
}
