//! HTTP client for an NLI service.
//!
//! `POST {base}/v1/nli` takes `{"premise", "hypothesis"}` and answers
//! `{"label", "score"}`. `POST {base}/v1/nli/batch` takes a JSON array of
//! such requests and answers an array of responses in the same order.
//! `GET {base}/healthz` answers 200 once the service is ready.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;

use super::{Label, NliInput, Verdict, VerifierBackend, VerifyError, DEFAULT_THRESHOLD};

/// Environment variable holding the service's base URL.
pub const VERIFIER_URL_ENV: &str = "CYCLESQL_VERIFIER_URL";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Extra attempts after a transient failure.
    pub retries: usize,
    pub threshold: f64,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(30),
            max_in_flight: 4,
            retries: 1,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Deserialize)]
struct WireVerdict {
    label: Label,
    score: f64,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug)]
pub struct RemoteVerifier {
    config: RemoteConfig,
    client: Client,
    permits: Permits,
}

enum Failure {
    Transient(VerifyError),
    Permanent(VerifyError),
}

impl RemoteVerifier {
    pub fn new(config: RemoteConfig) -> Result<Self, VerifyError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| VerifyError::BackendUnavailable(e.to_string()))?;
        let permits = Permits { available: Mutex::new(config.max_in_flight.max(1)), freed: Condvar::new() };
        Ok(Self { config, client, permits })
    }

    /// Reads the base URL from [`VERIFIER_URL_ENV`].
    pub fn from_env() -> Result<Self, VerifyError> {
        let url = std::env::var(VERIFIER_URL_ENV)
            .map_err(|_| VerifyError::BackendUnavailable(format!("{VERIFIER_URL_ENV} is not set")))?;
        Self::new(RemoteConfig::new(url))
    }

    /// Whether `GET {base}/healthz` answers 200.
    pub fn healthy(&self) -> bool {
        let url = format!("{}/healthz", self.config.base_url);
        self.client.get(url).send().is_ok_and(|r| r.status() == StatusCode::OK)
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn post<T: serde::Serialize + ?Sized, R: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: &T,
    ) -> Result<R, Failure> {
        let url = format!("{}{path}", self.config.base_url);
        let response = self.client.post(&url).json(body).send().map_err(|e| {
            if e.is_timeout() {
                Failure::Transient(VerifyError::Timeout(self.config.timeout))
            } else {
                Failure::Transient(VerifyError::BackendUnavailable(e.to_string()))
            }
        })?;
        let status = response.status();
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            return Err(Failure::Transient(VerifyError::BackendUnavailable(format!("{url} answered {status}"))));
        }
        if !status.is_success() {
            return Err(Failure::Permanent(VerifyError::BackendUnavailable(format!("{url} answered {status}"))));
        }
        response.json::<R>().map_err(|e| Failure::Permanent(VerifyError::InvalidResponse(e.to_string())))
    }

    /// Posts with the in-flight bound, retrying transient failures.
    fn call<T: serde::Serialize + ?Sized, R: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: &T,
    ) -> Result<R, VerifyError> {
        let _permit = self.permits.acquire();
        let mut attempt = 0;
        loop {
            match self.post(path, body) {
                Ok(r) => return Ok(r),
                Err(Failure::Permanent(e)) => return Err(e),
                Err(Failure::Transient(e)) if attempt >= self.config.retries => return Err(e),
                Err(Failure::Transient(e)) => {
                    log::debug!("retrying verifier call after: {e}");
                    attempt += 1;
                }
            }
        }
    }

    fn to_verdict(&self, wire: WireVerdict, latency: Duration) -> Result<Verdict, VerifyError> {
        if !(0.0..=1.0).contains(&wire.score) {
            return Err(VerifyError::InvalidResponse(format!("score {} outside [0, 1]", wire.score)));
        }
        let verdict = Verdict::from_score(wire.score, self.config.threshold, latency);
        if verdict.label != wire.label {
            log::debug!("service label {:?} disagrees with score {} at threshold", wire.label, wire.score);
        }
        Ok(verdict)
    }
}

impl VerifierBackend for RemoteVerifier {
    fn name(&self) -> &str {
        "remote"
    }

    fn verify(&self, input: &NliInput) -> Result<Verdict, VerifyError> {
        let started = Instant::now();
        let wire: WireVerdict = self.call("/v1/nli", input)?;
        self.to_verdict(wire, started.elapsed())
    }

    fn verify_batch(&self, inputs: &[NliInput]) -> Result<Vec<Verdict>, VerifyError> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let started = Instant::now();
        let wire: Vec<WireVerdict> = self.call("/v1/nli/batch", inputs)?;
        if wire.len() != inputs.len() {
            return Err(VerifyError::InvalidResponse(format!(
                "batch of {} answered with {} verdicts",
                inputs.len(),
                wire.len()
            )));
        }
        let latency = started.elapsed();
        wire.into_iter().map(|w| self.to_verdict(w, latency)).collect()
    }
}
