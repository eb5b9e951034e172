//! HTTP client for a hosted generation service.
//!
//! Request: `{"parts": [{"kind", "payload"}], "decoding": {...}, "images": [{"id", "png_base64"}]}`.
//! Response: `{"text": "<design code>"}`; any other 4xx body is a refusal.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use layrev_core::backend::{BackendError, Capabilities, GenerationResult, ReviserBackend};
use layrev_core::layout::{truncate_tokens, DEFAULT_CANVAS_H, DEFAULT_CANVAS_W};
use layrev_core::prompt::{PromptBundle, WirePart};
use layrev_core::render::render_clipped;
use serde::{Deserialize, Serialize};

use crate::config::Classes;
use crate::image::encode_png;

pub const ENV_URL: &str = "LAYREV_REMOTE_URL";
pub const ENV_TOKEN: &str = "LAYREV_REMOTE_TOKEN";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub url: String,
    pub token: Option<String>,
    pub timeout: Duration,
    pub attempts: u32,
    pub base_backoff: Duration,
    pub max_in_flight: usize,
    pub send_images: bool,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            token: None,
            timeout: Duration::from_secs(120),
            attempts: 3,
            base_backoff: Duration::from_millis(500),
            max_in_flight: 4,
            send_images: true,
        }
    }

    /// Endpoint from `LAYREV_REMOTE_URL`, bearer token from `LAYREV_REMOTE_TOKEN`.
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var(ENV_URL).map_err(|_| BackendError::Config(format!("{ENV_URL} is not set")))?;
        let mut cfg = Self::new(url);
        cfg.token = std::env::var(ENV_TOKEN).ok();
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), BackendError> {
        if !(self.url.starts_with("http://") || self.url.starts_with("https://")) {
            return Err(BackendError::Config(format!("endpoint {:?} is not an http(s) URL", self.url)));
        }
        if let Some(t) = &self.token {
            if t.is_empty() || t.chars().any(|c| c.is_control() || c.is_whitespace()) {
                return Err(BackendError::Config("auth token is empty or contains whitespace".into()));
            }
        }
        if self.attempts == 0 || self.max_in_flight == 0 {
            return Err(BackendError::Config("attempts and max_in_flight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct RemoteRequest<'a> {
    parts: &'a [WirePart],
    decoding: layrev_core::prompt::DecodingParams,
    images: Vec<RemoteImage>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct RemoteImage {
    pub id: String,
    pub png_base64: String,
}

#[derive(Debug, Deserialize)]
struct RemoteResponse {
    text: String,
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.cv.wait_while(self.free.lock().unwrap(), |n| *n == 0).unwrap();
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

pub struct RemoteReviser {
    cfg: RemoteConfig,
    classes: Classes,
    agent: ureq::Agent,
    gate: Semaphore,
}

impl RemoteReviser {
    pub fn new(cfg: RemoteConfig, classes: Classes) -> Result<Self, BackendError> {
        cfg.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Semaphore::new(cfg.max_in_flight);
        Ok(Self { cfg, classes, agent, gate })
    }

    fn images(&self, bundle: &PromptBundle) -> Result<Vec<RemoteImage>, BackendError> {
        if !self.cfg.send_images {
            return Ok(Vec::new());
        }
        bundle
            .images()
            .map(|img| {
                let bitmap = render_clipped(&img.layout, &self.classes.legend, 1)
                    .map_err(|e| BackendError::Config(format!("cannot render image {}: {e}", img.id)))?;
                let png = encode_png(&bitmap).map_err(|e| BackendError::Config(e.to_string()))?;
                Ok(RemoteImage { id: img.id.clone(), png_base64: base64::engine::general_purpose::STANDARD.encode(png) })
            })
            .collect()
    }

    fn attempt(&self, body: &str) -> Result<String, Attempt> {
        let mut req = self.agent.post(&self.cfg.url).header("Content-Type", "application/json");
        if let Some(token) = &self.cfg.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send(body).map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| Attempt::Retry(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str::<RemoteResponse>(&text)
                .map(|r| r.text)
                .map_err(|e| Attempt::Fatal(BackendError::Refused(format!("malformed response: {e}")))),
            408 | 429 | 500..=599 => Err(Attempt::Retry(format!("HTTP {status}: {text}"))),
            _ => Err(Attempt::Fatal(BackendError::Refused(format!("HTTP {status}: {text}")))),
        }
    }
}

impl ReviserBackend for RemoteReviser {
    fn name(&self) -> &str {
        "remote"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { supports_temperature: true, supports_images: self.cfg.send_images }
    }

    fn revise(&self, bundle: &PromptBundle) -> Result<GenerationResult, BackendError> {
        let wire = bundle.to_wire();
        let request = RemoteRequest { parts: &wire.parts, decoding: wire.decoding, images: self.images(bundle)? };
        let body = serde_json::to_string(&request).map_err(|e| BackendError::Config(e.to_string()))?;

        let _permit = self.gate.acquire();
        let started = Instant::now();
        let mut last = String::new();
        for attempt in 0..self.cfg.attempts {
            if attempt > 0 {
                std::thread::sleep(self.cfg.base_backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(&body) {
                Ok(text) => {
                    let text = truncate_tokens(&text, bundle.decoding.max_tokens).to_string();
                    let latency = started.elapsed().as_millis() as u64;
                    return Ok(GenerationResult::from_code(
                        self.name(),
                        text,
                        &self.classes.registry,
                        (DEFAULT_CANVAS_W, DEFAULT_CANVAS_H),
                        latency,
                    ));
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    tracing::warn!(attempt = attempt + 1, error = %msg, "remote reviser attempt failed");
                    last = msg;
                }
            }
        }
        Err(BackendError::Transport { attempts: self.cfg.attempts, message: last })
    }
}
