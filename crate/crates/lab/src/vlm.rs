//! HTTP client for the VLM quality score.
//!
//! Wire format: `POST <endpoint>` with JSON `{model, prompt, images}` where
//! `images` are base64 PNG frames, and `Authorization: Bearer <token>` when the
//! configured environment variable is set. The reply is JSON carrying the
//! model's text under `reply` (`text`, `response`, `content` and
//! `choices[0].message.content` are accepted too).

use std::fmt;
use std::io::Cursor;
use std::thread;
use std::time::Duration;

use base64::Engine;
use effecterase_core::metrics::qscore::SCORE_MAX;
use effecterase_core::metrics::{evenly_spaced_frames, parse_score};
use effecterase_core::VideoTensor;
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Prompt asset; the wording is a reconstruction of a rating instruction for
/// removal completeness and visual artifacts on a 0 to 10 scale.
pub const QSCORE_PROMPT: &str = include_str!("../assets/qscore_prompt_v1.txt");
pub const QSCORE_PROMPT_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VlmConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub frames_per_request: usize,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for VlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8765/v1/score".into(),
            model: "qwen-vl".into(),
            token_env: "EFFECTERASE_VLM_TOKEN".into(),
            timeout_secs: 60.0,
            max_retries: 3,
            frames_per_request: 4,
            backoff_ms: 500,
            max_in_flight: 2,
        }
    }
}

impl VlmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(LabError::config("vlm.endpoint must be an http(s) URL"));
        }
        if !(self.timeout_secs > 0.0) || self.frames_per_request == 0 || self.max_in_flight == 0 {
            return Err(LabError::config("vlm: timeout, frames_per_request and max_in_flight must be positive"));
        }
        Ok(())
    }
}

/// Token wrapper that never prints its contents.
#[derive(Clone)]
pub struct Secret(String);

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    images: Vec<String>,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(LabError),
}

#[derive(Debug, Clone)]
pub struct VlmClient {
    config: VlmConfig,
    token: Option<Secret>,
    agent: ureq::Agent,
}

impl VlmClient {
    /// Reads the token from `config.token_env`.
    pub fn new(config: VlmConfig) -> Result<Self> {
        let token = std::env::var(&config.token_env).ok().filter(|t| !t.is_empty());
        if token.is_none() {
            log::warn!("{} is not set; VLM requests carry no credentials", config.token_env);
        }
        Self::with_token(config, token)
    }

    pub fn with_token(config: VlmConfig, token: Option<String>) -> Result<Self> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, token: token.map(Secret), agent })
    }

    pub fn config(&self) -> &VlmConfig {
        &self.config
    }

    /// Scores one video from an evenly spaced subset of its frames.
    pub fn score_video(&self, video: &VideoTensor) -> Result<f64> {
        let images = evenly_spaced_frames(video.frames(), self.config.frames_per_request)
            .into_iter()
            .map(|t| encode_frame_png(video, t).map(|png| base64::engine::general_purpose::STANDARD.encode(png)))
            .collect::<Result<Vec<_>>>()?;
        let reply = self.request(images)?;
        parse_score(&reply).ok_or_else(|| {
            let shown: String = reply.chars().take(80).collect();
            LabError::External(format!("unparseable VLM reply (expected a score in 0..={SCORE_MAX}): {shown:?}"))
        })
    }

    /// Scores in input order with at most `max_in_flight` concurrent requests.
    pub fn score_batch(&self, videos: &[&VideoTensor]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(videos.len());
        for chunk in videos.chunks(self.config.max_in_flight) {
            let scores: Vec<Result<f64>> = thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|v| s.spawn(move || self.score_video(v))).collect();
                handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
            });
            for s in scores {
                out.push(s?);
            }
        }
        Ok(out)
    }

    fn request(&self, images: Vec<String>) -> Result<String> {
        let body = ScoreRequest { model: &self.config.model, prompt: QSCORE_PROMPT, images };
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::warn!("VLM attempt {attempt}/{attempts} failed ({last}); retrying in {delay} ms");
                thread::sleep(Duration::from_millis(delay));
            }
            log::debug!(
                "POST {} model={} images={} attempt={}",
                self.config.endpoint,
                self.config.model,
                body.images.len(),
                attempt + 1
            );
            match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Retry(reason) => last = reason,
                Attempt::Fatal(e) => return Err(e),
            }
        }
        Err(LabError::External(format!("VLM request failed after {attempts} attempts: {last}")))
    }

    fn attempt(&self, body: &ScoreRequest<'_>) -> Attempt {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(Secret(token)) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport error: {e}")),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => match extract_reply(&text) {
                Some(reply) => Attempt::Done(reply),
                None => Attempt::Fatal(LabError::External("VLM response has no text reply".into())),
            },
            401 | 403 => Attempt::Fatal(LabError::External(format!(
                "VLM auth failure (HTTP {status}); check ${}",
                self.config.token_env
            ))),
            500..=599 => Attempt::Retry(format!("HTTP {status}")),
            _ => Attempt::Fatal(LabError::External(format!("VLM request rejected with HTTP {status}"))),
        }
    }
}

fn extract_reply(body: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(body).ok()?;
    for key in ["reply", "text", "response", "content"] {
        if let Some(s) = v.get(key).and_then(|s| s.as_str()) {
            return Some(s.to_string());
        }
    }
    v.pointer("/choices/0/message/content").and_then(|s| s.as_str()).map(str::to_string)
}

pub fn encode_frame_png(video: &VideoTensor, t: usize) -> Result<Vec<u8>> {
    let bytes = video.frame(t).iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let img = RgbImage::from_raw(video.width() as u32, video.height() as u32, bytes).expect("frame buffer size");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).map_err(|e| LabError::Runtime(format!("PNG encoding failed: {e}")))?;
    Ok(out.into_inner())
}

pub fn mean_score(scores: &[f64]) -> Option<f64> {
    if scores.is_empty() {
        None
    } else {
        Some(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}
