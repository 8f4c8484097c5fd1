//! Completion backends: the trait the agent loop drives, a scripted oracle
//! that replays gold schedules with seeded corruption (for calibrating the
//! scorer), a format breaker (worst case), a keyword router (offline demo),
//! and an HTTP client for real model endpoints.
//!
//! Backends are session-scoped: the runner calls [`CompletionBackend::start_session`]
//! once per query before the first completion, so stateful backends can key
//! their behavior to the query without parsing prompts.

use std::collections::BTreeMap;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetRecord, GoldStep};
use crate::knowledge::{derive_seed, KnowledgeBase};
use crate::react_format::{render_step, Action, OBSERVATION_MARKER, STOP_SEQUENCE};
use crate::tools::{canonical_registry, parse_tool_input};

/// Default completion character budget.
pub const MAX_NEW_TEXT: usize = 8192;

/// What the agent sends a backend for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub stop_sequences: Vec<String>,
    pub max_new_text: usize,
}

impl CompletionRequest {
    pub fn new(prompt: String) -> CompletionRequest {
        CompletionRequest {
            prompt,
            stop_sequences: vec![STOP_SEQUENCE.to_string()],
            max_new_text: MAX_NEW_TEXT,
        }
    }
}

/// Enforces the request bounds on a raw completion: cut at the earliest
/// stop sequence, then at the character budget.
pub fn apply_request_bounds(text: &str, request: &CompletionRequest) -> String {
    let mut cut = text.len();
    for stop in &request.stop_sequences {
        if let Some(position) = text.find(stop.as_str()) {
            cut = cut.min(position);
        }
    }
    let mut bounded = &text[..cut];
    if let Some((byte_offset, _)) = bounded.char_indices().nth(request.max_new_text) {
        bounded = &bounded[..byte_offset];
    }
    bounded.to_string()
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("unknown query id {0}")]
    UnknownQuery(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
}

/// A source of step completions. One backend instance serves one session at
/// a time; batch runners construct one instance per worker via a factory.
pub trait CompletionBackend: Send {
    fn start_session(&mut self, query_id: &str) -> Result<(), BackendError>;
    fn complete(&mut self, request: &CompletionRequest) -> Result<String, BackendError>;
}

/// Per-facet corruption probabilities for the scripted oracle. Each facet
/// is drawn independently per step from a stream seeded by
/// `(rng_seed, query_id)`, so a batch is reproducible regardless of
/// scheduling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionConfig {
    /// Probability of answering the wrong decision: a tool step degrades to
    /// a premature final answer, the final step to a spurious tool call.
    pub p_decision: f64,
    /// Probability of swapping the tool name (input text kept verbatim).
    pub p_tool: f64,
    /// Probability of re-pointing the input at a different location.
    pub p_input: f64,
    /// Probability of replacing the final answer text.
    pub p_final: f64,
    pub rng_seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> CorruptionConfig {
        CorruptionConfig { p_decision: 0.0, p_tool: 0.0, p_input: 0.0, p_final: 0.0, rng_seed: 0 }
    }
}

/// The answer a decision-corrupted tool step degrades to. Distinct from
/// every templated gold final.
pub const PREMATURE_FINAL: &str = "No further analysis is needed.";
/// The answer a text-corrupted final step emits instead of the gold one.
pub const CORRUPTED_FINAL: &str = "The footage is inconclusive.";

/// Tools a sloppy scheduler plausibly confuses with each other; a corrupted
/// tool name comes from here half the time (when the gold tool has any
/// confusable peer).
fn confusable_peers(tool: &str) -> &'static [&'static str] {
    match tool {
        "FaceRecognition" => &["PersonReidentification", "GaitRecognition"],
        "PersonReidentification" => &["FaceRecognition", "GaitRecognition"],
        "GaitRecognition" => &["FaceRecognition", "PersonReidentification"],
        "VehicleReidentification" => &["LicensePlateRecognition"],
        "LicensePlateRecognition" => &["VehicleReidentification"],
        _ => &[],
    }
}

struct ScriptedGold {
    steps: Vec<GoldStep>,
    final_answer: String,
}

struct ScriptedSession {
    query_id: String,
    rng: ChaCha8Rng,
    cursor: usize,
}

/// Replays gold schedules verbatim, optionally corrupting one facet at a
/// time so each accuracy metric can be pushed off 1.0 independently.
pub struct ScriptedBackend {
    gold: BTreeMap<String, ScriptedGold>,
    locations: Vec<String>,
    tool_names: Vec<String>,
    corruption: CorruptionConfig,
    session: Option<ScriptedSession>,
}

impl ScriptedBackend {
    pub fn new(
        records: &[DatasetRecord],
        base: &KnowledgeBase,
        corruption: CorruptionConfig,
    ) -> ScriptedBackend {
        let gold = records
            .iter()
            .map(|record| {
                (
                    record.query.id.clone(),
                    ScriptedGold {
                        steps: record.gold_steps.clone(),
                        final_answer: record.gold_final.clone(),
                    },
                )
            })
            .collect();
        ScriptedBackend {
            gold,
            locations: base.list_locations(),
            tool_names: canonical_registry().tool_names(),
            corruption,
            session: None,
        }
    }

    fn corrupt_tool(&self, gold_tool: &str, rng: &mut ChaCha8Rng) -> String {
        let peers = confusable_peers(gold_tool);
        if !peers.is_empty() && rng.gen_bool(0.5) {
            return peers[rng.gen_range(0..peers.len())].to_string();
        }
        let others: Vec<&String> =
            self.tool_names.iter().filter(|name| *name != gold_tool).collect();
        others[rng.gen_range(0..others.len())].clone()
    }

    fn corrupt_input(&self, gold_tool: &str, gold_input: &str, rng: &mut ChaCha8Rng) -> String {
        let registry = canonical_registry();
        let Some(spec) = registry.get(gold_tool) else {
            return format!("{gold_input} annex");
        };
        let Ok(parsed) = parse_tool_input(gold_input, spec) else {
            return format!("{gold_input} annex");
        };
        let others: Vec<&String> =
            self.locations.iter().filter(|name| **name != parsed.location).collect();
        let wrong_location = match others.as_slice() {
            [] => format!("{} annex", parsed.location),
            _ => others[rng.gen_range(0..others.len())].clone(),
        };
        match parsed.media_ref {
            Some(media) => format!("{media}, {wrong_location}"),
            None => wrong_location,
        }
    }
}

impl CompletionBackend for ScriptedBackend {
    fn start_session(&mut self, query_id: &str) -> Result<(), BackendError> {
        if !self.gold.contains_key(query_id) {
            return Err(BackendError::UnknownQuery(query_id.to_string()));
        }
        self.session = Some(ScriptedSession {
            query_id: query_id.to_string(),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(self.corruption.rng_seed, query_id)),
            cursor: 0,
        });
        Ok(())
    }

    fn complete(&mut self, request: &CompletionRequest) -> Result<String, BackendError> {
        let mut session = self
            .session
            .take()
            .ok_or_else(|| BackendError::UnknownQuery("<no session>".to_string()))?;
        let gold = &self.gold[&session.query_id];
        let cursor = session.cursor;
        session.cursor += 1;

        let action = if cursor < gold.steps.len() {
            let step = &gold.steps[cursor];
            if session.rng.gen_bool(self.corruption.p_decision) {
                Action::Final { answer: PREMATURE_FINAL.to_string() }
            } else {
                let tool_name = if session.rng.gen_bool(self.corruption.p_tool) {
                    let rng = &mut session.rng;
                    self.corrupt_tool(&step.tool, rng)
                } else {
                    step.tool.clone()
                };
                let tool_input = if session.rng.gen_bool(self.corruption.p_input) {
                    let rng = &mut session.rng;
                    self.corrupt_input(&step.tool, &step.input, rng)
                } else {
                    step.input.clone()
                };
                Action::ToolCall { tool_name, tool_input }
            }
        } else if cursor == gold.steps.len() {
            if session.rng.gen_bool(self.corruption.p_decision) {
                let tool_name =
                    self.tool_names[session.rng.gen_range(0..self.tool_names.len())].clone();
                let tool_input = gold
                    .steps
                    .last()
                    .map(|step| step.input.clone())
                    .unwrap_or_else(|| self.locations.first().cloned().unwrap_or_default());
                Action::ToolCall { tool_name, tool_input }
            } else if session.rng.gen_bool(self.corruption.p_final) {
                Action::Final { answer: CORRUPTED_FINAL.to_string() }
            } else {
                Action::Final { answer: gold.final_answer.clone() }
            }
        } else {
            // Past the schedule (a corrupted final spawned an extra step):
            // answer cleanly so every session terminates.
            Action::Final { answer: gold.final_answer.clone() }
        };
        self.session = Some(session);
        Ok(apply_request_bounds(&render_step(&action, None), request))
    }
}

/// Emits plausible-sounding prose that never matches the step grammar.
/// Scores zero on every metric; pins down the scorer's floor.
pub struct FormatBreaker;

impl CompletionBackend for FormatBreaker {
    fn start_session(&mut self, _query_id: &str) -> Result<(), BackendError> {
        Ok(())
    }

    fn complete(&mut self, request: &CompletionRequest) -> Result<String, BackendError> {
        let text = "Let me think about the footage for a moment. \
                    The cameras should have captured something relevant, \
                    so I will describe what I would look for instead of acting.";
        Ok(apply_request_bounds(text, request))
    }
}

/// A tiny offline "model" for the interactive demo: routes the question to
/// a location-only tool by keyword, then answers with the observation. Not
/// a benchmark subject, just something to type at.
pub struct KeywordRouter {
    locations: Vec<String>,
}

impl KeywordRouter {
    pub fn new(base: &KnowledgeBase) -> KeywordRouter {
        KeywordRouter { locations: base.list_locations() }
    }

    fn question_of(prompt: &str) -> &str {
        let question = prompt
            .lines()
            .rev()
            .find_map(|line| line.trim().strip_prefix("Question:"))
            .unwrap_or("")
            .trim();
        match question.find(" [media:") {
            Some(position) => question[..position].trim_end(),
            None => question,
        }
    }

    fn last_observation(prompt: &str) -> Option<&str> {
        prompt
            .lines()
            .rev()
            .find_map(|line| line.trim().strip_prefix(OBSERVATION_MARKER))
            .map(str::trim)
    }
}

impl CompletionBackend for KeywordRouter {
    fn start_session(&mut self, _query_id: &str) -> Result<(), BackendError> {
        Ok(())
    }

    fn complete(&mut self, request: &CompletionRequest) -> Result<String, BackendError> {
        let action = match KeywordRouter::last_observation(&request.prompt) {
            Some(observation) => Action::Final { answer: observation.to_string() },
            None => {
                let question = KeywordRouter::question_of(&request.prompt);
                let lowered = question.to_lowercase();
                let tool = if lowered.contains("fire") || lowered.contains("smoke") {
                    "FireSmokeDetection"
                } else if lowered.contains("violence") || lowered.contains("fight") {
                    "ViolenceDetection"
                } else if lowered.contains("pose") || lowered.contains("keypoint") {
                    "PoseEstimation"
                } else if lowered.contains("how many")
                    || lowered.contains("count")
                    || lowered.contains("people")
                {
                    "CrowdCounting"
                } else {
                    "SceneRecognition"
                };
                let location = self
                    .locations
                    .iter()
                    .find(|name| lowered.contains(&name.to_lowercase()))
                    .or_else(|| self.locations.first())
                    .cloned()
                    .unwrap_or_default();
                Action::ToolCall { tool_name: tool.to_string(), tool_input: location }
            }
        };
        Ok(apply_request_bounds(&render_step(&action, None), request))
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    stop: &'a [String],
    max_tokens: usize,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

/// Talks to a completion endpoint over HTTP: POST a JSON body
/// `{"prompt", "stop", "max_tokens"}`, expect `{"text"}` back. Failed
/// requests are retried with exponential backoff before giving up.
pub struct EndpointBackend {
    url: String,
    client: reqwest::blocking::Client,
    retries: usize,
    backoff: Duration,
}

impl EndpointBackend {
    pub fn new(url: String) -> EndpointBackend {
        EndpointBackend::with_retry_policy(url, 2, Duration::from_millis(100))
    }

    pub fn with_retry_policy(url: String, retries: usize, backoff: Duration) -> EndpointBackend {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .expect("http client builds");
        EndpointBackend { url, client, retries, backoff }
    }

    fn request_once(&self, request: &CompletionRequest) -> Result<String, String> {
        let body = WireRequest {
            prompt: &request.prompt,
            stop: &request.stop_sequences,
            max_tokens: request.max_new_text,
        };
        let response = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .map_err(|err| err.to_string())?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("endpoint returned {status}"));
        }
        let wire: WireResponse = response.json().map_err(|err| err.to_string())?;
        Ok(wire.text)
    }
}

impl CompletionBackend for EndpointBackend {
    fn start_session(&mut self, _query_id: &str) -> Result<(), BackendError> {
        Ok(())
    }

    fn complete(&mut self, request: &CompletionRequest) -> Result<String, BackendError> {
        let mut last_error = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt as u32 - 1));
            }
            match self.request_once(request) {
                Ok(text) => return Ok(apply_request_bounds(&text, request)),
                Err(message) => last_error = message,
            }
        }
        Err(BackendError::Transport { attempts: self.retries + 1, message: last_error })
    }
}
