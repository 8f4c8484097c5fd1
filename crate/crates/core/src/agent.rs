//! The action loop: drive a backend one step at a time, execute tool calls
//! against the simulated world, thread observations back into the prompt,
//! and stop on a final answer, a format violation, or the step cap.
//!
//! Transport failures on a step are folded into the format-violation
//! outcome (an unreachable endpoint and an unparseable completion are the
//! same event from the scorer's point of view: the step produced nothing
//! usable). Backend errors as an outcome are reserved for session startup.

use crate::backend::{CompletionBackend, CompletionRequest};
use crate::knowledge::KnowledgeBase;
use crate::prompt::{build_prompt, history_append, PromptContext, Query};
use crate::react_format::{
    parse_step, Action, FormatViolation, ParseMode, Step, Trace, THOUGHT_MARKER,
};
use crate::tools::{invoke, Registry};

/// Most completion rounds a session may use, final answer included.
pub const DEFAULT_MAX_STEPS: usize = 5;

/// What to do when a completion fails to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationPolicy {
    /// Give up on the session immediately.
    Abort,
    /// Re-request the same step once, then give up.
    RetryOnce,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub max_steps: usize,
    pub parse_mode: ParseMode,
    pub on_violation: ViolationPolicy,
}

impl Default for SessionConfig {
    fn default() -> SessionConfig {
        SessionConfig {
            max_steps: DEFAULT_MAX_STEPS,
            parse_mode: ParseMode::Lenient,
            on_violation: ViolationPolicy::Abort,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionOutcome {
    /// The backend produced a final answer within the step cap.
    Completed,
    /// The cap was hit with no final answer.
    StepCapExceeded,
    /// A completion could not be parsed (after any retry).
    FormatViolation,
    /// The session could not start.
    BackendError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub trace: Trace,
    pub outcome: SessionOutcome,
    pub violation: Option<FormatViolation>,
    pub backend_error: Option<String>,
}

impl SessionResult {
    pub fn completed(&self) -> bool {
        self.outcome == SessionOutcome::Completed
    }
}

/// Cuts a completion back to its first step: anything from a second
/// thought line onward is the model running ahead of the loop, not part of
/// this step.
fn clip_to_first_step(text: &str) -> &str {
    let mut seen_thought = false;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if line.trim_start().starts_with(THOUGHT_MARKER) {
            if seen_thought {
                return text[..offset].trim_end();
            }
            seen_thought = true;
        }
        offset += line.len();
    }
    text
}

/// Runs one query to completion against a backend.
pub fn run_session(
    backend: &mut dyn CompletionBackend,
    registry: &Registry,
    base: &KnowledgeBase,
    query: &Query,
    cfg: &SessionConfig,
) -> SessionResult {
    let mut trace = Trace {
        query_id: query.id.clone(),
        steps: Vec::new(),
        raw_outputs: Vec::new(),
    };
    if let Err(error) = backend.start_session(&query.id) {
        return SessionResult {
            trace,
            outcome: SessionOutcome::BackendError,
            violation: None,
            backend_error: Some(error.to_string()),
        };
    }

    let lenient = cfg.parse_mode == ParseMode::Lenient;
    let attempts_per_step = match cfg.on_violation {
        ViolationPolicy::Abort => 1,
        ViolationPolicy::RetryOnce => 2,
    };
    let mut ctx = PromptContext::new(
        registry.tools().to_vec(),
        base.list_locations(),
        query.clone(),
    );

    for step_index in 0..cfg.max_steps {
        let request = CompletionRequest::new(build_prompt(&ctx));
        let mut parsed = None;
        for _ in 0..attempts_per_step {
            // A dead transport and an unparseable completion get the same
            // treatment; the empty string fails the parse on its own.
            let raw = backend.complete(&request).unwrap_or_default();
            let attempt = parse_step(clip_to_first_step(&raw), cfg.parse_mode);
            trace.raw_outputs.push(raw);
            match attempt {
                Ok(action) => {
                    parsed = Some(Ok(action));
                    break;
                }
                Err(violation) => parsed = Some(Err(violation.with_step_index(step_index))),
            }
        }
        match parsed.expect("at least one attempt ran") {
            Err(violation) => {
                return SessionResult {
                    trace,
                    outcome: SessionOutcome::FormatViolation,
                    violation: Some(violation),
                    backend_error: None,
                };
            }
            Ok(action @ Action::Final { .. }) => {
                trace.steps.push(Step { action, observation: None });
                return SessionResult {
                    trace,
                    outcome: SessionOutcome::Completed,
                    violation: None,
                    backend_error: None,
                };
            }
            Ok(action @ Action::ToolCall { .. }) => {
                let Action::ToolCall { tool_name, tool_input } = &action else { unreachable!() };
                let observation = invoke(registry, base, tool_name, tool_input, lenient);
                ctx = history_append(&ctx, action.clone(), observation.text.clone())
                    .expect("tool calls always extend the history");
                trace.steps.push(Step { action, observation: Some(observation.text) });
            }
        }
    }
    SessionResult {
        trace,
        outcome: SessionOutcome::StepCapExceeded,
        violation: None,
        backend_error: None,
    }
}

/// Runs a batch of queries across `workers` threads, one backend instance
/// per worker, returning results in input order. With deterministic
/// backends the output is invariant under the worker count.
pub fn run_batch<F>(
    make_backend: F,
    registry: &Registry,
    base: &KnowledgeBase,
    queries: &[Query],
    cfg: &SessionConfig,
    workers: usize,
) -> Vec<SessionResult>
where
    F: Fn() -> Box<dyn CompletionBackend> + Sync,
{
    let workers = workers.clamp(1, queries.len().max(1));
    let mut indexed: Vec<(usize, SessionResult)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|worker| {
                let make_backend = &make_backend;
                scope.spawn(move || {
                    let mut backend = make_backend();
                    queries
                        .iter()
                        .enumerate()
                        .skip(worker)
                        .step_by(workers)
                        .map(|(index, query)| {
                            (index, run_session(backend.as_mut(), registry, base, query, cfg))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|handle| handle.join().expect("worker panicked")).collect()
    });
    indexed.sort_by_key(|(index, _)| *index);
    indexed.into_iter().map(|(_, result)| result).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, CorruptionConfig, FormatBreaker, ScriptedBackend};
    use crate::dataset::{builtin_templates, generate, DatasetRecord, GenConfig};
    use crate::react_format::ViolationReason;
    use crate::tools::canonical_registry;
    use std::collections::VecDeque;

    fn sample_records(per_tool: usize, pipelines: usize) -> Vec<DatasetRecord> {
        generate(
            &KnowledgeBase::default_base(7),
            &canonical_registry(),
            &builtin_templates(),
            &GenConfig {
                per_tool_count: per_tool,
                pipeline_count: pipelines,
                ..GenConfig::default()
            },
        )
        .unwrap()
    }

    /// Plays canned completions in order; `Err` entries simulate transport
    /// failures. Captures the prompts it was asked to complete.
    struct Canned {
        responses: VecDeque<Result<String, String>>,
        prompts: Vec<String>,
    }

    impl Canned {
        fn new(responses: Vec<Result<String, String>>) -> Canned {
            Canned { responses: responses.into(), prompts: Vec::new() }
        }
    }

    impl CompletionBackend for Canned {
        fn start_session(&mut self, _query_id: &str) -> Result<(), BackendError> {
            Ok(())
        }

        fn complete(&mut self, request: &CompletionRequest) -> Result<String, BackendError> {
            self.prompts.push(request.prompt.clone());
            match self.responses.pop_front().expect("canned response available") {
                Ok(text) => Ok(text),
                Err(message) => Err(BackendError::Transport { attempts: 1, message }),
            }
        }
    }

    fn demo_query() -> Query {
        Query { id: "q1".to_string(), text: "How many people are in Cairo?".to_string(), media_ref: None }
    }

    const TOOL_STEP: &str =
        "Thought: Do I need to use a tool? Yes\nAction: CrowdCounting\nAction Input: Cairo";
    const FINAL_STEP: &str = "Thought: Do I need to use a tool? No\nAI: Forty-two.";

    // ---- single sessions ----

    #[test]
    fn scripted_sessions_complete_and_replay_gold() {
        let base = KnowledgeBase::default_base(7);
        let registry = canonical_registry();
        let records = sample_records(2, 2);
        let mut backend = ScriptedBackend::new(&records, &base, CorruptionConfig::default());
        for record in &records {
            let result =
                run_session(&mut backend, &registry, &base, &record.query, &SessionConfig::default());
            assert!(result.completed(), "{}: {:?}", record.query.id, result.outcome);
            assert_eq!(result.trace.steps.len(), record.gold_steps.len() + 1);
            assert_eq!(result.trace.raw_outputs.len(), result.trace.steps.len());
            for (step, gold) in result.trace.steps.iter().zip(&record.gold_steps) {
                assert_eq!(step.action.tool_name(), Some(gold.tool.as_str()));
                let observation = step.observation.as_deref().unwrap();
                assert!(!observation.starts_with("error:"), "{observation}");
            }
            let last = result.trace.steps.last().unwrap();
            assert_eq!(last.action, Action::Final { answer: record.gold_final.clone() });
            assert!(last.observation.is_none());
        }
    }

    #[test]
    fn observations_are_threaded_into_the_next_prompt() {
        let base = KnowledgeBase::demo();
        let registry = canonical_registry();
        let mut backend =
            Canned::new(vec![Ok(TOOL_STEP.to_string()), Ok(FINAL_STEP.to_string())]);
        let result =
            run_session(&mut backend, &registry, &base, &demo_query(), &SessionConfig::default());
        assert!(result.completed());
        assert_eq!(backend.prompts.len(), 2);
        assert!(!backend.prompts[0].lines().any(|line| line.starts_with("Observation:")));
        assert!(backend.prompts[1].ends_with("Observation: counted 42 people in Cairo"));
        assert_eq!(
            result.trace.steps[0].observation.as_deref(),
            Some("counted 42 people in Cairo"),
        );
    }

    #[test]
    fn breaker_fails_on_the_first_step_with_a_reason() {
        let base = KnowledgeBase::demo();
        let registry = canonical_registry();
        let result = run_session(
            &mut FormatBreaker,
            &registry,
            &base,
            &demo_query(),
            &SessionConfig::default(),
        );
        assert_eq!(result.outcome, SessionOutcome::FormatViolation);
        let violation = result.violation.unwrap();
        assert_eq!(violation.step_index, 0);
        assert_eq!(violation.reason, ViolationReason::MissingThoughtLine);
        assert!(result.trace.steps.is_empty());
        assert_eq!(result.trace.raw_outputs.len(), 1);
    }

    #[test]
    fn retry_once_recovers_from_a_bad_completion() {
        let base = KnowledgeBase::demo();
        let registry = canonical_registry();
        let mut backend = Canned::new(vec![
            Ok("garbled".to_string()),
            Ok(FINAL_STEP.to_string()),
        ]);
        let cfg = SessionConfig { on_violation: ViolationPolicy::RetryOnce, ..SessionConfig::default() };
        let result = run_session(&mut backend, &registry, &base, &demo_query(), &cfg);
        assert!(result.completed());
        assert_eq!(result.trace.raw_outputs.len(), 2);
        assert_eq!(result.trace.steps.len(), 1);
        assert_eq!(backend.prompts[0], backend.prompts[1], "retry reuses the same prompt");
    }

    #[test]
    fn retry_once_gives_up_after_the_second_failure() {
        let base = KnowledgeBase::demo();
        let registry = canonical_registry();
        let mut backend =
            Canned::new(vec![Ok("garbled".to_string()), Ok("still garbled".to_string())]);
        let cfg = SessionConfig { on_violation: ViolationPolicy::RetryOnce, ..SessionConfig::default() };
        let result = run_session(&mut backend, &registry, &base, &demo_query(), &cfg);
        assert_eq!(result.outcome, SessionOutcome::FormatViolation);
        assert_eq!(result.trace.raw_outputs.len(), 2);
    }

    #[test]
    fn transport_failure_scores_as_a_format_violation() {
        let base = KnowledgeBase::demo();
        let registry = canonical_registry();
        let mut backend = Canned::new(vec![Err("connection refused".to_string())]);
        let result =
            run_session(&mut backend, &registry, &base, &demo_query(), &SessionConfig::default());
        assert_eq!(result.outcome, SessionOutcome::FormatViolation);
        let violation = result.violation.unwrap();
        assert_eq!(violation.reason, ViolationReason::MissingThoughtLine);
        assert_eq!(violation.raw_text, "");
        assert_eq!(result.trace.raw_outputs, vec!["".to_string()]);
    }

    #[test]
    fn step_cap_bounds_non_terminating_sessions() {
        let base = KnowledgeBase::demo();
        let registry = canonical_registry();
        let mut backend = Canned::new(vec![Ok(TOOL_STEP.to_string()); DEFAULT_MAX_STEPS]);
        let result =
            run_session(&mut backend, &registry, &base, &demo_query(), &SessionConfig::default());
        assert_eq!(result.outcome, SessionOutcome::StepCapExceeded);
        assert_eq!(result.trace.steps.len(), DEFAULT_MAX_STEPS);
        assert!(result.trace.steps.iter().all(|step| step.observation.is_some()));
    }

    #[test]
    fn runaway_completions_are_clipped_to_their_first_step() {
        let base = KnowledgeBase::demo();
        let registry = canonical_registry();
        let runaway = format!("{TOOL_STEP}\n{FINAL_STEP}");
        let mut backend = Canned::new(vec![Ok(runaway), Ok(FINAL_STEP.to_string())]);
        let cfg = SessionConfig { parse_mode: ParseMode::Strict, ..SessionConfig::default() };
        let result = run_session(&mut backend, &registry, &base, &demo_query(), &cfg);
        assert!(result.completed());
        assert_eq!(result.trace.steps.len(), 2);
        assert_eq!(result.trace.steps[0].action.tool_name(), Some("CrowdCounting"));
    }

    #[test]
    fn start_session_failure_is_a_backend_error_outcome() {
        let base = KnowledgeBase::default_base(7);
        let registry = canonical_registry();
        let records = sample_records(1, 0);
        let mut backend = ScriptedBackend::new(&records, &base, CorruptionConfig::default());
        let unknown = Query { id: "missing".to_string(), text: "?".to_string(), media_ref: None };
        let result =
            run_session(&mut backend, &registry, &base, &unknown, &SessionConfig::default());
        assert_eq!(result.outcome, SessionOutcome::BackendError);
        assert!(result.backend_error.unwrap().contains("missing"));
        assert!(result.trace.steps.is_empty());
    }

    // ---- batches ----

    #[test]
    fn batch_results_are_ordered_and_worker_count_invariant() {
        let base = KnowledgeBase::default_base(7);
        let registry = canonical_registry();
        let records = sample_records(3, 3);
        let queries: Vec<Query> = records.iter().map(|record| record.query.clone()).collect();
        let corruption = CorruptionConfig {
            p_decision: 0.1,
            p_tool: 0.3,
            p_input: 0.2,
            p_final: 0.4,
            rng_seed: 21,
        };
        let make = || -> Box<dyn CompletionBackend> {
            Box::new(ScriptedBackend::new(&records, &base, corruption))
        };
        let cfg = SessionConfig::default();
        let serial = run_batch(make, &registry, &base, &queries, &cfg, 1);
        let parallel = run_batch(make, &registry, &base, &queries, &cfg, 8);
        assert_eq!(serial.len(), queries.len());
        for (result, query) in serial.iter().zip(&queries) {
            assert_eq!(result.trace.query_id, query.id);
        }
        assert_eq!(serial, parallel);
    }
}
