//! The textual ReAct step protocol: a strict, whitespace-tolerant parser and
//! a canonical serializer for model outputs and trace files.
//!
//! One step of controller output looks like this on the tool path:
//!
//! ```text
//! Thought: Do I need to use a tool? Yes
//! Action: FaceRecognition
//! Action Input: suspect_A.jpg, Cairo
//! ```
//!
//! and like this on the final-answer path:
//!
//! ```text
//! Thought: Do I need to use a tool? No
//! AI: The person was found in Cairo.
//! ```
//!
//! [`parse_step`] turns one completion into an [`Action`] or reports a
//! [`FormatViolation`]; it never aborts. [`render_step`] emits the canonical
//! text and is a right inverse of the strict parser. Traces (one record per
//! query) are persisted as line-delimited JSON via [`read_trace_file`] and
//! [`write_trace_file`].

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Line prefix shared by every step, without the trailing space.
pub const THOUGHT_MARKER: &str = "Thought: Do I need to use a tool?";
/// Marker of the tool-name line, without the trailing space.
pub const ACTION_MARKER: &str = "Action:";
/// Marker of the tool-input line, without the trailing space.
pub const ACTION_INPUT_MARKER: &str = "Action Input:";
/// Marker of the final-answer line, without the trailing space.
///
/// The upstream template only shows the final feedback pictorially, so the
/// concrete marker is a protocol choice made here; prompt assembly quotes it
/// from this constant so prompts and parser can never drift apart.
pub const FINAL_MARKER: &str = "AI:";
/// Marker of an executed tool observation, without the trailing space.
pub const OBSERVATION_MARKER: &str = "Observation:";
/// Stop sequence handed to completion backends so generation halts before
/// the runtime-provided observation line.
pub const STOP_SEQUENCE: &str = "\nObservation:";

/// The yes/no head of a step: `true` means "use a tool", `false` means
/// "finish with an answer".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Decision(pub bool);

impl Decision {
    /// The exact token that appears after [`THOUGHT_MARKER`].
    pub fn token(self) -> &'static str {
        if self.0 {
            "Yes"
        } else {
            "No"
        }
    }

    /// Inverse of [`Decision::token`]; any other string is a format
    /// violation at the call site.
    pub fn from_token(token: &str) -> Option<Decision> {
        match token {
            "Yes" => Some(Decision(true)),
            "No" => Some(Decision(false)),
            _ => None,
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One parsed controller step. The variant carries the decision, so a tool
/// call with decision "No" is unrepresentable by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Decision "Yes": invoke `tool_name` on `tool_input`.
    ///
    /// `tool_input` is opaque free text at this layer; splitting it into a
    /// media reference and a location is the tool registry's concern.
    ToolCall { tool_name: String, tool_input: String },
    /// Decision "No": stop and emit `answer` as the final feedback.
    Final { answer: String },
}

impl Action {
    pub fn decision(&self) -> Decision {
        match self {
            Action::ToolCall { .. } => Decision(true),
            Action::Final { .. } => Decision(false),
        }
    }

    pub fn is_final(&self) -> bool {
        matches!(self, Action::Final { .. })
    }

    pub fn tool_name(&self) -> Option<&str> {
        match self {
            Action::ToolCall { tool_name, .. } => Some(tool_name),
            Action::Final { .. } => None,
        }
    }
}

/// An action plus the observation produced by executing it.
///
/// `observation` is present exactly when the action is a [`Action::ToolCall`]
/// that was actually executed; final steps never carry one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub action: Action,
    pub observation: Option<String>,
}

impl Step {
    /// An executed tool step.
    pub fn executed(action: Action, observation: impl Into<String>) -> Step {
        Step { action, observation: Some(observation.into()) }
    }

    /// A final step (no observation by definition).
    pub fn final_answer(answer: impl Into<String>) -> Step {
        Step { action: Action::Final { answer: answer.into() }, observation: None }
    }

    /// Canonical text of this step, observation line included when present.
    pub fn render(&self) -> String {
        render_step(&self.action, self.observation.as_deref())
    }
}

/// Everything one query produced: the parsed steps and the verbatim model
/// texts they were parsed from.
///
/// `raw_outputs` keeps one entry per completion the backend returned, so it
/// can be longer than `steps`: a completion that failed to parse contributes
/// raw text but no step.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub query_id: String,
    pub steps: Vec<Step>,
    pub raw_outputs: Vec<String>,
}

impl Trace {
    pub fn new(query_id: impl Into<String>) -> Trace {
        Trace { query_id: query_id.into(), ..Trace::default() }
    }
}

/// Why a completion failed to parse as a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationReason {
    /// The first line does not begin with [`THOUGHT_MARKER`].
    MissingThoughtLine,
    /// The thought line is present but the token after it is neither
    /// "Yes" nor "No".
    BadDecisionToken,
    /// Decision "Yes" but the next line is not a well-formed
    /// `Action: <name>` line (missing, wrong marker, empty name, or a name
    /// containing whitespace).
    MissingActionLine,
    /// Decision "Yes" with a good action line but no `Action Input:` line.
    MissingActionInput,
    /// Decision "No" but the body is not an `AI:`-marked answer: the answer
    /// line is absent entirely, or other text precedes it.
    TrailingGarbage,
}

impl ViolationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationReason::MissingThoughtLine => "missing-thought-line",
            ViolationReason::BadDecisionToken => "bad-decision-token",
            ViolationReason::MissingActionLine => "missing-action-line",
            ViolationReason::MissingActionInput => "missing-action-input",
            ViolationReason::TrailingGarbage => "trailing-garbage",
        }
    }
}

impl fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A completion that could not be parsed as a step.
///
/// [`parse_step`] always reports `step_index` 0 because it sees one
/// completion at a time; the session loop rewrites the index to the step
/// position within the session before recording it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("step {step_index}: {reason}")]
pub struct FormatViolation {
    pub step_index: usize,
    pub raw_text: String,
    pub reason: ViolationReason,
}

impl FormatViolation {
    pub fn with_step_index(mut self, step_index: usize) -> FormatViolation {
        self.step_index = step_index;
        self
    }
}

/// How much output noise the parser absorbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Bytes must match the canonical grammar exactly.
    Strict,
    /// Before matching, each line is trimmed, runs of internal spaces and
    /// tabs collapse to one space, and blank lines are dropped. This also
    /// collapses whitespace runs inside tool inputs and answers, which is
    /// intentional: the tolerance exists to absorb noisy model output, and
    /// downstream input comparison normalizes the same way.
    Lenient,
}

fn normalize_line(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut pending_space = false;
    for ch in line.trim().chars() {
        if ch == ' ' || ch == '\t' {
            pending_space = true;
        } else {
            if pending_space {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        }
    }
    out
}

/// Splits `line` as `<marker> <payload>`. In lenient mode a line that is
/// exactly the marker counts as an empty payload (normalization has already
/// eaten the trailing space the canonical form would carry).
fn split_marked(line: &str, marker: &str, mode: ParseMode) -> Option<String> {
    let rest = line.strip_prefix(marker)?;
    if rest.is_empty() {
        return match mode {
            ParseMode::Lenient => Some(String::new()),
            ParseMode::Strict => None,
        };
    }
    rest.strip_prefix(' ').map(str::to_string)
}

/// Parses one model completion into an [`Action`].
///
/// Grammar: the first line must read `Thought: Do I need to use a tool?`
/// followed by `Yes` or `No`. On `Yes` the next two lines are
/// `Action: <tool_name>` and `Action Input: <tool_input>`, with the input
/// running to the end of the text. On `No` the answer is everything after
/// the `AI: ` marker, which must open the line immediately following the
/// thought line (lenient mode skips blank lines in between, nothing else).
///
/// If the completion contains several thought blocks, everything from the
/// second thought line on is discarded before parsing: backends are asked to
/// stop at [`STOP_SEQUENCE`], but a model free-running past its own step
/// must not corrupt the first one.
///
/// Total: every input yields either an action or a violation, never a panic.
/// Line endings are treated purely as separators, so a multi-line payload is
/// reassembled with `\n` regardless of the flavor that came in.
pub fn parse_step(raw: &str, mode: ParseMode) -> Result<Action, FormatViolation> {
    let violation = |reason| FormatViolation { step_index: 0, raw_text: raw.to_string(), reason };

    let mut lines: Vec<String> = match mode {
        ParseMode::Strict => raw.lines().map(str::to_string).collect(),
        ParseMode::Lenient => raw
            .lines()
            .map(normalize_line)
            .filter(|line| !line.is_empty())
            .collect(),
    };
    if let Some(extra) = lines
        .iter()
        .skip(1)
        .position(|line| line.starts_with(THOUGHT_MARKER))
    {
        lines.truncate(extra + 1);
    }

    let thought_line = match lines.first() {
        Some(line) => line,
        None => return Err(violation(ViolationReason::MissingThoughtLine)),
    };
    let token = match split_marked(thought_line, THOUGHT_MARKER, mode) {
        Some(token) => token,
        None => return Err(violation(ViolationReason::MissingThoughtLine)),
    };
    let decision = match Decision::from_token(&token) {
        Some(decision) => decision,
        None => return Err(violation(ViolationReason::BadDecisionToken)),
    };

    if decision.0 {
        let tool_name = lines
            .get(1)
            .and_then(|line| split_marked(line, ACTION_MARKER, mode))
            .ok_or_else(|| violation(ViolationReason::MissingActionLine))?;
        if tool_name.is_empty() || tool_name.contains(char::is_whitespace) {
            return Err(violation(ViolationReason::MissingActionLine));
        }
        let first_input = lines
            .get(2)
            .and_then(|line| split_marked(line, ACTION_INPUT_MARKER, mode))
            .ok_or_else(|| violation(ViolationReason::MissingActionInput))?;
        let mut tool_input = first_input;
        for line in &lines[3..] {
            tool_input.push('\n');
            tool_input.push_str(line);
        }
        Ok(Action::ToolCall { tool_name, tool_input })
    } else {
        let body = &lines[1..];
        let first = match body.first() {
            Some(line) => line,
            None => return Err(violation(ViolationReason::TrailingGarbage)),
        };
        let opening = match split_marked(first, FINAL_MARKER, mode) {
            Some(opening) => opening,
            None => return Err(violation(ViolationReason::TrailingGarbage)),
        };
        let mut answer = opening;
        for line in &body[1..] {
            answer.push('\n');
            answer.push_str(line);
        }
        Ok(Action::Final { answer })
    }
}

/// Emits the canonical strict-mode text of a step, appending an
/// `Observation:` line when an observation is given.
///
/// Right inverse of the parser: `parse_step(render_step(a, None), Strict)`
/// returns `a` for any action whose payload lines are themselves canonical
/// (no leading/trailing whitespace, no embedded thought marker).
pub fn render_step(action: &Action, observation: Option<&str>) -> String {
    let mut text = match action {
        Action::ToolCall { tool_name, tool_input } => format!(
            "{} {}\n{} {}\n{} {}",
            THOUGHT_MARKER,
            Decision(true).token(),
            ACTION_MARKER,
            tool_name,
            ACTION_INPUT_MARKER,
            tool_input
        ),
        Action::Final { answer } => format!(
            "{} {}\n{} {}",
            THOUGHT_MARKER,
            Decision(false).token(),
            FINAL_MARKER,
            answer
        ),
    };
    if let Some(observation) = observation {
        text.push('\n');
        text.push_str(OBSERVATION_MARKER);
        text.push(' ');
        text.push_str(observation);
    }
    text
}

/// Errors from trace file IO.
#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Serialize, Deserialize)]
struct StepRecord {
    decision: bool,
    tool: Option<String>,
    input: Option<String>,
    answer: Option<String>,
    observation: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct TraceRecord {
    query_id: String,
    steps: Vec<StepRecord>,
    raw: Vec<String>,
}

impl From<&Step> for StepRecord {
    fn from(step: &Step) -> StepRecord {
        match &step.action {
            Action::ToolCall { tool_name, tool_input } => StepRecord {
                decision: true,
                tool: Some(tool_name.clone()),
                input: Some(tool_input.clone()),
                answer: None,
                observation: step.observation.clone(),
            },
            Action::Final { answer } => StepRecord {
                decision: false,
                tool: None,
                input: None,
                answer: Some(answer.clone()),
                observation: step.observation.clone(),
            },
        }
    }
}

impl StepRecord {
    fn into_step(self) -> Result<Step, String> {
        if self.decision {
            match (self.tool, self.input) {
                (Some(tool_name), Some(tool_input)) => Ok(Step {
                    action: Action::ToolCall { tool_name, tool_input },
                    observation: self.observation,
                }),
                _ => Err("decision true requires tool and input".to_string()),
            }
        } else {
            match self.answer {
                Some(answer) if self.observation.is_none() => {
                    Ok(Step { action: Action::Final { answer }, observation: None })
                }
                Some(_) => Err("final step cannot carry an observation".to_string()),
                None => Err("decision false requires answer".to_string()),
            }
        }
    }
}

fn trace_from_record(record: TraceRecord) -> Result<Trace, String> {
    let mut steps = Vec::with_capacity(record.steps.len());
    for step in record.steps {
        steps.push(step.into_step()?);
    }
    if let Some(position) = steps.iter().position(|step| step.action.is_final()) {
        if position + 1 != steps.len() {
            return Err("final step must be last".to_string());
        }
    }
    if record.raw.len() < steps.len() {
        return Err(format!(
            "{} raw outputs cannot cover {} steps",
            record.raw.len(),
            steps.len()
        ));
    }
    Ok(Trace { query_id: record.query_id, steps, raw_outputs: record.raw })
}

/// Serializes traces as line-delimited JSON, one record per query, UTF-8
/// with LF line endings. Field order is fixed, so equal traces always
/// produce byte-identical files.
pub fn write_trace_file(traces: &[Trace], path: &Path) -> Result<(), TraceFileError> {
    let mut out = String::new();
    for trace in traces {
        let record = TraceRecord {
            query_id: trace.query_id.clone(),
            steps: trace.steps.iter().map(StepRecord::from).collect(),
            raw: trace.raw_outputs.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("trace records serialize"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a trace file written by [`write_trace_file`]. A malformed line
/// fails the whole read with its 1-based line number; nothing is skipped
/// silently.
pub fn read_trace_file(path: &Path) -> Result<Vec<Trace>, TraceFileError> {
    let text = fs::read_to_string(path)?;
    let mut traces = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let record: TraceRecord = serde_json::from_str(line).map_err(|err| {
            TraceFileError::Malformed { line: index + 1, message: err.to_string() }
        })?;
        let trace = trace_from_record(record)
            .map_err(|message| TraceFileError::Malformed { line: index + 1, message })?;
        traces.push(trace);
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tool_call(name: &str, input: &str) -> Action {
        Action::ToolCall { tool_name: name.to_string(), tool_input: input.to_string() }
    }

    fn final_answer(answer: &str) -> Action {
        Action::Final { answer: answer.to_string() }
    }

    // ---- parsing: the documented grammar ----

    #[test]
    fn parses_canonical_tool_call() {
        let raw = "Thought: Do I need to use a tool? Yes\nAction: FaceRecognition\nAction Input: suspect_A.jpg, Cairo";
        for mode in [ParseMode::Strict, ParseMode::Lenient] {
            assert_eq!(
                parse_step(raw, mode),
                Ok(tool_call("FaceRecognition", "suspect_A.jpg, Cairo")),
            );
        }
    }

    #[test]
    fn parses_canonical_final_answer() {
        let raw = "Thought: Do I need to use a tool? No\nAI: The person was found in Cairo.";
        for mode in [ParseMode::Strict, ParseMode::Lenient] {
            assert_eq!(
                parse_step(raw, mode),
                Ok(final_answer("The person was found in Cairo.")),
            );
        }
    }

    #[test]
    fn lenient_absorbs_extra_whitespace_strict_rejects_it() {
        let raw = "Thought:  Do I need to use a tool?  Yes \n Action:  CrowdCounting\nAction Input:  Paris";
        assert_eq!(
            parse_step(raw, ParseMode::Lenient),
            Ok(tool_call("CrowdCounting", "Paris")),
        );
        assert_eq!(
            parse_step(raw, ParseMode::Strict).unwrap_err().reason,
            ViolationReason::MissingThoughtLine,
        );
    }

    #[test]
    fn lenient_ignores_blank_lines() {
        let raw = "\nThought: Do I need to use a tool? Yes\n\nAction: SceneRecognition\n\nAction Input: Cairo\n";
        assert_eq!(
            parse_step(raw, ParseMode::Lenient),
            Ok(tool_call("SceneRecognition", "Cairo")),
        );
        assert!(parse_step(raw, ParseMode::Strict).is_err());
    }

    #[test]
    fn multi_line_payloads_run_to_end_of_text() {
        let raw = "Thought: Do I need to use a tool? Yes\nAction: PoseEstimation\nAction Input: Cairo\nsecond line";
        assert_eq!(
            parse_step(raw, ParseMode::Strict),
            Ok(tool_call("PoseEstimation", "Cairo\nsecond line")),
        );
        let raw = "Thought: Do I need to use a tool? No\nAI: line one\nline two";
        assert_eq!(
            parse_step(raw, ParseMode::Strict),
            Ok(final_answer("line one\nline two")),
        );
    }

    #[test]
    fn second_thought_block_is_discarded() {
        let raw = "Thought: Do I need to use a tool? Yes\nAction: GaitRecognition\nAction Input: walk.mp4, Cairo\nThought: Do I need to use a tool? No\nAI: leaked continuation";
        for mode in [ParseMode::Strict, ParseMode::Lenient] {
            assert_eq!(
                parse_step(raw, mode),
                Ok(tool_call("GaitRecognition", "walk.mp4, Cairo")),
            );
        }
    }

    // ---- parsing: violations ----

    #[test]
    fn each_violation_reason_is_reachable() {
        let cases = [
            ("", ViolationReason::MissingThoughtLine),
            ("I will now use a tool.", ViolationReason::MissingThoughtLine),
            (
                "Thought: Do I need to use a tool? Maybe\nAction: FaceRecognition",
                ViolationReason::BadDecisionToken,
            ),
            (
                "Thought: Do I need to use a tool? Yes\nFaceRecognition",
                ViolationReason::MissingActionLine,
            ),
            (
                "Thought: Do I need to use a tool? Yes\nAction: FaceRecognition",
                ViolationReason::MissingActionInput,
            ),
            (
                "Thought: Do I need to use a tool? No\nThe person was found.",
                ViolationReason::TrailingGarbage,
            ),
            ("Thought: Do I need to use a tool? No", ViolationReason::TrailingGarbage),
        ];
        for (raw, reason) in cases {
            let violation = parse_step(raw, ParseMode::Lenient).unwrap_err();
            assert_eq!(violation.reason, reason, "raw: {raw:?}");
            assert_eq!(violation.raw_text, raw);
            assert_eq!(violation.step_index, 0);
        }
    }

    #[test]
    fn tool_name_with_whitespace_is_rejected() {
        let raw = "Thought: Do I need to use a tool? Yes\nAction: Face Recognition\nAction Input: a.jpg, Cairo";
        assert_eq!(
            parse_step(raw, ParseMode::Lenient).unwrap_err().reason,
            ViolationReason::MissingActionLine,
        );
    }

    #[test]
    fn garbage_before_final_marker_is_a_violation() {
        let raw = "Thought: Do I need to use a tool? No\nthinking out loud\nAI: Done.";
        assert_eq!(
            parse_step(raw, ParseMode::Lenient).unwrap_err().reason,
            ViolationReason::TrailingGarbage,
        );
    }

    #[test]
    fn violation_index_can_be_rewritten() {
        let violation = parse_step("nope", ParseMode::Lenient).unwrap_err().with_step_index(3);
        assert_eq!(violation.step_index, 3);
        assert_eq!(violation.to_string(), "step 3: missing-thought-line");
    }

    // ---- rendering ----

    #[test]
    fn renders_canonical_tool_call() {
        assert_eq!(
            render_step(&tool_call("GaitRecognition", "walk.mp4, Cairo"), None),
            "Thought: Do I need to use a tool? Yes\nAction: GaitRecognition\nAction Input: walk.mp4, Cairo",
        );
    }

    #[test]
    fn renders_canonical_final() {
        assert_eq!(
            render_step(&final_answer("Done."), None),
            "Thought: Do I need to use a tool? No\nAI: Done.",
        );
    }

    #[test]
    fn renders_observation_suffix() {
        let text = render_step(&tool_call("FaceRecognition", "a.jpg, Cairo"), Some("person found"));
        assert!(text.ends_with("\nObservation: person found"));
    }

    #[test]
    fn empty_answer_round_trips() {
        let action = final_answer("");
        let text = render_step(&action, None);
        assert_eq!(parse_step(&text, ParseMode::Strict), Ok(action.clone()));
        assert_eq!(parse_step(&text, ParseMode::Lenient), Ok(action));
    }

    // ---- trace files ----

    fn sample_trace(id: &str) -> Trace {
        Trace {
            query_id: id.to_string(),
            steps: vec![
                Step::executed(tool_call("CrowdCounting", "Paris"), "counted 7 people in Paris"),
                Step::final_answer("7 people."),
            ],
            raw_outputs: vec![
                "Thought: Do I need to use a tool? Yes\nAction: CrowdCounting\nAction Input: Paris".to_string(),
                "Thought: Do I need to use a tool? No\nAI: 7 people.".to_string(),
            ],
        }
    }

    #[test]
    fn trace_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.jsonl");
        let traces = vec![sample_trace("q1"), sample_trace("q2")];
        write_trace_file(&traces, &path).unwrap();
        assert_eq!(read_trace_file(&path).unwrap(), traces);

        let first = fs::read(&path).unwrap();
        write_trace_file(&read_trace_file(&path).unwrap(), &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn empty_trace_file_reads_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        fs::write(&path, "").unwrap();
        assert_eq!(read_trace_file(&path).unwrap(), Vec::<Trace>::new());
    }

    #[test]
    fn malformed_line_is_reported_with_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = r#"{"query_id":"q1","steps":[],"raw":[]}"#;
        fs::write(&path, format!("{good}\nnot json\n")).unwrap();
        match read_trace_file(&path) {
            Err(TraceFileError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed-line error, got {other:?}"),
        }
    }

    #[test]
    fn incoherent_records_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let cases = [
            // decision true but no tool
            r#"{"query_id":"q","steps":[{"decision":true,"tool":null,"input":"x","answer":null,"observation":null}],"raw":["r"]}"#,
            // final step before a tool step
            r#"{"query_id":"q","steps":[{"decision":false,"tool":null,"input":null,"answer":"a","observation":null},{"decision":true,"tool":"CrowdCounting","input":"Paris","answer":null,"observation":"c"}],"raw":["r","r"]}"#,
            // fewer raw outputs than steps
            r#"{"query_id":"q","steps":[{"decision":false,"tool":null,"input":null,"answer":"a","observation":null}],"raw":[]}"#,
            // observation on a final step
            r#"{"query_id":"q","steps":[{"decision":false,"tool":null,"input":null,"answer":"a","observation":"o"}],"raw":["r"]}"#,
        ];
        for case in cases {
            fs::write(&path, format!("{case}\n")).unwrap();
            assert!(
                matches!(read_trace_file(&path), Err(TraceFileError::Malformed { line: 1, .. })),
                "case: {case}",
            );
        }
    }

    #[test]
    fn more_raw_outputs_than_steps_is_valid() {
        // A completion that failed to parse leaves raw text behind without a
        // step, so this shape must survive a round trip.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.jsonl");
        let trace = Trace {
            query_id: "q".to_string(),
            steps: vec![],
            raw_outputs: vec!["garbled".to_string()],
        };
        write_trace_file(std::slice::from_ref(&trace), &path).unwrap();
        assert_eq!(read_trace_file(&path).unwrap(), vec![trace]);
    }

    // ---- properties ----

    /// Payload words: printable, no whitespace, so joining with single
    /// spaces yields canonical lines that survive lenient normalization.
    fn word() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[!-~]{1,8}").unwrap()
    }

    fn payload_line() -> impl Strategy<Value = String> {
        proptest::collection::vec(word(), 1..5).prop_map(|words| words.join(" "))
    }

    fn payload_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(payload_line(), 1..4).prop_map(|lines| lines.join("\n"))
    }

    fn tool_name_strategy() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[A-Za-z][A-Za-z0-9_]{0,24}").unwrap()
    }

    fn action_strategy() -> impl Strategy<Value = Action> {
        prop_oneof![
            (tool_name_strategy(), payload_text()).prop_map(|(tool_name, tool_input)| {
                Action::ToolCall { tool_name, tool_input }
            }),
            payload_text().prop_map(|answer| Action::Final { answer }),
        ]
    }

    proptest! {
        #[test]
        fn render_then_parse_is_identity(action in action_strategy()) {
            let text = render_step(&action, None);
            prop_assert_eq!(parse_step(&text, ParseMode::Strict), Ok(action.clone()));
            // Canonical renderings parse identically in both modes.
            prop_assert_eq!(parse_step(&text, ParseMode::Lenient), Ok(action));
        }

        #[test]
        fn parse_is_total(raw in ".*") {
            let _ = parse_step(&raw, ParseMode::Strict);
            let _ = parse_step(&raw, ParseMode::Lenient);
        }

        #[test]
        fn whitespace_fuzz_never_changes_lenient_parse(
            action in action_strategy(),
            pads in proptest::collection::vec((0usize..3, 0usize..3, 0usize..2), 1..16),
        ) {
            let canonical = render_step(&action, None);
            let expected = parse_step(&canonical, ParseMode::Lenient).unwrap();
            let mut fuzzed = Vec::new();
            for (index, line) in canonical.lines().enumerate() {
                let (lead, trail, blanks) = pads[index % pads.len()];
                for _ in 0..blanks {
                    fuzzed.push(String::new());
                }
                let mut line = line.to_string();
                // Inflate one existing space to a run of spaces and tabs.
                if let Some(position) = line.find(' ') {
                    line.insert_str(position, &" \t"[..lead.min(2)]);
                }
                fuzzed.push(format!("{}{}{}", " ".repeat(lead), line, "\t".repeat(trail)));
            }
            let fuzzed = fuzzed.join("\n");
            prop_assert_eq!(parse_step(&fuzzed, ParseMode::Lenient), Ok(expected));
        }
    }
}
