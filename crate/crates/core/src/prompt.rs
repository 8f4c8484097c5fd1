//! Prompt assembly: turns tool specifications, the knowledge-base listing,
//! the user query, and the accumulated step history into the single text
//! prompt a completion backend sees.
//!
//! The exact wording lives in this module's constants and in
//! [`format_instructions`], which quotes the step grammar straight from
//! [`crate::react_format`]'s markers so the instructions and the parser can
//! never drift apart. Wording changes alter model behavior and must bump
//! [`PROMPT_VERSION`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::react_format::{
    Action, Step, ACTION_INPUT_MARKER, ACTION_MARKER, FINAL_MARKER, OBSERVATION_MARKER,
    THOUGHT_MARKER,
};
use crate::tools::ToolSpec;

/// Version tag of the prompt wording.
pub const PROMPT_VERSION: &str = "1";

/// Opening line of every prompt.
pub const PREAMBLE: &str = "You are a video surveillance assistant that answers questions about a camera network. You have access to the following tools:";

/// Introduces the location listing.
pub const KNOWLEDGE_PREAMBLE: &str = "The camera network covers these locations:";

/// Marks the user query line.
pub const QUESTION_MARKER: &str = "Question:";

/// One user request to the agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub media_ref: Option<String>,
}

/// Everything needed to build the prompt for the next step of one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptContext {
    pub tool_specs: Vec<ToolSpec>,
    pub location_names: Vec<String>,
    pub query: Query,
    /// Executed tool steps so far; every entry carries an observation.
    pub history: Vec<Step>,
}

impl PromptContext {
    pub fn new(tool_specs: Vec<ToolSpec>, location_names: Vec<String>, query: Query) -> PromptContext {
        PromptContext { tool_specs, location_names, query, history: Vec::new() }
    }
}

/// The step-grammar section of the prompt, quoting the canonical markers.
pub fn format_instructions() -> String {
    format!(
        "Decide at every step whether you need a tool.\n\
         To call a tool, reply with exactly these three lines:\n\
         {THOUGHT_MARKER} Yes\n\
         {ACTION_MARKER} <tool name>\n\
         {ACTION_INPUT_MARKER} <tool input>\n\
         The runtime then appends the tool result on a line beginning with \"{OBSERVATION_MARKER}\" and you continue.\n\
         To finish, reply with exactly these two lines:\n\
         {THOUGHT_MARKER} No\n\
         {FINAL_MARKER} <your final answer>"
    )
}

/// Builds the full prompt: preamble, one `> name: description` line per
/// tool, format instructions, the location listing, the query (with its
/// media reference when present), and the rendered history. Deterministic:
/// identical contexts produce identical bytes.
pub fn build_prompt(ctx: &PromptContext) -> String {
    let mut text = String::new();
    text.push_str(PREAMBLE);
    text.push('\n');
    for tool in &ctx.tool_specs {
        text.push_str("> ");
        text.push_str(&tool.name);
        text.push_str(": ");
        text.push_str(&tool.description);
        text.push('\n');
    }
    text.push('\n');
    text.push_str(&format_instructions());
    text.push_str("\n\n");
    text.push_str(KNOWLEDGE_PREAMBLE);
    text.push(' ');
    text.push_str(&ctx.location_names.join(", "));
    text.push_str("\n\n");
    text.push_str(QUESTION_MARKER);
    text.push(' ');
    text.push_str(&ctx.query.text);
    if let Some(media_ref) = &ctx.query.media_ref {
        text.push_str(" [media: ");
        text.push_str(media_ref);
        text.push(']');
    }
    for step in &ctx.history {
        text.push('\n');
        text.push_str(&step.render());
    }
    text
}

/// Appending a final action to history is a contract error: history holds
/// executed tool steps only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("final actions cannot enter history")]
pub struct FinalActionInHistory;

/// Returns a new context with one more executed step; the original context
/// is untouched (value semantics).
pub fn history_append(
    ctx: &PromptContext,
    action: Action,
    observation: impl Into<String>,
) -> Result<PromptContext, FinalActionInHistory> {
    if action.is_final() {
        return Err(FinalActionInHistory);
    }
    let mut next = ctx.clone();
    next.history.push(Step::executed(action, observation));
    Ok(next)
}
