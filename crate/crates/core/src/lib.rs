//! Runtime and benchmark harness for tool-scheduling agents in a simulated
//! video-surveillance network.
//!
//! The crate is organised around one loop: a controller model receives a
//! natural-language query about the camera network, emits structured
//! tool-call steps in the ReAct dialect understood by [`react_format`], the
//! runtime executes those calls against a deterministic world fixture, and
//! the resulting traces are scored step-by-step against gold schedules.
//!
//! * [`react_format`]: the step grammar (parser, renderer, trace files).
//! * [`prompt`]: system prompt assembly and history threading.
//! * [`knowledge`]: the simulated camera-network world.
//! * [`tools`]: the canonical tool registry and tool execution.
//! * [`backend`]: completion backends (scripted oracle, HTTP endpoint, ...).
//! * [`agent`]: the session loop tying backend, parser and tools together.
//! * [`dataset`]: instruction dataset generation, splits, SFT export.
//! * [`eval`]: the four scheduling metrics and report rendering.

pub mod agent;
pub mod backend;
pub mod dataset;
pub mod eval;
pub mod knowledge;
pub mod prompt;
pub mod react_format;
pub mod tools;

/// Version tag for the canonical tool registry. Bumped when a tool is added,
/// removed, or changes its input shape or observation vocabulary.
pub const REGISTRY_VERSION: &str = "1";

/// Version tag for the on-disk record schemas (traces, dataset records,
/// knowledge-base snapshots, SFT pairs).
pub const SCHEMA_VERSION: &str = "1";
