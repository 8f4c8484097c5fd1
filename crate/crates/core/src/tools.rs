//! The canonical tool registry and the deterministic simulated tools.
//!
//! Eleven perception tools across three categories, plus the two fixed
//! multi-stage pipelines built from them. Tool specifications (names,
//! categories, prompt descriptions, input shapes) live in a versioned data
//! file embedded at compile time, so prompt assembly and dataset generation
//! share one source of truth.
//!
//! Execution is simulated: [`invoke`] answers from the [`WorldFixture`] of
//! the addressed location instead of running any vision model, and is a pure
//! function of its arguments. Tool failures (unknown tool, unknown location,
//! malformed input) are returned as observations the agent can read and
//! react to, never as harness faults.
//!
//! [`WorldFixture`]: crate::knowledge::WorldFixture

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::KnowledgeBase;

/// Tool category, mirroring the three surveillance task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Human,
    Vehicle,
    Event,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Human => "human",
            Category::Vehicle => "vehicle",
            Category::Event => "event",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a tool expects in its `Action Input` line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputShape {
    /// `<media>, <location>`: a query image/video plus the location to
    /// search, split at the last comma.
    WithQueryMedia,
    /// `<location>` alone.
    LocationOnly,
}

/// One tool as advertised to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub category: Category,
    pub input_shape: InputShape,
    pub description: String,
}

/// A fixed multi-stage composition of registered tools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub name: String,
    pub stages: Vec<String>,
}

/// Errors from assembling a registry.
#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("duplicate name {0}")]
    DuplicateName(String),
    #[error("tool name {0} contains whitespace")]
    BadName(String),
    #[error("pipeline {pipeline} references unknown tool {stage}")]
    UnknownStage { pipeline: String, stage: String },
    #[error("pipeline {0} has fewer than 2 stages")]
    ShortPipeline(String),
}

/// The tool set: immutable after construction, shared read-only by every
/// session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    tools: Vec<ToolSpec>,
    pipelines: Vec<PipelineSpec>,
}

impl Registry {
    pub fn new(tools: Vec<ToolSpec>, pipelines: Vec<PipelineSpec>) -> Result<Registry, RegistryError> {
        let registry = Registry { tools, pipelines };
        let mut seen = std::collections::BTreeSet::new();
        for tool in &registry.tools {
            if tool.name.contains(char::is_whitespace) || tool.name.is_empty() {
                return Err(RegistryError::BadName(tool.name.clone()));
            }
            if !seen.insert(tool.name.to_lowercase()) {
                return Err(RegistryError::DuplicateName(tool.name.clone()));
            }
        }
        for pipeline in &registry.pipelines {
            if !seen.insert(pipeline.name.to_lowercase()) {
                return Err(RegistryError::DuplicateName(pipeline.name.clone()));
            }
            if pipeline.stages.len() < 2 {
                return Err(RegistryError::ShortPipeline(pipeline.name.clone()));
            }
            for stage in &pipeline.stages {
                if registry.get(stage).is_none() {
                    return Err(RegistryError::UnknownStage {
                        pipeline: pipeline.name.clone(),
                        stage: stage.clone(),
                    });
                }
            }
        }
        Ok(registry)
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    pub fn pipelines(&self) -> &[PipelineSpec] {
        &self.pipelines
    }

    /// Exact-name lookup.
    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|tool| tool.name == name)
    }

    /// Name lookup; lenient mode matches case-insensitively, mirroring the
    /// parser's tolerance for noisy model output.
    pub fn resolve(&self, name: &str, lenient: bool) -> Option<&ToolSpec> {
        if let Some(tool) = self.get(name) {
            return Some(tool);
        }
        if lenient {
            let wanted = name.to_lowercase();
            return self.tools.iter().find(|tool| tool.name.to_lowercase() == wanted);
        }
        None
    }

    pub fn pipeline(&self, name: &str) -> Option<&PipelineSpec> {
        self.pipelines.iter().find(|pipeline| pipeline.name == name)
    }

    pub fn tool_names(&self) -> Vec<String> {
        self.tools.iter().map(|tool| tool.name.clone()).collect()
    }

    /// Tool names plus pipeline names: the task vocabulary used for
    /// stratified splits and report breakdowns.
    pub fn task_names(&self) -> Vec<String> {
        let mut names = self.tool_names();
        names.extend(self.pipelines.iter().map(|pipeline| pipeline.name.clone()));
        names
    }

    /// Category of a task name (tool or pipeline). A pipeline takes the
    /// category of its first stage.
    pub fn task_category(&self, task: &str) -> Option<Category> {
        if let Some(tool) = self.get(task) {
            return Some(tool.category);
        }
        let pipeline = self.pipeline(task)?;
        self.get(&pipeline.stages[0]).map(|tool| tool.category)
    }
}

#[derive(Deserialize)]
struct RegistryFile {
    registry_version: String,
    tools: Vec<ToolSpec>,
    pipelines: Vec<PipelineSpec>,
}

static CANONICAL: OnceLock<Registry> = OnceLock::new();

/// The canonical 11-tool, 2-pipeline registry, parsed once from the
/// embedded data file.
pub fn canonical_registry() -> Registry {
    CANONICAL
        .get_or_init(|| {
            let file: RegistryFile =
                serde_json::from_str(include_str!("../data/tools_v1.json"))
                    .expect("embedded registry data parses");
            assert_eq!(
                file.registry_version,
                crate::REGISTRY_VERSION,
                "embedded registry data out of step with REGISTRY_VERSION",
            );
            Registry::new(file.tools, file.pipelines).expect("embedded registry data is valid")
        })
        .clone()
}

/// A tool's input after splitting the raw `Action Input` text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolInput {
    pub media_ref: Option<String>,
    pub location: String,
}

/// The raw input did not match the tool's input shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("expected '<media>, <location>'")]
pub struct InputShapeError;

/// Splits raw input text per the tool's shape: `with-query-media` splits at
/// the last comma into media and location; `location-only` treats the whole
/// trimmed text as the location.
pub fn parse_tool_input(raw: &str, spec: &ToolSpec) -> Result<ToolInput, InputShapeError> {
    match spec.input_shape {
        InputShape::WithQueryMedia => {
            let (media, location) = raw.rsplit_once(',').ok_or(InputShapeError)?;
            let media = media.trim();
            let location = location.trim();
            if media.is_empty() || location.is_empty() {
                return Err(InputShapeError);
            }
            Ok(ToolInput { media_ref: Some(media.to_string()), location: location.to_string() })
        }
        InputShape::LocationOnly => {
            Ok(ToolInput { media_ref: None, location: raw.trim().to_string() })
        }
    }
}

/// Why an invocation produced an error observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToolError {
    UnknownTool(String),
    UnknownLocation(String),
    InputShape,
}

/// Machine-readable counterpart of an observation's text, for tests and
/// structured consumers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToolResult {
    /// Identity, vehicle, and plate matching.
    Match { subject: String, location: String, found: bool },
    Count { location: String, count: u32 },
    Scene { location: String, label: String },
    /// Fire/smoke and violence flags.
    Flag { location: String, present: bool },
    Keypoints { location: String, available: bool },
    ActionLabel { location: String, identity: String, label: Option<String> },
    Error(ToolError),
}

/// What the agent sees after a tool call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    /// The line injected into the context after `Observation:`.
    pub text: String,
    /// The same outcome in structured form.
    pub structured: ToolResult,
}

impl Observation {
    fn new(text: impl Into<String>, structured: ToolResult) -> Observation {
        Observation { text: text.into(), structured }
    }

    fn error(text: impl Into<String>, error: ToolError) -> Observation {
        Observation { text: text.into(), structured: ToolResult::Error(error) }
    }
}

/// The query media's subject id: the part of the filename before the first
/// dot, which is how simulated fixtures link media to world content.
fn media_stem(media: &str) -> &str {
    media.split('.').next().unwrap_or(media)
}

/// Executes one tool call against the knowledge base. Deterministic: the
/// observation is a pure function of (registry, base, tool name, input).
/// Lenient mode resolves tool and location names case-insensitively.
pub fn invoke(
    registry: &Registry,
    base: &KnowledgeBase,
    tool_name: &str,
    raw_input: &str,
    lenient: bool,
) -> Observation {
    let spec = match registry.resolve(tool_name, lenient) {
        Some(spec) => spec,
        None => {
            return Observation::error(
                format!("error: unknown tool {tool_name}"),
                ToolError::UnknownTool(tool_name.to_string()),
            )
        }
    };
    let input = match parse_tool_input(raw_input, spec) {
        Ok(input) => input,
        Err(InputShapeError) => {
            return Observation::error("error: expected '<media>, <location>'", ToolError::InputShape)
        }
    };
    let entry = match base.lookup(&input.location, lenient) {
        Some(entry) => entry,
        None => {
            return Observation::error(
                format!("error: unknown location {}", input.location),
                ToolError::UnknownLocation(input.location.clone()),
            )
        }
    };

    let location = entry.location.clone();
    let fixture = &entry.fixture;
    let subject = input.media_ref.as_deref().map(media_stem).unwrap_or_default().to_string();

    match spec.name.as_str() {
        "FaceRecognition" | "PersonReidentification" | "GaitRecognition" => {
            let found = fixture.identities.contains(&subject);
            let text = if found {
                format!("identity {subject} found in {location}")
            } else {
                format!("no match in {location}")
            };
            Observation::new(text, ToolResult::Match { subject, location, found })
        }
        "VehicleReidentification" => {
            let found = fixture.vehicles.contains(&subject);
            let text = if found {
                format!("vehicle {subject} found in {location}")
            } else {
                format!("no match in {location}")
            };
            Observation::new(text, ToolResult::Match { subject, location, found })
        }
        "LicensePlateRecognition" => {
            let found = fixture.plates.contains(&subject);
            let text = if found {
                format!("plate {subject} found in {location}")
            } else {
                format!("no match in {location}")
            };
            Observation::new(text, ToolResult::Match { subject, location, found })
        }
        "CrowdCounting" => Observation::new(
            format!("counted {} people in {location}", fixture.crowd_count),
            ToolResult::Count { location, count: fixture.crowd_count },
        ),
        "SceneRecognition" => Observation::new(
            format!("scene: {}", fixture.scene_label),
            ToolResult::Scene { location, label: fixture.scene_label.clone() },
        ),
        "FireSmokeDetection" => Observation::new(
            if fixture.fire_present { "fire/smoke detected" } else { "no fire or smoke" },
            ToolResult::Flag { location, present: fixture.fire_present },
        ),
        "ViolenceDetection" => Observation::new(
            if fixture.violence_present { "violence detected" } else { "no violence detected" },
            ToolResult::Flag { location, present: fixture.violence_present },
        ),
        "PoseEstimation" => {
            let text = if fixture.poses_available {
                format!("keypoints extracted for {location}")
            } else {
                format!("no keypoints for {location}")
            };
            Observation::new(
                text,
                ToolResult::Keypoints { location, available: fixture.poses_available },
            )
        }
        "ActionRecognition" => {
            let label = fixture.actions.get(&subject).cloned();
            let text = match &label {
                Some(label) => format!("action: {label}"),
                None => "no action found".to_string(),
            };
            Observation::new(text, ToolResult::ActionLabel { location, identity: subject, label })
        }
        other => Observation::error(
            format!("error: unknown tool {other}"),
            ToolError::UnknownTool(other.to_string()),
        ),
    }
}
