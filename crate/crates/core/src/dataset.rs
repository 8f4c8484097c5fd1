//! Instruction dataset generation: template instantiation over the fixture
//! world, gold-trace synthesis, the stratified train/validation split, and
//! SFT pair export.
//!
//! The pipeline is deliberately hermetic. Surface diversity comes from a
//! curated phrasing bank per tool (embedded, versioned) instead of a live
//! paraphrasing model, and every record's gold steps are validated against
//! the simulated tools at generation time, so a generated dataset replays
//! cleanly by construction. Everything downstream of a seed is
//! deterministic.
//!
//! Held-out evaluation material uses disjoint resources: test-pool records
//! draw from phrasings and locations that train/validation records never
//! touch.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::{derive_seed, KnowledgeBase, VideoEntry};
use crate::prompt::{build_prompt, history_append, PromptContext, Query};
use crate::react_format::{render_step, Action};
use crate::tools::{canonical_registry, invoke, Category, Observation, Registry, ToolResult};

/// Which disjoint resource pool a generation run draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    /// Training/validation material: the main phrasing bank and four fifths
    /// of the locations.
    TrainVal,
    /// Held-out material: test-only phrasings and the remaining locations.
    Test,
}

impl Pool {
    fn id_prefix(self) -> &'static str {
        match self {
            Pool::TrainVal => "q",
            Pool::Test => "t",
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Pool::TrainVal => "train/val",
            Pool::Test => "test",
        }
    }
}

/// Generation parameters. Counts are per tool and per pipeline; the split
/// ratio is train:validation.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub per_tool_count: usize,
    pub pipeline_count: usize,
    pub seed: u64,
    pub split_ratio: (u32, u32),
    /// Probability that a record targets a fixture hit (the queried thing is
    /// actually there) rather than a miss.
    pub hit_rate: f64,
    pub pool: Pool,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig {
            per_tool_count: 10,
            pipeline_count: 10,
            seed: 0,
            split_ratio: (49, 1),
            hit_rate: 0.5,
            pool: Pool::TrainVal,
        }
    }
}

/// One gold tool step. `decision` is always true here: the final answer is
/// carried separately by the record, with decision false implied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldStep {
    pub decision: bool,
    pub tool: String,
    pub input: String,
}

/// Which partition a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One benchmark sample: a query, its gold tool schedule, and the gold
/// final answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRecord {
    pub query: Query,
    pub category: Category,
    pub gold_steps: Vec<GoldStep>,
    pub gold_final: String,
    pub split: Split,
}

impl DatasetRecord {
    /// The tool-or-pipeline name this record exercises, recovered from the
    /// gold schedule: a multi-step schedule matching a registered pipeline
    /// names the pipeline, anything else names its first tool.
    pub fn task_name(&self, registry: &Registry) -> String {
        if self.gold_steps.len() >= 2 {
            for pipeline in registry.pipelines() {
                if pipeline.stages.len() == self.gold_steps.len()
                    && pipeline
                        .stages
                        .iter()
                        .zip(&self.gold_steps)
                        .all(|(stage, step)| *stage == step.tool)
                {
                    return pipeline.name.clone();
                }
            }
        }
        self.gold_steps
            .first()
            .map(|step| step.tool.clone())
            .unwrap_or_else(|| "unknown".to_string())
    }
}

/// One template group: every way a task is asked for, split into the main
/// bank and held-out test phrasings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub tool_or_pipeline: String,
    pub category: Category,
    pub train_phrasings: Vec<String>,
    pub test_phrasings: Vec<String>,
}

impl InstructionTemplate {
    pub fn phrasings(&self, pool: Pool) -> &[String] {
        match pool {
            Pool::TrainVal => &self.train_phrasings,
            Pool::Test => &self.test_phrasings,
        }
    }
}

#[derive(Deserialize)]
struct TemplateFile {
    schema_version: String,
    templates: Vec<InstructionTemplate>,
}

/// The embedded phrasing bank covering all 11 tools and both pipelines.
pub fn builtin_templates() -> Vec<InstructionTemplate> {
    let file: TemplateFile = serde_json::from_str(include_str!("../data/templates_v1.json"))
        .expect("embedded template data parses");
    assert_eq!(
        file.schema_version,
        crate::SCHEMA_VERSION,
        "embedded template data out of step with SCHEMA_VERSION",
    );
    file.templates
}

/// Errors from dataset generation.
#[derive(Debug, Error)]
pub enum GenError {
    #[error("no template for task {0}")]
    MissingTemplate(String),
    #[error("template {template}: category disagrees with the registry")]
    TemplateCategory { template: String },
    #[error("template {template}: unfillable slot {{{slot}}}")]
    UnfillableSlot { template: String, slot: String },
    #[error("no eligible location for task {task} in the {pool} pool")]
    NoLocation { task: String, pool: &'static str },
}

const SLOT_NAMES: [&str; 5] = ["identity", "plate", "vehicle", "location", "media"];

fn instantiate(
    phrasing: &str,
    slots: &BTreeMap<&'static str, String>,
    template: &str,
) -> Result<String, GenError> {
    let mut text = phrasing.to_string();
    for (slot, value) in slots {
        text = text.replace(&format!("{{{slot}}}"), value);
    }
    for slot in SLOT_NAMES {
        if text.contains(&format!("{{{slot}}}")) {
            return Err(GenError::UnfillableSlot {
                template: template.to_string(),
                slot: slot.to_string(),
            });
        }
    }
    Ok(text)
}

/// Splits the base's locations into the two disjoint pools: every fifth
/// location (by sorted order) is held out for test, the rest serve
/// train/validation.
fn pool_locations(base: &KnowledgeBase, pool: Pool) -> Vec<&VideoEntry> {
    base.entries()
        .enumerate()
        .filter(|(index, _)| match pool {
            Pool::TrainVal => index % 5 != 4,
            Pool::Test => index % 5 == 4,
        })
        .map(|(_, entry)| entry)
        .collect()
}

/// Whether a location can host a (task, hit) record.
fn eligible(task: &str, hit: bool, entry: &VideoEntry) -> bool {
    let fixture = &entry.fixture;
    match task {
        "FaceRecognition" | "PersonReidentification" | "GaitRecognition" => {
            !hit || !fixture.identities.is_empty()
        }
        "VehicleReidentification" => !hit || !fixture.vehicles.is_empty(),
        "LicensePlateRecognition" => !hit || !fixture.plates.is_empty(),
        "CrowdCounting" | "SceneRecognition" => true,
        "FireSmokeDetection" => fixture.fire_present == hit,
        "ViolenceDetection" | "AnomalyDetection" => fixture.violence_present == hit,
        "PoseEstimation" => fixture.poses_available == hit,
        "ActionRecognition" => !hit || !fixture.actions.is_empty(),
        // Both stages must make sense: keypoints first, then the label
        // lookup, which misses via an unknown or unlabeled identity.
        "ActionAnalysis" => fixture.poses_available && (!hit || !fixture.actions.is_empty()),
        _ => false,
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a String]) -> &'a String {
    items[rng.gen_range(0..items.len())]
}

/// What one record queries for, beyond the location.
struct Subject {
    identity: Option<String>,
    plate: Option<String>,
    vehicle: Option<String>,
    media: Option<String>,
}

impl Subject {
    fn none() -> Subject {
        Subject { identity: None, plate: None, vehicle: None, media: None }
    }
}

fn sample_subject(task: &str, hit: bool, entry: &VideoEntry, rng: &mut ChaCha8Rng) -> Subject {
    let fixture = &entry.fixture;
    let mut subject = Subject::none();
    match task {
        "FaceRecognition" | "PersonReidentification" | "GaitRecognition" => {
            let identity = if hit {
                pick(rng, &fixture.identities.iter().collect::<Vec<_>>()).clone()
            } else {
                // The stranger namespace never intersects fixture identities.
                format!("stranger_{}", rng.gen_range(0..1000))
            };
            let extension = match task {
                "FaceRecognition" => "jpg",
                "PersonReidentification" => "png",
                _ => "mp4",
            };
            subject.media = Some(format!("{identity}.{extension}"));
            subject.identity = Some(identity);
        }
        "VehicleReidentification" => {
            let vehicle = if hit {
                pick(rng, &fixture.vehicles.iter().collect::<Vec<_>>()).clone()
            } else {
                format!("car_unreg_{}", rng.gen_range(0..1000))
            };
            subject.media = Some(format!("{vehicle}.jpg"));
            subject.vehicle = Some(vehicle);
        }
        "LicensePlateRecognition" => {
            let plate = if hit {
                pick(rng, &fixture.plates.iter().collect::<Vec<_>>()).clone()
            } else {
                // Synthetic fixture plates are random, so probe until the
                // candidate misses; the loop is deterministic and short.
                let mut serial = rng.gen_range(0..1000u32);
                loop {
                    let candidate = format!("ZZ{serial:03}");
                    if !fixture.plates.contains(&candidate) {
                        break candidate;
                    }
                    serial = (serial + 1) % 1000;
                }
            };
            subject.media = Some(format!("{plate}.png"));
            subject.plate = Some(plate);
        }
        "ActionRecognition" | "ActionAnalysis" => {
            let identity = if hit {
                pick(rng, &fixture.actions.keys().collect::<Vec<_>>()).clone()
            } else {
                let unlabeled: Vec<&String> = fixture
                    .identities
                    .iter()
                    .filter(|identity| !fixture.actions.contains_key(*identity))
                    .collect();
                if unlabeled.is_empty() {
                    format!("stranger_{}", rng.gen_range(0..1000))
                } else {
                    pick(rng, &unlabeled).clone()
                }
            };
            subject.media = Some(format!("{identity}.mp4"));
            subject.identity = Some(identity);
        }
        _ => {}
    }
    subject
}

fn gold_steps_for(task: &str, location: &str, subject: &Subject) -> Vec<GoldStep> {
    let tool_step = |tool: &str, input: String| GoldStep {
        decision: true,
        tool: tool.to_string(),
        input,
    };
    let with_media = |tool: &str| {
        let media = subject.media.as_deref().expect("media-bearing task sampled media");
        tool_step(tool, format!("{media}, {location}"))
    };
    match task {
        "AnomalyDetection" => vec![
            tool_step("SceneRecognition", location.to_string()),
            tool_step("ViolenceDetection", location.to_string()),
        ],
        "ActionAnalysis" => vec![
            tool_step("PoseEstimation", location.to_string()),
            with_media("ActionRecognition"),
        ],
        "CrowdCounting" | "SceneRecognition" | "FireSmokeDetection" | "ViolenceDetection"
        | "PoseEstimation" => vec![tool_step(task, location.to_string())],
        _ => vec![with_media(task)],
    }
}

/// The gold final answer, synthesized from the structured observations so
/// it is consistent with a replay by construction.
fn final_from(task: &str, observations: &[Observation]) -> String {
    let last = observations.last().expect("every task has at least one step");
    match (task, &last.structured) {
        (
            "FaceRecognition" | "PersonReidentification" | "GaitRecognition",
            ToolResult::Match { subject, location, found },
        ) => {
            if *found {
                format!("Yes, {subject} was found in {location}.")
            } else {
                format!("No, {subject} was not found in {location}.")
            }
        }
        ("VehicleReidentification", ToolResult::Match { subject, location, found }) => {
            if *found {
                format!("Yes, vehicle {subject} was found in {location}.")
            } else {
                format!("No, vehicle {subject} was not found in {location}.")
            }
        }
        ("LicensePlateRecognition", ToolResult::Match { subject, location, found }) => {
            if *found {
                format!("Yes, plate {subject} was seen in {location}.")
            } else {
                format!("No, plate {subject} was not seen in {location}.")
            }
        }
        ("CrowdCounting", ToolResult::Count { location, count }) => {
            format!("There are {count} people in {location}.")
        }
        ("SceneRecognition", ToolResult::Scene { location, label }) => {
            format!("Scene type at {location}: {label}.")
        }
        ("FireSmokeDetection", ToolResult::Flag { location, present }) => {
            if *present {
                format!("Fire or smoke was detected in {location}.")
            } else {
                format!("No fire or smoke was detected in {location}.")
            }
        }
        ("ViolenceDetection", ToolResult::Flag { location, present }) => {
            if *present {
                format!("Violence was detected in {location}.")
            } else {
                format!("No violence was detected in {location}.")
            }
        }
        ("PoseEstimation", ToolResult::Keypoints { location, available }) => {
            if *available {
                format!("Keypoints were extracted for {location}.")
            } else {
                format!("No keypoints could be extracted for {location}.")
            }
        }
        ("ActionRecognition", ToolResult::ActionLabel { location, identity, label }) => {
            match label {
                Some(label) => format!("{identity} is {label} in {location}."),
                None => format!("No action was recognized for {identity} in {location}."),
            }
        }
        ("AnomalyDetection", ToolResult::Flag { location, present }) => {
            let scene = match &observations[0].structured {
                ToolResult::Scene { label, .. } => label.clone(),
                _ => "unknown".to_string(),
            };
            if *present {
                format!("Anomaly at {location} ({scene}): violence detected.")
            } else {
                format!("No anomaly at {location} ({scene}).")
            }
        }
        ("ActionAnalysis", ToolResult::ActionLabel { location, identity, label }) => match label {
            Some(label) => format!("{identity} is {label} in {location}."),
            None => format!("Could not determine what {identity} is doing in {location}."),
        },
        _ => last.text.clone(),
    }
}

/// Generates records for every tool and pipeline: `per_tool_count` per tool,
/// `pipeline_count` per pipeline, in registry order. Pure function of
/// (base, registry, templates, cfg).
pub fn generate(
    base: &KnowledgeBase,
    registry: &Registry,
    templates: &[InstructionTemplate],
    cfg: &GenConfig,
) -> Result<Vec<DatasetRecord>, GenError> {
    assert!((0.0..=1.0).contains(&cfg.hit_rate), "hit_rate must be a probability");
    let pool = pool_locations(base, cfg.pool);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    let mut counter = 0usize;

    for task in registry.task_names() {
        let template = templates
            .iter()
            .find(|template| template.tool_or_pipeline == task)
            .ok_or_else(|| GenError::MissingTemplate(task.clone()))?;
        if registry.task_category(&task) != Some(template.category) {
            return Err(GenError::TemplateCategory { template: task.clone() });
        }
        let phrasings = template.phrasings(cfg.pool);
        if phrasings.is_empty() {
            return Err(GenError::MissingTemplate(task.clone()));
        }
        let count = if registry.get(&task).is_some() {
            cfg.per_tool_count
        } else {
            cfg.pipeline_count
        };

        for _ in 0..count {
            let phrasing = &phrasings[rng.gen_range(0..phrasings.len())];
            let wanted_hit = rng.gen_bool(cfg.hit_rate);
            // Fall back to the opposite outcome when the pool cannot host
            // the drawn one (e.g. a pool with no burning locations).
            let candidates: Vec<&&VideoEntry> =
                pool.iter().filter(|entry| eligible(&task, wanted_hit, entry)).collect();
            let (hit, candidates) = if candidates.is_empty() {
                let flipped: Vec<&&VideoEntry> =
                    pool.iter().filter(|entry| eligible(&task, !wanted_hit, entry)).collect();
                (!wanted_hit, flipped)
            } else {
                (wanted_hit, candidates)
            };
            if candidates.is_empty() {
                return Err(GenError::NoLocation { task: task.clone(), pool: cfg.pool.as_str() });
            }
            let entry = candidates[rng.gen_range(0..candidates.len())];
            let location = entry.location.clone();

            let subject = sample_subject(&task, hit, entry, &mut rng);
            let mut slots: BTreeMap<&'static str, String> = BTreeMap::new();
            slots.insert("location", location.clone());
            if let Some(identity) = &subject.identity {
                slots.insert("identity", identity.clone());
            }
            if let Some(plate) = &subject.plate {
                slots.insert("plate", plate.clone());
            }
            if let Some(vehicle) = &subject.vehicle {
                slots.insert("vehicle", vehicle.clone());
            }
            if let Some(media) = &subject.media {
                slots.insert("media", media.clone());
            }
            let query_text = instantiate(phrasing, &slots, &task)?;

            let gold_steps = gold_steps_for(&task, &location, &subject);
            let observations: Vec<Observation> = gold_steps
                .iter()
                .map(|step| invoke(registry, base, &step.tool, &step.input, false))
                .collect();
            let gold_final = final_from(&task, &observations);

            counter += 1;
            records.push(DatasetRecord {
                query: Query {
                    id: format!("{}{counter:05}", cfg.pool.id_prefix()),
                    text: query_text,
                    media_ref: subject.media.clone(),
                },
                category: template.category,
                gold_steps,
                gold_final,
                split: match cfg.pool {
                    Pool::TrainVal => Split::Train,
                    Pool::Test => Split::Test,
                },
            });
        }
    }
    Ok(records)
}

/// Splits records into (train, validation) at the given ratio,
/// seed-deterministically, stratified by task name: the validation quota is
/// spread over tasks by largest remainder, and when the quota is at least
/// the number of tasks, every task lands at least one validation record.
/// Relative record order is preserved within each half.
pub fn split(
    records: Vec<DatasetRecord>,
    ratio: (u32, u32),
    seed: u64,
) -> (Vec<DatasetRecord>, Vec<DatasetRecord>) {
    assert!(ratio.0 > 0 && ratio.1 > 0, "ratio parts must be positive");
    let total = records.len();
    if total == 0 {
        return (Vec::new(), Vec::new());
    }
    let val_total = (total as f64 * f64::from(ratio.1) / f64::from(ratio.0 + ratio.1)).round()
        as usize;

    let registry = canonical_registry();
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (index, record) in records.iter().enumerate() {
        strata.entry(record.task_name(&registry)).or_default().push(index);
    }

    let names: Vec<String> = strata.keys().cloned().collect();
    let mut quotas: BTreeMap<String, usize> = BTreeMap::new();
    let mut remainders: Vec<(String, f64)> = Vec::new();
    for name in &names {
        let exact = strata[name].len() as f64 * val_total as f64 / total as f64;
        quotas.insert(name.clone(), exact.floor() as usize);
        remainders.push((name.clone(), exact - exact.floor()));
    }
    let assigned: usize = quotas.values().sum();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    for (name, _) in remainders.iter().take(val_total.saturating_sub(assigned)) {
        *quotas.get_mut(name).unwrap() += 1;
    }
    if val_total >= names.len() {
        // Budget allows full coverage: move one slot from the largest quota
        // to each task that would otherwise be absent from validation.
        loop {
            let Some(starved) = names.iter().find(|name| quotas[*name] == 0) else { break };
            let donor = names
                .iter()
                .filter(|name| quotas[*name] > 1)
                .max_by_key(|name| (quotas[*name], std::cmp::Reverse(name.as_str())))
                .cloned();
            match donor {
                Some(donor) => {
                    *quotas.get_mut(&donor).unwrap() -= 1;
                    *quotas.get_mut(starved.as_str()).unwrap() += 1;
                }
                None => break,
            }
        }
    }

    let mut val_indices = BTreeSet::new();
    for name in &names {
        let mut indices = strata[name].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, name));
        indices.shuffle(&mut rng);
        val_indices.extend(indices.into_iter().take(quotas[name]));
    }

    let mut train = Vec::with_capacity(total - val_indices.len());
    let mut val = Vec::with_capacity(val_indices.len());
    for (index, mut record) in records.into_iter().enumerate() {
        if val_indices.contains(&index) {
            record.split = Split::Val;
            val.push(record);
        } else {
            record.split = Split::Train;
            train.push(record);
        }
    }
    (train, val)
}

/// One supervised fine-tuning pair: the prompt at some step of a gold
/// session, and the canonical step text the model should emit there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftPair {
    pub input: String,
    pub target: String,
}

/// Errors from dataset and SFT file IO.
#[derive(Debug, Error)]
pub enum DatasetFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Exports one SFT pair per gold step plus one for the final answer,
/// replaying the gold schedule through the tools to thread real
/// observations into each prompt. Returns the number of pairs written.
pub fn export_sft(
    records: &[DatasetRecord],
    registry: &Registry,
    base: &KnowledgeBase,
    path: &Path,
) -> Result<usize, DatasetFileError> {
    let tool_specs = registry.tools().to_vec();
    let locations = base.list_locations();
    let mut out = String::new();
    let mut count = 0usize;
    for record in records {
        let mut ctx = PromptContext::new(tool_specs.clone(), locations.clone(), record.query.clone());
        for step in &record.gold_steps {
            let action = Action::ToolCall {
                tool_name: step.tool.clone(),
                tool_input: step.input.clone(),
            };
            let pair =
                SftPair { input: build_prompt(&ctx), target: render_step(&action, None) };
            out.push_str(&serde_json::to_string(&pair).expect("pairs serialize"));
            out.push('\n');
            count += 1;
            let observation = invoke(registry, base, &step.tool, &step.input, false);
            ctx = history_append(&ctx, action, observation.text)
                .expect("gold steps are tool calls");
        }
        let final_action = Action::Final { answer: record.gold_final.clone() };
        let pair =
            SftPair { input: build_prompt(&ctx), target: render_step(&final_action, None) };
        out.push_str(&serde_json::to_string(&pair).expect("pairs serialize"));
        out.push('\n');
        count += 1;
    }
    fs::write(path, out)?;
    Ok(count)
}

/// Reads an SFT file written by [`export_sft`].
pub fn read_sft_file(path: &Path) -> Result<Vec<SftPair>, DatasetFileError> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let pair: SftPair = serde_json::from_str(line).map_err(|err| {
            DatasetFileError::Malformed { line: index + 1, message: err.to_string() }
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

#[derive(Serialize, Deserialize)]
struct WireRecord {
    query_id: String,
    query_text: String,
    media_ref: Option<String>,
    category: Category,
    gold_steps: Vec<GoldStep>,
    gold_final: String,
    split: Split,
}

impl From<&DatasetRecord> for WireRecord {
    fn from(record: &DatasetRecord) -> WireRecord {
        WireRecord {
            query_id: record.query.id.clone(),
            query_text: record.query.text.clone(),
            media_ref: record.query.media_ref.clone(),
            category: record.category,
            gold_steps: record.gold_steps.clone(),
            gold_final: record.gold_final.clone(),
            split: record.split,
        }
    }
}

impl WireRecord {
    fn into_record(self) -> Result<DatasetRecord, String> {
        if self.query_id.is_empty() {
            return Err("empty query_id".to_string());
        }
        if let Some(step) = self.gold_steps.iter().find(|step| !step.decision) {
            return Err(format!("gold step for {} carries decision false", step.tool));
        }
        Ok(DatasetRecord {
            query: Query { id: self.query_id, text: self.query_text, media_ref: self.media_ref },
            category: self.category,
            gold_steps: self.gold_steps,
            gold_final: self.gold_final,
            split: self.split,
        })
    }
}

/// Writes records as line-delimited JSON, UTF-8, LF, fixed field order.
pub fn write_dataset_file(records: &[DatasetRecord], path: &Path) -> Result<(), DatasetFileError> {
    let mut out = String::new();
    for record in records {
        let wire = WireRecord::from(record);
        out.push_str(&serde_json::to_string(&wire).expect("records serialize"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a dataset file written by [`write_dataset_file`]; malformed or
/// incoherent lines fail the read with their 1-based line number.
pub fn read_dataset_file(path: &Path) -> Result<Vec<DatasetRecord>, DatasetFileError> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let wire: WireRecord = serde_json::from_str(line).map_err(|err| {
            DatasetFileError::Malformed { line: index + 1, message: err.to_string() }
        })?;
        let record = wire.into_record().map_err(|message| DatasetFileError::Malformed {
            line: index + 1,
            message,
        })?;
        records.push(record);
    }
    Ok(records)
}
