//! Scoring: position-aligned comparison of predicted traces against gold
//! schedules, aggregated into four accuracies.
//!
//! Denominators are fixed by the gold data, never by what the model
//! produced: decision accuracy is measured over every gold step (final
//! answer included), tool and input accuracy over the gold tool steps, and
//! whole accuracy over samples. A sample is whole only if every position is
//! right and the prediction does not run past the gold schedule; extra
//! trailing steps cannot dilute the per-step metrics, they only forfeit
//! that sample's whole credit.
//!
//! Final answer text is ignored by default (free-form wording is the
//! model's business); [`EvalOptions::match_final_text`] opts into a
//! whitespace-normalized comparison that then also gates whole credit.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dataset::DatasetRecord;
use crate::react_format::{Action, Trace};
use crate::tools::{parse_tool_input, Registry};

/// Scoring knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Forgive cosmetic differences: tool names resolve case-insensitively
    /// and inputs are compared field-wise (exact media, case-insensitive
    /// location) instead of byte-wise.
    pub lenient: bool,
    /// Also require the final answer text to match (whitespace-normalized).
    pub match_final_text: bool,
}

impl Default for EvalOptions {
    fn default() -> EvalOptions {
        EvalOptions { lenient: true, match_final_text: false }
    }
}

/// Verdict for one gold position. `tool` and `input` are judged only at
/// tool positions; the final position carries just the decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepJudgment {
    pub decision: bool,
    pub tool: Option<bool>,
    pub input: Option<bool>,
}

/// Verdict for one sample: one judgment per gold step (final included, as
/// the last entry), the optional final-text verdict, and whole credit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleJudgment {
    pub steps: Vec<StepJudgment>,
    pub final_text: Option<bool>,
    pub whole: bool,
}

fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn tools_match(registry: &Registry, gold: &str, predicted: &str, lenient: bool) -> bool {
    if lenient {
        match (registry.resolve(gold, true), registry.resolve(predicted, true)) {
            (Some(a), Some(b)) => a.name == b.name,
            _ => gold.eq_ignore_ascii_case(predicted),
        }
    } else {
        gold == predicted
    }
}

/// Inputs are compared under the gold tool's shape: the model is being
/// scored on feeding the scheduled tool what it needs, whatever tool name
/// it actually wrote.
fn inputs_match(
    registry: &Registry,
    gold_tool: &str,
    gold: &str,
    predicted: &str,
    lenient: bool,
) -> bool {
    if !lenient {
        return gold == predicted;
    }
    if let Some(spec) = registry.get(gold_tool) {
        if let (Ok(a), Ok(b)) = (parse_tool_input(gold, spec), parse_tool_input(predicted, spec)) {
            return a.media_ref == b.media_ref
                && a.location.eq_ignore_ascii_case(&b.location);
        }
    }
    normalize_text(gold) == normalize_text(predicted)
}

/// Judges one trace against its gold record, position by position. Missing
/// positions (the trace ended early) judge false on every facet.
pub fn judge_sample(
    registry: &Registry,
    record: &DatasetRecord,
    trace: &Trace,
    opts: &EvalOptions,
) -> SampleJudgment {
    let mut steps = Vec::with_capacity(record.gold_steps.len() + 1);
    for (index, gold) in record.gold_steps.iter().enumerate() {
        let judgment = match trace.steps.get(index).map(|step| &step.action) {
            Some(Action::ToolCall { tool_name, tool_input }) => StepJudgment {
                decision: true,
                tool: Some(tools_match(registry, &gold.tool, tool_name, opts.lenient)),
                input: Some(inputs_match(
                    registry,
                    &gold.tool,
                    &gold.input,
                    tool_input,
                    opts.lenient,
                )),
            },
            Some(Action::Final { .. }) | None => {
                StepJudgment { decision: false, tool: Some(false), input: Some(false) }
            }
        };
        steps.push(judgment);
    }

    let final_position = record.gold_steps.len();
    let predicted_final = match trace.steps.get(final_position).map(|step| &step.action) {
        Some(Action::Final { answer }) => Some(answer.as_str()),
        _ => None,
    };
    steps.push(StepJudgment { decision: predicted_final.is_some(), tool: None, input: None });
    let final_text = opts.match_final_text.then(|| {
        predicted_final
            .is_some_and(|answer| normalize_text(answer) == normalize_text(&record.gold_final))
    });

    let whole = steps.iter().all(|step| {
        step.decision && step.tool.unwrap_or(true) && step.input.unwrap_or(true)
    }) && final_text.unwrap_or(true)
        && trace.steps.len() <= record.gold_steps.len() + 1;
    SampleJudgment { steps, final_text, whole }
}

/// One group's accuracies plus the counts behind them. Empty denominators
/// score zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricBlock {
    pub samples: usize,
    pub gold_steps: usize,
    pub gold_tool_steps: usize,
    pub decision_hits: usize,
    pub tool_hits: usize,
    pub input_hits: usize,
    pub whole_hits: usize,
}

impl MetricBlock {
    fn add(&mut self, judgment: &SampleJudgment) {
        self.samples += 1;
        self.gold_steps += judgment.steps.len();
        self.whole_hits += judgment.whole as usize;
        for step in &judgment.steps {
            self.decision_hits += step.decision as usize;
            if let Some(tool) = step.tool {
                self.gold_tool_steps += 1;
                self.tool_hits += tool as usize;
                self.input_hits += step.input.unwrap_or(false) as usize;
            }
        }
    }

    fn ratio(hits: usize, denominator: usize) -> f64 {
        if denominator == 0 {
            0.0
        } else {
            hits as f64 / denominator as f64
        }
    }

    pub fn acc_decision(&self) -> f64 {
        MetricBlock::ratio(self.decision_hits, self.gold_steps)
    }

    pub fn acc_tool(&self) -> f64 {
        MetricBlock::ratio(self.tool_hits, self.gold_tool_steps)
    }

    pub fn acc_input(&self) -> f64 {
        MetricBlock::ratio(self.input_hits, self.gold_tool_steps)
    }

    pub fn acc_whole(&self) -> f64 {
        MetricBlock::ratio(self.whole_hits, self.samples)
    }
}

/// Scores grouped three ways: everything, single-tool samples, and
/// interrelated (pipeline) samples, with per-task and per-category
/// breakdowns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub all: MetricBlock,
    pub single: MetricBlock,
    pub interrelated: MetricBlock,
    pub per_task: BTreeMap<String, MetricBlock>,
    pub per_category: BTreeMap<String, MetricBlock>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no trace for query {0}")]
    MissingTrace(String),
    #[error("trace for unknown query {0}")]
    UnknownTrace(String),
    #[error("duplicate trace for query {0}")]
    DuplicateTrace(String),
}

/// Scores a batch. Every gold record must be answered by exactly one trace;
/// stray or duplicate traces are errors, not zeros, so a scrambled run
/// cannot masquerade as a bad model.
pub fn score(
    registry: &Registry,
    records: &[DatasetRecord],
    traces: &[Trace],
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let mut by_id: BTreeMap<&str, &Trace> = BTreeMap::new();
    for trace in traces {
        if by_id.insert(trace.query_id.as_str(), trace).is_some() {
            return Err(EvalError::DuplicateTrace(trace.query_id.clone()));
        }
    }
    let gold_ids: std::collections::BTreeSet<&str> =
        records.iter().map(|record| record.query.id.as_str()).collect();
    if let Some(stray) = by_id.keys().find(|id| !gold_ids.contains(**id)) {
        return Err(EvalError::UnknownTrace(stray.to_string()));
    }

    let mut report = EvalReport::default();
    for record in records {
        let trace = by_id
            .get(record.query.id.as_str())
            .ok_or_else(|| EvalError::MissingTrace(record.query.id.clone()))?;
        let judgment = judge_sample(registry, record, trace, opts);
        report.all.add(&judgment);
        if record.gold_steps.len() > 1 {
            report.interrelated.add(&judgment);
        } else {
            report.single.add(&judgment);
        }
        report.per_task.entry(record.task_name(registry)).or_default().add(&judgment);
        report
            .per_category
            .entry(record.category.as_str().to_string())
            .or_default()
            .add(&judgment);
    }
    Ok(report)
}

fn percent(value: f64) -> String {
    format!("{:.2}", value * 100.0)
}

fn markdown_row(name: &str, block: &MetricBlock) -> String {
    format!(
        "| {name} | {} | {} | {} | {} | {} |\n",
        block.samples,
        percent(block.acc_decision()),
        percent(block.acc_tool()),
        percent(block.acc_input()),
        percent(block.acc_whole()),
    )
}

/// Renders the report as a markdown document (percentages).
pub fn render_markdown(report: &EvalReport) -> String {
    let mut text = String::from(
        "| group | samples | decision % | tool % | input % | whole % |\n\
         |---|---|---|---|---|---|\n",
    );
    text.push_str(&markdown_row("all", &report.all));
    text.push_str(&markdown_row("single-tool", &report.single));
    text.push_str(&markdown_row("interrelated", &report.interrelated));
    for (task, block) in &report.per_task {
        text.push_str(&markdown_row(&format!("task: {task}"), block));
    }
    for (category, block) in &report.per_category {
        text.push_str(&markdown_row(&format!("category: {category}"), block));
    }
    text
}

fn csv_row(scope: &str, name: &str, block: &MetricBlock) -> String {
    format!(
        "{scope},{name},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
        block.samples,
        block.gold_steps,
        block.gold_tool_steps,
        block.acc_decision(),
        block.acc_tool(),
        block.acc_input(),
        block.acc_whole(),
    )
}

/// Renders the report as CSV (raw fractions, machine-oriented).
pub fn render_csv(report: &EvalReport) -> String {
    let mut text = String::from(
        "scope,name,samples,gold_steps,gold_tool_steps,acc_decision,acc_tool,acc_input,acc_whole\n",
    );
    text.push_str(&csv_row("group", "all", &report.all));
    text.push_str(&csv_row("group", "single-tool", &report.single));
    text.push_str(&csv_row("group", "interrelated", &report.interrelated));
    for (task, block) in &report.per_task {
        text.push_str(&csv_row("task", task, block));
    }
    for (category, block) in &report.per_category {
        text.push_str(&csv_row("category", category, block));
    }
    text
}
