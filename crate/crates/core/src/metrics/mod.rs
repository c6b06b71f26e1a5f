//! Localization evaluation: rank metrics over predicted locations against
//! gold sets extracted from reference patches.

mod diff;

pub use diff::{parse_gold_patch, GoldSets};

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::errors::MetricsError;
use crate::graph::NodeKind;
use crate::session::RetrievalSession;

/// One predicted location; a ranked answer is a list of these with
/// non-increasing scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub file: String,
    pub function: String,
    pub start_line: u32,
    pub end_line: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub instance_id: String,
    pub predictions: Vec<PredictionRecord>,
}

/// Load a predictions file: one JSON object per line.
pub fn load_predictions(
    reader: impl BufRead,
) -> Result<BTreeMap<String, RankedPrediction>, MetricsError> {
    let mut result = BTreeMap::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| MetricsError::MalformedPredictions {
            line: line_no,
            detail: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: RankedPrediction =
            serde_json::from_str(&line).map_err(|e| MetricsError::MalformedPredictions {
                line: line_no,
                detail: e.to_string(),
            })?;
        // Rank order is score order; a stable sort keeps ties as given.
        record
            .predictions
            .sort_by(|a, b| b.score.total_cmp(&a.score));
        result.insert(record.instance_id.clone(), record);
    }
    Ok(result)
}

/// 1 iff any of the top-k ranked items is in the gold set.
pub fn recall_at_k<T: Ord>(predicted: &[T], gold: &BTreeSet<T>, k: usize) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let hit = predicted.iter().take(k).any(|item| gold.contains(item));
    f64::from(hit as u8)
}

/// Reciprocal rank of the first gold item, 0 when none appears.
pub fn mrr<T: Ord>(predicted: &[T], gold: &BTreeSet<T>) -> f64 {
    predicted
        .iter()
        .position(|item| gold.contains(item))
        .map(|position| 1.0 / (position as f64 + 1.0))
        .unwrap_or(0.0)
}

/// Harmonic mean of precision@k (hits / k) and recall@k (hits / |gold|).
pub fn f1_at_k<T: Ord>(predicted: &[T], gold: &BTreeSet<T>, k: usize) -> f64 {
    if gold.is_empty() || k == 0 {
        return 0.0;
    }
    let top: BTreeSet<&T> = predicted.iter().take(k).collect();
    let hits = top.iter().filter(|item| gold.contains(**item)).count() as f64;
    if hits == 0.0 {
        return 0.0;
    }
    let precision = hits / k as f64;
    let recall = hits / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Intersection-over-union of two line sets. Two empty sets are identical,
/// hence 1.
pub fn line_iou(predicted: &BTreeSet<(String, u32)>, gold: &BTreeSet<(String, u32)>) -> f64 {
    let intersection = predicted.intersection(gold).count() as f64;
    let union = predicted.union(gold).count() as f64;
    if union == 0.0 {
        return 1.0;
    }
    intersection / union
}

/// Fraction of gold lines inside the packed spans.
pub fn coverage_at_budget(spans: &[(String, u32, u32)], gold: &BTreeSet<(String, u32)>) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let covered = gold
        .iter()
        .filter(|(file, line)| {
            spans
                .iter()
                .any(|(f, start, end)| f == file && start <= line && line <= end)
        })
        .count() as f64;
    covered / gold.len() as f64
}

fn average_ranks(series: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..series.len()).collect();
    order.sort_by(|&a, &b| series[a].total_cmp(&series[b]));
    let mut ranks = vec![0.0; series.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && series[order[j + 1]] == series[order[i]] {
            j += 1;
        }
        // Tied values share the average of the ranks they span (1-based).
        let average = (i + j) as f64 / 2.0 + 1.0;
        for &index in &order[i..=j] {
            ranks[index] = average;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average-rank tie handling.
/// `None` when undefined: mismatched/short input or a constant series.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ranks_a = average_ranks(a);
    let ranks_b = average_ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for i in 0..a.len() {
        let da = ranks_a[i] - mean;
        let db = ranks_b[i] - mean;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return None;
    }
    Some(cov / (var_a * var_b).sqrt())
}

/// Per-instance metric values. Rank metrics are 0 for instances with a
/// missing prediction; instances with an empty gold set are excluded from
/// the corresponding aggregate means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceReport {
    pub instance_id: String,
    pub missing_prediction: bool,
    pub gold_file_count: usize,
    pub gold_function_count: usize,
    pub gold_line_count: usize,
    pub file_r1: f64,
    pub file_r3: f64,
    pub file_r5: f64,
    pub file_mrr: f64,
    pub function_r1: f64,
    pub function_r3: f64,
    pub function_r5: f64,
    pub function_mrr: f64,
    pub function_f1_at_3: f64,
    pub line_r1: f64,
    pub line_r5: f64,
    pub line_r10: f64,
    pub line_iou: f64,
    pub coverage_at_budget: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AggregateReport {
    pub instances: usize,
    pub missing_predictions: usize,
    /// Instances excluded from file/function/line means (empty gold sets).
    pub excluded_file_instances: usize,
    pub excluded_function_instances: usize,
    pub excluded_line_instances: usize,
    pub file_r1: f64,
    pub file_r3: f64,
    pub file_r5: f64,
    pub file_mrr: f64,
    pub function_r1: f64,
    pub function_r3: f64,
    pub function_r5: f64,
    pub function_mrr: f64,
    pub function_f1_at_3: f64,
    pub line_r1: f64,
    pub line_r5: f64,
    pub line_r10: f64,
    pub line_iou: f64,
    pub coverage_at_budget: f64,
    /// Rank correlation between per-instance function R@1 and an external
    /// score series, when one was supplied and the correlation is defined.
    pub spearman_function_r1_vs_external: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub aggregate: AggregateReport,
    pub per_instance: Vec<InstanceReport>,
}

/// Greedily pack prediction spans, in rank order, into a token budget.
/// This is the retrieval window used for Coverage@budget when evaluating
/// prediction files that carry no explicit context bundle.
pub fn pack_prediction_window(
    session: &RetrievalSession,
    predictions: &[PredictionRecord],
    budget_tokens: u64,
) -> Vec<(String, u32, u32)> {
    let mut packed = Vec::new();
    let mut total = 0u64;
    for prediction in predictions {
        let Ok(span) = session.get_code_span(
            &prediction.file,
            prediction.start_line.max(1),
            prediction.end_line.max(prediction.start_line.max(1)),
        ) else {
            continue;
        };
        let cost = crate::bundle::estimate_tokens(&span.text);
        if total + cost <= budget_tokens {
            total += cost;
            packed.push((
                prediction.file.clone(),
                prediction.start_line,
                prediction.end_line,
            ));
        }
    }
    packed
}

/// Evaluate one instance against its gold sets.
///
/// Function identity follows the graph: each prediction resolves to the
/// innermost function enclosing its start line; predictions that resolve to
/// no function still consume rank slots.
pub fn evaluate_instance(
    session: &RetrievalSession,
    instance_id: &str,
    gold: &GoldSets,
    prediction: Option<&RankedPrediction>,
    budget_tokens: u64,
) -> InstanceReport {
    let records: &[PredictionRecord] = prediction.map(|p| p.predictions.as_slice()).unwrap_or(&[]);

    let mut file_ranking: Vec<String> = Vec::new();
    for record in records {
        if !file_ranking.contains(&record.file) {
            file_ranking.push(record.file.clone());
        }
    }

    let mut function_ranking: Vec<String> = Vec::new();
    for (index, record) in records.iter().enumerate() {
        let resolved = session
            .get_enclosing_scopes(&record.file, record.start_line)
            .ok()
            .and_then(|scope| scope.function)
            .unwrap_or_else(|| format!("<unresolved#{index}>"));
        if !function_ranking.contains(&resolved) {
            function_ranking.push(resolved);
        }
    }

    let line_hit = |record: &PredictionRecord| {
        gold.lines.iter().any(|(file, line)| {
            *file == record.file && record.start_line <= *line && *line <= record.end_line
        })
    };
    let line_recall_at = |k: usize| {
        if gold.lines.is_empty() {
            return 0.0;
        }
        f64::from(records.iter().take(k).any(line_hit) as u8)
    };

    let mut predicted_lines: BTreeSet<(String, u32)> = BTreeSet::new();
    for record in records {
        let clamp = session
            .graph()
            .nodes()
            .find(|n| n.kind == NodeKind::Module && n.file_path == record.file)
            .map(|n| n.end_line)
            .unwrap_or(record.end_line);
        for line in record.start_line..=record.end_line.min(clamp) {
            predicted_lines.insert((record.file.clone(), line));
        }
    }

    let window = pack_prediction_window(session, records, budget_tokens);

    InstanceReport {
        instance_id: instance_id.to_string(),
        missing_prediction: prediction.is_none(),
        gold_file_count: gold.files.len(),
        gold_function_count: gold.functions.len(),
        gold_line_count: gold.lines.len(),
        file_r1: recall_at_k(&file_ranking, &gold.files, 1),
        file_r3: recall_at_k(&file_ranking, &gold.files, 3),
        file_r5: recall_at_k(&file_ranking, &gold.files, 5),
        file_mrr: mrr(&file_ranking, &gold.files),
        function_r1: recall_at_k(&function_ranking, &gold.functions, 1),
        function_r3: recall_at_k(&function_ranking, &gold.functions, 3),
        function_r5: recall_at_k(&function_ranking, &gold.functions, 5),
        function_mrr: mrr(&function_ranking, &gold.functions),
        function_f1_at_3: f1_at_k(&function_ranking, &gold.functions, 3),
        line_r1: line_recall_at(1),
        line_r5: line_recall_at(5),
        line_r10: line_recall_at(10),
        line_iou: line_iou(&predicted_lines, &gold.lines),
        coverage_at_budget: coverage_at_budget(&window, &gold.lines),
    }
}

/// Evaluate a full instance set and aggregate means, excluding empty-gold
/// instances per metric family.
pub fn evaluate_set(
    session: &RetrievalSession,
    golds: &BTreeMap<String, GoldSets>,
    predictions: &BTreeMap<String, RankedPrediction>,
    budget_tokens: u64,
    external_scores: Option<&BTreeMap<String, f64>>,
) -> LocalizationReport {
    let mut per_instance = Vec::with_capacity(golds.len());
    for (instance_id, gold) in golds {
        per_instance.push(evaluate_instance(
            session,
            instance_id,
            gold,
            predictions.get(instance_id),
            budget_tokens,
        ));
    }

    let mut aggregate = AggregateReport {
        instances: per_instance.len(),
        missing_predictions: per_instance.iter().filter(|r| r.missing_prediction).count(),
        ..AggregateReport::default()
    };
    let mean = |values: Vec<f64>| {
        if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        }
    };
    let file_included: Vec<&InstanceReport> = per_instance
        .iter()
        .filter(|r| r.gold_file_count > 0)
        .collect();
    let function_included: Vec<&InstanceReport> = per_instance
        .iter()
        .filter(|r| r.gold_function_count > 0)
        .collect();
    let line_included: Vec<&InstanceReport> = per_instance
        .iter()
        .filter(|r| r.gold_line_count > 0)
        .collect();
    aggregate.excluded_file_instances = per_instance.len() - file_included.len();
    aggregate.excluded_function_instances = per_instance.len() - function_included.len();
    aggregate.excluded_line_instances = per_instance.len() - line_included.len();

    aggregate.file_r1 = mean(file_included.iter().map(|r| r.file_r1).collect());
    aggregate.file_r3 = mean(file_included.iter().map(|r| r.file_r3).collect());
    aggregate.file_r5 = mean(file_included.iter().map(|r| r.file_r5).collect());
    aggregate.file_mrr = mean(file_included.iter().map(|r| r.file_mrr).collect());
    aggregate.function_r1 = mean(function_included.iter().map(|r| r.function_r1).collect());
    aggregate.function_r3 = mean(function_included.iter().map(|r| r.function_r3).collect());
    aggregate.function_r5 = mean(function_included.iter().map(|r| r.function_r5).collect());
    aggregate.function_mrr = mean(function_included.iter().map(|r| r.function_mrr).collect());
    aggregate.function_f1_at_3 = mean(
        function_included
            .iter()
            .map(|r| r.function_f1_at_3)
            .collect(),
    );
    aggregate.line_r1 = mean(line_included.iter().map(|r| r.line_r1).collect());
    aggregate.line_r5 = mean(line_included.iter().map(|r| r.line_r5).collect());
    aggregate.line_r10 = mean(line_included.iter().map(|r| r.line_r10).collect());
    aggregate.line_iou = mean(line_included.iter().map(|r| r.line_iou).collect());
    aggregate.coverage_at_budget =
        mean(line_included.iter().map(|r| r.coverage_at_budget).collect());

    if let Some(scores) = external_scores {
        let mut series_a = Vec::new();
        let mut series_b = Vec::new();
        for report in &per_instance {
            if report.gold_function_count == 0 {
                continue;
            }
            if let Some(score) = scores.get(&report.instance_id) {
                series_a.push(report.function_r1);
                series_b.push(*score);
            }
        }
        aggregate.spearman_function_r1_vs_external = spearman_rho(&series_a, &series_b);
    }

    LocalizationReport {
        aggregate,
        per_instance,
    }
}

/// Render the per-instance table plus the aggregate row, aligned columns.
pub fn render_table(report: &LocalizationReport) -> String {
    let mut out = String::new();
    let header = [
        "instance", "fR@1", "fR@3", "fR@5", "fMRR", "gR@1", "gR@3", "gR@5", "gMRR", "gF1@3",
        "lR@1", "lR@5", "lR@10", "IoU", "Cov", "flags",
    ];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    let fmt = |v: f64| format!("{v:.3}");
    for r in &report.per_instance {
        rows.push(vec![
            r.instance_id.clone(),
            fmt(r.file_r1),
            fmt(r.file_r3),
            fmt(r.file_r5),
            fmt(r.file_mrr),
            fmt(r.function_r1),
            fmt(r.function_r3),
            fmt(r.function_r5),
            fmt(r.function_mrr),
            fmt(r.function_f1_at_3),
            fmt(r.line_r1),
            fmt(r.line_r5),
            fmt(r.line_r10),
            fmt(r.line_iou),
            fmt(r.coverage_at_budget),
            if r.missing_prediction {
                "missing".to_string()
            } else {
                String::new()
            },
        ]);
    }
    let a = &report.aggregate;
    rows.push(vec![
        format!("MEAN({})", a.instances),
        fmt(a.file_r1),
        fmt(a.file_r3),
        fmt(a.file_r5),
        fmt(a.file_mrr),
        fmt(a.function_r1),
        fmt(a.function_r3),
        fmt(a.function_r5),
        fmt(a.function_mrr),
        fmt(a.function_f1_at_3),
        fmt(a.line_r1),
        fmt(a.line_r5),
        fmt(a.line_r10),
        fmt(a.line_iou),
        fmt(a.coverage_at_budget),
        match a.spearman_function_r1_vs_external {
            Some(rho) => format!("rho={rho:.3}"),
            None => String::new(),
        },
    ]);

    let mut widths = vec![0usize; rows[0].len()];
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{cell:>width$}", width = widths[i]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
