//! Gold-set extraction from unified diffs.
//!
//! Gold lines are measured against the pre-patch snapshot: `-` lines keep
//! their old-file numbers and pure insertions anchor to the old line
//! immediately preceding the insertion point. Blank lines never count.

use std::collections::{BTreeSet, HashMap};

use crate::errors::MetricsError;
use crate::graph::{NodeKind, RepoGraph};

/// Gold files, functions (graph node ids), and (file, line) pairs for one
/// instance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldSets {
    pub files: BTreeSet<String>,
    pub functions: BTreeSet<String>,
    pub lines: BTreeSet<(String, u32)>,
}

fn malformed(line: usize, detail: impl Into<String>) -> MetricsError {
    MetricsError::MalformedDiff {
        line,
        detail: detail.into(),
    }
}

fn strip_diff_path(raw: &str) -> Option<String> {
    let path = raw.split('\t').next().unwrap_or(raw).trim();
    if path == "/dev/null" {
        return None;
    }
    let path = path
        .strip_prefix("a/")
        .or_else(|| path.strip_prefix("b/"))
        .unwrap_or(path);
    Some(path.to_string())
}

/// Parse `@@ -l[,s] +l[,s] @@`; returns ((old_start, old_count), (new_start, new_count)).
fn parse_hunk_header(text: &str) -> Option<((u32, u32), (u32, u32))> {
    let rest = text.strip_prefix("@@ -")?;
    let (ranges, _) = rest.split_once(" @@")?;
    let (old, new) = ranges.split_once(" +")?;
    let parse_range = |s: &str| -> Option<(u32, u32)> {
        match s.split_once(',') {
            Some((start, count)) => Some((start.parse().ok()?, count.parse().ok()?)),
            None => Some((s.parse().ok()?, 1)),
        }
    };
    Some((parse_range(old)?, parse_range(new)?))
}

/// Extract gold sets from one instance's unified diff, mapping each gold
/// line to its enclosing function in the pre-patch graph.
pub fn parse_gold_patch(diff_text: &str, graph: &RepoGraph) -> Result<GoldSets, MetricsError> {
    let mut gold = GoldSets::default();
    let mut old_path: Option<String> = None;
    let mut new_path: Option<String> = None;
    // Inside a hunk: (current old line, remaining old lines, remaining new lines).
    let mut hunk: Option<(u32, u32, u32)> = None;
    let mut saw_hunk = false;

    for (index, raw) in diff_text.lines().enumerate() {
        let line_no = index + 1;
        if let Some((old_ln, rem_old, rem_new)) = hunk.as_mut() {
            if *rem_old > 0 || *rem_new > 0 {
                let Some(marker) = raw.chars().next() else {
                    return Err(malformed(line_no, "blank line inside hunk body"));
                };
                let content = &raw[marker.len_utf8()..];
                let blank = content.trim().is_empty();
                let file = old_path.clone().or_else(|| new_path.clone());
                match marker {
                    ' ' => {
                        if *rem_old == 0 || *rem_new == 0 {
                            return Err(malformed(line_no, "context line overruns hunk ranges"));
                        }
                        *old_ln += 1;
                        *rem_old -= 1;
                        *rem_new -= 1;
                    }
                    '-' => {
                        if *rem_old == 0 {
                            return Err(malformed(line_no, "removal overruns old range"));
                        }
                        if !blank {
                            if let Some(file) = &file {
                                gold.lines.insert((file.clone(), *old_ln));
                            }
                        }
                        *old_ln += 1;
                        *rem_old -= 1;
                    }
                    '+' => {
                        if *rem_new == 0 {
                            return Err(malformed(line_no, "insertion overruns new range"));
                        }
                        // Anchor to the old line immediately preceding the
                        // insertion point; an insertion before line 1 has no
                        // pre-patch anchor.
                        let anchor = *old_ln - 1;
                        if !blank && anchor >= 1 {
                            if let Some(file) = &file {
                                gold.lines.insert((file.clone(), anchor));
                            }
                        }
                        *rem_new -= 1;
                    }
                    '\\' => {} // "\ No newline at end of file"
                    other => {
                        return Err(malformed(
                            line_no,
                            format!("unexpected hunk line marker `{other}`"),
                        ));
                    }
                }
                continue;
            }
            hunk = None;
        }

        if let Some(rest) = raw.strip_prefix("--- ") {
            old_path = strip_diff_path(rest);
        } else if let Some(rest) = raw.strip_prefix("+++ ") {
            new_path = strip_diff_path(rest);
            if let Some(path) = old_path.clone().or_else(|| new_path.clone()) {
                gold.files.insert(path);
            }
        } else if raw.starts_with("@@") {
            let ((old_start, old_count), (_, new_count)) =
                parse_hunk_header(raw).ok_or_else(|| malformed(line_no, "bad hunk header"))?;
            if old_path.is_none() && new_path.is_none() {
                return Err(malformed(line_no, "hunk before any file header"));
            }
            saw_hunk = true;
            // For zero-length old ranges the header names the line the
            // insertion follows, so the "current" old line is one past it.
            let old_ln = if old_count == 0 {
                old_start + 1
            } else {
                old_start
            };
            hunk = Some((old_ln, old_count, new_count));
        }
    }
    if let Some((_, rem_old, rem_new)) = hunk {
        if rem_old > 0 || rem_new > 0 {
            return Err(malformed(
                diff_text.lines().count() + 1,
                "diff ends inside a hunk",
            ));
        }
    }
    if !saw_hunk && gold.files.is_empty() {
        return Err(malformed(1, "no file headers or hunks found"));
    }

    let functions = function_spans(graph);
    for (file, line) in &gold.lines {
        if let Some(spans) = functions.get(file.as_str()) {
            let innermost = spans
                .iter()
                .filter(|(start, end, _)| start <= line && line <= end)
                .min_by_key(|(start, end, id)| (end - start, id.clone()));
            if let Some((_, _, id)) = innermost {
                gold.functions.insert(id.clone());
            }
        }
    }
    Ok(gold)
}

fn function_spans(graph: &RepoGraph) -> HashMap<&str, Vec<(u32, u32, String)>> {
    let mut spans: HashMap<&str, Vec<(u32, u32, String)>> = HashMap::new();
    for node in graph.nodes() {
        if matches!(node.kind, NodeKind::Function | NodeKind::Method) {
            spans.entry(node.file_path.as_str()).or_default().push((
                node.start_line,
                node.end_line,
                node.id.clone(),
            ));
        }
    }
    spans
}
