use std::fmt::Write;

use super::{MetricReport, Summary};
use crate::index::Channel;

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn opt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), pct)
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if i == 0 {
                    format!("{s:<w$}", w = widths[i])
                } else {
                    format!("{s:>w$}", w = widths[i])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn main_row(name: &str, s: &Summary) -> Vec<String> {
    vec![
        name.to_string(),
        s.count.to_string(),
        pct(s.precision),
        pct(s.recall),
        pct(s.f1),
        pct(s.map),
        pct(s.gmap),
        pct(s.mrr),
        opt_pct(s.judge_score),
        s.failures.to_string(),
    ]
}

/// Plain-text rendering: retrieval and answer columns per question type,
/// then type-specific answer metrics and per-channel recall. Values are
/// percentages.
pub fn render_table(report: &MetricReport) -> String {
    let mut out = String::new();
    let mut rows = vec![
        ["", "", "Document Retrieval", "", "", "", "", "", "Answer", ""].map(String::from).to_vec(),
        ["Type", "N", "P", "R", "F1", "MAP", "GMAP", "MRR", "Judge", "Failed"]
            .map(String::from)
            .to_vec(),
    ];
    rows.push(main_row("all", &report.overall));
    for (t, s) in &report.by_type {
        rows.push(main_row(t.as_str(), s));
    }
    out.push_str(&align(&rows));

    let o = &report.overall;
    let mut extra = vec![["Answer metric", "N", "Value"].map(String::from).to_vec()];
    if let Some(y) = o.yes_no {
        extra.push(vec!["yes/no accuracy".into(), y.count.to_string(), pct(y.accuracy)]);
        extra.push(vec!["yes/no macro F1".into(), y.count.to_string(), pct(y.macro_f1)]);
    }
    if let Some(f) = o.factoid {
        extra.push(vec!["factoid strict acc.".into(), f.count.to_string(), pct(f.strict_accuracy)]);
        extra.push(vec!["factoid lenient acc.".into(), f.count.to_string(), pct(f.lenient_accuracy)]);
        extra.push(vec!["factoid MRR".into(), f.count.to_string(), pct(f.mrr)]);
    }
    if let Some(l) = o.list {
        extra.push(vec!["list precision".into(), l.count.to_string(), pct(l.precision)]);
        extra.push(vec!["list recall".into(), l.count.to_string(), pct(l.recall)]);
        extra.push(vec!["list F1".into(), l.count.to_string(), pct(l.f1)]);
    }
    if extra.len() > 1 {
        out.push('\n');
        out.push_str(&align(&extra));
    }

    let mut channels = vec![["Channel", "Recall"].map(String::from).to_vec()];
    for c in Channel::ALL {
        channels.push(vec![format!("{c:?}"), pct(o.channel_recall.get(&c).copied().unwrap_or(0.0))]);
    }
    channels.push(vec!["union".into(), pct(o.union_recall)]);
    out.push('\n');
    out.push_str(&align(&channels));

    let failed: Vec<_> = report.questions.iter().filter(|q| q.error.is_some()).collect();
    if !failed.is_empty() {
        out.push('\n');
        for q in failed {
            let _ = writeln!(out, "failed {}: {}", q.id, q.error.as_deref().unwrap_or_default());
        }
    }
    out
}
