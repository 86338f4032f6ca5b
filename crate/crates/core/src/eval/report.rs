//! Markdown and CSV accuracy tables.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportStyle {
    /// Texture descriptors, one column per method.
    Table2,
    /// Neural networks, one column per method.
    Table3,
    /// Fusion ensembles with L/A/R membership marks.
    Table5,
}

impl FromStr for ReportStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table2" => Ok(Self::Table2),
            "table3" => Ok(Self::Table3),
            "table5" => Ok(Self::Table5),
            _ => Err(Error::config(format!("unknown report style {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub markdown: String,
    pub csv: String,
}

const MEMBER_COLUMNS: [(char, &str); 3] = [('L', "lenet"), ('A', "alexnet"), ('R', "resnet34")];

/// Which of L/A/R a method name such as `DCF-LAR` includes.
fn membership(method: &str) -> [bool; 3] {
    let letters = method.strip_prefix("DCF-").or_else(|| method.strip_prefix("dcf-")).unwrap_or("");
    let letters = letters.to_ascii_uppercase();
    MEMBER_COLUMNS.map(|(c, _)| letters.contains(c))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders `(method, accuracy ∈ [0,1])` rows. Percentages use two decimals
/// and every row holding the best accuracy is bolded in the markdown.
pub fn render_rows(rows: &[(String, f64)], style: ReportStyle) -> Result<Report> {
    if rows.is_empty() {
        return Err(Error::config("report needs at least one result"));
    }
    let best = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let pct = |a: f64| format!("{:.2}", a * 100.0);
    let cell = |a: f64| if a == best { format!("**{}**", pct(a)) } else { pct(a) };

    let mut md = String::new();
    let mut csv = String::new();
    match style {
        ReportStyle::Table2 | ReportStyle::Table3 => {
            let caption = if style == ReportStyle::Table2 {
                "Recognition rate (%) of texture descriptors"
            } else {
                "Recognition rate (%) of neural networks"
            };
            writeln!(md, "{caption}\n").unwrap();
            let names: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
            writeln!(md, "| Method | {} |", names.join(" | ")).unwrap();
            writeln!(md, "|---|{}", "---:|".repeat(rows.len())).unwrap();
            let cells: Vec<String> = rows.iter().map(|r| cell(r.1)).collect();
            writeln!(md, "| Accuracy | {} |", cells.join(" | ")).unwrap();

            writeln!(csv, "method,accuracy_percent").unwrap();
            for (name, acc) in rows {
                writeln!(csv, "{},{}", csv_field(name), pct(*acc)).unwrap();
            }
        }
        ReportStyle::Table5 => {
            writeln!(md, "Recognition rate (%) of decision-level classifier fusion\n").unwrap();
            writeln!(md, "| Method | L | A | R | Accuracy |").unwrap();
            writeln!(md, "|---|:-:|:-:|:-:|---:|").unwrap();
            writeln!(csv, "method,lenet,alexnet,resnet34,accuracy_percent").unwrap();
            for (name, acc) in rows {
                let marks = membership(name);
                let md_marks: Vec<&str> = marks.iter().map(|&m| if m { "✓" } else { "" }).collect();
                let md_name = if *acc == best { format!("**{name}**") } else { name.clone() };
                writeln!(md, "| {md_name} | {} | {} |", md_marks.join(" | "), cell(*acc)).unwrap();
                let csv_marks: Vec<&str> = marks.iter().map(|&m| if m { "1" } else { "0" }).collect();
                writeln!(csv, "{},{},{}", csv_field(name), csv_marks.join(","), pct(*acc)).unwrap();
            }
        }
    }
    Ok(Report { markdown: md, csv })
}

pub fn render_report(results: &[(String, Metrics)], style: ReportStyle) -> Result<Report> {
    let rows: Vec<(String, f64)> = results.iter().map(|(m, r)| (m.clone(), r.accuracy)).collect();
    render_rows(&rows, style)
}
