use std::fmt::Write;
use std::str::FromStr;

use worldline_core::MetricsSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Markdown,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Format::Markdown),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown table format `{other}` (markdown or csv)")),
        }
    }
}

pub const COLUMNS: [&str; 18] = [
    "cell",
    "mode",
    "episodes",
    "horizon_s",
    "no_collision_pct",
    "wilson_lo_pct",
    "wilson_hi_pct",
    "completion_pct",
    "speed_kmh",
    "flap_pct",
    "ttc_danger_pct",
    "strict_parse_pct",
    "low_score_pct",
    "l_sel_s",
    "l_dec_s",
    "effective_lag_s",
    "prompt_ktok",
    "completion_ktok",
];

const NA: &str = "n/a";

fn f1(x: f64) -> String {
    format!("{x:.1}")
}

fn f2(x: f64) -> String {
    format!("{x:.2}")
}

fn opt(x: Option<f64>, f: fn(f64) -> String) -> String {
    x.map_or_else(|| NA.to_owned(), f)
}

/// One formatted row: percentages and speeds with one decimal, seconds and
/// kilotokens with two.
pub fn row(cell: &str, s: &MetricsSummary) -> Vec<String> {
    vec![
        cell.to_owned(),
        s.mode.to_string(),
        s.episodes.to_string(),
        f1(s.horizon_s),
        f1(s.no_collision_pct),
        f1(s.no_collision_ci.0),
        f1(s.no_collision_ci.1),
        f1(s.completion_pct),
        f1(s.mean_speed_kmh),
        f1(s.flap_pct),
        f1(s.ttc_danger_pct),
        opt(s.strict_parse_pct, f1),
        opt(s.low_score_pct, f1),
        opt(s.mean_l_sel, f2),
        f2(s.mean_l_dec),
        f2(s.effective_lag),
        f2(s.prompt_ktok_per_decision),
        f2(s.completion_ktok_per_decision),
    ]
}

pub fn emit_table(rows: &[(String, MetricsSummary)], format: Format) -> String {
    let body: Vec<Vec<String>> = rows.iter().map(|(c, s)| row(c, s)).collect();
    let mut out = String::new();
    match format {
        Format::Csv => {
            let _ = writeln!(out, "{}", COLUMNS.join(","));
            for r in &body {
                let cells: Vec<String> = r.iter().map(|c| csv_field(c)).collect();
                let _ = writeln!(out, "{}", cells.join(","));
            }
        }
        Format::Markdown => {
            let _ = writeln!(out, "| {} |", COLUMNS.join(" | "));
            let rule: Vec<&str> = COLUMNS.iter().map(|_| "---").collect();
            let _ = writeln!(out, "|{}|", rule.join("|"));
            for r in &body {
                let _ = writeln!(out, "| {} |", r.join(" | "));
            }
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
