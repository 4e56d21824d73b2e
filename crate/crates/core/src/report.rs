//! SVG report panels over an account feature dump: dealer vs non-dealer
//! distributions of drug-post percentage, posting hours, follow ratio,
//! and transaction evidence.
//!
//! Charts are plain text SVG built deterministically, so report output
//! diffs cleanly and is testable byte for byte.

use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;

/// One account row of the feature dump, optionally tagged with a dealer
/// label for group comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub account_id: String,
    pub values: Vec<f64>,
    pub dealer: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    pub x_labels: Vec<String>,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;

/// Renders a grouped bar chart as a standalone SVG document.
pub fn render_bar_chart(chart: &BarChart) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let max_value = chart
        .series
        .iter()
        .flat_map(|s| s.values.iter())
        .fold(0.0f64, |a, &b| a.max(b))
        .max(1e-12);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(&chart.title)
    ));
    // Axes.
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT:.1}\" y1=\"{MARGIN_TOP:.1}\" x2=\"{MARGIN_LEFT:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(&chart.y_label)
    ));
    // y-axis scale marker.
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" \
         text-anchor=\"end\">{}</text>\n",
        MARGIN_LEFT - 4.0,
        MARGIN_TOP + 4.0,
        format_value(max_value)
    ));

    let n_groups = chart.x_labels.len().max(1);
    let n_series = chart.series.len().max(1);
    let group_w = plot_w / n_groups as f64;
    let bar_w = (group_w * 0.8) / n_series as f64;

    for (g, label) in chart.x_labels.iter().enumerate() {
        let group_x = MARGIN_LEFT + g as f64 * group_w;
        for (s, series) in chart.series.iter().enumerate() {
            let value = series.values.get(g).copied().unwrap_or(0.0);
            let h = (value / max_value) * plot_h;
            let x = group_x + group_w * 0.1 + s as f64 * bar_w;
            let y = MARGIN_TOP + plot_h - h;
            svg.push_str(&format!(
                "  <rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bar_w:.2}\" height=\"{h:.2}\" \
                 fill=\"{}\"><title>{}: {}</title></rect>\n",
                series.color,
                escape(&series.name),
                format_value(value)
            ));
        }
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>\n",
            group_x + group_w / 2.0,
            MARGIN_TOP + plot_h + 18.0,
            escape(label)
        ));
    }
    // Legend.
    for (s, series) in chart.series.iter().enumerate() {
        let y = MARGIN_TOP + plot_h + 36.0 + 0.0 * s as f64;
        let x = MARGIN_LEFT + s as f64 * 160.0;
        svg.push_str(&format!(
            "  <rect x=\"{x:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            y - 10.0,
            series.color
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            x + 16.0,
            escape(&series.name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn format_value(v: f64) -> String {
    format!("{v:.4}")
}

const DEALER_COLOR: &str = "#d95f02";
const NONDEALER_COLOR: &str = "#1b9e77";

fn split_groups(rows: &[FeatureRow]) -> Vec<(String, Vec<&FeatureRow>, String)> {
    let labeled = rows.iter().any(|r| r.dealer.is_some());
    if labeled {
        vec![
            (
                "dealers".to_string(),
                rows.iter().filter(|r| r.dealer == Some(true)).collect(),
                DEALER_COLOR.to_string(),
            ),
            (
                "non-dealers".to_string(),
                rows.iter().filter(|r| r.dealer != Some(true)).collect(),
                NONDEALER_COLOR.to_string(),
            ),
        ]
    } else {
        vec![(
            "all accounts".to_string(),
            rows.iter().collect(),
            NONDEALER_COLOR.to_string(),
        )]
    }
}

fn histogram(values: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    let mut total = 0.0;
    for v in values {
        let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        let bin = ((t * bins as f64) as usize).min(bins - 1);
        counts[bin] += 1.0;
        total += 1.0;
    }
    if total > 0.0 {
        for c in counts.iter_mut() {
            *c /= total;
        }
    }
    counts
}

fn check_rows(rows: &[FeatureRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::data("no feature rows to report on"));
    }
    if rows.iter().any(|r| r.values.len() != FEATURE_DIM) {
        return Err(Error::data("feature rows must have 9 dimensions"));
    }
    Ok(())
}

/// Histogram of the drug-post percentage P per group.
pub fn percentage_panel(rows: &[FeatureRow]) -> Result<BarChart> {
    check_rows(rows)?;
    let bins = 10;
    let series = split_groups(rows)
        .into_iter()
        .map(|(name, members, color)| Series {
            name,
            values: histogram(members.iter().map(|r| r.values[0]), 0.0, 1.0, bins),
            color,
        })
        .collect();
    Ok(BarChart {
        title: "Drug-related post percentage".to_string(),
        y_label: "fraction of accounts".to_string(),
        x_labels: (0..bins).map(|b| format!("{:.1}", b as f64 / bins as f64)).collect(),
        series,
    })
}

/// Mean hour-bin fractions (H1..H4) per group.
pub fn hours_panel(rows: &[FeatureRow]) -> Result<BarChart> {
    check_rows(rows)?;
    let series = split_groups(rows)
        .into_iter()
        .map(|(name, members, color)| {
            let n = members.len().max(1) as f64;
            let values = (1..=4)
                .map(|dim| members.iter().map(|r| r.values[dim]).sum::<f64>() / n)
                .collect();
            Series {
                name,
                values,
                color,
            }
        })
        .collect();
    Ok(BarChart {
        title: "Drug-related posts by hour of day".to_string(),
        y_label: "mean fraction of drug posts".to_string(),
        x_labels: ["00-06", "06-12", "12-18", "18-24"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        series,
    })
}

/// Histogram of the following/follower ratio R3 per group (clipped at 2).
pub fn relational_panel(rows: &[FeatureRow]) -> Result<BarChart> {
    check_rows(rows)?;
    let bins = 8;
    let hi = 2.0;
    let series = split_groups(rows)
        .into_iter()
        .map(|(name, members, color)| Series {
            name,
            values: histogram(members.iter().map(|r| r.values[7]), 0.0, hi, bins),
            color,
        })
        .collect();
    Ok(BarChart {
        title: "Following/follower ratio".to_string(),
        y_label: "fraction of accounts".to_string(),
        x_labels: (0..bins)
            .map(|b| format!("{:.2}", b as f64 * hi / bins as f64))
            .collect(),
        series,
    })
}

/// Percentage of accounts with transaction evidence per group.
pub fn transaction_panel(rows: &[FeatureRow]) -> Result<BarChart> {
    check_rows(rows)?;
    let series = split_groups(rows)
        .into_iter()
        .map(|(name, members, color)| {
            let n = members.len().max(1) as f64;
            let with_evidence =
                members.iter().filter(|r| r.values[8] > 0.5).count() as f64 / n * 100.0;
            Series {
                name,
                values: vec![with_evidence],
                color,
            }
        })
        .collect();
    Ok(BarChart {
        title: "Accounts with transaction evidence".to_string(),
        y_label: "percent of accounts".to_string(),
        x_labels: vec!["evidence of transaction".to_string()],
        series,
    })
}

/// All four report panels as (file name, svg content) pairs.
pub fn render_report(rows: &[FeatureRow]) -> Result<Vec<(String, String)>> {
    Ok(vec![
        ("percentage.svg".to_string(), render_bar_chart(&percentage_panel(rows)?)),
        ("hours.svg".to_string(), render_bar_chart(&hours_panel(rows)?)),
        ("relational.svg".to_string(), render_bar_chart(&relational_panel(rows)?)),
        ("transaction.svg".to_string(), render_bar_chart(&transaction_panel(rows)?)),
    ])
}
