//! Plot-ready data derived from explanations, plus a static SVG bar chart.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{GlobalExplanation, ShapExplanation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarItem {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarSeries {
    pub label: String,
    pub items: Vec<BarItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarPlot {
    pub title: String,
    pub series: Vec<BarSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSegment {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_value: Option<String>,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcePlot {
    pub target: String,
    pub base_value: f64,
    pub predicted_value: f64,
    pub segments: Vec<ForceSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionStep {
    pub name: String,
    pub value: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPlot {
    pub target: String,
    pub base_value: f64,
    /// Least important first, so the series ends at the prediction.
    pub steps: Vec<DecisionStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmPoint {
    pub unit: String,
    pub shap: f64,
    pub feature_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beeswarm {
    pub target: String,
    /// Units ordered by mean |ψ| descending.
    pub units: Vec<String>,
    pub points: Vec<BeeswarmPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotBundle {
    pub bar: BarPlot,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub force: Option<ForcePlot>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionPlot>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub beeswarm: Vec<Beeswarm>,
}

pub fn local_bundle(e: &ShapExplanation) -> PlotBundle {
    let target = e.target.to_string();
    let bar = BarPlot {
        title: format!("SHAP values for {target}"),
        series: vec![BarSeries {
            label: target.clone(),
            items: e
                .attributions
                .iter()
                .map(|a| BarItem {
                    name: a.name.clone(),
                    value: a.value,
                })
                .collect(),
        }],
    };
    let mut at = e.base_value;
    let segments = e
        .attributions
        .iter()
        .map(|a| {
            let start = at;
            at += a.value;
            ForceSegment {
                name: a.name.clone(),
                value: a.value,
                feature_value: a.feature_value.clone(),
                start,
                end: at,
            }
        })
        .collect();
    let mut cumulative = e.base_value;
    let steps = e
        .attributions
        .iter()
        .rev()
        .map(|a| {
            cumulative += a.value;
            DecisionStep {
                name: a.name.clone(),
                value: a.value,
                cumulative,
            }
        })
        .collect();
    PlotBundle {
        bar,
        force: Some(ForcePlot {
            target: target.clone(),
            base_value: e.base_value,
            predicted_value: e.predicted_value,
            segments,
        }),
        decision: Some(DecisionPlot {
            target,
            base_value: e.base_value,
            steps,
        }),
        beeswarm: Vec::new(),
    }
}

pub fn global_bundle(g: &GlobalExplanation) -> PlotBundle {
    let series = g
        .targets
        .iter()
        .map(|t| BarSeries {
            label: t.target.to_string(),
            items: t
                .ranking(&g.units)
                .into_iter()
                .map(|(name, value)| BarItem {
                    name: name.to_string(),
                    value,
                })
                .collect(),
        })
        .collect();
    let beeswarm = g
        .targets
        .iter()
        .map(|t| {
            let ranked: Vec<String> = t.ranking(&g.units).into_iter().map(|(n, _)| n.to_string()).collect();
            let mut points = Vec::new();
            for name in &ranked {
                let u = g.units.iter().position(|x| x == name).expect("ranked unit exists");
                for (i, row) in t.shap.iter().enumerate() {
                    points.push(BeeswarmPoint {
                        unit: name.clone(),
                        shap: row[u],
                        feature_value: g.feature_values[i][u],
                    });
                }
            }
            Beeswarm {
                target: t.target.to_string(),
                units: ranked,
                points,
            }
        })
        .collect();
    PlotBundle {
        bar: BarPlot {
            title: "mean |SHAP value|".to_string(),
            series,
        },
        force: None,
        decision: None,
        beeswarm,
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Horizontal bar chart of the first series, at most `max_bars` bars.
pub fn bar_chart_svg(plot: &BarPlot, max_bars: usize) -> String {
    let items: &[BarItem] = plot.series.first().map_or(&[], |s| &s.items[..s.items.len().min(max_bars)]);
    let row_h = 22.0;
    let label_w = 260.0;
    let plot_w = 360.0;
    let height = 40.0 + row_h * items.len() as f64 + 20.0;
    let max_abs = items.iter().map(|i| i.value.abs()).fold(0.0, f64::max);
    let scale = if max_abs > 0.0 { plot_w / 2.0 / max_abs } else { 0.0 };
    let axis = label_w + plot_w / 2.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{height}" font-family="sans-serif" font-size="12">"#,
        w = label_w + plot_w + 80.0
    );
    let _ = writeln!(svg, r#"  <text x="10" y="20" font-size="14">{}</text>"#, escape(&plot.title));
    for (i, item) in items.iter().enumerate() {
        let y = 40.0 + row_h * i as f64;
        let len = item.value.abs() * scale;
        let (x, color) = if item.value >= 0.0 {
            (axis, "#d62728")
        } else {
            (axis - len, "#1f77b4")
        };
        let _ = writeln!(
            svg,
            r#"  <text x="{lx}" y="{ty}" text-anchor="end">{name}</text>"#,
            lx = label_w - 6.0,
            ty = y + 14.0,
            name = escape(&item.name)
        );
        let _ = writeln!(
            svg,
            r#"  <rect x="{x:.2}" y="{y:.2}" width="{len:.2}" height="16" fill="{color}"/>"#
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{vx:.2}" y="{ty}">{v:+.4}</text>"#,
            vx = label_w + plot_w + 4.0,
            ty = y + 14.0,
            v = item.value
        );
    }
    let _ = writeln!(
        svg,
        r##"  <line x1="{axis}" y1="34" x2="{axis}" y2="{y2}" stroke="#333"/>"##,
        y2 = height - 16.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::{Attribution, Grouping};
    use crate::process_model::TransitionId;

    fn example() -> ShapExplanation {
        ShapExplanation {
            target: TransitionId::new("t3"),
            base_value: 0.3,
            predicted_value: 0.7,
            attributions: vec![
                Attribution {
                    name: "case:total-price".into(),
                    value: 0.6,
                    feature_value: Some("2000".into()),
                    se: None,
                },
                Attribution {
                    name: "case:vendor".into(),
                    value: -0.2,
                    feature_value: Some("Lenovo".into()),
                    se: None,
                },
            ],
            method: "exact".into(),
            grouping: Grouping::BySource,
            n_permutations: None,
            seed: None,
            residual_redistributed: false,
        }
    }

    #[test]
    fn force_segments_telescope() {
        let b = local_bundle(&example());
        let f = b.force.unwrap();
        assert_eq!(f.segments[0].start, 0.3);
        assert_eq!(f.segments[0].end, f.segments[1].start);
        assert!((f.segments[1].end - 0.7).abs() < 1e-12);
        let d = b.decision.unwrap();
        assert_eq!(d.steps[0].name, "case:vendor");
        assert!((d.steps.last().unwrap().cumulative - 0.7).abs() < 1e-12);
    }

    #[test]
    fn explanation_json_shape() {
        let v: serde_json::Value = serde_json::from_str(&example().to_json()).unwrap();
        assert_eq!(v["target"], "t3");
        assert_eq!(v["method"], "exact");
        assert_eq!(v["attributions"][0]["name"], "case:total-price");
        assert_eq!(v["attributions"][0]["value"], 0.6);
        assert_eq!(v["attributions"][0]["feature_value"], "2000");
    }

    #[test]
    fn svg_has_one_bar_per_item() {
        let svg = bar_chart_svg(&local_bundle(&example()).bar, 20);
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.starts_with("<svg"));
    }
}
