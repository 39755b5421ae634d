use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::score::{matrix_markdown, to_csv};
use crate::analysis::{format_sc, GapReport, ScoreReport};
use crate::protocol::Phase;

/// Unweighted mean of category SCs for one model and phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub model_tag: String,
    pub phase: Phase,
    pub mean_sc: f64,
    pub n_categories: usize,
}

pub fn averages(reports: &[ScoreReport]) -> Vec<AverageRow> {
    let mut acc: BTreeMap<(&str, Phase), Vec<f64>> = BTreeMap::new();
    for r in reports {
        acc.entry((&r.model_tag, r.phase)).or_default().push(r.sc);
    }
    acc.into_iter()
        .map(|((m, phase), scs)| AverageRow {
            model_tag: m.to_string(),
            phase,
            mean_sc: scs.iter().sum::<f64>() / scs.len() as f64,
            n_categories: scs.len(),
        })
        .collect()
}

/// Gaps for every (model, category) that has both phases.
pub fn gaps(reports: &[ScoreReport]) -> Vec<GapReport> {
    let mut out = Vec::new();
    for imp in reports.iter().filter(|r| r.phase == Phase::Implicit) {
        let exp = reports
            .iter()
            .find(|r| r.phase == Phase::Explicit && r.model_tag == imp.model_tag && r.category == imp.category);
        if let Some(exp) = exp {
            out.push(crate::analysis::compute_gap(imp, exp).expect("keys matched above"));
        }
    }
    out
}

pub struct Report {
    pub markdown: String,
    pub averages_csv: String,
    pub gaps_csv: String,
    pub averages_svg: String,
}

/// Builds the report from score rows of one or more runs. Rows are ordered
/// by model tag; category order within a model is kept.
pub fn build_report(reports: &[ScoreReport]) -> Report {
    let mut rows = reports.to_vec();
    rows.sort_by(|a, b| a.model_tag.cmp(&b.model_tag));
    let avgs = averages(&rows);
    let mut gap_rows = gaps(&rows);

    let mut md = String::from("# Stereotype scores\n\n");
    md.push_str(&matrix_markdown(&rows));
    md.push_str("\n## Averages (unweighted mean over categories)\n\n| Model | Imp. | Exp. |\n|---|---|---|\n");
    let mut models: Vec<&str> = avgs.iter().map(|a| a.model_tag.as_str()).collect();
    models.dedup();
    for m in &models {
        let get = |p| {
            avgs.iter()
                .find(|a| a.model_tag == *m && a.phase == p)
                .map(|a| format_sc(a.mean_sc))
                .unwrap_or_else(|| "-".into())
        };
        md.push_str(&format!("| {m} | {} | {} |\n", get(Phase::Implicit), get(Phase::Explicit)));
    }
    md.push_str("\n## Implicit minus explicit, largest first\n\n| Model | Category | Imp. | Exp. | Gap |\n|---|---|---|---|---|\n");
    let mut ranked = gap_rows.clone();
    ranked.sort_by(|a, b| {
        b.gap
            .total_cmp(&a.gap)
            .then_with(|| a.model_tag.cmp(&b.model_tag))
            .then_with(|| a.category.cmp(&b.category))
    });
    for g in &ranked {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {:+.2} |\n",
            g.model_tag,
            g.category,
            format_sc(g.implicit_sc),
            format_sc(g.explicit_sc),
            g.gap
        ));
    }

    let bars: Vec<(String, Vec<f64>)> = models
        .iter()
        .map(|m| {
            let v = |p| avgs.iter().find(|a| a.model_tag == *m && a.phase == p).map_or(0.0, |a| a.mean_sc);
            (m.to_string(), vec![v(Phase::Implicit), v(Phase::Explicit)])
        })
        .collect();
    gap_rows.sort_by(|a, b| a.model_tag.cmp(&b.model_tag));
    Report {
        markdown: md,
        averages_csv: to_csv(&avgs),
        gaps_csv: to_csv(&gap_rows),
        averages_svg: svg::bar_chart("Average SC", &["implicit", "explicit"], &bars),
    }
}

/// Just enough SVG for bar and line charts on a [0, 1] axis.
pub mod svg {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    const COLORS: [&str; 4] = ["#3b6ea5", "#d9822b", "#5a9e5a", "#a64d79"];

    fn escape(s: &str) -> String {
        s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
    }

    fn frame(title: &str, body: &str, legend: &[&str]) -> String {
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        );
        s.push_str(&format!("<text x=\"{PAD}\" y=\"20\" font-size=\"14\">{}</text>\n", escape(title)));
        for i in 0..=4 {
            let v = i as f64 / 4.0;
            let y = y_of(v);
            s.push_str(&format!(
                "<line x1=\"{PAD}\" x2=\"{}\" y1=\"{y:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/><text x=\"8\" y=\"{:.1}\">{v:.2}</text>\n",
                W - PAD,
                y + 4.0
            ));
        }
        for (i, l) in legend.iter().enumerate() {
            let x = W - PAD - 110.0;
            let y = 20.0 + 16.0 * i as f64;
            s.push_str(&format!(
                "<rect x=\"{x}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{y:.1}\">{}</text>\n",
                y - 9.0,
                COLORS[i % COLORS.len()],
                x + 14.0,
                escape(l)
            ));
        }
        s.push_str(body);
        s.push_str("</svg>\n");
        s
    }

    fn y_of(v: f64) -> f64 {
        H - PAD - v.clamp(0.0, 1.0) * (H - 2.0 * PAD)
    }

    /// Grouped bars: one group per label, one bar per series.
    pub fn bar_chart(title: &str, series: &[&str], groups: &[(String, Vec<f64>)]) -> String {
        let mut body = String::new();
        let gw = (W - 2.0 * PAD) / groups.len().max(1) as f64;
        let bw = gw * 0.7 / series.len().max(1) as f64;
        for (g, (label, values)) in groups.iter().enumerate() {
            let x0 = PAD + g as f64 * gw + gw * 0.15;
            for (i, v) in values.iter().enumerate() {
                let y = y_of(*v);
                body.push_str(&format!(
                    "<rect x=\"{:.1}\" y=\"{y:.1}\" width=\"{bw:.1}\" height=\"{:.1}\" fill=\"{}\"/>\n",
                    x0 + i as f64 * bw,
                    H - PAD - y,
                    COLORS[i % COLORS.len()]
                ));
            }
            body.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                x0 + gw * 0.35,
                H - PAD + 16.0,
                escape(label)
            ));
        }
        frame(title, &body, series)
    }

    /// One polyline per series over shared x values.
    pub fn line_chart(title: &str, xs: &[f64], series: &[(&str, Vec<f64>)]) -> String {
        let (lo, hi) = xs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let x_of = |x: f64| PAD + (x - lo) / span * (W - 2.0 * PAD);
        let mut body = String::new();
        for x in xs {
            body.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{x}</text>\n",
                x_of(*x),
                H - PAD + 16.0
            ));
        }
        for (i, (_, ys)) in series.iter().enumerate() {
            let pts: Vec<String> = xs
                .iter()
                .zip(ys)
                .map(|(x, y)| format!("{:.1},{:.1}", x_of(*x), y_of(*y)))
                .collect();
            body.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
                COLORS[i % COLORS.len()],
                pts.join(" ")
            ));
        }
        let names: Vec<&str> = series.iter().map(|(n, _)| *n).collect();
        frame(title, &body, &names)
    }
}
