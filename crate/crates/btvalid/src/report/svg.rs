//! Static SVG renderers for the five report figures.
//!
//! Plots never compute: every number drawn here is taken verbatim from the
//! report and printed with the same formatting the CSV tables use, so a
//! rendered value can be matched byte-for-byte against the emitted tables.

use std::fmt::Write as _;

use super::{fmt_rate, EmbeddingSection, TopicsSection};
use crate::sentiment::LangSentiment;
use std::collections::BTreeMap;

const FONT: &str = "font-family=\"monospace\" font-size=\"11\"";

struct Canvas {
    width: f64,
    height: f64,
    body: String,
}

impl Canvas {
    fn new(width: f64, height: f64) -> Self {
        Self { width, height, body: String::new() }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="{width:.2}"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, fill: &str, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" fill="{fill}" {FONT}>{}</text>"#,
            escape(content)
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str) {
        let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
    }

    fn finish(self, title: &str) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n<title>{}</title>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.width,
            self.height,
            self.width,
            self.height,
            escape(title),
            self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const MARGIN_LEFT: f64 = 60.0;
const MARGIN_BOTTOM: f64 = 50.0;
const MARGIN_TOP: f64 = 30.0;
const BAR_COLORS: [&str; 3] = ["#4878a8", "#e8a33d", "#6aa84f"];

fn y_axis(canvas: &mut Canvas, plot_h: f64, max_value: f64, label: &str) {
    canvas.line(MARGIN_LEFT, MARGIN_TOP, MARGIN_LEFT, MARGIN_TOP + plot_h, "#333", 1.0);
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let y = MARGIN_TOP + plot_h * (1.0 - frac);
        canvas.line(MARGIN_LEFT - 4.0, y, MARGIN_LEFT, y, "#333", 1.0);
        canvas.text(MARGIN_LEFT - 8.0, y + 4.0, "end", "#333", &format!("{:.2}", max_value * frac));
    }
    canvas.text(12.0, MARGIN_TOP - 10.0, "start", "#333", label);
}

/// Bars with optional interval whiskers, one group per category.
fn grouped_bars(
    title: &str,
    categories: &[String],
    series_names: &[&str],
    values: &[Vec<Option<(f64, f64, f64)>>], // per category, per series: (value, low, high)
    value_labels: &[Vec<Option<String>>],
    y_label: &str,
) -> String {
    let n_cat = categories.len().max(1);
    let n_series = series_names.len().max(1);
    let bar_w = 26.0;
    let group_w = bar_w * n_series as f64 + 24.0;
    let plot_w = group_w * n_cat as f64;
    let plot_h = 220.0;
    let width = MARGIN_LEFT + plot_w + 140.0;
    let height = MARGIN_TOP + plot_h + MARGIN_BOTTOM;
    let mut canvas = Canvas::new(width, height);

    let max_value = values
        .iter()
        .flatten()
        .flatten()
        .map(|(_, _, high)| *high)
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let scale = plot_h / max_value;
    let baseline = MARGIN_TOP + plot_h;

    y_axis(&mut canvas, plot_h, max_value, y_label);
    canvas.line(MARGIN_LEFT, baseline, MARGIN_LEFT + plot_w, baseline, "#333", 1.0);

    for (ci, category) in categories.iter().enumerate() {
        let group_x = MARGIN_LEFT + ci as f64 * group_w + 12.0;
        for (si, _) in series_names.iter().enumerate() {
            let Some((value, low, high)) = values[ci][si] else { continue };
            let x = group_x + si as f64 * bar_w;
            let h = value * scale;
            canvas.rect(x, baseline - h, bar_w - 4.0, h, BAR_COLORS[si % BAR_COLORS.len()]);
            if high > low {
                let cx = x + (bar_w - 4.0) / 2.0;
                canvas.line(cx, baseline - low * scale, cx, baseline - high * scale, "#222", 1.0);
                canvas.line(cx - 4.0, baseline - low * scale, cx + 4.0, baseline - low * scale, "#222", 1.0);
                canvas.line(cx - 4.0, baseline - high * scale, cx + 4.0, baseline - high * scale, "#222", 1.0);
            }
            if let Some(label) = &value_labels[ci][si] {
                canvas.text(x + (bar_w - 4.0) / 2.0, baseline - h - 4.0, "middle", "#333", label);
            }
        }
        canvas.text(group_x + (bar_w * n_series as f64) / 2.0, baseline + 16.0, "middle", "#333", category);
    }

    // legend
    for (si, name) in series_names.iter().enumerate() {
        let y = MARGIN_TOP + si as f64 * 18.0;
        canvas.rect(MARGIN_LEFT + plot_w + 16.0, y, 12.0, 12.0, BAR_COLORS[si % BAR_COLORS.len()]);
        canvas.text(MARGIN_LEFT + plot_w + 34.0, y + 10.0, "start", "#333", name);
    }

    canvas.finish(title)
}

const VARIANTS: [&str; 3] = ["original", "pivot", "back"];

fn sentiment_values(summary: &LangSentiment) -> (Vec<Option<(f64, f64, f64)>>, Vec<Option<String>>) {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for variant in VARIANTS {
        match summary.get(variant) {
            Some(stat) => {
                values.push(Some((stat.median, stat.hci99_low, stat.hci99_high)));
                labels.push(Some(fmt_rate(stat.median)));
            }
            None => {
                values.push(None);
                labels.push(None);
            }
        }
    }
    (values, labels)
}

/// Pooled three-bar accuracy chart (original / pivot / back).
pub fn sentiment_pooled_svg(pooled: &LangSentiment) -> String {
    let (values, labels) = sentiment_values(pooled);
    grouped_bars(
        "Pooled sentiment accuracy by variant",
        &["pooled".to_string()],
        &VARIANTS,
        &[values],
        &[labels],
        "median accuracy",
    )
}

/// Per-language grouped accuracy bars.
pub fn sentiment_by_language_svg(per_lang: &BTreeMap<String, LangSentiment>) -> String {
    let categories: Vec<String> = per_lang.keys().cloned().collect();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for summary in per_lang.values() {
        let (v, l) = sentiment_values(summary);
        values.push(v);
        labels.push(l);
    }
    grouped_bars(
        "Sentiment accuracy by language and variant",
        &categories,
        &VARIANTS,
        &values,
        &labels,
        "median accuracy",
    )
}

fn heat_color(rate: f64) -> String {
    // white (0) to steel blue (1)
    let t = rate.clamp(0.0, 1.0);
    let r = (255.0 - t * (255.0 - 72.0)) as u8;
    let g = (255.0 - t * (255.0 - 120.0)) as u8;
    let b = (255.0 - t * (255.0 - 168.0)) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Language-by-K heatmap; each cell prints the match rate (black) over the
/// permutation-null mean (white).
pub fn topics_heatmap_svg(section: &TopicsSection) -> String {
    let langs: Vec<&String> = section.per_lang.keys().collect();
    let ks: Vec<usize> = section
        .per_lang
        .values()
        .next()
        .map(|l| l.rows.iter().map(|r| r.k).collect())
        .unwrap_or_default();
    let cell_w = 86.0;
    let cell_h = 40.0;
    let width = MARGIN_LEFT + cell_w * ks.len().max(1) as f64 + 40.0;
    let height = MARGIN_TOP + cell_h * langs.len().max(1) as f64 + MARGIN_BOTTOM;
    let mut canvas = Canvas::new(width, height);

    for (col, k) in ks.iter().enumerate() {
        let x = MARGIN_LEFT + col as f64 * cell_w + cell_w / 2.0;
        canvas.text(x, MARGIN_TOP - 8.0, "middle", "#333", &format!("K={k}"));
    }
    for (row, lang) in langs.iter().enumerate() {
        let y = MARGIN_TOP + row as f64 * cell_h;
        canvas.text(MARGIN_LEFT - 8.0, y + cell_h / 2.0 + 4.0, "end", "#333", lang);
        let rows = &section.per_lang[*lang].rows;
        for (col, cell) in rows.iter().enumerate() {
            let x = MARGIN_LEFT + col as f64 * cell_w;
            canvas.rect(x, y, cell_w - 2.0, cell_h - 2.0, &heat_color(cell.match_rate));
            canvas.text(
                x + (cell_w - 2.0) / 2.0,
                y + 16.0,
                "middle",
                "#111",
                &fmt_rate(cell.match_rate),
            );
            // white text: chance accuracy under permutation
            canvas.text(
                x + (cell_w - 2.0) / 2.0,
                y + 32.0,
                "middle",
                "#ffffff",
                &fmt_rate(cell.null_mean),
            );
        }
    }
    canvas.finish("Topic match rate by language and cluster count (white: permutation null)")
}

/// Cross-language mean match rate against K, with the permutation-null
/// curve underneath.
pub fn topics_by_k_svg(section: &TopicsSection) -> String {
    let rows = &section.mean_rows;
    let plot_w = 420.0;
    let plot_h = 220.0;
    let width = MARGIN_LEFT + plot_w + 150.0;
    let height = MARGIN_TOP + plot_h + MARGIN_BOTTOM;
    let mut canvas = Canvas::new(width, height);

    y_axis(&mut canvas, plot_h, 1.0, "match rate");
    let baseline = MARGIN_TOP + plot_h;
    canvas.line(MARGIN_LEFT, baseline, MARGIN_LEFT + plot_w, baseline, "#333", 1.0);

    let n = rows.len().max(1);
    let x_of = |i: usize| MARGIN_LEFT + (i as f64 + 0.5) * plot_w / n as f64;
    let y_of = |v: f64| baseline - v.clamp(0.0, 1.0) * plot_h;

    let match_points: Vec<(f64, f64)> =
        rows.iter().enumerate().map(|(i, r)| (x_of(i), y_of(r.match_rate))).collect();
    let null_points: Vec<(f64, f64)> =
        rows.iter().enumerate().map(|(i, r)| (x_of(i), y_of(r.null_mean))).collect();
    canvas.polyline(&null_points, "#aaaaaa");
    canvas.polyline(&match_points, "#4878a8");

    for (i, row) in rows.iter().enumerate() {
        canvas.text(x_of(i), baseline + 16.0, "middle", "#333", &row.k.to_string());
        canvas.text(x_of(i), y_of(row.match_rate) - 6.0, "middle", "#333", &fmt_rate(row.match_rate));
        canvas.text(x_of(i), y_of(row.null_mean) + 14.0, "middle", "#888", &fmt_rate(row.null_mean));
    }
    canvas.text(MARGIN_LEFT + plot_w / 2.0, baseline + 32.0, "middle", "#333", "clusters (K)");

    canvas.rect(MARGIN_LEFT + plot_w + 16.0, MARGIN_TOP, 12.0, 3.0, "#4878a8");
    canvas.text(MARGIN_LEFT + plot_w + 34.0, MARGIN_TOP + 6.0, "start", "#333", "mean match rate");
    canvas.rect(MARGIN_LEFT + plot_w + 16.0, MARGIN_TOP + 18.0, 12.0, 3.0, "#aaaaaa");
    canvas.text(MARGIN_LEFT + plot_w + 34.0, MARGIN_TOP + 24.0, "start", "#333", "permutation null");

    canvas.finish("Topic match rate against cluster count")
}

/// Per-language mean backtranslation distance bars with the mean baseline
/// (black rule) and minimum baseline (blue rule) per language.
pub fn embedding_distances_svg(section: &EmbeddingSection) -> String {
    let langs: Vec<&String> = section.per_lang.keys().collect();
    let bar_w = 46.0;
    let group_w = bar_w + 34.0;
    let plot_w = group_w * langs.len().max(1) as f64;
    let plot_h = 220.0;
    let width = MARGIN_LEFT + plot_w + 150.0;
    let height = MARGIN_TOP + plot_h + MARGIN_BOTTOM;
    let mut canvas = Canvas::new(width, height);

    let max_value = section
        .per_lang
        .values()
        .flat_map(|l| [l.mean_back_distance, l.min_baseline, l.mean_baseline])
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let scale = plot_h / max_value;
    let baseline = MARGIN_TOP + plot_h;
    y_axis(&mut canvas, plot_h, max_value, "cosine distance");
    canvas.line(MARGIN_LEFT, baseline, MARGIN_LEFT + plot_w, baseline, "#333", 1.0);

    for (i, lang) in langs.iter().enumerate() {
        let entry = &section.per_lang[*lang];
        let x = MARGIN_LEFT + i as f64 * group_w + 14.0;
        let h = entry.mean_back_distance * scale;
        canvas.rect(x, baseline - h, bar_w, h, "#e8a33d");
        canvas.text(
            x + bar_w / 2.0,
            baseline - h - 4.0,
            "middle",
            "#333",
            &super::fmt_distance(entry.mean_back_distance),
        );
        // black rule: mean baseline; blue rule: minimum baseline
        let y_mean = baseline - entry.mean_baseline * scale;
        canvas.line(x - 6.0, y_mean, x + bar_w + 6.0, y_mean, "#000000", 2.0);
        canvas.text(
            x + bar_w + 8.0,
            y_mean - 2.0,
            "start",
            "#000000",
            &super::fmt_distance(entry.mean_baseline),
        );
        let y_min = baseline - entry.min_baseline * scale;
        canvas.line(x - 6.0, y_min, x + bar_w + 6.0, y_min, "#2a6fce", 2.0);
        canvas.text(
            x + bar_w + 8.0,
            y_min + 10.0,
            "start",
            "#2a6fce",
            &super::fmt_distance(entry.min_baseline),
        );
        canvas.text(x + bar_w / 2.0, baseline + 16.0, "middle", "#333", lang);
    }

    canvas.line(MARGIN_LEFT + plot_w + 16.0, MARGIN_TOP + 4.0, MARGIN_LEFT + plot_w + 28.0, MARGIN_TOP + 4.0, "#000000", 2.0);
    canvas.text(MARGIN_LEFT + plot_w + 34.0, MARGIN_TOP + 8.0, "start", "#333", "mean baseline");
    canvas.line(MARGIN_LEFT + plot_w + 16.0, MARGIN_TOP + 22.0, MARGIN_LEFT + plot_w + 28.0, MARGIN_TOP + 22.0, "#2a6fce", 2.0);
    canvas.text(MARGIN_LEFT + plot_w + 34.0, MARGIN_TOP + 26.0, "start", "#333", "min baseline");
    canvas.rect(MARGIN_LEFT + plot_w + 16.0, MARGIN_TOP + 34.0, 12.0, 12.0, "#e8a33d");
    canvas.text(MARGIN_LEFT + plot_w + 34.0, MARGIN_TOP + 44.0, "start", "#333", "back distance");

    canvas.finish("Backtranslation embedding distance against peer baselines")
}
