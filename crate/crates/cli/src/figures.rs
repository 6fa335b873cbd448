//! Static SVG figures. Output depends only on the inputs, so fixed inputs
//! give byte-identical files.

use std::fmt::Write;

use routinesig::ClusterSummary;

const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";
const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79",
    "#637939",
];

/// Mean and spread of rank-ordered proportions across participants at one K.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSeries {
    pub k: usize,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(width: f64, height: f64, title: &str, comment: &str) -> Self {
        let mut body = String::new();
        writeln!(
            body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
        )
        .unwrap();
        writeln!(body, "{comment}").unwrap();
        writeln!(body, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>").unwrap();
        writeln!(body, "<text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>", width / 2.0, escape(title)).unwrap();
        Self { body }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, tip: Option<&str>) {
        write!(self.body, "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"").unwrap();
        match tip {
            Some(t) => writeln!(self.body, "><title>{}</title></rect>", escape(t)).unwrap(),
            None => writeln!(self.body, "/>").unwrap(),
        }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        writeln!(self.body, "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" {FONT}>{}</text>", escape(s)).unwrap();
    }

    fn rotated_text(&mut self, x: f64, y: f64, s: &str) {
        writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"end\" transform=\"rotate(-45 {x:.2} {y:.2})\" {FONT}>{}</text>",
            escape(s)
        )
        .unwrap();
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, dashed: bool) {
        let dash = if dashed { " stroke-dasharray=\"4 3\"" } else { "" };
        writeln!(self.body, "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\"{dash}/>").unwrap();
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        writeln!(self.body, "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>", p.join(" ")).unwrap();
    }

    fn polygon(&mut self, pts: &[(f64, f64)], fill: &str) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        writeln!(self.body, "<polygon points=\"{}\" fill=\"{fill}\" fill-opacity=\"0.2\" stroke=\"none\"/>", p.join(" ")).unwrap();
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn hex(r: f64, g: f64, b: f64) -> String {
    let c = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(r), c(g), c(b))
}

/// Blue below zero, red above, white at zero; saturates at |v| = 2.
fn diverging(v: f64) -> String {
    let t = (v / 2.0).clamp(-1.0, 1.0);
    if t < 0.0 {
        hex(1.0 + t * 0.85, 1.0 + t * 0.6, 1.0)
    } else {
        hex(1.0, 1.0 - t * 0.75, 1.0 - t * 0.85)
    }
}

/// White at zero to dark blue at one.
fn sequential(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    hex(1.0 - 0.9 * t, 1.0 - 0.7 * t, 1.0 - 0.4 * t)
}

fn y_axis(svg: &mut Svg, x: f64, top: f64, bottom: f64, max: f64, ticks: usize, fmt: impl Fn(f64) -> String) {
    svg.line(x, top, x, bottom, "black", false);
    for i in 0..=ticks {
        let v = max * i as f64 / ticks as f64;
        let y = bottom - (bottom - top) * i as f64 / ticks as f64;
        svg.line(x - 4.0, y, x, y, "black", false);
        svg.text(x - 6.0, y + 4.0, "end", &fmt(v));
    }
}

/// Cluster-by-feature grid of standardized centroids.
pub fn centroid_heatmap(summary: &ClusterSummary, comment: &str) -> String {
    let k = summary.k();
    let d = summary.feature_names.len();
    let (cell, left, top) = (34.0, 80.0, 40.0);
    let width = left + cell * d as f64 + 20.0;
    let height = top + cell * k as f64 + 90.0;
    let mut svg = Svg::new(width, height, "Cluster centroids (within-person z-scores)", comment);
    for (c, centroid) in summary.centroids.iter().enumerate() {
        let y = top + cell * c as f64;
        svg.text(left - 6.0, y + cell / 2.0 + 4.0, "end", &format!("Cluster {c}"));
        for f in 0..d {
            let x = left + cell * f as f64;
            match centroid {
                Some(z) => svg.rect(x, y, cell, cell, &diverging(z[f]), Some(&format!("{}: {:.3}", summary.feature_names[f], z[f]))),
                None => svg.rect(x, y, cell, cell, "#dddddd", Some("no days")),
            }
        }
    }
    let bottom = top + cell * k as f64;
    for (f, name) in summary.feature_names.iter().enumerate() {
        svg.rotated_text(left + cell * (f as f64 + 0.5), bottom + 12.0, name);
    }
    svg.finish()
}

/// Number of days assigned to each cluster.
pub fn cluster_days(summary: &ClusterSummary, comment: &str) -> String {
    let k = summary.k();
    let (bar, left, top, plot_h) = (36.0, 60.0, 40.0, 220.0);
    let width = left + bar * k as f64 * 1.25 + 20.0;
    let height = top + plot_h + 50.0;
    let max = summary.day_counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut svg = Svg::new(width, height, "Days per cluster", comment);
    let bottom = top + plot_h;
    y_axis(&mut svg, left, top, bottom, max, 4, |v| format!("{v:.0}"));
    for (c, &n) in summary.day_counts.iter().enumerate() {
        let h = plot_h * n as f64 / max;
        let x = left + 8.0 + bar * 1.25 * c as f64;
        svg.rect(x, bottom - h, bar, h, PALETTE[c % PALETTE.len()], Some(&format!("cluster {c}: {n} days")));
        svg.text(x + bar / 2.0, bottom + 14.0, "middle", &c.to_string());
    }
    svg.text(left + (width - left) / 2.0, bottom + 34.0, "middle", "Cluster");
    svg.finish()
}

/// Weekday and weekend share of each cluster's days, against the calendar
/// base rate of two weekend days in seven.
pub fn weekday_weekend(summary: &ClusterSummary, comment: &str) -> String {
    let k = summary.k();
    let (bar, left, top, plot_h) = (36.0, 60.0, 40.0, 220.0);
    let width = left + bar * k as f64 * 1.25 + 120.0;
    let height = top + plot_h + 50.0;
    let mut svg = Svg::new(width, height, "Weekday / weekend share per cluster", comment);
    let bottom = top + plot_h;
    y_axis(&mut svg, left, top, bottom, 1.0, 4, |v| format!("{v:.2}"));
    for c in 0..k {
        let x = left + 8.0 + bar * 1.25 * c as f64;
        if let (Some(wd), Some(we)) = (summary.weekday_share(c), summary.weekend_share(c)) {
            let h_wd = plot_h * wd;
            let h_we = plot_h * we;
            svg.rect(x, bottom - h_wd, bar, h_wd, "#4c72b0", Some(&format!("cluster {c} weekday {wd:.3}")));
            svg.rect(x, bottom - h_wd - h_we, bar, h_we, "#dd8452", Some(&format!("cluster {c} weekend {we:.3}")));
        }
        svg.text(x + bar / 2.0, bottom + 14.0, "middle", &c.to_string());
    }
    let x_end = left + 8.0 + bar * 1.25 * k as f64;
    let base_y = bottom - plot_h * (1.0 - 2.0 / 7.0);
    svg.line(left, base_y, x_end, base_y, "black", true);
    svg.rect(x_end + 10.0, top, 12.0, 12.0, "#dd8452", None);
    svg.text(x_end + 26.0, top + 10.0, "start", "weekend");
    svg.rect(x_end + 10.0, top + 18.0, 12.0, 12.0, "#4c72b0", None);
    svg.text(x_end + 26.0, top + 28.0, "start", "weekday");
    svg.text(left + (x_end - left) / 2.0, bottom + 34.0, "middle", "Cluster");
    svg.finish()
}

/// Population-mean transition probabilities; grey cells had no contributors.
pub fn transition_heatmap(mean: &[Vec<Option<f64>>], comment: &str) -> String {
    let k = mean.len();
    let (cell, left, top) = (34.0, 70.0, 50.0);
    let width = left + cell * k as f64 + 20.0;
    let height = top + cell * k as f64 + 40.0;
    let mut svg = Svg::new(width, height, "Mean transition probabilities (row = from)", comment);
    for (i, row) in mean.iter().enumerate() {
        let y = top + cell * i as f64;
        svg.text(left - 6.0, y + cell / 2.0 + 4.0, "end", &format!("from {i}"));
        for (j, p) in row.iter().enumerate() {
            let x = left + cell * j as f64;
            match p {
                Some(p) => svg.rect(x, y, cell, cell, &sequential(*p), Some(&format!("{i} -> {j}: {p:.3}"))),
                None => svg.rect(x, y, cell, cell, "#dddddd", Some("undefined")),
            }
        }
    }
    for j in 0..k {
        svg.text(left + cell * (j as f64 + 0.5), top - 6.0, "middle", &j.to_string());
    }
    svg.text(left + cell * k as f64 / 2.0, top + cell * k as f64 + 24.0, "middle", "to cluster");
    svg.finish()
}

/// Mean proportion by rank with a band of one standard deviation, one series
/// per K.
pub fn rank_curves(series: &[RankSeries], comment: &str) -> String {
    let max_rank = series.iter().map(|s| s.mean.len()).max().unwrap_or(1).max(2);
    let (left, top, plot_w, plot_h) = (60.0, 40.0, 360.0, 240.0);
    let width = left + plot_w + 110.0;
    let height = top + plot_h + 50.0;
    let mut svg = Svg::new(width, height, "Routine signature by rank (band: +/-1 SD across participants)", comment);
    let bottom = top + plot_h;
    y_axis(&mut svg, left, top, bottom, 1.0, 4, |v| format!("{v:.2}"));
    svg.line(left, bottom, left + plot_w, bottom, "black", false);
    let x_of = |r: usize| left + plot_w * r as f64 / (max_rank - 1) as f64;
    let y_of = |v: f64| bottom - plot_h * v.clamp(0.0, 1.0);
    for r in 0..max_rank {
        svg.text(x_of(r), bottom + 14.0, "middle", &(r + 1).to_string());
    }
    svg.text(left + plot_w / 2.0, bottom + 34.0, "middle", "Rank");
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        writeln!(svg.body, "<g data-k=\"{}\">", s.k).unwrap();
        let upper: Vec<(f64, f64)> = s.mean.iter().zip(&s.sd).enumerate().map(|(r, (m, sd))| (x_of(r), y_of(m + sd))).collect();
        let mut band = upper;
        band.extend(s.mean.iter().zip(&s.sd).enumerate().rev().map(|(r, (m, sd))| (x_of(r), y_of(m - sd))));
        svg.polygon(&band, color);
        let pts: Vec<(f64, f64)> = s.mean.iter().enumerate().map(|(r, m)| (x_of(r), y_of(*m))).collect();
        svg.polyline(&pts, color);
        svg.body.push_str("</g>\n");
        let ly = top + 14.0 * i as f64;
        svg.rect(left + plot_w + 16.0, ly, 12.0, 10.0, color, None);
        svg.text(left + plot_w + 32.0, ly + 9.0, "start", &format!("K = {}", s.k));
    }
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary() -> ClusterSummary {
        ClusterSummary {
            feature_names: vec!["a".into(), "b<".into()],
            centroids: vec![Some(vec![1.0, -3.0]), None],
            day_counts: vec![5, 0],
            weekday_counts: vec![3, 0],
            weekend_counts: vec![2, 0],
        }
    }

    #[test]
    fn colors_saturate_at_the_ends() {
        assert_eq!(diverging(0.0), "#ffffff");
        assert_eq!(diverging(5.0), diverging(2.0));
        assert_eq!(sequential(0.0), "#ffffff");
    }

    #[test]
    fn figures_escape_labels_and_mark_empty_clusters() {
        let s = centroid_heatmap(&summary(), "<!-- x -->");
        assert!(s.contains("b&lt;"));
        assert!(s.contains("no days"));
        assert!(s.starts_with("<svg"));
        assert!(s.ends_with("</svg>\n"));
        assert!(weekday_weekend(&summary(), "").contains("weekend 0.400"));
        assert!(cluster_days(&summary(), "").contains("cluster 0: 5 days"));
    }

    #[test]
    fn one_group_per_rank_series() {
        let series: Vec<RankSeries> = (6..=8)
            .map(|k| RankSeries {
                k,
                mean: vec![1.0 / k as f64; k],
                sd: vec![0.0; k],
            })
            .collect();
        let s = rank_curves(&series, "");
        assert_eq!(s.matches("<g data-k=").count(), 3);
        assert!(s.contains("K = 8"));
    }

    #[test]
    fn undefined_transitions_are_grey() {
        let s = transition_heatmap(&[vec![Some(0.5), Some(0.5)], vec![None, None]], "");
        assert_eq!(s.matches("undefined").count(), 2);
    }

    #[test]
    fn attributes_are_unique_per_element() {
        let series = vec![RankSeries {
            k: 2,
            mean: vec![0.6, 0.4],
            sd: vec![0.1, 0.1],
        }];
        let docs = [
            centroid_heatmap(&summary(), ""),
            cluster_days(&summary(), ""),
            weekday_weekend(&summary(), ""),
            transition_heatmap(&[vec![Some(1.0), None], vec![None, None]], ""),
            rank_curves(&series, ""),
        ];
        for doc in &docs {
            for tag in doc.split('<').skip(1) {
                let head = tag.split('>').next().unwrap();
                let mut names: Vec<&str> = head.split_whitespace().skip(1).filter_map(|a| a.split_once('=').map(|(n, _)| n)).collect();
                let before = names.len();
                names.sort_unstable();
                names.dedup();
                assert_eq!(names.len(), before, "duplicate attribute in <{head}>");
            }
        }
    }
}
