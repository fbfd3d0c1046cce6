//! Grouped bar charts written as plain SVG: one panel per direction,
//! x groups by height and azimuth, one bar per band.

use std::fmt::Write as _;

use aerotraffic_core::{Band, MetricsRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ChartMetric {
    F1,
    Recall,
    Precision,
}

impl ChartMetric {
    fn label(self) -> &'static str {
        match self {
            ChartMetric::F1 => "F1",
            ChartMetric::Recall => "Recall",
            ChartMetric::Precision => "Precision",
        }
    }

    fn value(self, r: &MetricsRecord) -> Option<f64> {
        let m = match self {
            ChartMetric::F1 => r.f1_milli(),
            ChartMetric::Recall => r.recall_milli(),
            ChartMetric::Precision => r.precision_milli(),
        };
        m.map(|m| m.value())
    }
}

const PANEL_H: f64 = 220.0;
const PLOT_H: f64 = 160.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 30.0;
const BAR_W: f64 = 14.0;
const GROUP_GAP: f64 = 12.0;

fn band_color(band: Band) -> &'static str {
    match band {
        Band::Rgb => "#4c72b0",
        Band::Ir => "#dd8452",
    }
}

fn num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

fn unique<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Render `metric` for every record. Undefined values leave a gap.
pub fn render_chart(records: &[MetricsRecord], metric: ChartMetric) -> String {
    let mut directions = unique(records.iter().map(|r| r.id.direction.clone()));
    directions.sort();
    let mut groups = unique(records.iter().map(|r| (r.id.azimuth_deg, r.id.height_ft)));
    groups.sort_by(|a, b| a.partial_cmp(b).expect("finite scenario axes"));
    let mut bands = unique(records.iter().map(|r| r.id.band));
    bands.sort_by_key(|b| matches!(b, Band::Ir));

    let group_w = bands.len().max(1) as f64 * BAR_W + GROUP_GAP;
    let plot_w = groups.len().max(1) as f64 * group_w;
    let width = LEFT + plot_w + 120.0;
    let height = TOP + directions.len().max(1) as f64 * PANEL_H + 20.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="10">"#,
        num(width),
        num(height),
        num(width),
        num(height)
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" font-size="13">{} by scenario</text>"#,
        num(LEFT),
        metric.label()
    );

    for (di, dir) in directions.iter().enumerate() {
        let y0 = TOP + di as f64 * PANEL_H;
        let base = y0 + 20.0 + PLOT_H;
        let _ = writeln!(s, r#"<g class="facet" data-direction="{}">"#, escape(dir));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">{}</text>"#, num(LEFT), num(y0 + 12.0), escape(dir));
        for tick in 0..=5 {
            let v = tick as f64 / 5.0;
            let y = base - v * PLOT_H;
            let _ = writeln!(
                s,
                r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{:.1}</text>"##,
                num(LEFT),
                num(y),
                num(LEFT + plot_w),
                num(y),
                num(LEFT - 4.0),
                num(y + 3.0),
                v
            );
        }
        let _ = writeln!(
            s,
            r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/><line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
            l = num(LEFT),
            t = num(base - PLOT_H),
            b = num(base),
            r = num(LEFT + plot_w)
        );
        for (gi, &(az, h)) in groups.iter().enumerate() {
            let gx = LEFT + gi as f64 * group_w + GROUP_GAP / 2.0;
            for (bi, &band) in bands.iter().enumerate() {
                let rec = records.iter().find(|r| {
                    r.id.direction == *dir && r.id.band == band && r.id.azimuth_deg == az && r.id.height_ft == h
                });
                let Some(v) = rec.and_then(|r| metric.value(r)) else {
                    continue;
                };
                let bh = v * PLOT_H;
                let _ = writeln!(
                    s,
                    r#"<rect class="bar" x="{}" y="{}" width="{}" height="{}" fill="{}"><title>{} {}ft {}deg {}: {:.3}</title></rect>"#,
                    num(gx + bi as f64 * BAR_W),
                    num(base - bh),
                    num(BAR_W - 1.0),
                    num(bh),
                    band_color(band),
                    band,
                    num(h),
                    num(az),
                    escape(dir),
                    v
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{}ft/{}°</text>"#,
                num(gx + (group_w - GROUP_GAP) / 2.0),
                num(base + 12.0),
                num(h),
                num(az)
            );
        }
        let _ = writeln!(s, "</g>");
    }

    for (bi, &band) in bands.iter().enumerate() {
        let y = TOP + 20.0 + bi as f64 * 16.0;
        let x = LEFT + plot_w + 20.0;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            num(x),
            num(y),
            band_color(band),
            num(x + 14.0),
            num(y + 9.0),
            band
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
