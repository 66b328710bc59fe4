//! SVG charts rendered from a trust report alone.

use std::fmt::Write;

use trustdrift::stats::pearson;
use trustdrift::trust::TrustReport;

pub const TRUST_SVG: &str = "trust_over_batches.svg";
pub const DRIFT_SVG: &str = "drift_metrics.svg";
pub const CORRELATION_SVG: &str = "component_correlation.svg";

const W: f64 = 640.0;
const H: f64 = 360.0;
const LINE: &str = "#1f5fa8";
const FLAG: &str = "#c0392b";

/// Every chart as `(file name, svg text)`.
pub fn render_all(report: &TrustReport) -> Vec<(&'static str, String)> {
    vec![
        (TRUST_SVG, trust_chart(report)),
        (DRIFT_SVG, drift_chart(report)),
        (CORRELATION_SVG, correlation_chart(report)),
    ]
}

fn open(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A plotting area mapping batch numbers and values to pixels.
struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    batches: usize,
    lo: f64,
    hi: f64,
}

impl Panel {
    fn x(&self, batch: usize) -> f64 {
        if self.batches <= 1 {
            return self.x0 + self.w / 2.0;
        }
        self.x0 + (batch - 1) as f64 / (self.batches - 1) as f64 * self.w
    }

    fn y(&self, v: f64) -> f64 {
        let v = v.clamp(self.lo, self.hi);
        self.y0 + self.h - (v - self.lo) / (self.hi - self.lo) * self.h
    }

    fn axes(&self, out: &mut String, label: &str) {
        let (x0, y0, w, h) = (self.x0, self.y0, self.w, self.h);
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.1}" y="{y0:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#888"/>"##
        );
        for (v, anchor_y) in [(self.lo, y0 + h), (self.hi, y0)] {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                x0 - 4.0,
                anchor_y + 4.0,
                fmt_tick(v)
            );
        }
        for b in 1..=self.batches {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{b}</text>"#,
                self.x(b),
                y0 + h + 14.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + w / 2.0,
            y0 - 6.0,
            escape(label)
        );
    }

    fn shade(&self, out: &mut String, batches: &[usize]) {
        let half = if self.batches > 1 {
            self.w / (self.batches - 1) as f64 / 2.0
        } else {
            self.w / 2.0
        };
        for &b in batches.iter().filter(|&&b| b >= 1 && b <= self.batches) {
            let left = (self.x(b) - half).max(self.x0);
            let right = (self.x(b) + half).min(self.x0 + self.w);
            let _ = writeln!(
                out,
                r##"<rect x="{left:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#f6e3c6"/>"##,
                self.y0,
                right - left,
                self.h
            );
        }
    }

    fn hline(&self, out: &mut String, v: f64, color: &str) {
        if !(self.lo..=self.hi).contains(&v) {
            return;
        }
        let y = self.y(v);
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-dasharray="5,4"/>"#,
            self.x0,
            self.x0 + self.w
        );
    }

    fn series(&self, out: &mut String, values: &[f64], marked: &[bool]) {
        let pts: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.1},{:.1}", self.x(i + 1), self.y(v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{LINE}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for (i, &v) in values.iter().enumerate() {
            let color = if marked.get(i).copied().unwrap_or(false) { FLAG } else { LINE };
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{color}"/>"#,
                self.x(i + 1),
                self.y(v)
            );
        }
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Value range covering the finite data and any reference lines.
fn range(values: &[f64], refs: &[f64]) -> (f64, f64) {
    let finite = values.iter().chain(refs).copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let hi = if hi - lo < 1e-9 { lo + 1.0 } else { hi + 0.1 * (hi - lo) };
    (lo, hi)
}

fn trust_chart(r: &TrustReport) -> String {
    let mut out = String::new();
    open(&mut out, W, H, "Trust score over batches");
    let p = Panel {
        x0: 60.0,
        y0: 40.0,
        w: W - 90.0,
        h: H - 90.0,
        batches: r.batches.len(),
        lo: 0.0,
        hi: 1.0,
    };
    p.shade(&mut out, &r.drifted_batches);
    p.axes(&mut out, "trust (shaded: drifted, red: flagged)");
    p.hline(&mut out, r.thresholds.trust, FLAG);
    p.series(&mut out, &r.trust_values(), &r.flags());
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">batch</text>"#,
        p.x0 + p.w / 2.0,
        H - 12.0
    );
    out.push_str("</svg>\n");
    out
}

fn drift_chart(r: &TrustReport) -> String {
    let mut out = String::new();
    open(&mut out, W, 2.0 * H, "Drift metrics over batches");
    let b = &r.batches;
    let flags = r.flags();
    let col = |f: fn(&trustdrift::trust::BatchSignals) -> f64| -> Vec<f64> {
        b.iter().map(|x| f(&x.signals)).collect()
    };
    let panels = [
        (format!("PSI ({})", r.drift_feature), col(|s| s.psi), 0.2),
        (format!("JSD ({})", r.drift_feature), col(|s| s.jsd), 0.1),
        ("AE reconstruction z".to_string(), col(|s| s.ae_z), 3.0),
        ("TAE reconstruction z".to_string(), col(|s| s.tae_z), r.thresholds.tae_z),
    ];
    let (pw, ph) = (W / 2.0 - 80.0, H - 90.0);
    for (i, (label, values, threshold)) in panels.iter().enumerate() {
        let (lo, hi) = range(values, &[*threshold]);
        let p = Panel {
            x0: 60.0 + (i % 2) as f64 * W / 2.0,
            y0: 50.0 + (i / 2) as f64 * H,
            w: pw,
            h: ph,
            batches: b.len(),
            lo,
            hi,
        };
        p.shade(&mut out, &r.drifted_batches);
        p.axes(&mut out, label);
        p.hline(&mut out, *threshold, FLAG);
        p.series(&mut out, values, &flags);
    }
    out.push_str("</svg>\n");
    out
}

/// Pearson correlation of each pair of series; `None` when either series
/// is constant.
pub fn correlation_matrix(series: &[Vec<f64>]) -> Vec<Vec<Option<f64>>> {
    series
        .iter()
        .map(|a| {
            series
                .iter()
                .map(|b| {
                    let r = pearson(a, b);
                    r.is_finite().then(|| r.clamp(-1.0, 1.0))
                })
                .collect()
        })
        .collect()
}

fn color(r: f64) -> String {
    // white at 0, red towards +1, blue towards -1
    let t = r.abs();
    let (fr, fg, fb) = if r >= 0.0 { (192.0, 57.0, 43.0) } else { (31.0, 95.0, 168.0) };
    let mix = |c: f64| (255.0 + (c - 255.0) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(fr), mix(fg), mix(fb))
}

fn correlation_chart(r: &TrustReport) -> String {
    let names = ["drift", "uncertainty", "rules", "error", "trust"];
    let b = &r.batches;
    let series: Vec<Vec<f64>> = vec![
        b.iter().map(|x| x.components.drift).collect(),
        b.iter().map(|x| x.components.uncertainty).collect(),
        b.iter().map(|x| x.components.rules).collect(),
        b.iter().map(|x| x.components.error).collect(),
        b.iter().map(|x| x.trust).collect(),
    ];
    let m = correlation_matrix(&series);
    let cell = 70.0;
    let (x0, y0) = (110.0, 50.0);
    let size = x0 + cell * names.len() as f64 + 30.0;
    let mut out = String::new();
    open(&mut out, size, size, "Component correlation across batches");
    for (i, name) in names.iter().enumerate() {
        let c = i as f64 * cell + cell / 2.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{name}</text>"#,
            x0 - 6.0,
            y0 + c + 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{name}</text>"#,
            x0 + c,
            y0 + cell * names.len() as f64 + 16.0
        );
    }
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let (x, y) = (x0 + j as f64 * cell, y0 + i as f64 * cell);
            let (fill, text) = match v {
                Some(v) => (color(*v), format!("{v:.2}")),
                None => ("#dddddd".to_string(), "n/a".to_string()),
            };
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="{fill}" stroke="white"/>"#
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{text}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
