use super::eval::{EvalReport, Summary};
use std::fmt::Write as _;

pub const CSV_HEADER: &str = "agent,setting,condition,n_nodes,replicas,split,count,mean,sd,ci95";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_row(out: &mut String, r: &EvalReport, split: &str, s: &Summary) {
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        r.agent,
        r.setting.name(),
        r.condition.name(),
        r.n_nodes,
        r.replicas,
        split,
        s.count,
        opt(s.mean),
        opt(s.sd),
        opt(s.ci95)
    );
}

/// One `all` row per report followed by its six split rows. Empty splits
/// keep their row with count 0 and blank statistics.
pub fn render_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        csv_row(&mut out, r, "all", &r.overall);
        for s in &r.splits {
            csv_row(&mut out, r, s.split.name(), &s.summary);
        }
    }
    out
}

pub fn render_json(reports: &[EvalReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart of overall mean quiz reward per report with 95% CI whiskers.
pub fn render_svg(reports: &[EvalReport]) -> String {
    let bars: Vec<(String, f64, f64)> = reports
        .iter()
        .map(|r| {
            let label = format!("{} / {} / {}", r.agent, r.setting.name(), r.condition.name());
            (label, r.overall.mean.unwrap_or(0.0), r.overall.ci95.unwrap_or(0.0))
        })
        .collect();
    let lo = bars.iter().map(|b| b.1 - b.2).fold(0.0f64, f64::min) - 0.5;
    let hi = bars.iter().map(|b| b.1 + b.2).fold(0.0f64, f64::max) + 0.5;
    let (left, top, plot_h, bar_w, gap) = (60.0, 20.0, 240.0, 40.0, 20.0);
    let width = left + (bar_w + gap) * bars.len().max(1) as f64 + gap;
    let height = top + plot_h + 160.0;
    let y = |v: f64| top + (hi - v) / (hi - lo) * plot_h;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(out, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + plot_h);
    let step = if hi - lo > 10.0 { 2.0 } else { 1.0 };
    let mut tick = (lo / step).ceil() * step;
    while tick <= hi {
        let ty = y(tick);
        let _ = writeln!(out, r#"<line x1="{}" y1="{ty}" x2="{left}" y2="{ty}" stroke="black"/>"#, left - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{tick}</text>"#, left - 6.0, ty + 4.0);
        tick += step;
    }
    let zero = y(0.0);
    let _ = writeln!(out, r##"<line x1="{left}" y1="{zero}" x2="{width}" y2="{zero}" stroke="#888"/>"##);
    for (k, (label, mean, ci)) in bars.iter().enumerate() {
        let x = left + gap + k as f64 * (bar_w + gap);
        let (a, b) = (y(*mean), zero);
        let _ = writeln!(
            out,
            r##"<rect x="{x}" y="{}" width="{bar_w}" height="{}" fill="#4a7ab5"/>"##,
            a.min(b),
            (a - b).abs()
        );
        let cx = x + bar_w / 2.0;
        let (w0, w1) = (y(mean + ci), y(mean - ci));
        let _ = writeln!(out, r#"<line x1="{cx}" y1="{w0}" x2="{cx}" y2="{w1}" stroke="black"/>"#);
        for wy in [w0, w1] {
            let _ = writeln!(out, r#"<line x1="{}" y1="{wy}" x2="{}" y2="{wy}" stroke="black"/>"#, cx - 6.0, cx + 6.0);
        }
        let ly = top + plot_h + 12.0;
        let _ = writeln!(out, r#"<text x="{cx}" y="{ly}" transform="rotate(40 {cx} {ly})">{}</text>"#, escape(label));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Condition, Setting};
    use crate::train_eval::{SplitLabel, SplitSummary};

    fn report() -> EvalReport {
        let full = Summary { count: 4, mean: Some(-1.25), sd: Some(2.5), ci95: Some(0.5) };
        let empty = Summary { count: 0, mean: None, sd: None, ci95: None };
        EvalReport {
            agent: "random".into(),
            setting: Setting::Interventional,
            condition: Condition::Active,
            n_nodes: 3,
            replicas: 1,
            episodes_per_replica: 4,
            replica_means: vec![-1.25],
            overall: full.clone(),
            splits: SplitLabel::ALL
                .iter()
                .map(|&s| SplitSummary {
                    split: s,
                    summary: if s == SplitLabel::Degenerate { empty.clone() } else { full.clone() },
                })
                .collect(),
        }
    }

    #[test]
    fn csv_schema() {
        let csv = render_csv(&[report()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 8);
        assert_eq!(lines[1], "random,interventional,active,3,1,all,4,-1.25,2.5,0.5");
        assert_eq!(lines[6], "random,interventional,active,3,1,degenerate,0,,,");
    }

    #[test]
    fn csv_agrees_with_json() {
        let r = report();
        let back: Vec<EvalReport> = serde_json::from_str(&render_json(std::slice::from_ref(&r))).unwrap();
        assert_eq!(back, vec![r.clone()]);
        assert_eq!(render_csv(&back), render_csv(&[r]));
    }

    #[test]
    fn svg_has_one_bar_per_report() {
        let svg = render_svg(&[report(), report()]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("fill=\"#4a7ab5\"").count(), 2);
    }
}
