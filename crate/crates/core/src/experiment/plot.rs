//! ROC plots as standalone SVG 1.1 documents.

use std::fmt::Write as _;

use crate::detectors::{DetectorKind, ScoreTable};
use crate::error::Result;
use crate::evaluation::roc_curve;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const LEGEND_WIDTH: f64 = 150.0;
/// Left edge of the log-scaled FPR axis.
const LOG_FPR_FLOOR: f64 = 1e-3;

fn color(kind: DetectorKind) -> &'static str {
    match kind {
        DetectorKind::Glir => "#2ca02c",
        DetectorKind::Loss => "#1f77b4",
        DetectorKind::Laeq => "#ff7f0e",
        DetectorKind::Sif => "#9467bd",
        DetectorKind::Ia => "#d62728",
    }
}

/// One polyline per `(detector, boosted)` series across `tables`. Boosted
/// series are dashed. With `log_fpr` the x axis spans `[10⁻³, 1]` in log scale.
pub fn roc_svg(tables: &[ScoreTable], log_fpr: bool) -> Result<String> {
    let plot_w = WIDTH - 2.0 * MARGIN - LEGEND_WIDTH;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x_of = |fpr: f64| {
        let t = if log_fpr {
            (fpr.max(LOG_FPR_FLOOR).log10() - LOG_FPR_FLOOR.log10()) / -LOG_FPR_FLOOR.log10()
        } else {
            fpr
        };
        MARGIN + t * plot_w
    };
    let y_of = |tpr: f64| HEIGHT - MARGIN - tpr * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let ticks: Vec<f64> = if log_fpr {
        vec![1e-3, 1e-2, 1e-1, 1.0]
    } else {
        vec![0.0, 0.25, 0.5, 0.75, 1.0]
    };
    for t in ticks {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{t}</text>"#,
            x_of(t),
            HEIGHT - MARGIN + 16.0
        );
    }
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{t}</text>"#,
            MARGIN - 6.0,
            y_of(t) + 4.0
        );
    }
    let axis = if log_fpr {
        "False positive rate (log)"
    } else {
        "False positive rate"
    };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{axis}</text>"#,
        MARGIN + plot_w / 2.0,
        HEIGHT - 18.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.2})">True positive rate</text>"#,
        MARGIN + plot_h / 2.0,
        MARGIN + plot_h / 2.0
    );
    if !log_fpr {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="silver" stroke-dasharray="2,3"/>"#,
            x_of(0.0),
            y_of(0.0),
            x_of(1.0),
            y_of(1.0)
        );
    }

    let mut legend = 0usize;
    for table in tables {
        for (kind, boosted) in table.series() {
            let (m, n) = table.scores(kind, boosted);
            let curve = roc_curve(&m, &n)?;
            let points: Vec<String> = curve
                .points()
                .iter()
                .map(|p| format!("{:.2},{:.2}", x_of(p.fpr), y_of(p.tpr)))
                .collect();
            let dash = if boosted { r#" stroke-dasharray="6,4""# } else { "" };
            let label = format!("{kind}{}", if boosted { " (boosted)" } else { "" });
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"><title>{label}</title></polyline>"#,
                color(kind),
                points.join(" ")
            );
            let ly = MARGIN + 10.0 + 18.0 * legend as f64;
            let lx = WIDTH - MARGIN - LEGEND_WIDTH + 20.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="1.5"{dash}/>"#,
                lx + 24.0,
                color(kind)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="11">{label}</text>"#,
                lx + 30.0,
                ly + 4.0
            );
            legend += 1;
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitRole;
    use crate::detectors::ScoreRow;

    fn table(boosted: bool) -> ScoreTable {
        let rows = (0..8).map(|i| ScoreRow {
            sample_id: i,
            is_member: i < 4,
            detector: DetectorKind::Glir,
            boosted,
            score: (i * 7 % 5) as f64,
        });
        ScoreTable::from_rows(SplitRole::AttackTest, rows).unwrap()
    }

    #[test]
    fn one_polyline_per_series_with_dashed_boosting() {
        let svg = roc_svg(&[table(false), table(true)], false).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(
            svg.matches("stroke-dasharray=\"6,4\"").count(),
            2,
            "curve and legend entry"
        );
        assert!(svg.contains("glir (boosted)"));
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn log_axis_is_optional() {
        let svg = roc_svg(&[table(false)], true).unwrap();
        assert!(svg.contains("(log)"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }
}
