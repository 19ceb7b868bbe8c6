//! CSV and SVG rendering of evaluation results.
//!
//! Everything here is plain text assembled with fixed formatting, so the
//! same inputs produce the same bytes on every run, platform, and thread
//! count. The SVG charts are self-contained: no stylesheets, no scripts.

use std::fmt::Write as _;

use super::gds::{GdsProfile, OrderingEstimate};
use super::{MatchRule, RecallMeasurement};

/// One recall measurement, as written to `recall.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecallRow {
    /// Ground-truth rule kind, `meters` or `frames`.
    pub mode: String,
    /// Match threshold in the rule's own unit.
    pub threshold: f64,
    pub k: usize,
    pub recall: f64,
    /// Answerable queries behind the recall value.
    pub num_queries: u64,
}

impl RecallRow {
    /// Builds a row from the rule it was measured under.
    pub fn new(rule: MatchRule, k: usize, m: RecallMeasurement) -> Self {
        let (mode, threshold) = match rule {
            MatchRule::Meters(v) => ("meters", v),
            MatchRule::Frames(w) => ("frames", f64::from(w)),
        };
        RecallRow {
            mode: mode.into(),
            threshold,
            k,
            recall: m.recall,
            num_queries: m.num_queries,
        }
    }
}

/// Renders recall rows as CSV.
pub fn recall_csv(rows: &[RecallRow]) -> String {
    let mut out = String::from("mode,threshold,k,recall,num_queries\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.mode, r.threshold, r.k, r.recall, r.num_queries
        )
        .expect("string writes cannot fail");
    }
    out
}

/// Renders a distance-sensitivity profile as CSV, one row per bin. The
/// trailing aggregate bin prints its open upper bound as `inf`.
pub fn gds_csv(profile: &GdsProfile) -> String {
    let mut out = String::from("bin_lo,bin_hi,count,mean,std\n");
    for b in &profile.bins {
        writeln!(out, "{},{},{},{},{}", b.lo, b.hi, b.count, b.mean, b.std)
            .expect("string writes cannot fail");
    }
    out
}

/// Renders an ordering estimate as CSV.
pub fn ordering_csv(e: &OrderingEstimate) -> String {
    format!(
        "estimate,stderr,trials\n{},{},{}\n",
        e.estimate, e.stderr, e.trials
    )
}

/// One plotted line, with an optional shaded band around it.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Per-x lower and upper band bounds, as `(x, lo, hi)`.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

/// Converts a profile into a mean line with a one-standard-deviation band,
/// over its non-empty bins. The tail bin has no finite center, so it never
/// appears on a chart.
pub fn gds_series(name: impl Into<String>, profile: &GdsProfile) -> Series {
    let nonempty: Vec<_> = profile
        .bins
        .iter()
        .filter(|b| b.count > 0 && !b.is_tail())
        .collect();
    Series {
        name: name.into(),
        points: nonempty.iter().map(|b| (b.center(), b.mean)).collect(),
        band: Some(
            nonempty
                .iter()
                .map(|b| (b.center(), b.mean - b.std, b.mean + b.std))
                .collect(),
        ),
    }
}

/// Chart labels.
#[derive(Clone, Debug)]
pub struct ChartOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 56.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Formats an axis value: fixed precision with trailing zeros trimmed.
fn fmt_tick(v: f64) -> String {
    let mut s = format!("{v:.3}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

struct Scale {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        let t = (v - self.lo) / (self.hi - self.lo);
        self.px_lo + t * (self.px_hi - self.px_lo)
    }
}

fn data_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        // Degenerate extent: open a symmetric unit window.
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Renders series as a line chart with axes, ticks, and a legend. Returns a
/// complete standalone SVG document.
pub fn render_line_chart(opts: &ChartOptions, series: &[Series]) -> String {
    let xs = series.iter().flat_map(|s| {
        s.points
            .iter()
            .map(|p| p.0)
            .chain(s.band.iter().flatten().map(|b| b.0))
    });
    let ys = series.iter().flat_map(|s| {
        s.points.iter().map(|p| p.1).chain(
            s.band
                .iter()
                .flatten()
                .flat_map(|b| [b.1, b.2]),
        )
    });
    let (x_lo, x_hi) = data_range(xs);
    let (y_lo, y_hi) = data_range(ys);
    let x = Scale {
        lo: x_lo,
        hi: x_hi,
        px_lo: MARGIN_L,
        px_hi: WIDTH - MARGIN_R,
    };
    let y = Scale {
        lo: y_lo,
        hi: y_hi,
        px_lo: HEIGHT - MARGIN_B,
        px_hi: MARGIN_T,
    };

    let mut svg = String::with_capacity(8192);
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH:.0} {HEIGHT:.0}\" \
         font-family=\"sans-serif\" font-size=\"13\">"
    )
    .unwrap();
    writeln!(
        svg,
        "<rect width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" fill=\"white\"/>"
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"26\" text-anchor=\"middle\" font-size=\"17\">{}</text>",
        WIDTH / 2.0,
        escape(&opts.title)
    )
    .unwrap();

    // Gridlines and ticks: five per axis, evenly spaced in data units.
    for i in 0..=4 {
        let t = f64::from(i) / 4.0;
        let xv = x_lo + t * (x_hi - x_lo);
        let yv = y_lo + t * (y_hi - y_lo);
        let xp = x.map(xv);
        let yp = y.map(yv);
        writeln!(
            svg,
            "<line x1=\"{xp:.2}\" y1=\"{:.2}\" x2=\"{xp:.2}\" y2=\"{:.2}\" \
             stroke=\"#dddddd\"/>",
            MARGIN_T,
            HEIGHT - MARGIN_B
        )
        .unwrap();
        writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{yp:.2}\" x2=\"{:.2}\" y2=\"{yp:.2}\" \
             stroke=\"#dddddd\"/>",
            MARGIN_L,
            WIDTH - MARGIN_R
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{xp:.2}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            HEIGHT - MARGIN_B + 18.0,
            fmt_tick(xv)
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            MARGIN_L - 8.0,
            yp + 4.0,
            fmt_tick(yv)
        )
        .unwrap();
    }

    // Axis frame.
    writeln!(
        svg,
        "<rect x=\"{MARGIN_L:.0}\" y=\"{MARGIN_T:.0}\" width=\"{:.0}\" height=\"{:.0}\" \
         fill=\"none\" stroke=\"#333333\"/>",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        HEIGHT - 14.0,
        escape(&opts.x_label)
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.1})\">{}</text>",
        MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0,
        MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0,
        escape(&opts.y_label)
    )
    .unwrap();

    // Bands first so lines draw on top of them.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some(band) = &s.band {
            if band.len() >= 2 {
                let mut d = String::new();
                for (bx, lo, _) in band {
                    write!(d, "{:.2},{:.2} ", x.map(*bx), y.map(*lo)).unwrap();
                }
                for (bx, _, hi) in band.iter().rev() {
                    write!(d, "{:.2},{:.2} ", x.map(*bx), y.map(*hi)).unwrap();
                }
                d.pop();
                writeln!(
                    svg,
                    "<polygon points=\"{d}\" fill=\"{color}\" fill-opacity=\"0.15\" \
                     stroke=\"none\"/>"
                )
                .unwrap();
            }
        }
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() == 1 {
            let (px, py) = s.points[0];
            writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>",
                x.map(px),
                y.map(py)
            )
            .unwrap();
            continue;
        }
        let mut d = String::new();
        for (px, py) in &s.points {
            write!(d, "{:.2},{:.2} ", x.map(*px), y.map(*py)).unwrap();
        }
        d.pop();
        writeln!(
            svg,
            "<polyline points=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>"
        )
        .unwrap();
    }

    // Legend, top-left inside the plot area.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let ly = MARGIN_T + 18.0 + 20.0 * i as f64;
        writeln!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"3\"/>",
            MARGIN_L + 12.0,
            MARGIN_L + 40.0
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            MARGIN_L + 48.0,
            ly + 4.0,
            escape(&s.name)
        )
        .unwrap();
    }

    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::gds::GdsBin;

    #[test]
    fn recall_csv_bytes_are_exact() {
        let rows = vec![
            RecallRow::new(
                MatchRule::Meters(25.0),
                1,
                RecallMeasurement {
                    recall: 0.75,
                    hits: 150,
                    num_queries: 200,
                },
            ),
            RecallRow::new(
                MatchRule::Frames(1),
                5,
                RecallMeasurement {
                    recall: 0.9,
                    hits: 180,
                    num_queries: 200,
                },
            ),
        ];
        assert_eq!(
            recall_csv(&rows),
            "mode,threshold,k,recall,num_queries\nmeters,25,1,0.75,200\nframes,1,5,0.9,200\n"
        );
    }

    #[test]
    fn gds_csv_keeps_every_bin_and_series_drops_unusable_ones() {
        let profile = GdsProfile {
            bins: vec![
                GdsBin {
                    lo: 0.0,
                    hi: 5.0,
                    count: 10,
                    mean: 0.5,
                    std: 0.125,
                },
                GdsBin {
                    lo: 5.0,
                    hi: 10.0,
                    count: 0,
                    mean: 0.0,
                    std: 0.0,
                },
                GdsBin {
                    lo: 10.0,
                    hi: f64::INFINITY,
                    count: 3,
                    mean: 0.75,
                    std: 0.25,
                },
            ],
        };
        let csv = gds_csv(&profile);
        assert_eq!(
            csv,
            "bin_lo,bin_hi,count,mean,std\n0,5,10,0.5,0.125\n5,10,0,0,0\n10,inf,3,0.75,0.25\n"
        );
        // The empty bin has no data and the tail bin has no finite center;
        // only the first bin can be plotted.
        let series = gds_series("raw", &profile);
        assert_eq!(series.points, vec![(2.5, 0.5)]);
        assert_eq!(series.band, Some(vec![(2.5, 0.375, 0.625)]));
    }

    #[test]
    fn ordering_csv_shape() {
        let e = OrderingEstimate {
            estimate: 0.5,
            stderr: 0.005,
            trials: 10000,
        };
        assert_eq!(
            ordering_csv(&e),
            "estimate,stderr,trials\n0.5,0.005,10000\n"
        );
    }

    #[test]
    fn tick_formatting_trims_zeros() {
        assert_eq!(fmt_tick(25.0), "25");
        assert_eq!(fmt_tick(0.5), "0.5");
        assert_eq!(fmt_tick(0.125), "0.125");
        assert_eq!(fmt_tick(1.2345), "1.234");
        assert_eq!(fmt_tick(-0.0001), "0");
    }

    fn demo_series() -> Vec<Series> {
        vec![
            Series {
                name: "one".into(),
                points: vec![(0.0, 0.1), (10.0, 0.4), (20.0, 0.9)],
                band: Some(vec![(0.0, 0.05, 0.15), (10.0, 0.3, 0.5), (20.0, 0.8, 1.0)]),
            },
            Series {
                name: "two & <friends>".into(),
                points: vec![(0.0, 0.2), (20.0, 0.3)],
                band: None,
            },
        ]
    }

    #[test]
    fn chart_is_deterministic_and_well_formed() {
        let opts = ChartOptions {
            title: "recall vs threshold".into(),
            x_label: "meters".into(),
            y_label: "recall".into(),
        };
        let a = render_line_chart(&opts, &demo_series());
        let b = render_line_chart(&opts, &demo_series());
        assert_eq!(a, b);
        assert!(a.starts_with("<svg "));
        assert!(a.trim_end().ends_with("</svg>"));
        assert!(a.contains("<polyline"));
        assert!(a.contains("<polygon"));
        assert!(a.contains("two &amp; &lt;friends&gt;"));
        assert!(!a.contains("NaN"));
    }

    #[test]
    fn degenerate_extents_stay_finite() {
        let opts = ChartOptions {
            title: "flat".into(),
            x_label: "x".into(),
            y_label: "y".into(),
        };
        let svg = render_line_chart(
            &opts,
            &[Series {
                name: "dot".into(),
                points: vec![(5.0, 1.0)],
                band: None,
            }],
        );
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("NaN"));
        let empty = render_line_chart(&opts, &[]);
        assert!(empty.starts_with("<svg "));
        assert!(!empty.contains("NaN"));
    }
}
