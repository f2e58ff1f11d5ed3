//! Trace artifacts: a full-precision CSV and a self-contained SVG chart.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use consensus_core::SimulationTrace;

/// `t,err_1..err_N,relerr_1..relerr_N`.
pub fn csv_header(followers: usize) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=followers).map(|i| format!("err_{i}")));
    header.extend((1..=followers).map(|i| format!("relerr_{i}")));
    header
}

/// Writes one row per sample. Floats use the shortest representation that
/// parses back to the same value.
pub fn write_csv_to<W: Write>(trace: &SimulationTrace, out: W) -> io::Result<()> {
    let followers = trace.follower_count();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(followers))?;
    let mut record = Vec::with_capacity(1 + 2 * followers);
    for (idx, &t) in trace.times.iter().enumerate() {
        record.clear();
        record.push(t.to_string());
        record.extend(trace.errors[idx].iter().map(f64::to_string));
        record.extend(trace.rel_errors[idx].iter().map(f64::to_string));
        w.write_record(&record)?;
    }
    w.flush()
}

pub fn write_csv(trace: &SimulationTrace, path: &Path) -> io::Result<()> {
    write_csv_to(trace, File::create(path)?)
}

pub fn write_svg(trace: &SimulationTrace, path: &Path) -> io::Result<()> {
    std::fs::write(path, render_svg(trace))
}

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 140.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
/// Values at or below this are drawn on the floor of the log axis.
const FLOOR: f64 = 1e-16;
const MAX_POINTS: usize = 2000;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];

struct Axes {
    t0: f64,
    t1: f64,
    lo: f64,
    hi: f64,
}

impl Axes {
    fn of(trace: &SimulationTrace) -> Self {
        let (t0, t1) = match (trace.times.first(), trace.times.last()) {
            (Some(&a), Some(&b)) if b > a => (a, b),
            (Some(&a), _) => (a, a + 1.0),
            _ => (0.0, 1.0),
        };
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &e in trace.errors.iter().flatten() {
            if e.is_finite() {
                let v = e.max(FLOOR);
                min = min.min(v);
                max = max.max(v);
            }
        }
        let (mut lo, mut hi) = if min.is_finite() {
            (min.log10().floor(), max.log10().ceil())
        } else {
            (-3.0, 0.0)
        };
        if hi <= lo {
            hi = lo + 1.0;
        }
        lo = lo.max(FLOOR.log10());
        Self { t0, t1, lo, hi }
    }

    fn x(&self, t: f64) -> f64 {
        LEFT + (t - self.t0) / (self.t1 - self.t0) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, value: f64) -> f64 {
        let v = value.max(FLOOR).log10().clamp(self.lo, self.hi);
        TOP + (self.hi - v) / (self.hi - self.lo) * (HEIGHT - TOP - BOTTOM)
    }
}

fn tick_label(t: f64) -> String {
    let s = format!("{t:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Log-scale line chart of `||x_i - x_0||` over time, one polyline per
/// follower, legend by follower id.
pub fn render_svg(trace: &SimulationTrace) -> String {
    let axes = Axes::of(trace);
    let followers = trace.follower_count();
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (TOP, HEIGHT - BOTTOM);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">State errors ‖x_i − x_0‖</text>"#,
        (x0 + x1) / 2.0
    );

    // decade grid and labels
    let decades = (axes.hi - axes.lo) as usize;
    let step = decades.div_ceil(10).max(1);
    let mut d = axes.lo;
    while d <= axes.hi + 1e-9 {
        let y = axes.y(10f64.powf(d));
        let _ = writeln!(
            s,
            r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="#dddddd"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{}</text>"#,
            x0 - 6.0,
            y + 4.0,
            d as i64
        );
        d += step as f64;
    }
    for k in 0..=5 {
        let t = axes.t0 + (axes.t1 - axes.t0) * k as f64 / 5.0;
        let x = axes.x(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{y1:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333333"/>"##,
            y1 + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y1 + 19.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        s,
        r##"<path d="M{x0:.1},{y0:.1} L{x0:.1},{y1:.1} L{x1:.1},{y1:.1}" fill="none" stroke="#333333"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">t</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">error (log scale)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    let samples = trace.times.len();
    let stride = samples.div_ceil(MAX_POINTS).max(1);
    for f in 0..followers {
        let color = PALETTE[f % PALETTE.len()];
        let mut points = String::new();
        let mut push = |idx: usize| {
            let e = trace.errors[idx][f];
            if e.is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", axes.x(trace.times[idx]), axes.y(e));
            }
        };
        for idx in (0..samples).step_by(stride) {
            push(idx);
        }
        if samples > 0 && !(samples - 1).is_multiple_of(stride) {
            push(samples - 1);
        }
        let _ = writeln!(
            s,
            r#"<polyline data-follower="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            f + 1,
            points.trim_end()
        );
        let ly = TOP + 10.0 + 20.0 * f as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            x1 + 14.0,
            x1 + 38.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">follower {}</text>"#,
            x1 + 44.0,
            ly + 4.0,
            f + 1
        );
    }
    s.push_str("</svg>\n");
    s
}
