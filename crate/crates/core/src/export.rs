//! CSV and static-SVG emission for trajectories and rate functions.
//!
//! Formatting is fixed (`{:.10e}`, fixed grids) so identical inputs
//! produce byte-identical files.

use std::fmt::Write as _;

use crate::transient::{expected_value_at, Trajectory};

/// Full trajectory CSV on a uniform `n`-point grid: `t, p_0..p_S, E[X]`.
pub fn trajectory_csv(traj: &Trajectory, t0: f64, t1: f64, n: usize) -> String {
    let dim = traj.dim();
    let mut out = String::new();
    out.push('t');
    for k in 0..dim {
        let _ = write!(out, ",p_{k}");
    }
    out.push_str(",E\n");
    for i in 0..n {
        let t = t0 + (t1 - t0) * i as f64 / (n - 1) as f64;
        let p = traj.sample(t);
        let _ = write!(out, "{t:.10e}");
        for k in 0..dim {
            let _ = write!(out, ",{:.10e}", p[k]);
        }
        let e: f64 = p.iter().enumerate().map(|(k, &v)| k as f64 * v).sum();
        let _ = writeln!(out, ",{e:.10e}");
    }
    out
}

/// Reduced CSV for plotting: `t, E[X], p_{k}` for the named states.
pub fn reduced_csv(traj: &Trajectory, t0: f64, t1: f64, n: usize, states: &[usize]) -> String {
    let mut out = String::from("t,E");
    for k in states {
        let _ = write!(out, ",p_{k}");
    }
    out.push('\n');
    for i in 0..n {
        let t = t0 + (t1 - t0) * i as f64 / (n - 1) as f64;
        let p = traj.sample(t);
        let _ = write!(out, "{t:.10e},{:.10e}", expected_value_at(traj, t));
        for &k in states {
            let _ = write!(out, ",{:.10e}", p[k]);
        }
        out.push('\n');
    }
    out
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Minimal static line plot. `series` pairs a label with (x, y) points.
pub fn svg_line_plot(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (800.0, 500.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for (_, pts) in series {
        for &(x, y) in pts {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        xmin = 0.0;
        xmax = 1.0;
        ymin = 0.0;
        ymax = 1.0;
    }
    if (ymax - ymin).abs() < 1e-300 {
        ymax = ymin + 1.0;
    }
    if (xmax - xmin).abs() < 1e-300 {
        xmax = xmin + 1.0;
    }
    let sx = |x: f64| ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"13\">"
    );
    let _ = writeln!(
        out,
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\
         <text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>",
        w / 2.0
    );
    // axes
    let _ = writeln!(
        out,
        "<line x1=\"{ml}\" y1=\"{0:.1}\" x2=\"{1:.1}\" y2=\"{0:.1}\" stroke=\"black\"/>\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{0:.1}\" stroke=\"black\"/>",
        h - mb,
        w - mr
    );
    for i in 0..=4 {
        let fx = xmin + (xmax - xmin) * i as f64 / 4.0;
        let fy = ymin + (ymax - ymin) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.3}</text>",
            sx(fx),
            h - mb + 20.0,
            fx
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.3}</text>",
            ml - 8.0,
            sy(fy) + 4.0,
            fy
        );
    }
    for (idx, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let mut path = String::new();
        for (j, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(
                path,
                "{}{:.2},{:.2} ",
                if j == 0 { "M" } else { "L" },
                sx(x),
                sy(y)
            );
        }
        let _ = writeln!(
            out,
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            path.trim_end()
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{label}</text>",
            w - mr - 140.0,
            mt + 18.0 * (idx + 1) as f64
        );
    }
    out.push_str("</svg>\n");
    out
}
