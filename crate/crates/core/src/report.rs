//! SVG figures rendered from the CSV artifacts.
//!
//! Rendering is a pure function of the CSV text, so re-emitting from the
//! same files gives byte-identical SVGs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tolerance::percentile;

const W: f64 = 640.0;
const H: f64 = 400.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 50.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(mut x0: f64, mut x1: f64, mut y0: f64, mut y1: f64) -> Self {
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        ML + (x - self.x0) / (self.x1 - self.x0) * (W - ML - MR)
    }

    fn py(&self, y: f64) -> f64 {
        H - MB - (y - self.y0) / (self.y1 - self.y0) * (H - MT - MB)
    }
}

fn header(s: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        W / 2.0,
        escape(title),
        (W + ML - MR) / 2.0,
        H - 12.0,
        escape(xlabel),
        (H + MT - MB) / 2.0,
        (H + MT - MB) / 2.0,
        escape(ylabel)
    );
}

fn axes(s: &mut String, f: &Frame, yfmt: impl Fn(f64) -> String) {
    let _ = writeln!(
        s,
        "<path d=\"M{ML} {MT} V{:.1} H{:.1}\" stroke=\"black\" fill=\"none\"/>",
        H - MB,
        W - MR
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let yv = f.y0 + t * (f.y1 - f.y0);
        let xv = f.x0 + t * (f.x1 - f.x0);
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            ML - 6.0,
            f.py(yv) + 4.0,
            yfmt(yv)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            f.px(xv),
            H - MB + 16.0,
            fmt_num(xv)
        );
    }
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart; with `log_y` the values are plotted as `log10`.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, pts: &[(f64, f64)], log_y: bool, hline: Option<f64>) -> String {
    let tr = |y: f64| if log_y { y.max(1e-300).log10() } else { y };
    let ys: Vec<f64> = pts.iter().map(|p| tr(p.1)).collect();
    let (xmin, xmax) = minmax(pts.iter().map(|p| p.0));
    let (mut ymin, mut ymax) = minmax(ys.iter().copied());
    if let Some(h) = hline {
        ymin = ymin.min(tr(h));
        ymax = ymax.max(tr(h));
    }
    let f = Frame::new(xmin, xmax, ymin, ymax);
    let mut s = String::new();
    header(&mut s, title, xlabel, ylabel);
    axes(&mut s, &f, |v| if log_y { format!("1e{v:.1}") } else { fmt_num(v) });
    let mut d = String::new();
    for (i, (p, y)) in pts.iter().zip(&ys).enumerate() {
        let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, f.px(p.0), f.py(*y));
    }
    let _ = writeln!(s, "<path d=\"{}\" stroke=\"#1f77b4\" stroke-width=\"1.5\" fill=\"none\"/>", d.trim_end());
    if pts.len() <= 64 {
        for (p, y) in pts.iter().zip(&ys) {
            let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\"/>", f.px(p.0), f.py(*y));
        }
    }
    if let Some(h) = hline {
        let _ = writeln!(
            s,
            "<line x1=\"{ML}\" x2=\"{:.1}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"#d62728\" stroke-dasharray=\"6 4\"/>",
            W - MR,
            f.py(tr(h)),
            f.py(tr(h))
        );
    }
    s.push_str("</svg>\n");
    s
}

fn minmax(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

/// Box-and-whisker plot per group; whiskers at the given percentiles.
pub fn boxplot(title: &str, ylabel: &str, groups: &[(&str, Vec<f64>)], whiskers: (f64, f64), hline: Option<f64>) -> String {
    let mut stats = Vec::new();
    for (_, v) in groups {
        let mut v = v.clone();
        v.sort_by(f64::total_cmp);
        stats.push([
            percentile(&v, whiskers.0),
            percentile(&v, 25.0),
            percentile(&v, 50.0),
            percentile(&v, 75.0),
            percentile(&v, whiskers.1),
        ]);
    }
    let (mut lo, mut hi) = minmax(stats.iter().flat_map(|s| s.iter().copied()));
    if let Some(h) = hline {
        lo = lo.min(h);
        hi = hi.max(h);
    }
    let f = Frame::new(0.0, groups.len() as f64, lo.min(0.0), hi * 1.05);
    let mut s = String::new();
    header(&mut s, title, "", ylabel);
    let _ = writeln!(s, "<path d=\"M{ML} {MT} V{:.1} H{:.1}\" stroke=\"black\" fill=\"none\"/>", H - MB, W - MR);
    for k in 0..=4 {
        let yv = f.y0 + k as f64 / 4.0 * (f.y1 - f.y0);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", ML - 6.0, f.py(yv) + 4.0, fmt_num(yv));
    }
    for (i, ((name, _), st)) in groups.iter().zip(&stats).enumerate() {
        let cx = f.px(i as f64 + 0.5);
        let half = 0.25 * (f.px(1.0) - f.px(0.0));
        let _ = writeln!(
            s,
            "<line x1=\"{cx:.2}\" x2=\"{cx:.2}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n\
             <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#aec7e8\" stroke=\"black\"/>\n\
             <line x1=\"{:.2}\" x2=\"{:.2}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"2\"/>\n\
             <text x=\"{cx:.2}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            f.py(st[0]),
            f.py(st[4]),
            cx - half,
            f.py(st[3]),
            2.0 * half,
            (f.py(st[1]) - f.py(st[3])).max(0.5),
            cx - half,
            cx + half,
            f.py(st[2]),
            f.py(st[2]),
            H - MB + 16.0,
            escape(name)
        );
    }
    if let Some(h) = hline {
        let _ = writeln!(
            s,
            "<line x1=\"{ML}\" x2=\"{:.1}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"#d62728\" stroke-dasharray=\"6 4\"/>",
            W - MR,
            f.py(h),
            f.py(h)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Vertical error ranges, one per synapse.
pub fn range_chart(title: &str, ylabel: &str, ranges: &[(f64, f64)]) -> String {
    let (lo, hi) = minmax(ranges.iter().flat_map(|r| [r.0, r.1]));
    let f = Frame::new(0.0, ranges.len() as f64, lo.min(0.0), hi.max(0.0));
    let mut s = String::new();
    header(&mut s, title, "synapse", ylabel);
    axes(&mut s, &f, fmt_num);
    for (i, r) in ranges.iter().enumerate() {
        let x = f.px(i as f64 + 0.5);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" x2=\"{x:.2}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"#2ca02c\" stroke-width=\"2\"/>",
            f.py(r.0),
            f.py(r.1)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn read_columns(path: &Path, cols: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = cols
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| Error::InvalidConfig(format!("{} lacks column {c}", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![Vec::new(); cols.len()];
    for rec in rdr.records() {
        let rec = rec?;
        for (k, &i) in idx.iter().enumerate() {
            let v: f64 = rec
                .get(i)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("non-numeric value in {}", path.display())))?;
            out[k].push(v);
        }
    }
    if out[0].is_empty() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(out)
}

pub fn learning_curve_svg(csv_path: &Path) -> Result<String> {
    let c = read_columns(csv_path, &["epoch", "mse"])?;
    let pts: Vec<(f64, f64)> = c[0].iter().copied().zip(c[1].iter().copied()).collect();
    Ok(line_chart("Training MSE", "epoch", "MSE (log10)", &pts, true, None))
}

pub fn boxplot_svg(csv_path: &Path, x_p: Option<f64>, whiskers: (f64, f64)) -> Result<String> {
    let c = read_columns(csv_path, &["p_err", "p_err_stimulus", "p_err_extraneous"])?;
    let groups = [("all", c[0].clone()), ("S1-S4", c[1].clone()), ("Sr", c[2].clone())];
    Ok(boxplot("Monte Carlo P_err", "P_err, %", &groups, whiskers, x_p))
}

pub fn weight_bounds_svg(csv_path: &Path) -> Result<String> {
    let c = read_columns(csv_path, &["low", "high"])?;
    let ranges: Vec<(f64, f64)> = c[0].iter().copied().zip(c[1].iter().copied()).collect();
    Ok(range_chart("Weight error bounds", "error (relative %, or absolute when nominal is 0)", &ranges))
}

pub fn sweep_svg(csv_path: &Path, x_p: Option<f64>) -> Result<String> {
    let c = read_columns(csv_path, &["n_states", "p_err"])?;
    let pts: Vec<(f64, f64)> = c[0].iter().copied().zip(c[1].iter().copied()).collect();
    Ok(line_chart("P_err after rounding to discrete states", "resistance states", "P_err, %", &pts, false, x_p))
}

/// Figure sources relative to a run directory.
pub const LEARNING_CURVE_CSV: &str = "train/learning_curve.csv";
pub const TRIALS_CSV: &str = "analyze/trials.csv";
pub const WEIGHT_BOUNDS_CSV: &str = "analyze/weight_bounds.csv";
pub const SWEEP_CSV: &str = "sweep/sweep.csv";

/// Re-renders every figure whose CSV exists under `run_dir`. Returns the
/// written SVG paths; fails when no source exists at all.
pub fn emit_report(run_dir: &Path, x_p: Option<f64>, whiskers: (f64, f64)) -> Result<Vec<PathBuf>> {
    type Render<'a> = Box<dyn Fn(&Path) -> Result<String> + 'a>;
    let jobs: [(&str, &str, Render); 4] = [
        (LEARNING_CURVE_CSV, "learning_curve.svg", Box::new(learning_curve_svg)),
        (TRIALS_CSV, "boxplot.svg", Box::new(move |p| boxplot_svg(p, x_p, whiskers))),
        (WEIGHT_BOUNDS_CSV, "weight_bounds.svg", Box::new(weight_bounds_svg)),
        (SWEEP_CSV, "sweep.svg", Box::new(move |p| sweep_svg(p, x_p))),
    ];
    let mut written = Vec::new();
    for (src, name, render) in jobs.iter() {
        let src = run_dir.join(src);
        if !src.exists() {
            continue;
        }
        let svg = render(&src)?;
        let dst = src.with_file_name(name);
        std::fs::write(&dst, svg).map_err(|e| Error::io(&dst, e))?;
        written.push(dst);
    }
    if written.is_empty() {
        return Err(Error::MissingArtifact(run_dir.to_path_buf()));
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trials_csv_is_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trials.csv");
        std::fs::write(&p, "trial,p_err,p_err_stimulus,p_err_extraneous\n").unwrap();
        assert!(matches!(boxplot_svg(&p, Some(5.0), (0.05, 99.95)), Err(Error::MissingArtifact(_))));
        assert!(matches!(emit_report(dir.path(), None, (0.05, 99.95)), Err(Error::MissingArtifact(_))));
    }

    #[test]
    fn rendering_is_pure() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("sweep")).unwrap();
        std::fs::write(dir.path().join(SWEEP_CSV), "n_states,p_err\n2,60\n5,8\n9,3\n").unwrap();
        let a = emit_report(dir.path(), Some(5.0), (0.05, 99.95)).unwrap();
        let first = std::fs::read(&a[0]).unwrap();
        emit_report(dir.path(), Some(5.0), (0.05, 99.95)).unwrap();
        assert_eq!(first, std::fs::read(&a[0]).unwrap());
        assert!(String::from_utf8(first).unwrap().starts_with("<svg"));
    }
}
