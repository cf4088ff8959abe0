//! SVG plots, each paired with the CSV data it draws.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::analysis::{
    convergence_csv, fingerprint, fingerprint_csv, parse_partition_csv, partition_by_density,
    task_phi, FINGERPRINT_AXES,
};
use crate::error::{Error, Result};
use crate::metrics::{parse_metrics_csv, MetricsRow};
use crate::types::Partition;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn colour(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open_svg(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, y_max: f64, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = y0 - (y0 - y1) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y:.2}" text-anchor="end">{v:.3}</text>"#,
            x0 - 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, n) in names.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let x = W - MARGIN - 110.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/>"#,
            y - 9.0,
            colour(i)
        );
        let _ = writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, x + 14.0, escape(n));
    }
}

fn nice_max(v: f64) -> f64 {
    if v > 0.0 {
        v * 1.1
    } else {
        1.0
    }
}

/// Mean best-so-far curves, one polyline per agent.
pub fn convergence_svg(curves: &BTreeMap<String, Vec<f64>>) -> String {
    let mut s = open_svg("Mean best-so-far normalized validation improvement");
    let t = curves.values().map(Vec::len).max().unwrap_or(0).max(1);
    let y_max = nice_max(curves.values().flatten().copied().fold(0.0, f64::max));
    axes(&mut s, y_max, "step", "best-so-far improvement");
    let px = |i: usize| MARGIN + (W - 2.0 * MARGIN) * (i as f64 + 1.0) / t as f64;
    let py = |v: f64| H - MARGIN - (H - 2.0 * MARGIN) * v / y_max;
    for (k, c) in curves.values().enumerate() {
        let pts: Vec<String> = c
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", px(i), py(*v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            colour(k),
            pts.join(" ")
        );
    }
    let names: Vec<&str> = curves.keys().map(String::as_str).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

/// Mean final score per agent within each partition. Missing cells are `None`.
pub fn partition_means(
    rows: &[MetricsRow],
    partition: &BTreeMap<String, Partition>,
) -> BTreeMap<String, [Option<f64>; 2]> {
    let mut acc: BTreeMap<String, [(f64, usize); 2]> = BTreeMap::new();
    for r in rows {
        let Some(p) = partition.get(&r.task_id) else {
            continue;
        };
        let k = match p {
            Partition::Dense => 0,
            Partition::Sparse => 1,
        };
        let e = acc.entry(r.agent_id.clone()).or_default();
        e[k].0 += r.normalized_test;
        e[k].1 += 1;
    }
    acc.into_iter()
        .map(|(a, cells)| (a, cells.map(|(s, n)| (n > 0).then(|| s / n as f64))))
        .collect()
}

pub fn partition_means_csv(means: &BTreeMap<String, [Option<f64>; 2]>) -> String {
    let mut out = String::from("agent,dense,sparse\n");
    for (a, [d, sp]) in means {
        let f = |v: &Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let _ = writeln!(out, "{a},{},{}", f(d), f(sp));
    }
    out
}

/// Grouped bars: dense and sparse mean per agent.
pub fn partition_bars_svg(means: &BTreeMap<String, [Option<f64>; 2]>) -> String {
    let mut s = open_svg("Mean normalized test improvement by density partition");
    let y_max = nice_max(
        means
            .values()
            .flatten()
            .flatten()
            .copied()
            .fold(0.0, f64::max),
    );
    axes(&mut s, y_max, "agent", "normalized improvement");
    let n = means.len().max(1) as f64;
    let group = (W - 2.0 * MARGIN) / n;
    let bar = group * 0.35;
    for (i, (a, cells)) in means.iter().enumerate() {
        let gx = MARGIN + group * i as f64 + group * 0.15;
        for (k, v) in cells.iter().enumerate() {
            let v = v.unwrap_or(0.0);
            let h = (H - 2.0 * MARGIN) * v / y_max;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{bar:.2}" height="{h:.2}" fill="{}"/>"#,
                gx + bar * k as f64,
                H - MARGIN - h,
                colour(k)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            gx + bar,
            H - MARGIN + 14.0,
            escape(a)
        );
    }
    legend(&mut s, &["dense", "sparse"]);
    s.push_str("</svg>\n");
    s
}

/// Radar chart of the six fingerprint axes.
pub fn fingerprint_svg(fp: &BTreeMap<String, [f64; 6]>) -> String {
    let mut s = open_svg("Search-process fingerprint");
    let (cx, cy, r) = (W / 2.0 - 60.0, H / 2.0 + 10.0, H / 2.0 - MARGIN);
    let point = |k: usize, v: f64| {
        let th = std::f64::consts::TAU * k as f64 / 6.0 - std::f64::consts::FRAC_PI_2;
        (cx + r * v * th.cos(), cy + r * v * th.sin())
    };
    for (k, (name, _, _)) in FINGERPRINT_AXES.iter().enumerate() {
        let (x, y) = point(k, 1.0);
        let (lx, ly) = point(k, 1.12);
        let _ = writeln!(
            s,
            r##"<line x1="{cx}" y1="{cy}" x2="{x:.2}" y2="{y:.2}" stroke="#bbb"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle">{name}</text>"#
        );
    }
    for (i, scores) in fp.values().enumerate() {
        let pts: Vec<String> = scores
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let (x, y) = point(k, *v);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon fill="{c}" fill-opacity="0.15" stroke="{c}" points="{}"/>"#,
            pts.join(" "),
            c = colour(i)
        );
    }
    let names: Vec<&str> = fp.keys().map(String::as_str).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

/// Parses a convergence table back into per-agent curves.
pub fn parse_convergence_csv(text: &str) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty convergence table".into(),
        })?
        .split(',')
        .collect();
    if header.first() != Some(&"step") {
        return Err(Error::Parse {
            line: 1,
            message: "expected a `step` column first".into(),
        });
    }
    let mut curves: Vec<Vec<f64>> = vec![Vec::new(); header.len() - 1];
    for (i, l) in lines.enumerate() {
        let cells: Vec<&str> = l.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::Parse {
                line: i + 2,
                message: "wrong column count".into(),
            });
        }
        for (k, c) in cells[1..].iter().enumerate() {
            let v = c.parse().map_err(|_| Error::Parse {
                line: i + 2,
                message: format!("bad value `{c}`"),
            })?;
            curves[k].push(v);
        }
    }
    Ok(header[1..]
        .iter()
        .map(|h| h.to_string())
        .zip(curves)
        .collect())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Renders every plot from an analysis directory. Returns the files written.
pub fn write_report(analysis_dir: &Path, out_dir: &Path) -> Result<Vec<String>> {
    let rows = parse_metrics_csv(&read(&analysis_dir.join("metrics.csv"))?)?;
    let curves = parse_convergence_csv(&read(&analysis_dir.join("convergence.csv"))?)?;
    let partition_path = analysis_dir.join("partition.csv");
    let partition: BTreeMap<String, Partition> = if partition_path.exists() {
        parse_partition_csv(&read(&partition_path)?)?
            .into_iter()
            .map(|(t, (_, p))| (t, p))
            .collect()
    } else if rows.is_empty() {
        BTreeMap::new()
    } else {
        partition_by_density(&task_phi(&rows))?
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let fp = fingerprint(&rows);
    let means = partition_means(&rows, &partition);
    let files = [
        ("convergence.svg", convergence_svg(&curves)),
        ("convergence_data.csv", convergence_csv(&curves)),
        ("partition_bars.svg", partition_bars_svg(&means)),
        ("partition_bars_data.csv", partition_means_csv(&means)),
        ("fingerprint.svg", fingerprint_svg(&fp)),
        ("fingerprint_data.csv", fingerprint_csv(&fp)),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        write(&out_dir.join(name), &text)?;
        written.push(name.to_string());
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_round_trip() {
        let curves: BTreeMap<String, Vec<f64>> = [
            ("a".to_string(), vec![0.0, 0.1]),
            ("b".to_string(), vec![0.2, 0.2]),
        ]
        .into();
        assert_eq!(
            parse_convergence_csv(&convergence_csv(&curves)).unwrap(),
            curves
        );
    }

    #[test]
    fn svgs_are_well_formed_enough() {
        let curves: BTreeMap<String, Vec<f64>> = [("a<b".to_string(), vec![0.2; 5])].into();
        let svg = convergence_svg(&curves);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
        let fp: BTreeMap<String, [f64; 6]> = [("a".to_string(), [0.5; 6])].into();
        assert_eq!(fingerprint_svg(&fp).matches("<polygon").count(), 1);
    }
}
