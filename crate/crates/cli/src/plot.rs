//! Static SVG figures drawn straight from the summary table.

use std::collections::BTreeMap;
use std::fmt::Write;

use catlearn::experiment::SummaryRow;
use catlearn::model::BiasClass;

/// Block-averaged accuracy of one condition with the standard error of that
/// average (blocks are independent participant samples).
#[derive(Debug, Clone, Copy)]
struct CellMean {
    mean: f64,
    se: f64,
}

type Setting = (u64, u64);

fn setting_key(w: f64, s: f64) -> Setting {
    (w.to_bits(), s.to_bits())
}

fn setting_label(key: Setting) -> String {
    format!("w={}, s={}", f64::from_bits(key.0), f64::from_bits(key.1))
}

fn setting_slug(key: Setting) -> String {
    format!("w{}_s{}", f64::from_bits(key.0), f64::from_bits(key.1))
}

fn block_averages(rows: &[SummaryRow]) -> BTreeMap<Setting, BTreeMap<(BiasClass, BiasClass), CellMean>> {
    let mut acc: BTreeMap<Setting, BTreeMap<(BiasClass, BiasClass), Vec<&SummaryRow>>> = BTreeMap::new();
    for r in rows {
        acc.entry(setting_key(r.w, r.s))
            .or_default()
            .entry((r.domain_bias, r.label_bias))
            .or_default()
            .push(r);
    }
    acc.into_iter()
        .map(|(k, cells)| {
            let cells = cells
                .into_iter()
                .map(|(c, blocks)| {
                    let n = blocks.len() as f64;
                    let mean = blocks.iter().map(|b| b.mean_accuracy).sum::<f64>() / n;
                    let se = blocks.iter().map(|b| b.se * b.se).sum::<f64>().sqrt() / n;
                    (c, CellMean { mean, se })
                })
                .collect();
            (k, cells)
        })
        .collect()
}

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{title}</text>"#,
        width / 2.0
    );
}

/// White-to-blue ramp.
fn shade(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(247.0, 8.0), lerp(251.0, 69.0), lerp(255.0, 148.0))
}

fn heatmap(key: Setting, cells: &BTreeMap<(BiasClass, BiasClass), CellMean>, lo: f64, hi: f64) -> String {
    let (cell, left, top) = (90.0, 110.0, 60.0);
    let mut out = String::new();
    header(&mut out, left + 3.0 * cell + 30.0, top + 3.0 * cell + 60.0, &format!("Block-averaged accuracy ({})", setting_label(key)));
    let span = (hi - lo).max(1e-9);
    for (i, d) in BiasClass::ALL.into_iter().enumerate() {
        let y = top + i as f64 * cell;
        let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="end">{d}</text>"#, left - 8.0, y + cell / 2.0 + 4.0);
        for (j, l) in BiasClass::ALL.into_iter().enumerate() {
            let x = left + j as f64 * cell;
            if i == 0 {
                let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="middle">{l}</text>"#, x + cell / 2.0, top + 3.0 * cell + 18.0);
            }
            match cells.get(&(d, l)) {
                Some(c) => {
                    let t = (c.mean - lo) / span;
                    let ink = if t > 0.55 { "white" } else { "black" };
                    let _ = write!(
                        out,
                        r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}" stroke="white"/><text x="{}" y="{}" text-anchor="middle" fill="{ink}">{:.3}</text>"#,
                        shade(t),
                        x + cell / 2.0,
                        y + cell / 2.0 + 4.0,
                        c.mean
                    );
                }
                None => {
                    let _ = write!(out, r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="#dddddd" stroke="white"/>"##);
                }
            }
        }
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">label bias</text><text x="20" y="{}" transform="rotate(-90 20 {})" text-anchor="middle">domain bias</text>"#,
        left + 1.5 * cell,
        top + 3.0 * cell + 42.0,
        top + 1.5 * cell,
        top + 1.5 * cell
    );
    out.push_str("</svg>\n");
    out
}

const SERIES_COLORS: [&str; 3] = ["#1b9e77", "#7570b3", "#d95f02"];

fn y_axis(out: &mut String, x0: f64, y_of: &dyn Fn(f64) -> f64, lo: f64, hi: f64) {
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y_of(v);
        let _ = write!(
            out,
            r#"<line x1="{x0}" x2="{}" y1="{y}" y2="{y}" stroke="black"/><text x="{}" y="{}" text-anchor="end" font-size="10">{v:.3}</text>"#,
            x0 - 4.0,
            x0 - 6.0,
            y + 3.0
        );
    }
}

fn value_range(means: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (m, se) in means {
        lo = lo.min(m - se);
        hi = hi.max(m + se);
    }
    let pad = ((hi - lo) * 0.1).max(0.005);
    ((lo - pad).max(0.0), (hi + pad).min(1.0))
}

/// One panel per setting: accuracy against label bias, one line per domain bias.
fn interaction(all: &BTreeMap<Setting, BTreeMap<(BiasClass, BiasClass), CellMean>>) -> String {
    let (pw, ph, left, top, gap) = (260.0, 240.0, 70.0, 60.0, 40.0);
    let n = all.len() as f64;
    let mut out = String::new();
    header(&mut out, left + n * (pw + gap) + 40.0, top + ph + 90.0, "Label x domain interaction (block-averaged accuracy)");
    let (lo, hi) = value_range(all.values().flat_map(|c| c.values().map(|m| (m.mean, 0.0))));
    let y_of = |v: f64| top + ph - (v - lo) / (hi - lo) * ph;
    for (p, (key, cells)) in all.iter().enumerate() {
        let x0 = left + p as f64 * (pw + gap);
        let x_of = |j: usize| x0 + 30.0 + j as f64 * (pw - 60.0) / 2.0;
        let _ = write!(
            out,
            r#"<rect x="{x0}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/><text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + pw / 2.0,
            top - 8.0,
            setting_label(*key)
        );
        y_axis(&mut out, x0, &y_of, lo, hi);
        for (j, l) in BiasClass::ALL.into_iter().enumerate() {
            let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="middle">{l}</text>"#, x_of(j), top + ph + 16.0);
        }
        for (s, d) in BiasClass::ALL.into_iter().enumerate() {
            let points: Vec<(f64, f64, f64)> = BiasClass::ALL
                .into_iter()
                .enumerate()
                .filter_map(|(j, l)| cells.get(&(d, l)).map(|c| (x_of(j), y_of(c.mean), c.mean)))
                .collect();
            let path: Vec<String> = points.iter().map(|(x, y, _)| format!("{x:.2},{y:.2}")).collect();
            let _ = write!(out, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#, path.join(" "), SERIES_COLORS[s]);
            for (x, y, v) in points {
                let _ = write!(
                    out,
                    r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{}"/><text x="{:.2}" y="{:.2}" font-size="9" fill="{}">{v:.3}</text>"#,
                    SERIES_COLORS[s],
                    x + 5.0,
                    y - 5.0,
                    SERIES_COLORS[s]
                );
            }
        }
    }
    let ly = top + ph + 45.0;
    let _ = write!(out, r#"<text x="{left}" y="{ly}">domain bias:</text>"#);
    for (s, d) in BiasClass::ALL.into_iter().enumerate() {
        let x = left + 100.0 + s as f64 * 90.0;
        let _ = write!(
            out,
            r#"<line x1="{x}" x2="{}" y1="{}" y2="{}" stroke="{}" stroke-width="2"/><text x="{}" y="{ly}">{d}</text>"#,
            x + 20.0,
            ly - 4.0,
            ly - 4.0,
            SERIES_COLORS[s],
            x + 25.0
        );
    }
    let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="middle">label bias</text>"#, left + n * (pw + gap) / 2.0, top + ph + 70.0);
    out.push_str("</svg>\n");
    out
}

/// Every condition's block-averaged accuracy with a one-SE bar.
fn dot_plot(all: &BTreeMap<Setting, BTreeMap<(BiasClass, BiasClass), CellMean>>) -> String {
    let rows: Vec<(String, CellMean)> = all
        .iter()
        .flat_map(|(key, cells)| {
            cells
                .iter()
                .map(move |((d, l), c)| (format!("{} | domain {d}, label {l}", setting_label(*key)), *c))
        })
        .collect();
    let (left, top, row_h, pw) = (250.0, 50.0, 20.0, 380.0);
    let mut out = String::new();
    header(&mut out, left + pw + 90.0, top + rows.len() as f64 * row_h + 50.0, "Accuracy by condition (mean ± 1 SE)");
    let (lo, hi) = value_range(rows.iter().map(|(_, c)| (c.mean, c.se)));
    let x_of = |v: f64| left + (v - lo) / (hi - lo) * pw;
    let bottom = top + rows.len() as f64 * row_h;
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let x = x_of(v);
        let _ = write!(
            out,
            r##"<line x1="{x:.2}" x2="{x:.2}" y1="{top}" y2="{bottom}" stroke="#e0e0e0"/><text x="{x:.2}" y="{}" text-anchor="middle" font-size="10">{v:.3}</text>"##,
            bottom + 14.0
        );
    }
    for (i, (name, c)) in rows.iter().enumerate() {
        let y = top + (i as f64 + 0.5) * row_h;
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{name}</text><line x1="{:.2}" x2="{:.2}" y1="{y}" y2="{y}" stroke="black"/><circle cx="{:.2}" cy="{y}" r="3.5" fill="{}"/><text x="{}" y="{}" font-size="10">{:.3}</text>"#,
            left - 8.0,
            y + 3.0,
            x_of(c.mean - c.se),
            x_of(c.mean + c.se),
            x_of(c.mean),
            SERIES_COLORS[1],
            left + pw + 10.0,
            y + 3.0,
            c.mean
        );
    }
    let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="middle">accuracy</text>"#, left + pw / 2.0, bottom + 34.0);
    out.push_str("</svg>\n");
    out
}

/// Renders one heatmap per `(w, s)` setting, the interaction plot and the
/// dot plot, as `(file name, svg)` pairs.
pub fn render_all(rows: &[SummaryRow]) -> Result<Vec<(String, String)>, String> {
    if rows.is_empty() {
        return Err("summary has no rows to plot".into());
    }
    let all = block_averages(rows);
    let (lo, hi) = value_range(all.values().flat_map(|c| c.values().map(|m| (m.mean, 0.0))));
    let mut out: Vec<(String, String)> = all
        .iter()
        .map(|(key, cells)| (format!("heatmap_{}.svg", setting_slug(*key)), heatmap(*key, cells, lo, hi)))
        .collect();
    out.push(("interaction.svg".into(), interaction(&all)));
    out.push(("dotplot.svg".into(), dot_plot(&all)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for (w, s) in [(0.2, 0.0), (0.5, 0.0)] {
            for d in BiasClass::ALL {
                for l in BiasClass::ALL {
                    for block in 1..=2 {
                        out.push(SummaryRow {
                            domain_bias: d,
                            label_bias: l,
                            w,
                            s,
                            block,
                            mean_accuracy: 0.8 + 0.05 * block as f64 - 0.01 * (d as usize + l as usize) as f64,
                            se: 0.01,
                            n: 75,
                        });
                    }
                }
            }
        }
        out
    }

    #[test]
    fn block_average_and_se() {
        let avg = block_averages(&rows());
        let c = avg[&setting_key(0.2, 0.0)][&(BiasClass::Right, BiasClass::Right)];
        assert!((c.mean - 0.875).abs() < 1e-12);
        assert!((c.se - 0.01 * 2f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn file_set_and_labels() {
        let files = render_all(&rows()).unwrap();
        let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["heatmap_w0.2_s0.svg", "heatmap_w0.5_s0.svg", "interaction.svg", "dotplot.svg"]);
        assert!(files[0].1.contains(">0.875<"));
        assert!(render_all(&[]).is_err());
    }
}
