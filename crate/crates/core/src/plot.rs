//! Minimal SVG output: embedding scatter plots with trajectory polylines and
//! log-log squared-displacement plots. Numbers are printed with fixed
//! precision so the files are byte-stable across runs.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::matrix::ModelMeta;
use crate::scaling::ScalingFit;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];
const MIN_STROKE: f64 = 0.5;
const MAX_STROKE: f64 = 6.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Option<Self> {
        let (mut x, mut y) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for (px, py) in points {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
        if !x.0.is_finite() || !y.0.is_finite() {
            return None;
        }
        let pad = |(lo, hi): (f64, f64)| {
            let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        Some(Self { x: pad(x), y: pad(y) })
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{:.1}" height="{:.1}" fill="none" stroke="black" stroke-width="1"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Scatter of the first two embedding coordinates. Models sharing a group
/// and carrying steps are joined in step order. When `segment_kl` is given
/// (keyed by `(from_id, to_id)`), each segment's stroke width scales with
/// its KL.
pub fn embedding_svg(
    emb: &Embedding,
    models: &[ModelMeta],
    segment_kl: Option<&BTreeMap<(String, String), f64>>,
    title: &str,
) -> Result<String> {
    if emb.n_points != models.len() {
        return Err(Error::Dimension(format!(
            "{} embedded points for {} models",
            emb.n_points,
            models.len()
        )));
    }
    if emb.dim < 2 {
        return Err(Error::InvalidArgument(
            "scatter plot needs at least two embedding dimensions".into(),
        ));
    }
    let xy = |i: usize| (emb.point(i)[0], emb.point(i)[1]);
    let frame = Frame::fit((0..emb.n_points).map(xy))
        .ok_or_else(|| Error::Numerical("embedding has no finite points".into()))?;

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, m) in models.iter().enumerate() {
        groups.entry(m.group.as_deref().unwrap_or("")).or_default().push(i);
    }
    let kl_max = segment_kl
        .map(|m| m.values().copied().fold(0.0f64, f64::max))
        .unwrap_or(0.0);

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "dim 1", "dim 2");
    for (g, (name, rows)) in groups.iter().enumerate() {
        let color = PALETTE[g % PALETTE.len()];
        let mut path: Vec<usize> = rows.iter().copied().filter(|&i| models[i].step.is_some()).collect();
        path.sort_by_key(|&i| (models[i].step, i));
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            let width = match segment_kl {
                Some(map) if kl_max > 0.0 => {
                    let key = (models[a].model_id.clone(), models[b].model_id.clone());
                    map.get(&key)
                        .map(|v| MIN_STROKE + (MAX_STROKE - MIN_STROKE) * v / kl_max)
                        .unwrap_or(MIN_STROKE)
                }
                _ => 1.0,
            };
            let ((x0, y0), (x1, y1)) = (xy(a), xy(b));
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="{width:.3}" stroke-opacity="0.7"/>"#,
                frame.px(x0),
                frame.py(y0),
                frame.px(x1),
                frame.py(y1)
            );
        }
        for &i in rows {
            let (x, y) = xy(i);
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"><title>{}</title></circle>"#,
                frame.px(x),
                frame.py(y),
                escape(&models[i].model_id)
            );
        }
        if !name.is_empty() {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
                WIDTH - MARGIN - 116.0,
                MARGIN + 14.0 * (g as f64 + 1.0),
                escape(name)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// One series of `(lag, squared displacement)` pairs with an optional fit
/// drawn as a line.
pub struct DisplacementSeries<'a> {
    pub label: &'a str,
    pub pairs: &'a [(f64, f64)],
    pub fit: Option<&'a ScalingFit>,
}

/// Log-log plot of squared displacement against lag. Non-positive values
/// cannot be placed on log axes and are left out.
pub fn displacement_svg(series: &[DisplacementSeries<'_>], title: &str) -> Result<String> {
    let logged: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.pairs
                .iter()
                .filter(|(l, d)| *l > 0.0 && *d > 0.0)
                .map(|(l, d)| (l.log10(), d.log10()))
                .collect()
        })
        .collect();
    let frame = Frame::fit(logged.iter().flatten().copied())
        .ok_or_else(|| Error::InvalidArgument("no positive displacement values to plot".into()))?;

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "log10 lag", "log10 squared displacement");
    for (g, (s, pts)) in series.iter().zip(&logged).enumerate() {
        let color = PALETTE[g % PALETTE.len()];
        for &(x, y) in pts {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                frame.px(x),
                frame.py(y)
            );
        }
        if let (Some(fit), Some(first), Some(last)) = (s.fit, pts.first(), pts.last()) {
            // log10 y = (ln A + c ln lag) / ln 10
            let line = |x: f64| (fit.log_intercept + fit.c * x * std::f64::consts::LN_10) / std::f64::consts::LN_10;
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.5"/>"#,
                frame.px(first.0),
                frame.py(line(first.0)),
                frame.px(last.0),
                frame.py(line(last.0))
            );
        }
        let label = match s.fit {
            Some(fit) => format!("{} (c = {:.3}, R2 = {:.3})", s.label, fit.c, fit.r_squared),
            None => s.label.to_string(),
        };
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            MARGIN + 6.0,
            MARGIN + 14.0 * (g as f64 + 1.0),
            escape(&label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
