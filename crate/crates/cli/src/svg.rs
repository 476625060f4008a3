//! Self-contained SVG boxplots of replication estimates.

use std::fmt::Write;

use ivnnt_core::harness::{IndexStatus, StudySummary};
use ivnnt_core::Index;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 70.0;
const BOTTOM: f64 = 60.0;
const IV_COLOR: &str = "#d62728";
const BASELINE_COLOR: &str = "#1f77b4";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartiles and 1.5·IQR whiskers; `None` for empty input.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let fence = 1.5 * (q3 - q1);
    let whisker_low = v.iter().copied().find(|&x| x >= q1 - fence).unwrap_or(q1);
    let whisker_high = v.iter().rev().copied().find(|&x| x <= q3 + fence).unwrap_or(q3);
    Some(BoxStats { q1, median, q3, whisker_low, whisker_high })
}

pub struct Group {
    pub n: usize,
    pub method: &'static str,
    pub finite: Vec<f64>,
    pub infinite: usize,
}

pub fn groups_for(summary: &StudySummary, idx: Index) -> Vec<Group> {
    let mut sizes: Vec<usize> = summary.records.iter().map(|r| r.n).collect();
    sizes.dedup();
    let mut out = Vec::new();
    for n in sizes {
        let recs = || summary.records.iter().filter(move |r| r.n == n);
        let iv: Vec<_> = recs().map(|r| *r.iv.get(idx)).collect();
        out.push(Group {
            n,
            method: "iv",
            finite: iv.iter().filter(|o| o.status == IndexStatus::Estimated).map(|o| o.estimate).collect(),
            infinite: iv.iter().filter(|o| o.status == IndexStatus::Infinite).count(),
        });
        let base: Vec<f64> = recs().map(|r| *r.baseline.get(idx)).filter(|b| !b.is_nan()).collect();
        out.push(Group {
            n,
            method: "baseline",
            finite: base.iter().copied().filter(|b| b.is_finite()).collect(),
            infinite: base.iter().filter(|b| b.is_infinite()).count(),
        });
    }
    out
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    mag * if r < 1.5 {
        1.0
    } else if r < 3.5 {
        2.0
    } else if r < 7.5 {
        5.0
    } else {
        10.0
    }
}

/// Boxes grouped by sample size, IV in red and baseline in blue, with the
/// truth as a dashed line. Infinite estimates are counted above each box;
/// finite outliers beyond the plotted range are counted at the panel edge.
pub fn boxplot(idx: Index, truth: f64, groups: &[Group]) -> String {
    let stats: Vec<Option<BoxStats>> = groups.iter().map(|g| box_stats(&g.finite)).collect();
    let (mut lo, mut hi) = if truth.is_finite() { (truth, truth) } else { (f64::INFINITY, f64::NEG_INFINITY) };
    for s in stats.iter().flatten() {
        lo = lo.min(s.whisker_low);
        hi = hi.max(s.whisker_high);
    }
    if lo > hi {
        (lo, hi) = (0.0, 1.0);
    } else if lo == hi {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_h = HEIGHT - TOP - BOTTOM;
    let plot_w = WIDTH - LEFT - RIGHT;
    let y = |v: f64| TOP + (hi - v) / (hi - lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{idx} estimates by sample size</text>"#, WIDTH / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    let step = nice_step(hi - lo);
    let mut tick = (lo / step).ceil() * step;
    while tick <= hi {
        let ty = y(tick);
        let _ = writeln!(s, r##"<line x1="{}" y1="{ty:.2}" x2="{LEFT}" y2="{ty:.2}" stroke="black"/>"##, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, ty + 4.0, format_tick(tick, step));
        tick += step;
    }
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{idx}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    let slot = plot_w / groups.len().max(1) as f64;
    let box_w = slot * 0.6;
    for (k, (g, st)) in groups.iter().zip(&stats).enumerate() {
        let cx = LEFT + slot * (k as f64 + 0.5);
        let color = if g.method == "iv" { IV_COLOR } else { BASELINE_COLOR };
        let _ = writeln!(s, r#"<g class="box" data-n="{}" data-method="{}">"#, g.n, g.method);
        if let Some(b) = st {
            let (x0, x1) = (cx - box_w / 2.0, cx + box_w / 2.0);
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{color}"/>"#,
                y(b.whisker_high),
                y(b.whisker_low)
            );
            for w in [b.whisker_low, b.whisker_high] {
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}"/>"#,
                    cx - box_w / 4.0,
                    y(w),
                    cx + box_w / 4.0,
                    y(w)
                );
            }
            let _ = writeln!(
                s,
                r#"<rect x="{x0:.2}" y="{:.2}" width="{box_w:.2}" height="{:.2}" fill="{color}" fill-opacity="0.25" stroke="{color}"/>"#,
                y(b.q3),
                (y(b.q1) - y(b.q3)).max(0.5)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{x0:.2}" y1="{:.2}" x2="{x1:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
                y(b.median),
                y(b.median)
            );
            let mut clipped = 0;
            for &v in &g.finite {
                if v < b.whisker_low || v > b.whisker_high {
                    if (lo..=hi).contains(&v) {
                        let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="1.6" fill="none" stroke="{color}"/>"#, y(v));
                    } else {
                        clipped += 1;
                    }
                }
            }
            if clipped > 0 {
                let _ = writeln!(s, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10" fill="{color}">+{clipped} off scale</text>"#, TOP + 12.0);
            }
        }
        if g.infinite > 0 {
            let _ = writeln!(s, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10" fill="{color}">∞ ×{}</text>"#, TOP - 8.0, g.infinite);
        }
        let _ = writeln!(s, "</g>");
    }

    let mut sizes: Vec<usize> = groups.iter().map(|g| g.n).collect();
    sizes.dedup();
    let per_n = groups.len() as f64 / sizes.len().max(1) as f64;
    for (k, n) in sizes.iter().enumerate() {
        let cx = LEFT + slot * per_n * (k as f64 + 0.5);
        let _ = writeln!(s, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">n = {n}</text>"#, HEIGHT - BOTTOM + 20.0);
    }

    if truth.is_finite() {
        let ty = y(truth);
        let _ = writeln!(
            s,
            r#"<line class="truth" x1="{LEFT}" y1="{ty:.2}" x2="{}" y2="{ty:.2}" stroke="{IV_COLOR}" stroke-width="1.5" stroke-dasharray="6 4"/>"#,
            WIDTH - RIGHT
        );
    }

    let ly = HEIGHT - 18.0;
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{:.2}" width="12" height="12" fill="{IV_COLOR}" fill-opacity="0.25" stroke="{IV_COLOR}"/>"#, ly - 10.0);
    let _ = writeln!(s, r#"<text x="{}" y="{ly:.2}">IV-based (G-estimation)</text>"#, LEFT + 18.0);
    let _ = writeln!(s, r#"<rect x="{}" y="{:.2}" width="12" height="12" fill="{BASELINE_COLOR}" fill-opacity="0.25" stroke="{BASELINE_COLOR}"/>"#, LEFT + 200.0, ly - 10.0);
    let _ = writeln!(s, r#"<text x="{}" y="{ly:.2}">unadjusted</text>"#, LEFT + 218.0);
    let _ = writeln!(s, r#"<line x1="{}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="{IV_COLOR}" stroke-dasharray="6 4"/>"#, LEFT + 320.0, ly - 4.0, LEFT + 350.0, ly - 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{ly:.2}">true {idx} = {truth:.3}</text>"#, LEFT + 356.0);
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_and_whiskers() {
        let v: Vec<f64> = (1..=9).map(f64::from).chain([100.0]).collect();
        let b = box_stats(&v).unwrap();
        assert_eq!(b.median, 5.5);
        assert_eq!(b.q1, 3.25);
        assert_eq!(b.q3, 7.75);
        assert_eq!(b.whisker_low, 1.0);
        assert_eq!(b.whisker_high, 9.0);
        assert!(box_stats(&[]).is_none());
    }

    #[test]
    fn one_box_per_group_and_a_dashed_truth() {
        let groups = vec![
            Group { n: 500, method: "iv", finite: vec![3.0, 4.0, 5.0], infinite: 1 },
            Group { n: 500, method: "baseline", finite: vec![], infinite: 3 },
        ];
        let svg = boxplot(Index::Nnt, 4.65, &groups);
        assert_eq!(svg.matches(r#"<g class="box""#).count(), 2);
        assert!(svg.contains(r#"class="truth""#) && svg.contains("stroke-dasharray"));
        assert!(svg.contains("∞ ×3"));
        assert!(!svg.contains("href"));
    }
}
