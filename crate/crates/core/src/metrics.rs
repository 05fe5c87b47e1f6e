//! Saliency evaluation: 256-threshold PR curves, max-Fβ, MAE and AUC.

use std::fmt::Write as _;

use log::warn;

use crate::error::{Error, Result};
use crate::plane::{Plane, SaliencyMap};

pub const THRESHOLDS: usize = 256;
pub const BETA_SQ: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
}

/// Per-image or dataset-level evaluation. `pr_points[t]` is the pair for
/// threshold `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub pr_points: Vec<PrPoint>,
    pub f_beta: f64,
    pub mae: f64,
    pub auc: f64,
}

/// Min-max rescale to `0..=255` with rounding; constant maps become all 0.
pub fn normalize_map(map: &SaliencyMap) -> Plane<u8> {
    let (lo, hi) = map
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if map.is_empty() || hi <= lo {
        return map.map(|_| 0);
    }
    let span = hi - lo;
    map.map(|&v| (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8)
}

/// Confusion counts `(tp, fp, fn)` per threshold with binarisation `v >= t`.
pub fn confusion_counts(norm: &Plane<u8>, gt: &Plane<bool>) -> Result<Vec<(u64, u64, u64)>> {
    if norm.dims() != gt.dims() {
        return Err(Error::shape("map vs ground truth", gt.dims(), norm.dims()));
    }
    let mut pos = [0u64; THRESHOLDS];
    let mut neg = [0u64; THRESHOLDS];
    for (&v, &g) in norm.data().iter().zip(gt.data()) {
        if g {
            pos[v as usize] += 1;
        } else {
            neg[v as usize] += 1;
        }
    }
    let total_pos: u64 = pos.iter().sum();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut out = vec![(0, 0, 0); THRESHOLDS];
    for t in (0..THRESHOLDS).rev() {
        tp += pos[t];
        fp += neg[t];
        out[t] = (tp, fp, total_pos - tp);
    }
    Ok(out)
}

/// Fails on an empty ground truth, for which recall is undefined.
pub fn pr_curve(norm: &Plane<u8>, gt: &Plane<bool>) -> Result<Vec<PrPoint>> {
    let counts = confusion_counts(norm, gt)?;
    if counts[0].0 + counts[0].2 == 0 {
        return Err(Error::InvalidArgument("ground truth has no salient pixel".into()));
    }
    Ok(counts
        .iter()
        .map(|&(tp, fp, fn_)| PrPoint {
            precision: if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 },
            recall: tp as f64 / (tp + fn_) as f64,
        })
        .collect())
}

pub fn f_beta(p: PrPoint, beta_sq: f64) -> f64 {
    let den = beta_sq * p.precision + p.recall;
    if den <= 0.0 {
        0.0
    } else {
        (1.0 + beta_sq) * p.precision * p.recall / den
    }
}

/// Maximum Fβ over the curve.
pub fn f_measure(points: &[PrPoint], beta_sq: f64) -> f64 {
    points.iter().map(|&p| f_beta(p, beta_sq)).fold(0.0, f64::max)
}

/// Mean absolute error on a map already in `[0, 1]`.
pub fn mae(map: &SaliencyMap, gt: &Plane<bool>) -> Result<f64> {
    if map.dims() != gt.dims() {
        return Err(Error::shape("map vs ground truth", gt.dims(), map.dims()));
    }
    if map.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = map
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&v, &g)| (v - if g { 1.0 } else { 0.0 }).abs())
        .sum();
    Ok(s / map.len() as f64)
}

/// Trapezoidal area under precision over recall.
///
/// Points are sorted by recall ascending (precision descending on ties). When
/// the curve starts above recall 0 it is extended flat to recall 0.
pub fn auc(points: &[PrPoint]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.recall.total_cmp(&b.recall).then(b.precision.total_cmp(&a.precision)));
    if pts[0].recall > 0.0 {
        pts.insert(0, PrPoint { precision: pts[0].precision, recall: 0.0 });
    }
    let area: f64 = pts
        .windows(2)
        .map(|w| (w[1].recall - w[0].recall) * (w[0].precision + w[1].precision) / 2.0)
        .sum();
    area.clamp(0.0, 1.0)
}

/// Full evaluation of one map. `None` (with a warning) when the ground truth
/// is empty.
pub fn evaluate(map: &SaliencyMap, gt: &Plane<bool>) -> Result<Option<EvalReport>> {
    let norm = normalize_map(map);
    let pr_points = match pr_curve(&norm, gt) {
        Ok(p) => p,
        Err(Error::InvalidArgument(_)) => {
            warn!("empty ground truth, image excluded from evaluation");
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    Ok(Some(EvalReport {
        f_beta: f_measure(&pr_points, BETA_SQ),
        auc: auc(&pr_points),
        mae: mae(map, gt)?,
        pr_points,
    }))
}

/// Pointwise mean of the curves; Fβ and AUC are recomputed on the mean curve and
/// MAE is averaged.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
    let Some(first) = reports.first() else {
        return Err(Error::InvalidArgument("aggregate over zero reports".into()));
    };
    let len = first.pr_points.len();
    if reports.iter().any(|r| r.pr_points.len() != len) {
        return Err(Error::InvalidArgument("PR curves of different lengths".into()));
    }
    let n = reports.len() as f64;
    let pr_points: Vec<PrPoint> = (0..len)
        .map(|t| {
            let (p, r) = reports
                .iter()
                .fold((0.0, 0.0), |(p, r), rep| (p + rep.pr_points[t].precision, r + rep.pr_points[t].recall));
            PrPoint { precision: p / n, recall: r / n }
        })
        .collect();
    Ok(EvalReport {
        f_beta: f_measure(&pr_points, BETA_SQ),
        auc: auc(&pr_points),
        mae: reports.iter().map(|r| r.mae).sum::<f64>() / n,
        pr_points,
    })
}

/// `id,f_beta,mae,auc` rows followed by a `dataset` summary row.
pub fn reports_csv(rows: &[(String, EvalReport)], summary: Option<&EvalReport>) -> String {
    let mut s = String::from("id,f_beta,mae,auc\n");
    for (id, r) in rows {
        let _ = writeln!(s, "{id},{:.6},{:.6},{:.6}", r.f_beta, r.mae, r.auc);
    }
    if let Some(r) = summary {
        let _ = writeln!(s, "dataset,{:.6},{:.6},{:.6}", r.f_beta, r.mae, r.auc);
    }
    s
}

pub fn pr_csv(report: &EvalReport) -> String {
    let mut s = String::from("threshold,precision,recall\n");
    for (t, p) in report.pr_points.iter().enumerate() {
        let _ = writeln!(s, "{t},{:.6},{:.6}", p.precision, p.recall);
    }
    s
}

/// PR curves as an SVG line plot, recall on x and precision on y.
pub fn pr_svg(curves: &[(&str, &EvalReport)]) -> String {
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let (w, h, m) = (480.0, 400.0, 50.0);
    let (pw, ph) = (w - 2.0 * m, h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<rect x="{m}" y="{m}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=10 {
        let v = i as f64 / 10.0;
        let x = m + v * pw;
        let y = m + (1.0 - v) * ph;
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{v:.1}</text>"#, h - m + 14.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}" font-size="10" text-anchor="end">{v:.1}</text>"#, m - 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">Recall</text>"#, w / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">Precision</text>"#, h / 2.0, h / 2.0);
    for (i, (name, rep)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = rep
            .pr_points
            .iter()
            .map(|p| format!("{:.2},{:.2}", m + p.recall * pw, m + (1.0 - p.precision) * ph))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = m + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="11" fill="{color}">{name} (F={:.3})</text>"#,
            m + 8.0,
            rep.f_beta
        );
    }
    s.push_str("</svg>\n");
    s
}
