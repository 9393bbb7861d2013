//! CSV outputs with fixed headers.
//!
//! * loss trace: `step,vid,nodes,edges,haog,con,total,lr`
//! * metrics: `variant,seed,split,top1,mean_iou,exist_acc,contact_acc,videos,images`
//! * summary: `variant,seeds,top1_mean,top1_std,mean_iou_mean,exist_acc_mean,contact_acc_mean`
//!
//! Graph metrics are empty for models without graph heads. Standard
//! deviations are the sample (n - 1) estimate, `0` for a single seed.

use std::path::Path;

use svit_core::train::{Metrics, StepReport};

use crate::error::{format_err, Result};

pub const LOSS_HEADER: [&str; 8] = ["step", "vid", "nodes", "edges", "haog", "con", "total", "lr"];
pub const METRICS_HEADER: [&str; 9] =
    ["variant", "seed", "split", "top1", "mean_iou", "exist_acc", "contact_acc", "videos", "images"];
pub const SUMMARY_HEADER: [&str; 7] =
    ["variant", "seeds", "top1_mean", "top1_std", "mean_iou_mean", "exist_acc_mean", "contact_acc_mean"];

/// One evaluated run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub variant: String,
    pub seed: u64,
    pub split: String,
    pub metrics: Metrics,
}

/// Seed statistics of one variant.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub seeds: usize,
    pub top1_mean: f64,
    pub top1_std: f64,
    pub mean_iou_mean: Option<f64>,
    pub exist_acc_mean: Option<f64>,
    pub contact_acc_mean: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

pub fn loss_csv(reports: &[StepReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LOSS_HEADER).expect("in-memory writer");
    for r in reports {
        let l = &r.loss;
        let row = [r.step.to_string(), l.vid.to_string(), l.nodes.to_string(), l.edges.to_string(), l.haog.to_string(), l.con.to_string(), l.total.to_string(), r.lr.to_string()];
        w.write_record(&row).expect("in-memory writer");
    }
    finish(w)
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER).expect("in-memory writer");
    for r in rows {
        let m = &r.metrics;
        let row = [
            r.variant.clone(),
            r.seed.to_string(),
            r.split.clone(),
            m.top1.to_string(),
            opt(m.mean_iou),
            opt(m.exist_acc),
            opt(m.contact_acc),
            m.videos.to_string(),
            m.images.to_string(),
        ];
        w.write_record(&row).expect("in-memory writer");
    }
    finish(w)
}

/// Sample mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-variant seed statistics, in first-appearance order.
pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.variant.as_str()) {
            order.push(&r.variant);
        }
    }
    order
        .into_iter()
        .map(|v| {
            let ms: Vec<&Metrics> = rows.iter().filter(|r| r.variant == v).map(|r| &r.metrics).collect();
            let top: Vec<f64> = ms.iter().map(|m| m.top1).collect();
            let (top1_mean, top1_std) = mean_std(&top);
            let avg = |f: fn(&Metrics) -> Option<f64>| {
                let xs: Option<Vec<f64>> = ms.iter().map(|m| f(m)).collect();
                xs.map(|xs| mean_std(&xs).0)
            };
            SummaryRow {
                variant: v.to_string(),
                seeds: ms.len(),
                top1_mean,
                top1_std,
                mean_iou_mean: avg(|m| m.mean_iou),
                exist_acc_mean: avg(|m| m.exist_acc),
                contact_acc_mean: avg(|m| m.contact_acc),
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).expect("in-memory writer");
    for r in rows {
        let row = [
            r.variant.clone(),
            r.seeds.to_string(),
            r.top1_mean.to_string(),
            r.top1_std.to_string(),
            opt(r.mean_iou_mean),
            opt(r.exist_acc_mean),
            opt(r.contact_acc_mean),
        ];
        w.write_record(&row).expect("in-memory writer");
    }
    finish(w)
}

/// Reads a metrics CSV back; the header must match exactly.
pub fn parse_metrics_csv(text: &str, source: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| format_err(source, e))?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(format_err(source, format!("unexpected header {:?}", header)));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| format_err(source, format!("{s:?}: {e}")));
    let int = |s: &str| s.parse::<usize>().map_err(|e| format_err(source, format!("{s:?}: {e}")));
    let optional = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| format_err(source, e))?;
        out.push(MetricsRow {
            variant: rec[0].to_string(),
            seed: rec[1].parse().map_err(|e| format_err(source, e))?,
            split: rec[2].to_string(),
            metrics: Metrics {
                top1: num(&rec[3])?,
                mean_iou: optional(&rec[4])?,
                exist_acc: optional(&rec[5])?,
                contact_acc: optional(&rec[6])?,
                videos: int(&rec[7])?,
                images: int(&rec[8])?,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &str, seed: u64, top1: f64, iou: Option<f64>) -> MetricsRow {
        MetricsRow { variant: v.into(), seed, split: "test".into(), metrics: Metrics { top1, mean_iou: iou, videos: 10, ..Metrics::default() } }
    }

    #[test]
    fn metrics_round_trip() {
        let rows = vec![row("full", 0, 0.25, Some(0.5)), row("baseline", 1, 1.0 / 3.0, None)];
        let text = metrics_csv(&rows);
        assert!(text.starts_with("variant,seed,split,top1,mean_iou,exist_acc,contact_acc,videos,images\n"));
        assert_eq!(parse_metrics_csv(&text, Path::new("m.csv")).unwrap(), rows);
    }

    #[test]
    fn summary_statistics() {
        let rows = vec![row("a", 0, 0.2, Some(0.4)), row("a", 1, 0.4, Some(0.6)), row("b", 0, 0.5, None)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert!((s[0].top1_mean - 0.3).abs() < 1e-15);
        assert!((s[0].top1_std - 0.02f64.sqrt()).abs() < 1e-15);
        assert!((s[0].mean_iou_mean.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!((s[1].seeds, s[1].top1_std, s[1].mean_iou_mean), (1, 0.0, None));
    }

    #[test]
    fn loss_header() {
        assert_eq!(loss_csv(&[]), "step,vid,nodes,edges,haog,con,total,lr\n");
    }
}
