//! Detection throughput over a fixed image set.

use std::time::Instant;

use acf_core::boosting::CascadeMode;
use acf_core::detector::{raw_multiview_detections, MultiViewModel, ScanStats};
use acf_core::postprocess::fuse;
use acf_core::Image;
use serde::{Deserialize, Serialize};

use crate::error::ToolResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub label: String,
    pub threads: usize,
    pub images: usize,
    pub seconds: f64,
    pub images_per_sec: f64,
    pub windows_per_sec: f64,
    pub mean_trees_per_window: f64,
    pub mean_trees_per_rejected: f64,
    pub detections: usize,
}

/// Rejections per stage range `[lo, hi]` (tree indices, 0-based), binned in
/// powers of two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: usize,
    pub hi: usize,
    pub rejected: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub stage_histogram: Vec<HistogramBin>,
    pub passed_windows: u64,
}

pub fn stage_histogram(stats: &ScanStats) -> Vec<HistogramBin> {
    let n = stats.stage_rejections.len();
    let mut bins = Vec::new();
    let mut lo = 0;
    while lo < n {
        let hi = (2 * lo).max(lo).min(n - 1);
        let rejected = stats.stage_rejections[lo..=hi].iter().sum();
        bins.push(HistogramBin { lo, hi, rejected });
        lo = hi + 1;
    }
    bins
}

fn run_one(image: &Image, model: &MultiViewModel, mode: CascadeMode) -> ToolResult<(usize, ScanStats)> {
    let levels = model.build_pyramid(image)?;
    let (raw, per_view) = raw_multiview_detections(&levels, model, mode);
    let fused = fuse(raw, model.models(), &model.adjustments, &model.fusion)?;
    let mut stats = ScanStats::default();
    for s in &per_view {
        stats.merge(s);
    }
    Ok((fused.detections.len(), stats))
}

fn timed(label: &str, images: &[Image], model: &MultiViewModel, mode: CascadeMode, threads: usize) -> ToolResult<(BenchRow, ScanStats)> {
    let threads = threads.max(1).min(images.len().max(1));
    let start = Instant::now();
    let chunk = images.len().div_ceil(threads).max(1);
    let parts: Vec<ToolResult<(usize, ScanStats)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = images
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    let mut dets = 0;
                    let mut stats = ScanStats::default();
                    for img in part {
                        let (d, s) = run_one(img, model, mode)?;
                        dets += d;
                        stats.merge(&s);
                    }
                    Ok((dets, stats))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect()
    });
    let seconds = start.elapsed().as_secs_f64().max(1e-9);
    let mut stats = ScanStats::default();
    let mut detections = 0;
    for p in parts {
        let (d, s) = p?;
        detections += d;
        stats.merge(&s);
    }
    let row = BenchRow {
        label: label.into(),
        threads,
        images: images.len(),
        seconds,
        images_per_sec: images.len() as f64 / seconds,
        windows_per_sec: stats.windows as f64 / seconds,
        mean_trees_per_window: stats.mean_trees_per_window(),
        mean_trees_per_rejected: stats.mean_trees_per_rejected(),
        detections,
    };
    Ok((row, stats))
}

/// Single-thread cascade row, a `threads`-thread row when `threads > 1`, and
/// an exhaustive single-thread row for comparison.
pub fn bench(model: &MultiViewModel, images: &[Image], threads: usize) -> ToolResult<BenchReport> {
    let (single, stats) = timed("cascade", images, model, CascadeMode::Enabled, 1)?;
    let mut rows = vec![single];
    if threads > 1 {
        rows.push(timed("cascade", images, model, CascadeMode::Enabled, threads)?.0);
    }
    rows.push(timed("exhaustive", images, model, CascadeMode::Exhaustive, 1)?.0);
    Ok(BenchReport {
        rows,
        stage_histogram: stage_histogram(&stats),
        passed_windows: stats.passed,
    })
}

impl BenchReport {
    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<11} {:>7} {:>7} {:>9} {:>11} {:>13} {:>11} {:>6}\n",
            "mode", "threads", "images", "img/s", "windows/s", "trees/window", "trees/rej", "dets"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<11} {:>7} {:>7} {:>9.2} {:>11.0} {:>13.2} {:>11.2} {:>6}\n",
                r.label, r.threads, r.images, r.images_per_sec, r.windows_per_sec, r.mean_trees_per_window, r.mean_trees_per_rejected, r.detections
            ));
        }
        s.push_str("\nrejections by stage\n");
        for b in &self.stage_histogram {
            s.push_str(&format!("{:>5}..{:<5} {}\n", b.lo, b.hi, b.rejected));
        }
        s.push_str(&format!("passed all stages {}\n", self.passed_windows));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins_cover_every_stage_once() {
        let stats = ScanStats {
            stage_rejections: (0..10).map(|i| i as u64).collect(),
            ..ScanStats::default()
        };
        let h = stage_histogram(&stats);
        let bounds: Vec<(usize, usize)> = h.iter().map(|b| (b.lo, b.hi)).collect();
        assert_eq!(bounds, vec![(0, 0), (1, 2), (3, 6), (7, 9)]);
        assert_eq!(h.iter().map(|b| b.rejected).sum::<u64>(), 45);
    }
}
