//! CLEAR-MOT and identity metrics computed from ground-truth and hypothesis
//! tracks: per-frame matching with match persistence, event accumulation,
//! track-coverage categories, and globally matched identity scores.

pub mod hungarian;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::GroundTruthTrack;
use crate::error::{AttmotError, Result};
use crate::geometry::BoundingBox;

/// Cost standing in for "no feasible match" in assignment matrices.
const BIG: f64 = 1e6;

/// Default IoU threshold for a detection to count as matching a gt box.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Coverage cutoffs for mostly-tracked / mostly-lost categories.
pub const MT_CUTOFF: f64 = 0.8;
pub const ML_CUTOFF: f64 = 0.2;

/// Matching state carried across frames.
#[derive(Debug, Default, Clone)]
pub struct MatchState {
    /// matches at the previous frame (gt -> hyp), eligible for persistence
    prev_matches: BTreeMap<u32, u32>,
    /// most recent partner of each gt over the whole sequence
    last_partner: BTreeMap<u32, u32>,
}

/// Per-frame matching outcome.
#[derive(Debug, Clone, Default)]
pub struct FrameAssignment {
    pub matches: Vec<(u32, u32)>,
    pub match_overlaps: Vec<f64>,
    /// center distance (pixels) per match, for the distance-MOTP variant
    pub match_dists: Vec<f64>,
    pub fp_count: usize,
    pub fn_count: usize,
    pub ids_count: usize,
}

fn center_dist(a: &BoundingBox, b: &BoundingBox) -> f64 {
    ((a.cx - b.cx).powi(2) + (a.cy - b.cy).powi(2)).sqrt()
}

/// Match one frame: persist previous-frame pairs still above threshold, then
/// assign the rest by minimum-cost (1 - IoU); a gt changing partners counts
/// as an identity switch.
pub fn frame_match(
    gt: &[(u32, BoundingBox)],
    hyp: &[(u32, BoundingBox)],
    state: &mut MatchState,
    iou_threshold: f64,
) -> FrameAssignment {
    let gt_map: BTreeMap<u32, BoundingBox> = gt.iter().copied().collect();
    let hyp_map: BTreeMap<u32, BoundingBox> = hyp.iter().copied().collect();

    let mut fa = FrameAssignment::default();
    let mut used_gt: Vec<u32> = Vec::new();
    let mut used_hyp: Vec<u32> = Vec::new();

    for (&g, &h) in &state.prev_matches {
        if let (Some(gb), Some(hb)) = (gt_map.get(&g), hyp_map.get(&h)) {
            let iou = gb.iou(hb);
            if iou >= iou_threshold {
                fa.matches.push((g, h));
                fa.match_overlaps.push(iou);
                fa.match_dists.push(center_dist(gb, hb));
                used_gt.push(g);
                used_hyp.push(h);
            }
        }
    }

    let rem_gt: Vec<u32> = gt_map.keys().copied().filter(|g| !used_gt.contains(g)).collect();
    let rem_hyp: Vec<u32> = hyp_map.keys().copied().filter(|h| !used_hyp.contains(h)).collect();
    if !rem_gt.is_empty() && !rem_hyp.is_empty() {
        let n = rem_gt.len().max(rem_hyp.len());
        let mut cost = Array2::from_elem((n, n), BIG);
        for (r, g) in rem_gt.iter().enumerate() {
            for (c, h) in rem_hyp.iter().enumerate() {
                let iou = gt_map[g].iou(&hyp_map[h]);
                if iou >= iou_threshold {
                    cost[[r, c]] = 1.0 - iou;
                }
            }
        }
        let assign = hungarian::solve(&cost);
        for (r, &c) in assign.iter().enumerate() {
            if r < rem_gt.len() && c < rem_hyp.len() && cost[[r, c]] < BIG / 2.0 {
                let (g, h) = (rem_gt[r], rem_hyp[c]);
                fa.matches.push((g, h));
                fa.match_overlaps.push(1.0 - cost[[r, c]]);
                fa.match_dists.push(center_dist(&gt_map[&g], &hyp_map[&h]));
                if state.last_partner.get(&g).is_some_and(|&p| p != h) {
                    fa.ids_count += 1;
                }
            }
        }
    }

    fa.fn_count = gt.len() - fa.matches.len();
    fa.fp_count = hyp.len() - fa.matches.len();

    state.prev_matches = fa.matches.iter().copied().collect();
    for &(g, h) in &fa.matches {
        state.last_partner.insert(g, h);
    }
    fa
}

/// Totals accumulated over a sequence of frame assignments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Accumulated {
    pub fp: usize,
    pub fn_total: usize,
    pub ids: usize,
    pub fm: usize,
    pub mt: usize,
    pub pt: usize,
    pub ml: usize,
    pub gt_count: usize,
    pub tp: usize,
    pub overlap_sum: f64,
    pub dist_sum: f64,
    pub gt_detections: usize,
}

/// Distance-flavored MOTP: mean center distance in pixels over all matches
/// (lower is better; not a percentage). Offered as an alternative to the
/// overlap convention used by [`clear_metrics`].
pub fn motp_distance(acc: &Accumulated) -> f64 {
    if acc.tp == 0 {
        0.0
    } else {
        acc.dist_sum / acc.tp as f64
    }
}

/// Fold frame assignments into event totals plus MT/PT/ML/FM per gt track.
pub fn accumulate(assignments: &[FrameAssignment], gt_tracks: &[GroundTruthTrack]) -> Accumulated {
    let mut acc = Accumulated {
        gt_count: gt_tracks.len(),
        ..Default::default()
    };
    for fa in assignments {
        acc.fp += fa.fp_count;
        acc.fn_total += fa.fn_count;
        acc.ids += fa.ids_count;
        acc.tp += fa.matches.len();
        acc.overlap_sum += fa.match_overlaps.iter().sum::<f64>();
        acc.dist_sum += fa.match_dists.iter().sum::<f64>();
    }
    for track in gt_tracks {
        let mut present = 0usize;
        let mut matched = 0usize;
        let mut frag = 0usize;
        let mut in_gap_after_match = false;
        let mut seen_match = false;
        for (t, b) in track.boxes.iter().enumerate() {
            if b.is_none() {
                continue;
            }
            present += 1;
            acc.gt_detections += 1;
            let is_matched = assignments
                .get(t)
                .is_some_and(|fa| fa.matches.iter().any(|&(g, _)| g == track.track_id));
            if is_matched {
                matched += 1;
                if in_gap_after_match {
                    frag += 1; // tracked -> untracked -> tracked
                }
                in_gap_after_match = false;
                seen_match = true;
            } else if seen_match {
                in_gap_after_match = true;
            }
        }
        acc.fm += frag;
        let coverage = if present == 0 {
            0.0
        } else {
            matched as f64 / present as f64
        };
        if coverage >= MT_CUTOFF {
            acc.mt += 1;
        } else if coverage <= ML_CUTOFF {
            acc.ml += 1;
        } else {
            acc.pt += 1;
        }
    }
    acc
}

/// MOTA / MOTP / recall / precision from accumulated totals (percentages).
pub fn clear_metrics(acc: &Accumulated) -> Result<(f64, f64, f64, f64)> {
    if acc.gt_detections == 0 {
        return Err(AttmotError::validation(
            "metrics undefined: zero ground-truth detections",
        ));
    }
    let d = acc.gt_detections as f64;
    let mota = 100.0 * (1.0 - (acc.fp + acc.fn_total + acc.ids) as f64 / d);
    let motp = if acc.tp == 0 {
        0.0
    } else {
        100.0 * acc.overlap_sum / acc.tp as f64
    };
    let rcll = 100.0 * acc.tp as f64 / d;
    let prcn = if acc.tp + acc.fp == 0 {
        0.0
    } else {
        100.0 * acc.tp as f64 / (acc.tp + acc.fp) as f64
    };
    Ok((mota, motp, rcll, prcn))
}

/// IDF1 / IDP / IDR via a global min-cost trajectory matching: each gt/hyp
/// pair is worth the number of frames where both are present with IoU above
/// threshold, and the matching maximizes the total.
pub fn id_metrics(
    gt_tracks: &[GroundTruthTrack],
    hyp_tracks: &[GroundTruthTrack],
    iou_threshold: f64,
) -> (f64, f64, f64) {
    let total_gt: usize = gt_tracks
        .iter()
        .map(|t| t.boxes.iter().flatten().count())
        .sum();
    let total_hyp: usize = hyp_tracks
        .iter()
        .map(|t| t.boxes.iter().flatten().count())
        .sum();
    let mut idtp = 0.0f64;
    if !gt_tracks.is_empty() && !hyp_tracks.is_empty() {
        let n = gt_tracks.len().max(hyp_tracks.len());
        let mut cost = Array2::zeros((n, n));
        for (r, g) in gt_tracks.iter().enumerate() {
            for (c, h) in hyp_tracks.iter().enumerate() {
                let mut pair = 0usize;
                for (gb, hb) in g.boxes.iter().zip(&h.boxes) {
                    if let (Some(gb), Some(hb)) = (gb, hb) {
                        if gb.iou(hb) >= iou_threshold {
                            pair += 1;
                        }
                    }
                }
                cost[[r, c]] = -(pair as f64);
            }
        }
        let assign = hungarian::solve(&cost);
        idtp = -hungarian::assignment_cost(&cost, &assign);
    }
    let idp = if total_hyp == 0 {
        0.0
    } else {
        100.0 * idtp / total_hyp as f64
    };
    let idr = if total_gt == 0 {
        0.0
    } else {
        100.0 * idtp / total_gt as f64
    };
    let idf1 = if total_gt + total_hyp == 0 {
        0.0
    } else {
        100.0 * 2.0 * idtp / (total_gt + total_hyp) as f64
    };
    (idf1, idp, idr)
}

/// The full Table-style metric row for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "IDF1")]
    pub idf1: f64,
    #[serde(rename = "IDP")]
    pub idp: f64,
    #[serde(rename = "IDR")]
    pub idr: f64,
    #[serde(rename = "Rcll")]
    pub rcll: f64,
    #[serde(rename = "Prcn")]
    pub prcn: f64,
    #[serde(rename = "GT")]
    pub gt: usize,
    #[serde(rename = "MT")]
    pub mt: usize,
    #[serde(rename = "PT")]
    pub pt: usize,
    #[serde(rename = "ML")]
    pub ml: usize,
    #[serde(rename = "FP")]
    pub fp: usize,
    #[serde(rename = "FN")]
    pub fn_total: usize,
    #[serde(rename = "IDs")]
    pub ids: usize,
    #[serde(rename = "FM")]
    pub fm: usize,
    #[serde(rename = "MOTA")]
    pub mota: f64,
    #[serde(rename = "MOTP")]
    pub motp: f64,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 15] = [
        "IDF1", "IDP", "IDR", "Rcll", "Prcn", "GT", "MT", "PT", "ML", "FP", "FN", "IDs", "FM",
        "MOTA", "MOTP",
    ];

    /// Render the fifteen columns as an aligned two-line table.
    pub fn render_table(&self, label: &str) -> String {
        let values = [
            format!("{:.1}%", self.idf1),
            format!("{:.1}%", self.idp),
            format!("{:.1}%", self.idr),
            format!("{:.1}%", self.rcll),
            format!("{:.1}%", self.prcn),
            self.gt.to_string(),
            self.mt.to_string(),
            self.pt.to_string(),
            self.ml.to_string(),
            self.fp.to_string(),
            self.fn_total.to_string(),
            self.ids.to_string(),
            self.fm.to_string(),
            format!("{:.1}%", self.mota),
            format!("{:.1}%", self.motp),
        ];
        let mut header = format!("{:<12}", "Model");
        let mut row = format!("{label:<12}");
        for (name, val) in Self::COLUMNS.iter().zip(&values) {
            let w = name.len().max(val.len()) + 2;
            header.push_str(&format!("{name:>w$}"));
            row.push_str(&format!("{val:>w$}"));
        }
        format!("{header}\n{row}")
    }

    pub fn csv_header() -> String {
        Self::COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.4},{:.4},{:.4},{:.4},{:.4},{},{},{},{},{},{},{},{},{:.4},{:.4}",
            self.idf1,
            self.idp,
            self.idr,
            self.rcll,
            self.prcn,
            self.gt,
            self.mt,
            self.pt,
            self.ml,
            self.fp,
            self.fn_total,
            self.ids,
            self.fm,
            self.mota,
            self.motp
        )
    }
}

/// Evaluate hypothesis tracks against ground truth over a whole sequence.
pub fn evaluate_tracks(
    gt_tracks: &[GroundTruthTrack],
    hyp_tracks: &[GroundTruthTrack],
    n_frames: usize,
    iou_threshold: f64,
) -> Result<MetricsReport> {
    let mut state = MatchState::default();
    let mut assignments = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let gt: Vec<(u32, BoundingBox)> = gt_tracks
            .iter()
            .filter_map(|tr| tr.boxes.get(t).copied().flatten().map(|b| (tr.track_id, b)))
            .collect();
        let hyp: Vec<(u32, BoundingBox)> = hyp_tracks
            .iter()
            .filter_map(|tr| tr.boxes.get(t).copied().flatten().map(|b| (tr.track_id, b)))
            .collect();
        assignments.push(frame_match(&gt, &hyp, &mut state, iou_threshold));
    }
    let acc = accumulate(&assignments, gt_tracks);
    let (mota, motp, rcll, prcn) = clear_metrics(&acc)?;
    let (idf1, idp, idr) = id_metrics(gt_tracks, hyp_tracks, iou_threshold);
    Ok(MetricsReport {
        idf1,
        idp,
        idr,
        rcll,
        prcn,
        gt: acc.gt_count,
        mt: acc.mt,
        pt: acc.pt,
        ml: acc.ml,
        fp: acc.fp,
        fn_total: acc.fn_total,
        ids: acc.ids,
        fm: acc.fm,
        mota,
        motp,
    })
}

/// One line of `hypotheses.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub frame_idx: usize,
    pub tracker_id: u32,
    pub confidence: f64,
    /// [cx, cy, w, h] in pixels
    pub bbox: [f64; 4],
}

/// Group hypothesis records into per-tracker trajectories, dropping records
/// below the confidence threshold.
pub fn hypotheses_to_tracks(
    records: &[HypothesisRecord],
    n_frames: usize,
    min_confidence: f64,
) -> Vec<GroundTruthTrack> {
    let mut by_id: BTreeMap<u32, Vec<Option<BoundingBox>>> = BTreeMap::new();
    for r in records {
        if r.confidence < min_confidence || r.frame_idx >= n_frames {
            continue;
        }
        let boxes = by_id.entry(r.tracker_id).or_insert_with(|| vec![None; n_frames]);
        boxes[r.frame_idx] = Some(BoundingBox::new(r.bbox[0], r.bbox[1], r.bbox[2], r.bbox[3]));
    }
    by_id
        .into_iter()
        .map(|(track_id, boxes)| GroundTruthTrack { track_id, boxes })
        .collect()
}

pub fn save_hypotheses(records: &[HypothesisRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_hypotheses(path: &Path) -> Result<Vec<HypothesisRecord>> {
    let mut records = Vec::new();
    for line in BufReader::new(std::fs::File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
