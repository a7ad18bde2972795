//! Shared test helpers: a brute-force tracking-metrics reference built on
//! exhaustive matching enumeration, plus random instance generators.

use attmot::dataset::GroundTruthTrack;
use attmot::geometry::BoundingBox;
use rand::Rng;

/// Reference metric values computed without the Hungarian algorithm.
#[derive(Debug, Clone, Default)]
pub struct RefMetrics {
    pub fp: usize,
    pub fn_total: usize,
    pub ids: usize,
    pub fm: usize,
    pub mt: usize,
    pub pt: usize,
    pub ml: usize,
    pub gt: usize,
    pub mota: f64,
    pub motp: f64,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub rcll: f64,
    pub prcn: f64,
}

fn boxes_at(tracks: &[GroundTruthTrack], t: usize) -> Vec<(u32, BoundingBox)> {
    tracks
        .iter()
        .filter_map(|tr| tr.boxes.get(t).copied().flatten().map(|b| (tr.track_id, b)))
        .collect()
}

/// Exhaustively find the maximum-cardinality matching over valid pairs
/// (IoU >= threshold), breaking cardinality ties by minimum total (1 - IoU).
fn best_matching(
    gt: &[(u32, BoundingBox)],
    hyp: &[(u32, BoundingBox)],
    thr: f64,
) -> Vec<(u32, u32, f64)> {
    fn recurse(
        gi: usize,
        gt: &[(u32, BoundingBox)],
        hyp: &[(u32, BoundingBox)],
        used: &mut Vec<bool>,
        cur: &mut Vec<(u32, u32, f64)>,
        best: &mut (usize, f64, Vec<(u32, u32, f64)>),
        thr: f64,
    ) {
        if gi == gt.len() {
            let cost: f64 = cur.iter().map(|&(_, _, iou)| 1.0 - iou).sum();
            if cur.len() > best.0 || (cur.len() == best.0 && cost < best.1) {
                *best = (cur.len(), cost, cur.clone());
            }
            return;
        }
        // leave gt[gi] unmatched
        recurse(gi + 1, gt, hyp, used, cur, best, thr);
        for hi in 0..hyp.len() {
            if used[hi] {
                continue;
            }
            let iou = gt[gi].1.iou(&hyp[hi].1);
            if iou >= thr {
                used[hi] = true;
                cur.push((gt[gi].0, hyp[hi].0, iou));
                recurse(gi + 1, gt, hyp, used, cur, best, thr);
                cur.pop();
                used[hi] = false;
            }
        }
    }
    let mut best = (0usize, f64::INFINITY, Vec::new());
    recurse(
        0,
        gt,
        hyp,
        &mut vec![false; hyp.len()],
        &mut Vec::new(),
        &mut best,
        thr,
    );
    best.2
}

/// Brute-force CLEAR MOT + identity metrics over a full sequence.
pub fn reference_metrics(
    gt_tracks: &[GroundTruthTrack],
    hyp_tracks: &[GroundTruthTrack],
    n_frames: usize,
    thr: f64,
) -> RefMetrics {
    let mut m = RefMetrics {
        gt: gt_tracks.len(),
        ..Default::default()
    };
    let mut prev: Vec<(u32, u32)> = Vec::new(); // matches at the previous frame
    let mut last_partner: Vec<(u32, u32)> = Vec::new(); // most recent partner per gt
    let mut matched_frames: Vec<Vec<bool>> = Vec::new(); // [frame][gt index]
    let mut tp = 0usize;
    let mut overlap_sum = 0.0;
    let mut gt_detections = 0usize;

    for t in 0..n_frames {
        let gt = boxes_at(gt_tracks, t);
        let hyp = boxes_at(hyp_tracks, t);
        gt_detections += gt.len();

        // phase 1: persist previous-frame pairs still above threshold
        let mut matches: Vec<(u32, u32, f64)> = Vec::new();
        for &(g, h) in &prev {
            let gb = gt.iter().find(|&&(id, _)| id == g).map(|&(_, b)| b);
            let hb = hyp.iter().find(|&&(id, _)| id == h).map(|&(_, b)| b);
            if let (Some(gb), Some(hb)) = (gb, hb) {
                let iou = gb.iou(&hb);
                if iou >= thr {
                    matches.push((g, h, iou));
                }
            }
        }
        // phase 2: exhaustive optimal matching over the remainder
        let rem_gt: Vec<_> = gt
            .iter()
            .copied()
            .filter(|(id, _)| !matches.iter().any(|&(g, _, _)| g == *id))
            .collect();
        let rem_hyp: Vec<_> = hyp
            .iter()
            .copied()
            .filter(|(id, _)| !matches.iter().any(|&(_, h, _)| h == *id))
            .collect();
        for (g, h, iou) in best_matching(&rem_gt, &rem_hyp, thr) {
            if last_partner.iter().any(|&(pg, ph)| pg == g && ph != h) {
                m.ids += 1;
            }
            matches.push((g, h, iou));
        }

        m.fn_total += gt.len() - matches.len();
        m.fp += hyp.len() - matches.len();
        tp += matches.len();
        overlap_sum += matches.iter().map(|&(_, _, iou)| iou).sum::<f64>();

        matched_frames.push(
            gt_tracks
                .iter()
                .map(|tr| matches.iter().any(|&(g, _, _)| g == tr.track_id))
                .collect(),
        );
        prev = matches.iter().map(|&(g, h, _)| (g, h)).collect();
        for &(g, h, _) in &matches {
            match last_partner.iter_mut().find(|(pg, _)| *pg == g) {
                Some(entry) => entry.1 = h,
                None => last_partner.push((g, h)),
            }
        }
    }

    // per-track coverage and fragmentation
    for (gi, tr) in gt_tracks.iter().enumerate() {
        let mut present = 0usize;
        let mut matched = 0usize;
        let mut frag = 0usize;
        let mut seen = false;
        let mut in_gap = false;
        for (t, b) in tr.boxes.iter().enumerate() {
            if b.is_none() {
                continue;
            }
            present += 1;
            if matched_frames[t][gi] {
                matched += 1;
                if in_gap {
                    frag += 1;
                }
                in_gap = false;
                seen = true;
            } else if seen {
                in_gap = true;
            }
        }
        m.fm += frag;
        let cov = if present == 0 {
            0.0
        } else {
            matched as f64 / present as f64
        };
        if cov >= 0.8 {
            m.mt += 1;
        } else if cov <= 0.2 {
            m.ml += 1;
        } else {
            m.pt += 1;
        }
    }

    let d = gt_detections as f64;
    m.mota = 100.0 * (1.0 - (m.fp + m.fn_total + m.ids) as f64 / d);
    m.motp = if tp == 0 { 0.0 } else { 100.0 * overlap_sum / tp as f64 };
    m.rcll = 100.0 * tp as f64 / d;
    m.prcn = if tp + m.fp == 0 {
        0.0
    } else {
        100.0 * tp as f64 / (tp + m.fp) as f64
    };

    // identity metrics: exhaustive trajectory assignment maximizing overlap
    let total_gt: usize = gt_tracks.iter().map(|t| t.boxes.iter().flatten().count()).sum();
    let total_hyp: usize = hyp_tracks.iter().map(|t| t.boxes.iter().flatten().count()).sum();
    let pair_value = |g: &GroundTruthTrack, h: &GroundTruthTrack| -> usize {
        g.boxes
            .iter()
            .zip(&h.boxes)
            .filter(|(gb, hb)| matches!((gb, hb), (Some(gb), Some(hb)) if gb.iou(hb) >= thr))
            .count()
    };
    fn best_idtp(
        gi: usize,
        gt: &[GroundTruthTrack],
        hyp: &[GroundTruthTrack],
        used: &mut Vec<bool>,
        value: &dyn Fn(&GroundTruthTrack, &GroundTruthTrack) -> usize,
    ) -> usize {
        if gi == gt.len() {
            return 0;
        }
        let mut best = best_idtp(gi + 1, gt, hyp, used, value); // skip gt[gi]
        for hi in 0..hyp.len() {
            if used[hi] {
                continue;
            }
            used[hi] = true;
            best = best.max(value(&gt[gi], &hyp[hi]) + best_idtp(gi + 1, gt, hyp, used, value));
            used[hi] = false;
        }
        best
    }
    let idtp = best_idtp(
        0,
        gt_tracks,
        hyp_tracks,
        &mut vec![false; hyp_tracks.len()],
        &pair_value,
    ) as f64;
    m.idp = if total_hyp == 0 { 0.0 } else { 100.0 * idtp / total_hyp as f64 };
    m.idr = if total_gt == 0 { 0.0 } else { 100.0 * idtp / total_gt as f64 };
    m.idf1 = if total_gt + total_hyp == 0 {
        0.0
    } else {
        100.0 * 2.0 * idtp / (total_gt + total_hyp) as f64
    };
    m
}

/// Random track sets with partial presence; hypothesis tracks mix perturbed
/// copies of ground truth with unrelated clutter so every event type occurs.
pub fn random_instance<R: Rng>(rng: &mut R) -> (Vec<GroundTruthTrack>, Vec<GroundTruthTrack>, usize) {
    let n_frames = rng.gen_range(1..=20);
    let n_gt = rng.gen_range(1..=5);
    let n_hyp = rng.gen_range(0..=5);

    let rand_box = |rng: &mut R| {
        BoundingBox::new(
            rng.gen_range(5.0..60.0),
            rng.gen_range(5.0..60.0),
            rng.gen_range(4.0..16.0),
            rng.gen_range(4.0..16.0),
        )
    };
    let gt: Vec<GroundTruthTrack> = (0..n_gt)
        .map(|i| GroundTruthTrack {
            track_id: i as u32,
            boxes: (0..n_frames)
                .map(|_| rng.gen_bool(0.8).then(|| rand_box(rng)))
                .collect(),
        })
        .collect();
    let hyp: Vec<GroundTruthTrack> = (0..n_hyp)
        .map(|i| {
            let boxes = if rng.gen_bool(0.7) && !gt.is_empty() {
                // perturbed copy of a random gt track (jitter keeps IoU high
                // most frames, occasionally drops below threshold)
                let src = &gt[rng.gen_range(0..gt.len())];
                src.boxes
                    .iter()
                    .map(|b| {
                        b.filter(|_| rng.gen_bool(0.9)).map(|b| {
                            BoundingBox::new(
                                b.cx + rng.gen_range(-3.0..3.0),
                                b.cy + rng.gen_range(-3.0..3.0),
                                (b.w + rng.gen_range(-2.0..2.0)).max(1.0),
                                (b.h + rng.gen_range(-2.0..2.0)).max(1.0),
                            )
                        })
                    })
                    .collect()
            } else {
                (0..n_frames)
                    .map(|_| rng.gen_bool(0.5).then(|| rand_box(rng)))
                    .collect()
            };
            GroundTruthTrack {
                track_id: 100 + i as u32,
                boxes,
            }
        })
        .collect();
    (gt, hyp, n_frames)
}
