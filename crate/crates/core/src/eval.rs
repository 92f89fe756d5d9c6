//! Segment-level evaluation: IOU, best-match mIOU, ground-truth variant
//! selection and precision/recall with average precision.

use std::collections::HashMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::Mask;
use crate::pipeline::SegmentSet;

/// `|a∩b| / |a∪b|` after removing `void` pixels from both; 0 when the union
/// is empty.
pub fn iou(a: &Mask, b: &Mask, void: Option<&Mask>) -> Result<f64> {
    if a.dims() != b.dims() || void.is_some_and(|v| v.dims() != a.dims()) {
        return Err(Error::invalid("iou: mask shapes differ"));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for n in 0..a.bits().len() {
        if void.is_some_and(|v| v.bits()[n]) {
            continue;
        }
        let (x, y) = (a.bits()[n], b.bits()[n]);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Pairwise overlap counts between two disjoint segment sets, ignoring void.
struct Overlap {
    gt_sizes: Vec<usize>,
    est_sizes: Vec<usize>,
    /// Per GT segment: (est segment, intersection size).
    per_gt: Vec<Vec<(usize, usize)>>,
}

impl Overlap {
    fn new(gt: &SegmentSet, est: &SegmentSet, void: Option<&Mask>) -> Result<Self> {
        let dims = (gt.height(), gt.width());
        if (est.height(), est.width()) != dims || void.is_some_and(|v| v.dims() != dims) {
            return Err(Error::invalid("evaluation inputs differ in image size"));
        }
        let mut gt_sizes = vec![0; gt.len()];
        let mut est_sizes = vec![0; est.len()];
        let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
        for n in 0..dims.0 * dims.1 {
            if void.is_some_and(|v| v.bits()[n]) {
                continue;
            }
            let (g, e) = (gt.segment_at(n), est.segment_at(n));
            if let Some(g) = g {
                gt_sizes[g] += 1;
            }
            if let Some(e) = e {
                est_sizes[e] += 1;
            }
            if let (Some(g), Some(e)) = (g, e) {
                *pairs.entry((g, e)).or_default() += 1;
            }
        }
        let mut per_gt = vec![Vec::new(); gt.len()];
        for ((g, e), c) in pairs {
            per_gt[g].push((e, c));
        }
        for list in &mut per_gt {
            list.sort_unstable();
        }
        Ok(Overlap {
            gt_sizes,
            est_sizes,
            per_gt,
        })
    }

    fn iou(&self, g: usize, e: usize, inter: usize) -> f64 {
        let union = self.gt_sizes[g] + self.est_sizes[e] - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Best IOU of every GT segment against any estimated segment.
    fn best_per_gt(&self) -> Vec<f64> {
        self.per_gt
            .iter()
            .enumerate()
            .map(|(g, list)| {
                list.iter()
                    .map(|&(e, c)| self.iou(g, e, c))
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

/// Mean over GT segments of the best IOU reached by any estimated segment.
pub fn miou(gt: &SegmentSet, est: &SegmentSet, void: Option<&Mask>) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::invalid("miou: ground truth has no segments"));
    }
    let best = Overlap::new(gt, est, void)?.best_per_gt();
    Ok(best.iter().sum::<f64>() / best.len() as f64)
}

/// Best match of one estimated segment against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchRecord {
    pub est_index: usize,
    /// `None` when the segment overlaps no GT segment.
    pub best_gt_index: Option<usize>,
    pub best_iou: f64,
}

/// One record per estimated segment that has at least one non-void pixel.
pub fn best_matches(gt: &SegmentSet, est: &SegmentSet, void: Option<&Mask>) -> Result<Vec<MatchRecord>> {
    let ov = Overlap::new(gt, est, void)?;
    let mut best: Vec<MatchRecord> = (0..est.len())
        .map(|e| MatchRecord {
            est_index: e,
            best_gt_index: None,
            best_iou: 0.0,
        })
        .collect();
    for (g, list) in ov.per_gt.iter().enumerate() {
        for &(e, c) in list {
            let v = ov.iou(g, e, c);
            let rec = &mut best[e];
            if v > rec.best_iou || rec.best_gt_index.is_none() {
                rec.best_iou = v.max(rec.best_iou);
                rec.best_gt_index = Some(g);
            }
        }
    }
    Ok(best.into_iter().filter(|r| ov.est_sizes[r.est_index] > 0).collect())
}

/// Which ground-truth annotations of an image take part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GtMode {
    #[default]
    All,
    /// The annotation with the most segments.
    Fine,
    /// The annotation with the fewest segments.
    Coarse,
}

impl FromStr for GtMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(GtMode::All),
            "fine" => Ok(GtMode::Fine),
            "coarse" => Ok(GtMode::Coarse),
            other => Err(Error::invalid(format!("gt mode must be all|fine|coarse, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for GtMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GtMode::All => "all",
            GtMode::Fine => "fine",
            GtMode::Coarse => "coarse",
        })
    }
}

/// All ground-truth annotations of one image.
#[derive(Debug, Clone)]
pub struct GtBundle {
    pub variants: Vec<SegmentSet>,
    /// Pixels excluded from scoring.
    pub void: Option<Mask>,
}

/// Picks the variants to score against; ties go to the first variant.
pub fn select_gt(bundle: &GtBundle, mode: GtMode) -> Result<Vec<&SegmentSet>> {
    if bundle.variants.is_empty() {
        return Err(Error::invalid("ground-truth bundle has no variants"));
    }
    let v = &bundle.variants;
    Ok(match mode {
        GtMode::All => v.iter().collect(),
        GtMode::Fine => {
            let mut best = &v[0];
            for s in &v[1..] {
                if s.len() > best.len() {
                    best = s;
                }
            }
            vec![best]
        }
        GtMode::Coarse => {
            let mut best = &v[0];
            for s in &v[1..] {
                if s.len() < best.len() {
                    best = s;
                }
            }
            vec![best]
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub threshold: f64,
    pub points: Vec<PrPoint>,
    pub ap: f64,
    pub true_positives: usize,
    /// Set when there was nothing to rank (AP reported as 0).
    pub empty: bool,
}

/// Description of the AP rule, for report metadata.
pub const AP_RULE: &str = "area under precision-recall with precision monotonized from the right";

/// Ranks `matches` by best IOU (descending, stable), counts a match as a
/// true positive when `best_iou > threshold`, and integrates the
/// monotonized precision over recall (recall = TP / `gt_count`, capped at
/// 1 since below a 0.5 threshold several segments may match one GT segment).
pub fn pr_ap(matches: &[MatchRecord], gt_count: usize, threshold: f64) -> Result<PrCurve> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("iou threshold {threshold} outside (0, 1)")));
    }
    if matches.is_empty() || gt_count == 0 {
        return Ok(PrCurve {
            threshold,
            points: Vec::new(),
            ap: 0.0,
            true_positives: 0,
            empty: true,
        });
    }
    let mut order: Vec<f64> = matches.iter().map(|m| m.best_iou).collect();
    order.sort_by(|a, b| b.total_cmp(a));
    let mut tp = 0usize;
    let points: Vec<PrPoint> = order
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            tp += (v > threshold) as usize;
            PrPoint {
                precision: tp as f64 / (i + 1) as f64,
                recall: (tp as f64 / gt_count as f64).min(1.0),
            }
        })
        .collect();
    let mut interp = vec![0.0; points.len()];
    let mut running = 0.0f64;
    for i in (0..points.len()).rev() {
        running = running.max(points[i].precision);
        interp[i] = running;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, &ip) in points.iter().zip(&interp) {
        ap += (p.recall - prev_recall) * ip;
        prev_recall = p.recall;
    }
    Ok(PrCurve {
        threshold,
        points,
        ap,
        true_positives: tp,
        empty: false,
    })
}

/// How per-image mIOU values are combined over a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MiouAggregation {
    /// Mean over (image, GT variant) pairs of that pair's mIOU.
    #[default]
    Pairs,
    /// Mean over every GT segment of the dataset.
    Segments,
}

impl FromStr for MiouAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairs" => Ok(MiouAggregation::Pairs),
            "segments" => Ok(MiouAggregation::Segments),
            other => Err(Error::invalid(format!(
                "miou aggregation must be pairs|segments, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for MiouAggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MiouAggregation::Pairs => "pairs",
            MiouAggregation::Segments => "segments",
        })
    }
}

/// One evaluated image: estimated segments and the ground truth.
#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub name: String,
    pub est: SegmentSet,
    pub gt: GtBundle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetReport {
    pub miou: f64,
    pub curves: Vec<PrCurve>,
    pub pairs: usize,
    pub gt_segments: usize,
    pub est_segments: usize,
}

pub fn evaluate_dataset(
    items: &[DatasetItem],
    mode: GtMode,
    thresholds: &[f64],
    aggregation: MiouAggregation,
) -> Result<DatasetReport> {
    if items.is_empty() {
        return Err(Error::invalid("no images to evaluate"));
    }
    let mut pair_scores = Vec::new();
    let mut segment_scores = Vec::new();
    let mut matches = Vec::new();
    let mut gt_segments = 0;
    for item in items {
        for gt in select_gt(&item.gt, mode)? {
            if gt.is_empty() {
                return Err(Error::invalid(format!("{}: ground truth has no segments", item.name)));
            }
            let void = item.gt.void.as_ref();
            let best = Overlap::new(gt, &item.est, void)?.best_per_gt();
            pair_scores.push(best.iter().sum::<f64>() / best.len() as f64);
            segment_scores.extend(best);
            gt_segments += gt.len();
            matches.extend(best_matches(gt, &item.est, void)?);
        }
    }
    let scores = match aggregation {
        MiouAggregation::Pairs => &pair_scores,
        MiouAggregation::Segments => &segment_scores,
    };
    let miou = scores.iter().sum::<f64>() / scores.len() as f64;
    let curves = thresholds
        .iter()
        .map(|&t| pr_ap(&matches, gt_segments, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetReport {
        miou,
        curves,
        pairs: pair_scores.len(),
        gt_segments,
        est_segments: matches.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::LabelMap;

    fn rec(v: f64) -> MatchRecord {
        MatchRecord {
            est_index: 0,
            best_gt_index: Some(0),
            best_iou: v,
        }
    }

    #[test]
    fn iou_basic_cases() {
        let a = Mask::from_fn(2, 4, |y, _| y == 0);
        assert_eq!(iou(&a, &a, None).unwrap(), 1.0);
        let b = Mask::from_fn(2, 4, |y, _| y == 1);
        assert_eq!(iou(&a, &b, None).unwrap(), 0.0);
        let c = Mask::from_fn(2, 4, |y, x| y == 0 && x < 2);
        assert_eq!(iou(&a, &c, None).unwrap(), 0.5);
        let e = Mask::empty(2, 4);
        assert_eq!(iou(&e, &e, None).unwrap(), 0.0);
        assert!(iou(&a, &Mask::empty(4, 2), None).is_err());
        // Voiding the uncovered half of `a` makes the masks identical.
        let void = Mask::from_fn(2, 4, |_, x| x >= 2);
        assert_eq!(iou(&a, &c, Some(&void)).unwrap(), 1.0);
    }

    #[test]
    fn halves_against_halves() {
        let gt = SegmentSet::from_label_regions(&LabelMap::new(4, 4, (0..16).map(|i| ((i % 4) / 2) as u32).collect()).unwrap(), None);
        let est = SegmentSet::from_label_regions(&LabelMap::new(4, 4, (0..16).map(|i| (i / 8) as u32).collect()).unwrap(), None);
        assert!((miou(&gt, &est, None).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(miou(&gt, &gt, None).unwrap(), 1.0);
    }

    #[test]
    fn select_modes() {
        let two = SegmentSet::from_label_regions(&LabelMap::new(1, 5, vec![0, 0, 1, 1, 1]).unwrap(), None);
        let five = SegmentSet::from_label_regions(&LabelMap::new(1, 5, vec![0, 1, 2, 3, 4]).unwrap(), None);
        let b = GtBundle { variants: vec![two.clone(), five.clone()], void: None };
        assert_eq!(select_gt(&b, GtMode::Fine).unwrap()[0], &five);
        assert_eq!(select_gt(&b, GtMode::Coarse).unwrap()[0], &two);
        assert_eq!(select_gt(&b, GtMode::All).unwrap().len(), 2);
        let single = GtBundle { variants: vec![two.clone()], void: None };
        for m in [GtMode::All, GtMode::Fine, GtMode::Coarse] {
            assert_eq!(select_gt(&single, m).unwrap(), vec![&two]);
        }
        assert!(select_gt(&GtBundle { variants: vec![], void: None }, GtMode::All).is_err());
    }

    #[test]
    fn ap_hand_sweep() {
        let m = [rec(0.9), rec(0.4), rec(0.8)];
        let c = pr_ap(&m, 2, 0.5).unwrap();
        let p: Vec<f64> = c.points.iter().map(|p| p.precision).collect();
        let r: Vec<f64> = c.points.iter().map(|p| p.recall).collect();
        assert_eq!(p, vec![1.0, 1.0, 2.0 / 3.0]);
        assert_eq!(r, vec![0.5, 1.0, 1.0]);
        assert_eq!(c.ap, 1.0);
        assert_eq!(c.true_positives, 2);
    }

    #[test]
    fn ap_extremes() {
        let all = [rec(0.9), rec(0.95)];
        assert_eq!(pr_ap(&all, 2, 0.5).unwrap().ap, 1.0);
        let none = [rec(0.1), rec(0.5)];
        assert_eq!(pr_ap(&none, 2, 0.5).unwrap().ap, 0.0);
        let empty = pr_ap(&[], 3, 0.5).unwrap();
        assert!(empty.empty && empty.ap == 0.0);
        assert!(pr_ap(&all, 2, 1.0).is_err());
    }

    #[test]
    fn empty_gt_is_an_error() {
        let l = LabelMap::filled(2, 2, 1);
        let gt = SegmentSet::from_label_regions(&l, Some(1));
        let est = SegmentSet::from_label_regions(&l, None);
        assert!(miou(&gt, &est, None).is_err());
    }
}
