//! Training loop, reference-image mode, and segment extraction.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::image::{Image, LabelMap, Mask};
use crate::losses::{total_loss, LossValues, Scribbles};
use crate::par;
use crate::segnet::{assign_labels, backward, forward, init_params, sgd_momentum_step, HyperParams, NetworkParams};

/// Loss values and label count recorded after one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub loss: LossValues,
    pub unique_labels: usize,
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub labels: LabelMap,
    pub unique_label_count: usize,
    pub loss_history: Vec<IterationRecord>,
    pub iterations_run: usize,
    pub params: NetworkParams<f32>,
}

/// One forward → label → loss → backward → update step. Returns the label
/// map computed by this step's forward pass.
pub fn train_step(
    image: &Image,
    params: &mut NetworkParams<f32>,
    hp: &HyperParams,
    scr: Option<&Scribbles>,
    iteration: usize,
) -> Result<(LabelMap, IterationRecord)> {
    let fwd = forward(image, params, hp)?;
    let labels = assign_labels(&fwd.response);
    let loss = total_loss(&fwd.response, &labels, scr, hp.mu, hp.nu, hp.tv_bounds)?;
    let values = loss.values();
    if !values.total.is_finite() || loss.grad_response.first_non_finite().is_some() {
        return Err(Error::Diverged {
            iteration,
            sim: values.sim,
            con: values.con,
            scr: values.scr,
            total: values.total,
        });
    }
    let grads = backward(image, params, &fwd.state, &loss.grad_response)?;
    sgd_momentum_step(params, &grads, hp.lr, hp.momentum)?;
    let record = IterationRecord {
        iteration,
        loss: values,
        unique_labels: labels.unique_count(),
    };
    Ok((labels, record))
}

/// Segments one image from scratch. Runs up to `hp.iterations` steps and
/// stops after the first step whose label count is ≤ `hp.min_labels`.
pub fn segment(image: &Image, hp: &HyperParams, scr: Option<&Scribbles>) -> Result<SegmentationResult> {
    hp.validate()?;
    if let Some(s) = scr {
        if (s.height, s.width) != (image.height(), image.width()) {
            return Err(Error::invalid(format!(
                "scribbles are {}×{}, image is {}×{}",
                s.height,
                s.width,
                image.height(),
                image.width()
            )));
        }
    }
    let mut params = init_params::<f32>(hp)?;
    let mut history = Vec::new();
    let mut labels = LabelMap::filled(image.height(), image.width(), 0);
    for t in 1..=hp.iterations {
        let (l, record) = train_step(image, &mut params, hp, scr, t)?;
        labels = l;
        history.push(record);
        if record.unique_labels <= hp.min_labels {
            break;
        }
    }
    Ok(SegmentationResult {
        unique_label_count: labels.unique_count(),
        iterations_run: history.len(),
        loss_history: history,
        labels,
        params,
    })
}

/// Reference-image training: `epochs` passes over `images` in order, one
/// update per image, no scribbles and no early stop.
pub fn train_reference(images: &[Image], hp: &HyperParams, epochs: usize) -> Result<(NetworkParams<f32>, Vec<IterationRecord>)> {
    hp.validate()?;
    if images.is_empty() {
        return Err(Error::invalid("train_reference needs at least one image"));
    }
    if epochs == 0 {
        return Err(Error::invalid("epochs must be ≥ 1"));
    }
    let mut params = init_params::<f32>(hp)?;
    let mut history = Vec::with_capacity(images.len() * epochs);
    for _ in 0..epochs {
        for image in images {
            let (_, record) = train_step(image, &mut params, hp, None, history.len() + 1)?;
            history.push(record);
        }
    }
    Ok((params, history))
}

/// Labels `image` with frozen weights. Batch statistics come from `image`.
pub fn apply_fixed(params: &NetworkParams<f32>, image: &Image, hp: &HyperParams) -> Result<LabelMap> {
    params.check_compatible(hp)?;
    let fwd = forward(image, params, hp)?;
    Ok(assign_labels(&fwd.response))
}

/// [`apply_fixed`] over an ordered frame sequence; output order matches
/// input order.
pub fn apply_fixed_frames(params: &NetworkParams<f32>, frames: &[Image], hp: &HyperParams) -> Result<Vec<LabelMap>> {
    par::map_range(frames.len(), |i| apply_fixed(params, &frames[i], hp))
        .into_iter()
        .collect()
}

const NONE: u32 = u32::MAX;

/// A set of pairwise-disjoint pixel masks over one image, stored as a
/// per-pixel segment index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSet {
    height: usize,
    width: usize,
    segment_of: Vec<u32>,
    sizes: Vec<usize>,
    /// Label each segment came from.
    pub source_labels: Vec<u32>,
}

impl SegmentSet {
    /// Builds a set from explicit masks; they must be disjoint and non-empty.
    pub fn from_masks(height: usize, width: usize, masks: &[Mask], source_labels: Vec<u32>) -> Result<Self> {
        if masks.len() != source_labels.len() {
            return Err(Error::invalid("one source label per mask required"));
        }
        let mut segment_of = vec![NONE; height * width];
        let mut sizes = Vec::with_capacity(masks.len());
        for (i, m) in masks.iter().enumerate() {
            if m.dims() != (height, width) {
                return Err(Error::invalid(format!("mask {i} has the wrong size")));
            }
            let mut size = 0;
            for (n, &b) in m.bits().iter().enumerate() {
                if b {
                    if segment_of[n] != NONE {
                        return Err(Error::invalid(format!("masks {} and {} overlap", segment_of[n], i)));
                    }
                    segment_of[n] = i as u32;
                    size += 1;
                }
            }
            if size == 0 {
                return Err(Error::invalid(format!("mask {i} is empty")));
            }
            sizes.push(size);
        }
        Ok(SegmentSet {
            height,
            width,
            segment_of,
            sizes,
            source_labels,
        })
    }

    /// One segment per distinct label value (connected or not), ordered by
    /// first appearance; pixels equal to `void_label` belong to no segment.
    pub fn from_label_regions(labels: &LabelMap, void_label: Option<u32>) -> Self {
        let mut index = std::collections::HashMap::new();
        let mut source_labels = Vec::new();
        let mut sizes = Vec::new();
        let segment_of = labels
            .as_slice()
            .iter()
            .map(|&l| {
                if Some(l) == void_label {
                    return NONE;
                }
                let i = *index.entry(l).or_insert_with(|| {
                    source_labels.push(l);
                    sizes.push(0);
                    source_labels.len() as u32 - 1
                });
                sizes[i as usize] += 1;
                i
            })
            .collect();
        SegmentSet {
            height: labels.height(),
            width: labels.width(),
            segment_of,
            sizes,
            source_labels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Pixel count of every segment.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Segment index of pixel `n`, if any.
    pub fn segment_at(&self, n: usize) -> Option<usize> {
        let s = self.segment_of[n];
        (s != NONE).then_some(s as usize)
    }

    pub fn mask(&self, i: usize) -> Mask {
        let bits = self.segment_of.iter().map(|&s| s == i as u32).collect();
        Mask::new(self.height, self.width, bits).expect("dimensions match")
    }

    pub fn masks(&self) -> impl Iterator<Item = Mask> + '_ {
        (0..self.len()).map(|i| self.mask(i))
    }

    /// Whether every pixel belongs to some segment.
    pub fn covers_all(&self) -> bool {
        self.segment_of.iter().all(|&s| s != NONE)
    }
}

/// Splits a label map into maximal 4-connected regions of equal label,
/// ordered by the scanline position of each region's first pixel.
pub fn extract_segments(labels: &LabelMap) -> SegmentSet {
    let (h, w) = (labels.height(), labels.width());
    let l = labels.as_slice();
    let mut segment_of = vec![NONE; h * w];
    let mut sizes = Vec::new();
    let mut source_labels = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if segment_of[start] != NONE {
            continue;
        }
        let id = sizes.len() as u32;
        let label = l[start];
        segment_of[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(n) = queue.pop_front() {
            size += 1;
            let (y, x) = (n / w, n % w);
            let mut visit = |m: usize| {
                if segment_of[m] == NONE && l[m] == label {
                    segment_of[m] = id;
                    queue.push_back(m);
                }
            };
            if x > 0 {
                visit(n - 1);
            }
            if x + 1 < w {
                visit(n + 1);
            }
            if y > 0 {
                visit(n - w);
            }
            if y + 1 < h {
                visit(n + w);
            }
        }
        sizes.push(size);
        source_labels.push(label);
    }
    SegmentSet {
        height: h,
        width: w,
        segment_of,
        sizes,
        source_labels,
    }
}
