use crate::error::{Error, Result};
use crate::image::{Image, LabelMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsConfig {
    /// Scale parameter τ in the merge threshold `Int(C) + τ/|C|`.
    pub tau: f64,
    /// Standard deviation of the Gaussian pre-smoothing (0 disables it).
    pub sigma: f64,
    /// Components smaller than this are merged into a neighbour afterwards.
    pub min_size: usize,
}

impl Default for GsConfig {
    fn default() -> Self {
        GsConfig {
            tau: 500.0,
            sigma: 1.0,
            min_size: 0,
        }
    }
}

/// Discrete Gaussian truncated at 4σ and renormalized to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur of one H×W plane with replicate padding.
pub fn gaussian_smooth(plane: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    let sx = (x as isize + i as isize - r).clamp(0, width as isize - 1) as usize;
                    k * plane[y * width + sx]
                })
                .sum();
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    let sy = (y as isize + i as isize - r).clamp(0, height as isize - 1) as usize;
                    k * tmp[sy * width + x]
                })
                .sum();
        }
    }
    out
}

struct Forest {
    parent: Vec<usize>,
    size: Vec<usize>,
    /// Largest edge weight merged into the component (its internal difference).
    internal: Vec<f64>,
}

impl Forest {
    fn new(n: usize) -> Self {
        Forest {
            parent: (0..n).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize, weight: f64) {
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.internal[big] = self.internal[big].max(self.internal[small]).max(weight);
    }
}

struct Edge {
    a: usize,
    b: usize,
    w: f64,
}

/// Graph-based segmentation on the 8-connected pixel grid with Euclidean RGB
/// edge weights, merging in ascending weight order whenever the connecting
/// edge is no heavier than both components' `Int(C) + τ/|C|`.
pub fn felzenszwalb(image: &Image, cfg: &GsConfig) -> Result<LabelMap> {
    if !(cfg.tau > 0.0) || !(cfg.sigma >= 0.0) {
        return Err(Error::invalid("gs: tau must be positive and sigma non-negative"));
    }
    let (h, w) = (image.height(), image.width());
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            let plane: Vec<f64> = image.plane(c).iter().map(|&v| v as f64).collect();
            gaussian_smooth(&plane, h, w, cfg.sigma)
        })
        .collect();
    let dist = |a: usize, b: usize| -> f64 {
        planes
            .iter()
            .map(|p| (p[a] - p[b]) * (p[a] - p[b]))
            .sum::<f64>()
            .sqrt()
    };

    let mut edges = Vec::with_capacity(4 * h * w);
    for y in 0..h {
        for x in 0..w {
            let a = y * w + x;
            if x + 1 < w {
                edges.push(Edge { a, b: a + 1, w: dist(a, a + 1) });
            }
            if y + 1 < h {
                edges.push(Edge { a, b: a + w, w: dist(a, a + w) });
                if x + 1 < w {
                    edges.push(Edge { a, b: a + w + 1, w: dist(a, a + w + 1) });
                }
            }
            if y > 0 && x + 1 < w {
                edges.push(Edge { a, b: a - w + 1, w: dist(a, a - w + 1) });
            }
        }
    }
    edges.sort_by(|e, f| e.w.total_cmp(&f.w));

    let mut forest = Forest::new(h * w);
    for e in &edges {
        let (ra, rb) = (forest.find(e.a), forest.find(e.b));
        if ra == rb {
            continue;
        }
        let threshold = |r: usize| forest.internal[r] + cfg.tau / forest.size[r] as f64;
        if e.w <= threshold(ra).min(threshold(rb)) {
            forest.union(ra, rb, e.w);
        }
    }
    if cfg.min_size > 0 {
        for e in &edges {
            let (ra, rb) = (forest.find(e.a), forest.find(e.b));
            if ra != rb && (forest.size[ra] < cfg.min_size || forest.size[rb] < cfg.min_size) {
                forest.union(ra, rb, e.w);
            }
        }
    }
    let roots: Vec<u32> = (0..h * w).map(|n| forest.find(n) as u32).collect();
    Ok(LabelMap::new(h, w, roots)?.relabel_dense())
}
