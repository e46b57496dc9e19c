use super::edt::DistanceGrid;
use super::MaskError;
use crate::raster::{BinaryMask, PixelRect};

/// Prompt points grouped into clusters, with one crop rectangle per cluster.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PromptSet {
    pub points: Vec<(u32, u32)>,
    pub cluster_id: Vec<usize>,
    pub crop_rects: Vec<PixelRect>,
}

impl PromptSet {
    /// Members of cluster `c`.
    pub fn cluster_points(&self, c: usize) -> Vec<(u32, u32)> {
        self.points
            .iter()
            .zip(&self.cluster_id)
            .filter(|(_, &id)| id == c)
            .map(|(&p, _)| p)
            .collect()
    }
}

fn dist(a: (u32, u32), b: (u32, u32)) -> f64 {
    let dx = a.0 as f64 - b.0 as f64;
    let dy = a.1 as f64 - b.1 as f64;
    (dx * dx + dy * dy).sqrt()
}

/// Skeleton pixels ranked by distance-transform value (descending, ties in
/// row-major order), greedily kept when at least `min_dist` from every
/// point kept so far, until `k` are kept.
pub fn sample_prompts(
    skeleton: &BinaryMask,
    edt: &DistanceGrid,
    k: usize,
    min_dist: f64,
) -> Result<Vec<(u32, u32)>, MaskError> {
    if k == 0 {
        return Err(MaskError::InvalidParameter("k must be at least 1".into()));
    }
    let mut ranked: Vec<(u32, u32)> = skeleton.foreground().collect();
    if ranked.is_empty() {
        return Err(MaskError::EmptySkeleton);
    }
    ranked.sort_by(|a, b| edt.get(b.0, b.1).total_cmp(&edt.get(a.0, a.1)));
    let mut kept: Vec<(u32, u32)> = Vec::with_capacity(k);
    for p in ranked {
        if kept.len() == k {
            break;
        }
        if kept.iter().all(|&q| dist(p, q) >= min_dist) {
            kept.push(p);
        }
    }
    Ok(kept)
}

/// Density-based clustering of prompt points. A point is a core point when
/// at least `min_pts` points (itself included) lie within `eps`. Clusters
/// are the connected components of core points; a non-core point joins the
/// cluster of its nearest core neighbor within `eps` and is noise (`None`)
/// otherwise. Cluster ids follow the order of each cluster's first core point.
pub fn cluster_prompts(points: &[(u32, u32)], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(points[i], points[j]) <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut label = vec![None; n];
    let mut next = 0;
    for start in 0..n {
        if !core[start] || label[start].is_some() {
            continue;
        }
        label[start] = Some(next);
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for &j in &neighbors[i] {
                if core[j] && label[j].is_none() {
                    label[j] = Some(next);
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    for i in 0..n {
        if core[i] {
            continue;
        }
        let nearest_core = neighbors[i]
            .iter()
            .filter(|&&j| core[j])
            .min_by(|&&a, &&b| dist(points[i], points[a]).total_cmp(&dist(points[i], points[b])));
        label[i] = nearest_core.and_then(|&j| label[j]);
    }
    label
}

/// Bounding box of each cluster's members grown by `dilation` on every side
/// and clamped to the image.
pub fn make_crop_batches(
    points: &[(u32, u32)],
    labels: &[Option<usize>],
    dilation: u32,
    dims: (u32, u32),
) -> Result<Vec<PixelRect>, MaskError> {
    let clusters = labels.iter().flatten().max().map_or(0, |&m| m + 1);
    if clusters == 0 {
        return Err(MaskError::NoClusters);
    }
    let mut bounds = vec![(u32::MAX, u32::MAX, 0u32, 0u32); clusters];
    for (&(u, v), l) in points.iter().zip(labels) {
        if let Some(c) = *l {
            let b = &mut bounds[c];
            *b = (b.0.min(u), b.1.min(v), b.2.max(u), b.3.max(v));
        }
    }
    Ok(bounds
        .into_iter()
        .map(|(u_min, v_min, u_max, v_max)| {
            let u0 = u_min.saturating_sub(dilation);
            let v0 = v_min.saturating_sub(dilation);
            let u1 = u_max.saturating_add(dilation).min(dims.0 - 1);
            let v1 = v_max.saturating_add(dilation).min(dims.1 - 1);
            PixelRect {
                u0,
                v0,
                w: u1 - u0 + 1,
                h: v1 - v0 + 1,
            }
        })
        .collect())
}

/// Drops noise points and attaches crop rectangles.
pub fn build_prompt_set(
    points: &[(u32, u32)],
    labels: &[Option<usize>],
    dilation: u32,
    dims: (u32, u32),
) -> Result<PromptSet, MaskError> {
    let crop_rects = make_crop_batches(points, labels, dilation, dims)?;
    let (points, cluster_id) = points
        .iter()
        .zip(labels)
        .filter_map(|(&p, l)| l.map(|c| (p, c)))
        .unzip();
    Ok(PromptSet {
        points,
        cluster_id,
        crop_rects,
    })
}
