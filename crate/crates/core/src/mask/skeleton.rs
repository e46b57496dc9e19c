use std::sync::OnceLock;

use super::edt::{euclidean_distance_transform, DistanceGrid};
use crate::raster::BinaryMask;

/// Ring order around a pixel; odd entries are the 4-neighbors.
const RING: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
];

fn components(members: &[usize], adjacent: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut seen = [false; 8];
    let mut out = Vec::new();
    for &start in members {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(a) = stack.pop() {
            for &b in members {
                if !seen[b] && adjacent(a, b) {
                    seen[b] = true;
                    comp.push(b);
                    stack.push(b);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Whether removing the center pixel preserves topology (8-connected
/// foreground, 4-connected background), indexed by the ring bit pattern.
fn simple_table() -> &'static [bool; 256] {
    static TABLE: OnceLock<[bool; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [false; 256];
        for (pattern, slot) in t.iter_mut().enumerate() {
            let fg: Vec<usize> = (0..8).filter(|i| pattern >> i & 1 == 1).collect();
            let bg: Vec<usize> = (0..8).filter(|i| pattern >> i & 1 == 0).collect();
            let cheb = |a: usize, b: usize| {
                let (ax, ay) = RING[a];
                let (bx, by) = RING[b];
                (ax - bx).abs().max((ay - by).abs()) == 1
            };
            let manhattan = |a: usize, b: usize| {
                let (ax, ay) = RING[a];
                let (bx, by) = RING[b];
                (ax - bx).abs() + (ay - by).abs() == 1
            };
            let fg_count = components(&fg, cheb).len();
            let bg_count = components(&bg, manhattan)
                .iter()
                .filter(|c| c.iter().any(|i| i % 2 == 1))
                .count();
            *slot = fg_count == 1 && bg_count == 1;
        }
        t
    })
}

fn ring_pattern(mask: &BinaryMask, x: u32, y: u32) -> u8 {
    RING.iter().enumerate().fold(0u8, |acc, (i, &(dx, dy))| {
        if mask.get_signed(x as i64 + dx, y as i64 + dy) {
            acc | (1 << i)
        } else {
            acc
        }
    })
}

/// Whether foreground pixel `(x, y)` can be removed without changing the
/// mask's topology.
pub fn is_simple(mask: &BinaryMask, x: u32, y: u32) -> bool {
    simple_table()[ring_pattern(mask, x, y) as usize]
}

/// Foreground pixels that are a local maximum of the distance transform
/// along its own gradient direction, quantized to the nearest of the four
/// principal directions. Where the central-difference gradient vanishes, a
/// strict maximum across any principal direction qualifies.
fn ridge(mask: &BinaryMask, edt: &DistanceGrid) -> BinaryMask {
    const DIRS: [(i64, i64); 4] = [(1, 0), (1, 1), (0, 1), (-1, 1)];
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        let d = edt.get(x, y);
        let (x, y) = (x as i64, y as i64);
        let gx = edt.get_signed(x + 1, y) - edt.get_signed(x - 1, y);
        let gy = edt.get_signed(x, y + 1) - edt.get_signed(x, y - 1);
        let not_below = |(dx, dy): (i64, i64)| {
            d >= edt.get_signed(x + dx, y + dy) && d >= edt.get_signed(x - dx, y - dy)
        };
        if gx.is_finite() && gy.is_finite() && (gx != 0.0 || gy != 0.0) {
            let angle = gy.atan2(gx).rem_euclid(std::f64::consts::PI);
            let sector = (angle / std::f64::consts::FRAC_PI_4).round() as usize % 4;
            return not_below(DIRS[sector]);
        }
        DIRS.iter().any(|&(dx, dy)| {
            let a = edt.get_signed(x + dx, y + dy);
            let b = edt.get_signed(x - dx, y - dy);
            d >= a && d >= b && (d > a || d > b)
        })
    })
}

/// Medial skeleton: pixels off the distance-transform ridge are removed in
/// order of increasing distance, then the remainder is thinned to unit width
/// by directional passes. Only simple pixels are ever removed, so the number
/// of 8-connected components is preserved; line endpoints are kept so
/// branches do not shrink.
pub fn extract_skeleton(mask: &BinaryMask) -> BinaryMask {
    let edt = euclidean_distance_transform(mask);
    skeleton_with_edt(mask, &edt)
}

pub fn skeleton_with_edt(mask: &BinaryMask, edt: &DistanceGrid) -> BinaryMask {
    let ridge = ridge(mask, edt);
    let mut out = mask.clone();
    let mut order: Vec<(u32, u32)> = mask.foreground().collect();
    // stable: equal distances keep row-major order
    order.sort_by(|a, b| edt.get(a.0, a.1).total_cmp(&edt.get(b.0, b.1)));
    loop {
        let mut changed = false;
        // phase 1: strip everything off the ridge
        loop {
            let mut pass = false;
            for &(x, y) in &order {
                if out.get(x, y) && !ridge.get(x, y) && is_simple(&out, x, y) {
                    out.set(x, y, false);
                    pass = true;
                }
            }
            if !pass {
                break;
            }
            changed = true;
        }
        // phase 2: thin what is left to unit width, one border direction at
        // a time so ribbons lose a side instead of being peeled from an end
        for (dx, dy) in [(0i64, -1i64), (0, 1), (1, 0), (-1, 0)] {
            let border: Vec<(u32, u32)> = order
                .iter()
                .copied()
                .filter(|&(x, y)| out.get(x, y) && !out.get_signed(x as i64 + dx, y as i64 + dy))
                .collect();
            for (x, y) in border {
                let neighbors = ring_pattern(&out, x, y).count_ones();
                if neighbors > 1 && is_simple(&out, x, y) {
                    out.set(x, y, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    out
}
