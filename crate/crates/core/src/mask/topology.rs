use crate::raster::BinaryMask;

/// Connected-component labeling of the foreground. Labels are 1-based in
/// row-major discovery order; background pixels get 0.
pub fn label_components(mask: &BinaryMask, eight_connected: bool) -> (Vec<u32>, u32) {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut labels = vec![0u32; mask.bits().len()];
    let mut next = 0;
    let offsets: &[(i64, i64)] = if eight_connected {
        &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
    } else {
        &[(0, -1), (-1, 0), (1, 0), (0, 1)]
    };
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i as i64 % w, i as i64 / w);
            for &(dx, dy) in offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let j = (ny * w + nx) as usize;
                if mask.bits()[j] && labels[j] == 0 {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
    }
    (labels, next)
}

/// Number of holes: 4-connected background components that do not touch
/// the image border.
pub fn count_holes(mask: &BinaryMask) -> usize {
    let inv = mask.inverted();
    let (labels, n) = label_components(&inv, false);
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut touches = vec![false; n as usize + 1];
    for x in 0..w {
        touches[labels[x] as usize] = true;
        touches[labels[(h - 1) * w + x] as usize] = true;
    }
    for y in 0..h {
        touches[labels[y * w] as usize] = true;
        touches[labels[y * w + w - 1] as usize] = true;
    }
    (1..=n as usize).filter(|&l| !touches[l]).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Euler number for 8-connected foreground via bit-quad counts.
    fn euler8(mask: &BinaryMask) -> i64 {
        let (w, h) = (mask.width() as i64, mask.height() as i64);
        let (mut q1, mut q3, mut qd) = (0i64, 0i64, 0i64);
        for y in -1..h {
            for x in -1..w {
                let a = mask.get_signed(x, y);
                let b = mask.get_signed(x + 1, y);
                let c = mask.get_signed(x, y + 1);
                let d = mask.get_signed(x + 1, y + 1);
                match [a, b, c, d].iter().filter(|&&v| v).count() {
                    1 => q1 += 1,
                    3 => q3 += 1,
                    2 if a == d => qd += 1,
                    _ => {}
                }
            }
        }
        (q1 - q3 - 2 * qd) / 4
    }

    fn disk(n: u32, r_in: f64, r_out: f64) -> BinaryMask {
        let c = n as f64 / 2.0;
        BinaryMask::from_fn(n, n, |x, y| {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
            d <= r_out && d >= r_in
        })
    }

    #[test]
    fn disk_and_annulus() {
        assert_eq!(count_holes(&disk(30, -1.0, 10.0)), 0);
        assert_eq!(count_holes(&disk(30, 5.0, 10.0)), 1);
        assert_eq!(count_holes(&BinaryMask::new(4, 4)), 0);
    }

    #[test]
    fn matches_euler_number_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..200 {
            let p = [0.3, 0.5, 0.7][trial % 3];
            let (w, h) = (rng.random_range(1..30), rng.random_range(1..30));
            let bits = (0..w * h).map(|_| rng.random_bool(p)).collect();
            let m = BinaryMask::from_bits(w, h, bits).unwrap();
            let components = label_components(&m, true).1 as i64;
            assert_eq!(count_holes(&m) as i64, components - euler8(&m));
        }
    }

    #[test]
    fn invariant_under_translation_and_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let bits = (0..20 * 14).map(|_| rng.random_bool(0.6)).collect();
            let m = BinaryMask::from_bits(20, 14, bits).unwrap();
            let shifted = BinaryMask::from_fn(27, 19, |x, y| m.get_signed(x as i64 - 4, y as i64 - 3));
            let rotated = BinaryMask::from_fn(14, 20, |x, y| m.get(y, 13 - x));
            let holes = count_holes(&m);
            assert_eq!(count_holes(&shifted), holes);
            assert_eq!(count_holes(&rotated), holes);
        }
    }
}
