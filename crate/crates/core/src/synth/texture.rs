//! Procedural surface texture.

/// Surface reflectance in `[0, 1]` as a function of chart position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    Constant(f64),
    /// Two-octave value noise; `scale` is the coarse lattice cell in meters.
    Noise { seed: u64, scale: f64 },
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(key: u64, i: i64, j: i64) -> f64 {
    let h = splitmix(key ^ splitmix(i as u64 ^ splitmix(j as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(key: u64, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (i, j) = (fx as i64, fy as i64);
    let (sx, sy) = (smooth(x - fx), smooth(y - fy));
    let top = lattice(key, i, j) * (1.0 - sx) + lattice(key, i + 1, j) * sx;
    let bottom = lattice(key, i, j + 1) * (1.0 - sx) + lattice(key, i + 1, j + 1) * sx;
    top * (1.0 - sy) + bottom * sy
}

impl Texture {
    /// Reflectance on face `face` of part `part` at chart `(a, b)`.
    pub fn value(&self, part: usize, face: u8, a: f64, b: f64) -> f64 {
        match *self {
            Texture::Constant(v) => v.clamp(0.0, 1.0),
            Texture::Noise { seed, scale } => {
                let key = splitmix(seed ^ splitmix(part as u64 * 8 + face as u64));
                let coarse = value_noise(key, a / scale, b / scale);
                let fine = value_noise(splitmix(key), a / (0.4 * scale), b / (0.4 * scale));
                0.6 * coarse + 0.4 * fine
            }
        }
    }
}

/// Gray level for reflectance `v`; crack pixels are darkened.
pub fn shade(v: f64, crack: bool) -> f64 {
    let g = 30.0 + 200.0 * v;
    if crack {
        0.25 * g
    } else {
        g
    }
}

/// RGB rendering of a gray level.
pub fn tint(gray: f64) -> [u8; 3] {
    let q = |x: f64| (x + 0.5).floor().clamp(0.0, 255.0) as u8;
    [q(gray), q(0.85 * gray + 15.0), q(0.7 * gray + 25.0)]
}
