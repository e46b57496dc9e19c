use super::topology::count_holes;
use super::MaskError;
use crate::raster::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityThresholds {
    pub max_size_ratio: f64,
    pub max_holes: usize,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            max_size_ratio: 3.0,
            max_holes: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityVerdict {
    pub hole_count: usize,
    pub size_ratio: f64,
    pub accepted: bool,
}

/// Region-size and topology checks on a refined mask against its base.
pub fn assess_quality(
    base: &BinaryMask,
    refined: &BinaryMask,
    thresholds: &QualityThresholds,
) -> Result<QualityVerdict, MaskError> {
    if base.dims() != refined.dims() {
        return Err(MaskError::DimensionMismatch {
            expected: base.dims(),
            got: refined.dims(),
        });
    }
    let size_ratio = refined.count() as f64 / base.count().max(1) as f64;
    let hole_count = count_holes(refined);
    Ok(QualityVerdict {
        hole_count,
        size_ratio,
        accepted: size_ratio <= thresholds.max_size_ratio && hole_count <= thresholds.max_holes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bar() -> BinaryMask {
        BinaryMask::from_fn(40, 40, |x, y| (5..35).contains(&x) && (18..21).contains(&y))
    }

    fn with_holes(n: u32) -> BinaryMask {
        BinaryMask::from_fn(40, 40, |x, y| {
            let inside = (5..35).contains(&x) && (15..24).contains(&y);
            let hole = y == 19 && x % 6 == 2 && x / 6 >= 1 && x / 6 <= n;
            inside && !hole
        })
    }

    #[test]
    fn identity_accepted() {
        let v = assess_quality(&bar(), &bar(), &QualityThresholds::default()).unwrap();
        assert!(v.accepted);
        assert_eq!(v.size_ratio, 1.0);
    }

    #[test]
    fn full_frame_rejected_on_size() {
        let full = BinaryMask::from_fn(40, 40, |_, _| true);
        let v = assess_quality(&bar(), &full, &QualityThresholds::default()).unwrap();
        assert!(!v.accepted);
        assert_eq!(v.hole_count, 0);
    }

    #[test]
    fn three_holes_rejected() {
        let refined = with_holes(3);
        assert_eq!(count_holes(&refined), 3);
        let base = BinaryMask::from_fn(40, 40, |x, y| (5..35).contains(&x) && (15..24).contains(&y));
        let v = assess_quality(&base, &refined, &QualityThresholds::default()).unwrap();
        assert_eq!(v.hole_count, 3);
        assert!(!v.accepted);
        let loose = QualityThresholds {
            max_holes: 3,
            ..QualityThresholds::default()
        };
        assert!(assess_quality(&base, &refined, &loose).unwrap().accepted);
    }

    #[test]
    fn mismatched_dims() {
        assert!(assess_quality(&bar(), &BinaryMask::new(4, 4), &QualityThresholds::default()).is_err());
    }

    proptest! {
        #[test]
        fn looser_thresholds_never_reject(n in 0u32..5, r in 0.5f64..5.0, h in 0usize..5, dr in 0.0f64..3.0, dh in 0usize..3) {
            let strict = QualityThresholds { max_size_ratio: r, max_holes: h };
            let loose = QualityThresholds { max_size_ratio: r + dr, max_holes: h + dh };
            let refined = with_holes(n);
            if assess_quality(&bar(), &refined, &strict).unwrap().accepted {
                prop_assert!(assess_quality(&bar(), &refined, &loose).unwrap().accepted);
            }
        }
    }
}
