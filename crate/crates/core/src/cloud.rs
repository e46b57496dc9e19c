use thiserror::Error;

use crate::geometry::{Point3, RigidPose};

/// Semantic label for background points.
pub const LABEL_BACKGROUND: u8 = 0;
/// Semantic label for crack points.
pub const LABEL_CRACK: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("attribute `{name}` has {len} entries for {points} points")]
pub struct AttributeLengthError {
    pub name: &'static str,
    pub len: usize,
    pub points: usize,
}

/// Ordered points with optional per-point attributes. Attribute vectors,
/// when present, always have one entry per point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub intensity: Option<Vec<f32>>,
    pub color: Option<Vec<[u8; 3]>>,
    pub label: Option<Vec<u8>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point3>) -> Self {
        Self {
            points,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<(), AttributeLengthError> {
        let n = self.points.len();
        let check = |name, len: Option<usize>| match len {
            Some(len) if len != n => Err(AttributeLengthError {
                name,
                len,
                points: n,
            }),
            _ => Ok(()),
        };
        check("intensity", self.intensity.as_ref().map(Vec::len))?;
        check("color", self.color.as_ref().map(Vec::len))?;
        check("label", self.label.as_ref().map(Vec::len))
    }

    /// New cloud holding the selected points (and their attributes) in the
    /// order given.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            intensity: self
                .intensity
                .as_ref()
                .map(|v| indices.iter().map(|&i| v[i]).collect()),
            color: self
                .color
                .as_ref()
                .map(|v| indices.iter().map(|&i| v[i]).collect()),
            label: self
                .label
                .as_ref()
                .map(|v| indices.iter().map(|&i| v[i]).collect()),
        }
    }

    pub fn transformed(&self, pose: &RigidPose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            ..self.clone()
        }
    }

    /// Keeps points strictly inside the axis-aligned box `(min, max)`.
    pub fn crop_box(&self, min: &Point3, max: &Point3) -> PointCloud {
        let keep: Vec<usize> = self
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| (0..3).all(|k| p[k] > min[k] && p[k] < max[k]))
            .map(|(i, _)| i)
            .collect();
        self.select(&keep)
    }
}

/// Free-function form of [`PointCloud::crop_box`].
pub fn crop_box(cloud: &PointCloud, min: &Point3, max: &Point3) -> PointCloud {
    cloud.crop_box(min, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn crop_box_matches_per_point_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point3> = (0..2000)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let mut cloud = PointCloud::from_points(pts.clone());
        cloud.label = Some((0..2000).map(|i| (i % 2) as u8).collect());
        let lo = Point3::new(-0.3, -0.5, 0.0);
        let hi = Point3::new(0.4, 0.2, 0.9);
        let cropped = cloud.crop_box(&lo, &hi);
        let expected: Vec<usize> = (0..pts.len())
            .filter(|&i| {
                let p = pts[i];
                p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y && p.z > lo.z && p.z < hi.z
            })
            .collect();
        assert_eq!(cropped.len(), expected.len());
        for (k, &i) in expected.iter().enumerate() {
            assert_eq!(cropped.points[k], pts[i]);
            assert_eq!(cropped.label.as_ref().unwrap()[k], (i % 2) as u8);
        }
        cropped.validate().unwrap();

        let all = cloud.crop_box(&Point3::new(-2.0, -2.0, -2.0), &Point3::new(2.0, 2.0, 2.0));
        assert_eq!(all, cloud);
        let none = cloud.crop_box(&Point3::new(5.0, 5.0, 5.0), &Point3::new(6.0, 6.0, 6.0));
        assert!(none.is_empty());
    }

    #[test]
    fn validate_catches_length_mismatch() {
        let mut c = PointCloud::from_points(vec![Point3::origin(); 3]);
        c.intensity = Some(vec![0.0; 2]);
        assert_eq!(c.validate().unwrap_err().name, "intensity");
    }
}
