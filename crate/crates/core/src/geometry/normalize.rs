use serde::{Deserialize, Serialize};

use super::{GeometryError, Result, Vec3};

/// Uniform scale followed by translation: `p' = scale * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub scale: f64,
    pub translation: Vec3,
}

impl Default for NormalizationTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            translation: Vec3::zeros(),
        }
    }

    /// Map the bounding box of `points` into the unit cube: the longest axis
    /// spans [0, 1] and the box is centered in the other two.
    pub fn fit(points: &[Vec3]) -> Result<Self> {
        let first = points.first().ok_or(GeometryError::Empty)?;
        let (mut lo, mut hi) = (*first, *first);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = (hi - lo).max();
        if !(extent > 0.0) {
            return Err(GeometryError::DegenerateBounds);
        }
        let scale = 1.0 / extent;
        let center = (lo + hi) * 0.5;
        Ok(Self {
            scale,
            translation: Vec3::repeat(0.5) - center * scale,
        })
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        p * self.scale + self.translation
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        (p - self.translation) / self.scale
    }

    pub fn inverse(&self) -> Self {
        Self {
            scale: 1.0 / self.scale,
            translation: -self.translation / self.scale,
        }
    }
}

/// Normalize a point list into the unit cube, returning the transform used.
pub fn normalize_points(points: &[Vec3]) -> Result<(Vec<Vec3>, NormalizationTransform)> {
    let tf = NormalizationTransform::fit(points)?;
    Ok((points.iter().map(|p| tf.apply(p)).collect(), tf))
}
