use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// `p ↦ linear·p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine3 {
    pub linear: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for Affine3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Affine3 {
    pub fn identity() -> Self {
        Self {
            linear: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.linear * p + self.translation
    }
}

/// Which model the fit settled on, given the pair geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AffineModel {
    Identity,
    Translation,
    Similarity,
    Full,
}

const RANK_TOL: f64 = 1e-9;

/// Least-squares fit of `u ≈ A·v + t` over `(v, u)` pairs.
///
/// Degrades with the pair geometry: four or more non-coplanar sources give a
/// full affine map, three or more non-collinear ones a similarity, anything
/// else a pure centroid translation (identity when there are no pairs).
pub fn estimate_global_affine(pairs: &[(Vec3, Vec3)]) -> (Affine3, AffineModel) {
    let k = pairs.len();
    if k == 0 {
        return (Affine3::identity(), AffineModel::Identity);
    }
    let inv_k = 1.0 / k as f64;
    let vc = pairs.iter().map(|p| p.0).sum::<Vec3>() * inv_k;
    let uc = pairs.iter().map(|p| p.1).sum::<Vec3>() * inv_k;
    let translation_only = (
        Affine3 {
            linear: Matrix3::identity(),
            translation: uc - vc,
        },
        AffineModel::Translation,
    );
    if k < 3 {
        return translation_only;
    }
    let vs = DMatrix::from_fn(k, 3, |r, c| pairs[r].0[c] - vc[c]);
    let sv = vs.clone().svd(false, false).singular_values;
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if !(s[0] > 0.0) || s[1] <= RANK_TOL * s[0] {
        return translation_only;
    }
    if k >= 4 && s[2] > RANK_TOL * s[0] {
        let us = DMatrix::from_fn(k, 3, |r, c| pairs[r].1[c] - uc[c]);
        let svd = vs.svd(true, true);
        if let Ok(x) = svd.solve(&us, RANK_TOL * s[0]) {
            // rows of x are the columns of Aᵀ
            let linear = Matrix3::from_fn(|r, c| x[(c, r)]);
            return (
                Affine3 {
                    linear,
                    translation: uc - linear * vc,
                },
                AffineModel::Full,
            );
        }
    }
    similarity(pairs, vc, uc)
}

/// Rotation + uniform scale + translation (Umeyama).
fn similarity(pairs: &[(Vec3, Vec3)], vc: Vec3, uc: Vec3) -> (Affine3, AffineModel) {
    let mut cov = Matrix3::zeros();
    let mut var_v = 0.0;
    for (v, u) in pairs {
        let dv = v - vc;
        cov += (u - uc) * dv.transpose();
        var_v += dv.norm_squared();
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u.determinant() * vt.determinant()) < 0.0 {
        let smallest = (0..3)
            .min_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap())
            .unwrap();
        d[(smallest, smallest)] = -1.0;
    }
    let rot = u * d * vt;
    let scale = (Matrix3::from_diagonal(&svd.singular_values) * d).trace() / var_v;
    let linear = rot * scale;
    (
        Affine3 {
            linear,
            translation: uc - linear * vc,
        },
        AffineModel::Similarity,
    )
}
