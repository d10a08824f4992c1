//! Head assets on disk, stored in the [`crate::archive`] container with kind
//! `head-asset`. Entries, in order:
//!
//! | name                  | dtype | shape              |
//! |-----------------------|-------|--------------------|
//! | `template`            | f32   | N x 3              |
//! | `faces`               | u32   | F x 3              |
//! | `shape_basis`         | f32   | N x 3 x S          |
//! | `expression_basis`    | f32   | N x 3 x E          |
//! | `pose_basis`          | f32   | N x 3 x 9(K-1)     |
//! | `joint_regressor`     | f32   | K x N              |
//! | `skinning_weights`    | f32   | N x K              |
//! | `joint_parents`       | i32   | K                  |
//! | `landmark_indices`    | u32   | 68                 |
//! | `normalized_template` | f32   | N x 3              |
//!
//! The header `meta` repeats N, F, K, S and E. Everything is validated on load.

use super::HeadAsset;
use crate::archive::{ArrayData, Archive};
use crate::error::{Error, Result};
use serde_json::json;
use std::path::Path;

pub const ASSET_KIND: &str = "head-asset";

fn f32s(v: impl IntoIterator<Item = f64>) -> Vec<f32> {
    v.into_iter().map(|x| x as f32).collect()
}

fn f64s(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn triples(v: &[f32]) -> Vec<[f64; 3]> {
    v.chunks_exact(3).map(|c| [c[0] as f64, c[1] as f64, c[2] as f64]).collect()
}

impl HeadAsset {
    pub fn to_archive(&self) -> Result<Archive> {
        let n = self.num_vertices();
        let k = self.num_joints();
        let meta = json!({
            "vertices": n,
            "faces": self.faces.len(),
            "joints": k,
            "shape": self.n_shape,
            "expression": self.n_expression,
        });
        let mut a = Archive::new(ASSET_KIND, meta);
        a.push_f32("template", vec![n, 3], f32s(self.template.iter().flatten().copied()))?;
        a.push(
            "faces",
            vec![self.faces.len(), 3],
            ArrayData::U32(self.faces.iter().flatten().copied().collect()),
        )?;
        a.push_f32("shape_basis", vec![n, 3, self.n_shape], f32s(self.shape_basis.iter().copied()))?;
        a.push_f32(
            "expression_basis",
            vec![n, 3, self.n_expression],
            f32s(self.expression_basis.iter().copied()),
        )?;
        a.push_f32("pose_basis", vec![n, 3, self.num_pose_features()], f32s(self.pose_basis.iter().copied()))?;
        a.push_f32("joint_regressor", vec![k, n], f32s(self.joint_regressor.iter().copied()))?;
        a.push_f32("skinning_weights", vec![n, k], f32s(self.skinning_weights.iter().copied()))?;
        a.push("joint_parents", vec![k], ArrayData::I32(self.joint_parents.clone()))?;
        a.push(
            "landmark_indices",
            vec![self.landmark_indices.len()],
            ArrayData::U32(self.landmark_indices.clone()),
        )?;
        a.push_f32("normalized_template", vec![n, 3], f32s(self.normalized_template.iter().flatten().copied()))?;
        Ok(a)
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        a.expect_kind(ASSET_KIND)?;
        let (tshape, template) = a.f32("template")?;
        let n = tshape.first().copied().unwrap_or(0);
        let (_, faces) = a.u32("faces")?;
        let (sshape, shape_basis) = a.f32("shape_basis")?;
        let (eshape, expression_basis) = a.f32("expression_basis")?;
        let (_, pose_basis) = a.f32("pose_basis")?;
        let (_, regressor) = a.f32("joint_regressor")?;
        let (_, skinning) = a.f32("skinning_weights")?;
        let (_, parents) = a.i32("joint_parents")?;
        let (_, landmarks) = a.u32("landmark_indices")?;
        let (_, normalized) = a.f32("normalized_template")?;
        let dim = |s: &[usize]| s.get(2).copied().unwrap_or(0);
        // Basis shapes are cross-checked against N by validate().
        let asset = Self {
            template: triples(template),
            faces: faces.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            shape_basis: f64s(shape_basis),
            expression_basis: f64s(expression_basis),
            pose_basis: f64s(pose_basis),
            n_shape: dim(sshape),
            n_expression: dim(eshape),
            joint_regressor: f64s(regressor),
            skinning_weights: f64s(skinning),
            joint_parents: parents.to_vec(),
            landmark_indices: landmarks.to_vec(),
            normalized_template: triples(normalized),
        };
        if asset.num_vertices() != n {
            return Err(Error::Config("template shape mismatch".into()));
        }
        asset.validate()?;
        Ok(asset)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::face_model::procedural_head;

    #[test]
    fn asset_round_trips_through_f32() {
        let a = procedural_head();
        let b = HeadAsset::from_archive(&a.to_archive().unwrap()).unwrap();
        assert_eq!(a.faces, b.faces);
        assert_eq!(a.landmark_indices, b.landmark_indices);
        for (p, q) in a.template.iter().flatten().zip(b.template.iter().flatten()) {
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn loader_validates() {
        let mut a = procedural_head();
        a.faces[3][1] = 10_000;
        let archive = a.to_archive().unwrap();
        assert!(HeadAsset::from_archive(&archive).is_err());
        let mut b = procedural_head();
        b.skinning_weights[0] += 0.5;
        assert!(HeadAsset::from_archive(&b.to_archive().unwrap()).is_err());
    }
}
