//! Parametric head: blendshapes, pose correctives and linear blend skinning
//! over a small joint tree, plus a weak-perspective camera.

mod asset_file;
mod procedural;

pub use procedural::{procedural_head, ProceduralHead, JAW, LEFT_EYE, NECK, RIGHT_EYE, ROOT};

use crate::error::{config, input, Result};
use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

/// Mesh topology, blend bases and skeleton of a parametric head.
///
/// Bases are stored vertex-major: `shape_basis[(v * 3 + axis) * n_shape + k]`.
/// The pose-corrective basis has `9 * (K - 1)` columns, one per entry of
/// `R_j - I` for every non-root joint `j`, row-major within each joint.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadAsset {
    pub template: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub shape_basis: Vec<f64>,
    pub expression_basis: Vec<f64>,
    pub pose_basis: Vec<f64>,
    pub n_shape: usize,
    pub n_expression: usize,
    /// `K x N`, row-major.
    pub joint_regressor: Vec<f64>,
    /// `N x K`, row-major.
    pub skinning_weights: Vec<f64>,
    /// Parent of each joint, `-1` for the root.
    pub joint_parents: Vec<i32>,
    pub landmark_indices: Vec<u32>,
    pub normalized_template: Vec<[f64; 3]>,
}

/// Weak-perspective camera: uniform scale plus a 2-D translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            scale: 1.0,
            tx: 0.0,
            ty: 0.0,
        }
    }
}

/// Shape, per-joint axis-angle pose, expression and camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceParams {
    pub beta: Vec<f64>,
    pub theta: Vec<[f64; 3]>,
    pub psi: Vec<f64>,
    pub camera: Camera,
}

impl FaceParams {
    /// All-zero parameters with an identity camera.
    pub fn neutral(asset: &HeadAsset) -> Self {
        Self {
            beta: vec![0.0; asset.n_shape],
            theta: vec![[0.0; 3]; asset.num_joints()],
            psi: vec![0.0; asset.n_expression],
            camera: Camera::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.beta.iter().chain(&self.psi).chain(self.theta.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(input("face parameters contain non-finite values"));
        }
        let cam = self.camera;
        if !(cam.scale > 0.0 && cam.scale.is_finite() && cam.tx.is_finite() && cam.ty.is_finite()) {
            return Err(input(format!("invalid camera {cam:?}")));
        }
        Ok(())
    }
}

/// Posed vertex positions; the faces are those of the asset.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
}

/// Image-space positions (pixels, y down) and depth (smaller is nearer).
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub xy: Vec<[f64; 2]>,
    pub depth: Vec<f64>,
}

impl HeadAsset {
    pub fn num_vertices(&self) -> usize {
        self.template.len()
    }

    pub fn num_joints(&self) -> usize {
        self.joint_parents.len()
    }

    pub fn num_pose_features(&self) -> usize {
        9 * self.num_joints().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vertices();
        let k = self.num_joints();
        if n == 0 || k == 0 {
            return Err(config("asset needs at least one vertex and one joint"));
        }
        let sizes = [
            ("shape_basis", self.shape_basis.len(), n * 3 * self.n_shape),
            ("expression_basis", self.expression_basis.len(), n * 3 * self.n_expression),
            ("pose_basis", self.pose_basis.len(), n * 3 * self.num_pose_features()),
            ("joint_regressor", self.joint_regressor.len(), k * n),
            ("skinning_weights", self.skinning_weights.len(), n * k),
            ("normalized_template", self.normalized_template.len(), n),
        ];
        for (name, got, want) in sizes {
            if got != want {
                return Err(config(format!("{name} has {got} entries, expected {want}")));
            }
        }
        if let Some(f) = self.faces.iter().find(|f| f.iter().any(|&i| i as usize >= n)) {
            return Err(config(format!("face {f:?} indexes past {n} vertices")));
        }
        if let Some(&l) = self.landmark_indices.iter().find(|&&i| i as usize >= n) {
            return Err(config(format!("landmark index {l} out of range")));
        }
        for (v, row) in self.skinning_weights.chunks(k).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
                return Err(config(format!("skinning weights of vertex {v} are {row:?}")));
            }
        }
        if self.joint_parents[0] != -1 {
            return Err(config("joint 0 must be the root"));
        }
        for (j, &p) in self.joint_parents.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= j {
                return Err(config(format!("joint {j} has parent {p}; parents must precede children")));
            }
        }
        if self.normalized_template.iter().flatten().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(config("normalized template leaves [0, 1]"));
        }
        let all = self
            .template
            .iter()
            .flatten()
            .chain(&self.shape_basis)
            .chain(&self.expression_basis)
            .chain(&self.pose_basis)
            .chain(&self.joint_regressor);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(config("asset contains non-finite values"));
        }
        Ok(())
    }

    fn check_params(&self, p: &FaceParams) -> Result<()> {
        if p.beta.len() != self.n_shape || p.psi.len() != self.n_expression || p.theta.len() != self.num_joints() {
            return Err(config(format!(
                "parameters have |beta|={} |psi|={} |theta|={}, asset expects {} / {} / {}",
                p.beta.len(),
                p.psi.len(),
                p.theta.len(),
                self.n_shape,
                self.n_expression,
                self.num_joints()
            )));
        }
        p.validate()
    }

    /// Template plus shape offsets.
    pub fn shaped(&self, beta: &[f64]) -> Vec<[f64; 3]> {
        apply_basis(&self.template, &self.shape_basis, beta)
    }

    /// Joint locations regressed from shaped vertices.
    pub fn joints(&self, shaped: &[[f64; 3]]) -> Vec<Vector3<f64>> {
        let n = self.num_vertices();
        self.joint_regressor
            .chunks(n)
            .map(|row| {
                row.iter()
                    .zip(shaped)
                    .fold(Vector3::zeros(), |acc, (&w, v)| acc + w * Vector3::from(*v))
            })
            .collect()
    }

    /// Reorder vertices: new vertex `i` is old vertex `perm[i]`.
    pub fn permute_vertices(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_vertices();
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(input("not a permutation"));
            }
            inverse[old] = new;
        }
        if perm.len() != n {
            return Err(input("not a permutation"));
        }
        let k = self.num_joints();
        let rows = |data: &[f64], width: usize| -> Vec<f64> {
            perm.iter().flat_map(|&o| data[o * width..(o + 1) * width].iter().copied()).collect()
        };
        let remap = |i: u32| inverse[i as usize] as u32;
        Ok(Self {
            template: perm.iter().map(|&o| self.template[o]).collect(),
            faces: self.faces.iter().map(|f| f.map(remap)).collect(),
            shape_basis: rows(&self.shape_basis, 3 * self.n_shape),
            expression_basis: rows(&self.expression_basis, 3 * self.n_expression),
            pose_basis: rows(&self.pose_basis, 3 * self.num_pose_features()),
            n_shape: self.n_shape,
            n_expression: self.n_expression,
            joint_regressor: self
                .joint_regressor
                .chunks(n)
                .flat_map(|row| perm.iter().map(move |&o| row[o]))
                .collect(),
            skinning_weights: rows(&self.skinning_weights, k),
            joint_parents: self.joint_parents.clone(),
            landmark_indices: self.landmark_indices.iter().map(|&i| remap(i)).collect(),
            normalized_template: perm.iter().map(|&o| self.normalized_template[o]).collect(),
        })
    }
}

fn apply_basis(base: &[[f64; 3]], basis: &[f64], coeffs: &[f64]) -> Vec<[f64; 3]> {
    let m = coeffs.len();
    base.iter()
        .enumerate()
        .map(|(v, p)| {
            let mut out = *p;
            for (axis, o) in out.iter_mut().enumerate() {
                let row = &basis[(v * 3 + axis) * m..(v * 3 + axis + 1) * m];
                for (b, c) in row.iter().zip(coeffs) {
                    *o += b * c;
                }
            }
            out
        })
        .collect()
}

/// Axis-angle to rotation matrix. A zero vector gives the exact identity.
pub fn rodrigues(aa: [f64; 3]) -> Matrix3<f64> {
    let w = Vector3::from(aa);
    let angle = w.norm();
    if angle == 0.0 {
        return Matrix3::identity();
    }
    let k = w / angle;
    let kx = k.cross_matrix();
    Matrix3::identity() + angle.sin() * kx + (1.0 - angle.cos()) * kx * kx
}

/// Posed vertices by linear blend skinning with shape, expression and
/// pose-corrective blendshapes.
///
/// Each joint transform is applied as an offset `(R_j - I)(v - J_j) + q_j`,
/// where `q_j` is how far the joint itself has moved. Identity rotations
/// therefore contribute exact zeros, so the rest pose reproduces the template
/// bit for bit.
pub fn lbs(asset: &HeadAsset, params: &FaceParams) -> Result<Mesh> {
    asset.check_params(params)?;
    let k = asset.num_joints();
    let shaped = asset.shaped(&params.beta);
    let joints = asset.joints(&shaped);
    let local: Vec<Matrix3<f64>> = params.theta.iter().map(|&t| rodrigues(t)).collect();

    let mut pose_feature = Vec::with_capacity(asset.num_pose_features());
    for r in &local[1..] {
        let d = r - Matrix3::identity();
        for row in 0..3 {
            for col in 0..3 {
                pose_feature.push(d[(row, col)]);
            }
        }
    }
    let mut posed = apply_basis(&shaped, &asset.expression_basis, &params.psi);
    posed = apply_basis(&posed, &asset.pose_basis, &pose_feature);

    let mut world = Vec::with_capacity(k);
    let mut moved = Vec::with_capacity(k);
    for j in 0..k {
        match asset.joint_parents[j] {
            -1 => {
                world.push(local[j]);
                moved.push(Vector3::zeros());
            }
            p => {
                let p = p as usize;
                let q = moved[p] + (world[p] - Matrix3::identity()) * (joints[j] - joints[p]);
                world.push(world[p] * local[j]);
                moved.push(q);
            }
        }
    }
    let deltas: Vec<Matrix3<f64>> = world.iter().map(|r| r - Matrix3::identity()).collect();

    let vertices = posed
        .iter()
        .enumerate()
        .map(|(v, p)| {
            let pv = Vector3::from(*p);
            let weights = &asset.skinning_weights[v * k..(v + 1) * k];
            let mut offset = Vector3::zeros();
            for j in 0..k {
                if weights[j] != 0.0 {
                    offset += weights[j] * (deltas[j] * (pv - joints[j]) + moved[j]);
                }
            }
            (pv + offset).into()
        })
        .collect();
    Ok(Mesh { vertices })
}

/// Camera mapping before the viewport: `s * (x, y) + (tx, ty)`.
pub fn camera_plane(v: [f64; 3], cam: Camera) -> [f64; 2] {
    [cam.scale * v[0] + cam.tx, cam.scale * v[1] + cam.ty]
}

/// Weak-perspective projection into a `width x height` raster.
///
/// The camera plane square `[-1, 1]^2` fills the raster with y flipped so it
/// points down. Depth is `-z` since the camera looks down the negative z axis.
pub fn project(mesh: &Mesh, cam: Camera, width: usize, height: usize) -> Projected {
    let (w, h) = (width as f64, height as f64);
    let mut xy = Vec::with_capacity(mesh.vertices.len());
    let mut depth = Vec::with_capacity(mesh.vertices.len());
    for &v in &mesh.vertices {
        let [x, y] = camera_plane(v, cam);
        xy.push([(x + 1.0) * w / 2.0, (1.0 - y) * h / 2.0]);
        depth.push(-v[2]);
    }
    Projected { xy, depth }
}

/// Projected positions of the asset's landmark vertices.
pub fn landmarks2d(asset: &HeadAsset, params: &FaceParams, width: usize, height: usize) -> Result<Vec<[f64; 2]>> {
    let mesh = lbs(asset, params)?;
    let lm = asset
        .landmark_indices
        .iter()
        .map(|&i| mesh.vertices[i as usize])
        .collect();
    Ok(project(&Mesh { vertices: lm }, params.camera, width, height).xy)
}

/// Head rotation of the root joint as (x, y, z) Euler angles in degrees.
pub fn head_angles_deg(params: &FaceParams) -> [f64; 3] {
    let r = Rotation3::from_matrix_unchecked(rodrigues(params.theta[0]));
    let (a, b, c) = r.euler_angles();
    [a.to_degrees(), b.to_degrees(), c.to_degrees()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rodrigues_cases() {
        assert_eq!(rodrigues([0.0; 3]), Matrix3::identity());
        let r = rodrigues([0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        let y = r * Vector3::x();
        assert!((y - Vector3::y()).norm() < 1e-12);
        let r = rodrigues([0.3, -0.2, 0.9]);
        assert!((r * r.transpose() - Matrix3::identity()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_viewport_mapping() {
        let mesh = Mesh {
            vertices: vec![[0.0, 0.0, 0.3], [1.0, 1.0, 0.0], [-1.0, -0.5, -2.0]],
        };
        let p = project(&mesh, Camera::default(), 64, 32);
        assert_eq!(p.xy, vec![[32.0, 16.0], [64.0, 0.0], [0.0, 24.0]]);
        assert_eq!(p.depth, vec![-0.3, -0.0, 2.0]);
    }
}
