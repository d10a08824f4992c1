//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use facewarp::face_model::{FaceParams, HeadAsset};
use facewarp::raster::{edge, NO_TRIANGLE};
use nalgebra::{Matrix4, Rotation3, Vector3, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 12 vertices, 2 joints (root and one child), random bases and weights.
pub fn toy_asset(r: &mut ChaCha8Rng) -> HeadAsset {
    let n = 12;
    let k = 2;
    let (n_shape, n_expression) = (3, 2);
    let template: Vec<[f64; 3]> = (0..n).map(|_| [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]).collect();
    let faces = vec![[0, 1, 2], [3, 4, 5], [6, 7, 8], [9, 10, 11], [0, 5, 10]];
    let mut basis = |len: usize, s: f64| (0..len).map(|_| r.gen_range(-s..s)).collect::<Vec<f64>>();
    let shape_basis = basis(n * 3 * n_shape, 0.2);
    let expression_basis = basis(n * 3 * n_expression, 0.2);
    let pose_basis = basis(n * 3 * 9 * (k - 1), 0.1);
    let mut joint_regressor = Vec::with_capacity(k * n);
    for _ in 0..k {
        let row: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0)).collect();
        let s: f64 = row.iter().sum();
        joint_regressor.extend(row.iter().map(|v| v / s));
    }
    let mut skinning_weights = Vec::with_capacity(n * k);
    for v in 0..n {
        // A few vertices belong only to the root so the child cannot move them.
        let w1 = if v % 4 == 0 { 0.0 } else { r.gen_range(0.0..1.0) };
        skinning_weights.extend([1.0 - w1, w1]);
    }
    let lo = template.iter().fold([f64::MAX; 3], |a, v| [a[0].min(v[0]), a[1].min(v[1]), a[2].min(v[2])]);
    let hi = template.iter().fold([f64::MIN; 3], |a, v| [a[0].max(v[0]), a[1].max(v[1]), a[2].max(v[2])]);
    let normalized_template = template
        .iter()
        .map(|v| [0, 1, 2].map(|a| (v[a] - lo[a]) / (hi[a] - lo[a])))
        .collect();
    let asset = HeadAsset {
        template,
        faces,
        shape_basis,
        expression_basis,
        pose_basis,
        n_shape,
        n_expression,
        joint_regressor,
        skinning_weights,
        joint_parents: vec![-1, 0],
        landmark_indices: vec![1, 2, 3],
        normalized_template,
    };
    asset.validate().unwrap();
    asset
}

pub fn random_params(asset: &HeadAsset, r: &mut ChaCha8Rng, rot: f64) -> FaceParams {
    let mut p = FaceParams::neutral(asset);
    p.beta.iter_mut().for_each(|b| *b = r.gen_range(-1.5..1.5));
    p.psi.iter_mut().for_each(|b| *b = r.gen_range(-1.5..1.5));
    p.theta.iter_mut().for_each(|t| *t = [0; 3].map(|_| r.gen_range(-rot..rot)));
    p.camera.scale = r.gen_range(0.5..1.5);
    p.camera.tx = r.gen_range(-0.2..0.2);
    p.camera.ty = r.gen_range(-0.2..0.2);
    p
}

/// Linear blend skinning written out one vertex at a time with homogeneous
/// 4x4 joint transforms: `v' = sum_j w_j G_j G_j(rest)^-1 v_posed`.
pub fn brute_force_lbs(asset: &HeadAsset, p: &FaceParams) -> Vec<[f64; 3]> {
    let n = asset.num_vertices();
    let k = asset.num_joints();
    let rot = |aa: [f64; 3]| -> nalgebra::Matrix3<f64> {
        Rotation3::from_scaled_axis(Vector3::from(aa)).into_inner()
    };
    // Shaped template.
    let mut shaped = vec![[0.0; 3]; n];
    for v in 0..n {
        for a in 0..3 {
            let mut x = asset.template[v][a];
            for s in 0..asset.n_shape {
                x += asset.shape_basis[(v * 3 + a) * asset.n_shape + s] * p.beta[s];
            }
            shaped[v][a] = x;
        }
    }
    // Joints.
    let mut joints = vec![Vector3::zeros(); k];
    for j in 0..k {
        for v in 0..n {
            joints[j] += asset.joint_regressor[j * n + v] * Vector3::from(shaped[v]);
        }
    }
    // Pose features from non-root joints.
    let mut feats = Vec::new();
    for j in 1..k {
        let m = rot(p.theta[j]);
        for row in 0..3 {
            for col in 0..3 {
                feats.push(m[(row, col)] - if row == col { 1.0 } else { 0.0 });
            }
        }
    }
    let nf = feats.len();
    // Global transforms.
    let mut global: Vec<Matrix4<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let rel = match asset.joint_parents[j] {
            -1 => joints[j],
            par => joints[j] - joints[par as usize],
        };
        let mut local = Matrix4::identity();
        local.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot(p.theta[j]));
        local.fixed_view_mut::<3, 1>(0, 3).copy_from(&rel);
        let g = match asset.joint_parents[j] {
            -1 => local,
            par => global[par as usize] * local,
        };
        global.push(g);
    }
    let mut out = Vec::with_capacity(n);
    for v in 0..n {
        let mut posed = shaped[v];
        for a in 0..3 {
            for e in 0..asset.n_expression {
                posed[a] += asset.expression_basis[(v * 3 + a) * asset.n_expression + e] * p.psi[e];
            }
            for f in 0..nf {
                posed[a] += asset.pose_basis[(v * 3 + a) * nf + f] * feats[f];
            }
        }
        let h = Vector4::new(posed[0], posed[1], posed[2], 1.0);
        let mut acc = Vector4::zeros();
        for j in 0..k {
            let mut unrest = Matrix4::identity();
            unrest.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-joints[j]));
            acc += asset.skinning_weights[v * k + j] * (global[j] * unrest * h);
        }
        out.push([acc.x, acc.y, acc.z]);
    }
    out
}

/// Per-pixel winner from testing every triangle at every pixel.
pub struct NaiveRaster {
    pub triangle: Vec<u32>,
    pub depth: Vec<f64>,
    pub bary: Vec<[f64; 3]>,
}

fn top_left(u: [f64; 2], v: [f64; 2]) -> bool {
    let (dx, dy) = (v[0] - u[0], v[1] - u[1]);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

pub fn naive_raster(pos: &[[f64; 2]], depth: &[f64], faces: &[[u32; 3]], w: usize, h: usize, cull: bool) -> NaiveRaster {
    let mut out = NaiveRaster {
        triangle: vec![NO_TRIANGLE; w * h],
        depth: vec![f64::INFINITY; w * h],
        bary: vec![[0.0; 3]; w * h],
    };
    for i in 0..h {
        for j in 0..w {
            let p = [j as f64 + 0.5, i as f64 + 0.5];
            for (t, f) in faces.iter().enumerate() {
                let [a, b, c] = f.map(|v| pos[v as usize]);
                let area = edge(a, b, c);
                if area == 0.0 || (cull && area > 0.0) {
                    continue;
                }
                // Visit the vertices in positive-area order.
                let (ob, oc, ib, ic) = if area < 0.0 { (c, b, 2, 1) } else { (b, c, 1, 2) };
                let area = area.abs();
                let e = [(ob, oc), (oc, a), (a, ob)];
                let ws = e.map(|(u, v)| edge(u, v, p));
                let inside = ws.iter().zip(&e).all(|(&wv, &(u, v))| wv > 0.0 || (wv == 0.0 && top_left(u, v)));
                if !inside {
                    continue;
                }
                let bc = ws.map(|x| x / area);
                let zs = [depth[f[0] as usize], depth[f[ib] as usize], depth[f[ic] as usize]];
                let z = bc[0] * zs[0] + bc[1] * zs[1] + bc[2] * zs[2];
                let k = i * w + j;
                if z < out.depth[k] {
                    out.depth[k] = z;
                    out.triangle[k] = t as u32;
                    let mut b = [0.0; 3];
                    b[0] = bc[0];
                    b[ib] = bc[1];
                    b[ic] = bc[2];
                    out.bary[k] = b;
                }
            }
        }
    }
    out
}

/// Random triangles over a `w x h` raster with a mix of windings.
pub fn random_mesh(r: &mut ChaCha8Rng, w: usize, h: usize) -> (Vec<[f64; 2]>, Vec<f64>, Vec<[u32; 3]>) {
    let nt = r.gen_range(1..12);
    let mut pos = Vec::new();
    let mut depth = Vec::new();
    let mut faces = Vec::new();
    for t in 0..nt {
        for _ in 0..3 {
            // Snap some coordinates to half pixels to exercise edge ownership.
            let snap = |x: f64| if t % 3 == 0 { (x * 2.0).round() / 2.0 } else { x };
            pos.push([snap(r.gen_range(-2.0..w as f64 + 2.0)), snap(r.gen_range(-2.0..h as f64 + 2.0))]);
            depth.push(r.gen_range(0.0..10.0));
        }
        let b = 3 * t as u32;
        faces.push([b, b + 1, b + 2]);
    }
    // Shared vertices between neighbouring triangles.
    if nt > 2 {
        faces.push([0, 4, 8]);
    }
    (pos, depth, faces)
}

/// A model small enough to train a few steps in milliseconds.
pub fn tiny_config(kind: facewarp::network::GuidanceKind) -> facewarp::training::Config {
    use facewarp::training::{Config, DataConfig, ScheduleConfig};
    let mut c = Config::default();
    c.seed = 5;
    c.model.resolution = 16;
    c.model.pyramid_levels = 3;
    c.model.base_channels = 4;
    c.model.max_channels = 8;
    c.model.spade_hidden = 4;
    c.model.code_dim = 4;
    c.model.guidance = kind;
    c.discriminator.scales = 2;
    c.discriminator.channels = vec![4, 8];
    c.train = ScheduleConfig {
        iterations: 10,
        batch_size: 2,
        checkpoint_every: 0,
        ..Default::default()
    };
    c.data = DataConfig {
        identities: 3,
        frames_per_identity: 3,
        held_out: 1,
        resolution: 16,
        seed: 11,
    };
    c
}
