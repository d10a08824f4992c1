//! A low-poly synthetic head with the same joint layout as common
//! parametric face models: root, neck, jaw and two eyes.

use super::HeadAsset;
use std::f64::consts::PI;

pub const ROOT: usize = 0;
pub const NECK: usize = 1;
pub const JAW: usize = 2;
pub const LEFT_EYE: usize = 3;
pub const RIGHT_EYE: usize = 4;

const RINGS: usize = 24;
const SEGMENTS: usize = 24;
const RADII: [f64; 3] = [0.72, 0.9, 0.78];
const EYES: [[f64; 2]; 2] = [[0.26, 0.18], [-0.26, 0.18]];

/// Knobs for [`procedural_head`].
#[derive(Debug, Clone, Copy)]
pub struct ProceduralHead {
    pub rings: usize,
    pub segments: usize,
}

impl Default for ProceduralHead {
    fn default() -> Self {
        Self {
            rings: RINGS,
            segments: SEGMENTS,
        }
    }
}

fn gauss(dx: f64, dy: f64, sigma: f64) -> f64 {
    (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Front-facing weight: 1 on the face side, 0 behind the ears.
fn front(z: f64) -> f64 {
    clamp01(z / 0.35)
}

/// Deterministic smooth pseudo-random coefficient in [-1, 1].
fn coeff(a: usize, b: usize, c: usize) -> f64 {
    (1.7 + 0.91 * a as f64 + 2.3 * b as f64 + 0.37 * c as f64).sin()
}

/// Build the 4-shape / 4-expression toy head (578 vertices, 1104 faces with
/// the default resolution).
pub fn procedural_head() -> HeadAsset {
    build(ProceduralHead::default())
}

impl ProceduralHead {
    pub fn build(self) -> HeadAsset {
        build(self)
    }
}

fn build(cfg: ProceduralHead) -> HeadAsset {
    let (rings, segs) = (cfg.rings, cfg.segments);
    let mut dirs = vec![[0.0, 1.0, 0.0]];
    for r in 1..=rings {
        let phi = PI * r as f64 / (rings + 1) as f64;
        for s in 0..segs {
            let alpha = 2.0 * PI * s as f64 / segs as f64;
            dirs.push([phi.sin() * alpha.sin(), phi.cos(), phi.sin() * alpha.cos()]);
        }
    }
    dirs.push([0.0, -1.0, 0.0]);
    let n = dirs.len();

    let template: Vec<[f64; 3]> = dirs
        .iter()
        .map(|d| {
            let mut p = [d[0] * RADII[0], d[1] * RADII[1], d[2] * RADII[2]];
            let f = front(p[2]);
            // nose ridge and a slightly narrower chin
            p[2] += 0.22 * f * gauss(p[0], p[1] + 0.02, 0.11);
            p[0] *= 1.0 - 0.18 * clamp01(-p[1] / RADII[1]);
            p
        })
        .collect();

    let mut faces = Vec::new();
    let ring = |r: usize, s: usize| (1 + r * segs + s % segs) as u32;
    for s in 0..segs {
        faces.push([0, ring(0, s), ring(0, s + 1)]);
        faces.push([(n - 1) as u32, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    for r in 0..rings - 1 {
        for s in 0..segs {
            let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s), ring(r + 1, s + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    // Orient every face counter-clockwise seen from outside.
    for f in &mut faces {
        let [a, b, c] = f.map(|i| template[i as usize]);
        let e1 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let e2 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let nrm = [
            e1[1] * e2[2] - e1[2] * e2[1],
            e1[2] * e2[0] - e1[0] * e2[2],
            e1[0] * e2[1] - e1[1] * e2[0],
        ];
        let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0, (a[2] + b[2] + c[2]) / 3.0];
        if nrm[0] * centroid[0] + nrm[1] * centroid[1] + nrm[2] * centroid[2] < 0.0 {
            f.swap(1, 2);
        }
    }

    let normal = |v: usize| dirs[v];
    let eye_centers: Vec<[f64; 3]> = EYES
        .iter()
        .map(|&[x, y]| {
            let nearest = (0..n)
                .filter(|&v| template[v][2] > 0.0)
                .min_by(|&a, &b| {
                    let da = (template[a][0] - x).hypot(template[a][1] - y);
                    let db = (template[b][0] - x).hypot(template[b][1] - y);
                    da.total_cmp(&db)
                })
                .unwrap();
            template[nearest]
        })
        .collect();

    // Skinning weights: exact zeros outside each joint's region.
    const K: usize = 5;
    let mut skinning = vec![0.0; n * K];
    for v in 0..n {
        let [x, y, z] = template[v];
        let jaw = 0.95 * clamp01((-0.12 - y) / 0.18) * clamp01(z / 0.3);
        let root = clamp01((-0.72 - y) / 0.12);
        let eye = |c: [f64; 3]| {
            let d = ((x - c[0]).powi(2) + (y - c[1]).powi(2) + (z - c[2]).powi(2)).sqrt();
            0.95 * clamp01(1.0 - d / 0.13)
        };
        let mut w = [root, 0.0, jaw, eye(eye_centers[0]), eye(eye_centers[1])];
        let others: f64 = w.iter().sum();
        w[NECK] = (1.0 - others).max(0.0);
        let total: f64 = w.iter().sum();
        for (j, wj) in w.iter().enumerate() {
            skinning[v * K + j] = wj / total;
        }
    }

    // Joint regressor: uniform averages over vertex sets.
    let mut regressor = vec![0.0; K * n];
    let mut set_joint = |j: usize, members: Vec<usize>| {
        let w = 1.0 / members.len() as f64;
        for v in members {
            regressor[j * n + v] = w;
        }
    };
    set_joint(ROOT, (0..n).collect());
    set_joint(NECK, (0..n).filter(|&v| dirs[v][1] < -0.85).collect());
    let jaw_ring = (rings as f64 * 0.55) as usize;
    set_joint(
        JAW,
        (0..segs)
            .map(|s| ring(jaw_ring, s) as usize)
            .filter(|&v| dirs[v][0].abs() > 0.8)
            .collect(),
    );
    for (j, c) in [(LEFT_EYE, eye_centers[0]), (RIGHT_EYE, eye_centers[1])] {
        let mut near: Vec<usize> = (0..n).collect();
        near.sort_by(|&a, &b| {
            let da: f64 = (0..3).map(|i| (template[a][i] - c[i]).powi(2)).sum();
            let db: f64 = (0..3).map(|i| (template[b][i] - c[i]).powi(2)).sum();
            da.total_cmp(&db)
        });
        near.truncate(4);
        set_joint(j, near);
    }

    let n_shape = 4;
    let mut shape_basis = vec![0.0; n * 3 * n_shape];
    let n_expression = 4;
    let mut expression_basis = vec![0.0; n * 3 * n_expression];
    for v in 0..n {
        let [x, y, z] = template[v];
        let nv = normal(v);
        let f = front(z);
        let shape: [[f64; 3]; 4] = [
            [0.14 * x, 0.0, 0.0],
            [0.0, 0.12 * y, 0.0],
            [0.0, 0.0, 0.12 * f * gauss(x, y + 0.02, 0.12)],
            {
                let g = 0.1 * f * (gauss(x - 0.45, y + 0.3, 0.2) + gauss(x + 0.45, y + 0.3, 0.2));
                [g * nv[0], g * nv[1], g * nv[2]]
            },
        ];
        let corners = gauss(x - 0.2, y + 0.38, 0.08) + gauss(x + 0.2, y + 0.38, 0.08);
        let brows = gauss(x - 0.26, y - 0.36, 0.1) + gauss(x + 0.26, y - 0.36, 0.1);
        let cheeks = gauss(x - 0.38, y + 0.12, 0.12) + gauss(x + 0.38, y + 0.12, 0.12);
        let expr: [[f64; 3]; 4] = [
            [0.05 * f * corners * x.signum(), 0.06 * f * corners, 0.0],
            [0.0, 0.07 * f * brows, 0.0],
            [0.0, 0.0, 0.07 * f * gauss(x, y + 0.4, 0.09)],
            [0.07 * f * cheeks * nv[0], 0.0, 0.07 * f * cheeks * nv[2]],
        ];
        for axis in 0..3 {
            for k in 0..n_shape {
                shape_basis[(v * 3 + axis) * n_shape + k] = shape[k][axis];
            }
            for k in 0..n_expression {
                expression_basis[(v * 3 + axis) * n_expression + k] = expr[k][axis];
            }
        }
    }

    // Pose correctives: smooth, scaled by the skinning weight of the joint that
    // drives them, so they vanish exactly where that joint has no influence.
    let n_pose = 9 * (K - 1);
    let mut pose_basis = vec![0.0; n * 3 * n_pose];
    for v in 0..n {
        for j in 1..K {
            let w = skinning[v * K + j];
            if w == 0.0 {
                continue;
            }
            for m in 0..9 {
                for axis in 0..3 {
                    pose_basis[(v * 3 + axis) * n_pose + (j - 1) * 9 + m] = 0.04 * w * coeff(j, m, axis);
                }
            }
        }
    }

    let landmark_indices = pick_landmarks(&template);

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &template {
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let normalized_template = template
        .iter()
        .map(|p| [0, 1, 2].map(|i| clamp01((p[i] - lo[i]) / (hi[i] - lo[i]))))
        .collect();

    HeadAsset {
        template,
        faces,
        shape_basis,
        expression_basis,
        pose_basis,
        n_shape,
        n_expression,
        joint_regressor: regressor,
        skinning_weights: skinning,
        joint_parents: vec![-1, ROOT as i32, NECK as i32, NECK as i32, NECK as i32],
        landmark_indices,
        normalized_template,
    }
}

/// 68 canonical face points (jaw line, brows, nose, eyes, mouth) in the
/// camera plane, each snapped to the nearest unused front vertex.
fn pick_landmarks(template: &[[f64; 3]]) -> Vec<u32> {
    let mut targets = Vec::with_capacity(68);
    for i in 0..17 {
        let t = PI * (0.1 + 0.8 * i as f64 / 16.0);
        targets.push([-0.6 * t.cos(), -0.05 - 0.65 * t.sin()]);
    }
    for side in [-1.0, 1.0] {
        for i in 0..5 {
            targets.push([side * (0.1 + 0.08 * i as f64), 0.34 + 0.03 * (2.0 - (i as f64 - 2.0).abs())]);
        }
    }
    for i in 0..4 {
        targets.push([0.0, 0.2 - 0.1 * i as f64]);
    }
    for i in 0..5 {
        targets.push([-0.12 + 0.06 * i as f64, -0.14]);
    }
    for [ex, ey] in EYES {
        for i in 0..6 {
            let t = 2.0 * PI * i as f64 / 6.0;
            targets.push([ex + 0.09 * t.cos(), ey + 0.04 * t.sin()]);
        }
    }
    for i in 0..12 {
        let t = 2.0 * PI * i as f64 / 12.0;
        targets.push([0.22 * t.cos(), -0.38 + 0.1 * t.sin()]);
    }
    for i in 0..8 {
        let t = 2.0 * PI * i as f64 / 8.0;
        targets.push([0.13 * t.cos(), -0.38 + 0.04 * t.sin()]);
    }
    debug_assert_eq!(targets.len(), 68);
    let mut used = vec![false; template.len()];
    targets
        .iter()
        .map(|&[x, y]| {
            let best = (0..template.len())
                .filter(|&v| !used[v] && template[v][2] > 0.0)
                .min_by(|&a, &b| {
                    let da = (template[a][0] - x).hypot(template[a][1] - y);
                    let db = (template[b][0] - x).hypot(template[b][1] - y);
                    da.total_cmp(&db)
                })
                .expect("enough front vertices for landmarks");
            used[best] = true;
            best as u32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_head_is_valid() {
        let a = procedural_head();
        a.validate().unwrap();
        assert_eq!(a.num_vertices(), 578);
        assert_eq!(a.num_joints(), 5);
        assert_eq!(a.landmark_indices.len(), 68);
        let mut sorted = a.landmark_indices.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 68);
        let jaw_verts = (0..a.num_vertices()).filter(|v| a.skinning_weights[v * 5 + JAW] > 0.0).count();
        assert!(jaw_verts > 20 && jaw_verts < 200, "{jaw_verts}");
    }
}
