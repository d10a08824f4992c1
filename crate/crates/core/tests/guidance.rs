mod common;

use common::{random_params, rng};
use facewarp::face_model::{lbs, procedural_head, project, Camera, FaceParams, HeadAsset, Mesh, JAW};
use facewarp::guidance::{
    geom_disp_field, mesh_fragments, nmfc, posed_neural_codes, render_codes, vertex_displacements, MapKind, NeuralCodes,
    CODE_DIM,
};
use facewarp_tensor::{GradCheck, Tensor};
use rand::Rng;
use std::sync::Arc;

const RES: usize = 48;

fn neutral_mesh(a: &HeadAsset) -> (FaceParams, Mesh) {
    let p = FaceParams::neutral(a);
    let m = lbs(a, &p).unwrap();
    (p, m)
}

#[test]
fn identical_meshes_give_a_zero_field() {
    let a = procedural_head();
    let p = random_params(&a, &mut rng(1), 0.3);
    let m = lbs(&a, &p).unwrap();
    let f = geom_disp_field(&a.faces, &m, &m, p.camera, p.camera, RES, RES).unwrap();
    assert_eq!(f.kind, MapKind::GeomDisp);
    assert_eq!(f.channels, 2);
    assert!(f.coverage.iter().any(|&c| c));
    assert!(f.image.iter().all(|&v| v == 0.0));
}

#[test]
fn camera_shift_gives_a_constant_field() {
    let a = procedural_head();
    let (_, m) = neutral_mesh(&a);
    let cs = Camera::default();
    let delta = 0.1;
    let cd = Camera { tx: cs.tx + delta, ..cs };
    let f = geom_disp_field(&a.faces, &m, &m, cs, cd, RES, RES).unwrap();
    let n = RES * RES;
    let mut covered = 0;
    for k in 0..n {
        if f.coverage[k] {
            assert!((f.image[k] + delta * RES as f64 / 2.0).abs() < 1e-9);
            assert!(f.image[n + k].abs() < 1e-9);
            covered += 1;
        } else {
            assert_eq!((f.image[k], f.image[n + k]), (0.0, 0.0));
        }
    }
    assert!(covered > 200);
}

#[test]
fn jaw_opening_points_chin_pixels_upward() {
    let a = procedural_head();
    let (ps, ms) = neutral_mesh(&a);
    let mut pd = ps.clone();
    pd.theta[JAW] = [0.4, 0.0, 0.0];
    let md = lbs(&a, &pd).unwrap();
    let disp = vertex_displacements(&ms, &md, ps.camera, pd.camera, RES, RES).unwrap();
    let chin = a.landmark_indices[8] as usize;
    // Driving chin is lower on screen, so the source location is above it.
    assert!(disp[chin][1] < -1.0, "{:?}", disp[chin]);
    let forehead = (0..a.num_vertices())
        .filter(|&v| a.template[v][2] > 0.0)
        .max_by(|&u, &v| a.template[u][1].total_cmp(&a.template[v][1]))
        .unwrap();
    assert!(disp[forehead][0].abs() < 1e-9 && disp[forehead][1].abs() < 1e-9);

    // Same picture in the rendered field.
    let f = geom_disp_field(&a.faces, &ms, &md, ps.camera, pd.camera, RES, RES).unwrap();
    let at = |v: usize| {
        let xy = project(&md, pd.camera, RES, RES).xy[v];
        (xy[1] as usize).min(RES - 1) * RES + (xy[0] as usize).min(RES - 1)
    };
    let n = RES * RES;
    let (kc, kf) = (at(chin), at(forehead));
    assert!(f.coverage[kc] && f.image[n + kc] < -0.5);
    assert!(f.coverage[kf] && f.image[n + kf].abs() < 1e-6 && f.image[kf].abs() < 1e-6);
}

#[test]
fn vertex_displacements_are_antisymmetric() {
    let a = procedural_head();
    let mut r = rng(3);
    let (p, q) = (random_params(&a, &mut r, 0.3), random_params(&a, &mut r, 0.3));
    let (mp, mq) = (lbs(&a, &p).unwrap(), lbs(&a, &q).unwrap());
    let f = vertex_displacements(&mp, &mq, p.camera, q.camera, RES, RES).unwrap();
    let b = vertex_displacements(&mq, &mp, q.camera, p.camera, RES, RES).unwrap();
    for (x, y) in f.iter().zip(&b) {
        assert!((x[0] + y[0]).abs() < 1e-12 && (x[1] + y[1]).abs() < 1e-12);
    }
}

#[test]
fn mismatched_meshes_are_rejected() {
    let a = procedural_head();
    let (p, m) = neutral_mesh(&a);
    let short = Mesh {
        vertices: m.vertices[..10].to_vec(),
    };
    assert!(vertex_displacements(&m, &short, p.camera, p.camera, RES, RES).is_err());
    assert!(nmfc(&a, &short, p.camera, RES, RES).is_err());
    let codes = NeuralCodes::constant(10, &[1.0; 4]);
    assert!(posed_neural_codes(&codes, &a.faces, &m, p.camera, RES, RES).is_err());
}

#[test]
fn constant_codes_fill_the_coverage() {
    let a = procedural_head();
    let p = random_params(&a, &mut rng(5), 0.3);
    let m = lbs(&a, &p).unwrap();
    let v: Vec<f64> = (0..CODE_DIM).map(|c| c as f64 * 0.25 - 1.0).collect();
    let map = posed_neural_codes(&NeuralCodes::constant(a.num_vertices(), &v), &a.faces, &m, p.camera, RES, RES).unwrap();
    assert_eq!(map.channels, CODE_DIM);
    for i in 0..RES {
        for j in 0..RES {
            for (c, &vc) in v.iter().enumerate() {
                let expect = if map.coverage[i * RES + j] { vc } else { 0.0 };
                assert!((map.pixel(c, i, j) - expect).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn code_rendering_is_linear() {
    let a = procedural_head();
    let mut r = rng(6);
    let p = random_params(&a, &mut r, 0.3);
    let m = lbs(&a, &p).unwrap();
    let c1 = NeuralCodes::random(a.num_vertices(), CODE_DIM, &mut r);
    let c2 = NeuralCodes::random(a.num_vertices(), CODE_DIM, &mut r);
    let (s, t) = (2.5, -0.75);
    let mix = NeuralCodes {
        dim: CODE_DIM,
        codes: c1.codes.iter().zip(&c2.codes).map(|(x, y)| s * x + t * y).collect(),
    };
    let render = |c: &NeuralCodes| posed_neural_codes(c, &a.faces, &m, p.camera, RES, RES).unwrap().image;
    let (r1, r2, rm) = (render(&c1), render(&c2), render(&mix));
    for k in 0..rm.len() {
        assert!((rm[k] - (s * r1[k] + t * r2[k])).abs() < 1e-5);
    }
}

#[test]
fn code_gradients_match_finite_differences() {
    let a = procedural_head();
    let mut r = rng(7);
    let frags: Arc<[_]> = (0..2)
        .map(|_| {
            let p = random_params(&a, &mut r, 0.3);
            mesh_fragments(&a.faces, &lbs(&a, &p).unwrap(), p.camera, 16, 16).unwrap()
        })
        .collect();
    let dim = 3;
    let codes = Tensor::uniform(&[a.num_vertices(), dim], -1.0, 1.0, &mut r);
    let weights = Tensor::uniform(&[2, dim, 16, 16], -1.0, 1.0, &mut r);
    let check = GradCheck {
        max_samples_per_input: Some(200),
        ..Default::default()
    };
    let report = check
        .run(
            |g, x| {
                let img = render_codes(g, x[0], frags.clone()).map_err(|e| facewarp_tensor::TensorError::Shape {
                    op: "render_codes",
                    detail: e.to_string(),
                })?;
                let w = g.constant(weights.clone());
                let prod = g.mul(img, w)?;
                g.sum(prod)
            },
            &[codes],
        )
        .unwrap();
    assert!(report.max_rel_err < 1e-6, "{report:?}");
}

#[test]
fn nmfc_is_in_unit_range_and_zero_outside() {
    let a = procedural_head();
    let p = random_params(&a, &mut rng(8), 0.4);
    let m = lbs(&a, &p).unwrap();
    let map = nmfc(&a, &m, p.camera, RES, RES).unwrap();
    assert_eq!((map.kind, map.channels), (MapKind::Nmfc, 3));
    for c in 0..3 {
        for k in 0..RES * RES {
            let v = map.image[c * RES * RES + k];
            if map.coverage[k] {
                assert!((0.0..=1.0).contains(&v));
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }
}

#[test]
fn nmfc_follows_the_surface() {
    // Shifting the camera by a whole number of pixels shifts the map without
    // changing any value.
    let a = procedural_head();
    let mut p = random_params(&a, &mut rng(9), 0.3);
    p.camera.tx = 0.0;
    p.camera.ty = 0.0;
    let m = lbs(&a, &p).unwrap();
    let shift = 4;
    let cam = Camera {
        tx: 2.0 * shift as f64 / RES as f64,
        ..p.camera
    };
    let m0 = nmfc(&a, &m, p.camera, RES, RES).unwrap();
    let m1 = nmfc(&a, &m, cam, RES, RES).unwrap();
    for c in 0..3 {
        for i in 0..RES {
            for j in shift..RES {
                assert!((m1.pixel(c, i, j) - m0.pixel(c, i, j - shift)).abs() < 1e-9);
            }
        }
    }
    // Identity changes move the surface, not the coordinates it carries.
    let mut q = p.clone();
    for b in q.beta.iter_mut() {
        *b = rng(10).gen_range(-1.0..1.0);
    }
    let mq = lbs(&a, &q).unwrap();
    let frag = mesh_fragments(&a.faces, &mq, q.camera, RES, RES).unwrap();
    let map = nmfc(&a, &mq, q.camera, RES, RES).unwrap();
    for k in 0..RES * RES {
        if map.coverage[k] {
            let [u, v, w] = frag.vertices[k].map(|x| a.normalized_template[x as usize][1]);
            let b = frag.bary[k];
            assert!((map.image[RES * RES + k] - (b[0] * u + b[1] * v + b[2] * w)).abs() < 1e-12);
        }
    }
}
