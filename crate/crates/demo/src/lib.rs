//! WebAssembly bindings for the browser demo. Every call returns an RGBA
//! buffer of `size * size * 4` bytes ready for `ImageData`.

use facewarp::face_model::{lbs, procedural_head, FaceParams, HeadAsset, JAW};
use facewarp::guidance::{geom_disp_field, nmfc, GuidanceMap};
use facewarp::pipeline::dataset::head_rotation;
use facewarp::pipeline::render::random_vertex_colors;
use facewarp::pipeline::{render_frame, Appearance, Background};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

/// Largest accepted output size.
pub const MAX_SIZE: usize = 256;

/// Head pose and expression controls, angles in radians.
#[wasm_bindgen]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Pose {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub jaw: f64,
    /// First expression coefficient.
    pub smile: f64,
}

#[wasm_bindgen]
impl Pose {
    #[wasm_bindgen(constructor)]
    pub fn new(yaw: f64, pitch: f64, roll: f64, jaw: f64, smile: f64) -> Pose {
        Pose { yaw, pitch, roll, jaw, smile }
    }
}

/// One random identity of the procedural head.
#[wasm_bindgen]
pub struct Head {
    asset: HeadAsset,
    beta: Vec<f64>,
    appearance: Appearance,
    background: Background,
}

fn rgba(rgb: &[u8]) -> Vec<u8> {
    rgb.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

fn check_size(size: usize) -> Result<(), JsError> {
    if size == 0 || size > MAX_SIZE {
        return Err(JsError::new(&format!("size must be in 1..={MAX_SIZE}")));
    }
    Ok(())
}

#[wasm_bindgen]
impl Head {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Head {
        let asset = procedural_head();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = (0..asset.n_shape).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let appearance = Appearance {
            vertex_colors: random_vertex_colors(&asset, &mut rng),
        };
        let background = Background::random(&mut rng);
        Head {
            asset,
            beta,
            appearance,
            background,
        }
    }

    /// Shaded head over the background.
    pub fn render(&self, pose: &Pose, size: usize) -> Result<Vec<u8>, JsError> {
        check_size(size)?;
        let (img, _) = render_frame(&self.asset, &self.params(pose), &self.appearance, &self.background, size)?;
        Ok(rgba(img.to_rgb8().as_raw()))
    }

    /// Where each driving-frame pixel finds its content in the source frame,
    /// as a colour wheel: hue is direction, saturation is length.
    pub fn displacement(&self, source: &Pose, driving: &Pose, size: usize) -> Result<Vec<u8>, JsError> {
        check_size(size)?;
        Ok(rgba(&self.displacement_map(source, driving, size)?.to_rgb8()))
    }

    /// Longest displacement in pixels over the face, for the legend.
    pub fn max_displacement(&self, source: &Pose, driving: &Pose, size: usize) -> Result<f64, JsError> {
        check_size(size)?;
        let m = self.displacement_map(source, driving, size)?;
        let n = size * size;
        Ok((0..n).filter(|&k| m.coverage[k]).map(|k| m.image[k].hypot(m.image[n + k])).fold(0.0, f64::max))
    }

    /// Normalized mean-face coordinates of the posed head.
    pub fn nmfc(&self, pose: &Pose, size: usize) -> Result<Vec<u8>, JsError> {
        check_size(size)?;
        let p = self.params(pose);
        let mesh = lbs(&self.asset, &p)?;
        Ok(rgba(&nmfc(&self.asset, &mesh, p.camera, size, size)?.to_rgb8()))
    }
}

impl Head {
    pub fn params(&self, pose: &Pose) -> FaceParams {
        let mut p = FaceParams::neutral(&self.asset);
        p.beta = self.beta.clone();
        p.theta[0] = head_rotation(pose.pitch, pose.yaw, pose.roll);
        p.theta[JAW] = [pose.jaw, 0.0, 0.0];
        p.psi[0] = pose.smile;
        p.camera.scale = 0.85;
        p
    }

    fn displacement_map(&self, source: &Pose, driving: &Pose, size: usize) -> facewarp::Result<GuidanceMap> {
        let (ps, pd) = (self.params(source), self.params(driving));
        let (ms, md) = (lbs(&self.asset, &ps)?, lbs(&self.asset, &pd)?);
        geom_disp_field(&self.asset.faces, &ms, &md, ps.camera, pd.camera, size, size)
    }
}
