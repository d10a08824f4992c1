use super::{lrelu, Conv, GeneratorConfig, Init, Spade, WarpMode};
use crate::error::{input, Result};
use facewarp_tensor::{Bound, Graph, ParamStore, Real, Var};
use rand::Rng;

/// Inputs to [`Generator::forward`], all at full resolution.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorInputs {
    /// Source image `[B, 3, H, W]` in `[-1, 1]`.
    pub source: Var,
    /// Displacement guidance `[B, 2, H, W]` in pixels (displacement modes).
    pub displacement: Option<Var>,
    /// Semantic guidance posed like the source (codes / NMFC modes).
    pub source_semantic: Option<Var>,
    /// Semantic guidance posed like the target.
    pub target_semantic: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    /// `[B, 3, H, W]` in `[-1, 1]`.
    pub image: Var,
    /// Finest predicted displacement at full resolution, in pixels.
    pub displacement: Var,
    /// Predicted displacement per decoder step (level `l` at index `l - 1`).
    pub level_displacements: Vec<Var>,
    /// Encoder shortcut features, coarsest first.
    pub shortcuts: Vec<Var>,
}

/// One progressive warping step from level `l` to `l + 1`.
#[derive(Debug, Clone, Copy)]
pub struct PwmStep {
    pub spade: Spade,
    pub hidden: Conv,
    /// Zero-initialised so training starts from the identity warp. `None` for
    /// levels of the single-scale variant that reuse the coarsest prediction.
    pub displacement_head: Option<Conv>,
    pub up: Conv,
    pub fuse: Conv,
}

#[derive(Debug, Clone, Copy)]
pub struct PwmTrace {
    pub displacement: Var,
    pub displacement_up: Var,
    pub warped: Var,
    pub next: Var,
}

impl PwmStep {
    /// `h = lrelu(conv(spade(F_r, guidance)))`; `D = conv(h)`, upsampled 2x
    /// with doubled magnitude, warps `F_s^(l+1)`; the warped features are
    /// concatenated with upsampled `h` and fused.
    ///
    /// `given` replaces the predicted displacement (single-scale variant).
    pub fn apply<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        f_r: Var,
        shortcut_next: Var,
        guidance: Var,
        given: Option<Var>,
    ) -> Result<PwmTrace> {
        let modulated = self.spade.apply(g, p, f_r, guidance)?;
        let h = self.hidden.apply(g, p, modulated)?;
        let h = lrelu(g, h)?;
        let displacement = match (self.displacement_head, given) {
            (_, Some(d)) => d,
            (Some(head), None) => head.apply(g, p, h)?,
            (None, None) => return Err(input("PWM step without displacement head needs a given field")),
        };
        let [_, _, nh, nw] = dims(g, shortcut_next);
        let dh = g.shape(displacement)[2];
        let up = g.resize_bilinear(displacement, nh, nw)?;
        let displacement_up = g.scale(up, T::lit(nh as f64 / dh as f64))?;
        let warped = g.grid_warp(shortcut_next, displacement_up)?;
        let h_up = g.resize_bilinear(h, nh, nw)?;
        let h_up = self.up.apply(g, p, h_up)?;
        let h_up = lrelu(g, h_up)?;
        let cat = g.concat_channels(&[warped, h_up])?;
        let next = self.fuse.apply(g, p, cat)?;
        let next = lrelu(g, next)?;
        Ok(PwmTrace {
            displacement,
            displacement_up,
            warped,
            next,
        })
    }
}

fn dims<T: Real>(g: &Graph<T>, v: Var) -> [usize; 4] {
    let s = g.shape(v);
    [s[0], s[1], s[2], s[3]]
}

/// Encoder plus a chain of progressive warping modules and a synthesis conv.
#[derive(Debug, Clone)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub stem: Conv,
    /// Stride-2 blocks producing levels `L-1` down to 1.
    pub down: Vec<Conv>,
    pub steps: Vec<PwmStep>,
    pub output: Conv,
}

impl Generator {
    pub fn new<T: Real, R: Rng + ?Sized>(cfg: &GeneratorConfig, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let l = cfg.pyramid_levels;
        let stem = Conv::new(store, "enc.stem", cfg.input_channels(), cfg.channels(l), 3, 1, Init::He, true, rng);
        let down = (1..l)
            .rev()
            .map(|lvl| {
                Conv::new(store, &format!("enc.down{lvl}"), cfg.channels(lvl + 1), cfg.channels(lvl), 3, 2, Init::He, true, rng)
            })
            .collect();
        let gch = cfg.guidance_channels();
        let mut steps = Vec::with_capacity(l - 1);
        for lvl in 1..l {
            let cin = if lvl == 1 && cfg.guidance.uses_displacement() {
                2 * cfg.channels(1)
            } else {
                cfg.channels(lvl)
            };
            let (c, cn) = (cfg.channels(lvl), cfg.channels(lvl + 1));
            let name = format!("pwm{lvl}");
            let spade = Spade::new(store, &format!("{name}.spade"), cin, gch, cfg.spade_hidden, rng);
            let hidden = Conv::new(store, &format!("{name}.hidden"), cin, c, 3, 1, Init::He, true, rng);
            let head = (cfg.warp_mode == WarpMode::Progressive || lvl == 1)
                .then(|| Conv::new(store, &format!("{name}.disp"), c, 2, 3, 1, Init::Zero, false, rng));
            let up = Conv::new(store, &format!("{name}.up"), c, cn, 3, 1, Init::He, true, rng);
            let fuse = Conv::new(store, &format!("{name}.fuse"), 2 * cn, cn, 3, 1, Init::He, true, rng);
            steps.push(PwmStep {
                spade,
                hidden,
                displacement_head: head,
                up,
                fuse,
            });
        }
        let output = Conv::new(store, "out", cfg.channels(l), 3, 3, 1, Init::He, true, rng);
        Ok(Self {
            config: cfg.clone(),
            stem,
            down,
            steps,
            output,
        })
    }

    /// Shortcut features `F_s^(1..L)`, coarsest first.
    pub fn encode<T: Real>(&self, g: &mut Graph<T>, p: &Bound, input_image: Var) -> Result<Vec<Var>> {
        let cfg = &self.config;
        let [_, c, h, w] = dims(g, input_image);
        if c != cfg.input_channels() || h != cfg.resolution || w != cfg.resolution {
            return Err(input(format!(
                "encoder input {:?}, expected {} channels at {}x{}",
                g.shape(input_image),
                cfg.input_channels(),
                cfg.resolution,
                cfg.resolution
            )));
        }
        let x = self.stem.apply(g, p, input_image)?;
        let mut feats = vec![lrelu(g, x)?];
        for conv in &self.down {
            let x = conv.apply(g, p, *feats.last().unwrap())?;
            feats.push(lrelu(g, x)?);
        }
        feats.reverse();
        Ok(feats)
    }

    /// Guidance resized to level `l`; displacement values are rescaled so they
    /// stay pixel offsets at that level.
    pub fn level_guidance<T: Real>(&self, g: &mut Graph<T>, inputs: &GeneratorInputs, l: usize) -> Result<Var> {
        let size = self.config.level_size(l);
        let ratio = size as f64 / self.config.resolution as f64;
        let mut parts = Vec::with_capacity(2);
        if self.config.guidance.uses_displacement() {
            let d = inputs.displacement.ok_or_else(|| input("displacement guidance missing"))?;
            let d = g.resize_bilinear(d, size, size)?;
            parts.push(g.scale(d, T::lit(ratio))?);
        }
        if self.config.guidance.semantic_channels(self.config.code_dim) > 0 {
            let s = inputs.target_semantic.ok_or_else(|| input("target semantic guidance missing"))?;
            parts.push(g.resize_bilinear(s, size, size)?);
        }
        Ok(if parts.len() == 1 { parts[0] } else { g.concat_channels(&parts)? })
    }

    /// Initial re-aligned features `F_r^(1)`.
    pub fn pwm_initial<T: Real>(&self, g: &mut Graph<T>, inputs: &GeneratorInputs, shortcut1: Var) -> Result<Var> {
        if !self.config.guidance.uses_displacement() {
            return Ok(shortcut1);
        }
        let d = inputs.displacement.ok_or_else(|| input("displacement guidance missing"))?;
        let size = self.config.level_size(1);
        let d = g.resize_bilinear(d, size, size)?;
        let d = g.scale(d, T::lit(size as f64 / self.config.resolution as f64))?;
        let warped = g.grid_warp(shortcut1, d)?;
        Ok(g.concat_channels(&[warped, shortcut1])?)
    }

    fn encoder_input<T: Real>(&self, g: &mut Graph<T>, inputs: &GeneratorInputs) -> Result<Var> {
        if self.config.guidance.semantic_channels(self.config.code_dim) == 0 {
            return Ok(inputs.source);
        }
        let s = inputs.source_semantic.ok_or_else(|| input("source semantic guidance missing"))?;
        Ok(g.concat_channels(&[inputs.source, s])?)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, inputs: &GeneratorInputs) -> Result<GeneratorOutput> {
        let enc_in = self.encoder_input(g, inputs)?;
        let shortcuts = self.encode(g, p, enc_in)?;
        let mut f_r = self.pwm_initial(g, inputs, shortcuts[0])?;
        let mut level_displacements = Vec::with_capacity(self.steps.len());
        let mut coarsest = None;
        let mut last_up = None;
        for (i, step) in self.steps.iter().enumerate() {
            let l = i + 1;
            let guidance = self.level_guidance(g, inputs, l)?;
            let given = match (self.config.warp_mode, coarsest) {
                (WarpMode::SingleScale, Some(d0)) => {
                    let size = self.config.level_size(l);
                    let coarse = self.config.level_size(1);
                    let d = g.resize_bilinear(d0, size, size)?;
                    Some(g.scale(d, T::lit(size as f64 / coarse as f64))?)
                }
                _ => None,
            };
            let trace = step.apply(g, p, f_r, shortcuts[l], guidance, given)?;
            coarsest.get_or_insert(trace.displacement);
            level_displacements.push(trace.displacement);
            last_up = Some(trace.displacement_up);
            f_r = trace.next;
        }
        let out = self.output.apply(g, p, f_r)?;
        let image = g.tanh(out)?;
        Ok(GeneratorOutput {
            image,
            displacement: last_up.expect("at least one PWM step"),
            level_displacements,
            shortcuts,
        })
    }
}

