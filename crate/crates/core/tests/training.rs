mod common;

use common::{rng, tiny_config};
use facewarp::face_model::procedural_head;
use facewarp::network::{DiscOutput, GuidanceKind, IdentityExtractor};
use facewarp::pipeline::run::{batch_rng, read_metrics};
use facewarp::pipeline::{generate_dataset, train, Dataset, RunOptions};
use facewarp::training::losses::{feature_matching_loss, hinge_d_loss, hinge_g_loss, image_pyramid, perceptual_loss};
use facewarp::training::{generate, Batch, Config, ExtractorKind, LossReport, Trainer};
use facewarp_tensor::{Graph, Tensor};

fn dataset(cfg: &Config) -> Dataset {
    generate_dataset(&procedural_head(), &cfg.data).unwrap()
}

fn batch_at(cfg: &Config, ds: &Dataset, it: usize) -> Batch {
    let pairs = ds.sample_pairs(cfg.train.batch_size, &mut batch_rng(cfg.seed, it));
    ds.batch(&procedural_head(), cfg.model.guidance, &pairs).unwrap()
}

fn scalar(g: &Graph<f64>, v: facewarp_tensor::Var) -> f64 {
    g.value(v).data()[0]
}

#[test]
fn hinge_losses_by_hand() {
    let mut g = Graph::<f64>::new();
    let real = [g.constant(Tensor::from_vec(vec![2], vec![2.0, 0.5]).unwrap()), g.constant(Tensor::full(&[1], -1.0))];
    let fake = [g.constant(Tensor::from_vec(vec![2], vec![-2.0, 0.0]).unwrap()), g.constant(Tensor::full(&[1], 3.0))];
    // Scale 0: relu(1 - r) = [0, 0.5], relu(1 + f) = [0, 1]. Scale 1: 2 and 4.
    let d = hinge_d_loss(&mut g, &real, &fake).unwrap();
    assert!((scalar(&g, d) - (0.25 + 0.5 + 2.0 + 4.0)).abs() < 1e-12);
    let gl = hinge_g_loss(&mut g, &fake).unwrap();
    assert!((scalar(&g, gl) - (1.0 - 3.0)).abs() < 1e-12);
    assert!(hinge_d_loss(&mut g, &real[..1], &fake).is_err());
}

#[test]
fn feature_matching_by_hand() {
    let mut g = Graph::<f64>::new();
    let mut c = |v: Vec<f64>| g.constant(Tensor::from_vec(vec![v.len()], v).unwrap());
    let a = DiscOutput {
        features: vec![vec![c(vec![1.0, 2.0]), c(vec![0.0])], vec![c(vec![-1.0, 1.0, 3.0])]],
    };
    let b = DiscOutput {
        features: vec![vec![c(vec![0.0, 4.0]), c(vec![0.5])], vec![c(vec![-1.0, -1.0, 0.0])]],
    };
    let ab = feature_matching_loss(&mut g, &a, &b).unwrap();
    let ba = feature_matching_loss(&mut g, &b, &a).unwrap();
    let aa = feature_matching_loss(&mut g, &a, &a).unwrap();
    // (1 + 2) / 2 + 0.5 + (0 + 2 + 3) / 3
    let expect = 1.5 + 0.5 + 5.0 / 3.0;
    assert!((scalar(&g, ab) - expect).abs() < 1e-12);
    assert_eq!(scalar(&g, ab), scalar(&g, ba));
    assert_eq!(scalar(&g, aa), 0.0);
    let short = DiscOutput {
        features: vec![a.features[0].clone()],
    };
    assert!(feature_matching_loss(&mut g, &a, &short).is_err());
}

#[test]
fn perceptual_loss_with_identity_features_is_multiscale_l1() {
    let mut g = Graph::<f64>::new();
    let a = Tensor::uniform(&[2, 3, 16, 16], -1.0, 1.0, &mut rng(1));
    let b = Tensor::uniform(&[2, 3, 16, 16], -1.0, 1.0, &mut rng(2));
    let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
    let p = perceptual_loss(&mut g, &IdentityExtractor, va, vb).unwrap();
    let same = perceptual_loss(&mut g, &IdentityExtractor, va, va).unwrap();
    assert_eq!(scalar(&g, same), 0.0);
    // Independent pyramid: 2x2 block means, twice.
    let pool = |t: &[f64], n: usize| -> Vec<f64> {
        let h = n / 2;
        let mut out = vec![0.0; 6 * h * h];
        for p in 0..6 {
            for i in 0..h {
                for j in 0..h {
                    let at = |y: usize, x: usize| t[p * n * n + y * n + x];
                    out[p * h * h + i * h + j] = (at(2 * i, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j) + at(2 * i + 1, 2 * j + 1)) / 4.0;
                }
            }
        }
        out
    };
    let (mut x, mut y, mut n) = (a.data().to_vec(), b.data().to_vec(), 16);
    let mut expect = 0.0;
    for s in 0..3 {
        if s > 0 {
            x = pool(&x, n);
            y = pool(&y, n);
            n /= 2;
        }
        expect += x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64;
    }
    assert!((scalar(&g, p) - expect).abs() < 1e-12);
    assert_eq!(image_pyramid(&mut g, va, 3).unwrap().len(), 3);
}

#[test]
fn schedule_follows_milestones() {
    let cfg = tiny_config(GuidanceKind::GeomDisp);
    let ds = dataset(&cfg);
    let mut t = Trainer::new(cfg.clone(), procedural_head().num_vertices()).unwrap();
    let reports = train(&mut t, &ds, &procedural_head(), &RunOptions::default(), |_| {}).unwrap();
    let lr: Vec<f64> = reports.iter().map(|r| r.lr).collect();
    let base = cfg.train.lr;
    for (i, &v) in lr.iter().enumerate() {
        let expect = match i {
            0..=2 => base,
            3..=5 => base * 0.1,
            _ => base * 0.01,
        };
        assert!((v - expect).abs() < 1e-15, "iteration {i}: {v}");
    }
}

#[test]
fn a_step_updates_both_networks_and_the_codes() {
    let cfg = tiny_config(GuidanceKind::Combined);
    let ds = dataset(&cfg);
    let n = procedural_head().num_vertices();
    let mut t = Trainer::new(cfg.clone(), n).unwrap();
    let before = t.model.clone();
    let report = t.train_step(&batch_at(&cfg, &ds, 0)).unwrap();
    assert!(report.is_finite());
    assert_eq!(t.iteration, 1);
    let changed = |a: &facewarp_tensor::ParamStore<f32>, b: &facewarp_tensor::ParamStore<f32>| {
        a.iter().zip(b.iter()).filter(|((_, p), (_, q))| p.value != q.value).count()
    };
    assert!(changed(&before.gen_params, &t.model.gen_params) > t.model.gen_params.len() / 2);
    // Logit biases can sit exactly where the real and fake hinge terms cancel,
    // so only require every weight to move.
    for ((_, p), (_, q)) in before.disc_params.iter().zip(t.model.disc_params.iter()) {
        if p.name.ends_with(".weight") {
            assert_ne!(p.value, q.value, "{}", p.name);
        }
    }
    assert!(changed(&before.disc_params, &t.model.disc_params) > 0);
    let id = t.model.codes.unwrap();
    assert_ne!(before.gen_params.get(id).value, t.model.gen_params.get(id).value);
}

#[test]
fn reported_total_decomposes_into_weighted_terms() {
    let mut cfg = tiny_config(GuidanceKind::GeomDisp);
    cfg.loss.adversarial = 0.0;
    cfg.loss.feature_matching = 0.0;
    cfg.loss.extractor = ExtractorKind::Identity;
    cfg.loss.perceptual = 3.0;
    cfg.loss.warp = 0.5;
    let ds = dataset(&cfg);
    let b = batch_at(&cfg, &ds, 0);
    let mut t = Trainer::new(cfg.clone(), procedural_head().num_vertices()).unwrap();
    let r = t.train_step(&b).unwrap();
    assert_eq!((r.adversarial, r.feature_matching), (0.0, 0.0));
    assert!((r.g_total - (3.0 * r.perceptual + 0.5 * r.warp)).abs() < 1e-4 * r.g_total);
    // Untrained displacement heads predict zero, so the warped source is the
    // source itself and the constraint is a plain multi-scale L1 to the target.
    let mut g = Graph::<f64>::new();
    let (s, d) = (g.constant(b.source.cast()), g.constant(b.target.cast()));
    let p = perceptual_loss(&mut g, &IdentityExtractor, d, s).unwrap();
    assert!((r.warp - 3.0 * scalar(&g, p)).abs() < 1e-4 * r.warp);
}

#[test]
fn warp_constraint_reaches_the_finest_displacement_head() {
    let cfg = tiny_config(GuidanceKind::GeomDisp);
    let ds = dataset(&cfg);
    let b = batch_at(&cfg, &ds, 0);
    let t = Trainer::new(cfg.clone(), procedural_head().num_vertices()).unwrap();
    let mut g = Graph::<f32>::new();
    let p = t.model.gen_params.bind(&mut g, true).unwrap();
    let source = g.constant(b.source.clone());
    let target = g.constant(b.target.clone());
    let out = generate(&mut g, &t.model, &p, source, &b.geometry).unwrap();
    let warped = g.grid_warp(source, out.displacement).unwrap();
    assert_eq!(g.shape(warped), &[2, 3, 16, 16]);
    // Zero field: the warped source is the source.
    assert_eq!(g.value(warped), &b.source);
    let loss = perceptual_loss(&mut g, t.extractor(), target, warped).unwrap();
    g.backward(loss).unwrap();
    let grads = t.model.gen_params.grads(&g, &p);
    let head = t.model.generator.steps.last().unwrap().displacement_head.unwrap();
    let gw = grads[head.weight.index()].as_ref().unwrap();
    assert!(gw.max_abs() > 0.0);
    // The synthesis conv plays no part in the warped image.
    assert!(grads[t.model.generator.output.weight.index()].is_none());
}

#[test]
fn discriminator_loss_does_not_reach_the_generator() {
    let cfg = tiny_config(GuidanceKind::NeuralCodes);
    let ds = dataset(&cfg);
    let b = batch_at(&cfg, &ds, 0);
    let t = Trainer::new(cfg.clone(), procedural_head().num_vertices()).unwrap();
    let mut g = Graph::<f32>::new();
    let gp = t.model.gen_params.bind(&mut g, true).unwrap();
    let dp = t.model.disc_params.bind(&mut g, true).unwrap();
    let source = g.constant(b.source.clone());
    let out = generate(&mut g, &t.model, &gp, source, &b.geometry).unwrap();
    let fake = g.detach(out.image);
    let target = g.constant(b.target.clone());
    let real_d = t.model.discriminator.forward(&mut g, &dp, target).unwrap();
    let fake_d = t.model.discriminator.forward(&mut g, &dp, fake).unwrap();
    let loss = hinge_d_loss(&mut g, &real_d.logits(), &fake_d.logits()).unwrap();
    g.backward(loss).unwrap();
    assert!(t.model.gen_params.grads(&g, &gp).iter().all(|x| x.is_none()));
    assert!(t.model.disc_params.grads(&g, &dp).iter().all(|x| x.is_some()));
}

#[test]
fn non_finite_loss_writes_a_dump() {
    let cfg = tiny_config(GuidanceKind::GeomDisp);
    let ds = dataset(&cfg);
    let mut t = Trainer::new(cfg.clone(), procedural_head().num_vertices()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    t.dump_dir = dir.path().to_path_buf();
    let id = t.model.generator.output.bias;
    t.model.gen_params.get_mut(id).value.data_mut()[0] = f32::NAN;
    match t.train_step(&batch_at(&cfg, &ds, 0)) {
        Err(facewarp::Error::NonFiniteLoss { iteration, dump }) => {
            assert_eq!(iteration, 0);
            assert_eq!(dump, dir.path().join("nonfinite-iter0.json"));
            let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&dump).unwrap()).unwrap();
            assert_eq!(v["iteration"], 0);
            assert!(v["generator"].as_array().unwrap().iter().any(|p| p["finite"] == false));
        }
        other => panic!("expected a non-finite error, got {other:?}"),
    }
    assert_eq!(t.iteration, 0);
}

fn params_of(t: &Trainer) -> Vec<Tensor<f32>> {
    t.model.gen_params.iter().chain(t.model.disc_params.iter()).map(|(_, p)| p.value.clone()).collect()
}

#[test]
fn training_is_bit_reproducible_and_resumable() {
    let cfg = tiny_config(GuidanceKind::Combined);
    let ds = dataset(&cfg);
    let asset = procedural_head();
    let n = asset.num_vertices();
    let run = || {
        let mut t = Trainer::new(cfg.clone(), n).unwrap();
        let r = train(&mut t, &ds, &asset, &RunOptions::default(), |_| {}).unwrap();
        (t, r)
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(ra, rb);
    assert_eq!(params_of(&a), params_of(&b));

    // Stop halfway, save, reload, continue.
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(cfg.clone(), n).unwrap();
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        stop_at: Some(5),
    };
    train(&mut t, &ds, &asset, &opts, |_| {}).unwrap();
    let mut resumed = Trainer::load(&dir.path().join("checkpoint.fwa")).unwrap();
    assert_eq!(resumed.iteration, 5);
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        stop_at: None,
    };
    train(&mut resumed, &ds, &asset, &opts, |_| {}).unwrap();
    assert_eq!(params_of(&resumed), params_of(&a));
    let logged = read_metrics(&dir.path().join("metrics.jsonl")).unwrap();
    assert_eq!(logged, ra);
}

#[test]
fn checkpoint_round_trip_keeps_optimizer_state() {
    let cfg = tiny_config(GuidanceKind::NeuralCodes);
    let ds = dataset(&cfg);
    let mut t = Trainer::new(cfg.clone(), procedural_head().num_vertices()).unwrap();
    t.train_step(&batch_at(&cfg, &ds, 0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.fwa");
    t.save(&path).unwrap();
    let l = Trainer::load(&path).unwrap();
    assert_eq!(l.config, t.config);
    assert_eq!((l.iteration, l.gen_opt.steps, l.disc_opt.steps), (1, 1, 1));
    for (s, r) in [(&t.model.gen_params, &l.model.gen_params), (&t.model.disc_params, &l.model.disc_params)] {
        for ((_, p), (_, q)) in s.iter().zip(r.iter()) {
            assert_eq!((&p.name, &p.value, &p.adam_m, &p.adam_v, &p.sn_u), (&q.name, &q.value, &q.adam_m, &q.adam_v, &q.sn_u));
        }
    }
    std::fs::write(&path, b"not a checkpoint").unwrap();
    assert!(Trainer::load(&path).is_err());
}

#[test]
fn reports_and_configs_serialize() {
    let r = LossReport {
        iteration: 3,
        lr: 2e-4,
        g_total: 1.5,
        perceptual: 0.1,
        adversarial: -0.2,
        feature_matching: 0.3,
        warp: 0.4,
        d_loss: 1.9,
        l1: 0.05,
    };
    let mut buf = Vec::new();
    r.write_jsonl(&mut buf).unwrap();
    assert_eq!(buf.iter().filter(|&&c| c == b'\n').count(), 1);
    let back: LossReport = serde_json::from_slice(&buf).unwrap();
    assert_eq!(back, r);
    let c = tiny_config(GuidanceKind::Nmfc);
    assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    let mut bad = c.clone();
    bad.data.resolution = 32;
    assert!(Config::from_toml(&bad.to_toml()).is_err());
}

#[test]
fn trained_output_differs_from_untrained() {
    let cfg = tiny_config(GuidanceKind::NeuralCodes);
    let ds = dataset(&cfg);
    let b = batch_at(&cfg, &ds, 0);
    let mut t = Trainer::new(cfg.clone(), procedural_head().num_vertices()).unwrap();
    let render = |t: &Trainer| {
        let mut g = Graph::<f32>::new();
        let p = t.model.gen_params.bind(&mut g, false).unwrap();
        let s = g.constant(b.source.clone());
        let out = generate(&mut g, &t.model, &p, s, &b.geometry).unwrap();
        g.value(out.image).clone()
    };
    let before = render(&t);
    for _ in 0..3 {
        t.train_step(&b).unwrap();
    }
    let after = render(&t);
    let diff: f32 = before.data().iter().zip(after.data()).map(|(x, y)| (x - y).abs()).sum::<f32>() / before.numel() as f32;
    assert!(diff > 1e-4, "{diff}");
}
