use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::autograd::check::rand_tensor;
use crate::Error;

fn desk(kind: ArchKind) -> ModelSpec {
    ModelSpec::preset(kind, Preset::Desk)
}

fn input(spec: &ModelSpec, b: usize, seed: u64) -> Tensor<f64> {
    rand_tensor(&[b, spec.in_channels, spec.image_side, spec.image_side], seed)
}

fn run(model: &Model<f64>, x: &Tensor<f64>, mode: Mode) -> (Graph<f64>, Forward<f64>) {
    let mut g = Graph::new();
    let vars = model.bind(&mut g, true);
    let xv = g.constant(x.clone());
    let out = model.forward(&mut g, &vars, xv, mode).unwrap();
    (g, out)
}

#[test]
fn paper_parameter_counts() {
    let targets = [
        (ArchKind::DeepVit, 127.0e6),
        (ArchKind::CrossVit, 75.0e6),
        (ArchKind::LenetMod, 9.7e6),
        (ArchKind::Densenet, 6.9e6),
    ];
    for (kind, target) in targets {
        let n = count_plan_params(&ModelSpec::preset(kind, Preset::Paper)).unwrap() as f64;
        assert!((n / target - 1.0).abs() <= 0.10, "{kind:?}: {n} vs {target}");
    }
}

#[test]
fn single_fc_count() {
    let p = plan(&desk(ArchKind::LenetMod)).unwrap();
    let fc3: usize = p.params.iter().filter(|i| i.name.starts_with("fc3.")).map(ParamInfo::numel).sum();
    assert_eq!(fc3, 2 * 16 + 2);
}

#[test]
fn desk_lenet_formula() {
    let spec = desk(ArchKind::LenetMod);
    let Arch::LenetMod(s) = &spec.arch else { unreachable!() };
    let mut expected = 0;
    let mut cin = spec.in_channels;
    for &c in &s.conv_channels {
        expected += c * cin * 9 + 2 * c;
        cin = c;
    }
    let side = spec.image_side / 16;
    let dims = [cin * side * side, s.fc_hidden[0], s.fc_hidden[1], 2];
    for w in dims.windows(2) {
        expected += w[0] * w[1] + w[1];
    }
    let m = Model::<f32>::build(&spec, 0).unwrap();
    assert_eq!(m.count_params(), expected);
    assert_eq!(count_plan_params(&spec).unwrap(), expected);
}

#[test]
fn token_counts() {
    let vit = plan(&ModelSpec::preset(ArchKind::DeepVit, Preset::Paper)).unwrap();
    let pos = vit.params.iter().find(|p| p.name == "pos_embed").unwrap();
    assert_eq!(pos.shape[0], (224 / 32) * (224 / 32) + 1);
    let cross = plan(&ModelSpec::preset(ArchKind::CrossVit, Preset::Paper)).unwrap();
    let shape = |n: &str| cross.params.iter().find(|p| p.name == n).unwrap().shape[0];
    assert_eq!(shape("large.pos_embed"), (384 / 16) * (384 / 16) + 1);
    assert_eq!(shape("small.pos_embed"), (192 / 16) * (192 / 16) + 1);
    let spec = desk(ArchKind::CrossVit);
    let m = Model::<f64>::build(&spec, 1).unwrap();
    let (_, out) = run(&m, &input(&spec, 1, 2), Mode::Eval);
    assert_eq!(out.token_counts, vec![17, 5]);
}

#[test]
fn names_unique() {
    for kind in ArchKind::ALL {
        for preset in [Preset::Paper, Preset::Desk] {
            let p = plan(&ModelSpec::preset(kind, preset)).unwrap();
            let mut names: Vec<&str> = p.params.iter().map(|i| i.name.as_str()).collect();
            names.sort_unstable();
            let n = names.len();
            names.dedup();
            assert_eq!(names.len(), n, "{kind:?}");
        }
    }
}

#[test]
fn logits_shape_all_kinds() {
    for kind in ArchKind::ALL {
        let spec = desk(kind);
        let m = Model::<f64>::build(&spec, 3).unwrap();
        for b in [1, 2, 5] {
            let x = input(&spec, b, b as u64);
            let modes: &[Mode] = if b >= 2 { &[Mode::Train, Mode::Eval] } else { &[Mode::Eval] };
            for &mode in modes {
                let (g, out) = run(&m, &x, mode);
                assert_eq!(g.shape(out.logits), &[b, 2], "{kind:?}");
                assert!(g.value(out.logits).is_finite());
            }
        }
    }
}

#[test]
fn eval_is_pure_and_rowwise() {
    for kind in ArchKind::ALL {
        let spec = desk(kind);
        let m = Model::<f32>::build(&spec, 4).unwrap();
        let one = input(&spec, 1, 9).cast::<f32>();
        let pair = Tensor::stack(&[one.index_leading(0).unwrap(), one.index_leading(0).unwrap()]).unwrap();
        let a = m.predict(&pair).unwrap();
        let b = m.predict(&pair).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.data()[..2], a.data()[2..]);
    }
}

#[test]
fn seq_pool_weights_stochastic() {
    let spec = desk(ArchKind::Cct);
    let m = Model::<f64>::build(&spec, 5).unwrap();
    let (g, out) = run(&m, &input(&spec, 3, 1), Mode::Eval);
    let w = g.value(out.pool_weights.unwrap());
    assert_eq!(w.shape(), &[3, 64]);
    for row in w.data().chunks(64) {
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn vit_without_positions_ignores_patch_order() {
    let mut spec = desk(ArchKind::DeepVit);
    let Arch::DeepVit(s) = &mut spec.arch else { unreachable!() };
    s.positional = false;
    let p = s.patch;
    let m = Model::<f64>::build(&spec, 6).unwrap();
    let x = input(&spec, 2, 7);
    let side = spec.image_side;
    let grid = side / p;
    // Rotate the patch grid by one position in reading order.
    let perm: Vec<usize> = (0..grid * grid).map(|i| (i + 1) % (grid * grid)).collect();
    let mut y = x.clone();
    for b in 0..2 {
        for c in 0..spec.in_channels {
            for (dst, &src) in perm.iter().enumerate() {
                for r in 0..p {
                    for q in 0..p {
                        let at = |cell: usize| {
                            ((b * spec.in_channels + c) * side + (cell / grid) * p + r) * side + (cell % grid) * p + q
                        };
                        y.data_mut()[at(dst)] = x.data()[at(src)];
                    }
                }
            }
        }
    }
    assert_ne!(x, y);
    let a = m.predict(&x).unwrap();
    let b = m.predict(&y).unwrap();
    for (u, v) in a.data().iter().zip(b.data()) {
        assert!((u - v).abs() < 1e-4);
    }
}

#[test]
fn mean_logit_gradient_matches_finite_difference() {
    let h = 1e-5;
    for kind in ArchKind::ALL {
        let spec = desk(kind);
        let mut m = Model::<f64>::build(&spec, 8).unwrap();
        let x = input(&spec, 2, 11);
        let mean_logit = |m: &Model<f64>| {
            let (mut g, out) = run(m, &x, Mode::Train);
            let l = g.mean(out.logits);
            g.value(l).item()
        };
        let mut graph = Graph::new();
        let vars = m.bind(&mut graph, true);
        let xv = graph.constant(x.clone());
        let out = m.forward(&mut graph, &vars, xv, Mode::Train).unwrap();
        let loss = graph.mean(out.logits);
        graph.backward(loss).unwrap();
        let mut r = rng::seeded(kind as u64);
        let weights: Vec<usize> =
            (0..m.params().len()).filter(|&i| m.param_info()[i].shape.len() >= 2).collect();
        for _ in 0..4 {
            let pi = weights[r.random_range(0..weights.len())];
            let e = r.random_range(0..m.params()[pi].numel());
            let analytic = graph.grad(vars[pi]).map_or(0.0, |gr| gr[e]);
            let orig = m.params()[pi].data()[e];
            m.params_mut()[pi].data_mut()[e] = orig + h;
            let lp = mean_logit(&m);
            m.params_mut()[pi].data_mut()[e] = orig - h;
            let lm = mean_logit(&m);
            m.params_mut()[pi].data_mut()[e] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let scale = analytic.abs().max(numeric.abs());
            assert!(
                (analytic - numeric).abs() <= (1e-3 * scale).max(1e-7),
                "{kind:?} {}[{e}]: {analytic} vs {numeric}",
                m.param_info()[pi].name
            );
        }
    }
}

#[test]
fn deterministic_build() {
    for kind in ArchKind::ALL {
        let a = Model::<f32>::build(&desk(kind), 10).unwrap();
        let b = Model::<f32>::build(&desk(kind), 10).unwrap();
        let c = Model::<f32>::build(&desk(kind), 11).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }
}

#[test]
fn invalid_specs_rejected() {
    let mut s = desk(ArchKind::DeepVit);
    if let Arch::DeepVit(v) = &mut s.arch {
        v.heads = 5;
    }
    assert!(matches!(Model::<f32>::build(&s, 0), Err(Error::Config(m)) if m.contains("heads")));
    let mut s = desk(ArchKind::CrossVit);
    if let Arch::CrossVit(v) = &mut s.arch {
        v.small_patch = 5;
    }
    assert!(matches!(plan(&s), Err(Error::Config(m)) if m.contains("patch")));
    let mut s = desk(ArchKind::LenetMod);
    s.in_channels = 0;
    assert!(matches!(plan(&s), Err(Error::Config(_))));
}

#[test]
fn wrong_input_shape() {
    let spec = desk(ArchKind::LenetMod);
    let m = Model::<f32>::build(&spec, 0).unwrap();
    let x = Tensor::<f32>::zeros([1, 1, 32, 32]);
    assert!(matches!(m.predict(&x), Err(Error::Dimension(_))));
}

#[test]
fn from_parts_checks_shapes() {
    let spec = desk(ArchKind::Densenet);
    let m = Model::<f32>::build(&spec, 0).unwrap();
    let same = Model::from_parts(&spec, m.params().to_vec(), m.buffers().to_vec()).unwrap();
    assert_eq!(same.params(), m.params());
    let mut bad = m.params().to_vec();
    bad[0] = Tensor::zeros([1]);
    assert!(Model::from_parts(&spec, bad, m.buffers().to_vec()).is_err());
}

#[test]
fn reattention_starts_at_identity_mixing() {
    let mut spec = desk(ArchKind::DeepVit);
    let Arch::DeepVit(s) = &mut spec.arch else { unreachable!() };
    s.reattention = true;
    let m = Model::<f64>::build(&spec, 2).unwrap();
    let theta = m.param_info().iter().position(|p| p.name.ends_with("reattn.theta")).unwrap();
    assert_eq!(m.params()[theta].data(), Tensor::<f64>::from_fn([4, 4], |i| f64::from(u8::from(i / 4 == i % 4))).data());
    let out = m.predict(&input(&spec, 2, 3)).unwrap();
    assert!(out.is_finite());
}

