mod common;

use common::*;
use ndarray::{Array2, IxDyn};
use proptest::prelude::*;
use rand::Rng;
use urbantag::nn::activation::sigmoid;
use urbantag::nn::norm::BN_EPSILON;
use urbantag::nn::{
    bce_loss, check_layer, mixup_with, Adam, AdamConfig, AutoPool, BatchNorm2d, ContextMode, Dense, Layer, Mode, Model,
    ModelConfig, Parameterized, ResidualBlock, Tensor, Variant,
};

fn tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut r = rng(seed);
    Tensor::from_shape_simple_fn(IxDyn(shape), || r.random_range(lo..hi))
}

proptest! {
    #[test]
    fn autopool_lies_between_min_and_max(seed in any::<u64>(), t in 1usize..12, alpha in -20.0f64..20.0) {
        let x = tensor(&[3, t, 4], seed, 0.0, 1.0);
        let mut pool = AutoPool::new("ap", 4);
        pool.alpha.value.fill(alpha);
        let y = pool.forward(&x, Mode::Eval).unwrap();
        for i in 0..3 {
            for c in 0..4 {
                let col: Vec<f64> = (0..t).map(|f| x[[i, f, c]]).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(y[[i, c]] >= lo - 1e-12 && y[[i, c]] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn autopool_limits(seed in any::<u64>(), t in 1usize..12) {
        let x = tensor(&[2, t, 3], seed, 0.0, 1.0);
        let mut pool = AutoPool::new("ap", 3);
        pool.alpha.value.fill(0.0);
        let mean = pool.forward(&x, Mode::Eval).unwrap();
        pool.alpha.value.fill(1000.0);
        let max = pool.forward(&x, Mode::Eval).unwrap();
        for i in 0..2 {
            for c in 0..3 {
                let col: Vec<f64> = (0..t).map(|f| x[[i, f, c]]).collect();
                let m = col.iter().sum::<f64>() / t as f64;
                let top = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!((mean[[i, c]] - m).abs() < 1e-12);
                prop_assert!((max[[i, c]] - top).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn mixup_is_convex(seed in any::<u64>(), n in 2usize..8) {
        let mut r = rng(seed);
        let x = tensor(&[n, 3, 4], seed, -5.0, 5.0);
        let c = tensor(&[n, 85], seed ^ 7, 0.0, 1.0);
        let y = Tensor::from_shape_simple_fn(IxDyn(&[n, 8]), || r.random_bool(0.5) as u8 as f64);
        let partners: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
        let lambdas: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let m = mixup_with(&x, Some(&c), &y, &partners, &lambdas).unwrap();
        for i in 0..n {
            let (j, l) = (partners[i], lambdas[i]);
            for a in 0..3 {
                for b in 0..4 {
                    let want = l * x[[i, a, b]] + (1.0 - l) * x[[j, a, b]];
                    prop_assert!((m.features[[i, a, b]] - want).abs() < 1e-12);
                }
            }
            for k in 0..8 {
                let v = m.labels[[i, k]];
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert!((v - (l * y[[i, k]] + (1.0 - l) * y[[j, k]])).abs() < 1e-12);
            }
            let ctx = m.contexts.as_ref().unwrap();
            prop_assert!((ctx[[i, 5]] - (l * c[[i, 5]] + (1.0 - l) * c[[j, 5]])).abs() < 1e-12);
        }
        let ones = mixup_with(&x, None, &y, &partners, &vec![1.0; n]).unwrap();
        prop_assert_eq!(&ones.features, &x);
        let zeros = mixup_with(&x, None, &y, &partners, &vec![0.0; n]).unwrap();
        for (i, &j) in partners.iter().enumerate() {
            prop_assert_eq!(zeros.labels.index_axis(ndarray::Axis(0), i), y.index_axis(ndarray::Axis(0), j));
        }
    }

    #[test]
    fn frozen_batch_norm_is_the_running_affine_map(seed in any::<u64>()) {
        let mut bn = BatchNorm2d::new("bn", 3);
        bn.gamma.value = tensor(&[3], seed, -2.0, 2.0);
        bn.beta.value = tensor(&[3], seed ^ 1, -1.0, 1.0);
        bn.running_mean.value = tensor(&[3], seed ^ 2, -1.0, 1.0);
        bn.running_var.value = tensor(&[3], seed ^ 3, 0.1, 3.0);
        let x = tensor(&[2, 3, 4, 5], seed ^ 4, -3.0, 3.0);
        let y = bn.forward(&x, Mode::Eval).unwrap();
        for ((i, c, h, w), _) in x.view().into_dimensionality::<ndarray::Ix4>().unwrap().indexed_iter() {
            let want = bn.gamma.value[[c]] * (x[[i, c, h, w]] - bn.running_mean.value[[c]])
                / (bn.running_var.value[[c]] + BN_EPSILON).sqrt()
                + bn.beta.value[[c]];
            prop_assert!((y[[i, c, h, w]] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_never_touches_the_bounds(v in -1e4f64..1e4) {
        let s = sigmoid(v);
        prop_assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn bce_matches_double_loop(seed in any::<u64>(), n in 1usize..6, c in 1usize..9) {
        let mut r = rng(seed);
        let z = Tensor::from_shape_simple_fn(IxDyn(&[n, c]), || r.random_range(0.0..1.0));
        let y = Tensor::from_shape_simple_fn(IxDyn(&[n, c]), || r.random_range(0.0..1.0));
        let (loss, grad) = bce_loss(&z, &y).unwrap();
        let mut want = 0.0;
        for i in 0..n {
            for k in 0..c {
                let zc = z[[i, k]].clamp(1e-7, 1.0 - 1e-7);
                want -= y[[i, k]] * zc.ln() + (1.0 - y[[i, k]]) * (1.0 - zc).ln();
                let g = (zc - y[[i, k]]) / (zc * (1.0 - zc)) / (n * c) as f64;
                prop_assert!(rel(grad[[i, k]], g) < 1e-9);
            }
        }
        prop_assert!(rel(loss, want / (n * c) as f64) < 1e-12);
    }

    #[test]
    fn adam_matches_scalar_recurrence(grads in prop::collection::vec(-3.0f64..3.0, 1..20), lr in 1e-4f64..1e-1) {
        let config = AdamConfig { lr, ..AdamConfig::default() };
        let mut layer = Dense::new("d", 1, 1, 0);
        layer.weight.value.fill(0.5);
        let mut adam = Adam::new(config);
        let (mut w, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            layer.weight.grad.fill(g);
            adam.step(&mut layer).unwrap();
            m = config.beta1 * m + (1.0 - config.beta1) * g;
            v = config.beta2 * v + (1.0 - config.beta2) * g * g;
            let mh = m / (1.0 - config.beta1.powi(t as i32 + 1));
            let vh = v / (1.0 - config.beta2.powi(t as i32 + 1));
            w -= lr * mh / (vh.sqrt() + config.epsilon);
            prop_assert!((layer.weight.value[[0, 0]] - w).abs() < 1e-12);
        }
    }
}

fn small(variant: Variant, seed: u64) -> ModelConfig {
    ModelConfig {
        variant,
        widths: vec![4, 4, 6, 6],
        seed,
        ..ModelConfig::default()
    }
}

#[test]
fn both_variants_share_the_output_shape() {
    for t in [16usize, 17, 42, 64] {
        let mut shapes = Vec::new();
        for variant in [Variant::Cnn9, Variant::Cnn9Res] {
            let mut m = Model::new(small(variant, 3)).unwrap();
            let x = tensor(&[2, t, 64], t as u64, -1.0, 1.0);
            let y = m.forward(&x, None, Mode::Eval).unwrap();
            assert!(y.iter().all(|&v| v > 0.0 && v < 1.0));
            shapes.push((y.shape().to_vec(), m.embed(&x).unwrap().shape().to_vec()));
        }
        assert_eq!(shapes[0], shapes[1]);
        assert_eq!(shapes[0].0, vec![2, 8]);
        assert_eq!(shapes[0].1, vec![2, t / 8, 6]);
    }
}

#[test]
fn default_trunk_on_one_second_of_log_mel() {
    assert_eq!(ModelConfig::default().trunk_shape(42, 64), (5, 8, 256));
}

fn conv_same(x: &Array2<f64>, k: &[f64], b: f64) -> Array2<f64> {
    let (h, w) = x.dim();
    Array2::from_shape_fn((h, w), |(i, j)| {
        let mut acc = b;
        for di in 0..3 {
            for dj in 0..3 {
                let (y, z) = (i as isize + di as isize - 1, j as isize + dj as isize - 1);
                if y >= 0 && z >= 0 && (y as usize) < h && (z as usize) < w {
                    acc += k[di * 3 + dj] * x[[y as usize, z as usize]];
                }
            }
        }
        acc
    })
}

fn lrelu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.01 * v
    }
}

#[test]
fn single_channel_graph_matches_scalar_oracle() {
    let config = ModelConfig {
        widths: vec![1],
        pools: vec![[1, 1]],
        input_bands: 4,
        hidden_units: 2,
        classes: 1,
        ..ModelConfig::default()
    };
    let mut model = Model::new(config).unwrap();
    let mut set = model.parameters();
    let mut r = rng(5);
    for (name, v) in set.values.iter_mut() {
        let (lo, hi) = if name.ends_with("running_var") { (0.5, 2.0) } else { (-1.0, 1.0) };
        v.mapv_inplace(|_| r.random_range(lo..hi));
    }
    model.load_parameters(&set).unwrap();
    let p = |n: &str| set.values[n].iter().cloned().collect::<Vec<f64>>();
    let x = uniform_grid(4, 4, -2.0, 2.0, &mut r);
    let mut h = x.clone();
    for (conv, bn) in [("conv1", "bn1"), ("conv2", "bn2")] {
        h = conv_same(&h, &p(&format!("cnn.block1.{conv}.weight")), p(&format!("cnn.block1.{conv}.bias"))[0]);
        let g = |s: &str| p(&format!("cnn.block1.{bn}.{s}"))[0];
        let scale = g("gamma") / (g("running_var") + BN_EPSILON).sqrt();
        h.mapv_inplace(|v| lrelu(scale * (v - g("running_mean")) + g("beta")));
    }
    let (fw, fb) = (p("head.fusion.weight"), p("head.fusion.bias"));
    let (ow, ob) = (p("head.output.weight"), p("head.output.bias"));
    let alpha = p("head.autopool.alpha")[0];
    let frames: Vec<f64> = (0..4)
        .map(|t| {
            let m = h.row(t).mean().unwrap();
            let z = ob[0] + (0..2).map(|u| ow[u] * lrelu(fw[u] * m + fb[u])).sum::<f64>();
            1.0 / (1.0 + (-z).exp())
        })
        .collect();
    let weights: Vec<f64> = frames.iter().map(|q| (alpha * q).exp()).collect();
    let want = frames.iter().zip(&weights).map(|(q, w)| q * w).sum::<f64>() / weights.iter().sum::<f64>();
    let input = x.into_shape_with_order((1, 4, 4)).unwrap().into_dyn();
    let got = model.forward(&input, None, Mode::Eval).unwrap()[[0, 0]];
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn residual_with_silent_main_path_is_activation_of_input() {
    let mut block = ResidualBlock::new("res", 2, 2, 0.01, 4);
    block.conv2.weight.value.fill(0.0);
    block.conv2.bias.value.fill(0.0);
    block.bn2.beta.value.fill(0.0);
    block.shortcut.weight.value.fill(0.0);
    block.shortcut.weight.value[[0, 0, 0, 0]] = 1.0;
    block.shortcut.weight.value[[1, 1, 0, 0]] = 1.0;
    let x = tensor(&[2, 2, 5, 3], 8, -2.0, 2.0);
    let y = block.forward(&x, Mode::Eval).unwrap();
    let want = x.mapv(|v| lrelu(v / (1.0 + BN_EPSILON).sqrt()));
    assert!(y.iter().zip(want.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn dense_layer_gradient_is_near_exact() {
    let mut d = Dense::new("d", 5, 3, 2);
    let x = tensor(&[4, 5], 9, -1.0, 1.0);
    let err = check_layer(&mut d, &x, Mode::Train, 1).unwrap();
    assert!(err < 1e-7, "{err}");
}

#[test]
fn raw_context_with_zeroed_fusion_equals_no_context() {
    let base = ModelConfig {
        widths: vec![4, 4, 4, 4],
        zero_init_fusion: true,
        seed: 12,
        ..ModelConfig::default()
    };
    let mut plain = Model::new(base.clone()).unwrap();
    let x = tensor(&[3, 16, 64], 1, -1.0, 1.0);
    let want = plain.forward(&x, None, Mode::Eval).unwrap();
    for mode in [ContextMode::Raw, ContextMode::Fc, ContextMode::Lstm] {
        let mut m = Model::new(ModelConfig { context: mode, ..base.clone() }).unwrap();
        let ctx = tensor(&[3, 85], 2, 0.0, 1.0);
        let got = m.forward(&x, Some(&ctx), Mode::Eval).unwrap();
        assert_eq!(got, want, "{mode}");
    }
}
