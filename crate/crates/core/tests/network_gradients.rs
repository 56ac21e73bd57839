use deephash::network::{
    softmax_cross_entropy, Classifier, InputSpec, LayerSpec, NetConfig, Network, CONFIG_VERSION,
};
use deephash::{Rng, Tensor};
use proptest::prelude::*;

const H: f64 = 1e-6;

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= (1e-4 * analytic.abs().max(numeric.abs())).max(1e-7)
}

fn pool(max: bool, kernel: usize, stride: usize, pad: usize) -> LayerSpec {
    if max {
        LayerSpec::MaxPool {
            kernel,
            stride,
            pad,
        }
    } else {
        LayerSpec::AvgPool {
            kernel,
            stride,
            pad,
        }
    }
}

prop_compose! {
    fn net_config()(
        channels in 1usize..3,
        side in 4usize..8,
        conv in (1usize..4, 1usize..4, 1usize..3, 0usize..2),
        relu in any::<bool>(),
        lrn in any::<bool>(),
        pooling in prop::option::of((any::<bool>(), 2usize..4, 1usize..3, 0usize..2)),
        fc in 1usize..7,
    ) -> NetConfig {
        let (outputs, kernel, stride, pad) = conv;
        let mut layers = vec![LayerSpec::Convolution { outputs, kernel, stride, pad }];
        if relu {
            layers.push(LayerSpec::Relu);
        }
        if lrn {
            layers.push(LayerSpec::Lrn { local_size: 3, alpha: 0.2, beta: 0.75, k: 1.5 });
        }
        if let Some((max, kernel, stride, pad)) = pooling {
            layers.push(pool(max, kernel, stride, pad.min(kernel - 1)));
        }
        layers.push(LayerSpec::InnerProduct { outputs: fc });
        NetConfig {
            version: CONFIG_VERSION,
            name: None,
            input: InputSpec { channels, height: side, width: side },
            init: Default::default(),
            layers,
            softmax: None,
            hash_head: None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backward_matches_finite_differences(cfg in net_config(), seed in any::<u64>(), batch in 1usize..4) {
        let Ok(mut net) = Network::<f64>::new(&cfg, &mut Rng::new(seed)) else {
            // Geometry that does not chain is rejected at construction.
            return Ok(());
        };
        let mut rng = Rng::new(seed ^ 0x5a5a);
        // Zero-initialised biases put padded conv outputs exactly on the ReLU
        // kink, where central differences average the one-sided slopes.
        for b in (1..net.feature_params().len()).step_by(2) {
            let bias = net.feature_param_mut(b).unwrap();
            let fresh = rng.gaussian_vec::<f64>(bias.len(), 0.5);
            bias.data_mut().copy_from_slice(&fresh);
        }
        let n_in = net.input_len();
        let x = Tensor::from_vec(vec![batch, n_in], rng.gaussian_vec::<f64>(batch * n_in, 1.0)).unwrap();
        let probe = rng.gaussian_vec::<f64>(batch * net.feature_dim(), 1.0);
        let probe_t = Tensor::from_vec(vec![batch, net.feature_dim()], probe.clone()).unwrap();
        net.forward(&x).unwrap();
        let grads = net.backward(&probe_t).unwrap();
        let blocks: Vec<Tensor<f64>> = grads.blocks().into_iter().cloned().collect();
        for (b, g) in blocks.iter().enumerate() {
            for i in 0..g.len() {
                let orig = net.feature_param_mut(b).unwrap().data()[i];
                net.feature_param_mut(b).unwrap().data_mut()[i] = orig + H;
                let up = dot(net.infer(&x).unwrap().data(), &probe);
                net.feature_param_mut(b).unwrap().data_mut()[i] = orig - H;
                let down = dot(net.infer(&x).unwrap().data(), &probe);
                net.feature_param_mut(b).unwrap().data_mut()[i] = orig;
                let num = (up - down) / (2.0 * H);
                prop_assert!(close(g.data()[i], num), "block {} [{}]: {} vs {}", b, i, g.data()[i], num);
            }
        }
        let mut xv = x.data().to_vec();
        for i in 0..xv.len() {
            let orig = xv[i];
            xv[i] = orig + H;
            let up = dot(net.infer(&Tensor::from_vec(vec![batch, n_in], xv.clone()).unwrap()).unwrap().data(), &probe);
            xv[i] = orig - H;
            let down = dot(net.infer(&Tensor::from_vec(vec![batch, n_in], xv.clone()).unwrap()).unwrap().data(), &probe);
            xv[i] = orig;
            let num = (up - down) / (2.0 * H);
            prop_assert!(close(grads.input.data()[i], num), "input [{}]: {} vs {}", i, grads.input.data()[i], num);
        }
    }

    #[test]
    fn classifier_gradients_match_finite_differences(
        features in 1usize..8,
        classes in 2usize..5,
        batch in 1usize..5,
        seed in any::<u64>(),
    ) {
        let mut rng = Rng::new(seed);
        let c = Classifier::<f64>::new(features, classes, 1.0, &mut rng).unwrap();
        let z = Tensor::from_vec(vec![batch, features], rng.gaussian_vec::<f64>(batch * features, 1.0)).unwrap();
        let labels: Vec<u32> = (0..batch).map(|_| rng.below(classes) as u32).collect();
        let (_, g, dz) = c.loss_and_grad(&z, &labels).unwrap();
        let loss = |w: &[f64], b: &[f64], z: &[f64]| {
            let mut logits = vec![0.0; batch * classes];
            for i in 0..batch {
                for k in 0..classes {
                    logits[i * classes + k] = dot(&w[k * features..(k + 1) * features], &z[i * features..(i + 1) * features]) + b[k];
                }
            }
            softmax_cross_entropy(&Tensor::from_vec(vec![batch, classes], logits).unwrap(), &labels).unwrap().0
        };
        let (mut w, mut b, mut zv) = (c.weight().data().to_vec(), c.bias().data().to_vec(), z.data().to_vec());
        for i in 0..w.len() {
            let orig = w[i];
            w[i] = orig + H;
            let up = loss(&w, &b, &zv);
            w[i] = orig - H;
            let down = loss(&w, &b, &zv);
            w[i] = orig;
            prop_assert!(close(g.weight.data()[i], (up - down) / (2.0 * H)));
        }
        for i in 0..b.len() {
            let orig = b[i];
            b[i] = orig + H;
            let up = loss(&w, &b, &zv);
            b[i] = orig - H;
            let down = loss(&w, &b, &zv);
            b[i] = orig;
            prop_assert!(close(g.bias.data()[i], (up - down) / (2.0 * H)));
        }
        for i in 0..zv.len() {
            let orig = zv[i];
            zv[i] = orig + H;
            let up = loss(&w, &b, &zv);
            zv[i] = orig - H;
            let down = loss(&w, &b, &zv);
            zv[i] = orig;
            prop_assert!(close(dz.data()[i], (up - down) / (2.0 * H)));
        }
    }
}
