//! CBAM forward pass against a direct nested-loop transcription.

mod oracles;

use oracles::cbam::{naive_channel, naive_forward, naive_spatial, nested};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrkit::cbam::{cbam_forward, cbam_jvp, channel_attention, init_weights, spatial_attention, Tensor4};

fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor4 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor4::from_fn(shape, |_, _, _, _| rng.random_range(-2.0..2.0)).unwrap()
}

fn assert_close(got: &[f32], want: &[f64], tol: f64) {
    assert_eq!(got.len(), want.len());
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        let err = (*g as f64 - w).abs();
        assert!(err <= tol * w.abs().max(1.0), "index {i}: {g} vs {w}");
    }
}

#[test]
fn channel_gate_matches_oracle() {
    let w = init_weights(8, 2, 7, 21).unwrap();
    let x = random_tensor([1, 8, 4, 4], 22);
    let want: Vec<f64> = naive_channel(&nested(&x), &w).concat();
    assert_close(channel_attention(&x, &w).unwrap().data(), &want, 1e-5);
}

#[test]
fn spatial_gate_matches_oracle() {
    let w = init_weights(4, 2, 7, 31).unwrap();
    let x = random_tensor([1, 4, 8, 8], 32);
    let want: Vec<f64> = naive_spatial(&nested(&x), &w).concat().concat();
    assert_close(spatial_attention(&x, &w).unwrap().data(), &want, 1e-5);
}

#[test]
fn forward_matches_oracle_up_to_2x32x16x16() {
    for (shape, r, k) in [
        ([1, 8, 4, 4], 2, 7),
        ([2, 16, 9, 7], 4, 3),
        ([2, 32, 16, 16], 16, 7),
        ([1, 2, 1, 1], 1, 7),
    ] {
        let w = init_weights(shape[1], r, k, shape.iter().product::<usize>() as u64).unwrap();
        let x = random_tensor(shape, 99);
        assert_close(cbam_forward(&x, &w).unwrap().data(), &naive_forward(&x, &w), 1e-5);
    }
}

#[test]
fn jvp_matches_central_differences() {
    // Larger steps let the perturbation cross max-pool argmax switches.
    let step = 1e-4f32;
    for seed in 0..5u64 {
        let w = init_weights(16, 4, 7, 100 + seed).unwrap();
        let x = random_tensor([2, 16, 6, 6], 200 + seed);
        let v = random_tensor([2, 16, 6, 6], 300 + seed);
        let (_, jvp) = cbam_jvp(&x, &v, &w).unwrap();
        let shifted = |sign: f32| {
            let data = x
                .data()
                .iter()
                .zip(v.data())
                .map(|(a, b)| a + sign * step * b)
                .collect();
            Tensor4::new(x.shape(), data).unwrap()
        };
        let (plus, _) = cbam_jvp(&shifted(1.0), &v, &w).unwrap();
        let (minus, _) = cbam_jvp(&shifted(-1.0), &v, &w).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..jvp.len() {
            let fd = (plus[i] - minus[i]) / (2.0 * step as f64);
            num += (fd - jvp[i]).powi(2);
            den += jvp[i].powi(2);
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-2, "seed {seed}: relative JVP error {rel}");
    }
}

#[test]
fn batch_permutation_equivariance() {
    let w = init_weights(8, 2, 7, 4).unwrap();
    let x = random_tensor([4, 8, 5, 5], 5);
    let perm = [2usize, 0, 3, 1];
    let permuted = Tensor4::from_fn(x.shape(), |n, c, h, ww| x.get(perm[n], c, h, ww)).unwrap();
    let y = cbam_forward(&x, &w).unwrap();
    let yp = cbam_forward(&permuted, &w).unwrap();
    let sa = spatial_attention(&x, &w).unwrap();
    let sap = spatial_attention(&permuted, &w).unwrap();
    let [_, c, h, ww] = x.shape();
    for (n, &src) in perm.iter().enumerate() {
        for ch in 0..c {
            for yy in 0..h {
                for xx in 0..ww {
                    assert_eq!(yp.get(n, ch, yy, xx), y.get(src, ch, yy, xx));
                }
            }
        }
        for yy in 0..h {
            for xx in 0..ww {
                assert_eq!(sap.get(n, 0, yy, xx), sa.get(src, 0, yy, xx));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gates_bounded_and_shape_preserved(
        n in 1usize..3, cexp in 0u32..4, h in 1usize..9, wd in 1usize..9,
        k in prop::sample::select(vec![1usize, 3, 5, 7]),
        seed in any::<u64>(),
    ) {
        let c = 1usize << cexp;
        let w = init_weights(c, 1, k, seed).unwrap();
        let x = random_tensor([n, c, h, wd], seed ^ 1);
        let y = cbam_forward(&x, &w).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
        for (a, b) in y.data().iter().zip(x.data()) {
            prop_assert!(a.abs() <= b.abs());
        }
        for g in channel_attention(&x, &w).unwrap().data().iter().chain(spatial_attention(&x, &w).unwrap().data()) {
            prop_assert!(*g > 0.0 && *g < 1.0);
        }
    }
}
