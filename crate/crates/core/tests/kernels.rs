use dfdetect_core::layers::{same_padding, Conv2D, ConvPath};
use dfdetect_core::{Activation, Kernel, Tensor};
use proptest::prelude::*;

fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

fn matrices() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>, Vec<f64>)> {
    (1usize..=16, 1usize..=16, 1usize..=16).prop_flat_map(|(m, k, n)| {
        (
            Just(m),
            Just(k),
            Just(n),
            prop::collection::vec(-10.0f64..10.0, m * k),
            prop::collection::vec(-10.0f64..10.0, k * n),
        )
    })
}

proptest! {
    #[test]
    fn matmul_matches_triple_loop((m, k, n, a, b) in matrices()) {
        let expected = naive_matmul(&a, &b, m, k, n);
        let ta = Tensor::new(vec![m, k], a).unwrap();
        let tb = Tensor::new(vec![k, n], b).unwrap();
        for kernel in [Kernel::Reference, Kernel::Fast] {
            let got = ta.matmul_with(&tb, kernel).unwrap();
            prop_assert_eq!(got.shape(), &[m, n]);
            prop_assert_eq!(got.data(), expected.as_slice());
        }
    }

    #[test]
    fn transpose_is_an_involution((m, k, _n, a, _b) in matrices()) {
        let t = Tensor::new(vec![m, k], a).unwrap();
        prop_assert_eq!(t.transpose2d().unwrap().transpose2d().unwrap(), t);
    }
}

/// Sliding-window convolution written from the definition, padding computed
/// here rather than borrowed from the library.
fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, bias: &[f64], stride: usize) -> Tensor<f64> {
    let (n, h, wd, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (k, f) = (w.shape()[0], w.shape()[3]);
    let oh = h.div_ceil(stride);
    let ow = wd.div_ceil(stride);
    let pad_h = ((oh - 1) * stride + k).saturating_sub(h) / 2;
    let pad_w = ((ow - 1) * stride + k).saturating_sub(wd) / 2;
    let mut out = vec![0.0; n * oh * ow * f];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..f {
                    let mut acc = bias[o];
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad_h as isize;
                            let ix = (ox * stride + kx) as isize - pad_w as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            for ch in 0..c {
                                acc += x.at(&[b, iy as usize, ix as usize, ch]) * w.at(&[ky, kx, ch, o]);
                            }
                        }
                    }
                    out[((b * oh + oy) * ow + ox) * f + o] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, oh, ow, f], out).unwrap()
}

fn conv_case() -> impl Strategy<Value = (Tensor<f64>, Tensor<f64>, Vec<f64>, usize)> {
    (1usize..=2, 1usize..=9, 1usize..=9, 1usize..=3, 1usize..=4, 1usize..=4, 1usize..=3).prop_flat_map(
        |(n, h, w, c, k, f, s)| {
            (
                prop::collection::vec(-1.0f64..1.0, n * h * w * c),
                prop::collection::vec(-1.0f64..1.0, k * k * c * f),
                prop::collection::vec(-1.0f64..1.0, f),
            )
                .prop_map(move |(x, wt, b)| {
                    (
                        Tensor::new(vec![n, h, w, c], x).unwrap(),
                        Tensor::new(vec![k, k, c, f], wt).unwrap(),
                        b,
                        s,
                    )
                })
        },
    )
}

proptest! {
    #[test]
    fn conv_matches_sliding_window((x, w, b, stride) in conv_case()) {
        let expected = conv_oracle(&x, &w, &b, stride);
        let conv = Conv2D::from_params(w, Tensor::from_vec(b).unwrap(), stride, Activation::Identity).unwrap();
        for path in [ConvPath::Im2col, ConvPath::Direct] {
            let (y, _) = conv.forward_with(&x, path).unwrap();
            prop_assert_eq!(y.shape(), expected.shape());
            for (a, e) in y.data().iter().zip(expected.data()) {
                prop_assert!((a - e).abs() <= 1e-12 * (1.0 + e.abs()), "{} vs {}", a, e);
            }
        }
    }
}

#[test]
fn stride_two_same_padding_halves_rounding_up() {
    for extent in 1..=17 {
        for kernel in [1, 2, 3, 5] {
            let (lead, trail) = same_padding(extent, kernel, 2);
            let padded = extent + lead + trail;
            let out = if padded < kernel { 0 } else { (padded - kernel) / 2 + 1 };
            assert_eq!(out, extent.div_ceil(2), "extent {extent} kernel {kernel}");
            assert!(trail >= lead && trail - lead <= 1);
        }
        let conv = Conv2D::<f64>::from_params(
            Tensor::full(vec![3, 3, 1, 1], 1.0).unwrap(),
            Tensor::zeros(vec![1]).unwrap(),
            2,
            Activation::Relu,
        )
        .unwrap();
        let (y, _) = conv.forward(&Tensor::full(vec![1, extent, extent, 1], 1.0).unwrap()).unwrap();
        assert_eq!(y.shape(), &[1, extent.div_ceil(2), extent.div_ceil(2), 1]);
    }
}

#[test]
fn spec_example_five_by_five() {
    // 1x5x5x1 input of ones, 3x3 kernel of ones, stride 1: interior 9, edges 6, corners 4
    let conv = Conv2D::<f64>::from_params(
        Tensor::full(vec![3, 3, 1, 1], 1.0).unwrap(),
        Tensor::zeros(vec![1]).unwrap(),
        1,
        Activation::Identity,
    )
    .unwrap();
    let (y, _) = conv.forward(&Tensor::full(vec![1, 5, 5, 1], 1.0).unwrap()).unwrap();
    assert_eq!(y.at(&[0, 0, 0, 0]), 4.0);
    assert_eq!(y.at(&[0, 0, 2, 0]), 6.0);
    assert_eq!(y.at(&[0, 2, 2, 0]), 9.0);
}
