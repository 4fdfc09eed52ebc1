use proptest::prelude::*;
use slidens_tensor::{Conv2dCfg, Graph, ParamStore, Tensor};

/// Direct convolution with edge-replicating padding.
fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, cfg: Conv2dCfg) -> Tensor<f64> {
    let (n, c, h, wd) = x.dims4();
    let (o, _, kh, kw) = w.dims4();
    let ho = cfg.out_len(h, kh);
    let wo = cfg.out_len(wd, kw);
    let mut out = Vec::with_capacity(n * o * ho * wo);
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = 0.0;
                    for ic in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (oy * cfg.stride + i * cfg.dilation) as isize - cfg.padding as isize;
                                let ix = (ox * cfg.stride + j * cfg.dilation) as isize - cfg.padding as isize;
                                let iy = iy.clamp(0, h as isize - 1) as usize;
                                let ix = ix.clamp(0, wd as isize - 1) as usize;
                                s += x.data()[((b * c + ic) * h + iy) * wd + ix] * w.data()[((oc * c + ic) * kh + i) * kw + j];
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
    }
    Tensor::from_vec(&[n, o, ho, wo], out)
}

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-2.0f64..2.0, n).prop_map(move |v| Tensor::from_vec(&shape, v))
}

fn conv_case() -> impl Strategy<Value = (Tensor<f64>, Tensor<f64>, Conv2dCfg)> {
    (1usize..3, 1usize..4, 3usize..9, 3usize..9, 1usize..4, prop::sample::select(vec![1usize, 3]), 1usize..3, 1usize..3)
        .prop_flat_map(|(n, c, h, w, o, k, stride, dilation)| {
            let cfg = Conv2dCfg { stride, padding: dilation * (k - 1) / 2, dilation };
            (tensor(vec![n, c, h, w]), tensor(vec![o, c, k, k]), Just(cfg))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_matches_direct_sum((x, w, cfg) in conv_case()) {
        let want = naive_conv(&x, &w, cfg);
        let mut g = Graph::inference();
        let (xv, wv) = (g.input(x), g.input(w));
        let y = g.conv2d(xv, wv, None, cfg);
        prop_assert_eq!(g.shape(y), want.shape());
        for (a, b) in g.value(y).data().iter().zip(want.data()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_images_stay_constant(value in -3.0f64..3.0, c in 1usize..4, side in 3usize..10, dilation in 1usize..3) {
        let x = Tensor::full(&[1, c, side, side], value);
        let w = Tensor::from_vec(&[2, c, 3, 3], (0..2 * c * 9).map(|i| (i as f64 * 0.37).sin()).collect());
        let mut g = Graph::inference();
        let (xv, wv) = (g.input(x), g.input(w));
        let y = g.conv2d(xv, wv, None, Conv2dCfg::dilated(3, dilation));
        let out = g.value(y).data();
        let plane = side * side;
        for ch in out.chunks(plane) {
            prop_assert!(ch.iter().all(|&v| (v - ch[0]).abs() < 1e-12));
        }
    }

    #[test]
    fn softmax_rows_are_distributions(x in tensor(vec![2, 3, 5])) {
        let mut g = Graph::inference();
        let v = g.input(x);
        let s = g.softmax(v);
        for row in g.value(s).data().chunks(5) {
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn max_pool_takes_window_maxima(x in tensor(vec![1, 2, 6, 4])) {
        let mut g = Graph::inference();
        let v = g.input(x.clone());
        let p = g.max_pool2(v);
        prop_assert_eq!(g.shape(p), &[1, 2, 3, 2]);
        let out = g.value(p).data();
        for c in 0..2 {
            for i in 0..3 {
                for j in 0..2 {
                    let at = |r: usize, q: usize| x.data()[(c * 6 + r) * 4 + q];
                    let m = at(2 * i, 2 * j).max(at(2 * i + 1, 2 * j)).max(at(2 * i, 2 * j + 1)).max(at(2 * i + 1, 2 * j + 1));
                    prop_assert_eq!(out[(c * 3 + i) * 2 + j], m);
                }
            }
        }
    }

    #[test]
    fn weights_round_trip_bit_exactly(a in tensor(vec![3, 2, 1, 1]), b in tensor(vec![5])) {
        let mut store = ParamStore::new();
        store.push("a", a);
        store.push("b", b);
        let mut bytes = Vec::new();
        store.write_to(&mut bytes).unwrap();
        let mut back = ParamStore::new();
        back.push("a", Tensor::zeros(&[3, 2, 1, 1]));
        back.push("b", Tensor::zeros(&[5]));
        back.read_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(back, store);
    }
}
