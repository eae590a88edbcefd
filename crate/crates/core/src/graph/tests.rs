use super::*;
use crate::metrics::KernelSpec;
use crate::nn::{Init, Owners, ParamKind};
use alloc::string::ToString;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const H: f64 = 1e-6;

fn store_with(shapes: &[&[usize]], seed: u64) -> (ParamStore, Vec<ParamId>) {
    let mut s = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, 1.0).unwrap();
    let ids: Vec<ParamId> = shapes
        .iter()
        .enumerate()
        .map(|(i, sh)| {
            let id = s.add(format!("p{i}"), sh, ParamKind::Weight, Owners::E1, Init::Zeros);
            for v in s.value_mut(id).data_mut() {
                *v = d.sample(&mut rng);
            }
            id
        })
        .collect();
    (s, ids)
}

fn probe(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let d = Normal::new(0.0, 1.0).unwrap();
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| d.sample(&mut rng)).collect()).unwrap()
}

/// Compares tape gradients of `build` with central differences for every
/// scalar of every parameter. A non-scalar output is reduced against a
/// random probe.
fn check<F>(store: &mut ParamStore, ids: &[ParamId], tol: f64, build: F)
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let eval = |store: &ParamStore, track: bool| -> (f64, Option<Gradients>) {
        let mut g = Graph::with_trainable(store, Mode::Train, ids);
        let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
        let out = build(&mut g, &vars).unwrap();
        let out = if g.value(out).len() == 1 {
            out
        } else {
            let p = probe(g.value(out).shape(), 7);
            g.dot(out, &p).unwrap()
        };
        let v = g.value(out).item();
        (v, track.then(|| g.backward(out).unwrap()))
    };
    let (_, grads) = eval(store, true);
    let grads = grads.unwrap();
    for &id in ids {
        let analytic = grads.get(id).unwrap().clone();
        for k in 0..store.value(id).len() {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + H;
            let (fp, _) = eval(store, false);
            store.value_mut(id).data_mut()[k] = orig - H;
            let (fm, _) = eval(store, false);
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (fp - fm) / (2.0 * H);
            let a = analytic.data()[k];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            assert!(err < tol, "param {} elem {k}: analytic {a} numeric {numeric}", store.info(id).path);
        }
    }
}

#[test]
fn conv2d_gradients() {
    for (geom, bias) in [
        (ConvGeom::new(3, 1, 1), true),
        (ConvGeom::new(5, 2, 2), false),
        (ConvGeom::asymmetric(4, 1, [1, 1, 2, 2]), true),
        (ConvGeom::new(3, 1, 0), false),
    ] {
        let (mut s, ids) = store_with(&[&[2, 3, 6, 5], &[4, 3, geom.kernel, geom.kernel], &[4]], 1);
        check(&mut s, &ids, 1e-6, |g, v| g.conv2d(v[0], v[1], bias.then_some(v[2]), geom));
    }
}

#[test]
fn deconv2d_gradients() {
    for (geom, h) in [(ConvGeom::new(4, 2, 1), 3), (ConvGeom::new(2, 2, 0), 1), (ConvGeom::new(1, 1, 0), 3)] {
        let (mut s, ids) = store_with(&[&[2, 3, h, h], &[3, 2, geom.kernel, geom.kernel], &[2]], 2);
        check(&mut s, &ids, 1e-6, |g, v| g.deconv2d(v[0], v[1], Some(v[2]), geom));
    }
}

#[test]
fn deconv_is_adjoint_of_conv() {
    // <conv(x, w), y> == <x, deconv(y, w)> without bias
    let geom = ConvGeom::new(4, 2, 1);
    let (s, ids) = store_with(&[&[2, 3, 8, 8], &[5, 3, 4, 4], &[2, 5, 4, 4]], 3);
    let mut g = Graph::new(&s, Mode::Train);
    let x = g.param(ids[0]);
    let w = g.param(ids[1]);
    let y = g.param(ids[2]);
    let cx = g.conv2d(x, w, None, geom).unwrap();
    let dy = g.deconv2d(y, w, None, geom).unwrap();
    let lhs: f64 = g.value(cx).data().iter().zip(g.value(y).data()).map(|(a, b)| a * b).sum();
    let rhs: f64 = g.value(x).data().iter().zip(g.value(dy).data()).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
}

#[test]
fn conv_matches_direct_sum() {
    let geom = ConvGeom::asymmetric(3, 2, [1, 0, 1, 2]);
    let (s, ids) = store_with(&[&[1, 2, 5, 6], &[3, 2, 3, 3], &[3]], 4);
    let mut g = Graph::new(&s, Mode::Train);
    let (x, w, b) = (g.param(ids[0]), g.param(ids[1]), g.param(ids[2]));
    let y = g.conv2d(x, w, Some(b), geom).unwrap();
    let (_, co, oh, ow) = g.value(y).dims4().unwrap();
    let (xv, wv, bv) = (s.value(ids[0]), s.value(ids[1]), s.value(ids[2]));
    for o in 0..co {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bv.data()[o];
                for c in 0..2 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (i * 2 + ky) as isize - 1;
                            let ix = (j * 2 + kx) as isize;
                            if iy >= 0 && iy < 5 && ix >= 0 && ix < 6 {
                                acc += xv.data()[(c * 5 + iy as usize) * 6 + ix as usize]
                                    * wv.data()[((o * 2 + c) * 3 + ky) * 3 + kx];
                            }
                        }
                    }
                }
                let got = g.value(y).data()[(o * oh + i) * ow + j];
                assert!((got - acc).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn linear_gradients() {
    let (mut s, ids) = store_with(&[&[3, 4], &[5, 4], &[5]], 5);
    check(&mut s, &ids, 1e-6, |g, v| g.linear(v[0], v[1], v[2]));
}

#[test]
fn batch_norm_gradients() {
    for shape in [&[4usize, 3, 2, 2][..], &[5, 3][..]] {
        let (mut s, ids) = store_with(&[shape, &[3], &[3]], 6);
        let buf = s.add_stats("bn".to_string(), 3);
        check(&mut s, &ids, 1e-6, |g, v| g.batch_norm(v[0], v[1], v[2], buf));
    }
    let (mut s, ids) = store_with(&[&[4, 3, 2, 2], &[3], &[3]], 7);
    let buf = s.add_stats("bn".to_string(), 3);
    s.stats_mut(buf).mean = alloc::vec![0.1, -0.2, 0.3];
    s.stats_mut(buf).var = alloc::vec![0.5, 2.0, 1.5];
    let eval_check = |s: &mut ParamStore| {
        let ids = ids.clone();
        // eval mode: frozen statistics
        let mut g = Graph::with_trainable(s, Mode::Eval, &ids);
        let v: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
        let y = g.batch_norm(v[0], v[1], v[2], buf).unwrap();
        let xv = s.value(ids[0]).data()[5];
        // element 5 lies in channel 1
        let expected = s.value(ids[1]).data()[1] * (xv + 0.2) / (2.0 + BN_EPS).sqrt() + s.value(ids[2]).data()[1];
        assert!((g.value(y).data()[5] - expected).abs() < 1e-12);
        assert!(g.take_stat_updates().is_empty());
    };
    eval_check(&mut s);
}

#[test]
fn batch_norm_records_unbiased_variance() {
    let mut s = ParamStore::new();
    let x = s.add("x".into(), &[4, 1], ParamKind::Weight, Owners::E1, Init::Zeros);
    s.value_mut(x).data_mut().copy_from_slice(&[1.0, 2.0, 3.0, 6.0]);
    let ga = s.add("g".into(), &[1], ParamKind::BnScale, Owners::E1, Init::Ones);
    let be = s.add("b".into(), &[1], ParamKind::BnShift, Owners::E1, Init::Zeros);
    s.value_mut(ga).data_mut()[0] = 1.0;
    let buf = s.add_stats("bn".into(), 1);
    let mut g = Graph::new(&s, Mode::Train);
    let (xv, gv, bv) = (g.param(x), g.param(ga), g.param(be));
    let y = g.batch_norm(xv, gv, bv, buf).unwrap();
    let upd = g.take_stat_updates();
    assert_eq!(upd[0].mean, [3.0]);
    assert!((upd[0].var[0] - 14.0 / 3.0).abs() < 1e-12);
    let out = g.value(y).data();
    assert!(out.iter().sum::<f64>().abs() < 1e-12);
}

#[test]
fn activation_gradients() {
    for act in [Activation::Relu, Activation::LeakyRelu(0.2), Activation::Tanh, Activation::Sigmoid] {
        let (mut s, ids) = store_with(&[&[3, 7]], 8);
        check(&mut s, &ids, 1e-6, |g, v| Ok(g.activation(v[0], act)));
    }
}

#[test]
fn softmax_gradients_and_rows() {
    let (mut s, ids) = store_with(&[&[4, 10]], 9);
    check(&mut s, &ids, 1e-6, |g, v| g.softmax(v[0]));
    let mut g = Graph::new(&s, Mode::Train);
    let x = g.param(ids[0]);
    let y = g.softmax(x).unwrap();
    for row in g.value(y).data().chunks(10) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn pooling_reshape_concat_gradients() {
    let (mut s, ids) = store_with(&[&[2, 3, 4, 6], &[1, 3, 4, 6]], 10);
    check(&mut s, &ids, 1e-6, |g, v| {
        let c = g.concat_batch(&[v[0], v[1]])?;
        let p = g.max_pool2(c)?;
        let f = g.flatten(p)?;
        g.reshape(f, &[3, 3, 6])
    });
}

#[test]
fn coords_and_column_gradients() {
    let (mut s, ids) = store_with(&[&[2, 3, 4, 4], &[5, 3]], 11);
    check(&mut s, &ids, 1e-6, |g, v| g.append_coords(v[0]));
    check(&mut s, &ids, 1e-6, |g, v| g.select_column(v[1], 2));
}

#[test]
fn loss_op_gradients() {
    let (mut s, ids) = store_with(&[&[3, 2, 2, 2], &[3, 2, 2, 2]], 12);
    check(&mut s, &ids, 1e-6, |g, v| g.l1_mean(v[0], v[1]));

    // probabilities kept strictly inside (0, 1) by a sigmoid
    let (mut s, ids) = store_with(&[&[6]], 13);
    for complement in [false, true] {
        check(&mut s, &ids, 1e-6, |g, v| {
            let p = g.activation(v[0], Activation::Sigmoid);
            g.neg_log_mean(p, complement)
        });
    }
    let (mut s, ids) = store_with(&[&[4, 10]], 14);
    check(&mut s, &ids, 1e-6, |g, v| {
        let p = g.softmax(v[0])?;
        g.nll(p, &[3, 0, 9, 3])
    });
}

#[test]
fn mmd_and_weighted_sum_gradients() {
    let spec = KernelSpec::imq_for_prior(3, 1.5).unwrap();
    let (mut s, ids) = store_with(&[&[5, 3], &[4, 3]], 15);
    check(&mut s, &ids, 1e-6, |g, v| g.mmd(v[0], v[1], spec));
    let (mut s, ids) = store_with(&[&[2, 3], &[2, 3]], 16);
    check(&mut s, &ids, 1e-6, |g, v| g.weighted_sum(&[(v[0], 0.3), (v[1], -2.0), (v[0], 1.5)]));
}

#[test]
fn clamped_logs_are_finite_and_flat() {
    let mut s = ParamStore::new();
    let p = s.add("p".into(), &[2], ParamKind::Weight, Owners::D1, Init::Zeros);
    s.value_mut(p).data_mut().copy_from_slice(&[0.0, 1.0]);
    let mut g = Graph::with_trainable(&s, Mode::Train, &[p]);
    let v = g.param(p);
    let l = g.neg_log_mean(v, false).unwrap();
    assert!((g.value(l).item() + crate::math::ln(LOG_FLOOR) / 2.0).abs() < 1e-12);
    let gr = g.backward(l).unwrap();
    assert_eq!(gr.get(p).unwrap().data()[0], 0.0);
    assert!(gr.is_finite());
}

#[test]
fn frozen_parameters_receive_no_gradient() {
    let (s, ids) = store_with(&[&[3, 4], &[5, 4], &[5]], 17);
    let mut g = Graph::with_trainable(&s, Mode::Train, &ids[1..2]);
    let v: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
    let y = g.linear(v[0], v[1], v[2]).unwrap();
    let l = g.dot(y, &probe(&[3, 5], 1)).unwrap();
    let gr = g.backward(l).unwrap();
    assert!(gr.get(ids[0]).is_none());
    assert!(gr.get(ids[1]).is_some());
    assert!(gr.get(ids[2]).is_none());
}

#[test]
fn shared_parameter_accumulates_both_uses() {
    // f(w) = <w x1, c1> + <w x2, c2> with w entered once
    let (s, ids) = store_with(&[&[2, 3], &[1, 3], &[1, 3], &[2]], 18);
    let mut g = Graph::with_trainable(&s, Mode::Train, &ids[..1]);
    let w = g.param(ids[0]);
    let (x1, x2, b) = (g.param(ids[1]), g.param(ids[2]), g.param(ids[3]));
    let y1 = g.linear(x1, w, b).unwrap();
    let w_again = g.param(ids[0]);
    assert_eq!(w, w_again);
    let y2 = g.linear(x2, w_again, b).unwrap();
    let c = Tensor::from_vec(&[1, 2], alloc::vec![1.0, -1.0]).unwrap();
    let l1 = g.dot(y1, &c).unwrap();
    let l2 = g.dot(y2, &c).unwrap();
    let l = g.weighted_sum(&[(l1, 1.0), (l2, 1.0)]).unwrap();
    let gr = g.backward(l).unwrap().get(ids[0]).unwrap().clone();
    let xs: Vec<f64> = s.value(ids[1]).data().iter().zip(s.value(ids[2]).data()).map(|(a, b)| a + b).collect();
    for k in 0..3 {
        assert!((gr.data()[k] - xs[k]).abs() < 1e-12);
        assert!((gr.data()[3 + k] + xs[k]).abs() < 1e-12);
    }
}

#[test]
fn fingerprint_tracks_relu_pattern() {
    let (mut s, ids) = store_with(&[&[1, 4]], 19);
    s.value_mut(ids[0]).data_mut().copy_from_slice(&[1.0, -1.0, 2.0, -2.0]);
    let fp = |s: &ParamStore| {
        let mut g = Graph::new(s, Mode::Train);
        g.track_fingerprint();
        let x = g.param(ids[0]);
        g.activation(x, Activation::Relu);
        g.fingerprint().unwrap()
    };
    let a = fp(&s);
    s.value_mut(ids[0]).data_mut()[0] = 0.5;
    assert_eq!(a, fp(&s));
    s.value_mut(ids[0]).data_mut()[1] = 0.5;
    assert_ne!(a, fp(&s));
}
