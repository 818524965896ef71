use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::matchers::SimilarityKind;
use crate::rng::Rng;

use super::*;

fn random_tensor(shape: Vec<usize>, rng: &mut Rng) -> Tensor {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Tensor::new(shape, data)
}

#[test]
fn maxpool1d_values_and_argmax_by_definition() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::vector(vec![1.0, 5.0, 2.0, 4.0]));
    let p = tape.maxpool1d(x, 2).unwrap();
    assert_eq!(tape.value(p).data(), &[5.0, 4.0]);
    assert_eq!(tape.pool_argmax(p).unwrap(), &[1, 3]);
}

#[test]
fn maxpool_tie_breaks_toward_lowest_index() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::vector(vec![3.0, 3.0, 1.0, 3.0]));
    let p = tape.maxpool1d(x, 4).unwrap();
    assert_eq!(tape.pool_argmax(p).unwrap(), &[0]);
    // A tie was recorded: top-two gap is zero.
    assert_eq!(tape.min_kink_gap(), 0.0);
}

#[test]
fn cosine_of_vector_with_itself_is_one() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let u = tape.input(Tensor::vector(vec![0.4, -0.3, 0.9]));
    let c = tape.cosine(u, u).unwrap();
    assert!((tape.scalar_value(c) - 1.0).abs() < 1e-12);
}

#[test]
fn hinge_values_by_definition() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let a = tape.input(Tensor::scalar(2.0));
    let b = tape.input(Tensor::scalar(0.0));
    let h = tape.hinge(a, b, 1.0).unwrap();
    assert_eq!(tape.scalar_value(h), 0.0);

    let c = tape.input(Tensor::scalar(1.0));
    let d = tape.input(Tensor::scalar(1.0));
    let h2 = tape.hinge(c, d, 1.0).unwrap();
    assert_eq!(tape.scalar_value(h2), 1.0);
}

#[test]
fn dense_backward_hand_case() {
    // loss = sum(W x + b) with W = [[1, 2], [3, 4]], x = [5, 6], b = 0.
    // dW = [[5, 6], [5, 6]], db = [1, 1], dx = [1+3, 2+4] = [4, 6].
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0])).unwrap();
    let b = store.add("b", Tensor::vector(vec![0.0, 0.0])).unwrap();
    let x = store.add("x", Tensor::vector(vec![5.0, 6.0])).unwrap();

    let mut tape = Tape::new(&store);
    let xn = tape.read_param(x);
    let y = tape.dense(xn, w, b).unwrap();
    let loss = tape.sum(y);
    assert_eq!(tape.scalar_value(loss), 17.0 + 39.0);
    let grads = tape.backward(loss, 1.0).unwrap();
    assert_eq!(grads.get(w).unwrap().data(), &[5.0, 6.0, 5.0, 6.0]);
    assert_eq!(grads.get(b).unwrap().data(), &[1.0, 1.0]);
    assert_eq!(grads.get(x).unwrap().data(), &[4.0, 6.0]);
}

#[test]
fn constant_loss_has_no_gradients() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::vector(vec![1.0, 2.0])).unwrap();
    let mut tape = Tape::new(&store);
    let c = tape.input(Tensor::scalar(3.0));
    let loss = tape.scale(c, 2.0);
    let grads = tape.backward(loss, 1.0).unwrap();
    assert!(grads.get(w).is_none());
}

#[test]
fn relu_blocks_gradient_at_negative_inputs() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::vector(vec![-1.5, 2.0, 0.0])).unwrap();
    let mut tape = Tape::new(&store);
    let xn = tape.read_param(x);
    let r = tape.relu(xn);
    let loss = tape.sum(r);
    let grads = tape.backward(loss, 1.0).unwrap();
    // Negative input: zero gradient. At exactly zero the subgradient is 0.
    assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 0.0]);
}

#[test]
fn backward_requires_scalar_loss() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
    let err = tape.backward(x, 1.0).unwrap_err();
    assert!(matches!(err, TensorError::NonScalarLoss { .. }));
}

#[test]
fn shape_mismatch_names_the_op() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::new(vec![2, 3], vec![0.0; 6])).unwrap();
    let b = store.add("b", Tensor::vector(vec![0.0, 0.0])).unwrap();
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::vector(vec![1.0, 2.0])); // needs length 3
    let err = tape.dense(x, w, b).unwrap_err();
    match err {
        TensorError::ShapeMismatch { op, .. } => assert_eq!(op, "dense"),
        other => panic!("unexpected error {other:?}"),
    }
    let msg = format!("{}", tape.dense(x, w, b).unwrap_err());
    assert!(msg.contains("dense"));
}

#[test]
fn accumulation_doubles_without_reset() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::vector(vec![1.0, 1.0])).unwrap();
    for _ in 0..2 {
        let mut tape = Tape::new(&store);
        let xn = tape.read_param(w);
        let loss = tape.sum(xn);
        let grads = tape.backward(loss, 1.0).unwrap();
        store.accumulate(&grads);
    }
    assert_eq!(store.grad(w).data(), &[2.0, 2.0]);
    store.zero_grads();
    assert_eq!(store.grad(w).data(), &[0.0, 0.0]);
}

// ---- finite-difference verification ----

#[test]
fn grad_check_identity_fragment_is_exact() {
    // With a dyadic eps and value 1.0 every finite-difference quantity is
    // exactly representable, so the error is exactly zero.
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::scalar(1.0)).unwrap();
    let report = grad_check(
        &mut store,
        |tape| {
            let x = tape.read_param(p);
            Ok(tape.scale(x, 1.0))
        },
        0.0001220703125, // 2^-13
    )
    .unwrap();
    assert_eq!(report.max_rel_error, 0.0);
}

#[test]
fn grad_check_dense_layer() {
    for seed in 0..10u64 {
        let mut rng = Rng::from_seed(seed);
        let mut store = ParamStore::new();
        let w = store.add("w", random_tensor(vec![3, 4], &mut rng)).unwrap();
        let b = store.add("b", random_tensor(vec![3], &mut rng)).unwrap();
        let x = store.add("x", random_tensor(vec![4], &mut rng)).unwrap();
        let report = grad_check(
            &mut store,
            |tape| {
                let xn = tape.read_param(x);
                let y = tape.dense(xn, w, b)?;
                let t = tape.tanh(y);
                Ok(tape.sum(t))
            },
            1e-4,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {}", report.max_rel_error);
    }
}

#[test]
fn grad_check_conv_pool_tanh_chain() {
    let mut checked = 0;
    let mut seed = 0u64;
    // Resample seeds whose pooling decisions sit within the perturbation.
    while checked < 10 {
        seed += 1;
        let mut rng = Rng::from_seed(seed);
        let mut store = ParamStore::new();
        let x = store.add("x", random_tensor(vec![6, 7, 1], &mut rng)).unwrap();
        let k = store.add("k", random_tensor(vec![2, 3, 3, 1], &mut rng)).unwrap();
        let kb = store.add("kb", random_tensor(vec![2], &mut rng)).unwrap();
        let report = grad_check(
            &mut store,
            |tape| {
                let xn = tape.read_param(x);
                let c = tape.conv2d(xn, k, Some(kb))?;
                let p = tape.maxpool2d(c, (2, 2))?;
                let t = tape.tanh(p);
                Ok(tape.sum(t))
            },
            1e-4,
        )
        .unwrap();
        if report.tie_suspected(1e-4) {
            continue;
        }
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {}", report.max_rel_error);
        checked += 1;
    }
}

#[test]
fn grad_check_conv1d_and_dynamic_pooling() {
    let mut checked = 0;
    let mut seed = 100u64;
    while checked < 10 {
        seed += 1;
        let mut rng = Rng::from_seed(seed);
        let mut store = ParamStore::new();
        let x = store.add("x", random_tensor(vec![9, 2], &mut rng)).unwrap();
        let k = store.add("k", random_tensor(vec![3, 2, 2], &mut rng)).unwrap();
        let kb = store.add("kb", random_tensor(vec![3], &mut rng)).unwrap();
        let report = grad_check(
            &mut store,
            |tape| {
                let xn = tape.read_param(x);
                let c = tape.conv1d(xn, k, Some(kb))?;
                let r = tape.relu(c);
                let p = tape.maxpool1d(r, 4)?;
                let f = tape.reshape(p, vec![6])?;
                let d = tape.dyn_maxpool1d(f, 4)?;
                Ok(tape.sum(d))
            },
            1e-4,
        )
        .unwrap();
        if report.tie_suspected(1e-4) {
            continue;
        }
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {}", report.max_rel_error);
        checked += 1;
    }
}

#[test]
fn grad_check_similarity_matrix_all_kinds() {
    for kind in [
        SimilarityKind::Dot,
        SimilarityKind::Cosine,
        SimilarityKind::Gaussian { sigma: 0.5 },
    ] {
        let mut checked = 0;
        let mut seed = 200u64;
        while checked < 10 {
            seed += 1;
            let mut rng = Rng::from_seed(seed);
            let mut store = ParamStore::new();
            let q = store.add("q", random_tensor(vec![3, 5], &mut rng)).unwrap();
            let d = store.add("d", random_tensor(vec![4, 5], &mut rng)).unwrap();
            let report = grad_check(
                &mut store,
                |tape| {
                    let qn = tape.read_param(q);
                    let dn = tape.read_param(d);
                    let s = tape.sim_matrix(qn, dn, kind)?;
                    let p = tape.pad2d(s, 5, 6, kind.floor_value())?;
                    let t = tape.tanh(p);
                    Ok(tape.sum(t))
                },
                1e-4,
            )
            .unwrap();
            if report.tie_suspected(1e-4) {
                continue;
            }
            assert!(
                report.max_rel_error < 1e-4,
                "{kind:?} seed {seed}: {}",
                report.max_rel_error
            );
            checked += 1;
        }
    }
}

#[test]
fn grad_check_hinge_and_cosine_scalars() {
    for seed in 0..10u64 {
        let mut rng = Rng::from_seed(seed + 300);
        let mut store = ParamStore::new();
        let u = store.add("u", random_tensor(vec![6], &mut rng)).unwrap();
        let v = store.add("v", random_tensor(vec![6], &mut rng)).unwrap();
        let report = grad_check(
            &mut store,
            |tape| {
                let un = tape.read_param(u);
                let vn = tape.read_param(v);
                let pos = tape.cosine(un, vn)?;
                let neg = tape.cosine(vn, vn)?;
                tape.hinge(pos, neg, 0.25)
            },
            1e-4,
        )
        .unwrap();
        // Hinge is piecewise linear; skip seeds that land on the kink.
        let base = {
            let mut tape = Tape::new(&store);
            let un = tape.read_param(u);
            let vn = tape.read_param(v);
            let pos = tape.cosine(un, vn).unwrap();
            let neg = tape.cosine(vn, vn).unwrap();
            let h = tape.hinge(pos, neg, 0.25).unwrap();
            tape.scalar_value(h)
        };
        if base.abs() < 1e-3 {
            continue;
        }
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {}", report.max_rel_error);
    }
}

#[test]
fn grad_check_embedding_gather() {
    for seed in 0..10u64 {
        let mut rng = Rng::from_seed(seed + 400);
        let mut store = ParamStore::new();
        let table = store.add("table", random_tensor(vec![7, 3], &mut rng)).unwrap();
        let ids = [2u32, 5, 2, 6];
        let report = grad_check(
            &mut store,
            |tape| {
                let e = tape.embed(table, &ids)?;
                let t = tape.tanh(e);
                Ok(tape.sum(t))
            },
            1e-4,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {}", report.max_rel_error);
    }
}

// ---- optimizer ----

#[test]
fn sgd_step_by_definition() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::scalar(1.0)).unwrap();
    store.grad_mut(p).data_mut()[0] = 2.0;
    let mut opt = Optimizer::plain_sgd(0.1);
    opt.step(&mut store).unwrap();
    assert!((store.value(p).item() - 0.8).abs() < 1e-15);
}

#[test]
fn zero_gradient_leaves_parameter_unchanged() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::scalar(0.7)).unwrap();
    let mut sgd = Optimizer::plain_sgd(0.5);
    sgd.step(&mut store).unwrap();
    assert_eq!(store.value(p).item(), 0.7);
    let mut adam = Optimizer::adaptive_moment(0.5);
    adam.step(&mut store).unwrap();
    assert_eq!(store.value(p).item(), 0.7);
}

#[test]
fn first_adaptive_moment_step_has_rate_magnitude() {
    // With g = 1 everywhere: m_hat = 1, v_hat = 1, so the bias-corrected
    // update is rate / (1 + 1e-8), i.e. the step magnitude is ~rate.
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::vector(vec![1.0, -2.0, 0.5])).unwrap();
    for g in store.grad_mut(p).data_mut() {
        *g = 1.0;
    }
    let rate = 0.05;
    let mut opt = Optimizer::adaptive_moment(rate);
    opt.step(&mut store).unwrap();
    let expected = rate / (1.0 + 1e-8);
    for (after, before) in store.value(p).data().iter().zip([1.0, -2.0, 0.5]) {
        assert!(((before - after) - expected).abs() < 1e-12);
    }
}

#[test]
fn non_finite_gradient_fails_fast() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::scalar(1.0)).unwrap();
    store.grad_mut(p).data_mut()[0] = f64::NAN;
    let mut opt = Optimizer::plain_sgd(0.1);
    let err = opt.step(&mut store).unwrap_err();
    assert!(matches!(err, TensorError::NonFiniteGradient { .. }));
    assert_eq!(store.value(p).item(), 1.0);
}

// ---- misc op semantics ----

#[test]
fn dyn_maxpool2d_grid_is_fixed_and_argmax_addresses_maxima() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let mut rng = Rng::from_seed(9);
    let t = random_tensor(vec![7, 11, 2], &mut rng);
    let x = tape.input(t.clone());
    let p = tape.dyn_maxpool2d(x, (3, 4)).unwrap();
    assert_eq!(tape.value(p).shape(), &[3, 4, 2]);
    for (out_idx, &in_idx) in tape.pool_argmax(p).unwrap().iter().enumerate() {
        assert_eq!(tape.value(p).data()[out_idx], t.data()[in_idx]);
    }
}

#[test]
fn dyn_maxpool2d_repeats_cells_when_input_smaller_than_grid() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::new(vec![1, 2, 1], vec![3.0, 7.0]));
    let p = tape.dyn_maxpool2d(x, (3, 4)).unwrap();
    assert_eq!(tape.value(p).shape(), &[3, 4, 1]);
    // Every grid row repeats the single input row.
    for row in 0..3 {
        let vals = &tape.value(p).data()[row * 4..(row + 1) * 4];
        assert_eq!(vals, &[3.0, 3.0, 7.0, 7.0]);
    }
}

#[test]
fn pad2d_keeps_block_and_fills_rest() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::new(vec![1, 2], vec![4.0, 5.0]));
    let p = tape.pad2d(x, 3, 3, -1.0).unwrap();
    assert_eq!(
        tape.value(p).data(),
        &[4.0, 5.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0]
    );
}

#[test]
fn forward_is_deterministic() {
    let mut rng = Rng::from_seed(77);
    let mut store = ParamStore::new();
    let k = store.add("k", random_tensor(vec![2, 3, 3, 1], &mut rng)).unwrap();
    let input = random_tensor(vec![5, 6, 1], &mut rng);
    let run = |store: &ParamStore| {
        let mut tape = Tape::new(store);
        let x = tape.input(input.clone());
        let c = tape.conv2d(x, k, None).unwrap();
        let p = tape.dyn_maxpool2d(c, (2, 2)).unwrap();
        let s = tape.sum(p);
        tape.scalar_value(s)
    };
    assert_eq!(run(&store), run(&store));
}
