use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taas_core::numeric::gradcheck::{check_gradients, sample_coords};
use taas_core::numeric::{adam_step, layer_norm, matmul, softmax_rows, AdamConfig, Graph, Matrix, ParamStore, Parameter};

fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-50.0f64..50.0, rows * cols).prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
}

fn unit_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(m in (1usize..6, 1usize..9).prop_flat_map(|(r, c)| matrix_strategy(r, c))) {
        let s = softmax_rows(&m);
        for r in 0..s.rows() {
            let total: f64 = s.row(r).iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            prop_assert!(s.row(r).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn softmax_is_monotone(row in proptest::collection::vec(-20.0f64..20.0, 2..8), bump in 0.01f64..5.0) {
        let base = softmax_rows(&Matrix::row_vector(&row));
        let mut up = row.clone();
        up[0] += bump;
        let bumped = softmax_rows(&Matrix::row_vector(&up));
        prop_assert!(bumped.get(0, 0) >= base.get(0, 0));
    }

    #[test]
    fn layer_norm_row_mean_matches_bias(
        m in (1usize..5, 2usize..9).prop_flat_map(|(r, c)| matrix_strategy(r, c)),
        shift in -3.0f64..3.0,
    ) {
        let cols = m.cols();
        let bias = vec![shift; cols];
        let out = layer_norm(&m, &vec![1.0; cols], &bias, 1e-5).unwrap();
        for r in 0..out.rows() {
            let mean = out.row(r).iter().sum::<f64>() / cols as f64;
            prop_assert!((mean - shift).abs() <= 1e-6);
        }
    }

    #[test]
    fn matmul_is_associative(
        (a, b, c) in (1usize..5, 1usize..5, 1usize..5, 1usize..5).prop_flat_map(|(p, q, r, s)| {
            (unit_matrix(p, q), unit_matrix(q, r), unit_matrix(r, s))
        })
    ) {
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        for (x, y) in left.data().iter().zip(right.data()) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop(values in proptest::collection::vec(-10.0f64..10.0, 1..20)) {
        let n = values.len();
        let mut p = Parameter::new("p", Matrix::from_vec(1, n, values.clone()).unwrap());
        adam_step(&mut p, &AdamConfig::with_learning_rate(0.3));
        prop_assert_eq!(p.value.data(), values.as_slice());
    }
}

#[test]
fn matmul_associativity_small_entries_absolute() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let dims: Vec<usize> = (0..4).map(|_| rng.random_range(1..6)).collect();
        let mut m = |r, c| Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (a, b, c) = (m(dims[0], dims[1]), m(dims[1], dims[2]), m(dims[2], dims[3]));
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        for (x, y) in left.data().iter().zip(right.data()) {
            assert!((x - y).abs() <= 1e-6);
        }
    }
}

/// A randomized small network that touches every differentiable graph op.
fn composite_loss(store: &ParamStore, seed: u64) -> taas_core::Result<(Graph, taas_core::numeric::Var)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = |n: &str| store.id(n).unwrap();
    let mut g = Graph::new();
    let table = g.param(store, id("table"));
    let w1 = g.param(store, id("w1"));
    let b1 = g.param(store, id("b1"));
    let gain = g.param(store, id("gain"));
    let bias = g.param(store, id("bias"));
    let w2 = g.param(store, id("w2"));

    let x = g.gather_rows(table, &[2, 0, 3, 2])?; // 4x4
    let h = g.matmul(x, w1)?; // 4x6
    let h = g.add_row(h, b1)?;
    let h = g.layer_norm(h, gain, bias, 1e-5)?;
    let h = g.dropout(h, 0.2, &mut rng)?;
    let left = g.slice_cols(h, 0, 3)?;
    let right = g.slice_cols(h, 3, 3)?;
    let scores = g.matmul_bt(left, right)?; // 4x4
    let scores = g.scale(scores, 0.5);
    let mut keep = vec![true; 16];
    keep[3] = false;
    keep[6] = false;
    let att = g.softmax_masked(scores, keep)?;
    let mixed = g.matmul(att, right)?; // 4x3
    let sp = g.softplus(left);
    let relu = g.relu(mixed);
    let joined = g.concat_cols(&[sp, relu])?; // 4x6
    let t = g.transpose(joined); // 6x4
    let top = g.slice_rows(t, 0, 2)?;
    let bottom = g.slice_rows(t, 4, 2)?;
    let stacked = g.concat_rows(&[top, bottom])?; // 4x4
    let prod = g.mul(stacked, x)?;
    let shifted = g.add_const(prod, &Matrix::filled(4, 4, 0.1))?;
    let diff = g.sub(shifted, x)?;
    let summed = g.add(diff, stacked)?;
    let small = g.scale(summed, 0.1);
    let e = g.exp(small);
    let soft = g.softmax_rows(e);
    let logp = g.ln(soft, 1e-10);
    let mean = g.mean_rows(logp); // 1x4
    let masked = g.mul_const(mean, Matrix::from_rows(&[[1.0, 0.5, -1.0, 2.0]]).unwrap())?;
    let logits = g.matmul(summed, w2)?; // 4x5
    let ce = g.cross_entropy_sum(logits, &[Some(1), None, Some(4), Some(0)])?;
    let s = g.sum_all(masked);
    let loss = g.add(s, ce)?;
    Ok((g, loss))
}

#[test]
fn backward_matches_finite_differences_on_random_networks() {
    for trial in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let mut store = ParamStore::new(trial);
        store.weight("table", 5, 4, &mut rng).unwrap();
        store.weight("w1", 4, 6, &mut rng).unwrap();
        let b1 = store.bias("b1", 6).unwrap();
        store.get_mut(b1).value = Matrix::xavier(1, 6, &mut rng);
        store.add("gain", Matrix::xavier(1, 6, &mut rng).map(|v| v + 1.0)).unwrap();
        store.add("bias", Matrix::xavier(1, 6, &mut rng)).unwrap();
        store.weight("w2", 4, 5, &mut rng).unwrap();
        assert!(store.num_scalars() <= 200);

        let coords = sample_coords(&store, usize::MAX, &mut rng);
        let report = check_gradients(&mut store, |s| composite_loss(s, 7 + trial), &coords, 1e-4).unwrap();
        let failures = report.failures(1e-3);
        assert!(failures.is_empty(), "trial {trial}: {failures:#?}");
    }
}
