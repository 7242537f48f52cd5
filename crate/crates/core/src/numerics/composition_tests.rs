//! Finite-difference checks for every tape operation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Result;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

fn check(store: &ParamStore, build: impl Fn(&mut Tape, &Bindings) -> Result<Var>) -> f64 {
    let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();
    let reports = grad_check(
        store,
        &names,
        |ps| {
            let mut tape = Tape::new();
            let b = ps.bind(&mut tape, GradMode::All);
            let out = build(&mut tape, &b)?;
            tape.backward(out)?;
            Ok((tape.value(out).data()[0], b.grads(&tape)))
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
}

/// Weighted sum with fixed random weights turns any array into a scalar
/// whose gradient exercises every entry.
fn probe(tape: &mut Tape, x: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = tape.value(x).shape();
    let w = tape.constant(random(&mut rng, shape[0], shape[1]));
    let y = tape.mul(x, w)?;
    Ok(tape.sum(y))
}

#[test]
fn dense_ops_pass_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut s = ParamStore::new();
    s.insert("x", random(&mut rng, 5, 4), true).unwrap();
    s.insert("w", random(&mut rng, 3, 4), true).unwrap();
    s.insert("v", random(&mut rng, 4, 3), true).unwrap();
    s.insert("b", random(&mut rng, 1, 3), true).unwrap();
    s.insert("g", random(&mut rng, 1, 3), true).unwrap();
    s.insert("beta", random(&mut rng, 1, 3), true).unwrap();
    let err = check(&s, |t, b| {
        let h = t.matmul_nt(b.var("x")?, b.var("w")?)?; // 5x3
        let h2 = t.matmul(b.var("x")?, b.var("v")?)?; // 5x3
        let h = t.add(h, h2)?;
        let h = t.add_row(h, b.var("b")?)?;
        let h = t.layer_norm(h, b.var("g")?, b.var("beta")?)?;
        let h = t.gelu(h);
        let h2 = t.tanh(h);
        let h = t.mul(h, h2)?;
        let h = t.scale(h, 0.7);
        probe(t, h, 1)
    });
    assert!(err < 1e-6, "max rel error {err}");
}

#[test]
fn softmax_family_passes_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut s = ParamStore::new();
    s.insert("q", random(&mut rng, 4, 3), true).unwrap();
    s.insert("k", random(&mut rng, 4, 3), true).unwrap();
    s.insert("logits", random(&mut rng, 3, 5), true).unwrap();
    let err = check(&s, |t, b| {
        let scores = t.matmul_nt(b.var("q")?, b.var("k")?)?;
        let att = t.causal_softmax(scores)?;
        let a = probe(t, att, 2)?;
        let p = t.softmax_rows(b.var("logits")?)?;
        let h = t.entropy_rows(p)?;
        let h = t.sum(h);
        let ce = t.cross_entropy(b.var("logits")?, &[Some(1), None, Some(4)])?;
        let s1 = t.add(a, h)?;
        t.add(s1, ce)
    });
    assert!(err < 1e-6, "max rel error {err}");
}

#[test]
fn structural_ops_pass_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut s = ParamStore::new();
    s.insert("a", random(&mut rng, 5, 2), true).unwrap();
    s.insert("c", random(&mut rng, 5, 3), true).unwrap();
    s.insert("table", random(&mut rng, 6, 5), true).unwrap();
    let err = check(&s, |t, b| {
        let cat = t.concat_cols(&[b.var("a")?, b.var("c")?])?; // 5x5
        let sl = t.slice_cols(cat, 1, 3)?; // 5x3
        let padded = t.pad_rows(sl, 6)?; // 6x3
        let stacked = t.reshape(padded, 2, 9)?;
        let m = t.mean_rows(stacked)?;
        let g = t.gather_rows(b.var("table")?, &[0, 3, 3, 5])?;
        let rows = t.concat_rows(&[g, cat])?;
        let x = probe(t, m, 3)?;
        let y = probe(t, rows, 4)?;
        let z = t.mean(rows);
        let s1 = t.add(x, y)?;
        t.add(s1, z)
    });
    assert!(err < 1e-6, "max rel error {err}");
}

#[test]
fn soft_mix_passes_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut s = ParamStore::new();
    s.insert("logits", random(&mut rng, 1, 3), true).unwrap();
    for k in 0..3 {
        s.insert(format!("e{k}"), random(&mut rng, 4, 2), true).unwrap();
    }
    let err = check(&s, |t, b| {
        let w = t.softmax_rows(b.var("logits")?)?;
        let coeffs = t.value(w).data().to_vec();
        let experts = [b.var("e0")?, b.var("e1")?, b.var("e2")?];
        let m = t.mix(w, &coeffs, &experts)?;
        probe(t, m, 5)
    });
    assert!(err < 1e-6, "max rel error {err}");
}

#[test]
fn operations_are_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = random(&mut rng, 6, 4);
    let run = || {
        let mut t = Tape::new();
        let v = t.leaf(x.clone(), true);
        let g = t.gelu(v);
        let s = t.softmax_rows(g).unwrap();
        let m = t.mean_rows(s).unwrap();
        let out = t.sum(m);
        t.backward(out).unwrap();
        (t.value(s).clone(), t.grad(v).unwrap())
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
               b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(ga, gb);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn softmax_is_a_distribution(x in proptest::collection::vec(-50.0f64..50.0, 1..12)) {
            let p = softmax(&x).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn entropy_is_bounded(x in proptest::collection::vec(-20.0f64..20.0, 1..10)) {
            let p = softmax(&x).unwrap();
            let h = entropy(&p).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (p.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn concat_preserves_time(t in 1usize..20, d1 in 1usize..6, d2 in 1usize..6) {
            let a = Tensor::filled(t, d1, 1.0);
            let b = Tensor::filled(t, d2, 2.0);
            let out = concat_features(&[&a, &b]).unwrap();
            prop_assert_eq!(out.rows(), t);
            prop_assert_eq!(out.cols(), d1 + d2);
        }
    }
}

#[test]
fn softmax_sums_to_one_on_ten_thousand_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..16);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let p = softmax(&x).unwrap();
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-12, "sum {s}");
    }
}

#[test]
fn entropy_extremes() {
    for m in 1..8 {
        let u = vec![1.0 / m as f64; m];
        assert!((entropy(&u).unwrap() - (m as f64).ln()).abs() < 1e-12);
        let mut one_hot = vec![0.0; m];
        one_hot[m - 1] = 1.0;
        assert_eq!(entropy(&one_hot).unwrap(), 0.0);
    }
}
