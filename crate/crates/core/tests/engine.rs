mod common;

use common::{random_params, random_shape, rng};
use fedmorph::data::gen_synthetic;
use fedmorph::nn::{argmax, evaluate, forward, loss, loss_and_backward, sgd_step, Batch};

#[test]
fn evaluation_agrees_with_recounting_argmax() {
    let mut r = rng(5);
    for _ in 0..20 {
        let a = random_shape(&mut r).build();
        let ds = gen_synthetic(a.num_classes(), 7, a.input_shape(), 1);
        let m = random_params(&a, &mut r);
        let e = evaluate(&m, &ds).unwrap();
        let logits = forward(&m, ds.inputs()).unwrap();
        let correct = (0..ds.len()).filter(|&i| argmax(logits.row(i)) == ds.labels()[i]).count();
        assert_eq!((e.correct, e.total), (correct, ds.len()));
        assert_eq!(e.accuracy, correct as f64 / ds.len() as f64);
        // mean cross-entropy from log-sum-exp over the logits
        let ce: f64 = (0..ds.len())
            .map(|i| {
                let row = logits.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                lse - row[ds.labels()[i]]
            })
            .sum::<f64>()
            / ds.len() as f64;
        assert!((e.mean_loss - ce).abs() < 1e-9 * ce.max(1.0));
    }
}

#[test]
fn small_gradient_step_lowers_loss() {
    let mut r = rng(6);
    for _ in 0..20 {
        let a = random_shape(&mut r).build();
        let ds = gen_synthetic(a.num_classes(), 4, a.input_shape(), 2);
        let batch = Batch::from_dataset(&ds, &(0..ds.len()).collect::<Vec<_>>());
        let m = random_params(&a, &mut r);
        let (l0, g) = loss_and_backward(&m, &batch).unwrap();
        let stepped = sgd_step(&m, &g, 1e-3).unwrap();
        assert!(loss(&stepped, &batch).unwrap() <= l0 + 1e-9);
    }
}
