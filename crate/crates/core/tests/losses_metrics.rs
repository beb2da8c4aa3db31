use proptest::prelude::*;
use rfir_core::gradcheck::{probe_weights, GradCheck};
use rfir_core::losses::{bce, bce_probs, l1, multitask_loss, UncertaintyParams};
use rfir_core::metrics::{multilabel_accuracy, psnr, ssim, PSNR_CAP_DB};
use rfir_core::{Graph, Tensor};

fn img(h: usize, w: usize, c: usize, seed: u64) -> Tensor<f64> {
    probe_weights(&[h, w, c], seed).map(|v| 0.5 + 0.4 * v)
}

#[test]
fn bce_closed_forms() {
    let v = bce_probs(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
    assert!((v - 2.0 * 2f64.ln()).abs() < 1e-12);
    assert!((v - 1.386294).abs() < 1e-6);

    let p = (-1f64).exp() / (1.0 + (-1f64).exp());
    assert!((bce_probs(&[1.0], &[p]).unwrap() + p.ln()).abs() < 1e-12);

    let g = Graph::new();
    let z = g.constant(Tensor::from_f64(vec![2], &[0.0, 0.0]).unwrap());
    assert!((bce(z, &[1.0, 0.0]).unwrap().value().item().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
    let z = g.constant(Tensor::from_f64(vec![1], &[-1.0]).unwrap());
    assert!((bce(z, &[1.0]).unwrap().value().item().unwrap() + p.ln()).abs() < 1e-12);

    let z = g.constant(Tensor::from_f64(vec![5], &[50.0, -50.0, 50.0, -50.0, -50.0]).unwrap());
    let perfect = bce(z, &[1.0, 0.0, 1.0, 0.0, 0.0]).unwrap().value().item().unwrap();
    assert!((0.0..=5e-6).contains(&perfect));
    assert!(bce(z, &[1.0]).is_err());
    assert!(bce_probs(&[1.0], &[0.5, 0.5]).is_err());
}

#[test]
fn bce_gradient_matches_finite_differences() {
    let z = probe_weights(&[5], 1).map(|v| 3.0 * v);
    let r = GradCheck::default()
        .inputs(&[z], |_, v| bce(v[0], &[1.0, 0.0, 0.0, 1.0, 1.0]))
        .unwrap();
    assert!(r.max_rel_err() < 1e-6, "{:?}", r.worst());
}

#[test]
fn l1_normalises_by_pixel_count() {
    let g = Graph::new();
    let a = img(6, 5, 3, 2);
    assert_eq!(
        l1(g.constant(a.clone()), g.constant(a.clone()))
            .unwrap()
            .value()
            .item()
            .unwrap(),
        0.0
    );

    let x = img(4, 4, 1, 3);
    let y = x.map(|v| v + 0.125);
    let d = l1(g.constant(x), g.constant(y)).unwrap().value().item().unwrap();
    assert!((d - 0.125).abs() < 1e-12);

    let b = img(6, 5, 3, 4);
    let oracle: f64 = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).sum::<f64>() / 30.0;
    let v = l1(g.constant(a.clone()), g.constant(b))
        .unwrap()
        .value()
        .item()
        .unwrap();
    assert!((v - oracle).abs() < 1e-12);
    assert!(l1(g.constant(a), g.constant(img(5, 6, 3, 0))).is_err());
}

fn joint(bce_v: f64, l1_v: f64, s1: f64, s2: f64) -> (f64, f64, f64) {
    let params = UncertaintyParams::<f64>::new(s1, s2);
    let g = Graph::new();
    let b = g.constant(Tensor::scalar(bce_v));
    let l = g.constant(Tensor::scalar(l1_v));
    let loss = multitask_loss(&g, b, l, &params).unwrap();
    let value = loss.value().item().unwrap();
    let grads = g.backward(loss).unwrap();
    let d1 = grads.param(&params.s1).unwrap().data()[0];
    let d2 = grads.param(&params.s2).unwrap().data()[0];
    (value, d1, d2)
}

#[test]
fn multitask_loss_closed_forms() {
    let (v, _, _) = joint(0.8, 0.3, 0.0, 0.0);
    assert!((v - 0.5 * (0.8 + 0.3)).abs() < 1e-12);

    let (v, _, _) = joint(0.8, 0.3, 0.7, -0.4);
    let oracle = 0.5 * (-0.7f64).exp() * 0.8 + 0.5 * 0.4f64.exp() * 0.3 + 0.7 - 0.4;
    assert!((v - oracle).abs() < 1e-12);

    // dL/ds1 = 1 - bce e^{-s1} / 2 vanishes at sigma1^2 = bce / 2.
    let (_, d1, d2) = joint(0.8, 0.3, (0.4f64).ln(), (0.15f64).ln());
    assert!(d1.abs() < 1e-12 && d2.abs() < 1e-12);
    let (_, d1, _) = joint(0.8, 0.3, 0.0, 0.0);
    assert!((d1 - 0.6).abs() < 1e-12);
}

#[test]
fn multitask_gradient_matches_finite_differences() {
    let mut p = UncertaintyParams::<f64>::new(0.3, -0.2);
    let a = img(4, 4, 3, 5);
    let b = img(4, 4, 3, 6);
    let r = GradCheck::default()
        .params(&mut p, |m, g| {
            let z = g.constant(Tensor::from_f64(vec![3], &[0.4, -1.2, 2.0]).unwrap());
            let c = bce(z, &[1.0, 0.0, 1.0])?;
            let d = l1(g.constant(a.clone()), g.constant(b.clone()))?;
            multitask_loss(g, c, d, m)
        })
        .unwrap();
    assert!(r.max_rel_err() < 1e-6, "{:?}", r.worst());
}

#[test]
fn psnr_golden_values() {
    let a = img(8, 8, 3, 7);
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
    let b = a.map(|v| v + 16.0 / 255.0);
    let p = psnr(&a, &b, 1.0).unwrap();
    assert!((p - 20.0 * (255.0f64 / 16.0).log10()).abs() < 1e-9);
    assert!((p - 24.05).abs() < 0.01);
    assert_eq!(p, psnr(&b, &a, 1.0).unwrap());
    assert!(psnr(&a, &img(8, 4, 3, 0), 1.0).is_err());
}

#[test]
fn psnr_decreases_along_a_noise_ladder() {
    let a = img(16, 16, 3, 8);
    let noise = probe_weights(&[16, 16, 3], 9);
    let mut last = f64::INFINITY;
    for amp in [0.001, 0.003, 0.01, 0.03, 0.1, 0.3] {
        let b = Tensor::from_fn(vec![16, 16, 3], |i| a.data()[i] + amp * noise.data()[i]);
        let p = psnr(&a, &b, 1.0).unwrap();
        assert!(p < last);
        last = p;
    }
}

#[test]
fn ssim_identity_symmetry_and_constants() {
    let a = img(16, 16, 3, 10);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    let b = img(16, 16, 3, 11);
    let s = ssim(&a, &b).unwrap();
    assert!(s < 1.0 - 1e-3);
    assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-12);

    let (c, d) = (0.4, 0.1);
    let c1 = 0.0001;
    let x = Tensor::full(vec![12, 12, 1], c);
    let y = Tensor::full(vec![12, 12, 1], c + d);
    let oracle = (2.0 * c * (c + d) + c1) / (c * c + (c + d) * (c + d) + c1);
    assert!((ssim(&x, &y).unwrap() - oracle).abs() < 1e-9);

    assert!(ssim(&Tensor::<f64>::zeros(vec![10, 16, 3]), &Tensor::zeros(vec![10, 16, 3])).is_err());
}

#[test]
fn ssim_is_one_only_for_identical_inputs() {
    for seed in 0..6 {
        let a = img(16, 16, 3, 100 + seed);
        let mut b = a.clone();
        let (y, x) = (5 + seed as usize, 10 - seed as usize);
        b.data_mut()[(y * 16 + x) * 3 + seed as usize % 3] += 0.05;
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert!(ssim(&a, &b).unwrap() < 1.0 - 1e-9);
    }
}

#[test]
fn exact_match_accuracy() {
    let labels = Tensor::<f64>::from_f64(vec![2, 5], &[1., 0., 0., 1., 0., 0., 1., 1., 0., 0.]).unwrap();
    let all_right = Tensor::from_f64(vec![2, 5], &[3., -3., -1., 2., -2., -4., 1., 5., -1., -1.]).unwrap();
    assert_eq!(multilabel_accuracy(&all_right, &labels).unwrap(), 1.0);
    let one_wrong = Tensor::from_f64(vec![2, 5], &[3., -3., -1., 2., -2., -4., 1., 5., 1., -1.]).unwrap();
    assert_eq!(multilabel_accuracy(&one_wrong, &labels).unwrap(), 0.5);
    assert!(multilabel_accuracy(&one_wrong, &Tensor::zeros(vec![5, 2])).is_err());
}

proptest! {
    #[test]
    fn accuracy_is_invariant_to_label_permutation(
        rows in proptest::collection::vec((proptest::collection::vec(-3.0f64..3.0, 5), proptest::collection::vec(0u8..2, 5)), 1..8),
        perm in Just([0usize, 1, 2, 3, 4]).prop_shuffle(),
    ) {
        let n = rows.len();
        let z: Vec<f64> = rows.iter().flat_map(|r| r.0.clone()).collect();
        let y: Vec<f64> = rows.iter().flat_map(|r| r.1.iter().map(|&b| b as f64)).collect();
        let permute = |v: &[f64]| -> Vec<f64> { (0..n * 5).map(|i| v[(i / 5) * 5 + perm[i % 5]]).collect() };
        let a = multilabel_accuracy(&Tensor::new(vec![n, 5], z.clone()).unwrap(), &Tensor::new(vec![n, 5], y.clone()).unwrap()).unwrap();
        let b = multilabel_accuracy(&Tensor::new(vec![n, 5], permute(&z)).unwrap(), &Tensor::new(vec![n, 5], permute(&y)).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn losses_are_non_negative(z in proptest::collection::vec(-20.0f64..20.0, 5), y in proptest::collection::vec(0u8..2, 5)) {
        let g = Graph::new();
        let y: Vec<f64> = y.into_iter().map(f64::from).collect();
        let v = bce(g.constant(Tensor::new(vec![5], z).unwrap()), &y).unwrap().value().item().unwrap();
        prop_assert!(v >= 0.0);
    }
}
