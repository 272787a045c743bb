//! Loss and metric semantics: closed forms, oracles, reference vectors.

use rganet_tensor::{gradcheck, Tape, Tensor4};
use rganet_testkit as tk;
use rganet_training::{
    delta_e_2000, loss_total, loss_total_on_tape, metrics, ms_ssim, psnr, ssim_mean,
};

#[test]
fn ssim_of_identical_images_is_one() {
    let mut rng = tk::rng(100);
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 3, 16, 16), 0.0, 1.0);
    let s = ssim_mean(&x, &x).unwrap();
    assert!((s - 1.0).abs() <= 1e-6);
}

#[test]
fn ssim_constant_images_closed_form() {
    // x = 0, y = 1: luminance term C1/(1 + C1), contrast/structure term 1.
    let x = Tensor4::<f64>::zeros(1, 1, 16, 16);
    let y = Tensor4::<f64>::filled(1, 1, 16, 16, 1.0);
    let want = 1e-4 / (1.0 + 1e-4);
    let s = ssim_mean(&x, &y).unwrap();
    assert!((s - want).abs() <= 1e-7, "got {s}, want {want}");
}

#[test]
fn ssim_matches_sliding_window_oracle() {
    let mut rng = tk::rng(101);
    for trial in 0..3 {
        let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 2, 14, 15), 0.0, 1.0);
        let y: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 2, 14, 15), 0.0, 1.0);
        let got = ssim_mean(&x, &y).unwrap();
        let want = tk::naive_ssim(&x, &y, 11, 1.5);
        assert!((got - want).abs() <= 1e-8, "trial {trial}: {got} vs {want}");
    }
}

#[test]
fn ssim_is_symmetric_and_bounded() {
    let mut rng = tk::rng(102);
    for _ in 0..5 {
        let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 3, 13, 13), 0.0, 1.0);
        let y: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 3, 13, 13), 0.0, 1.0);
        let a = ssim_mean(&x, &y).unwrap();
        let b = ssim_mean(&y, &x).unwrap();
        assert!((a - b).abs() <= 1e-9);
        assert!(a <= 1.0 + 1e-12);
        assert!(a < 1.0 - 1e-6, "distinct random images must not reach 1");
    }
}

#[test]
fn ssim_rejects_too_small_or_mismatched() {
    let x = Tensor4::<f64>::zeros(1, 1, 8, 8);
    assert!(ssim_mean(&x, &x).is_err(), "window must fit");
    let y = Tensor4::<f64>::zeros(1, 1, 16, 16);
    let z = Tensor4::<f64>::zeros(1, 1, 16, 12);
    assert!(ssim_mean(&y, &z).is_err());
}

#[test]
fn ms_ssim_basics() {
    let mut rng = tk::rng(103);
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 3, 64, 64), 0.0, 1.0);
    let same = ms_ssim(&x, &x).unwrap();
    assert!((same - 1.0).abs() <= 1e-9);

    // corrupting the image lowers the score
    let y = x.map(|v| (v + 0.25).min(1.0));
    let degraded = ms_ssim(&x, &y).unwrap();
    assert!(degraded < same);
}

#[test]
fn loss_zero_for_identical_and_closed_form_for_constants() {
    let mut rng = tk::rng(104);
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 3, 16, 16), 0.0, 1.0);
    let l = loss_total(&x, &x, 0.2).unwrap();
    assert!(l.total.abs() <= 1e-9);
    assert!(l.l2 >= 0.0 && l.ssim_term.abs() <= 1e-9);

    let zero = Tensor4::<f64>::zeros(1, 1, 16, 16);
    let one = Tensor4::<f64>::filled(1, 1, 16, 16, 1.0);
    let l = loss_total(&zero, &one, 0.2).unwrap();
    let ssim = 1e-4 / (1.0 + 1e-4);
    assert!((l.l2 - 1.0).abs() <= 1e-12);
    assert!((l.ssim_term - (1.0 - ssim)).abs() <= 1e-9);
    assert!((l.total - (1.0 + 0.2 * (1.0 - ssim))).abs() <= 1e-9);
}

#[test]
fn loss_is_nonnegative_with_equality_iff_equal() {
    let mut rng = tk::rng(105);
    for _ in 0..5 {
        let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 3, 12, 12), 0.0, 1.0);
        let y: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 3, 12, 12), 0.0, 1.0);
        let l = loss_total(&x, &y, 0.2).unwrap();
        assert!(l.total > 0.0);
    }
}

#[test]
fn loss_gradcheck() {
    let mut rng = tk::rng(106);
    let pred: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 3, 16, 16), 0.05, 0.95);
    let target: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 3, 16, 16), 0.05, 0.95);
    let target2 = target.clone();
    let err = gradcheck(
        &move |tape: &mut Tape<f64>, vars| {
            let t = tape.constant(target2.clone());
            let (total, _, _) = loss_total_on_tape(tape, vars[0], t, 0.2)?;
            Ok(total)
        },
        &[pred],
        1e-4,
    )
    .unwrap();
    assert!(err <= 1e-4, "loss gradcheck err {err}");
}

#[test]
fn metric_trivial_values() {
    let mut rng = tk::rng(107);
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 3, 32, 32), 0.0, 1.0);
    let m = metrics(&x, &x).unwrap();
    assert_eq!(m.psnr, 100.0);
    assert!((m.ssim - 1.0).abs() <= 1e-6);
    assert!((m.ms_ssim - 1.0).abs() <= 1e-9);
    assert_eq!(m.mae, 0.0);
    assert_eq!(m.ciede2000, 0.0);
}

#[test]
fn psnr_analytic_case_is_exact() {
    let pred = Tensor4::<f64>::zeros(1, 3, 8, 8);
    let target = Tensor4::<f64>::filled(1, 3, 8, 8, 0.1);
    let p = psnr(&pred, &target).unwrap();
    assert!((p - 20.0).abs() <= 1e-12, "psnr {p}");
}

#[test]
fn ciede2000_matches_published_reference_pairs() {
    for (i, &(l1, a1, b1, l2, a2, b2, want)) in
        tk::CIEDE2000_REFERENCE_PAIRS.iter().enumerate()
    {
        let got = delta_e_2000((l1, a1, b1), (l2, a2, b2));
        assert!(
            (got - want).abs() <= 1e-4,
            "pair {}: got {got:.6}, want {want}",
            i + 1
        );
        // symmetry of the published set's paired rows holds for the formula
        let rev = delta_e_2000((l2, a2, b2), (l1, a1, b1));
        assert!((rev - want).abs() <= 1e-4);
    }
}
