mod common;

use common::tdist::t_upper_tail;
use pmrl::evaluation::welch_t_test;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn quadrature_oracle_is_sane() {
    // Cauchy-like check at df = 2 has a closed form: P(T > t) = 1/2 − t / (2√(t² + 2))
    for t in [-3.0, -0.5, 0.0, 0.7, 2.5] {
        let exact = 0.5 - t / (2.0 * (t * t + 2.0f64).sqrt());
        assert!((t_upper_tail(t, 2.0) - exact).abs() < 1e-9);
    }
}

#[test]
fn welch_p_matches_quadrature_on_the_worked_example() {
    let r = welch_t_test(&[2.1, 2.0, 1.9], &[1.1, 1.0, 0.9]).unwrap();
    let oracle = t_upper_tail(r.t, r.df);
    println!("t = {}, df = {}, p = {:e}, oracle {:e}", r.t, r.df, r.p, oracle);
    assert!((r.p - oracle).abs() < 1e-6);
}

#[test]
fn welch_p_matches_quadrature_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let nx = rng.random_range(5..30);
        let ny = rng.random_range(5..30);
        let (sx, sy) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
        let shift = rng.random_range(-1.5..1.5);
        let x: Vec<f64> = (0..nx).map(|_| shift + sx * rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..ny).map(|_| sy * rng.random_range(-1.0..1.0)).collect();
        let r = welch_t_test(&x, &y).unwrap();
        worst = worst.max((r.p - t_upper_tail(r.t, r.df)).abs());
        let swapped = welch_t_test(&y, &x).unwrap();
        if r.t >= 0.0 {
            assert_eq!(swapped.p, 1.0 - r.p);
        } else {
            // 1 − (1 − u) can differ from u by one rounding
            assert!((swapped.p - (1.0 - r.p)).abs() < 1e-15);
        }
        assert!(r.p > 0.0 && r.p < 1.0);
    }
    println!("worst |p - oracle| = {worst:e}");
    assert!(worst < 1e-6);
}
