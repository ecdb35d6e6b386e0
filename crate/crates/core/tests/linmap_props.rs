use cdcr_core::linalg::Matrix;
use cdcr_core::linmap::{fit_bidirectional, fit_ridge, LinearMap, MapDirection};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normal_equations_hold(seed in any::<u64>(), n in 1usize..40, d in 1usize..10, lambda in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, n, d);
        let y = random_matrix(&mut rng, n, d);
        let (map, report) = fit_ridge(&x, &y, lambda, MapDirection::TextToVision).unwrap();
        prop_assert!(report.normal_eq_residual <= 1e-8, "{report:?}");
        prop_assert_eq!(report.n_samples, n);
        // independent check of (XᵀX + λI)β = XᵀY
        let mut gram = x.t_matmul(&x).unwrap();
        gram.add_diagonal(lambda);
        let lhs = gram.matmul(&map.matrix).unwrap();
        let rhs = x.t_matmul(&y).unwrap();
        let rel = lhs.sub(&rhs).unwrap().frobenius_norm() / rhs.frobenius_norm().max(1e-300);
        prop_assert!(rel <= 1e-8);
    }

    #[test]
    fn shrinkage_is_monotone_in_lambda(seed in any::<u64>(), n in 5usize..40, d in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, n, d);
        let y = random_matrix(&mut rng, n, d);
        let mut last = f64::INFINITY;
        for lambda in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let (map, _) = fit_ridge(&x, &y, lambda, MapDirection::VisionToText).unwrap();
            let norm = map.matrix.frobenius_norm();
            prop_assert!(norm <= last * (1.0 + 1e-9), "λ={lambda}: {norm} > {last}");
            last = norm;
        }
    }

    #[test]
    fn apply_is_linear(seed in any::<u64>(), d in 1usize..12, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = LinearMap {
            matrix: random_matrix(&mut rng, d, d),
            ..LinearMap::identity(d, MapDirection::TextToVision)
        };
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = map.apply(&combo).unwrap();
        let (mu, mv) = (map.apply(&u).unwrap(), map.apply(&v).unwrap());
        for i in 0..d {
            prop_assert!((lhs[i] - (a * mu[i] + b * mv[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn map_file_round_trip(seed in any::<u64>(), d in 1usize..10, lambda in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = LinearMap {
            matrix: random_matrix(&mut rng, d, d),
            lambda,
            ..LinearMap::identity(d, MapDirection::VisionToText)
        };
        let back = LinearMap::from_bytes(&map.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back, map);
    }
}

#[test]
fn bidirectional_fit_recovers_inverse_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 6;
    let x = random_matrix(&mut rng, 60, d);
    let mut b0 = random_matrix(&mut rng, d, d);
    b0.add_diagonal(3.0);
    let y = x.matmul(&b0).unwrap();
    let fit = fit_bidirectional(&x, &y, 1e-10).unwrap();
    let err = cdcr_core::linmap::round_trip_error(&fit.text_to_vision, &fit.vision_to_text, &x).unwrap();
    assert!(err < 1e-6, "{err}");
    assert_eq!(fit.text_to_vision.direction, MapDirection::TextToVision);
    assert_eq!(fit.vision_to_text.direction, MapDirection::VisionToText);
}

#[test]
fn corrupted_map_file_rejected() {
    let map = LinearMap::identity(3, MapDirection::TextToVision);
    let mut bytes = map.to_bytes().unwrap();
    bytes[12] ^= 0xff;
    assert!(LinearMap::from_bytes(&bytes).is_err());
}
