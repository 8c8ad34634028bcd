mod common;

use common::{ce, check_gradients, gaussian, norm_loss};
use deepforget::linalg::Matrix;
use deepforget::model::ModelCheckpoint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arch() -> impl Strategy<Value = (Vec<usize>, usize)> {
    (prop::collection::vec(1usize..9, 2..5), 2usize..6)
}

fn batch(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| 2.0 * gaussian(&mut rng)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradients_match_finite_differences((sizes, classes) in arch(), n in 1usize..9, seed in any::<u64>(), use_norm in any::<bool>()) {
        let loss = if use_norm { norm_loss } else { ce };
        let g = check_gradients(&sizes, classes, n, seed, loss);
        prop_assert!(g.max_rel <= 1e-5, "max relative error {:e}", g.max_rel);
    }

    #[test]
    fn head_on_features_reproduces_logits((sizes, classes) in arch(), n in 1usize..20, seed in any::<u64>()) {
        let m = ModelCheckpoint::init(&sizes, classes, seed).unwrap();
        let x = batch(n, sizes[0], seed ^ 1);
        let logits = m.logits(&x).unwrap();
        let again = m.head_logits(&m.features(&x).unwrap()).unwrap();
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&logits), bits(&again));
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise((sizes, classes) in arch(), seed in any::<u64>()) {
        let m = ModelCheckpoint::init(&sizes, classes, seed).unwrap();
        let bytes = m.to_bytes();
        let back = ModelCheckpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        for (a, b) in back.layers().zip(m.layers()) {
            prop_assert_eq!(a.param_bits(), b.param_bits());
        }
    }
}
