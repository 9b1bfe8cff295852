//! Randomized invariant checks.

use proptest::prelude::*;

use dskm::data::{parse_csv, parse_libsvm, write_csv, write_libsvm, Dataset, Task};
use dskm::kernel::{exact_kernel, featurize, sample_block};
use dskm::predictor::{load, predict, save};
use dskm::stream::{derive_salted, salt};
use dskm::trainer::{coefficient_weights, train, TrainConfig};
use dskm::{Kernel, Loss};

proptest! {
    /// |a_t^i| <= theta/t for step sizes theta/t with theta*nu in
    /// (1,2) or a positive integer.
    #[test]
    fn coefficient_weights_respect_lemma_bound(
        tn in prop_oneof![(1.0001f64..1.9999), Just(1.0), Just(2.0), Just(3.0), Just(4.0)],
        theta in 0.1f64..10.0,
        t in 1usize..400,
    ) {
        let nu = tn / theta;
        let w = coefficient_weights(t, theta, nu);
        let cap = theta / t as f64 + 1e-12;
        for v in w {
            prop_assert!(v.abs() <= cap, "|{v}| > {cap}");
        }
    }

    /// Counter-based streams are pure functions of (seed, salt, index).
    #[test]
    fn streams_are_reproducible_and_in_range(seed in any::<u64>(), idx in any::<u64>(), n in 1u64..1000) {
        let mut a = derive_salted(seed, salt::DATA, idx);
        let mut b = derive_salted(seed, salt::DATA, idx);
        for _ in 0..16 {
            let u = a.uniform();
            prop_assert_eq!(u.to_bits(), b.uniform().to_bits());
            prop_assert!((0.0..1.0).contains(&u));
            let k = a.below(n);
            prop_assert_eq!(k, b.below(n));
            prop_assert!(k < n);
        }
    }

    /// Cosine features are bounded by their amplitude and regenerate
    /// identically from (seed, block index).
    #[test]
    fn cosine_features_are_bounded_and_reproducible(
        seed in any::<u64>(),
        block_idx in 0u64..64,
        xs in prop::collection::vec(-10.0f64..10.0, 2),
        r in 1usize..32,
    ) {
        let spec = Kernel::gaussian(1.0);
        let block = sample_block(&spec, 2, r, seed, block_idx).unwrap();
        let phi = featurize(&block, &spec, &xs, 1).unwrap();
        let cap = (2.0 / r as f64).sqrt() + 1e-15;
        for v in &phi {
            prop_assert!(v.abs() <= cap);
        }
        let block2 = sample_block(&spec, 2, r, seed, block_idx).unwrap();
        let phi2 = featurize(&block2, &spec, &xs, 1).unwrap();
        prop_assert_eq!(phi, phi2);
    }

    /// Gaussian kernel symmetry and boundedness.
    #[test]
    fn exact_kernel_is_symmetric(
        x in prop::collection::vec(-5.0f64..5.0, 3),
        y in prop::collection::vec(-5.0f64..5.0, 3),
        bw in 0.2f64..5.0,
    ) {
        let spec = Kernel::gaussian(bw);
        let kxy = exact_kernel(&spec, &x, &y).unwrap();
        let kyx = exact_kernel(&spec, &y, &x).unwrap();
        prop_assert_eq!(kxy.to_bits(), kyx.to_bits());
        prop_assert!(kxy <= 1.0 + 1e-15 && kxy >= 0.0);
    }

    /// Dataset serialization round-trips losslessly in both formats.
    #[test]
    fn dataset_formats_round_trip(
        rows in prop::collection::vec(
            (prop::collection::vec(-100.0f64..100.0, 3), -100.0f64..100.0),
            1..20,
        ),
    ) {
        let n = rows.len();
        let mut x = Vec::with_capacity(n * 3);
        let mut y = Vec::with_capacity(n);
        for (xi, yi) in &rows {
            x.extend_from_slice(xi);
            y.push(*yi);
        }
        let ds = Dataset::new(x, y, 3, Task::Regression).unwrap();

        let mut csv = Vec::new();
        write_csv(&ds, &mut csv).unwrap();
        let back = parse_csv(&csv[..]).unwrap();
        prop_assert_eq!(&back.x, &ds.x);
        prop_assert_eq!(&back.y, &ds.y);

        let mut libsvm = Vec::new();
        write_libsvm(&ds, &mut libsvm).unwrap();
        let back = parse_libsvm(&libsvm[..]).unwrap();
        prop_assert_eq!(&back.x, &ds.x);
        prop_assert_eq!(&back.y, &ds.y);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Tiny trained models survive save/load bit for bit and store
    /// exactly t*r coefficients.
    #[test]
    fn trained_models_round_trip(
        seed in any::<u64>(),
        theta in 0.5f64..3.0,
        iters in 1usize..8,
        r in 1usize..5,
        averaging in any::<bool>(),
    ) {
        let ds = dskm::data::synth_regression(16, seed, false).unwrap();
        let cfg = TrainConfig {
            theta,
            nu: 0.5 / theta,
            batch_size: 2,
            block_size: r,
            iterations: iters,
            base_seed: seed,
            eval_schedule: vec![],
            averaging,
        };
        let model = train(&ds, cfg, Kernel::gaussian(1.0), Loss::Square).unwrap();
        prop_assert_eq!(model.coefficient_count(), iters * r);

        let mut buf = Vec::new();
        save(&model, &mut buf).unwrap();
        let loaded = load(&buf[..]).unwrap();
        prop_assert_eq!(&loaded, &model);
        let p = predict(&model, ds.row(0), 1).unwrap();
        let q = predict(&loaded, ds.row(0), 1).unwrap();
        prop_assert_eq!(p[0].to_bits(), q[0].to_bits());
    }
}
