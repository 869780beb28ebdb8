use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use subid_core::linalg::Matrix;
use subid_core::perturbation::random_perturbation;
use subid_core::spectral::{self, Spectrum};

fn spectrum_strategy(n: usize) -> impl Strategy<Value = Spectrum> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), n)
        .prop_map(|v| Spectrum(v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect()))
}

fn triple() -> impl Strategy<Value = (Spectrum, Spectrum, Spectrum)> {
    (1usize..7).prop_flat_map(|n| (spectrum_strategy(n), spectrum_strategy(n), spectrum_strategy(n)))
}

proptest! {
    #[test]
    fn hausdorff_is_a_metric((a, b, c) in triple()) {
        let ab = spectral::hausdorff_distance(&a, &b).unwrap();
        let ba = spectral::hausdorff_distance(&b, &a).unwrap();
        let bc = spectral::hausdorff_distance(&b, &c).unwrap();
        let ac = spectral::hausdorff_distance(&a, &c).unwrap();
        prop_assert_eq!(spectral::hausdorff_distance(&a, &a).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, ba);
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn hausdorff_dominates_one_sided_variation((a, b, _c) in triple()) {
        let d = spectral::hausdorff_distance(&a, &b).unwrap();
        prop_assert!(spectral::spectrum_variation(&a, &b).unwrap() <= d);
        prop_assert!(spectral::spectrum_variation(&b, &a).unwrap() <= d);
    }

    #[test]
    fn variation_radius_covers_every_eigenvalue((a, b, _c) in triple()) {
        // every eigenvalue of b lies in a disc of radius sv_a(b) around some eigenvalue of a
        let r = spectral::spectrum_variation(&a, &b).unwrap();
        for mu in b.values() {
            prop_assert!(a.values().iter().any(|l| (l - mu).norm() <= r + 1e-15));
        }
    }

    #[test]
    fn elsner_bound_dominates(seed in any::<u64>(), n in 1usize..7, scale in 1e-6f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_perturbation(n, n, 1.0, &mut rng) * 1.5;
        let b = &a + random_perturbation(n, n, scale, &mut rng);
        let d = spectral::pole_distance(&a, &b).unwrap();
        let bound = spectral::elsner_bound(&a, &b).unwrap();
        prop_assert!(d <= bound * (1.0 + 1e-9) + 1e-12, "d_H = {d}, bound = {bound}");
    }

    #[test]
    fn similarity_preserves_spectrum(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_perturbation(n, n, 1.0, &mut rng);
        let t = random_perturbation(n, n, 0.3, &mut rng) + Matrix::identity(n, n);
        let t_inv = t.clone().try_inverse().unwrap();
        let b = &t * &a * t_inv;
        prop_assert!(spectral::pole_distance(&a, &b).unwrap() <= 1e-6);
    }
}
