use proptest::prelude::*;
use xorp_core::dataset::{encode_pair, is_prime, sample_batch, ProblemSpec};
use xorp_core::seed::trial_rng;
use xorp_core::{class_label, full_test_grid};

fn primes_upto(n: usize) -> impl Iterator<Item = usize> {
    (2..=n).filter(|&p| is_prime(p))
}

#[test]
fn swapping_operands_negates_the_label() {
    for p in 2..=31 {
        for a in 0..p {
            for b in 0..p {
                let ab = class_label(a, b, p).unwrap();
                let ba = class_label(b, a, p).unwrap();
                assert_eq!((ab + ba) % p, 0, "p={p} a={a} b={b}");
            }
        }
    }
}

#[test]
fn shifting_both_operands_keeps_the_label() {
    for p in primes_upto(31) {
        for a in 0..p {
            for b in 0..p {
                let base = class_label(a, b, p).unwrap();
                for k in 0..p {
                    assert_eq!(class_label((a + k) % p, (b + k) % p, p).unwrap(), base);
                }
            }
        }
    }
}

#[test]
fn grid_rows_are_encodings() {
    for p in primes_upto(13) {
        let grid = full_test_grid(p);
        for (i, &(a, b)) in grid.pairs.iter().enumerate() {
            assert_eq!(grid.inputs.row(i).to_vec(), encode_pair(a, b, p).unwrap());
            assert_eq!(grid.labels[i], class_label(a, b, p).unwrap());
        }
    }
}

proptest! {
    #[test]
    fn clean_batches_are_exact_encodings(p in 2usize..40, seed in any::<u64>(), n in 1usize..64) {
        let spec = ProblemSpec::with(p, 0.0, n).unwrap();
        let batch = sample_batch(&spec, &mut trial_rng(seed));
        prop_assert_eq!(batch.len(), n);
        for (i, &(a, b)) in batch.pairs.iter().enumerate() {
            prop_assert_eq!(batch.inputs.row(i).to_vec(), encode_pair(a, b, p).unwrap());
            prop_assert_eq!(batch.labels[i], class_label(a, b, p).unwrap());
        }
    }

    #[test]
    fn batch_stream_is_deterministic(p in 2usize..20, seed in any::<u64>(), sigma in 0.0f64..1.0) {
        let spec = ProblemSpec::with(p, sigma, 16).unwrap();
        let mut r1 = trial_rng(seed);
        let mut r2 = trial_rng(seed);
        for _ in 0..3 {
            prop_assert_eq!(sample_batch(&spec, &mut r1), sample_batch(&spec, &mut r2));
        }
    }

    #[test]
    fn labels_ignore_noise(p in 2usize..20, seed in any::<u64>(), sigma in 0.0f64..2.0) {
        let spec = ProblemSpec::with(p, sigma, 32).unwrap();
        let batch = sample_batch(&spec, &mut trial_rng(seed));
        for (i, &(a, b)) in batch.pairs.iter().enumerate() {
            prop_assert!(batch.labels[i] < p);
            prop_assert_eq!(batch.labels[i], class_label(a, b, p).unwrap());
        }
    }
}
