//! Reference vectors produced by an independent implementation of the seeded
//! split and label-noise procedures. Any other implementation following the
//! same procedure must produce these exact outputs.

use forgefuse_core::deep_linear::{inject_label_noise, NoiseKind};
use forgefuse_core::predlog::split_validation;

fn labels() -> Vec<u32> {
    (0..20).map(|i| i % 4).collect()
}

#[test]
fn symmetric_noise_reference() {
    let (noisy, mask) = inject_label_noise(&labels(), 4, 0.3, NoiseKind::Symmetric, 2024).unwrap();
    assert_eq!(noisy, vec![3, 1, 1, 3, 0, 1, 1, 3, 0, 2, 2, 3, 0, 1, 0, 1, 0, 1, 2, 3]);
    let flipped: Vec<usize> = (0..20).filter(|&i| mask[i]).collect();
    assert_eq!(flipped, vec![0, 2, 6, 9, 14, 15]);
}

#[test]
fn asymmetric_noise_reference() {
    let (noisy, mask) = inject_label_noise(&labels(), 4, 0.25, NoiseKind::Asymmetric, 7).unwrap();
    assert_eq!(noisy, vec![0, 1, 2, 3, 0, 1, 2, 3, 1, 1, 2, 3, 0, 1, 3, 3, 1, 2, 3, 3]);
    let flipped: Vec<usize> = (0..20).filter(|&i| mask[i]).collect();
    assert_eq!(flipped, vec![8, 14, 16, 17, 18]);
}

#[test]
fn validation_split_reference() {
    let (val, test) = split_validation(12, 0.5, 99).unwrap();
    assert_eq!(val, vec![1, 6, 7, 9, 10, 11]);
    assert_eq!(test, vec![0, 2, 3, 4, 5, 8]);
}
