//! Published full-scale numbers the `reproduce` command prints next to its own.

/// Top-1 accuracy (%) at `s = 0.1`: (dataset, head, method) → value.
pub const TABLE1: &[(&str, &str, &str, f64)] = &[
    ("cifar10", "dense", "random", 10.00),
    ("cifar10", "dense", "magnitude", 87.36),
    ("cifar10", "dense", "snip", 73.21),
    ("cifar10", "dense", "grasp", 29.17),
    ("cifar10", "dense", "synflow", 79.75),
    ("cifar10", "dense", "factorized", 88.01),
    ("mnist", "dense", "random", 94.49),
    ("mnist", "dense", "magnitude", 97.57),
    ("mnist", "dense", "snip", 95.54),
    ("mnist", "dense", "grasp", 94.74),
    ("mnist", "dense", "synflow", 11.35),
    ("mnist", "dense", "factorized", 96.49),
    ("cifar10", "butterfly", "random", 10.00),
    ("cifar10", "butterfly", "magnitude", 10.00),
    ("cifar10", "butterfly", "snip", 86.52),
    ("cifar10", "butterfly", "grasp", 14.04),
    ("cifar10", "butterfly", "synflow", 87.47),
    ("cifar10", "butterfly", "factorized", 88.12),
    ("mnist", "butterfly", "random", 94.84),
    ("mnist", "butterfly", "magnitude", 97.25),
    ("mnist", "butterfly", "snip", 96.00),
    ("mnist", "butterfly", "grasp", 94.63),
    ("mnist", "butterfly", "synflow", 11.35),
    ("mnist", "butterfly", "factorized", 97.44),
];

/// VGG16 / CIFAR-10 inference seconds: (head, k, method) → value.
pub const TABLE2: &[(&str, f64, &str, f64)] = &[
    ("butterfly", 0.05, "random", 1.67),
    ("butterfly", 0.05, "magnitude", 1.72),
    ("butterfly", 0.05, "snip", 1.71),
    ("butterfly", 0.05, "grasp", 1.701),
    ("butterfly", 0.05, "synflow", 1.782),
    ("butterfly", 0.05, "factorized", 77.11),
    ("butterfly", 0.1, "random", 1.66),
    ("butterfly", 0.1, "magnitude", 1.74),
    ("butterfly", 0.1, "snip", 1.73),
    ("butterfly", 0.1, "grasp", 1.703),
    ("butterfly", 0.1, "synflow", 1.957),
    ("butterfly", 0.2, "random", 1.68),
    ("butterfly", 0.2, "magnitude", 1.68),
    ("butterfly", 0.2, "snip", 1.70),
    ("butterfly", 0.2, "grasp", 1.68),
    ("butterfly", 0.2, "synflow", 1.6659),
    ("butterfly", 0.5, "random", 1.667),
    ("butterfly", 0.5, "magnitude", 1.67),
    ("butterfly", 0.5, "snip", 1.69),
    ("butterfly", 0.5, "grasp", 1.70),
    ("butterfly", 0.5, "synflow", 1.71),
    ("butterfly", 1.0, "random", 1.628),
    ("butterfly", 1.0, "magnitude", 1.63),
    ("butterfly", 1.0, "snip", 1.66),
    ("butterfly", 1.0, "grasp", 1.71),
    ("butterfly", 1.0, "synflow", 1.71),
    ("butterfly", 2.0, "random", 1.642),
    ("butterfly", 2.0, "magnitude", 1.68),
    ("butterfly", 2.0, "snip", 1.66),
    ("butterfly", 2.0, "grasp", 1.60),
    ("butterfly", 2.0, "synflow", 1.663),
    ("dense", 0.05, "random", 1.672),
    ("dense", 0.05, "magnitude", 1.721),
    ("dense", 0.05, "snip", 1.62),
    ("dense", 0.05, "grasp", 1.71),
    ("dense", 0.05, "synflow", 1.68),
    ("dense", 0.05, "factorized", 75.02),
    ("dense", 0.1, "random", 1.656),
    ("dense", 0.1, "magnitude", 1.729),
    ("dense", 0.1, "snip", 1.61),
    ("dense", 0.1, "grasp", 1.66),
    ("dense", 0.1, "synflow", 1.65),
    ("dense", 0.1, "factorized", 74.61),
    ("dense", 0.2, "random", 1.69),
    ("dense", 0.2, "magnitude", 1.677),
    ("dense", 0.2, "snip", 1.59),
    ("dense", 0.2, "grasp", 1.647),
    ("dense", 0.2, "synflow", 1.685),
    ("dense", 0.2, "factorized", 76.82),
    ("dense", 0.5, "random", 1.67),
    ("dense", 0.5, "magnitude", 1.69),
    ("dense", 0.5, "snip", 1.62),
    ("dense", 0.5, "grasp", 1.66),
    ("dense", 0.5, "synflow", 1.68),
    ("dense", 0.5, "factorized", 75.23),
    ("dense", 1.0, "random", 1.629),
    ("dense", 1.0, "magnitude", 1.689),
    ("dense", 1.0, "snip", 1.64),
    ("dense", 1.0, "grasp", 1.595),
    ("dense", 1.0, "synflow", 1.693),
    ("dense", 1.0, "factorized", 75.20),
    ("dense", 2.0, "random", 1.546),
    ("dense", 2.0, "magnitude", 1.692),
    ("dense", 2.0, "snip", 1.70),
    ("dense", 2.0, "grasp", 1.64),
    ("dense", 2.0, "synflow", 1.669),
    ("dense", 2.0, "factorized", 75.59),
];

pub fn table1(dataset: &str, head: &str, method: &str) -> Option<f64> {
    TABLE1
        .iter()
        .find(|r| r.0 == dataset && r.1 == head && r.2 == method)
        .map(|r| r.3)
}

pub fn table2(head: &str, k: f64, method: &str) -> Option<f64> {
    TABLE2
        .iter()
        .find(|r| r.0 == head && (r.1 - k).abs() < 1e-9 && r.2 == method)
        .map(|r| r.3)
}

/// Smallest and largest table-2 value for `method` over all heads and `k`.
pub fn table2_range(method: &str) -> Option<(f64, f64)> {
    TABLE2
        .iter()
        .filter(|r| r.2 == method)
        .map(|r| r.3)
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((f64::min(lo, v), f64::max(hi, v))),
        })
}
