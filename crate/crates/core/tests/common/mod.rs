#![allow(dead_code)]

use std::path::PathBuf;

use efcml::ingest::{load_arff, LabelSpec};
use efcml::{Dataset, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Directory holding the MULAN files: `EFCML_DATA_DIR`, else `<workspace>/data`.
pub fn data_dir() -> PathBuf {
    std::env::var_os("EFCML_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// Loads `<name>.arff` with `<name>.xml`, or explains what is missing.
pub fn mulan(name: &str) -> Result<Dataset, String> {
    let dir = data_dir();
    let arff = dir.join(format!("{name}.arff"));
    let xml = dir.join(format!("{name}.xml"));
    if !arff.exists() || !xml.exists() {
        return Err(format!("dataset not found: {} / {}", arff.display(), xml.display()));
    }
    load_arff(&arff, &LabelSpec::Xml(xml)).map_err(|e| e.to_string())
}

/// Multi-label stream from a low-dimensional latent factor with label
/// thresholds on correlated projections. After `drift_at` samples the latent
/// mean shifts, so models that keep learning have an advantage.
pub fn latent_stream(n: usize, p: usize, k: usize, drift_at: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let q = 3;
    let loading: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..q).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    let shared: Vec<f64> = (0..q).map(|_| normal.sample(&mut rng)).collect();
    let heads: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..q)
                .map(|j| shared[j] + 0.6 * normal.sample(&mut rng))
                .collect()
        })
        .collect();
    let samples = (0..n)
        .map(|id| {
            let shift = if id >= drift_at { 1.5 } else { 0.0 };
            let z: Vec<f64> = (0..q).map(|j| normal.sample(&mut rng) + if j == 0 { shift } else { 0.0 }).collect();
            let x = loading
                .iter()
                .map(|row| row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + 0.3 * normal.sample(&mut rng))
                .collect();
            let y = heads
                .iter()
                .map(|h| {
                    let s: f64 = h.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() - shift * h[0];
                    u8::from(s + 0.3 * normal.sample(&mut rng) > 0.0)
                })
                .collect();
            Sample { id, x, y }
        })
        .collect();
    Dataset::new(
        samples,
        p,
        k,
        (0..p).map(|j| format!("f{j}")).collect(),
        (0..k).map(|c| format!("l{c}")).collect(),
    )
    .unwrap()
}

/// Two inputs, two labels with `y₂ = y₁` and a fraction of flipped `y₂`.
pub fn duplicated_label_stream(n: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|id| {
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let y1 = u8::from(x[0] + 0.5 * x[1] > 0.0);
            let y2 = if rng.random_bool(noise) { 1 - y1 } else { y1 };
            Sample { id, x, y: vec![y1, y2] }
        })
        .collect();
    Dataset::new(samples, 2, 2, vec!["a".into(), "b".into()], vec!["y1".into(), "y2".into()]).unwrap()
}
