#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scalesteg::pixelgrid::load_image;
use scalesteg::{ChannelSpec, PixelGrid};
use serde::Deserialize;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

#[derive(Deserialize)]
struct GoldenMeta {
    #[serde(flatten)]
    spec: ChannelSpec,
    input: String,
    expected: String,
}

pub struct GoldenCase {
    pub name: String,
    pub spec: ChannelSpec,
    pub input: PixelGrid,
    pub expected: PixelGrid,
}

pub fn golden_cases() -> Vec<GoldenCase> {
    let dir = fixtures_dir();
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .expect("fixture dir")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let meta: GoldenMeta =
                serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
            GoldenCase {
                name: p.file_stem().unwrap().to_string_lossy().into_owned(),
                spec: meta.spec,
                input: load_image(dir.join(&meta.input)).unwrap(),
                expected: load_image(dir.join(&meta.expected)).unwrap(),
            }
        })
        .collect()
}

/// Uniform noise with values in [lo, hi].
pub fn random_cover(h: usize, w: usize, lo: u8, hi: u8, seed: u64) -> PixelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PixelGrid::from_fn(h, w, |_, _| rng.random_range(lo..=hi))
}

/// Smooth gradient plus noise; closer to natural image statistics than pure noise.
pub fn textured_cover(h: usize, w: usize, seed: u64) -> PixelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random_range(0.0..6.28);
    PixelGrid::from_fn(h, w, |r, c| {
        let base = 128.0 + 60.0 * ((r as f64 * 0.07 + phase).sin() * (c as f64 * 0.05).cos());
        let n: f64 = rng.random_range(-20.0..20.0);
        (base + n).round().clamp(20.0, 235.0) as u8
    })
}

/// Dense parity-check matrix: block `b` holds `(b+1)n/m - bn/m` columns,
/// the k-th of which is `columns[k mod len]` shifted down to row `b`.
pub fn dense_h(n: usize, m: usize, code: &scalesteg::codec::StcCode) -> Vec<Vec<u8>> {
    let mut h = vec![vec![0u8; n]; m];
    let mut j = 0;
    for b in 0..m {
        let width = (b + 1) * n / m - b * n / m;
        for k in 0..width {
            let col = code.columns[k % code.columns.len()];
            for i in 0..code.height {
                if b + i < m && (col >> i) & 1 == 1 {
                    h[b + i][j] = 1;
                }
            }
            j += 1;
        }
    }
    h
}

pub fn gf2_mul(h: &[Vec<u8>], x: &[u8]) -> Vec<u8> {
    h.iter().map(|row| row.iter().zip(x).fold(0, |a, (&r, &b)| a ^ (r & b))).collect()
}

/// Cheapest flip pattern reaching the message, over all 2^n candidates.
pub fn brute_force_coset(h: &[Vec<u8>], lsb: &[u8], costs: &[f64], msg: &[u8]) -> Option<f64> {
    let n = lsb.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let cost: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| costs[i]).sum();
        if cost.is_infinite() || best.is_some_and(|b| cost >= b) {
            continue;
        }
        let y: Vec<u8> = (0..n).map(|i| lsb[i] ^ (mask >> i & 1) as u8).collect();
        if gf2_mul(h, &y) == msg {
            best = Some(cost);
        }
    }
    best
}
