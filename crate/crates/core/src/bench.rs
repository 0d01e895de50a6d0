//! Inference micro-benchmark of the condition encoder.

use std::fmt::Write as _;
use std::time::Instant;

use crate::moe::MoeEncoder;
use crate::numerics::DenseMatrix;
use crate::{Error, Result};

pub const MIN_REPEATS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchReport {
    pub repeats: usize,
    pub retained: usize,
    pub batch: usize,
    pub mean_s: f64,
    pub std_s: f64,
    /// Rows per second at the mean batch time.
    pub throughput: f64,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let rows: [(&str, String); 6] = [
            ("repeats", self.repeats.to_string()),
            ("retained", self.retained.to_string()),
            ("batch", self.batch.to_string()),
            ("mean_s", format!("{:e}", self.mean_s)),
            ("std_s", format!("{:e}", self.std_s)),
            ("throughput_per_s", format!("{:e}", self.throughput)),
        ];
        for (k, v) in rows {
            writeln!(out, "{k},{v}").expect("string write");
        }
        out
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Drops samples further than three standard deviations from the mean.
pub fn filter_three_sigma(samples: &[f64]) -> Vec<f64> {
    if samples.is_empty() {
        return Vec::new();
    }
    let (mean, std) = mean_std(samples);
    samples.iter().copied().filter(|x| (x - mean).abs() <= 3.0 * std).collect()
}

/// Summarises raw per-batch timings.
pub fn summarize(samples: &[f64], batch: usize) -> Result<BenchReport> {
    if samples.len() < MIN_REPEATS {
        return Err(Error::Config(format!("benchmark needs at least {MIN_REPEATS} repeats, got {}", samples.len())));
    }
    let kept = filter_three_sigma(samples);
    let (mean_s, std_s) = mean_std(&kept);
    Ok(BenchReport {
        repeats: samples.len(),
        retained: kept.len(),
        batch,
        mean_s,
        std_s,
        throughput: batch as f64 / mean_s,
    })
}

/// Times `repeats` encodings of the same batch.
pub fn bench_encoder(moe: &MoeEncoder, batch: &DenseMatrix, repeats: usize) -> Result<BenchReport> {
    if repeats < MIN_REPEATS {
        return Err(Error::Config(format!("benchmark needs at least {MIN_REPEATS} repeats, got {repeats}")));
    }
    moe.encode(batch)?;
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let out = moe.encode(batch)?;
        std::hint::black_box(&out);
        samples.push(start.elapsed().as_secs_f64().max(1e-9));
    }
    summarize(&samples, batch.rows())
}
