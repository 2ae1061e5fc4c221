//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spaceprofiler::config::PipelineConfig;
use spaceprofiler::ingest::DateSpan;
use spaceprofiler::synth::{default_config, synth_generate, SynthConfig, SynthOutput, CALENDAR_FILE, READINGS_FILE, STATIC_FILE};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
/// Deliberately independent of the library's solver.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Random symmetric non-negative affinity with `components` planted
/// blocks; entries across blocks are exactly zero, the diagonal is zero.
pub fn planted_affinity(rng: &mut ChaCha8Rng, n: usize, components: usize) -> (DMatrix<f64>, Vec<usize>) {
    let block: Vec<usize> = (0..n).map(|i| i * components / n).collect();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if block[i] == block[j] {
                let v = rng.random_range(0.05..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    (m, block)
}

/// The 47-sensor fixture shortened to May through July so file-based
/// tests stay quick. The window still holds a school-holiday block.
pub fn short_fixture(seed: u64) -> SynthConfig {
    let mut cfg = default_config(seed);
    let span = DateSpan::new(
        NaiveDate::from_ymd_opt(2017, 5, 1).unwrap(),
        NaiveDate::from_ymd_opt(2017, 7, 31).unwrap(),
    )
    .unwrap();
    cfg.span = span;
    cfg.calendar.span = Some(span);
    cfg
}

/// Writes a synthetic dataset and a matching config into `dir`.
pub fn write_fixture(dir: &Path, cfg: &SynthConfig) -> (SynthOutput, PipelineConfig) {
    let data = synth_generate(cfg).unwrap();
    data.write_to(dir, &cfg.calendar).unwrap();
    let mut run = PipelineConfig::new(dir.join(READINGS_FILE), dir.join(STATIC_FILE));
    run.input.calendar = Some(dir.join(CALENDAR_FILE));
    run.kmeans.seed = cfg.seed;
    (data, run)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
