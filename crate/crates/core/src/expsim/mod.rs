//! Synthetic experiments: probe sequences, cavity scans with shot noise and
//! drift, locked-cavity spectra with postselection, Larmor traces, and
//! end-to-end figure pipelines that feed the estimators.
//!
//! Randomness comes from ChaCha substreams keyed by `(seed, stream)`, so
//! every scan, grid point and sequence block is reproducible on its own.

mod larmor_sim;
mod locked;
mod pipeline;
mod scan;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{require_nonnegative, require_positive, Error, Result};
use crate::units::mhz;

pub use larmor_sim::{simulate_larmor, LarmorProbe};
pub use locked::{simulate_locked, LockConfig};
pub use pipeline::{pipeline, Comparison, DataTable, PipelineName, PipelineOutput, PipelineParams};
pub use scan::{saturation_check, simulate_scan, Saturation};

/// Timing of one cooling, pumping and probing sequence (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceTiming {
    pub cool: f64,
    pub pump: f64,
    pub probe: f64,
    pub apd_delay: f64,
    pub total: f64,
}

impl Default for SequenceTiming {
    fn default() -> Self {
        SequenceTiming { cool: 5e-6, pump: 12e-6, probe: 1.4e-6, apd_delay: 0.1e-6, total: 20e-6 }
    }
}

impl SequenceTiming {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("cool", self.cool), ("pump", self.pump), ("probe", self.probe), ("total", self.total)] {
            require_positive(name, v)?;
        }
        require_nonnegative("apd delay", self.apd_delay)?;
        if self.cool + self.pump + self.probe > self.total * (1.0 + 1e-12) {
            return Err(Error::domain("cool + pump + probe exceeds the sequence length"));
        }
        if self.apd_delay >= self.probe {
            return Err(Error::domain("APD delay must be shorter than the probe pulse"));
        }
        Ok(())
    }

    /// Photon-counting window per sequence, probe − APD delay.
    pub fn probe_window(&self) -> f64 {
        self.probe - self.apd_delay
    }

    /// Fraction of wall-clock time spent counting.
    pub fn duty_cycle(&self) -> f64 {
        self.probe_window() / self.total
    }
}

/// Cavity length scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Full sweep range (rad/s).
    pub span: f64,
    /// Sweep repetition rate (Hz).
    pub rate: f64,
    pub n_average: u32,
    pub samples_per_scan: usize,
    /// Half-width of the recorded window around the bare resonance (rad/s).
    pub window: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { span: mhz(1300.0), rate: 30.0, n_average: 100, samples_per_scan: 321, window: mhz(80.0) }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("scan span", self.span)?;
        require_positive("scan rate", self.rate)?;
        require_positive("scan window", self.window)?;
        if self.n_average == 0 || self.samples_per_scan < 2 {
            return Err(Error::domain("scan needs n_average ≥ 1 and at least 2 samples"));
        }
        if 2.0 * self.window > self.span {
            return Err(Error::domain("recorded window exceeds the scan span"));
        }
        Ok(())
    }

    /// Cavity detunings of the recorded samples (rad/s).
    pub fn grid(&self) -> Vec<f64> {
        let n = self.samples_per_scan;
        (0..n).map(|i| -self.window + 2.0 * self.window * i as f64 / (n - 1) as f64).collect()
    }

    /// Counting time per sample and scan (s).
    pub fn exposure(&self, timing: &SequenceTiming) -> f64 {
        let bin = 2.0 * self.window / (self.samples_per_scan - 1) as f64;
        bin / (self.span * self.rate) * timing.duty_cycle()
    }
}

/// Detection, drift and reference-channel model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Photon flux at the detector for unit reflectivity (s⁻¹). Not a
    /// measured value; it sets the shot-noise level.
    pub mean_photon_rate: f64,
    pub detection_efficiency: f64,
    /// Standard deviation of the per-scan random-walk step of the bare
    /// cavity resonance (rad/s).
    pub drift: f64,
    /// Residual fraction of each drift step left after reference compensation at Δ = 0.
    pub compensation_floor: f64,
    /// Detuning over which the residual grows by one drift step (rad/s).
    pub compensation_scale: f64,
    /// Minimum reference counts, relative to their mean, for a sequence to be kept.
    pub reference_threshold: f64,
    /// Draw Poisson counts; when false the expected counts are returned.
    pub shot_noise: bool,
    pub rng_seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            mean_photon_rate: 5e6,
            detection_efficiency: 0.16,
            drift: mhz(0.5),
            compensation_floor: 0.05,
            compensation_scale: mhz(100.0),
            reference_threshold: 0.8,
            shot_noise: true,
            rng_seed: 0,
        }
    }
}

impl NoiseModel {
    /// Expected counts, no drift: the law-of-large-numbers limit.
    pub fn noiseless() -> Self {
        NoiseModel { drift: 0.0, shot_noise: false, ..NoiseModel::default() }
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        NoiseModel { rng_seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        require_nonnegative("mean photon rate", self.mean_photon_rate)?;
        if !(self.detection_efficiency > 0.0 && self.detection_efficiency <= 1.0) {
            return Err(Error::domain(format!(
                "detection efficiency must lie in (0, 1], got {}",
                self.detection_efficiency
            )));
        }
        require_nonnegative("drift", self.drift)?;
        require_nonnegative("compensation floor", self.compensation_floor)?;
        require_positive("compensation scale", self.compensation_scale)?;
        require_nonnegative("reference threshold", self.reference_threshold)
    }

    /// Expected detected counts per second at unit reflectivity.
    pub fn detected_rate(&self) -> f64 {
        self.mean_photon_rate * self.detection_efficiency
    }

    /// Residual compensation error per unit drift step at detuning Δ.
    pub fn residual_factor(&self, delta: f64) -> f64 {
        self.compensation_floor + delta.abs() / self.compensation_scale
    }
}

/// Independent generator for `stream` under `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Poisson draw that accepts a zero mean.
pub fn poisson<R: rand::Rng>(rng: &mut R, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn timing_defaults() {
        let t = SequenceTiming::default();
        t.validate().unwrap();
        assert!((t.probe_window() - 1.3e-6).abs() < 1e-18);
        let bad = SequenceTiming { apd_delay: 2e-6, ..t };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn substreams_are_independent_and_reproducible() {
        let a: u64 = substream(7, 1).random();
        let b: u64 = substream(7, 1).random();
        let c: u64 = substream(7, 2).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn poisson_variance_matches_mean() {
        let mut rng = substream(11, 0);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| poisson(&mut rng, 4.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / mean - 1.0).abs() < 0.05, "mean {mean} var {var}");
        assert_eq!(poisson(&mut rng, 0.0), 0.0);
    }
}
