use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::{poisson, substream, NoiseModel, ScanConfig, SequenceTiming};
use crate::cqed::{effective_response, intracavity_photons, reflectivity_at, CoupledSystem};
use crate::error::{Error, Result};
use crate::trace::{Axis, ScanTrace, TraceKind};
use crate::units::to_mhz;

/// Stream offset for per-sample draws on the drift-free path.
const SAMPLE_STREAMS: u64 = 1 << 32;

/// Sweeps Δc across the recorded window at fixed Δ and returns the mean
/// detected counts per sample over `n_average` scans.
///
/// Each scan shifts the bare resonance by a Gaussian drift step; the
/// reference channel re-centers the scan, leaving the step scaled by
/// [`NoiseModel::residual_factor`].
pub fn simulate_scan(
    sys: &CoupledSystem,
    delta: f64,
    scan: &ScanConfig,
    timing: &SequenceTiming,
    noise: &NoiseModel,
) -> Result<ScanTrace> {
    sys.validate()?;
    scan.validate()?;
    timing.validate()?;
    noise.validate()?;
    if noise.mean_photon_rate == 0.0 {
        return Err(Error::DegenerateTrace("zero photon rate gives an empty scan".into()));
    }
    let mu = noise.detected_rate() * scan.exposure(timing);
    let grid = scan.grid();
    let n = scan.n_average as f64;
    let mut total = vec![0.0; grid.len()];

    if noise.drift == 0.0 {
        for (i, (&dc, t)) in grid.iter().zip(total.iter_mut()).enumerate() {
            let mean = n * mu * reflectivity_at(sys, delta, dc);
            *t = if noise.shot_noise {
                poisson(&mut substream(noise.rng_seed, SAMPLE_STREAMS + i as u64), mean)
            } else {
                mean
            };
        }
    } else {
        let step = Normal::new(0.0, noise.drift).expect("finite drift");
        let residual = noise.residual_factor(delta);
        for k in 0..scan.n_average {
            let mut rng = substream(noise.rng_seed, k as u64);
            let shift = residual * step.sample(&mut rng);
            for (&dc, t) in grid.iter().zip(total.iter_mut()) {
                let mean = mu * reflectivity_at(sys, delta, dc + shift);
                *t += if noise.shot_noise { poisson(&mut rng, mean) } else { mean };
            }
        }
    }

    let y = total.into_iter().map(|t| t / n).collect();
    let mut trace = ScanTrace::new(grid, y, Axis::Detuning, TraceKind::Counts)?.with_provenance(
        noise.rng_seed,
        format!("simulated cavity scan at detuning {:.4} MHz", to_mhz(delta)),
    );
    trace.exposures = scan.n_average;
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Saturation {
    /// Largest mean intracavity photon number over the probed detunings.
    pub max_photons: f64,
    pub saturated: bool,
}

/// Mean intracavity photon number on the given (Δ, Δc) points, warning
/// through the log when it reaches one photon.
pub fn saturation_check(sys: &CoupledSystem, points: &[(f64, f64)], input_flux: f64) -> Saturation {
    let max_photons = points
        .iter()
        .map(|&(d, dc)| intracavity_photons(&effective_response(sys, d, dc), &sys.rates, input_flux))
        .fold(0.0, f64::max);
    let saturated = max_photons >= 1.0;
    if saturated {
        log::warn!("mean intracavity photon number {max_photons:.3} is not below one; the weak-probe model no longer holds");
    }
    Saturation { max_photons, saturated }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqed::CavityParams;
    use crate::units::mhz;

    fn sys(g_n: f64) -> CoupledSystem {
        CoupledSystem::from_collective(g_n, mhz(11.9), CavityParams::reference().rates().unwrap()).unwrap()
    }

    #[test]
    fn noiseless_scan_is_the_reflectivity_curve() {
        let s = sys(mhz(12.2));
        let scan = ScanConfig::default();
        let timing = SequenceTiming::default();
        let noise = NoiseModel::noiseless();
        let tr = simulate_scan(&s, mhz(5.0), &scan, &timing, &noise).unwrap();
        let mu = noise.detected_rate() * scan.exposure(&timing);
        for (x, y) in tr.x.iter().zip(&tr.y) {
            assert!((y / mu - reflectivity_at(&s, mhz(5.0), *x)).abs() < 1e-12);
        }
    }

    #[test]
    fn large_rate_mean_matches_model() {
        let s = sys(mhz(12.2));
        let scan = ScanConfig { n_average: 10, ..ScanConfig::default() };
        let timing = SequenceTiming::default();
        let noise = NoiseModel { mean_photon_rate: 1e12, drift: 0.0, ..NoiseModel::default() };
        let tr = simulate_scan(&s, 0.0, &scan, &timing, &noise).unwrap();
        let mu = noise.detected_rate() * scan.exposure(&timing);
        for (x, y) in tr.x.iter().zip(&tr.y) {
            let r = reflectivity_at(&s, 0.0, *x);
            assert!((y / mu / r - 1.0).abs() < 5e-3);
        }
    }

    #[test]
    fn repeated_seed_is_bit_identical() {
        let s = sys(mhz(12.2));
        let noise = NoiseModel::default().with_seed(42);
        let a = simulate_scan(&s, mhz(3.0), &ScanConfig::default(), &SequenceTiming::default(), &noise).unwrap();
        let b = simulate_scan(&s, mhz(3.0), &ScanConfig::default(), &SequenceTiming::default(), &noise).unwrap();
        assert_eq!(a.y, b.y);
        let c =
            simulate_scan(&s, mhz(3.0), &ScanConfig::default(), &SequenceTiming::default(), &noise.with_seed(43)).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn zero_rate_is_degenerate() {
        let noise = NoiseModel { mean_photon_rate: 0.0, ..NoiseModel::default() };
        let r = simulate_scan(&sys(0.0), 0.0, &ScanConfig::default(), &SequenceTiming::default(), &noise);
        assert!(matches!(r, Err(Error::DegenerateTrace(_))));
    }

    #[test]
    fn weak_probe_is_unsaturated() {
        let s = sys(0.0);
        let sat = saturation_check(&s, &[(0.0, 0.0)], 1e6);
        assert!(!sat.saturated && sat.max_photons > 0.0);
        assert!(saturation_check(&s, &[(0.0, 0.0)], 1e12).saturated);
    }
}
