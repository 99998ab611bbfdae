use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{poisson, substream, NoiseModel, SequenceTiming};
use crate::cqed::{reflectivity_at, CoupledSystem};
use crate::error::{require_nonnegative, require_positive, Error, Result};
use crate::trace::{Axis, ScanTrace, TraceKind};
use crate::units::mhz;

/// Cavity locked on the probe with Δ = Δc at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockConfig {
    /// Probe sequences per grid point.
    pub n_sequences: u32,
    /// Standard deviation of the residual cavity detuning per sequence (rad/s).
    pub lock_jitter: f64,
    /// Mean reference-channel counts per sequence on resonance.
    pub reference_counts: f64,
    pub timing: SequenceTiming,
}

impl Default for LockConfig {
    fn default() -> Self {
        LockConfig { n_sequences: 20_000, lock_jitter: mhz(0.1), reference_counts: 50.0, timing: SequenceTiming::default() }
    }
}

impl LockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sequences == 0 {
            return Err(Error::domain("locked spectrum needs at least one sequence per point"));
        }
        require_nonnegative("lock jitter", self.lock_jitter)?;
        require_positive("reference counts", self.reference_counts)?;
        self.timing.validate()
    }
}

/// Probability that Poisson(mean) reaches `k`.
fn poisson_tail(mean: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut term = (-mean).exp();
    let mut cdf = term;
    for j in 1..k {
        term *= mean / j as f64;
        cdf += term;
    }
    (1.0 - cdf).max(0.0)
}

/// Locked-cavity reflectivity spectrum with postselection on the reference
/// channel. `y` is detected counts over kept sequences divided by the
/// expectation for unit reflectivity; `sigma` is the Poisson error.
///
/// Grid points where every sequence is rejected are dropped.
pub fn simulate_locked(sys: &CoupledSystem, grid: &[f64], lock: &LockConfig, noise: &NoiseModel) -> Result<ScanTrace> {
    sys.validate()?;
    lock.validate()?;
    noise.validate()?;
    if noise.mean_photon_rate == 0.0 {
        return Err(Error::DegenerateTrace("zero photon rate gives an empty spectrum".into()));
    }
    let mu0 = noise.detected_rate() * lock.timing.probe_window();
    let ref_mean = lock.reference_counts;
    let min_ref = (noise.reference_threshold * ref_mean).ceil() as u64;
    let n_seq = lock.n_sequences as u64;
    let kappa = sys.rates.kappa;

    let (mut xs, mut ys, mut sigmas) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &d) in grid.iter().enumerate() {
        let mut rng = substream(noise.rng_seed, i as u64);
        let (kept, counts) = if !noise.shot_noise {
            let kept = n_seq as f64 * poisson_tail(ref_mean, min_ref);
            (kept, kept * mu0 * reflectivity_at(sys, d, d))
        } else if lock.lock_jitter == 0.0 {
            let p = poisson_tail(ref_mean, min_ref);
            let kept = Binomial::new(n_seq, p).expect("probability in [0, 1]").sample(&mut rng) as f64;
            (kept, poisson(&mut rng, kept * mu0 * reflectivity_at(sys, d, d)))
        } else {
            let jitter = Normal::new(0.0, lock.lock_jitter).expect("finite jitter");
            let (mut kept, mut counts) = (0.0, 0.0);
            for _ in 0..n_seq {
                let eps: f64 = jitter.sample(&mut rng);
                let reference = poisson(&mut rng, ref_mean / (1.0 + (eps / kappa).powi(2)));
                let probe = poisson(&mut rng, mu0 * reflectivity_at(sys, d, d + eps));
                if reference >= min_ref as f64 {
                    kept += 1.0;
                    counts += probe;
                }
            }
            (kept, counts)
        };
        if kept == 0.0 {
            continue;
        }
        let scale = kept * mu0;
        xs.push(d);
        ys.push(counts / scale);
        if noise.shot_noise {
            sigmas.push(counts.max(1.0).sqrt() / scale);
        }
    }
    if xs.is_empty() {
        return Err(Error::EmptyTrace("every sequence was rejected by postselection".into()));
    }
    let mut trace = ScanTrace::new(xs, ys, Axis::Detuning, TraceKind::Normalized)?
        .with_provenance(noise.rng_seed, format!("simulated locked spectrum, {} sequences per point", lock.n_sequences));
    if noise.shot_noise {
        trace = trace.with_sigma(sigmas)?;
    }
    trace.exposures = lock.n_sequences;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqed::CavityParams;

    fn sys(g_n: f64) -> CoupledSystem {
        CoupledSystem::from_collective(g_n, mhz(11.9), CavityParams::reference().rates().unwrap()).unwrap()
    }

    fn grid() -> Vec<f64> {
        (-30..=30).map(|i| mhz(i as f64)).collect()
    }

    #[test]
    fn tail_probabilities() {
        assert_eq!(poisson_tail(3.0, 0), 1.0);
        assert!((poisson_tail(3.0, 1) - (1.0 - (-3.0f64).exp())).abs() < 1e-15);
        assert!(poisson_tail(50.0, 40) > 0.9 && poisson_tail(50.0, 40) < 1.0);
    }

    #[test]
    fn zero_threshold_keeps_everything() {
        let noise = NoiseModel { reference_threshold: 0.0, drift: 0.0, ..NoiseModel::default() };
        let lock = LockConfig { n_sequences: 500, ..LockConfig::default() };
        let tr = simulate_locked(&sys(0.0), &grid(), &lock, &noise).unwrap();
        assert_eq!(tr.len(), grid().len());
        let exact = LockConfig { lock_jitter: 0.0, ..lock };
        let tr = simulate_locked(&sys(0.0), &grid(), &exact, &noise).unwrap();
        assert_eq!(tr.len(), grid().len());
    }

    #[test]
    fn impossible_threshold_empties_the_trace() {
        let noise = NoiseModel { reference_threshold: 100.0, ..NoiseModel::default() };
        let lock = LockConfig { n_sequences: 50, ..LockConfig::default() };
        assert!(matches!(simulate_locked(&sys(0.0), &grid(), &lock, &noise), Err(Error::EmptyTrace(_))));
    }

    #[test]
    fn noiseless_is_the_diagonal_reflectivity() {
        let s = sys(mhz(12.2));
        let tr = simulate_locked(&s, &grid(), &LockConfig::default(), &NoiseModel::noiseless()).unwrap();
        for (x, y) in tr.x.iter().zip(&tr.y) {
            assert!((y - reflectivity_at(&s, *x, *x)).abs() < 1e-12);
        }
        assert!(tr.sigma.is_none());
    }

    #[test]
    fn postselection_without_jitter_is_unbiased() {
        let s = sys(mhz(12.2));
        let lock = LockConfig { lock_jitter: 0.0, n_sequences: 200_000, ..LockConfig::default() };
        let noise = NoiseModel { reference_threshold: 1.0, ..NoiseModel::default() };
        let tr = simulate_locked(&s, &grid(), &lock, &noise).unwrap();
        let sig = tr.sigma.clone().unwrap();
        let chi2: f64 = tr
            .x
            .iter()
            .zip(&tr.y)
            .zip(&sig)
            .map(|((x, y), e)| ((y - reflectivity_at(&s, *x, *x)) / e).powi(2))
            .sum();
        let n = tr.len() as f64;
        assert!(chi2 < n + 5.0 * (2.0 * n).sqrt(), "chi2 {chi2} for {n} points");
    }
}
