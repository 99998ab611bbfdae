use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    saturation_check, simulate_larmor, simulate_locked, simulate_scan, LarmorProbe, LockConfig, NoiseModel,
    ScanConfig, SequenceTiming,
};
use crate::cqed::{cooperativity, CavityParams, CavityRates, CoupledSystem};
use crate::error::{Error, Result};
use crate::estimate::{
    fit_absorption, fit_calibration, fit_dispersion, fit_larmor, fit_larmor_envelope, fit_lorentzian_dip,
    fit_nls, fit_proportional, fit_rabi, fit_sqrt_n, DipFit, Estimate, FitProblem,
};
use crate::larmor::{
    fit_harmonics, gyromagnetic_ratio, larmor_frequency, larmor_period, mean_populations, DecayKind, DecayModel,
    FieldConfig, SpinMixture, TwoTransitionConfig, D32_LANDE_G,
};
use crate::trace::{write_table, ScanTrace};
use crate::units::{khz, mhz, to_khz, to_mhz};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineName {
    Fig4,
    Fig5a,
    Fig5b,
    Fig6,
    Fig7,
    Fig8,
    Fig9a,
    Fig9b,
    Fig10,
}

impl PipelineName {
    pub const ALL: [PipelineName; 9] = [
        PipelineName::Fig4,
        PipelineName::Fig5a,
        PipelineName::Fig5b,
        PipelineName::Fig6,
        PipelineName::Fig7,
        PipelineName::Fig8,
        PipelineName::Fig9a,
        PipelineName::Fig9b,
        PipelineName::Fig10,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineName::Fig4 => "fig4",
            PipelineName::Fig5a => "fig5a",
            PipelineName::Fig5b => "fig5b",
            PipelineName::Fig6 => "fig6",
            PipelineName::Fig7 => "fig7",
            PipelineName::Fig8 => "fig8",
            PipelineName::Fig9a => "fig9a",
            PipelineName::Fig9b => "fig9b",
            PipelineName::Fig10 => "fig10",
        }
    }
}

impl fmt::Display for PipelineName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PipelineName::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = PipelineName::ALL.iter().map(|p| p.as_str()).collect();
                Error::Unsupported(format!("unknown pipeline {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Injected physics and measurement settings shared by the pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub seed: u64,
    /// Use expected counts and no drift, jitter or readout noise.
    pub noiseless: bool,
    pub cavity: CavityParams,
    pub timing: SequenceTiming,
    pub scan: ScanConfig,
    pub lock: LockConfig,
    pub noise: NoiseModel,
    /// Single-ion coupling g (rad/s).
    pub g: f64,
    /// Collective coupling of the reference crystal (rad/s).
    pub g_n: f64,
    /// Effective dipole decay rate γ′ (rad/s).
    pub gamma_eff: f64,
    /// Atomic detunings of the scanned-cavity series (rad/s).
    pub scan_detunings: Vec<f64>,
    /// Probe detunings of the locked spectra (rad/s).
    pub locked_grid: Vec<f64>,
    /// Ion numbers of the cooperativity series.
    pub coop_numbers: Vec<f64>,
    /// Ion numbers of the vacuum Rabi series.
    pub rabi_numbers: Vec<f64>,
    /// Sequences per point for the Rabi series.
    pub rabi_sequences: u32,
    pub larmor_n_total: f64,
    pub larmor_omega_z: f64,
    /// dω_x/dI (rad/s/A).
    pub larmor_slope: f64,
    /// Coil current for the single precession trace (A).
    pub larmor_current: f64,
    /// Coil currents of the calibration series (A).
    pub larmor_currents: Vec<f64>,
    pub larmor_decay: DecayModel,
    pub larmor_noise: f64,
    pub larmor_step: f64,
    pub larmor_window: f64,
    /// Divide C(τ) by its mean over the first precession period before fitting.
    pub larmor_normalize: bool,
    /// Profile-likelihood bounds on the decay timescale.
    pub larmor_profile: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            seed: 0,
            noiseless: false,
            cavity: CavityParams::reference(),
            timing: SequenceTiming::default(),
            scan: ScanConfig::default(),
            lock: LockConfig::default(),
            noise: NoiseModel::default(),
            g: mhz(0.53),
            g_n: mhz(12.2),
            gamma_eff: mhz(11.9),
            scan_detunings: (0..15).map(|i| mhz(-40.0 + 80.0 * i as f64 / 14.0)).collect(),
            locked_grid: (-30..=30).map(|i| mhz(i as f64)).collect(),
            coop_numbers: vec![100.0, 200.0, 350.0, 520.0, 750.0, 1000.0, 1250.0, 1523.0],
            rabi_numbers: vec![150.0, 300.0, 520.0, 900.0, 1523.0],
            rabi_sequences: 5000,
            larmor_n_total: 520.0,
            larmor_omega_z: khz(150.0),
            larmor_slope: khz(5.5) * 1e3,
            larmor_current: 16e-3,
            larmor_currents: vec![10e-3, 16e-3, 26e-3, 36e-3],
            larmor_decay: DecayModel::exponential(1.7e-3),
            larmor_noise: 0.02,
            larmor_step: 1e-6,
            larmor_window: 120e-6,
            larmor_normalize: false,
            larmor_profile: true,
        }
    }
}

impl PipelineParams {
    pub fn noise_model(&self) -> NoiseModel {
        let n = if self.noiseless {
            NoiseModel { drift: 0.0, shot_noise: false, ..self.noise }
        } else {
            self.noise
        };
        n.with_seed(self.seed)
    }

    fn rates(&self) -> Result<CavityRates> {
        self.cavity.rates()
    }

    pub fn larmor_taus(&self) -> Vec<f64> {
        let n = (self.larmor_window / self.larmor_step).round() as usize;
        (0..=n).map(|i| i as f64 * self.larmor_step).collect()
    }

    pub fn larmor_probe(&self, seed: u64) -> Result<LarmorProbe> {
        Ok(LarmorProbe {
            couplings: TwoTransitionConfig {
                g_half: self.g / 3f64.sqrt(),
                g_threehalf: self.g,
                delta_half: 0.0,
                delta_threehalf: 0.0,
                n_half: 0.0,
                n_threehalf: 0.0,
            },
            n_total: self.larmor_n_total,
            gamma: self.gamma_eff,
            kappa: self.rates()?.kappa,
            decay: self.larmor_decay,
            noise_sigma: if self.noiseless { 0.0 } else { self.larmor_noise },
            seed,
        })
    }
}

/// Injected versus recovered value of one parameter, in display units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub quantity: String,
    pub unit: String,
    pub injected: f64,
    pub recovered: f64,
    pub std_error: f64,
    /// Published value and uncertainty, where one exists.
    pub target: Option<(f64, f64)>,
}

impl Comparison {
    fn new(quantity: &str, unit: &str, injected: f64, est: Estimate, scale: f64) -> Self {
        Comparison {
            quantity: quantity.into(),
            unit: unit.into(),
            injected: injected * scale,
            recovered: est.value * scale,
            std_error: est.std_error * scale.abs(),
            target: None,
        }
    }

    fn target(mut self, value: f64, err: f64) -> Self {
        self.target = Some((value, err));
        self
    }

    /// |recovered − injected| / std_error.
    pub fn pull(&self) -> f64 {
        let d = (self.recovered - self.injected).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }

    pub fn relative_error(&self) -> f64 {
        if self.injected == 0.0 {
            self.recovered.abs()
        } else {
            (self.recovered / self.injected - 1.0).abs()
        }
    }
}

/// A named numeric table for CSV output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataTable {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DataTable {
    fn new(name: &str, headers: &[&str]) -> Self {
        DataTable { name: name.into(), headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let h: Vec<&str> = self.headers.iter().map(String::as_str).collect();
        write_table(out, &h, &self.rows)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineOutput {
    pub name: PipelineName,
    pub seed: u64,
    pub tables: Vec<DataTable>,
    pub comparisons: Vec<Comparison>,
    /// Fit summaries keyed by fit name.
    pub fits: serde_json::Map<String, serde_json::Value>,
    pub warnings: Vec<String>,
}

impl PipelineOutput {
    fn new(name: PipelineName, seed: u64) -> Self {
        PipelineOutput {
            name,
            seed,
            tables: Vec::new(),
            comparisons: Vec::new(),
            fits: serde_json::Map::new(),
            warnings: Vec::new(),
        }
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        self.fits.insert(key.into(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    pub fn comparison(&self, quantity: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.quantity == quantity)
    }
}

/// Runs one synthetic-data reproduction: simulate, fit, compare.
pub fn pipeline(name: PipelineName, params: &PipelineParams) -> Result<PipelineOutput> {
    match name {
        PipelineName::Fig4 => fig4(params),
        PipelineName::Fig5a | PipelineName::Fig5b => fig5(name, params),
        PipelineName::Fig6 => fig6(params),
        PipelineName::Fig7 | PipelineName::Fig8 => fig7(name, params),
        PipelineName::Fig9a => fig9a(params),
        PipelineName::Fig9b => fig9b(params),
        PipelineName::Fig10 => fig10(params),
    }
}

const MHZ: &str = "2pi MHz";
const KHZ: &str = "2pi kHz";

/// Standard errors usable as fit weights, or `None`.
fn usable_sigmas(noiseless: bool, s: Vec<f64>) -> Option<Vec<f64>> {
    if noiseless || s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        None
    } else {
        Some(s)
    }
}

fn check_saturation(out: &mut PipelineOutput, sys: &CoupledSystem, points: &[(f64, f64)], noise: &NoiseModel) {
    let sat = saturation_check(sys, points, noise.mean_photon_rate);
    out.record("max_intracavity_photons", &sat.max_photons);
    if sat.saturated {
        out.warnings.push(format!("mean intracavity photon number reaches {:.3}", sat.max_photons));
    }
}

fn locked_table(name: &str, trace: &ScanTrace, model: impl Fn(f64) -> f64) -> DataTable {
    let mut t = DataTable::new(name, &["detuning_mhz", "reflectivity", "sigma", "model"]);
    for (i, (&x, &y)) in trace.x.iter().zip(&trace.y).enumerate() {
        let s = trace.sigma.as_ref().map_or(0.0, |s| s[i]);
        t.rows.push(vec![to_mhz(x), y, s, model(x)]);
    }
    t
}

fn fig4(p: &PipelineParams) -> Result<PipelineOutput> {
    let mut out = PipelineOutput::new(PipelineName::Fig4, p.seed);
    let rates = p.rates()?;
    let noise = p.noise_model();
    let coupled = CoupledSystem::from_collective(p.g_n, p.gamma_eff, rates)?;
    let empty = coupled.with_n(0.0);
    let grid = &p.locked_grid;
    check_saturation(&mut out, &empty, &grid.iter().map(|&d| (d, d)).collect::<Vec<_>>(), &noise);

    let te = simulate_locked(&empty, grid, &p.lock, &noise)?;
    let tc = simulate_locked(&coupled, grid, &p.lock, &noise.with_seed(p.seed ^ 0x5eed_0001))?;
    let fe = fit_rabi(&te, p.gamma_eff, &rates)?;
    let fc = fit_rabi(&tc, p.gamma_eff, &rates)?;
    out.tables.push(locked_table("empty", &te, |d| crate::cqed::reflectivity_at(&empty, d, d)));
    out.tables.push(locked_table("coupled", &tc, |d| crate::cqed::reflectivity_at(&coupled, d, d)));
    out.comparisons.push(Comparison::new("empty g_N^2", "(2pi MHz)^2", 0.0, fe.g_n_sq, 1.0 / mhz(1.0).powi(2)));
    out.comparisons.push(Comparison::new("g_N", MHZ, p.g_n, fc.g_n, 1.0 / mhz(1.0)).target(12.2, 0.2));
    out.record("empty", &fe);
    out.record("coupled", &fc);
    Ok(out)
}

/// Dip fits of the scanned-cavity series at each atomic detuning.
fn scan_series(p: &PipelineParams, sys: &CoupledSystem, out: &mut PipelineOutput) -> Result<Vec<(f64, DipFit)>> {
    let noise = p.noise_model();
    let mut raw = DataTable::new("scans", &["delta_mhz", "cavity_detuning_mhz", "counts"]);
    let mut dips = Vec::with_capacity(p.scan_detunings.len());
    for (k, &d) in p.scan_detunings.iter().enumerate() {
        let n = noise.with_seed(p.seed.wrapping_mul(1_000_003).wrapping_add(k as u64));
        let trace = simulate_scan(sys, d, &p.scan, &p.timing, &n)?;
        for (&x, &y) in trace.x.iter().zip(&trace.y) {
            raw.rows.push(vec![to_mhz(d), to_mhz(x), y]);
        }
        dips.push((d, fit_lorentzian_dip(&trace)?));
    }
    let pts: Vec<(f64, f64)> = p.scan_detunings.iter().flat_map(|&d| p.scan.grid().into_iter().map(move |x| (d, x))).collect();
    check_saturation(out, sys, &pts, &noise);
    out.tables.push(raw);
    Ok(dips)
}

fn fig5(name: PipelineName, p: &PipelineParams) -> Result<PipelineOutput> {
    let mut out = PipelineOutput::new(name, p.seed);
    let rates = p.rates()?;
    let sys = CoupledSystem::from_collective(p.g_n, p.gamma_eff, rates)?;
    let dips = scan_series(p, &sys, &mut out)?;
    let mut table = DataTable::new(
        "dips",
        &["delta_mhz", "kappa_prime_mhz", "kappa_prime_err_mhz", "shift_mhz", "shift_err_mhz"],
    );
    for (d, f) in &dips {
        table.rows.push(vec![
            to_mhz(*d),
            to_mhz(f.hwhm.value),
            to_mhz(f.hwhm.std_error),
            -to_mhz(f.center.value),
            to_mhz(f.center.std_error),
        ]);
    }
    out.tables.push(table);
    let to = 1.0 / mhz(1.0);
    if name == PipelineName::Fig5a {
        let pts: Vec<(f64, f64)> = dips.iter().map(|(d, f)| (*d, f.hwhm.value)).collect();
        let s = usable_sigmas(p.noiseless, dips.iter().map(|(_, f)| f.hwhm.std_error).collect());
        let fit = fit_absorption(&pts, s.as_deref(), None)?;
        out.comparisons.push(Comparison::new("g_N", MHZ, p.g_n, fit.g_n, to).target(12.2, 0.2));
        out.comparisons.push(Comparison::new("gamma_eff", MHZ, p.gamma_eff, fit.gamma_eff, to).target(11.9, 0.4));
        out.comparisons.push(Comparison::new("kappa", MHZ, rates.kappa, fit.kappa, to).target(2.2, 0.1));
        out.record("absorption", &fit);
    } else {
        let pts: Vec<(f64, f64)> = dips.iter().map(|(d, f)| (*d, -f.center.value)).collect();
        let s = usable_sigmas(p.noiseless, dips.iter().map(|(_, f)| f.center.std_error).collect());
        let fit = fit_dispersion(&pts, s.as_deref())?;
        out.comparisons.push(Comparison::new("g_N", MHZ, p.g_n, fit.g_n, to).target(12.0, 0.3));
        out.comparisons.push(Comparison::new("gamma_eff", MHZ, p.gamma_eff, fit.gamma_eff, to).target(12.7, 0.8));
        out.record("dispersion", &fit);
    }
    Ok(out)
}

fn fig6(p: &PipelineParams) -> Result<PipelineOutput> {
    let mut out = PipelineOutput::new(PipelineName::Fig6, p.seed);
    let rates = p.rates()?;
    let noise = p.noise_model();
    let base = CoupledSystem::new(p.g, 0.0, p.gamma_eff, rates)?;
    // wide dips of large crystals need a wider recorded window at the same bin size
    let bins = (p.scan.samples_per_scan - 1) as f64;
    let window = p.scan.window.max(mhz(200.0)).min(0.5 * p.scan.span);
    let scan = ScanConfig {
        window,
        samples_per_scan: (bins * window / p.scan.window).round() as usize + 1,
        ..p.scan
    };
    let dip = |n_ions: f64, k: u64| -> Result<DipFit> {
        let n = noise.with_seed(p.seed.wrapping_mul(1_000_003).wrapping_add(k));
        fit_lorentzian_dip(&simulate_scan(&base.with_n(n_ions), 0.0, &scan, &p.timing, &n)?)
    };
    let empty = dip(0.0, 0)?;
    let k = empty.hwhm;
    let mut table = DataTable::new("cooperativity", &["n", "kappa_prime_mhz", "cooperativity", "cooperativity_err"]);
    let mut pts = vec![(0.0, k.value)];
    let mut sig = vec![k.std_error];
    let mut coop = Vec::new();
    let mut coop_sig = Vec::new();
    for (i, &n_ions) in p.coop_numbers.iter().enumerate() {
        let kp = dip(n_ions, i as u64 + 1)?.hwhm;
        let c = (kp.value / k.value - 1.0) / 2.0;
        let s = 0.5 * (kp.std_error / k.value).hypot(kp.value * k.std_error / (k.value * k.value));
        table.rows.push(vec![n_ions, to_mhz(kp.value), c, s]);
        pts.push((n_ions, kp.value));
        sig.push(kp.std_error);
        coop.push((n_ions, c));
        coop_sig.push(s);
    }
    let last = *p.coop_numbers.last().unwrap_or(&0.0);
    check_saturation(&mut out, &base.with_n(last), &[(0.0, 0.0)], &noise);

    // κ′(N) = κ(1 + 2sN) with κ free, so the shared empty-cavity error enters the slope
    let x: Vec<f64> = pts.iter().map(|q| q.0).collect();
    let y: Vec<f64> = pts.iter().map(|q| q.1 * 1e-6).collect();
    let sig = usable_sigmas(p.noiseless, sig);
    let w = match &sig {
        Some(s) => s.iter().map(|v| 1.0 / (v * 1e-6).powi(2)).collect(),
        None => vec![1.0; x.len()],
    };
    let problem = FitProblem::new("kappa prime vs N", |n, q| q[0] * (1.0 + 2e-3 * q[1] * n), x, y, vec![
        k.value * 1e-6,
        1.0,
    ])
    .with_weights(w)
    .with_absolute_sigma(sig.is_some());
    let joint = fit_nls(&problem)?;
    let slope_est = Estimate { value: joint.params[1] * 1e-3, std_error: joint.std_errors[1] * 1e-3 };
    let proportional = fit_proportional(&coop, usable_sigmas(p.noiseless, coop_sig).as_deref())?;
    let slope = cooperativity(&base.with_n(1.0));
    out.tables.push(table);
    out.comparisons.push(Comparison::new("slope C/N", "1", slope, slope_est, 1.0).target(5.1e-3, f64::NAN));
    out.record("empty_dip", &empty);
    out.record("joint", &joint);
    out.record("proportional", &proportional);
    Ok(out)
}

fn fig7(name: PipelineName, p: &PipelineParams) -> Result<PipelineOutput> {
    let mut out = PipelineOutput::new(name, p.seed);
    let rates = p.rates()?;
    let noise = p.noise_model();
    let lock = LockConfig { n_sequences: p.rabi_sequences, ..p.lock };
    let base = CoupledSystem::new(p.g, 0.0, p.gamma_eff, rates)?;
    let mut table = DataTable::new("rabi", &["n", "g_n_mhz", "g_n_err_mhz"]);
    let mut pts = Vec::new();
    let mut sig = Vec::new();
    let to = 1.0 / mhz(1.0);
    for (i, &n_ions) in p.rabi_numbers.iter().enumerate() {
        let sys = base.with_n(n_ions);
        let n = noise.with_seed(p.seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
        let tr = simulate_locked(&sys, &p.locked_grid, &lock, &n)?;
        let fit = fit_rabi(&tr, p.gamma_eff, &rates)?;
        out.tables.push(locked_table(&format!("spectrum_n{}", n_ions.round()), &tr, |d| {
            crate::cqed::reflectivity_at(&sys, d, d)
        }));
        table.rows.push(vec![n_ions, to_mhz(fit.g_n.value), to_mhz(fit.g_n.std_error)]);
        if name == PipelineName::Fig7 {
            out.comparisons.push(Comparison::new(&format!("g_N(N={})", n_ions.round()), MHZ, sys.g_n(), fit.g_n, to));
        }
        pts.push((n_ions, fit.g_n.value));
        sig.push(fit.g_n.std_error);
    }
    out.tables.push(table);
    if name == PipelineName::Fig8 {
        let s = usable_sigmas(p.noiseless, sig);
        let fit = fit_sqrt_n(&pts, s.as_deref())?;
        out.comparisons.push(Comparison::new("g", MHZ, p.g, fit.g, to).target(0.53, 0.01));
        out.record("sqrt_n", &fit);
    }
    Ok(out)
}

/// Divides by the mean over the first precession period.
fn normalize_first_period(taus: &[f64], y: &mut [f64], period: f64) {
    let n = taus.iter().take_while(|&&t| t < taus[0] + period).count().max(1);
    let mean = y[..n].iter().sum::<f64>() / n as f64;
    for v in y.iter_mut() {
        *v /= mean;
    }
}

fn fig9a(p: &PipelineParams) -> Result<PipelineOutput> {
    let mut out = PipelineOutput::new(PipelineName::Fig9a, p.seed);
    let field = FieldConfig::from_rates(p.larmor_slope * p.larmor_current, p.larmor_omega_z);
    let init = SpinMixture::stretched_pair();
    let taus = p.larmor_taus();
    let probe = p.larmor_probe(p.seed)?;
    let mut tr = simulate_larmor(&init, &field, &probe, &taus)?;
    let mut sigma = tr.sigma.clone();
    if p.larmor_normalize {
        let before = tr.y[0];
        normalize_first_period(&taus, &mut tr.y, larmor_period(&field));
        let scale = tr.y[0] / before;
        if let Some(s) = sigma.as_mut() {
            s.iter_mut().for_each(|v| *v *= scale);
        }
    }
    let pts: Vec<(f64, f64)> = taus.iter().copied().zip(tr.y.iter().copied()).collect();
    let fit = if p.larmor_profile {
        fit_larmor(&pts, sigma.as_deref())?
    } else {
        let e = fit_larmor_envelope(&pts, sigma.as_deref(), DecayKind::Exponential, false, None)?;
        let g = fit_larmor_envelope(&pts, sigma.as_deref(), DecayKind::Gaussian, false, None)?;
        crate::estimate::LarmorFit { exponential: e, gaussian: g }
    };

    let mut table = DataTable::new("larmor", &["tau_us", "cooperativity", "sigma", "fit_exponential", "fit_gaussian"]);
    let fe = crate::estimate::forms::larmor_exp;
    let fg = crate::estimate::forms::larmor_gauss;
    for (i, (&t, &c)) in taus.iter().zip(&tr.y).enumerate() {
        let s = sigma.as_ref().map_or(0.0, |s| s[i]);
        table.rows.push(vec![t * 1e6, c, s, fe(t * 1e6, &fit.exponential.fit.params), fg(t * 1e6, &fit.gaussian.fit.params)]);
    }
    out.tables.push(table);

    let wl = larmor_frequency(&field);
    let e = &fit.exponential;
    out.comparisons.push(Comparison::new("omega_L", KHZ, wl, e.omega_l, 1.0 / khz(1.0)));
    if p.larmor_decay.kind == DecayKind::Exponential {
        out.comparisons.push(Comparison::new("decay rate", "1/ms", 1.0 / p.larmor_decay.timescale, e.rate, 1e-3));
    }
    if !p.larmor_normalize {
        // a, b, c of the undamped trace from the exact harmonic decomposition
        let clean = LarmorProbe { noise_sigma: 0.0, decay: DecayModel::none(), ..probe };
        let exact = simulate_larmor(&init, &field, &clean, &taus)?;
        let h = fit_harmonics(&taus, &exact.y, wl)?;
        out.comparisons.push(Comparison::new("a", "1", h.a, e.a, 1.0));
        out.comparisons.push(Comparison::new("b", "1", h.b, e.b, 1.0));
        out.comparisons.push(Comparison::new("c", "1", h.c, e.c, 1.0));
    }
    out.record("tau_e_ms", &json!({
        "injected": p.larmor_decay.timescale * 1e3,
        "recovered": e.timescale * 1e3,
        "bounds": [e.timescale_bounds.0 * 1e3, e.timescale_bounds.1 * 1e3],
        "target": [1.7, 0.8, 100.0],
    }));
    out.record("tau_g_ms", &json!({
        "recovered": fit.gaussian.timescale * 1e3,
        "bounds": [fit.gaussian.timescale_bounds.0 * 1e3, fit.gaussian.timescale_bounds.1 * 1e3],
    }));
    out.record("exponential", &fit.exponential);
    out.record("gaussian", &fit.gaussian);
    Ok(out)
}

fn fig9b(p: &PipelineParams) -> Result<PipelineOutput> {
    let mut out = PipelineOutput::new(PipelineName::Fig9b, p.seed);
    let field = FieldConfig::from_rates(0.0, p.larmor_omega_z);
    let init = SpinMixture::stretched_pair();
    let taus = p.larmor_taus();
    let probe = p.larmor_probe(p.seed)?;
    let tr = simulate_larmor(&init, &field, &probe, &taus)?;
    let n = tr.len() as f64;
    let mean = tr.y.iter().sum::<f64>() / n;
    let sd = (tr.y.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let cfg = probe.couplings.with_populations(probe.n_total, &mean_populations(&init, &field));
    let c0 = (crate::larmor::kappa_prime_two_transition(&cfg, probe.gamma, probe.kappa) / probe.kappa - 1.0) / 2.0;
    let mut table = DataTable::new("larmor", &["tau_us", "cooperativity", "sigma"]);
    for (&t, &c) in taus.iter().zip(&tr.y) {
        table.rows.push(vec![t * 1e6, c, probe.noise_sigma]);
    }
    out.tables.push(table);
    out.comparisons.push(Comparison::new("mean C", "1", c0, Estimate { value: mean, std_error: sd / n.sqrt() }, 1.0).target(1.43, 0.02));
    Ok(out)
}

fn fig10(p: &PipelineParams) -> Result<PipelineOutput> {
    let mut out = PipelineOutput::new(PipelineName::Fig10, p.seed);
    let init = SpinMixture::stretched_pair();
    let taus = p.larmor_taus();
    let mut table = DataTable::new("calibration", &["current_ma", "omega_l_khz", "omega_l_err_khz"]);
    let mut pts = Vec::new();
    let mut sig = Vec::new();
    for (i, &current) in p.larmor_currents.iter().enumerate() {
        let field = FieldConfig::from_rates(p.larmor_slope * current, p.larmor_omega_z);
        let probe = p.larmor_probe(p.seed.wrapping_mul(1_000_003).wrapping_add(i as u64))?;
        let tr = simulate_larmor(&init, &field, &probe, &taus)?;
        let pts_i: Vec<(f64, f64)> = taus.iter().copied().zip(tr.y.iter().copied()).collect();
        // search near the nominal precession frequency
        let nominal = larmor_frequency(&field);
        let range = Some((0.8 * nominal, 1.2 * nominal));
        let f = fit_larmor_envelope(&pts_i, tr.sigma.as_deref(), DecayKind::Exponential, false, range)?;
        table.rows.push(vec![current * 1e3, to_khz(f.omega_l.value), to_khz(f.omega_l.std_error)]);
        pts.push((current, f.omega_l.value));
        sig.push(f.omega_l.std_error);
    }
    out.tables.push(table);
    let s = usable_sigmas(p.noiseless, sig);
    let fit = fit_calibration(&pts, s.as_deref(), D32_LANDE_G)?;
    let to = 1.0 / khz(1.0);
    out.comparisons.push(Comparison::new("omega_z", KHZ, p.larmor_omega_z, fit.omega_z, to).target(150.0, 2.0));
    out.comparisons.push(Comparison::new("slope", "2pi kHz/mA", p.larmor_slope, fit.slope, to * 1e-3).target(5.5, 0.1));
    let gm = gyromagnetic_ratio(D32_LANDE_G);
    out.comparisons.push(Comparison::new("B_z", "G", p.larmor_omega_z / gm, fit.b_z, 1e4).target(0.134, 0.002));
    out.record("calibration", &fit);
    Ok(out)
}
