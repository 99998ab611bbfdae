//! Run configuration: a sectioned key/value file (TOML syntax) whose
//! dimensioned values are strings with a unit suffix, e.g.
//!
//! ```toml
//! [cavity]
//! length = "11.8 mm"
//! t1 = "1500 ppm"
//!
//! [coupling]
//! g = "0.53 MHz"
//! n_eff = 520
//! ```
//!
//! Frequencies follow the "2π ×" convention unless loaded with
//! `angular = true`. Unknown sections and keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::{Spanned, Value};

use crate::cqed::{single_ion_coupling, CavityParams, TransitionParams};
use crate::crystal::{CrystalSpec, TrapParams};
use crate::error::{Error, Result};
use crate::expsim::{LockConfig, NoiseModel, PipelineParams, ScanConfig, SequenceTiming};
use crate::larmor::{gyromagnetic_ratio, DecayKind, DecayModel, FieldConfig, D32_LANDE_G};
use crate::motion::VALIDITY_FACTOR;
use crate::units::{khz, mhz, parse_quantity, Dimension, CA40_MASS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrystalErrors {
    /// δρ/ρ.
    pub density: f64,
    /// Imaging resolution δx (m).
    pub imaging: f64,
    /// δη/η.
    pub pumping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingConfig {
    /// Single-ion coupling; computed from the dipole moment when absent.
    pub g: Option<f64>,
    pub n_eff: f64,
    /// γ′ (rad/s); defaults to the transition γ.
    pub gamma_eff: Option<f64>,
    /// Probe detuning Δ (rad/s).
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalSettings {
    pub temperature: f64,
    pub ion_mass: f64,
    pub validity_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LarmorSettings {
    pub field: FieldConfig,
    pub g_factor: f64,
    pub decay: DecayModel,
    pub ion_number: f64,
    pub window: f64,
    pub step: f64,
    pub readout_noise: f64,
    /// dω_x/dI (rad/s/A).
    pub slope: f64,
    pub current: f64,
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub cavity: CavityParams,
    pub transition: TransitionParams,
    /// When present, the crystal density follows from the trap.
    pub trap: Option<TrapParams>,
    pub crystal: CrystalSpec,
    pub crystal_errors: CrystalErrors,
    pub coupling: CouplingConfig,
    pub thermal: ThermalSettings,
    pub larmor: LarmorSettings,
    pub noise: NoiseModel,
    pub scan: ScanConfig,
    pub timing: SequenceTiming,
    pub lock: LockConfig,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cavity: CavityParams::reference(),
            transition: TransitionParams::ca40_866(),
            trap: None,
            crystal: CrystalSpec::reference(),
            crystal_errors: CrystalErrors { density: 0.019, imaging: 1e-6, pumping: 0.04 },
            coupling: CouplingConfig { g: None, n_eff: 520.0, gamma_eff: Some(mhz(11.9)), delta: 0.0 },
            thermal: ThermalSettings { temperature: 24e-3, ion_mass: CA40_MASS, validity_factor: VALIDITY_FACTOR },
            larmor: LarmorSettings {
                field: FieldConfig::from_rates(khz(88.0), khz(150.0)),
                g_factor: D32_LANDE_G,
                decay: DecayModel::exponential(1.7e-3),
                ion_number: 520.0,
                window: 120e-6,
                step: 1e-6,
                readout_noise: 0.02,
                slope: khz(5.5) * 1e3,
                current: 16e-3,
                normalize: false,
            },
            noise: NoiseModel::default(),
            scan: ScanConfig::default(),
            timing: SequenceTiming::default(),
            lock: LockConfig::default(),
            seed: 0,
            output: None,
        }
    }
}

type Section = BTreeMap<Spanned<String>, Spanned<Value>>;

struct Ctx<'a> {
    text: &'a str,
    source: &'a str,
    angular: bool,
}

impl Ctx<'_> {
    fn position(&self, offset: usize) -> (usize, usize) {
        let before = &self.text[..offset.min(self.text.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, column)
    }

    fn err_at(&self, offset: usize, msg: impl Into<String>) -> Error {
        let (line, column) = self.position(offset);
        Error::data(self.source, line, column, msg)
    }

    fn quantity(&self, v: &Spanned<Value>, dim: Dimension) -> Result<f64> {
        let at = v.span().start;
        match v.get_ref() {
            Value::String(s) => parse_quantity(s, dim, self.angular).map_err(|m| self.err_at(at, m)),
            Value::Integer(i) if dim == Dimension::Dimensionless => Ok(*i as f64),
            Value::Float(f) if dim == Dimension::Dimensionless => Ok(*f),
            Value::Integer(_) | Value::Float(_) => {
                Err(self.err_at(at, format!("a unit suffix is required here ({dim:?}), e.g. \"1.0 <unit>\"")))
            }
            other => Err(self.err_at(at, format!("expected a quantity, found {}", other.type_str()))),
        }
    }

    fn count(&self, v: &Spanned<Value>) -> Result<u64> {
        match v.get_ref() {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            _ => Err(self.err_at(v.span().start, "expected a non-negative integer")),
        }
    }

    fn flag(&self, v: &Spanned<Value>) -> Result<bool> {
        v.get_ref().as_bool().ok_or_else(|| self.err_at(v.span().start, "expected true or false"))
    }

    fn text_value<'v>(&self, v: &'v Spanned<Value>) -> Result<&'v str> {
        v.get_ref().as_str().ok_or_else(|| self.err_at(v.span().start, "expected a string"))
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("cavity", &["length", "t1", "t2", "losses", "waist", "wavelength"]),
    ("transition", &["gamma", "wavelength", "dipole_moment"]),
    ("trap", &["r0", "rf_frequency", "rf_amplitude", "ion_mass", "density_coefficient"]),
    (
        "crystal",
        &[
            "half_length",
            "radius",
            "density",
            "pump_efficiency",
            "offset_x",
            "offset_y",
            "density_uncertainty",
            "imaging_resolution",
            "pump_uncertainty",
        ],
    ),
    ("coupling", &["g", "n_eff", "gamma_eff", "delta"]),
    ("thermal", &["temperature", "ion_mass", "validity_factor"]),
    (
        "larmor",
        &[
            "omega_z",
            "omega_x",
            "b_z",
            "b_x",
            "g_factor",
            "decay",
            "decay_time",
            "ion_number",
            "window",
            "step",
            "readout_noise",
            "slope",
            "current",
            "normalize",
        ],
    ),
    (
        "noise",
        &[
            "photon_rate",
            "detection_efficiency",
            "drift",
            "compensation_floor",
            "compensation_scale",
            "reference_threshold",
            "shot_noise",
        ],
    ),
    ("scan", &["span", "rate", "n_average", "samples", "window"]),
    ("timing", &["cool", "pump", "probe", "apd_delay", "total"]),
    ("lock", &["sequences", "jitter", "reference_counts"]),
    ("run", &["seed", "output"]),
];

impl RunConfig {
    pub fn load(path: &Path, angular: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string(), angular)
    }

    pub fn parse(text: &str, source: &str, angular: bool) -> Result<Self> {
        let ctx = Ctx { text, source, angular };
        let doc: BTreeMap<Spanned<String>, Spanned<Section>> = toml::from_str(text).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start);
            ctx.err_at(offset, e.message().trim().to_string())
        })?;
        let mut cfg = RunConfig::default();
        let mut b_field = (None, None);
        let mut trap: Option<TrapParams> = None;
        for (section, entries) in &doc {
            let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| *s == section.get_ref().as_str()) else {
                return Err(ctx.err_at(section.span().start, format!("unknown section [{}]", section.get_ref())));
            };
            for (key, value) in entries.get_ref() {
                let k = key.get_ref().as_str();
                if !keys.contains(&k) {
                    return Err(ctx.err_at(
                        key.span().start,
                        format!("unknown key {k:?} in [{}]; expected one of {}", section.get_ref(), keys.join(", ")),
                    ));
                }
                cfg.apply(&ctx, section.get_ref(), k, value, &mut b_field, &mut trap)?;
            }
        }
        if let Some(t) = trap {
            cfg.crystal.density = crate::crystal::ion_density(&t)?;
            cfg.trap = Some(t);
        }
        let gm = gyromagnetic_ratio(cfg.larmor.g_factor);
        if let Some(bz) = b_field.0 {
            cfg.larmor.field.omega_z = gm * bz;
        }
        if let Some(bx) = b_field.1 {
            cfg.larmor.field.omega_x = gm * bx;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(
        &mut self,
        ctx: &Ctx,
        section: &str,
        key: &str,
        v: &Spanned<Value>,
        b_field: &mut (Option<f64>, Option<f64>),
        trap: &mut Option<TrapParams>,
    ) -> Result<()> {
        use Dimension::*;
        let q = |dim| ctx.quantity(v, dim);
        match (section, key) {
            ("cavity", "length") => self.cavity.length = q(Length)?,
            ("cavity", "t1") => self.cavity.t1 = q(Dimensionless)?,
            ("cavity", "t2") => self.cavity.t2 = q(Dimensionless)?,
            ("cavity", "losses") => self.cavity.losses = q(Dimensionless)?,
            ("cavity", "waist") => self.cavity.waist = q(Length)?,
            ("cavity", "wavelength") => self.cavity.wavelength = q(Length)?,
            ("transition", "gamma") => self.transition.gamma = q(Frequency)?,
            ("transition", "wavelength") => self.transition.wavelength = q(Length)?,
            ("transition", "dipole_moment") => self.transition.dipole_moment = Some(q(DipoleMoment)?),
            ("trap", _) => {
                let t = trap.get_or_insert(TrapParams {
                    r0: 2.35e-3,
                    omega_rf: mhz(4.0),
                    u_rf: 300.0,
                    ion_mass: CA40_MASS,
                    density_coefficient: Some(TrapParams::REFERENCE_COEFFICIENT),
                });
                match key {
                    "r0" => t.r0 = q(Length)?,
                    "rf_frequency" => t.omega_rf = q(Frequency)?,
                    "rf_amplitude" => t.u_rf = q(Voltage)?,
                    "ion_mass" => t.ion_mass = q(Mass)?,
                    _ => {
                        t.density_coefficient = match v.get_ref().as_str() {
                            Some("first-principles") => None,
                            _ => Some(q(DensityCoefficient)?),
                        }
                    }
                }
            }
            ("crystal", "half_length") => self.crystal.half_length = q(Length)?,
            ("crystal", "radius") => self.crystal.radius = q(Length)?,
            ("crystal", "density") => self.crystal.density = q(Density)?,
            ("crystal", "pump_efficiency") => self.crystal.pump_efficiency = q(Dimensionless)?,
            ("crystal", "offset_x") => self.crystal.offset_x = q(Length)?,
            ("crystal", "offset_y") => self.crystal.offset_y = q(Length)?,
            ("crystal", "density_uncertainty") => self.crystal_errors.density = q(Dimensionless)?,
            ("crystal", "imaging_resolution") => self.crystal_errors.imaging = q(Length)?,
            ("crystal", "pump_uncertainty") => self.crystal_errors.pumping = q(Dimensionless)?,
            ("coupling", "g") => self.coupling.g = Some(q(Frequency)?),
            ("coupling", "n_eff") => self.coupling.n_eff = q(Dimensionless)?,
            ("coupling", "gamma_eff") => self.coupling.gamma_eff = Some(q(Frequency)?),
            ("coupling", "delta") => self.coupling.delta = q(Frequency)?,
            ("thermal", "temperature") => self.thermal.temperature = q(Temperature)?,
            ("thermal", "ion_mass") => self.thermal.ion_mass = q(Mass)?,
            ("thermal", "validity_factor") => self.thermal.validity_factor = q(Dimensionless)?,
            ("larmor", "omega_z") => self.larmor.field.omega_z = q(Frequency)?,
            ("larmor", "omega_x") => self.larmor.field.omega_x = q(Frequency)?,
            ("larmor", "b_z") => b_field.0 = Some(q(MagneticField)?),
            ("larmor", "b_x") => b_field.1 = Some(q(MagneticField)?),
            ("larmor", "g_factor") => self.larmor.g_factor = q(Dimensionless)?,
            ("larmor", "decay") => {
                self.larmor.decay.kind = match ctx.text_value(v)? {
                    "exponential" => DecayKind::Exponential,
                    "gaussian" => DecayKind::Gaussian,
                    "none" => DecayKind::None,
                    other => {
                        return Err(ctx.err_at(
                            v.span().start,
                            format!("decay must be exponential, gaussian or none, got {other:?}"),
                        ))
                    }
                }
            }
            ("larmor", "decay_time") => self.larmor.decay.timescale = q(Time)?,
            ("larmor", "ion_number") => self.larmor.ion_number = q(Dimensionless)?,
            ("larmor", "window") => self.larmor.window = q(Time)?,
            ("larmor", "step") => self.larmor.step = q(Time)?,
            ("larmor", "readout_noise") => self.larmor.readout_noise = q(Dimensionless)?,
            ("larmor", "slope") => self.larmor.slope = q(FrequencyPerCurrent)?,
            ("larmor", "current") => self.larmor.current = q(Current)?,
            ("larmor", "normalize") => self.larmor.normalize = ctx.flag(v)?,
            ("noise", "photon_rate") => self.noise.mean_photon_rate = q(CountRate)?,
            ("noise", "detection_efficiency") => self.noise.detection_efficiency = q(Dimensionless)?,
            ("noise", "drift") => self.noise.drift = q(Frequency)?,
            ("noise", "compensation_floor") => self.noise.compensation_floor = q(Dimensionless)?,
            ("noise", "compensation_scale") => self.noise.compensation_scale = q(Frequency)?,
            ("noise", "reference_threshold") => self.noise.reference_threshold = q(Dimensionless)?,
            ("noise", "shot_noise") => self.noise.shot_noise = ctx.flag(v)?,
            ("scan", "span") => self.scan.span = q(Frequency)?,
            // repetition rate stays in Hz
            ("scan", "rate") => {
                self.scan.rate = parse_quantity(ctx.text_value(v)?, Frequency, true)
                    .map_err(|m| ctx.err_at(v.span().start, m))?
            }
            ("scan", "n_average") => self.scan.n_average = to_u32(ctx, v)?,
            ("scan", "samples") => self.scan.samples_per_scan = ctx.count(v)? as usize,
            ("scan", "window") => self.scan.window = q(Frequency)?,
            ("timing", "cool") => self.timing.cool = q(Time)?,
            ("timing", "pump") => self.timing.pump = q(Time)?,
            ("timing", "probe") => self.timing.probe = q(Time)?,
            ("timing", "apd_delay") => self.timing.apd_delay = q(Time)?,
            ("timing", "total") => self.timing.total = q(Time)?,
            ("lock", "sequences") => self.lock.n_sequences = to_u32(ctx, v)?,
            ("lock", "jitter") => self.lock.lock_jitter = q(Frequency)?,
            ("lock", "reference_counts") => self.lock.reference_counts = q(Dimensionless)?,
            ("run", "seed") => self.seed = ctx.count(v)?,
            ("run", "output") => self.output = Some(PathBuf::from(ctx.text_value(v)?)),
            _ => unreachable!("key list and match arms agree"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.cavity.validate()?;
        self.crystal.validate()?;
        self.noise.validate()?;
        self.scan.validate()?;
        self.timing.validate()?;
        self.lock.validate()?;
        self.larmor.decay.validate()?;
        Ok(())
    }

    /// γ′, falling back to the transition γ.
    pub fn gamma_eff(&self) -> f64 {
        self.coupling.gamma_eff.unwrap_or(self.transition.gamma)
    }

    /// Single-ion coupling: the configured value, else μ_ge E0/ħ.
    pub fn single_ion_g(&self) -> Result<f64> {
        match self.coupling.g {
            Some(g) => Ok(g),
            None => single_ion_coupling(&self.transition, &self.cavity),
        }
    }

    /// Pipeline settings with this configuration's cavity, noise and seed.
    /// The collective coupling follows g√N only when g is set explicitly.
    pub fn pipeline_params(&self) -> PipelineParams {
        let lock = LockConfig { timing: self.timing, ..self.lock };
        let base = PipelineParams::default();
        let (g, g_n) = match self.coupling.g {
            Some(g) => (g, g * self.coupling.n_eff.sqrt()),
            None => (base.g, base.g_n),
        };
        PipelineParams {
            g,
            g_n,
            gamma_eff: self.coupling.gamma_eff.unwrap_or(base.gamma_eff),
            seed: self.seed,
            cavity: self.cavity,
            timing: self.timing,
            scan: self.scan,
            lock,
            noise: self.noise,
            larmor_omega_z: self.larmor.field.omega_z,
            larmor_slope: self.larmor.slope,
            larmor_current: self.larmor.current,
            larmor_decay: self.larmor.decay,
            larmor_noise: self.larmor.readout_noise,
            larmor_step: self.larmor.step,
            larmor_window: self.larmor.window,
            larmor_n_total: self.larmor.ion_number,
            larmor_normalize: self.larmor.normalize,
            ..base
        }
    }
}

fn to_u32(ctx: &Ctx, v: &Spanned<Value>) -> Result<u32> {
    u32::try_from(ctx.count(v)?).map_err(|_| ctx.err_at(v.span().start, "value too large"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("", "t", false).unwrap(), RunConfig::default());
    }

    #[test]
    fn parses_units_and_convention() {
        let text = "[cavity]\nlength = \"11.8 mm\"\nt1 = \"1500 ppm\"\n\n[coupling]\ng = \"0.53 MHz\"\nn_eff = 520\n";
        let c = RunConfig::parse(text, "t", false).unwrap();
        assert!((c.cavity.length - 11.8e-3).abs() < 1e-15);
        assert!((c.cavity.t1 - 1.5e-3).abs() < 1e-15);
        assert!((c.coupling.g.unwrap() - mhz(0.53)).abs() < 1e-6);
        let a = RunConfig::parse("[coupling]\ng = \"0.53 MHz\"\n", "t", true).unwrap();
        assert!((a.coupling.g.unwrap() - 0.53e6).abs() < 1e-6);
    }

    #[test]
    fn unknown_key_reports_position() {
        let err = RunConfig::parse("[cavity]\nlength = \"1 mm\"\n  colour = 3\n", "cfg", false).unwrap_err();
        match err {
            Error::Data { line, column, message, .. } => {
                assert_eq!((line, column), (3, 3));
                assert!(message.contains("colour"));
            }
            other => panic!("{other}"),
        }
        assert!(matches!(RunConfig::parse("[nope]\n", "cfg", false), Err(Error::Data { line: 1, .. })));
    }

    #[test]
    fn missing_unit_is_rejected() {
        let err = RunConfig::parse("[cavity]\nlength = 11.8\n", "cfg", false).unwrap_err();
        assert!(matches!(err, Error::Data { line: 2, column: 10, .. }), "{err}");
        let err = RunConfig::parse("[cavity]\nlength = \"11.8 MHz\"\n", "cfg", false).unwrap_err();
        assert!(matches!(err, Error::Data { line: 2, .. }));
    }

    #[test]
    fn syntax_errors_are_data_errors() {
        let err = RunConfig::parse("[cavity\nlength = 1\n", "cfg", false).unwrap_err();
        assert!(matches!(err, Error::Data { line: 1, .. }), "{err}");
    }

    #[test]
    fn magnetic_field_sets_larmor_rate() {
        let c = RunConfig::parse("[larmor]\nb_z = \"0.134 G\"\n", "t", false).unwrap();
        assert!((c.larmor.field.omega_z / khz(150.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn trap_section_sets_density() {
        let c = RunConfig::parse("[trap]\nrf_amplitude = \"300 V\"\n", "t", false).unwrap();
        assert!((c.crystal.density * 1e-6 - 5.409e8).abs() < 1e5);
    }
}
