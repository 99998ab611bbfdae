//! Python bindings: `import pyccqed`.
//!
//! Rates are rad/s as in the Rust crate; `mhz`/`to_mhz` convert from and to
//! the "2π × MHz" convention. Structured results come back as plain dicts.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ccqed::cqed::{self, CavityParams, CoupledSystem};
use ccqed::crystal::{self, CrystalSpec, ModeGeometry};
use ccqed::estimate;
use ccqed::expsim::{self, NoiseModel, PipelineName, PipelineParams};
use ccqed::larmor::{self, FieldConfig, SpinState};
use ccqed::motion::{self, ThermalConfig};
use ccqed::trace::{Axis, ScanTrace, TraceKind};
use ccqed::units::{self, CA40_MASS};
use ccqed::Error;

create_exception!(pyccqed, CcqedError, PyException, "Base class of ccqed errors.");
create_exception!(pyccqed, DomainError, CcqedError, "Input outside the model's domain.");
create_exception!(pyccqed, DataError, CcqedError, "Malformed data or configuration.");
create_exception!(pyccqed, NumericError, CcqedError, "Quadrature, integration or fit failure.");

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Domain(_) | Error::Unsupported(_) => DomainError::new_err(msg),
        Error::Data { .. } | Error::Io(_) | Error::EmptyTrace(_) | Error::DegenerateTrace(_) => {
            DataError::new_err(msg)
        }
        _ => NumericError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for ccqed::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Serializable value as nested Python dicts and lists.
fn to_python<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| CcqedError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyfunction]
fn mhz(v: f64) -> f64 {
    units::mhz(v)
}

#[pyfunction]
fn khz(v: f64) -> f64 {
    units::khz(v)
}

#[pyfunction]
fn to_mhz(v: f64) -> f64 {
    units::to_mhz(v)
}

#[pyfunction]
fn to_khz(v: f64) -> f64 {
    units::to_khz(v)
}

/// Parses "0.53 MHz", "11.8 mm", ... into SI units.
#[pyfunction]
#[pyo3(signature = (text, dimension, angular = false))]
fn parse_quantity(text: &str, dimension: &str, angular: bool) -> PyResult<f64> {
    use units::Dimension::*;
    let dim = match dimension {
        "frequency" => Frequency,
        "length" => Length,
        "time" => Time,
        "temperature" => Temperature,
        "magnetic_field" => MagneticField,
        "density" => Density,
        "voltage" => Voltage,
        "mass" => Mass,
        "current" => Current,
        "dimensionless" => Dimensionless,
        other => return Err(DomainError::new_err(format!("unknown dimension {other:?}"))),
    };
    units::parse_quantity(text, dim, angular).map_err(DomainError::new_err)
}

/// Fabry–Perot cavity geometry (SI units).
#[pyclass(name = "Cavity", from_py_object)]
#[derive(Clone)]
struct PyCavity {
    inner: CavityParams,
}

#[pymethods]
impl PyCavity {
    #[new]
    #[pyo3(signature = (length = 11.8e-3, t1 = 1500e-6, t2 = 5e-6, losses = 650e-6, waist = 37e-6, wavelength = 866e-9))]
    fn new(length: f64, t1: f64, t2: f64, losses: f64, waist: f64, wavelength: f64) -> PyResult<Self> {
        let inner = CavityParams { length, t1, t2, losses, waist, wavelength };
        inner.validate().py()?;
        Ok(PyCavity { inner })
    }

    /// Decay rates, free spectral range and finesse.
    fn rates<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.inner.rates().py()?)
    }

    #[getter]
    fn kappa(&self) -> PyResult<f64> {
        Ok(self.inner.rates().py()?.kappa)
    }

    #[getter]
    fn finesse(&self) -> PyResult<f64> {
        Ok(self.inner.rates().py()?.finesse)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// N ions with single-ion coupling g and dipole decay γ′ in a cavity.
#[pyclass(name = "CoupledSystem", from_py_object)]
#[derive(Clone)]
struct PySystem {
    inner: CoupledSystem,
}

#[pymethods]
impl PySystem {
    #[new]
    #[pyo3(signature = (g, n_eff, gamma_eff, cavity = None))]
    fn new(g: f64, n_eff: f64, gamma_eff: f64, cavity: Option<PyCavity>) -> PyResult<Self> {
        let cav = cavity.map_or_else(CavityParams::reference, |c| c.inner);
        let inner = CoupledSystem::new(g, n_eff, gamma_eff, cav.rates().py()?).py()?;
        Ok(PySystem { inner })
    }

    #[getter]
    fn g_n(&self) -> f64 {
        self.inner.g_n()
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.rates.kappa
    }

    #[getter]
    fn cooperativity(&self) -> f64 {
        cqed::cooperativity(&self.inner)
    }

    fn with_n(&self, n_eff: f64) -> Self {
        PySystem { inner: self.inner.with_n(n_eff) }
    }

    /// (κ′, Δc′) at atomic detuning Δ and cavity detuning Δc.
    fn effective_response(&self, delta: f64, delta_c: f64) -> (f64, f64) {
        let r = cqed::effective_response(&self.inner, delta, delta_c);
        (r.kappa_prime, r.delta_c_prime)
    }

    fn reflectivity(&self, delta: f64, delta_c: f64) -> f64 {
        cqed::reflectivity_at(&self.inner, delta, delta_c)
    }

    /// Reflectivity with Δ = Δc on the given grid.
    fn rabi_spectrum(&self, grid: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(cqed::rabi_spectrum(&self.inner, &grid).py()?.y)
    }

    /// Doppler-averaged (κ′, Δc′) for ⁴⁰Ca⁺ at 866 nm and temperature T (K).
    fn thermal_response(&self, delta: f64, delta_c: f64, temperature: f64) -> PyResult<(f64, f64)> {
        let th = ThermalConfig::new(temperature, CA40_MASS, 866e-9).py()?;
        let r = motion::thermal_response(&self.inner, delta, delta_c, &th).py()?;
        Ok((r.kappa_prime, r.delta_c_prime))
    }

    /// Time for the intracavity field to settle within `tolerance` of steady state.
    #[pyo3(signature = (delta = 0.0, delta_c = 0.0, t_end = 1e-6, dt = 1e-10, tolerance = 0.05))]
    fn settling_time(&self, delta: f64, delta_c: f64, t_end: f64, dt: f64, tolerance: f64) -> PyResult<Option<f64>> {
        let a_in = num_complex::Complex64::new(1.0, 0.0);
        let tr = cqed::transient_buildup(&self.inner, delta, delta_c, a_in, t_end, dt).py()?;
        let resp = cqed::effective_response(&self.inner, delta, delta_c);
        let steady = cqed::intracavity_amplitude(&resp, &self.inner.rates, a_in);
        Ok(tr.settling_time(steady, tolerance))
    }

    /// Noisy cavity scan at fixed Δ; returns (Δc grid, mean counts).
    #[pyo3(signature = (delta = 0.0, seed = 0, noiseless = false))]
    fn simulate_scan(&self, delta: f64, seed: u64, noiseless: bool) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let noise = if noiseless { NoiseModel::noiseless() } else { NoiseModel::default() }.with_seed(seed);
        let p = PipelineParams::default();
        let t = expsim::simulate_scan(&self.inner, delta, &p.scan, &p.timing, &noise).py()?;
        Ok((t.x, t.y))
    }

    /// Locked-cavity spectrum; returns (grid, reflectivity, sigma or None).
    #[pyo3(signature = (grid, seed = 0, noiseless = false))]
    fn simulate_locked(
        &self,
        grid: Vec<f64>,
        seed: u64,
        noiseless: bool,
    ) -> PyResult<(Vec<f64>, Vec<f64>, Option<Vec<f64>>)> {
        let noise = if noiseless { NoiseModel::noiseless() } else { NoiseModel::default() }.with_seed(seed);
        let t = expsim::simulate_locked(&self.inner, &grid, &expsim::LockConfig::default(), &noise).py()?;
        Ok((t.x, t.y, t.sigma))
    }

    fn __repr__(&self) -> String {
        format!(
            "CoupledSystem(g_N=2π×{:.4} MHz, gamma_eff=2π×{:.4} MHz, kappa=2π×{:.4} MHz)",
            units::to_mhz(self.inner.g_n()),
            units::to_mhz(self.inner.gamma_eff),
            units::to_mhz(self.inner.rates.kappa)
        )
    }
}

/// Effective ion number of a spheroidal crystal in a Gaussian mode.
#[pyfunction]
#[pyo3(signature = (half_length, radius, density, pump_efficiency = 1.0, offset_x = 0.0, offset_y = 0.0, waist = 37e-6, wavelength = 866e-9))]
#[allow(clippy::too_many_arguments)]
fn effective_ion_count(
    half_length: f64,
    radius: f64,
    density: f64,
    pump_efficiency: f64,
    offset_x: f64,
    offset_y: f64,
    waist: f64,
    wavelength: f64,
) -> PyResult<f64> {
    let c = CrystalSpec { half_length, radius, density, pump_efficiency, offset_x, offset_y };
    let m = ModeGeometry::new(waist, wavelength).py()?;
    crystal::effective_ion_count(&c, &m).py()
}

/// Relative uncertainty δN/N from density, imaging and pumping errors.
#[pyfunction]
fn count_uncertainty(rel_density: f64, imaging: f64, half_length: f64, radius: f64, rel_pumping: f64) -> PyResult<f64> {
    let c = CrystalSpec { half_length, radius, ..CrystalSpec::reference() };
    crystal::count_uncertainty(rel_density, imaging, &c, rel_pumping).py()
}

#[pyfunction]
fn larmor_frequency(omega_x: f64, omega_z: f64) -> f64 {
    larmor::larmor_frequency(&FieldConfig::from_rates(omega_x, omega_z))
}

/// Larmor rate ω_z for a field B (T) and Landé factor.
#[pyfunction]
#[pyo3(signature = (b, g_factor = 0.8))]
fn larmor_rate(b: f64, g_factor: f64) -> f64 {
    larmor::gyromagnetic_ratio(g_factor) * b
}

/// Substate populations (m = −3/2 … +3/2) after free precession from |m⟩.
#[pyfunction]
#[pyo3(signature = (omega_x, omega_z, taus, m = 1.5))]
fn larmor_populations(omega_x: f64, omega_z: f64, taus: Vec<f64>, m: f64) -> PyResult<Vec<[f64; 4]>> {
    let s = SpinState::basis(m).py()?;
    let f = FieldConfig::from_rates(omega_x, omega_z);
    Ok(taus.iter().map(|&t| larmor::populations(&larmor::evolve(&s, &f, t))).collect())
}

/// Lorentzian dip fit of a detuning scan; returns center, hwhm, depth, offset.
#[pyfunction]
#[pyo3(signature = (x, y, sigma = None, counts = false))]
fn fit_dip<'py>(
    py: Python<'py>,
    x: Vec<f64>,
    y: Vec<f64>,
    sigma: Option<Vec<f64>>,
    counts: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let kind = if counts { TraceKind::Counts } else { TraceKind::Normalized };
    let mut t = ScanTrace::new(x, y, Axis::Detuning, kind).py()?;
    if let Some(s) = sigma {
        t = t.with_sigma(s).py()?;
    }
    to_python(py, &estimate::fit_lorentzian_dip(&t).py()?)
}

/// Joint fit of κ′(Δ) for g_N, γ′ and κ.
#[pyfunction]
#[pyo3(signature = (detunings, kappa_primes, sigma = None))]
fn fit_absorption<'py>(
    py: Python<'py>,
    detunings: Vec<f64>,
    kappa_primes: Vec<f64>,
    sigma: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let pts: Vec<(f64, f64)> = detunings.into_iter().zip(kappa_primes).collect();
    to_python(py, &estimate::fit_absorption(&pts, sigma.as_deref(), None).py()?)
}

/// Fits C(τ) (τ in s) with exponential and Gaussian envelopes.
#[pyfunction]
#[pyo3(signature = (taus, c, sigma = None))]
fn fit_larmor<'py>(py: Python<'py>, taus: Vec<f64>, c: Vec<f64>, sigma: Option<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    let pts: Vec<(f64, f64)> = taus.into_iter().zip(c).collect();
    to_python(py, &estimate::fit_larmor(&pts, sigma.as_deref()).py()?)
}

/// Runs a named synthetic measurement pipeline and returns its tables,
/// injected-versus-recovered comparisons and fit summaries.
#[pyfunction]
#[pyo3(signature = (name, seed = 0, noiseless = false))]
fn pipeline<'py>(py: Python<'py>, name: &str, seed: u64, noiseless: bool) -> PyResult<Bound<'py, PyAny>> {
    let name: PipelineName = name.parse().py()?;
    let params = PipelineParams { seed, noiseless, ..PipelineParams::default() };
    let out = py.detach(|| expsim::pipeline(name, &params)).py()?;
    let d = PyDict::new(py);
    d.set_item("name", name.as_str())?;
    d.set_item("seed", out.seed)?;
    d.set_item("comparisons", to_python(py, &out.comparisons)?)?;
    d.set_item("fits", to_python(py, &out.fits)?)?;
    d.set_item("warnings", out.warnings)?;
    let tables = PyDict::new(py);
    for t in &out.tables {
        let td = PyDict::new(py);
        td.set_item("headers", t.headers.clone())?;
        td.set_item("rows", t.rows.clone())?;
        tables.set_item(&t.name, td)?;
    }
    d.set_item("tables", tables)?;
    Ok(d.into_any())
}

/// Parses a run configuration file and returns it as a dict.
#[pyfunction]
#[pyo3(signature = (path, angular = false))]
fn load_config<'py>(py: Python<'py>, path: &str, angular: bool) -> PyResult<Bound<'py, PyAny>> {
    to_python(py, &ccqed::config::RunConfig::load(std::path::Path::new(path), angular).py()?)
}

#[pymodule]
fn pyccqed(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("CcqedError", py.get_type::<CcqedError>())?;
    m.add("DomainError", py.get_type::<DomainError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("NumericError", py.get_type::<NumericError>())?;
    m.add_class::<PyCavity>()?;
    m.add_class::<PySystem>()?;
    m.add_function(wrap_pyfunction!(mhz, m)?)?;
    m.add_function(wrap_pyfunction!(khz, m)?)?;
    m.add_function(wrap_pyfunction!(to_mhz, m)?)?;
    m.add_function(wrap_pyfunction!(to_khz, m)?)?;
    m.add_function(wrap_pyfunction!(parse_quantity, m)?)?;
    m.add_function(wrap_pyfunction!(effective_ion_count, m)?)?;
    m.add_function(wrap_pyfunction!(count_uncertainty, m)?)?;
    m.add_function(wrap_pyfunction!(larmor_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(larmor_rate, m)?)?;
    m.add_function(wrap_pyfunction!(larmor_populations, m)?)?;
    m.add_function(wrap_pyfunction!(fit_dip, m)?)?;
    m.add_function(wrap_pyfunction!(fit_absorption, m)?)?;
    m.add_function(wrap_pyfunction!(fit_larmor, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
