//! Steady-state and transient response of N two-level ions in one cavity mode.

mod cavity;
mod response;
mod transient;

pub use cavity::{
    derive_cavity_rates, single_ion_coupling, vacuum_field, CavityParams, CavityRates, TransitionParams,
    CA40_D32_P12_DIPOLE,
};
pub use response::{
    collective_coupling, cooperativity, effective_response, intracavity_amplitude, intracavity_photons,
    local_minima, rabi_spectrum, reflected_amplitude, reflectivity, reflectivity_at, ComplexAmplitude,
    CoupledResponse, CoupledSystem,
};
pub use transient::{transient_buildup, Transient, MAX_STEP_PRODUCT};
