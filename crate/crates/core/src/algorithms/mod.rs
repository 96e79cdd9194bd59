//! Server-side engines: dual averaging with reservoir-sampled output, the
//! EControl-DA loop, the proximal baselines and the stepsize presets.

mod reference;
mod runner;
mod server;
mod stepsize;

pub use reference::{reference_optimum, ReferenceSolution};
pub use runner::{
    composite_value, run, run_econtrol_da, run_prox_ef, run_prox_ef21, Algorithm, Execution,
    InitialStep, RunDebug, RunSettings, RunTrace,
};
pub use server::{final_output, initial_gradient_step, FrozenSample, Reservoir, ServerState};
pub use stepsize::{
    gamma_fixed, gamma_real, gamma_variable, GammaSchedule, StepsizeParams, BASELINE_GRID,
    DA_INV_GAMMA_GRID,
};
