//! Compressible viscous fluid in a 1D container attached to a spring.
//!
//! The fluid velocity is split as `u = beta + v` with `beta` the container
//! velocity and `v` expanded in Dirichlet sine modes. Density lives on cell
//! centers. [`integrator::Simulator`] couples the two by fixed-point iteration.

pub mod basis;
pub mod continuity;
pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod harness;
pub mod integrator;
pub mod model;
pub mod momentum;
pub mod rigid;
pub mod sweep;

pub use basis::{assemble_mass, build_basis, Basis, MassOperator};
pub use continuity::{continuity_step, DensityGrid};
pub use error::{Error, Result};
pub use integrator::{run, step, RunMonitors, RunStatus, Simulator, StepReport, Trajectory, TrajectoryRecord};
pub use model::{pressure, stress_1d, EnergyLedgerRow, FluidParams, FluidState, ForcingSignal};
pub use rigid::{rigid_closed_form, rigid_ode, RigidParams};
