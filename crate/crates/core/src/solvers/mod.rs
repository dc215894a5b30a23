//! Characteristic-mapping reference solvers and initial conditions.

mod cmm;
mod euler;
mod initial;
mod trajectory;
mod velocity;

pub(crate) use cmm::pull_back;
pub use cmm::{advect_cmm, integrate_backward_map};
pub use euler::{biot_savart, euler_cmm, vorticity_sampler};
pub use initial::{random_vorticity, slotted_cylinder, ExpressionField, SlottedCylinder};
pub use trajectory::{Trajectory, TrajectoryMeta};
pub use velocity::{
    divergence_norm, AnalyticVelocity, ConstantVelocity, GriddedVelocity, VelocitySampler,
};
