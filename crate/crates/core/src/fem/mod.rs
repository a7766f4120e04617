//! Taylor-Hood finite elements: quadrature, basis functions, degrees of
//! freedom, operator assembly and norms.

pub mod assembly;
pub mod element;
pub mod norms;
pub mod quadrature;
pub mod space;

pub use assembly::{
    apply_fluctuation_convection, assemble_constant_operators, assemble_load,
    assemble_mean_convection, ConstantOperators,
};
pub use norms::{norms, pressure_l2, velocity_l2_inner, ExactVelocity, FieldNorms};
pub use space::{
    interpolate_pressure, interpolate_velocity, CoefficientVector, FunctionSpace, SpaceKind,
    VelocitySample,
};
