//! Inelastic constitutive artificial neural networks for finite-strain
//! viscoelasticity.

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod datasets;
pub mod drivers;
pub mod energy_net;
pub mod error;
pub mod material;
pub mod potential_net;
pub mod scalar;
pub mod tensor3;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Sym3 = tensor3::SymTensor3<f64>;
pub type Mat3 = tensor3::Tensor3<f64>;
pub type EnergyParams = energy_net::EnergyParams<f64>;
pub type PotentialParams = potential_net::PotentialParams<f64>;
pub type NetworkModel<T = f64> =
    material::MaterialModel<energy_net::EnergyParams<T>, potential_net::PotentialParams<T>>;
pub type ReferenceModel = material::MaterialModel<energy_net::NeoHooke, potential_net::ReferencePotential>;
