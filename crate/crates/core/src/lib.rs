//! Memristor-backed spiking network simulator for sentence classification.
//!
//! The math modules are generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the scalar to `f64`, which the pipelines use.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crossbar;
pub mod device_model;
pub mod harness;
pub mod netcore;
pub mod pipelines;
pub mod scalar;
pub mod spiking;
pub mod textdata;

pub use scalar::Scalar;

pub type DeviceParams = device_model::DeviceParams<f64>;
pub type DeviceState = device_model::DeviceState<f64>;
pub type PulseSpec = device_model::PulseSpec<f64>;
pub type CrossbarArray = crossbar::CrossbarArray<f64>;
pub type ProgramPolicy = crossbar::ProgramPolicy<f64>;
pub type ProgramReport = crossbar::ProgramReport<f64>;
pub type ResistanceBounds = crossbar::ResistanceBounds<f64>;
pub type LifNeuronState = spiking::LifNeuronState<f64>;
pub type Inference = spiking::Inference<f64>;
pub type NetworkParams = netcore::NetworkParams<f64>;
pub type Adagrad = netcore::Adagrad<f64>;

/// Any error the library reports.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Device(#[from] device_model::ParamError),
    #[error(transparent)]
    Crossbar(#[from] crossbar::CrossbarError),
    #[error(transparent)]
    Spiking(#[from] spiking::SpikingError),
    #[error(transparent)]
    Net(#[from] netcore::NetError),
    #[error(transparent)]
    Data(#[from] textdata::DataError),
    #[error(transparent)]
    Pipeline(#[from] pipelines::PipelineError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
}
