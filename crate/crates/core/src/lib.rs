//! Milling chatter stability toolkit: analytical stability lobe diagrams,
//! inverse identification of in-process structural dynamics from boundary
//! records, and boundary sensitivity analysis.

pub mod model;
pub mod oracle;
pub mod zoa;

pub use model::{
    convert_units, flatten, BoundaryPoint, BoundarySamples, CuttingParams, DirectionalDynamics,
    FitReport, Mode, ModelError, ParameterVector, TieSpec, Unit,
};
pub use zoa::{build_sld, sample_at_speeds, FreqScan, SldCurve, SldSettings, ZoaError};
