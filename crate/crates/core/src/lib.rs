//! CAN-bus intrusion detection over sliding windows of traffic statistics.
//!
//! A residual autoencoder is trained on baseline windows; windows whose
//! reconstruction error exceeds a calibrated threshold are flagged, and each
//! flagged window is explained by the nearest in-range input the detector
//! would accept.

pub mod can_io;
pub mod detector;
pub mod eval;
pub mod explainer;
pub mod preprocess;
pub mod rae;
pub mod windowing;
pub mod pipeline;
