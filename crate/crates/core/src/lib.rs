//! Simulation, resistor sizing and HDL generation for digital-to-analog
//! converters built by shorting FPGA GPIO outputs together.
//!
//! Each GPIO's output stage is a CMOS buffer; tying `2^N - 1` of them to one
//! node turns the pull-up/pull-down balance into an analog level. The
//! modules here solve that network with a first-order transistor model, size
//! external linearization resistors, measure DNL/INL, replay switching
//! sequences and emit the Verilog and pin constraints for a build.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod device;
pub mod error;
pub mod explorer;
pub mod hdlgen;
pub mod metrics;
pub mod network;
pub mod sizing;
pub mod transient;

pub use device::{Device, DevicePair, MosfetParams, OperatingRegion, Polarity};
pub use error::{Error, Result};
pub use network::{
    solve_code, transfer_curve, DacConfig, Encoding, NodeSolution, ParallelAttach, Topology,
    TransferCurve,
};
