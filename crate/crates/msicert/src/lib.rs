//! Solver backend, file formats, command-line front end and experiment
//! harness built on `msicert-core`.

// negated comparisons send NaN to the failing branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod commands;
pub mod config;
pub mod example;
pub mod harness;
pub mod io;
pub mod plot;
pub mod solver;
