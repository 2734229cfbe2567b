//! Spectral-in-angle, finite-difference-in-(r,z) solver for the 3D
//! Boussinesq system under a lead-plus-harmonics Fourier ansatz.

pub mod assembly;
pub mod check;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod elliptic;
pub mod grid;
pub mod initial_data;
pub mod io;
pub mod nonlinear;
pub mod state;
pub mod timestepper;
