//! Numerical laboratory for weighted inequalities of Fefferman-Stein type on
//! periodic grids: Orlicz maximal operators, critical-radius geometry of
//! Schrödinger potentials, Riesz-Schrödinger transforms and empirical
//! constant estimation.

pub mod error;
pub mod grid;
pub mod gridio;
pub mod young;
pub mod seed;
pub mod maximal;
pub mod critical;
pub mod kernel;
pub mod operators;
pub mod inequality;
pub mod config;
pub mod runner;

pub use error::{LabError, Result};
pub use grid::{ball_points, integrate, level_measure, lp_norm, Ball, Grid, GridFunction};
