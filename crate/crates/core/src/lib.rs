pub mod error;
pub mod quadrature;
pub mod special;
pub mod geometry;
pub mod kernel;
pub mod grid;
pub mod laplacian;
pub mod linear;
pub mod nonlinearity;
pub mod nonlinear;
pub mod extension;
pub mod regularity;
pub mod plots;
pub mod acceptance;
pub mod config;
pub mod cli;
