pub mod bandwidth;
pub mod bootstrap;
pub mod bounds;
pub mod condcdf;
pub mod data;
pub mod estimators;
pub mod error;
pub mod exec;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod locpoly;
mod moments;
pub mod params;
pub mod report;
pub mod simdata;
