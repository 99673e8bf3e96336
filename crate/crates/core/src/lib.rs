//! Steady 2D finite-element solver for laminar MHD mixed convection with
//! coupled heat and mass transfer in lid-driven enclosures.

pub mod geometry;
pub mod harness;
pub mod mesh;
pub mod assembly;
pub mod postprocess;
pub mod solver;
pub mod vtk;
