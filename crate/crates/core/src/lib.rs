//! Converts unstructured point clouds into XPBD-constrained tetrahedral
//! systems, simulates movement-dependent deformation driven by a skinned rig,
//! transfers the deformation to dense anisotropic Gaussian clouds, and
//! recovers physical parameters (per-point mass, per-edge compliance) from
//! reference trajectories.
//!
//! Modules follow the pipeline:
//! - [`geom`]: sampling, Delaunay tetrahedralization, k-NN filtering;
//! - [`xpbd`]: the compliant position-based solver;
//! - [`skinning`]: linear-blend-skinning driver for rigid points;
//! - [`transfer`]: deformation and rotation transfer to the dense cloud;
//! - [`sysid`]: recovery of masses and compliances from trajectories;
//! - [`posefit`]: rig pose/shape refinement against tracked data;
//! - [`metrics`]: PSNR/SSIM and their high-frequency variants;
//! - [`io`]: file formats shared by the command-line tools.

pub mod error;
pub mod geom;
pub mod io;
mod math;
pub mod metrics;
pub mod posefit;
pub mod seeding;
pub mod skinning;
pub mod sysid;
pub mod transfer;
pub mod xpbd;

pub use error::{Error, Result};
