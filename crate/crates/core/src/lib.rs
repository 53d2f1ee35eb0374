//! Embodiment-centric point flow for robot manipulation.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! * [`urdf`] parses a serial arm description,
//! * [`kinematics`] provides forward kinematics, Jacobians and damped
//!   least-squares inverse kinematics on top of [`se3`] poses,
//! * [`camera`] holds the pinhole model, depth maps and joint bounding boxes,
//! * [`diffusion`] trains and samples a toy flow + goal-image diffusion model,
//! * [`solver`] turns a point flow into an end-effector pose trajectory,
//! * [`oracle`] renders synthetic scenes with known ground truth.

pub mod camera;
pub mod diffusion;
pub mod fixtures;
pub mod kinematics;
pub mod oracle;
pub mod se3;
pub mod solver;
pub mod urdf;
