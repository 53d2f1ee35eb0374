//! URDF files bundled with the crate.

use crate::urdf::{parse_urdf, KinematicChain};

/// Seven-joint serial arm built from boxes and cylinders; the default robot
/// for synthetic scenes.
pub const ARM7_URDF: &str = include_str!("../fixtures/arm7.urdf");

/// Fixed base plus a single revolute joint.
pub const TWO_LINK_URDF: &str = include_str!("../fixtures/two_link.urdf");

pub fn arm7() -> KinematicChain {
    parse_urdf(ARM7_URDF).expect("bundled arm7.urdf is valid")
}

pub fn two_link() -> KinematicChain {
    parse_urdf(TWO_LINK_URDF).expect("bundled two_link.urdf is valid")
}
