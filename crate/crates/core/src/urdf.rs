//! URDF subset parser and serial kinematic chain model.
//!
//! Supported elements: `robot`, `link`, `joint` (`revolute`, `prismatic`,
//! `fixed`), `origin` (`xyz`, `rpy`), `axis`, `limit` (`lower`, `upper`) and
//! `visual`/`collision` geometry of type `box`, `cylinder` or `sphere`.
//! Anything else is skipped and reported in [`KinematicChain::warnings`].
//! `continuous`, `planar` and `floating` joints are rejected.
//!
//! The link tree must be a single serial chain. Every link gets exactly one
//! geometry primitive for bounding-box purposes: the first supported
//! collision primitive, else the first supported visual primitive, else a
//! sphere of radius [`DEFAULT_SPHERE_RADIUS`].

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{Unit, Vector3};
use thiserror::Error;

use crate::se3::{pose_from_xyz_rpy, Pose};

/// Radius of the sphere assigned to links that declare no usable geometry.
pub const DEFAULT_SPHERE_RADIUS: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UrdfError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("document has no <robot> root element")]
    MissingRobot,
    #[error("invalid `{attr}` on <{element}>: {reason}")]
    InvalidAttribute {
        element: String,
        attr: String,
        reason: String,
    },
    #[error("joint `{joint}` has unsupported type `{kind}`")]
    UnsupportedJointType { joint: String, kind: String },
    #[error("joint `{0}` has no <limit>")]
    MissingLimit(String),
    #[error("joint `{0}` has a zero-norm axis")]
    BadAxis(String),
    #[error("joint `{0}` has lower limit above upper limit")]
    InvertedLimit(String),
    #[error("link `{0}` has a non-positive geometry dimension")]
    BadGeometry(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("joint `{joint}` references undeclared link `{link}`")]
    UndeclaredLink { joint: String, link: String },
    #[error("kinematic tree is not a serial chain: {0}")]
    BranchingChain(String),
    #[error("chain has no movable joints")]
    NoMovableJoints,
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("link `{base}` is not an ancestor of `{tip}`")]
    NotAncestor { base: String, tip: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JointKind::Revolute => "revolute",
            JointKind::Prismatic => "prismatic",
            JointKind::Fixed => "fixed",
        }
    }
}

/// `<origin>` as written in the file. Keeping the textual parameters makes
/// parse/serialize round trips bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Origin {
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
}

impl Origin {
    pub fn identity() -> Self {
        Self {
            xyz: [0.0; 3],
            rpy: [0.0; 3],
        }
    }

    pub fn pose(&self) -> Pose {
        pose_from_xyz_rpy(self.xyz, self.rpy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimit {
    pub lower: f64,
    pub upper: f64,
}

impl JointLimit {
    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.lower, self.upper)
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    /// Joint frame relative to the parent link frame.
    pub origin: Origin,
    /// Unit axis in the joint frame; `None` for fixed joints.
    pub axis: Option<Unit<Vector3<f64>>>,
    /// Radians for revolute joints, meters for prismatic; `None` for fixed.
    pub limit: Option<JointLimit>,
    pub parent_link: String,
    pub child_link: String,
}

impl JointSpec {
    pub fn is_movable(&self) -> bool {
        self.kind != JointKind::Fixed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Box { size: Vector3<f64> },
    /// Axis along the local z axis, centered on the origin.
    Cylinder { radius: f64, length: f64 },
    Sphere { radius: f64 },
}

impl Primitive {
    fn dimensions_positive(&self) -> bool {
        match *self {
            Primitive::Box { size } => size.iter().all(|&d| d > 0.0 && d.is_finite()),
            Primitive::Cylinder { radius, length } => {
                radius > 0.0 && length > 0.0 && radius.is_finite() && length.is_finite()
            }
            Primitive::Sphere { radius } => radius > 0.0 && radius.is_finite(),
        }
    }
}

/// Which URDF element a link's bounding geometry was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometrySource {
    Collision,
    Visual,
    Default,
}

impl GeometrySource {
    pub fn as_str(self) -> &'static str {
        match self {
            GeometrySource::Collision => "collision",
            GeometrySource::Visual => "visual",
            GeometrySource::Default => "default",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkGeometry {
    pub link_name: String,
    pub primitive: Primitive,
    /// Primitive frame relative to the link frame.
    pub origin: Origin,
    pub source: GeometrySource,
}

/// Serial kinematic chain, root to tip.
///
/// `joints[i]` connects `links[i]` (parent) to `links[i + 1]` (child), and
/// `geometries[i]` belongs to `links[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub name: String,
    links: Vec<String>,
    joints: Vec<JointSpec>,
    geometries: Vec<LinkGeometry>,
    /// Placement of the root link in the world frame.
    base: Pose,
    origin_poses: Vec<Pose>,
    geometry_poses: Vec<Pose>,
    slots: Vec<Option<usize>>,
    dof: usize,
    pub warnings: Vec<String>,
}

impl KinematicChain {
    fn assemble(
        name: String,
        links: Vec<String>,
        joints: Vec<JointSpec>,
        geometries: Vec<LinkGeometry>,
        base: Pose,
        warnings: Vec<String>,
    ) -> Self {
        let mut dof = 0;
        let slots = joints
            .iter()
            .map(|j| {
                j.is_movable().then(|| {
                    dof += 1;
                    dof - 1
                })
            })
            .collect();
        let origin_poses = joints.iter().map(|j| j.origin.pose()).collect();
        let geometry_poses = geometries.iter().map(|g| g.origin.pose()).collect();
        Self {
            name,
            links,
            joints,
            geometries,
            base,
            origin_poses,
            geometry_poses,
            slots,
            dof,
            warnings,
        }
    }

    pub fn links(&self) -> &[String] {
        &self.links
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn geometries(&self) -> &[LinkGeometry] {
        &self.geometries
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Number of non-fixed joints.
    pub fn dof(&self) -> usize {
        self.dof
    }

    /// Joint frame of joint `i` relative to its parent link.
    pub fn joint_origin(&self, joint_index: usize) -> &Pose {
        &self.origin_poses[joint_index]
    }

    /// Primitive frame of link `i`'s geometry relative to the link frame.
    pub fn geometry_origin(&self, link_index: usize) -> &Pose {
        &self.geometry_poses[link_index]
    }

    pub fn base(&self) -> &Pose {
        &self.base
    }

    /// Configuration slot of joint `i`, `None` for fixed joints.
    pub fn slot(&self, joint_index: usize) -> Option<usize> {
        self.slots[joint_index]
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l == name)
    }

    pub fn geometry(&self, link: &str) -> Option<&LinkGeometry> {
        self.link_index(link).map(|i| &self.geometries[i])
    }

    pub fn tip_link(&self) -> &str {
        self.links.last().map(String::as_str).unwrap_or_default()
    }

    /// Limits of the movable joints in slot order.
    pub fn limits(&self) -> Vec<JointLimit> {
        self.joints.iter().filter_map(|j| j.limit).collect()
    }

    /// The same chain with its root placed at `base` in the world frame.
    pub fn placed(&self, base: Pose) -> Self {
        Self {
            base,
            ..self.clone()
        }
    }

    /// The geometry source used by each link, as `(link, source)` pairs.
    pub fn geometry_sources(&self) -> Vec<(&str, GeometrySource)> {
        self.geometries
            .iter()
            .map(|g| (g.link_name.as_str(), g.source))
            .collect()
    }
}

/// Parses a URDF document into a validated serial chain.
pub fn parse_urdf(xml_text: &str) -> Result<KinematicChain, UrdfError> {
    let doc = roxmltree::Document::parse(xml_text)
        .map_err(|e| UrdfError::MalformedXml(e.to_string()))?;
    let robot = doc.root_element();
    if robot.tag_name().name() != "robot" {
        return Err(UrdfError::MissingRobot);
    }
    let robot_name = robot.attribute("name").unwrap_or("robot").to_string();
    let mut warnings = Vec::new();

    let mut link_names: Vec<String> = Vec::new();
    let mut link_geometry: HashMap<String, LinkGeometry> = HashMap::new();
    let mut joints: Vec<JointSpec> = Vec::new();

    for node in robot.children().filter(|n| n.is_element()) {
        match node.tag_name().name() {
            "link" => {
                let name = required_attr(node, "name")?.to_string();
                if link_names.contains(&name) {
                    return Err(UrdfError::DuplicateName(name));
                }
                let geometry = parse_link_geometry(node, &name, &mut warnings)?;
                link_geometry.insert(name.clone(), geometry);
                link_names.push(name);
            }
            "joint" => {
                let joint = parse_joint(node, &mut warnings)?;
                if joints.iter().any(|j| j.name == joint.name) {
                    return Err(UrdfError::DuplicateName(joint.name));
                }
                joints.push(joint);
            }
            other => warnings.push(format!("ignored <{other}> element")),
        }
    }

    for j in &joints {
        for link in [&j.parent_link, &j.child_link] {
            if !link_names.contains(link) {
                return Err(UrdfError::UndeclaredLink {
                    joint: j.name.clone(),
                    link: link.clone(),
                });
            }
        }
    }

    let (links, ordered) = order_serial(&link_names, joints)?;
    let geometries = links
        .iter()
        .map(|l| link_geometry.remove(l).expect("every declared link has geometry"))
        .collect();
    let chain = KinematicChain::assemble(
        robot_name,
        links,
        ordered,
        geometries,
        Pose::identity(),
        warnings,
    );
    if chain.dof() == 0 {
        return Err(UrdfError::NoMovableJoints);
    }
    Ok(chain)
}

/// Orders joints root to tip, rejecting anything that is not one serial chain.
fn order_serial(
    link_names: &[String],
    joints: Vec<JointSpec>,
) -> Result<(Vec<String>, Vec<JointSpec>), UrdfError> {
    let mut by_parent: HashMap<&str, usize> = HashMap::new();
    let mut has_parent: HashMap<&str, &str> = HashMap::new();
    for (i, j) in joints.iter().enumerate() {
        if let Some(prev) = by_parent.insert(j.parent_link.as_str(), i) {
            return Err(UrdfError::BranchingChain(format!(
                "link `{}` is the parent of both `{}` and `{}`",
                j.parent_link, joints[prev].name, j.name
            )));
        }
        if has_parent
            .insert(j.child_link.as_str(), j.name.as_str())
            .is_some()
        {
            return Err(UrdfError::BranchingChain(format!(
                "link `{}` has more than one parent joint",
                j.child_link
            )));
        }
    }
    let roots: Vec<&String> = link_names
        .iter()
        .filter(|l| !has_parent.contains_key(l.as_str()))
        .collect();
    if roots.len() != 1 {
        return Err(UrdfError::BranchingChain(format!(
            "expected one root link, found {}",
            roots.len()
        )));
    }

    let mut links = vec![roots[0].clone()];
    let mut order = Vec::with_capacity(joints.len());
    while let Some(&ji) = by_parent.get(links.last().unwrap().as_str()) {
        if order.contains(&ji) {
            return Err(UrdfError::BranchingChain("cycle detected".into()));
        }
        order.push(ji);
        links.push(joints[ji].child_link.clone());
    }
    if links.len() != link_names.len() {
        return Err(UrdfError::BranchingChain(format!(
            "{} of {} links are not reachable from root `{}`",
            link_names.len() - links.len(),
            link_names.len(),
            links[0]
        )));
    }
    let mut slots: Vec<Option<JointSpec>> = joints.into_iter().map(Some).collect();
    let ordered = order.into_iter().map(|i| slots[i].take().unwrap()).collect();
    Ok((links, ordered))
}

fn required_attr<'a>(node: roxmltree::Node<'a, '_>, attr: &str) -> Result<&'a str, UrdfError> {
    node.attribute(attr)
        .ok_or_else(|| UrdfError::InvalidAttribute {
            element: node.tag_name().name().to_string(),
            attr: attr.to_string(),
            reason: "missing".to_string(),
        })
}

fn parse_f64(node: roxmltree::Node, attr: &str, text: &str) -> Result<f64, UrdfError> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| UrdfError::InvalidAttribute {
            element: node.tag_name().name().to_string(),
            attr: attr.to_string(),
            reason: format!("`{text}` is not a finite number"),
        })
}

fn parse_vec3(node: roxmltree::Node, attr: &str) -> Result<Option<[f64; 3]>, UrdfError> {
    let Some(text) = node.attribute(attr) else {
        return Ok(None);
    };
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(UrdfError::InvalidAttribute {
            element: node.tag_name().name().to_string(),
            attr: attr.to_string(),
            reason: format!("expected 3 values, got {}", parts.len()),
        });
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_f64(node, attr, p)?;
    }
    Ok(Some(out))
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children()
        .find(|n| n.is_element() && n.tag_name().name() == name)
}

fn parse_origin(node: roxmltree::Node) -> Result<Origin, UrdfError> {
    match child(node, "origin") {
        None => Ok(Origin::identity()),
        Some(o) => Ok(Origin {
            xyz: parse_vec3(o, "xyz")?.unwrap_or([0.0; 3]),
            rpy: parse_vec3(o, "rpy")?.unwrap_or([0.0; 3]),
        }),
    }
}

fn parse_joint(node: roxmltree::Node, warnings: &mut Vec<String>) -> Result<JointSpec, UrdfError> {
    let name = required_attr(node, "name")?.to_string();
    let kind_text = required_attr(node, "type")?;
    let kind = match kind_text {
        "revolute" => JointKind::Revolute,
        "prismatic" => JointKind::Prismatic,
        "fixed" => JointKind::Fixed,
        other => {
            return Err(UrdfError::UnsupportedJointType {
                joint: name,
                kind: other.to_string(),
            })
        }
    };
    let link_ref = |tag: &str| -> Result<String, UrdfError> {
        let n = child(node, tag).ok_or_else(|| UrdfError::InvalidAttribute {
            element: "joint".into(),
            attr: tag.into(),
            reason: format!("joint `{name}` has no <{tag}>"),
        })?;
        Ok(required_attr(n, "link")?.to_string())
    };
    let parent_link = link_ref("parent")?;
    let child_link = link_ref("child")?;
    let origin = parse_origin(node)?;

    for c in node.children().filter(|n| n.is_element()) {
        let tag = c.tag_name().name();
        if !matches!(tag, "parent" | "child" | "origin" | "axis" | "limit") {
            warnings.push(format!("joint `{name}`: ignored <{tag}>"));
        }
    }

    let (axis, limit) = if kind == JointKind::Fixed {
        (None, None)
    } else {
        let raw = match child(node, "axis") {
            Some(a) => parse_vec3(a, "xyz")?.unwrap_or([1.0, 0.0, 0.0]),
            None => [1.0, 0.0, 0.0],
        };
        let v = Vector3::from(raw);
        if !(v.norm() > 1e-12) {
            return Err(UrdfError::BadAxis(name));
        }
        let limit_node = child(node, "limit").ok_or_else(|| UrdfError::MissingLimit(name.clone()))?;
        let bound = |attr: &str| -> Result<f64, UrdfError> {
            match limit_node.attribute(attr) {
                Some(t) => parse_f64(limit_node, attr, t),
                None => Err(UrdfError::MissingLimit(name.clone())),
            }
        };
        let limit = JointLimit {
            lower: bound("lower")?,
            upper: bound("upper")?,
        };
        if limit.lower > limit.upper {
            return Err(UrdfError::InvertedLimit(name));
        }
        // Already-unit axes are kept verbatim so serialize/parse is a fixed point.
        let axis = if (v.norm() - 1.0).abs() <= 1e-12 {
            Unit::new_unchecked(v)
        } else {
            Unit::new_normalize(v)
        };
        (Some(axis), Some(limit))
    };

    Ok(JointSpec {
        name,
        kind,
        origin,
        axis,
        limit,
        parent_link,
        child_link,
    })
}

fn parse_primitive(
    geometry: roxmltree::Node,
    link: &str,
    warnings: &mut Vec<String>,
) -> Result<Option<Primitive>, UrdfError> {
    let Some(shape) = geometry.children().find(|n| n.is_element()) else {
        return Ok(None);
    };
    let prim = match shape.tag_name().name() {
        "box" => {
            let size = parse_vec3(shape, "size")?.ok_or_else(|| UrdfError::InvalidAttribute {
                element: "box".into(),
                attr: "size".into(),
                reason: "missing".into(),
            })?;
            Primitive::Box {
                size: Vector3::from(size),
            }
        }
        "cylinder" => Primitive::Cylinder {
            radius: parse_f64(shape, "radius", required_attr(shape, "radius")?)?,
            length: parse_f64(shape, "length", required_attr(shape, "length")?)?,
        },
        "sphere" => Primitive::Sphere {
            radius: parse_f64(shape, "radius", required_attr(shape, "radius")?)?,
        },
        other => {
            warnings.push(format!("link `{link}`: ignored <{other}> geometry"));
            return Ok(None);
        }
    };
    if !prim.dimensions_positive() {
        return Err(UrdfError::BadGeometry(link.to_string()));
    }
    Ok(Some(prim))
}

fn parse_link_geometry(
    node: roxmltree::Node,
    link: &str,
    warnings: &mut Vec<String>,
) -> Result<LinkGeometry, UrdfError> {
    let mut collision = None;
    let mut visual = None;
    for c in node.children().filter(|n| n.is_element()) {
        let tag = c.tag_name().name();
        let slot = match tag {
            "collision" => &mut collision,
            "visual" => &mut visual,
            _ => {
                warnings.push(format!("link `{link}`: ignored <{tag}>"));
                continue;
            }
        };
        let Some(g) = child(c, "geometry") else {
            continue;
        };
        if let Some(prim) = parse_primitive(g, link, warnings)? {
            if slot.is_none() {
                *slot = Some((prim, parse_origin(c)?));
            }
        }
    }
    let (primitive, origin, source) = match (collision, visual) {
        (Some((p, o)), _) => (p, o, GeometrySource::Collision),
        (None, Some((p, o))) => (p, o, GeometrySource::Visual),
        (None, None) => (
            Primitive::Sphere {
                radius: DEFAULT_SPHERE_RADIUS,
            },
            Origin::identity(),
            GeometrySource::Default,
        ),
    };
    Ok(LinkGeometry {
        link_name: link.to_string(),
        primitive,
        origin,
        source,
    })
}

/// Extracts the sub-chain running from `base` down to `tip`.
pub fn serial_subchain(
    chain: &KinematicChain,
    base: &str,
    tip: &str,
) -> Result<KinematicChain, UrdfError> {
    let b = chain
        .link_index(base)
        .ok_or_else(|| UrdfError::UnknownLink(base.to_string()))?;
    let t = chain
        .link_index(tip)
        .ok_or_else(|| UrdfError::UnknownLink(tip.to_string()))?;
    if b >= t {
        return Err(UrdfError::NotAncestor {
            base: base.to_string(),
            tip: tip.to_string(),
        });
    }
    Ok(KinematicChain::assemble(
        chain.name.clone(),
        chain.links[b..=t].to_vec(),
        chain.joints[b..t].to_vec(),
        chain.geometries[b..=t].to_vec(),
        Pose::identity(),
        Vec::new(),
    ))
}

/// Writes the chain back out as URDF using the supported subset. Default
/// geometries are omitted so that parsing the output reproduces the chain.
pub fn serialize_urdf(chain: &KinematicChain) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\"?>");
    let _ = writeln!(out, "<robot name=\"{}\">", chain.name);
    for g in &chain.geometries {
        if g.source == GeometrySource::Default {
            let _ = writeln!(out, "  <link name=\"{}\"/>", g.link_name);
            continue;
        }
        let tag = g.source.as_str();
        let _ = writeln!(out, "  <link name=\"{}\">", g.link_name);
        let _ = writeln!(out, "    <{tag}>");
        let _ = writeln!(out, "      {}", origin_xml(&g.origin));
        let shape = match g.primitive {
            Primitive::Box { size } => format!("<box size=\"{} {} {}\"/>", size.x, size.y, size.z),
            Primitive::Cylinder { radius, length } => {
                format!("<cylinder radius=\"{radius}\" length=\"{length}\"/>")
            }
            Primitive::Sphere { radius } => format!("<sphere radius=\"{radius}\"/>"),
        };
        let _ = writeln!(out, "      <geometry>{shape}</geometry>");
        let _ = writeln!(out, "    </{tag}>");
        let _ = writeln!(out, "  </link>");
    }
    for j in &chain.joints {
        let _ = writeln!(out, "  <joint name=\"{}\" type=\"{}\">", j.name, j.kind.as_str());
        let _ = writeln!(out, "    <parent link=\"{}\"/>", j.parent_link);
        let _ = writeln!(out, "    <child link=\"{}\"/>", j.child_link);
        let _ = writeln!(out, "    {}", origin_xml(&j.origin));
        if let Some(axis) = j.axis {
            let _ = writeln!(out, "    <axis xyz=\"{} {} {}\"/>", axis.x, axis.y, axis.z);
        }
        if let Some(l) = j.limit {
            let _ = writeln!(out, "    <limit lower=\"{}\" upper=\"{}\"/>", l.lower, l.upper);
        }
        let _ = writeln!(out, "  </joint>");
    }
    out.push_str("</robot>\n");
    out
}

fn origin_xml(o: &Origin) -> String {
    format!(
        "<origin xyz=\"{} {} {}\" rpy=\"{} {} {}\"/>",
        o.xyz[0], o.xyz[1], o.xyz[2], o.rpy[0], o.rpy[1], o.rpy[2]
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_link() -> &'static str {
        include_str!("../fixtures/two_link.urdf")
    }

    fn joint(name: &str, kind: &str, parent: &str, child: &str, extra: &str) -> String {
        format!(
            "<joint name=\"{name}\" type=\"{kind}\"><parent link=\"{parent}\"/><child link=\"{child}\"/>{extra}</joint>"
        )
    }

    #[test]
    fn minimal_two_link() {
        let chain = parse_urdf(two_link()).unwrap();
        assert_eq!(chain.dof(), 1);
        assert_eq!(chain.joints().len(), 2);
        assert_eq!(chain.links(), &["world", "base", "arm"]);
        let limit = chain.joints()[1].limit.unwrap();
        assert_eq!((limit.lower, limit.upper), (-3.14, 3.14));
        assert_eq!(chain.slot(0), None);
        assert_eq!(chain.slot(1), Some(0));
    }

    #[test]
    fn geometry_source_preference() {
        let chain = parse_urdf(two_link()).unwrap();
        let sources = chain.geometry_sources();
        assert_eq!(sources[0], ("world", GeometrySource::Default));
        assert_eq!(sources[1], ("base", GeometrySource::Collision));
        assert_eq!(sources[2], ("arm", GeometrySource::Visual));
        assert_eq!(
            chain.geometry("world").unwrap().primitive,
            Primitive::Sphere {
                radius: DEFAULT_SPHERE_RADIUS
            }
        );
    }

    #[test]
    fn zero_axis_is_rejected() {
        let xml = two_link().replace("<axis xyz=\"0 0 1\"/>", "<axis xyz=\"0 0 0\"/>");
        assert_eq!(parse_urdf(&xml), Err(UrdfError::BadAxis("shoulder".into())));
    }

    #[test]
    fn axis_is_normalized() {
        let xml = two_link().replace("<axis xyz=\"0 0 1\"/>", "<axis xyz=\"0 3 4\"/>");
        let chain = parse_urdf(&xml).unwrap();
        let axis = chain.joints()[1].axis.unwrap();
        assert!((axis.norm() - 1.0).abs() < 1e-12);
        assert!((axis.y - 0.6).abs() < 1e-12);
    }

    #[test]
    fn missing_limit() {
        let xml = two_link().replace(
            "<limit lower=\"-3.14\" upper=\"3.14\" effort=\"10\" velocity=\"1\"/>",
            "",
        );
        assert_eq!(parse_urdf(&xml), Err(UrdfError::MissingLimit("shoulder".into())));
    }

    #[test]
    fn inverted_limit() {
        let xml = two_link().replace("lower=\"-3.14\" upper=\"3.14\"", "lower=\"1\" upper=\"-1\"");
        assert_eq!(parse_urdf(&xml), Err(UrdfError::InvertedLimit("shoulder".into())));
    }

    #[test]
    fn malformed_xml() {
        assert!(matches!(
            parse_urdf("<robot name=\"x\"><link name=\"a\"></robot>"),
            Err(UrdfError::MalformedXml(_))
        ));
        assert_eq!(parse_urdf("<notrobot/>"), Err(UrdfError::MissingRobot));
    }

    #[test]
    fn continuous_joint_rejected() {
        let xml = two_link().replace("type=\"revolute\"", "type=\"continuous\"");
        assert!(matches!(
            parse_urdf(&xml),
            Err(UrdfError::UnsupportedJointType { .. })
        ));
    }

    #[test]
    fn branching_tree_rejected() {
        let lim = "<axis xyz=\"0 0 1\"/><limit lower=\"-1\" upper=\"1\"/>";
        let xml = format!(
            "<robot name=\"t\"><link name=\"a\"/><link name=\"b\"/><link name=\"c\"/>{}{}</robot>",
            joint("j1", "revolute", "a", "b", lim),
            joint("j2", "revolute", "a", "c", lim)
        );
        assert!(matches!(parse_urdf(&xml), Err(UrdfError::BranchingChain(_))));
    }

    #[test]
    fn disconnected_links_rejected() {
        let lim = "<axis xyz=\"0 0 1\"/><limit lower=\"-1\" upper=\"1\"/>";
        let xml = format!(
            "<robot name=\"t\"><link name=\"a\"/><link name=\"b\"/><link name=\"c\"/>{}</robot>",
            joint("j1", "revolute", "a", "b", lim)
        );
        assert!(matches!(parse_urdf(&xml), Err(UrdfError::BranchingChain(_))));
    }

    #[test]
    fn all_fixed_has_no_dof() {
        let xml = format!(
            "<robot name=\"t\"><link name=\"a\"/><link name=\"b\"/>{}</robot>",
            joint("j1", "fixed", "a", "b", "")
        );
        assert_eq!(parse_urdf(&xml), Err(UrdfError::NoMovableJoints));
    }

    #[test]
    fn bad_geometry_rejected() {
        let xml = two_link().replace("radius=\"0.05\"", "radius=\"0\"");
        assert_eq!(parse_urdf(&xml), Err(UrdfError::BadGeometry("arm".into())));
    }

    #[test]
    fn unsupported_tags_are_warned() {
        let xml = two_link().replace(
            "<link name=\"world\"/>",
            "<link name=\"world\"><inertial><mass value=\"1\"/></inertial></link><gazebo/>",
        );
        let chain = parse_urdf(&xml).unwrap();
        assert_eq!(chain.warnings.len(), 2);
    }

    #[test]
    fn joints_out_of_order_are_sorted() {
        let lim = "<axis xyz=\"0 0 1\"/><limit lower=\"-1\" upper=\"1\"/>";
        let xml = format!(
            "<robot name=\"t\"><link name=\"c\"/><link name=\"b\"/><link name=\"a\"/>{}{}</robot>",
            joint("j2", "revolute", "b", "c", lim),
            joint("j1", "prismatic", "a", "b", lim)
        );
        let chain = parse_urdf(&xml).unwrap();
        assert_eq!(chain.links(), &["a", "b", "c"]);
        assert_eq!(chain.joints()[0].name, "j1");
        assert_eq!(chain.joints()[0].kind, JointKind::Prismatic);
        assert_eq!(chain.dof(), 2);
    }

    #[test]
    fn subchain_identity_and_not_ancestor() {
        let chain = parse_urdf(two_link()).unwrap();
        let sub = serial_subchain(&chain, "world", "arm").unwrap();
        assert_eq!(sub.links(), chain.links());
        assert_eq!(sub.joints(), chain.joints());
        assert_eq!(sub.dof(), 1);
        assert_eq!(
            serial_subchain(&chain, "arm", "world"),
            Err(UrdfError::NotAncestor {
                base: "arm".into(),
                tip: "world".into()
            })
        );
        assert_eq!(
            serial_subchain(&chain, "nope", "arm"),
            Err(UrdfError::UnknownLink("nope".into()))
        );
    }

    #[test]
    fn serialize_round_trip() {
        let chain = parse_urdf(two_link()).unwrap();
        let again = parse_urdf(&serialize_urdf(&chain)).unwrap();
        assert_eq!(again.links(), chain.links());
        assert_eq!(again.joints(), chain.joints());
        assert_eq!(again.geometries(), chain.geometries());
    }
}
