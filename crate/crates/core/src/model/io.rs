//! JSON model and constraint documents.
//!
//! Parents and constrained links may be given by index or by name; `null`
//! or `-1` means the world. Links are reindexed topologically on load, and
//! saving always writes integer parents in the stored order.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::{ConstraintSet, ConstraintSpec, Joint, JointKind, Link, RobotModel, STANDARD_GRAVITY};
use crate::error::{ModelError, Result};
use crate::spatial::Vec6;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum LinkRef {
    Index(i64),
    Name(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct JointDoc {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<[f64; 3]>,
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkDoc {
    name: String,
    #[serde(default)]
    parent: Option<LinkRef>,
    joint: JointDoc,
    mass: f64,
    #[serde(default)]
    com: [f64; 3],
    inertia6: [f64; 6],
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    links: Vec<LinkDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    floating_base: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gravity: Option<[f64; 3]>,
}

fn parse_joint(link: &str, doc: &JointDoc) -> Result<Joint, ModelError> {
    let invalid = |reason: String| ModelError::InvalidJoint { link: link.to_string(), reason };
    let xyz = Vector3::from(doc.xyz);
    let rpy = Vector3::from(doc.rpy);
    let axis = || doc.axis.map(Vector3::from).ok_or_else(|| invalid(format!("{} joint needs an axis", doc.kind)));
    match doc.kind.as_str() {
        "revolute" | "continuous" => Joint::revolute(axis()?, xyz, rpy).map_err(invalid),
        "prismatic" => Joint::prismatic(axis()?, xyz, rpy).map_err(invalid),
        "floating" => Ok(Joint::floating()),
        other => Err(ModelError::UnknownJointKind { link: link.to_string(), kind: other.to_string() }),
    }
}

/// Resolves each document parent to a document index, then orders links so
/// that parents precede children (stable with respect to document order).
fn topological_order(doc: &ModelDoc) -> Result<(Vec<Option<usize>>, Vec<usize>), ModelError> {
    let count = doc.links.len();
    let mut parents = Vec::with_capacity(count);
    for (i, l) in doc.links.iter().enumerate() {
        let p = match &l.parent {
            None => None,
            Some(LinkRef::Index(p)) if *p < 0 => None,
            Some(LinkRef::Index(p)) => {
                let p = *p as usize;
                if p >= i {
                    return Err(ModelError::TopologicalOrder { link: l.name.clone(), index: i, parent: p });
                }
                Some(p)
            }
            Some(LinkRef::Name(name)) => Some(
                doc.links
                    .iter()
                    .position(|x| &x.name == name)
                    .ok_or_else(|| ModelError::UnknownParent { link: l.name.clone(), parent: name.clone() })?,
            ),
        };
        parents.push(p);
    }
    // Depth-first emission with cycle detection (0 = new, 1 = open, 2 = done).
    let mut state = vec![0u8; count];
    let mut order = Vec::with_capacity(count);
    for start in 0..count {
        let mut path = Vec::new();
        let mut cur = Some(start);
        while let Some(c) = cur {
            match state[c] {
                2 => break,
                1 => return Err(ModelError::Cycle(doc.links[c].name.clone())),
                _ => {
                    state[c] = 1;
                    path.push(c);
                    cur = parents[c];
                }
            }
        }
        for &c in path.iter().rev() {
            state[c] = 2;
            order.push(c);
        }
    }
    Ok((parents, order))
}

/// Parses and validates a JSON model document.
pub fn load_model(text: &str) -> Result<RobotModel> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    if doc.links.is_empty() {
        return Err(ModelError::Empty.into());
    }
    let (parents, order) = topological_order(&doc)?;
    let mut new_index = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let mut links = Vec::with_capacity(order.len());
    for &old in &order {
        let l = &doc.links[old];
        let joint = parse_joint(&l.name, &l.joint)?;
        let parent = parents[old].map(|p| new_index[p]);
        links.push(Link::new(l.name.clone(), parent, joint, l.mass, Vector3::from(l.com), l.inertia6)?);
    }
    let gravity = doc.gravity.map_or(Vector3::new(0.0, 0.0, -STANDARD_GRAVITY), Vector3::from);
    let model = RobotModel::new(links, gravity)?;
    if let Some(flag) = doc.floating_base {
        if flag != model.is_floating() {
            let root = model.link(0).name.clone();
            return Err(ModelError::InvalidJoint {
                link: root,
                reason: format!("floating_base is {flag} but the root joint is {}", model.link(0).joint.kind.name()),
            }
            .into());
        }
    }
    Ok(model)
}

/// Serializes a model; `load_model(save_model(m)) == m`.
pub fn save_model(model: &RobotModel) -> String {
    let links = model
        .links()
        .iter()
        .map(|l| LinkDoc {
            name: l.name.clone(),
            parent: Some(LinkRef::Index(l.parent.map_or(-1, |p| p as i64))),
            joint: JointDoc {
                kind: l.joint.kind.name().to_string(),
                axis: match &l.joint.kind {
                    JointKind::Revolute { axis } | JointKind::Prismatic { axis } => Some((*axis).into()),
                    JointKind::Floating => None,
                },
                xyz: l.joint.origin_xyz.into(),
                rpy: l.joint.origin_rpy.into(),
            },
            mass: l.mass,
            com: l.com.into(),
            inertia6: l.inertia_com,
        })
        .collect();
    let doc = ModelDoc { links, floating_base: Some(model.is_floating()), gravity: Some(model.gravity().into()) };
    serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
}

#[derive(Debug, Serialize, Deserialize)]
struct ConstraintItem {
    link: LinkRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(default, rename = "K", skip_serializing_if = "Option::is_none")]
    rows: Option<Vec<[f64; 6]>>,
    #[serde(default, rename = "k", skip_serializing_if = "Option::is_none")]
    target: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    soft_weight: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    point: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor_rpy: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axes: Option<[bool; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConstraintDoc {
    constraints: Vec<ConstraintItem>,
}

fn resolve_link(model: &RobotModel, index: usize, r: &LinkRef) -> Result<usize, ModelError> {
    let bad = |reason: String| ModelError::InvalidConstraint { index, reason };
    match r {
        LinkRef::Index(i) if *i >= 0 && (*i as usize) < model.num_links() => Ok(*i as usize),
        LinkRef::Index(i) => Err(bad(format!("link index {i} out of range"))),
        LinkRef::Name(n) => model.find_link(n).ok_or_else(|| bad(format!("unknown link {n:?}"))),
    }
}

/// Parses a constraint file, including the anchored families used by the
/// simulator (`"kind": "world_point"` and `"kind": "world_weld"`).
pub fn load_constraint_specs(model: &RobotModel, text: &str) -> Result<Vec<ConstraintSpec>> {
    let doc: ConstraintDoc = serde_json::from_str(text)?;
    let mut out = Vec::with_capacity(doc.constraints.len());
    for (index, item) in doc.constraints.into_iter().enumerate() {
        let bad = |reason: &str| ModelError::InvalidConstraint { index, reason: reason.to_string() };
        let link = resolve_link(model, index, &item.link)?;
        let weight_vec = match &item.soft_weight {
            None => None,
            Some(serde_json::Value::Number(x)) => Some(vec![x.as_f64().unwrap_or(f64::NAN)]),
            Some(v) => Some(serde_json::from_value::<Vec<f64>>(v.clone())?),
        };
        let scalar_weight = || -> Result<Option<f64>, ModelError> {
            match &weight_vec {
                None => Ok(None),
                Some(w) if w.iter().all(|x| *x == w[0]) && !w.is_empty() => Ok(Some(w[0])),
                Some(_) => Err(bad("anchored constraints take a single soft weight")),
            }
        };
        let spec = match item.kind.as_deref().unwrap_or("rows") {
            "rows" => {
                let rows = item.rows.ok_or_else(|| bad("missing K"))?;
                let target = item.target.ok_or_else(|| bad("missing k"))?;
                ConstraintSpec::Rows {
                    link,
                    rows: rows.iter().map(|r| Vec6::from_column_slice(r)).collect(),
                    target,
                    soft_weight: weight_vec,
                }
            }
            "world_point" => ConstraintSpec::WorldPoint {
                link,
                point: Vector3::from(item.point.unwrap_or_default()),
                anchor: item.anchor.map(Vector3::from),
                axes: item.axes.unwrap_or([true; 3]),
                soft_weight: scalar_weight()?,
            },
            "world_weld" => ConstraintSpec::WorldWeld {
                link,
                anchor: item.anchor.map(|p| {
                    let rpy = item.anchor_rpy.unwrap_or_default();
                    let rot: Matrix3<f64> = Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]).into_inner();
                    (Vector3::from(p), rot)
                }),
                soft_weight: scalar_weight()?,
            },
            other => return Err(bad(&format!("unknown constraint kind {other:?}")).into()),
        };
        out.push(spec);
    }
    Ok(out)
}

/// Parses a constraint file made only of explicit rows.
pub fn load_constraints(model: &RobotModel, text: &str) -> Result<ConstraintSet> {
    let mut set = ConstraintSet::new();
    for (index, spec) in load_constraint_specs(model, text)?.into_iter().enumerate() {
        match spec {
            ConstraintSpec::Rows { link, rows, target, soft_weight } => set.push(link, rows, target, soft_weight)?,
            _ => {
                return Err(ModelError::InvalidConstraint {
                    index,
                    reason: "anchored constraints depend on the state; resolve them with the simulator".into(),
                }
                .into())
            }
        }
    }
    set.validate(model)?;
    Ok(set)
}

/// Serializes explicit constraint rows.
pub fn save_constraints(set: &ConstraintSet) -> String {
    let constraints = set
        .entries()
        .iter()
        .map(|e| ConstraintItem {
            link: LinkRef::Index(e.link as i64),
            kind: None,
            rows: Some(e.rows.iter().map(|r| [r[0], r[1], r[2], r[3], r[4], r[5]]).collect()),
            target: Some(e.target.clone()),
            soft_weight: e.soft_weight.as_ref().map(|w| serde_json::json!(w)),
            point: None,
            anchor: None,
            anchor_rpy: None,
            axes: None,
        })
        .collect();
    serde_json::to_string_pretty(&ConstraintDoc { constraints }).expect("constraint serialization cannot fail")
}
