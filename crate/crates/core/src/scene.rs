//! Geometric world model: object poses, axis-aligned boxes, the table and
//! the hand.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TABLE: &str = "table";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("object `{0}`: quaternion is not unit norm")]
    NonUnitQuaternion(String),
    #[error("object `{0}`: half extents must be positive")]
    NonPositiveExtent(String),
    #[error("hand holds unknown object `{0}`")]
    UnknownHeldObject(String),
    #[error("`{0}` is a reserved name")]
    ReservedName(String),
    #[error("workspace rectangle is empty")]
    EmptyWorkspace,
    #[error("cannot read scene {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid scene JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Workspace {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    /// Height of the table top (m).
    pub height: f64,
    pub workspace: Workspace,
}

impl Default for Table {
    fn default() -> Self {
        Table { height: 0.0, workspace: Workspace { min: [-0.4, -0.4], max: [0.4, 0.4] } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    /// Box center (m).
    pub position: [f64; 3],
    /// `[w, x, y, z]`.
    pub quaternion: [f64; 4],
    pub half_extents: [f64; 3],
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub letter: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub container: bool,
}

pub const IDENTITY: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

impl SceneObject {
    pub fn cube(kind: &str, position: [f64; 3], half: f64) -> Self {
        SceneObject {
            position,
            quaternion: IDENTITY,
            half_extents: [half; 3],
            kind: kind.to_string(),
            letter: None,
            container: false,
        }
    }

    /// Vertical half extent of the rotated box.
    pub fn half_height(&self) -> f64 {
        let [w, x, y, z] = self.quaternion;
        let rot = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)).to_rotation_matrix();
        let m = rot.matrix();
        (0..3).map(|j| m[(2, j)].abs() * self.half_extents[j]).sum()
    }

    pub fn top(&self) -> f64 {
        self.position[2] + self.half_height()
    }

    pub fn bottom(&self) -> f64 {
        self.position[2] - self.half_height()
    }

    /// Footprint rectangle `[min_x, min_y, max_x, max_y]`.
    pub fn footprint(&self) -> [f64; 4] {
        let [x, y, _] = self.position;
        let [hx, hy, _] = self.half_extents;
        [x - hx, y - hy, x + hx, y + hy]
    }
}

/// Full world snapshot. Objects are keyed by instance id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    #[serde(default)]
    pub table: Table,
    #[serde(default)]
    pub hand: Option<String>,
    pub objects: BTreeMap<String, SceneObject>,
}

impl SceneState {
    pub fn new(table: Table) -> Self {
        SceneState { table, hand: None, objects: BTreeMap::new() }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.table.workspace.min[0] >= self.table.workspace.max[0]
            || self.table.workspace.min[1] >= self.table.workspace.max[1]
        {
            return Err(SceneError::EmptyWorkspace);
        }
        for (id, o) in &self.objects {
            if matches!(id.as_str(), TABLE | "hand" | "air" | "nothing") {
                return Err(SceneError::ReservedName(id.clone()));
            }
            let norm = o.quaternion.iter().map(|q| q * q).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(SceneError::NonUnitQuaternion(id.clone()));
            }
            if o.half_extents.iter().any(|h| !(*h > 0.0)) {
                return Err(SceneError::NonPositiveExtent(id.clone()));
            }
        }
        if let Some(h) = &self.hand {
            if !self.objects.contains_key(h) {
                return Err(SceneError::UnknownHeldObject(h.clone()));
            }
        }
        Ok(())
    }

    pub fn instance_ids(&self) -> Vec<String> {
        self.objects.keys().cloned().collect()
    }

    pub fn is_held(&self, id: &str) -> bool {
        self.hand.as_deref() == Some(id)
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let scene: SceneState = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SceneError::Io { path: path.display().to_string(), source })?;
        SceneState::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization is infallible")
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scene serialization is infallible");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotated_box_height() {
        let mut o = SceneObject::cube("block", [0.0, 0.0, 0.025], 0.025);
        o.half_extents = [0.05, 0.025, 0.01];
        assert!((o.half_height() - 0.01).abs() < 1e-12);
        // quarter turn about y swaps the x and z extents
        let s = std::f64::consts::FRAC_1_SQRT_2;
        o.quaternion = [s, 0.0, s, 0.0];
        assert!((o.half_height() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let mut s = SceneState::new(Table::default());
        s.objects.insert("b1".into(), SceneObject::cube("block", [0.0, 0.0, 0.025], 0.025));
        assert!(s.validate().is_ok());
        s.objects.get_mut("b1").unwrap().quaternion = [1.0, 0.1, 0.0, 0.0];
        assert!(matches!(s.validate(), Err(SceneError::NonUnitQuaternion(_))));
        s.objects.get_mut("b1").unwrap().quaternion = IDENTITY;
        s.hand = Some("b9".into());
        assert!(matches!(s.validate(), Err(SceneError::UnknownHeldObject(_))));
        s.hand = None;
        s.objects.get_mut("b1").unwrap().half_extents[2] = 0.0;
        assert!(matches!(s.validate(), Err(SceneError::NonPositiveExtent(_))));
    }

    #[test]
    fn json_shape() {
        let mut s = SceneState::new(Table::default());
        let mut o = SceneObject::cube("letter block", [0.1, 0.0, 0.025], 0.025);
        o.letter = Some("S".into());
        s.objects.insert("block_s_1".into(), o);
        let text = s.to_json();
        assert!(text.contains("\"type\": \"letter block\""));
        assert!(text.contains("\"letter\": \"S\""));
        assert!(!text.contains("container"));
        assert_eq!(SceneState::from_json(&text).unwrap(), s);
    }
}
