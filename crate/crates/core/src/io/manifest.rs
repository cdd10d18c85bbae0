//! Pose text files and JSON manifests for scenes and pinhole view sets.
//! Relative paths inside a manifest resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bev::CameraPose;
use crate::vocab::Vocabulary;
use crate::{Error, Result};

/// Twelve numbers, rotation row-major then translation, separated by
/// whitespace, commas or brackets.
pub fn parse_pose_text(text: &str) -> Result<CameraPose> {
    let values = text
        .split(|c: char| c.is_whitespace() || matches!(c, ',' | '[' | ']'))
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::parse(format!("pose value {t:?} is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != 12 {
        return Err(Error::parse(format!("pose needs 12 numbers, found {}", values.len())));
    }
    CameraPose::from_row_major(&values)
}

pub fn format_pose_text(pose: &CameraPose) -> String {
    let v = pose.to_row_major();
    format!(
        "{} {} {}\n{} {} {}\n{} {} {}\n{} {} {}\n",
        v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11]
    )
}

/// A bundled vocabulary name or an explicit class list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VocabularyRef {
    Builtin(String),
    Classes(Vec<String>),
}

impl VocabularyRef {
    pub fn resolve(&self) -> Result<Vocabulary> {
        match self {
            VocabularyRef::Builtin(name) => Vocabulary::builtin(name)
                .ok_or_else(|| Error::parse(format!("unknown vocabulary {name:?}"))),
            VocabularyRef::Classes(names) => Vocabulary::parse("custom", &names.join("\n")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFrame {
    pub image: PathBuf,
    pub depth: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bev: Option<PathBuf>,
    pub pose: Vec<f64>,
}

impl SceneFrame {
    pub fn camera_pose(&self) -> Result<CameraPose> {
        if self.pose.len() != 12 {
            return Err(Error::parse(format!("frame pose has {} numbers, expected 12", self.pose.len())));
        }
        CameraPose::from_row_major(&self.pose)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub vocabulary: VocabularyRef,
    pub frames: Vec<SceneFrame>,
}

impl SceneManifest {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let m: Self = serde_json::from_slice(bytes)?;
        for f in &m.frames {
            f.camera_pose()?;
        }
        m.vocabulary.resolve()?;
        Ok(m)
    }

    /// Rewrites relative frame paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for f in &mut self.frames {
            for p in [Some(&mut f.image), Some(&mut f.depth), f.semantic.as_mut(), f.bev.as_mut()]
                .into_iter()
                .flatten()
            {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadKind {
    Label,
    Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub path: PathBuf,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// View-from-panorama rotation, row-major.
    pub rotation: Vec<f64>,
    #[serde(default)]
    pub translation: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewsManifest {
    pub height: usize,
    pub width: usize,
    pub kind: PayloadKind,
    pub views: Vec<ViewEntry>,
}

impl ViewsManifest {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let m: Self = serde_json::from_slice(bytes)?;
        if m.height == 0 || m.width == 0 {
            return Err(Error::parse("output panorama dims must be positive"));
        }
        for v in &m.views {
            if v.rotation.len() != 9 {
                return Err(Error::parse(format!("{}: rotation needs 9 numbers", v.path.display())));
            }
            if v.translation.as_ref().is_some_and(|t| t.len() != 3) {
                return Err(Error::parse(format!("{}: translation needs 3 numbers", v.path.display())));
            }
        }
        Ok(m)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for v in &mut self.views {
            v.path = base.join(&v.path);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_text_forms() {
        let p = parse_pose_text("[1, 0, 0]\n[0 1 0]\n0,0,1\n0.5 -1 2").unwrap();
        assert_eq!(p.translation().x, 0.5);
        assert_eq!(parse_pose_text(&format_pose_text(&p)).unwrap(), p);
        assert!(parse_pose_text("1 0 0 0 1 0 0 0 1").is_err());
        assert!(parse_pose_text("1 0 0 0 1 0 0 0 2 0 0 0").is_err());
        assert!(parse_pose_text("a 0 0 0 1 0 0 0 1 0 0 0").is_err());
    }

    #[test]
    fn scene_manifest() {
        let json = br#"{"vocabulary":"matterport","frames":[
            {"image":"a.png","depth":"a.f32","pose":[1,0,0,0,1,0,0,0,1,0,0,0]}]}"#;
        let mut m = SceneManifest::parse(json).unwrap();
        m.resolve_paths(Path::new("/data"));
        assert_eq!(m.frames[0].image, PathBuf::from("/data/a.png"));
        assert_eq!(m.vocabulary.resolve().unwrap().len(), 20);
        let custom = br#"{"vocabulary":["x","y"],"frames":[]}"#;
        assert_eq!(SceneManifest::parse(custom).unwrap().vocabulary.resolve().unwrap().len(), 2);
        assert!(SceneManifest::parse(br#"{"vocabulary":"nope","frames":[]}"#).is_err());
        let bad_pose = br#"{"vocabulary":"stanford","frames":[{"image":"a","depth":"b","pose":[1]}]}"#;
        assert!(SceneManifest::parse(bad_pose).is_err());
    }

    #[test]
    fn views_manifest() {
        let json = br#"{"height":8,"width":16,"kind":"label","views":[
            {"path":"v.png","fx":4,"fy":4,"cx":3.5,"cy":3.5,"rotation":[-1,0,0,0,-1,0,0,0,1]}]}"#;
        let m = ViewsManifest::parse(json).unwrap();
        assert_eq!(m.kind, PayloadKind::Label);
        assert!(m.views[0].translation.is_none());
        assert!(ViewsManifest::parse(br#"{"height":0,"width":1,"kind":"rgb","views":[]}"#).is_err());
        assert!(ViewsManifest::parse(br#"{"height":1,"width":1,"kind":"depth","views":[]}"#).is_err());
    }
}
