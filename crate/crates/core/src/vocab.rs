//! Class vocabularies and display palettes.

use std::collections::BTreeMap;

use crate::{Error, Result};

const MATTERPORT: &str = include_str!("../data/matterport20.txt");
const STANFORD: &str = include_str!("../data/stanford13.txt");

/// Ordered class names (line order = dense class id) with optional colors.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub name: String,
    pub classes: Vec<String>,
    /// Legend colors as 0-1 floats, parallel to `classes` when present.
    pub colors: Vec<Option<[f64; 3]>>,
}

impl Vocabulary {
    pub fn matterport() -> Self {
        Self::parse("matterport", MATTERPORT).expect("bundled vocabulary parses")
    }

    pub fn stanford() -> Self {
        Self::parse("stanford", STANFORD).expect("bundled vocabulary parses")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "matterport" | "matterport20" => Some(Self::matterport()),
            "stanford" | "stanford13" => Some(Self::stanford()),
            _ => None,
        }
    }

    /// One class per non-comment line: `name [r g b]`.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut classes = Vec::new();
        let mut colors = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let color = match fields.len() {
                1 => None,
                4 => {
                    let mut rgb = [0.0; 3];
                    for (c, f) in rgb.iter_mut().zip(&fields[1..]) {
                        *c = f
                            .parse::<f64>()
                            .ok()
                            .filter(|v| (0.0..=1.0).contains(v))
                            .ok_or_else(|| Error::parse(format!("line {}: bad color {f:?}", lineno + 1)))?;
                    }
                    Some(rgb)
                }
                _ => {
                    return Err(Error::parse(format!(
                        "line {}: expected `name` or `name r g b`",
                        lineno + 1
                    )))
                }
            };
            classes.push(fields[0].to_string());
            colors.push(color);
        }
        if classes.is_empty() {
            return Err(Error::parse("vocabulary has no classes"));
        }
        if classes.len() > 255 {
            return Err(Error::parse("at most 255 classes fit an 8-bit label raster"));
        }
        Ok(Self {
            name: name.to_string(),
            classes,
            colors,
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn id(&self, class: &str) -> Option<u8> {
        self.classes.iter().position(|c| c == class).map(|k| k as u8)
    }

    /// Palette from the legend colors; classes without a color are skipped.
    pub fn palette(&self) -> Palette {
        let colors = self
            .colors
            .iter()
            .enumerate()
            .filter_map(|(k, c)| c.map(|c| (k as u8, c.map(|v| (v * 255.0).round() as u8))))
            .collect();
        Palette { colors }
    }
}

/// Class id → RGB. Ids without an entry (including void) render black.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Palette {
    pub colors: BTreeMap<u8, [u8; 3]>,
}

impl Palette {
    pub fn color(&self, id: u8) -> [u8; 3] {
        self.colors.get(&id).copied().unwrap_or([0, 0, 0])
    }

    /// Each line: `id r g b [name]` with 0-255 integer channels.
    pub fn parse(text: &str) -> Result<Self> {
        let mut colors = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|f| !f.is_empty()).collect();
            if fields.len() < 4 {
                return Err(Error::parse(format!("line {}: expected `id r g b [name]`", lineno + 1)));
            }
            let num = |s: &str| {
                s.parse::<u8>()
                    .map_err(|_| Error::parse(format!("line {}: {s:?} is not in 0..=255", lineno + 1)))
            };
            let id = num(fields[0])?;
            let rgb = [num(fields[1])?, num(fields[2])?, num(fields[3])?];
            if colors.insert(id, rgb).is_some() {
                return Err(Error::parse(format!("line {}: duplicate id {id}", lineno + 1)));
            }
        }
        let p = Self { colors };
        p.check_injective()?;
        Ok(p)
    }

    pub fn to_text(&self) -> String {
        self.colors
            .iter()
            .map(|(id, [r, g, b])| format!("{id} {r} {g} {b}\n"))
            .collect()
    }

    pub fn check_injective(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (id, rgb) in &self.colors {
            if let Some(prev) = seen.insert(*rgb, *id) {
                return Err(Error::parse(format!("ids {prev} and {id} share color {rgb:?}")));
            }
        }
        Ok(())
    }
}
