//! Layered configuration: built-in defaults, then `--config`, then `--spec`,
//! then `--set` overrides. Keys are grouped into the sections below.

use std::path::Path;

use panobev::bev::BevGridSpec;
use panobev::datagen::SynthConfig;
use panobev::io::config::{from_config, to_config, KeyValueConfig};
use panobev::io::read_text;
use panobev::mapper::{MapperConfig, TrainConfig};
use panobev::Error;
use serde::Serialize;

pub const SECTIONS: [&str; 4] = ["bev", "model", "train", "synth"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub bev: BevGridSpec,
    pub model: MapperConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

impl Default for Settings {
    fn default() -> Self {
        let bev = BevGridSpec::default();
        Self {
            bev,
            model: MapperConfig { spec: bev, ..Default::default() },
            train: TrainConfig::default(),
            synth: SynthConfig { spec: bev, ..Default::default() },
        }
    }
}

/// Serializes `value` without its embedded grid spec, which lives in `bev.*`.
fn put_without_spec<T: Serialize>(prefix: &str, value: &T, out: &mut KeyValueConfig) -> panobev::Result<()> {
    let mut v = serde_json::to_value(value)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("spec");
    }
    to_config(prefix, &v, out)
}

impl Settings {
    pub fn to_config(&self) -> panobev::Result<KeyValueConfig> {
        let mut out = KeyValueConfig::default();
        to_config("bev", &self.bev, &mut out)?;
        put_without_spec("model", &self.model, &mut out)?;
        to_config("train", &self.train, &mut out)?;
        put_without_spec("synth", &self.synth, &mut out)?;
        Ok(out)
    }

    pub fn from_config(config: &KeyValueConfig) -> panobev::Result<Self> {
        for key in config.entries.keys() {
            let section = key.split('.').next().unwrap_or("");
            if !SECTIONS.contains(&section) || key.starts_with("model.spec") || key.starts_with("synth.spec") {
                return Err(Error::Parse(format!("unknown configuration key {key:?}")));
            }
        }
        let d = Settings::default();
        let bev: BevGridSpec = from_config(config, "bev", &d.bev)?;
        bev.validate()?;
        let mut model: MapperConfig = from_config(config, "model", &d.model)?;
        model.spec = bev;
        let train: TrainConfig = from_config(config, "train", &d.train)?;
        let mut synth: SynthConfig = from_config(config, "synth", &d.synth)?;
        synth.spec = bev;
        Ok(Self { bev, model, train, synth })
    }

    pub fn dump(&self) -> panobev::Result<String> {
        Ok(format!("# panobev configuration\n{}", self.to_config()?.to_text()))
    }
}

/// Reads the key-value text at `path`, or parses `value` itself when it is
/// an inline `key=value[,key=value...]` list.
pub fn inline_or_file(value: &str) -> panobev::Result<KeyValueConfig> {
    if value.contains('=') && !Path::new(value).exists() {
        KeyValueConfig::parse(&value.replace(',', "\n"))
    } else {
        KeyValueConfig::parse(&read_text(value)?)
    }
}

/// Prefixes bare keys of a grid-spec file with `bev.`.
pub fn as_bev_section(spec: KeyValueConfig) -> KeyValueConfig {
    let mut out = KeyValueConfig::default();
    for (k, v) in spec.entries {
        let key = if k.starts_with("bev.") { k } else { format!("bev.{k}") };
        out.entries.insert(key, v);
    }
    out
}

pub fn load(config: Option<&Path>, spec: Option<&str>, overrides: &[String]) -> panobev::Result<Settings> {
    let mut kv = match config {
        Some(p) => KeyValueConfig::parse(&read_text(p)?)?,
        None => KeyValueConfig::default(),
    };
    if let Some(s) = spec {
        kv.entries.extend(as_bev_section(inline_or_file(s)?).entries);
    }
    kv.apply_overrides(overrides.iter().map(String::as_str))?;
    Settings::from_config(&kv)
}
