//! Project configuration file (TOML). Every command flag has a counterpart
//! here; flags given on the command line win.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mirrorfield_core::geometry::CameraIntrinsics;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// Camera used when a design spec is not given explicitly.
    pub intrinsics: Option<CameraIntrinsics>,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub calibrate: CalibrateConfig,
    #[serde(default)]
    pub decode: DecodeConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
    #[serde(default)]
    pub export_obj: ExportObjConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub design_spec: Option<PathBuf>,
    pub design: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub frame: Option<PathBuf>,
    pub submap: Option<PathBuf>,
    pub light_field: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub alpha: Option<f64>,
    pub depths: Option<Vec<f64>>,
    pub iters: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    pub supersample: Option<usize>,
    pub stage: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub synth: Option<bool>,
    pub noise: Option<f64>,
    pub perturb_tilt_deg: Option<f64>,
    pub perturb_offset_mm: Option<f64>,
    pub joint_boards: Option<bool>,
    pub max_iterations: Option<usize>,
    pub stage: Option<String>,
    pub write_observations: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    pub tile: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesConfig {
    pub max_dist: Option<f64>,
    pub n_min: Option<usize>,
    pub match_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportObjConfig {
    pub stage: Option<String>,
}

impl ProjectConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Loads a config file. Relative paths are taken relative to the file,
    /// and every input path it names must exist.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        resolve(&mut cfg.output_dir);
        resolve(&mut cfg.calibrate.write_observations);
        let p = &mut cfg.paths;
        for slot in [
            &mut p.design_spec,
            &mut p.design,
            &mut p.scene,
            &mut p.observations,
            &mut p.calibration,
            &mut p.frame,
            &mut p.submap,
            &mut p.light_field,
        ] {
            resolve(slot);
            if let Some(q) = slot {
                if !q.exists() {
                    bail!(
                        "{} names {}, which does not exist",
                        path.display(),
                        q.display()
                    );
                }
            }
        }
        Ok(cfg)
    }

    /// `name` inside the configured output directory, or as given.
    pub fn output(&self, name: &str) -> PathBuf {
        match &self.output_dir {
            Some(d) => d.join(name),
            None => PathBuf::from(name),
        }
    }
}
