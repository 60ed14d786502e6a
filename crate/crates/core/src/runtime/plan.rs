//! Stacked image planning: base OS, model environment, hub engine, and an
//! optional self-contained deployment layer.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::template::ENV_RECIPE;

pub const DEFAULT_REGISTRY: &str = "hubforge";

/// What a model's runtime environment is built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvManifest {
    pub base_image: String,
    /// Build instructions after the base, whitespace-normalized.
    pub requirements: Vec<String>,
}

impl EnvManifest {
    pub fn new(base_image: impl Into<String>, requirements: Vec<String>) -> Self {
        Self { base_image: base_image.into(), requirements }
    }

    /// Reads the first `FROM` as the base; every later instruction is a requirement.
    pub fn from_recipe(recipe: &str) -> Option<Self> {
        let mut base = None;
        let mut requirements = Vec::new();
        for line in recipe.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let normalized = line.split_whitespace().collect::<Vec<_>>().join(" ");
            match (&base, normalized.split_once(' ')) {
                (None, Some((kw, rest))) if kw.eq_ignore_ascii_case("FROM") => {
                    base = Some(rest.split_whitespace().next().unwrap_or(rest).to_string())
                }
                (None, _) => {}
                (Some(_), _) => requirements.push(normalized),
            }
        }
        Some(Self { base_image: base?, requirements })
    }

    /// Content identity shared by every model with the same environment.
    pub fn identity(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.base_image.as_bytes());
        for r in &self.requirements {
            h.update([0u8]);
            h.update(r.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    BaseOs,
    ModelEnv,
    HubEnv,
    Deployment,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::BaseOs => "base_os",
            LayerKind::ModelEnv => "model_env",
            LayerKind::HubEnv => "hub_env",
            LayerKind::Deployment => "deployment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildInputs {
    Pull(String),
    Files(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub kind: LayerKind,
    /// Image reference.
    pub name: String,
    pub parent: Option<String>,
    pub build_inputs: BuildInputs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePlan {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, Default)]
pub struct PlanOptions {
    pub registry: Option<String>,
    /// Template files to embed; `Some` adds the deployment layer.
    pub deployment_files: Option<Vec<String>>,
}

pub fn plan_images(cfg: &ModelConfig, env: &EnvManifest, opts: &PlanOptions) -> ImagePlan {
    let registry = opts.registry.as_deref().unwrap_or(DEFAULT_REGISTRY);
    let env_id = &env.identity()[..12];
    let mut layers = vec![
        Layer {
            kind: LayerKind::BaseOs,
            name: env.base_image.clone(),
            parent: None,
            build_inputs: BuildInputs::Pull(env.base_image.clone()),
        },
        Layer {
            kind: LayerKind::ModelEnv,
            name: format!("{registry}/env-{env_id}:{}", LayerKind::ModelEnv.as_str()),
            parent: None,
            build_inputs: BuildInputs::Files(vec![ENV_RECIPE.to_string()]),
        },
        Layer {
            kind: LayerKind::HubEnv,
            name: format!("{registry}/{}:{}", cfg.id, LayerKind::HubEnv.as_str()),
            parent: None,
            build_inputs: BuildInputs::Files(vec!["hubforge".to_string()]),
        },
    ];
    if let Some(files) = &opts.deployment_files {
        let mut files = files.clone();
        files.sort();
        layers.push(Layer {
            kind: LayerKind::Deployment,
            name: format!("{registry}/{}:{}", cfg.id, LayerKind::Deployment.as_str()),
            parent: None,
            build_inputs: BuildInputs::Files(files),
        });
    }
    for k in 1..layers.len() {
        layers[k].parent = Some(layers[k - 1].name.clone());
    }
    ImagePlan { layers }
}

impl ImagePlan {
    pub fn layer(&self, kind: LayerKind) -> Option<&Layer> {
        self.layers.iter().find(|l| l.kind == kind)
    }

    /// Image the model runs from: the deployment layer when present, else hub_env.
    pub fn run_image(&self) -> &str {
        &self.layers.last().expect("plans have at least three layers").name
    }

    pub fn refs(&self) -> Vec<String> {
        self.layers.iter().map(|l| l.name.clone()).collect()
    }

    /// Layer count, stack order, and parent chain invariants.
    pub fn check(&self) -> Result<(), String> {
        let expected = [LayerKind::BaseOs, LayerKind::ModelEnv, LayerKind::HubEnv, LayerKind::Deployment];
        if !(3..=4).contains(&self.layers.len()) {
            return Err(format!("plan has {} layers", self.layers.len()));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.kind != expected[k] {
                return Err(format!("layer {k} is {:?}, expected {:?}", layer.kind, expected[k]));
            }
            let parent = (k > 0).then(|| self.layers[k - 1].name.clone());
            if layer.parent != parent {
                return Err(format!("layer {k} parent is {:?}, expected {parent:?}", layer.parent));
            }
        }
        if let Some(dep) = self.layer(LayerKind::Deployment) {
            if !matches!(&dep.build_inputs, BuildInputs::Files(f) if !f.is_empty()) {
                return Err("deployment layer embeds no model source".into());
            }
        }
        Ok(())
    }
}
