//! Checkpoints found in the model directory.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use xqmimic_core::model::{load, Model};
use xqmimic_core::MoveVocabulary;

pub const CHECKPOINT_EXTENSION: &str = "ckpt";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelDescriptor {
    pub id: String,
    pub elo_range: Option<String>,
    /// Structure variables that differ from the defaults, `key=value`.
    pub config: String,
    pub accuracy: Option<f64>,
    pub loadable: bool,
    pub error: Option<String>,
}

#[derive(Default)]
pub struct Registry {
    models: BTreeMap<String, Arc<Model>>,
    descriptors: Vec<ModelDescriptor>,
}

impl Registry {
    /// Loads every `*.ckpt` in `dir`; the file stem is the model id.
    /// Unreadable checkpoints are listed with the reason.
    pub fn scan(dir: &Path, vocab: &MoveVocabulary) -> std::io::Result<Registry> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == CHECKPOINT_EXTENSION))
            .collect();
        paths.sort();
        let mut registry = Registry::default();
        for path in paths {
            let id = path.file_stem().unwrap().to_string_lossy().into_owned();
            let loaded = std::fs::read(&path).map_err(|e| e.to_string()).and_then(|b| load(&b, vocab).map_err(|e| e.to_string()));
            match loaded {
                Ok((model, meta)) => {
                    registry.descriptors.push(ModelDescriptor {
                        id: id.clone(),
                        elo_range: meta.get("bin").cloned(),
                        config: summary(&model),
                        accuracy: meta.get("accuracy").and_then(|a| a.parse().ok()),
                        loadable: true,
                        error: None,
                    });
                    registry.models.insert(id, Arc::new(model));
                }
                Err(e) => registry.descriptors.push(ModelDescriptor {
                    id,
                    elo_range: None,
                    config: String::new(),
                    accuracy: None,
                    loadable: false,
                    error: Some(e),
                }),
            }
        }
        Ok(registry)
    }

    /// Adds an in-memory model.
    pub fn insert(&mut self, id: &str, model: Model, elo_range: Option<String>) {
        self.descriptors.retain(|d| d.id != id);
        self.descriptors.push(ModelDescriptor {
            id: id.to_string(),
            elo_range,
            config: summary(&model),
            accuracy: None,
            loadable: true,
            error: None,
        });
        self.models.insert(id.to_string(), Arc::new(model));
    }

    pub fn get(&self, id: &str) -> Option<Arc<Model>> {
        self.models.get(id).cloned()
    }

    pub fn descriptors(&self) -> &[ModelDescriptor] {
        &self.descriptors
    }
}

fn summary(model: &Model) -> String {
    let fields: Vec<String> = model
        .config
        .non_default_fields()
        .into_iter()
        .map(|f| format!("{f}={}", model.config.field(f).unwrap()))
        .collect();
    if fields.is_empty() {
        "defaults".into()
    } else {
        fields.join(" ")
    }
}
