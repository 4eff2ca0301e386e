//! Loaded neuron maps, one per trait.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use npti::corpus::Trait;
use npti::identifier::NeuronMap;
use npti::model::ToyModel;

#[derive(Debug, Clone, Default)]
pub struct MapRegistry {
    maps: BTreeMap<Trait, Arc<NeuronMap>>,
    sources: BTreeMap<Trait, PathBuf>,
}

impl MapRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, map: NeuronMap, source: PathBuf) -> Result<()> {
        let t = map.trait_;
        if let Some(prev) = self.sources.get(&t) {
            bail!(
                "two maps for trait {t}: {} and {}",
                prev.display(),
                source.display()
            );
        }
        self.maps.insert(t, Arc::new(map));
        self.sources.insert(t, source);
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let map = NeuronMap::load(path).with_context(|| format!("loading map {}", path.display()))?;
        self.insert(map, path.to_path_buf())
    }

    /// Every `*.json` file in `dir` that is a neuron map. Manifests and other
    /// JSON files are skipped.
    pub fn load_dir(&mut self, dir: &Path) -> Result<()> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading map directory {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .filter(|p| !p.to_string_lossy().ends_with(".manifest.json"))
            .collect();
        paths.sort();
        for p in paths {
            let text = fs::read_to_string(&p)?;
            let is_map = serde_json::from_str::<serde_json::Value>(&text)
                .ok()
                .and_then(|v| v.get("schema").and_then(|s| s.as_str()).map(|s| s == npti::identifier::MAP_SCHEMA))
                .unwrap_or(false);
            if is_map {
                self.load_file(&p)?;
            }
        }
        Ok(())
    }

    pub fn get(&self, t: Trait) -> Option<&Arc<NeuronMap>> {
        self.maps.get(&t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Trait, &Arc<NeuronMap>)> {
        self.maps.iter().map(|(t, m)| (*t, m))
    }

    pub fn maps(&self) -> &BTreeMap<Trait, Arc<NeuronMap>> {
        &self.maps
    }

    pub fn sources(&self) -> impl Iterator<Item = &PathBuf> {
        self.sources.values()
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Maps built from a different model are refused unless `force` is set,
    /// in which case a warning is returned for each.
    pub fn check_provenance(&self, model: &ToyModel, force: bool) -> Result<Vec<String>> {
        let fp = model.fingerprint();
        let mut warnings = Vec::new();
        for (t, map) in &self.maps {
            let stale = match &map.provenance.model {
                Some(m) => m != &fp,
                None => false,
            };
            if stale {
                let msg = format!(
                    "map for trait {t} ({}) was built from a different model",
                    self.sources[t].display()
                );
                if !force {
                    bail!("{msg}; pass --force to use it anyway");
                }
                warnings.push(msg);
            }
            let cfg = model.config();
            if let Some(e) = map.entries.iter().find(|e| !cfg.contains(e.id())) {
                bail!(
                    "map for trait {t} references neuron {} outside the model ({} layers x {} neurons)",
                    e.id(),
                    cfg.n_layers,
                    cfg.d_ff
                );
            }
        }
        Ok(warnings)
    }
}
