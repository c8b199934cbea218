//! Exhaustive hyperparameter grids.

use std::collections::BTreeMap;
use std::path::Path;

use hici_core::model::HyperConfig;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

/// Default refusal threshold for the expanded cell count.
pub const DEFAULT_MAX_CELLS: usize = 512;

/// Value lists keyed by [`HyperConfig`] field name. Scalars count as
/// one-element lists.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrid {
    axes: BTreeMap<String, Vec<Value>>,
}

fn config_fields() -> Vec<String> {
    match serde_json::to_value(HyperConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => unreachable!("HyperConfig serializes to an object"),
    }
}

impl HyperGrid {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("grid file: {e}")))?;
        let Value::Object(map) = v else {
            return Err(CliError::Usage("grid file must hold a JSON object".into()));
        };
        let fields = config_fields();
        let mut axes = BTreeMap::new();
        for (key, val) in map {
            if !fields.contains(&key) {
                return Err(CliError::Usage(format!("grid file: unknown hyperparameter {key:?}")));
            }
            let list = match val {
                Value::Array(a) if a.is_empty() => {
                    return Err(CliError::Usage(format!("grid file: {key:?} has an empty value list")))
                }
                Value::Array(a) => a,
                scalar => vec![scalar],
            };
            axes.insert(key, list);
        }
        Ok(Self { axes })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Number of cells in the Cartesian expansion (saturating).
    pub fn size(&self) -> usize {
        self.axes.values().fold(1usize, |acc, v| acc.saturating_mul(v.len()))
    }

    /// Every cell applied on top of `base`, in lexicographic axis order
    /// (keys sorted, last key varying fastest). Fails when the expansion
    /// exceeds `max_cells`.
    pub fn expand(&self, base: &HyperConfig, max_cells: usize) -> CliResult<Vec<HyperConfig>> {
        let size = self.size();
        if size > max_cells {
            return Err(CliError::Usage(format!(
                "grid expands to {size} cells, above the cap of {max_cells}; raise --max-cells to run it"
            )));
        }
        let Value::Object(base) = serde_json::to_value(base).map_err(|e| CliError::Usage(e.to_string()))? else {
            unreachable!("HyperConfig serializes to an object")
        };
        let axes: Vec<(&String, &Vec<Value>)> = self.axes.iter().collect();
        let mut cells = Vec::with_capacity(size);
        for mut idx in 0..size {
            let mut obj: Map<String, Value> = base.clone();
            for (key, values) in axes.iter().rev() {
                obj.insert((*key).clone(), values[idx % values.len()].clone());
                idx /= values.len();
            }
            let config: HyperConfig = serde_json::from_value(Value::Object(obj))
                .map_err(|e| CliError::Usage(format!("grid cell {}: {e}", cells.len())))?;
            config
                .validate()
                .map_err(|e| CliError::Usage(format!("grid cell {}: {e}", cells.len())))?;
            cells.push(config);
        }
        Ok(cells)
    }
}

/// Reads a flat JSON config; missing keys take defaults, unknown keys fail.
pub fn load_config(path: &Path) -> CliResult<HyperConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let c: HyperConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(c)
}
