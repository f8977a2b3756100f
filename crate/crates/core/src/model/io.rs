//! JSON model files.
//!
//! Layout (format version 1):
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "kind": "mtcrbm",
//!   "tasks": [{"name": "AC", "class_count": 4, "class_names": [...]}, ...],
//!   "normalization": {"<modality>": {"mean": [...], "std": [...]}},
//!   "layers": {"unimodal": {"<modality>": LAYER, ...}, "fusion": LAYER | null},
//!   "deep_heads": {"<task>": LAYER, ...} | null
//! }
//! LAYER = {visible_dim, hidden_dim, history_order, visible_kind,
//!          visible_bias, hidden_bias, visible_ar, hidden_ar, weights,
//!          heads: [{task, label_bias, weights}]}
//! ```
//!
//! Matrices are nested row-major lists. Floats are written in shortest
//! round-trip decimal form and parsed back exactly, so save→load is the identity.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::bundle::{Layers, ModelBundle, ModelKind};
use super::layer::{CrbmLayerParams, FusionModel, TaskHead, VisibleKind};
use super::task::TaskSpec;
use crate::error::{Error, Result};
use crate::normalize::Normalization;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BundleFile {
    format_version: u32,
    kind: ModelKind,
    tasks: Vec<TaskSpec>,
    normalization: BTreeMap<String, Normalization>,
    layers: LayersFile,
    deep_heads: Option<BTreeMap<String, LayerFile>>,
}

#[derive(Serialize, Deserialize)]
struct LayersFile {
    unimodal: BTreeMap<String, LayerFile>,
    fusion: Option<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    visible_dim: usize,
    hidden_dim: usize,
    history_order: usize,
    visible_kind: VisibleKind,
    visible_bias: Vec<f64>,
    hidden_bias: Vec<f64>,
    visible_ar: Vec<Vec<f64>>,
    hidden_ar: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    heads: Vec<HeadFile>,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    task: TaskSpec,
    label_bias: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn rows_to_matrix(rows: Vec<Vec<f64>>, shape: (usize, usize), block: &str) -> Result<Array2<f64>> {
    if rows.len() != shape.0 {
        return Err(Error::shape(
            block,
            format!("{} rows", shape.0),
            format!("{} rows", rows.len()),
        ));
    }
    let mut data = Vec::with_capacity(shape.0 * shape.1);
    for (i, r) in rows.into_iter().enumerate() {
        if r.len() != shape.1 {
            return Err(Error::shape(
                format!("{block} row {i}"),
                format!("{} columns", shape.1),
                format!("{} columns", r.len()),
            ));
        }
        data.extend(r);
    }
    Ok(Array2::from_shape_vec(shape, data).expect("checked shape"))
}

impl LayerFile {
    fn from_layer(l: &CrbmLayerParams) -> Self {
        LayerFile {
            visible_dim: l.visible_dim,
            hidden_dim: l.hidden_dim,
            history_order: l.history_order,
            visible_kind: l.visible_kind,
            visible_bias: l.visible_bias.to_vec(),
            hidden_bias: l.hidden_bias.to_vec(),
            visible_ar: matrix_to_rows(&l.visible_ar),
            hidden_ar: matrix_to_rows(&l.hidden_ar),
            weights: matrix_to_rows(&l.weights),
            heads: l
                .heads
                .iter()
                .map(|h| HeadFile {
                    task: h.task.clone(),
                    label_bias: h.label_bias.to_vec(),
                    weights: matrix_to_rows(&h.weights),
                })
                .collect(),
        }
    }

    fn into_layer(self, block: &str) -> Result<CrbmLayerParams> {
        let (d, h, n) = (self.visible_dim, self.hidden_dim, self.history_order);
        let hist = n * d;
        let heads = self
            .heads
            .into_iter()
            .map(|hf| {
                let y = hf.task.class_count;
                let hb = format!("{block}.heads[{}].weights", hf.task.name);
                Ok(TaskHead {
                    weights: rows_to_matrix(hf.weights, (h, y), &hb)?,
                    label_bias: Array1::from(hf.label_bias),
                    task: hf.task,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let layer = CrbmLayerParams {
            visible_dim: d,
            hidden_dim: h,
            history_order: n,
            visible_kind: self.visible_kind,
            visible_bias: Array1::from(self.visible_bias),
            hidden_bias: Array1::from(self.hidden_bias),
            visible_ar: rows_to_matrix(self.visible_ar, (hist, d), &format!("{block}.visible_ar"))?,
            hidden_ar: rows_to_matrix(self.hidden_ar, (hist, h), &format!("{block}.hidden_ar"))?,
            weights: rows_to_matrix(self.weights, (d, h), &format!("{block}.weights"))?,
            heads,
        };
        layer.validate(block)?;
        Ok(layer)
    }
}

/// Serializes a bundle to its JSON text.
pub fn to_json(bundle: &ModelBundle) -> String {
    let (unimodal, fusion) = match &bundle.layers {
        Layers::Single { modality, layer } => (
            [(modality.clone(), LayerFile::from_layer(layer))].into(),
            None,
        ),
        Layers::Fused(f) => (
            f.unimodal
                .iter()
                .map(|(k, l)| (k.clone(), LayerFile::from_layer(l)))
                .collect(),
            Some(LayerFile::from_layer(&f.fusion)),
        ),
    };
    let deep_heads = bundle.kind.is_deep().then(|| {
        bundle
            .deep_heads
            .iter()
            .map(|(k, l)| (k.clone(), LayerFile::from_layer(l)))
            .collect()
    });
    let file = BundleFile {
        format_version: FORMAT_VERSION,
        kind: bundle.kind,
        tasks: bundle.tasks.clone(),
        normalization: bundle.normalization.clone(),
        layers: LayersFile { unimodal, fusion },
        deep_heads,
    };
    serde_json::to_string(&file).expect("model serializes")
}

/// Parses and fully validates a bundle from JSON text.
pub fn from_json(text: &str, origin: &Path) -> Result<ModelBundle> {
    let json_err = |source| Error::Json {
        path: origin.to_path_buf(),
        source,
    };
    let probe: VersionProbe = serde_json::from_str(text).map_err(json_err)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: probe.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let file: BundleFile = serde_json::from_str(text).map_err(json_err)?;
    let kind = file.kind;
    let mismatch = |reason: &str| Error::KindMismatch {
        kind: kind.to_string(),
        reason: reason.to_string(),
    };

    let mut unimodal = BTreeMap::new();
    for (id, lf) in file.layers.unimodal {
        let layer = lf.into_layer(&format!("unimodal[{id}]"))?;
        unimodal.insert(id, layer);
    }
    let layers = match (file.layers.fusion, kind.is_multimodal()) {
        (Some(ff), true) => Layers::Fused(FusionModel::new(unimodal, ff.into_layer("fusion")?)?),
        (None, false) => {
            if unimodal.len() != 1 {
                return Err(mismatch("expected exactly one unimodal layer"));
            }
            let (modality, layer) = unimodal.into_iter().next().expect("one layer");
            Layers::Single { modality, layer }
        }
        (None, true) => return Err(mismatch("missing fusion layer")),
        (Some(_), false) => return Err(mismatch("unexpected fusion layer")),
    };
    let deep_heads = match (file.deep_heads, kind.is_deep()) {
        (Some(map), true) => map
            .into_iter()
            .map(|(k, lf)| {
                let block = format!("deep_heads[{k}]");
                Ok((k, lf.into_layer(&block)?))
            })
            .collect::<Result<BTreeMap<_, _>>>()?,
        (None, false) => BTreeMap::new(),
        (None, true) => return Err(mismatch("missing deep_heads")),
        (Some(_), false) => return Err(mismatch("unexpected deep_heads")),
    };
    let bundle = ModelBundle {
        kind,
        tasks: file.tasks,
        normalization: file.normalization,
        layers,
        deep_heads,
    };
    bundle.validate()?;
    Ok(bundle)
}

pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json(bundle)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::bundle::{new_model, ModelConfig};
    use serde_json::Value;

    fn tasks() -> Vec<TaskSpec> {
        vec![
            TaskSpec::with_class_names("AC", ["Walk", "Knock", "Lift", "Throw"]).unwrap(),
            TaskSpec::new("G", 2).unwrap(),
        ]
    }

    fn bundle(kind: ModelKind) -> ModelBundle {
        let mods: Vec<(String, usize)> = if kind.is_multimodal() {
            vec![("left".into(), 3), ("right".into(), 2)]
        } else {
            vec![("mocap".into(), 3)]
        };
        let mut b = new_model(&ModelConfig::new(kind, mods, 4, 2, tasks()), 5).unwrap();
        // non-trivial normalization and biases exercise every float path
        for n in b.normalization.values_mut() {
            n.mean = n.mean.iter().enumerate().map(|(i, _)| 0.1 * i as f64 - 1.0 / 3.0).collect();
            n.std = n.std.iter().map(|_| std::f64::consts::PI).collect();
        }
        b
    }

    #[test]
    fn round_trip_is_identity_for_every_kind() {
        for kind in ModelKind::ALL {
            let b = bundle(kind);
            let back = from_json(&to_json(&b), Path::new("mem")).unwrap();
            assert_eq!(back, b, "{kind}");
        }
    }

    #[test]
    fn top_level_keys_follow_the_schema() {
        let v: Value = serde_json::from_str(&to_json(&bundle(ModelKind::Mtcrbm))).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        for k in ["format_version", "kind", "tasks", "normalization", "layers", "deep_heads"] {
            assert!(keys.iter().any(|x| *x == k), "missing {k}");
        }
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["kind"], "mtcrbm");
    }

    #[test]
    fn wrong_weight_shape_names_block() {
        let mut v: Value = serde_json::from_str(&to_json(&bundle(ModelKind::Mtcrbm))).unwrap();
        v["layers"]["unimodal"]["mocap"]["weights"]
            .as_array_mut()
            .unwrap()
            .pop();
        let err = from_json(&v.to_string(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
        assert!(err.to_string().contains("unimodal[mocap].weights"), "{err}");
    }

    #[test]
    fn missing_heads_is_a_kind_mismatch() {
        let mut v: Value = serde_json::from_str(&to_json(&bundle(ModelKind::Mtcrbm))).unwrap();
        v["layers"]["unimodal"]["mocap"]["heads"] = Value::Array(vec![]);
        let err = from_json(&v.to_string(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::KindMismatch { .. }), "{err}");
    }

    #[test]
    fn future_version_is_rejected() {
        let mut v: Value = serde_json::from_str(&to_json(&bundle(ModelKind::Crbm))).unwrap();
        v["format_version"] = 2.into();
        assert!(matches!(
            from_json(&v.to_string(), Path::new("mem")),
            Err(Error::FormatVersion { found: 2, .. })
        ));
    }
}
