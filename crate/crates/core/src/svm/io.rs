use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kernel::Kernel;
use super::model::SvmModel;
use super::multiclass::MulticlassModel;
use crate::error::{Error, Result};
use crate::vecmath::Matrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Either kind of trained classifier, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Binary(SvmModel),
    Multiclass(MulticlassModel),
}

impl AnyModel {
    pub fn dim(&self) -> usize {
        match self {
            AnyModel::Binary(m) => m.dim(),
            AnyModel::Multiclass(m) => m.dim(),
        }
    }

    pub fn classes(&self) -> Vec<String> {
        match self {
            AnyModel::Binary(m) => m.classes.to_vec(),
            AnyModel::Multiclass(m) => m.classes().to_vec(),
        }
    }

    pub fn kernel(&self) -> Kernel {
        match self {
            AnyModel::Binary(m) => m.kernel,
            AnyModel::Multiclass(m) => m.pairwise().next().map(|(_, _, p)| p.kernel).unwrap_or(Kernel::Linear),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        match self {
            AnyModel::Binary(m) => m.predict(x),
            AnyModel::Multiclass(m) => m.predict(x),
        }
    }
}

impl From<SvmModel> for AnyModel {
    fn from(m: SvmModel) -> Self {
        AnyModel::Binary(m)
    }
}

impl From<MulticlassModel> for AnyModel {
    fn from(m: MulticlassModel) -> Self {
        AnyModel::Multiclass(m)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    kind: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinaryFile {
    version: u32,
    kind: String,
    kernel: Kernel,
    classes: [String; 2],
    dim: usize,
    bias: f64,
    dual_coefs: Vec<f64>,
    support_vectors: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairFile {
    classes: [String; 2],
    bias: f64,
    dual_coefs: Vec<f64>,
    support_vectors: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MulticlassFile {
    version: u32,
    kind: String,
    kernel: Kernel,
    classes: Vec<String>,
    dim: usize,
    pairwise: Vec<PairFile>,
}

fn sv_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.rows().map(<[f64]>::to_vec).collect()
}

fn sv_matrix(rows: &[Vec<f64>], dim: usize) -> Result<Matrix> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, dim));
    }
    let m = Matrix::from_rows(rows)?;
    if m.ncols() != dim {
        return Err(Error::contract(format!(
            "support vectors have dimension {}, header says {dim}",
            m.ncols()
        )));
    }
    Ok(m)
}

pub fn model_to_json(model: &AnyModel) -> Result<String> {
    let text = match model {
        AnyModel::Binary(m) => serde_json::to_string(&BinaryFile {
            version: MODEL_FORMAT_VERSION,
            kind: "binary".into(),
            kernel: m.kernel,
            classes: m.classes.clone(),
            dim: m.dim(),
            bias: m.bias,
            dual_coefs: m.dual_coefs.clone(),
            support_vectors: sv_rows(&m.support_vectors),
        })?,
        AnyModel::Multiclass(m) => serde_json::to_string(&MulticlassFile {
            version: MODEL_FORMAT_VERSION,
            kind: "multiclass".into(),
            kernel: model.kernel(),
            classes: m.classes().to_vec(),
            dim: m.dim(),
            pairwise: m
                .pairwise()
                .map(|(_, _, p)| PairFile {
                    classes: p.classes.clone(),
                    bias: p.bias,
                    dual_coefs: p.dual_coefs.clone(),
                    support_vectors: sv_rows(&p.support_vectors),
                })
                .collect(),
        })?,
    };
    Ok(text)
}

pub fn model_from_json(text: &str) -> Result<AnyModel> {
    let bad = |e: Error| Error::parse("model file", e.to_string());
    let header: Header =
        serde_json::from_str(text).map_err(|e| Error::parse("model file", e.to_string()))?;
    if header.version != MODEL_FORMAT_VERSION {
        return Err(Error::parse(
            "model file",
            format!("unsupported version {} (expected {MODEL_FORMAT_VERSION})", header.version),
        ));
    }
    match header.kind.as_str() {
        "binary" => {
            let f: BinaryFile =
                serde_json::from_str(text).map_err(|e| Error::parse("model file", e.to_string()))?;
            let sv = sv_matrix(&f.support_vectors, f.dim).map_err(bad)?;
            SvmModel::new(f.kernel, sv, f.dual_coefs, f.bias, f.classes)
                .map(AnyModel::Binary)
                .map_err(bad)
        }
        "multiclass" => {
            let f: MulticlassFile =
                serde_json::from_str(text).map_err(|e| Error::parse("model file", e.to_string()))?;
            let models = f
                .pairwise
                .into_iter()
                .map(|p| {
                    let sv = sv_matrix(&p.support_vectors, f.dim)?;
                    SvmModel::new(f.kernel, sv, p.dual_coefs, p.bias, p.classes)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(bad)?;
            MulticlassModel::new(f.classes, models)
                .map(AnyModel::Multiclass)
                .map_err(bad)
        }
        other => Err(Error::parse("model file", format!("unknown model kind {other:?}"))),
    }
}

/// Writes `model` as JSON, replacing `path` atomically.
pub fn save_model(model: &AnyModel, path: &Path) -> Result<()> {
    let text = model_to_json(model)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    std::io::Write::write_all(&mut tmp, text.as_bytes()).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<AnyModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, SeededRng};
    use crate::svm::{train_binary, train_multiclass, Gamma, KernelSpec, TrainConfig};

    fn random_matrix(rng: &mut SeededRng, n: usize, d: usize) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let mut rng = SeededRng::new(11, Purpose::Synthetic, 0);
        let x = random_matrix(&mut rng, 30, 3);
        let y: Vec<i8> = x.rows().map(|r| if r[0] + 0.3 * r[1] > 0.0 { 1 } else { -1 }).collect();
        for spec in [KernelSpec::linear(), KernelSpec::rbf(Gamma::Scale), KernelSpec::poly(Gamma::Scale, 3, 1.0)] {
            let model = AnyModel::Binary(train_binary(&x, &y, &spec, &TrainConfig::default()).unwrap());
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.json");
            save_model(&model, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back, model);
            let (AnyModel::Binary(a), AnyModel::Binary(b)) = (&model, &back) else { panic!() };
            let probes = random_matrix(&mut rng, 50, 3);
            for p in probes.rows() {
                assert_eq!(
                    a.decision_function(p).unwrap().to_bits(),
                    b.decision_function(p).unwrap().to_bits()
                );
                assert_eq!(a.predict(p).unwrap(), b.predict(p).unwrap());
            }
        }
    }

    #[test]
    fn multiclass_round_trip_keeps_pairs() {
        let mut rng = SeededRng::new(5, Purpose::Synthetic, 0);
        let x = random_matrix(&mut rng, 40, 2);
        let labels: Vec<&str> = (0..40).map(|i| ["p", "q", "r", "s"][i % 4]).collect();
        let m = train_multiclass(&x, &labels, &KernelSpec::rbf(Gamma::Scale), &TrainConfig::default()).unwrap();
        let model = AnyModel::Multiclass(m);
        let back = model_from_json(&model_to_json(&model).unwrap()).unwrap();
        let AnyModel::Multiclass(mb) = &back else { panic!() };
        assert_eq!(mb.n_pairwise(), 6);
        for p in random_matrix(&mut rng, 50, 2).rows() {
            assert_eq!(model.predict(p).unwrap(), back.predict(p).unwrap());
        }
    }

    #[test]
    fn version_and_corruption_are_parse_errors() {
        let err = model_from_json(r#"{"version":2,"kind":"binary"}"#).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(matches!(model_from_json("{not json"), Err(Error::Parse { .. })));
        assert!(matches!(
            model_from_json(r#"{"version":1,"kind":"forest"}"#),
            Err(Error::Parse { .. })
        ));
        let ragged = r#"{"version":1,"kind":"binary","kernel":{"kind":"linear"},"classes":["a","b"],
            "dim":2,"bias":0.0,"dual_coefs":[1.0],"support_vectors":[[1.0]]}"#;
        assert!(matches!(model_from_json(ragged), Err(Error::Parse { .. })));
    }
}
