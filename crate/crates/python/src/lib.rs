//! Python bindings: corpus loading and statistics, the metrics, the
//! boundary loss, SMOTE, the three trained models and the command line.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use spc_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Missing(_) => PyKeyError::new_err(e.to_string()),
        Error::Shape(_) | Error::Checkpoint(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyo3::pymodule]
mod spc {
    use super::*;

    use spc_core::corpus::{self, PersonaType, Split};
    use spc_core::discovery::{self as disc, FeaturePoint};
    use spc_core::metrics;
    use spc_core::neural::Tensor;
    use spc_core::typeid::{self, BoundaryModel};
    use spc_core::valueex;
    use spc_core::{Dialogue, TypedInstance};

    /// A loaded corpus.
    #[pyclass]
    pub struct Corpus {
        inner: spc_core::Corpus,
    }

    impl Corpus {
        fn dialogue(&self, id: &str) -> PyResult<&Dialogue> {
            self.inner
                .dialogues()
                .find(|d| d.id == id)
                .ok_or_else(|| PyKeyError::new_err(format!("no dialogue {id:?}")))
        }

        fn instance(&self, id: &str, index: usize) -> PyResult<(TypedInstance, &Dialogue)> {
            let d = self.dialogue(id)?;
            if index >= d.len() {
                return Err(PyValueError::new_err(format!("dialogue {id} has {} utterances", d.len())));
            }
            Ok((TypedInstance::from_dialogue(d, index), d))
        }
    }

    #[pymethods]
    impl Corpus {
        /// Load and validate a JSONL corpus.
        #[staticmethod]
        fn load(path: PathBuf) -> PyResult<Self> {
            Ok(Self {
                inner: corpus::load_corpus(&path).map_err(to_py)?,
            })
        }

        fn __len__(&self) -> usize {
            self.inner.len()
        }

        /// Dialogue ids of one split.
        fn dialogue_ids(&self, split: &str) -> PyResult<Vec<String>> {
            let split: Split = split.parse().map_err(to_py)?;
            Ok(self.inner.split(split).iter().map(|d| d.id.clone()).collect())
        }

        /// Per-split statistics as a dict.
        fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
            json_to_py(py, &corpus::corpus_stats(&self.inner))
        }

        /// Rule violations, one message per entry.
        fn validate(&self) -> Vec<String> {
            corpus::validate_annotations(&self.inner)
                .iter()
                .map(ToString::to_string)
                .collect()
        }
    }

    #[pyfunction]
    fn krippendorff_alpha(annotations: PathBuf) -> PyResult<f64> {
        let set = corpus::load_annotations(&annotations).map_err(to_py)?;
        corpus::krippendorff_alpha(&set).map_err(to_py)
    }

    #[pyfunction]
    fn rouge_n(candidate: &str, reference: &str, n: usize) -> PyResult<f64> {
        metrics::rouge_n(candidate, reference, n).map_err(to_py)
    }

    #[pyfunction]
    fn bleu(candidate: &str, reference: &str, max_n: usize) -> PyResult<f64> {
        metrics::bleu(candidate, reference, max_n).map_err(to_py)
    }

    /// `(precision, recall, f1)` of the positive class.
    #[pyfunction]
    fn prf1(preds: Vec<bool>, golds: Vec<bool>) -> PyResult<(f64, f64, f64)> {
        let p = metrics::prf1(&preds, &golds).map_err(to_py)?;
        Ok((p.precision, p.recall, p.f1))
    }

    #[pyfunction]
    fn weighted_f1(preds: Vec<String>, golds: Vec<String>) -> PyResult<f64> {
        metrics::weighted_f1(&preds, &golds).map_err(to_py)
    }

    fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
        Tensor::from_rows(&rows).map_err(to_py)
    }

    /// Mean distance of each point from its class boundary.
    #[pyfunction]
    fn boundary_loss(z: Vec<Vec<f64>>, labels: Vec<usize>, centroids: Vec<Vec<f64>>, raw_radii: Vec<f64>) -> PyResult<f64> {
        let b = BoundaryModel::new(matrix(centroids)?, Tensor::vector(raw_radii)).map_err(to_py)?;
        typeid::boundary_loss(&matrix(z)?, &labels, &b).map_err(to_py)
    }

    /// Oversample the minority label; returns `(points, labels)` with the
    /// synthetic points appended.
    #[pyfunction]
    #[pyo3(signature = (points, labels, k = 5, ratio = 1.0, seed = 0))]
    fn smote(points: Vec<Vec<f64>>, labels: Vec<u8>, k: usize, ratio: f64, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<u8>)> {
        if points.len() != labels.len() {
            return Err(PyValueError::new_err("points and labels differ in length"));
        }
        let input: Vec<FeaturePoint> = points.into_iter().zip(labels).map(|(v, l)| FeaturePoint::new(v, l)).collect();
        let out = disc::smote_upsample(&input, k, ratio, seed).map_err(to_py)?;
        Ok(out.points.into_iter().map(|p| (p.vector, p.label)).unzip())
    }

    #[pyclass]
    pub struct DiscoveryModel {
        inner: disc::DiscoveryModel,
    }

    #[pymethods]
    impl DiscoveryModel {
        #[staticmethod]
        fn load(path: PathBuf) -> PyResult<Self> {
            Ok(Self {
                inner: disc::DiscoveryModel::load(&path).map_err(to_py)?,
            })
        }

        #[getter]
        fn decision_threshold(&self) -> f64 {
            self.inner.decision_threshold()
        }

        /// Persona probability per utterance of one dialogue.
        fn probabilities(&self, corpus: &Corpus, dialogue_id: &str) -> PyResult<Vec<f64>> {
            disc::discovery_forward(&self.inner, corpus.dialogue(dialogue_id)?).map_err(to_py)
        }

        fn predict(&self, corpus: &Corpus, dialogue_id: &str) -> PyResult<Vec<bool>> {
            Ok(disc::predict_discovery(&self.inner, corpus.dialogue(dialogue_id)?)
                .map_err(to_py)?
                .positive)
        }
    }

    #[pyclass]
    pub struct TypeIdModel {
        inner: typeid::TypeIdModel,
    }

    #[pymethods]
    impl TypeIdModel {
        #[staticmethod]
        fn load(path: PathBuf) -> PyResult<Self> {
            Ok(Self {
                inner: typeid::TypeIdModel::load(&path).map_err(to_py)?,
            })
        }

        /// Persona type of utterance `index`, given everything before it.
        fn classify(&self, corpus: &Corpus, dialogue_id: &str, index: usize) -> PyResult<String> {
            let (instance, _) = corpus.instance(dialogue_id, index)?;
            Ok(typeid::classify(&self.inner, &instance).map_err(to_py)?.to_string())
        }

        /// The fused representation the boundaries are drawn around.
        fn representation(&self, corpus: &Corpus, dialogue_id: &str, index: usize) -> PyResult<Vec<f64>> {
            let (instance, _) = corpus.instance(dialogue_id, index)?;
            let z = typeid::typeid_representation(&self.inner, self.inner.context_encoder(), &instance).map_err(to_py)?;
            Ok(z.into_data())
        }
    }

    #[pyclass]
    pub struct ValueExModel {
        inner: valueex::ValueExModel,
    }

    #[pymethods]
    impl ValueExModel {
        #[staticmethod]
        fn load(path: PathBuf) -> PyResult<Self> {
            Ok(Self {
                inner: valueex::ValueExModel::load(&path).map_err(to_py)?,
            })
        }

        /// Generate the persona value of utterance `index`.
        #[pyo3(signature = (corpus, dialogue_id, index, persona_type = None))]
        fn generate(&self, corpus: &Corpus, dialogue_id: &str, index: usize, persona_type: Option<&str>) -> PyResult<String> {
            let (instance, dialogue) = corpus.instance(dialogue_id, index)?;
            let t = persona_type.map(str::parse::<PersonaType>).transpose().map_err(to_py)?;
            self.inner.generate(&instance, dialogue, t).map_err(to_py)
        }
    }

    /// Run the `spc` command line in-process; returns
    /// `(exit code, stdout, stderr)`.
    #[pyfunction]
    fn cli(args: Vec<String>) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("spc".to_string()).chain(args);
        let code = spc_core::cli::run_with(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8_lossy(&out).into_owned(),
            String::from_utf8_lossy(&err).into_owned(),
        )
    }
}
