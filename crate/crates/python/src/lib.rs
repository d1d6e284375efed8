//! Python bindings: run experiment commands, load a trained model and ask
//! it for suggestions. Tickets and results cross the boundary as JSON text.

use pyo3::prelude::*;

#[pymodule]
mod cota {
    use std::fs::File;
    use std::io::BufReader;
    use std::path::{Path, PathBuf};

    use cota_core::corpus::Ticket;
    use cota_core::eval::{evaluate, read_dump};
    use cota_core::experiment::{
        cmd_evaluate, cmd_generate, cmd_hyperopt, cmd_train, load_model, ExperimentConfig, ExperimentError, LabeledModel,
    };
    use cota_core::serve::Predictor;
    use pyo3::exceptions::{PyRuntimeError, PyValueError};
    use pyo3::prelude::*;

    fn err(e: ExperimentError) -> PyErr {
        match e.exit_code() {
            1 | 2 => PyValueError::new_err(e.to_string()),
            _ => PyRuntimeError::new_err(e.to_string()),
        }
    }

    /// Runs `generate`, `train`, `evaluate` or `hyperopt` and returns the summary lines.
    #[pyfunction]
    #[pyo3(signature = (command, config, out=None, seed=None))]
    fn run(py: Python<'_>, command: &str, config: &str, out: Option<PathBuf>, seed: Option<u64>) -> PyResult<Vec<String>> {
        let mut cfg = ExperimentConfig::load(Path::new(config)).map_err(err)?;
        if let Some(o) = out {
            cfg.output_dir = o;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let command = command.to_string();
        py.detach(move || match command.as_str() {
            "generate" => cmd_generate(&cfg),
            "train" => cmd_train(&cfg),
            "evaluate" => cmd_evaluate(&cfg).map(|r| r.to_text().lines().map(String::from).collect()),
            "hyperopt" => cmd_hyperopt(&cfg).map(|t| t.iter().map(|t| format!("{} {:?}", t.index, t.validation_accuracy)).collect()),
            other => Err(ExperimentError::Usage(format!("unknown command {other:?}"))),
        })
        .map_err(err)
    }

    /// Scores a JSON-lines prediction dump; returns the report as JSON.
    #[pyfunction]
    #[pyo3(signature = (path, k=3))]
    fn evaluate_dump(path: &str, k: usize) -> PyResult<String> {
        let f = File::open(path).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let records = read_dump(BufReader::new(f)).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let report = evaluate(&records, k, None).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(report.to_json())
    }

    #[pyfunction]
    fn feature_hash(ticket_json: &str, model_version: &str) -> PyResult<String> {
        let t: Ticket = serde_json::from_str(ticket_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(cota_core::serve::feature_hash(&t, model_version))
    }

    /// A trained model from an experiment output directory.
    #[pyclass]
    struct Model {
        inner: LabeledModel,
        k: usize,
    }

    #[pymethods]
    impl Model {
        #[staticmethod]
        #[pyo3(signature = (out_dir, k=3, format="json-lines"))]
        fn load(out_dir: PathBuf, k: usize, format: &str) -> PyResult<Self> {
            let format = format.parse().map_err(PyValueError::new_err)?;
            let (inner, _) = load_model(&out_dir, format).map_err(err)?;
            Ok(Self { inner, k })
        }

        #[getter]
        fn version(&self) -> String {
            self.inner.version()
        }

        /// Ranked suggestions per task for one ticket, as JSON.
        fn suggest(&self, py: Python<'_>, ticket_json: &str) -> PyResult<String> {
            let t: Ticket = serde_json::from_str(ticket_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
            let s = py.detach(|| self.inner.predict(&t, self.k)).map_err(PyRuntimeError::new_err)?;
            serde_json::to_string(&s).map_err(|e| PyRuntimeError::new_err(e.to_string()))
        }
    }
}
