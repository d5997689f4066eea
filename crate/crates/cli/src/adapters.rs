//! Black-box model adapters for adversarial testing.
//!
//! `linear` loads a [`LinearModel`] saved as JSON. `exec` talks to an
//! external process over standard streams: one JSON request per line
//! (`{"features":[...]}`) answered by one JSON response per line, either
//! `{"value": 1.5}` for regressors or `{"probs":[0.7,0.3]}` for
//! classifiers.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use surety::adversarial::{AdvError, ModelOutput, QueryModel};
use surety::record::ClassProbVector;
use surety::synth::LinearModel;

use crate::config::ModelRef;

/// Load a linear model from its JSON file.
pub fn load_linear(path: &Path) -> anyhow::Result<LinearModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("failed to read model {}: {e}", path.display()))?;
    let model: LinearModel = serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("model {}: {e}", path.display()))?;
    Ok(model)
}

#[derive(Serialize)]
struct ExecRequest<'a> {
    features: &'a [f64],
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ExecResponse {
    Value { value: f64 },
    Probs { probs: Vec<f64> },
}

/// A child process queried line by line. The mutex serializes queries, so
/// the adapter is safe to share even though the protocol is sequential.
pub struct ExecModel {
    child: Mutex<(Child, ChildStdin, BufReader<ChildStdout>)>,
}

impl ExecModel {
    pub fn spawn(command: &str, args: &[String]) -> anyhow::Result<ExecModel> {
        let mut child = Command::new(command)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| anyhow::anyhow!("failed to spawn model adapter {command}: {e}"))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ExecModel {
            child: Mutex::new((child, stdin, stdout)),
        })
    }
}

impl Drop for ExecModel {
    fn drop(&mut self) {
        if let Ok(mut guard) = self.child.lock() {
            let _ = guard.0.kill();
            let _ = guard.0.wait();
        }
    }
}

impl QueryModel for ExecModel {
    fn query(&self, x: &[f64]) -> Result<ModelOutput, AdvError> {
        let mut guard = self
            .child
            .lock()
            .map_err(|_| AdvError::QueryFailed("adapter mutex poisoned".into()))?;
        let request = serde_json::to_string(&ExecRequest { features: x })
            .expect("request serializes");
        writeln!(guard.1, "{request}")
            .and_then(|()| guard.1.flush())
            .map_err(|e| AdvError::QueryFailed(format!("write to adapter: {e}")))?;
        let mut line = String::new();
        guard
            .2
            .read_line(&mut line)
            .map_err(|e| AdvError::QueryFailed(format!("read from adapter: {e}")))?;
        if line.trim().is_empty() {
            return Err(AdvError::QueryFailed("adapter closed its stdout".into()));
        }
        let response: ExecResponse = serde_json::from_str(&line)
            .map_err(|e| AdvError::QueryFailed(format!("adapter response: {e}")))?;
        match response {
            ExecResponse::Value { value } => Ok(ModelOutput::Value(value)),
            ExecResponse::Probs { probs } => ClassProbVector::new(probs)
                .map(ModelOutput::Probs)
                .map_err(|e| AdvError::QueryFailed(format!("adapter probabilities: {e}"))),
        }
    }
}

/// Materialize a model reference relative to a base directory.
pub fn resolve_model(model: &ModelRef, base: &Path) -> anyhow::Result<Box<dyn QueryModel>> {
    match model {
        ModelRef::Linear { path } => Ok(Box::new(load_linear(&base.join(path))?)),
        ModelRef::Exec { command, args } => Ok(Box::new(ExecModel::spawn(command, args)?)),
    }
}
