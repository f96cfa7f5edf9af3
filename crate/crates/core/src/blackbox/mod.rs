//! Systems under test: a parameter point goes in, a trace comes out.

mod builtin;
mod external;

pub use builtin::{Builtin, BuiltinId};
pub use external::{External, PROTOCOL_VERSION};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stl::Trace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlackBoxError {
    #[error("could not start black box: {0}")]
    Spawn(String),
    #[error("black box exited unexpectedly ({0})")]
    Crash(String),
    #[error("black box did not answer within {secs} s")]
    Timeout { secs: f64 },
    #[error("malformed reply: {0}")]
    Malformed(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("reply for request {got}, expected {expected}")]
    WrongId { expected: u64, got: u64 },
    #[error("black box reported an error: {0}")]
    Remote(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in input or reply")]
    NonFinite,
    #[error("reply is not a valid trace: {0}")]
    InvalidTrace(String),
}

/// A system that maps a parameter point to a trajectory.
pub trait BlackBox {
    fn evaluate(&mut self, x: &[f64]) -> Result<Trace, BlackBoxError>;
}

impl<B: BlackBox + ?Sized> BlackBox for Box<B> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Trace, BlackBoxError> {
        (**self).evaluate(x)
    }
}

fn default_timeout() -> f64 {
    30.0
}

/// Serializable description of a black box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlackBoxSpec {
    Builtin(Builtin),
    External {
        command: String,
        #[serde(default)]
        args: Vec<String>,
        /// Seconds to wait for each reply, including the handshake.
        #[serde(default = "default_timeout")]
        timeout: f64,
        #[serde(default)]
        dim: Option<usize>,
    },
}

impl BlackBoxSpec {
    pub fn builtin(id: BuiltinId) -> Self {
        BlackBoxSpec::Builtin(Builtin::new(id))
    }

    /// Whether repeated evaluation at the same point is guaranteed to give the
    /// same trace.
    pub fn is_deterministic(&self) -> bool {
        matches!(self, BlackBoxSpec::Builtin(_))
    }

    pub fn instantiate(&self) -> Result<Box<dyn BlackBox + Send>, BlackBoxError> {
        match self {
            BlackBoxSpec::Builtin(b) => Ok(Box::new(b.clone())),
            BlackBoxSpec::External { command, args, timeout, dim } => {
                if !(timeout.is_finite() && *timeout > 0.0) {
                    return Err(BlackBoxError::Spawn(format!("timeout must be positive, got {timeout}")));
                }
                Ok(Box::new(External::spawn(command, args, Duration::from_secs_f64(*timeout), *dim)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trip() {
        let spec = BlackBoxSpec::Builtin(Builtin { id: BuiltinId::PickMass, seed: 3, noise: 0.0 });
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"id\":\"pick-mass\""), "{json}");
        assert_eq!(serde_json::from_str::<BlackBoxSpec>(&json).unwrap(), spec);
        let ext: BlackBoxSpec = serde_json::from_str(r#"{"kind": "external", "command": "sim"}"#).unwrap();
        assert_eq!(ext, BlackBoxSpec::External { command: "sim".into(), args: vec![], timeout: 30.0, dim: None });
    }
}
