//! Line-delimited JSON session with a child process.
//!
//! The child first prints a handshake line `{"v": 1}`. Each request is one
//! line `{"id": n, "x": [..]}`; the child answers with
//! `{"id": n, "dt": .., "channels": {"name": [..], ..}}` or
//! `{"id": n, "error": ".."}`. One request is in flight at a time.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde_json::Value;

use crate::stl::Trace;

use super::{BlackBox, BlackBoxError};

pub const PROTOCOL_VERSION: u64 = 1;

pub struct External {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    dim: Option<usize>,
    next_id: u64,
    /// Set once the session is unusable (timeout, crash, protocol error).
    failed: bool,
}

impl External {
    /// Spawns `command` and waits up to `timeout` for the handshake.
    pub fn spawn(command: &str, args: &[String], timeout: Duration, dim: Option<usize>) -> Result<Self, BlackBoxError> {
        let mut child = Command::new(command)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BlackBoxError::Spawn(format!("{command}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut ext = Self { child, stdin, lines: rx, timeout, dim, next_id: 0, failed: false };
        let line = ext.read_line()?;
        let hello: Value = serde_json::from_str(&line).map_err(|e| ext.fail(BlackBoxError::Malformed(format!("handshake: {e}"))))?;
        match hello.get("v").and_then(Value::as_u64) {
            Some(PROTOCOL_VERSION) => Ok(ext),
            other => Err(ext.fail(BlackBoxError::Protocol(format!(
                "expected handshake {{\"v\": {PROTOCOL_VERSION}}}, got version {other:?}"
            )))),
        }
    }

    fn fail(&mut self, err: BlackBoxError) -> BlackBoxError {
        self.failed = true;
        let _ = self.child.kill();
        let _ = self.child.wait();
        err
    }

    fn read_line(&mut self) -> Result<String, BlackBoxError> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(self.fail(BlackBoxError::Malformed(format!("unreadable output: {e}")))),
            Err(RecvTimeoutError::Timeout) => {
                let secs = self.timeout.as_secs_f64();
                Err(self.fail(BlackBoxError::Timeout { secs }))
            }
            Err(RecvTimeoutError::Disconnected) => {
                // stdout closed: the child is gone or about to be
                let status = self.child.wait().map(|s| s.to_string()).unwrap_or_else(|e| e.to_string());
                self.failed = true;
                Err(BlackBoxError::Crash(status))
            }
        }
    }

    fn parse_response(&mut self, line: &str, id: u64) -> Result<Trace, BlackBoxError> {
        let v: Value = serde_json::from_str(line).map_err(|e| BlackBoxError::Malformed(format!("{e}: {line}")))?;
        let got = v.get("id").and_then(Value::as_u64).ok_or_else(|| BlackBoxError::Malformed("missing id".into()))?;
        if got != id {
            return Err(BlackBoxError::WrongId { expected: id, got });
        }
        if let Some(msg) = v.get("error") {
            return Err(BlackBoxError::Remote(msg.as_str().map_or_else(|| msg.to_string(), String::from)));
        }
        let dt = v.get("dt").and_then(Value::as_f64).ok_or_else(|| BlackBoxError::Malformed("missing dt".into()))?;
        let raw = v
            .get("channels")
            .and_then(Value::as_object)
            .ok_or_else(|| BlackBoxError::Malformed("missing channels object".into()))?;
        let mut channels = BTreeMap::new();
        for (name, values) in raw {
            let values = values
                .as_array()
                .ok_or_else(|| BlackBoxError::Malformed(format!("channel `{name}` is not an array")))?;
            let mut out = Vec::with_capacity(values.len());
            for value in values {
                match value {
                    Value::Number(n) => out.push(n.as_f64().ok_or(BlackBoxError::NonFinite)?),
                    // JSON has no NaN; encoders emit null or a string instead
                    Value::Null => return Err(BlackBoxError::NonFinite),
                    Value::String(s) if s.parse::<f64>().is_ok_and(|f| !f.is_finite()) => {
                        return Err(BlackBoxError::NonFinite)
                    }
                    other => return Err(BlackBoxError::Malformed(format!("channel `{name}` holds {other}"))),
                }
            }
            channels.insert(name.clone(), out);
        }
        Trace::new(dt, channels).map_err(|e| BlackBoxError::InvalidTrace(e.to_string()))
    }
}

impl BlackBox for External {
    fn evaluate(&mut self, x: &[f64]) -> Result<Trace, BlackBoxError> {
        if self.failed {
            return Err(BlackBoxError::Protocol("session already failed".into()));
        }
        if let Some(d) = self.dim {
            if d != x.len() {
                return Err(BlackBoxError::DimensionMismatch { expected: d, got: x.len() });
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(BlackBoxError::NonFinite);
        }
        let id = self.next_id;
        self.next_id += 1;
        let request = serde_json::json!({ "id": id, "x": x });
        if writeln!(self.stdin, "{request}").and_then(|_| self.stdin.flush()).is_err() {
            let status = self.child.wait().map(|s| s.to_string()).unwrap_or_else(|e| e.to_string());
            self.failed = true;
            return Err(BlackBoxError::Crash(status));
        }
        let line = self.read_line()?;
        self.parse_response(&line, id)
    }
}

impl Drop for External {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
