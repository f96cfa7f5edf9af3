use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::StlError;

/// Column (CSV) or key (JSON lines) carrying the sampling period.
pub const DT_KEY: &str = "__dt";

/// A uniformly sampled multivariate signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrace", into = "RawTrace")]
pub struct Trace {
    channels: BTreeMap<String, Vec<f64>>,
    dt: f64,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct RawTrace {
    dt: f64,
    channels: BTreeMap<String, Vec<f64>>,
}

impl TryFrom<RawTrace> for Trace {
    type Error = StlError;

    fn try_from(raw: RawTrace) -> Result<Self, StlError> {
        Trace::new(raw.dt, raw.channels)
    }
}

impl From<Trace> for RawTrace {
    fn from(t: Trace) -> Self {
        RawTrace { dt: t.dt, channels: t.channels }
    }
}

impl Trace {
    pub fn new<I, S>(dt: f64, channels: I) -> Result<Self, StlError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(StlError::InvalidTrace(format!("dt must be finite and positive, got {dt}")));
        }
        let channels: BTreeMap<String, Vec<f64>> =
            channels.into_iter().map(|(k, v)| (k.into(), v)).collect();
        let mut len = None;
        for (name, values) in &channels {
            if name == DT_KEY {
                return Err(StlError::InvalidTrace(format!("`{DT_KEY}` is reserved")));
            }
            match len {
                None => len = Some(values.len()),
                Some(n) if n != values.len() => {
                    return Err(StlError::InvalidTrace(format!(
                        "channel `{name}` has {} samples, expected {n}",
                        values.len()
                    )))
                }
                _ => {}
            }
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(StlError::InvalidTrace(format!(
                    "channel `{name}` has a non-finite sample at step {i}"
                )));
            }
        }
        let len = len.unwrap_or(0);
        if len == 0 {
            return Err(StlError::InvalidTrace("trace needs at least one channel and one sample".into()));
        }
        Ok(Self { channels, dt, len })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of samples `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Duration covered by the samples, `(T - 1) * dt`.
    pub fn duration(&self) -> f64 {
        (self.len - 1) as f64 * self.dt
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.get(name).map(Vec::as_slice)
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.keys().map(String::as_str)
    }

    /// Reads a CSV trace. The header names the channels; the sampling period
    /// comes either from a `__dt` column (first row) or from a leading
    /// `# dt = <value>` metadata line.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, StlError> {
        let mut text = String::new();
        std::io::BufReader::new(reader)
            .read_to_string(&mut text)
            .map_err(|e| StlError::InvalidTrace(e.to_string()))?;
        let mut meta_dt = None;
        let mut body = String::new();
        for line in text.lines() {
            let trimmed = line.trim();
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some((key, value)) = comment.split_once('=') {
                    if key.trim() == "dt" {
                        meta_dt = Some(parse_number(value.trim())?);
                    }
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            body.push_str(line);
            body.push('\n');
        }

        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| StlError::InvalidTrace(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for record in rdr.records() {
            let record = record.map_err(|e| StlError::InvalidTrace(e.to_string()))?;
            for (col, field) in columns.iter_mut().zip(record.iter()) {
                if field.is_empty() {
                    col.push(f64::NAN);
                } else {
                    col.push(parse_number(field)?);
                }
            }
        }

        let mut dt = meta_dt;
        let mut channels = BTreeMap::new();
        for (name, values) in headers.into_iter().zip(columns) {
            if name == DT_KEY {
                let first = values.iter().copied().find(|v| v.is_finite());
                dt = dt.or(first);
            } else {
                channels.insert(name, values);
            }
        }
        let dt = dt.ok_or_else(|| StlError::InvalidTrace("no sampling period declared".into()))?;
        Trace::new(dt, channels)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), StlError> {
        let io = |e: csv::Error| StlError::InvalidTrace(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = vec![DT_KEY];
        header.extend(self.channels.keys().map(String::as_str));
        w.write_record(&header).map_err(io)?;
        for t in 0..self.len {
            let mut row = Vec::with_capacity(header.len());
            row.push(if t == 0 { self.dt.to_string() } else { String::new() });
            row.extend(self.channels.values().map(|v| v[t].to_string()));
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| StlError::InvalidTrace(e.to_string()))
    }

    /// Reads line-delimited JSON, one object per time step mapping channel
    /// names to values. `__dt` must appear in at least the first object.
    pub fn read_json_lines<R: BufRead>(reader: R) -> Result<Self, StlError> {
        let mut dt = None;
        let mut channels: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut step = 0usize;
        for line in reader.lines() {
            let line = line.map_err(|e| StlError::InvalidTrace(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let obj: BTreeMap<String, f64> = serde_json::from_str(&line)
                .map_err(|e| StlError::InvalidTrace(format!("step {step}: {e}")))?;
            for (k, v) in obj {
                if k == DT_KEY {
                    dt.get_or_insert(v);
                    continue;
                }
                let col = channels.entry(k.clone()).or_default();
                if col.len() != step {
                    return Err(StlError::InvalidTrace(format!(
                        "channel `{k}` missing before step {step}"
                    )));
                }
                col.push(v);
            }
            step += 1;
        }
        let dt = dt.ok_or_else(|| StlError::InvalidTrace("no sampling period declared".into()))?;
        Trace::new(dt, channels)
    }
}

fn parse_number(s: &str) -> Result<f64, StlError> {
    s.parse::<f64>()
        .map_err(|_| StlError::InvalidTrace(format!("not a number: `{s}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_channels() {
        let err = Trace::new(0.1, [("a", vec![1.0, 2.0]), ("b", vec![1.0])]).unwrap_err();
        assert!(matches!(err, StlError::InvalidTrace(_)));
    }

    #[test]
    fn rejects_bad_dt_and_nan() {
        assert!(Trace::new(0.0, [("a", vec![1.0])]).is_err());
        assert!(Trace::new(f64::NAN, [("a", vec![1.0])]).is_err());
        assert!(Trace::new(0.1, [("a", vec![f64::NAN])]).is_err());
        assert!(Trace::new(0.1, [("a", Vec::<f64>::new())]).is_err());
    }

    #[test]
    fn csv_with_dt_column() {
        let text = "__dt,x,y\n0.5,1,2\n,3,4\n";
        let t = Trace::read_csv(text.as_bytes()).unwrap();
        assert_eq!(t.dt(), 0.5);
        assert_eq!(t.channel("x").unwrap(), &[1.0, 3.0]);
        assert_eq!(t.channel("y").unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn csv_with_metadata_line() {
        let text = "# dt = 0.25\nx\n1\n2\n3\n";
        let t = Trace::read_csv(text.as_bytes()).unwrap();
        assert_eq!(t.dt(), 0.25);
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn csv_write_read_round_trip() {
        let t = Trace::new(0.1, [("p.x", vec![0.1, -2.5e-7]), ("q", vec![3.0, 4.0])]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(Trace::read_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn json_lines() {
        let text = "{\"__dt\": 0.1, \"x\": 1}\n{\"x\": 2}\n\n{\"x\": 4}\n";
        let t = Trace::read_json_lines(text.as_bytes()).unwrap();
        assert_eq!(t.channel("x").unwrap(), &[1.0, 2.0, 4.0]);
        assert_eq!(t.dt(), 0.1);
        let missing = "{\"__dt\": 0.1, \"x\": 1, \"y\": 1}\n{\"x\": 2}\n{\"x\": 4, \"y\": 0}\n";
        assert!(Trace::read_json_lines(missing.as_bytes()).is_err());
    }
}
