//! Line-delimited JSON files exchanged between pipeline stages.
//!
//! * trace file: `{"id", "n", "grid"?, "layer", "attn": [n]}` per line, or
//!   `"heads": [[n]; H]` instead of `"attn"`, in which case the heads are
//!   averaged on read;
//! * ground-truth sidecar: `{"sample_id", "planted_salient", "content_scores"}`;
//! * decisions: `{"sample_id", "method", "ratio", "retain_k", "kept", "scores"}`.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces every value bit for bit. Blank lines are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::attention::{average_heads, AttentionTrace};
use crate::error::{Error, Result};
use crate::prune::{PruneDecision, PruneMethod};
use crate::synth::SynthSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub id: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<[usize; 2]>,
    pub layer: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attn: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads: Option<Vec<Vec<f64>>>,
}

impl TraceRecord {
    pub fn from_trace(trace: &AttentionTrace) -> Self {
        Self {
            id: trace.sample_id().to_string(),
            n: trace.n(),
            grid: trace.grid().map(|(r, c)| [r, c]),
            layer: trace.layer(),
            attn: Some(trace.scores().to_vec()),
            heads: None,
        }
    }

    pub fn into_trace(self) -> Result<AttentionTrace> {
        let grid = self.grid.map(|[r, c]| (r, c));
        let check_len = |len: usize, what: &str| {
            if len != self.n {
                Err(Error::SizeMismatch {
                    context: format!("{what} of sample '{}'", self.id),
                    expected: self.n,
                    got: len,
                })
            } else {
                Ok(())
            }
        };
        match (self.attn, self.heads) {
            (Some(attn), None) => {
                check_len(attn.len(), "attn")?;
                AttentionTrace::new(self.id, attn, grid, self.layer)
            }
            (None, Some(heads)) => {
                let traces = heads
                    .into_iter()
                    .map(|h| {
                        check_len(h.len(), "head")?;
                        AttentionTrace::new(self.id.clone(), h, grid, self.layer)
                    })
                    .collect::<Result<Vec<_>>>()?;
                average_heads(&traces)
            }
            _ => Err(Error::InvalidParameter(format!(
                "sample '{}' must carry exactly one of 'attn' or 'heads'",
                self.id
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub sample_id: String,
    pub planted_salient: Vec<usize>,
    pub content_scores: Vec<f64>,
}

impl From<&SynthSample> for TruthRecord {
    fn from(s: &SynthSample) -> Self {
        Self {
            sample_id: s.trace.sample_id().to_string(),
            planted_salient: s.planted_salient.clone(),
            content_scores: s.content_scores.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRecord {
    pub sample_id: String,
    pub method: PruneMethod,
    pub ratio: f64,
    pub retain_k: usize,
    pub kept: Vec<usize>,
    /// The ranking scores; optional for files produced elsewhere.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<f64>,
}

impl From<&PruneDecision> for DecisionRecord {
    fn from(d: &PruneDecision) -> Self {
        Self {
            sample_id: d.sample_id.clone(),
            method: d.method,
            ratio: d.ratio,
            retain_k: d.retain_k(),
            kept: d.kept.clone(),
            scores: d.scores_used.clone(),
        }
    }
}

impl DecisionRecord {
    pub fn into_decision(self) -> Result<PruneDecision> {
        if self.kept.len() != self.retain_k {
            return Err(Error::SizeMismatch {
                context: format!("kept indices of sample '{}'", self.sample_id),
                expected: self.retain_k,
                got: self.kept.len(),
            });
        }
        if self.kept.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "kept indices of sample '{}' are not strictly increasing",
                self.sample_id
            )));
        }
        if let Some(&last) = self.kept.last() {
            if !self.scores.is_empty() && last >= self.scores.len() {
                return Err(Error::IndexOutOfRange {
                    index: last,
                    n: self.scores.len(),
                });
            }
        }
        Ok(PruneDecision {
            sample_id: self.sample_id,
            method: self.method,
            ratio: self.ratio,
            kept: self.kept,
            scores_used: self.scores,
        })
    }
}

/// Iterator over the records of a line-delimited file.
pub struct JsonLines<R, T> {
    reader: R,
    origin: String,
    line: usize,
    buf: String,
    _record: std::marker::PhantomData<T>,
}

impl<R: BufRead, T: DeserializeOwned> JsonLines<R, T> {
    pub fn new(reader: R, origin: impl Into<String>) -> Self {
        Self {
            reader,
            origin: origin.into(),
            line: 0,
            buf: String::new(),
            _record: std::marker::PhantomData,
        }
    }

    /// Line number of the record returned last.
    pub fn line(&self) -> usize {
        self.line
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }
}

impl<R: BufRead, T: DeserializeOwned> Iterator for JsonLines<R, T> {
    type Item = Result<(usize, T)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(Error::io(PathBuf::from(&self.origin), e))),
            }
            self.line += 1;
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            return Some(
                serde_json::from_str(text)
                    .map(|record| (self.line, record))
                    .map_err(|e| Error::schema(&self.origin, self.line, e.to_string())),
            );
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Streams validated traces, reporting the sample id and line of any bad record.
pub struct TraceReader<R> {
    lines: JsonLines<R, TraceRecord>,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(reader: R, origin: impl Into<String>) -> Self {
        Self {
            lines: JsonLines::new(reader, origin),
        }
    }
}

impl TraceReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(Self::new(open(path)?, path.display().to_string()))
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<AttentionTrace>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line, record) = match self.lines.next()? {
            Ok(item) => item,
            Err(e) => return Some(Err(e)),
        };
        let id = record.id.clone();
        Some(
            record.into_trace().map_err(|e| {
                Error::schema(self.lines.origin(), line, format!("sample '{id}': {e}"))
            }),
        )
    }
}

pub fn read_traces(path: impl AsRef<Path>) -> Result<Vec<AttentionTrace>> {
    TraceReader::open(path)?.collect()
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<TruthRecord>> {
    let path = path.as_ref();
    JsonLines::<_, TruthRecord>::new(open(path)?, path.display().to_string())
        .map(|r| r.map(|(_, rec)| rec))
        .collect()
}

pub fn read_decisions(path: impl AsRef<Path>) -> Result<Vec<PruneDecision>> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    JsonLines::<_, DecisionRecord>::new(open(path)?, origin.clone())
        .map(|r| {
            let (line, rec) = r?;
            let id = rec.sample_id.clone();
            rec.into_decision()
                .map_err(|e| Error::schema(&origin, line, format!("sample '{id}': {e}")))
        })
        .collect()
}

/// Writes one JSON object per line.
pub fn write_jsonl<T, I>(path: impl AsRef<Path>, records: I) -> Result<()>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, &record)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_traces<'a, I>(path: impl AsRef<Path>, traces: I) -> Result<()>
where
    I: IntoIterator<Item = &'a AttentionTrace>,
{
    write_jsonl(path, traces.into_iter().map(TraceRecord::from_trace))
}

pub fn write_decisions<'a, I>(path: impl AsRef<Path>, decisions: I) -> Result<()>
where
    I: IntoIterator<Item = &'a PruneDecision>,
{
    write_jsonl(path, decisions.into_iter().map(DecisionRecord::from))
}
