//! JSON-lines architecture datasets.
//!
//! Each line is `{"adjacency": [[0|1,..],..], "ops": [name,..], "metrics": {name: value,..}}`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ArchGraph, OpVocabulary};

/// A graph together with every metric stored for it.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub graph: ArchGraph,
    pub metrics: BTreeMap<String, f64>,
}

impl DatasetRecord {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    adjacency: Vec<Vec<u8>>,
    ops: Vec<String>,
    metrics: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabularyFile {
    ops: Vec<String>,
}

pub fn read_vocabulary(path: &Path) -> Result<OpVocabulary> {
    let text = fs::read_to_string(path)?;
    let file: VocabularyFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    OpVocabulary::new(file.ops)
}

pub fn write_vocabulary(path: &Path, vocab: &OpVocabulary) -> Result<()> {
    let file = VocabularyFile { ops: vocab.names().to_vec() };
    fs::write(path, serde_json::to_string(&file)? + "\n")?;
    Ok(())
}

/// Operation names in order of first appearance.
pub fn infer_vocabulary(path: &Path) -> Result<OpVocabulary> {
    let mut names: Vec<String> = Vec::new();
    for (lineno, line) in read_lines(path)? {
        let parsed = parse_line(path, lineno, &line)?;
        for op in parsed.ops {
            if !names.contains(&op) {
                names.push(op);
            }
        }
    }
    OpVocabulary::new(names)
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_line(path: &Path, lineno: usize, line: &str) -> Result<Line> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: lineno,
        message: e.to_string(),
    })
}

/// Loads and validates a dataset. Exact duplicate lines collapse into the
/// first occurrence; a repeated graph with different metrics is an error.
pub fn load_dataset(path: &Path, vocab: &OpVocabulary) -> Result<Vec<DatasetRecord>> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in read_lines(path)? {
        let parsed = parse_line(path, lineno, &line)?;
        let at_line = |message: String| Error::Parse { path: path.to_path_buf(), line: lineno, message };
        let graph = ArchGraph::from_names(parsed.adjacency, &parsed.ops, vocab).map_err(|e| at_line(e.to_string()))?;
        let record = DatasetRecord { graph, metrics: parsed.metrics };
        validate_metrics(&record)?;
        match seen.get(record.graph.id()) {
            Some(&idx) if records_equal(&records[idx], &record) => continue,
            Some(&idx) => {
                return Err(Error::Validation {
                    id: record.graph.id().to_string(),
                    message: format!("line {lineno} repeats the graph of record {} with different metrics", idx + 1),
                })
            }
            None => {
                seen.insert(record.graph.id().to_string(), records.len());
                records.push(record);
            }
        }
    }
    Ok(records)
}

fn records_equal(a: &DatasetRecord, b: &DatasetRecord) -> bool {
    a.metrics == b.metrics
}

fn validate_metrics(record: &DatasetRecord) -> Result<()> {
    for (name, &value) in &record.metrics {
        let fail = |message: String| Error::Validation { id: record.graph.id().to_string(), message };
        if !value.is_finite() {
            return Err(fail(format!("metric {name} is not finite")));
        }
        if is_accuracy_metric(name) && !(0.0..=1.0).contains(&value) {
            return Err(fail(format!("metric {name} = {value} outside [0, 1]")));
        }
    }
    Ok(())
}

/// Metrics whose name mentions accuracy must lie in `[0, 1]`.
pub fn is_accuracy_metric(name: &str) -> bool {
    name.to_ascii_lowercase().contains("accuracy")
}

/// Serializes records, one per line, in the given order.
pub fn dataset_to_string(records: &[DatasetRecord], vocab: &OpVocabulary) -> Result<String> {
    let mut out = String::new();
    for r in records {
        let line = Line {
            adjacency: r.graph.adjacency_rows(),
            ops: r.graph.op_names(vocab)?.into_iter().map(str::to_string).collect(),
            metrics: r.metrics.clone(),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord], vocab: &OpVocabulary) -> Result<()> {
    let text = dataset_to_string(records, vocab)?;
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> OpVocabulary {
        OpVocabulary::new(["input", "conv3x3", "output"]).unwrap()
    }

    fn write(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    const GOOD: &str =
        r#"{"adjacency": [[0,1],[0,0]], "ops": ["input","output"], "metrics": {"accuracy": 0.9, "params": 10.0}}"#;

    #[test]
    fn empty_file_is_empty_dataset() {
        let f = write(&[]);
        assert!(load_dataset(f.path(), &vocab()).unwrap().is_empty());
    }

    #[test]
    fn one_line_one_record() {
        let f = write(&[GOOD]);
        let recs = load_dataset(f.path(), &vocab()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].metric("accuracy"), Some(0.9));
        assert_eq!(recs[0].graph.ops(), &[0, 2]);
    }

    #[test]
    fn cyclic_line_reports_its_line_number() {
        let cyclic = r#"{"adjacency": [[0,1],[1,0]], "ops": ["input","output"], "metrics": {"accuracy": 0.5}}"#;
        let f = write(&[GOOD, cyclic]);
        match load_dataset(f.path(), &vocab()).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("cycle"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let f = write(&[GOOD, "{not json"]);
        assert!(matches!(load_dataset(f.path(), &vocab()).unwrap_err(), Error::Parse { line: 2, .. }));
    }

    #[test]
    fn unknown_op_and_bad_accuracy_rejected() {
        let f = write(&[r#"{"adjacency": [[0]], "ops": ["relu"], "metrics": {}}"#]);
        assert!(load_dataset(f.path(), &vocab()).is_err());
        let f = write(&[r#"{"adjacency": [[0]], "ops": ["input"], "metrics": {"accuracy": 1.5}}"#]);
        assert!(matches!(load_dataset(f.path(), &vocab()).unwrap_err(), Error::Validation { .. }));
    }

    #[test]
    fn duplicates() {
        let f = write(&[GOOD, GOOD]);
        assert_eq!(load_dataset(f.path(), &vocab()).unwrap().len(), 1);
        let other = GOOD.replace("0.9", "0.8");
        let f = write(&[GOOD, &other]);
        assert!(matches!(load_dataset(f.path(), &vocab()).unwrap_err(), Error::Validation { .. }));
    }

    #[test]
    fn write_then_load_preserves_order_and_values() {
        let f = write(&[
            GOOD,
            r#"{"adjacency": [[0,1,1],[0,0,1],[0,0,0]], "ops": ["input","conv3x3","output"], "metrics": {"accuracy": 0.123456789012345}}"#,
        ]);
        let recs = load_dataset(f.path(), &vocab()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_dataset(out.path(), &recs, &vocab()).unwrap();
        assert_eq!(load_dataset(out.path(), &vocab()).unwrap(), recs);
    }

    #[test]
    fn vocabulary_file_and_inference() {
        let f = write(&[GOOD]);
        let inferred = infer_vocabulary(f.path()).unwrap();
        assert_eq!(inferred.names(), &["input", "output"]);
        let vf = tempfile::NamedTempFile::new().unwrap();
        write_vocabulary(vf.path(), &vocab()).unwrap();
        assert_eq!(read_vocabulary(vf.path()).unwrap(), vocab());
    }
}
