use std::collections::HashMap;

use crate::dataset::DatasetRecord;
use crate::error::{Error, Result};
use crate::graph::{encode, ArchGraph, EncodedGraph, OpVocabulary};

/// A finite candidate set with pre-encoded graphs and an id index.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    vocab: OpVocabulary,
    graphs: Vec<ArchGraph>,
    encoded: Vec<EncodedGraph>,
    index: HashMap<String, usize>,
}

impl SearchSpace {
    pub fn new(vocab: OpVocabulary, graphs: Vec<ArchGraph>) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::InsufficientData("empty search space".into()));
        }
        let mut index = HashMap::with_capacity(graphs.len());
        for (i, g) in graphs.iter().enumerate() {
            if index.insert(g.id().to_string(), i).is_some() {
                return Err(Error::Validation {
                    id: g.id().to_string(),
                    message: "listed twice in the search space".into(),
                });
            }
        }
        let encoded = graphs.iter().map(|g| encode(g, &vocab)).collect::<Result<Vec<_>>>()?;
        Ok(Self { vocab, graphs, encoded, index })
    }

    pub fn from_records(records: &[DatasetRecord], vocab: OpVocabulary) -> Result<Self> {
        Self::new(vocab, records.iter().map(|r| r.graph.clone()).collect())
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn vocab(&self) -> &OpVocabulary {
        &self.vocab
    }

    pub fn graphs(&self) -> &[ArchGraph] {
        &self.graphs
    }

    pub fn graph(&self, i: usize) -> &ArchGraph {
        &self.graphs[i]
    }

    pub fn encoded(&self, i: usize) -> &EncodedGraph {
        &self.encoded[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn max_nodes(&self) -> usize {
        self.graphs.iter().map(ArchGraph::node_count).max().unwrap_or(0)
    }
}
