//! JSON graph files and JSON-lines graph-set files.
//!
//! Graph: `{"n":5,"sigma":0.1,"mechanism":"linear","hidden":0,"edges":[[j,i,w],...]}`
//! with edges sorted by `(j, i)` and zero weights omitted. The empty 5-node
//! graph serializes to exactly
//! `{"n":5,"sigma":0.1,"mechanism":"linear","hidden":0,"edges":[]}`.
//!
//! Graph set: a header line `{"split":"train","seed":7}` followed by one graph
//! per line.

use super::{CausalGraph, GraphSet, Mechanism, Split, HIDDEN_NODE};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    n: usize,
    sigma: f64,
    mechanism: Mechanism,
    hidden: usize,
    edges: Vec<(usize, usize, i8)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSetHeader {
    pub split: Split,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub complement: bool,
}

pub fn serialize_graph(g: &CausalGraph) -> String {
    let record = GraphRecord {
        n: g.n_nodes(),
        sigma: g.sigma(),
        mechanism: g.mechanism(),
        hidden: g.hidden(),
        edges: g.edges(),
    };
    serde_json::to_string(&record).expect("graph records always serialize")
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let before: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (before + column.saturating_sub(1)).min(text.len())
}

fn json_error(text: &str, base: usize, e: serde_json::Error) -> Error {
    Error::Parse { offset: base + byte_offset(text, e.line(), e.column()), message: e.to_string() }
}

fn parse_graph_at(text: &str, base: usize) -> Result<CausalGraph> {
    let record: GraphRecord = serde_json::from_str(text).map_err(|e| json_error(text, base, e))?;
    let semantic = |message: String| Error::Parse { offset: base, message };
    if record.hidden != HIDDEN_NODE {
        return Err(semantic(format!("hidden node must be {HIDDEN_NODE}, got {}", record.hidden)));
    }
    if record.edges.windows(2).any(|w| (w[0].0, w[0].1) >= (w[1].0, w[1].1)) {
        return Err(semantic("edges must be sorted by (j, i) without repeats".into()));
    }
    let g = CausalGraph::from_edges(record.n, &record.edges, record.mechanism)
        .and_then(|g| g.with_sigma(record.sigma))
        .map_err(|e| semantic(e.to_string()))?;
    Ok(g)
}

pub fn parse_graph(bytes: &[u8]) -> Result<CausalGraph> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Parse { offset: e.valid_up_to(), message: "invalid UTF-8".into() })?;
    parse_graph_at(text.trim_end(), 0)
}

pub fn write_graph_set<W: Write>(mut out: W, set: &GraphSet) -> Result<()> {
    let header = GraphSetHeader { split: set.split, seed: set.seed, complement: set.complement };
    writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for g in &set.graphs {
        writeln!(out, "{}", serialize_graph(g))?;
    }
    Ok(())
}

/// Reads a graph-set file. `n_nodes` is taken from the first graph, or from
/// `default_n` for an empty (complement) set.
pub fn read_graph_set<R: BufRead>(input: R, default_n: usize) -> Result<GraphSet> {
    let mut offset = 0usize;
    let mut header: Option<GraphSetHeader> = None;
    let mut graphs = Vec::new();
    for line in input.lines() {
        let line = line?;
        let len = line.len() + 1;
        let trimmed = line.trim_end();
        if !trimmed.is_empty() {
            match header {
                None => {
                    header = Some(serde_json::from_str(trimmed).map_err(|e| json_error(trimmed, offset, e))?);
                }
                Some(_) => graphs.push(parse_graph_at(trimmed, offset)?),
            }
        }
        offset += len;
    }
    let header = header.ok_or(Error::Parse { offset, message: "missing graph-set header".into() })?;
    let n_nodes = graphs.first().map_or(default_n, CausalGraph::n_nodes);
    if let Some(g) = graphs.iter().find(|g| g.n_nodes() != n_nodes) {
        return Err(Error::invalid(format!("graph set mixes {n_nodes}-node and {}-node graphs", g.n_nodes())));
    }
    Ok(GraphSet { split: header.split, seed: header.seed, n_nodes, graphs, complement: header.complement })
}
