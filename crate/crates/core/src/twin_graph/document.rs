//! Canonical line-oriented JSON form of a [`TwinGraph`].
//!
//! ```text
//! {
//! "assets":[
//! {"attributes":{"cap":10},"id":"sw1","kind":"NetworkElement"}
//! ],
//! "twins":[
//! {"asset_id":"sw1","exposed_keys":["cap"],"fidelity":"Doppel","id":"sw1","state":{"cap":10}}
//! ],
//! "edges":[],
//! "rules":[]
//! }
//! ```
//!
//! Sections appear in the order above, records are sorted by id (edges by
//! parent, child, relation; rules keep their declared order), object keys are
//! sorted, one record per line, LF line endings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Asset, DigitalTwin, Edge, GraphError, SynthesisRule, TwinGraph};

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("malformed twin graph document: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Serde view of the document, also embedded in scenario files.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwinGraphDocument {
    #[serde(default)]
    pub assets: Vec<Asset>,
    #[serde(default)]
    pub twins: Vec<DigitalTwin>,
    #[serde(default)]
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub rules: Vec<SynthesisRule>,
}

impl TwinGraphDocument {
    pub fn into_graph(self) -> Result<TwinGraph, GraphError> {
        TwinGraph::from_parts(self.assets, self.twins, self.edges, self.rules)
    }
}

fn write_section<T: Serialize>(
    out: &mut String,
    name: &str,
    items: impl Iterator<Item = T>,
    last: bool,
) {
    let lines: Vec<String> = items
        .map(|item| {
            let value = serde_json::to_value(item).expect("graph records serialize");
            serde_json::to_string(&value).expect("values serialize")
        })
        .collect();
    out.push('"');
    out.push_str(name);
    out.push_str("\":[");
    if !lines.is_empty() {
        out.push('\n');
        out.push_str(&lines.join(",\n"));
        out.push('\n');
    }
    out.push(']');
    if !last {
        out.push(',');
    }
    out.push('\n');
}

pub(super) fn write(graph: &TwinGraph) -> String {
    let mut out = String::from("{\n");
    write_section(&mut out, "assets", graph.assets.values(), false);
    write_section(&mut out, "twins", graph.twins.values(), false);
    write_section(&mut out, "edges", graph.edges.iter(), false);
    write_section(&mut out, "rules", graph.rules.iter(), true);
    out.push_str("}\n");
    out
}

pub(super) fn read(text: &str) -> Result<TwinGraph, DocumentError> {
    let doc: TwinGraphDocument = serde_json::from_str(text)?;
    Ok(doc.into_graph()?)
}
