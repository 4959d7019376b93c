//! Tree-exchange format: JSON with a root id, a node store, and optional
//! exploit markers. The canonical form sorts dictionary keys within each
//! node; array entry order is significant and preserved.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DocError, DocNode, DocTree, ExploitMarker, NodePayload, ObjId, Result, StreamMeta};

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    root: u64,
    nodes: BTreeMap<String, NodeDoc>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    markers: Option<ExploitMarker>,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    entries: Option<Entries>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    value: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    target: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    stream_meta: Option<StreamMeta>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Entries {
    Keyed(Vec<(String, u64)>),
    Positional(Vec<u64>),
}

/// Serializes a tree to the canonical exchange form.
pub fn save_tree(tree: &DocTree) -> String {
    let mut nodes = BTreeMap::new();
    for (id, node) in tree.nodes() {
        nodes.insert(id.0.to_string(), encode_node(node));
    }
    let doc = TreeDoc {
        root: tree.root().0,
        nodes,
        markers: tree.markers().cloned(),
    };
    serde_json::to_string_pretty(&doc).expect("tree serialization cannot fail")
}

/// Parses the exchange form back into a tree.
pub fn load_tree(text: &str) -> Result<DocTree> {
    let doc: TreeDoc =
        serde_json::from_str(text).map_err(|e| DocError::SchemaViolation(e.to_string()))?;
    let mut nodes = BTreeMap::new();
    for (id, node_doc) in &doc.nodes {
        let id: u64 = id
            .parse()
            .map_err(|_| DocError::SchemaViolation(format!("node id {id} is not an integer")))?;
        nodes.insert(ObjId(id), decode_node(node_doc)?);
    }
    if let Some(markers) = &doc.markers {
        markers.validate()?;
    }
    DocTree::new(ObjId(doc.root), nodes, doc.markers).map_err(|e| match e {
        DocError::MalformedDocument(msg) => DocError::SchemaViolation(msg),
        other => other,
    })
}

fn encode_node(node: &DocNode) -> NodeDoc {
    let mut doc = NodeDoc {
        kind: String::new(),
        entries: None,
        value: None,
        target: None,
        stream_meta: None,
    };
    match &node.payload {
        NodePayload::Dict(entries) => {
            doc.kind = "dict".into();
            doc.entries = Some(Entries::Keyed(sorted_entries(entries)));
        }
        NodePayload::Stream { entries, meta } => {
            doc.kind = "stream".into();
            doc.entries = Some(Entries::Keyed(sorted_entries(entries)));
            doc.stream_meta = Some(meta.clone());
        }
        NodePayload::Array(items) => {
            doc.kind = "array".into();
            doc.entries = Some(Entries::Positional(items.iter().map(|i| i.0).collect()));
        }
        NodePayload::Name(v) => {
            doc.kind = "name".into();
            doc.value = Some(serde_json::Value::String(v.clone()));
        }
        NodePayload::Text(v) => {
            doc.kind = "string".into();
            doc.value = Some(serde_json::Value::String(v.clone()));
        }
        NodePayload::Number(v) => {
            doc.kind = "number".into();
            doc.value = serde_json::Number::from_f64(*v).map(serde_json::Value::Number);
        }
        NodePayload::Boolean(v) => {
            doc.kind = "bool".into();
            doc.value = Some(serde_json::Value::Bool(*v));
        }
        NodePayload::Null => {
            doc.kind = "null".into();
        }
        NodePayload::Reference(target) => {
            doc.kind = "ref".into();
            doc.target = Some(target.0);
        }
    }
    doc
}

fn sorted_entries(entries: &[(String, ObjId)]) -> Vec<(String, u64)> {
    let mut out: Vec<(String, u64)> = entries.iter().map(|(k, v)| (k.clone(), v.0)).collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn decode_node(doc: &NodeDoc) -> Result<DocNode> {
    let keyed = || -> Result<Vec<(String, ObjId)>> {
        match &doc.entries {
            Some(Entries::Keyed(e)) => Ok(e.iter().map(|(k, v)| (k.clone(), ObjId(*v))).collect()),
            Some(Entries::Positional(e)) if e.is_empty() => Ok(Vec::new()),
            None => Ok(Vec::new()),
            _ => Err(DocError::SchemaViolation(format!(
                "{} node requires keyed entries",
                doc.kind
            ))),
        }
    };
    let payload = match doc.kind.as_str() {
        "dict" => NodePayload::Dict(keyed()?),
        "stream" => NodePayload::Stream {
            entries: keyed()?,
            meta: doc.stream_meta.clone().unwrap_or(StreamMeta {
                len: 0,
                filter: None,
            }),
        },
        "array" => match &doc.entries {
            Some(Entries::Positional(e)) => {
                NodePayload::Array(e.iter().map(|v| ObjId(*v)).collect())
            }
            Some(Entries::Keyed(e)) if e.is_empty() => NodePayload::Array(Vec::new()),
            None => NodePayload::Array(Vec::new()),
            _ => {
                return Err(DocError::SchemaViolation(
                    "array node requires positional entries".into(),
                ))
            }
        },
        "name" | "string" => {
            let v = doc
                .value
                .as_ref()
                .and_then(serde_json::Value::as_str)
                .ok_or_else(|| {
                    DocError::SchemaViolation(format!("{} node requires a string value", doc.kind))
                })?;
            if doc.kind == "name" {
                NodePayload::Name(v.to_string())
            } else {
                NodePayload::Text(v.to_string())
            }
        }
        "number" => {
            let v = doc
                .value
                .as_ref()
                .and_then(serde_json::Value::as_f64)
                .ok_or_else(|| {
                    DocError::SchemaViolation("number node requires a numeric value".into())
                })?;
            NodePayload::Number(v)
        }
        "bool" => {
            let v = doc
                .value
                .as_ref()
                .and_then(serde_json::Value::as_bool)
                .ok_or_else(|| {
                    DocError::SchemaViolation("bool node requires a boolean value".into())
                })?;
            NodePayload::Boolean(v)
        }
        "null" => NodePayload::Null,
        "ref" => {
            let target = doc.target.ok_or_else(|| {
                DocError::SchemaViolation("ref node requires a target".into())
            })?;
            NodePayload::Reference(ObjId(target))
        }
        other => {
            return Err(DocError::SchemaViolation(format!(
                "unknown node kind {other}"
            )))
        }
    };
    Ok(DocNode::new(payload))
}
