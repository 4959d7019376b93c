//! Convenience builder for assembling trees node by node.

use std::collections::BTreeMap;

use super::{
    DetachedSubtree, DocNode, DocTree, ExploitMarker, NodePayload, ObjId, Result, StreamMeta,
};

/// Allocates ids and accumulates nodes; `build` produces the tree.
#[derive(Default)]
pub struct TreeBuilder {
    nodes: BTreeMap<ObjId, DocNode>,
    next: u64,
}

impl TreeBuilder {
    pub fn new() -> Self {
        TreeBuilder {
            nodes: BTreeMap::new(),
            next: 1,
        }
    }

    fn alloc(&mut self, payload: NodePayload) -> ObjId {
        let id = ObjId(self.next);
        self.next += 1;
        self.nodes.insert(id, DocNode::new(payload));
        id
    }

    pub fn name(&mut self, v: impl Into<String>) -> ObjId {
        self.alloc(NodePayload::Name(v.into()))
    }

    pub fn text(&mut self, v: impl Into<String>) -> ObjId {
        self.alloc(NodePayload::Text(v.into()))
    }

    pub fn number(&mut self, v: f64) -> ObjId {
        self.alloc(NodePayload::Number(v))
    }

    pub fn boolean(&mut self, v: bool) -> ObjId {
        self.alloc(NodePayload::Boolean(v))
    }

    pub fn null(&mut self) -> ObjId {
        self.alloc(NodePayload::Null)
    }

    pub fn array(&mut self, items: Vec<ObjId>) -> ObjId {
        self.alloc(NodePayload::Array(items))
    }

    pub fn dict(&mut self, entries: Vec<(&str, ObjId)>) -> ObjId {
        self.alloc(NodePayload::Dict(
            entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        ))
    }

    /// A stream node. A `Filter` name entry is added automatically when a
    /// filter is given, mirroring what the parser produces for real PDFs.
    pub fn stream(&mut self, entries: Vec<(&str, ObjId)>, len: u64, filter: Option<&str>) -> ObjId {
        let mut entries: Vec<(String, ObjId)> = entries
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        if let Some(f) = filter {
            if !entries.iter().any(|(k, _)| k == "Filter") {
                let name = self.name(f);
                entries.push(("Filter".to_string(), name));
            }
        }
        self.alloc(NodePayload::Stream {
            entries,
            meta: StreamMeta {
                len,
                filter: filter.map(str::to_string),
            },
        })
    }

    /// Adds an entry to an already-allocated dictionary node.
    pub fn add_entry(&mut self, dict: ObjId, key: &str, child: ObjId) {
        if let Some(node) = self.nodes.get_mut(&dict) {
            match &mut node.payload {
                NodePayload::Dict(entries) | NodePayload::Stream { entries, .. } => {
                    entries.push((key.to_string(), child));
                }
                NodePayload::Array(items) => items.push(child),
                _ => {}
            }
        }
    }

    pub fn build(self, root: ObjId, markers: Option<ExploitMarker>) -> Result<DocTree> {
        DocTree::new(root, self.nodes, markers)
    }

    /// Finishes as a detached subtree rooted at `root`.
    pub fn build_detached(self, key: Option<&str>, root: ObjId) -> DetachedSubtree {
        DetachedSubtree {
            key: key.map(str::to_string),
            root,
            nodes: self.nodes,
        }
    }
}
