//! PDF-like document trees.
//!
//! A document is a store of nodes connected by named (dictionary) or
//! positional (array) edges; indirect references and inline values are
//! represented uniformly as edges into the store. The tree view is the
//! BFS shortest-path spanning structure from the root over that graph,
//! with ties broken by lexicographic key order and array index order.
//! Unreachable nodes stay in the store but are excluded from the
//! spanning structure.

mod builder;
mod json;
mod path;
mod pdf;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::util::sha256_hex;

pub use builder::TreeBuilder;
pub use json::{load_tree, save_tree};
pub use path::StructuralPath;
pub use pdf::{parse_pdf, serialize_pdf};

pub type Result<T> = std::result::Result<T, DocError>;

#[derive(Debug, thiserror::Error)]
pub enum DocError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("path not found: {0}")]
    PathNotFound(StructuralPath),
    #[error("kind mismatch: {0}")]
    KindMismatch(String),
    #[error("no payload at source trigger {0}")]
    NoPayloadAtSource(StructuralPath),
    #[error("{0} is not a registered trigger point")]
    NotATrigger(StructuralPath),
    #[error("node {0} is not serializable: {1}")]
    Unserializable(ObjId, String),
}

/// Object identifier. For parsed PDFs this is the object number;
/// inline values and synthetic nodes get opaque ids above the largest
/// object number.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct ObjId(pub u64);

impl std::fmt::Display for ObjId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Stream metadata: byte length plus the (first) filter name. Stream
/// contents themselves are out of scope; only the shape is retained.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct StreamMeta {
    pub len: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub filter: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NodeKind {
    Dictionary,
    Array,
    Name,
    String,
    Number,
    Boolean,
    Stream,
    Null,
    Reference,
}

/// A single document node. Dictionary and stream nodes own ordered
/// name-keyed edges, arrays own positional edges, the rest are leaves.
/// `Reference` is only used for references whose target object does not
/// exist in the store (dangling); resolvable references are plain edges.
#[derive(Clone, PartialEq, Debug)]
pub enum NodePayload {
    Dict(Vec<(String, ObjId)>),
    Array(Vec<ObjId>),
    Stream {
        entries: Vec<(String, ObjId)>,
        meta: StreamMeta,
    },
    Name(String),
    Text(String),
    Number(f64),
    Boolean(bool),
    Null,
    Reference(ObjId),
}

#[derive(Clone, PartialEq, Debug)]
pub struct DocNode {
    pub payload: NodePayload,
}

impl DocNode {
    pub fn new(payload: NodePayload) -> Self {
        DocNode { payload }
    }

    pub fn kind(&self) -> NodeKind {
        match &self.payload {
            NodePayload::Dict(_) => NodeKind::Dictionary,
            NodePayload::Array(_) => NodeKind::Array,
            NodePayload::Stream { .. } => NodeKind::Stream,
            NodePayload::Name(_) => NodeKind::Name,
            NodePayload::Text(_) => NodeKind::String,
            NodePayload::Number(_) => NodeKind::Number,
            NodePayload::Boolean(_) => NodeKind::Boolean,
            NodePayload::Null => NodeKind::Null,
            NodePayload::Reference(_) => NodeKind::Reference,
        }
    }

    /// Keyed entries of a dictionary or stream node.
    pub fn dict_entries(&self) -> Option<&[(String, ObjId)]> {
        match &self.payload {
            NodePayload::Dict(e) | NodePayload::Stream { entries: e, .. } => Some(e),
            _ => None,
        }
    }

    fn dict_entries_mut(&mut self) -> Option<&mut Vec<(String, ObjId)>> {
        match &mut self.payload {
            NodePayload::Dict(e) | NodePayload::Stream { entries: e, .. } => Some(e),
            _ => None,
        }
    }

    pub fn is_dict_like(&self) -> bool {
        self.dict_entries().is_some()
    }

    pub fn dict_get(&self, key: &str) -> Option<ObjId> {
        self.dict_entries()
            .and_then(|e| e.iter().find(|(k, _)| k == key).map(|(_, id)| *id))
    }

    /// Outgoing edges in stored order.
    pub fn edges(&self) -> Vec<(EdgeLabel, ObjId)> {
        match &self.payload {
            NodePayload::Dict(e) | NodePayload::Stream { entries: e, .. } => e
                .iter()
                .map(|(k, id)| (EdgeLabel::Key(k.clone()), *id))
                .collect(),
            NodePayload::Array(items) => items
                .iter()
                .enumerate()
                .map(|(i, id)| (EdgeLabel::Index(i), *id))
                .collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum EdgeLabel {
    Key(String),
    Index(usize),
}

/// Exploit designation for the maliciousness proxy: the trigger paths
/// and a structural fingerprint of the payload. A tree is
/// proxy-malicious iff the payload sits at one of the marker paths.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ExploitMarker {
    pub trigger_points: Vec<StructuralPath>,
    pub marker_paths: Vec<StructuralPath>,
    pub payload_fingerprint: String,
}

impl ExploitMarker {
    /// The four standard exploit trigger paths.
    pub fn standard_trigger_points() -> Vec<StructuralPath> {
        [
            "/Root/Pages/Kids/AA",
            "/Root/Names/JavaScript/Names",
            "/Root/OpenAction/JS",
            "/Root/StructTreeRoot/JS",
        ]
        .iter()
        .map(|s| s.parse().expect("static path"))
        .collect()
    }

    /// Marker with the standard trigger points doubling as marker paths.
    pub fn standard(payload_fingerprint: String) -> Self {
        let triggers = Self::standard_trigger_points();
        ExploitMarker {
            trigger_points: triggers.clone(),
            marker_paths: triggers,
            payload_fingerprint,
        }
    }

    /// Trigger points must always include the four standard ones.
    pub fn validate(&self) -> Result<()> {
        for t in Self::standard_trigger_points() {
            if !self.trigger_points.contains(&t) {
                return Err(DocError::SchemaViolation(format!(
                    "marker is missing standard trigger point {t}"
                )));
            }
        }
        Ok(())
    }
}

/// BFS shortest-path spanning structure over the reference graph.
#[derive(Clone, Debug, Default)]
pub struct SpanningTree {
    /// Chosen tree edge per reachable non-root node.
    pub parent: BTreeMap<ObjId, (ObjId, EdgeLabel)>,
    pub depth: BTreeMap<ObjId, usize>,
    /// BFS discovery order, root first.
    pub order: Vec<ObjId>,
    /// Structural path of every reachable node (root has the empty path).
    pub paths: BTreeMap<ObjId, StructuralPath>,
    /// Nodes per structural path, in discovery order.
    pub path_index: BTreeMap<StructuralPath, Vec<ObjId>>,
}

/// An immutable document tree. Mutating operations return new trees.
#[derive(Clone, Debug)]
pub struct DocTree {
    root: ObjId,
    nodes: BTreeMap<ObjId, DocNode>,
    markers: Option<ExploitMarker>,
    span: SpanningTree,
}

impl PartialEq for DocTree {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.nodes == other.nodes && self.markers == other.markers
    }
}

impl DocTree {
    pub fn new(
        root: ObjId,
        nodes: BTreeMap<ObjId, DocNode>,
        markers: Option<ExploitMarker>,
    ) -> Result<Self> {
        if !nodes.contains_key(&root) {
            return Err(DocError::MalformedDocument(format!(
                "root object {root} is not in the store"
            )));
        }
        for (id, node) in &nodes {
            if let Some(entries) = node.dict_entries() {
                let mut seen = BTreeSet::new();
                for (k, _) in entries {
                    if !seen.insert(k) {
                        return Err(DocError::MalformedDocument(format!(
                            "duplicate dictionary key {k} in object {id}"
                        )));
                    }
                }
            }
            for (_, child) in node.edges() {
                if !nodes.contains_key(&child) {
                    return Err(DocError::MalformedDocument(format!(
                        "object {id} has an edge to missing object {child}"
                    )));
                }
            }
        }
        let span = compute_span(root, &nodes);
        Ok(DocTree {
            root,
            nodes,
            markers,
            span,
        })
    }

    pub fn root(&self) -> ObjId {
        self.root
    }

    pub fn node(&self, id: ObjId) -> Option<&DocNode> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> &BTreeMap<ObjId, DocNode> {
        &self.nodes
    }

    pub fn markers(&self) -> Option<&ExploitMarker> {
        self.markers.as_ref()
    }

    pub fn with_markers(&self, markers: Option<ExploitMarker>) -> DocTree {
        let mut t = self.clone();
        t.markers = markers;
        t
    }

    pub fn span(&self) -> &SpanningTree {
        &self.span
    }

    /// Structural path of a reachable node.
    pub fn path_of(&self, id: ObjId) -> Option<&StructuralPath> {
        self.span.paths.get(&id)
    }

    /// Reachable nodes whose structural path equals `path`, discovery order.
    pub fn nodes_at(&self, path: &StructuralPath) -> &[ObjId] {
        self.span
            .path_index
            .get(path)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// The set of non-root structural paths present in the tree.
    pub fn path_set(&self) -> BTreeSet<StructuralPath> {
        self.span
            .path_index
            .keys()
            .filter(|p| !p.is_root())
            .cloned()
            .collect()
    }

    /// Names of the root-child subtrees (the root's dictionary keys).
    pub fn root_child_names(&self) -> Vec<String> {
        match self.nodes[&self.root].dict_entries() {
            Some(entries) => {
                let mut names: Vec<String> = entries.iter().map(|(k, _)| k.clone()).collect();
                names.sort();
                names
            }
            None => Vec::new(),
        }
    }

    fn next_free_id(&self) -> u64 {
        self.nodes.keys().last().map(|id| id.0 + 1).unwrap_or(1)
    }

    /// Deletes the subtree rooted at `path`: removes every tree edge whose
    /// structural path is `path`, then drops objects whose reference count
    /// falls to zero. Objects still referenced elsewhere persist along
    /// their other paths.
    pub fn delete_subtree(&self, path: &StructuralPath) -> Result<DocTree> {
        if path.is_root() {
            return Err(DocError::PathNotFound(path.clone()));
        }
        let targets = self.nodes_at(path);
        if targets.is_empty() {
            return Err(DocError::PathNotFound(path.clone()));
        }
        let mut nodes = self.nodes.clone();
        for id in targets {
            let (parent, label) = self.span.parent[id].clone();
            remove_edge(&mut nodes, parent, &label, *id);
        }
        collect_garbage(&mut nodes, self.root);
        DocTree::new(self.root, nodes, self.markers.clone())
    }

    /// Grafts a detached subtree under the node at `parent_path`. Dict-like
    /// parents take a keyed child (an existing key is replaced), arrays
    /// take a keyless child appended at the end.
    pub fn insert_subtree(
        &self,
        parent_path: &StructuralPath,
        sub: &DetachedSubtree,
    ) -> Result<DocTree> {
        let parent = self
            .nodes_at(parent_path)
            .iter()
            .copied()
            .find(|id| {
                let n = &self.nodes[id];
                n.is_dict_like() || matches!(n.payload, NodePayload::Array(_))
            })
            .ok_or_else(|| DocError::PathNotFound(parent_path.clone()))?;
        let mut nodes = self.nodes.clone();
        let sub_root = graft_nodes(&mut nodes, self.next_free_id(), sub);
        attach_child(&mut nodes, parent, sub.key.as_deref(), sub_root)?;
        collect_garbage(&mut nodes, self.root);
        DocTree::new(self.root, nodes, self.markers.clone())
    }

    /// Replaces the subtree at `path` with a detached subtree, keeping the
    /// edge position (key or array slot) of the first node at that path.
    pub fn replace_subtree(&self, path: &StructuralPath, sub: &DetachedSubtree) -> Result<DocTree> {
        let targets = self.nodes_at(path);
        if path.is_root() || targets.is_empty() {
            return Err(DocError::PathNotFound(path.clone()));
        }
        let (anchor_parent, anchor_label) = self.span.parent[&targets[0]].clone();
        let mut nodes = self.nodes.clone();
        for id in targets {
            let (parent, label) = self.span.parent[id].clone();
            remove_edge(&mut nodes, parent, &label, *id);
        }
        let sub_root = graft_nodes(&mut nodes, self.next_free_id(), sub);
        match &anchor_label {
            EdgeLabel::Key(k) => {
                attach_child(&mut nodes, anchor_parent, Some(k), sub_root)?;
            }
            EdgeLabel::Index(_) => {
                attach_child(&mut nodes, anchor_parent, None, sub_root)?;
            }
        }
        collect_garbage(&mut nodes, self.root);
        DocTree::new(self.root, nodes, self.markers.clone())
    }

    /// Moves the exploit payload from one trigger point to another,
    /// preserving the payload node and all its internal references.
    /// Missing host structure along `to` is created.
    pub fn move_exploit(&self, from: &StructuralPath, to: &StructuralPath) -> Result<DocTree> {
        if let Some(marker) = &self.markers {
            if !marker.trigger_points.contains(from) {
                return Err(DocError::NotATrigger(from.clone()));
            }
            if !marker.trigger_points.contains(to) {
                return Err(DocError::NotATrigger(to.clone()));
            }
        }
        let payload = self
            .nodes_at(from)
            .iter()
            .copied()
            .find(|id| match &self.markers {
                Some(m) => self.fingerprint(*id) == m.payload_fingerprint,
                None => true,
            })
            .ok_or_else(|| DocError::NoPayloadAtSource(from.clone()))?;
        if from == to {
            return Ok(self.clone());
        }
        let mut nodes = self.nodes.clone();
        let (parent, label) = self.span.parent[&payload].clone();
        remove_edge(&mut nodes, parent, &label, payload);
        let mut next_id = self.next_free_id();
        let to_parent = to
            .parent()
            .ok_or_else(|| DocError::KindMismatch("cannot move payload to the root".into()))?;
        let host = self.plant_host(&mut nodes, &to_parent, &mut next_id)?;
        let key = to.last().expect("non-root target path");
        attach_child(&mut nodes, host, Some(key), payload)?;
        collect_garbage(&mut nodes, self.root);
        DocTree::new(self.root, nodes, self.markers.clone())
    }

    /// Returns a dict-like node whose canonical path is `path`, creating
    /// host structure in `nodes` where needed. Existing structure is only
    /// reused along canonical (tree-edge) paths; otherwise fresh
    /// dictionaries are chained so the planted path is not shadowed by a
    /// shorter route elsewhere in the reference graph.
    fn plant_host(
        &self,
        nodes: &mut BTreeMap<ObjId, DocNode>,
        path: &StructuralPath,
        next_id: &mut u64,
    ) -> Result<ObjId> {
        let pick_host = |ids: &[ObjId]| -> Option<ObjId> {
            ids.iter()
                .copied()
                .find(|id| self.nodes[id].is_dict_like())
                .or_else(|| {
                    ids.iter()
                        .copied()
                        .find(|id| matches!(self.nodes[id].payload, NodePayload::Array(_)))
                })
        };
        // Longest canonical prefix that still has a usable host.
        let segs = path.segments();
        let mut depth = 0usize;
        let mut host = self.root;
        let mut prefix = StructuralPath::root();
        for (i, seg) in segs.iter().enumerate() {
            let next_prefix = prefix.child(seg);
            match pick_host(self.nodes_at(&next_prefix)) {
                Some(h) => {
                    host = h;
                    prefix = next_prefix;
                    depth = i + 1;
                }
                None => break,
            }
        }
        let mut cur = if self.nodes[&host].is_dict_like() {
            host
        } else {
            // Canonical host is an array: plant a fresh dict element so
            // the continuation is not shadowed.
            let d = ObjId(*next_id);
            *next_id += 1;
            nodes.insert(d, DocNode::new(NodePayload::Dict(Vec::new())));
            attach_child(nodes, host, None, d)?;
            d
        };
        for seg in &segs[depth..] {
            let d = ObjId(*next_id);
            *next_id += 1;
            nodes.insert(d, DocNode::new(NodePayload::Dict(Vec::new())));
            attach_child(nodes, cur, Some(seg), d)?;
            cur = d;
        }
        Ok(cur)
    }

    /// Grafts a detached subtree so that it sits exactly at `path`,
    /// planting host structure as needed (see `plant_host`). An existing
    /// key at the final hop is replaced.
    pub fn graft_at(&self, path: &StructuralPath, sub: &DetachedSubtree) -> Result<DocTree> {
        let parent = path
            .parent()
            .ok_or_else(|| DocError::KindMismatch("cannot graft at the root".into()))?;
        let key = path.last().expect("non-root path");
        let mut nodes = self.nodes.clone();
        let mut next_id = self.next_free_id();
        let sub_root = graft_nodes(&mut nodes, next_id, sub);
        next_id += sub.nodes.len() as u64;
        let host = self.plant_host(&mut nodes, &parent, &mut next_id)?;
        attach_child(&mut nodes, host, Some(key), sub_root)?;
        collect_garbage(&mut nodes, self.root);
        DocTree::new(self.root, nodes, self.markers.clone())
    }

    /// Structural fingerprint of the subgraph hanging from a node:
    /// independent of object ids, sensitive to kinds, keys, values, and
    /// shape. Cycles are folded into a back-edge marker.
    pub fn fingerprint(&self, id: ObjId) -> String {
        let mut visiting = Vec::new();
        let enc = encode_structure(&self.nodes, id, &mut visiting);
        sha256_hex(enc.as_bytes())
    }

    /// Detaches a copy of the subtree spanned by tree edges under `id`.
    /// Edges leaving the spanned set become dangling reference leaves so
    /// the keyed structure (and thus the path set) is preserved.
    pub fn detach_subtree(&self, id: ObjId, key: Option<String>) -> Result<DetachedSubtree> {
        if !self.span.paths.contains_key(&id) {
            return Err(DocError::MalformedDocument(format!(
                "object {id} is not reachable"
            )));
        }
        let mut members = BTreeSet::new();
        let mut queue = VecDeque::from([id]);
        members.insert(id);
        while let Some(n) = queue.pop_front() {
            for (label, child) in self.nodes[&n].edges() {
                if self.span.parent.get(&child) == Some(&(n, label)) && members.insert(child) {
                    queue.push_back(child);
                }
            }
        }
        let mut nodes = BTreeMap::new();
        let mut next_ref = members.iter().last().map(|m| m.0 + 1).unwrap_or(1);
        for m in &members {
            let mut node = self.nodes[m].clone();
            rewrite_edges(&mut node, |child| {
                if members.contains(&child) {
                    child
                } else {
                    let leaf = ObjId(next_ref);
                    next_ref += 1;
                    nodes.insert(leaf, DocNode::new(NodePayload::Reference(child)));
                    leaf
                }
            });
            nodes.insert(*m, node);
        }
        Ok(DetachedSubtree {
            key,
            root: id,
            nodes,
        })
    }
}

/// A subtree detached from its host tree, ready to graft elsewhere.
/// `key` names the edge used when grafting under a dictionary parent.
#[derive(Clone, PartialEq, Debug)]
pub struct DetachedSubtree {
    pub key: Option<String>,
    pub root: ObjId,
    pub nodes: BTreeMap<ObjId, DocNode>,
}

impl DetachedSubtree {
    pub fn with_key(&self, key: impl Into<String>) -> DetachedSubtree {
        let mut s = self.clone();
        s.key = Some(key.into());
        s
    }

    /// Number of nodes in the subtree (grafting cost proxy).
    pub fn size(&self) -> usize {
        self.nodes.len()
    }
}

/// True iff the payload designated by `marker` currently sits at one of
/// the marker paths. Payload identity is checked structurally, not by
/// path, so moving the payload between trigger points keeps this true.
pub fn is_malicious_proxy(tree: &DocTree, marker: &ExploitMarker) -> bool {
    marker.marker_paths.iter().any(|p| {
        tree.nodes_at(p)
            .iter()
            .any(|id| tree.fingerprint(*id) == marker.payload_fingerprint)
    })
}

fn rewrite_edges(node: &mut DocNode, mut f: impl FnMut(ObjId) -> ObjId) {
    match &mut node.payload {
        NodePayload::Dict(entries) | NodePayload::Stream { entries, .. } => {
            for (_, id) in entries.iter_mut() {
                *id = f(*id);
            }
        }
        NodePayload::Array(items) => {
            for id in items.iter_mut() {
                *id = f(*id);
            }
        }
        _ => {}
    }
}

/// Copies the subtree's nodes into `nodes` under fresh ids; returns the
/// grafted root id.
fn graft_nodes(nodes: &mut BTreeMap<ObjId, DocNode>, first_free: u64, sub: &DetachedSubtree) -> ObjId {
    let mut remap = BTreeMap::new();
    let mut next = first_free;
    for old in sub.nodes.keys() {
        remap.insert(*old, ObjId(next));
        next += 1;
    }
    for (old, node) in &sub.nodes {
        let mut node = node.clone();
        rewrite_edges(&mut node, |child| remap.get(&child).copied().unwrap_or(child));
        nodes.insert(remap[old], node);
    }
    remap[&sub.root]
}

/// Attaches `child` under `parent`: keyed for dict-like parents
/// (replacing an existing key), positional for arrays.
fn attach_child(
    nodes: &mut BTreeMap<ObjId, DocNode>,
    parent: ObjId,
    key: Option<&str>,
    child: ObjId,
) -> Result<()> {
    let parent_node = nodes.get_mut(&parent).expect("parent exists");
    match (&mut parent_node.payload, key) {
        (NodePayload::Dict(_) | NodePayload::Stream { .. }, Some(k)) => {
            let entries = parent_node.dict_entries_mut().expect("dict-like");
            if let Some(slot) = entries.iter_mut().find(|(name, _)| name == k) {
                slot.1 = child;
            } else {
                entries.push((k.to_string(), child));
            }
            Ok(())
        }
        (NodePayload::Array(items), None) => {
            items.push(child);
            Ok(())
        }
        (NodePayload::Array(_), Some(k)) => Err(DocError::KindMismatch(format!(
            "cannot graft keyed child {k} into an array"
        ))),
        (NodePayload::Dict(_) | NodePayload::Stream { .. }, None) => Err(DocError::KindMismatch(
            "dictionary graft requires a key".into(),
        )),
        _ => Err(DocError::KindMismatch(
            "graft parent must be a dictionary, stream, or array".into(),
        )),
    }
}

fn remove_edge(nodes: &mut BTreeMap<ObjId, DocNode>, parent: ObjId, label: &EdgeLabel, child: ObjId) {
    let node = nodes.get_mut(&parent).expect("edge parent exists");
    match (&mut node.payload, label) {
        (NodePayload::Dict(entries) | NodePayload::Stream { entries, .. }, EdgeLabel::Key(k)) => {
            entries.retain(|(name, id)| !(name == k && *id == child));
        }
        (NodePayload::Array(items), EdgeLabel::Index(i)) => {
            if *i < items.len() && items[*i] == child {
                items.remove(*i);
            } else if let Some(pos) = items.iter().position(|id| *id == child) {
                items.remove(pos);
            }
        }
        _ => {}
    }
}

/// Drops nodes whose in-edge count is zero (other than the root),
/// cascading. Reference cycles keep each other alive by design.
fn collect_garbage(nodes: &mut BTreeMap<ObjId, DocNode>, root: ObjId) {
    loop {
        let mut counts: BTreeMap<ObjId, usize> = nodes.keys().map(|id| (*id, 0)).collect();
        for node in nodes.values() {
            for (_, child) in node.edges() {
                if let Some(c) = counts.get_mut(&child) {
                    *c += 1;
                }
            }
        }
        let dead: Vec<ObjId> = counts
            .iter()
            .filter(|(id, c)| **c == 0 && **id != root)
            .map(|(id, _)| *id)
            .collect();
        if dead.is_empty() {
            return;
        }
        for id in dead {
            nodes.remove(&id);
        }
    }
}

fn encode_structure(
    nodes: &BTreeMap<ObjId, DocNode>,
    id: ObjId,
    visiting: &mut Vec<ObjId>,
) -> String {
    if visiting.contains(&id) {
        return "^".to_string();
    }
    let node = match nodes.get(&id) {
        Some(n) => n,
        None => return "?".to_string(),
    };
    visiting.push(id);
    let enc = match &node.payload {
        NodePayload::Dict(entries) => {
            let mut sorted: Vec<&(String, ObjId)> = entries.iter().collect();
            sorted.sort_by(|a, b| a.0.cmp(&b.0));
            let body: String = sorted
                .iter()
                .map(|(k, c)| format!("{k}={};", encode_structure(nodes, *c, visiting)))
                .collect();
            format!("D{{{body}}}")
        }
        NodePayload::Stream { entries, meta } => {
            let mut sorted: Vec<&(String, ObjId)> = entries.iter().collect();
            sorted.sort_by(|a, b| a.0.cmp(&b.0));
            let body: String = sorted
                .iter()
                .map(|(k, c)| format!("{k}={};", encode_structure(nodes, *c, visiting)))
                .collect();
            format!(
                "S{}:{}{{{body}}}",
                meta.len,
                meta.filter.as_deref().unwrap_or("-")
            )
        }
        NodePayload::Array(items) => {
            let body: String = items
                .iter()
                .map(|c| format!("{},", encode_structure(nodes, *c, visiting)))
                .collect();
            format!("A[{body}]")
        }
        NodePayload::Name(v) => format!("N:{v}"),
        NodePayload::Text(v) => format!("T:{v}"),
        NodePayload::Number(v) => format!("F:{v}"),
        NodePayload::Boolean(v) => format!("B:{v}"),
        NodePayload::Null => "Z".to_string(),
        NodePayload::Reference(_) => "R".to_string(),
    };
    visiting.pop();
    enc
}

/// BFS from the root with children enumerated in lexicographic key order
/// (dictionaries) and index order (arrays). Processing the frontier FIFO
/// with that child order yields, for every node, the lexicographically
/// smallest among its shortest paths.
fn compute_span(root: ObjId, nodes: &BTreeMap<ObjId, DocNode>) -> SpanningTree {
    let mut span = SpanningTree::default();
    span.depth.insert(root, 0);
    span.paths.insert(root, StructuralPath::root());
    span.path_index
        .insert(StructuralPath::root(), vec![root]);
    span.order.push(root);
    let mut queue = VecDeque::from([root]);
    while let Some(id) = queue.pop_front() {
        let here = span.paths[&id].clone();
        let depth = span.depth[&id];
        let mut edges = nodes[&id].edges();
        if nodes[&id].is_dict_like() {
            edges.sort_by(|a, b| a.0.cmp(&b.0));
        }
        for (label, child) in edges {
            if span.depth.contains_key(&child) {
                continue;
            }
            let path = match &label {
                EdgeLabel::Key(k) => here.child(k),
                EdgeLabel::Index(_) => here.clone(),
            };
            span.parent.insert(child, (id, label));
            span.depth.insert(child, depth + 1);
            span.paths.insert(child, path.clone());
            span.path_index.entry(path).or_default().push(child);
            span.order.push(child);
            queue.push_back(child);
        }
    }
    span
}

#[cfg(test)]
mod tests;
