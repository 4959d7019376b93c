//! Reverse mimicry: inject a malicious payload (with its reference
//! closure) into a benign document at the payload's original trigger
//! path.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::doctree::{
    DetachedSubtree, DocNode, DocTree, ExploitMarker, NodePayload, ObjId, StructuralPath,
};

use super::{AttackError, Result};

/// A payload lifted out of a malicious document: the trigger path it
/// lived at and the subtree closed over every reference it holds.
#[derive(Clone, Debug)]
pub struct ExtractedPayload {
    pub source_path: StructuralPath,
    pub subtree: DetachedSubtree,
}

/// Finds the marker payload in a malicious tree and detaches it together
/// with its full reference closure (all nodes reachable from the payload
/// through any edge), so the injected copy keeps its dependencies.
pub fn extract_payload(tree: &DocTree, marker: &ExploitMarker) -> Option<ExtractedPayload> {
    for path in &marker.marker_paths {
        for id in tree.nodes_at(path) {
            if tree.fingerprint(*id) == marker.payload_fingerprint {
                return Some(ExtractedPayload {
                    source_path: path.clone(),
                    subtree: detach_closure(tree, *id, path.last().map(str::to_string)),
                });
            }
        }
    }
    None
}

fn detach_closure(tree: &DocTree, root: ObjId, key: Option<String>) -> DetachedSubtree {
    let mut members = BTreeSet::from([root]);
    let mut queue = VecDeque::from([root]);
    while let Some(id) = queue.pop_front() {
        for (_, child) in tree.node(id).expect("member node").edges() {
            if members.insert(child) {
                queue.push_back(child);
            }
        }
    }
    let mut nodes = BTreeMap::new();
    for m in &members {
        nodes.insert(*m, tree.node(*m).expect("member node").clone());
    }
    DetachedSubtree {
        key,
        root,
        nodes,
    }
}

/// Grafts the payload into a benign tree at its original trigger path.
/// The result is proxy-malicious iff the payload's reference closure was
/// complete.
pub fn reverse_mimicry(benign: &DocTree, payload: &ExtractedPayload) -> Result<DocTree> {
    // a closure with dropped nodes cannot be grafted as-is; repair the
    // dangling edges into reference leaves so the graft stays well formed
    let repaired = repair_dangling(&payload.subtree);
    benign
        .graft_at(&payload.source_path, &repaired)
        .map_err(|e| match e {
            crate::doctree::DocError::KindMismatch(_) => {
                AttackError::TriggerPathUnavailable(payload.source_path.clone())
            }
            other => AttackError::Doc(other),
        })
}

fn repair_dangling(sub: &DetachedSubtree) -> DetachedSubtree {
    let mut out = sub.clone();
    let mut next = out.nodes.keys().last().map(|id| id.0 + 1).unwrap_or(1);
    let missing: Vec<(ObjId, Vec<ObjId>)> = out
        .nodes
        .iter()
        .map(|(id, node)| {
            let gone: Vec<ObjId> = node
                .edges()
                .iter()
                .map(|(_, c)| *c)
                .filter(|c| !sub.nodes.contains_key(c))
                .collect();
            (*id, gone)
        })
        .filter(|(_, gone)| !gone.is_empty())
        .collect();
    for (id, gone) in missing {
        let mut remap = BTreeMap::new();
        for target in gone {
            let leaf = ObjId(next);
            next += 1;
            out.nodes
                .insert(leaf, DocNode::new(NodePayload::Reference(target)));
            remap.insert(target, leaf);
        }
        if let Some(node) = out.nodes.get_mut(&id) {
            rewrite(node, &remap);
        }
    }
    out
}

fn rewrite(node: &mut DocNode, remap: &BTreeMap<ObjId, ObjId>) {
    match &mut node.payload {
        NodePayload::Dict(entries) | NodePayload::Stream { entries, .. } => {
            for (_, id) in entries.iter_mut() {
                if let Some(n) = remap.get(id) {
                    *id = *n;
                }
            }
        }
        NodePayload::Array(items) => {
            for id in items.iter_mut() {
                if let Some(n) = remap.get(id) {
                    *id = *n;
                }
            }
        }
        _ => {}
    }
}
