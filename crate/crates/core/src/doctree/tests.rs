use std::collections::BTreeSet;

use super::*;

/// Four-object file mirroring the running example: a catalog root with
/// /Type, /Pages, and /OpenAction children, a JavaScript exploit object
/// behind /OpenAction, and two objects referring to each other.
fn example_pdf() -> Vec<u8> {
    b"%PDF-1.4\n\
1 0 obj\n<< /Type /Catalog /Pages 3 0 R /OpenAction 2 0 R >>\nendobj\n\
2 0 obj\n<< /Type /Action /S /JavaScript /JS (app.alert(1)) >>\nendobj\n\
3 0 obj\n<< /Type /Pages /Kids [4 0 R] /Count 1 >>\nendobj\n\
4 0 obj\n<< /Type /Page /Parent 3 0 R >>\nendobj\n\
trailer\n<< /Size 5 /Root 1 0 R >>\n%%EOF\n"
        .to_vec()
}

fn p(s: &str) -> StructuralPath {
    s.parse().unwrap()
}

#[test]
fn parses_example_into_expected_tree() {
    let tree = parse_pdf(&example_pdf()).unwrap();
    assert_eq!(tree.root(), ObjId(1));
    assert_eq!(
        tree.root_child_names(),
        vec!["OpenAction".to_string(), "Pages".to_string(), "Type".to_string()]
    );
    let paths = tree.path_set();
    for expect in [
        "/Root/Type",
        "/Root/Pages",
        "/Root/Pages/Kids",
        "/Root/Pages/Count",
        "/Root/OpenAction",
        "/Root/OpenAction/JS",
        "/Root/OpenAction/S",
    ] {
        assert!(paths.contains(&p(expect)), "missing {expect}");
    }
}

#[test]
fn parses_minimal_single_object_document() {
    let bytes = b"%PDF-1.4\n1 0 obj\n<< /Type /Catalog >>\nendobj\ntrailer\n<< /Root 1 0 R >>\n";
    let tree = parse_pdf(bytes).unwrap();
    assert_eq!(tree.path_set(), BTreeSet::from([p("/Root/Type")]));
}

#[test]
fn mutual_references_take_shortest_depth() {
    // Objects 3 and 4 refer to each other (Kids and Parent). Hand-computed
    // BFS over the reference graph: 3 sits at depth 1 under /Pages, 4 at
    // depth 3 through the Kids array, and the back edge 4 -> 3 is ignored.
    let tree = parse_pdf(&example_pdf()).unwrap();
    let span = tree.span();
    assert_eq!(span.depth[&ObjId(3)], 1);
    assert_eq!(span.depth[&ObjId(4)], 3);
    assert_eq!(tree.path_of(ObjId(3)).unwrap(), &p("/Root/Pages"));
    assert_eq!(tree.path_of(ObjId(4)).unwrap(), &p("/Root/Pages/Kids"));
    // every object appears exactly once in the spanning structure
    let mut seen = BTreeSet::new();
    for id in &span.order {
        assert!(seen.insert(*id), "{id} discovered twice");
    }
}

#[test]
fn missing_trailer_root_is_malformed() {
    let bytes = b"%PDF-1.4\n1 0 obj\n<< /Type /Catalog >>\nendobj\n";
    assert!(matches!(
        parse_pdf(bytes),
        Err(DocError::MalformedDocument(_))
    ));
}

#[test]
fn unreachable_objects_stay_in_store() {
    let bytes = b"%PDF-1.4\n\
1 0 obj\n<< /Type /Catalog >>\nendobj\n\
7 0 obj\n<< /Loop 8 0 R >>\nendobj\n\
8 0 obj\n<< /Loop 7 0 R >>\nendobj\n\
trailer\n<< /Root 1 0 R >>\n";
    let tree = parse_pdf(bytes).unwrap();
    assert!(tree.node(ObjId(7)).is_some());
    assert!(tree.node(ObjId(8)).is_some());
    assert!(tree.path_of(ObjId(7)).is_none());
}

fn payload_subtree() -> DetachedSubtree {
    let mut b = TreeBuilder::new();
    let js = b.text("var shell = unescape('%u4141%u4141');");
    b.build_detached(Some("JS"), js)
}

/// Synthetic malicious tree: payload at /Root/OpenAction/JS plus a Pages
/// subtree whose page object is also referenced from an annotation.
fn malicious_tree() -> (DocTree, ExploitMarker) {
    let mut b = TreeBuilder::new();
    let catalog = b.name("Catalog");
    let js = b.text("var shell = unescape('%u4141%u4141');");
    let s = b.name("JavaScript");
    let open_action = b.dict(vec![("S", s), ("JS", js)]);
    let page_type = b.name("Page");
    let page = b.dict(vec![("Type", page_type)]);
    let kids = b.array(vec![page]);
    let count = b.number(1.0);
    let pages_type = b.name("Pages");
    let pages = b.dict(vec![("Type", pages_type), ("Kids", kids), ("Count", count)]);
    let annots = b.array(vec![page]);
    let names = b.dict(vec![("Annots", annots)]);
    let root = b.dict(vec![
        ("Type", catalog),
        ("Pages", pages),
        ("OpenAction", open_action),
        ("Extras", names),
    ]);
    let tree = b.build(root, None).unwrap();
    let fp = tree.fingerprint(tree.nodes_at(&p("/Root/OpenAction/JS"))[0]);
    let marker = ExploitMarker::standard(fp);
    (tree.with_markers(Some(marker.clone())), marker)
}

#[test]
fn delete_subtree_removes_exploit_object() {
    let (tree, marker) = malicious_tree();
    assert!(is_malicious_proxy(&tree, &marker));
    let after = tree.delete_subtree(&p("/Root/OpenAction")).unwrap();
    assert!(!is_malicious_proxy(&after, &marker));
    assert!(!after.path_set().contains(&p("/Root/OpenAction/JS")));
    // Pages subtree is untouched.
    assert!(after.path_set().contains(&p("/Root/Pages/Kids")));
}

#[test]
fn delete_only_child_leaves_empty_root() {
    let mut b = TreeBuilder::new();
    let v = b.name("Catalog");
    let root = b.dict(vec![("Type", v)]);
    let tree = b.build(root, None).unwrap();
    let after = tree.delete_subtree(&p("/Root/Type")).unwrap();
    assert!(after.path_set().is_empty());
    assert_eq!(after.root_child_names(), Vec::<String>::new());
}

#[test]
fn doubly_referenced_node_survives_single_deletion() {
    // Page object reachable both under /Pages/Kids and /Extras/Annots.
    let (tree, _) = malicious_tree();
    let before_paths = tree.path_set();
    assert!(before_paths.contains(&p("/Root/Extras/Annots")));
    let after = tree.delete_subtree(&p("/Root/Pages")).unwrap();
    // The page node survives via the annotation edge and its subtree's
    // paths re-root under the surviving prefix.
    assert!(after.path_set().contains(&p("/Root/Extras/Annots/Type")));
    assert!(!after.path_set().contains(&p("/Root/Pages")));
}

#[test]
fn delete_missing_path_errors() {
    let (tree, _) = malicious_tree();
    assert!(matches!(
        tree.delete_subtree(&p("/Root/Nope")),
        Err(DocError::PathNotFound(_))
    ));
}

#[test]
fn insert_metadata_subtree_under_root() {
    let (tree, _) = malicious_tree();
    let mut b = TreeBuilder::new();
    let len = b.number(120.0);
    let ty = b.name("XML");
    let meta = b.dict(vec![("Length", len), ("Type", ty)]);
    let sub = b.build_detached(Some("Metadata"), meta);
    let after = tree.insert_subtree(&StructuralPath::root(), &sub).unwrap();
    assert!(after.path_set().contains(&p("/Root/Metadata/Length")));
    assert!(after.path_set().contains(&p("/Root/Metadata/Type")));
    // insert then delete the same fresh subtree restores the original
    let back = after.delete_subtree(&p("/Root/Metadata")).unwrap();
    assert_eq!(back.path_set(), tree.path_set());
}

#[test]
fn insert_duplicate_key_replaces_existing_child() {
    let (tree, _) = malicious_tree();
    let mut b = TreeBuilder::new();
    let v = b.name("Replacement");
    let sub = b.build_detached(Some("Type"), v);
    let after = tree.insert_subtree(&StructuralPath::root(), &sub).unwrap();
    let type_node = after.nodes_at(&p("/Root/Type"))[0];
    assert_eq!(
        after.node(type_node).unwrap().payload,
        NodePayload::Name("Replacement".into())
    );
}

#[test]
fn keyed_graft_into_array_is_kind_mismatch() {
    let (tree, _) = malicious_tree();
    let mut b = TreeBuilder::new();
    let v = b.null();
    let sub = b.build_detached(Some("Key"), v);
    assert!(matches!(
        tree.insert_subtree(&p("/Root/Pages/Kids"), &sub),
        Err(DocError::KindMismatch(_))
    ));
}

#[test]
fn replace_equals_delete_plus_insert() {
    let (tree, _) = malicious_tree();
    let mut b = TreeBuilder::new();
    let n = b.number(7.0);
    let sub = b.build_detached(Some("Count"), n);
    let replaced = tree.replace_subtree(&p("/Root/Pages/Count"), &sub).unwrap();
    let composed = tree
        .delete_subtree(&p("/Root/Pages/Count"))
        .unwrap()
        .insert_subtree(&p("/Root/Pages"), &sub)
        .unwrap();
    assert_eq!(replaced.path_set(), composed.path_set());
}

#[test]
fn move_exploit_between_triggers() {
    let (tree, marker) = malicious_tree();
    let moved = tree
        .move_exploit(&p("/Root/OpenAction/JS"), &p("/Root/Pages/Kids/AA"))
        .unwrap();
    assert!(is_malicious_proxy(&moved, &marker));
    assert!(!moved.path_set().contains(&p("/Root/OpenAction/JS")));
    assert!(moved.path_set().contains(&p("/Root/Pages/Kids/AA")));
}

#[test]
fn move_exploit_to_same_trigger_is_identity() {
    let (tree, _) = malicious_tree();
    let moved = tree
        .move_exploit(&p("/Root/OpenAction/JS"), &p("/Root/OpenAction/JS"))
        .unwrap();
    assert_eq!(moved, tree);
}

#[test]
fn move_exploit_all_placements_stay_malicious() {
    let (tree, marker) = malicious_tree();
    let mut current = tree;
    let mut from = p("/Root/OpenAction/JS");
    for target in ExploitMarker::standard_trigger_points() {
        current = current.move_exploit(&from, &target).unwrap();
        assert!(is_malicious_proxy(&current, &marker), "failed at {target}");
        from = target;
    }
}

#[test]
fn move_exploit_requires_payload_at_source() {
    let (tree, _) = malicious_tree();
    assert!(matches!(
        tree.move_exploit(&p("/Root/Pages/Kids/AA"), &p("/Root/OpenAction/JS")),
        Err(DocError::NoPayloadAtSource(_))
    ));
}

#[test]
fn proxy_state_tracks_payload_presence() {
    let (tree, marker) = malicious_tree();
    assert!(is_malicious_proxy(&tree, &marker));
    let cleaned = tree.delete_subtree(&p("/Root/OpenAction")).unwrap();
    assert!(!is_malicious_proxy(&cleaned, &marker));
    // A payload-shaped node outside the trigger paths does not count.
    let decoy = cleaned
        .insert_subtree(&StructuralPath::root(), &payload_subtree().with_key("Decoy"))
        .unwrap();
    assert!(!is_malicious_proxy(&decoy, &marker));
}

#[test]
fn tree_json_round_trip() {
    let (tree, _) = malicious_tree();
    let text = save_tree(&tree);
    let loaded = load_tree(&text).unwrap();
    assert_eq!(loaded.path_set(), tree.path_set());
    assert_eq!(save_tree(&loaded), text);
    assert_eq!(loaded.markers(), tree.markers());
}

#[test]
fn empty_root_round_trips() {
    let mut b = TreeBuilder::new();
    let root = b.dict(vec![]);
    let tree = b.build(root, None).unwrap();
    let loaded = load_tree(&save_tree(&tree)).unwrap();
    assert!(loaded.path_set().is_empty());
    let bytes = serialize_pdf(&tree).unwrap();
    let reparsed = parse_pdf(&bytes).unwrap();
    assert!(reparsed.path_set().is_empty());
}

#[test]
fn handwritten_schema_matches_parser_output() {
    // The example document expressed directly in the exchange schema.
    let text = r##"{
      "root": 1,
      "nodes": {
        "1": {"kind":"dict","entries":[["OpenAction",2],["Pages",3],["Type",10]]},
        "2": {"kind":"dict","entries":[["JS",12],["S",11],["Type",13]]},
        "3": {"kind":"dict","entries":[["Count",15],["Kids",14],["Type",16]]},
        "4": {"kind":"dict","entries":[["Parent",3],["Type",17]]},
        "10": {"kind":"name","value":"Catalog"},
        "11": {"kind":"name","value":"JavaScript"},
        "12": {"kind":"string","value":"app.alert(1)"},
        "13": {"kind":"name","value":"Action"},
        "14": {"kind":"array","entries":[4]},
        "15": {"kind":"number","value":1},
        "16": {"kind":"name","value":"Pages"},
        "17": {"kind":"name","value":"Page"}
      }
    }"##;
    let loaded = load_tree(text).unwrap();
    let parsed = parse_pdf(&example_pdf()).unwrap();
    assert_eq!(loaded.path_set(), parsed.path_set());
}

#[test]
fn schema_violations_are_reported() {
    assert!(matches!(
        load_tree("{\"root\": 1, \"nodes\": {}}"),
        Err(DocError::SchemaViolation(_))
    ));
    assert!(matches!(
        load_tree("{\"root\": 1, \"nodes\": {\"1\": {\"kind\": \"wat\"}}}"),
        Err(DocError::SchemaViolation(_))
    ));
}

#[test]
fn pdf_round_trip_preserves_paths() {
    let (tree, _) = malicious_tree();
    let bytes = serialize_pdf(&tree).unwrap();
    let reparsed = parse_pdf(&bytes).unwrap();
    assert_eq!(reparsed.path_set(), tree.path_set());
}

#[test]
fn stream_meta_survives_round_trips() {
    let mut b = TreeBuilder::new();
    let len = b.number(11.0);
    let stream = b.stream(vec![("Length", len)], 11, Some("FlateDecode"));
    let root = b.dict(vec![("Contents", stream)]);
    let tree = b.build(root, None).unwrap();

    let loaded = load_tree(&save_tree(&tree)).unwrap();
    assert_eq!(loaded.path_set(), tree.path_set());

    let reparsed = parse_pdf(&serialize_pdf(&tree).unwrap()).unwrap();
    assert_eq!(reparsed.path_set(), tree.path_set());
    let stream_id = reparsed.nodes_at(&p("/Root/Contents"))[0];
    match &reparsed.node(stream_id).unwrap().payload {
        NodePayload::Stream { meta, .. } => {
            assert_eq!(meta.len, 11);
            assert_eq!(meta.filter.as_deref(), Some("FlateDecode"));
        }
        other => panic!("expected stream, got {other:?}"),
    }
}

#[test]
fn spanning_depth_matches_independent_bfs() {
    // Independent oracle: plain BFS over the raw edge lists.
    let (tree, _) = malicious_tree();
    let mut depth = std::collections::BTreeMap::new();
    depth.insert(tree.root(), 0usize);
    let mut queue = std::collections::VecDeque::from([tree.root()]);
    while let Some(id) = queue.pop_front() {
        for (_, child) in tree.node(id).unwrap().edges() {
            if !depth.contains_key(&child) {
                depth.insert(child, depth[&id] + 1);
                queue.push_back(child);
            }
        }
    }
    for (id, d) in &depth {
        assert_eq!(tree.span().depth[id], *d, "depth mismatch for {id}");
    }
    assert_eq!(depth.len(), tree.span().order.len());
}
