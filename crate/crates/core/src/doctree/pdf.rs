//! Lenient parser and serializer for the PDF subset the pipeline needs:
//! header, `obj`/`endobj` bodies (dictionaries, arrays, names, numbers,
//! strings, streams, indirect references), and a trailer with /Root.
//! The cross-reference table is ignored on input — objects are located
//! by scanning — and regenerated on output. Stream contents are not
//! decoded; only their length and filter name are kept.

use std::collections::BTreeMap;

use super::{DocError, DocNode, DocTree, NodePayload, ObjId, Result, StreamMeta};

#[derive(Clone, Debug)]
enum PVal {
    Dict(Vec<(String, PVal)>),
    Array(Vec<PVal>),
    Name(String),
    Text(String),
    Number(f64),
    Boolean(bool),
    Null,
    Ref(u64),
    Stream {
        entries: Vec<(String, PVal)>,
        meta: StreamMeta,
    },
}

struct Lexer<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Lexer { bytes, pos: 0 }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while let Some(b) = self.peek() {
            match b {
                b' ' | b'\t' | b'\r' | b'\n' | b'\x0c' | b'\0' => self.pos += 1,
                b'%' => {
                    while let Some(c) = self.peek() {
                        self.pos += 1;
                        if c == b'\n' || c == b'\r' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn is_delim(b: u8) -> bool {
        matches!(b, b'(' | b')' | b'<' | b'>' | b'[' | b']' | b'{' | b'}' | b'/' | b'%')
    }

    fn is_regular(b: u8) -> bool {
        !Self::is_delim(b) && !matches!(b, b' ' | b'\t' | b'\r' | b'\n' | b'\x0c' | b'\0')
    }

    fn keyword(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while let Some(b) = self.peek() {
            if Self::is_regular(b) {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos > start {
            Some(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
        } else {
            None
        }
    }

    /// Tries to parse `<int> <int> <kw>` at the current position.
    fn obj_header(&mut self, kw: &str) -> Option<u64> {
        let save = self.pos;
        let num = self.unsigned_int()?;
        let _gen = match self.unsigned_int() {
            Some(g) => g,
            None => {
                self.pos = save;
                return None;
            }
        };
        match self.keyword() {
            Some(k) if k == kw => Some(num),
            _ => {
                self.pos = save;
                None
            }
        }
    }

    fn unsigned_int(&mut self) -> Option<u64> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().map(|b| b.is_ascii_digit()).unwrap_or(false) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()?
            .parse()
            .ok()
    }

    fn name(&mut self) -> Result<String> {
        // caller consumed '/'
        let mut out = String::new();
        while let Some(b) = self.peek() {
            if !Self::is_regular(b) {
                break;
            }
            self.pos += 1;
            if b == b'#' {
                let hex = |d: Option<u8>| d.and_then(|c| (c as char).to_digit(16));
                let hi = hex(self.bytes.get(self.pos).copied());
                let lo = hex(self.bytes.get(self.pos + 1).copied());
                if let (Some(hi), Some(lo)) = (hi, lo) {
                    out.push(((hi * 16 + lo) as u8) as char);
                    self.pos += 2;
                    continue;
                }
            }
            out.push(b as char);
        }
        Ok(out)
    }

    fn literal_string(&mut self) -> String {
        // caller consumed '('
        let mut out = Vec::new();
        let mut depth = 1usize;
        while let Some(b) = self.peek() {
            self.pos += 1;
            match b {
                b'\\' => {
                    if let Some(esc) = self.peek() {
                        self.pos += 1;
                        match esc {
                            b'n' => out.push(b'\n'),
                            b'r' => out.push(b'\r'),
                            b't' => out.push(b'\t'),
                            b'b' => out.push(8),
                            b'f' => out.push(12),
                            b'0'..=b'7' => {
                                let mut v = (esc - b'0') as u32;
                                for _ in 0..2 {
                                    match self.peek() {
                                        Some(d @ b'0'..=b'7') => {
                                            v = v * 8 + (d - b'0') as u32;
                                            self.pos += 1;
                                        }
                                        _ => break,
                                    }
                                }
                                out.push(v as u8);
                            }
                            b'\n' => {}
                            other => out.push(other),
                        }
                    }
                }
                b'(' => {
                    depth += 1;
                    out.push(b);
                }
                b')' => {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                    out.push(b);
                }
                other => out.push(other),
            }
        }
        String::from_utf8_lossy(&out).into_owned()
    }

    fn hex_string(&mut self) -> String {
        // caller consumed '<'
        let mut digits = Vec::new();
        while let Some(b) = self.peek() {
            self.pos += 1;
            if b == b'>' {
                break;
            }
            if (b as char).is_ascii_hexdigit() {
                digits.push(b);
            }
        }
        if digits.len() % 2 == 1 {
            digits.push(b'0');
        }
        let bytes: Vec<u8> = digits
            .chunks(2)
            .map(|pair| {
                let hi = (pair[0] as char).to_digit(16).unwrap() as u8;
                let lo = (pair[1] as char).to_digit(16).unwrap() as u8;
                hi * 16 + lo
            })
            .collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'+') | Some(b'-')) {
            self.pos += 1;
        }
        while self
            .peek()
            .map(|b| b.is_ascii_digit() || b == b'.')
            .unwrap_or(false)
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| DocError::MalformedDocument("non-utf8 number".into()))?;
        text.parse()
            .map_err(|_| DocError::MalformedDocument(format!("bad number {text}")))
    }

    fn value(&mut self) -> Result<PVal> {
        self.skip_ws();
        let b = self
            .peek()
            .ok_or_else(|| DocError::MalformedDocument("unexpected end of input".into()))?;
        match b {
            b'/' => {
                self.pos += 1;
                Ok(PVal::Name(self.name()?))
            }
            b'(' => {
                self.pos += 1;
                Ok(PVal::Text(self.literal_string()))
            }
            b'<' => {
                if self.bytes.get(self.pos + 1) == Some(&b'<') {
                    self.pos += 2;
                    self.dict_body()
                } else {
                    self.pos += 1;
                    Ok(PVal::Text(self.hex_string()))
                }
            }
            b'[' => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    if self.peek() == Some(b']') {
                        self.pos += 1;
                        break;
                    }
                    if self.at_end() {
                        return Err(DocError::MalformedDocument("unterminated array".into()));
                    }
                    items.push(self.value()?);
                }
                Ok(PVal::Array(items))
            }
            b'0'..=b'9' | b'+' | b'-' | b'.' => {
                // An integer may begin an indirect reference `N G R`.
                let save = self.pos;
                if b.is_ascii_digit() {
                    if let Some(num) = self.unsigned_int() {
                        let after_num = self.pos;
                        if self.unsigned_int().is_some() {
                            let save_kw = self.pos;
                            match self.keyword() {
                                Some(k) if k == "R" => return Ok(PVal::Ref(num)),
                                _ => {
                                    self.pos = save_kw;
                                }
                            }
                        }
                        self.pos = after_num;
                        // Plain integer unless a fraction follows.
                        if self.peek() == Some(b'.') {
                            self.pos = save;
                            return Ok(PVal::Number(self.number()?));
                        }
                        return Ok(PVal::Number(num as f64));
                    }
                }
                self.pos = save;
                Ok(PVal::Number(self.number()?))
            }
            _ => {
                let kw = self
                    .keyword()
                    .ok_or_else(|| DocError::MalformedDocument(format!("unexpected byte {b:#x}")))?;
                match kw.as_str() {
                    "true" => Ok(PVal::Boolean(true)),
                    "false" => Ok(PVal::Boolean(false)),
                    "null" => Ok(PVal::Null),
                    other => Err(DocError::MalformedDocument(format!(
                        "unexpected keyword {other}"
                    ))),
                }
            }
        }
    }

    fn dict_body(&mut self) -> Result<PVal> {
        let mut entries = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'>') => {
                    if self.bytes.get(self.pos + 1) == Some(&b'>') {
                        self.pos += 2;
                        break;
                    }
                    return Err(DocError::MalformedDocument("stray > in dictionary".into()));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let key = self.name()?;
                    let val = self.value()?;
                    // PDF dictionaries cannot hold duplicate keys; last wins.
                    entries.retain(|(k, _): &(String, PVal)| k != &key);
                    entries.push((key, val));
                }
                Some(_) => {
                    return Err(DocError::MalformedDocument(
                        "dictionary key must be a name".into(),
                    ))
                }
                None => {
                    return Err(DocError::MalformedDocument("unterminated dictionary".into()))
                }
            }
        }
        Ok(PVal::Dict(entries))
    }

    /// Consumes stream data following a dictionary; returns its meta.
    fn stream_data(&mut self, dict: &[(String, PVal)]) -> Result<StreamMeta> {
        // positioned right after the `stream` keyword
        if self.peek() == Some(b'\r') {
            self.pos += 1;
        }
        if self.peek() == Some(b'\n') {
            self.pos += 1;
        }
        let start = self.pos;
        let declared = dict.iter().find(|(k, _)| k == "Length").and_then(|(_, v)| {
            if let PVal::Number(n) = v {
                Some(*n as usize)
            } else {
                None
            }
        });
        let filter = dict.iter().find(|(k, _)| k == "Filter").and_then(|(_, v)| match v {
            PVal::Name(n) => Some(n.clone()),
            PVal::Array(items) => items.iter().find_map(|i| {
                if let PVal::Name(n) = i {
                    Some(n.clone())
                } else {
                    None
                }
            }),
            _ => None,
        });
        // Trust a declared length only if `endstream` actually follows it.
        if let Some(len) = declared {
            let end = start + len;
            if end <= self.bytes.len() {
                let mut probe = Lexer {
                    bytes: self.bytes,
                    pos: end,
                };
                probe.skip_ws();
                if self.bytes[probe.pos..].starts_with(b"endstream") {
                    self.pos = probe.pos + b"endstream".len();
                    return Ok(StreamMeta {
                        len: len as u64,
                        filter,
                    });
                }
            }
        }
        let tail = &self.bytes[start..];
        let found = find_subslice(tail, b"endstream")
            .ok_or_else(|| DocError::MalformedDocument("unterminated stream".into()))?;
        let mut len = found;
        // Convention: the EOL before `endstream` is not part of the data.
        if len > 0 && tail[len - 1] == b'\n' {
            len -= 1;
        }
        if len > 0 && tail[len - 1] == b'\r' {
            len -= 1;
        }
        self.pos = start + found + b"endstream".len();
        Ok(StreamMeta {
            len: len as u64,
            filter,
        })
    }
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack
        .windows(needle.len())
        .position(|w| w == needle)
}

/// Parses a PDF byte string into a document tree. Objects are located by
/// scanning for `N G obj` headers; a trailer dictionary must resolve
/// /Root to a parsed object. Later definitions of the same object number
/// win, matching incremental-update semantics.
pub fn parse_pdf(bytes: &[u8]) -> Result<DocTree> {
    let mut lex = Lexer::new(bytes);
    let mut objects: BTreeMap<u64, PVal> = BTreeMap::new();
    let mut trailer_root: Option<u64> = None;
    while !lex.at_end() {
        lex.skip_ws();
        if lex.at_end() {
            break;
        }
        let save = lex.pos;
        if let Some(num) = lex.obj_header("obj") {
            match parse_object_body(&mut lex) {
                Ok(val) => {
                    objects.insert(num, val);
                    continue;
                }
                Err(_) => {
                    // Resync: skip this header and keep scanning.
                    lex.pos = save + 1;
                    continue;
                }
            }
        }
        lex.pos = save;
        match lex.keyword() {
            Some(kw) if kw == "trailer" => {
                lex.skip_ws();
                if lex.peek() == Some(b'<') && lex.bytes.get(lex.pos + 1) == Some(&b'<') {
                    lex.pos += 2;
                    if let Ok(PVal::Dict(entries)) = lex.dict_body() {
                        if let Some((_, PVal::Ref(r))) =
                            entries.iter().find(|(k, _)| k == "Root")
                        {
                            trailer_root = Some(*r);
                        }
                    }
                }
            }
            Some(_) => {}
            None => {
                lex.pos += 1;
            }
        }
    }
    let root_num = trailer_root
        .ok_or_else(|| DocError::MalformedDocument("no trailer /Root resolvable".into()))?;
    if !objects.contains_key(&root_num) {
        return Err(DocError::MalformedDocument(format!(
            "trailer /Root points at missing object {root_num}"
        )));
    }
    let mut nodes = BTreeMap::new();
    let mut next_inline = objects.keys().max().copied().unwrap_or(0) + 1;
    let obj_nums: Vec<u64> = objects.keys().copied().collect();
    for num in &obj_nums {
        let val = objects[num].clone();
        materialize(&objects, val, Some(ObjId(*num)), &mut nodes, &mut next_inline);
    }
    DocTree::new(ObjId(root_num), nodes, None)
}

fn parse_object_body(lex: &mut Lexer) -> Result<PVal> {
    let val = lex.value()?;
    lex.skip_ws();
    let save = lex.pos;
    match lex.keyword() {
        Some(kw) if kw == "stream" => {
            let entries = match val {
                PVal::Dict(entries) => entries,
                _ => {
                    return Err(DocError::MalformedDocument(
                        "stream without a dictionary".into(),
                    ))
                }
            };
            let meta = lex.stream_data(&entries)?;
            lex.skip_ws();
            let save2 = lex.pos;
            if lex.keyword().as_deref() != Some("endobj") {
                lex.pos = save2;
            }
            Ok(PVal::Stream { entries, meta })
        }
        Some(kw) if kw == "endobj" => Ok(val),
        _ => {
            // Lenient: missing endobj is tolerated.
            lex.pos = save;
            Ok(val)
        }
    }
}

/// Converts a parsed value into store nodes. Top-level objects keep their
/// object number as id; inline values get fresh ids in document order.
fn materialize(
    objects: &BTreeMap<u64, PVal>,
    val: PVal,
    fixed_id: Option<ObjId>,
    nodes: &mut BTreeMap<ObjId, DocNode>,
    next_inline: &mut u64,
) -> ObjId {
    let id = fixed_id.unwrap_or_else(|| {
        let id = ObjId(*next_inline);
        *next_inline += 1;
        id
    });
    // Reserve the slot before recursing so child ids come out in order.
    nodes.insert(id, DocNode::new(NodePayload::Null));
    let payload = match val {
        PVal::Dict(entries) => NodePayload::Dict(materialize_entries(
            objects,
            entries,
            nodes,
            next_inline,
        )),
        PVal::Stream { entries, mut meta } => {
            // The filter may sit behind an indirect reference; resolve it
            // now that every object is known.
            if meta.filter.is_none() {
                meta.filter = entries
                    .iter()
                    .find(|(k, _)| k == "Filter")
                    .and_then(|(_, v)| resolve_name(objects, v));
            }
            NodePayload::Stream {
                entries: materialize_entries(objects, entries, nodes, next_inline),
                meta,
            }
        }
        PVal::Array(items) => NodePayload::Array(
            items
                .into_iter()
                .map(|v| materialize_value(objects, v, nodes, next_inline))
                .collect(),
        ),
        PVal::Name(v) => NodePayload::Name(v),
        PVal::Text(v) => NodePayload::Text(v),
        PVal::Number(v) => NodePayload::Number(v),
        PVal::Boolean(v) => NodePayload::Boolean(v),
        PVal::Null => NodePayload::Null,
        PVal::Ref(target) => {
            if objects.contains_key(&target) {
                // A bare top-level reference object aliases its target.
                NodePayload::Reference(ObjId(target))
            } else {
                NodePayload::Reference(ObjId(target))
            }
        }
    };
    nodes.insert(id, DocNode::new(payload));
    id
}

fn resolve_name(objects: &BTreeMap<u64, PVal>, val: &PVal) -> Option<String> {
    match val {
        PVal::Name(n) => Some(n.clone()),
        PVal::Ref(t) => match objects.get(t) {
            Some(PVal::Name(n)) => Some(n.clone()),
            _ => None,
        },
        PVal::Array(items) => items.iter().find_map(|i| resolve_name(objects, i)),
        _ => None,
    }
}

fn materialize_entries(
    objects: &BTreeMap<u64, PVal>,
    entries: Vec<(String, PVal)>,
    nodes: &mut BTreeMap<ObjId, DocNode>,
    next_inline: &mut u64,
) -> Vec<(String, ObjId)> {
    entries
        .into_iter()
        .map(|(k, v)| (k, materialize_value(objects, v, nodes, next_inline)))
        .collect()
}

fn materialize_value(
    objects: &BTreeMap<u64, PVal>,
    val: PVal,
    nodes: &mut BTreeMap<ObjId, DocNode>,
    next_inline: &mut u64,
) -> ObjId {
    match val {
        PVal::Ref(target) if objects.contains_key(&target) => ObjId(target),
        other => materialize(objects, other, None, nodes, next_inline),
    }
}

/// Serializes a tree to PDF bytes: `%PDF-1.4` header, one indirect object
/// per store node (ids remapped to 1..n), a valid cross-reference table,
/// and a trailer with /Root. Structural paths round-trip through
/// `parse_pdf`.
pub fn serialize_pdf(tree: &DocTree) -> Result<Vec<u8>> {
    let ids: Vec<ObjId> = tree.nodes().keys().copied().collect();
    let remap: BTreeMap<ObjId, u64> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (*id, (i + 1) as u64))
        .collect();
    // Dangling reference targets keep distinct numbers past the live range.
    let mut dangling: BTreeMap<ObjId, u64> = BTreeMap::new();
    let mut next_dangle = ids.len() as u64 + 1;
    for node in tree.nodes().values() {
        if let NodePayload::Reference(target) = &node.payload {
            if !remap.contains_key(target) && !dangling.contains_key(target) {
                dangling.insert(*target, next_dangle);
                next_dangle += 1;
            }
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(b"%PDF-1.4\n");
    let mut offsets = Vec::with_capacity(ids.len());
    for id in &ids {
        offsets.push(out.len());
        let num = remap[id];
        out.extend_from_slice(format!("{num} 0 obj\n").as_bytes());
        write_node(&mut out, tree, *id, &remap, &dangling)?;
        out.extend_from_slice(b"\nendobj\n");
    }
    let xref_at = out.len();
    out.extend_from_slice(format!("xref\n0 {}\n", ids.len() + 1).as_bytes());
    out.extend_from_slice(b"0000000000 65535 f \n");
    for off in &offsets {
        out.extend_from_slice(format!("{off:010} 00000 n \n").as_bytes());
    }
    let root_num = remap[&tree.root()];
    out.extend_from_slice(
        format!(
            "trailer\n<< /Size {} /Root {root_num} 0 R >>\nstartxref\n{xref_at}\n%%EOF\n",
            ids.len() + 1
        )
        .as_bytes(),
    );
    Ok(out)
}

fn write_node(
    out: &mut Vec<u8>,
    tree: &DocTree,
    id: ObjId,
    remap: &BTreeMap<ObjId, u64>,
    dangling: &BTreeMap<ObjId, u64>,
) -> Result<()> {
    let node = &tree.nodes()[&id];
    match &node.payload {
        NodePayload::Dict(entries) => {
            write_dict(out, entries, remap);
        }
        NodePayload::Stream { entries, meta } => {
            // /Length is emitted only when the dictionary already carries
            // it, so parse-back does not grow the path set; the scanner
            // finds `endstream` regardless.
            write_dict(out, entries, remap);
            out.extend_from_slice(b"\nstream\n");
            out.extend(std::iter::repeat_n(b' ', meta.len as usize));
            out.extend_from_slice(b"\nendstream");
        }
        NodePayload::Array(items) => {
            out.extend_from_slice(b"[ ");
            for item in items {
                out.extend_from_slice(format!("{} 0 R ", remap[item]).as_bytes());
            }
            out.extend_from_slice(b"]");
        }
        NodePayload::Name(v) => {
            out.push(b'/');
            for ch in v.bytes() {
                if Lexer::is_regular(ch) && ch != b'#' {
                    out.push(ch);
                } else {
                    out.extend_from_slice(format!("#{ch:02x}").as_bytes());
                }
            }
        }
        NodePayload::Text(v) => {
            out.push(b'(');
            for ch in v.bytes() {
                match ch {
                    b'(' | b')' | b'\\' => {
                        out.push(b'\\');
                        out.push(ch);
                    }
                    b'\n' => out.extend_from_slice(b"\\n"),
                    b'\r' => out.extend_from_slice(b"\\r"),
                    _ => out.push(ch),
                }
            }
            out.push(b')');
        }
        NodePayload::Number(v) => {
            if !v.is_finite() {
                return Err(DocError::Unserializable(id, format!("non-finite number {v}")));
            }
            if v.fract() == 0.0 && v.abs() < 1e15 {
                out.extend_from_slice(format!("{}", *v as i64).as_bytes());
            } else {
                out.extend_from_slice(format!("{v}").as_bytes());
            }
        }
        NodePayload::Boolean(v) => out.extend_from_slice(if *v { b"true" } else { b"false" }),
        NodePayload::Null => out.extend_from_slice(b"null"),
        NodePayload::Reference(target) => {
            let num = remap
                .get(target)
                .copied()
                .or_else(|| dangling.get(target).copied())
                .expect("dangling targets are pre-assigned");
            out.extend_from_slice(format!("{num} 0 R").as_bytes());
        }
    }
    Ok(())
}

fn write_dict(out: &mut Vec<u8>, entries: &[(String, ObjId)], remap: &BTreeMap<ObjId, u64>) {
    out.extend_from_slice(b"<< ");
    for (k, v) in entries {
        out.push(b'/');
        for ch in k.bytes() {
            if Lexer::is_regular(ch) && ch != b'#' {
                out.push(ch);
            } else {
                out.extend_from_slice(format!("#{ch:02x}").as_bytes());
            }
        }
        out.extend_from_slice(format!(" {} 0 R ", remap[v]).as_bytes());
    }
    out.extend_from_slice(b">>");
}
