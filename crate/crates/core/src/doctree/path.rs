//! Structural paths: sequences of dictionary key names from the document
//! root. Arrays are transparent — array elements inherit the array's path.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::DocError;

/// A structural path. The document root itself is the empty path and
/// renders as `/Root`; each dictionary key appends one segment.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct StructuralPath(Vec<String>);

impl StructuralPath {
    /// The path of the document root.
    pub fn root() -> Self {
        StructuralPath(Vec::new())
    }

    pub fn from_segments<I, S>(segments: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        StructuralPath(segments.into_iter().map(Into::into).collect())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    /// First segment — the name of the root-child subtree this path
    /// belongs to. `None` for the root path.
    pub fn subtree_name(&self) -> Option<&str> {
        self.0.first().map(String::as_str)
    }

    pub fn last(&self) -> Option<&str> {
        self.0.last().map(String::as_str)
    }

    pub fn parent(&self) -> Option<StructuralPath> {
        if self.0.is_empty() {
            None
        } else {
            Some(StructuralPath(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn child(&self, segment: &str) -> StructuralPath {
        let mut segs = self.0.clone();
        segs.push(segment.to_string());
        StructuralPath(segs)
    }

    pub fn starts_with(&self, prefix: &StructuralPath) -> bool {
        self.0.len() >= prefix.0.len() && self.0[..prefix.0.len()] == prefix.0[..]
    }
}

impl fmt::Display for StructuralPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/Root")?;
        for seg in &self.0 {
            write!(f, "/{seg}")?;
        }
        Ok(())
    }
}

impl FromStr for StructuralPath {
    type Err = DocError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s
            .strip_prefix("/Root")
            .ok_or_else(|| DocError::SchemaViolation(format!("path must start with /Root: {s}")))?;
        if rest.is_empty() {
            return Ok(StructuralPath::root());
        }
        let rest = rest
            .strip_prefix('/')
            .ok_or_else(|| DocError::SchemaViolation(format!("malformed path: {s}")))?;
        let segs: Vec<String> = rest.split('/').map(str::to_string).collect();
        if segs.iter().any(String::is_empty) {
            return Err(DocError::SchemaViolation(format!(
                "empty segment in path: {s}"
            )));
        }
        Ok(StructuralPath(segs))
    }
}

impl Serialize for StructuralPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for StructuralPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse_round_trip() {
        for s in ["/Root", "/Root/Pages", "/Root/Pages/Kids/AA"] {
            let p: StructuralPath = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
    }

    #[test]
    fn rejects_paths_without_root_prefix() {
        assert!("/Pages".parse::<StructuralPath>().is_err());
        assert!("Root/Pages".parse::<StructuralPath>().is_err());
        assert!("/Root//Kids".parse::<StructuralPath>().is_err());
    }

    #[test]
    fn subtree_name_is_first_segment() {
        let p: StructuralPath = "/Root/Pages/Kids".parse().unwrap();
        assert_eq!(p.subtree_name(), Some("Pages"));
        assert_eq!(StructuralPath::root().subtree_name(), None);
    }

    #[test]
    fn ordering_groups_by_first_segment() {
        let a: StructuralPath = "/Root/A/Z".parse().unwrap();
        let b: StructuralPath = "/Root/AB".parse().unwrap();
        // Component-wise ordering keeps every path of subtree A before
        // any path of subtree AB, which makes vocab ranges contiguous.
        assert!(a < b);
    }
}
