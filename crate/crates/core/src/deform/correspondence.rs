use serde::{Deserialize, Serialize};

use super::{DeformError, Result};
use crate::geometry::{TargetShape, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    #[default]
    Soft,
    Rigid,
}

/// A source vertex and the target point it should land on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub source_vertex: usize,
    #[serde(with = "vec3_array")]
    pub target_point: Vec3,
    #[serde(default)]
    pub kind: PairKind,
}

mod vec3_array {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::from(a))
    }
}

impl Correspondence {
    pub fn soft(source_vertex: usize, target_point: Vec3) -> Self {
        Self {
            source_vertex,
            target_point,
            kind: PairKind::Soft,
        }
    }

    pub fn rigid(source_vertex: usize, target_point: Vec3) -> Self {
        Self {
            source_vertex,
            target_point,
            kind: PairKind::Rigid,
        }
    }
}

/// User-marked pairs with unique source vertices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Correspondence>", into = "Vec<Correspondence>")]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
}

impl TryFrom<Vec<Correspondence>> for CorrespondenceSet {
    type Error = DeformError;
    fn try_from(pairs: Vec<Correspondence>) -> Result<Self> {
        Self::new(pairs)
    }
}

impl From<CorrespondenceSet> for Vec<Correspondence> {
    fn from(c: CorrespondenceSet) -> Self {
        c.pairs
    }
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for p in &pairs {
            if !seen.insert(p.source_vertex) {
                return Err(DeformError::DuplicateVertex(p.source_vertex));
            }
            if !p.target_point.iter().all(|c| c.is_finite()) {
                return Err(DeformError::NonFiniteTarget(p.source_vertex));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn validate(&self, vertex_count: usize) -> Result<()> {
        match self.pairs.iter().find(|p| p.source_vertex >= vertex_count) {
            Some(p) => Err(DeformError::InvalidVertex {
                index: p.source_vertex,
                vertex_count,
            }),
            None => Ok(()),
        }
    }

    /// Move every target point onto the nearest point of `target`.
    pub fn snapped(&self, target: &TargetShape) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .map(|p| Correspondence {
                    target_point: target.nearest_point(&p.target_point).0,
                    ..*p
                })
                .collect(),
        }
    }

    /// Apply `f` to every target point.
    pub fn map_targets(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .map(|p| Correspondence {
                    target_point: f(&p.target_point),
                    ..*p
                })
                .collect(),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Document {
    List(Vec<Correspondence>),
    Wrapped { pairs: Vec<Correspondence> },
}

/// Parse correspondences from either a JSON document (a list of
/// `{source_vertex, target_point, kind}` records, optionally wrapped in
/// `{"pairs": [...]}`) or whitespace-separated lines
/// `src_index tx ty tz [rigid]` with 0-based indices.
pub fn parse_correspondences(text: &str) -> Result<CorrespondenceSet> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') || trimmed.starts_with('{') {
        let doc: Document = serde_json::from_str(text).map_err(|e| DeformError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let pairs = match doc {
            Document::List(p) | Document::Wrapped { pairs: p } => p,
        };
        return CorrespondenceSet::new(pairs);
    }
    let mut pairs = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        let err = |message: String| DeformError::Parse { line, message };
        if toks.len() != 4 && toks.len() != 5 {
            return Err(err(format!("expected `src tx ty tz [rigid]`, got {} fields", toks.len())));
        }
        let source_vertex: usize = toks[0]
            .parse()
            .map_err(|_| err(format!("invalid vertex index {:?}", toks[0])))?;
        let mut xyz = [0.0; 3];
        for k in 0..3 {
            xyz[k] = toks[k + 1]
                .parse()
                .map_err(|_| err(format!("invalid coordinate {:?}", toks[k + 1])))?;
        }
        let kind = match toks.get(4) {
            None => PairKind::Soft,
            Some(&"rigid") => PairKind::Rigid,
            Some(&"soft") => PairKind::Soft,
            Some(other) => return Err(err(format!("unknown pair kind {other:?}"))),
        };
        pairs.push(Correspondence {
            source_vertex,
            target_point: Vec3::from(xyz),
            kind,
        });
    }
    CorrespondenceSet::new(pairs)
}
