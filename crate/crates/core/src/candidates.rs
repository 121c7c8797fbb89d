use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{EntityId, RelationId};

/// One ranking query `(head, rel, ?)` over an explicit candidate list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateQuery {
    pub head: EntityId,
    pub rel: RelationId,
    pub candidates: Vec<EntityId>,
    /// Position of the true tail in `candidates`; `None` for blind test queries.
    pub truth: Option<usize>,
}

impl CandidateQuery {
    pub fn new(
        head: EntityId,
        rel: RelationId,
        candidates: Vec<EntityId>,
        truth: Option<usize>,
    ) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("empty candidate list".into()));
        }
        if let Some(t) = truth {
            if t >= candidates.len() {
                return Err(Error::InvalidArgument(format!(
                    "truth index {t} outside {} candidates",
                    candidates.len()
                )));
            }
        }
        Ok(CandidateQuery {
            head,
            rel,
            candidates,
            truth,
        })
    }
}

/// An ordered collection of candidate queries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateSet {
    pub queries: Vec<CandidateQuery>,
}

impl CandidateSet {
    pub fn new(queries: Vec<CandidateQuery>) -> Self {
        CandidateSet { queries }
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn row_lengths(&self) -> Vec<usize> {
        self.queries.iter().map(|q| q.candidates.len()).collect()
    }

    pub fn has_truth(&self) -> bool {
        self.queries.iter().all(|q| q.truth.is_some())
    }

    /// Both sets' queries, `self` first.
    pub fn concat(&self, other: &CandidateSet) -> CandidateSet {
        let mut queries = self.queries.clone();
        queries.extend(other.queries.iter().cloned());
        CandidateSet { queries }
    }

    /// Checks every id against entity and relation counts.
    pub fn validate(&self, num_entities: usize, num_relations: usize) -> Result<()> {
        for q in &self.queries {
            if q.head as usize >= num_entities {
                return Err(invalid("entity", q.head, num_entities));
            }
            if q.rel as usize >= num_relations {
                return Err(invalid("relation", q.rel, num_relations));
            }
            if let Some(&c) = q.candidates.iter().find(|&&c| c as usize >= num_entities) {
                return Err(invalid("entity", c, num_entities));
            }
        }
        Ok(())
    }

    /// Parses `head\trel\tc1,c2,...\ttruth` lines; `-` marks an unknown truth.
    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut queries = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_owned(),
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 tab-separated fields, got {}", fields.len())));
            }
            let head = parse_u32(fields[0]).map_err(err)?;
            let rel = parse_u32(fields[1]).map_err(err)?;
            let candidates = fields[2]
                .split(',')
                .map(parse_u32)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(err)?;
            let truth = match fields[3] {
                "-" => None,
                s => Some(parse_u32(s).map_err(err)? as usize),
            };
            queries.push(CandidateQuery::new(head, rel, candidates, truth).map_err(|e| err(e.to_string()))?);
        }
        Ok(CandidateSet { queries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for q in &self.queries {
            let cands: Vec<String> = q.candidates.iter().map(|c| c.to_string()).collect();
            let truth = q.truth.map_or_else(|| "-".to_owned(), |t| t.to_string());
            writeln!(w, "{}\t{}\t{}\t{}", q.head, q.rel, cands.join(","), truth)
                .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn invalid(kind: &'static str, id: u32, count: usize) -> Error {
    Error::InvalidId {
        kind,
        id: id.into(),
        count,
    }
}

fn parse_u32(s: &str) -> std::result::Result<u32, String> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("not a non-negative integer: {s:?}"));
    }
    s.parse().map_err(|_| format!("id overflow: {s}"))
}
