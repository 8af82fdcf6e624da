//! On-disk formats: hypergraph, template, ontology, corpus and statistics
//! files as pretty JSON, CAS dumps and session traces as JSON lines.
//!
//! Every writer is deterministic: maps are ordered, node order is the
//! graph's index order, and files end with a newline.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use capcert_core::dialogue::Corpus;
use capcert_core::extraction::{CooccurrenceStats, Ontology};
use capcert_core::session::TraceRecord;
use capcert_core::store::{CasEntry, CasStore, TemplateDb};
use capcert_core::{ArcKind, ForbiddenSet, Hyperarc, Hypergraph, NodeSet};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcRecord {
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    pub rate: f64,
    pub kind: ArcKind,
}

/// Label-based hypergraph file. Node order is the index order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypergraphFile {
    pub nodes: Vec<String>,
    pub arcs: Vec<ArcRecord>,
    #[serde(default)]
    pub forbidden: Vec<String>,
}

impl HypergraphFile {
    pub fn from_graph(graph: &Hypergraph, forbidden: &ForbiddenSet) -> Self {
        let labels = |s: &NodeSet| graph.labels_of(s).into_iter().map(String::from).collect();
        HypergraphFile {
            nodes: graph.labels().to_vec(),
            arcs: graph
                .arcs()
                .iter()
                .map(|a| ArcRecord {
                    sources: labels(&a.sources),
                    targets: labels(&a.targets),
                    rate: a.rate,
                    kind: a.kind,
                })
                .collect(),
            forbidden: labels(&forbidden.members),
        }
    }

    pub fn into_graph(self) -> Result<(Hypergraph, ForbiddenSet)> {
        let index: std::collections::BTreeMap<&str, usize> =
            self.nodes.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let resolve = |labels: &[String]| -> Result<NodeSet> {
            labels
                .iter()
                .map(|l| {
                    index
                        .get(l.as_str())
                        .map(|&i| capcert_core::NodeId(i as u32))
                        .ok_or_else(|| capcert_core::Error::UnknownCapability(l.clone()).into())
                })
                .collect()
        };
        let arcs = self
            .arcs
            .iter()
            .map(|a| {
                Ok(Hyperarc::new(
                    resolve(&a.sources)?,
                    resolve(&a.targets)?,
                    a.rate,
                    a.kind,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let forbidden = ForbiddenSet::new(resolve(&self.forbidden)?);
        let graph = Hypergraph::from_parts(self.nodes, arcs)?;
        Ok((graph, forbidden))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, &e))
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory values serialize");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json_string(value))
}

pub fn load_hypergraph(path: &Path) -> Result<(Hypergraph, ForbiddenSet)> {
    read_json::<HypergraphFile>(path)?.into_graph()
}

pub fn save_hypergraph(path: &Path, graph: &Hypergraph, forbidden: &ForbiddenSet) -> Result<()> {
    write_json(path, &HypergraphFile::from_graph(graph, forbidden))
}

pub fn load_templates(path: &Path) -> Result<TemplateDb> {
    read_json(path)
}

pub fn save_templates(path: &Path, tdb: &TemplateDb) -> Result<()> {
    write_json(path, tdb)
}

pub fn load_ontology(path: &Path) -> Result<Ontology> {
    let o: Ontology = read_json(path)?;
    o.validate()?;
    Ok(o)
}

pub fn save_ontology(path: &Path, ontology: &Ontology) -> Result<()> {
    write_json(path, ontology)
}

/// Native corpus JSON. Turn ids are checked on load.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let c: Corpus = read_json(path)?;
    c.validate()?;
    Ok(c)
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    write_json(path, corpus)
}

pub fn load_stats(path: &Path) -> Result<CooccurrenceStats> {
    read_json(path)
}

pub fn save_stats(path: &Path, stats: &CooccurrenceStats) -> Result<()> {
    write_json(path, stats)
}

pub fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(&item).expect("in-memory values serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.into(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// One CAS entry per line, in id order.
pub fn dump_cas(path: &Path, cas: &CasStore) -> Result<()> {
    write_lines(path, cas.entries())
}

pub fn restore_cas(path: &Path) -> Result<CasStore> {
    Ok(CasStore::from_entries(read_lines::<CasEntry>(path)?))
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    write_lines(path, records)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    read_lines(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hypergraph_file_round_trip_is_byte_stable() {
        let mut b = Hypergraph::builder();
        b.nodes(["a", "b", "c", "bad"]);
        b.arc(["a", "b"], ["c"], 0.9, ArcKind::TypeA).rule(["c"], ["bad"]);
        let h = b.build().unwrap();
        let f = h.forbidden(["bad"]).unwrap();
        let text = to_json_string(&HypergraphFile::from_graph(&h, &f));
        let back: HypergraphFile = serde_json::from_str(&text).unwrap();
        let (h2, f2) = back.into_graph().unwrap();
        assert_eq!(to_json_string(&HypergraphFile::from_graph(&h2, &f2)), text);
        assert_eq!(h2.version(), h.version());
        assert_eq!(f2.members, f.members);
    }

    #[test]
    fn unknown_arc_label_is_rejected() {
        let file = HypergraphFile {
            nodes: vec!["a".into()],
            arcs: vec![ArcRecord {
                sources: vec!["a".into()],
                targets: vec!["zz".into()],
                rate: 1.0,
                kind: ArcKind::Manual,
            }],
            forbidden: vec![],
        };
        let err = file.into_graph().unwrap_err();
        assert!(err.to_string().contains("zz"));
    }
}
