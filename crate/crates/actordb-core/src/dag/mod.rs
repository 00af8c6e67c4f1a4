//! Merkle-hashed process network DAG.
//!
//! The engine's components are declared as a dependency DAG in JSON. Each
//! node's hash commits to its name, canonical config bytes, and the sorted
//! hashes of its dependencies; the root hash combines the nodes nothing
//! depends on, so any config or structure change changes the root.
//! Startup follows topological order; fault diagnosis walks the failed
//! node's dependency closure deepest-first.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::canonical_json;

#[derive(Debug, Error)]
pub enum DagError {
    #[error("duplicate node {0:?}")]
    DuplicateNode(String),

    #[error("node {node:?} depends on unknown node {dependency:?}")]
    UnknownDependency { node: String, dependency: String },

    #[error("dependency cycle: {}", path.join(" -> "))]
    CycleDetected { path: Vec<String> },

    #[error("unknown node {0:?}")]
    UnknownNode(String),

    #[error("invalid manifest: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessNode {
    pub name: String,
    #[serde(default)]
    pub depends_on: Vec<String>,
    /// Opaque component configuration; hashed as canonical JSON.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, Deserialize)]
struct ManifestDoc {
    nodes: Vec<ProcessNode>,
}

/// Validated manifest with per-node Merkle hashes.
#[derive(Debug, Clone, PartialEq)]
pub struct DagManifest {
    pub nodes: Vec<ProcessNode>,
    pub node_hashes: BTreeMap<String, [u8; 32]>,
    pub root_hash: [u8; 32],
    by_name: HashMap<String, usize>,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parse, validate, and hash a manifest from pre-evaluated JSON.
pub fn load(document: &str) -> Result<DagManifest, DagError> {
    let doc: ManifestDoc =
        serde_json::from_str(document).map_err(|e| DagError::Invalid(e.to_string()))?;
    load_nodes(doc.nodes)
}

pub fn load_nodes(nodes: Vec<ProcessNode>) -> Result<DagManifest, DagError> {
    let mut by_name = HashMap::new();
    for (i, node) in nodes.iter().enumerate() {
        if node.name.is_empty() {
            return Err(DagError::Invalid("node name must be non-empty".into()));
        }
        if by_name.insert(node.name.clone(), i).is_some() {
            return Err(DagError::DuplicateNode(node.name.clone()));
        }
    }
    for node in &nodes {
        for dep in &node.depends_on {
            if !by_name.contains_key(dep) {
                return Err(DagError::UnknownDependency {
                    node: node.name.clone(),
                    dependency: dep.clone(),
                });
            }
        }
    }
    detect_cycle(&nodes, &by_name)?;

    let node_hashes = compute_hashes(&nodes, &by_name);
    let root_hash = compute_root(&nodes, &node_hashes);

    Ok(DagManifest {
        nodes,
        node_hashes,
        root_hash,
        by_name,
    })
}

fn detect_cycle(nodes: &[ProcessNode], by_name: &HashMap<String, usize>) -> Result<(), DagError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Unvisited,
        InProgress,
        Done,
    }
    fn visit(
        at: usize,
        nodes: &[ProcessNode],
        by_name: &HashMap<String, usize>,
        marks: &mut [Mark],
        stack: &mut Vec<String>,
    ) -> Result<(), DagError> {
        match marks[at] {
            Mark::Done => return Ok(()),
            Mark::InProgress => {
                let name = &nodes[at].name;
                let start = stack.iter().position(|n| n == name).unwrap_or(0);
                let mut path: Vec<String> = stack[start..].to_vec();
                path.push(name.clone());
                return Err(DagError::CycleDetected { path });
            }
            Mark::Unvisited => {}
        }
        marks[at] = Mark::InProgress;
        stack.push(nodes[at].name.clone());
        for dep in &nodes[at].depends_on {
            visit(by_name[dep], nodes, by_name, marks, stack)?;
        }
        stack.pop();
        marks[at] = Mark::Done;
        Ok(())
    }

    let mut marks = vec![Mark::Unvisited; nodes.len()];
    let mut stack = Vec::new();
    for i in 0..nodes.len() {
        visit(i, nodes, by_name, &mut marks, &mut stack)?;
    }
    Ok(())
}

/// hash(n) = H(name ‖ canonical(config) ‖ sorted dependency hashes).
/// Including the name makes identical manifests and identical root hashes
/// coincide even when two differently-named nodes share a config.
fn compute_hashes(
    nodes: &[ProcessNode],
    by_name: &HashMap<String, usize>,
) -> BTreeMap<String, [u8; 32]> {
    let mut hashes: BTreeMap<String, [u8; 32]> = BTreeMap::new();
    // Nodes in dependency-first order so dep hashes exist when needed.
    let order = topo_indices(nodes, by_name);
    for i in order {
        let node = &nodes[i];
        let mut dep_hashes: Vec<[u8; 32]> =
            node.depends_on.iter().map(|d| hashes[d]).collect();
        dep_hashes.sort_unstable();

        let mut hasher = Sha256::new();
        hasher.update((node.name.len() as u64).to_le_bytes());
        hasher.update(node.name.as_bytes());
        let config = canonical_json(&node.config).expect("json value is serializable");
        hasher.update((config.len() as u64).to_le_bytes());
        hasher.update(&config);
        for dep in &dep_hashes {
            hasher.update(dep);
        }
        hashes.insert(node.name.clone(), hasher.finalize().into());
    }
    hashes
}

/// root = H(sorted hashes of all nodes that nothing depends on). Every
/// other node is committed transitively through its dependents.
fn compute_root(nodes: &[ProcessNode], hashes: &BTreeMap<String, [u8; 32]>) -> [u8; 32] {
    let mut depended_on: BTreeSet<&str> = BTreeSet::new();
    for node in nodes {
        for dep in &node.depends_on {
            depended_on.insert(dep);
        }
    }
    let mut tops: Vec<[u8; 32]> = nodes
        .iter()
        .filter(|n| !depended_on.contains(n.name.as_str()))
        .map(|n| hashes[&n.name])
        .collect();
    tops.sort_unstable();
    let mut hasher = Sha256::new();
    for h in &tops {
        hasher.update(h);
    }
    hasher.finalize().into()
}

/// Kahn's algorithm with lexicographic tie-breaking: deterministic output,
/// every node after all of its dependencies.
fn topo_indices(nodes: &[ProcessNode], by_name: &HashMap<String, usize>) -> Vec<usize> {
    let mut indegree = vec![0usize; nodes.len()];
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, node) in nodes.iter().enumerate() {
        indegree[i] = node.depends_on.len();
        for dep in &node.depends_on {
            dependents[by_name[dep]].push(i);
        }
    }
    let mut ready: BTreeMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .filter(|(i, _)| indegree[*i] == 0)
        .map(|(i, n)| (n.name.as_str(), i))
        .collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some((&name, &i)) = ready.iter().next() {
        ready.remove(name);
        order.push(i);
        for &dependent in &dependents[i] {
            indegree[dependent] -= 1;
            if indegree[dependent] == 0 {
                ready.insert(nodes[dependent].name.as_str(), dependent);
            }
        }
    }
    debug_assert_eq!(order.len(), nodes.len(), "cycles are rejected at load");
    order
}

impl DagManifest {
    /// Startup order: every node after all of its dependencies, ties
    /// broken by name.
    pub fn topo_order(&self) -> Vec<&str> {
        topo_indices(&self.nodes, &self.by_name)
            .into_iter()
            .map(|i| self.nodes[i].name.as_str())
            .collect()
    }

    /// Fault-diagnosis order for a failed node: its dependency closure,
    /// deepest dependencies (candidate root causes) first, the failed node
    /// last. Ties broken by name.
    pub fn diagnose(&self, failed_node: &str) -> Result<Vec<&str>, DagError> {
        if !self.by_name.contains_key(failed_node) {
            return Err(DagError::UnknownNode(failed_node.to_string()));
        }
        let mut closure: BTreeSet<&str> = BTreeSet::new();
        let mut stack = vec![failed_node];
        while let Some(name) = stack.pop() {
            if closure.insert(self.nodes[self.by_name[name]].name.as_str()) {
                for dep in &self.nodes[self.by_name[name]].depends_on {
                    stack.push(dep);
                }
            }
        }
        Ok(self
            .topo_order()
            .into_iter()
            .filter(|name| closure.contains(name))
            .collect())
    }

    pub fn node(&self, name: &str) -> Option<&ProcessNode> {
        self.by_name.get(name).map(|&i| &self.nodes[i])
    }

    pub fn root_hex(&self) -> String {
        hex(&self.root_hash)
    }
}
