use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TopicError;

const DEFAULT_HIERARCHY: &str = include_str!("../../data/hierarchy.tsv");

/// Parent node that groups LDA topics in the hierarchy.
pub const DISCOVERED_PARENT: &str = "discovered";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicNode {
    pub id: String,
    pub label: String,
    pub parent_id: Option<String>,
}

/// Two-level topic tree: parent topics at the root, leaf topics beneath.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicHierarchy {
    nodes: Vec<TopicNode>,
}

impl TopicHierarchy {
    pub fn new(nodes: Vec<TopicNode>) -> Result<Self, TopicError> {
        let mut ids = HashSet::new();
        for n in &nodes {
            if n.id.is_empty() || !ids.insert(n.id.as_str()) {
                return Err(TopicError::Hierarchy(format!("duplicate or empty topic id {:?}", n.id)));
            }
        }
        for n in &nodes {
            if let Some(p) = &n.parent_id {
                match nodes.iter().find(|m| &m.id == p) {
                    None => return Err(TopicError::Hierarchy(format!("{} has unknown parent {p}", n.id))),
                    Some(m) if m.parent_id.is_some() => {
                        return Err(TopicError::Hierarchy(format!("{} would sit below leaf {p}", n.id)))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(Self { nodes })
    }

    /// The bundled default label set.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_HIERARCHY).expect("bundled hierarchy is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopicError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TopicError::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `id<TAB>label<TAB>parent_id` lines, `-` marking a parent topic.
    pub fn parse(text: &str) -> Result<Self, TopicError> {
        let mut nodes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<_> = line.split('\t').map(str::trim).collect();
            let [id, label, parent] = fields[..] else {
                return Err(TopicError::Hierarchy(format!("line {}: expected 3 tab-separated fields", i + 1)));
            };
            nodes.push(TopicNode {
                id: id.to_string(),
                label: label.to_string(),
                parent_id: (parent != "-").then(|| parent.to_string()),
            });
        }
        Self::new(nodes)
    }

    pub fn to_tsv(&self) -> String {
        self.nodes
            .iter()
            .map(|n| format!("{}\t{}\t{}\n", n.id, n.label, n.parent_id.as_deref().unwrap_or("-")))
            .collect()
    }

    pub fn nodes(&self) -> &[TopicNode] {
        &self.nodes
    }

    pub fn get(&self, id: &str) -> Option<&TopicNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn parents(&self) -> impl Iterator<Item = &TopicNode> {
        self.nodes.iter().filter(|n| n.parent_id.is_none())
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TopicNode> {
        self.nodes.iter().filter(|n| n.parent_id.is_some())
    }

    pub fn children<'a>(&'a self, parent: &'a str) -> impl Iterator<Item = &'a TopicNode> + 'a {
        self.nodes.iter().filter(move |n| n.parent_id.as_deref() == Some(parent))
    }

    pub fn parent_of(&self, leaf: &str) -> Option<&str> {
        self.get(leaf).and_then(|n| n.parent_id.as_deref())
    }

    /// Nodes in display order: each parent followed by its children.
    pub fn display_order(&self) -> Vec<&TopicNode> {
        self.parents().flat_map(|p| std::iter::once(p).chain(self.children(&p.id))).collect()
    }

    /// Adds (or replaces) a parent node and its leaf children.
    pub fn with_group(mut self, parent: TopicNode, children: Vec<TopicNode>) -> Result<Self, TopicError> {
        let pid = parent.id.clone();
        self.nodes.retain(|n| n.id != pid && n.parent_id.as_deref() != Some(pid.as_str()));
        self.nodes.push(TopicNode { parent_id: None, ..parent });
        self.nodes.extend(children.into_iter().map(|c| TopicNode { parent_id: Some(pid.clone()), ..c }));
        Self::new(self.nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_is_two_level() {
        let h = TopicHierarchy::builtin();
        assert!(h.parents().count() >= 4);
        for leaf in h.leaves() {
            let p = h.parent_of(&leaf.id).unwrap();
            assert!(h.get(p).unwrap().parent_id.is_none());
        }
        assert_eq!(TopicHierarchy::parse(&h.to_tsv()).unwrap(), h);
    }

    #[test]
    fn rejects_bad_trees() {
        assert!(TopicHierarchy::parse("a\tA\t-\na\tA2\t-").is_err());
        assert!(TopicHierarchy::parse("a\tA\tmissing").is_err());
        assert!(TopicHierarchy::parse("a\tA\t-\nb\tB\ta\nc\tC\tb").is_err());
        assert!(TopicHierarchy::parse("a\tA").is_err());
        // a cycle necessarily puts some node under a non-root
        assert!(TopicHierarchy::parse("a\tA\tb\nb\tB\ta").is_err());
    }

    #[test]
    fn display_order_groups_children() {
        let h = TopicHierarchy::parse("p\tP\t-\nq\tQ\t-\nx\tX\tq\ny\tY\tp").unwrap();
        let ids: Vec<_> = h.display_order().iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, vec!["p", "y", "q", "x"]);
    }

    #[test]
    fn with_group_replaces() {
        let node = |id: &str| TopicNode { id: id.into(), label: id.into(), parent_id: None };
        let h = TopicHierarchy::builtin()
            .with_group(node(DISCOVERED_PARENT), vec![node("d0"), node("d1")])
            .unwrap()
            .with_group(node(DISCOVERED_PARENT), vec![node("d0")])
            .unwrap();
        assert_eq!(h.children(DISCOVERED_PARENT).count(), 1);
        assert!(!h.contains("d1"));
    }
}
