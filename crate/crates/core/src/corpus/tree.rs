use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Dense index of a node in a [`ContactTypeTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Hierarchy of contact types.
///
/// Nodes are addressed by dense [`NodeId`]s; each node also carries a
/// unique identifier string (`"CT8"`) used in data files and a free-form
/// display label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeFile", into = "TreeFile")]
pub struct ContactTypeTree {
    ids: Vec<String>,
    labels: Vec<String>,
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    depth: Vec<usize>,
    root: NodeId,
    by_id: HashMap<String, NodeId>,
}

/// On-disk shape of a tree: a flat node list with parent references.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeFile {
    pub nodes: Vec<TreeFileNode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeFileNode {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default)]
    pub label: String,
}

impl ContactTypeTree {
    /// Builds a tree from `(id, parent id, label)` triples.
    pub fn from_nodes<I, S>(nodes: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (S, Option<S>, S)>,
        S: Into<String>,
    {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut parent_ids = Vec::new();
        let mut by_id = HashMap::new();
        for (id, parent, label) in nodes {
            let id = id.into();
            if by_id.insert(id.clone(), NodeId(ids.len())).is_some() {
                return Err(CorpusError::InvalidTree(format!("duplicate node id {id:?}")));
            }
            ids.push(id);
            parent_ids.push(parent.map(Into::into));
            labels.push(label.into());
        }
        if ids.is_empty() {
            return Err(CorpusError::InvalidTree("tree has no nodes".into()));
        }

        let mut parent = Vec::with_capacity(ids.len());
        let mut roots = Vec::new();
        for (i, p) in parent_ids.iter().enumerate() {
            match p {
                None => {
                    roots.push(NodeId(i));
                    parent.push(None);
                }
                Some(p) => {
                    let pid = *by_id.get(p).ok_or_else(|| {
                        CorpusError::InvalidTree(format!("node {:?} has unknown parent {p:?}", ids[i]))
                    })?;
                    parent.push(Some(pid));
                }
            }
        }
        if roots.len() != 1 {
            return Err(CorpusError::InvalidTree(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let root = roots[0];

        let mut children = vec![Vec::new(); ids.len()];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[p.0].push(NodeId(i));
            }
        }

        // Depth by walking from the root; anything unreached sits on a cycle.
        let mut depth = vec![usize::MAX; ids.len()];
        depth[root.0] = 0;
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            for &c in &children[n.0] {
                depth[c.0] = depth[n.0] + 1;
                stack.push(c);
            }
        }
        if let Some(i) = depth.iter().position(|&d| d == usize::MAX) {
            return Err(CorpusError::InvalidTree(format!(
                "node {:?} does not reach the root (cycle)",
                ids[i]
            )));
        }

        Ok(Self { ids, labels, parent, children, depth, root, by_id })
    }

    /// A complete tree with `depth` levels (root included) and uniform
    /// `fanout`. Node ids are `CT0`, `CT1`, ... in breadth-first order.
    pub fn complete(depth: usize, fanout: usize) -> Result<Self, CorpusError> {
        if depth < 1 {
            return Err(CorpusError::InvalidSpec("tree depth must be >= 1".into()));
        }
        if fanout < 1 {
            return Err(CorpusError::InvalidSpec("tree fanout must be >= 1".into()));
        }
        let mut nodes: Vec<(String, Option<String>, String)> =
            vec![("CT0".into(), None, "root".into())];
        let mut frontier = vec![0usize];
        for level in 1..depth {
            let mut next = Vec::new();
            for &p in &frontier {
                for _ in 0..fanout {
                    let i = nodes.len();
                    nodes.push((format!("CT{i}"), Some(format!("CT{p}")), format!("level {level} type {i}")));
                    next.push(i);
                }
            }
            frontier = next;
        }
        Self::from_nodes(nodes)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.ids.len()).map(NodeId)
    }

    pub fn id(&self, node: NodeId) -> &str {
        &self.ids[node.0]
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.labels[node.0]
    }

    pub fn lookup(&self, id: &str) -> Option<NodeId> {
        self.by_id.get(id).copied()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.0 < self.ids.len()
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.parent[node.0]
    }

    pub fn children(&self, node: NodeId) -> &[NodeId] {
        &self.children[node.0]
    }

    pub fn depth_of(&self, node: NodeId) -> usize {
        self.depth[node.0]
    }

    /// Number of levels, counting the root as level one.
    pub fn depth(&self) -> usize {
        self.depth.iter().max().map_or(0, |d| d + 1)
    }

    pub fn max_branching(&self) -> usize {
        self.children.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        self.children[node.0].is_empty()
    }

    /// Root-to-node path, root first and `node` last.
    pub fn path_to(&self, node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent[cur.0] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// True when `path` starts at the root and each step moves to a child.
    pub fn is_root_path(&self, path: &[NodeId]) -> bool {
        match path.first() {
            Some(&first) if first == self.root => path
                .windows(2)
                .all(|w| self.contains(w[1]) && self.parent[w[1].0] == Some(w[0])),
            _ => false,
        }
    }

    /// Every root-anchored path in the tree, in depth-first preorder.
    pub fn all_root_paths(&self) -> Vec<Vec<NodeId>> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![vec![self.root]];
        while let Some(path) = stack.pop() {
            let last = *path.last().unwrap();
            for &c in self.children[last.0].iter().rev() {
                let mut p = path.clone();
                p.push(c);
                stack.push(p);
            }
            out.push(path);
        }
        out
    }
}

impl From<ContactTypeTree> for TreeFile {
    fn from(tree: ContactTypeTree) -> Self {
        let nodes = tree
            .nodes()
            .map(|n| TreeFileNode {
                id: tree.id(n).to_string(),
                parent: tree.parent(n).map(|p| tree.id(p).to_string()),
                label: tree.label(n).to_string(),
            })
            .collect();
        TreeFile { nodes }
    }
}

impl TryFrom<TreeFile> for ContactTypeTree {
    type Error = CorpusError;

    fn try_from(file: TreeFile) -> Result<Self, Self::Error> {
        ContactTypeTree::from_nodes(file.nodes.into_iter().map(|n| (n.id, n.parent, n.label)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_tree_shape() {
        let t = ContactTypeTree::complete(3, 2).unwrap();
        assert_eq!(t.len(), 7);
        assert_eq!(t.children(t.root()).len(), 2);
        let grandchildren: usize = t.children(t.root()).iter().map(|&c| t.children(c).len()).sum();
        assert_eq!(grandchildren, 4);
        assert_eq!(t.depth(), 3);
    }

    #[test]
    fn rejects_two_roots_and_cycles() {
        let two_roots = ContactTypeTree::from_nodes(vec![("a", None, ""), ("b", None, "")]);
        assert!(matches!(two_roots, Err(CorpusError::InvalidTree(_))));

        let cycle = ContactTypeTree::from_nodes(vec![
            ("r", None, ""),
            ("a", Some("b"), ""),
            ("b", Some("a"), ""),
        ]);
        assert!(matches!(cycle, Err(CorpusError::InvalidTree(_))));
    }

    #[test]
    fn path_and_validation() {
        let t = ContactTypeTree::complete(3, 2).unwrap();
        let leaf = t.lookup("CT6").unwrap();
        let path = t.path_to(leaf);
        let ids: Vec<_> = path.iter().map(|&n| t.id(n)).collect();
        assert_eq!(ids, ["CT0", "CT2", "CT6"]);
        assert!(t.is_root_path(&path));
        assert!(!t.is_root_path(&path[1..]));
        assert_eq!(t.all_root_paths().len(), t.len());
    }

    #[test]
    fn json_round_trip() {
        let t = ContactTypeTree::complete(2, 3).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: ContactTypeTree = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
