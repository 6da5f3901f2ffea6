//! Ordered labeled trees, traversals and the first-child/next-sibling
//! transition structure used by the decoder.
//!
//! Node ids are dense pre-order ranks: the root is always `NodeId(0)` and a
//! node's subtree occupies the contiguous id range `[n, subtree_end(n))`.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("tree has no nodes")]
    Empty,
    #[error("more than one root (entries {first} and {second} have no parent)")]
    MultipleRoots { first: usize, second: usize },
    #[error("entry {child} names parent {parent}, which does not exist")]
    DanglingParent { child: usize, parent: usize },
    #[error("parent links contain a cycle through entry {0}")]
    CycleDetected(usize),
    #[error("entry {0} has an empty token")]
    EmptyToken(usize),
    #[error("node {0} is not in the tree")]
    NodeNotFound(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node<T> {
    pub id: NodeId,
    pub token: T,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// Where a tree came from. Carried through corpus files untouched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<String>,
}

/// A rooted ordered tree whose node ids are pre-order ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree<T> {
    nodes: Vec<Node<T>>,
    subtree_end: Vec<usize>,
    pub meta: Option<TreeMeta>,
}

/// A syntax tree labeled with source tokens.
pub type Ast = Tree<String>;

impl<T> Tree<T> {
    /// Builds a tree from `(token, parent index)` entries.
    ///
    /// Entries may come in any order as long as the parent links form a
    /// single tree. Siblings keep the relative order in which they appear in
    /// `links`, and the result is renumbered into pre-order.
    pub fn from_parent_links<I>(links: I) -> Result<Self, TreeError>
    where
        I: IntoIterator<Item = (T, Option<usize>)>,
    {
        let (tokens, parents): (Vec<T>, Vec<Option<usize>>) = links.into_iter().unzip();
        let n = tokens.len();
        if n == 0 {
            return Err(TreeError::Empty);
        }

        let mut root = None;
        let mut children = vec![Vec::new(); n];
        for (i, parent) in parents.iter().enumerate() {
            match *parent {
                None => match root {
                    None => root = Some(i),
                    Some(first) => return Err(TreeError::MultipleRoots { first, second: i }),
                },
                Some(p) if p >= n => return Err(TreeError::DanglingParent { child: i, parent: p }),
                Some(p) if p == i => return Err(TreeError::CycleDetected(i)),
                Some(p) => children[p].push(i),
            }
        }
        // Every entry has a parent, so the links must loop somewhere.
        let Some(root) = root else {
            return Err(TreeError::CycleDetected(0));
        };

        let mut order = Vec::with_capacity(n);
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            order.push(i);
            stack.extend(children[i].iter().rev().copied());
        }
        if order.len() != n {
            // Entries unreachable from the root sit on a parent cycle.
            let mut seen = vec![false; n];
            for &i in &order {
                seen[i] = true;
            }
            let stray = seen.iter().position(|s| !s).unwrap_or(0);
            return Err(TreeError::CycleDetected(stray));
        }

        let mut rank = vec![0usize; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let mut slots: Vec<Option<T>> = tokens.into_iter().map(Some).collect();
        let nodes = order
            .iter()
            .enumerate()
            .map(|(r, &i)| Node {
                id: NodeId(r),
                token: slots[i].take().expect("each entry visited once"),
                parent: parents[i].map(|p| NodeId(rank[p])),
                children: children[i].iter().map(|&c| NodeId(rank[c])).collect(),
            })
            .collect();
        Ok(Self::from_preorder_nodes(nodes))
    }

    fn from_preorder_nodes(nodes: Vec<Node<T>>) -> Self {
        let n = nodes.len();
        let mut subtree_end = vec![0usize; n];
        for i in (0..n).rev() {
            subtree_end[i] = nodes[i].children.last().map_or(i + 1, |last| subtree_end[last.0]);
        }
        Tree { nodes, subtree_end, meta: None }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Always false: a tree holds at least its root.
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    pub fn node(&self, id: NodeId) -> &Node<T> {
        &self.nodes[id.0]
    }

    pub fn get(&self, id: NodeId) -> Option<&Node<T>> {
        self.nodes.get(id.0)
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn token(&self, id: NodeId) -> &T {
        &self.nodes[id.0].token
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent
    }

    pub fn first_child(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].children.first().copied()
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id.0].children.is_empty()
    }

    /// The sibling immediately after `id`, if any.
    ///
    /// In pre-order the next sibling starts right where this subtree ends,
    /// provided both share a parent.
    pub fn next_sibling(&self, id: NodeId) -> Option<NodeId> {
        let parent = self.parent(id)?;
        let next = self.subtree_end[id.0];
        (next < self.subtree_end[parent.0]).then_some(NodeId(next))
    }

    pub fn prev_sibling(&self, id: NodeId) -> Option<NodeId> {
        let parent = self.parent(id)?;
        let siblings = self.children(parent);
        let pos = siblings.iter().position(|&s| s == id)?;
        pos.checked_sub(1).map(|p| siblings[p])
    }

    /// One past the last id in the subtree rooted at `id`.
    pub fn subtree_end(&self, id: NodeId) -> usize {
        self.subtree_end[id.0]
    }

    pub fn subtree_size(&self, id: NodeId) -> usize {
        self.subtree_end[id.0] - id.0
    }

    /// True when `node` lies in the subtree of `ancestor` (including itself).
    pub fn is_descendant_or_self(&self, node: NodeId, ancestor: NodeId) -> bool {
        ancestor.0 <= node.0 && node.0 < self.subtree_end[ancestor.0]
    }

    pub fn is_strict_descendant(&self, node: NodeId, ancestor: NodeId) -> bool {
        node != ancestor && self.is_descendant_or_self(node, ancestor)
    }

    pub fn node_ids(&self) -> impl DoubleEndedIterator<Item = NodeId> + ExactSizeIterator {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn preorder(&self) -> Vec<NodeId> {
        self.node_ids().collect()
    }

    /// Children before parents, siblings left to right.
    pub fn postorder(&self) -> Vec<NodeId> {
        self.postorder_from(self.root())
    }

    /// Post-order of the subtree rooted at `start`.
    pub fn postorder_from(&self, start: NodeId) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.subtree_size(start));
        // (node, next child index to descend into)
        let mut stack: Vec<(NodeId, usize)> = vec![(start, 0)];
        while let Some(top) = stack.last_mut() {
            let (id, next) = *top;
            match self.children(id).get(next) {
                Some(&child) => {
                    top.1 += 1;
                    stack.push((child, 0));
                }
                None => {
                    out.push(id);
                    stack.pop();
                }
            }
        }
        out
    }

    /// Pre-order token sequence, with no structural markers.
    pub fn flatten(&self) -> Vec<&T> {
        self.nodes.iter().map(|n| &n.token).collect()
    }

    /// Parent index per node in pre-order, `None` for the root.
    pub fn parent_indices(&self) -> Vec<Option<usize>> {
        self.nodes.iter().map(|n| n.parent.map(NodeId::index)).collect()
    }

    pub fn map<U, F>(&self, mut f: F) -> Tree<U>
    where
        F: FnMut(NodeId, &T) -> U,
    {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node { id: n.id, token: f(n.id, &n.token), parent: n.parent, children: n.children.clone() })
            .collect();
        Tree { nodes, subtree_end: self.subtree_end.clone(), meta: self.meta.clone() }
    }

    /// Ids on the path from the root down through last children.
    ///
    /// These are the only nodes that can receive a new child without
    /// breaking the pre-order numbering.
    pub fn rightmost_path(&self) -> Vec<NodeId> {
        let mut path = vec![self.root()];
        let mut cur = self.root();
        while let Some(&last) = self.children(cur).last() {
            path.push(last);
            cur = last;
        }
        path
    }

    /// Appends a new last child under `parent`, which must lie on the
    /// rightmost path so the new node becomes the final pre-order node.
    pub fn with_appended_child(&self, parent: NodeId, token: T) -> Option<Tree<T>>
    where
        T: Clone,
    {
        if !self.rightmost_path().contains(&parent) {
            return None;
        }
        let new_id = NodeId(self.len());
        let mut nodes = self.nodes.clone();
        nodes[parent.0].children.push(new_id);
        nodes.push(Node { id: new_id, token, parent: Some(parent), children: Vec::new() });
        let mut tree = Self::from_preorder_nodes(nodes);
        tree.meta = self.meta.clone();
        Some(tree)
    }
}

impl Ast {
    /// Builds an AST, rejecting empty tokens.
    pub fn build<S, I>(links: I) -> Result<Ast, TreeError>
    where
        S: Into<String>,
        I: IntoIterator<Item = (S, Option<usize>)>,
    {
        let links: Vec<(String, Option<usize>)> = links.into_iter().map(|(t, p)| (t.into(), p)).collect();
        if let Some(i) = links.iter().position(|(t, _)| t.is_empty()) {
            return Err(TreeError::EmptyToken(i));
        }
        Tree::from_parent_links(links)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    /// The path start; carries the default state into the root.
    Initial,
    FirstChild,
    NextSibling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    /// `None` only for [`TransitionKind::Initial`].
    pub source: Option<NodeId>,
    pub target: NodeId,
    pub kind: TransitionKind,
}

impl Transition {
    pub fn initial(root: NodeId) -> Self {
        Transition { source: None, target: root, kind: TransitionKind::Initial }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodingPath {
    pub transitions: Vec<Transition>,
}

impl DecodingPath {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn target(&self) -> NodeId {
        self.transitions.last().expect("paths start with Initial").target
    }
}

impl<T> Tree<T> {
    /// The unique path to `target`: step to the first child while the
    /// target lies strictly below the current node, otherwise to the next
    /// sibling.
    pub fn decoding_path(&self, target: NodeId) -> Result<DecodingPath, TreeError> {
        if target.0 >= self.len() {
            return Err(TreeError::NodeNotFound(target));
        }
        let mut transitions = vec![Transition::initial(self.root())];
        let mut cur = self.root();
        while cur != target {
            let (next, kind) = if self.is_strict_descendant(target, cur) {
                (self.first_child(cur), TransitionKind::FirstChild)
            } else {
                (self.next_sibling(cur), TransitionKind::NextSibling)
            };
            let next = next.expect("target is reachable from the root");
            transitions.push(Transition { source: Some(cur), target: next, kind });
            cur = next;
        }
        Ok(DecodingPath { transitions })
    }

    /// The incoming transition of `id`.
    pub fn incoming(&self, id: NodeId) -> Transition {
        match self.parent(id) {
            None => Transition::initial(id),
            Some(parent) => match self.prev_sibling_fast(id, parent) {
                Some(prev) => Transition { source: Some(prev), target: id, kind: TransitionKind::NextSibling },
                None => Transition { source: Some(parent), target: id, kind: TransitionKind::FirstChild },
            },
        }
    }

    fn prev_sibling_fast(&self, id: NodeId, parent: NodeId) -> Option<NodeId> {
        if self.first_child(parent) == Some(id) {
            None
        } else {
            self.prev_sibling(id)
        }
    }

    /// Every edge of the first-child/next-sibling DAG, one per node, in
    /// pre-order of targets.
    pub fn fcns_edges(&self) -> Vec<Transition> {
        self.node_ids().map(|id| self.incoming(id)).collect()
    }

    /// Shortest path through [`Tree::fcns_edges`] by breadth-first search.
    /// Kept as an independent check on [`Tree::decoding_path`].
    pub fn fcns_bfs_path(&self, target: NodeId) -> Option<DecodingPath> {
        let edges = self.fcns_edges();
        let mut outgoing: Vec<Vec<Transition>> = vec![Vec::new(); self.len()];
        for e in &edges {
            if let Some(s) = e.source {
                outgoing[s.0].push(*e);
            }
        }
        let mut via: Vec<Option<Transition>> = vec![None; self.len()];
        via[0] = Some(Transition::initial(self.root()));
        let mut queue = VecDeque::from([self.root()]);
        while let Some(cur) = queue.pop_front() {
            if cur == target {
                break;
            }
            for e in &outgoing[cur.0] {
                if via[e.target.0].is_none() {
                    via[e.target.0] = Some(*e);
                    queue.push_back(e.target);
                }
            }
        }
        let mut rev = Vec::new();
        let mut cur = via.get(target.0).copied().flatten()?;
        loop {
            rev.push(cur);
            match cur.source {
                None => break,
                Some(s) => cur = via[s.0]?,
            }
        }
        rev.reverse();
        Some(DecodingPath { transitions: rev })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    pub(crate) fn fig1() -> Ast {
        Ast::build([
            ("if", None),
            (">", Some(0)),
            ("a", Some(1)),
            ("b", Some(1)),
            ("=", Some(0)),
            ("a", Some(4)),
            ("+", Some(4)),
            ("b", Some(6)),
            ("5", Some(6)),
        ])
        .unwrap()
    }

    fn tokens(t: &Ast, ids: &[NodeId]) -> Vec<String> {
        ids.iter().map(|&i| t.token(i).clone()).collect()
    }

    #[test]
    fn single_node() {
        let t = Ast::build([("if", None)]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.token(t.root()), "if");
        assert_eq!(t.preorder(), vec![NodeId(0)]);
        assert_eq!(t.postorder(), vec![NodeId(0)]);
        assert_eq!(t.fcns_edges(), vec![Transition::initial(NodeId(0))]);
        assert_eq!(t.decoding_path(NodeId(0)).unwrap().transitions, vec![Transition::initial(NodeId(0))]);
    }

    #[test]
    fn condition_subtree() {
        let t = Ast::build([("if", None), (">", Some(0)), ("a", Some(1)), ("b", Some(1))]).unwrap();
        assert_eq!(t.children(NodeId(0)), &[NodeId(1)]);
        assert_eq!(tokens(&t, t.children(NodeId(1))), vec!["a", "b"]);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(Ast::build([("a", None), ("b", None)]), Err(TreeError::MultipleRoots { first: 0, second: 1 }));
        assert_eq!(Ast::build([("a", None), ("b", Some(5))]), Err(TreeError::DanglingParent { child: 1, parent: 5 }));
        assert!(matches!(Ast::build([("a", None), ("b", Some(2)), ("c", Some(1))]), Err(TreeError::CycleDetected(_))));
        assert!(matches!(Ast::build([("a", Some(0))]), Err(TreeError::CycleDetected(0))));
        assert_eq!(Ast::build(Vec::<(String, Option<usize>)>::new()), Err(TreeError::Empty));
        assert_eq!(Ast::build([("", None)]), Err(TreeError::EmptyToken(0)));
    }

    #[test]
    fn non_preorder_input_is_renumbered() {
        // "=" inserted before the children of ">".
        let t = Ast::build([("if", None), (">", Some(0)), ("=", Some(0)), ("a", Some(1))]).unwrap();
        assert_eq!(tokens(&t, &t.preorder()), vec!["if", ">", "a", "="]);
        assert_eq!(t.parent(NodeId(3)), Some(NodeId(0)));
    }

    #[test]
    fn fig1_traversals() {
        let t = fig1();
        assert_eq!(tokens(&t, &t.preorder()), vec!["if", ">", "a", "b", "=", "a", "+", "b", "5"]);
        assert_eq!(tokens(&t, &t.postorder()), vec!["a", "b", ">", "a", "b", "5", "+", "=", "if"]);
        assert_eq!(t.flatten(), vec!["if", ">", "a", "b", "=", "a", "+", "b", "5"]);
    }

    #[test]
    fn chain_and_two_leaves() {
        let chain = Ast::build([("a", None), ("b", Some(0)), ("c", Some(1))]).unwrap();
        assert_eq!(tokens(&chain, &chain.preorder()), vec!["a", "b", "c"]);
        let two = Ast::build([("r", None), ("x", Some(0)), ("y", Some(0))]).unwrap();
        assert_eq!(tokens(&two, &two.postorder()), vec!["x", "y", "r"]);
    }

    #[test]
    fn path_to_second_child() {
        let t = Ast::build([("R", None), ("A", Some(0)), ("B", Some(0))]).unwrap();
        let p = t.decoding_path(NodeId(2)).unwrap();
        assert_eq!(
            p.transitions,
            vec![
                Transition::initial(NodeId(0)),
                Transition { source: Some(NodeId(0)), target: NodeId(1), kind: TransitionKind::FirstChild },
                Transition { source: Some(NodeId(1)), target: NodeId(2), kind: TransitionKind::NextSibling },
            ]
        );
    }

    #[test]
    fn path_to_plus_matches_bfs() {
        let t = fig1();
        let plus = NodeId(6);
        assert_eq!(t.token(plus), "+");
        let p = t.decoding_path(plus).unwrap();
        assert_eq!(Some(p.clone()), t.fcns_bfs_path(plus));
        let kinds: Vec<_> = p.transitions.iter().map(|t| t.kind).collect();
        use TransitionKind::*;
        assert_eq!(kinds, vec![Initial, FirstChild, NextSibling, FirstChild, NextSibling]);
    }

    #[test]
    fn missing_node() {
        assert_eq!(fig1().decoding_path(NodeId(9)), Err(TreeError::NodeNotFound(NodeId(9))));
    }

    #[test]
    fn edge_counts_for_star() {
        let k = 5;
        let mut links = vec![("r".to_string(), None)];
        links.extend((0..k).map(|i| (format!("c{i}"), Some(0))));
        let t = Ast::build(links).unwrap();
        let edges = t.fcns_edges();
        let count = |kind| edges.iter().filter(|e| e.kind == kind).count();
        assert_eq!(count(TransitionKind::Initial), 1);
        assert_eq!(count(TransitionKind::FirstChild), 1);
        assert_eq!(count(TransitionKind::NextSibling), k - 1);
    }

    #[test]
    fn union_of_paths_is_edge_set() {
        let t = fig1();
        let mut union = HashSet::new();
        for id in t.node_ids() {
            union.extend(t.decoding_path(id).unwrap().transitions);
        }
        let edges: HashSet<_> = t.fcns_edges().into_iter().collect();
        assert_eq!(union, edges);
    }

    #[test]
    fn sibling_navigation() {
        let t = fig1();
        assert_eq!(t.next_sibling(NodeId(1)), Some(NodeId(4)));
        assert_eq!(t.next_sibling(NodeId(4)), None);
        assert_eq!(t.next_sibling(NodeId(0)), None);
        assert_eq!(t.next_sibling(NodeId(7)), Some(NodeId(8)));
        assert_eq!(t.prev_sibling(NodeId(8)), Some(NodeId(7)));
        assert_eq!(t.subtree_size(NodeId(4)), 5);
    }

    #[test]
    fn append_on_rightmost_path_only() {
        let t = fig1();
        assert_eq!(t.rightmost_path(), vec![NodeId(0), NodeId(4), NodeId(6), NodeId(8)]);
        let ext = t.with_appended_child(NodeId(4), "x".to_string()).unwrap();
        assert_eq!(ext.len(), 10);
        assert_eq!(ext.next_sibling(NodeId(6)), Some(NodeId(9)));
        assert!(t.with_appended_child(NodeId(1), "x".to_string()).is_none());
    }
}
