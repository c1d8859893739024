//! Rooted taxonomic rank trees with uniform leaf depth.
//!
//! Leaves correspond one-to-one with taxa. Every root-to-leaf path has the
//! same number of edges `L`; trees read from Newick with ragged depths are
//! padded with unary nodes directly above the shallow leaves.

use std::collections::{HashMap, HashSet};

use crate::error::{MmfError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankTree {
    nodes: Vec<Node>,
    root: usize,
    depth: usize,
    /// taxon index -> node id
    leaf_order: Vec<usize>,
    /// node id -> taxon index
    leaf_of_node: Vec<Option<usize>>,
    /// children before parents
    postorder: Vec<usize>,
    /// edges directly above each leaf whose subtree holds only that leaf
    private_edges: Vec<usize>,
    inserted_unary: usize,
}

impl RankTree {
    /// Builds a tree from raw parent links. Leaves are taken in the order given
    /// by `leaf_order`; the depth is normalised if needed.
    pub fn from_nodes(nodes: Vec<Node>, root: usize, leaf_order: Vec<usize>) -> Result<Self> {
        let mut nodes = nodes;
        if leaf_order.is_empty() {
            return Err(MmfError::Empty("tree has no leaves".into()));
        }
        // A bare leaf gets a root of its own so that the tree has one edge.
        let mut root = root;
        if nodes[root].children.is_empty() {
            let new_root = nodes.len();
            nodes.push(Node { parent: None, children: vec![root], name: None });
            nodes[root].parent = Some(new_root);
            root = new_root;
        }
        let inserted = normalize_depth(&mut nodes, root);
        Self::assemble(nodes, root, leaf_order, inserted)
    }

    fn assemble(nodes: Vec<Node>, root: usize, leaf_order: Vec<usize>, inserted: usize) -> Result<Self> {
        let mut seen = HashSet::new();
        for &leaf in &leaf_order {
            let name = nodes[leaf]
                .name
                .as_deref()
                .ok_or_else(|| MmfError::InvalidInput("unnamed leaf".into()))?;
            if !seen.insert(name) {
                return Err(MmfError::DuplicateLeaf(name.to_string()));
            }
        }
        let postorder = postorder(&nodes, root);
        if postorder.len() != nodes.len() {
            return Err(MmfError::InvalidInput("tree is not connected".into()));
        }
        let mut leaf_of_node = vec![None; nodes.len()];
        for (j, &leaf) in leaf_order.iter().enumerate() {
            leaf_of_node[leaf] = Some(j);
        }
        let n_leaves = nodes.iter().filter(|n| n.children.is_empty()).count();
        if n_leaves != leaf_order.len() {
            return Err(MmfError::InvalidInput(format!(
                "leaf order lists {} leaves but the tree has {}",
                leaf_order.len(),
                n_leaves
            )));
        }
        let depth = node_depth(&nodes, leaf_order[0]);
        for &leaf in &leaf_order {
            if node_depth(&nodes, leaf) != depth {
                return Err(MmfError::InvalidInput("leaf depths differ".into()));
            }
        }
        let private_edges = leaf_order
            .iter()
            .map(|&leaf| {
                let mut e = 0;
                let mut v = leaf;
                loop {
                    e += 1;
                    let parent = nodes[v].parent.expect("leaf below root");
                    if parent == root || nodes[parent].children.len() != 1 {
                        break;
                    }
                    v = parent;
                }
                e
            })
            .collect();
        Ok(RankTree {
            nodes,
            root,
            depth,
            leaf_order,
            leaf_of_node,
            postorder,
            private_edges,
            inserted_unary: inserted,
        })
    }

    /// Complete `arity`-ary tree of depth `depth`, keeping the leftmost
    /// `n_leaves` leaves. Leaves are named `t1, t2, ...`.
    pub fn balanced(n_leaves: usize, depth: usize, arity: usize) -> Result<Self> {
        let names: Vec<String> = (1..=n_leaves).map(|j| format!("t{j}")).collect();
        Self::balanced_named(&names, depth, arity)
    }

    pub fn balanced_named(names: &[String], depth: usize, arity: usize) -> Result<Self> {
        let n_leaves = names.len();
        if n_leaves == 0 {
            return Err(MmfError::Empty("balanced tree with no leaves".into()));
        }
        if depth == 0 || arity == 0 {
            return Err(MmfError::InvalidInput("depth and arity must be positive".into()));
        }
        let capacity = (arity as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
        if capacity < n_leaves as u128 {
            return Err(MmfError::InvalidInput(format!(
                "arity^depth = {arity}^{depth} is smaller than {n_leaves} leaves"
            )));
        }
        let mut nodes = vec![Node { parent: None, children: vec![], name: None }];
        let mut leaf_order = Vec::with_capacity(n_leaves);
        // leaves below a node at level d: arity^(depth - d)
        fn build(
            nodes: &mut Vec<Node>,
            leaf_order: &mut Vec<usize>,
            names: &[String],
            parent: usize,
            level: usize,
            depth: usize,
            arity: usize,
            first_leaf: usize,
        ) {
            let span = (arity as u128).pow((depth - level - 1) as u32);
            for c in 0..arity {
                let start = first_leaf as u128 + c as u128 * span;
                if start >= names.len() as u128 {
                    break;
                }
                let id = nodes.len();
                nodes.push(Node { parent: Some(parent), children: vec![], name: None });
                nodes[parent].children.push(id);
                if level + 1 == depth {
                    nodes[id].name = Some(names[start as usize].clone());
                    leaf_order.push(id);
                } else {
                    build(nodes, leaf_order, names, id, level + 1, depth, arity, start as usize);
                }
            }
        }
        build(&mut nodes, &mut leaf_order, names, 0, 0, depth, arity, 0);
        Self::assemble(nodes, 0, leaf_order, 0)
    }

    /// Star tree: every leaf hangs directly off the root (L = 1).
    pub fn star(names: &[String]) -> Result<Self> {
        Self::balanced_named(names, 1, names.len().max(1))
    }

    /// Returns a copy whose taxon indices follow `names`. Fails with the
    /// symmetric difference when the leaf set and `names` disagree.
    pub fn with_taxon_order(&self, names: &[String]) -> Result<Self> {
        let by_name: HashMap<&str, usize> = self
            .leaf_order
            .iter()
            .map(|&id| (self.nodes[id].name.as_deref().unwrap_or(""), id))
            .collect();
        let wanted: HashSet<&str> = names.iter().map(|s| s.trim()).collect();
        let mut missing_in_tree: Vec<&str> = wanted.iter().copied().filter(|n| !by_name.contains_key(n)).collect();
        let mut missing_in_data: Vec<&str> = by_name.keys().copied().filter(|n| !wanted.contains(n)).collect();
        if !missing_in_tree.is_empty() || !missing_in_data.is_empty() || wanted.len() != names.len() {
            missing_in_tree.sort_unstable();
            missing_in_data.sort_unstable();
            return Err(MmfError::InvalidInput(format!(
                "tree leaves and taxa differ; not in tree: [{}]; not in counts: [{}]",
                missing_in_tree.join(", "),
                missing_in_data.join(", ")
            )));
        }
        let leaf_order = names.iter().map(|n| by_name[n.trim()]).collect();
        Self::assemble(self.nodes.clone(), self.root, leaf_order, self.inserted_unary)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Edges on every root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Total node count.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_order.len()
    }

    pub fn leaf_node(&self, taxon: usize) -> usize {
        self.leaf_order[taxon]
    }

    pub fn taxon_of(&self, node: usize) -> Option<usize> {
        self.leaf_of_node[node]
    }

    pub fn leaf_names(&self) -> Vec<String> {
        self.leaf_order
            .iter()
            .map(|&id| self.nodes[id].name.clone().unwrap_or_default())
            .collect()
    }

    pub fn postorder(&self) -> &[usize] {
        &self.postorder
    }

    /// Number of edges above leaf `taxon` whose subtree contains that leaf only.
    /// Equals 1 unless unary nodes sit directly above the leaf.
    pub fn private_edges(&self, taxon: usize) -> usize {
        self.private_edges[taxon]
    }

    /// Unary nodes added to make leaf depths uniform.
    pub fn inserted_unary(&self) -> usize {
        self.inserted_unary
    }

    /// Taxon indices below `node`, in taxon order.
    pub fn leaves_below(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            if let Some(j) = self.leaf_of_node[v] {
                out.push(j);
            }
            stack.extend(self.nodes[v].children.iter().copied());
        }
        out.sort_unstable();
        out
    }

    /// Taxon indices in left-to-right tree order, used for plotting.
    pub fn display_order(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            if let Some(j) = self.leaf_of_node[v] {
                out.push(j);
            }
            stack.extend(self.nodes[v].children.iter().rev().copied());
        }
        out
    }

    pub fn to_newick(&self) -> String {
        fn write(tree: &RankTree, v: usize, out: &mut String) {
            let node = &tree.nodes[v];
            if !node.children.is_empty() {
                out.push('(');
                for (i, &c) in node.children.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(tree, c, out);
                }
                out.push(')');
            }
            if let Some(name) = &node.name {
                if name.chars().any(|c| "(),:;[]' \t".contains(c)) {
                    out.push('\'');
                    out.push_str(&name.replace('\'', "''"));
                    out.push('\'');
                } else {
                    out.push_str(name);
                }
            }
        }
        let mut out = String::new();
        write(self, self.root, &mut out);
        out.push(';');
        out
    }
}

fn node_depth(nodes: &[Node], mut v: usize) -> usize {
    let mut d = 0;
    while let Some(p) = nodes[v].parent {
        d += 1;
        v = p;
    }
    d
}

fn postorder(nodes: &[Node], root: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut stack = vec![(root, false)];
    let mut visited = vec![false; nodes.len()];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            out.push(v);
            continue;
        }
        if visited[v] {
            // cycle or shared child
            return Vec::new();
        }
        visited[v] = true;
        stack.push((v, true));
        for &c in nodes[v].children.iter().rev() {
            stack.push((c, false));
        }
    }
    out
}

/// Pads shallow leaves with unary nodes so that every leaf sits at the maximum
/// depth. Returns the number of inserted nodes.
fn normalize_depth(nodes: &mut Vec<Node>, root: usize) -> usize {
    let leaves: Vec<usize> = (0..nodes.len()).filter(|&v| nodes[v].children.is_empty()).collect();
    let depths: Vec<usize> = leaves.iter().map(|&v| node_depth(nodes, v)).collect();
    let max_depth = depths.iter().copied().max().unwrap_or(0);
    let mut inserted = 0;
    for (&leaf, &d) in leaves.iter().zip(&depths) {
        for _ in d..max_depth {
            let parent = nodes[leaf].parent.expect("leaf is not the root");
            let id = nodes.len();
            nodes.push(Node { parent: Some(parent), children: vec![leaf], name: None });
            let slot = nodes[parent].children.iter().position(|&c| c == leaf).unwrap();
            nodes[parent].children[slot] = id;
            nodes[leaf].parent = Some(id);
            inserted += 1;
        }
    }
    debug_assert!(nodes[root].parent.is_none());
    inserted
}

/// Parses a Newick string. Branch lengths, internal labels and `[...]`
/// comments are accepted and ignored; leaves must be named.
pub fn parse_newick(text: &str) -> Result<RankTree> {
    let mut parser = NewickParser { src: text.trim().as_bytes(), pos: 0, nodes: Vec::new(), leaves: Vec::new() };
    if parser.src.is_empty() {
        return Err(MmfError::Empty("empty newick string".into()));
    }
    let root = parser.subtree(None)?;
    parser.skip_ws();
    if parser.peek() != Some(b';') {
        return Err(parser.err("expected ';' at end of tree"));
    }
    parser.pos += 1;
    parser.skip_ws();
    if parser.pos != parser.src.len() {
        return Err(parser.err("trailing characters after ';'"));
    }
    let NewickParser { nodes, leaves, .. } = parser;
    RankTree::from_nodes(nodes, root, leaves)
}

struct NewickParser<'a> {
    src: &'a [u8],
    pos: usize,
    nodes: Vec<Node>,
    leaves: Vec<usize>,
}

impl NewickParser<'_> {
    fn err(&self, msg: &str) -> MmfError {
        MmfError::Newick { pos: self.pos, msg: msg.to_string() }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => self.pos += 1,
                Some(b'[') => {
                    while let Some(c) = self.peek() {
                        self.pos += 1;
                        if c == b']' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
    }

    fn subtree(&mut self, parent: Option<usize>) -> Result<usize> {
        self.skip_ws();
        let id = self.nodes.len();
        self.nodes.push(Node { parent, children: vec![], name: None });
        if self.peek() == Some(b'(') {
            self.pos += 1;
            loop {
                let child = self.subtree(Some(id))?;
                self.nodes[id].children.push(child);
                self.skip_ws();
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.err("expected ',' or ')'")),
                }
            }
            let label = self.label()?;
            self.nodes[id].name = label;
        } else {
            let label = self.label()?;
            match label {
                Some(name) => {
                    self.nodes[id].name = Some(name);
                    self.leaves.push(id);
                }
                None => return Err(self.err("leaf without a name")),
            }
        }
        self.skip_ws();
        if self.peek() == Some(b':') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while let Some(c) = self.peek() {
                if c.is_ascii_digit() || matches!(c, b'.' | b'-' | b'+' | b'e' | b'E') {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
            if s.parse::<f64>().is_err() {
                return Err(self.err("invalid branch length"));
            }
        }
        Ok(id)
    }

    fn label(&mut self) -> Result<Option<String>> {
        self.skip_ws();
        if self.peek() == Some(b'\'') {
            self.pos += 1;
            let mut out = Vec::new();
            loop {
                match self.peek() {
                    None => return Err(self.err("unterminated quoted label")),
                    Some(b'\'') => {
                        self.pos += 1;
                        if self.peek() == Some(b'\'') {
                            out.push(b'\'');
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                    Some(c) => {
                        out.push(c);
                        self.pos += 1;
                    }
                }
            }
            let s = String::from_utf8(out).map_err(|_| self.err("label is not UTF-8"))?;
            return Ok(Some(s.trim().to_string()));
        }
        let start = self.pos;
        while let Some(c) = self.peek() {
            if matches!(c, b'(' | b')' | b',' | b':' | b';' | b'[') {
                break;
            }
            self.pos += 1;
        }
        let raw = std::str::from_utf8(&self.src[start..self.pos]).map_err(|_| self.err("label is not UTF-8"))?;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            Ok(None)
        } else {
            Ok(Some(trimmed.to_string()))
        }
    }
}
