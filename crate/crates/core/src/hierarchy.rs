//! Class hierarchies.
//!
//! A hierarchy is a rooted, ordered tree whose leaves are the class labels.
//! Internal nodes and the edges ("branches") leaving them are numbered
//! breadth-first starting at the root, so for `((1,2),(3,4))` the root's two
//! branches come first, followed by the four branches of the second level.
//! Classes are numbered in left-to-right textual order of their leaves.
//!
//! Text format:
//!
//! ```text
//! tree := node
//! node := leaf | '(' node (',' node)+ ')'
//! leaf := token | '"' chars '"'
//! ```
//!
//! Whitespace outside quotes is ignored.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Child {
    Node(usize),
    Leaf(usize),
}

/// An internal node of the hierarchy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    /// Outgoing branch indices, in child order.
    pub branches: Vec<usize>,
    /// Distance from the root (the root has depth 0).
    pub depth: usize,
    /// Branch entering this node; `None` for the root.
    pub parent_branch: Option<usize>,
    /// Classes below this node, ascending.
    pub classes: Vec<usize>,
}

/// An edge from internal node `parent` to its `slot`-th child.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Branch {
    pub parent: usize,
    pub slot: usize,
    pub child: Child,
}

/// Branch indices from the root down to one leaf.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeafPath(Vec<usize>);

impl LeafPath {
    pub fn branches(&self) -> &[usize] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassHierarchy {
    nodes: Vec<Node>,
    branches: Vec<Branch>,
    labels: Vec<String>,
    paths: Vec<LeafPath>,
    index: HashMap<String, usize>,
}

enum Ast {
    Leaf(String),
    Inner(Vec<Ast>),
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn node(&mut self) -> Result<Ast> {
        self.skip_ws();
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some('(') => {
                let start = self.pos;
                self.pos += 1;
                let mut children = vec![self.node()?];
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(',') => {
                            self.pos += 1;
                            children.push(self.node()?);
                        }
                        Some(')') => {
                            self.pos += 1;
                            break;
                        }
                        Some(c) => return self.err(format!("expected ',' or ')', found {c:?}")),
                        None => return self.err("unclosed '('"),
                    }
                }
                if children.len() < 2 {
                    return Err(Error::TooFewChildren {
                        pos: start,
                        count: children.len(),
                    });
                }
                Ok(Ast::Inner(children))
            }
            Some('"') => {
                self.pos += 1;
                let rest = &self.text[self.pos..];
                match rest.find('"') {
                    Some(end) => {
                        let label = rest[..end].to_string();
                        self.pos += end + 1;
                        Ok(Ast::Leaf(label))
                    }
                    None => self.err("unterminated quoted label"),
                }
            }
            Some(c) if is_delimiter(c) => self.err(format!("unexpected {c:?}")),
            Some(_) => {
                let rest = &self.text[self.pos..];
                let end = rest
                    .find(|c: char| is_delimiter(c) || c.is_whitespace())
                    .unwrap_or(rest.len());
                self.pos += end;
                Ok(Ast::Leaf(rest[..end].to_string()))
            }
        }
    }
}

fn is_delimiter(c: char) -> bool {
    matches!(c, '(' | ')' | ',' | '"')
}

fn collect_labels(ast: &Ast, out: &mut Vec<String>) {
    match ast {
        Ast::Leaf(l) => out.push(l.clone()),
        Ast::Inner(ch) => ch.iter().for_each(|c| collect_labels(c, out)),
    }
}

impl ClassHierarchy {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::EmptyHierarchy);
        }
        let mut parser = Parser { text, pos: 0 };
        let ast = parser.node()?;
        parser.skip_ws();
        if parser.pos != text.len() {
            return parser.err("trailing input after tree");
        }
        let children = match ast {
            Ast::Inner(children) => children,
            Ast::Leaf(_) => {
                return Err(Error::TooFewChildren { pos: 0, count: 1 });
            }
        };

        let mut labels = Vec::new();
        children.iter().for_each(|c| collect_labels(c, &mut labels));
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }

        let mut nodes: Vec<Node> = Vec::new();
        let mut branches: Vec<Branch> = Vec::new();
        let mut queue: VecDeque<(&[Ast], usize, Option<usize>)> = VecDeque::new();
        queue.push_back((&children, 0, None));
        while let Some((kids, depth, parent_branch)) = queue.pop_front() {
            let m = nodes.len();
            let mut node = Node {
                branches: Vec::with_capacity(kids.len()),
                depth,
                parent_branch,
                classes: Vec::new(),
            };
            for (slot, kid) in kids.iter().enumerate() {
                let b = branches.len();
                let child = match kid {
                    Ast::Leaf(l) => Child::Leaf(index[l]),
                    Ast::Inner(grand) => {
                        // BFS: the child gets the next free index after everything queued.
                        let id = m + queue.len() + 1;
                        queue.push_back((grand, depth + 1, Some(b)));
                        Child::Node(id)
                    }
                };
                branches.push(Branch {
                    parent: m,
                    slot,
                    child,
                });
                node.branches.push(b);
            }
            nodes.push(node);
        }

        let mut paths = vec![LeafPath(Vec::new()); labels.len()];
        for (b, br) in branches.iter().enumerate() {
            if let Child::Leaf(class) = br.child {
                let mut path = vec![b];
                let mut up = nodes[br.parent].parent_branch;
                while let Some(pb) = up {
                    path.push(pb);
                    up = nodes[branches[pb].parent].parent_branch;
                }
                path.reverse();
                paths[class] = LeafPath(path);
            }
        }
        for (class, path) in paths.iter().enumerate() {
            for &b in path.branches() {
                nodes[branches[b].parent].classes.push(class);
            }
        }

        Ok(ClassHierarchy {
            nodes,
            branches,
            labels,
            paths,
            index,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    /// Number of internal nodes.
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, class: usize) -> &str {
        &self.labels[class]
    }

    pub fn class_index(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn node(&self, m: usize) -> &Node {
        &self.nodes[m]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn branch(&self, b: usize) -> &Branch {
        &self.branches[b]
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Number of children of internal node `m`.
    pub fn n_children(&self, m: usize) -> usize {
        self.nodes[m].branches.len()
    }

    pub fn leaf_path(&self, label: &str) -> Result<&LeafPath> {
        Ok(&self.paths[self.class_index(label)?])
    }

    pub fn path(&self, class: usize) -> &LeafPath {
        &self.paths[class]
    }

    pub fn is_flat(&self) -> bool {
        self.paths.iter().all(|p| p.depth() == 1)
    }

    /// Child slot taken at node `m` on the way to `class`, if the class lies below `m`.
    pub fn route(&self, class: usize, m: usize) -> Option<usize> {
        self.paths[class]
            .branches()
            .iter()
            .map(|&b| &self.branches[b])
            .find(|br| br.parent == m)
            .map(|br| br.slot)
    }

    /// Classes whose leaf path passes through branch `b`, ascending.
    pub fn classes_below(&self, b: usize) -> Vec<usize> {
        (0..self.n_classes())
            .filter(|&j| self.paths[j].branches().contains(&b))
            .collect()
    }

    fn write_node(&self, m: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, &b) in self.nodes[m].branches.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match self.branches[b].child {
                Child::Node(c) => self.write_node(c, f)?,
                Child::Leaf(j) => write_label(&self.labels[j], f)?,
            }
        }
        f.write_str(")")
    }
}

fn write_label(label: &str, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if label.is_empty() || label.chars().any(|c| is_delimiter(c) || c.is_whitespace()) {
        write!(f, "\"{label}\"")
    } else {
        f.write_str(label)
    }
}

impl fmt::Display for ClassHierarchy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_node(0, f)
    }
}

impl FromStr for ClassHierarchy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl serde::Serialize for ClassHierarchy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for ClassHierarchy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Self::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn depths(h: &ClassHierarchy) -> Vec<usize> {
        (0..h.n_classes()).map(|j| h.path(j).depth()).collect()
    }

    #[test]
    fn two_level_binary_tree() {
        let h = ClassHierarchy::parse("((1,2),(3,4))").unwrap();
        assert_eq!(h.n_classes(), 4);
        assert_eq!(h.n_nodes(), 3);
        assert_eq!(h.n_branches(), 6);
        // phi11, phi12 leave the root; phi21..phi24 are the leaf branches
        assert_eq!(h.leaf_path("1").unwrap().branches(), &[0, 2]);
        assert_eq!(h.leaf_path("2").unwrap().branches(), &[0, 3]);
        assert_eq!(h.leaf_path("3").unwrap().branches(), &[1, 4]);
        assert_eq!(h.leaf_path("4").unwrap().branches(), &[1, 5]);
        assert!(!h.is_flat());
    }

    #[test]
    fn flat_tree() {
        let h = ClassHierarchy::parse("(a,b,c)").unwrap();
        assert_eq!(h.n_nodes(), 1);
        assert_eq!(h.n_branches(), 3);
        assert_eq!(h.leaf_path("b").unwrap().branches(), &[1]);
        assert!(h.is_flat());
    }

    #[test]
    fn uneven_tree() {
        let h = ClassHierarchy::parse("((1,2),(3,(4,5)),6)").unwrap();
        assert_eq!(h.n_branches(), 9);
        assert_eq!(depths(&h), vec![2, 2, 2, 3, 3, 1]);
        assert_eq!(h.leaf_path("5").unwrap().depth(), 3);
        assert_eq!(h.labels(), &["1", "2", "3", "4", "5", "6"]);
    }

    #[test]
    fn routing_follows_paths() {
        let h = ClassHierarchy::parse("((1,2),(3,(4,5)),6)").unwrap();
        let five = h.class_index("5").unwrap();
        assert_eq!(h.route(five, 0), Some(1));
        assert_eq!(h.route(h.class_index("1").unwrap(), 2), None);
        assert_eq!(h.classes_below(1), vec![2, 3, 4]);
    }

    #[test]
    fn quoted_labels_and_whitespace() {
        let h = ClassHierarchy::parse(" ( \"Fig. Cap.\" ,\n (x , \"a,b\") ) ").unwrap();
        assert_eq!(h.labels(), &["Fig. Cap.", "x", "a,b"]);
        assert_eq!(h.to_string(), "(\"Fig. Cap.\",(x,\"a,b\"))");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ClassHierarchy::parse("  "), Err(Error::EmptyHierarchy)));
        assert!(matches!(
            ClassHierarchy::parse("(a)"),
            Err(Error::TooFewChildren { count: 1, .. })
        ));
        assert!(matches!(
            ClassHierarchy::parse("a"),
            Err(Error::TooFewChildren { .. })
        ));
        assert!(matches!(
            ClassHierarchy::parse("(a,(b,a))"),
            Err(Error::DuplicateLabel(l)) if l == "a"
        ));
        assert!(matches!(
            ClassHierarchy::parse("(a,b"),
            Err(Error::Syntax { pos: 4, .. })
        ));
        assert!(matches!(
            ClassHierarchy::parse("(a,,b)"),
            Err(Error::Syntax { pos: 3, .. })
        ));
        assert!(matches!(
            ClassHierarchy::parse("(a,b) c"),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(
            ClassHierarchy::parse("(a,\"b)"),
            Err(Error::Syntax { .. })
        ));
    }

    #[test]
    fn unknown_label() {
        let h = ClassHierarchy::parse("(a,b)").unwrap();
        assert!(matches!(h.leaf_path("z"), Err(Error::UnknownLabel(_))));
    }

    fn arb_tree() -> impl Strategy<Value = String> {
        let leaf = "[a-z][a-z0-9]{0,3}".prop_map(|s| s);
        leaf.prop_recursive(4, 32, 4, |inner| {
            prop::collection::vec(inner, 2..5).prop_map(|v| format!("({})", v.join(",")))
        })
        .prop_filter("root must be internal", |s| s.starts_with('('))
    }

    fn uniquify(text: &str) -> String {
        // give every leaf a distinct label while keeping the shape
        let mut out = String::new();
        let mut n = 0;
        let mut in_label = false;
        for c in text.chars() {
            if matches!(c, '(' | ')' | ',') {
                in_label = false;
                out.push(c);
            } else if !in_label {
                in_label = true;
                out.push_str(&format!("c{n}"));
                n += 1;
            }
        }
        out
    }

    proptest! {
        #[test]
        fn round_trip_and_branch_counts(raw in arb_tree()) {
            let text = uniquify(&raw);
            let h = ClassHierarchy::parse(&text).unwrap();
            let again = ClassHierarchy::parse(&h.to_string()).unwrap();
            prop_assert_eq!(&h, &again);

            let total: usize = (0..h.n_nodes()).map(|m| h.n_children(m)).sum();
            prop_assert_eq!(total, h.n_branches());
            prop_assert_eq!(h.n_branches(), h.n_nodes() + h.n_classes() - 1);

            let mut seen = vec![false; h.n_branches()];
            for j in 0..h.n_classes() {
                let path = h.path(j).branches();
                prop_assert_eq!(h.branch(path[0]).parent, 0);
                for w in path.windows(2) {
                    prop_assert_eq!(h.branch(w[0]).child, Child::Node(h.branch(w[1]).parent));
                }
                prop_assert_eq!(h.branch(*path.last().unwrap()).child, Child::Leaf(j));
                path.iter().for_each(|&b| seen[b] = true);
            }
            prop_assert!(seen.into_iter().all(|s| s));
        }
    }
}
