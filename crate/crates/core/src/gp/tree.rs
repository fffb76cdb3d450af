use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Magnitude bound applied to every intermediate result.
pub const EVAL_CLAMP: f64 = 1e12;
/// Denominators smaller than this in magnitude trigger protected division.
pub const PROTECTED_DIV_EPS: f64 = 1e-9;

/// The four binary arithmetic primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    /// Protected division: yields 1.0 when the denominator is within
    /// [`PROTECTED_DIV_EPS`] of zero.
    Div,
}

impl BinOp {
    pub const ALL: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b.abs() < PROTECTED_DIV_EPS {
                    1.0
                } else {
                    a / b
                }
            }
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// A node of an expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Op(BinOp, Box<Node>, Box<Node>),
    /// Index into the owning view's feature list.
    Feature(usize),
    Const(f64),
}

impl Node {
    pub fn op(op: BinOp, left: Node, right: Node) -> Node {
        Node::Op(op, Box::new(left), Box::new(right))
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, Node::Op(..))
    }

    /// Number of nodes on the longest root-to-leaf path; a lone terminal has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Node::Op(_, l, r) => 1 + l.depth().max(r.depth()),
            _ => 1,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Node::Op(_, l, r) => 1 + l.size() + r.size(),
            _ => 1,
        }
    }

    /// The subtree at preorder position `idx`.
    pub fn get(&self, idx: usize) -> Option<&Node> {
        if idx == 0 {
            return Some(self);
        }
        match self {
            Node::Op(_, l, r) => {
                let left_size = l.size();
                if idx <= left_size {
                    l.get(idx - 1)
                } else {
                    r.get(idx - 1 - left_size)
                }
            }
            _ => None,
        }
    }

    /// Level (root = 1) of the node at preorder position `idx`.
    pub fn level_of(&self, idx: usize) -> Option<usize> {
        if idx == 0 {
            return Some(1);
        }
        match self {
            Node::Op(_, l, r) => {
                let left_size = l.size();
                let inner = if idx <= left_size {
                    l.level_of(idx - 1)
                } else {
                    r.level_of(idx - 1 - left_size)
                };
                inner.map(|lvl| lvl + 1)
            }
            _ => None,
        }
    }

    /// Replaces the subtree at preorder position `idx`, returning the old one.
    pub fn replace(&mut self, idx: usize, new: Node) -> Option<Node> {
        if idx == 0 {
            return Some(std::mem::replace(self, new));
        }
        match self {
            Node::Op(_, l, r) => {
                let left_size = l.size();
                if idx <= left_size {
                    l.replace(idx - 1, new)
                } else {
                    r.replace(idx - 1 - left_size, new)
                }
            }
            _ => None,
        }
    }

    /// Largest feature index referenced, if any.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            Node::Op(_, l, r) => match (l.max_feature(), r.max_feature()) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            },
            Node::Feature(i) => Some(*i),
            Node::Const(_) => None,
        }
    }

    fn for_each_terminal(&self, f: &mut impl FnMut(&Node)) {
        match self {
            Node::Op(_, l, r) => {
                l.for_each_terminal(f);
                r.for_each_terminal(f);
            }
            leaf => f(leaf),
        }
    }

    #[inline]
    pub fn eval(&self, row: &[f64]) -> f64 {
        let v = match self {
            Node::Op(op, l, r) => op.apply(l.eval(row), r.eval(row)),
            Node::Feature(i) => row[*i],
            Node::Const(c) => *c,
        };
        if v.is_nan() {
            0.0
        } else {
            v.clamp(-EVAL_CLAMP, EVAL_CLAMP)
        }
    }
}

/// An arithmetic expression over the features of one view: the unit a gene is made of.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ExprTree {
    pub root: Node,
}

impl ExprTree {
    pub fn new(root: Node) -> Self {
        Self { root }
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    /// Evaluates the tree on one row. Total: protected division and clamping
    /// at [`EVAL_CLAMP`] keep the result finite.
    pub fn eval(&self, row: &[f64]) -> f64 {
        self.root.eval(row)
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.root.max_feature()
    }

    /// Checks the structural invariants against a view width and constant range.
    pub fn check(&self, max_depth: usize, n_features: usize, const_range: (f64, f64)) -> bool {
        let mut ok = self.depth() <= max_depth;
        self.root.for_each_terminal(&mut |leaf| match leaf {
            Node::Feature(i) => ok &= *i < n_features,
            Node::Const(c) => ok &= *c >= const_range.0 && *c <= const_range.1,
            Node::Op(..) => unreachable!(),
        });
        ok
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Op(op, l, r) => write!(f, "({} {} {})", op.symbol(), l, r),
            Node::Feature(i) => write!(f, "x{i}"),
            Node::Const(c) => write!(f, "{c:?}"),
        }
    }
}

impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl From<ExprTree> for String {
    fn from(t: ExprTree) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for ExprTree {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl FromStr for ExprTree {
    type Err = Error;

    /// Parses the prefix form produced by `Display`, e.g. `(+ x0 (* -2.5 x3))`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let tokens = tokenize(s);
        let mut pos = 0;
        let root = parse_node(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(parse_err(format!("trailing input after token {pos}")));
        }
        Ok(ExprTree { root })
    }
}

fn parse_err(message: String) -> Error {
    Error::Parse {
        what: "expression tree".into(),
        message,
    }
}

fn tokenize(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' | ')' => {
                if let Some(st) = start.take() {
                    out.push(&s[st..i]);
                }
                out.push(&s[i..i + 1]);
            }
            c if c.is_whitespace() => {
                if let Some(st) = start.take() {
                    out.push(&s[st..i]);
                }
            }
            _ => {
                if start.is_none() {
                    start = Some(i);
                }
            }
        }
    }
    if let Some(st) = start {
        out.push(&s[st..]);
    }
    out
}

fn parse_node(tokens: &[&str], pos: &mut usize) -> Result<Node, Error> {
    let tok = *tokens
        .get(*pos)
        .ok_or_else(|| parse_err("unexpected end of input".into()))?;
    *pos += 1;
    if tok == "(" {
        let sym = *tokens
            .get(*pos)
            .ok_or_else(|| parse_err("missing operator".into()))?;
        *pos += 1;
        let op = match sym {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            other => return Err(parse_err(format!("unknown operator `{other}`"))),
        };
        let l = parse_node(tokens, pos)?;
        let r = parse_node(tokens, pos)?;
        if tokens.get(*pos) != Some(&")") {
            return Err(parse_err(format!("expected `)` at token {}", *pos)));
        }
        *pos += 1;
        Ok(Node::op(op, l, r))
    } else if let Some(idx) = tok.strip_prefix('x') {
        idx.parse()
            .map(Node::Feature)
            .map_err(|_| parse_err(format!("bad feature terminal `{tok}`")))
    } else {
        tok.parse()
            .map(Node::Const)
            .map_err(|_| parse_err(format!("bad constant `{tok}`")))
    }
}
