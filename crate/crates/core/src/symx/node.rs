use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, LazyLock, Mutex, MutexGuard, Weak};

/// Handle to an interned, immutable expression node.
///
/// Structurally identical nodes share one allocation, so pointer equality is
/// structural equality and common subexpressions are stored once.
#[derive(Clone)]
pub struct Expression(pub(crate) Arc<Node>);

pub struct Node {
    pub(crate) kind: Kind,
    pub(crate) hash: u64,
    pub(crate) vars: u64,
    pub(crate) tree_size: u64,
}

/// Node variants. Children are themselves interned expressions.
#[derive(Clone)]
pub enum Kind {
    Const(f64),
    Var(Arc<str>),
    Neg(Expression),
    Add(Expression, Expression),
    Sub(Expression, Expression),
    Mul(Expression, Expression),
    Div(Expression, Expression),
    Pow(Expression, Expression),
    Exp(Expression),
    Ln(Expression),
    Sqrt(Expression),
    Abs(Expression),
    /// Derivative of `Abs`; evaluates to -1, 0 or 1.
    Sign(Expression),
    NormalPdf(Expression),
    NormalCdf(Expression),
}

/// Tag of a node, without children.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Const,
    Var,
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sign,
    NormalPdf,
    NormalCdf,
}

impl NodeKind {
    pub fn symbol(self) -> &'static str {
        match self {
            NodeKind::Const => "const",
            NodeKind::Var => "var",
            NodeKind::Neg => "neg",
            NodeKind::Add => "+",
            NodeKind::Sub => "-",
            NodeKind::Mul => "*",
            NodeKind::Div => "/",
            NodeKind::Pow => "^",
            NodeKind::Exp => "exp",
            NodeKind::Ln => "ln",
            NodeKind::Sqrt => "sqrt",
            NodeKind::Abs => "abs",
            NodeKind::Sign => "sign",
            NodeKind::NormalPdf => "npdf",
            NodeKind::NormalCdf => "ncdf",
        }
    }

    pub fn from_symbol(s: &str) -> Option<NodeKind> {
        Some(match s {
            "neg" => NodeKind::Neg,
            "+" => NodeKind::Add,
            "-" => NodeKind::Sub,
            "*" => NodeKind::Mul,
            "/" => NodeKind::Div,
            "^" => NodeKind::Pow,
            "exp" => NodeKind::Exp,
            "ln" => NodeKind::Ln,
            "sqrt" => NodeKind::Sqrt,
            "abs" => NodeKind::Abs,
            "sign" => NodeKind::Sign,
            "npdf" => NodeKind::NormalPdf,
            "ncdf" => NodeKind::NormalCdf,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            NodeKind::Const | NodeKind::Var => 0,
            NodeKind::Add | NodeKind::Sub | NodeKind::Mul | NodeKind::Div | NodeKind::Pow => 2,
            _ => 1,
        }
    }
}

impl Kind {
    pub fn tag(&self) -> NodeKind {
        match self {
            Kind::Const(_) => NodeKind::Const,
            Kind::Var(_) => NodeKind::Var,
            Kind::Neg(_) => NodeKind::Neg,
            Kind::Add(..) => NodeKind::Add,
            Kind::Sub(..) => NodeKind::Sub,
            Kind::Mul(..) => NodeKind::Mul,
            Kind::Div(..) => NodeKind::Div,
            Kind::Pow(..) => NodeKind::Pow,
            Kind::Exp(_) => NodeKind::Exp,
            Kind::Ln(_) => NodeKind::Ln,
            Kind::Sqrt(_) => NodeKind::Sqrt,
            Kind::Abs(_) => NodeKind::Abs,
            Kind::Sign(_) => NodeKind::Sign,
            Kind::NormalPdf(_) => NodeKind::NormalPdf,
            Kind::NormalCdf(_) => NodeKind::NormalCdf,
        }
    }

    /// Builds a node of the given tag from children. Panics on arity mismatch.
    pub fn from_parts(tag: NodeKind, mut args: Vec<Expression>) -> Kind {
        assert_eq!(args.len(), tag.arity(), "wrong arity for {}", tag.symbol());
        let b = if args.len() == 2 { args.pop() } else { None };
        let a = args.pop();
        match tag {
            NodeKind::Neg => Kind::Neg(a.unwrap()),
            NodeKind::Add => Kind::Add(a.unwrap(), b.unwrap()),
            NodeKind::Sub => Kind::Sub(a.unwrap(), b.unwrap()),
            NodeKind::Mul => Kind::Mul(a.unwrap(), b.unwrap()),
            NodeKind::Div => Kind::Div(a.unwrap(), b.unwrap()),
            NodeKind::Pow => Kind::Pow(a.unwrap(), b.unwrap()),
            NodeKind::Exp => Kind::Exp(a.unwrap()),
            NodeKind::Ln => Kind::Ln(a.unwrap()),
            NodeKind::Sqrt => Kind::Sqrt(a.unwrap()),
            NodeKind::Abs => Kind::Abs(a.unwrap()),
            NodeKind::Sign => Kind::Sign(a.unwrap()),
            NodeKind::NormalPdf => Kind::NormalPdf(a.unwrap()),
            NodeKind::NormalCdf => Kind::NormalCdf(a.unwrap()),
            NodeKind::Const | NodeKind::Var => unreachable!("leaf built through from_parts"),
        }
    }

    pub fn children(&self) -> Children<'_> {
        match self {
            Kind::Const(_) | Kind::Var(_) => Children::None,
            Kind::Add(a, b) | Kind::Sub(a, b) | Kind::Mul(a, b) | Kind::Div(a, b) | Kind::Pow(a, b) => {
                Children::Two(a, b)
            }
            Kind::Neg(a)
            | Kind::Exp(a)
            | Kind::Ln(a)
            | Kind::Sqrt(a)
            | Kind::Abs(a)
            | Kind::Sign(a)
            | Kind::NormalPdf(a)
            | Kind::NormalCdf(a) => Children::One(a),
        }
    }
}

pub enum Children<'a> {
    None,
    One(&'a Expression),
    Two(&'a Expression, &'a Expression),
}

impl<'a> Children<'a> {
    pub fn to_vec(&self) -> Vec<&'a Expression> {
        match *self {
            Children::None => vec![],
            Children::One(a) => vec![a],
            Children::Two(a, b) => vec![a, b],
        }
    }
}

#[derive(PartialEq, Eq, Hash)]
enum Key {
    Const(u64),
    Var(Arc<str>),
    Unary(NodeKind, usize),
    Binary(NodeKind, usize, usize),
}

fn key_of(kind: &Kind) -> Key {
    match kind {
        Kind::Const(c) => Key::Const(canonical_bits(*c)),
        Kind::Var(n) => Key::Var(n.clone()),
        other => match other.children() {
            Children::One(a) => Key::Unary(other.tag(), a.addr()),
            Children::Two(a, b) => Key::Binary(other.tag(), a.addr(), b.addr()),
            Children::None => unreachable!(),
        },
    }
}

fn canonical_bits(c: f64) -> u64 {
    if c == 0.0 {
        0.0f64.to_bits()
    } else {
        c.to_bits()
    }
}

static INTERNER: LazyLock<Mutex<HashMap<Key, Weak<Node>>>> = LazyLock::new(Default::default);
static VARIABLES: LazyLock<Mutex<Vec<Arc<str>>>> = LazyLock::new(Default::default);

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Bit used for a variable in the per-node dependency mask. Names beyond the
/// first 63 share the last bit, which keeps the mask conservative.
pub(crate) fn var_bit(name: &str) -> u64 {
    let mut vars = lock(&VARIABLES);
    let id = match vars.iter().position(|v| &**v == name) {
        Some(i) => i,
        None => {
            vars.push(Arc::from(name));
            vars.len() - 1
        }
    };
    1u64 << id.min(63)
}

const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn mix(h: u64, x: u64) -> u64 {
    let mut h = (h ^ x).wrapping_mul(FNV_PRIME);
    h ^= h >> 29;
    h
}

impl Node {
    fn new(kind: Kind) -> Node {
        let tag = kind.tag() as u64;
        let mut hash = mix(0xcbf2_9ce4_8422_2325, tag);
        let (vars, tree_size) = match &kind {
            Kind::Const(c) => {
                hash = mix(hash, canonical_bits(*c));
                (0, 1)
            }
            Kind::Var(n) => {
                let mut s = std::collections::hash_map::DefaultHasher::new();
                n.hash(&mut s);
                hash = mix(hash, s.finish());
                (var_bit(n), 1)
            }
            other => {
                let mut vars = 0;
                let mut size = 1u64;
                for c in other.children().to_vec() {
                    hash = mix(hash, c.0.hash);
                    vars |= c.0.vars;
                    size = size.saturating_add(c.0.tree_size);
                }
                (vars, size)
            }
        };
        Node { kind, hash, vars, tree_size }
    }
}

impl Drop for Node {
    fn drop(&mut self) {
        let key = key_of(&self.kind);
        let mut map = lock(&INTERNER);
        if let Some(w) = map.get(&key) {
            if std::ptr::eq(w.as_ptr(), self) {
                map.remove(&key);
            }
        }
    }
}

impl Expression {
    /// Interns a node exactly as given, without simplification.
    pub fn node(kind: Kind) -> Expression {
        let key = key_of(&kind);
        let mut map = lock(&INTERNER);
        if let Some(existing) = map.get(&key).and_then(Weak::upgrade) {
            drop(map);
            return Expression(existing);
        }
        let node = Arc::new(Node::new(kind));
        map.insert(key, Arc::downgrade(&node));
        drop(map);
        Expression(node)
    }

    pub fn constant(c: f64) -> Expression {
        assert!(c.is_finite(), "non-finite constant {c}");
        Expression::node(Kind::Const(if c == 0.0 { 0.0 } else { c }))
    }

    pub fn var(name: &str) -> Expression {
        assert!(!name.is_empty(), "empty variable name");
        Expression::node(Kind::Var(Arc::from(name)))
    }

    pub fn kind(&self) -> &Kind {
        &self.0.kind
    }

    pub fn tag(&self) -> NodeKind {
        self.0.kind.tag()
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.0.kind {
            Kind::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_const(&self, c: f64) -> bool {
        self.as_const() == Some(c)
    }

    pub fn is_zero(&self) -> bool {
        self.is_const(0.0)
    }

    pub fn var_name(&self) -> Option<&str> {
        match &self.0.kind {
            Kind::Var(n) => Some(n),
            _ => None,
        }
    }

    /// Whether `var` may occur in this expression. Exact for the first 63
    /// distinct variable names seen by the process.
    pub fn depends_on(&self, var: &str) -> bool {
        self.0.vars & var_bit(var) != 0
    }

    /// Size of the expression written out as a tree (saturating).
    pub fn node_count(&self) -> u64 {
        self.0.tree_size
    }

    /// Number of distinct nodes reachable from this expression.
    pub fn dag_size(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if seen.insert(e.addr()) {
                for c in e.kind().children().to_vec() {
                    stack.push(c.clone());
                }
            }
        }
        seen.len()
    }

    /// Sorted list of variable names occurring in the expression.
    pub fn variables(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        let mut names = std::collections::BTreeSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.addr()) {
                continue;
            }
            if let Kind::Var(n) = e.kind() {
                names.insert(n.to_string());
            }
            for c in e.kind().children().to_vec() {
                stack.push(c.clone());
            }
        }
        names.into_iter().collect()
    }

    pub(crate) fn addr(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    /// Deterministic structural hash, stable across runs.
    pub fn structural_hash(&self) -> u64 {
        self.0.hash
    }

    pub fn ptr_eq(&self, other: &Expression) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.ptr_eq(other)
    }
}

impl Eq for Expression {}

impl Hash for Expression {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash.hash(state)
    }
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
