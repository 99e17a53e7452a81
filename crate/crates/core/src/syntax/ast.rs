// SPDX-License-Identifier: Apache-2.0

//! Abstract syntax: classes with ownership parameters, expressions and
//! behaviour terms.
//!
//! A few constructs never come out of the parser and only appear while a
//! program runs: the `int` type, integer literals, raw addresses and
//! `return e`.

use std::collections::BTreeMap;
use std::fmt;

use crate::diag::Span;

pub type Ident = String;

/// Identifier of a node of the simulated machine.
pub type NodeId = u32;

/// Name of the distinguished entry class.
pub const MAIN_CLASS: &str = "Main";
/// Name of the entry method of [`MAIN_CLASS`].
pub const MAIN_METHOD: &str = "main";
/// Binder name that introduces no variable (`let _ = e in e'`).
pub const WILDCARD: &str = "_";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Location {
    /// Ownership parameter of an ordinary class.
    Owner(Ident),
    /// Abstract location, i.e. an ownership parameter of `Main`.
    Abstract(Ident),
    /// A concrete node; only present after runtime substitution.
    Node(NodeId),
}

impl Location {
    pub fn node(&self) -> Option<NodeId> {
        match self {
            Location::Node(k) => Some(*k),
            _ => None,
        }
    }

    pub fn is_symbolic(&self) -> bool {
        !matches!(self, Location::Node(_))
    }
}

/// A pointwise location substitution.
pub type LocationSubst = BTreeMap<Location, Location>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Bool,
    Nil,
    /// Loop counters only.
    Int,
    Owned(Ident, Vec<Location>),
}

impl Type {
    pub fn owned(class: impl Into<Ident>, locations: Vec<Location>) -> Self {
        Type::Owned(class.into(), locations)
    }

    pub fn as_owned(&self) -> Option<(&str, &[Location])> {
        match self {
            Type::Owned(c, ls) => Some((c, ls)),
            _ => None,
        }
    }

    pub fn subst_locations(&self, map: &LocationSubst) -> Type {
        match self {
            Type::Owned(c, ls) => Type::Owned(
                c.clone(),
                ls.iter()
                    .map(|l| map.get(l).cloned().unwrap_or_else(|| l.clone()))
                    .collect(),
            ),
            other => other.clone(),
        }
    }
}

/// `κ.n`: the n-th object allocated in node κ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address {
    pub node: NodeId,
    pub index: u32,
}

impl Address {
    pub fn new(node: NodeId, index: u32) -> Self {
        Address { node, index }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}.{}", self.node, self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Var(Ident),
    This,
    True,
    False,
    Null,
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    SyncCall {
        receiver: Box<Expr>,
        method: Ident,
        arg: Option<Box<Expr>>,
    },
    AsyncSend {
        receiver: Box<Expr>,
        method: Ident,
        arg: Option<Box<Expr>>,
    },
    FieldRead(Box<Expr>, Ident),
    FieldWrite(Box<Expr>, Ident, Box<Expr>),
    New(Ident, Vec<Location>),
    For {
        var: Ident,
        from: i64,
        to: i64,
        body: Box<Expr>,
    },
    Let(Ident, Box<Expr>, Box<Expr>),
    Return(Box<Expr>),
    Addr(Address),
    IntLit(i64),
}

impl Expr {
    pub fn is_value(&self) -> bool {
        matches!(
            self,
            Expr::True | Expr::False | Expr::Null | Expr::Addr(_) | Expr::IntLit(_)
        )
    }

    pub fn let_in(x: impl Into<Ident>, bound: Expr, body: Expr) -> Expr {
        Expr::Let(x.into(), Box::new(bound), Box::new(body))
    }

    /// Substitutes the closed value `value` for free occurrences of `var`.
    pub fn subst_var(&self, var: &str, value: &Expr) -> Expr {
        let go = |e: &Expr| Box::new(e.subst_var(var, value));
        match self {
            Expr::Var(x) if x == var => value.clone(),
            Expr::Var(_)
            | Expr::This
            | Expr::True
            | Expr::False
            | Expr::Null
            | Expr::New(..)
            | Expr::Addr(_)
            | Expr::IntLit(_) => self.clone(),
            Expr::If(c, t, f) => Expr::If(go(c), go(t), go(f)),
            Expr::SyncCall {
                receiver,
                method,
                arg,
            } => Expr::SyncCall {
                receiver: go(receiver),
                method: method.clone(),
                arg: arg.as_deref().map(go),
            },
            Expr::AsyncSend {
                receiver,
                method,
                arg,
            } => Expr::AsyncSend {
                receiver: go(receiver),
                method: method.clone(),
                arg: arg.as_deref().map(go),
            },
            Expr::FieldRead(r, f) => Expr::FieldRead(go(r), f.clone()),
            Expr::FieldWrite(r, f, v) => Expr::FieldWrite(go(r), f.clone(), go(v)),
            Expr::For {
                var: i,
                from,
                to,
                body,
            } => Expr::For {
                var: i.clone(),
                from: *from,
                to: *to,
                body: if i == var { body.clone() } else { go(body) },
            },
            Expr::Let(x, bound, body) => Expr::Let(
                x.clone(),
                go(bound),
                if x == var { body.clone() } else { go(body) },
            ),
            Expr::Return(e) => Expr::Return(go(e)),
        }
    }

    /// Replaces locations inside `new` expressions.
    pub fn subst_locations(&self, map: &LocationSubst) -> Expr {
        let go = |e: &Expr| Box::new(e.subst_locations(map));
        match self {
            Expr::New(c, ls) => Expr::New(
                c.clone(),
                ls.iter()
                    .map(|l| map.get(l).cloned().unwrap_or_else(|| l.clone()))
                    .collect(),
            ),
            Expr::Var(_)
            | Expr::This
            | Expr::True
            | Expr::False
            | Expr::Null
            | Expr::Addr(_)
            | Expr::IntLit(_) => self.clone(),
            Expr::If(c, t, f) => Expr::If(go(c), go(t), go(f)),
            Expr::SyncCall {
                receiver,
                method,
                arg,
            } => Expr::SyncCall {
                receiver: go(receiver),
                method: method.clone(),
                arg: arg.as_deref().map(go),
            },
            Expr::AsyncSend {
                receiver,
                method,
                arg,
            } => Expr::AsyncSend {
                receiver: go(receiver),
                method: method.clone(),
                arg: arg.as_deref().map(go),
            },
            Expr::FieldRead(r, f) => Expr::FieldRead(go(r), f.clone()),
            Expr::FieldWrite(r, f, v) => Expr::FieldWrite(go(r), f.clone(), go(v)),
            Expr::For {
                var,
                from,
                to,
                body,
            } => Expr::For {
                var: var.clone(),
                from: *from,
                to: *to,
                body: go(body),
            },
            Expr::Let(x, bound, body) => Expr::Let(x.clone(), go(bound), go(body)),
            Expr::Return(e) => Expr::Return(go(e)),
        }
    }

    /// True if the expression contains a runtime-only construct.
    pub fn has_runtime_constructs(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e, Expr::Return(_) | Expr::Addr(_) | Expr::IntLit(_)) {
                found = true;
            }
        });
        found
    }

    /// Pre-order traversal.
    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::If(c, t, e) => {
                c.visit(f);
                t.visit(f);
                e.visit(f);
            }
            Expr::SyncCall { receiver, arg, .. } | Expr::AsyncSend { receiver, arg, .. } => {
                receiver.visit(f);
                if let Some(a) = arg {
                    a.visit(f);
                }
            }
            Expr::FieldRead(r, _) => r.visit(f),
            Expr::FieldWrite(r, _, v) => {
                r.visit(f);
                v.visit(f);
            }
            Expr::For { body, .. } => body.visit(f),
            Expr::Let(_, b, e) => {
                b.visit(f);
                e.visit(f);
            }
            Expr::Return(e) => e.visit(f),
            _ => {}
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccessKind {
    Read,
    Write,
    Msg,
}

impl AccessKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AccessKind::Read => "read",
            AccessKind::Write => "write",
            AccessKind::Msg => "msg",
        }
    }
}

/// A remote access π: a read, a write or a message send between two locations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RemAccess {
    Read(Location, Location),
    Write(Location, Location),
    Msg(Location, Location, Ident),
}

impl RemAccess {
    pub fn kind(&self) -> AccessKind {
        match self {
            RemAccess::Read(..) => AccessKind::Read,
            RemAccess::Write(..) => AccessKind::Write,
            RemAccess::Msg(..) => AccessKind::Msg,
        }
    }

    pub fn src(&self) -> &Location {
        match self {
            RemAccess::Read(s, _) | RemAccess::Write(s, _) | RemAccess::Msg(s, _, _) => s,
        }
    }

    pub fn dst(&self) -> &Location {
        match self {
            RemAccess::Read(_, d) | RemAccess::Write(_, d) | RemAccess::Msg(_, d, _) => d,
        }
    }

    pub fn method(&self) -> Option<&str> {
        match self {
            RemAccess::Msg(_, _, m) => Some(m),
            _ => None,
        }
    }

    pub fn is_self_access(&self) -> bool {
        self.src() == self.dst()
    }

    pub fn map_locations(&self, mut f: impl FnMut(&Location) -> Location) -> RemAccess {
        match self {
            RemAccess::Read(s, d) => RemAccess::Read(f(s), f(d)),
            RemAccess::Write(s, d) => RemAccess::Write(f(s), f(d)),
            RemAccess::Msg(s, d, m) => RemAccess::Msg(f(s), f(d), m.clone()),
        }
    }
}

/// Behaviour terms: `ε | bop.b | b ∥ b`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Behaviour {
    Eps,
    Seq(Box<BOp>, Box<Behaviour>),
    Par(Box<Behaviour>, Box<Behaviour>),
}

/// Behaviour prefixes: `π | b ⊕ b | n·{b}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BOp {
    Access(RemAccess),
    Choice(Behaviour, Behaviour),
    Loop(u32, Behaviour),
}

impl Behaviour {
    pub fn seq(op: BOp, rest: Behaviour) -> Behaviour {
        Behaviour::Seq(Box::new(op), Box::new(rest))
    }

    pub fn par(left: Behaviour, right: Behaviour) -> Behaviour {
        Behaviour::Par(Box::new(left), Box::new(right))
    }

    /// `π.ε`
    pub fn access(pi: RemAccess) -> Behaviour {
        Behaviour::seq(BOp::Access(pi), Behaviour::Eps)
    }

    /// `(l ⊕ r).ε`
    pub fn choice(left: Behaviour, right: Behaviour) -> Behaviour {
        Behaviour::seq(BOp::Choice(left, right), Behaviour::Eps)
    }

    /// `n·{b}.ε`
    pub fn repeat(n: u32, body: Behaviour) -> Behaviour {
        Behaviour::seq(BOp::Loop(n, body), Behaviour::Eps)
    }

    /// Builds `π1.π2.…πn.ε`.
    pub fn accesses(pis: impl IntoIterator<Item = RemAccess>) -> Behaviour {
        let pis: Vec<_> = pis.into_iter().collect();
        pis.into_iter()
            .rev()
            .fold(Behaviour::Eps, |acc, pi| Behaviour::seq(BOp::Access(pi), acc))
    }

    pub fn is_eps(&self) -> bool {
        matches!(self, Behaviour::Eps)
    }

    /// Visits every remote access in the term.
    pub fn for_each_access(&self, f: &mut impl FnMut(&RemAccess)) {
        match self {
            Behaviour::Eps => {}
            Behaviour::Seq(op, rest) => {
                match op.as_ref() {
                    BOp::Access(pi) => f(pi),
                    BOp::Choice(l, r) => {
                        l.for_each_access(f);
                        r.for_each_access(f);
                    }
                    BOp::Loop(_, b) => b.for_each_access(f),
                }
                rest.for_each_access(f);
            }
            Behaviour::Par(l, r) => {
                l.for_each_access(f);
                r.for_each_access(f);
            }
        }
    }

    pub fn locations(&self) -> Vec<Location> {
        let mut out = Vec::new();
        self.for_each_access(&mut |pi| {
            for l in [pi.src(), pi.dst()] {
                if !out.contains(l) {
                    out.push(l.clone());
                }
            }
        });
        out
    }

    pub fn has_choice_or_par(&self) -> bool {
        match self {
            Behaviour::Eps => false,
            Behaviour::Par(..) => true,
            Behaviour::Seq(op, rest) => {
                let here = match op.as_ref() {
                    BOp::Access(_) => false,
                    BOp::Choice(..) => true,
                    BOp::Loop(_, b) => b.has_choice_or_par(),
                };
                here || rest.has_choice_or_par()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FieldDecl {
    pub name: Ident,
    pub ty: Type,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Param {
    pub name: Ident,
    pub ty: Type,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MethodDecl {
    pub name: Ident,
    pub param: Option<Param>,
    pub return_type: Type,
    pub behaviour: Behaviour,
    pub body: Expr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ClassDecl {
    pub active: bool,
    pub name: Ident,
    pub owners: Vec<Ident>,
    pub fields: Vec<FieldDecl>,
    pub methods: Vec<MethodDecl>,
    pub span: Span,
}

impl ClassDecl {
    pub fn is_main(&self) -> bool {
        self.name == MAIN_CLASS
    }

    /// Owner identifiers as locations: abstract for `Main`, parameters otherwise.
    pub fn owner_locations(&self) -> Vec<Location> {
        self.owners
            .iter()
            .map(|p| owner_location(&self.name, p))
            .collect()
    }

    /// `C⟨p1,…,pn⟩`, the type of `this` inside the class.
    pub fn self_type(&self) -> Type {
        Type::Owned(self.name.clone(), self.owner_locations())
    }

    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn method(&self, name: &str) -> Option<&MethodDecl> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// Substitution of the class owners by `args`, position by position.
    pub fn owner_subst(&self, args: &[Location]) -> LocationSubst {
        self.owner_locations()
            .into_iter()
            .zip(args.iter().cloned())
            .collect()
    }
}

/// How an owner identifier of class `class` is represented as a location.
pub fn owner_location(class: &str, name: &str) -> Location {
    if class == MAIN_CLASS {
        Location::Abstract(name.to_string())
    } else {
        Location::Owner(name.to_string())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Program {
    pub classes: Vec<ClassDecl>,
}

impl Program {
    pub fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn main_class(&self) -> Option<&ClassDecl> {
        self.class(MAIN_CLASS)
    }
}
