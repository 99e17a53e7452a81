// SPDX-License-Identifier: Apache-2.0

//! The abstract machine: nodes with heaps and threads, actors with FIFO
//! queues, and labelled small steps.

mod machine;
mod sched;
mod trace;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::syntax::*;

pub use machine::{Fault, Machine, Mutation, Redex, RedexKind};
pub use sched::{explore, run, run_observed, ExploreError, ExploreOptions, ExploreResult, Outcome, RunResult, Scheduler};
pub use trace::{format_trace, parse_trace_line, Rule, TraceEvent};

/// Runtime values. Integers only arise as loop counters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    True,
    False,
    Null,
    Int(i64),
    Addr(Address),
}

impl Value {
    pub fn to_expr(self) -> Expr {
        match self {
            Value::True => Expr::True,
            Value::False => Expr::False,
            Value::Null => Expr::Null,
            Value::Int(n) => Expr::IntLit(n),
            Value::Addr(a) => Expr::Addr(a),
        }
    }

    pub fn from_expr(e: &Expr) -> Option<Value> {
        Some(match e {
            Expr::True => Value::True,
            Expr::False => Value::False,
            Expr::Null => Value::Null,
            Expr::IntLit(n) => Value::Int(*n),
            Expr::Addr(a) => Value::Addr(*a),
            _ => return None,
        })
    }

    /// Initial field value for a declared type.
    pub fn init(ty: &Type) -> Value {
        match ty {
            Type::Bool => Value::False,
            _ => Value::Null,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_expr())
    }
}

/// A pending message `m(v)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Message {
    pub method: Ident,
    pub arg: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ObjectRecord {
    pub class: Ident,
    /// Concrete owners; the first is the node holding the object.
    pub owners: Vec<NodeId>,
    pub fields: BTreeMap<Ident, Value>,
    /// `None` for passive objects. Stored oldest first.
    pub queue: Option<VecDeque<Message>>,
}

impl ObjectRecord {
    pub fn new(class: &ClassDecl, owners: Vec<NodeId>) -> Self {
        ObjectRecord {
            class: class.name.clone(),
            owners,
            fields: class
                .fields
                .iter()
                .map(|f| (f.name.clone(), Value::init(&f.ty)))
                .collect(),
            queue: class.active.then(VecDeque::new),
        }
    }

    pub fn owner_locations(&self) -> Vec<Location> {
        self.owners.iter().map(|k| Location::Node(*k)).collect()
    }

    pub fn ty(&self) -> Type {
        Type::Owned(self.class.clone(), self.owner_locations())
    }
}

/// One activation: the receiver, the method being run and its argument.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    pub this: Address,
    pub method: Ident,
    pub arg: Option<(Ident, Value)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Thread {
    /// The actor this thread belongs to.
    pub actor: Address,
    /// Outermost first.
    pub frames: Vec<Frame>,
    pub expr: Expr,
}

impl Thread {
    pub fn idle(actor: Address) -> Self {
        Thread {
            actor,
            frames: Vec::new(),
            expr: Expr::Null,
        }
    }

    pub fn is_terminated(&self) -> bool {
        self.frames.is_empty() && self.expr.is_value()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Node {
    pub id: NodeId,
    pub heap: BTreeMap<Address, ObjectRecord>,
    /// Next free address index.
    pub next_index: u32,
    pub threads: Vec<Thread>,
}

impl Node {
    pub fn new(id: NodeId) -> Self {
        Node {
            id,
            heap: BTreeMap::new(),
            next_index: 0,
            threads: Vec::new(),
        }
    }

    pub fn alloc(&mut self, object: ObjectRecord) -> Address {
        let addr = Address::new(self.id, self.next_index);
        self.next_index += 1;
        debug_assert!(!self.heap.contains_key(&addr));
        self.heap.insert(addr, object);
        addr
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("malformed mapping entry `{0}` (expected NAME=NODE)")]
    Malformed(String),
    #[error("location `{0}` is mapped twice")]
    Duplicate(String),
    #[error("abstract location `{0}` is not mapped")]
    Missing(String),
    #[error("`{0}` is not an abstract location of Main")]
    Unknown(String),
}

/// Abstract locations to nodes. Need not be injective.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LocationMap(BTreeMap<Ident, NodeId>);

impl LocationMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, loc: impl Into<Ident>, node: NodeId) {
        self.0.insert(loc.into(), node);
    }

    pub fn get(&self, loc: &str) -> Option<NodeId> {
        self.0.get(loc).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Ident, NodeId)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    /// Every node in the image, ascending.
    pub fn nodes(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self.0.values().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// As a substitution from abstract locations to nodes.
    pub fn subst(&self) -> LocationSubst {
        self.0
            .iter()
            .map(|(l, k)| (Location::Abstract(l.clone()), Location::Node(*k)))
            .collect()
    }

    /// Checks that exactly the owners of `Main` are mapped.
    pub fn validate(&self, program: &Program) -> Result<(), MapError> {
        let owners: Vec<&Ident> = program
            .main_class()
            .map(|m| m.owners.iter().collect())
            .unwrap_or_default();
        for l in &owners {
            if !self.0.contains_key(*l) {
                return Err(MapError::Missing((*l).clone()));
            }
        }
        for l in self.0.keys() {
            if !owners.contains(&l) {
                return Err(MapError::Unknown(l.clone()));
            }
        }
        Ok(())
    }
}

impl FromStr for LocationMap {
    type Err = MapError;

    /// `L1=0,L2=1`; commas, whitespace and newlines all separate entries.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut map = LocationMap::new();
        for entry in s.split(|c: char| c == ',' || c.is_whitespace()).filter(|e| !e.is_empty()) {
            let (l, k) = entry
                .split_once('=')
                .ok_or_else(|| MapError::Malformed(entry.to_string()))?;
            let (l, k) = (l.trim(), k.trim());
            let k: NodeId = k.parse().map_err(|_| MapError::Malformed(entry.to_string()))?;
            if l.is_empty() || is_keyword(l) {
                return Err(MapError::Malformed(entry.to_string()));
            }
            if map.0.insert(l.to_string(), k).is_some() {
                return Err(MapError::Duplicate(l.to_string()));
            }
        }
        Ok(map)
    }
}

impl fmt::Display for LocationMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(l, k)| format!("{}={}", l, k)).collect();
        f.write_str(&parts.join(","))
    }
}

/// The whole machine state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Config {
    /// Ascending by id.
    pub nodes: Vec<Node>,
    pub map: LocationMap,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum InitError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("program has no `{}.{}` method", MAIN_CLASS, MAIN_METHOD)]
    NoMain,
}

impl Config {
    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn object(&self, a: Address) -> Option<&ObjectRecord> {
        self.node(a.node)?.heap.get(&a)
    }

    pub fn object_mut(&mut self, a: Address) -> Option<&mut ObjectRecord> {
        self.node_mut(a.node)?.heap.get_mut(&a)
    }

    pub fn thread(&self, node: NodeId, index: usize) -> Option<&Thread> {
        self.node(node)?.threads.get(index)
    }

    /// `(node, index, thread)` in node-then-thread order.
    pub fn threads(&self) -> impl Iterator<Item = (NodeId, usize, &Thread)> {
        self.nodes
            .iter()
            .flat_map(|n| n.threads.iter().enumerate().map(move |(i, t)| (n.id, i, t)))
    }

    pub fn is_quiescent_on(&self, machine: &Machine) -> bool {
        machine.enabled(self).is_empty()
    }

    /// Every live object, in address order.
    pub fn objects(&self) -> impl Iterator<Item = (Address, &ObjectRecord)> {
        self.nodes.iter().flat_map(|n| n.heap.iter().map(|(a, o)| (*a, o)))
    }
}

/// The initial configuration: one `Main` instance at the node of its first
/// location, running `main`.
pub fn init_config(program: &Program, map: &LocationMap) -> Result<Config, InitError> {
    map.validate(program)?;
    let main = program.main_class().ok_or(InitError::NoMain)?;
    let method = main.method(MAIN_METHOD).ok_or(InitError::NoMain)?;
    let owners: Vec<NodeId> = main
        .owners
        .iter()
        .map(|l| map.get(l).expect("validated"))
        .collect();
    let mut nodes: Vec<Node> = map.nodes().into_iter().map(Node::new).collect();
    let home = nodes
        .iter_mut()
        .find(|n| n.id == owners[0])
        .expect("image of the map");
    let alpha = home.alloc(ObjectRecord::new(main, owners));
    home.threads.push(Thread {
        actor: alpha,
        frames: vec![Frame {
            this: alpha,
            method: MAIN_METHOD.to_string(),
            arg: None,
        }],
        expr: Expr::Return(Box::new(method.body.subst_locations(&map.subst()))),
    });
    Ok(Config {
        nodes,
        map: map.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_map() {
        let m: LocationMap = "L1=0,L2=1, L3=1".parse().unwrap();
        assert_eq!(m.get("L3"), Some(1));
        assert_eq!(m.nodes(), vec![0, 1]);
        assert_eq!(m.to_string(), "L1=0,L2=1,L3=1");
        assert!("L1".parse::<LocationMap>().is_err());
        assert!("L1=x".parse::<LocationMap>().is_err());
        assert!(matches!("L1=0,L1=1".parse::<LocationMap>(), Err(MapError::Duplicate(_))));
        let lines: LocationMap = "L1=0\nL2=2\n".parse().unwrap();
        assert_eq!(lines.nodes(), vec![0, 2]);
    }

    #[test]
    fn init_places_main() {
        let p = parse_program("class Main<L1, L2> def main(): nil as eps { null }").unwrap();
        let cfg = init_config(&p, &"L1=3,L2=1".parse().unwrap()).unwrap();
        assert_eq!(cfg.nodes.iter().map(|n| n.id).collect::<Vec<_>>(), vec![1, 3]);
        let main = cfg.object(Address::new(3, 0)).unwrap();
        assert_eq!(main.owners, vec![3, 1]);
        assert!(main.queue.is_none());
        assert_eq!(cfg.node(3).unwrap().threads.len(), 1);
        assert!(matches!(
            init_config(&p, &"L1=0".parse().unwrap()),
            Err(InitError::Map(MapError::Missing(_)))
        ));
        assert!(matches!(
            init_config(&p, &"L1=0,L2=0,L9=1".parse().unwrap()),
            Err(InitError::Map(MapError::Unknown(_)))
        ));
    }
}
