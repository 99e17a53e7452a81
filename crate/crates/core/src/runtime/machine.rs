// SPDX-License-Identifier: Apache-2.0

//! Single steps. Expressions evaluate left to right, call by value; the
//! redex is found by descending through evaluation positions.

use std::fmt;

use crate::effects::{FilterMode, Label};
use crate::syntax::*;

use super::trace::{Rule, TraceEvent};
use super::{Config, Frame, Message, ObjectRecord, Thread, Value};

/// Deliberate interpreter bugs, used to show the monitor is not vacuous.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mutation {
    /// Remote object creation is labelled as a read.
    NewRemoteAsRead,
    /// Queues are served newest first.
    LifoDispatch,
    /// The monitor's filter leaves loop bodies untouched.
    FilterSkipsLoops,
}

impl Mutation {
    pub const ALL: [Mutation; 3] = [
        Mutation::NewRemoteAsRead,
        Mutation::LifoDispatch,
        Mutation::FilterSkipsLoops,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mutation::NewRemoteAsRead => "new-remote-as-read",
            Mutation::LifoDispatch => "lifo-dispatch",
            Mutation::FilterSkipsLoops => "filter-skips-loops",
        }
    }

    pub fn from_name(s: &str) -> Option<Mutation> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RedexKind {
    /// The thread's expression can step.
    Eval,
    /// The thread is idle and its actor has a pending message.
    Dispatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Redex {
    pub node: NodeId,
    pub thread: usize,
    pub kind: RedexKind,
}

/// A stuck thread.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fault {
    pub node: NodeId,
    pub thread: usize,
    pub message: String,
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {} thread {}: {}", self.node, self.thread, self.message)
    }
}

impl std::error::Error for Fault {}

pub struct Machine<'p> {
    program: &'p Program,
    mutation: Option<Mutation>,
}

struct Outcome {
    expr: Expr,
    rule: Rule,
    label: Label,
}

impl Outcome {
    fn pure(expr: Expr) -> Self {
        Outcome {
            expr,
            rule: Rule::Pure,
            label: Label::Eps,
        }
    }
}

type Eval<T> = Result<T, String>;

impl<'p> Machine<'p> {
    pub fn new(program: &'p Program) -> Self {
        Machine {
            program,
            mutation: None,
        }
    }

    pub fn with_mutation(program: &'p Program, mutation: Option<Mutation>) -> Self {
        Machine { program, mutation }
    }

    pub fn program(&self) -> &'p Program {
        self.program
    }

    pub fn mutation(&self) -> Option<Mutation> {
        self.mutation
    }

    /// Filter mode the monitor should use alongside this machine.
    pub fn filter_mode(&self) -> FilterMode {
        match self.mutation {
            Some(Mutation::FilterSkipsLoops) => FilterMode::SkipLoops,
            _ => FilterMode::Full,
        }
    }

    /// All redexes, in node-then-thread order.
    pub fn enabled(&self, cfg: &Config) -> Vec<Redex> {
        let mut out = Vec::new();
        for (node, index, t) in cfg.threads() {
            if !t.is_terminated() {
                out.push(Redex {
                    node,
                    thread: index,
                    kind: RedexKind::Eval,
                });
            } else if cfg
                .object(t.actor)
                .and_then(|o| o.queue.as_ref())
                .is_some_and(|q| !q.is_empty())
            {
                out.push(Redex {
                    node,
                    thread: index,
                    kind: RedexKind::Dispatch,
                });
            }
        }
        out
    }

    /// Fires `r`. The event's step number is `index`.
    pub fn step(&self, cfg: &Config, r: &Redex, index: usize) -> Result<(Config, TraceEvent), Fault> {
        let fault = |message: String| Fault {
            node: r.node,
            thread: r.thread,
            message,
        };
        let mut next = cfg.clone();
        let thread = next
            .thread(r.node, r.thread)
            .cloned()
            .ok_or_else(|| fault("no such thread".into()))?;
        let (thread, rule, label) = match r.kind {
            RedexKind::Dispatch => {
                let t = self.dispatch(&mut next, &thread).map_err(fault)?;
                (t, Rule::Dispatch, Label::Eps)
            }
            RedexKind::Eval => {
                if thread.is_terminated() {
                    return Err(fault("thread has terminated".into()));
                }
                let mut frames = thread.frames.clone();
                let out = self
                    .eval(&mut next, r.node, &mut frames, &thread.expr)
                    .map_err(fault)?;
                let t = Thread {
                    actor: thread.actor,
                    frames,
                    expr: out.expr,
                };
                (t, out.rule, out.label)
            }
        };
        next.node_mut(r.node).expect("exists").threads[r.thread] = thread;
        Ok((
            next,
            TraceEvent {
                step: index,
                rule,
                label,
                node: r.node,
                thread: r.thread,
                fault: None,
            },
        ))
    }

    fn dispatch(&self, cfg: &mut Config, thread: &Thread) -> Eval<Thread> {
        if !thread.is_terminated() {
            return Err("actor is busy".into());
        }
        let lifo = self.mutation == Some(Mutation::LifoDispatch);
        let object = cfg
            .object_mut(thread.actor)
            .ok_or_else(|| format!("dangling actor {}", thread.actor))?;
        let queue = object.queue.as_mut().ok_or("passive object has no queue")?;
        let msg = if lifo { queue.pop_back() } else { queue.pop_front() }.ok_or("empty queue")?;
        let object = object.clone();
        let (frame, body) = self.activate(thread.actor, &object, &msg.method, msg.arg)?;
        Ok(Thread {
            actor: thread.actor,
            frames: vec![frame],
            expr: Expr::Return(Box::new(body)),
        })
    }

    /// The frame and the substituted body for running `method` on `this`.
    fn activate(&self, this: Address, object: &ObjectRecord, method: &str, arg: Option<Value>) -> Eval<(Frame, Expr)> {
        let class = self
            .program
            .class(&object.class)
            .ok_or_else(|| format!("unknown class `{}`", object.class))?;
        let m = class
            .method(method)
            .ok_or_else(|| format!("class `{}` has no method `{}`", class.name, method))?;
        let arg = match (&m.param, arg) {
            (Some(p), Some(v)) => Some((p.name.clone(), v)),
            (None, None) => None,
            _ => return Err(format!("arity mismatch calling `{}`", method)),
        };
        let body = m.body.subst_locations(&class.owner_subst(&object.owner_locations()));
        Ok((
            Frame {
                this,
                method: method.to_string(),
                arg,
            },
            body,
        ))
    }

    fn eval(&self, cfg: &mut Config, node: NodeId, frames: &mut Vec<Frame>, e: &Expr) -> Eval<Outcome> {
        let top = |frames: &[Frame]| -> Eval<Frame> { frames.last().cloned().ok_or_else(|| "no active frame".into()) };
        macro_rules! descend {
            ($sub:expr, $rebuild:expr) => {{
                let out = self.eval(cfg, node, frames, $sub)?;
                let rebuild = $rebuild;
                Ok(Outcome {
                    expr: rebuild(out.expr),
                    ..out
                })
            }};
        }
        match e {
            Expr::True | Expr::False | Expr::Null | Expr::IntLit(_) | Expr::Addr(_) => {
                Err(format!("cannot step the value {}", e))
            }
            Expr::This => Ok(Outcome::pure(Expr::Addr(top(frames)?.this))),
            Expr::Var(x) => match top(frames)?.arg {
                Some((name, v)) if &name == x => Ok(Outcome::pure(v.to_expr())),
                _ => Err(format!("unbound variable `{}`", x)),
            },
            Expr::Let(x, bound, body) => {
                if !bound.is_value() {
                    return descend!(bound, |b| Expr::Let(x.clone(), Box::new(b), body.clone()));
                }
                if x == WILDCARD {
                    Ok(Outcome::pure((**body).clone()))
                } else {
                    Ok(Outcome::pure(body.subst_var(x, bound)))
                }
            }
            Expr::If(c, t, f) => match c.as_ref() {
                Expr::True => Ok(Outcome::pure((**t).clone())),
                Expr::False => Ok(Outcome::pure((**f).clone())),
                v if v.is_value() => Err(format!("condition evaluated to {}", v)),
                _ => descend!(c, |c| Expr::If(Box::new(c), t.clone(), f.clone())),
            },
            Expr::For {
                var,
                from,
                to,
                body,
            } => {
                let first = body.subst_var(var, &Expr::IntLit(*from));
                if from < to {
                    let rest = Expr::For {
                        var: var.clone(),
                        from: from + 1,
                        to: *to,
                        body: body.clone(),
                    };
                    Ok(Outcome::pure(Expr::let_in(WILDCARD, first, rest)))
                } else if from == to {
                    Ok(Outcome::pure(first))
                } else {
                    Err(format!("empty loop range {}..{}", from, to))
                }
            }
            Expr::Return(inner) => {
                if !inner.is_value() {
                    return descend!(inner, |i| Expr::Return(Box::new(i)));
                }
                frames.pop().ok_or("return without a frame")?;
                Ok(Outcome::pure((**inner).clone()))
            }
            Expr::New(c, locs) => self.new_object(cfg, node, c, locs),
            Expr::FieldRead(recv, f) => {
                if !recv.is_value() {
                    return descend!(recv, |r| Expr::FieldRead(Box::new(r), f.clone()));
                }
                let a = address(recv, "field read")?;
                let v = *cfg
                    .object(a)
                    .ok_or_else(|| format!("dangling address {}", a))?
                    .fields
                    .get(f)
                    .ok_or_else(|| format!("object {} has no field `{}`", a, f))?;
                let (rule, label) = remote(node, a.node, Rule::FReadL, Rule::FReadR, RemAccess::Read);
                Ok(Outcome {
                    expr: v.to_expr(),
                    rule,
                    label,
                })
            }
            Expr::FieldWrite(recv, f, value) => {
                if !recv.is_value() {
                    return descend!(recv, |r| Expr::FieldWrite(Box::new(r), f.clone(), value.clone()));
                }
                if !value.is_value() {
                    return descend!(value, |v| Expr::FieldWrite(recv.clone(), f.clone(), Box::new(v)));
                }
                let a = address(recv, "field write")?;
                let v = Value::from_expr(value).expect("value");
                let object = cfg.object_mut(a).ok_or_else(|| format!("dangling address {}", a))?;
                let slot = object
                    .fields
                    .get_mut(f)
                    .ok_or_else(|| format!("object {} has no field `{}`", a, f))?;
                *slot = v;
                let (rule, label) = remote(node, a.node, Rule::FWriteL, Rule::FWriteR, RemAccess::Write);
                Ok(Outcome {
                    expr: (**value).clone(),
                    rule,
                    label,
                })
            }
            Expr::SyncCall {
                receiver,
                method,
                arg,
            }
            | Expr::AsyncSend {
                receiver,
                method,
                arg,
            } => {
                let is_async = matches!(e, Expr::AsyncSend { .. });
                let rebuild = move |receiver: Box<Expr>, arg: Option<Box<Expr>>| {
                    if is_async {
                        Expr::AsyncSend {
                            receiver,
                            method: method.clone(),
                            arg,
                        }
                    } else {
                        Expr::SyncCall {
                            receiver,
                            method: method.clone(),
                            arg,
                        }
                    }
                };
                if !receiver.is_value() {
                    return descend!(receiver, |r| rebuild(Box::new(r), arg.clone()));
                }
                if let Some(a) = arg.as_deref().filter(|a| !a.is_value()) {
                    return descend!(a, |a| rebuild(receiver.clone(), Some(Box::new(a))));
                }
                let target = address(receiver, if is_async { "message" } else { "call" })?;
                let argv = arg.as_deref().map(|a| Value::from_expr(a).expect("value"));
                if is_async {
                    self.send(cfg, node, target, method, argv)
                } else {
                    let object = cfg
                        .object(target)
                        .ok_or_else(|| format!("dangling address {}", target))?
                        .clone();
                    let (frame, body) = self.activate(target, &object, method, argv)?;
                    frames.push(frame);
                    Ok(Outcome::pure(Expr::Return(Box::new(body))))
                }
            }
        }
    }

    fn new_object(&self, cfg: &mut Config, node: NodeId, c: &str, locs: &[Location]) -> Eval<Outcome> {
        let class = self.program.class(c).ok_or_else(|| format!("unknown class `{}`", c))?;
        let owners = locs
            .iter()
            .map(|l| l.node().ok_or_else(|| format!("location `{}` is not a node", l)))
            .collect::<Eval<Vec<NodeId>>>()?;
        if owners.len() != class.owners.len() || owners.is_empty() {
            return Err(format!("wrong number of locations for `{}`", c));
        }
        let target = owners[0];
        let home = cfg
            .node_mut(target)
            .ok_or_else(|| format!("node {} does not exist", target))?;
        let addr = home.alloc(ObjectRecord::new(class, owners));
        if class.active {
            home.threads.push(Thread::idle(addr));
        }
        let (rule, mut label) = remote(node, target, Rule::NewL, Rule::NewR, RemAccess::Write);
        if rule == Rule::NewR && self.mutation == Some(Mutation::NewRemoteAsRead) {
            label = Label::Access(RemAccess::Read(Location::Node(node), Location::Node(target)));
        }
        Ok(Outcome {
            expr: Expr::Addr(addr),
            rule,
            label,
        })
    }

    fn send(&self, cfg: &mut Config, node: NodeId, target: Address, method: &str, arg: Option<Value>) -> Eval<Outcome> {
        let object = cfg
            .object_mut(target)
            .ok_or_else(|| format!("dangling address {}", target))?;
        let class = object.class.clone();
        let queue = object
            .queue
            .as_mut()
            .ok_or_else(|| format!("message `{}` sent to passive object {} of class `{}`", method, target, class))?;
        queue.push_back(Message {
            method: method.to_string(),
            arg,
        });
        let (rule, label) = remote(node, target.node, Rule::MsgL, Rule::MsgR, |s, d| {
            RemAccess::Msg(s, d, method.to_string())
        });
        Ok(Outcome {
            expr: Expr::Null,
            rule,
            label,
        })
    }
}

fn address(e: &Expr, what: &str) -> Eval<Address> {
    match e {
        Expr::Addr(a) => Ok(*a),
        Expr::Null => Err(format!("{} on null", what)),
        other => Err(format!("{} on non-object {}", what, other)),
    }
}

fn remote(
    here: NodeId,
    there: NodeId,
    local: Rule,
    far: Rule,
    access: impl FnOnce(Location, Location) -> RemAccess,
) -> (Rule, Label) {
    if here == there {
        (local, Label::Eps)
    } else {
        (far, Label::Access(access(Location::Node(here), Location::Node(there))))
    }
}
