// SPDX-License-Identifier: Apache-2.0

//! Type-and-effect checking: every expression gets a type and a behaviour
//! describing the reads, writes and messages it performs, and every method's
//! declared behaviour must equal the filtered inferred one.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::diag::{Diagnostic, Diagnostics, Span};
use crate::effects::{concat, concat_all, equiv, filter};
use crate::syntax::*;

/// Γ: variables (including `this`) to types.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypingFrame {
    vars: BTreeMap<Ident, Type>,
}

impl TypingFrame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_this(ty: Type) -> Self {
        let mut f = Self::new();
        f.bind("this", ty);
        f
    }

    pub fn bind(&mut self, x: impl Into<Ident>, ty: Type) -> Option<Type> {
        self.vars.insert(x.into(), ty)
    }

    pub fn unbind(&mut self, x: &str) -> Option<Type> {
        self.vars.remove(x)
    }

    pub fn get(&self, x: &str) -> Option<&Type> {
        self.vars.get(x)
    }
}

/// Γ̄: a stack of frames. Variables resolve in the last frame; `return e`
/// types `e` with the last frame popped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypingContext {
    frames: Vec<TypingFrame>,
    /// `(class, method)` pairs invoked while typing, for the call graph.
    calls: BTreeSet<(Ident, Ident)>,
}

impl TypingContext {
    pub fn new(frames: Vec<TypingFrame>) -> Self {
        assert!(!frames.is_empty(), "a typing context has at least one frame");
        TypingContext {
            frames,
            calls: BTreeSet::new(),
        }
    }

    pub fn single(frame: TypingFrame) -> Self {
        Self::new(vec![frame])
    }

    pub fn frames(&self) -> &[TypingFrame] {
        &self.frames
    }

    fn top(&self) -> &TypingFrame {
        self.frames.last().expect("nonempty")
    }

    fn top_mut(&mut self) -> &mut TypingFrame {
        self.frames.last_mut().expect("nonempty")
    }

    pub fn calls(&self) -> &BTreeSet<(Ident, Ident)> {
        &self.calls
    }
}

/// Types of raw addresses, resolved through a heap.
pub trait AddressTypes {
    fn type_of_address(&self, addr: Address) -> Option<Type>;
}

/// Static checking works on source programs; runtime typing (used by the
/// monitor) accepts addresses, `return`, integer literals and concrete nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Static,
    Runtime,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LookupError {
    #[error("unknown class `{0}`")]
    UnknownClass(Ident),
    #[error("class `{0}` has no field `{1}`")]
    UnknownField(Ident, Ident),
    #[error("class `{0}` has no method `{1}`")]
    UnknownMethod(Ident, Ident),
    #[error("class `{class}` takes {expected} location(s), got {found}")]
    Arity {
        class: Ident,
        expected: usize,
        found: usize,
    },
}

/// A method signature with the class owners already substituted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodSig {
    pub return_type: Type,
    pub param: Option<Param>,
    pub body: Expr,
    pub behaviour: Behaviour,
}

/// A violated typing premise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeError {
    pub rule: &'static str,
    pub message: String,
}

impl TypeError {
    fn new(rule: &'static str, message: impl Into<String>) -> Self {
        TypeError {
            rule,
            message: message.into(),
        }
    }
}

pub type TypeResult<T> = Result<T, Vec<TypeError>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Typed {
    pub ty: Type,
    pub behaviour: Behaviour,
}

/// `expected` admits a value of type `actual`: equal types, or `nil`, which
/// discards its value.
pub fn accepts(expected: &Type, actual: &Type) -> bool {
    expected == actual || *expected == Type::Nil
}

pub struct Typer<'a> {
    program: &'a Program,
    mode: Mode,
    addresses: Option<&'a dyn AddressTypes>,
}

impl<'a> Typer<'a> {
    pub fn new(program: &'a Program) -> Self {
        Typer {
            program,
            mode: Mode::Static,
            addresses: None,
        }
    }

    pub fn runtime(program: &'a Program, addresses: &'a dyn AddressTypes) -> Self {
        Typer {
            program,
            mode: Mode::Runtime,
            addresses: Some(addresses),
        }
    }

    pub fn program(&self) -> &'a Program {
        self.program
    }

    fn class(&self, c: &str) -> Result<&'a ClassDecl, LookupError> {
        self.program
            .class(c)
            .ok_or_else(|| LookupError::UnknownClass(c.to_string()))
    }

    /// `owners(C)`
    pub fn owners(&self, c: &str) -> Result<Vec<Location>, LookupError> {
        Ok(self.class(c)?.owner_locations())
    }

    fn subst_for(&self, c: &str, args: &[Location]) -> Result<(&'a ClassDecl, LocationSubst), LookupError> {
        let class = self.class(c)?;
        if class.owners.len() != args.len() {
            return Err(LookupError::Arity {
                class: c.to_string(),
                expected: class.owners.len(),
                found: args.len(),
            });
        }
        Ok((class, class.owner_subst(args)))
    }

    /// `fields(C, f)[l̄]`
    pub fn field_type(&self, c: &str, f: &str, args: &[Location]) -> Result<Type, LookupError> {
        let (class, map) = self.subst_for(c, args)?;
        let fd = class
            .field(f)
            .ok_or_else(|| LookupError::UnknownField(c.to_string(), f.to_string()))?;
        Ok(fd.ty.subst_locations(&map))
    }

    /// `methods(C, m)[l̄]`: substitution reaches the body and the declared behaviour.
    pub fn method_sig(&self, c: &str, m: &str, args: &[Location]) -> Result<MethodSig, LookupError> {
        let (class, map) = self.subst_for(c, args)?;
        let md = class
            .method(m)
            .ok_or_else(|| LookupError::UnknownMethod(c.to_string(), m.to_string()))?;
        Ok(MethodSig {
            return_type: md.return_type.subst_locations(&map),
            param: md.param.as_ref().map(|p| Param {
                name: p.name.clone(),
                ty: p.ty.subst_locations(&map),
            }),
            body: md.body.subst_locations(&map),
            behaviour: crate::effects::subst_locations(&md.behaviour, &map)
                .unwrap_or_else(|_| md.behaviour.clone()),
        })
    }

    /// At runtime `null` also inhabits object types: uninitialised fields hold it.
    fn accepts(&self, expected: &Type, actual: &Type) -> bool {
        accepts(expected, actual) || (self.mode == Mode::Runtime && *actual == Type::Nil)
    }

    /// Type and behaviour of `e` under `ctx`.
    pub fn type_expr(&self, ctx: &mut TypingContext, e: &Expr) -> TypeResult<Typed> {
        let eps = |ty: Type| {
            Ok(Typed {
                ty,
                behaviour: Behaviour::Eps,
            })
        };
        match e {
            Expr::True | Expr::False => eps(Type::Bool),
            Expr::Null => eps(Type::Nil),
            Expr::This => match ctx.top().get("this") {
                Some(t) => eps(t.clone()),
                None => Err(vec![TypeError::new("T-Var", "`this` is not bound")]),
            },
            Expr::Var(x) => match ctx.top().get(x) {
                Some(t) if x != WILDCARD => eps(t.clone()),
                _ => Err(vec![TypeError::new("T-Var", format!("unbound variable `{}`", x))]),
            },
            Expr::Addr(a) => match (self.mode, self.addresses) {
                (Mode::Runtime, Some(heap)) => match heap.type_of_address(*a) {
                    Some(t) => eps(t),
                    None => Err(vec![TypeError::new("T-Addr", format!("dangling address {}", a))]),
                },
                _ => Err(vec![TypeError::new(
                    "T-Addr",
                    "addresses cannot be typed statically",
                )]),
            },
            Expr::IntLit(_) => match self.mode {
                Mode::Runtime => eps(Type::Int),
                Mode::Static => Err(vec![TypeError::new("T-Var", "integer literal in source")]),
            },
            Expr::Let(x, bound, body) => self.type_let(ctx, x, bound, body),
            Expr::If(c, t, f) => self.type_cond(ctx, c, t, f),
            Expr::For {
                var,
                from,
                to,
                body,
            } => self.type_for(ctx, var, *from, *to, body),
            Expr::Return(inner) => {
                if ctx.frames.len() < 2 {
                    return Err(vec![TypeError::new(
                        "T-Ret",
                        "`return` without an enclosing frame",
                    )]);
                }
                let saved = ctx.frames.pop().expect("checked");
                let r = self.type_expr(ctx, inner);
                ctx.frames.push(saved);
                r
            }
            Expr::New(c, locs) => self.type_new(ctx, c, locs),
            Expr::FieldRead(recv, f) => {
                let r = self.type_expr(ctx, recv)?;
                let (class, locs) = owned_receiver("T-FRead", &r.ty)?;
                let ty = self
                    .field_type(class, f, locs)
                    .map_err(|err| vec![TypeError::new("T-FRead", err.to_string())])?;
                let here = loc_of(ctx).map_err(|err| vec![err.in_rule("T-FRead")])?;
                let pi = RemAccess::Read(here, locs[0].clone());
                Ok(Typed {
                    ty,
                    behaviour: concat(&r.behaviour, &Behaviour::access(pi)),
                })
            }
            Expr::FieldWrite(recv, f, value) => {
                let (r, v) = both(self.type_expr(ctx, recv), self.type_expr(ctx, value))?;
                let (class, locs) = owned_receiver("T-FWrite", &r.ty)?;
                let ty = self
                    .field_type(class, f, locs)
                    .map_err(|err| vec![TypeError::new("T-FWrite", err.to_string())])?;
                if !self.accepts(&ty, &v.ty) {
                    return Err(vec![TypeError::new(
                        "T-FWrite",
                        format!("field `{}` has type {} but the value has type {}", f, ty, v.ty),
                    )]);
                }
                let here = loc_of(ctx).map_err(|err| vec![err.in_rule("T-FWrite")])?;
                let pi = RemAccess::Write(here, locs[0].clone());
                Ok(Typed {
                    ty,
                    behaviour: concat_all([&r.behaviour, &v.behaviour, &Behaviour::access(pi)]),
                })
            }
            Expr::SyncCall {
                receiver,
                method,
                arg,
            } => self.type_call(ctx, receiver, method, arg.as_deref(), false),
            Expr::AsyncSend {
                receiver,
                method,
                arg,
            } => self.type_call(ctx, receiver, method, arg.as_deref(), true),
        }
    }

    fn type_let(&self, ctx: &mut TypingContext, x: &str, bound: &Expr, body: &Expr) -> TypeResult<Typed> {
        let b1 = self.type_expr(ctx, bound)?;
        if x == WILDCARD {
            let b2 = self.type_expr(ctx, body)?;
            return Ok(Typed {
                ty: b2.ty,
                behaviour: concat(&b1.behaviour, &b2.behaviour),
            });
        }
        if ctx.top().get(x).is_some() {
            return Err(vec![TypeError::new(
                "T-Let",
                format!("`{}` is already bound in this scope", x),
            )]);
        }
        ctx.top_mut().bind(x, b1.ty);
        let b2 = self.type_expr(ctx, body);
        ctx.top_mut().unbind(x);
        let b2 = b2?;
        Ok(Typed {
            ty: b2.ty,
            behaviour: concat(&b1.behaviour, &b2.behaviour),
        })
    }

    fn type_cond(&self, ctx: &mut TypingContext, c: &Expr, t: &Expr, f: &Expr) -> TypeResult<Typed> {
        let cond = self.type_expr(ctx, c);
        let branches = both(self.type_expr(ctx, t), self.type_expr(ctx, f));
        let (cond, (then_, else_)) = both(cond, branches)?;
        let mut errs = Vec::new();
        if cond.ty != Type::Bool {
            errs.push(TypeError::new(
                "T-Cond",
                format!("condition has type {}, expected bool", cond.ty),
            ));
        }
        let ty = if then_.ty == else_.ty {
            then_.ty.clone()
        } else if self.mode == Mode::Runtime || then_.ty == Type::Nil || else_.ty == Type::Nil {
            Type::Nil
        } else {
            errs.push(TypeError::new(
                "T-Cond",
                format!("branches have different types {} and {}", then_.ty, else_.ty),
            ));
            Type::Nil
        };
        if !errs.is_empty() {
            return Err(errs);
        }
        Ok(Typed {
            ty,
            behaviour: concat(
                &cond.behaviour,
                &Behaviour::choice(then_.behaviour, else_.behaviour),
            ),
        })
    }

    fn type_for(&self, ctx: &mut TypingContext, var: &str, from: i64, to: i64, body: &Expr) -> TypeResult<Typed> {
        // Unrolling at runtime reaches `for i in k..k`, a single iteration.
        let ok = match self.mode {
            Mode::Static => to > from,
            Mode::Runtime => to >= from,
        };
        if !ok {
            return Err(vec![TypeError::new(
                "T-For",
                format!("loop bounds {}..{} must be increasing", from, to),
            )]);
        }
        let saved = ctx.top_mut().bind(var, Type::Int);
        let r = self.type_expr(ctx, body);
        match saved {
            Some(t) => {
                ctx.top_mut().bind(var, t);
            }
            None => {
                ctx.top_mut().unbind(var);
            }
        }
        let r = r?;
        let n = u32::try_from(to - from + 1).map_err(|_| {
            vec![TypeError::new("T-For", "too many loop iterations")]
        })?;
        Ok(Typed {
            ty: r.ty,
            behaviour: Behaviour::repeat(n, r.behaviour),
        })
    }

    fn type_new(&self, ctx: &mut TypingContext, c: &str, locs: &[Location]) -> TypeResult<Typed> {
        let mut errs = Vec::new();
        let class = self
            .class(c)
            .map_err(|err| vec![TypeError::new("T-NewO", err.to_string())])?;
        if class.owners.len() != locs.len() {
            errs.push(TypeError::new(
                "T-NewO",
                format!(
                    "class `{}` takes {} location(s), got {}",
                    c,
                    class.owners.len(),
                    locs.len()
                ),
            ));
        }
        let this_ty = ctx.top().get("this").cloned();
        if class.active {
            let in_main = matches!(&this_ty, Some(Type::Owned(k, _)) if k == MAIN_CLASS);
            if !in_main {
                errs.push(TypeError::new(
                    "T-NewO",
                    format!(
                        "active class `{}` can only be instantiated by the main class (isMain premise)",
                        c
                    ),
                ));
            }
        }
        match self.mode {
            Mode::Static => {
                for (i, l) in locs.iter().enumerate() {
                    if locs[..i].contains(l) {
                        errs.push(TypeError::new(
                            "T-NewO",
                            format!("location `{}` is repeated; locations must be pairwise distinct", l),
                        ));
                    }
                }
                if let Some(Type::Owned(_, scope)) = &this_ty {
                    for l in locs {
                        if !scope.contains(l) {
                            errs.push(TypeError::new(
                                "T-NewO",
                                format!("location `{}` is not in scope", l),
                            ));
                        }
                    }
                }
            }
            Mode::Runtime => {
                if let Some(l) = locs.iter().find(|l| l.is_symbolic()) {
                    errs.push(TypeError::new(
                        "T-NewO",
                        format!("location `{}` has not been mapped to a node", l),
                    ));
                }
            }
        }
        let here = match loc_of(ctx) {
            Ok(l) => Some(l),
            Err(e) => {
                errs.push(e.in_rule("T-NewO"));
                None
            }
        };
        if !errs.is_empty() {
            return Err(errs);
        }
        let here = here.expect("no errors");
        Ok(Typed {
            ty: Type::Owned(c.to_string(), locs.to_vec()),
            behaviour: Behaviour::access(RemAccess::Write(here, locs[0].clone())),
        })
    }

    fn type_call(
        &self,
        ctx: &mut TypingContext,
        receiver: &Expr,
        method: &str,
        arg: Option<&Expr>,
        is_async: bool,
    ) -> TypeResult<Typed> {
        let rule = if is_async { "T-Message" } else { "T-Call" };
        let recv = self.type_expr(ctx, receiver);
        let argt = arg.map(|a| self.type_expr(ctx, a)).transpose();
        let (recv, argt) = both(recv, argt)?;
        let (class, locs) = owned_receiver(rule, &recv.ty)?;
        ctx.calls.insert((class.to_string(), method.to_string()));
        let sig = self
            .method_sig(class, method, locs)
            .map_err(|err| vec![TypeError::new(rule, err.to_string())])?;
        let mut errs = Vec::new();
        match (&sig.param, &argt) {
            (None, None) => {}
            (Some(p), Some(a)) => {
                if !self.accepts(&p.ty, &a.ty) {
                    errs.push(TypeError::new(
                        rule,
                        format!(
                            "argument of `{}` has type {}, expected {}",
                            method, a.ty, p.ty
                        ),
                    ));
                }
            }
            (Some(_), None) => errs.push(TypeError::new(
                rule,
                format!("`{}` expects one argument", method),
            )),
            (None, Some(_)) => errs.push(TypeError::new(
                rule,
                format!("`{}` takes no argument", method),
            )),
        }
        let here = match loc_of(ctx) {
            Ok(l) => Some(l),
            Err(e) => {
                errs.push(e.in_rule(rule));
                None
            }
        };
        if !is_async {
            if let Some(h) = &here {
                if *h != locs[0] {
                    errs.push(TypeError::new(
                        rule,
                        format!(
                            "synchronous call to `{}` needs the receiver in the same location as `this` ({} vs {})",
                            method, locs[0], h
                        ),
                    ));
                }
            }
        } else if sig.return_type != Type::Nil {
            errs.push(TypeError::new(
                rule,
                format!(
                    "messages can only invoke methods returning nil; `{}` returns {}",
                    method, sig.return_type
                ),
            ));
        }
        if !errs.is_empty() {
            return Err(errs);
        }
        let here = here.expect("no errors");
        let arg_b = argt.map(|a| a.behaviour).unwrap_or(Behaviour::Eps);
        let callee = if is_async {
            let pi = RemAccess::Msg(here, locs[0].clone(), method.to_string());
            Behaviour::seq(BOp::Access(pi), Behaviour::par(Behaviour::Eps, sig.behaviour))
        } else {
            sig.behaviour
        };
        Ok(Typed {
            ty: if is_async { Type::Nil } else { sig.return_type },
            behaviour: concat_all([&recv.behaviour, &arg_b, &callee]),
        })
    }
}

impl TypeError {
    fn in_rule(mut self, rule: &'static str) -> Self {
        self.rule = rule;
        self
    }
}

fn both<A, B>(a: TypeResult<A>, b: TypeResult<B>) -> TypeResult<(A, B)> {
    match (a, b) {
        (Ok(a), Ok(b)) => Ok((a, b)),
        (Err(mut x), Err(y)) => {
            x.extend(y);
            Err(x)
        }
        (Err(x), _) | (_, Err(x)) => Err(x),
    }
}

fn owned_receiver<'t>(rule: &'static str, ty: &'t Type) -> TypeResult<(&'t str, &'t [Location])> {
    match ty.as_owned() {
        Some((c, ls)) if !ls.is_empty() => Ok((c, ls)),
        _ => Err(vec![TypeError::new(
            rule,
            format!("receiver has type {}, expected an object type", ty),
        )]),
    }
}

/// `ℓ(Γ̄)`: the first location of `this` in the last frame.
pub fn loc_of(ctx: &TypingContext) -> Result<Location, TypeError> {
    match ctx.top().get("this") {
        Some(Type::Owned(_, ls)) if !ls.is_empty() => Ok(ls[0].clone()),
        Some(t) => Err(TypeError::new(
            "T-Var",
            format!("`this` has type {}, not an object type", t),
        )),
        None => Err(TypeError::new("T-Var", "`this` is not bound")),
    }
}

// ----- well-formedness -------------------------------------------------------

/// Outcome of checking one method.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MethodReport {
    pub class: Ident,
    pub method: Ident,
    pub declared: String,
    pub inferred: Option<String>,
    pub filtered: Option<String>,
    pub ok: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub methods: Vec<MethodReport>,
    pub diagnostics: Diagnostics,
}

impl CheckReport {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

fn diag(span: Span, rule: &str, message: impl Into<String>) -> Diagnostic {
    Diagnostic::error(span, message).with_rule(rule)
}

struct ClassOutcome {
    reports: Vec<MethodReport>,
    diagnostics: Diagnostics,
    calls: BTreeMap<(Ident, Ident), BTreeSet<(Ident, Ident)>>,
}

fn check_type_wf(program: &Program, class: &ClassDecl, ty: &Type, span: Span, what: &str, out: &mut Diagnostics) {
    match ty {
        Type::Int => out.push(diag(span, "WF-Class", format!("{} cannot have type int", what))),
        Type::Owned(c, ls) => {
            match program.class(c) {
                None => out.push(diag(span, "WF-Class", format!("{}: unknown class `{}`", what, c))),
                Some(k) if k.owners.len() != ls.len() => out.push(diag(
                    span,
                    "WF-Class",
                    format!("{}: class `{}` takes {} location(s), got {}", what, c, k.owners.len(), ls.len()),
                )),
                Some(_) => {}
            }
            let scope = class.owner_locations();
            for l in ls {
                if !scope.contains(l) {
                    out.push(diag(
                        span,
                        "WF-Class",
                        format!("{}: location `{}` is not an owner of `{}`", what, l, class.name),
                    ));
                }
            }
        }
        Type::Bool | Type::Nil => {}
    }
}

fn check_class_inner(program: &Program, class: &ClassDecl) -> ClassOutcome {
    let typer = Typer::new(program);
    let mut diagnostics = Vec::new();
    let mut reports = Vec::new();
    let mut calls = BTreeMap::new();
    let scope = class.owner_locations();

    for fd in &class.fields {
        check_type_wf(program, class, &fd.ty, fd.span, &format!("field `{}`", fd.name), &mut diagnostics);
    }

    for m in &class.methods {
        let before = diagnostics.len();
        if let Some(p) = &m.param {
            check_type_wf(program, class, &p.ty, m.span, &format!("parameter `{}`", p.name), &mut diagnostics);
            if p.name == "this" || p.name == WILDCARD {
                diagnostics.push(diag(m.span, "WF-Class", format!("`{}` cannot be a parameter name", p.name)));
            }
        }
        check_type_wf(program, class, &m.return_type, m.span, "return type", &mut diagnostics);
        for l in m.behaviour.locations() {
            if !scope.contains(&l) {
                diagnostics.push(diag(
                    m.span,
                    "WF-Class",
                    format!("declared behaviour of `{}` mentions `{}`, which is not an owner of `{}`", m.name, l, class.name),
                ));
            }
        }

        let mut frame = TypingFrame::with_this(class.self_type());
        if let Some(p) = &m.param {
            frame.bind(p.name.clone(), p.ty.clone());
        }
        let mut ctx = TypingContext::single(frame);
        let result = typer.type_expr(&mut ctx, &m.body);
        calls.insert((class.name.clone(), m.name.clone()), ctx.calls.clone());

        let mut report = MethodReport {
            class: class.name.clone(),
            method: m.name.clone(),
            declared: m.behaviour.to_string(),
            inferred: None,
            filtered: None,
            ok: false,
        };
        match result {
            Err(errs) => {
                for e in errs {
                    diagnostics.push(diag(
                        m.span,
                        e.rule,
                        format!("in `{}.{}`: {}", class.name, m.name, e.message),
                    ));
                }
            }
            Ok(t) => {
                let filtered = filter(&t.behaviour);
                report.inferred = Some(t.behaviour.to_string());
                report.filtered = Some(filtered.to_string());
                if !accepts(&m.return_type, &t.ty) {
                    diagnostics.push(diag(
                        m.span,
                        "WF-Class",
                        format!(
                            "body of `{}.{}` has type {}, declared {}",
                            class.name, m.name, t.ty, m.return_type
                        ),
                    ));
                }
                if !equiv(&filtered, &m.behaviour) {
                    diagnostics.push(diag(
                        m.span,
                        "WF-Class",
                        format!(
                            "behaviour mismatch in `{}.{}`: declared `{}`, inferred `{}` (suggested annotation: `as {}`)",
                            class.name, m.name, m.behaviour, filtered, filtered
                        ),
                    ));
                }
            }
        }
        report.ok = diagnostics.len() == before;
        reports.push(report);
    }
    ClassOutcome {
        reports,
        diagnostics,
        calls,
    }
}

/// Well-formedness of one class against the program it belongs to.
pub fn check_class(program: &Program, class: &ClassDecl) -> Diagnostics {
    check_class_inner(program, class).diagnostics
}

/// Well-formedness of the whole program, with one report per method.
pub fn check_program_report(program: &Program) -> CheckReport {
    let mut report = CheckReport::default();
    let mut graph: BTreeMap<(Ident, Ident), BTreeSet<(Ident, Ident)>> = BTreeMap::new();

    match program.main_class() {
        None => report.diagnostics.push(diag(
            Span::new(1, 1),
            "WF-Program",
            format!("program has no `{}` class", MAIN_CLASS),
        )),
        Some(main) => match main.method(MAIN_METHOD) {
            None => report.diagnostics.push(diag(
                main.span,
                "WF-Program",
                format!("class `{}` has no `{}` method", MAIN_CLASS, MAIN_METHOD),
            )),
            Some(m) => {
                if m.param.is_some() {
                    report.diagnostics.push(diag(
                        m.span,
                        "WF-Program",
                        format!("`{}.{}` must not take a parameter", MAIN_CLASS, MAIN_METHOD),
                    ));
                }
                if m.return_type != Type::Nil {
                    report.diagnostics.push(diag(
                        m.span,
                        "WF-Program",
                        format!("`{}.{}` must return nil", MAIN_CLASS, MAIN_METHOD),
                    ));
                }
            }
        },
    }

    for class in &program.classes {
        let out = check_class_inner(program, class);
        report.methods.extend(out.reports);
        report.diagnostics.extend(out.diagnostics);
        graph.extend(out.calls);
    }

    if let Some(cycle) = find_cycle(&graph) {
        let (c, m) = &cycle[0];
        let span = program
            .class(c)
            .and_then(|k| k.method(m))
            .map(|md| md.span)
            .unwrap_or_default();
        let chain: Vec<String> = cycle.iter().map(|(c, m)| format!("{}.{}", c, m)).collect();
        report.diagnostics.push(diag(
            span,
            "WF-Program",
            format!("recursive method invocations are not allowed: {}", chain.join(" -> ")),
        ));
    }
    report
}

pub fn check_program(program: &Program) -> Diagnostics {
    check_program_report(program).diagnostics
}

/// Finds a cycle in the call graph; the returned chain repeats its first node at the end.
fn find_cycle(graph: &BTreeMap<(Ident, Ident), BTreeSet<(Ident, Ident)>>) -> Option<Vec<(Ident, Ident)>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    fn dfs(
        node: &(Ident, Ident),
        graph: &BTreeMap<(Ident, Ident), BTreeSet<(Ident, Ident)>>,
        marks: &mut BTreeMap<(Ident, Ident), Mark>,
        path: &mut Vec<(Ident, Ident)>,
    ) -> Option<Vec<(Ident, Ident)>> {
        marks.insert(node.clone(), Mark::Active);
        path.push(node.clone());
        for next in graph.get(node).into_iter().flatten() {
            match marks.get(next) {
                Some(Mark::Active) => {
                    let start = path.iter().position(|n| n == next).expect("on path");
                    let mut cycle = path[start..].to_vec();
                    cycle.push(next.clone());
                    return Some(cycle);
                }
                Some(Mark::Done) => {}
                None => {
                    if let Some(c) = dfs(next, graph, marks, path) {
                        return Some(c);
                    }
                }
            }
        }
        path.pop();
        marks.insert(node.clone(), Mark::Done);
        None
    }
    let mut marks = BTreeMap::new();
    for node in graph.keys() {
        if !marks.contains_key(node) {
            if let Some(c) = dfs(node, graph, &mut marks, &mut Vec::new()) {
                return Some(c);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs(s: &str) -> Location {
        Location::Abstract(s.into())
    }

    fn main_ctx() -> TypingContext {
        TypingContext::single(TypingFrame::with_this(Type::owned(
            "Main",
            vec![abs("L1"), abs("L2"), abs("L3")],
        )))
    }

    const SMALL: &str = "class D<p> f: bool\nactive class A<p> def go(): nil as eps { null }\nclass Main<L1, L2, L3> def main(): nil as eps { null }";

    #[test]
    fn loc_of_cases() {
        assert_eq!(loc_of(&main_ctx()).unwrap(), abs("L1"));
        let k = TypingContext::single(TypingFrame::with_this(Type::owned("D", vec![Location::Node(2)])));
        assert_eq!(loc_of(&k).unwrap(), Location::Node(2));
        let bad = TypingContext::single(TypingFrame::with_this(Type::Bool));
        assert!(loc_of(&bad).is_err());
    }

    #[test]
    fn new_passive_writes_to_target() {
        let p = parse_program(SMALL).unwrap();
        let t = Typer::new(&p)
            .type_expr(&mut main_ctx(), &parse_expr("new D<L2>", "Main").unwrap())
            .unwrap();
        assert_eq!(t.ty, Type::owned("D", vec![abs("L2")]));
        assert_eq!(t.behaviour, Behaviour::access(RemAccess::Write(abs("L1"), abs("L2"))));
    }

    #[test]
    fn literals_are_silent() {
        let p = parse_program(SMALL).unwrap();
        let t = Typer::new(&p).type_expr(&mut main_ctx(), &Expr::True).unwrap();
        assert_eq!((t.ty, t.behaviour), (Type::Bool, Behaviour::Eps));
    }

    #[test]
    fn let_rejects_rebinding() {
        let p = parse_program(SMALL).unwrap();
        let e = parse_expr("let x = true in let x = false in x", "Main").unwrap();
        let errs = Typer::new(&p).type_expr(&mut main_ctx(), &e).unwrap_err();
        assert_eq!(errs[0].rule, "T-Let");
        let ok = parse_expr("let _ = true in let _ = false in null", "Main").unwrap();
        assert!(Typer::new(&p).type_expr(&mut main_ctx(), &ok).is_ok());
    }

    #[test]
    fn for_requires_increasing_bounds() {
        let p = parse_program(SMALL).unwrap();
        let e = parse_expr("for i in 2..2 { i }", "Main").unwrap();
        assert_eq!(Typer::new(&p).type_expr(&mut main_ctx(), &e).unwrap_err()[0].rule, "T-For");
        let e = parse_expr("for i in 1..3 { new D<L2> }", "Main").unwrap();
        let t = Typer::new(&p).type_expr(&mut main_ctx(), &e).unwrap();
        assert_eq!(
            t.behaviour,
            Behaviour::repeat(3, Behaviour::access(RemAccess::Write(abs("L1"), abs("L2"))))
        );
    }

    #[test]
    fn cond_builds_choice() {
        let p = parse_program(SMALL).unwrap();
        let e = parse_expr("let d = new D<L2> in if d.f then d.f = true else null", "Main").unwrap();
        let t = Typer::new(&p).type_expr(&mut main_ctx(), &e).unwrap();
        assert_eq!(t.ty, Type::Nil);
        let expected = parse_behaviour("write(L1,L2).read(L1,L2).(write(L1,L2) + eps)").unwrap();
        assert_eq!(t.behaviour, expected);
    }

    #[test]
    fn message_effect_has_parallel_continuation() {
        let p = parse_program(SMALL).unwrap();
        let e = parse_expr("let a = new A<L2> in a!go()", "Main").unwrap();
        let t = Typer::new(&p).type_expr(&mut main_ctx(), &e).unwrap();
        assert_eq!(
            t.behaviour,
            parse_behaviour("write(L1,L2).msg(L1,L2,go).(eps || eps)").unwrap()
        );
    }

    #[test]
    fn sync_call_needs_same_location() {
        let src = "class D<p> def m(): nil as eps { null }\nclass Main<L1, L2> def main(): nil as eps { null }";
        let p = parse_program(src).unwrap();
        let ctx = || TypingContext::single(TypingFrame::with_this(Type::owned("Main", vec![abs("L1"), abs("L2")])));
        let far = parse_expr("let d = new D<L2> in d.m()", "Main").unwrap();
        assert_eq!(Typer::new(&p).type_expr(&mut ctx(), &far).unwrap_err()[0].rule, "T-Call");
        let near = parse_expr("let d = new D<L1> in d.m()", "Main").unwrap();
        assert!(Typer::new(&p).type_expr(&mut ctx(), &near).is_ok());
    }

    #[test]
    fn return_pops_a_frame() {
        let p = parse_program(SMALL).unwrap();
        let inner = TypingFrame::with_this(Type::owned("D", vec![abs("L2")]));
        let outer = TypingFrame::with_this(Type::owned("Main", vec![abs("L1"), abs("L2"), abs("L3")]));
        // `return` types its body in the frame below the last one.
        let mut ctx = TypingContext::new(vec![inner, outer]);
        let t = Typer::new(&p)
            .type_expr(&mut ctx, &Expr::Return(Box::new(Expr::This)))
            .unwrap();
        assert_eq!(t.ty, Type::owned("D", vec![abs("L2")]));
        assert!(Typer::new(&p)
            .type_expr(&mut main_ctx(), &Expr::Return(Box::new(Expr::This)))
            .is_err());
    }

    #[test]
    fn lookups_substitute_owners() {
        let src = "active class C<p1, p2, p3> d1: D<p1> d2: D<p2> d3: D<p3>\nclass D<p>\nclass Main<L1, L2, L3> def main(): nil as eps { null }";
        let p = parse_program(src).unwrap();
        let t = Typer::new(&p);
        let args = [abs("L1"), abs("L2"), abs("L3")];
        assert_eq!(t.field_type("C", "d2", &args).unwrap(), Type::owned("D", vec![abs("L2")]));
        assert_eq!(t.owners("D").unwrap(), vec![Location::Owner("p".into())]);
        assert!(matches!(t.field_type("C", "d2", &args[..2]), Err(LookupError::Arity { .. })));
        assert!(matches!(t.field_type("C", "zz", &args), Err(LookupError::UnknownField(..))));
        assert!(matches!(t.method_sig("X", "m", &args), Err(LookupError::UnknownClass(_))));
    }

    #[test]
    fn self_reads_filter_away() {
        let src = "class D<p> f: bool def get(): bool as eps { this.f }\nclass Main<L1> def main(): nil as eps { null }";
        let p = parse_program(src).unwrap();
        assert!(check_program(&p).is_empty());
    }

    #[test]
    fn self_recursion_is_reported() {
        let src = "class D<p> def m(): nil as eps { this.m() }\nclass Main<L1> def main(): nil as eps { null }";
        let p = parse_program(src).unwrap();
        let d = check_program(&p);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("D.m -> D.m"));
    }

    #[test]
    fn active_creation_outside_main() {
        let src = "active class A<p> def go(): nil as eps { null }\nclass D<p> def mk(): nil as write(p,p) { new A<p> }\nclass Main<L1> def main(): nil as eps { null }";
        let p = parse_program(src).unwrap();
        let d = check_program(&p);
        assert!(d.iter().any(|x| x.rule.as_deref() == Some("T-NewO") && x.message.contains("isMain")));
    }

    #[test]
    fn missing_main() {
        let p = parse_program("class D<p>").unwrap();
        assert!(check_program(&p)[0].message.contains("Main"));
        let p = parse_program("class Main<L> def run(): nil as eps { null }").unwrap();
        assert!(check_program(&p)[0].message.contains("main"));
    }
}
