// SPDX-License-Identifier: Apache-2.0

//! Recursive-descent parser.
//!
//! ```text
//! program   ::= class*
//! class     ::= ["active"] "class" C "<" p ("," p)* ">" (field | method)*
//! field     ::= f ":" type
//! method    ::= "def" m "(" [x ":" type] ")" ":" type "as" behaviour "{" expr "}"
//! type      ::= "bool" | "nil" | C "<" l ("," l)* ">"
//! expr      ::= "let" x "=" expr "in" expr
//!             | "if" expr "then" expr "else" expr
//!             | "for" i "in" n ".." n "{" expr "}"
//!             | postfix ["=" expr]
//! postfix   ::= primary ("." f | "." m "(" [expr] ")" | "!" m "(" [expr] ")")*
//! primary   ::= x | "this" | "true" | "false" | "null" | "skip"
//!             | "new" C "<" l ("," l)* ">" | "(" expr ")"
//! behaviour ::= "eps" | "(" behaviour "||" behaviour ")" | bop ["." behaviour]
//! bop       ::= "read(" l "," l ")" | "write(" l "," l ")" | "msg(" l "," l "," m ")"
//!             | "(" behaviour "+" behaviour ")" | n "*" "{" behaviour "}"
//! ```

use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use crate::diag::{Diagnostic, Diagnostics, Span};

const KEYWORDS: &[&str] = &[
    "active", "class", "def", "as", "let", "in", "if", "then", "else", "for", "new", "this",
    "null", "true", "false", "skip", "return", "bool", "nil", "int",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// Parses a whole program and checks the name-uniqueness invariants.
pub fn parse_program(src: &str) -> Result<Program, Diagnostics> {
    let tokens = lex(src).map_err(|d| vec![d])?;
    let mut p = Parser::new(tokens);
    let mut diags = Vec::new();
    let mut classes = Vec::new();

    while !p.at_eof() {
        match p.class_decl() {
            Ok(c) => classes.push(c),
            Err(d) => {
                diags.push(d);
                p.recover_to_class();
            }
        }
    }

    let mut seen = BTreeSet::new();
    for c in &classes {
        if !seen.insert(c.name.as_str()) {
            diags.push(Diagnostic::error(
                c.span,
                format!("duplicate class `{}`", c.name),
            ));
        }
        check_unique(
            c.owners.iter().map(|o| (o.as_str(), c.span)),
            "ownership parameter",
            &c.name,
            &mut diags,
        );
        check_unique(
            c.fields.iter().map(|f| (f.name.as_str(), f.span)),
            "field",
            &c.name,
            &mut diags,
        );
        check_unique(
            c.methods.iter().map(|m| (m.name.as_str(), m.span)),
            "method",
            &c.name,
            &mut diags,
        );
    }

    if diags.is_empty() {
        Ok(Program { classes })
    } else {
        Err(diags)
    }
}

fn check_unique<'a>(
    items: impl Iterator<Item = (&'a str, Span)>,
    what: &str,
    class: &str,
    diags: &mut Diagnostics,
) {
    let mut seen = BTreeSet::new();
    for (name, span) in items {
        if !seen.insert(name) {
            diags.push(Diagnostic::error(
                span,
                format!("duplicate {} `{}` in class `{}`", what, name, class),
            ));
        }
    }
}

/// Parses a standalone behaviour. Identifiers denote abstract locations and
/// integers denote nodes.
pub fn parse_behaviour(src: &str) -> Result<Behaviour, Diagnostic> {
    let mut p = Parser::new(lex(src)?);
    let b = p.behaviour()?;
    p.expect(Tok::Eof)?;
    Ok(b)
}

/// Parses a standalone expression, resolving locations as in class `class`.
pub fn parse_expr(src: &str, class: &str) -> Result<Expr, Diagnostic> {
    let mut p = Parser::new(lex(src)?);
    p.class = Some(class.to_string());
    let e = p.expr()?;
    p.expect(Tok::Eof)?;
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    /// Name of the class being parsed; decides how location names resolve.
    class: Option<String>,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn new(tokens: Vec<Token>) -> Self {
        Parser {
            tokens,
            pos: 0,
            class: None,
        }
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat(&mut self, tok: Tok) -> bool {
        if *self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, wanted: &str) -> Diagnostic {
        Diagnostic::error(
            self.span(),
            format!("expected {}, found {}", wanted, self.peek().describe()),
        )
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if self.eat(tok.clone()) {
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{}`", kw)))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(Ident, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                let span = self.bump().span;
                Ok((s, span))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn recover_to_class(&mut self) {
        self.bump();
        while !self.at_eof() && !self.at_kw("class") && !self.at_kw("active") {
            self.bump();
        }
    }

    fn class_decl(&mut self) -> PResult<ClassDecl> {
        let span = self.span();
        let active = self.eat_kw("active");
        self.expect_kw("class")?;
        let (name, _) = self.ident("a class name")?;
        self.class = Some(name.clone());
        self.expect(Tok::Lt)?;
        let mut owners = vec![self.ident("an ownership parameter")?.0];
        while self.eat(Tok::Comma) {
            owners.push(self.ident("an ownership parameter")?.0);
        }
        self.expect(Tok::Gt)?;

        let mut fields = Vec::new();
        let mut methods = Vec::new();
        loop {
            if self.at_kw("def") {
                methods.push(self.method_decl()?);
            } else if matches!(self.peek(), Tok::Ident(s) if !is_keyword(s)) {
                let (fname, fspan) = self.ident("a field name")?;
                self.expect(Tok::Colon)?;
                let ty = self.ty()?;
                fields.push(FieldDecl {
                    name: fname,
                    ty,
                    span: fspan,
                });
            } else if self.at_eof() || self.at_kw("class") || self.at_kw("active") {
                break;
            } else {
                return Err(self.unexpected("a field, a method, or a class declaration"));
            }
        }
        Ok(ClassDecl {
            active,
            name,
            owners,
            fields,
            methods,
            span,
        })
    }

    fn method_decl(&mut self) -> PResult<MethodDecl> {
        let span = self.span();
        self.expect_kw("def")?;
        let (name, _) = self.ident("a method name")?;
        self.expect(Tok::LParen)?;
        let param = if self.eat(Tok::RParen) {
            None
        } else {
            let (pname, _) = self.ident("a parameter name")?;
            self.expect(Tok::Colon)?;
            let ty = self.ty()?;
            self.expect(Tok::RParen)?;
            Some(Param { name: pname, ty })
        };
        self.expect(Tok::Colon)?;
        let return_type = self.ty()?;
        if self.at_kw("in") {
            return Err(Diagnostic::error(
                self.span(),
                "behaviour annotations are introduced by `as`, not `in`",
            ));
        }
        self.expect_kw("as")?;
        let behaviour = self.behaviour()?;
        self.expect(Tok::LBrace)?;
        let body = self.expr()?;
        self.expect(Tok::RBrace)?;
        Ok(MethodDecl {
            name,
            param,
            return_type,
            behaviour,
            body,
            span,
        })
    }

    fn ty(&mut self) -> PResult<Type> {
        let span = self.span();
        if self.eat_kw("bool") {
            return Ok(Type::Bool);
        }
        if self.eat_kw("nil") {
            return Ok(Type::Nil);
        }
        if self.at_kw("int") {
            return Err(Diagnostic::error(
                span,
                "type `int` is reserved for loop counters and cannot be written",
            ));
        }
        let (class, _) = self.ident("a type")?;
        self.expect(Tok::Lt)?;
        let locs = self.location_list()?;
        self.expect(Tok::Gt)?;
        Ok(Type::Owned(class, locs))
    }

    fn location_list(&mut self) -> PResult<Vec<Location>> {
        let mut locs = vec![self.location()?];
        while self.eat(Tok::Comma) {
            locs.push(self.location()?);
        }
        Ok(locs)
    }

    fn location(&mut self) -> PResult<Location> {
        match self.peek().clone() {
            Tok::Int(n) if self.class.is_none() => {
                self.bump();
                let k = NodeId::try_from(n)
                    .map_err(|_| Diagnostic::error(self.span(), "node id out of range"))?;
                Ok(Location::Node(k))
            }
            _ => {
                let (name, _) = self.ident("a location")?;
                Ok(match &self.class {
                    Some(c) => owner_location(c, &name),
                    None => Location::Abstract(name),
                })
            }
        }
    }

    // ----- behaviours -------------------------------------------------------

    fn behaviour(&mut self) -> PResult<Behaviour> {
        if self.eat_kw("eps") {
            return Ok(Behaviour::Eps);
        }
        let op = if *self.peek() == Tok::LParen {
            self.bump();
            let left = self.behaviour()?;
            if self.eat(Tok::PipePipe) {
                let right = self.behaviour()?;
                self.expect(Tok::RParen)?;
                if *self.peek() == Tok::Dot {
                    return Err(Diagnostic::error(
                        self.span(),
                        "a parallel composition cannot be followed by `.`; sequence into its left branch instead",
                    ));
                }
                return Ok(Behaviour::par(left, right));
            }
            if !self.eat(Tok::Plus) {
                return Err(self.unexpected("`+` or `||`"));
            }
            let right = self.behaviour()?;
            self.expect(Tok::RParen)?;
            BOp::Choice(left, right)
        } else if let Tok::Int(n) = *self.peek() {
            let span = self.span();
            self.bump();
            if n < 1 {
                return Err(Diagnostic::error(span, "loop count must be at least 1"));
            }
            let n = u32::try_from(n).map_err(|_| Diagnostic::error(span, "loop count too large"))?;
            self.expect(Tok::Star)?;
            self.expect(Tok::LBrace)?;
            let body = self.behaviour()?;
            self.expect(Tok::RBrace)?;
            BOp::Loop(n, body)
        } else {
            BOp::Access(self.access()?)
        };
        let rest = if self.eat(Tok::Dot) {
            self.behaviour()?
        } else {
            Behaviour::Eps
        };
        Ok(Behaviour::seq(op, rest))
    }

    fn access(&mut self) -> PResult<RemAccess> {
        let kind = match self.peek() {
            Tok::Ident(s) if s == "read" => AccessKind::Read,
            Tok::Ident(s) if s == "write" => AccessKind::Write,
            Tok::Ident(s) if s == "msg" => AccessKind::Msg,
            _ => return Err(self.unexpected("a behaviour")),
        };
        self.bump();
        self.expect(Tok::LParen)?;
        let src = self.location()?;
        self.expect(Tok::Comma)?;
        let dst = self.location()?;
        let pi = match kind {
            AccessKind::Read => RemAccess::Read(src, dst),
            AccessKind::Write => RemAccess::Write(src, dst),
            AccessKind::Msg => {
                self.expect(Tok::Comma)?;
                let (m, _) = self.ident("a method name")?;
                RemAccess::Msg(src, dst, m)
            }
        };
        self.expect(Tok::RParen)?;
        Ok(pi)
    }

    // ----- expressions ------------------------------------------------------

    fn expr(&mut self) -> PResult<Expr> {
        if self.eat_kw("let") {
            let x = if matches!(self.peek(), Tok::Ident(s) if s == WILDCARD) {
                self.bump();
                WILDCARD.to_string()
            } else {
                self.ident("a variable name")?.0
            };
            self.expect(Tok::Eq)?;
            let bound = self.expr()?;
            self.expect_kw("in")?;
            let body = self.expr()?;
            return Ok(Expr::let_in(x, bound, body));
        }
        if self.eat_kw("if") {
            let c = self.expr()?;
            self.expect_kw("then")?;
            let t = self.expr()?;
            self.expect_kw("else")?;
            let f = self.expr()?;
            return Ok(Expr::If(Box::new(c), Box::new(t), Box::new(f)));
        }
        if self.eat_kw("for") {
            let (var, _) = self.ident("a loop variable")?;
            self.expect_kw("in")?;
            let from = self.loop_bound()?;
            self.expect(Tok::DotDot)?;
            let to = self.loop_bound()?;
            self.expect(Tok::LBrace)?;
            let body = self.expr()?;
            self.expect(Tok::RBrace)?;
            return Ok(Expr::For {
                var,
                from,
                to,
                body: Box::new(body),
            });
        }
        let span = self.span();
        let lhs = self.postfix()?;
        if self.eat(Tok::Eq) {
            let rhs = self.expr()?;
            return match lhs {
                Expr::FieldRead(target, f) => Ok(Expr::FieldWrite(target, f, Box::new(rhs))),
                _ => Err(Diagnostic::error(
                    span,
                    "only fields can be assigned (`e.f = e`)",
                )),
            };
        }
        Ok(lhs)
    }

    fn loop_bound(&mut self) -> PResult<i64> {
        match *self.peek() {
            Tok::Int(n) => {
                let span = self.span();
                self.bump();
                i64::try_from(n).map_err(|_| Diagnostic::error(span, "loop bound too large"))
            }
            _ => Err(self.unexpected("an integer loop bound")),
        }
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.eat(Tok::Dot) {
                let (name, _) = self.ident("a field or method name")?;
                if *self.peek() == Tok::LParen {
                    let arg = self.call_arg()?;
                    e = Expr::SyncCall {
                        receiver: Box::new(e),
                        method: name,
                        arg,
                    };
                } else {
                    e = Expr::FieldRead(Box::new(e), name);
                }
            } else if self.eat(Tok::Bang) {
                let (name, _) = self.ident("a method name")?;
                if *self.peek() != Tok::LParen {
                    return Err(self.unexpected("`(`"));
                }
                let arg = self.call_arg()?;
                e = Expr::AsyncSend {
                    receiver: Box::new(e),
                    method: name,
                    arg,
                };
            } else {
                return Ok(e);
            }
        }
    }

    fn call_arg(&mut self) -> PResult<Option<Box<Expr>>> {
        self.expect(Tok::LParen)?;
        if self.eat(Tok::RParen) {
            return Ok(None);
        }
        let arg = self.expr()?;
        self.expect(Tok::RParen)?;
        Ok(Some(Box::new(arg)))
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::At => Err(Diagnostic::error(
                span,
                "address literals only exist at runtime and cannot appear in source",
            )),
            Tok::Int(_) => Err(Diagnostic::error(
                span,
                "integer literals are only allowed as loop bounds",
            )),
            Tok::Ident(s) => match s.as_str() {
                "this" => {
                    self.bump();
                    Ok(Expr::This)
                }
                "true" => {
                    self.bump();
                    Ok(Expr::True)
                }
                "false" => {
                    self.bump();
                    Ok(Expr::False)
                }
                "null" | "skip" => {
                    self.bump();
                    Ok(Expr::Null)
                }
                "new" => {
                    self.bump();
                    let (class, _) = self.ident("a class name")?;
                    self.expect(Tok::Lt)?;
                    let locs = self.location_list()?;
                    self.expect(Tok::Gt)?;
                    Ok(Expr::New(class, locs))
                }
                "return" => Err(Diagnostic::error(
                    span,
                    "`return` is a runtime-only construct and cannot appear in source",
                )),
                _ if s == WILDCARD => Err(Diagnostic::error(
                    span,
                    "`_` can only be used as a `let` binder",
                )),
                _ => {
                    let (x, _) = self.ident("an expression")?;
                    Ok(Expr::Var(x))
                }
            },
            _ => Err(self.unexpected("an expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs(s: &str) -> Location {
        Location::Abstract(s.into())
    }

    #[test]
    fn passive_class_without_members() {
        let p = parse_program("class D<p>").unwrap();
        assert_eq!(p.classes.len(), 1);
        let d = &p.classes[0];
        assert!(!d.active);
        assert_eq!(d.owners, vec!["p".to_string()]);
        assert!(d.fields.is_empty() && d.methods.is_empty());
    }

    #[test]
    fn duplicate_class() {
        let errs = parse_program("class D<p> class D<p>").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("duplicate class `D`"));
        assert_eq!(errs[0].span.col, 12);
    }

    #[test]
    fn duplicate_field_and_method() {
        let src = "class D<p> f: bool f: nil def m(): nil as eps { null } def m(): nil as eps { null }";
        let errs = parse_program(src).unwrap_err();
        assert_eq!(errs.len(), 2);
    }

    #[test]
    fn duplicate_owner() {
        assert!(parse_program("class D<p, p>").is_err());
    }

    #[test]
    fn runtime_constructs_rejected() {
        let ret = parse_program("class Main<L> def main(): nil as eps { return null }");
        assert!(ret.unwrap_err()[0].message.contains("return"));
        let addr = parse_program("class Main<L> def main(): nil as eps { @0.1 }");
        assert!(addr.unwrap_err()[0].message.contains("address"));
        let int = parse_program("class Main<L> x: int");
        assert!(int.unwrap_err()[0].message.contains("int"));
        let lit = parse_program("class Main<L> def main(): nil as eps { 3 }");
        assert!(lit.is_err());
    }

    #[test]
    fn behaviour_sequence() {
        let b = parse_behaviour("write(L1,L2). write(L1,L3)").unwrap();
        assert_eq!(
            b,
            Behaviour::accesses([
                RemAccess::Write(abs("L1"), abs("L2")),
                RemAccess::Write(abs("L1"), abs("L3")),
            ])
        );
    }

    #[test]
    fn behaviour_eps_and_loop() {
        assert_eq!(parse_behaviour("eps").unwrap(), Behaviour::Eps);
        let b = parse_behaviour("3*{read(p,q)}").unwrap();
        assert_eq!(
            b,
            Behaviour::repeat(3, Behaviour::access(RemAccess::Read(abs("p"), abs("q"))))
        );
        assert!(parse_behaviour("0*{read(p,q)}").is_err());
    }

    #[test]
    fn behaviour_nodes_choice_par() {
        let b = parse_behaviour("(read(0,1) + eps).(msg(0,1,m) || eps)").unwrap();
        let pi = RemAccess::Read(Location::Node(0), Location::Node(1));
        let m = RemAccess::Msg(Location::Node(0), Location::Node(1), "m".into());
        assert_eq!(
            b,
            Behaviour::seq(
                BOp::Choice(Behaviour::access(pi), Behaviour::Eps),
                Behaviour::par(Behaviour::access(m), Behaviour::Eps)
            )
        );
        assert!(parse_behaviour("(eps || eps).write(a,b)").is_err());
    }

    #[test]
    fn field_write_requires_field() {
        let e = parse_expr("x.f = true", "D").unwrap();
        assert!(matches!(e, Expr::FieldWrite(..)));
        assert!(parse_expr("x = true", "D").is_err());
    }

    #[test]
    fn postfix_chains() {
        let e = parse_expr("this.a.m(x)!n()", "D").unwrap();
        match e {
            Expr::AsyncSend { receiver, method, arg } => {
                assert_eq!(method, "n");
                assert!(arg.is_none());
                assert!(matches!(*receiver, Expr::SyncCall { .. }));
            }
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn skip_is_null() {
        assert_eq!(parse_expr("skip", "D").unwrap(), Expr::Null);
    }

    #[test]
    fn locations_resolve_by_class() {
        assert_eq!(
            parse_expr("new D<L2>", "Main").unwrap(),
            Expr::New("D".into(), vec![abs("L2")])
        );
        assert_eq!(
            parse_expr("new D<p>", "C").unwrap(),
            Expr::New("D".into(), vec![Location::Owner("p".into())])
        );
    }

    #[test]
    fn in_keyword_for_behaviour_is_reported() {
        let errs = parse_program("class D<p> def m(): nil in eps { null }").unwrap_err();
        assert!(errs[0].message.contains("`as`"));
    }
}
