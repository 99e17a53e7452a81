// SPDX-License-Identifier: Apache-2.0

//! Pretty-printing. Output re-parses to the same tree for source-legal terms.

use std::fmt::{self, Display, Write};

use super::ast::*;

impl Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Owner(p) | Location::Abstract(p) => f.write_str(p),
            Location::Node(k) => write!(f, "{}", k),
        }
    }
}

impl Display for RemAccess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RemAccess::Read(s, d) => write!(f, "read({},{})", s, d),
            RemAccess::Write(s, d) => write!(f, "write({},{})", s, d),
            RemAccess::Msg(s, d, m) => write!(f, "msg({},{},{})", s, d, m),
        }
    }
}

impl Display for BOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BOp::Access(pi) => write!(f, "{}", pi),
            BOp::Choice(l, r) => write!(f, "({} + {})", l, r),
            BOp::Loop(n, b) => write!(f, "{}*{{{}}}", n, b),
        }
    }
}

impl Display for Behaviour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Behaviour::Eps => f.write_str("eps"),
            Behaviour::Seq(op, rest) => {
                write!(f, "{}", op)?;
                if !rest.is_eps() {
                    write!(f, ".{}", rest)?;
                }
                Ok(())
            }
            Behaviour::Par(l, r) => write!(f, "({} || {})", l, r),
        }
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Bool => f.write_str("bool"),
            Type::Nil => f.write_str("nil"),
            Type::Int => f.write_str("int"),
            Type::Owned(c, ls) => write!(f, "{}<{}>", c, join(ls)),
        }
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(&mut s, self, 0, Pos::Tail)?;
        f.write_str(&s)
    }
}

/// Syntactic position of a sub-expression.
#[derive(Clone, Copy, PartialEq)]
enum Pos {
    /// Extends to the end of the enclosing construct.
    Tail,
    /// Followed by a keyword (`in`, `then`, `else`).
    Inner,
    /// Receiver of a field access, call or send.
    Operand,
}

fn is_postfix(e: &Expr) -> bool {
    matches!(
        e,
        Expr::Var(_)
            | Expr::This
            | Expr::True
            | Expr::False
            | Expr::Null
            | Expr::New(..)
            | Expr::Addr(_)
            | Expr::IntLit(_)
            | Expr::FieldRead(..)
            | Expr::SyncCall { .. }
            | Expr::AsyncSend { .. }
    )
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn write_expr(out: &mut String, e: &Expr, level: usize, pos: Pos) -> fmt::Result {
    if pos != Pos::Tail && !is_postfix(e) {
        out.push('(');
        write_expr(out, e, level, Pos::Tail)?;
        out.push(')');
        return Ok(());
    }
    match e {
        Expr::Var(x) => out.push_str(x),
        Expr::This => out.push_str("this"),
        Expr::True => out.push_str("true"),
        Expr::False => out.push_str("false"),
        Expr::Null => out.push_str("null"),
        Expr::IntLit(n) => write!(out, "{}", n)?,
        Expr::Addr(a) => write!(out, "{}", a)?,
        Expr::New(c, ls) => write!(out, "new {}<{}>", c, join(ls))?,
        Expr::FieldRead(r, fld) => {
            write_expr(out, r, level, Pos::Operand)?;
            write!(out, ".{}", fld)?;
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
            write_expr(out, receiver, level, Pos::Operand)?;
            let sep = if matches!(e, Expr::SyncCall { .. }) {
                '.'
            } else {
                '!'
            };
            write!(out, "{}{}(", sep, method)?;
            if let Some(a) = arg {
                write_expr(out, a, level, Pos::Tail)?;
            }
            out.push(')');
        }
        Expr::FieldWrite(r, fld, v) => {
            write_expr(out, r, level, Pos::Operand)?;
            write!(out, ".{} = ", fld)?;
            write_expr(out, v, level, Pos::Tail)?;
        }
        Expr::If(c, t, f) => {
            out.push_str("if ");
            write_expr(out, c, level, Pos::Inner)?;
            out.push_str(" then ");
            write_expr(out, t, level, Pos::Inner)?;
            out.push_str(" else ");
            write_expr(out, f, level, Pos::Tail)?;
        }
        Expr::For {
            var,
            from,
            to,
            body,
        } => {
            writeln!(out, "for {} in {}..{} {{", var, from, to)?;
            indent(out, level + 1);
            write_expr(out, body, level + 1, Pos::Tail)?;
            out.push('\n');
            indent(out, level);
            out.push('}');
        }
        Expr::Let(x, bound, body) => {
            write!(out, "let {} = ", x)?;
            write_expr(out, bound, level, Pos::Inner)?;
            out.push_str(" in\n");
            indent(out, level);
            write_expr(out, body, level, Pos::Tail)?;
        }
        Expr::Return(inner) => {
            out.push_str("return ");
            write_expr(out, inner, level, Pos::Operand)?;
        }
    }
    Ok(())
}

impl Display for MethodDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let param = match &self.param {
            Some(p) => format!("{}: {}", p.name, p.ty),
            None => String::new(),
        };
        let mut body = String::new();
        write_expr(&mut body, &self.body, 2, Pos::Tail)?;
        write!(
            f,
            "    def {}({}): {} as {} {{\n        {}\n    }}",
            self.name, param, self.return_type, self.behaviour, body
        )
    }
}

impl Display for ClassDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.active {
            f.write_str("active ")?;
        }
        writeln!(f, "class {}<{}>", self.name, self.owners.join(", "))?;
        for fd in &self.fields {
            writeln!(f, "    {}: {}", fd.name, fd.ty)?;
        }
        for m in &self.methods {
            writeln!(f, "{}", m)?;
        }
        Ok(())
    }
}

impl Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.classes.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}", c)?;
        }
        Ok(())
    }
}

/// Anything with a concrete syntax.
pub fn pretty<T: Display + ?Sized>(x: &T) -> String {
    x.to_string()
}
