//! Canonical printer for terms. Source forms print in the concrete syntax and
//! parse back alpha-equal; machine-extended forms print with reserved `#`
//! spellings that the parser rejects, for use in traces and diagnostics.

use std::fmt::Write;

use crate::syntax::{Fun, SourceValue, Term};

/// Prints a term in canonical concrete syntax.
pub fn print_term(term: &Term) -> String {
    let mut out = String::new();
    write_term(&mut out, term, usize::MAX);
    out
}

/// Prints a term to a bounded depth, eliding deeper structure; used for
/// trace summaries.
pub fn print_term_limited(term: &Term, max_depth: usize) -> String {
    let mut out = String::new();
    write_term(&mut out, term, max_depth);
    out
}

fn write_term(out: &mut String, term: &Term, depth: usize) {
    if depth == 0 {
        out.push_str("...");
        return;
    }
    let d = depth.saturating_sub(1);
    match term {
        Term::Var(x) => {
            let _ = write!(out, "{x}");
        }
        Term::Falses => out.push_str("falses"),
        Term::Anys => out.push_str("anys"),
        Term::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Term::Ints => out.push_str("ints"),
        Term::Tabs => out.push_str("tabs"),
        Term::Funs => out.push_str("funs"),
        Term::Ptrs => out.push_str("ptrs"),
        Term::In => out.push_str("in"),
        Term::Uop(op, a) => {
            let _ = write!(out, "(uop {} ", op.name());
            write_term(out, a, d);
            out.push(')');
        }
        Term::Bop(op, a, b) => {
            let _ = write!(out, "(bop {} ", op.name());
            write_term(out, a, d);
            out.push(' ');
            write_term(out, b, d);
            out.push(')');
        }
        Term::Cop(op, a, b) => {
            let _ = write!(out, "(cop {} ", op.name());
            write_term(out, a, d);
            out.push(' ');
            write_term(out, b, d);
            out.push(')');
        }
        Term::Table(entries) => {
            out.push_str("(table");
            for e in entries {
                let _ = write!(out, " ({} {} ", e.var, e.index);
                write_term(out, &e.term, d);
                out.push(')');
            }
            out.push(')');
        }
        Term::Arr { len, var, body } => {
            out.push_str("(arr ");
            write_term(out, len, d);
            let _ = write!(out, " {var} ");
            write_term(out, body, d);
            out.push(')');
        }
        Term::Fun(fun) => write_fun(out, fun, d),
        Term::Len(a) => write_unary(out, "len", a, d),
        Term::AppErr(a, b) => write_binary(out, "appe", a, b, d),
        Term::AppFail(a, b) => write_binary(out, "appf", a, b, d),
        Term::From(a) => write_unary(out, "from", a, d),
        Term::New { ty, init } => write_binary(out, "new", ty, init, d),
        Term::Read(a) => write_unary(out, "read", a, d),
        Term::Write(a, b) => write_binary(out, "write", a, b, d),
        Term::PtrTo(a) => write_unary(out, "ptrto", a, d),
        Term::Out(a) => write_unary(out, "out", a, d),
        Term::Unify(a, b) => write_binary(out, "unify", a, b, d),
        Term::Join(a, b) => write_binary(out, "join", a, b, d),
        Term::Let { var, bound, body } => {
            let _ = write!(out, "(let {var} ");
            write_term(out, bound, d);
            out.push(' ');
            write_term(out, body, d);
            out.push(')');
        }
        Term::Letrec { binds, body } => {
            out.push_str("(letrec (");
            for (i, (var, value)) in binds.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "({var} ");
                write_value(out, value, d);
                out.push(')');
            }
            out.push_str(") ");
            write_term(out, body, d);
            out.push(')');
        }
        Term::If {
            var,
            cond,
            then_t,
            else_t,
        } => {
            let _ = write!(out, "(if {var} ");
            write_term(out, cond, d);
            out.push(' ');
            write_term(out, then_t, d);
            out.push(' ');
            write_term(out, else_t, d);
            out.push(')');
        }
        Term::Stage {
            fx,
            dec,
            left,
            right,
        } => {
            let _ = write!(out, "(stage {fx} {dec} ");
            write_term(out, left, d);
            out.push(' ');
            write_term(out, right, d);
            out.push(')');
        }
        Term::FxThen { fx, body } => {
            let _ = write!(out, "(fxthen {fx} ");
            write_term(out, body, d);
            out.push(')');
        }
        Term::Hl(hl) => {
            let _ = write!(out, "{hl}");
        }
        Term::IfM {
            var,
            cond,
            then_t,
            saved,
            else_t,
        } => {
            let _ = write!(out, "(#ifm {var} ");
            write_term(out, cond, d);
            out.push(' ');
            write_term(out, then_t, d);
            out.push_str(" (#ph");
            for (pl, cell) in saved.iter() {
                let _ = write!(out, " ({pl} {} ", cell.env);
                write_term(out, &cell.ty, d);
                let _ = write!(out, " {})", cell.contents);
            }
            out.push_str(") ");
            write_term(out, else_t, d);
            out.push(')');
        }
        Term::Frame {
            env,
            body,
            allowed,
        } => {
            let _ = write!(out, "(#frame {env} {allowed} ");
            write_term(out, body, d);
            out.push(')');
        }
        Term::Chk {
            subject,
            ae,
            pattern,
            then_t,
            else_t,
        } => {
            let _ = write!(out, "(#chk {subject} (#ae");
            for (a, b) in ae.iter() {
                let _ = write!(out, " ({a} {b})");
            }
            out.push_str(") ");
            write_term(out, pattern, d);
            out.push(' ');
            write_term(out, then_t, d);
            out.push(' ');
            write_term(out, else_t, d);
            out.push(')');
        }
    }
}

fn write_unary(out: &mut String, name: &str, a: &Term, d: usize) {
    let _ = write!(out, "({name} ");
    write_term(out, a, d);
    out.push(')');
}

fn write_binary(out: &mut String, name: &str, a: &Term, b: &Term, d: usize) {
    let _ = write!(out, "({name} ");
    write_term(out, a, d);
    out.push(' ');
    write_term(out, b, d);
    out.push(')');
}

fn write_fun(out: &mut String, fun: &Fun, d: usize) {
    match fun {
        Fun::Lambda {
            param,
            domain,
            dk,
            dom_fx,
            range_fx,
            body,
        } => {
            let _ = write!(out, "(fun {param} ");
            write_term(out, domain, d);
            let _ = write!(out, " {dk} {dom_fx} {range_fx} ");
            write_term(out, body, d);
            out.push(')');
        }
        Fun::AllQuant {
            type_var,
            type_domain,
            instantiation,
            param,
            domain,
            dom_fx,
            range_fx,
            body,
        } => {
            let _ = write!(out, "(funall {type_var} ");
            write_term(out, type_domain, d);
            out.push(' ');
            write_term(out, instantiation, d);
            let _ = write!(out, " {param} ");
            write_term(out, domain, d);
            let _ = write!(out, " {dom_fx} {range_fx} ");
            write_term(out, body, d);
            out.push(')');
        }
    }
}

fn write_value(out: &mut String, value: &SourceValue, d: usize) {
    match value {
        SourceValue::Tuple(entries) => {
            out.push_str("(table");
            for (ix, var) in entries {
                let _ = write!(out, " ({ix} {var})");
            }
            out.push(')');
        }
        SourceValue::Fun(fun) => write_fun(out, fun, d),
        SourceValue::Ptr { ty, init } => {
            out.push_str("(new ");
            write_term(out, ty, d);
            let _ = write!(out, " {init})");
        }
    }
}
