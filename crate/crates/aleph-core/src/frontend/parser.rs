//! Recursive-descent parser for the concrete syntax. Every production starts
//! with a distinct keyword, so the grammar needs no precedence. Parsing a
//! program additionally scope-checks variables and rejects open terms.

use std::collections::BTreeSet;
use std::sync::Arc;

use num_bigint::BigInt;

use crate::effects::Effect;
use crate::syntax::{
    Decidability, DomainKind, Fun, SourceValue, TableEntry, Term, TermRef, Var,
};

use super::lexer::{lex, Token, TokenKind};
use super::Diagnostic;

/// Names that cannot be used as variables.
const KEYWORDS: &[&str] = &[
    "falses", "anys", "ints", "tabs", "funs", "ptrs", "in", "out", "uop", "bop", "cop", "table",
    "arr", "fun", "funall", "len", "appe", "appf", "from", "new", "read", "write", "ptrto",
    "unify", "join", "let", "letrec", "if", "stage", "fxthen", "neg", "abs", "add", "sub", "mul",
    "div", "mod", "lt", "le", "gt", "ge", "ne", "contra", "inv", "T", "A", "F", "D", "P", "N",
    "R", "W", "IO",
];

/// Parses a single term. Structural constraints (distinct table indices) are
/// checked; variables are not scope-checked.
pub fn parse_term(src: &str) -> Result<TermRef, Vec<Diagnostic>> {
    parse(src, false)
}

/// Parses a whole program: a term that must also be closed.
pub fn parse_program(src: &str) -> Result<TermRef, Vec<Diagnostic>> {
    parse(src, true)
}

fn parse(src: &str, check_scope: bool) -> Result<TermRef, Vec<Diagnostic>> {
    let tokens = lex(src).map_err(|d| vec![d])?;
    let mut p = Parser {
        tokens,
        pos: 0,
        scope: Vec::new(),
        check_scope,
        diags: Vec::new(),
    };
    match p.term() {
        Ok(term) => {
            if let Some(tok) = p.peek() {
                let d = Diagnostic::new(tok.line, tok.col, "trailing input after the term");
                p.diags.push(d);
            }
            if p.diags.is_empty() {
                Ok(term)
            } else {
                Err(p.diags)
            }
        }
        Err(d) => {
            p.diags.push(d);
            Err(p.diags)
        }
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    scope: Vec<Var>,
    check_scope: bool,
    diags: Vec<Diagnostic>,
}

type ParseResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> ParseResult<Token> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.eof("a token"))?;
        self.pos += 1;
        Ok(tok)
    }

    fn eof(&self, wanted: &str) -> Diagnostic {
        let (line, col) = self
            .tokens
            .last()
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1));
        Diagnostic::new(line, col, format!("unexpected end of input, expected {wanted}"))
    }

    fn expect(&mut self, kind: TokenKind) -> ParseResult<Token> {
        let tok = self.next()?;
        if tok.kind == kind {
            Ok(tok)
        } else {
            Err(Diagnostic::new(
                tok.line,
                tok.col,
                format!("expected {}, found {}", kind.describe(), tok.kind.describe()),
            ))
        }
    }

    fn ident(&mut self, wanted: &str) -> ParseResult<(String, Token)> {
        let tok = self.next()?;
        match &tok.kind {
            TokenKind::Ident(s) => Ok((s.clone(), tok.clone())),
            other => Err(Diagnostic::new(
                tok.line,
                tok.col,
                format!("expected {wanted}, found {}", other.describe()),
            )),
        }
    }

    fn integer(&mut self) -> ParseResult<(BigInt, Token)> {
        let tok = self.next()?;
        match &tok.kind {
            TokenKind::Int(i) => Ok((i.clone(), tok.clone())),
            other => Err(Diagnostic::new(
                tok.line,
                tok.col,
                format!("expected an integer, found {}", other.describe()),
            )),
        }
    }

    /// A variable in binder position: any identifier that is not a keyword.
    fn binder(&mut self) -> ParseResult<Var> {
        let (name, tok) = self.ident("a variable")?;
        if KEYWORDS.contains(&name.as_str()) {
            return Err(Diagnostic::new(
                tok.line,
                tok.col,
                format!("keyword '{name}' cannot be used as a variable"),
            ));
        }
        Ok(Var::new(name))
    }

    /// A variable in occurrence position; records a diagnostic when scope
    /// checking is on and the variable is unbound.
    fn occurrence(&mut self) -> ParseResult<Var> {
        let tok = self.peek().cloned();
        let var = self.binder()?;
        if self.check_scope && !self.scope.contains(&var) {
            let tok = tok.expect("occurrence token exists");
            self.diags.push(Diagnostic::new(
                tok.line,
                tok.col,
                format!("unbound variable {var}"),
            ));
        }
        Ok(var)
    }

    fn effect(&mut self) -> ParseResult<Effect> {
        let tok = self.next()?;
        match &tok.kind {
            TokenKind::Ident(s) if s == "T" => Ok(Effect::NONE),
            TokenKind::Ident(s) if s == "A" => Ok(Effect::ALL),
            TokenKind::LBrace => {
                let mut text = String::from("{");
                loop {
                    let tok = self.next()?;
                    match &tok.kind {
                        TokenKind::RBrace => break,
                        TokenKind::Comma => text.push(','),
                        TokenKind::Ident(s) => text.push_str(s),
                        other => {
                            return Err(Diagnostic::new(
                                tok.line,
                                tok.col,
                                format!("bad effect literal: {}", other.describe()),
                            ));
                        }
                    }
                }
                text.push('}');
                text.parse::<Effect>()
                    .map_err(|e| Diagnostic::new(tok.line, tok.col, e.to_string()))
            }
            other => Err(Diagnostic::new(
                tok.line,
                tok.col,
                format!("expected an effect literal, found {}", other.describe()),
            )),
        }
    }

    fn decidability(&mut self) -> ParseResult<Decidability> {
        let (name, tok) = self.ident("a decidability (T, F, or D)")?;
        match name.as_str() {
            "T" => Ok(Decidability::Inhabited),
            "F" => Ok(Decidability::Uninhabited),
            "D" => Ok(Decidability::Unknown),
            other => Err(Diagnostic::new(
                tok.line,
                tok.col,
                format!("expected a decidability (T, F, or D), found '{other}'"),
            )),
        }
    }

    fn domain_kind(&mut self) -> ParseResult<DomainKind> {
        let (name, tok) = self.ident("a domain kind (contra, inv, ge, or le)")?;
        match name.as_str() {
            "contra" => Ok(DomainKind::Contravariant),
            "inv" => Ok(DomainKind::Invariant),
            "ge" => Ok(DomainKind::AtLeast),
            "le" => Ok(DomainKind::AtMost),
            other => Err(Diagnostic::new(
                tok.line,
                tok.col,
                format!("expected a domain kind, found '{other}'"),
            )),
        }
    }

    fn with_binding<T>(
        &mut self,
        vars: &[Var],
        f: impl FnOnce(&mut Parser) -> ParseResult<T>,
    ) -> ParseResult<T> {
        let base = self.scope.len();
        self.scope.extend(vars.iter().cloned());
        let result = f(self);
        self.scope.truncate(base);
        result
    }

    fn term(&mut self) -> ParseResult<TermRef> {
        let tok = self.next()?;
        match &tok.kind {
            TokenKind::Int(i) => Ok(Arc::new(Term::Int(i.clone()))),
            TokenKind::Ident(name) => match name.as_str() {
                "falses" => Ok(Arc::new(Term::Falses)),
                "anys" => Ok(Arc::new(Term::Anys)),
                "ints" => Ok(Arc::new(Term::Ints)),
                "tabs" => Ok(Arc::new(Term::Tabs)),
                "funs" => Ok(Arc::new(Term::Funs)),
                "ptrs" => Ok(Arc::new(Term::Ptrs)),
                "in" => Ok(Arc::new(Term::In)),
                other if KEYWORDS.contains(&other) => Err(Diagnostic::new(
                    tok.line,
                    tok.col,
                    format!("keyword '{other}' is not a term on its own"),
                )),
                _ => {
                    self.pos -= 1;
                    let var = self.occurrence()?;
                    Ok(Arc::new(Term::Var(var)))
                }
            },
            TokenKind::LParen => {
                let term = self.form()?;
                self.expect(TokenKind::RParen)?;
                Ok(term)
            }
            other => Err(Diagnostic::new(
                tok.line,
                tok.col,
                format!("expected a term, found {}", other.describe()),
            )),
        }
    }

    fn form(&mut self) -> ParseResult<TermRef> {
        let (head, tok) = self.ident("a form keyword")?;
        match head.as_str() {
            "uop" => {
                let op = self.unary_op()?;
                let t = self.term()?;
                Ok(Arc::new(Term::Uop(op, t)))
            }
            "bop" => {
                let op = self.binary_op()?;
                let a = self.term()?;
                let b = self.term()?;
                Ok(Arc::new(Term::Bop(op, a, b)))
            }
            "cop" => {
                let op = self.compare_op()?;
                let a = self.term()?;
                let b = self.term()?;
                Ok(Arc::new(Term::Cop(op, a, b)))
            }
            "table" => {
                let mut entries = Vec::new();
                let mut seen = BTreeSet::new();
                let base = self.scope.len();
                while matches!(self.peek().map(|t| &t.kind), Some(TokenKind::LParen)) {
                    self.expect(TokenKind::LParen)?;
                    let var = self.binder()?;
                    let (index, itok) = self.integer()?;
                    let term = self.term()?;
                    self.expect(TokenKind::RParen)?;
                    if !seen.insert(index.clone()) {
                        self.diags.push(Diagnostic::new(
                            itok.line,
                            itok.col,
                            format!("duplicate table index {index}"),
                        ));
                    }
                    self.scope.push(var.clone());
                    entries.push(TableEntry { var, index, term });
                }
                self.scope.truncate(base);
                Ok(Arc::new(Term::Table(entries)))
            }
            "arr" => {
                let len = self.term()?;
                let var = self.binder()?;
                let body = self.with_binding(std::slice::from_ref(&var), |p| p.term())?;
                Ok(Arc::new(Term::Arr { len, var, body }))
            }
            "fun" => Ok(Arc::new(Term::Fun(Arc::new(self.lambda()?)))),
            "funall" => Ok(Arc::new(Term::Fun(Arc::new(self.all_quant()?)))),
            "len" => Ok(Arc::new(Term::Len(self.term()?))),
            "appe" => {
                let a = self.term()?;
                let b = self.term()?;
                Ok(Arc::new(Term::AppErr(a, b)))
            }
            "appf" => {
                let a = self.term()?;
                let b = self.term()?;
                Ok(Arc::new(Term::AppFail(a, b)))
            }
            "from" => Ok(Arc::new(Term::From(self.term()?))),
            "new" => {
                let ty = self.term()?;
                let init = self.term()?;
                Ok(Arc::new(Term::New { ty, init }))
            }
            "read" => Ok(Arc::new(Term::Read(self.term()?))),
            "write" => {
                let a = self.term()?;
                let b = self.term()?;
                Ok(Arc::new(Term::Write(a, b)))
            }
            "ptrto" => Ok(Arc::new(Term::PtrTo(self.term()?))),
            "out" => Ok(Arc::new(Term::Out(self.term()?))),
            "unify" => {
                let a = self.term()?;
                let b = self.term()?;
                Ok(Arc::new(Term::Unify(a, b)))
            }
            "join" => {
                let a = self.term()?;
                let b = self.term()?;
                Ok(Arc::new(Term::Join(a, b)))
            }
            "let" => {
                let var = self.binder()?;
                let bound = self.term()?;
                let body = self.with_binding(std::slice::from_ref(&var), |p| p.term())?;
                Ok(Arc::new(Term::Let { var, bound, body }))
            }
            "letrec" => self.letrec(),
            "if" => {
                let var = self.binder()?;
                let cond = self.term()?;
                let then_t = self.with_binding(std::slice::from_ref(&var), |p| p.term())?;
                let else_t = self.term()?;
                Ok(Arc::new(Term::If {
                    var,
                    cond,
                    then_t,
                    else_t,
                }))
            }
            "stage" => {
                let fx = self.effect()?;
                let dec = self.decidability()?;
                let left = self.term()?;
                let right = self.term()?;
                Ok(Arc::new(Term::Stage {
                    fx,
                    dec,
                    left,
                    right,
                }))
            }
            "fxthen" => {
                let fx = self.effect()?;
                let body = self.term()?;
                Ok(Arc::new(Term::FxThen { fx, body }))
            }
            other => Err(Diagnostic::new(
                tok.line,
                tok.col,
                format!("unknown form '{other}'"),
            )),
        }
    }

    fn unary_op(&mut self) -> ParseResult<crate::syntax::UnaryOp> {
        use crate::syntax::UnaryOp::*;
        let (name, tok) = self.ident("a unary operator")?;
        match name.as_str() {
            "neg" => Ok(Neg),
            "abs" => Ok(Abs),
            other => Err(Diagnostic::new(
                tok.line,
                tok.col,
                format!("unknown unary operator '{other}'"),
            )),
        }
    }

    fn binary_op(&mut self) -> ParseResult<crate::syntax::BinaryOp> {
        use crate::syntax::BinaryOp::*;
        let (name, tok) = self.ident("a binary operator")?;
        match name.as_str() {
            "add" => Ok(Add),
            "sub" => Ok(Sub),
            "mul" => Ok(Mul),
            "div" => Ok(Div),
            "mod" => Ok(Mod),
            other => Err(Diagnostic::new(
                tok.line,
                tok.col,
                format!("unknown binary operator '{other}'"),
            )),
        }
    }

    fn compare_op(&mut self) -> ParseResult<crate::syntax::CompareOp> {
        use crate::syntax::CompareOp::*;
        let (name, tok) = self.ident("a comparison operator")?;
        match name.as_str() {
            "lt" => Ok(Lt),
            "le" => Ok(Le),
            "gt" => Ok(Gt),
            "ge" => Ok(Ge),
            "ne" => Ok(Ne),
            other => Err(Diagnostic::new(
                tok.line,
                tok.col,
                format!("unknown comparison operator '{other}'"),
            )),
        }
    }

    fn lambda(&mut self) -> ParseResult<Fun> {
        let param = self.binder()?;
        let domain = self.term()?;
        let dk = self.domain_kind()?;
        let dom_fx = self.effect()?;
        let range_fx = self.effect()?;
        let body = self.with_binding(std::slice::from_ref(&param), |p| p.term())?;
        Ok(Fun::Lambda {
            param,
            domain,
            dk,
            dom_fx,
            range_fx,
            body,
        })
    }

    fn all_quant(&mut self) -> ParseResult<Fun> {
        let type_var = self.binder()?;
        let type_domain = self.term()?;
        let param_peek = self.pos;
        // The instantiation term sees the parameter; the parameter name comes
        // after it in the written form, so scan ahead for it.
        let param_name = self.peek_all_quant_param(param_peek)?;
        let instantiation =
            self.with_binding(std::slice::from_ref(&param_name), |p| p.term())?;
        let param = self.binder()?;
        debug_assert_eq!(param, param_name);
        let domain = self.with_binding(std::slice::from_ref(&type_var), |p| p.term())?;
        let dom_fx = self.effect()?;
        let range_fx = self.effect()?;
        let body =
            self.with_binding(&[type_var.clone(), param.clone()], |p| p.term())?;
        Ok(Fun::AllQuant {
            type_var,
            type_domain,
            instantiation,
            param,
            domain,
            dom_fx,
            range_fx,
            body,
        })
    }

    /// Finds the parameter name of an all-quantified function without
    /// consuming tokens: it is the identifier right after the instantiation
    /// term starting at `start`.
    fn peek_all_quant_param(&self, start: usize) -> ParseResult<Var> {
        let end = self.skip_term_tokens(start)?;
        match self.tokens.get(end).map(|t| &t.kind) {
            Some(TokenKind::Ident(name)) if !KEYWORDS.contains(&name.as_str()) => {
                Ok(Var::new(name.clone()))
            }
            _ => {
                let (line, col) = self
                    .tokens
                    .get(end)
                    .map(|t| (t.line, t.col))
                    .unwrap_or((1, 1));
                Err(Diagnostic::new(line, col, "expected a parameter variable"))
            }
        }
    }

    /// Returns the token index just past one balanced term starting at `i`.
    fn skip_term_tokens(&self, i: usize) -> ParseResult<usize> {
        let tok = self
            .tokens
            .get(i)
            .ok_or_else(|| self.eof("a term"))?;
        match &tok.kind {
            TokenKind::Int(_) | TokenKind::Ident(_) => Ok(i + 1),
            TokenKind::LParen | TokenKind::LBrace => {
                let mut depth = 0usize;
                let mut j = i;
                loop {
                    let tok = self.tokens.get(j).ok_or_else(|| self.eof("')'"))?;
                    match tok.kind {
                        TokenKind::LParen | TokenKind::LBrace => depth += 1,
                        TokenKind::RParen | TokenKind::RBrace => {
                            depth -= 1;
                            if depth == 0 {
                                return Ok(j + 1);
                            }
                        }
                        _ => {}
                    }
                    j += 1;
                }
            }
            other => Err(Diagnostic::new(
                tok.line,
                tok.col,
                format!("expected a term, found {}", other.describe()),
            )),
        }
    }

    fn letrec(&mut self) -> ParseResult<TermRef> {
        self.expect(TokenKind::LParen)?;
        // Letrec binds mutually, so collect the binder names before parsing
        // any of the values.
        let binder_names = self.peek_letrec_binders()?;
        let base = self.scope.len();
        self.scope.extend(binder_names.iter().cloned());

        let mut binds = Vec::new();
        let result = (|p: &mut Parser| -> ParseResult<()> {
            while matches!(p.peek().map(|t| &t.kind), Some(TokenKind::LParen)) {
                p.expect(TokenKind::LParen)?;
                let var = p.binder()?;
                let value = p.letrec_value()?;
                p.expect(TokenKind::RParen)?;
                binds.push((var, value));
            }
            p.expect(TokenKind::RParen)?;
            Ok(())
        })(self);
        if let Err(d) = result {
            self.scope.truncate(base);
            return Err(d);
        }
        let body = self.term();
        self.scope.truncate(base);
        Ok(Arc::new(Term::Letrec {
            binds,
            body: body?,
        }))
    }

    /// Scans ahead over the binding list to collect the bound names.
    fn peek_letrec_binders(&self) -> ParseResult<Vec<Var>> {
        let mut names = Vec::new();
        let mut i = self.pos;
        loop {
            match self.tokens.get(i).map(|t| &t.kind) {
                Some(TokenKind::RParen) => return Ok(names),
                Some(TokenKind::LParen) => {
                    if let Some(TokenKind::Ident(name)) = self.tokens.get(i + 1).map(|t| &t.kind) {
                        if !KEYWORDS.contains(&name.as_str()) {
                            names.push(Var::new(name.clone()));
                        }
                    }
                    i = self.skip_term_tokens(i)?;
                }
                _ => {
                    let (line, col) = self
                        .tokens
                        .get(i)
                        .map(|t| (t.line, t.col))
                        .unwrap_or((1, 1));
                    return Err(Diagnostic::new(line, col, "expected a letrec binding"));
                }
            }
        }
    }

    fn letrec_value(&mut self) -> ParseResult<SourceValue> {
        self.expect(TokenKind::LParen)?;
        let (head, tok) = self.ident("a letrec value")?;
        let value = match head.as_str() {
            "table" => {
                let mut entries = Vec::new();
                let mut seen = BTreeSet::new();
                while matches!(self.peek().map(|t| &t.kind), Some(TokenKind::LParen)) {
                    self.expect(TokenKind::LParen)?;
                    let (index, itok) = self.integer()?;
                    let var = self.occurrence()?;
                    self.expect(TokenKind::RParen)?;
                    if !seen.insert(index.clone()) {
                        self.diags.push(Diagnostic::new(
                            itok.line,
                            itok.col,
                            format!("duplicate tuple index {index}"),
                        ));
                    }
                    entries.push((index, var));
                }
                SourceValue::Tuple(entries)
            }
            "fun" => SourceValue::Fun(Arc::new(self.lambda()?)),
            "funall" => SourceValue::Fun(Arc::new(self.all_quant()?)),
            "new" => {
                let ty = self.term()?;
                let init = self.occurrence()?;
                SourceValue::Ptr { ty, init }
            }
            other => {
                return Err(Diagnostic::new(
                    tok.line,
                    tok.col,
                    format!("'{other}' is not a letrec value"),
                ));
            }
        };
        self.expect(TokenKind::RParen)?;
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::build;
    use crate::syntax::{alpha_equal, CompareOp};

    #[test]
    fn parses_let() {
        let t = parse_term("(let x 5 x)").unwrap();
        assert!(alpha_equal(&t, &build::let_("x", build::int(5), build::var("x"))));
    }

    #[test]
    fn parses_cop() {
        let t = parse_term("(cop lt 3 5)").unwrap();
        assert!(alpha_equal(
            &t,
            &build::cop(CompareOp::Lt, build::int(3), build::int(5))
        ));
    }

    #[test]
    fn duplicate_table_index_is_positioned() {
        let errs = parse_term("(table (x 0 1) (y 0 2))").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("duplicate table index 0"));
        assert_eq!(errs[0].line, 1);
        assert_eq!(errs[0].col, 19);
    }

    #[test]
    fn open_program_is_rejected_with_position() {
        let errs = parse_program("(out x)").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("unbound variable x"));
        assert_eq!(errs[0].col, 6);
        // The same text parses fine in term mode.
        assert!(parse_term("(out x)").is_ok());
    }

    #[test]
    fn if_scope_covers_then_branch_only() {
        assert!(parse_program("(if x 5 x 7)").is_ok());
        let errs = parse_program("(if x 5 7 x)").unwrap_err();
        assert!(errs[0].message.contains("unbound variable x"));
    }

    #[test]
    fn letrec_binds_mutually_in_values_and_body() {
        let src = "(letrec ((a (table (0 b))) (b (table (0 a)))) (unify a b))";
        assert!(parse_program(src).is_ok());
        let errs = parse_program("(letrec ((a (table (0 q)))) a)").unwrap_err();
        assert!(errs[0].message.contains("unbound variable q"));
    }

    #[test]
    fn all_quant_scoping_in_parse() {
        // The parameter is visible in the instantiation term.
        assert!(parse_program("(funall tv ints p p ints T T p)").is_ok());
        // The type variable is visible in the domain and the body.
        assert!(parse_program("(funall tv ints 0 p tv T T tv)").is_ok());
        // The type variable is not visible in its own domain.
        assert!(parse_program("(funall tv tv 0 p ints T T 0)").is_err());
    }

    #[test]
    fn rejects_unknown_forms_and_arity() {
        assert!(parse_term("(bogus 1)").is_err());
        assert!(parse_term("(let x 5)").is_err());
        assert!(parse_term("(uop neg 5))").is_err());
        assert!(parse_term("(uop neg 5").is_err());
    }

    #[test]
    fn keywords_are_not_variables() {
        assert!(parse_term("(let table 5 6)").is_err());
        assert!(parse_term("(out add)").is_err());
    }

    #[test]
    fn parses_effects_and_stage() {
        let t = parse_term("(stage {P,IO} D falses (table))").unwrap();
        match &*t {
            Term::Stage { fx, dec, .. } => {
                assert_eq!(fx.to_string(), "{P,IO}");
                assert_eq!(*dec, Decidability::Unknown);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_term("(fxthen {} 5)").is_ok());
        assert!(parse_term("(fxthen {P,Q} 5)").is_err());
    }
}
