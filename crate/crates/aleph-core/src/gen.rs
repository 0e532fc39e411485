//! Seeded random generation of well-formed source terms and closed programs,
//! used by the property suites (round-tripping, determinism, step invariants,
//! effect gating).

use num_bigint::BigInt;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::sync::Arc;

use crate::effects::Effect;
use crate::syntax::{
    build, BinaryOp, CompareOp, Decidability, DomainKind, SourceValue, TableEntry, Term, TermRef,
    UnaryOp, Var,
};

const VAR_POOL: &[&str] = &["x", "y", "z", "a", "b", "c", "k", "m"];
const FREE_POOL: &[&str] = &["u0", "u1", "u2"];

/// A random well-formed source term; may be open. Every source constructor is
/// reachable, so these exercise the full grammar.
pub fn term(seed: u64, max_depth: usize) -> TermRef {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut scope = Vec::new();
    gen_term(&mut rng, max_depth, &mut scope, false)
}

/// A random closed program. Any outcome (termination, failure, error, budget
/// exhaustion) is acceptable; the point is exercising the machine.
pub fn program(seed: u64) -> TermRef {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut scope = Vec::new();
    gen_term(&mut rng, 4, &mut scope, true)
}

/// A random closed program that attempts IO inside a conditional's condition
/// or inside the domain check of an invariant function (whose domain effects
/// are reversible), so the IO attempt must surface as a gating error rather
/// than an input or output action.
pub fn io_condition_program(seed: u64) -> TermRef {
    let mut rng = StdRng::seed_from_u64(seed);
    let io_term: TermRef = if rng.gen_bool(0.5) {
        build::input()
    } else {
        build::out(build::int(rng.gen_range(0..50)))
    };
    let filler = build::int(rng.gen_range(0..20));
    match rng.gen_range(0..4) {
        // IO directly as the condition.
        0 => build::if_("c", io_term, build::table(vec![]), build::table(vec![])),
        // IO buried under evaluation contexts inside the condition.
        1 => build::if_(
            "c",
            build::let_("q", build::bop(BinaryOp::Add, io_term, filler), build::var("q")),
            build::table(vec![]),
            build::table(vec![]),
        ),
        // IO inside the domain term of an invariant function, checked on a
        // failing application; the domain effects stay reversible.
        2 => build::app_fail(
            build::lambda(
                "p",
                build::let_("q", io_term, build::ints()),
                DomainKind::Invariant,
                Effect::REVERSIBLE,
                Effect::NONE,
                build::table(vec![]),
            ),
            filler,
        ),
        // IO inside a unify pattern tested during a domain check.
        _ => build::app_fail(
            build::lambda(
                "p",
                build::unify(build::ints(), io_term),
                DomainKind::Invariant,
                Effect::REVERSIBLE,
                Effect::NONE,
                build::table(vec![]),
            ),
            filler,
        ),
    }
}

fn small_int(rng: &mut StdRng) -> TermRef {
    build::int(rng.gen_range(-9..10))
}

fn choose_effect(rng: &mut StdRng) -> Effect {
    match rng.gen_range(0..5) {
        0 => Effect::NONE,
        1 => Effect::from_atoms(&[crate::effects::EffectAtom::P]),
        2 => Effect::from_atoms(&[
            crate::effects::EffectAtom::N,
            crate::effects::EffectAtom::R,
            crate::effects::EffectAtom::W,
        ]),
        3 => Effect::REVERSIBLE,
        _ => Effect::ALL,
    }
}

fn choose_decidability(rng: &mut StdRng) -> Decidability {
    match rng.gen_range(0..3) {
        0 => Decidability::Inhabited,
        1 => Decidability::Uninhabited,
        _ => Decidability::Unknown,
    }
}

fn binder_name(rng: &mut StdRng) -> Var {
    Var::new(VAR_POOL[rng.gen_range(0..VAR_POOL.len())])
}

fn leaf(rng: &mut StdRng, scope: &[Var], closed: bool) -> TermRef {
    let use_var = !scope.is_empty() && rng.gen_bool(0.4);
    if use_var {
        return Arc::new(Term::Var(scope[rng.gen_range(0..scope.len())].clone()));
    }
    if !closed && rng.gen_bool(0.1) {
        return build::var(FREE_POOL[rng.gen_range(0..FREE_POOL.len())]);
    }
    match rng.gen_range(0..12) {
        0..=5 => small_int(rng),
        6 => build::falses(),
        7 => build::ints(),
        8 => build::tabs(),
        9 => build::funs(),
        10 => build::anys(),
        _ => build::input(),
    }
}

fn gen_value(rng: &mut StdRng, depth: usize, scope: &mut Vec<Var>, closed: bool) -> SourceValue {
    let have_vars = !scope.is_empty();
    match rng.gen_range(0..3) {
        0 if have_vars => {
            let n = rng.gen_range(0..3usize);
            let mut entries = Vec::new();
            for i in 0..n {
                let var = scope[rng.gen_range(0..scope.len())].clone();
                entries.push((BigInt::from(i), var));
            }
            SourceValue::Tuple(entries)
        }
        1 if have_vars => SourceValue::Ptr {
            ty: gen_term(rng, depth.saturating_sub(1), scope, closed),
            init: scope[rng.gen_range(0..scope.len())].clone(),
        },
        _ => {
            let param = binder_name(rng);
            let domain = gen_term(rng, depth.saturating_sub(1), scope, closed);
            scope.push(param.clone());
            let body = gen_term(rng, depth.saturating_sub(1), scope, closed);
            scope.pop();
            // Other domain kinds would make the whole letrec erroneous, which
            // is still a legal program; keep them rare.
            let dk = if rng.gen_bool(0.9) {
                if rng.gen_bool(0.5) {
                    DomainKind::Contravariant
                } else {
                    DomainKind::Invariant
                }
            } else {
                DomainKind::AtLeast
            };
            SourceValue::Fun(Arc::new(crate::syntax::Fun::Lambda {
                param,
                domain,
                dk,
                dom_fx: choose_effect(rng),
                range_fx: choose_effect(rng),
                body,
            }))
        }
    }
}

fn gen_term(rng: &mut StdRng, depth: usize, scope: &mut Vec<Var>, closed: bool) -> TermRef {
    if depth == 0 {
        return leaf(rng, scope, closed);
    }
    let d = depth - 1;
    match rng.gen_range(0..26) {
        0 | 1 => leaf(rng, scope, closed),
        2 => {
            let op = if rng.gen_bool(0.5) {
                UnaryOp::Neg
            } else {
                UnaryOp::Abs
            };
            build::uop(op, gen_term(rng, d, scope, closed))
        }
        3 => {
            let op = [
                BinaryOp::Add,
                BinaryOp::Sub,
                BinaryOp::Mul,
                BinaryOp::Div,
                BinaryOp::Mod,
            ][rng.gen_range(0..5)];
            build::bop(op, gen_term(rng, d, scope, closed), gen_term(rng, d, scope, closed))
        }
        4 => {
            let op = [
                CompareOp::Lt,
                CompareOp::Le,
                CompareOp::Gt,
                CompareOp::Ge,
                CompareOp::Ne,
            ][rng.gen_range(0..5)];
            build::cop(op, gen_term(rng, d, scope, closed), gen_term(rng, d, scope, closed))
        }
        5 => {
            let n = rng.gen_range(0..3usize);
            let base = scope.len();
            let mut entries = Vec::new();
            for i in 0..n {
                let term = gen_term(rng, d, scope, closed);
                let var = binder_name(rng);
                scope.push(var.clone());
                entries.push(TableEntry {
                    var,
                    index: BigInt::from(i),
                    term,
                });
            }
            scope.truncate(base);
            Arc::new(Term::Table(entries))
        }
        6 => {
            let len = if rng.gen_bool(0.7) {
                build::int(rng.gen_range(0..4))
            } else {
                gen_term(rng, d, scope, closed)
            };
            let var = binder_name(rng);
            scope.push(var.clone());
            let body = gen_term(rng, d, scope, closed);
            scope.pop();
            Arc::new(Term::Arr {
                len,
                var: var.clone(),
                body,
            })
        }
        7 => {
            let param = binder_name(rng);
            let domain = gen_term(rng, d, scope, closed);
            scope.push(param.clone());
            let body = gen_term(rng, d, scope, closed);
            scope.pop();
            let dk = match rng.gen_range(0..10) {
                0 => DomainKind::AtLeast,
                1 => DomainKind::AtMost,
                n if n % 2 == 0 => DomainKind::Contravariant,
                _ => DomainKind::Invariant,
            };
            Arc::new(Term::Fun(Arc::new(crate::syntax::Fun::Lambda {
                param,
                domain,
                dk,
                dom_fx: choose_effect(rng),
                range_fx: choose_effect(rng),
                body,
            })))
        }
        8 => {
            let type_var = Var::new("tv");
            let param = binder_name(rng);
            let type_domain = gen_term(rng, d, scope, closed);
            scope.push(param.clone());
            let instantiation = gen_term(rng, d, scope, closed);
            scope.pop();
            scope.push(type_var.clone());
            let domain = gen_term(rng, d, scope, closed);
            scope.push(param.clone());
            let body = gen_term(rng, d, scope, closed);
            scope.pop();
            scope.pop();
            Arc::new(Term::Fun(Arc::new(crate::syntax::Fun::AllQuant {
                type_var,
                type_domain,
                instantiation,
                param,
                domain,
                dom_fx: choose_effect(rng),
                range_fx: choose_effect(rng),
                body,
            })))
        }
        9 => build::len(gen_term(rng, d, scope, closed)),
        10 => build::app_err(gen_term(rng, d, scope, closed), gen_term(rng, d, scope, closed)),
        11 => build::app_fail(gen_term(rng, d, scope, closed), gen_term(rng, d, scope, closed)),
        12 => build::from(gen_term(rng, d, scope, closed)),
        13 => build::new_ptr(gen_term(rng, d, scope, closed), gen_term(rng, d, scope, closed)),
        14 => build::read(gen_term(rng, d, scope, closed)),
        15 => build::write(gen_term(rng, d, scope, closed), gen_term(rng, d, scope, closed)),
        16 => build::ptr_to(gen_term(rng, d, scope, closed)),
        17 => build::out(gen_term(rng, d, scope, closed)),
        18 => build::unify(gen_term(rng, d, scope, closed), gen_term(rng, d, scope, closed)),
        19 => build::join(gen_term(rng, d, scope, closed), gen_term(rng, d, scope, closed)),
        20 => {
            let var = binder_name(rng);
            let bound = gen_term(rng, d, scope, closed);
            scope.push(var.clone());
            let body = gen_term(rng, d, scope, closed);
            scope.pop();
            Arc::new(Term::Let {
                var: var.clone(),
                bound,
                body,
            })
        }
        21 => {
            let n = rng.gen_range(1..3usize);
            let names: Vec<Var> = (0..n).map(|i| Var::new(format!("r{i}"))).collect();
            let base = scope.len();
            scope.extend(names.iter().cloned());
            let binds = names
                .iter()
                .map(|name| (name.clone(), gen_value(rng, d, scope, closed)))
                .collect();
            let body = gen_term(rng, d, scope, closed);
            scope.truncate(base);
            Arc::new(Term::Letrec { binds, body })
        }
        22 => {
            let var = binder_name(rng);
            let cond = gen_term(rng, d, scope, closed);
            scope.push(var.clone());
            let then_t = gen_term(rng, d, scope, closed);
            scope.pop();
            let else_t = gen_term(rng, d, scope, closed);
            Arc::new(Term::If {
                var: var.clone(),
                cond,
                then_t,
                else_t,
            })
        }
        23 => build::stage(
            choose_effect(rng),
            choose_decidability(rng),
            gen_term(rng, d, scope, closed),
            gen_term(rng, d, scope, closed),
        ),
        24 => build::fx_then(choose_effect(rng), gen_term(rng, d, scope, closed)),
        _ => gen_term(rng, d, scope, closed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{free_vars, well_formed_program, well_formed_source};

    #[test]
    fn generated_terms_are_structurally_well_formed() {
        for seed in 0..200 {
            let t = term(seed, 4);
            assert!(
                well_formed_source(&t).is_empty(),
                "seed {seed}: {t:?}"
            );
        }
    }

    #[test]
    fn generated_programs_are_closed() {
        for seed in 0..200 {
            let p = program(seed);
            assert!(
                well_formed_program(&p).is_empty(),
                "seed {seed}: {:?} free {:?}",
                p,
                free_vars(&p)
            );
        }
    }

    #[test]
    fn io_condition_programs_are_closed() {
        for seed in 0..100 {
            let p = io_condition_program(seed);
            assert!(well_formed_program(&p).is_empty(), "seed {seed}");
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        for seed in 0..50 {
            assert_eq!(term(seed, 4), term(seed, 4));
            assert_eq!(program(seed), program(seed));
        }
    }
}
