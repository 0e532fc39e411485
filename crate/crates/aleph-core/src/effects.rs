//! The five-atom effects lattice.
//!
//! An effect is a subset of `{P, N, R, W, IO}`: partiality, pointer creation,
//! pointer dereference, pointer update, and input/output. The lattice order is
//! subset inclusion, join is union, meet is intersection, and sequencing of two
//! effects is the same as join.

use std::fmt;
use std::str::FromStr;

/// One primitive effect atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EffectAtom {
    /// Partiality (the computation may fail).
    P,
    /// Pointer creation.
    N,
    /// Pointer dereference.
    R,
    /// Pointer update.
    W,
    /// Input/output of integers.
    Io,
}

impl EffectAtom {
    pub const ALL: [EffectAtom; 5] = [
        EffectAtom::P,
        EffectAtom::N,
        EffectAtom::R,
        EffectAtom::W,
        EffectAtom::Io,
    ];

    fn bit(self) -> u8 {
        match self {
            EffectAtom::P => 1 << 0,
            EffectAtom::N => 1 << 1,
            EffectAtom::R => 1 << 2,
            EffectAtom::W => 1 << 3,
            EffectAtom::Io => 1 << 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EffectAtom::P => "P",
            EffectAtom::N => "N",
            EffectAtom::R => "R",
            EffectAtom::W => "W",
            EffectAtom::Io => "IO",
        }
    }
}

/// A set of effect atoms, stored as a 5-bit set.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Effect(u8);

impl Effect {
    /// The bottom element of the lattice (the empty set), written `T`.
    pub const NONE: Effect = Effect(0);
    /// The top element of the lattice (all five atoms), written `A`.
    pub const ALL: Effect = Effect(0b11111);
    /// The reversible effects `{P, N, R, W}`, written `RV`.
    pub const REVERSIBLE: Effect = Effect(0b01111);

    pub fn from_atoms(atoms: &[EffectAtom]) -> Effect {
        let mut e = Effect::NONE;
        for a in atoms {
            e = e.with(*a);
        }
        e
    }

    pub fn with(self, atom: EffectAtom) -> Effect {
        Effect(self.0 | atom.bit())
    }

    pub fn contains(self, atom: EffectAtom) -> bool {
        self.0 & atom.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Lattice order: `self` is below `other` iff it is a subset of it.
    pub fn leq(self, other: Effect) -> bool {
        self.0 & !other.0 == 0
    }

    /// Lattice join (set union).
    pub fn join(self, other: Effect) -> Effect {
        Effect(self.0 | other.0)
    }

    /// Lattice meet (set intersection).
    pub fn meet(self, other: Effect) -> Effect {
        Effect(self.0 & other.0)
    }

    /// Sequencing of two effects; the same as join.
    pub fn seq(self, other: Effect) -> Effect {
        self.join(other)
    }

    pub fn atoms(self) -> impl Iterator<Item = EffectAtom> {
        EffectAtom::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    /// All 32 effects, for exhaustive checks.
    pub fn enumerate() -> impl Iterator<Item = Effect> {
        (0u8..32).map(Effect)
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Effect::NONE {
            return write!(f, "T");
        }
        if *self == Effect::ALL {
            return write!(f, "A");
        }
        write!(f, "{{")?;
        for (i, a) in self.atoms().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", a.name())?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Error from parsing an effect literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseEffectError(pub String);

impl fmt::Display for ParseEffectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid effect literal: {}", self.0)
    }
}

impl std::error::Error for ParseEffectError {}

impl FromStr for Effect {
    type Err = ParseEffectError;

    /// Accepts `T`, `A`, or a brace-enclosed comma-separated subset such as
    /// `{P,N,R,W,IO}` (including `{}` for the empty set).
    fn from_str(s: &str) -> Result<Effect, ParseEffectError> {
        let s = s.trim();
        match s {
            "T" => return Ok(Effect::NONE),
            "A" => return Ok(Effect::ALL),
            _ => {}
        }
        let inner = s
            .strip_prefix('{')
            .and_then(|rest| rest.strip_suffix('}'))
            .ok_or_else(|| ParseEffectError(s.to_string()))?;
        let mut e = Effect::NONE;
        for part in inner.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let atom = match part {
                "P" => EffectAtom::P,
                "N" => EffectAtom::N,
                "R" => EffectAtom::R,
                "W" => EffectAtom::W,
                "IO" => EffectAtom::Io,
                _ => return Err(ParseEffectError(s.to_string())),
            };
            e = e.with(atom);
        }
        Ok(e)
    }
}
