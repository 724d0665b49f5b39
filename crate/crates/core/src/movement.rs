//! Movement taxonomy of a four-way intersection and the conflict-free pair
//! algebra that every other module consults.
//!
//! Right turns are not represented: only the eight left/cross streams can
//! conflict inside the box.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Travel direction of an approach (eastbound, westbound, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Approach {
    E,
    W,
    N,
    S,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::E, Approach::W, Approach::N, Approach::S];

    pub fn index(self) -> usize {
        match self {
            Approach::E => 0,
            Approach::W => 1,
            Approach::N => 2,
            Approach::S => 3,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Approach::E => 'E',
            Approach::W => 'W',
            Approach::N => 'N',
            Approach::S => 'S',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'E' => Some(Approach::E),
            'W' => Some(Approach::W),
            'N' => Some(Approach::N),
            'S' => Some(Approach::S),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Turn {
    /// Left turn.
    L,
    /// Crossing straight through.
    C,
}

impl Turn {
    pub fn letter(self) -> char {
        match self {
            Turn::L => 'L',
            Turn::C => 'C',
        }
    }
}

/// One of the eight conflict-prone traffic streams. Serialized as `"E-L"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MovementId {
    pub approach: Approach,
    pub turn: Turn,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MovementParseError {
    #[error("malformed movement `{0}` (expected e.g. `E-L`)")]
    Malformed(String),
    #[error("right turns are not a modelled movement: `{0}`")]
    RightTurn(String),
}

impl MovementId {
    pub const fn new(approach: Approach, turn: Turn) -> Self {
        MovementId { approach, turn }
    }

    /// Canonical ordering used for every observation vector layout.
    pub const ALL: [MovementId; 8] = [
        MovementId::new(Approach::E, Turn::L),
        MovementId::new(Approach::E, Turn::C),
        MovementId::new(Approach::W, Turn::L),
        MovementId::new(Approach::W, Turn::C),
        MovementId::new(Approach::N, Turn::L),
        MovementId::new(Approach::N, Turn::C),
        MovementId::new(Approach::S, Turn::L),
        MovementId::new(Approach::S, Turn::C),
    ];

    /// Position in [`MovementId::ALL`].
    pub fn index(self) -> usize {
        let t = match self.turn {
            Turn::L => 0,
            Turn::C => 1,
        };
        self.approach.index() * 2 + t
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for MovementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.approach.letter(), self.turn.letter())
    }
}

impl FromStr for MovementId {
    type Err = MovementParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let mut parts = t.split('-');
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a.trim(), b.trim()),
            _ => return Err(MovementParseError::Malformed(s.to_string())),
        };
        let mut ac = a.chars();
        let approach = match (ac.next(), ac.next()) {
            (Some(c), None) => Approach::from_letter(c),
            _ => None,
        }
        .ok_or_else(|| MovementParseError::Malformed(s.to_string()))?;
        let turn = match b.to_ascii_uppercase().as_str() {
            "L" => Turn::L,
            "C" => Turn::C,
            "R" => return Err(MovementParseError::RightTurn(s.to_string())),
            _ => return Err(MovementParseError::Malformed(s.to_string())),
        };
        Ok(MovementId { approach, turn })
    }
}

impl TryFrom<String> for MovementId {
    type Error = MovementParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MovementId> for String {
    fn from(m: MovementId) -> String {
        m.to_string()
    }
}

const fn m(a: Approach, t: Turn) -> MovementId {
    MovementId::new(a, t)
}

/// The eight unordered pairs that may share the box.
pub const CONFLICT_FREE_PAIRS: [(MovementId, MovementId); 8] = [
    (m(Approach::S, Turn::C), m(Approach::N, Turn::C)),
    (m(Approach::W, Turn::C), m(Approach::E, Turn::C)),
    (m(Approach::S, Turn::L), m(Approach::N, Turn::L)),
    (m(Approach::E, Turn::L), m(Approach::W, Turn::L)),
    (m(Approach::S, Turn::C), m(Approach::S, Turn::L)),
    (m(Approach::E, Turn::C), m(Approach::E, Turn::L)),
    (m(Approach::N, Turn::C), m(Approach::N, Turn::L)),
    (m(Approach::W, Turn::C), m(Approach::W, Turn::L)),
];

/// Compact set of movements (one bit per canonical index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct MovementSet(u8);

impl MovementSet {
    pub const EMPTY: MovementSet = MovementSet(0);
    pub const FULL: MovementSet = MovementSet(0xff);

    pub fn insert(&mut self, mv: MovementId) {
        self.0 |= 1 << mv.index();
    }

    pub fn contains(self, mv: MovementId) -> bool {
        self.0 & (1 << mv.index()) != 0
    }

    pub fn union(self, other: MovementSet) -> MovementSet {
        MovementSet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = MovementId> {
        MovementId::ALL.into_iter().filter(move |mv| self.contains(*mv))
    }

    /// True when no two distinct members conflict.
    pub fn is_conflict_free(self) -> bool {
        let members: Vec<MovementId> = self.iter().collect();
        members
            .iter()
            .enumerate()
            .all(|(i, a)| members[i + 1..].iter().all(|b| !conflicts(*a, *b)))
    }
}

impl FromIterator<MovementId> for MovementSet {
    fn from_iter<I: IntoIterator<Item = MovementId>>(iter: I) -> Self {
        let mut s = MovementSet::EMPTY;
        for mv in iter {
            s.insert(mv);
        }
        s
    }
}

/// Symmetric set of movement pairs allowed to occupy the box together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictFreeSet {
    // bit j of row i set <=> (i, j) in the set; kept symmetric.
    rows: [u8; 8],
}

impl ConflictFreeSet {
    pub fn standard() -> Self {
        let mut rows = [0u8; 8];
        for (a, b) in CONFLICT_FREE_PAIRS {
            rows[a.index()] |= 1 << b.index();
            rows[b.index()] |= 1 << a.index();
        }
        ConflictFreeSet { rows }
    }

    pub fn contains(&self, a: MovementId, b: MovementId) -> bool {
        self.rows[a.index()] & (1 << b.index()) != 0
    }

    /// Unordered pairs, each listed once with the lower canonical index first.
    pub fn pairs(&self) -> Vec<(MovementId, MovementId)> {
        let mut out = Vec::new();
        for a in MovementId::ALL {
            for b in MovementId::ALL {
                if a.index() < b.index() && self.contains(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

impl Default for ConflictFreeSet {
    fn default() -> Self {
        Self::standard()
    }
}

// Precomputed once; `conflicts` is on the hot path of the conflict manager.
const fn standard_rows() -> [u8; 8] {
    let mut rows = [0u8; 8];
    let mut k = 0;
    while k < CONFLICT_FREE_PAIRS.len() {
        let (a, b) = CONFLICT_FREE_PAIRS[k];
        let ai = a.approach as usize * 2 + a.turn as usize;
        let bi = b.approach as usize * 2 + b.turn as usize;
        rows[ai] |= 1 << bi;
        rows[bi] |= 1 << ai;
        k += 1;
    }
    rows
}

const STANDARD_ROWS: [u8; 8] = standard_rows();

/// Whether two movements may collide inside the box.
///
/// False iff `a == b` or the unordered pair is conflict-free.
pub fn conflicts(a: MovementId, b: MovementId) -> bool {
    a != b && STANDARD_ROWS[a.index()] & (1 << b.index()) == 0
}
