//! Temporal knowledge graph data model.
//!
//! Labels are interned into dense ids. Time is a discrete, linearly ordered
//! axis: a [`TimeId`] is the rank of a timestamp value among all distinct
//! values observed in the dataset, so id order is chronological order.

mod graph;
mod intern;
mod load;
mod time;

use std::fmt;

pub use graph::{strip_temporal, GraphBuilder, GraphError, StaticSplits, TemporalGraph};
pub use intern::Vocab;
pub use load::{
    load_dataset, write_dataset, DatasetFormat, LoadError, LoadOptions, LoadReport, SPLIT_FILES,
};
pub use time::{ParsedTime, TimeAxis, TimeKind};

macro_rules! dense_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }

            #[inline]
            pub fn from_index(i: usize) -> Self {
                Self(u32::try_from(i).expect("id overflow"))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

dense_id!(
    /// Interned entity label.
    EntityId
);
dense_id!(
    /// Interned predicate label.
    PredicateId
);
dense_id!(
    /// Position on the dataset's ordered time axis.
    TimeId
);

/// Valid-time fact `(s, p, o, b, e)` with `b <= e`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quintuple {
    pub s: EntityId,
    pub p: PredicateId,
    pub o: EntityId,
    pub b: TimeId,
    pub e: TimeId,
}

impl Quintuple {
    pub fn new(s: EntityId, p: PredicateId, o: EntityId, b: TimeId, e: TimeId) -> Self {
        debug_assert!(b <= e, "quintuple with end before begin");
        Self { s, p, o, b, e }
    }

    #[inline]
    pub fn valid_at(&self, t: TimeId) -> bool {
        self.b <= t && t <= self.e
    }

    pub fn triple(&self) -> StaticTriple {
        StaticTriple {
            s: self.s,
            p: self.p,
            o: self.o,
        }
    }

    /// The event form of a fact that holds at a single timestamp.
    pub fn as_quadruple(&self) -> Option<Quadruple> {
        (self.b == self.e).then_some(Quadruple {
            s: self.s,
            p: self.p,
            o: self.o,
            h: self.b,
        })
    }
}

/// Event fact `(s, p, o, h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quadruple {
    pub s: EntityId,
    pub p: PredicateId,
    pub o: EntityId,
    pub h: TimeId,
}

/// Converts an event into a valid-time fact holding only at its timestamp.
pub fn to_valid_time(q: Quadruple) -> Quintuple {
    Quintuple::new(q.s, q.p, q.o, q.h, q.h)
}

/// Atemporal `(s, p, o)` triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StaticTriple {
    pub s: EntityId,
    pub p: PredicateId,
    pub o: EntityId,
}

impl StaticTriple {
    pub fn new(s: EntityId, p: PredicateId, o: EntityId) -> Self {
        Self { s, p, o }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
