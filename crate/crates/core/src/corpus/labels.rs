//! Event and context label inventories.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A closed label inventory with a fixed class order.
///
/// Class order matters: classifiers index their outputs by it and argmax ties
/// resolve to the lowest index.
pub trait Label: Copy + Eq + fmt::Debug + 'static {
    const ALL: &'static [Self];
    /// Name of the dimension this label belongs to, as used in standoff files.
    const DIMENSION: &'static str;

    fn name(self) -> &'static str;

    fn index(self) -> usize {
        Self::ALL
            .iter()
            .position(|&l| l == self)
            .expect("label is a member of its own inventory")
    }

    fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|l| l.name() == s)
    }
}

macro_rules! label_enum {
    ($(#[$m:meta])* $name:ident, $dim:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl Label for $name {
            const ALL: &'static [Self] = &[$($name::$variant),+];
            const DIMENSION: &'static str = $dim;

            fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

label_enum!(
    /// Whether a medication change is discussed for a mention.
    EventLabel, "Event", {
        Disposition => "Disposition",
        NoDisposition => "NoDisposition",
        Undetermined => "Undetermined",
    }
);

label_enum!(Action, "Action", {
    Start => "Start",
    Stop => "Stop",
    Increase => "Increase",
    Decrease => "Decrease",
    UniqueDose => "UniqueDose",
    OtherChange => "OtherChange",
    Unknown => "Unknown",
});

label_enum!(Negation, "Negation", {
    Negated => "Negated",
    NotNegated => "NotNegated",
});

label_enum!(Temporality, "Temporality", {
    Past => "Past",
    Present => "Present",
    Future => "Future",
    Unknown => "Unknown",
});

label_enum!(Certainty, "Certainty", {
    Certain => "Certain",
    Hypothetical => "Hypothetical",
    Conditional => "Conditional",
    Unknown => "Unknown",
});

label_enum!(Actor, "Actor", {
    Physician => "Physician",
    Patient => "Patient",
    Unknown => "Unknown",
});

/// The five context dimensions of a Disposition mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextAttributes {
    pub action: Action,
    pub negation: Negation,
    pub temporality: Temporality,
    pub certainty: Certainty,
    pub actor: Actor,
}

impl Default for ContextAttributes {
    /// Values assumed for dimensions a standoff file leaves unannotated.
    /// Negation has no Unknown category, so it falls back to NotNegated.
    fn default() -> Self {
        ContextAttributes {
            action: Action::Unknown,
            negation: Negation::NotNegated,
            temporality: Temporality::Unknown,
            certainty: Certainty::Unknown,
            actor: Actor::Unknown,
        }
    }
}

/// Identifies one of the five context dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    Action,
    Negation,
    Temporality,
    Certainty,
    Actor,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Action,
        Dimension::Negation,
        Dimension::Temporality,
        Dimension::Certainty,
        Dimension::Actor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Action => Action::DIMENSION,
            Dimension::Negation => Negation::DIMENSION,
            Dimension::Temporality => Temporality::DIMENSION,
            Dimension::Certainty => Certainty::DIMENSION,
            Dimension::Actor => Actor::DIMENSION,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }

    pub fn class_names(self) -> Vec<&'static str> {
        fn names<L: Label>() -> Vec<&'static str> {
            L::ALL.iter().map(|l| l.name()).collect()
        }
        match self {
            Dimension::Action => names::<Action>(),
            Dimension::Negation => names::<Negation>(),
            Dimension::Temporality => names::<Temporality>(),
            Dimension::Certainty => names::<Certainty>(),
            Dimension::Actor => names::<Actor>(),
        }
    }

    pub fn class_count(self) -> usize {
        self.class_names().len()
    }
}

impl ContextAttributes {
    /// Class index of the given dimension's value.
    pub fn get(&self, dim: Dimension) -> usize {
        match dim {
            Dimension::Action => self.action.index(),
            Dimension::Negation => self.negation.index(),
            Dimension::Temporality => self.temporality.index(),
            Dimension::Certainty => self.certainty.index(),
            Dimension::Actor => self.actor.index(),
        }
    }

    /// Sets a dimension by class index; returns false for an out-of-range index.
    pub fn set(&mut self, dim: Dimension, class: usize) -> bool {
        fn put<L: Label>(slot: &mut L, i: usize) -> bool {
            match L::from_index(i) {
                Some(l) => {
                    *slot = l;
                    true
                }
                None => false,
            }
        }
        match dim {
            Dimension::Action => put(&mut self.action, class),
            Dimension::Negation => put(&mut self.negation, class),
            Dimension::Temporality => put(&mut self.temporality, class),
            Dimension::Certainty => put(&mut self.certainty, class),
            Dimension::Actor => put(&mut self.actor, class),
        }
    }

    /// Sets a dimension from its standoff value name.
    pub fn set_named(&mut self, dim: Dimension, value: &str) -> bool {
        match dim.class_names().iter().position(|n| *n == value) {
            Some(i) => self.set(dim, i),
            None => false,
        }
    }

    pub fn value_name(&self, dim: Dimension) -> &'static str {
        dim.class_names()[self.get(dim)]
    }

    pub fn is_default(&self, dim: Dimension) -> bool {
        self.get(dim) == ContextAttributes::default().get(dim)
    }
}
