//! The eight coarse-level urban sound classes.

use serde::{Deserialize, Serialize};

pub const NUM_CLASSES: usize = 8;

/// Multi-hot label vector over the coarse classes.
pub type LabelVector = [bool; NUM_CLASSES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseClass {
    Engine,
    MachineryImpact,
    NonMachineryImpact,
    PoweredSaw,
    AlertSignal,
    Music,
    HumanVoice,
    Dog,
}

impl CoarseClass {
    pub const ALL: [CoarseClass; NUM_CLASSES] = [
        CoarseClass::Engine,
        CoarseClass::MachineryImpact,
        CoarseClass::NonMachineryImpact,
        CoarseClass::PoweredSaw,
        CoarseClass::AlertSignal,
        CoarseClass::Music,
        CoarseClass::HumanVoice,
        CoarseClass::Dog,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Column name used in manifest and prediction CSV files.
    pub fn column_name(self) -> &'static str {
        match self {
            CoarseClass::Engine => "engine",
            CoarseClass::MachineryImpact => "machinery_impact",
            CoarseClass::NonMachineryImpact => "non_machinery_impact",
            CoarseClass::PoweredSaw => "powered_saw",
            CoarseClass::AlertSignal => "alert_signal",
            CoarseClass::Music => "music",
            CoarseClass::HumanVoice => "human_voice",
            CoarseClass::Dog => "dog",
        }
    }

    /// Short label used in human-readable reports.
    pub fn abbreviation(self) -> &'static str {
        match self {
            CoarseClass::Engine => "Engine",
            CoarseClass::MachineryImpact => "M/C",
            CoarseClass::NonMachineryImpact => "Non-M/C",
            CoarseClass::PoweredSaw => "Saw",
            CoarseClass::AlertSignal => "Alert",
            CoarseClass::Music => "Music",
            CoarseClass::HumanVoice => "Human",
            CoarseClass::Dog => "Dog",
        }
    }
}

pub fn column_names() -> [&'static str; NUM_CLASSES] {
    CoarseClass::ALL.map(CoarseClass::column_name)
}
