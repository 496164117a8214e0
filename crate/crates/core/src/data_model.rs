//! Domain values: information sources, source combinations, fear levels and
//! demographic strata.
//!
//! A respondent may report any subset of the eight named sources, or "None of
//! the above" alone. A [`SourceCombo`] stores that answer as an 8-bit mask over
//! the named sources; mask 0 is the "None of the above" answer, so the combo
//! space has exactly 256 members.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of distinct source combinations.
pub const COMBO_COUNT: usize = 256;

/// One of the nine answer options of the information-source question.
///
/// Declaration order is the questionnaire order and doubles as the stable
/// integer code (1..=9).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Singleton {
    Doctors,
    Scientists,
    Cdc,
    Government,
    Politicians,
    Journalists,
    FriendsFamily,
    ReligiousLeaders,
    NoneOfTheAbove,
}

impl Singleton {
    pub const ALL: [Singleton; 9] = [
        Singleton::Doctors,
        Singleton::Scientists,
        Singleton::Cdc,
        Singleton::Government,
        Singleton::Politicians,
        Singleton::Journalists,
        Singleton::FriendsFamily,
        Singleton::ReligiousLeaders,
        Singleton::NoneOfTheAbove,
    ];

    /// The eight sources that own a bit in [`SourceCombo`].
    pub const NAMED: [Singleton; 8] = [
        Singleton::Doctors,
        Singleton::Scientists,
        Singleton::Cdc,
        Singleton::Government,
        Singleton::Politicians,
        Singleton::Journalists,
        Singleton::FriendsFamily,
        Singleton::ReligiousLeaders,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Serialization code, 1..=9.
    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1..=9 => Ok(Self::ALL[code as usize - 1]),
            _ => Err(Error::domain("singleton code", code)),
        }
    }

    /// Bit position in a combo mask; `None` for [`Singleton::NoneOfTheAbove`].
    pub fn bit(self) -> Option<u8> {
        match self {
            Singleton::NoneOfTheAbove => None,
            s => Some(s as u8),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Singleton::Doctors => "Doctors",
            Singleton::Scientists => "Scientists",
            Singleton::Cdc => "CDC",
            Singleton::Government => "Government",
            Singleton::Politicians => "Politicians",
            Singleton::Journalists => "Journalists",
            Singleton::FriendsFamily => "FriendsFamily",
            Singleton::ReligiousLeaders => "ReligiousLeaders",
            Singleton::NoneOfTheAbove => "NoneOfTheAbove",
        }
    }
}

impl fmt::Display for Singleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Singleton {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Singleton::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::domain("singleton name", s))
    }
}

/// A subset of the named sources; the empty subset is "None of the above".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceCombo(u8);

impl SourceCombo {
    pub const NONE: SourceCombo = SourceCombo(0);

    pub fn from_mask(mask: u8) -> Self {
        SourceCombo(mask)
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The combo consisting of exactly one answer.
    pub fn singleton(s: Singleton) -> Self {
        match s.bit() {
            Some(b) => SourceCombo(1 << b),
            None => SourceCombo::NONE,
        }
    }

    pub fn from_sources(sources: &[Singleton]) -> Result<Self> {
        let mut mask = 0u8;
        for &s in sources {
            match s.bit() {
                Some(b) => mask |= 1 << b,
                None if sources.len() == 1 => return Ok(SourceCombo::NONE),
                None => {
                    return Err(Error::domain(
                        "source combo",
                        "NoneOfTheAbove combined with named sources",
                    ))
                }
            }
        }
        Ok(SourceCombo(mask))
    }

    pub fn contains(self, s: Singleton) -> bool {
        match s.bit() {
            Some(b) => self.0 & (1 << b) != 0,
            None => self.0 == 0,
        }
    }

    /// Members in questionnaire order. Mask 0 yields `[NoneOfTheAbove]`.
    pub fn members(self) -> Vec<Singleton> {
        if self.0 == 0 {
            return vec![Singleton::NoneOfTheAbove];
        }
        Singleton::NAMED
            .into_iter()
            .filter(|s| self.contains(*s))
            .collect()
    }

    /// Number of answers in the combo (1 for mask 0).
    pub fn len(self) -> usize {
        (self.0.count_ones() as usize).max(1)
    }

    pub fn is_singleton(self) -> bool {
        self.len() == 1
    }
}

impl fmt::Display for SourceCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.members().iter().map(|s| s.name()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

pub fn combo_contains(combo: SourceCombo, s: Singleton) -> bool {
    combo.contains(s)
}

/// All 256 combos in ascending mask order.
pub fn enumerate_combos() -> Vec<SourceCombo> {
    (0..=u8::MAX).map(SourceCombo).collect()
}

/// Answer to the worry question; 1 is "A great deal", 4 is "Not at all".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FearLevel {
    GreatDeal,
    Moderate,
    Little,
    NotAtAll,
}

impl FearLevel {
    pub const ALL: [FearLevel; 4] = [
        FearLevel::GreatDeal,
        FearLevel::Moderate,
        FearLevel::Little,
        FearLevel::NotAtAll,
    ];

    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1..=4 => Ok(Self::ALL[code as usize - 1]),
            _ => Err(Error::domain("fear level", code)),
        }
    }

    /// The level mirrored around the midpoint (1 <-> 4, 2 <-> 3).
    pub fn reversed(self) -> Self {
        Self::ALL[3 - self.index()]
    }
}

/// Per-level weights of the fear score. The defaults are the only values
/// used by the pipeline unless a caller overrides them explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FearWeights(pub [f64; 4]);

impl FearWeights {
    pub const DEFAULT: FearWeights = FearWeights([1.0, 0.34, -0.34, -1.0]);

    pub fn weight(&self, level: FearLevel) -> f64 {
        self.0[level.index()]
    }
}

impl Default for FearWeights {
    fn default() -> Self {
        FearWeights::DEFAULT
    }
}

pub fn fear_weight(level: FearLevel) -> f64 {
    FearWeights::DEFAULT.weight(level)
}

/// [`fear_weight`] for a raw integer code.
pub fn fear_weight_code(code: u8) -> Result<f64> {
    FearLevel::from_code(code).map(fear_weight)
}

macro_rules! demographic_group {
    ($name:ident, $what:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "u8", into = "u8")]
        pub struct $name(u8);

        impl $name {
            pub const ALL: [$name; 3] = [$name(1), $name(2), $name(3)];

            pub fn new(code: u8) -> Result<Self> {
                match code {
                    1..=3 => Ok($name(code)),
                    _ => Err(Error::domain($what, code)),
                }
            }

            pub fn code(self) -> u8 {
                self.0
            }

            pub fn index(self) -> usize {
                self.0 as usize - 1
            }
        }

        impl TryFrom<u8> for $name {
            type Error = Error;

            fn try_from(code: u8) -> Result<Self> {
                $name::new(code)
            }
        }

        impl From<$name> for u8 {
            fn from(g: $name) -> u8 {
                g.0
            }
        }
    };
}

demographic_group!(AgeGroup, "age group");
demographic_group!(EduGroup, "education group");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DemographicCell {
    pub age: AgeGroup,
    pub education: EduGroup,
}

/// How respondents are pooled before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    #[serde(rename = "age")]
    ByAge,
    #[serde(rename = "edu")]
    ByEducation,
    #[serde(rename = "none")]
    Ungrouped,
}

impl Grouping {
    pub const ALL: [Grouping; 3] = [Grouping::Ungrouped, Grouping::ByAge, Grouping::ByEducation];

    pub fn strata(self) -> Vec<Stratum> {
        match self {
            Grouping::ByAge => AgeGroup::ALL.into_iter().map(Stratum::Age).collect(),
            Grouping::ByEducation => EduGroup::ALL.into_iter().map(Stratum::Education).collect(),
            Grouping::Ungrouped => vec![Stratum::All],
        }
    }

    pub fn stratum_of(self, cell: DemographicCell) -> Stratum {
        match self {
            Grouping::ByAge => Stratum::Age(cell.age),
            Grouping::ByEducation => Stratum::Education(cell.education),
            Grouping::Ungrouped => Stratum::All,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Grouping::ByAge => "age",
            Grouping::ByEducation => "edu",
            Grouping::Ungrouped => "none",
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "age" => Ok(Grouping::ByAge),
            "edu" | "education" => Ok(Grouping::ByEducation),
            "none" | "all" => Ok(Grouping::Ungrouped),
            other => Err(Error::domain("grouping", other)),
        }
    }
}

/// One pool of respondents under a [`Grouping`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stratum {
    All,
    Age(AgeGroup),
    Education(EduGroup),
}

impl Stratum {
    pub fn label(self) -> String {
        match self {
            Stratum::All => "all".to_string(),
            Stratum::Age(a) => format!("age{}", a.code()),
            Stratum::Education(e) => format!("edu{}", e.code()),
        }
    }

    pub fn grouping(self) -> Grouping {
        match self {
            Stratum::All => Grouping::Ungrouped,
            Stratum::Age(_) => Grouping::ByAge,
            Stratum::Education(_) => Grouping::ByEducation,
        }
    }
}

impl Serialize for Stratum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// One value per [`Singleton`], indexed in questionnaire order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerSingleton<T>(pub [T; 9]);

impl<T> PerSingleton<T> {
    pub fn from_fn(mut f: impl FnMut(Singleton) -> T) -> Self {
        PerSingleton(std::array::from_fn(|i| f(Singleton::ALL[i])))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Singleton, &T)> {
        Singleton::ALL.into_iter().zip(self.0.iter())
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerSingleton<U> {
        PerSingleton(std::array::from_fn(|i| f(&self.0[i])))
    }
}

impl<T: Default> Default for PerSingleton<T> {
    fn default() -> Self {
        PerSingleton(std::array::from_fn(|_| T::default()))
    }
}

impl<T> Index<Singleton> for PerSingleton<T> {
    type Output = T;

    fn index(&self, s: Singleton) -> &T {
        &self.0[s.index()]
    }
}

impl<T> IndexMut<Singleton> for PerSingleton<T> {
    fn index_mut(&mut self, s: Singleton) -> &mut T {
        &mut self.0[s.index()]
    }
}
