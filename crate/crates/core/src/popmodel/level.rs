use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Token used for the below-detection-limit mediator level in every file format.
pub const UNDETECTABLE_TOKEN: &str = "neg";

/// A discrete mediator (antibody) level.
///
/// `Undetectable` orders strictly below every detectable level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MediatorLevel {
    Undetectable,
    Detectable(u32),
}

impl MediatorLevel {
    pub fn is_detectable(self) -> bool {
        matches!(self, MediatorLevel::Detectable(_))
    }
}

impl fmt::Display for MediatorLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MediatorLevel::Undetectable => f.write_str(UNDETECTABLE_TOKEN),
            MediatorLevel::Detectable(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid mediator level {0:?}: expected \"neg\" or a non-negative integer")]
pub struct ParseLevelError(pub String);

impl FromStr for MediatorLevel {
    type Err = ParseLevelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case(UNDETECTABLE_TOKEN) {
            return Ok(MediatorLevel::Undetectable);
        }
        t.parse::<u32>()
            .map(MediatorLevel::Detectable)
            .map_err(|_| ParseLevelError(s.to_string()))
    }
}

impl Serialize for MediatorLevel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MediatorLevel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct LevelVisitor;

        impl Visitor<'_> for LevelVisitor {
            type Value = MediatorLevel;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"neg\" or a non-negative integer level")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                u32::try_from(v)
                    .map(MediatorLevel::Detectable)
                    .map_err(|_| E::custom(format!("mediator level {v} out of range")))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                if v < 0 {
                    return Err(E::custom(format!("negative mediator level {v}")));
                }
                self.visit_u64(v as u64)
            }
        }

        deserializer.deserialize_any(LevelVisitor)
    }
}

/// Randomized arm. `Immunization` is passive immunization with an assigned mediator level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arm {
    Placebo,
    Vaccine,
    Immunization,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Placebo, Arm::Vaccine, Arm::Immunization];

    pub fn index(self) -> u8 {
        match self {
            Arm::Placebo => 0,
            Arm::Vaccine => 1,
            Arm::Immunization => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arm::Placebo => "placebo",
            Arm::Vaccine => "vaccine",
            Arm::Immunization => "immunization",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid arm {0:?}: expected placebo|vaccine|immunization (or 0|1|2)")]
pub struct ParseArmError(pub String);

impl FromStr for Arm {
    type Err = ParseArmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "placebo" | "p" | "0" => Ok(Arm::Placebo),
            "vaccine" | "v" | "1" => Ok(Arm::Vaccine),
            "immunization" | "i" | "2" => Ok(Arm::Immunization),
            _ => Err(ParseArmError(s.to_string())),
        }
    }
}

impl Serialize for Arm {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Arm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Arm whose natural mediator is read in a cross-world expectation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MediatorArm {
    Placebo,
    Vaccine,
}
