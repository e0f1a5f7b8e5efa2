use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Fault-model label attached to an explanation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelKind {
    SkipAdd,
    SkipSub,
    SkipBranch,
    SkipLoad,
    SkipStore,
    ManipulateAdd,
    ManipulateSub,
    ManipulateBranch,
    MemoryCorruption,
    RegisterCorruption,
}

impl LabelKind {
    pub const ALL: [LabelKind; 10] = [
        LabelKind::SkipAdd,
        LabelKind::SkipSub,
        LabelKind::SkipBranch,
        LabelKind::SkipLoad,
        LabelKind::SkipStore,
        LabelKind::ManipulateAdd,
        LabelKind::ManipulateSub,
        LabelKind::ManipulateBranch,
        LabelKind::MemoryCorruption,
        LabelKind::RegisterCorruption,
    ];

    pub fn is_manipulation(self) -> bool {
        matches!(
            self,
            LabelKind::ManipulateAdd | LabelKind::ManipulateSub | LabelKind::ManipulateBranch
        )
    }

    /// Memory and register corruption cannot be told apart from the
    /// reported values alone.
    pub fn is_corruption(self) -> bool {
        matches!(self, LabelKind::MemoryCorruption | LabelKind::RegisterCorruption)
    }

    /// Whether `self` and `other` describe the same observable fault class.
    pub fn consistent_with(self, other: LabelKind) -> bool {
        self == other || (self.is_corruption() && other.is_corruption())
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for LabelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        LabelKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| format!("unknown label {s:?}"))
    }
}

/// Instruction field touched by a manipulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Opcode,
    Rd,
    Funct,
    Rs1,
    Rs2,
    Immediate,
    Mixed,
}

impl Field {
    /// Classify a flip mask against the field layout of `word`'s format.
    pub fn of_mask(word: u32, mask: u32) -> Field {
        const OPCODE: u32 = 0x7f;
        const RD: u32 = 0x1f << 7;
        const FUNCT3: u32 = 0x7 << 12;
        const RS1: u32 = 0x1f << 15;
        const RS2: u32 = 0x1f << 20;
        const HIGH: u32 = 0x7f << 25;
        let fields: &[(u32, Field)] = match word & OPCODE {
            // I-type: imm[11:0] in 31..20
            0x13 | 0x03 => &[(OPCODE, Field::Opcode), (RD, Field::Rd), (FUNCT3, Field::Funct), (RS1, Field::Rs1), (RS2 | HIGH, Field::Immediate)],
            // S/B-type: imm split around rs2
            0x23 | 0x63 => &[(OPCODE, Field::Opcode), (RD | HIGH, Field::Immediate), (FUNCT3, Field::Funct), (RS1, Field::Rs1), (RS2, Field::Rs2)],
            // U/J-type
            0x37 | 0x6f => &[(OPCODE, Field::Opcode), (RD, Field::Rd), (FUNCT3 | RS1 | RS2 | HIGH, Field::Immediate)],
            _ => &[(OPCODE, Field::Opcode), (RD, Field::Rd), (FUNCT3 | HIGH, Field::Funct), (RS1, Field::Rs1), (RS2, Field::Rs2)],
        };
        let hit: Vec<Field> = fields.iter().filter(|(m, _)| m & mask != 0).map(|&(_, f)| f).collect();
        match hit.as_slice() {
            [f] => *f,
            _ => Field::Mixed,
        }
    }
}

/// A label with the parameters that pin it down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub kind: LabelKind,
    /// Loop iteration (or unrolled position) of the fault, 1-based.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iteration: Option<u32>,
    /// Replacement value, or the manipulated instruction word.
    #[serde(skip_serializing_if = "Option::is_none", default, with = "crate::hex::option")]
    pub value: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub field: Option<Field>,
}

impl Label {
    pub fn new(kind: LabelKind) -> Self {
        Label {
            kind,
            iteration: None,
            value: None,
            field: None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        let mut parts = Vec::new();
        if let Some(i) = self.iteration {
            parts.push(format!("iteration {i}"));
        }
        if let Some(v) = self.value {
            parts.push(format!("value {v:#010x}"));
        }
        if let Some(fl) = self.field {
            parts.push(format!("{fl:?}").to_lowercase());
        }
        if !parts.is_empty() {
            write!(f, "({})", parts.join(", "))?;
        }
        Ok(())
    }
}

/// One term of an expected-label alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelPattern {
    Kind(LabelKind),
    AnyManipulation,
    AnyCorruption,
}

impl LabelPattern {
    pub fn matches(self, kind: LabelKind) -> bool {
        match self {
            LabelPattern::Kind(k) => k.consistent_with(kind),
            LabelPattern::AnyManipulation => kind.is_manipulation(),
            LabelPattern::AnyCorruption => kind.is_corruption(),
        }
    }
}

impl fmt::Display for LabelPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelPattern::Kind(k) => write!(f, "{k}"),
            LabelPattern::AnyManipulation => f.write_str("Manipulate*"),
            LabelPattern::AnyCorruption => f.write_str("Corruption*"),
        }
    }
}

impl FromStr for LabelPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Manipulate*" => Ok(LabelPattern::AnyManipulation),
            "Corruption*" => Ok(LabelPattern::AnyCorruption),
            _ => s.parse().map(LabelPattern::Kind),
        }
    }
}

impl Serialize for LabelPattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LabelPattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Whether some label set satisfies some alternative: every pattern of the
/// alternative is matched by a label in the set.
pub fn satisfies(label_sets: &[Vec<LabelKind>], alternatives: &[Vec<LabelPattern>]) -> bool {
    alternatives.iter().any(|alt| {
        label_sets
            .iter()
            .any(|set| alt.iter().all(|p| set.iter().any(|&k| p.matches(k))))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corruption_kinds_are_interchangeable() {
        assert!(LabelKind::MemoryCorruption.consistent_with(LabelKind::RegisterCorruption));
        assert!(!LabelKind::SkipAdd.consistent_with(LabelKind::SkipSub));
    }

    #[test]
    fn field_classification() {
        let addi = 0x00128293; // addi t0, t0, 1
        assert_eq!(Field::of_mask(addi, 1 << 21), Field::Immediate);
        assert_eq!(Field::of_mask(addi, 0b101 << 15), Field::Rs1);
        assert_eq!(Field::of_mask(addi, 1 << 7), Field::Rd);
        assert_eq!(Field::of_mask(addi, 1 << 2), Field::Opcode);
        assert_eq!(Field::of_mask(addi, (1 << 15) | (1 << 20)), Field::Mixed);
        let blt = 0xfe604ce3;
        assert_eq!(Field::of_mask(blt, 1 << 8), Field::Immediate);
        assert_eq!(Field::of_mask(blt, 1 << 20), Field::Rs2);
    }

    #[test]
    fn pattern_matching() {
        let sets = vec![vec![LabelKind::RegisterCorruption], vec![LabelKind::MemoryCorruption, LabelKind::SkipBranch]];
        let want = |s: &str| -> Vec<Vec<LabelPattern>> {
            s.split('|')
                .map(|alt| alt.split('+').map(|p| p.parse().unwrap()).collect())
                .collect()
        };
        assert!(satisfies(&sets, &want("Corruption*+SkipBranch")));
        assert!(satisfies(&sets, &want("MemoryCorruption")));
        assert!(satisfies(&sets, &want("SkipAdd|RegisterCorruption+SkipBranch")));
        assert!(!satisfies(&sets, &want("SkipBranch+SkipSub")));
        assert!(!satisfies(&sets, &want("Manipulate*")));
        assert_eq!("Manipulate*".parse::<LabelPattern>().unwrap().to_string(), "Manipulate*");
    }
}
