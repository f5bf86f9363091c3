use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Fault,
    CapacitorSwitch,
    LoadSwitch,
    Hif,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        ['a', 'b', 'c'][self.index()]
    }
}

/// Subset of {a, b, c}, serialized as e.g. `"ab"` (empty set as `""`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const EMPTY: PhaseSet = PhaseSet(0);

    pub fn from_phases(phases: &[Phase]) -> Self {
        PhaseSet(phases.iter().fold(0, |m, p| m | (1 << p.index())))
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Raw bit mask, a = bit 0.
    pub fn bits(self) -> u8 {
        self.0
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

impl FromStr for PhaseSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = 0u8;
        for ch in s.chars() {
            let bit = match ch.to_ascii_lowercase() {
                'a' => 0,
                'b' => 1,
                'c' => 2,
                _ => return Err(Error::invalid(format!("bad phase set `{s}`"))),
            };
            set |= 1 << bit;
        }
        Ok(PhaseSet(set))
    }
}

impl Serialize for PhaseSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PhaseSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultType {
    Ag,
    Bg,
    Cg,
    Ab,
    Bc,
    Ca,
    Abg,
    Bcg,
    Cag,
    Abcg,
}

impl FaultType {
    pub const ALL: [FaultType; 10] = [
        FaultType::Ag,
        FaultType::Bg,
        FaultType::Cg,
        FaultType::Ab,
        FaultType::Bc,
        FaultType::Ca,
        FaultType::Abg,
        FaultType::Bcg,
        FaultType::Cag,
        FaultType::Abcg,
    ];

    pub fn phases(self) -> PhaseSet {
        use Phase::*;
        let p: &[Phase] = match self {
            FaultType::Ag => &[A],
            FaultType::Bg => &[B],
            FaultType::Cg => &[C],
            FaultType::Ab | FaultType::Abg => &[A, B],
            FaultType::Bc | FaultType::Bcg => &[B, C],
            FaultType::Ca | FaultType::Cag => &[C, A],
            FaultType::Abcg => &[A, B, C],
        };
        PhaseSet::from_phases(p)
    }

    pub fn is_grounded(self) -> bool {
        !matches!(self, FaultType::Ab | FaultType::Bc | FaultType::Ca)
    }

    /// For ungrounded phase-to-phase faults, the (sending, returning) pair.
    pub(crate) fn phase_pair(self) -> Option<(Phase, Phase)> {
        match self {
            FaultType::Ab => Some((Phase::A, Phase::B)),
            FaultType::Bc => Some((Phase::B, Phase::C)),
            FaultType::Ca => Some((Phase::C, Phase::A)),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
    P8,
}

impl Position {
    pub const ALL: [Position; 8] = [
        Position::P1,
        Position::P2,
        Position::P3,
        Position::P4,
        Position::P5,
        Position::P6,
        Position::P7,
        Position::P8,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Positions on the protected line.
    pub fn is_internal(self) -> bool {
        matches!(self, Position::P4 | Position::P5)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.index() + 1)
    }
}

/// Switching location for capacitor and load events.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bus {
    Bus4,
    Bus8,
    Bus9,
}

impl Bus {
    pub const ALL: [Bus; 3] = [Bus::Bus4, Bus::Bus8, Bus::Bus9];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriorityMode {
    P,
    Q,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventLabel {
    Fault,
    NoFault,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_type: Option<FaultType>,
    pub fault_impedance_ohm: f64,
    pub onset_time_s: f64,
    /// Fault position; required for faults and HIFs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
    /// Switching bus; required for capacitor and load switching.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bus: Option<Bus>,
    /// Capacitor/load rating level, 1..=4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating_level: Option<u8>,
    /// Whether the bus-3 generator is engaged (switching scenarios).
    #[serde(default = "default_true")]
    pub infeed: bool,
    pub priority_mode: PriorityMode,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl ScenarioSpec {
    pub fn fault(fault_type: FaultType, r_f: f64, onset: f64, position: Position) -> Self {
        ScenarioSpec {
            kind: ScenarioKind::Fault,
            fault_type: Some(fault_type),
            fault_impedance_ohm: r_f,
            onset_time_s: onset,
            position: Some(position),
            bus: None,
            rating_level: None,
            infeed: true,
            priority_mode: PriorityMode::P,
            seed: 0,
        }
    }

    pub fn switching(kind: ScenarioKind, bus: Bus, rating_level: u8, onset: f64) -> Self {
        ScenarioSpec {
            kind,
            fault_type: None,
            fault_impedance_ohm: 1.0,
            onset_time_s: onset,
            position: None,
            bus: Some(bus),
            rating_level: Some(rating_level),
            infeed: true,
            priority_mode: PriorityMode::P,
            seed: 0,
        }
    }

    pub fn hif(onset: f64, position: Position, seed: u64) -> Self {
        ScenarioSpec {
            kind: ScenarioKind::Hif,
            fault_type: None,
            fault_impedance_ohm: 50.0,
            onset_time_s: onset,
            position: Some(position),
            bus: None,
            rating_level: None,
            infeed: true,
            priority_mode: PriorityMode::P,
            seed,
        }
    }

    pub fn with_mode(mut self, mode: PriorityMode) -> Self {
        self.priority_mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fault_impedance_ohm > 0.0) || !self.fault_impedance_ohm.is_finite() {
            return Err(Error::invalid(format!("fault impedance must be positive, got {}", self.fault_impedance_ohm)));
        }
        if !self.onset_time_s.is_finite() {
            return Err(Error::invalid("onset time must be finite"));
        }
        let is_fault = self.kind == ScenarioKind::Fault;
        if is_fault != self.fault_type.is_some() {
            return Err(Error::invalid("fault_type must be present exactly for fault scenarios"));
        }
        match self.kind {
            ScenarioKind::Fault | ScenarioKind::Hif => {
                if self.position.is_none() {
                    return Err(Error::invalid("fault scenarios need a position"));
                }
            }
            ScenarioKind::CapacitorSwitch | ScenarioKind::LoadSwitch => {
                if self.bus.is_none() {
                    return Err(Error::invalid("switching scenarios need a bus"));
                }
                match self.rating_level {
                    Some(1..=4) => {}
                    other => return Err(Error::invalid(format!("rating level must be 1..=4, got {other:?}"))),
                }
            }
        }
        Ok(())
    }

    pub fn label(&self) -> EventLabel {
        match self.kind {
            ScenarioKind::Fault | ScenarioKind::Hif => EventLabel::Fault,
            _ => EventLabel::NoFault,
        }
    }

    pub fn faulted_phases(&self) -> PhaseSet {
        match self.kind {
            ScenarioKind::Fault => self.fault_type.map(FaultType::phases).unwrap_or_default(),
            ScenarioKind::Hif => PhaseSet::from_phases(&[Phase::A]),
            _ => PhaseSet::EMPTY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_set_text_form() {
        let s: PhaseSet = "ca".parse().unwrap();
        assert_eq!(s.to_string(), "ac");
        assert_eq!(s.len(), 2);
        assert!("ad".parse::<PhaseSet>().is_err());
        assert_eq!(PhaseSet::EMPTY.to_string(), "");
    }

    #[test]
    fn fault_type_iff_fault_kind() {
        let mut s = ScenarioSpec::fault(FaultType::Ag, 1.0, 9.0, Position::P4);
        assert!(s.validate().is_ok());
        s.kind = ScenarioKind::CapacitorSwitch;
        assert!(s.validate().is_err());
        let mut sw = ScenarioSpec::switching(ScenarioKind::LoadSwitch, Bus::Bus4, 2, 9.0);
        assert!(sw.validate().is_ok());
        sw.fault_type = Some(FaultType::Ab);
        assert!(sw.validate().is_err());
    }

    #[test]
    fn rejects_non_positive_impedance() {
        let s = ScenarioSpec::fault(FaultType::Ag, 0.0, 9.0, Position::P4);
        assert!(s.validate().is_err());
        let s = ScenarioSpec::fault(FaultType::Ag, -1.0, 9.0, Position::P4);
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s =
            ScenarioSpec::fault(FaultType::Cag, 10.0, 9.00334, Position::P7).with_mode(PriorityMode::Q).with_seed(17);
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"cag\""));
        let back: ScenarioSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }
}
