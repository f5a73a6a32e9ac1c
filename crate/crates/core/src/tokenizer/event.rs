use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minutes in a year of 365.25 days.
pub const MINUTES_PER_YEAR: f64 = 525_960.0;
/// Minutes in a day.
pub const MINUTES_PER_DAY: f64 = 1_440.0;

/// Reserved demographic code carrying the calendar year the timeline starts.
pub const START_YEAR_CODE: &str = "START_YEAR";

/// Clinical event categories. Declaration order is the tie-break order for
/// events recorded at the same age.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Diagnosis,
    Medication,
    LabResult,
    Procedure,
    Admission,
    Discharge,
    IcuAdmission,
    IcuDischarge,
    Death,
    Demographic,
    DrgAssignment,
    SofaScore,
    VitalSign,
}

impl EventKind {
    pub const ALL: [EventKind; 13] = [
        EventKind::Diagnosis,
        EventKind::Medication,
        EventKind::LabResult,
        EventKind::Procedure,
        EventKind::Admission,
        EventKind::Discharge,
        EventKind::IcuAdmission,
        EventKind::IcuDischarge,
        EventKind::Death,
        EventKind::Demographic,
        EventKind::DrgAssignment,
        EventKind::SofaScore,
        EventKind::VitalSign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::Diagnosis => "Diagnosis",
            EventKind::Medication => "Medication",
            EventKind::LabResult => "LabResult",
            EventKind::Procedure => "Procedure",
            EventKind::Admission => "Admission",
            EventKind::Discharge => "Discharge",
            EventKind::IcuAdmission => "IcuAdmission",
            EventKind::IcuDischarge => "IcuDischarge",
            EventKind::Death => "Death",
            EventKind::Demographic => "Demographic",
            EventKind::DrgAssignment => "DrgAssignment",
            EventKind::SofaScore => "SofaScore",
            EventKind::VitalSign => "VitalSign",
        }
    }

    /// Token text emitted first for every event of this kind.
    pub fn kind_token(self) -> &'static str {
        match self {
            EventKind::Diagnosis => "DX",
            EventKind::Medication => "MED",
            EventKind::LabResult => "LAB",
            EventKind::Procedure => "PROC",
            EventKind::Admission => "ADMISSION",
            EventKind::Discharge => "DISCHARGE",
            EventKind::IcuAdmission => "ICU_ADMISSION",
            EventKind::IcuDischarge => "ICU_DISCHARGE",
            EventKind::Death => "DEATH",
            EventKind::Demographic => "DEM",
            EventKind::DrgAssignment => "DRG",
            EventKind::SofaScore => "SOFA",
            EventKind::VitalSign => "VITAL",
        }
    }

    /// Kinds whose numeric value is quantile-binned.
    pub fn is_numeric(self) -> bool {
        matches!(self, EventKind::LabResult | EventKind::VitalSign | EventKind::SofaScore)
    }

    /// Stay-boundary kinds are represented by their special token alone.
    pub fn is_stay_marker(self) -> bool {
        matches!(
            self,
            EventKind::Admission
                | EventKind::Discharge
                | EventKind::IcuAdmission
                | EventKind::IcuDischarge
                | EventKind::Death
        )
    }

    /// Prefix and prefix-length ladder for the code system of this kind.
    pub(crate) fn code_system(self) -> Option<(&'static str, &'static [usize])> {
        match self {
            EventKind::Diagnosis => Some(("ICD:", &[1, 3])),
            // ATC levels 1, 3 and 5
            EventKind::Medication => Some(("ATC:", &[1, 4])),
            EventKind::Procedure => Some(("PCS:", &[1, 3])),
            EventKind::LabResult => Some(("LAB:", &[])),
            EventKind::VitalSign => Some(("VITAL:", &[])),
            EventKind::DrgAssignment => Some(("DRG:", &[])),
            EventKind::Demographic => Some(("DEM:", &[])),
            EventKind::SofaScore => None,
            _ => None,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidEvent(format!("unknown event kind {s:?}")))
    }
}

/// One raw clinical event, stamped with the patient's age in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalEvent {
    pub patient_id: String,
    /// Minutes since birth; `None` for static (demographic) events.
    pub age_minutes: Option<f64>,
    pub kind: EventKind,
    pub code: String,
    pub value: Option<f64>,
}

impl ClinicalEvent {
    pub fn timed(
        patient_id: impl Into<String>,
        age_minutes: f64,
        kind: EventKind,
        code: impl Into<String>,
        value: Option<f64>,
    ) -> Self {
        ClinicalEvent {
            patient_id: patient_id.into(),
            age_minutes: Some(age_minutes),
            kind,
            code: code.into(),
            value,
        }
    }

    pub fn demographic(patient_id: impl Into<String>, code: impl Into<String>, value: Option<f64>) -> Self {
        ClinicalEvent {
            patient_id: patient_id.into(),
            age_minutes: None,
            kind: EventKind::Demographic,
            code: code.into(),
            value,
        }
    }

    pub fn is_static(&self) -> bool {
        self.kind == EventKind::Demographic
    }

    pub fn validate(&self) -> Result<()> {
        if self.patient_id.is_empty() || self.patient_id.contains(char::is_whitespace) {
            return Err(Error::InvalidEvent(format!("bad patient id {:?}", self.patient_id)));
        }
        if self.code.contains(char::is_whitespace) {
            return Err(Error::InvalidEvent(format!("code {:?} contains whitespace", self.code)));
        }
        match (self.kind, self.age_minutes) {
            (EventKind::Demographic, _) => {}
            (kind, None) => {
                return Err(Error::InvalidEvent(format!("{kind} event without age for patient {}", self.patient_id)))
            }
            (_, Some(age)) if !age.is_finite() || age < 0.0 => {
                return Err(Error::InvalidEvent(format!("age {age} is not a nonnegative finite number")))
            }
            _ => {}
        }
        if let Some(v) = self.value {
            if !v.is_finite() {
                return Err(Error::InvalidEvent(format!("non-finite value for code {}", self.code)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in EventKind::ALL {
            assert_eq!(k.name().parse::<EventKind>().unwrap(), k);
        }
        assert!("Lab".parse::<EventKind>().is_err());
    }

    #[test]
    fn enumeration_order_is_tie_order() {
        let mut kinds = EventKind::ALL.to_vec();
        kinds.reverse();
        kinds.sort();
        assert_eq!(kinds, EventKind::ALL.to_vec());
        assert!(EventKind::Discharge < EventKind::DrgAssignment);
        assert!(EventKind::IcuAdmission < EventKind::SofaScore);
    }

    #[test]
    fn validation_requires_age_except_demographics() {
        let mut e = ClinicalEvent::timed("p1", 10.0, EventKind::LabResult, "GLU", Some(5.0));
        assert!(e.validate().is_ok());
        e.age_minutes = None;
        assert!(e.validate().is_err());
        assert!(ClinicalEvent::demographic("p1", "SEX_F", None).validate().is_ok());
        let neg = ClinicalEvent::timed("p1", -1.0, EventKind::Diagnosis, "I21", None);
        assert!(neg.validate().is_err());
    }
}
