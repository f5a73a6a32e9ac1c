//! Synthetic cohort generator standing in for gated EHR extracts.
//!
//! Each admission carries a latent severity that shifts its lab and vital
//! values. The per-ICU-stay death probability is
//! `logistic(logit(base_hazard) + coupling * (z - 0.5))`, where `z` is the
//! mean population quantile of the admission's lab values, so abnormal labs
//! before ICU admission predict ICU death.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};
use crate::rng::{derived, Rng};
use crate::tokenizer::event::{ClinicalEvent, EventKind, MINUTES_PER_DAY, MINUTES_PER_YEAR, START_YEAR_CODE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCohortConfig {
    pub n_patients: usize,
    /// Mean number of admissions per patient (at least 1).
    pub mean_admissions: f64,
    pub labs_per_admission: usize,
    /// Probability that each candidate medication order is placed.
    pub medication_rate: f64,
    /// Probability that an admission includes an ICU stay.
    pub icu_rate: f64,
    /// ICU death probability for an admission with median labs.
    pub base_icu_mortality: f64,
    /// Probability of readmission within 30 days for a median admission.
    pub readmission_hazard: f64,
    /// Log-odds shift of ICU death per unit of mean lab quantile.
    pub lab_hazard_coupling: f64,
    pub seed: u64,
}

impl Default for SyntheticCohortConfig {
    fn default() -> Self {
        SyntheticCohortConfig {
            n_patients: 1000,
            mean_admissions: 2.0,
            labs_per_admission: 6,
            medication_rate: 0.5,
            icu_rate: 0.5,
            base_icu_mortality: 0.2,
            readmission_hazard: 0.2,
            lab_hazard_coupling: 6.0,
            seed: 0,
        }
    }
}

impl SyntheticCohortConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::invalid("n_patients must be positive"));
        }
        if !(self.mean_admissions >= 1.0) || !self.mean_admissions.is_finite() {
            return Err(Error::invalid("mean_admissions must be at least 1"));
        }
        if self.labs_per_admission == 0 {
            return Err(Error::invalid("labs_per_admission must be positive"));
        }
        for (name, p) in [
            ("medication_rate", self.medication_rate),
            ("icu_rate", self.icu_rate),
            ("base_icu_mortality", self.base_icu_mortality),
            ("readmission_hazard", self.readmission_hazard),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must be a probability, got {p}")));
            }
        }
        if !self.lab_hazard_coupling.is_finite() || self.lab_hazard_coupling < 0.0 {
            return Err(Error::invalid("lab_hazard_coupling must be a nonnegative finite number"));
        }
        Ok(())
    }
}

struct LabSpec {
    code: &'static str,
    mean: f64,
    sd: f64,
}

const LABS: [LabSpec; 8] = [
    LabSpec { code: "LACTATE", mean: 1.5, sd: 0.8 },
    LabSpec { code: "CREAT", mean: 1.0, sd: 0.4 },
    LabSpec { code: "WBC", mean: 8.0, sd: 3.0 },
    LabSpec { code: "BUN", mean: 18.0, sd: 8.0 },
    LabSpec { code: "K", mean: 4.2, sd: 0.5 },
    LabSpec { code: "GLU", mean: 110.0, sd: 30.0 },
    LabSpec { code: "TROP", mean: 0.02, sd: 0.05 },
    LabSpec { code: "BILI", mean: 0.9, sd: 0.5 },
];

const VITALS: [LabSpec; 3] = [
    LabSpec { code: "HR", mean: 85.0, sd: 15.0 },
    LabSpec { code: "SBP", mean: 125.0, sd: 18.0 },
    LabSpec { code: "RR", mean: 17.0, sd: 4.0 },
];

const DIAGNOSES: [&str; 12] = [
    "I21.4", "I50.9", "J18.9", "N17.9", "A41.9", "E11.9", "I10", "J44.1", "K70.3", "C34.9", "I48.0", "N39.0",
];
const MEDICATIONS: [&str; 10] =
    ["B01AC06", "C07AB02", "C09AA05", "A10BA02", "J01CR02", "N02BE01", "C10AA05", "A02BC01", "B01AB01", "N05BA06"];
const PROCEDURES: [&str; 4] = ["0BH17EZ", "02703ZZ", "5A1955Z", "0W9G3ZZ"];
const DRGS: [&str; 6] = ["870", "871", "291", "190", "392", "683"];

/// Code lists with several leaf codes under each seed code, so the vocabulary
/// has a realistic hierarchy and the output head a real ranking problem.
struct Catalog {
    diagnoses: Vec<String>,
    medications: Vec<String>,
    procedures: Vec<String>,
    drgs: Vec<String>,
}

impl Catalog {
    fn new() -> Self {
        let diagnoses = DIAGNOSES.iter().flat_map(|c| (0..8).map(move |k| format!("{}.{k}", &c[..3]))).collect();
        let medications = MEDICATIONS.iter().flat_map(|c| (1..=6).map(move |k| format!("{}{k:02}", &c[..5]))).collect();
        let procedures = PROCEDURES.iter().flat_map(|c| ['Z', '0', '1', '2'].map(|k| format!("{}{k}", &c[..6]))).collect();
        let drgs = DRGS
            .iter()
            .flat_map(|c| {
                let base: u32 = c.parse().expect("numeric DRG");
                (0..4).map(move |k| (base + k).to_string())
            })
            .collect();
        Catalog { diagnoses, medications, procedures, drgs }
    }
}

/// Weight of severity in a standardized lab value and of the noise term.
const SEVERITY_LOADING: f64 = 3.0;
const LAB_NOISE: f64 = 0.5;
/// Chance that a diagnosis is one of the patient's chronic conditions.
const CONDITION_RECURRENCE: f64 = 0.8;
/// Chance that a medication, or the DRG, follows from the diagnoses.
const LINK_FIDELITY: f64 = 0.85;

/// Standard deviation of the standardized measurement over the population,
/// with severity `0.6 * U + 0.4 * U'` for independent uniforms.
fn marginal_sd() -> f64 {
    let severity_var = (0.36 + 0.16) / 12.0;
    (SEVERITY_LOADING * SEVERITY_LOADING * severity_var + LAB_NOISE * LAB_NOISE).sqrt()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// ICU death probability for a mean lab quantile `z` in [0, 1].
pub fn icu_death_probability(base_hazard: f64, coupling: f64, z: f64) -> f64 {
    if base_hazard <= 0.0 {
        return 0.0;
    }
    if base_hazard >= 1.0 {
        return 1.0;
    }
    let logit = (base_hazard / (1.0 - base_hazard)).ln();
    logistic(logit + coupling * (z - 0.5))
}

struct PatientGen<'a> {
    cfg: &'a SyntheticCohortConfig,
    catalog: &'a Catalog,
    id: String,
    rng: Rng,
    events: Vec<ClinicalEvent>,
    std_normal: StdNormal,
    /// Chronic conditions (diagnosis indices) that recur across stays.
    conditions: Vec<usize>,
}

impl<'a> PatientGen<'a> {
    fn push(&mut self, age: f64, kind: EventKind, code: &str, value: Option<f64>) {
        self.events.push(ClinicalEvent::timed(self.id.clone(), age, kind, code, value));
    }

    fn pick<'b>(&mut self, items: &'b [String]) -> &'b str {
        &items[self.rng.gen_range(0..items.len())]
    }

    /// A medication indicated by one of the stay's diagnoses, or a random one.
    fn indicated_medication(&mut self, dx: &[usize]) -> &'a str {
        let meds = &self.catalog.medications;
        if self.rng.gen::<f64>() < LINK_FIDELITY {
            let d = dx[self.rng.gen_range(0..dx.len())];
            let k = if self.rng.gen::<bool>() { d * 7 } else { d * 7 + 3 };
            &meds[k % meds.len()]
        } else {
            &meds[self.rng.gen_range(0..meds.len())]
        }
    }

    fn minutes(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi).round()
    }

    /// Standardized value of a measurement for a given severity; returns the
    /// value and its population quantile.
    fn measurement(&mut self, spec: &LabSpec, severity: f64) -> (f64, f64) {
        let noise: f64 = Normal::new(0.0, 1.0).unwrap().sample(&mut self.rng);
        let z = SEVERITY_LOADING * (severity - 0.5) + LAB_NOISE * noise;
        let quantile = self.std_normal.cdf(z / marginal_sd());
        let value = (spec.mean + spec.sd * z).max(0.0);
        (((value * 100.0).round()) / 100.0, quantile)
    }

    fn admission(&mut self, start: f64, frailty: f64) -> (f64, bool, f64) {
        let severity = (0.6 * frailty + 0.4 * self.rng.gen::<f64>()).clamp(0.0, 1.0);
        self.push(start, EventKind::Admission, "", None);
        let n_dx = self.rng.gen_range(1..=3);
        let mut dx = Vec::with_capacity(n_dx);
        for _ in 0..n_dx {
            let i = if self.rng.gen::<f64>() < CONDITION_RECURRENCE {
                self.conditions[self.rng.gen_range(0..self.conditions.len())]
            } else {
                self.rng.gen_range(0..self.catalog.diagnoses.len())
            };
            dx.push(i);
            let catalog = self.catalog;
            self.push(start, EventKind::Diagnosis, &catalog.diagnoses[i], None);
        }
        let mut t = start;
        let mut quantile_sum = 0.0;
        for i in 0..self.cfg.labs_per_admission {
            t += self.minutes(20.0, 240.0);
            let spec = &LABS[i % LABS.len()];
            let (value, q) = self.measurement(spec, severity);
            quantile_sum += q;
            self.push(t, EventKind::LabResult, spec.code, Some(value));
        }
        let z = quantile_sum / self.cfg.labs_per_admission as f64;
        for _ in 0..3 {
            if self.rng.gen::<f64>() < self.cfg.medication_rate {
                t += self.minutes(10.0, 120.0);
                let code = self.indicated_medication(&dx);
                self.push(t, EventKind::Medication, code, None);
            }
        }
        if self.rng.gen::<f64>() < 0.2 {
            t += self.minutes(60.0, 600.0);
            let procs = &self.catalog.procedures;
            self.push(t, EventKind::Procedure, &procs[dx[0] % procs.len()], None);
        }

        let mut died = false;
        if self.rng.gen::<f64>() < self.cfg.icu_rate {
            t += self.minutes(30.0, 360.0);
            self.push(t, EventKind::IcuAdmission, "", None);
            let sofa = (24.0 * severity + Normal::new(0.0, 2.0).unwrap().sample(&mut self.rng)).round().clamp(0.0, 24.0);
            self.push(t + 60.0, EventKind::SofaScore, "SOFA", Some(sofa));
            for spec in &VITALS {
                t += self.minutes(15.0, 90.0);
                let (value, _) = self.measurement(spec, severity);
                self.push(t, EventKind::VitalSign, spec.code, Some(value));
            }
            let p_death = icu_death_probability(self.cfg.base_icu_mortality, self.cfg.lab_hazard_coupling, z);
            if self.rng.gen::<f64>() < p_death {
                t += self.minutes(MINUTES_PER_DAY, 10.0 * MINUTES_PER_DAY);
                self.push(t, EventKind::Death, "", None);
                died = true;
            } else {
                t += self.minutes(MINUTES_PER_DAY, 7.0 * MINUTES_PER_DAY);
                self.push(t, EventKind::IcuDischarge, "", None);
                if self.rng.gen::<f64>() < self.cfg.medication_rate {
                    t += self.minutes(60.0, 600.0);
                    let code = self.indicated_medication(&dx);
                    self.push(t, EventKind::Medication, code, None);
                }
            }
        }
        if !died {
            t += self.minutes(MINUTES_PER_DAY, 5.0 * MINUTES_PER_DAY);
            self.push(t, EventKind::Discharge, "", None);
            let drgs = &self.catalog.drgs;
            let code = if self.rng.gen::<f64>() < LINK_FIDELITY { &drgs[dx[0] % drgs.len()] } else { self.pick(drgs) };
            self.push(t, EventKind::DrgAssignment, code, None);
        }
        (t, died, severity)
    }

    fn generate(mut self) -> Vec<ClinicalEvent> {
        let sex = if self.rng.gen::<bool>() { "SEX_F" } else { "SEX_M" };
        let year = self.rng.gen_range(2008..=2019) as f64;
        self.events.push(ClinicalEvent::demographic(self.id.clone(), sex, None));
        self.events.push(ClinicalEvent::demographic(self.id.clone(), START_YEAR_CODE, Some(year)));
        let frailty: f64 = self.rng.gen();
        let n_conditions = self.rng.gen_range(1..=2);
        self.conditions = (0..n_conditions).map(|_| self.rng.gen_range(0..self.catalog.diagnoses.len())).collect();
        let extra = Poisson::new(self.cfg.mean_admissions - 1.0)
            .map(|d| d.sample(&mut self.rng) as usize)
            .unwrap_or(0);
        let n_adm = (1 + extra).min(10);
        let mut t = (self.rng.gen_range(18.0..90.0) * MINUTES_PER_YEAR).round();
        for k in 0..n_adm {
            let (end, died, severity) = self.admission(t, frailty);
            if died {
                return self.events;
            }
            let readmit = (self.cfg.readmission_hazard * (0.5 + severity)).clamp(0.0, 1.0);
            let early = self.rng.gen::<f64>() < readmit;
            let gap = if early {
                self.minutes(MINUTES_PER_DAY, 30.0 * MINUTES_PER_DAY)
            } else {
                self.minutes(45.0 * MINUTES_PER_DAY, 720.0 * MINUTES_PER_DAY)
            };
            if k + 1 == n_adm {
                // follow-up visit makes the outcome of the last discharge observable
                let follow = if early { gap } else { gap.max(31.0 * MINUTES_PER_DAY) };
                if early {
                    self.admission(end + follow, frailty);
                } else {
                    let code = self.pick(&self.catalog.diagnoses);
                    self.push(end + follow, EventKind::Diagnosis, code, None);
                }
                return self.events;
            }
            t = end + gap;
        }
        self.events
    }
}

/// Generate one event list per patient; deterministic per seed and
/// independent of the parallel schedule.
pub fn generate_synthetic_cohort(config: &SyntheticCohortConfig) -> Result<Vec<Vec<ClinicalEvent>>> {
    config.validate()?;
    let std_normal = StdNormal::new(0.0, 1.0).expect("standard normal");
    let catalog = Catalog::new();
    Ok((0..config.n_patients)
        .into_par_iter()
        .map(|i| {
            PatientGen {
                cfg: config,
                catalog: &catalog,
                id: format!("P{:06}", i),
                rng: derived(config.seed, "synthetic-patient", i as u64),
                events: Vec::new(),
                std_normal,
                conditions: Vec::new(),
            }
            .generate()
        })
        .collect())
}
