//! Cohort records and datasets for the main study and the validation study.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubjectId(pub u64);

/// One main-study subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    pub id: SubjectId,
    /// Surrogate exposure, one entry per buffer radius.
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    /// Follow-up time `min(T⁰, C)`.
    pub time: f64,
    /// `true` when the follow-up ended with the event.
    pub event: bool,
}

/// One validation-study measurement occasion.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRecord {
    pub id: SubjectId,
    pub occasion: u32,
    /// True exposure.
    pub x: f64,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

/// Column layout shared by both studies.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Schema {
    /// Buffer radii, strictly increasing.
    pub radii: Vec<f64>,
    pub confounders: Vec<String>,
}

impl Schema {
    pub fn new(radii: Vec<f64>, confounders: Vec<String>) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::InvalidArgument("at least one radius is required".into()));
        }
        if radii.iter().any(|r| !r.is_finite()) || radii.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("radii must be finite and strictly increasing".into()));
        }
        Ok(Self { radii, confounders })
    }

    pub fn p_z(&self) -> usize {
        self.radii.len()
    }

    pub fn p_w(&self) -> usize {
        self.confounders.len()
    }

    fn check_row(&self, row: usize, z: &[f64], w: &[f64]) -> Result<()> {
        if z.len() != self.p_z() {
            return Err(Error::InvalidArgument(format!("row {row}: {} surrogates, schema has {}", z.len(), self.p_z())));
        }
        if w.len() != self.p_w() {
            return Err(Error::InvalidArgument(format!("row {row}: {} confounders, schema has {}", w.len(), self.p_w())));
        }
        if z.iter().chain(w).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("row {row}: non-finite covariate")));
        }
        Ok(())
    }
}

/// Immutable collection of records conforming to one [`Schema`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<R> {
    schema: Schema,
    records: Vec<R>,
}

pub type MainStudy = Dataset<SurvivalRecord>;
pub type ValidationStudy = Dataset<ValidationRecord>;

impl<R> Dataset<R> {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[R] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Dataset<SurvivalRecord> {
    pub fn new(schema: Schema, records: Vec<SurvivalRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            schema.check_row(i, &r.z, &r.w)?;
            if !(r.time.is_finite() && r.time >= 0.0) {
                return Err(Error::InvalidArgument(format!("row {i}: follow-up time must be finite and non-negative")));
            }
        }
        Ok(Self { schema, records })
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }
}

impl Dataset<ValidationRecord> {
    pub fn new(schema: Schema, records: Vec<ValidationRecord>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            schema.check_row(i, &r.z, &r.w)?;
            if !r.x.is_finite() {
                return Err(Error::InvalidArgument(format!("row {i}: non-finite exposure")));
            }
            if let Some(prev) = seen.insert((r.id, r.occasion), i) {
                return Err(Error::InvalidArgument(format!(
                    "rows {prev} and {i}: duplicate occasion {} for subject {}",
                    r.occasion, r.id.0
                )));
            }
        }
        Ok(Self { schema, records })
    }

    /// Record indices grouped by subject, subjects in ascending id order,
    /// occasions in file order.
    pub fn subjects(&self) -> Vec<(SubjectId, Vec<usize>)> {
        let mut groups: BTreeMap<SubjectId, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            groups.entry(r.id).or_default().push(i);
        }
        groups.into_iter().collect()
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects().len()
    }

    /// Sub-study holding only the listed record indices.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self { schema: self.schema.clone(), records: rows.iter().map(|&i| self.records[i].clone()).collect() }
    }
}

/// Risk sets `{j : T_j ≥ T_i}` for every event `i`, stored as prefixes of a
/// single descending-time ordering.
#[derive(Debug, Clone)]
pub struct RiskSets {
    order: Vec<usize>,
    /// `(event record index, risk set size)`, in record order.
    events: Vec<(usize, usize)>,
}

impl RiskSets {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `(i, members)` for the `k`-th event.
    pub fn get(&self, k: usize) -> (usize, &[usize]) {
        let (i, size) = self.events[k];
        (i, &self.order[..size])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[usize])> + '_ {
        (0..self.len()).map(move |k| self.get(k))
    }
}

/// Ties between an event and a censoring time keep the censored subject in
/// the risk set.
pub fn risk_set_indices(times: &[f64], events: &[bool]) -> RiskSets {
    assert_eq!(times.len(), events.len());
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]).then(a.cmp(&b)));
    // size[pos] = number of subjects with time >= time of order[pos]
    let mut size = alloc::vec![0; order.len()];
    let mut end = 0;
    for pos in 0..order.len() {
        if pos >= end {
            end = pos;
            while end < order.len() && times[order[end]] == times[order[pos]] {
                end += 1;
            }
        }
        size[pos] = end;
    }
    let mut at = alloc::vec![0; order.len()];
    for (pos, &i) in order.iter().enumerate() {
        at[i] = size[pos];
    }
    let events = (0..times.len()).filter(|&i| events[i]).map(|i| (i, at[i])).collect();
    RiskSets { order, events }
}
