//! Shared vocabulary: treatments, covariate schemas, patient records and
//! covariate profiles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1-based network index of a treatment. Index 1 is the network reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TreatmentId(usize);

impl TreatmentId {
    pub const REFERENCE: TreatmentId = TreatmentId(1);

    /// Panics on zero; indices start at 1.
    pub fn new(index: usize) -> Self {
        assert!(index >= 1, "treatment indices start at 1");
        TreatmentId(index)
    }

    pub fn index(self) -> usize {
        self.0
    }

    /// 0-based position, for indexing arrays laid out by treatment.
    pub fn position(self) -> usize {
        self.0 - 1
    }

    pub fn is_reference(self) -> bool {
        self.0 == 1
    }
}

impl fmt::Display for TreatmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Ordered, uniquely labelled treatments of a network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TreatmentSet {
    labels: Vec<String>,
}

impl TreatmentSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::Schema("at least one treatment is required".into()));
        }
        let mut seen = BTreeSet::new();
        for label in &labels {
            if label.trim().is_empty() {
                return Err(Error::Schema("treatment labels must be non-empty".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::Schema(format!("duplicate treatment label `{label}`")));
            }
        }
        Ok(TreatmentSet { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, id: TreatmentId) -> bool {
        id.index() <= self.labels.len()
    }

    pub fn label(&self, id: TreatmentId) -> &str {
        &self.labels[id.position()]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id_of(&self, label: &str) -> Option<TreatmentId> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|p| TreatmentId(p + 1))
    }

    pub fn ids(&self) -> impl Iterator<Item = TreatmentId> + '_ {
        (1..=self.labels.len()).map(TreatmentId)
    }
}

impl TryFrom<Vec<String>> for TreatmentSet {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        TreatmentSet::new(labels)
    }
}

impl From<TreatmentSet> for Vec<String> {
    fn from(set: TreatmentSet) -> Self {
        set.labels
    }
}

/// Which end of the outcome scale is preferred. Only ranking consults this;
/// the fitted model is the same either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    HigherBetter,
    LowerBetter,
}

impl Direction {
    /// Maps an effect onto a scale where larger is always more favorable.
    pub fn orient(self, effect: f64) -> f64 {
        match self {
            Direction::HigherBetter => effect,
            Direction::LowerBetter => -effect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateKind {
    Continuous,
    /// Coded 0/1.
    Binary,
    /// Reference-level dummy coding: one indicator per non-reference level.
    Categorical { levels: Vec<String>, reference: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateDescriptor {
    pub name: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl CovariateDescriptor {
    pub fn continuous(name: impl Into<String>) -> Self {
        CovariateDescriptor {
            name: name.into(),
            kind: CovariateKind::Continuous,
            unit: None,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        CovariateDescriptor {
            name: name.into(),
            kind: CovariateKind::Binary,
            unit: None,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        levels: impl IntoIterator<Item = S>,
        reference: impl Into<String>,
    ) -> Self {
        CovariateDescriptor {
            name: name.into(),
            kind: CovariateKind::Categorical {
                levels: levels.into_iter().map(Into::into).collect(),
                reference: reference.into(),
            },
            unit: None,
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }

    /// Number of numeric columns after encoding.
    pub fn encoded_width(&self) -> usize {
        match &self.kind {
            CovariateKind::Continuous | CovariateKind::Binary => 1,
            CovariateKind::Categorical { levels, .. } => levels.len() - 1,
        }
    }

    /// Checks that `value` is legal for this covariate.
    pub fn check(&self, value: &CovariateValue) -> Result<()> {
        let reject = |message: String| Error::Profile {
            covariate: self.name.clone(),
            message,
        };
        match (&self.kind, value) {
            (CovariateKind::Continuous, CovariateValue::Number(x)) if x.is_finite() => Ok(()),
            (CovariateKind::Continuous, other) => {
                Err(reject(format!("expected a finite number, got {other}")))
            }
            (CovariateKind::Binary, CovariateValue::Number(x)) if *x == 0.0 || *x == 1.0 => Ok(()),
            (CovariateKind::Binary, other) => Err(reject(format!("expected 0 or 1, got {other}"))),
            (CovariateKind::Categorical { levels, .. }, CovariateValue::Level(level)) => {
                if levels.contains(level) {
                    Ok(())
                } else {
                    Err(reject(format!(
                        "unknown level `{level}` (expected one of: {})",
                        levels.join(", ")
                    )))
                }
            }
            (CovariateKind::Categorical { .. }, other) => {
                Err(reject(format!("expected a level name, got {other}")))
            }
        }
    }

    fn encode_into(&self, value: &CovariateValue, out: &mut Vec<f64>) -> Result<()> {
        self.check(value)?;
        match (&self.kind, value) {
            (CovariateKind::Categorical { levels, reference }, CovariateValue::Level(level)) => {
                out.extend(
                    levels
                        .iter()
                        .filter(|l| *l != reference)
                        .map(|l| if l == level { 1.0 } else { 0.0 }),
                );
            }
            (_, CovariateValue::Number(x)) => out.push(*x),
            _ => unreachable!("checked above"),
        }
        Ok(())
    }

    fn encoded_names(&self) -> Vec<String> {
        match &self.kind {
            CovariateKind::Categorical { levels, reference } => levels
                .iter()
                .filter(|l| *l != reference)
                .map(|l| format!("{}[{}]", self.name, l))
                .collect(),
            _ => vec![self.name.clone()],
        }
    }
}

/// Ordered covariate descriptors. The order fixes the encoded column order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<CovariateDescriptor>", into = "Vec<CovariateDescriptor>")]
pub struct CovariateSchema {
    covariates: Vec<CovariateDescriptor>,
}

impl CovariateSchema {
    pub fn new(covariates: Vec<CovariateDescriptor>) -> Result<Self> {
        let mut names = BTreeSet::new();
        for c in &covariates {
            if c.name.trim().is_empty() {
                return Err(Error::Schema("covariate names must be non-empty".into()));
            }
            if matches!(c.name.as_str(), "study" | "treatment" | "outcome") {
                return Err(Error::Schema(format!("covariate name `{}` is reserved", c.name)));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate covariate `{}`", c.name)));
            }
            if let CovariateKind::Categorical { levels, reference } = &c.kind {
                let distinct: BTreeSet<_> = levels.iter().collect();
                if levels.len() < 2 || distinct.len() != levels.len() {
                    return Err(Error::Schema(format!(
                        "categorical covariate `{}` needs at least 2 distinct levels",
                        c.name
                    )));
                }
                if !levels.contains(reference) {
                    return Err(Error::Schema(format!(
                        "categorical covariate `{}`: reference level `{reference}` is not among its levels",
                        c.name
                    )));
                }
            }
        }
        Ok(CovariateSchema { covariates })
    }

    pub fn empty() -> Self {
        CovariateSchema::default()
    }

    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    pub fn covariates(&self) -> &[CovariateDescriptor] {
        &self.covariates
    }

    pub fn get(&self, name: &str) -> Option<&CovariateDescriptor> {
        self.covariates.iter().find(|c| c.name == name)
    }

    /// Q*: the number of covariate columns after one-hot expansion.
    pub fn encoded_width(&self) -> usize {
        self.covariates.iter().map(|c| c.encoded_width()).sum()
    }

    /// Column names after expansion; categorical levels appear as `name[level]`.
    pub fn encoded_names(&self) -> Vec<String> {
        self.covariates
            .iter()
            .flat_map(|c| c.encoded_names())
            .collect()
    }

    /// Encodes values given in schema order.
    pub fn encode(&self, values: &[CovariateValue]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.encoded_width());
        self.encode_into(values, &mut out)?;
        Ok(out)
    }

    pub fn encode_into(&self, values: &[CovariateValue], out: &mut Vec<f64>) -> Result<()> {
        if values.len() != self.covariates.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} covariate values, got {}",
                self.covariates.len(),
                values.len()
            )));
        }
        for (descriptor, value) in self.covariates.iter().zip(values) {
            descriptor.encode_into(value, out)?;
        }
        Ok(())
    }
}

impl TryFrom<Vec<CovariateDescriptor>> for CovariateSchema {
    type Error = Error;

    fn try_from(covariates: Vec<CovariateDescriptor>) -> Result<Self> {
        CovariateSchema::new(covariates)
    }
}

impl From<CovariateSchema> for Vec<CovariateDescriptor> {
    fn from(schema: CovariateSchema) -> Self {
        schema.covariates
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariateValue {
    Number(f64),
    Level(String),
}

impl fmt::Display for CovariateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovariateValue::Number(x) => write!(f, "{x}"),
            CovariateValue::Level(s) => write!(f, "`{s}`"),
        }
    }
}

impl From<f64> for CovariateValue {
    fn from(x: f64) -> Self {
        CovariateValue::Number(x)
    }
}

impl From<&str> for CovariateValue {
    fn from(s: &str) -> Self {
        CovariateValue::Level(s.to_owned())
    }
}

/// Everything about a network that is fixed before any data is seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub treatments: TreatmentSet,
    #[serde(rename = "covariates", default)]
    pub schema: CovariateSchema,
    #[serde(default)]
    pub direction: Direction,
}

impl NetworkSpec {
    pub fn new(treatments: TreatmentSet, schema: CovariateSchema, direction: Direction) -> Self {
        NetworkSpec {
            treatments,
            schema,
            direction,
        }
    }

    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }
}

/// One patient: outcome `Y_ij` and covariates `x_ij` (schema order).
#[derive(Debug, Clone, PartialEq)]
pub struct IpdRecord {
    pub study: String,
    pub treatment: TreatmentId,
    pub outcome: f64,
    pub covariates: Vec<CovariateValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpdDataset {
    pub network: NetworkSpec,
    pub records: Vec<IpdRecord>,
    /// Records excluded at ingestion because a field was empty.
    pub incomplete_dropped: usize,
}

impl IpdDataset {
    pub fn new(network: NetworkSpec, records: Vec<IpdRecord>) -> Self {
        IpdDataset {
            network,
            records,
            incomplete_dropped: 0,
        }
    }

    /// Records grouped by study id, studies in ascending id order.
    pub fn by_study(&self) -> BTreeMap<&str, Vec<&IpdRecord>> {
        let mut out: BTreeMap<&str, Vec<&IpdRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.study.as_str()).or_default().push(r);
        }
        out
    }

    pub fn validate(&self) -> ValidationReport {
        validate_dataset(self)
    }
}

/// Named covariate values for one hypothetical patient.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CovariateProfile {
    pub values: BTreeMap<String, CovariateValue>,
}

impl CovariateProfile {
    pub fn new() -> Self {
        CovariateProfile::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<CovariateValue>) -> Self {
        self.values.insert(name.into(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&CovariateValue> {
        self.values.get(name)
    }

    /// Every covariate at zero (continuous/binary) or its reference level.
    pub fn baseline(schema: &CovariateSchema) -> Self {
        let values = schema
            .covariates()
            .iter()
            .map(|c| {
                let value = match &c.kind {
                    CovariateKind::Categorical { reference, .. } => {
                        CovariateValue::Level(reference.clone())
                    }
                    _ => CovariateValue::Number(0.0),
                };
                (c.name.clone(), value)
            })
            .collect();
        CovariateProfile { values }
    }
}

/// Encodes a profile into the Q*-vector `x` used by the interaction terms.
///
/// Unknown covariate names and missing covariates are both rejected; a
/// missing value is never read as zero.
pub fn encode_profile(profile: &CovariateProfile, schema: &CovariateSchema) -> Result<Vec<f64>> {
    if let Some(name) = profile.values.keys().find(|n| schema.get(n).is_none()) {
        return Err(Error::Profile {
            covariate: name.clone(),
            message: "not part of the model's covariate schema".into(),
        });
    }
    let values = schema
        .covariates()
        .iter()
        .map(|c| {
            profile.get(&c.name).cloned().ok_or_else(|| Error::Profile {
                covariate: c.name.clone(),
                message: "missing from profile".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    schema.encode(&values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCode {
    EmptyDataset,
    UnknownTreatment,
    NonFiniteOutcome,
    InvalidCovariate,
    SingleTreatmentStudy,
    SmallArm,
    Disconnected,
    IncompleteRecords,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub code: IssueCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has(&self, code: IssueCode) -> bool {
        self.errors.iter().chain(&self.warnings).any(|i| i.code == code)
    }

    fn error(&mut self, code: IssueCode, message: String) {
        self.errors.push(Issue { code, message });
    }

    fn warning(&mut self, code: IssueCode, message: String) {
        self.warnings.push(Issue { code, message });
    }

    /// Converts a failing report into an error.
    pub fn into_result(self) -> Result<ValidationReport> {
        if self.is_ok() {
            Ok(self)
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.errors {
            writeln!(f, "error: {}", issue.message)?;
        }
        for issue in &self.warnings {
            writeln!(f, "warning: {}", issue.message)?;
        }
        Ok(())
    }
}

/// Collects every violation of the dataset invariants. Never fails.
pub fn validate_dataset(dataset: &IpdDataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let network = &dataset.network;
    let g = network.n_treatments();

    if dataset.incomplete_dropped > 0 {
        report.warning(
            IssueCode::IncompleteRecords,
            format!(
                "{} records with missing fields were excluded (complete-case analysis)",
                dataset.incomplete_dropped
            ),
        );
    }
    if dataset.records.is_empty() {
        report.error(IssueCode::EmptyDataset, "dataset has no records".into());
        return report;
    }

    // Record-level checks, aggregated so the report size stays bounded.
    let mut unknown = BTreeMap::<usize, usize>::new();
    let mut non_finite = BTreeMap::<&str, usize>::new();
    let mut bad_covariates = BTreeMap::<(String, String), usize>::new();
    // study -> treatment -> record count
    let mut arms: BTreeMap<&str, BTreeMap<TreatmentId, usize>> = BTreeMap::new();

    for r in &dataset.records {
        if r.treatment.index() == 0 || r.treatment.index() > g {
            *unknown.entry(r.treatment.index()).or_default() += 1;
            continue;
        }
        if !r.outcome.is_finite() {
            *non_finite.entry(&r.study).or_default() += 1;
        }
        if r.covariates.len() != network.schema.len() {
            *bad_covariates
                .entry(("<record>".into(), "wrong number of covariate values".into()))
                .or_default() += 1;
        } else {
            for (d, v) in network.schema.covariates().iter().zip(&r.covariates) {
                if let Err(Error::Profile { covariate, message }) = d.check(v) {
                    *bad_covariates.entry((covariate, message)).or_default() += 1;
                }
            }
        }
        *arms.entry(&r.study).or_default().entry(r.treatment).or_default() += 1;
    }

    for (index, count) in unknown {
        report.error(
            IssueCode::UnknownTreatment,
            format!("{count} records reference treatment index {index}, outside 1..={g}"),
        );
    }
    for (study, count) in non_finite {
        report.error(
            IssueCode::NonFiniteOutcome,
            format!("study `{study}`: {count} records have a non-finite outcome"),
        );
    }
    for ((covariate, message), count) in bad_covariates {
        report.error(
            IssueCode::InvalidCovariate,
            format!("covariate `{covariate}`: {message} ({count} records)"),
        );
    }
    for (study, treatments) in &arms {
        if treatments.len() < 2 {
            report.error(
                IssueCode::SingleTreatmentStudy,
                format!("study `{study}` has < 2 treatments"),
            );
        }
        for (t, n) in treatments {
            if *n < 2 {
                report.error(
                    IssueCode::SmallArm,
                    format!(
                        "study `{study}`, arm `{}` has {n} record(s); at least 2 are required",
                        network.treatments.label(*t)
                    ),
                );
            }
        }
    }

    let components = treatment_components(g, arms.values().map(|t| t.keys().copied()));
    if components.len() > 1 {
        let groups = components
            .iter()
            .map(|c| {
                let labels: Vec<_> = c.iter().map(|t| network.treatments.label(*t)).collect();
                format!("{{{}}}", labels.join(", "))
            })
            .collect::<Vec<_>>()
            .join(" | ");
        report.error(
            IssueCode::Disconnected,
            format!(
                "network disconnected: {} components {groups}",
                components.len()
            ),
        );
    }
    report
}

/// Connected components of the co-occurrence graph over treatments `1..=g`.
///
/// Each item of `studies` lists the treatments present in one study.
pub fn treatment_components<I, S>(g: usize, studies: I) -> Vec<Vec<TreatmentId>>
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = TreatmentId>,
{
    let mut parent: Vec<usize> = (0..g).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for study in studies {
        let mut first = None;
        for t in study {
            let p = t.position();
            match first {
                None => first = Some(p),
                Some(f) => {
                    let (a, b) = (find(&mut parent, f), find(&mut parent, p));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<TreatmentId>> = BTreeMap::new();
    for p in 0..g {
        let root = find(&mut parent, p);
        groups.entry(root).or_default().push(TreatmentId(p + 1));
    }
    groups.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> TreatmentSet {
        TreatmentSet::new((1..=n).map(|i| format!("T{i}"))).unwrap()
    }

    fn record(study: &str, t: usize, y: f64) -> IpdRecord {
        IpdRecord {
            study: study.into(),
            treatment: TreatmentId::new(t),
            outcome: y,
            covariates: vec![],
        }
    }

    fn arm(study: &str, t: usize) -> Vec<IpdRecord> {
        vec![record(study, t, 1.0), record(study, t, 2.0)]
    }

    fn dataset(g: usize, records: Vec<IpdRecord>) -> IpdDataset {
        IpdDataset::new(
            NetworkSpec::new(labels(g), CovariateSchema::empty(), Direction::HigherBetter),
            records,
        )
    }

    #[test]
    fn well_formed_network_has_no_errors() {
        let records = [arm("a", 1), arm("a", 2), arm("b", 1), arm("b", 3)].concat();
        let report = validate_dataset(&dataset(3, records));
        assert!(report.is_ok(), "{report}");
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn disjoint_studies_are_disconnected() {
        let records = [arm("a", 1), arm("a", 2), arm("b", 3), arm("b", 4)].concat();
        let report = validate_dataset(&dataset(4, records));
        assert!(report.has(IssueCode::Disconnected));
        assert!(report.errors[0].message.contains("network disconnected"));
    }

    #[test]
    fn single_arm_study_is_rejected() {
        let records = [arm("a", 1), arm("a", 2), arm("b", 2)].concat();
        let report = validate_dataset(&dataset(2, records));
        let msg = &report
            .errors
            .iter()
            .find(|i| i.code == IssueCode::SingleTreatmentStudy)
            .unwrap()
            .message;
        assert!(msg.contains("study `b` has < 2 treatments"));
    }

    #[test]
    fn small_arm_and_nonfinite_outcome_are_errors() {
        let mut records = [arm("a", 1)].concat();
        records.push(record("a", 2, f64::NAN));
        let report = validate_dataset(&dataset(2, records));
        assert!(report.has(IssueCode::SmallArm));
        assert!(report.has(IssueCode::NonFiniteOutcome));
    }

    #[test]
    fn unused_treatment_disconnects_network() {
        let records = [arm("a", 1), arm("a", 2)].concat();
        let report = validate_dataset(&dataset(3, records));
        assert!(report.has(IssueCode::Disconnected));
        assert!(report.errors[0].message.contains("{T3}"));
    }

    #[test]
    fn dropped_records_produce_a_warning() {
        let mut ds = dataset(2, [arm("a", 1), arm("a", 2)].concat());
        ds.incomplete_dropped = 4;
        let report = validate_dataset(&ds);
        assert!(report.is_ok());
        assert!(report.warnings[0].message.starts_with("4 records"));
    }

    fn mixed_schema() -> CovariateSchema {
        CovariateSchema::new(vec![
            CovariateDescriptor::continuous("age").with_unit("years"),
            CovariateDescriptor::binary("sex"),
            CovariateDescriptor::categorical("marital", ["single", "married", "widowed"], "single"),
        ])
        .unwrap()
    }

    #[test]
    fn encodes_passthrough_binary_and_reference_coding() {
        let schema = CovariateSchema::new(vec![
            CovariateDescriptor::continuous("age"),
            CovariateDescriptor::binary("sex"),
        ])
        .unwrap();
        let p = CovariateProfile::new().with("age", 40.0).with("sex", 1.0);
        assert_eq!(encode_profile(&p, &schema).unwrap(), vec![40.0, 1.0]);

        let schema = mixed_schema();
        assert_eq!(schema.encoded_width(), 4);
        assert_eq!(
            schema.encoded_names(),
            ["age", "sex", "marital[married]", "marital[widowed]"]
        );
        let p = CovariateProfile::baseline(&schema);
        assert_eq!(encode_profile(&p, &schema).unwrap(), vec![0.0; 4]);
        let p = p.with("marital", "widowed");
        assert_eq!(encode_profile(&p, &schema).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn profile_errors_name_the_covariate() {
        let schema = mixed_schema();
        let base = CovariateProfile::baseline(&schema);

        let err = encode_profile(&base.clone().with("marital", "divorced"), &schema).unwrap_err();
        assert!(matches!(&err, Error::Profile { covariate, .. } if covariate == "marital"));

        let mut missing = base.clone();
        missing.values.remove("sex");
        let err = encode_profile(&missing, &schema).unwrap_err();
        assert!(matches!(&err, Error::Profile { covariate, .. } if covariate == "sex"));

        let err = encode_profile(&base.clone().with("height", 1.8), &schema).unwrap_err();
        assert!(matches!(&err, Error::Profile { covariate, .. } if covariate == "height"));

        let err = encode_profile(&base.with("sex", 0.5), &schema).unwrap_err();
        assert!(matches!(&err, Error::Profile { covariate, .. } if covariate == "sex"));
    }

    #[test]
    fn schema_rejects_bad_declarations() {
        assert!(CovariateSchema::new(vec![
            CovariateDescriptor::binary("x"),
            CovariateDescriptor::continuous("x"),
        ])
        .is_err());
        assert!(CovariateSchema::new(vec![CovariateDescriptor::categorical("c", ["a"], "a")]).is_err());
        assert!(
            CovariateSchema::new(vec![CovariateDescriptor::categorical("c", ["a", "b"], "z")])
                .is_err()
        );
        assert!(TreatmentSet::new(["A", "A"]).is_err());
    }

    #[test]
    fn network_spec_json_shape() {
        let json = r#"{
            "treatments": ["Placebo", "Drug"],
            "direction": "lower_better",
            "covariates": [
                {"name": "age", "kind": "continuous", "unit": "years"},
                {"name": "arm", "kind": "categorical", "levels": ["x", "y"], "reference": "x"}
            ]
        }"#;
        let spec: NetworkSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.direction, Direction::LowerBetter);
        assert_eq!(spec.schema.encoded_width(), 2);
        assert_eq!(spec.treatments.id_of("Drug"), Some(TreatmentId::new(2)));

        let bad = r#"{"treatments": ["A"], "covariates": [{"name": "c", "kind": "categorical", "levels": ["a"], "reference": "a"}]}"#;
        assert!(serde_json::from_str::<NetworkSpec>(bad).is_err());
    }
}
