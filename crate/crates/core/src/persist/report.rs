use serde_json::{json, Map, Value};

use crate::domain::{encode_profile, CovariateKind, CovariateProfile, CovariateSchema, CovariateValue};
use crate::error::{Error, Result};
use crate::ranking::HierarchyReport;

use super::value_to_canonical_json;

/// Parses a profile document: a JSON object of covariate name to value.
pub fn parse_profile_json(bytes: &[u8], schema: &CovariateSchema) -> Result<CovariateProfile> {
    let value: Value = serde_json::from_slice(bytes)
        .map_err(|e| Error::Format(format!("profile is not valid JSON: {e}")))?;
    profile_from_value(&value, schema)
}

/// Builds a profile from JSON. Numbers, level names and, for binary
/// covariates, booleans are accepted. Unknown and missing covariates are
/// errors, as are values that do not fit the covariate's kind.
pub fn profile_from_value(value: &Value, schema: &CovariateSchema) -> Result<CovariateProfile> {
    let object = value
        .as_object()
        .ok_or_else(|| Error::Format("profile must be a JSON object".into()))?;
    let mut profile = CovariateProfile::new();
    for (name, raw) in object {
        let reject = |message: String| Error::Profile {
            covariate: name.clone(),
            message,
        };
        let descriptor = schema
            .get(name)
            .ok_or_else(|| reject("not part of the model's covariate schema".into()))?;
        let parsed = match (raw, &descriptor.kind) {
            (Value::Bool(b), CovariateKind::Binary) => CovariateValue::Number(if *b { 1.0 } else { 0.0 }),
            (Value::Number(n), _) => CovariateValue::Number(
                n.as_f64().ok_or_else(|| reject(format!("{n} is not representable")))?,
            ),
            (Value::String(s), _) => CovariateValue::Level(s.clone()),
            (other, _) => return Err(reject(format!("unsupported value {other}"))),
        };
        descriptor.check(&parsed)?;
        profile.values.insert(name.clone(), parsed);
    }
    encode_profile(&profile, schema)?;
    Ok(profile)
}

pub fn profile_to_value(profile: &CovariateProfile) -> Value {
    Value::Object(
        profile
            .values
            .iter()
            .map(|(k, v)| {
                let v = match v {
                    CovariateValue::Number(x) => json!(x),
                    CovariateValue::Level(s) => json!(s),
                };
                (k.clone(), v)
            })
            .collect::<Map<_, _>>(),
    )
}

/// JSON form of a hierarchy report. Matrices are nested arrays in network
/// order; `rank_probabilities[g][r]` is P(treatment g+1 has rank r+1).
pub fn report_to_value(report: &HierarchyReport) -> Value {
    let labels: Vec<&str> = report.treatments.iter().map(|t| t.label.as_str()).collect();
    let label = |id: crate::domain::TreatmentId| labels[id.position()];
    let rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    };
    json!({
        "treatments": report.treatments.iter().map(|t| json!({
            "label": t.label,
            "index": t.treatment.index(),
            "sucra": t.sucra,
            "mean_rank": t.mean_rank,
            "position": t.position,
            "effect_mean": t.effect_mean,
            "ci_low": t.ci_low,
            "ci_high": t.ci_high,
        })).collect::<Vec<_>>(),
        "hierarchy": report.by_position().iter().map(|t| t.label.as_str()).collect::<Vec<_>>(),
        "rank_probabilities": rows(&report.rank_matrix.probabilities),
        "beat_probabilities": rows(&report.beat_probabilities),
        "comparator": label(report.comparator),
        "credible_level": report.credible_level,
        "direction": report.direction,
        "profile": profile_to_value(&report.profile),
        "metadata": {
            "seed": report.seed,
            "n_samples": report.n_samples,
            "tie_samples": report.rank_matrix.tie_samples,
            "sucra_ties": report.sucra_ties.iter()
                .map(|g| g.iter().map(|&t| label(t)).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "engine_version": env!("CARGO_PKG_VERSION"),
        },
    })
}

pub fn write_report_json(report: &HierarchyReport) -> Result<Vec<u8>> {
    value_to_canonical_json(&report_to_value(report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CovariateDescriptor;

    fn schema() -> CovariateSchema {
        CovariateSchema::new(vec![
            CovariateDescriptor::continuous("age"),
            CovariateDescriptor::binary("male"),
            CovariateDescriptor::categorical("site", ["n", "s"], "n"),
        ])
        .unwrap()
    }

    #[test]
    fn accepts_numbers_levels_and_booleans() {
        let p = parse_profile_json(br#"{"age": 40, "male": true, "site": "s"}"#, &schema()).unwrap();
        assert_eq!(p.get("age"), Some(&CovariateValue::Number(40.0)));
        assert_eq!(p.get("male"), Some(&CovariateValue::Number(1.0)));
        assert_eq!(p.get("site"), Some(&CovariateValue::Level("s".into())));
    }

    #[test]
    fn rejections_name_the_covariate() {
        for (doc, name) in [
            (r#"{"age": 40, "male": 1, "site": "s", "bmi": 3}"#, "bmi"),
            (r#"{"age": 40, "site": "s"}"#, "male"),
            (r#"{"age": "old", "male": 1, "site": "s"}"#, "age"),
            (r#"{"age": 40, "male": 2, "site": "s"}"#, "male"),
            (r#"{"age": 40, "male": 1, "site": "w"}"#, "site"),
            (r#"{"age": null, "male": 1, "site": "s"}"#, "age"),
            (r#"{"age": true, "male": 1, "site": "s"}"#, "age"),
        ] {
            match parse_profile_json(doc.as_bytes(), &schema()) {
                Err(Error::Profile { covariate, .. }) => assert_eq!(covariate, name, "{doc}"),
                other => panic!("{doc}: {other:?}"),
            }
        }
        assert!(matches!(parse_profile_json(b"[1]", &schema()), Err(Error::Format(_))));
    }

    #[test]
    fn profile_value_round_trip() {
        let p = parse_profile_json(br#"{"age": 40.5, "male": 0, "site": "n"}"#, &schema()).unwrap();
        assert_eq!(profile_from_value(&profile_to_value(&p), &schema()).unwrap(), p);
    }
}
