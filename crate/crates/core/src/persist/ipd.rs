use crate::domain::{CovariateKind, CovariateValue, IpdDataset, IpdRecord, NetworkSpec};
use crate::error::{Error, Result};

const FIXED_COLUMNS: [&str; 3] = ["study", "treatment", "outcome"];

/// Parses long-format IPD: `study,treatment,outcome,<covariates...>`.
///
/// Treatments are given by label. Covariate columns are matched by name and
/// may appear in any order; unknown columns are rejected. Rows with an empty
/// field are dropped and counted. Row numbers in errors are file line
/// numbers, so the first data row is row 2. The parsed dataset is validated
/// before it is returned.
pub fn parse_ipd_csv(bytes: &[u8], network: &NetworkSpec) -> Result<IpdDataset> {
    let dataset = read_ipd_csv(bytes, network)?;
    dataset.validate().into_result()?;
    Ok(dataset)
}

fn read_ipd_csv(bytes: &[u8], network: &NetworkSpec) -> Result<IpdDataset> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header_error = |column: &str, message: &str| Error::Csv {
        row: 1,
        column: column.to_owned(),
        message: message.to_owned(),
    };
    let headers = reader
        .headers()
        .map_err(|e| header_error("", &e.to_string()))?
        .clone();

    let schema = &network.schema;
    for (i, name) in headers.iter().enumerate() {
        if !FIXED_COLUMNS.contains(&name) && schema.get(name).is_none() {
            return Err(header_error(name, "unexpected column"));
        }
        if headers.iter().take(i).any(|n| n == name) {
            return Err(header_error(name, "duplicate column"));
        }
    }
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| header_error(name, "missing column"))
    };
    let study_col = position("study")?;
    let treatment_col = position("treatment")?;
    let outcome_col = position("outcome")?;
    let covariate_cols = schema
        .covariates()
        .iter()
        .map(|c| position(&c.name))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut dropped = 0;
    for row in reader.records() {
        let row = row.map_err(|e| Error::Csv {
            row: e.position().map_or(0, |p| p.line()),
            column: String::new(),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let cell_error = |column: &str, message: String| Error::Csv {
            row: line,
            column: column.to_owned(),
            message,
        };
        if row.iter().any(str::is_empty) {
            dropped += 1;
            continue;
        }

        let label = &row[treatment_col];
        let treatment = network
            .treatments
            .id_of(label)
            .ok_or_else(|| cell_error("treatment", format!("unknown treatment label `{label}`")))?;
        let outcome = parse_number(&row[outcome_col])
            .ok_or_else(|| cell_error("outcome", format!("`{}` is not a finite number", &row[outcome_col])))?;

        let covariates = schema
            .covariates()
            .iter()
            .zip(&covariate_cols)
            .map(|(descriptor, &col)| {
                let raw = &row[col];
                let value = match &descriptor.kind {
                    CovariateKind::Continuous => parse_number(raw).map(CovariateValue::Number),
                    CovariateKind::Binary => parse_binary(raw).map(CovariateValue::Number),
                    CovariateKind::Categorical { .. } => Some(CovariateValue::Level(raw.to_owned())),
                };
                let value = value.ok_or_else(|| {
                    cell_error(&descriptor.name, format!("`{raw}` is not valid here"))
                })?;
                descriptor
                    .check(&value)
                    .map_err(|e| match e {
                        Error::Profile { message, .. } => cell_error(&descriptor.name, message),
                        other => other,
                    })?;
                Ok(value)
            })
            .collect::<Result<Vec<_>>>()?;

        records.push(IpdRecord {
            study: row[study_col].to_owned(),
            treatment,
            outcome,
            covariates,
        });
    }
    let mut dataset = IpdDataset::new(network.clone(), records);
    dataset.incomplete_dropped = dropped;
    Ok(dataset)
}

fn parse_number(raw: &str) -> Option<f64> {
    raw.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn parse_binary(raw: &str) -> Option<f64> {
    match raw {
        "true" | "TRUE" | "True" => Some(1.0),
        "false" | "FALSE" | "False" => Some(0.0),
        _ => raw.parse::<f64>().ok(),
    }
}

/// Writes records with treatment labels and the schema's column order.
pub fn write_ipd_csv(dataset: &IpdDataset) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let network = &dataset.network;
    let to_err = |e: csv::Error| Error::Format(e.to_string());
    let header = FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(network.schema.covariates().iter().map(|c| c.name.clone()));
    writer.write_record(header).map_err(to_err)?;
    for r in &dataset.records {
        let mut fields = vec![
            r.study.clone(),
            network.treatments.label(r.treatment).to_owned(),
            r.outcome.to_string(),
        ];
        fields.extend(r.covariates.iter().map(|v| match v {
            CovariateValue::Number(x) => x.to_string(),
            CovariateValue::Level(s) => s.clone(),
        }));
        writer.write_record(&fields).map_err(to_err)?;
    }
    writer.into_inner().map_err(|e| Error::Format(e.to_string()))
}
