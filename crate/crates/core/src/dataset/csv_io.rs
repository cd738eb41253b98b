use std::path::Path;

use super::{Column, ColumnKind, Dataset, FeatureSchema, Provenance};
use crate::error::{Error, Result};

/// Reads a comma-delimited UTF-8 file with a header row. Header order need
/// not match the schema; extra columns are ignored. Empty or unparseable
/// continuous cells become missing. Outcome cells must be 0 or 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Dataset> {
    let path = path.as_ref();
    schema.validate()?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers()?.clone();

    let mut positions = Vec::with_capacity(schema.columns.len());
    let mut absent = Vec::new();
    for col in &schema.columns {
        match header.iter().position(|h| h.trim() == col.name) {
            Some(p) => positions.push(p),
            None => absent.push(col.name.clone()),
        }
    }
    if !absent.is_empty() {
        return Err(Error::HeaderMismatch(absent));
    }

    let mut columns: Vec<Column> = schema
        .columns
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Continuous => Column::Numeric(Vec::new()),
            ColumnKind::BinaryOutcome => Column::Labels(Vec::new()),
            _ => Column::Codes(Vec::new()),
        })
        .collect();

    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for ((col, spec), &pos) in columns.iter_mut().zip(&schema.columns).zip(&positions) {
            let cell = record.get(pos).unwrap_or("").trim();
            match col {
                Column::Numeric(v) => v.push(cell.parse::<f64>().ok().filter(|x| x.is_finite()).unwrap_or(f64::NAN)),
                Column::Codes(v) => v.push(cell.to_string()),
                Column::Labels(v) => {
                    let y = match cell.parse::<f64>() {
                        Ok(0.0) => 0,
                        Ok(1.0) => 1,
                        _ => {
                            return Err(Error::Data(format!(
                                "row {}: outcome `{}` value `{cell}` is not 0 or 1",
                                line + 2,
                                spec.name
                            )))
                        }
                    };
                    v.push(y);
                }
            }
        }
    }
    Dataset::new(schema.clone(), columns, Provenance::Ingested)
}

/// Writes the dataset in schema column order; missing cells are empty.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(data.schema.columns.iter().map(|c| c.name.as_str()))?;
    let mut row = Vec::with_capacity(data.columns().len());
    for i in 0..data.n_rows() {
        row.clear();
        for col in data.columns() {
            row.push(match col {
                Column::Numeric(v) if v[i].is_finite() => format!("{}", v[i]),
                Column::Numeric(_) => String::new(),
                Column::Codes(v) => v[i].clone(),
                Column::Labels(v) => v[i].to_string(),
            });
        }
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ColumnSpec;
    use std::io::Write;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            ColumnSpec::continuous("age", 18.0, 100.0),
            ColumnSpec::sensitive("sex", &["1", "2"]),
            ColumnSpec::outcome("death"),
        ])
        .unwrap()
    }

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn clean_three_rows() {
        let f = write("sex,age,death\n1,40,0\n2,55.5,1\n1,70,0\n");
        let d = load_csv(f.path(), &schema()).unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.missing_count(), 0);
        assert_eq!(d.numeric("age").unwrap(), &[40.0, 55.5, 70.0]);
        assert_eq!(d.labels(), &[0, 1, 0]);
    }

    #[test]
    fn blank_and_text_cells_are_missing() {
        let f = write("age,sex,death\n,1,0\nabc,2,1\n30,,0\n");
        let d = load_csv(f.path(), &schema()).unwrap();
        assert_eq!(d.missing_mask("age").unwrap(), &[true, true, false]);
        assert_eq!(d.missing_mask("sex").unwrap(), &[false, false, true]);
    }

    #[test]
    fn header_missing_column_is_named() {
        let f = write("age,death\n40,0\n");
        match load_csv(f.path(), &schema()) {
            Err(Error::HeaderMismatch(cols)) => assert_eq!(cols, vec!["sex".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_csv("/nonexistent/cohort.csv", &schema()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn write_then_load_preserves_values() {
        let f = write("age,sex,death\n40.25,1,0\n,2,1\n");
        let d = load_csv(f.path(), &schema()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&d, out.path()).unwrap();
        let back = load_csv(out.path(), &schema()).unwrap();
        assert_eq!(back.codes("sex").unwrap(), d.codes("sex").unwrap());
        assert_eq!(back.missing_mask("age"), d.missing_mask("age"));
        assert_eq!(back.numeric("age").unwrap()[0], 40.25);
    }
}
