//! CSV formats for the two studies.
//!
//! Main study: `id,time,event,z_<radius>...,w_<name>...`
//! Validation: `id,occasion,x,z_<radius>...,w_<name>...`
//!
//! Surrogate columns are recognised by the `z_` prefix and must list radii in
//! increasing order; confounder columns by the `w_` prefix. Floats are written
//! with Rust's shortest round-trip formatting, so a write/read cycle is exact.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rcal_core::data::{MainStudy, Schema, SubjectId, SurvivalRecord, ValidationRecord, ValidationStudy};

use crate::error::{CliError, Context, Result};

struct Layout {
    schema: Schema,
    z_cols: Vec<usize>,
    w_cols: Vec<usize>,
    fixed: Vec<usize>,
}

fn layout(path: &Path, headers: &csv::StringRecord, fixed: &[&str]) -> Result<Layout> {
    let mut fixed_idx = Vec::new();
    for name in fixed {
        match headers.iter().position(|h| h == *name) {
            Some(i) => fixed_idx.push(i),
            None => return Err(CliError::format(path, format!("missing column `{name}`"))),
        }
    }
    let mut radii = Vec::new();
    let mut z_cols = Vec::new();
    let mut confounders = Vec::new();
    let mut w_cols = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(r) = h.strip_prefix("z_") {
            let radius: f64 = r.parse().map_err(|_| CliError::format(path, format!("column `{h}`: radius `{r}` is not a number")))?;
            radii.push(radius);
            z_cols.push(i);
        } else if let Some(name) = h.strip_prefix("w_") {
            if name.is_empty() {
                return Err(CliError::format(path, "confounder column `w_` has no name"));
            }
            confounders.push(name.to_string());
            w_cols.push(i);
        } else if !fixed.contains(&h) {
            return Err(CliError::format(path, format!("unexpected column `{h}`")));
        }
    }
    let schema = Schema::new(radii, confounders).map_err(|e| CliError::format(path, format!("surrogate columns: {e}")))?;
    Ok(Layout { schema, z_cols, w_cols, fixed: fixed_idx })
}

struct Row<'a> {
    path: &'a Path,
    headers: &'a csv::StringRecord,
    record: csv::StringRecord,
    line: u64,
}

impl Row<'_> {
    fn err(&self, col: usize, message: impl Into<String>) -> CliError {
        CliError::Data {
            path: self.path.to_path_buf(),
            line: self.line,
            column: self.headers.get(col).unwrap_or("?").to_string(),
            message: message.into(),
        }
    }

    fn cell(&self, col: usize) -> Result<&str> {
        let v = self.record.get(col).unwrap_or("").trim();
        if v.is_empty() {
            return Err(self.err(col, "empty cell"));
        }
        Ok(v)
    }

    fn float(&self, col: usize) -> Result<f64> {
        let v = self.cell(col)?;
        let x: f64 = v.parse().map_err(|_| self.err(col, format!("`{v}` is not a number")))?;
        if !x.is_finite() {
            return Err(self.err(col, format!("`{v}` is not finite")));
        }
        Ok(x)
    }

    fn uint(&self, col: usize) -> Result<u64> {
        let v = self.cell(col)?;
        v.parse().map_err(|_| self.err(col, format!("`{v}` is not a non-negative integer")))
    }

    fn floats(&self, cols: &[usize]) -> Result<Vec<f64>> {
        cols.iter().map(|&c| self.float(c)).collect()
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(false).from_reader(file))
}

fn rows<'a>(path: &'a Path, rdr: &'a mut csv::Reader<File>, headers: &'a csv::StringRecord) -> impl Iterator<Item = Result<Row<'a>>> + 'a {
    rdr.records().map(move |r| {
        let record = r.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Data { path: path.to_path_buf(), line, column: String::new(), message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        Ok(Row { path, headers, record, line })
    })
}

pub fn read_main(path: &Path) -> Result<MainStudy> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::format(path, e.to_string()))?.clone();
    let l = layout(path, &headers, &["id", "time", "event"])?;
    let (id_col, t_col, d_col) = (l.fixed[0], l.fixed[1], l.fixed[2]);
    let mut records = Vec::new();
    for row in rows(path, &mut rdr, &headers) {
        let row = row?;
        let time = row.float(t_col)?;
        if time <= 0.0 {
            return Err(row.err(t_col, format!("follow-up time must be positive, got {time}")));
        }
        let event = match row.cell(d_col)? {
            "0" => false,
            "1" => true,
            other => return Err(row.err(d_col, format!("event must be 0 or 1, got `{other}`"))),
        };
        records.push(SurvivalRecord {
            id: SubjectId(row.uint(id_col)?),
            z: row.floats(&l.z_cols)?,
            w: row.floats(&l.w_cols)?,
            time,
            event,
        });
    }
    if records.is_empty() {
        return Err(CliError::format(path, "no data rows"));
    }
    MainStudy::new(l.schema, records).context(path.display().to_string())
}

pub fn read_validation(path: &Path) -> Result<ValidationStudy> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::format(path, e.to_string()))?.clone();
    let l = layout(path, &headers, &["id", "occasion", "x"])?;
    let (id_col, o_col, x_col) = (l.fixed[0], l.fixed[1], l.fixed[2]);
    let mut records = Vec::new();
    for row in rows(path, &mut rdr, &headers) {
        let row = row?;
        let occasion = row.uint(o_col)?;
        let occasion = u32::try_from(occasion).map_err(|_| row.err(o_col, "occasion out of range"))?;
        records.push(ValidationRecord {
            id: SubjectId(row.uint(id_col)?),
            occasion,
            x: row.float(x_col)?,
            z: row.floats(&l.z_cols)?,
            w: row.floats(&l.w_cols)?,
        });
    }
    if records.is_empty() {
        return Err(CliError::format(path, "no data rows"));
    }
    ValidationStudy::new(l.schema, records).map_err(|e| CliError::format(path, e.to_string()))
}

fn schema_headers(schema: &Schema) -> Vec<String> {
    let z = schema.radii.iter().map(|r| format!("z_{r}"));
    let w = schema.confounders.iter().map(|n| format!("w_{n}"));
    z.chain(w).collect()
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::format(path, e.to_string())
}

pub fn write_main(path: &Path, study: &MainStudy) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["id".to_string(), "time".into(), "event".into()];
    header.extend(schema_headers(study.schema()));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in study.records() {
        let mut row = vec![r.id.0.to_string(), r.time.to_string(), u8::from(r.event).to_string()];
        row.extend(r.z.iter().chain(&r.w).map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_validation(path: &Path, study: &ValidationStudy) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["id".to_string(), "occasion".into(), "x".into()];
    header.extend(schema_headers(study.schema()));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in study.records() {
        let mut row = vec![r.id.0.to_string(), r.occasion.to_string(), r.x.to_string()];
        row.extend(r.z.iter().chain(&r.w).map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes a header plus rows of already-formatted cells.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Header and rows of a CSV file, unparsed.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for r in rdr.records() {
        rows.push(r.map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn data_error(e: CliError) -> (u64, String) {
        match e {
            CliError::Data { line, column, .. } => (line, column),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn reads_main_study() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "m.csv", "id,time,event,z_90,z_150,w_age\n1,0.5,1,0.3,0.4,50\n2,1.5,0,0.2,0.1,61\n");
        let m = read_main(&p).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.schema().radii, vec![90.0, 150.0]);
        assert_eq!(m.schema().confounders, vec!["age".to_string()]);
        assert!(m.records()[0].event && !m.records()[1].event);
    }

    #[test]
    fn row_errors_carry_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "m.csv", "id,time,event,z_90\n1,0.5,1,0.3\n2,0,0,0.2\n");
        assert_eq!(data_error(read_main(&p).unwrap_err()), (3, "time".into()));
        let p = write(dir.path(), "m.csv", "id,time,event,z_90\n1,0.5,2,0.3\n");
        assert_eq!(data_error(read_main(&p).unwrap_err()), (2, "event".into()));
        let p = write(dir.path(), "m.csv", "id,time,event,z_90\n1,0.5,1,\n");
        assert_eq!(data_error(read_main(&p).unwrap_err()), (2, "z_90".into()));
        let p = write(dir.path(), "v.csv", "id,occasion,x,z_90\n1,1,abc,0.3\n");
        assert_eq!(data_error(read_validation(&p).unwrap_err()), (2, "x".into()));
    }

    #[test]
    fn header_problems() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "m.csv", "id,time,z_90\n1,0.5,0.3\n");
        assert!(matches!(read_main(&p), Err(CliError::Format { .. })));
        let p = write(dir.path(), "m.csv", "id,time,event,z_150,z_90\n1,0.5,1,0.3,0.1\n");
        assert!(matches!(read_main(&p), Err(CliError::Format { .. })));
        let p = write(dir.path(), "m.csv", "id,time,event,z_90,extra\n1,0.5,1,0.3,1\n");
        assert!(matches!(read_main(&p), Err(CliError::Format { .. })));
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let schema = Schema::new(vec![90.0, 150.0], vec!["a".into()]).unwrap();
        let recs = vec![ValidationRecord {
            id: SubjectId(4),
            occasion: 2,
            x: 0.1 + 0.2,
            z: vec![1.0 / 3.0, -2.5e-9],
            w: vec![std::f64::consts::PI],
        }];
        let v = ValidationStudy::new(schema, recs).unwrap();
        let p = dir.path().join("v.csv");
        write_validation(&p, &v).unwrap();
        assert_eq!(read_validation(&p).unwrap(), v);
    }
}
