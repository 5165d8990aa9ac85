//! File formats: schema JSON, dataset and target CSVs, population tables
//! and release directories (CSV datasets plus `manifest.json` and
//! `draws.json`).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use synrisk_core::data::DatasetBuilder;
use synrisk_core::synthesis::{Provenance, ReleaseModel, SyntheticRelease};
use synrisk_core::{Cell, DataError, Dataset, Schema, Target, TargetFile, VariableDef};

use crate::error::{CliError, Result};

pub const RELEASE_FORMAT: &str = "synrisk-release";
pub const RELEASE_VERSION: u32 = 1;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::input(path, format!("cannot open: {e}")))
}

/// Reads a JSON document, reporting syntax errors with line and column.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, format!("cannot read: {e}")))?;
    parse_json(path, &text)
}

pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| json_error(path, e))
}

pub fn json_error(path: &Path, e: serde_json::Error) -> CliError {
    if e.is_syntax() || e.is_eof() {
        CliError::Parse { path: path.into(), line: e.line(), column: e.column(), message: e.to_string() }
    } else {
        CliError::input(path, e)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaFile {
    pub variables: Vec<VariableDef>,
}

pub fn load_schema(path: &Path) -> Result<Arc<Schema>> {
    let file: SchemaFile = read_json(path)?;
    Schema::new(file.variables).map(Arc::new).map_err(|e| CliError::input(path, e))
}

pub fn schema_file(schema: &Schema) -> SchemaFile {
    SchemaFile { variables: schema.variables().to_vec() }
}

/// Parses a dataset CSV. Columns are matched to the schema by header name
/// and may appear in any order.
pub fn read_dataset<R: Read>(reader: R, schema: Arc<Schema>) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Parse { row: 0, reason: e.to_string() })?.clone();
    let mut position = vec![usize::MAX; schema.len()];
    for (k, name) in headers.iter().enumerate() {
        let j = schema
            .index_of(name)
            .ok_or_else(|| DataError::Parse { row: 0, reason: format!("header `{name}` is not a schema variable") })?;
        if position[j] != usize::MAX {
            return Err(DataError::Parse { row: 0, reason: format!("header `{name}` appears twice") });
        }
        position[j] = k;
    }
    if let Some(j) = position.iter().position(|&p| p == usize::MAX) {
        return Err(DataError::Parse {
            row: 0,
            reason: format!("header lacks schema variable `{}`", schema.variable(j).name),
        });
    }
    let mut builder = DatasetBuilder::new(schema.clone(), 0);
    let mut fields: Vec<String> = Vec::with_capacity(schema.len());
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| DataError::Parse { row: i + 1, reason: e.to_string() })?;
        if record.len() != headers.len() {
            return Err(DataError::Parse {
                row: i + 1,
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        fields.clear();
        fields.extend(position.iter().map(|&k| record[k].to_string()));
        builder.push_text_row(&fields)?;
    }
    Ok(builder.finish())
}

pub fn load_dataset(path: &Path, schema: Arc<Schema>) -> Result<Dataset> {
    read_dataset(BufReader::new(open(path)?), schema).map_err(|e| CliError::input(path, e))
}

pub fn write_dataset_to<W: Write>(writer: W, dataset: &Dataset) -> std::io::Result<()> {
    let schema = dataset.schema();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema.variables().iter().map(|v| v.name.as_str()))?;
    let mut fields = Vec::with_capacity(schema.len());
    for r in 0..dataset.n_rows() {
        fields.clear();
        fields.extend((0..schema.len()).map(|j| schema.format_cell(j, dataset.cell(r, j))));
        w.write_record(&fields)?;
    }
    w.flush()
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(CliError::io(path))?;
    write_dataset_to(BufWriter::new(file), dataset).map_err(CliError::io(path))
}

/// Reads a target file: a `target_id` column, an optional `true_row_id`
/// column and one column per intruder-known variable. Empty cells mean the
/// value is not known for that target.
pub fn read_targets<R: Read>(reader: R, schema: &Schema) -> Result<TargetFile, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Parse { row: 0, reason: e.to_string() })?.clone();
    let id_col = headers
        .iter()
        .position(|h| h == "target_id")
        .ok_or_else(|| DataError::Parse { row: 0, reason: "missing `target_id` column".into() })?;
    let truth_col = headers.iter().position(|h| h == "true_row_id");
    let mut vars = Vec::new();
    for (k, h) in headers.iter().enumerate() {
        if k == id_col || Some(k) == truth_col {
            continue;
        }
        let j = schema
            .index_of(h)
            .ok_or_else(|| DataError::Parse { row: 0, reason: format!("header `{h}` is not a schema variable") })?;
        vars.push((k, j));
    }
    let mut targets = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DataError::Parse { row, reason: e.to_string() })?;
        let true_row_id = match truth_col.map(|k| &record[k]) {
            None | Some("") => None,
            Some(text) => Some(text.parse::<usize>().map_err(|_| DataError::Parse {
                row,
                reason: format!("true_row_id `{text}` is not a positive integer"),
            })?),
        };
        let known = vars
            .iter()
            .filter(|&&(k, _)| !record[k].is_empty())
            .map(|&(k, j)| schema.parse_cell(j, &record[k], row).map(|c| (j, c)))
            .collect::<Result<Vec<(usize, Cell)>, _>>()?;
        targets.push(Target { id: record[id_col].to_string(), known, true_row_id });
    }
    TargetFile::new(schema, targets)
}

pub fn load_targets(path: &Path, schema: &Schema) -> Result<TargetFile> {
    read_targets(BufReader::new(open(path)?), schema).map_err(|e| CliError::input(path, e))
}

pub fn write_targets_to<W: Write>(writer: W, targets: &TargetFile, schema: &Schema) -> std::io::Result<()> {
    let known: Vec<usize> = (0..schema.len()).filter(|&j| schema.variable(j).intruder_known).collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["target_id".to_string(), "true_row_id".to_string()];
    header.extend(known.iter().map(|&j| schema.variable(j).name.clone()));
    w.write_record(&header)?;
    for t in &targets.targets {
        let mut row = vec![t.id.clone(), t.true_row_id.map(|r| r.to_string()).unwrap_or_default()];
        for &j in &known {
            row.push(t.known.iter().find(|e| e.0 == j).map(|e| schema.format_cell(j, e.1)).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()
}

/// Reads a population table with columns `target_id` and `population`.
pub fn load_population(path: &Path) -> Result<BTreeMap<String, u64>> {
    #[derive(Deserialize)]
    struct Row {
        target_id: String,
        population: u64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(BufReader::new(open(path)?));
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| CliError::input(path, format!("row {}: {e}", i + 1)))?;
        if out.insert(row.target_id.clone(), row.population).is_some() {
            return Err(CliError::input(path, format!("target `{}` listed twice", row.target_id)));
        }
    }
    Ok(out)
}

/// Describes a release directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseManifest {
    pub format: String,
    pub version: u32,
    pub synthesizer: String,
    pub seed: u64,
    pub hyperparameters: BTreeMap<String, String>,
    pub variables: Vec<VariableDef>,
    /// Dataset files relative to the manifest.
    pub datasets: Vec<String>,
    pub draws: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DrawsFile {
    pub format: String,
    pub version: u32,
    pub model: ReleaseModel,
}

/// Writes `release_<l>.csv`, `draws.json` and `manifest.json` into `dir` and
/// returns the manifest path.
pub fn write_release(dir: &Path, release: &SyntheticRelease) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let mut names = Vec::with_capacity(release.m());
    for (l, d) in release.datasets.iter().enumerate() {
        let name = format!("release_{}.csv", l + 1);
        write_dataset(&dir.join(&name), d)?;
        names.push(name);
    }
    let draws = DrawsFile { format: format!("{RELEASE_FORMAT}-draws"), version: RELEASE_VERSION, model: release.model.clone() };
    let file = File::create(dir.join("draws.json")).map_err(CliError::io(dir.join("draws.json")))?;
    serde_json::to_writer(BufWriter::new(file), &draws).map_err(|e| CliError::input(dir.join("draws.json"), e))?;
    let manifest = ReleaseManifest {
        format: RELEASE_FORMAT.into(),
        version: RELEASE_VERSION,
        synthesizer: release.provenance.synthesizer.clone(),
        seed: release.provenance.seed,
        hyperparameters: release.provenance.hyperparameters.clone(),
        variables: release.datasets[0].schema().variables().to_vec(),
        datasets: names,
        draws: "draws.json".into(),
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Loads a release. Its schema must equal `schema` when one is given.
pub fn load_release(manifest_path: &Path, schema: Option<&Arc<Schema>>) -> Result<SyntheticRelease> {
    let manifest: ReleaseManifest = read_json(manifest_path)?;
    if manifest.format != RELEASE_FORMAT || manifest.version != RELEASE_VERSION {
        return Err(CliError::input(
            manifest_path,
            format!("unsupported release format `{}` version {}", manifest.format, manifest.version),
        ));
    }
    let own = Arc::new(Schema::new(manifest.variables.clone()).map_err(|e| CliError::input(manifest_path, e))?);
    let schema = match schema {
        Some(s) if **s != *own => {
            return Err(CliError::input(manifest_path, "release schema differs from the supplied schema"));
        }
        Some(s) => s.clone(),
        None => own,
    };
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let datasets = manifest
        .datasets
        .iter()
        .map(|name| load_dataset(&dir.join(name), schema.clone()))
        .collect::<Result<Vec<_>>>()?;
    let draws_path = dir.join(&manifest.draws);
    let draws: DrawsFile = serde_json::from_reader(BufReader::new(open(&draws_path)?))
        .map_err(|e| json_error(&draws_path, e))?;
    if draws.version != RELEASE_VERSION {
        return Err(CliError::input(&draws_path, format!("unsupported draws version {}", draws.version)));
    }
    let provenance =
        Provenance { synthesizer: manifest.synthesizer, seed: manifest.seed, hyperparameters: manifest.hyperparameters };
    SyntheticRelease::new(datasets, draws.model, provenance).map_err(|e| CliError::input(manifest_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(vec![
                VariableDef::categorical("a", &["x", "y"], true, true),
                VariableDef::continuous("w", 0.0, 10.0, false, true),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn loads_rows_in_any_column_order() {
        let d = read_dataset("w,a\n1.5,y\n2,x\n0,x\n".as_bytes(), schema()).unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.cell(0, 0), Cell::Level(1));
        assert_eq!(d.cell(1, 1), Cell::Real(2.0));
    }

    #[test]
    fn header_only_is_empty() {
        assert_eq!(read_dataset("a,w\n".as_bytes(), schema()).unwrap().n_rows(), 0);
    }

    #[test]
    fn reports_bad_cells() {
        assert_eq!(
            read_dataset("a,w\nx,1\nX,2\n".as_bytes(), schema()).unwrap_err(),
            DataError::UnknownLevel { row: 2, column: "a".into(), value: "X".into() }
        );
        assert!(matches!(read_dataset("a,w\nx,11\n".as_bytes(), schema()), Err(DataError::OutOfRange { row: 1, .. })));
        assert!(matches!(read_dataset("a,w\nx\n".as_bytes(), schema()), Err(DataError::Parse { row: 1, .. })));
        assert!(matches!(read_dataset("a,b\n".as_bytes(), schema()), Err(DataError::Parse { row: 0, .. })));
    }

    #[test]
    fn targets_with_partial_knowledge() {
        let t = read_targets("target_id,true_row_id,a,w\nt1,2,y,\nt2,,,3.5\n".as_bytes(), &schema()).unwrap();
        assert_eq!(t.targets[0].known, vec![(0, Cell::Level(1))]);
        assert_eq!(t.targets[0].true_row_id, Some(2));
        assert_eq!(t.targets[1].known, vec![(1, Cell::Real(3.5))]);
        assert_eq!(t.targets[1].true_row_id, None);
        assert!(read_targets("target_id,a\nt1,x\nt1,y\n".as_bytes(), &schema()).is_err());
    }
}
