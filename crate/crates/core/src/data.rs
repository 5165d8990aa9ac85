//! Schemas, datasets, the synthesized/un-synthesized variable partition and
//! intruder target files.
//!
//! Categorical cells are stored as level codes (`u32` indices into the
//! variable's level list); continuous cells as `f64`. Datasets are columnar
//! and immutable once built. Row identifiers are implicit: the record at
//! position `i` has `row_id = i + 1`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::DataError;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum VariableKind {
    Categorical { levels: Vec<String> },
    Continuous { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VariableDef {
    pub name: String,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: VariableKind,
    pub synthesized: bool,
    pub intruder_known: bool,
}

impl VariableDef {
    pub fn categorical<S: Into<String>>(name: S, levels: &[&str], synthesized: bool, intruder_known: bool) -> Self {
        VariableDef {
            name: name.into(),
            kind: VariableKind::Categorical { levels: levels.iter().map(|l| l.to_string()).collect() },
            synthesized,
            intruder_known,
        }
    }

    /// Categorical variable with levels named `"0"`, `"1"`, ... `"k-1"`.
    pub fn categorical_k<S: Into<String>>(name: S, k: usize, synthesized: bool, intruder_known: bool) -> Self {
        VariableDef {
            name: name.into(),
            kind: VariableKind::Categorical { levels: (0..k).map(|l| l.to_string()).collect() },
            synthesized,
            intruder_known,
        }
    }

    pub fn continuous<S: Into<String>>(name: S, lower: f64, upper: f64, synthesized: bool, intruder_known: bool) -> Self {
        VariableDef { name: name.into(), kind: VariableKind::Continuous { lower, upper }, synthesized, intruder_known }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, VariableKind::Categorical { .. })
    }

    /// Number of levels, or `None` for a continuous variable.
    pub fn cardinality(&self) -> Option<usize> {
        match &self.kind {
            VariableKind::Categorical { levels } => Some(levels.len()),
            VariableKind::Continuous { .. } => None,
        }
    }
}

/// Ordered, validated list of variable definitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    variables: Vec<VariableDef>,
}

impl Schema {
    pub fn new(variables: Vec<VariableDef>) -> Result<Self, DataError> {
        let mut names = BTreeSet::new();
        for v in &variables {
            if v.name.is_empty() {
                return Err(DataError::InvalidSchema("variable with an empty name".into()));
            }
            if !names.insert(v.name.as_str()) {
                return Err(DataError::InvalidSchema(format!("duplicate variable name `{}`", v.name)));
            }
            match &v.kind {
                VariableKind::Categorical { levels } => {
                    if levels.len() < 2 {
                        return Err(DataError::InvalidSchema(format!(
                            "categorical variable `{}` needs at least 2 levels",
                            v.name
                        )));
                    }
                    if levels.len() > u32::MAX as usize {
                        return Err(DataError::InvalidSchema(format!("too many levels for `{}`", v.name)));
                    }
                    let distinct: BTreeSet<&str> = levels.iter().map(String::as_str).collect();
                    if distinct.len() != levels.len() {
                        return Err(DataError::InvalidSchema(format!("duplicate level label in `{}`", v.name)));
                    }
                }
                VariableKind::Continuous { lower, upper } => {
                    if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                        return Err(DataError::InvalidSchema(format!(
                            "continuous variable `{}` needs finite bounds with lower < upper",
                            v.name
                        )));
                    }
                }
            }
        }
        if !variables.iter().any(|v| v.synthesized) {
            return Err(DataError::InvalidSchema("no variable is synthesized".into()));
        }
        Ok(Schema { variables })
    }

    pub fn variables(&self) -> &[VariableDef] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variable(&self, index: usize) -> &VariableDef {
        &self.variables[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Parses one textual cell for variable `var`. `row` is only used for
    /// error messages.
    pub fn parse_cell(&self, var: usize, text: &str, row: usize) -> Result<Cell, DataError> {
        let def = &self.variables[var];
        let text = text.trim();
        match &def.kind {
            VariableKind::Categorical { levels } => levels
                .iter()
                .position(|l| l == text)
                .map(|code| Cell::Level(code as u32))
                .ok_or_else(|| DataError::UnknownLevel { row, column: def.name.clone(), value: text.into() }),
            VariableKind::Continuous { .. } => {
                let value: f64 = text.parse().map_err(|_| DataError::Parse {
                    row,
                    reason: format!("column `{}`: `{}` is not a number", def.name, text),
                })?;
                self.check_cell(var, Cell::Real(value), row)?;
                Ok(Cell::Real(value))
            }
        }
    }

    /// Renders a cell back to its textual form. Continuous values use the
    /// shortest representation that round-trips.
    pub fn format_cell(&self, var: usize, cell: Cell) -> String {
        match (&self.variables[var].kind, cell) {
            (VariableKind::Categorical { levels }, Cell::Level(code)) => levels[code as usize].clone(),
            (_, Cell::Real(x)) => format!("{x}"),
            (_, Cell::Level(code)) => format!("{code}"),
        }
    }

    pub fn check_cell(&self, var: usize, cell: Cell, row: usize) -> Result<(), DataError> {
        let def = &self.variables[var];
        match (&def.kind, cell) {
            (VariableKind::Categorical { levels }, Cell::Level(code)) => {
                if (code as usize) < levels.len() {
                    Ok(())
                } else {
                    Err(DataError::UnknownLevel { row, column: def.name.clone(), value: format!("#{code}") })
                }
            }
            (VariableKind::Continuous { lower, upper }, Cell::Real(x)) => {
                if x.is_nan() {
                    return Err(DataError::Parse { row, reason: format!("column `{}`: missing value", def.name) });
                }
                if x < *lower || x > *upper {
                    Err(DataError::OutOfRange { row, column: def.name.clone(), value: x, lower: *lower, upper: *upper })
                } else {
                    Ok(())
                }
            }
            _ => Err(DataError::Parse { row, reason: format!("column `{}`: cell kind does not match schema", def.name) }),
        }
    }
}

/// Number of cells in the full contingency table over `schema`.
pub fn enumerate_cells(schema: &Schema) -> Result<u64, DataError> {
    cell_count(schema.variables().iter())
}

/// Number of cells of the contingency table over the given variables.
pub fn cell_count<'a, I>(variables: I) -> Result<u64, DataError>
where
    I: IntoIterator<Item = &'a VariableDef>,
{
    variables.into_iter().try_fold(1u64, |acc, v| {
        let k = v.cardinality().ok_or_else(|| DataError::UnsupportedKind(v.name.clone()))?;
        acc.checked_mul(k as u64).ok_or(DataError::CellCountOverflow)
    })
}

/// Index sets splitting the schema by synthesis status and intruder
/// knowledge. All lists are in schema order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub synthesized: Vec<usize>,
    pub unsynthesized: Vec<usize>,
    pub known_synthesized: Vec<usize>,
    pub known_unsynthesized: Vec<usize>,
}

impl Partition {
    pub fn of(schema: &Schema) -> Self {
        let mut p = Partition {
            synthesized: Vec::new(),
            unsynthesized: Vec::new(),
            known_synthesized: Vec::new(),
            known_unsynthesized: Vec::new(),
        };
        for (j, v) in schema.variables().iter().enumerate() {
            match (v.synthesized, v.intruder_known) {
                (true, true) => {
                    p.synthesized.push(j);
                    p.known_synthesized.push(j);
                }
                (true, false) => p.synthesized.push(j),
                (false, true) => {
                    p.unsynthesized.push(j);
                    p.known_unsynthesized.push(j);
                }
                (false, false) => p.unsynthesized.push(j),
            }
        }
        p
    }

    pub fn fully_synthetic(&self) -> bool {
        self.unsynthesized.is_empty()
    }
}

/// Value of a single cell.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged))]
pub enum Cell {
    Level(u32),
    Real(f64),
}

impl Cell {
    pub fn level(self) -> Option<u32> {
        match self {
            Cell::Level(l) => Some(l),
            Cell::Real(_) => None,
        }
    }

    /// Numeric view: level codes map to their index.
    pub fn as_f64(self) -> f64 {
        match self {
            Cell::Level(l) => l as f64,
            Cell::Real(x) => x,
        }
    }

    /// Bit pattern usable as an exact-equality key (`-0.0` and `0.0` collide).
    pub fn key(self) -> u64 {
        match self {
            Cell::Level(l) => l as u64,
            Cell::Real(x) if x == 0.0 => 0,
            Cell::Real(x) => x.to_bits(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Column {
    Categorical(Vec<u32>),
    Continuous(Vec<f64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Categorical(c) => c.len(),
            Column::Continuous(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, row: usize) -> Cell {
        match self {
            Column::Categorical(c) => Cell::Level(c[row]),
            Column::Continuous(c) => Cell::Real(c[row]),
        }
    }

    pub fn as_categorical(&self) -> Option<&[u32]> {
        match self {
            Column::Categorical(c) => Some(c),
            Column::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            Column::Continuous(c) => Some(c),
            Column::Categorical(_) => None,
        }
    }

    fn empty_for(kind: &VariableKind, capacity: usize) -> Column {
        match kind {
            VariableKind::Categorical { .. } => Column::Categorical(Vec::with_capacity(capacity)),
            VariableKind::Continuous { .. } => Column::Continuous(Vec::with_capacity(capacity)),
        }
    }

    fn push(&mut self, cell: Cell) {
        match (self, cell) {
            (Column::Categorical(c), Cell::Level(l)) => c.push(l),
            (Column::Continuous(c), Cell::Real(x)) => c.push(x),
            _ => unreachable!("cell kind checked against schema before push"),
        }
    }
}

/// Rectangular confidential (or synthetic) data conforming to a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<Schema>,
    columns: Vec<Column>,
    n: usize,
}

impl Dataset {
    /// Builds a dataset from whole columns, validating every cell.
    pub fn from_columns(schema: Arc<Schema>, columns: Vec<Column>) -> Result<Self, DataError> {
        if columns.len() != schema.len() {
            return Err(DataError::Parse {
                row: 0,
                reason: format!("expected {} columns, got {}", schema.len(), columns.len()),
            });
        }
        let n = columns.first().map_or(0, Column::len);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(DataError::Parse {
                    row: col.len().min(n) + 1,
                    reason: format!("column `{}` has {} values, expected {}", schema.variable(j).name, col.len(), n),
                });
            }
            for row in 0..n {
                schema.check_cell(j, col.get(row), row + 1)?;
            }
        }
        Ok(Dataset { schema, columns, n })
    }

    /// Builds a dataset from row-major cells.
    pub fn from_rows<R: AsRef<[Cell]>>(schema: Arc<Schema>, rows: &[R]) -> Result<Self, DataError> {
        let mut builder = DatasetBuilder::new(schema, rows.len());
        for row in rows {
            builder.push_row(row.as_ref())?;
        }
        Ok(builder.finish())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, var: usize) -> &Column {
        &self.columns[var]
    }

    #[inline]
    pub fn cell(&self, row: usize, var: usize) -> Cell {
        self.columns[var].get(row)
    }

    /// Row identifier of the record at position `row` (1-based, dense).
    pub fn row_id(&self, row: usize) -> usize {
        row + 1
    }

    /// Position of the record with identifier `row_id`, if present.
    pub fn row_index(&self, row_id: usize) -> Option<usize> {
        (row_id >= 1 && row_id <= self.n).then(|| row_id - 1)
    }

    pub fn record(&self, row: usize) -> Vec<Cell> {
        self.columns.iter().map(|c| c.get(row)).collect()
    }

    /// Copy of this dataset with some columns replaced. The schema is shared.
    pub fn with_columns_replaced(&self, replacements: Vec<(usize, Column)>) -> Result<Self, DataError> {
        let mut columns = self.columns.clone();
        for (j, col) in replacements {
            columns[j] = col;
        }
        Dataset::from_columns(self.schema.clone(), columns)
    }

    /// Copy of this dataset with record `row` replaced by `values` on `vars`.
    pub fn with_record_values(&self, row: usize, vars: &[usize], values: &[Cell]) -> Result<Self, DataError> {
        let mut out = self.clone();
        for (&j, &cell) in vars.iter().zip(values) {
            self.schema.check_cell(j, cell, row + 1)?;
            match (&mut out.columns[j], cell) {
                (Column::Categorical(c), Cell::Level(l)) => c[row] = l,
                (Column::Continuous(c), Cell::Real(x)) => c[row] = x,
                _ => unreachable!("checked above"),
            }
        }
        Ok(out)
    }
}

/// Incremental row-by-row construction of a [`Dataset`].
#[derive(Debug)]
pub struct DatasetBuilder {
    schema: Arc<Schema>,
    columns: Vec<Column>,
    n: usize,
}

impl DatasetBuilder {
    pub fn new(schema: Arc<Schema>, capacity: usize) -> Self {
        let columns = schema.variables().iter().map(|v| Column::empty_for(&v.kind, capacity)).collect();
        DatasetBuilder { schema, columns, n: 0 }
    }

    pub fn push_row(&mut self, cells: &[Cell]) -> Result<(), DataError> {
        let row = self.n + 1;
        if cells.len() != self.schema.len() {
            return Err(DataError::Parse {
                row,
                reason: format!("expected {} fields, found {}", self.schema.len(), cells.len()),
            });
        }
        for (j, &cell) in cells.iter().enumerate() {
            self.schema.check_cell(j, cell, row)?;
        }
        for (col, &cell) in self.columns.iter_mut().zip(cells) {
            col.push(cell);
        }
        self.n += 1;
        Ok(())
    }

    /// Parses and appends one row of textual fields in schema order.
    pub fn push_text_row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<(), DataError> {
        let row = self.n + 1;
        if fields.len() != self.schema.len() {
            return Err(DataError::Parse {
                row,
                reason: format!("expected {} fields, found {}", self.schema.len(), fields.len()),
            });
        }
        let cells = fields
            .iter()
            .enumerate()
            .map(|(j, f)| self.schema.parse_cell(j, f.as_ref(), row))
            .collect::<Result<Vec<_>, _>>()?;
        for (col, cell) in self.columns.iter_mut().zip(cells) {
            col.push(cell);
        }
        self.n += 1;
        Ok(())
    }

    pub fn finish(self) -> Dataset {
        Dataset { schema: self.schema, columns: self.columns, n: self.n }
    }
}

/// What the intruder knows about one target individual.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub id: String,
    /// `(variable index, value)` pairs, all over intruder-known variables.
    pub known: Vec<(usize, Cell)>,
    /// Row identifier of the true match, absent when the target is not in
    /// the sample (or the truth is unknown to the assessor).
    pub true_row_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetFile {
    pub targets: Vec<Target>,
}

impl TargetFile {
    pub fn new(schema: &Schema, targets: Vec<Target>) -> Result<Self, DataError> {
        let mut ids = BTreeSet::new();
        for t in &targets {
            if !ids.insert(t.id.as_str()) {
                return Err(DataError::InvalidTarget { target: t.id.clone(), reason: "duplicate target id".into() });
            }
            let mut seen = BTreeSet::new();
            for &(j, cell) in &t.known {
                if j >= schema.len() {
                    return Err(DataError::InvalidTarget { target: t.id.clone(), reason: format!("variable #{j} out of range") });
                }
                let def = schema.variable(j);
                if !def.intruder_known {
                    return Err(DataError::InvalidTarget {
                        target: t.id.clone(),
                        reason: format!("variable `{}` is not intruder-known", def.name),
                    });
                }
                if !seen.insert(j) {
                    return Err(DataError::InvalidTarget {
                        target: t.id.clone(),
                        reason: format!("variable `{}` given twice", def.name),
                    });
                }
                schema.check_cell(j, cell, 0).map_err(|e| DataError::InvalidTarget {
                    target: t.id.clone(),
                    reason: e.to_string(),
                })?;
            }
        }
        Ok(TargetFile { targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn table1_schema() -> Schema {
        let cards = [2, 4, 6, 4, 5, 2, 7, 3, 3, 2, 2, 3, 3, 2];
        let names = [
            "sex", "age", "race", "education", "marital", "language", "birthplace", "military", "work",
            "disability", "insurance", "migration", "school", "hispanic",
        ];
        Schema::new(names.iter().zip(cards).map(|(n, k)| VariableDef::categorical_k(*n, k, true, false)).collect())
            .unwrap()
    }

    #[test]
    fn table1_cell_count() {
        assert_eq!(enumerate_cells(&table1_schema()).unwrap(), 8_709_120);
    }

    #[test]
    fn small_cell_counts() {
        let one = Schema::new(vec![VariableDef::categorical_k("a", 2, true, false)]).unwrap();
        assert_eq!(enumerate_cells(&one).unwrap(), 2);
        let three = Schema::new(vec![
            VariableDef::categorical_k("a", 2, true, false),
            VariableDef::categorical_k("b", 3, true, false),
            VariableDef::categorical_k("c", 4, true, false),
        ])
        .unwrap();
        assert_eq!(enumerate_cells(&three).unwrap(), 24);
    }

    #[test]
    fn cell_count_rejects_continuous_and_overflow() {
        let mixed = Schema::new(vec![
            VariableDef::categorical_k("a", 2, true, false),
            VariableDef::continuous("x", 0.0, 1.0, false, false),
        ])
        .unwrap();
        assert_eq!(enumerate_cells(&mixed), Err(DataError::UnsupportedKind("x".into())));

        let vars: Vec<_> = (0..70).map(|i| VariableDef::categorical_k(format!("v{i}"), 2, true, false)).collect();
        assert_eq!(enumerate_cells(&Schema::new(vars).unwrap()), Err(DataError::CellCountOverflow));
    }

    #[test]
    fn schema_invariants() {
        assert!(Schema::new(vec![VariableDef::categorical_k("a", 1, true, false)]).is_err());
        assert!(Schema::new(vec![VariableDef::continuous("x", 1.0, 1.0, true, false)]).is_err());
        assert!(Schema::new(vec![
            VariableDef::categorical_k("a", 2, true, false),
            VariableDef::categorical_k("a", 2, false, false)
        ])
        .is_err());
        assert!(Schema::new(vec![VariableDef::categorical_k("a", 2, false, false)]).is_err());
    }

    #[test]
    fn partition_table4() {
        // Geocoding synthesized and known; sex, foreign, age, occupation,
        // industry known but not synthesized; the rest neither.
        let s = Schema::new(vec![
            VariableDef::categorical_k("geocoding", 50, true, true),
            VariableDef::categorical_k("sex", 2, false, true),
            VariableDef::categorical_k("foreign", 2, false, true),
            VariableDef::categorical_k("age", 6, false, true),
            VariableDef::categorical_k("education", 6, false, false),
            VariableDef::categorical_k("occupation_level", 7, false, false),
            VariableDef::categorical_k("occupation", 12, false, true),
            VariableDef::categorical_k("industry", 15, false, true),
            VariableDef::categorical_k("wage", 10, false, false),
            VariableDef::categorical_k("distance", 5, false, false),
            VariableDef::categorical_k("zip", 2063, false, false),
        ])
        .unwrap();
        let p = Partition::of(&s);
        assert_eq!(p.known_synthesized, vec![0]);
        assert_eq!(p.known_unsynthesized, vec![1, 2, 3, 6, 7]);
        assert_eq!(p.synthesized, vec![0]);
        assert_eq!(p.unsynthesized.len(), 10);
        assert!(!p.fully_synthetic());
    }

    #[test]
    fn partition_table5() {
        let s = Schema::new(vec![
            VariableDef::categorical_k("sex", 2, false, true),
            VariableDef::categorical_k("race", 4, true, true),
            VariableDef::categorical_k("marital", 7, true, true),
            VariableDef::categorical_k("education", 16, false, false),
            VariableDef::continuous("age", 0.0, 90.0, true, true),
            VariableDef::continuous("hh_size", 1.0, 16.0, false, false),
        ])
        .unwrap();
        let p = Partition::of(&s);
        assert_eq!(p.known_synthesized, vec![1, 2, 4]);
        assert_eq!(p.known_unsynthesized, vec![0]);
    }

    #[test]
    fn partition_fully_synthetic_unknown() {
        let s = Schema::new(vec![
            VariableDef::categorical_k("a", 2, true, false),
            VariableDef::categorical_k("b", 3, true, false),
        ])
        .unwrap();
        let p = Partition::of(&s);
        assert!(p.known_synthesized.is_empty() && p.known_unsynthesized.is_empty());
        assert!(p.fully_synthetic());
    }

    #[test]
    fn builder_rejects_bad_cells() {
        let s = Arc::new(
            Schema::new(vec![
                VariableDef::categorical("a", &["x", "y"], true, false),
                VariableDef::continuous("b", 0.0, 10.0, false, false),
            ])
            .unwrap(),
        );
        let mut b = DatasetBuilder::new(s.clone(), 2);
        b.push_text_row(&["x", "1.5"]).unwrap();
        assert!(matches!(b.push_text_row(&["X", "1.5"]), Err(DataError::UnknownLevel { row: 2, .. })));
        assert!(matches!(b.push_text_row(&["y", "11"]), Err(DataError::OutOfRange { row: 2, .. })));
        assert!(matches!(b.push_text_row(&["y"]), Err(DataError::Parse { row: 2, .. })));
        let d = b.finish();
        assert_eq!(d.n_rows(), 1);
        assert_eq!(d.cell(0, 1), Cell::Real(1.5));
        assert_eq!(d.row_id(0), 1);
        assert_eq!(d.row_index(1), Some(0));
        assert_eq!(d.row_index(2), None);
    }

    #[test]
    fn targets_must_use_known_variables() {
        let s = Schema::new(vec![
            VariableDef::categorical_k("a", 2, true, true),
            VariableDef::categorical_k("b", 2, false, false),
        ])
        .unwrap();
        let ok = Target { id: "t1".into(), known: vec![(0, Cell::Level(1))], true_row_id: None };
        assert!(TargetFile::new(&s, vec![ok.clone()]).is_ok());
        let bad = Target { id: "t2".into(), known: vec![(1, Cell::Level(1))], true_row_id: None };
        assert!(TargetFile::new(&s, vec![bad]).is_err());
        assert!(TargetFile::new(&s, vec![ok.clone(), ok]).is_err());
    }

    proptest! {
        #[test]
        fn cell_count_is_multiplicative(a in prop::collection::vec(2usize..6, 1..5), b in prop::collection::vec(2usize..6, 1..5)) {
            let mk = |cards: &[usize], prefix: &str| -> Vec<VariableDef> {
                cards.iter().enumerate().map(|(i, &k)| VariableDef::categorical_k(format!("{prefix}{i}"), k, true, false)).collect()
            };
            let sa = Schema::new(mk(&a, "a")).unwrap();
            let sb = Schema::new(mk(&b, "b")).unwrap();
            let mut both = mk(&a, "a");
            both.extend(mk(&b, "b"));
            let sab = Schema::new(both).unwrap();
            prop_assert_eq!(enumerate_cells(&sab).unwrap(), enumerate_cells(&sa).unwrap() * enumerate_cells(&sb).unwrap());
        }

        #[test]
        fn partition_is_exhaustive_and_disjoint(flags in prop::collection::vec((any::<bool>(), any::<bool>()), 1..12)) {
            let mut vars: Vec<_> = flags.iter().enumerate()
                .map(|(i, &(s, k))| VariableDef::categorical_k(format!("v{i}"), 2, s, k)).collect();
            vars[0].synthesized = true;
            let schema = Schema::new(vars).unwrap();
            let p = Partition::of(&schema);
            let mut all: Vec<usize> = p.synthesized.iter().chain(&p.unsynthesized).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..schema.len()).collect::<Vec<_>>());
            for j in &p.known_synthesized { prop_assert!(p.synthesized.contains(j)); }
            for j in &p.known_unsynthesized { prop_assert!(p.unsynthesized.contains(j)); }
        }
    }
}
