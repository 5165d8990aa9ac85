use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised while building or validating schemas, datasets and targets.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("row {row}, column `{column}`: level `{value}` is not declared in the schema")]
    UnknownLevel { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: value {value} outside [{lower}, {upper}]")]
    OutOfRange { row: usize, column: String, value: f64, lower: f64, upper: f64 },
    #[error("row {row}: {reason}")]
    Parse { row: usize, reason: String },
    #[error("variable `{0}` is continuous; only categorical variables are supported here")]
    UnsupportedKind(String),
    #[error("contingency table size exceeds u64::MAX")]
    CellCountOverflow,
    #[error("target `{target}`: {reason}")]
    InvalidTarget { target: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("synthesized variable `{0}` must be categorical for the mixture synthesizer")]
    NonCategorical(String),
    #[error("the dataset has no records")]
    EmptyData,
    #[error("invalid synthesizer setting: {0}")]
    InvalidConfig(String),
    #[error("minimum leaf size {min_leaf} exceeds the number of records {n}")]
    LeafTooLarge { min_leaf: usize, n: usize },
    #[error("record {row} could not be routed to a leaf of the tree for `{variable}`")]
    Unroutable { row: usize, variable: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttributeError {
    #[error("full enumeration would produce {size} guesses, above the cap of {cap}")]
    GuessSetTooLarge { size: u64, cap: u64 },
    #[error("variable `{0}` is continuous; neighborhood and full enumeration need categorical variables")]
    UnsupportedKind(String),
    #[error("record {0} is not in the dataset")]
    UnknownRecord(usize),
    #[error("f(y_i | theta) vanishes for draw {draw} of record {record}")]
    DegenerateProposal { record: usize, draw: usize },
    #[error("record {record}: {dropped} of {total} draws have a vanishing proposal density")]
    TooManyDroppedDraws { record: usize, dropped: usize, total: usize },
    #[error("record {record}: every guess has zero likelihood (worst guess index {worst_guess})")]
    NumericalDegeneracy { record: usize, worst_guess: usize },
    #[error("prior has {prior} entries but the guess set has {guesses}")]
    PriorLengthMismatch { prior: usize, guesses: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("the release carries no parameter draws")]
    NoDraws,
    #[error("empty location grid")]
    EmptyGrid,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentificationError {
    #[error("invalid match configuration: {0}")]
    InvalidConfig(String),
    #[error("target `{target}`: population count {population} is below the {matches} matching records")]
    InconsistentPopulation { target: String, population: u64, matches: usize },
    #[error("target `{target}`: no population count available")]
    MissingPopulation { target: String },
    #[error("target `{target}`: variable `{variable}` is not intruder-known")]
    UnknownVariable { target: String, variable: String },
    #[error("the release carries no parameter draws")]
    NoDraws,
}

/// Any error produced by the crate, tagged by the module that raised it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Attribute(#[from] AttributeError),
    #[error(transparent)]
    Identification(#[from] IdentificationError),
}

impl Error {
    /// Name of the module that raised the error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Data(_) => "core_data",
            Error::Synthesis(_) => "synthesis",
            Error::Attribute(_) => "attribute_risk",
            Error::Identification(_) => "identification_risk",
        }
    }
}
