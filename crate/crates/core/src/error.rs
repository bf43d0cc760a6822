use thiserror::Error;

/// Symbol indices in errors are zero-based positions in the alphabet.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("adjacency matrix is not square: {rows} rows, row {row} has {len} entries")]
    NotSquare { rows: usize, row: usize, len: usize },

    #[error("adjacency entry ({0},{1}) is not 0 or 1")]
    NotBinary(usize, usize),

    #[error("alphabet must have at least two symbols, got {0}")]
    AlphabetTooSmall(usize),

    #[error("symbol {0} is stranded: its row or column is empty")]
    StrandedSymbol(usize),

    #[error("theta must lie strictly between 0 and 1, got {0}")]
    BadTheta(f64),

    #[error("word is not admissible at position {0}")]
    Inadmissible(usize),

    #[error("symbol {symbol} is outside the alphabet of size {size}")]
    UnknownSymbol { symbol: usize, size: usize },

    #[error("word of length {len} is too short, need at least {need}")]
    WordTooShort { len: usize, need: usize },

    #[error("function table: {0}")]
    Table(String),

    #[error("function value {value} for word {word:?} is not strictly positive")]
    NonPositiveFunction { word: Vec<usize>, value: f64 },

    #[error("function depth {depth} exceeds the supported maximum {max}")]
    DepthTooLarge { depth: usize, max: usize },

    #[error("Markov matrix has {got} rows/columns, alphabet has {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Markov matrix support disagrees with adjacency at ({0},{1})")]
    SupportMismatch(usize, usize),

    #[error("row {0} of the Markov matrix does not sum to 1")]
    RowSum(usize),

    #[error("Markov matrix is not mixing: stationary vector is not unique and positive")]
    NotMixing,

    #[error("no dimension-two measure: Bowen root s* = {s_star} is not above 1/2")]
    Infeasible { s_star: f64 },

    #[error("Markov simplex has {free_parameters} free parameter(s); the level set cannot supply {count} distinct points")]
    DegenerateLevelSet { free_parameters: usize, count: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
