use thiserror::Error;

/// Errors surfaced by the library.
///
/// Construction routines that can fail partway (ball enumeration, automaton
/// construction) report how far they got, so callers can either lower their
/// expectations or retry with a larger budget.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: presentation text, word letters, file syntax.
    #[error("input error: {0}")]
    Input(String),

    /// A request that is inconsistent with the loaded configuration,
    /// e.g. asking the oracle to multiply in external-automaton mode.
    #[error("configuration error: {0}")]
    Config(String),

    /// A query outside the certified range of a finite table.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// An enumeration exceeded its element or closure budget.
    /// `completed` reports the last fully finished radius (if any).
    #[error("resource budget exceeded: {what} (completed radius {completed:?})")]
    Resource {
        what: String,
        completed: Option<usize>,
    },

    /// The automaton did not stabilize within the sampled radius.
    #[error("construction incomplete: {0}")]
    Incomplete(String),

    /// Growth analysis cannot proceed (empty language, no component, ...).
    #[error("degenerate growth: {0}")]
    Degenerate(String),

    /// A numeric classification could not be certified at the working
    /// precision (interval straddles a decision boundary).
    #[error("precision exhausted: {0}")]
    Precision(String),

    /// A pipeline stage failed; wraps the stage name for context.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
