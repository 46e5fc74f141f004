use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("causality violation: scheduled event at {event}s before clock {clock}s")]
    Causality { event: f64, clock: f64 },

    #[error("livelock: {0} consecutive scheduler wakes without state change")]
    Livelock(usize),

    #[error("simulation drained its event queue with unfinished jobs: {0:?}")]
    Stranded(Vec<u64>),

    #[error("duplicate job id {0}")]
    DuplicateJob(u64),

    #[error("unknown job id {0}")]
    UnknownJob(u64),

    #[error("SWF parse error at line {line}: {message}")]
    SwfParse { line: usize, message: String },

    #[error("trace error: {0}")]
    Trace(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
