use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("zero extent: all points coincide")]
    ZeroExtent,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("grid index {index} out of range for {bits} bits")]
    IndexOutOfRange { index: u32, bits: u32 },
    #[error("bit depth {0} outside 1..=21")]
    BadBits(u32),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label index {index} out of range for object {object} with {len} points")]
    LabelIndex { object: String, index: usize, len: usize },
    #[error("empty query list")]
    NoQueries,
    #[error("no candidate prompts for part `{0}`")]
    NoCandidates(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("provider failed (view {view}, mask {mask:?}): {message}")]
    Provider { view: usize, mask: Option<usize>, message: String },
    #[error("embedder failed for `{text}`: {message}")]
    Embedder { text: String, message: String },
}
