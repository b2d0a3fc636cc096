//! Baseline JPEG codec for single-component (luma) images.
//!
//! The encoder and decoder deliberately expose the quantized DCT
//! coefficients as they are stored in the bitstream, without any
//! dequantization or pixel reconstruction, so that compression history
//! can be analyzed losslessly. Full decompression to pixels and
//! re-compression with a different quantization matrix are also
//! provided to simulate multi-generation JPEG chains.
//!
//! Only baseline sequential streams (SOF0, Huffman entropy coding) with
//! exactly one image component are supported. Progressive scans, chroma
//! subsampling, and arithmetic coding are out of scope.

pub mod bitio;
pub mod dct;
pub mod decoder;
pub mod encoder;
pub mod huffman;
pub mod pixels;
pub mod qmatrix;
pub mod quant;
pub mod stream;
pub mod tables;

pub use decoder::QuantizedBlockGrid;
pub use pixels::PixelPatch;
pub use qmatrix::{PoolEntry, QMatrix, QMatrixPool, standard_qmatrix};
pub use stream::JpegStream;

/// Errors raised while encoding, decoding, or handling Q-matrix pools.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions {width}x{height}: must be nonzero multiples of 8")]
    InvalidDimensions { width: usize, height: usize },

    #[error("quality factor {0} out of range 1..=100")]
    QualityOutOfRange(u32),

    #[error("quantization step {value} at index {index} out of range 1..=255")]
    QStepOutOfRange { index: usize, value: u32 },

    /// Header or segment structure damaged (bad length, stray byte, missing SOI).
    #[error("malformed marker segment: {0}")]
    Marker(String),

    /// Valid JPEG, but not a baseline single-component stream.
    #[error("unsupported stream: {0}")]
    Unsupported(String),

    /// Entropy-coded scan data could not be decoded.
    #[error("huffman decode failed: {0}")]
    Huffman(String),

    /// Stream ended while parsing headers.
    #[error("unexpected end of stream")]
    Truncated,

    /// A decoded coefficient left the range baseline JPEG can represent.
    #[error("coefficient out of baseline range: {0}")]
    CoefficientRange(i64),

    /// A coefficient grid cannot be entropy-coded with the standard tables.
    #[error("coefficient {0} not encodable with baseline tables")]
    Unencodable(i64),

    #[error("q-matrix pool: {0}")]
    Pool(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
