use thiserror::Error;

/// Errors raised when constructing or validating a [`crate::Waveform`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AudioError {
    #[error("waveform has {0} samples, at most {max} allowed", max = crate::WAVEFORM_LEN)]
    TooLong(usize),
    #[error("sample {index} is {value}, outside [-1, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("unknown class label `{0}`")]
    UnknownLabel(alloc::string::String),
}

/// Loudness of an all-zero signal is minus infinity; it is reported through
/// this sentinel instead of a numeric value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DbError {
    #[error("signal is all zeros; loudness is -inf")]
    NegativeInfinity,
    #[error("empty signal")]
    Empty,
}
