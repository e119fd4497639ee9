use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument outside the operation's domain (bad index, popcount mismatch, q1 == q2, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// The request would exceed a representable or allocatable size.
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// A state or sample set violates a normalization or consistency invariant.
    #[error("integrity violation: {0}")]
    Integrity(String),
    /// A fit could not produce valid parameters.
    #[error("fit failed: {0}")]
    Fit(String),
}

macro_rules! domain {
    ($($arg:tt)*) => { $crate::error::Error::Domain(alloc::format!($($arg)*)) };
}
macro_rules! capacity {
    ($($arg:tt)*) => { $crate::error::Error::Capacity(alloc::format!($($arg)*)) };
}
macro_rules! integrity {
    ($($arg:tt)*) => { $crate::error::Error::Integrity(alloc::format!($($arg)*)) };
}
pub(crate) use {capacity, domain, integrity};
