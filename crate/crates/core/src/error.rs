use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A tensor or layer received data whose shape does not fit.
    InvalidShape {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    InvalidAxis {
        axis: usize,
        rank: usize,
    },
    /// Layer geometry that cannot be realized without padding, or an
    /// otherwise inconsistent layer description.
    InvalidSpec(String),
    /// The operating point is at or below the crash voltage.
    SimulatedCrash {
        voltage_mv: u32,
        frequency_mhz: u32,
    },
    MissingCalibration {
        frequency_mhz: u32,
    },
    InvalidConfig(String),
    /// Characterization observed a first failure at or below the crash point.
    PoffNotAboveCrash {
        poff_mv: u32,
        crash_mv: u32,
    },
}

impl Error {
    pub(crate) fn shape(expected: &[usize], found: &[usize]) -> Self {
        Error::InvalidShape {
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }

    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidShape { expected, found } => {
                write!(f, "invalid shape: expected {expected:?}, found {found:?}")
            }
            Error::InvalidAxis { axis, rank } => {
                write!(f, "invalid axis {axis} for tensor of rank {rank}")
            }
            Error::InvalidSpec(msg) => write!(f, "invalid layer spec: {msg}"),
            Error::SimulatedCrash {
                voltage_mv,
                frequency_mhz,
            } => write!(
                f,
                "simulated crash at {voltage_mv} mV / {frequency_mhz} MHz"
            ),
            Error::MissingCalibration { frequency_mhz } => {
                write!(f, "no calibration for {frequency_mhz} MHz")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::PoffNotAboveCrash { poff_mv, crash_mv } => write!(
                f,
                "first failure at {poff_mv} mV is not above crash point {crash_mv} mV"
            ),
        }
    }
}

impl core::error::Error for Error {}
