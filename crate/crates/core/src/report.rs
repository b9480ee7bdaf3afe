//! JSON report records and a serializer that writes every float with 17
//! significant digits.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::error::{Error, ErrorClass};
use crate::two_sample::{Diagnostics, Method, TestResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Compact JSON with floats in `{:.16e}` form.
#[derive(Debug, Default, Clone, Copy)]
pub struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serialize `value` as one line of JSON.
pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value.serialize(&mut ser).expect("report types serialize");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

/// How the bandwidth of a report was chosen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthSelection {
    pub rule: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

/// One calibrated test, as printed by `cone-test test`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub statistic: f64,
    pub statistic_raw: f64,
    pub method: Method,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub b1: f64,
    pub b2: f64,
    pub n1: usize,
    pub n2: usize,
    pub d: usize,
    pub diagnostics: Diagnostics,
    pub bandwidth_selection: BandwidthSelection,
    pub seed: u64,
    pub version: &'static str,
}

impl RunReport {
    pub fn new(
        result: TestResult,
        n1: usize,
        n2: usize,
        d: usize,
        alpha: f64,
        seed: u64,
        bandwidth_selection: BandwidthSelection,
    ) -> Self {
        Self {
            statistic: result.statistic,
            statistic_raw: result.statistic_raw,
            method: result.method,
            p_value: result.p_value,
            alpha,
            reject: result.p_value <= alpha,
            b1: result.bandwidths.b1,
            b2: result.bandwidths.b2,
            n1,
            n2,
            d,
            diagnostics: result.diagnostics,
            bandwidth_selection,
            seed,
            version: VERSION,
        }
    }
}

/// Process exit code for an error class.
pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Usage => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Usage => "usage",
        ErrorClass::Data => "data",
        ErrorClass::Numerical => "numerical",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub kind: String,
    pub class: &'static str,
    pub exit_code: i32,
    pub message: String,
}

/// `{"error": {...}}` as printed on failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub error: ErrorBody,
    pub version: &'static str,
}

impl ErrorReport {
    pub fn from_error(e: &Error) -> Self {
        let class = e.class();
        Self::new(e.kind(), class, e.to_string())
    }

    pub fn new(kind: &str, class: ErrorClass, message: String) -> Self {
        Self {
            error: ErrorBody { kind: kind.to_string(), class: class_name(class), exit_code: exit_code(class), message },
            version: VERSION,
        }
    }
}
