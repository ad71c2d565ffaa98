//! `crf.csv`: header `dn,inverse_exposure` and one row per DN.
use std::fmt::Write as _;
use std::path::Path;

use aebench_core::photometry::ResponseCurve;
use aebench_core::DN_LEVELS;

use crate::error::{FormatError, FormatResult};
use crate::fsutil;

pub const HEADER: [&str; 2] = ["dn", "inverse_exposure"];

pub fn encode(crf: &ResponseCurve) -> String {
    let mut out = String::from("dn,inverse_exposure\n");
    for (dn, v) in crf.inverse_lut().iter().enumerate() {
        let _ = writeln!(out, "{dn},{v}");
    }
    out
}

pub fn decode(path: &Path, text: &str) -> FormatResult<ResponseCurve> {
    let malformed = |line: Option<u64>, message: String| FormatError::MalformedCsv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| malformed(Some(1), e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(malformed(Some(1), format!("expected header {}", HEADER.join(","))));
    }
    let mut lut = Vec::with_capacity(DN_LEVELS);
    for record in reader.deserialize::<(usize, f64)>() {
        let (dn, v) = record.map_err(|e| malformed(e.position().map(|p| p.line()), e.to_string()))?;
        let line = lut.len() as u64 + 2;
        if dn != lut.len() {
            return Err(malformed(Some(line), format!("expected dn {}, found {dn}", lut.len())));
        }
        lut.push(v);
    }
    if lut.len() != DN_LEVELS {
        return Err(malformed(
            None,
            format!("expected {DN_LEVELS} rows, found {}", lut.len()),
        ));
    }
    ResponseCurve::from_lut(lut).map_err(|e| FormatError::InvalidCurve {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write(path: &Path, crf: &ResponseCurve) -> FormatResult<()> {
    fsutil::write_atomic(path, encode(crf).as_bytes())
}

pub fn read(path: &Path) -> FormatResult<ResponseCurve> {
    decode(path, &fsutil::read_to_string(path)?)
}
