//! Serialization helpers shared by every emitter: all floating-point output
//! carries 17 significant digits (`d.16e` scientific form), enough to
//! round-trip any f64 exactly, so downstream diffs of JSON and CSV artifacts
//! are byte-exact across runs.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::error::{Error, Result};

/// Formats one f64 with 17 significant digits in a JSON-compatible form.
pub fn fmt17(value: f64) -> String {
    format!("{value:.16e}")
}

struct Precise17;

impl Formatter for Precise17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes to compact JSON with exact float round-tripping, plus a
/// trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Precise17);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Invariant(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Invariant(format!("non-utf8 JSON: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for &v in &[0.0, -0.52, 1.0 / 3.0, -0.916_234_567_890_123_4, 1e-300, -2.5e300] {
            let s = fmt17(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "value {v} via {s}");
        }
    }

    #[test]
    fn json_floats_are_17_digit() {
        #[derive(serde::Serialize)]
        struct Row {
            a: f64,
            k: u32,
        }
        let s = to_json_string(&Row { a: -0.52, k: 3 }).unwrap();
        assert_eq!(s, "{\"a\":-5.2000000000000002e-1,\"k\":3}\n");
        let parsed: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(parsed["a"].as_f64().unwrap().to_bits(), (-0.52f64).to_bits());
    }
}
