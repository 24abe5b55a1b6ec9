//! Output serialization with every float written to 17 significant digits.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

/// `x` in scientific notation with 17 significant digits; enough to
/// round-trip any `f64` exactly.
pub fn sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        // JSON has no non-finite numbers; CSV readers understand these
        format!("{x}")
    }
}

/// Compact or pretty JSON formatter that replaces the shortest
/// round-trip float output with [`sig17`].
struct Sig17<F>(F);

impl<F: Formatter> Formatter for Sig17<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(sig17(v).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(v))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn end_object_key<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_key(w)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

struct Compact;
impl Formatter for Compact {}

/// Single-line JSON.
pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    value.serialize(&mut Serializer::with_formatter(&mut buf, Sig17(Compact)))?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Indented JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    value.serialize(&mut Serializer::with_formatter(&mut buf, Sig17(PrettyFormatter::new())))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(sig17(0.1), "1.0000000000000001e-1");
        assert_eq!(sig17(-3.0), "-3.0000000000000000e0");
        assert_eq!(to_json_line(&[1.5, 2.0]).unwrap(), "[1.5000000000000000e0,2.0000000000000000e0]");
    }

    #[test]
    fn integers_and_nulls_untouched() {
        #[derive(Serialize)]
        struct S {
            n: usize,
            v: Option<f64>,
        }
        assert_eq!(to_json_line(&S { n: 3, v: None }).unwrap(), r#"{"n":3,"v":null}"#);
        let pretty = to_json_pretty(&S { n: 3, v: Some(0.5) }).unwrap();
        assert!(pretty.contains("\"v\": 5.0000000000000000e-1"), "{pretty}");
    }

    proptest! {
        #[test]
        fn round_trips_bitwise(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let back: f64 = serde_json::from_str(&to_json_line(&x).unwrap()).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
