//! Number formatting and output encoders.

use serde::Serialize;
use serde_json::Value;

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros dropped,
/// scientific notation below `1e-4` and from `1e17` on. Seventeen digits
/// round-trip every `f64`.
pub fn g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Serializes a report as one pretty JSON object. Non-finite numbers
/// serialize as `null`, so any `null` is rejected.
pub fn json_report<T: Serialize>(report: &T) -> Result<Vec<u8>, String> {
    let value = serde_json::to_value(report).map_err(|e| e.to_string())?;
    if let Some(path) = find_null(&value, String::new()) {
        return Err(format!("non-finite value at `{path}`"));
    }
    let mut out = serde_json::to_vec_pretty(&value).map_err(|e| e.to_string())?;
    out.push(b'\n');
    Ok(out)
}

fn find_null(v: &Value, path: String) -> Option<String> {
    match v {
        Value::Null => Some(if path.is_empty() { ".".into() } else { path }),
        Value::Array(xs) => xs
            .iter()
            .enumerate()
            .find_map(|(i, x)| find_null(x, format!("{path}[{i}]"))),
        Value::Object(m) => m.iter().find_map(|(k, x)| {
            let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            find_null(x, p)
        }),
        _ => None,
    }
}

/// CSV writer into memory with LF line endings.
pub struct CsvBuf {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvBuf {
    pub fn new<I, S>(header: I) -> csv::Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> csv::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)
    }

    pub fn finish(self) -> csv::Result<Vec<u8>> {
        self.writer
            .into_inner()
            .map_err(|e| csv::Error::from(std::io::Error::other(e.to_string())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        // reference strings from C printf("%.17g")
        let cases = [
            (0.1, "0.10000000000000001"),
            (1.0, "1"),
            (0.5, "0.5"),
            (-2.25, "-2.25"),
            (100.0, "100"),
            (1e-5, "1.0000000000000001e-05"),
            (0.0001, "0.0001"),
            (1e17, "1e+17"),
            (12345678901234567.0, "12345678901234568"),
            (1.0 / 3.0, "0.33333333333333331"),
            (6.02214076e23, "6.0221407599999999e+23"),
            (f64::MIN_POSITIVE, "2.2250738585072014e-308"),
            (0.0, "0"),
        ];
        for (x, want) in cases {
            assert_eq!(g17(x), want, "{x:e}");
        }
    }

    #[test]
    fn g17_round_trips() {
        let mut x = 0.123456789f64;
        for _ in 0..200 {
            assert_eq!(g17(x).parse::<f64>().unwrap(), x);
            x = x * 3.7 + 1e-3;
            if x > 1e30 {
                x = 1.0 / x;
            }
        }
    }

    #[test]
    fn json_rejects_non_finite() {
        #[derive(Serialize)]
        struct R {
            a: f64,
            b: Vec<f64>,
        }
        assert!(json_report(&R { a: 1.0, b: vec![2.0] }).is_ok());
        let e = json_report(&R { a: 1.0, b: vec![2.0, f64::NAN] }).unwrap_err();
        assert!(e.contains("b[1]"), "{e}");
        assert!(json_report(&R { a: f64::INFINITY, b: vec![] }).is_err());
    }

    #[test]
    fn csv_uses_lf() {
        let mut c = CsvBuf::new(["a", "b"]).unwrap();
        c.row(["1", "x,y"]).unwrap();
        let s = String::from_utf8(c.finish().unwrap()).unwrap();
        assert_eq!(s, "a,b\n1,\"x,y\"\n");
    }
}
