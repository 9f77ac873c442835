//! Shared CSV conventions: UTF-8, LF line endings, floats written with 17
//! significant digits (`{:.16e}`) so every `f64` round-trips exactly.

use std::io::Write;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn write_row<W: Write + ?Sized>(out: &mut W, fields: &[String]) -> std::io::Result<()> {
    out.write_all(fields.join(",").as_bytes())?;
    out.write_all(b"\n")
}

pub(crate) fn numbered(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}_{i}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0, 2.0f64.sqrt()] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(1.5), "1.5000000000000000e0");
    }
}
