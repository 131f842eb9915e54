//! Float formatting shared by the CSV/JSON emitters and the CLI.

/// Format a float with 9 significant digits in scientific notation
/// (e.g. `1.23456789e2`). This is the canonical on-disk float format; it is
/// idempotent under parse→format, which is what the round-trip tests pin.
pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.25), "2.50000000e-1");
        assert_eq!(sig9(123.456789123), "1.23456789e2");
        assert_eq!(sig9(-1.0), "-1.00000000e0");
        assert_eq!(sig9(0.0), "0.00000000e0");
    }

    #[test]
    fn idempotent_under_reparse() {
        for &x in &[0.1234567891234, -9.87e-13, 3.0, 1832.6752, 0.0] {
            let s = sig9(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(sig9(back), s);
        }
    }
}
