//! C-style `%.*e` formatting for CSV output.

/// Formats `x` like C's `printf("%.*e", digits - 1, x)`, i.e. with `digits`
/// significant digits and a signed, at-least-two-digit exponent.
pub fn sci(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), x);
    let (mantissa, exp) = s.split_once('e').expect("rust exponent format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// Seventeen significant digits, enough to round-trip any f64.
pub fn sci17(x: f64) -> String {
    sci(x, 17)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_c_printf() {
        assert_eq!(sci17(1.0), "1.0000000000000000e+00");
        assert_eq!(sci17(-2.5e-7), "-2.4999999999999999e-07");
        assert_eq!(sci17(0.0), "0.0000000000000000e+00");
        assert_eq!(sci(123.456, 3), "1.23e+02");
        assert_eq!(sci17(1e300), "1.0000000000000001e+300");
        assert_eq!(sci17(f64::NAN), "nan");
    }

    #[test]
    fn round_trips() {
        for &x in &[0.1, 1.0 / 3.0, 6.02214076e23, -1e-310, f64::MAX] {
            let back: f64 = sci17(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
