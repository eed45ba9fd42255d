//! Stable float formatting for report files.

/// `%g`-style rendering with 6 significant digits: fixed notation for
/// exponents in `[-5, 6)`, scientific otherwise, trailing zeros trimmed.
/// Non-finite values render as `nan`, `inf` and `-inf`.
pub fn g6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    // Round to 6 significant digits first so the exponent reflects rounding.
    let sci = format!("{:.5e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, v))
    } else {
        let m = trim(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::g6;

    #[test]
    fn matches_printf_g() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-1.23456789, "-1.23457"),
            (999999.5, "1e+06"),
            (0.19507772, "0.195078"),
            (f64::NAN, "nan"),
            (f64::NEG_INFINITY, "-inf"),
        ];
        for (v, want) in cases {
            assert_eq!(g6(v), want, "{v}");
        }
    }

    #[test]
    fn round_trips_to_six_digits() {
        for &v in &[0.123456789, 98765.4321, 1e-7 * 3.3, 2.5e10] {
            let back: f64 = g6(v).parse().unwrap();
            assert!((back - v).abs() <= 5e-6 * v.abs());
        }
    }
}
