//! Numeric text formatting shared by the CSV writers and table renderers.

/// Format a float for data files: integers print bit-exactly as integers,
/// everything else in scientific notation with 17 significant digits, which
/// is enough for an exact `f64` round trip.
pub fn fmt_float(x: f64) -> String {
    if x == x.trunc() && x.abs() <= 9e15 {
        // Integral values, including -0; `{:.0}` keeps the sign.
        format!("{x:.0}")
    } else {
        format!("{x:.16e}")
    }
}

/// Format with 5 significant digits, positional where reasonable, trailing
/// zeros trimmed. Used for quantile-bin labels.
pub fn fmt_sig5(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (4 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        trim_zeros(&s)
    } else {
        format!("{x:.4e}")
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0');
    t.trim_end_matches('.').to_string()
}

/// Percentage label for a fraction: `0.1` renders as `10%`, `0.125` as `12.5%`.
pub fn fmt_percent(fraction: f64) -> String {
    let pct = fraction * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{:.0}%", pct.round())
    } else {
        format!("{}%", trim_zeros(&format!("{pct:.4}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_round_trip_as_plain_text() {
        assert_eq!(fmt_float(19.0), "19");
        assert_eq!(fmt_float(0.0), "0");
        assert_eq!(fmt_float(-3.0), "-3");
    }

    #[test]
    fn fractions_round_trip_exactly() {
        for &x in &[0.1, -2.718281828459045, 1.0 / 3.0, 6.02e23, 1e-300] {
            let s = fmt_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn sig5_matches_table_style() {
        assert_eq!(fmt_sig5(0.0097800), "0.00978");
        assert_eq!(fmt_sig5(0.13735), "0.13735");
        assert_eq!(fmt_sig5(0.137), "0.137");
        assert_eq!(fmt_sig5(0.99), "0.99");
        assert_eq!(fmt_sig5(486.0), "486");
    }

    #[test]
    fn percent_labels() {
        assert_eq!(fmt_percent(0.1), "10%");
        assert_eq!(fmt_percent(0.125), "12.5%");
    }
}
