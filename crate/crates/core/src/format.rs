//! Fixed-width number formatting shared by every CSV writer.

/// Formats `x` in plain decimal notation with 10 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.000000000".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (9 - magnitude).clamp(0, 30) as usize;
    let s = format!("{:.*}", decimals, x);
    // Rounding can carry into a new leading digit (9.9999999999 -> 10.000000000).
    if s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len() > 10 && decimals > 0 {
        format!("{:.*}", decimals - 1, x)
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_sig;

    #[test]
    fn ten_significant_digits() {
        assert_eq!(fmt_sig(0.0), "0.000000000");
        assert_eq!(fmt_sig(1.0), "1.000000000");
        assert_eq!(fmt_sig(29.875), "29.87500000");
        assert_eq!(fmt_sig(0.045454545454545456), "0.04545454545");
        assert_eq!(fmt_sig(-0.5), "-0.5000000000");
        assert_eq!(fmt_sig(9.99999999999), "10.00000000");
    }
}
