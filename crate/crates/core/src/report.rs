//! Number formatting shared by every CSV writer.

/// Twelve significant digits in scientific notation.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        // Avoid "-0e0" vs "0e0" churn between runs that differ only in sign of zero.
        return "0.00000000000e0".to_string();
    }
    format!("{x:.11e}")
}

/// Seventeen significant digits: enough to round-trip any `f64`.
pub fn exact(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, -0.0] {
            let back: f64 = exact(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn twelve_digits() {
        assert_eq!(num(0.432332358381693654), "4.32332358382e-1");
        assert_eq!(num(-0.0), num(0.0));
    }
}
