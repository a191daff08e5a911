//! Fixed numeric formatting shared by every text output.

/// `x` rounded to 6 significant digits, printed in shortest form.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Scientific notation with 6 significant digits, used for p-values.
pub fn sci(x: f64) -> String {
    format!("{x:.5e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(sig6(0.1), "0.1");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0 / 3.0), "0.333333");
        assert_eq!(sig6(123456789.0), "123457000");
        assert_eq!(sci(0.05), "5.00000e-2");
        assert_eq!(sci(1.0), "1.00000e0");
    }
}
