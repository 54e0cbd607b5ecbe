//! Number formatting for reports.

/// `x` rounded to six significant digits, printed without trailing zeros.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}
