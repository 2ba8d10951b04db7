//! Loading, writing, generating and corrupting panels.

mod inject;
mod io;
mod synth;

pub use inject::{inject_anomalies, DropMode, InjectionSpec};
pub use io::{
    assemble_panels, load_wide_csv, load_yahoo_csv, read_labels_csv, read_wide_csv, read_yahoo_file,
    write_labels_csv, write_wide_csv, write_yahoo_csv, DEFAULT_MISSING_SENTINEL,
};
pub use synth::{generate_synthetic, random_connected_graph, GraphSpec, SynthSpec};

/// Formats a value with 9 significant digits, the precision used for every
/// CSV this crate writes.
pub fn fmt_value(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (8 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_value;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_value(1.0), "1");
        assert_eq!(fmt_value(0.5), "0.5");
        assert_eq!(fmt_value(-1.3416407864998738), "-1.34164079");
        assert_eq!(fmt_value(123456789.4), "123456789");
        assert_eq!(fmt_value(1e-7), "0.0000001");
        assert_eq!(fmt_value(0.0), "0");
        assert_eq!(fmt_value(2.0 / 3.0), "0.666666667");
    }
}
