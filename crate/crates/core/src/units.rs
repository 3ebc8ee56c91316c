//! Power unit conversions. Everything inside the optimizer is in watts;
//! dBm only appears at the CLI and in derived output columns.

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_dbm_is_one_watt() {
        assert!((dbm_to_w(30.0) - 1.0).abs() < 1e-15);
        assert!((w_to_dbm(1.0) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn table_values() {
        assert!((dbm_to_w(40.0) - 10.0).abs() < 1e-12);
        assert!((dbm_to_w(20.0) - 0.1).abs() < 1e-15);
        assert!((dbm_to_w(0.0) - 1e-3).abs() < 1e-18);
        assert!((db_to_linear(-3.0) - 10f64.powf(-0.3)).abs() < 1e-15);
    }
}
