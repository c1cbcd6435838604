use std::fs;

use nalgebra::DMatrix;
use proptest::prelude::*;
use spamnet::io::{format_f64, load_csv, save_csv, RunConfig};
use spamnet::{Error, Family, TimeSeries};

#[test]
fn two_row_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    fs::write(&path, "x\n0\n1\n").unwrap();
    let s = load_csv(&path).unwrap();
    assert_eq!((s.transitions(), s.dim()), (1, 1));
    assert_eq!(s.column_names(), ["x"]);
    assert_eq!(s.column_slice(0, 0, 2), vec![0.0, 1.0]);
}

#[test]
fn bad_cells_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "a,b\n1,2\n3,NaN\n").unwrap();
    let err = load_csv(&path).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    let msg = err.to_string();
    assert!(msg.contains("line 3") && msg.contains("`b`"), "{msg}");

    fs::write(&path, "a,b\n1,2\n3,x7\n").unwrap();
    assert!(load_csv(&path).unwrap_err().to_string().contains("`x7` is not a number"));

    fs::write(&path, "a,b\n1,2\n3\n").unwrap();
    let msg = load_csv(&path).unwrap_err().to_string();
    assert!(msg.contains("line 3"), "{msg}");

    fs::write(&path, "a,b\n").unwrap();
    assert!(matches!(load_csv(&path), Err(Error::Data(_))));
}

#[test]
fn family_hint_checks_counts() {
    let values = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.5]);
    let s = TimeSeries::from_matrix(values).unwrap();
    assert!(matches!(s.clone().with_family_hint(Family::Poisson), Err(Error::Data(_))));
    assert!(s.with_family_hint(Family::Gaussian).is_ok());
}

#[test]
fn config_keys_are_checked() {
    assert!(RunConfig::parse("").is_ok());
    for bad in [
        "sede = 3\n",
        "[lambda]\nmode = \"fixed\"\nlambda = 0.1\n",
        "[solver]\nrho = 2.0\n",
        "[kernel]\nkind = \"sobolev\"\n",
        "family = \"gamma\"\n",
    ] {
        let err = RunConfig::parse(bad).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{bad}: {err}");
    }
}

proptest! {
    #[test]
    fn save_then_load_preserves_bits(
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..60),
        d in 1usize..4,
    ) {
        let rows = values.len() / d;
        prop_assume!(rows > 0);
        let m = DMatrix::from_row_slice(rows, d, &values[..rows * d]);
        let s = TimeSeries::from_matrix(m).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        save_csv(&s, &path).unwrap();
        let back = load_csv(&path).unwrap();
        for (a, b) in s.values().iter().zip(back.values().iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(back.column_names(), s.column_names());
    }

    #[test]
    fn float_text_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(format_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}
