//! Labeled policy records and their CSV form.
//!
//! Header: `l1_sp,l1_sw,l1_sa,...,lL_sa,accuracy`. Values use the shortest
//! round-trip decimal representation, so a write/read cycle is lossless.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::searchspace::{Component, Policy, SearchSpace};

/// A labeled discrete policy.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord<T> {
    pub policy: Policy<T>,
    /// Accuracy as a fraction.
    pub accuracy: T,
    /// Importance weight, refreshed every training epoch.
    pub weight: T,
}

impl<T: Scalar> SampleRecord<T> {
    pub fn new(policy: Policy<T>, accuracy: T) -> Self {
        Self { policy, accuracy, weight: T::one() }
    }
}

/// Column names for the policy dimensions of an `L`-layer space.
pub fn policy_columns(num_layers: usize) -> Vec<String> {
    (1..=num_layers).flat_map(|l| Component::ALL.iter().map(move |c| format!("l{l}_{}", c.short_name()))).collect()
}

pub fn write_csv<T: Scalar, W: Write>(records: &[SampleRecord<T>], num_layers: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = policy_columns(num_layers);
    header.push("accuracy".into());
    w.write_record(&header)?;
    for r in records {
        if r.policy.len() != 3 * num_layers {
            return Err(Error::DimensionMismatch { expected: 3 * num_layers, actual: r.policy.len() });
        }
        let mut row: Vec<String> = r.policy.values().iter().map(|v| v.to_string()).collect();
        row.push(r.accuracy.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv<T: Scalar>(records: &[SampleRecord<T>], num_layers: usize, path: impl AsRef<Path>) -> Result<()> {
    write_csv(records, num_layers, File::create(path)?)
}

/// Parses records and checks each policy against the space grid.
pub fn parse_csv<T: Scalar, R: Read>(space: &SearchSpace<T>, input: R) -> Result<Vec<SampleRecord<T>>> {
    let mut r = csv::Reader::from_reader(input);
    let expected = policy_columns(space.num_layers());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() != expected.len() + 1
        || header[..expected.len()] != expected[..]
        || header[expected.len()] != "accuracy"
    {
        return Err(Error::Malformed(format!("unexpected header for a {}-layer space", space.num_layers())));
    }
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: Vec<T> = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map(T::of)
                    .map_err(|_| Error::Malformed(format!("row {}: bad number {f:?}", row + 1)))
            })
            .collect::<Result<_>>()?;
        let (policy, acc) = vals.split_at(space.dim());
        let accuracy = acc[0];
        if !(accuracy >= T::zero() && accuracy <= T::one()) {
            return Err(Error::AccuracyRange(accuracy.as_f64()));
        }
        let policy = Policy::new(policy.to_vec());
        space.grid_key(&policy)?;
        out.push(SampleRecord::new(policy, accuracy));
    }
    Ok(out)
}

pub fn read_csv<T: Scalar>(space: &SearchSpace<T>, path: impl AsRef<Path>) -> Result<Vec<SampleRecord<T>>> {
    parse_csv(space, File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::searchspace::LayerSpec;

    fn space() -> SearchSpace<f64> {
        let bits = vec![2.0, 4.0, 8.0];
        let l = LayerSpec::new(1.0, vec![0.0, 0.25], bits.clone(), bits);
        SearchSpace::new("s", vec![l.clone(), l]).unwrap()
    }

    #[test]
    fn header_layout() {
        assert_eq!(policy_columns(2), vec!["l1_sp", "l1_sw", "l1_sa", "l2_sp", "l2_sw", "l2_sa"]);
    }

    #[test]
    fn lossless_roundtrip() {
        let s = space();
        let recs: Vec<_> = s
            .enumerate_grid()
            .into_iter()
            .enumerate()
            .map(|(i, p)| SampleRecord::new(p, 0.1 + i as f64 / 3.0e3))
            .collect();
        let mut buf = Vec::new();
        write_csv(&recs, 2, &mut buf).unwrap();
        assert_eq!(parse_csv(&s, buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn rejects_bad_rows() {
        let s = space();
        let bad_header = "a,b\n1,2\n";
        assert!(parse_csv(&s, bad_header.as_bytes()).is_err());
        let head = policy_columns(2).join(",") + ",accuracy\n";
        let off_grid = format!("{head}0.1,2,2,0,2,2,0.5\n");
        assert!(matches!(parse_csv(&s, off_grid.as_bytes()), Err(Error::OffGrid { .. })));
        let bad_acc = format!("{head}0,2,2,0,2,2,1.5\n");
        assert!(matches!(parse_csv(&s, bad_acc.as_bytes()), Err(Error::AccuracyRange(_))));
    }
}
