//! Datasets of scalar `(t, y)` observations, CSV ingestion, partitioning into
//! agent training sets plus the principal's held-out set, and synthetic logistic
//! data generation.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{logistic_predict, LogisticGrowthParams};

/// Label given to the last output of [`partition`].
pub const PRINCIPAL_LABEL: &str = "principal-test";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<(f64, f64)>,
    label: String,
}

impl Dataset {
    /// Builds a dataset, rejecting non-finite coordinates.
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Result<Self> {
        let label = label.into();
        if let Some(i) = points
            .iter()
            .position(|(x, y)| !(x.is_finite() && y.is_finite()))
        {
            return Err(Error::invalid(format!(
                "dataset `{label}` has a non-finite point at index {i}"
            )));
        }
        Ok(Self { points, label })
    }

    pub fn empty(label: impl Into<String>) -> Self {
        Self {
            points: Vec::new(),
            label: label.into(),
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Writes the dataset as a `t,y` CSV file.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("t,y\n");
        for (t, y) in &self.points {
            out.push_str(&format!("{t},{y}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Reads a two-column `t,y` CSV file. A header row `t,y` is optional.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |row: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        msg,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes.as_slice());

    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(row, e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if i == 0 && record.len() == 2 && &record[0] == "t" && &record[1] == "y" {
            continue;
        }
        if record.len() != 2 {
            return Err(parse_err(
                row,
                format!("expected 2 columns, found {}", record.len()),
            ));
        }
        let cell = |j: usize| -> Result<f64> {
            let v: f64 = record[j]
                .parse()
                .map_err(|_| parse_err(row, format!("non-numeric cell `{}`", &record[j])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(row, format!("non-finite value `{}`", &record[j])))
            }
        };
        points.push((cell(0)?, cell(1)?));
    }
    if points.is_empty() {
        return Err(parse_err(0, "no data rows".into()));
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(label, points)
}

/// How a source dataset is split into `K` agent training sets and one test set.
///
/// The last recipient is always the principal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PartitionSpec {
    /// Contiguous slices given as 1-based inclusive `(start, end)` index pairs.
    ByRange {
        ranges: Vec<(usize, usize)>,
    },
    BootstrapWithReplacement {
        sizes: Vec<usize>,
        seed: u64,
    },
    BootstrapWithoutReplacement {
        sizes: Vec<usize>,
        seed: u64,
    },
}

impl PartitionSpec {
    pub fn recipients(&self) -> usize {
        match self {
            PartitionSpec::ByRange { ranges } => ranges.len(),
            PartitionSpec::BootstrapWithReplacement { sizes, .. }
            | PartitionSpec::BootstrapWithoutReplacement { sizes, .. } => sizes.len(),
        }
    }

    /// Checks the partition against a source of `source_len` points.
    pub fn validate(&self, source_len: usize) -> Result<()> {
        if self.recipients() < 2 {
            return Err(Error::invalid(
                "a partition needs at least one agent and the principal",
            ));
        }
        match self {
            PartitionSpec::ByRange { ranges } => {
                for (i, &(start, end)) in ranges.iter().enumerate() {
                    if start == 0 || start > end || end > source_len {
                        return Err(Error::invalid(format!(
                            "range {i} ({start}, {end}) is outside 1..={source_len} or reversed"
                        )));
                    }
                }
                let mut sorted = ranges.clone();
                sorted.sort_unstable();
                if let Some(w) = sorted.windows(2).find(|w| w[1].0 <= w[0].1) {
                    return Err(Error::invalid(format!(
                        "ranges {:?} and {:?} overlap",
                        w[0], w[1]
                    )));
                }
            }
            PartitionSpec::BootstrapWithReplacement { sizes, .. } => {
                if source_len == 0 {
                    return Err(Error::invalid("cannot resample an empty source"));
                }
                if sizes.contains(&0) {
                    return Err(Error::invalid("bootstrap sizes must be positive"));
                }
            }
            PartitionSpec::BootstrapWithoutReplacement { sizes, .. } => {
                if sizes.contains(&0) {
                    return Err(Error::invalid("bootstrap sizes must be positive"));
                }
                let total: usize = sizes.iter().sum();
                if total > source_len {
                    return Err(Error::invalid(format!(
                        "sizes sum to {total} but the source has {source_len} points"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn recipient_label(i: usize, recipients: usize) -> String {
    if i + 1 == recipients {
        PRINCIPAL_LABEL.to_string()
    } else {
        format!("agent-{}", i + 1)
    }
}

/// Splits `source` into `K + 1` datasets labelled `agent-1..K` and `principal-test`.
pub fn partition(source: &Dataset, spec: &PartitionSpec) -> Result<Vec<Dataset>> {
    spec.validate(source.len())?;
    let recipients = spec.recipients();
    let pts = source.points();
    let pick = |indices: &[usize]| -> Vec<(f64, f64)> { indices.iter().map(|&i| pts[i]).collect() };

    let groups: Vec<Vec<(f64, f64)>> = match spec {
        PartitionSpec::ByRange { ranges } => ranges
            .iter()
            .map(|&(start, end)| pts[start - 1..end].to_vec())
            .collect(),
        PartitionSpec::BootstrapWithReplacement { sizes, seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(*seed);
            sizes
                .iter()
                .map(|&m| {
                    let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..pts.len())).collect();
                    pick(&idx)
                })
                .collect()
        }
        PartitionSpec::BootstrapWithoutReplacement { sizes, seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(*seed);
            let mut order: Vec<usize> = (0..pts.len()).collect();
            order.shuffle(&mut rng);
            let mut offset = 0;
            sizes
                .iter()
                .map(|&m| {
                    let chunk = pick(&order[offset..offset + m]);
                    offset += m;
                    chunk
                })
                .collect()
        }
    };

    groups
        .into_iter()
        .enumerate()
        .map(|(i, points)| Dataset::new(recipient_label(i, recipients), points))
        .collect()
}

/// Samples `y_i = N(t_i) + eps_i` with `eps_i ~ Normal(0, noise_sd^2)`.
pub fn generate_logistic(
    params: &LogisticGrowthParams,
    times: &[f64],
    noise_sd: f64,
    seed: u64,
) -> Result<Dataset> {
    if times.is_empty() {
        return Err(Error::invalid("no sample times given"));
    }
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(Error::invalid(format!(
            "noise_sd must be finite and nonnegative, got {noise_sd}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(times.len());
    for &t in times {
        let mut y = logistic_predict(params, t)?;
        if noise_sd > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            y += noise_sd * z;
        }
        points.push((t, y));
    }
    Dataset::new("synthetic-logistic", points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{quadratic_loss, ModelSpec};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn gause_fit() -> LogisticGrowthParams {
        LogisticGrowthParams::new(1.1224, 229.9285, 0.7259).unwrap()
    }

    fn days() -> Vec<f64> {
        (0..24).map(f64::from).collect()
    }

    fn numbered(n: usize) -> Dataset {
        Dataset::new("src", (0..n).map(|i| (i as f64, 10.0 * i as f64)).collect()).unwrap()
    }

    #[test]
    fn load_two_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "0,1.2\n1,3.4").unwrap();
        let d = load_csv(&p).unwrap();
        assert_eq!(d.points(), &[(0.0, 1.2), (1.0, 3.4)]);
        assert_eq!(d.label(), "d");
    }

    #[test]
    fn load_with_header_and_whitespace() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        fs::write(&p, "t,y\n 0 , 1\n2,3\n\n").unwrap();
        assert_eq!(load_csv(&p).unwrap().len(), 2);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        fs::write(&empty, "").unwrap();
        assert!(matches!(load_csv(&empty), Err(Error::Parse { row: 0, .. })));

        let header_only = dir.path().join("header.csv");
        fs::write(&header_only, "t,y\n").unwrap();
        assert!(matches!(load_csv(&header_only), Err(Error::Parse { .. })));

        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "0,1\n1,abc\n").unwrap();
        match load_csv(&bad) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }

        let wide = dir.path().join("wide.csv");
        fs::write(&wide, "0,1,2\n").unwrap();
        assert!(matches!(load_csv(&wide), Err(Error::Parse { row: 1, .. })));

        assert!(matches!(
            load_csv(dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn load_gause_style_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        generate_logistic(&gause_fit(), &days(), 10.0, 3)
            .unwrap()
            .write_csv(&p)
            .unwrap();
        let d = load_csv(&p).unwrap();
        assert_eq!(d.len(), 24);
        // Shortest round-trip formatting reproduces every value exactly.
        assert_eq!(
            d.points(),
            generate_logistic(&gause_fit(), &days(), 10.0, 3)
                .unwrap()
                .points()
        );
    }

    #[test]
    fn gause_by_range_sizes() {
        let src = numbered(24);
        let spec = PartitionSpec::ByRange {
            ranges: vec![(1, 8), (16, 24), (9, 15)],
        };
        let parts = partition(&src, &spec).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Dataset::len).collect();
        assert_eq!(sizes, vec![8, 9, 7]);
        let labels: Vec<&str> = parts.iter().map(Dataset::label).collect();
        assert_eq!(labels, vec!["agent-1", "agent-2", "principal-test"]);
        assert_eq!(parts[0].points()[0], (0.0, 0.0));
        assert_eq!(parts[1].points()[0], (15.0, 150.0));
        assert_eq!(parts[2].points()[6], (14.0, 140.0));
    }

    #[test]
    fn whole_range_reproduces_source() {
        let src = numbered(10);
        let spec = PartitionSpec::ByRange {
            ranges: vec![(1, 10), (1, 1)],
        };
        assert!(partition(&src, &spec).is_err());
        let spec = PartitionSpec::ByRange {
            ranges: vec![(1, 9), (10, 10)],
        };
        assert_eq!(
            partition(&src, &spec).unwrap()[0].points(),
            &src.points()[..9]
        );
        let bigger = numbered(11);
        let spec = PartitionSpec::ByRange {
            ranges: vec![(1, 10), (11, 11)],
        };
        assert_eq!(partition(&bigger, &spec).unwrap()[0].points(), src.points());
    }

    #[test]
    fn invalid_specs_rejected() {
        let src = numbered(5);
        let bad = [
            PartitionSpec::ByRange {
                ranges: vec![(0, 2), (3, 4)],
            },
            PartitionSpec::ByRange {
                ranges: vec![(1, 6), (3, 4)],
            },
            PartitionSpec::ByRange {
                ranges: vec![(3, 2), (4, 4)],
            },
            PartitionSpec::ByRange {
                ranges: vec![(1, 5)],
            },
            PartitionSpec::BootstrapWithoutReplacement {
                sizes: vec![3, 3],
                seed: 0,
            },
            PartitionSpec::BootstrapWithReplacement {
                sizes: vec![0, 3],
                seed: 0,
            },
        ];
        for spec in bad {
            assert!(
                matches!(partition(&src, &spec), Err(Error::InvalidArgument(_))),
                "{spec:?}"
            );
        }
    }

    #[test]
    fn bootstrap_is_seeded() {
        let src = numbered(24);
        let spec = PartitionSpec::BootstrapWithReplacement {
            sizes: vec![8, 9, 7],
            seed: 11,
        };
        let a = partition(&src, &spec).unwrap();
        let b = partition(&src, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.iter().map(Dataset::len).collect::<Vec<_>>(),
            vec![8, 9, 7]
        );
        let other = PartitionSpec::BootstrapWithReplacement {
            sizes: vec![8, 9, 7],
            seed: 12,
        };
        assert_ne!(a, partition(&src, &other).unwrap());
    }

    #[test]
    fn bootstrap_without_replacement_is_disjoint() {
        let src = numbered(24);
        let spec = PartitionSpec::BootstrapWithoutReplacement {
            sizes: vec![8, 9, 7],
            seed: 5,
        };
        let parts = partition(&src, &spec).unwrap();
        let mut seen = HashSet::new();
        for p in &parts {
            for (x, _) in p.points() {
                assert!(seen.insert(*x as i64));
            }
        }
        assert_eq!(seen.len(), 24);
    }

    #[test]
    fn noiseless_generation_lies_on_curve() {
        let d = generate_logistic(&gause_fit(), &days(), 0.0, 0).unwrap();
        assert_eq!(d.len(), 24);
        assert_eq!(d.points()[0], (0.0, 1.1224));
        let m = ModelSpec::logistic_growth();
        assert!(quadratic_loss(&m, &gause_fit().to_vec(), &d).unwrap() <= 1e-20);
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate_logistic(&gause_fit(), &days(), 10.0, 9).unwrap();
        assert_eq!(
            a,
            generate_logistic(&gause_fit(), &days(), 10.0, 9).unwrap()
        );
        assert_ne!(
            a,
            generate_logistic(&gause_fit(), &days(), 10.0, 10).unwrap()
        );
        assert!(generate_logistic(&gause_fit(), &[], 1.0, 0).is_err());
        assert!(generate_logistic(&gause_fit(), &[1.0], -1.0, 0).is_err());
    }

    #[test]
    fn non_finite_points_rejected() {
        assert!(Dataset::new("x", vec![(0.0, f64::NAN)]).is_err());
    }

    proptest! {
        #[test]
        fn by_range_partitions_are_disjoint_subsets(
            n in 3usize..40,
            cuts in prop::collection::vec(0usize..1000, 2..5),
        ) {
            // Turn arbitrary cut points into sorted, disjoint 1-based ranges.
            let mut bounds: Vec<usize> = cuts.iter().map(|c| c % n).collect();
            bounds.push(0);
            bounds.push(n);
            bounds.sort_unstable();
            bounds.dedup();
            prop_assume!(bounds.len() >= 3);
            let ranges: Vec<(usize, usize)> =
                bounds.windows(2).map(|w| (w[0] + 1, w[1])).collect();
            let src = numbered(n);
            let parts = partition(&src, &PartitionSpec::ByRange { ranges: ranges.clone() }).unwrap();
            let mut seen = HashSet::new();
            for (p, (s, e)) in parts.iter().zip(&ranges) {
                prop_assert_eq!(p.len(), e - s + 1);
                for pt in p.points() {
                    prop_assert!(src.points().contains(pt));
                    prop_assert!(seen.insert(pt.0 as i64));
                }
            }
        }
    }
}
