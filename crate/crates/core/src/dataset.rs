//! Sample and dataset model, CSV ingestion, structural validation and
//! cell counting.
//!
//! Every row carries a domain flag `r` (1 = labeled source, 0 = unlabeled
//! target), a binary background `a`, and a label `y` that exists only on
//! source rows. The label-presence rule is encoded in [`Sample`] itself: a
//! sample is a source sample exactly when it has a label.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Key of the `(r, y, a)` cell a sample belongs to. `y` is `None` on target rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub r: u8,
    pub y: Option<u8>,
    pub a: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    features: Vec<f64>,
    a: u8,
    y: Option<u8>,
}

impl Sample {
    /// Labeled source-domain sample (`r = 1`).
    pub fn source(features: Vec<f64>, y: bool, a: bool) -> Self {
        Self {
            features,
            a: a as u8,
            y: Some(y as u8),
        }
    }

    /// Unlabeled target-domain sample (`r = 0`).
    pub fn target(features: Vec<f64>, a: bool) -> Self {
        Self {
            features,
            a: a as u8,
            y: None,
        }
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn a(&self) -> u8 {
        self.a
    }

    pub fn y(&self) -> Option<u8> {
        self.y
    }

    pub fn r(&self) -> u8 {
        self.y.is_some() as u8
    }

    pub fn is_source(&self) -> bool {
        self.y.is_some()
    }

    pub fn key(&self) -> CellKey {
        CellKey {
            r: self.r(),
            y: self.y,
            a: self.a,
        }
    }

    /// Drop the label, turning a source sample into a target sample.
    pub fn into_target(self) -> Self {
        Self { y: None, ..self }
    }
}

/// Ordered collection of samples sharing feature dimension `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    q: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(q: usize, samples: Vec<Sample>) -> Result<Self, DataError> {
        if q == 0 {
            return Err(DataError::ZeroDimension);
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != q {
                return Err(DataError::DimensionMismatch {
                    row: i,
                    expected: q,
                    found: s.features.len(),
                });
            }
        }
        Ok(Self { q, samples })
    }

    pub fn empty(q: usize) -> Self {
        Self {
            q: q.max(1),
            samples: Vec::new(),
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    /// Samples whose `(r, y, a)` key satisfies `pred`, in original order.
    pub fn subset<P>(&self, pred: P) -> Dataset
    where
        P: Fn(CellKey) -> bool,
    {
        Dataset {
            q: self.q,
            samples: self
                .samples
                .iter()
                .filter(|s| pred(s.key()))
                .cloned()
                .collect(),
        }
    }

    pub fn cell_counts(&self) -> CellCounts {
        cell_counts(self)
    }

    /// Feature rows as slices, for handing to the fitter.
    pub fn rows(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.features.as_slice()).collect()
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Sample;
    type IntoIter = std::slice::Iter<'a, Sample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

/// Per-cell counts. Field names follow the `n_{r y a}` convention; target
/// cells have no label so they are indexed by background only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub n110: usize,
    pub n101: usize,
    pub n100: usize,
    /// Source rows in the forbidden `(1,1)` cell; zero on validated data.
    pub n111: usize,
    pub n1: usize,
    pub n0_dot1: usize,
    pub n0_dot0: usize,
    pub n0: usize,
    pub n: usize,
}

pub fn cell_counts(ds: &Dataset) -> CellCounts {
    let mut c = CellCounts::default();
    for s in ds {
        match (s.y, s.a) {
            (Some(1), 0) => c.n110 += 1,
            (Some(0), 1) => c.n101 += 1,
            (Some(0), 0) => c.n100 += 1,
            (Some(_), _) => c.n111 += 1,
            (None, 1) => c.n0_dot1 += 1,
            (None, _) => c.n0_dot0 += 1,
        }
    }
    c.n1 = c.n110 + c.n101 + c.n100 + c.n111;
    c.n0 = c.n0_dot1 + c.n0_dot0;
    c.n = c.n1 + c.n0;
    c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub counts: CellCounts,
    /// Indices of source rows in the `(y=1, a=1)` cell.
    pub forbidden_rows: Vec<usize>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    /// True when all five cells needed for fitting are populated.
    pub fn fit_ready(&self) -> bool {
        let c = &self.counts;
        c.n110 > 0 && c.n101 > 0 && c.n100 > 0 && c.n0_dot1 > 0 && c.n0_dot0 > 0
    }
}

/// Check the structured-missingness constraint and report empty cells.
///
/// A source row with `y = 1, a = 1` is an error unless `allow_forbidden_cell`
/// is set, in which case it is reported as a warning.
pub fn validate(ds: &Dataset, allow_forbidden_cell: bool) -> Result<ValidationReport, DataError> {
    let counts = cell_counts(ds);
    let forbidden_rows: Vec<usize> = ds
        .iter()
        .enumerate()
        .filter(|(_, s)| s.y == Some(1) && s.a == 1)
        .map(|(i, _)| i)
        .collect();
    if !forbidden_rows.is_empty() && !allow_forbidden_cell {
        return Err(DataError::ForbiddenCell {
            rows: forbidden_rows,
        });
    }

    let mut warnings = Vec::new();
    if !forbidden_rows.is_empty() {
        warnings.push(format!(
            "{} source row(s) in the (y=1, a=1) cell were accepted",
            forbidden_rows.len()
        ));
    }
    for (name, n) in [
        ("source (y=1, a=0)", counts.n110),
        ("source (y=0, a=1)", counts.n101),
        ("source (y=0, a=0)", counts.n100),
        ("target a=1", counts.n0_dot1),
        ("target a=0", counts.n0_dot0),
    ] {
        if n == 0 {
            warnings.push(format!("cell {name} is empty"));
        }
    }
    Ok(ValidationReport {
        counts,
        forbidden_rows,
        warnings,
    })
}

fn parse_binary(field: &str, row: usize, column: &str) -> Result<u8, DataError> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(DataError::Parse {
            row,
            message: format!("column {column}: expected 0 or 1, got {other:?}"),
        }),
    }
}

/// Parse CSV text in the `r,y,a,x1,...,xq` layout without applying the
/// structured-missingness check. Row numbers in errors are 1-based line
/// numbers. Blank lines are ignored.
pub fn parse_csv(text: &str, has_header: bool) -> Result<Dataset, DataError> {
    let mut q: Option<usize> = None;
    let mut samples = Vec::new();
    let mut header_pending = has_header;

    for (idx, raw) in text.lines().enumerate() {
        let row = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 4 {
            return Err(DataError::Parse {
                row,
                message: format!("expected at least 4 columns, found {}", fields.len()),
            });
        }
        let width = fields.len() - 3;
        match q {
            None => q = Some(width),
            Some(expected) if expected != width => {
                return Err(DataError::Parse {
                    row,
                    message: format!(
                        "expected {} columns, found {}",
                        expected + 3,
                        fields.len()
                    ),
                })
            }
            Some(_) => {}
        }

        let r = parse_binary(fields[0], row, "r")?;
        let a = parse_binary(fields[2], row, "a")?;
        let y = match (r, fields[1]) {
            (1, "") => {
                return Err(DataError::Parse {
                    row,
                    message: "source row (r=1) is missing its label".into(),
                })
            }
            (1, f) => Some(parse_binary(f, row, "y")?),
            (_, "") => None,
            (_, _) => {
                return Err(DataError::Parse {
                    row,
                    message: "target row (r=0) must not carry a label".into(),
                })
            }
        };

        let mut features = Vec::with_capacity(width);
        for (j, f) in fields[3..].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| DataError::Parse {
                row,
                message: format!("column x{}: {f:?} is not a number", j + 1),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    row,
                    message: format!("column x{}: non-finite value", j + 1),
                });
            }
            features.push(v);
        }
        samples.push(Sample { features, a, y });
    }

    match q {
        Some(q) => Dataset::new(q, samples),
        None => Err(DataError::Empty),
    }
}

/// Read a dataset from disk and apply default validation, which rejects
/// source rows in the `(y=1, a=1)` cell.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset, DataError> {
    let ds = read_csv(path, has_header)?;
    validate(&ds, false)?;
    Ok(ds)
}

/// Read a dataset from disk without the structured-missingness check.
pub fn read_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, has_header)
}

/// Format a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_csv_string(ds: &Dataset) -> String {
    let mut out = String::from("r,y,a");
    for j in 1..=ds.q() {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for s in ds {
        let _ = write!(out, "{},", s.r());
        if let Some(y) = s.y {
            let _ = write!(out, "{y}");
        }
        let _ = write!(out, ",{}", s.a);
        for v in &s.features {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    std::fs::write(path, to_csv_string(ds))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed() -> Dataset {
        Dataset::new(
            2,
            vec![
                Sample::source(vec![0.0, 1.0], true, false),
                Sample::source(vec![1.0, 1.0], false, true),
                Sample::source(vec![2.0, 1.0], false, false),
                Sample::target(vec![3.0, 1.0], true),
                Sample::target(vec![4.0, 1.0], false),
                Sample::source(vec![5.0, 1.0], false, false),
            ],
        )
        .unwrap()
    }

    #[test]
    fn parses_source_and_target_rows() {
        let ds = parse_csv("1,0,1,0.2,0.3\n0,,1,0.1,0.4\n", false).unwrap();
        assert_eq!(ds.q(), 2);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples()[0].y(), Some(0));
        assert_eq!(ds.samples()[0].a(), 1);
        assert_eq!(ds.samples()[1].y(), None);
        assert_eq!(ds.samples()[1].a(), 1);
        assert_eq!(ds.samples()[1].features(), &[0.1, 0.4]);
    }

    #[test]
    fn header_is_skipped() {
        let ds = parse_csv("r,y,a,x1\n1,1,0,2.5\n", true).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.samples()[0].features(), &[2.5]);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_csv("", false), Err(DataError::Empty)));
        assert!(matches!(parse_csv("r,y,a,x1\n\n", true), Err(DataError::Empty)));
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let cases = [
            ("1,0,1,0.2\n1,0,1\n", 2),
            ("1,0,1,0.2\n1,0,1,0.2,0.3\n", 2),
            ("1,0,1,abc\n", 1),
            ("0,1,1,0.5\n", 1),
            ("1,,1,0.5\n", 1),
            ("2,0,1,0.5\n", 1),
            ("1,0,7,0.5\n", 1),
            ("1,0,1,NaN\n", 1),
        ];
        for (text, line) in cases {
            match parse_csv(text, false) {
                Err(DataError::Parse { row, .. }) => assert_eq!(row, line, "{text:?}"),
                other => panic!("{text:?}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn forbidden_cell_rejected_by_default() {
        let ds = parse_csv("1,1,1,0.5,0.5\n", false).unwrap();
        match validate(&ds, false) {
            Err(DataError::ForbiddenCell { rows }) => assert_eq!(rows, vec![0]),
            other => panic!("unexpected {other:?}"),
        }
        let report = validate(&ds, true).unwrap();
        assert_eq!(report.forbidden_rows, vec![0]);
        assert!(report.warnings.iter().any(|w| w.contains("(y=1, a=1)")));
    }

    #[test]
    fn load_csv_applies_default_validation() {
        let dir = std::env::temp_dir().join(format!("subpop-ds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "r,y,a,x1,x2\n1,1,1,0.5,0.5\n").unwrap();
        assert!(matches!(
            load_csv(&path, true),
            Err(DataError::ForbiddenCell { .. })
        ));
        let empty = dir.join("empty.csv");
        std::fs::write(&empty, "").unwrap();
        assert!(matches!(load_csv(&empty, true), Err(DataError::Empty)));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn conforming_dataset_passes_without_warnings() {
        let report = validate(&mixed(), false).unwrap();
        assert!(report.fit_ready());
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn empty_cells_warn() {
        let ds = mixed().subset(|k| k.r == 1);
        let report = validate(&ds, false).unwrap();
        assert!(!report.fit_ready());
        assert_eq!(report.warnings.len(), 2);
    }

    #[test]
    fn counts_match_worked_example() {
        let mut samples = Vec::new();
        samples.extend((0..30).map(|_| Sample::source(vec![0.0], true, false)));
        samples.extend((0..50).map(|_| Sample::source(vec![0.0], false, true)));
        samples.extend((0..20).map(|_| Sample::source(vec![0.0], false, false)));
        samples.extend((0..60).map(|_| Sample::target(vec![0.0], true)));
        samples.extend((0..40).map(|_| Sample::target(vec![0.0], false)));
        let c = Dataset::new(1, samples).unwrap().cell_counts();
        assert_eq!((c.n110, c.n101, c.n100), (30, 50, 20));
        assert_eq!((c.n1, c.n0_dot1, c.n0_dot0, c.n0, c.n), (100, 60, 40, 100, 200));
    }

    #[test]
    fn counts_degenerate_cases() {
        assert_eq!(Dataset::empty(3).cell_counts(), CellCounts::default());
        let one = Dataset::new(1, vec![Sample::target(vec![1.0], false)]).unwrap();
        let c = one.cell_counts();
        assert_eq!(
            c,
            CellCounts {
                n0_dot0: 1,
                n0: 1,
                n: 1,
                ..Default::default()
            }
        );
    }

    #[test]
    fn subset_examples() {
        let ds = mixed();
        let land = ds.subset(|k| k.r == 1 && k.a == 0);
        assert_eq!(land.len(), 3);
        assert!(land.iter().all(|s| s.is_source() && s.a() == 0));
        // order preserved
        assert_eq!(land.samples()[0].features()[0], 0.0);
        assert_eq!(land.samples()[2].features()[0], 5.0);

        assert!(ds.subset(|_| false).is_empty());

        let target = ds.subset(|k| k.r == 0);
        assert_eq!(target.len(), 2);
        assert!(target.iter().all(|s| s.y().is_none()));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = Dataset::new(
            2,
            vec![
                Sample::target(vec![1.0, 2.0], true),
                Sample::target(vec![1.0], true),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, DataError::DimensionMismatch { row: 1, .. }));
    }

    #[test]
    fn writer_uses_seventeen_digits() {
        let ds = Dataset::new(1, vec![Sample::target(vec![0.1], false)]).unwrap();
        let text = to_csv_string(&ds);
        assert_eq!(text, "r,y,a,x1\n0,,0,1.0000000000000001e-1\n");
    }
}
