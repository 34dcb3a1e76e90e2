//! File formats: matrices (JSON and CSV), masks, sparse outliers and trial
//! dumps. All indices in JSON documents are zero-based.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::completion::Mask;
use crate::error::{Result, TdoaError};
use crate::matrix::{TdoaMatrix, PARSE_SKEW_TOLERANCE};
use crate::robust::OutlierMatrix;
use crate::sim::{Scene, Trial};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl Format {
    /// `.csv` means CSV, anything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format '{other}' (expected json|csv)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    /// Replace the input by its skew-symmetric part instead of rejecting it.
    pub symmetrize: bool,
    pub tolerance: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            symmetrize: false,
            tolerance: PARSE_SKEW_TOLERANCE,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixDoc {
    n: usize,
    unit: String,
    entries: Vec<f64>,
}

const UNIT: &str = "seconds";

fn build(n: usize, entries: Vec<f64>, opts: &ParseOptions) -> Result<TdoaMatrix> {
    if opts.symmetrize {
        if entries.len() != n * n {
            return Err(TdoaError::DimensionMismatch {
                expected: n * n,
                actual: entries.len(),
            });
        }
        TdoaMatrix::from_row_major(n, entries, f64::INFINITY)
    } else {
        TdoaMatrix::from_row_major(n, entries, opts.tolerance)
    }
}

pub fn matrix_from_json(text: &str, opts: &ParseOptions) -> Result<TdoaMatrix> {
    let doc: MatrixDoc = serde_json::from_str(text).map_err(|e| TdoaError::Parse(e.to_string()))?;
    if doc.unit != UNIT {
        return Err(TdoaError::Parse(format!("unsupported unit '{}'", doc.unit)));
    }
    build(doc.n, doc.entries, opts)
}

/// Canonical JSON: one line, keys in fixed order, trailing newline.
pub fn matrix_to_json(m: &TdoaMatrix) -> String {
    let doc = MatrixDoc {
        n: m.n(),
        unit: UNIT.into(),
        entries: m.as_row_major().to_vec(),
    };
    let mut s = serde_json::to_string(&doc).expect("matrix serializes");
    s.push('\n');
    s
}

pub fn matrix_from_csv(text: &str, opts: &ParseOptions) -> Result<TdoaMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| TdoaError::Parse("empty CSV".into()))?
        .map_err(|e| TdoaError::Parse(e.to_string()))?;
    let n = match (header.get(0), header.get(1)) {
        (Some("tdoa_matrix"), Some(spec)) => spec
            .strip_prefix("n=")
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| TdoaError::Parse(format!("bad size field '{spec}'")))?,
        _ => {
            return Err(TdoaError::Parse(
                "expected header 'tdoa_matrix,n=<n>'".into(),
            ))
        }
    };
    let mut entries = Vec::with_capacity(n * n);
    for (row, rec) in records.enumerate() {
        let rec = rec.map_err(|e| TdoaError::Parse(e.to_string()))?;
        if rec.len() != n {
            return Err(TdoaError::Parse(format!(
                "row {} has {} columns, expected {n}",
                row + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            let v = field
                .parse::<f64>()
                .map_err(|_| TdoaError::Parse(format!("row {}: bad number '{field}'", row + 1)))?;
            entries.push(v);
        }
    }
    if entries.len() != n * n {
        return Err(TdoaError::Parse(format!(
            "expected {n} rows, got {}",
            entries.len() / n.max(1)
        )));
    }
    build(n, entries, opts)
}

pub fn matrix_to_csv(m: &TdoaMatrix) -> String {
    let n = m.n();
    let mut s = format!("tdoa_matrix,n={n}\n");
    for row in m.as_row_major().chunks_exact(n) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_matrix(text: &str, format: Format, opts: &ParseOptions) -> Result<TdoaMatrix> {
    match format {
        Format::Json => matrix_from_json(text, opts),
        Format::Csv => matrix_from_csv(text, opts),
    }
}

pub fn render_matrix(m: &TdoaMatrix, format: Format) -> String {
    match format {
        Format::Json => matrix_to_json(m),
        Format::Csv => matrix_to_csv(m),
    }
}

pub fn read_matrix(path: &Path, opts: &ParseOptions) -> Result<TdoaMatrix> {
    parse_matrix(&fs::read_to_string(path)?, Format::from_path(path), opts)
}

pub fn write_matrix(path: &Path, m: &TdoaMatrix, format: Format) -> Result<()> {
    fs::write(path, render_matrix(m, format))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct MaskDoc {
    n: usize,
    missing_pairs: Vec<(usize, usize)>,
}

pub fn mask_from_json(text: &str) -> Result<Mask> {
    let doc: MaskDoc = serde_json::from_str(text).map_err(|e| TdoaError::Parse(e.to_string()))?;
    Mask::from_missing_pairs(doc.n, &doc.missing_pairs)
}

pub fn mask_to_json(mask: &Mask) -> String {
    let doc = MaskDoc {
        n: mask.n(),
        missing_pairs: mask.missing_pairs(),
    };
    let mut s = serde_json::to_string(&doc).expect("mask serializes");
    s.push('\n');
    s
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    mask_from_json(&fs::read_to_string(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct SparseDoc {
    n: usize,
    triplets: Vec<(usize, usize, f64)>,
}

pub fn outliers_to_json(s: &OutlierMatrix) -> String {
    let doc = SparseDoc {
        n: s.n(),
        triplets: s.triplets(),
    };
    let mut out = serde_json::to_string(&doc).expect("outliers serialize");
    out.push('\n');
    out
}

pub fn outliers_from_json(text: &str) -> Result<OutlierMatrix> {
    let doc: SparseDoc = serde_json::from_str(text).map_err(|e| TdoaError::Parse(e.to_string()))?;
    OutlierMatrix::from_triplets(doc.n, &doc.triplets)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrialDoc {
    scene: Scene,
    truth: MatrixDoc,
    corrupted: MatrixDoc,
    mask: MaskDoc,
    injected_outliers: Vec<(usize, usize)>,
    seed: u64,
}

fn doc_of(m: &TdoaMatrix) -> MatrixDoc {
    MatrixDoc {
        n: m.n(),
        unit: UNIT.into(),
        entries: m.as_row_major().to_vec(),
    }
}

pub fn trial_to_json(t: &Trial) -> String {
    let doc = TrialDoc {
        scene: t.scene.clone(),
        truth: doc_of(&t.ground_truth),
        corrupted: doc_of(&t.corrupted),
        mask: MaskDoc {
            n: t.mask.n(),
            missing_pairs: t.mask.missing_pairs(),
        },
        injected_outliers: t.injected_outliers.clone(),
        seed: t.seed,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("trial serializes");
    s.push('\n');
    s
}

pub fn trial_from_json(text: &str) -> Result<Trial> {
    let doc: TrialDoc = serde_json::from_str(text).map_err(|e| TdoaError::Parse(e.to_string()))?;
    doc.scene.validate()?;
    let opts = ParseOptions::default();
    Ok(Trial {
        scene: doc.scene,
        ground_truth: build(doc.truth.n, doc.truth.entries, &opts)?,
        corrupted: build(doc.corrupted.n, doc.corrupted.entries, &opts)?,
        mask: Mask::from_missing_pairs(doc.mask.n, &doc.mask.missing_pairs)?,
        injected_outliers: doc.injected_outliers,
        seed: doc.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{random_scene, CorruptionSpec};

    const CANON: &str = "{\"n\":3,\"unit\":\"seconds\",\"entries\":[0.0,-0.001,-0.002,0.001,0.0,-0.001,0.002,0.001,0.0]}\n";

    #[test]
    fn canonical_json_is_byte_stable() {
        let m = matrix_from_json(CANON, &ParseOptions::default()).unwrap();
        assert_eq!(matrix_to_json(&m), CANON);
    }

    #[test]
    fn csv_matches_json() {
        let m = matrix_from_json(CANON, &ParseOptions::default()).unwrap();
        let csv = matrix_to_csv(&m);
        assert!(csv.starts_with("tdoa_matrix,n=3\n"));
        assert_eq!(matrix_from_csv(&csv, &ParseOptions::default()).unwrap(), m);
        let hand = "tdoa_matrix,n=2\n0, 1.5e-3\n-0.0015, 0\n";
        assert_eq!(
            matrix_from_csv(hand, &ParseOptions::default())
                .unwrap()
                .get(0, 1),
            1.5e-3
        );
    }

    #[test]
    fn asymmetry_is_reported_with_position() {
        let bad = "{\"n\":2,\"unit\":\"seconds\",\"entries\":[0.0,0.001,0.0,0.0]}";
        match matrix_from_json(bad, &ParseOptions::default()) {
            Err(TdoaError::NotSkewSymmetric { row, col, .. }) => assert_eq!((row, col), (1, 2)),
            other => panic!("unexpected {other:?}"),
        }
        let opts = ParseOptions {
            symmetrize: true,
            ..Default::default()
        };
        let m = matrix_from_json(bad, &opts).unwrap();
        assert_eq!(m.get(0, 1), 0.0005);
    }

    #[test]
    fn malformed_inputs() {
        let o = ParseOptions::default();
        assert!(matrix_from_json("{\"n\":2,\"unit\":\"ms\",\"entries\":[0,0,0,0]}", &o).is_err());
        assert!(
            matrix_from_json("{\"n\":2,\"unit\":\"seconds\",\"entries\":[0,0,0]}", &o).is_err()
        );
        assert!(matrix_from_csv("matrix,n=2\n0,0\n0,0\n", &o).is_err());
        assert!(matrix_from_csv("tdoa_matrix,n=2\n0,0\n", &o).is_err());
        assert!(matrix_from_csv("tdoa_matrix,n=2\n0,x\n0,0\n", &o).is_err());
    }

    #[test]
    fn mask_and_outlier_docs() {
        let mask = mask_from_json("{\"n\":4,\"missing_pairs\":[[2,0],[1,3]]}").unwrap();
        assert_eq!(mask.missing_pairs(), vec![(0, 2), (1, 3)]);
        assert_eq!(mask_from_json(&mask_to_json(&mask)).unwrap(), mask);
        let s = OutlierMatrix::from_triplets(3, &[(0, 1, 2e-3)]).unwrap();
        let text = outliers_to_json(&s);
        assert!(text.contains("[1,0,-0.002]"));
        assert_eq!(outliers_from_json(&text).unwrap(), s);
    }

    #[test]
    fn trial_dump_roundtrip() {
        let scene = random_scene(6, 1.0, 2.0, 2).unwrap();
        let spec = CorruptionSpec {
            noise_sigma: 1e-6,
            outlier_count: 2,
            missing_fraction: 0.2,
            rng_seed: 5,
            ..Default::default()
        };
        let t = Trial::new(scene, &spec).unwrap();
        assert_eq!(trial_from_json(&trial_to_json(&t)).unwrap(), t);
    }
}
