//! Data model, CSV ingestion, validation, and covariate rescaling.
//!
//! A [`Dataset`] is an immutable sample of (outcome, treatment, covariates)
//! rows plus the bounds metadata downstream estimators need: the observed
//! treatment support [t_lo, t_hi], the outcome bound, and the per-column
//! (min, max) map that carries covariates into the unit box where the sieve
//! basis lives. Treatments are never rescaled; bandwidths are in raw
//! treatment units.

use crate::error::DataError;
use std::io::Read;
use std::sync::Arc;

/// One observational record.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Outcome Y (bounded; |y| <= Dataset::m_bound).
    pub y: f64,
    /// Treatment level T inside [t_lo, t_hi].
    pub t: f64,
    /// Covariate vector X of length d_X.
    pub x: Vec<f64>,
}

/// An immutable validated sample.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Observations; all share the same covariate dimension.
    pub rows: Vec<Observation>,
    /// Covariate dimension d_X.
    pub d_x: usize,
    /// Observed lower bound of the treatment support.
    pub t_lo: f64,
    /// Observed upper bound of the treatment support.
    pub t_hi: f64,
    /// Outcome bound M = max |y|.
    pub m_bound: f64,
    /// Per-column (min, max): the affine map from [0,1] back to the
    /// original covariate scale, `orig = min + (max - min) * scaled`.
    pub x_scale: Vec<(f64, f64)>,
}

impl Dataset {
    /// Build a dataset from rows, computing bounds metadata.
    ///
    /// `x_scale` is initialized to the observed per-column (min, max);
    /// covariates are left on their original scale until
    /// [`rescale_covariates`] is applied.
    pub fn from_rows(rows: Vec<Observation>) -> Result<Self, DataError> {
        if rows.len() < 2 {
            return Err(DataError::TooFewRows(rows.len()));
        }
        let d_x = rows[0].x.len();
        for (i, r) in rows.iter().enumerate() {
            if r.x.len() != d_x {
                return Err(DataError::Malformed(format!(
                    "row {} has {} covariates, expected {}",
                    i + 1,
                    r.x.len(),
                    d_x
                )));
            }
            if !r.y.is_finite() || !r.t.is_finite() || r.x.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFiniteValue(i + 1));
            }
        }
        let t_lo = rows.iter().map(|r| r.t).fold(f64::INFINITY, f64::min);
        let t_hi = rows.iter().map(|r| r.t).fold(f64::NEG_INFINITY, f64::max);
        let m_bound = rows.iter().map(|r| r.y.abs()).fold(0.0, f64::max);
        let x_scale = (0..d_x)
            .map(|p| {
                let lo = rows.iter().map(|r| r.x[p]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r.x[p]).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect();
        Ok(Self {
            rows,
            d_x,
            t_lo,
            t_hi,
            m_bound,
            x_scale,
        })
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Map a covariate vector on the current (scaled) coordinates back to
    /// the original scale via `x_scale`.
    pub fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.x_scale)
            .map(|(&v, &(lo, hi))| lo + (hi - lo) * v)
            .collect()
    }
}

/// Known or fitted inverse propensity evaluator g(t, x) = 1/f(t|x).
#[derive(Clone)]
pub struct PropensityOracle {
    /// Positive lower bound on the conditional density over the support.
    pub f_lower: f64,
    eval: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
}

impl PropensityOracle {
    /// Wrap an inverse-density evaluator with its density lower bound.
    pub fn new(f_lower: f64, g: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>) -> Self {
        assert!(f_lower > 0.0, "f_lower must be positive");
        Self { f_lower, eval: g }
    }

    /// Oracle for a conditional density that is constant in (t, x),
    /// e.g. a uniform treatment on a fixed support.
    pub fn constant_density(f: f64) -> Self {
        assert!(f > 0.0, "density must be positive");
        Self {
            f_lower: f,
            eval: Arc::new(move |_, _| 1.0 / f),
        }
    }

    /// g(t, x) = 1/f(t|x).
    pub fn g(&self, t: f64, x: &[f64]) -> f64 {
        (self.eval)(t, x)
    }

    /// Upper bound 1/f_lower on g.
    pub fn g_cap(&self) -> f64 {
        1.0 / self.f_lower
    }
}

impl std::fmt::Debug for PropensityOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PropensityOracle")
            .field("f_lower", &self.f_lower)
            .finish_non_exhaustive()
    }
}

/// Load a dataset from a CSV file with header `y,t,x1,...,x{d_X}`.
pub fn load_csv(path: &std::path::Path, d_x: usize) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::Io(e.to_string()))?;
    load_csv_reader(file, d_x)
}

/// Load a dataset from any CSV reader (see [`load_csv`]).
pub fn load_csv_reader<R: Read>(reader: R, d_x: usize) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DataError::Malformed(e.to_string()))?
        .clone();
    let mut expected: Vec<String> = vec!["y".into(), "t".into()];
    for p in 1..=d_x {
        expected.push(format!("x{p}"));
    }
    for (i, name) in expected.iter().enumerate() {
        match headers.get(i) {
            Some(h) if h == name => {}
            Some(h) => {
                return Err(DataError::Malformed(format!(
                    "header column {} is `{h}`, expected `{name}`",
                    i + 1
                )))
            }
            None => return Err(DataError::MissingColumn(name.clone())),
        }
    }
    if headers.len() > expected.len() {
        return Err(DataError::Malformed(format!(
            "unexpected extra column `{}`",
            headers.get(expected.len()).unwrap_or("")
        )));
    }
    let mut rows = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let row_no = idx + 1;
        let record = record.map_err(|e| DataError::Malformed(e.to_string()))?;
        if record.len() != expected.len() {
            return Err(DataError::Malformed(format!(
                "row {row_no} has {} fields, expected {}",
                record.len(),
                expected.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, DataError> {
            let v: f64 = s.parse().map_err(|_| DataError::NonFiniteValue(row_no))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(DataError::NonFiniteValue(row_no))
            }
        };
        let y = parse(&record[0])?;
        let t = parse(&record[1])?;
        let x = record
            .iter()
            .skip(2)
            .map(parse)
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(Observation { y, t, x });
    }
    let ds = Dataset::from_rows(rows)?;
    // Constant covariate columns make the [0,1] rescaling undefined; reject
    // at load time so every downstream consumer can rely on x_scale.
    for (p, &(lo, hi)) in ds.x_scale.iter().enumerate() {
        if lo == hi {
            return Err(DataError::ConstantCovariate {
                col: p + 1,
                value: lo,
            });
        }
    }
    Ok(ds)
}

/// Map every covariate column into [0,1] by its (min, max); records the
/// composed affine map in `x_scale` so the inverse is preserved under
/// repeated application (idempotent on already-scaled data).
pub fn rescale_covariates(ds: Dataset) -> Result<Dataset, DataError> {
    let mut ds = ds;
    // Current per-column range of the stored covariates.
    let cur: Vec<(f64, f64)> = (0..ds.d_x)
        .map(|p| {
            let lo = ds.rows.iter().map(|r| r.x[p]).fold(f64::INFINITY, f64::min);
            let hi = ds
                .rows
                .iter()
                .map(|r| r.x[p])
                .fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .collect();
    for (p, &(lo, hi)) in cur.iter().enumerate() {
        if lo == hi {
            return Err(DataError::ConstantCovariate {
                col: p + 1,
                value: lo,
            });
        }
    }
    for row in &mut ds.rows {
        for (p, v) in row.x.iter_mut().enumerate() {
            let (lo, hi) = cur[p];
            *v = (*v - lo) / (hi - lo);
        }
    }
    // Compose: if the stored x_scale maps scaled->original and we just
    // applied original->unit over (lo, hi), the new map from unit
    // coordinates back to the true original is old(lo + (hi-lo) * u).
    for (p, scale) in ds.x_scale.iter_mut().enumerate() {
        let (old_lo, old_hi) = *scale;
        let (lo, hi) = cur[p];
        // Old map applied to the current-scale endpoints lo and hi. When the
        // data were still raw, old = (lo, hi) themselves, so this is (lo, hi);
        // when already scaled once, cur = (0, 1) and the map is unchanged.
        let old_span = old_hi - old_lo;
        let a = if (old_lo, old_hi) == (lo, hi) {
            (lo, hi)
        } else {
            (old_lo + old_span * lo, old_lo + old_span * hi)
        };
        *scale = a;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn csv_of(text: &str) -> Cursor<Vec<u8>> {
        Cursor::new(text.as_bytes().to_vec())
    }

    #[test]
    fn loads_three_rows_and_sets_bounds() {
        let ds = load_csv_reader(
            csv_of("y,t,x1\n1,0.5,0.1\n2,0.2,0.9\n3,0.8,0.4\n"),
            1,
        )
        .unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.m_bound, 3.0);
        assert_eq!(ds.t_lo, 0.2);
        assert_eq!(ds.t_hi, 0.8);
        assert_eq!(ds.d_x, 1);
        assert_eq!(ds.x_scale, vec![(0.1, 0.9)]);
    }

    #[test]
    fn m_bound_uses_absolute_values() {
        let ds = load_csv_reader(csv_of("y,t,x1\n-4,0,0\n1,1,1\n"), 1).unwrap();
        assert_eq!(ds.m_bound, 4.0);
    }

    #[test]
    fn constant_covariate_is_rejected() {
        let err = load_csv_reader(csv_of("y,t,x1\n1,0.1,7\n2,0.2,7\n"), 1).unwrap_err();
        assert!(matches!(err, DataError::ConstantCovariate { col: 1, .. }));
    }

    #[test]
    fn missing_column_for_larger_d_x() {
        let err = load_csv_reader(csv_of("y,t,x1\n1,0.1,0\n2,0.2,1\n"), 2).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn(ref c) if c == "x2"));
    }

    #[test]
    fn non_finite_cell_reports_row() {
        let err = load_csv_reader(csv_of("y,t,x1\n1,0.1,0\n2,nan,1\n"), 1).unwrap_err();
        assert!(matches!(err, DataError::NonFiniteValue(2)));
        let err = load_csv_reader(csv_of("y,t,x1\n1,0.1,abc\n2,0.3,1\n"), 1).unwrap_err();
        assert!(matches!(err, DataError::NonFiniteValue(1)));
    }

    #[test]
    fn too_few_rows() {
        let err = load_csv_reader(csv_of("y,t,x1\n1,0.1,0\n"), 1).unwrap_err();
        assert!(matches!(err, DataError::TooFewRows(1)));
    }

    #[test]
    fn wrong_header_name_is_malformed() {
        let err = load_csv_reader(csv_of("y,treat,x1\n1,0.1,0\n2,0.2,1\n"), 1).unwrap_err();
        assert!(matches!(err, DataError::Malformed(_)));
    }

    #[test]
    fn rescale_maps_endpoints_and_is_idempotent() {
        let rows = vec![
            Observation { y: 1.0, t: 0.1, x: vec![0.0] },
            Observation { y: 1.0, t: 0.2, x: vec![5.0] },
            Observation { y: 1.0, t: 0.3, x: vec![10.0] },
        ];
        let ds = Dataset::from_rows(rows).unwrap();
        let ds = rescale_covariates(ds).unwrap();
        let got: Vec<f64> = ds.rows.iter().map(|r| r.x[0]).collect();
        assert_eq!(got, vec![0.0, 0.5, 1.0]);
        assert_eq!(ds.x_scale, vec![(0.0, 10.0)]);
        let again = rescale_covariates(ds.clone()).unwrap();
        let got2: Vec<f64> = again.rows.iter().map(|r| r.x[0]).collect();
        assert_eq!(got2, got);
        assert_eq!(again.x_scale, ds.x_scale);
    }

    #[test]
    fn rescale_two_point_column() {
        let rows = vec![
            Observation { y: 0.0, t: 0.0, x: vec![2.0] },
            Observation { y: 0.0, t: 1.0, x: vec![4.0] },
        ];
        let ds = rescale_covariates(Dataset::from_rows(rows).unwrap()).unwrap();
        let got: Vec<f64> = ds.rows.iter().map(|r| r.x[0]).collect();
        assert_eq!(got, vec![0.0, 1.0]);
    }

    #[test]
    fn load_csv_from_file_path_via_tempfile() {
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "y,t,x1,x2\n0.5,1.0,3.0,9.0\n-0.25,2.0,4.0,8.0\n1.5,1.5,3.5,7.0").unwrap();
        let ds = load_csv(&path, 2).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.d_x, 2);
        assert_eq!(ds.m_bound, 1.5);
        // Repeated loads yield identical structures.
        let ds2 = load_csv(&path, 2).unwrap();
        assert_eq!(ds.rows, ds2.rows);
    }

    #[test]
    fn propensity_oracle_constant_density() {
        let g = PropensityOracle::constant_density(0.25);
        assert_relative_eq!(g.g(0.3, &[0.0]), 4.0);
        assert_relative_eq!(g.g_cap(), 4.0);
    }

    proptest! {
        #[test]
        fn rescale_round_trips_originals(
            raw in proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6, -1e6f64..1e6), 3..40)
        ) {
            let rows: Vec<Observation> = raw
                .iter()
                .map(|&(y, t, x)| Observation { y, t, x: vec![x, x * 0.5 - 3.0] })
                .collect();
            // Skip degenerate constant columns (rejected by rescale).
            let xs: Vec<f64> = rows.iter().map(|r| r.x[0]).collect();
            prop_assume!(xs.iter().any(|&v| v != xs[0]));
            let ds = Dataset::from_rows(rows.clone()).unwrap();
            let scaled = rescale_covariates(ds).unwrap();
            for (orig, row) in rows.iter().zip(&scaled.rows) {
                for v in &row.x {
                    prop_assert!((-1e-12..=1.0 + 1e-12).contains(v));
                }
                let back = scaled.unscale_x(&row.x);
                for (p, (a, b)) in orig.x.iter().zip(&back).enumerate() {
                    // Relative to the column scale: the round trip costs a
                    // few ulp of the column range, not of the single value.
                    let (lo, hi) = scaled.x_scale[p];
                    let scale = (hi - lo).abs().max(a.abs()).max(1.0);
                    prop_assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
                }
            }
        }
    }
}
