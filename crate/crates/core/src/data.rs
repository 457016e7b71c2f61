//! Price ingestion, simple returns, sample moments and a seeded synthetic
//! sector-factor generator.

use std::collections::HashSet;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closing prices, one row per date.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<String>,
    pub tickers: Vec<String>,
    /// `T x n`
    pub prices: DMatrix<f64>,
}

/// Per-period asset returns. Row `j` is the sample `r_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    pub tickers: Vec<String>,
    /// `N x n`
    pub returns: DMatrix<f64>,
    pub sectors: Option<Vec<String>>,
}

impl ReturnsPanel {
    pub fn new(tickers: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.ncols() != tickers.len() {
            return Err(Error::Dimension {
                expected: tickers.len(),
                actual: returns.ncols(),
            });
        }
        if returns.nrows() == 0 {
            return Err(Error::InsufficientData {
                required: 1,
                actual: 0,
            });
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("returns contain non-finite entries"));
        }
        Ok(Self {
            tickers,
            returns,
            sectors: None,
        })
    }

    /// Build a panel with generated tickers `A00, A01, ...`.
    pub fn from_matrix(returns: DMatrix<f64>) -> Result<Self> {
        let tickers = (0..returns.ncols()).map(|i| format!("A{i:02}")).collect();
        Self::new(tickers, returns)
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.returns.nrows()
    }

    /// Keep only the listed asset columns, in the given order.
    pub fn select_assets(&self, idx: &[usize]) -> ReturnsPanel {
        let returns = self.returns.select_columns(idx);
        ReturnsPanel {
            tickers: idx.iter().map(|&i| self.tickers[i].clone()).collect(),
            returns,
            sectors: self
                .sectors
                .as_ref()
                .map(|s| idx.iter().map(|&i| s[i].clone()).collect()),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.tickers)?;
        for row in self.returns.row_iter() {
            w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean vector and covariance matrix of a returns panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mu: Vec<f64>,
    pub sigma: DMatrix<f64>,
}

impl Moments {
    pub fn n_assets(&self) -> usize {
        self.mu.len()
    }

    /// Restrict to a subset of assets.
    pub fn select_assets(&self, idx: &[usize]) -> Moments {
        Moments {
            mu: idx.iter().map(|&i| self.mu[i]).collect(),
            sigma: self.sigma.select_rows(idx).select_columns(idx),
        }
    }
}

/// Parse a price CSV whose header is `date,<T1>,<T2>,...`.
pub fn load_prices<R: Read>(input: R) -> Result<PricePanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("date") {
        return Err(Error::Parse {
            line: 1,
            message: "first column header must be `date`".into(),
        });
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    if tickers.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no ticker columns".into(),
        });
    }
    let mut seen = HashSet::new();
    for t in &tickers {
        if t.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "empty ticker name".into(),
            });
        }
        if !seen.insert(t.as_str()) {
            return Err(Error::DuplicateTicker(t.clone()));
        }
    }

    let n = tickers.len();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != n + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", n + 1, record.len()),
            });
        }
        dates.push(record[0].to_owned());
        for (cell, ticker) in record.iter().skip(1).zip(&tickers) {
            let price: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse price `{cell}` for {ticker}"),
            })?;
            if !(price.is_finite() && price > 0.0) {
                return Err(Error::Parse {
                    line,
                    message: format!("price for {ticker} must be positive, got {cell}"),
                });
            }
            values.push(price);
        }
    }
    if dates.is_empty() {
        return Err(Error::InsufficientData {
            required: 1,
            actual: 0,
        });
    }
    let prices = DMatrix::from_row_slice(dates.len(), n, &values);
    Ok(PricePanel {
        dates,
        tickers,
        prices,
    })
}

/// Parse a returns CSV as written by [`ReturnsPanel::write_csv`]: a header
/// of tickers, then one row of decimals per period. Lines starting with `#`
/// are skipped.
pub fn load_returns<R: Read>(input: R) -> Result<ReturnsPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let tickers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let mut seen = HashSet::new();
    for t in &tickers {
        if t.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "empty ticker name".into(),
            });
        }
        if !seen.insert(t.as_str()) {
            return Err(Error::DuplicateTicker(t.clone()));
        }
    }
    let n = tickers.len();
    let mut rows = 0;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != n {
            return Err(Error::Parse {
                line,
                message: format!("expected {n} fields, found {}", record.len()),
            });
        }
        for cell in record.iter() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse return `{cell}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("return `{cell}` is not finite"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InsufficientData {
            required: 1,
            actual: 0,
        });
    }
    ReturnsPanel::new(tickers, DMatrix::from_row_slice(rows, n, &values))
}

/// Simple returns `(P[j+1] - P[j]) / P[j]`.
pub fn to_returns(panel: &PricePanel) -> Result<ReturnsPanel> {
    let t = panel.prices.nrows();
    if t < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: t,
        });
    }
    let n = panel.prices.ncols();
    let returns = DMatrix::from_fn(t - 1, n, |j, i| {
        let p0 = panel.prices[(j, i)];
        (panel.prices[(j + 1, i)] - p0) / p0
    });
    ReturnsPanel::new(panel.tickers.clone(), returns)
}

/// Sample mean and population (1/N) covariance.
pub fn estimate_moments(panel: &ReturnsPanel) -> Moments {
    let r = &panel.returns;
    let (big_n, n) = r.shape();
    let inv_n = 1.0 / big_n as f64;
    let mu: Vec<f64> = (0..n).map(|i| r.column(i).sum() * inv_n).collect();
    let mut centered = r.clone();
    for (i, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[i]);
    }
    let mut sigma = centered.tr_mul(&centered) * inv_n;
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            sigma[(i, j)] = s;
            sigma[(j, i)] = s;
        }
    }
    Moments { mu, sigma }
}

/// Distribution parameters for [`synth_returns`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    /// Per-period volatility of each sector factor.
    pub factor_vol: f64,
    /// Per-period volatility of the asset-specific noise.
    pub idio_vol: f64,
    /// Asset mean returns are uniform on `[mean_low, mean_high)`.
    pub mean_low: f64,
    pub mean_high: f64,
    /// Factor loadings are uniform on `[loading_low, loading_high)`.
    pub loading_low: f64,
    pub loading_high: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            factor_vol: 0.01,
            idio_vol: 0.015,
            mean_low: -0.0005,
            mean_high: 0.0015,
            loading_low: 0.5,
            loading_high: 1.5,
        }
    }
}

/// How assets are split into sectors for the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectorLayout {
    /// `m` sectors of near-equal size; the first `n % m` get one extra asset.
    Even(usize),
    /// Explicit sector sizes.
    Sizes(Vec<usize>),
}

impl SectorLayout {
    pub fn sizes(&self, n_assets: usize) -> Result<Vec<usize>> {
        let sizes = match self {
            SectorLayout::Even(m) => {
                if *m == 0 || *m > n_assets {
                    return Err(Error::validation(format!(
                        "cannot split {n_assets} assets into {m} nonempty sectors"
                    )));
                }
                let base = n_assets / m;
                let extra = n_assets % m;
                (0..*m).map(|s| base + usize::from(s < extra)).collect()
            }
            SectorLayout::Sizes(s) => s.clone(),
        };
        if let Some(pos) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::validation(format!("sector {pos} is empty")));
        }
        let total: usize = sizes.iter().sum();
        if total != n_assets {
            return Err(Error::validation(format!(
                "sector sizes sum to {total}, expected {n_assets}"
            )));
        }
        Ok(sizes)
    }
}

/// Label of sector `s` in synthetic panels.
pub fn sector_label(s: usize) -> String {
    format!("S{s}")
}

/// Seeded one-factor-per-sector Gaussian returns:
/// `r[j][i] = mean_i + loading_i * factor[j][sector(i)] + noise[j][i]`.
pub fn synth_returns(
    n_assets: usize,
    n_samples: usize,
    sectors: &SectorLayout,
    params: &SynthParams,
    seed: u64,
) -> Result<ReturnsPanel> {
    let mut problems = Vec::new();
    if n_assets == 0 {
        problems.push("n_assets must be at least 1".to_owned());
    }
    if n_samples < 2 {
        problems.push("n_samples must be at least 2".to_owned());
    }
    if !(params.factor_vol >= 0.0 && params.idio_vol >= 0.0) {
        problems.push("volatilities must be nonnegative".to_owned());
    }
    if params.mean_low > params.mean_high || params.loading_low > params.loading_high {
        problems.push("distribution ranges must satisfy low <= high".to_owned());
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let sizes = sectors.sizes(n_assets)?;
    let sector_of: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(s, &len)| std::iter::repeat_n(s, len))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    };
    let means: Vec<f64> = (0..n_assets)
        .map(|_| uniform(&mut rng, params.mean_low, params.mean_high))
        .collect();
    let loadings: Vec<f64> = (0..n_assets)
        .map(|_| uniform(&mut rng, params.loading_low, params.loading_high))
        .collect();

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = Vec::with_capacity(n_assets * n_samples);
    let mut factors = vec![0.0; sizes.len()];
    for _ in 0..n_samples {
        for f in factors.iter_mut() {
            *f = params.factor_vol * std_normal.sample(&mut rng);
        }
        for i in 0..n_assets {
            let noise = params.idio_vol * std_normal.sample(&mut rng);
            values.push(means[i] + loadings[i] * factors[sector_of[i]] + noise);
        }
    }
    let returns = DMatrix::from_row_slice(n_samples, n_assets, &values);
    let mut panel = ReturnsPanel::from_matrix(returns)?;
    panel.sectors = Some(sector_of.iter().map(|&s| sector_label(s)).collect());
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(s: &str) -> Result<PricePanel> {
        load_prices(s.as_bytes())
    }

    #[test]
    fn returns_csv_round_trip() {
        let r = DMatrix::from_row_slice(2, 2, &[0.1, -0.25, 1e-17, 3.0]);
        let panel = ReturnsPanel::new(vec!["X".into(), "Y".into()], r).unwrap();
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let back = load_returns(buf.as_slice()).unwrap();
        assert_eq!(back, panel);
        assert!(load_returns("X,X\n1,2\n".as_bytes()).is_err());
        assert!(load_returns("X\n".as_bytes()).is_err());
        assert!(matches!(
            load_returns("X,Y\n1,2\n1,zz\n".as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn loads_small_panel() {
        let p = load("date,AAA,BBB\n2020-01-01,1,2\n2020-01-02,1.5,2.5\n2020-01-03,2,3\n").unwrap();
        assert_eq!(p.prices.shape(), (3, 2));
        assert_eq!(p.tickers, ["AAA", "BBB"]);
        assert_eq!(p.dates[2], "2020-01-03");
        assert_eq!(p.prices[(1, 0)], 1.5);
    }

    #[test]
    fn zero_price_is_rejected_with_line() {
        let err = load("date,A,B\nd1,1,2\nd2,0.0,2\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("positive"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ticker_is_rejected() {
        let err = load("date,AAPL,AAPL\nd1,1,2\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateTicker(t) if t == "AAPL"));
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(
            load("day,A\nd1,1\n").unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
        assert!(matches!(
            load("date,A,B\nd1,1\n").unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
        assert!(matches!(
            load("date,A\nd1,abc\n").unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
        // missing value
        assert!(load("date,A,B\nd1,,2\n").is_err());
    }

    #[test]
    fn simple_returns() {
        let p = load("date,X\nd1,100\nd2,110\nd3,99\n").unwrap();
        let r = to_returns(&p).unwrap();
        assert_eq!(r.returns.nrows(), 2);
        assert!((r.returns[(0, 0)] - 0.10).abs() < 1e-15);
        assert!((r.returns[(1, 0)] + 0.10).abs() < 1e-15);

        let flat = load("date,X\nd1,50\nd2,50\n").unwrap();
        assert_eq!(to_returns(&flat).unwrap().returns[(0, 0)], 0.0);

        let single = load("date,X\nd1,50\n").unwrap();
        assert!(matches!(
            to_returns(&single).unwrap_err(),
            Error::InsufficientData { required: 2, actual: 1 }
        ));
    }

    #[test]
    fn moments_small_cases() {
        let one = ReturnsPanel::from_matrix(DMatrix::from_row_slice(1, 2, &[0.1, 0.2])).unwrap();
        let m = estimate_moments(&one);
        assert_eq!(m.mu, vec![0.1, 0.2]);
        assert!(m.sigma.iter().all(|&v| v == 0.0));

        let sym = ReturnsPanel::from_matrix(DMatrix::from_row_slice(2, 1, &[1.0, -1.0])).unwrap();
        let m = estimate_moments(&sym);
        assert_eq!(m.mu, vec![0.0]);
        assert_eq!(m.sigma[(0, 0)], 1.0);
    }

    #[test]
    fn synth_is_seeded() {
        let layout = SectorLayout::Even(3);
        let p = SynthParams::default();
        let a = synth_returns(9, 20, &layout, &p, 5).unwrap();
        let b = synth_returns(9, 20, &layout, &p, 5).unwrap();
        let c = synth_returns(9, 20, &layout, &p, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.returns, c.returns);
        assert_eq!(a.sectors.as_ref().unwrap()[8], "S2");
    }

    #[test]
    fn synth_rejects_empty_sector() {
        let err = synth_returns(4, 10, &SectorLayout::Sizes(vec![4, 0]), &SynthParams::default(), 1)
            .unwrap_err();
        assert!(err.is_validation());
        assert!(synth_returns(4, 1, &SectorLayout::Even(2), &SynthParams::default(), 1).is_err());
    }

    #[test]
    fn even_layout_sizes() {
        assert_eq!(SectorLayout::Even(7).sizes(65).unwrap(), vec![10, 10, 9, 9, 9, 9, 9]);
    }
}
