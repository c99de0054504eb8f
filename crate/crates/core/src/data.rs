//! Time-series containers and CSV exchange.
//!
//! Columns: `time`, `y1[, y2, ...]` (a lone `y` is accepted), optional
//! `quality`, and any other column is a covariate. Missing observations are
//! an empty field or `NA`; covariates must be complete.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, SsmError};

pub const DEFAULT_QUALITY_CLASSES: [u8; 6] = [1, 2, 3, 4, 5, 6];

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesData {
    times: Vec<f64>,
    obs_dim: usize,
    obs: Vec<Vec<Option<f64>>>,
    covariates: BTreeMap<String, Vec<f64>>,
    quality: Option<Vec<u8>>,
    quality_classes: Vec<u8>,
}

fn is_obs_column(name: &str) -> bool {
    name == "y" || (name.len() > 1 && name.starts_with('y') && name[1..].chars().all(|c| c.is_ascii_digit()))
}

fn parse_missing(field: &str) -> Option<&str> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") {
        None
    } else {
        Some(f)
    }
}

impl TimeSeriesData {
    pub fn new(times: Vec<f64>, obs: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if times.is_empty() {
            return Err(SsmError::Data("a series needs at least one time point".into()));
        }
        if times.len() != obs.len() {
            return Err(SsmError::Data(format!(
                "{} times but {} observation records",
                times.len(),
                obs.len()
            )));
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(SsmError::Data(format!(
                    "times must be strictly increasing (rows {} and {})",
                    i + 1,
                    i + 2
                )));
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(SsmError::Data("non-finite time value".into()));
        }
        let obs_dim = obs[0].len();
        if obs_dim == 0 {
            return Err(SsmError::Data("observation records must have at least one coordinate".into()));
        }
        for (i, r) in obs.iter().enumerate() {
            if r.len() != obs_dim {
                return Err(SsmError::Data(format!(
                    "record {} has {} coordinates, expected {obs_dim}",
                    i + 1,
                    r.len()
                )));
            }
            if r.iter().flatten().any(|v| !v.is_finite()) {
                return Err(SsmError::Data(format!("record {} holds a non-finite value", i + 1)));
            }
        }
        Ok(Self {
            times,
            obs_dim,
            obs,
            covariates: BTreeMap::new(),
            quality: None,
            quality_classes: DEFAULT_QUALITY_CLASSES.to_vec(),
        })
    }

    /// Univariate, fully observed series.
    pub fn univariate(times: Vec<f64>, y: &[f64]) -> Result<Self> {
        Self::new(times, y.iter().map(|&v| vec![Some(v)]).collect())
    }

    /// Univariate series on times 1..=T with `None` for missing values.
    pub fn from_options(y: &[Option<f64>]) -> Result<Self> {
        Self::new(
            (1..=y.len()).map(|t| t as f64).collect(),
            y.iter().map(|&v| vec![v]).collect(),
        )
    }

    pub fn with_covariate(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(SsmError::Data(format!(
                "covariate `{name}` has {} values for {} times",
                values.len(),
                self.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SsmError::Data(format!("covariate `{name}` has missing or non-finite values")));
        }
        if is_obs_column(name) || name == "time" || name == "quality" {
            return Err(SsmError::Data(format!("`{name}` is reserved and cannot name a covariate")));
        }
        self.covariates.insert(name.to_string(), values);
        Ok(self)
    }

    pub fn with_quality(mut self, labels: Vec<u8>, classes: &[u8]) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(SsmError::Data("quality labels must have one entry per record".into()));
        }
        if let Some(bad) = labels.iter().find(|l| !classes.contains(l)) {
            return Err(SsmError::Data(format!("quality label {bad} outside the declared class set")));
        }
        self.quality = Some(labels);
        self.quality_classes = classes.to_vec();
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn record(&self, i: usize) -> &[Option<f64>] {
        &self.obs[i]
    }

    pub fn records(&self) -> &[Vec<Option<f64>>] {
        &self.obs
    }

    /// First coordinate of record `i`.
    pub fn y(&self, i: usize) -> Option<f64> {
        self.obs[i][0]
    }

    /// First coordinate of every record.
    pub fn y_column(&self) -> Vec<Option<f64>> {
        self.obs.iter().map(|r| r[0]).collect()
    }

    pub fn any_observed(&self, i: usize) -> bool {
        self.obs[i].iter().any(Option::is_some)
    }

    pub fn n_observed(&self) -> usize {
        self.obs.iter().map(|r| r.iter().filter(|v| v.is_some()).count()).sum()
    }

    pub fn covariate(&self, name: &str) -> Result<&[f64]> {
        self.covariates
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| SsmError::Data(format!("covariate `{name}` is not present in the data")))
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates.keys().cloned().collect()
    }

    pub fn quality(&self) -> Option<&[u8]> {
        self.quality.as_deref()
    }

    pub fn quality_classes(&self) -> &[u8] {
        &self.quality_classes
    }

    pub fn set_record(&mut self, i: usize, record: Vec<Option<f64>>) {
        assert_eq!(record.len(), self.obs_dim);
        self.obs[i] = record;
    }

    /// Copy with the listed records marked missing.
    pub fn masked(&self, rows: impl IntoIterator<Item = usize>) -> Self {
        let mut out = self.clone();
        for i in rows {
            out.obs[i] = vec![None; self.obs_dim];
        }
        out
    }

    /// Leading `n` records (with matching covariates and quality labels).
    pub fn head(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(SsmError::Data(format!("cannot take {n} leading records of {}", self.len())));
        }
        Ok(Self {
            times: self.times[..n].to_vec(),
            obs_dim: self.obs_dim,
            obs: self.obs[..n].to_vec(),
            covariates: self.covariates.iter().map(|(k, v)| (k.clone(), v[..n].to_vec())).collect(),
            quality: self.quality.as_ref().map(|q| q[..n].to_vec()),
            quality_classes: self.quality_classes.clone(),
        })
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let time_col = headers
            .iter()
            .position(|h| h == "time")
            .ok_or_else(|| SsmError::Data("missing `time` column".into()))?;
        let mut y_cols: Vec<(usize, usize)> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| is_obs_column(h))
            .map(|(i, h)| (if h == "y" { 1 } else { h[1..].parse::<usize>().unwrap_or(0) }, i))
            .collect();
        if y_cols.is_empty() {
            return Err(SsmError::Data("no observation column (`y1`, `y2`, ... or `y`)".into()));
        }
        y_cols.sort();
        for (k, (n, _)) in y_cols.iter().enumerate() {
            if *n != k + 1 {
                return Err(SsmError::Data("observation columns must be numbered y1, y2, ... without gaps".into()));
            }
        }
        let q_col = headers.iter().position(|h| h == "quality");
        let cov_cols: Vec<usize> = (0..headers.len())
            .filter(|&i| i != time_col && Some(i) != q_col && !y_cols.iter().any(|&(_, c)| c == i))
            .collect();

        let mut times = Vec::new();
        let mut obs = Vec::new();
        let mut quality = Vec::new();
        let mut covs: Vec<Vec<f64>> = vec![Vec::new(); cov_cols.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let num = |i: usize, what: &str| -> Result<f64> {
                rec.get(i)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| SsmError::Data(format!("line {line}: cannot parse {what} `{}`", rec.get(i).unwrap_or(""))))
            };
            times.push(num(time_col, "time")?);
            let mut r = Vec::with_capacity(y_cols.len());
            for &(_, c) in &y_cols {
                r.push(match parse_missing(rec.get(c).unwrap_or("")) {
                    None => None,
                    Some(_) => Some(num(c, "observation")?),
                });
            }
            obs.push(r);
            if let Some(qc) = q_col {
                let f = rec.get(qc).unwrap_or("").trim();
                let q: u8 = f
                    .parse()
                    .map_err(|_| SsmError::Data(format!("line {line}: bad quality label `{f}`")))?;
                quality.push(q);
            }
            for (k, &c) in cov_cols.iter().enumerate() {
                if parse_missing(rec.get(c).unwrap_or("")).is_none() {
                    return Err(SsmError::Data(format!(
                        "line {line}: covariate `{}` is missing; missing covariates are not supported",
                        headers[c]
                    )));
                }
                covs[k].push(num(c, "covariate")?);
            }
        }
        let mut data = Self::new(times, obs)?;
        if q_col.is_some() {
            let mut classes = DEFAULT_QUALITY_CLASSES.to_vec();
            for &q in &quality {
                if !classes.contains(&q) {
                    classes.push(q);
                }
            }
            classes.sort_unstable();
            data = data.with_quality(quality, &classes)?;
        }
        for (k, &c) in cov_cols.iter().enumerate() {
            data = data.with_covariate(&headers[c], std::mem::take(&mut covs[k]))?;
        }
        Ok(data)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| SsmError::Data(format!("cannot open {}: {e}", path.display())))?;
        Self::read_csv(f)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string()];
        header.extend((1..=self.obs_dim).map(|k| format!("y{k}")));
        if self.quality.is_some() {
            header.push("quality".into());
        }
        header.extend(self.covariates.keys().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![format!("{}", self.times[i])];
            row.extend(self.obs[i].iter().map(|v| match v {
                Some(x) => format!("{x}"),
                None => "NA".to_string(),
            }));
            if let Some(q) = &self.quality {
                row.push(q[i].to_string());
            }
            row.extend(self.covariates.values().map(|c| format!("{}", c[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_lossless() {
        let d = TimeSeriesData::new(
            vec![0.5, 1.25, 3.0],
            vec![
                vec![Some(0.1 + 0.2), None],
                vec![Some(-1e-300), Some(std::f64::consts::PI)],
                vec![None, Some(1.0 / 3.0)],
            ],
        )
        .unwrap()
        .with_covariate("ponds", vec![1.0, 2.5, -0.125])
        .unwrap()
        .with_quality(vec![1, 6, 3], &DEFAULT_QUALITY_CLASSES)
        .unwrap();
        let s = d.to_csv_string().unwrap();
        let back = TimeSeriesData::read_csv(s.as_bytes()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn missing_markers() {
        let csv = "time,y1\n1,\n2,NA\n3,4.5\n";
        let d = TimeSeriesData::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.y_column(), vec![None, None, Some(4.5)]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(TimeSeriesData::read_csv("time,y1\n2,1\n1,1\n".as_bytes()).is_err());
        assert!(TimeSeriesData::read_csv("time,y1,p\n1,1,\n".as_bytes()).is_err());
        assert!(TimeSeriesData::read_csv("time,y1\n1,abc\n".as_bytes()).is_err());
        assert!(TimeSeriesData::read_csv("t,y1\n1,1\n".as_bytes()).is_err());
        assert!(TimeSeriesData::new(vec![], vec![]).is_err());
    }

    #[test]
    fn quality_labels_checked() {
        let d = TimeSeriesData::from_options(&[Some(1.0), Some(2.0)]).unwrap();
        assert!(d.clone().with_quality(vec![1, 7], &DEFAULT_QUALITY_CLASSES).is_err());
        assert!(d.with_quality(vec![1, 2], &DEFAULT_QUALITY_CLASSES).is_ok());
    }
}
