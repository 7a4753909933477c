//! libsvm and CSV loaders, row partitioning, and train/validation/test splits.

use std::fs;
use std::io::Write;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::rng::{stream, Domain};
use crate::error::{Error, Result};
use crate::model::{Dataset, Matrix, Shard, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextFormat {
    Libsvm,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum PartitionPolicy {
    Contiguous,
    Shuffled { seed: u64 },
}

/// Unpartitioned rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RawData {
    pub xs: Matrix,
    pub ys: Vec<f64>,
}

impl RawData {
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> RawData {
        RawData { xs: self.xs.select_rows(idx), ys: idx.iter().map(|&i| self.ys[i]).collect() }
    }

    pub fn into_shard(self, machine_id: usize, task: Task) -> Result<Shard> {
        Shard::new(machine_id, self.xs, self.ys, task)
    }
}

/// Reads a libsvm or CSV file. `p` fixes the libsvm dimension; when absent it
/// is the largest feature index seen.
pub fn load_text(path: &Path, format: TextFormat, task: Task, p: Option<usize>) -> Result<RawData> {
    let text = fs::read_to_string(path)?;
    let raw = match format {
        TextFormat::Libsvm => parse_libsvm(&text, p)?,
        TextFormat::Csv => parse_csv(&text)?,
    };
    let ys = map_labels(&raw.ys, task)?;
    Ok(RawData { ys, ..raw })
}

fn parse_value(tok: &str, line: usize, what: &str) -> Result<f64> {
    // some exporters write U+2212 for minus
    let v: f64 = tok
        .replace('\u{2212}', "-")
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("bad {what} {tok:?}") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite {what} {tok:?}") });
    }
    Ok(v)
}

pub fn parse_libsvm(text: &str, p: Option<usize>) -> Result<RawData> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut ys = Vec::new();
    let mut max_index = 0;
    for (k, raw_line) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let label = parse_value(toks.next().expect("nonempty line"), line_no, "label")?;
        let mut feats = Vec::new();
        for tok in toks {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::Parse { line: line_no, msg: format!("expected index:value, got {tok:?}") })?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Parse { line: line_no, msg: format!("bad feature index {idx:?}") })?;
            if idx == 0 {
                return Err(Error::Parse { line: line_no, msg: "feature indices start at 1".into() });
            }
            if let Some(p) = p {
                if idx > p {
                    return Err(Error::Parse { line: line_no, msg: format!("feature index {idx} exceeds p={p}") });
                }
            }
            max_index = max_index.max(idx);
            feats.push((idx - 1, parse_value(val, line_no, "feature value")?));
        }
        rows.push(feats);
        ys.push(label);
    }
    let p = p.unwrap_or(max_index);
    let mut xs = Matrix::zeros(rows.len(), p);
    for (i, feats) in rows.iter().enumerate() {
        for &(j, v) in feats {
            xs.set(i, j, v);
        }
    }
    Ok(RawData { xs, ys })
}

/// CSV with header `y,x1,...,xp`.
pub fn parse_csv(text: &str) -> Result<RawData> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    if header.get(0).map(str::trim) != Some("y") {
        return Err(Error::Parse { line: 1, msg: "header must start with column y".into() });
    }
    let p = header.len() - 1;
    for (j, name) in header.iter().skip(1).enumerate() {
        if name.trim() != format!("x{}", j + 1) {
            return Err(Error::Parse { line: 1, msg: format!("expected column x{}, got {name:?}", j + 1) });
        }
    }
    let mut data = Vec::new();
    let mut ys = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != p + 1 {
            return Err(Error::Parse { line, msg: format!("expected {} fields, got {}", p + 1, rec.len()) });
        }
        ys.push(parse_value(rec[0].trim(), line, "label")?);
        for f in rec.iter().skip(1) {
            data.push(parse_value(f.trim(), line, "feature value")?);
        }
    }
    Ok(RawData { xs: Matrix::new(ys.len(), p, data)?, ys })
}

/// Classification labels in {-1, +1}, {0, 1} or {1, 2} map onto {-1, +1}.
/// Regression targets pass through.
pub fn map_labels(ys: &[f64], task: Task) -> Result<Vec<f64>> {
    if task == Task::Regression {
        return Ok(ys.to_vec());
    }
    let in_set = |set: [f64; 2]| ys.iter().all(|y| set.contains(y));
    let (neg, pos) = if in_set([-1.0, 1.0]) {
        (-1.0, 1.0)
    } else if in_set([0.0, 1.0]) {
        (0.0, 1.0)
    } else if in_set([1.0, 2.0]) {
        (1.0, 2.0)
    } else {
        let bad = ys.iter().find(|y| ![-1.0, 0.0, 1.0, 2.0].contains(*y)).copied().unwrap_or(ys[0]);
        return Err(Error::Data(format!("label {bad} is outside the supported binary label sets")));
    };
    Ok(ys.iter().map(|&y| if y == pos { 1.0 } else { debug_assert_eq!(y, neg); -1.0 }).collect())
}

fn permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut stream(seed, Domain::Shuffle, 0));
    idx
}

/// Splits rows across `m` machines. Rows beyond the largest multiple of `m`
/// are dropped.
pub fn partition(raw: &RawData, m: usize, policy: PartitionPolicy, task: Task) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::Config("cannot partition over zero machines".into()));
    }
    let n = raw.len() / m;
    if n == 0 {
        return Err(Error::Data(format!("{} rows cannot fill {m} machines", raw.len())));
    }
    if raw.len() % m != 0 {
        info!("dropping {} rows so {m} machines get {n} each", raw.len() % m);
    }
    let order = match policy {
        PartitionPolicy::Contiguous => (0..raw.len()).collect(),
        PartitionPolicy::Shuffled { seed } => permutation(raw.len(), seed),
    };
    let shards = (0..m)
        .map(|j| raw.select(&order[j * n..(j + 1) * n]).into_shard(j, task))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(shards, task)
}

/// Deterministic 60 / 20 / 20 split into train, validation and test rows.
pub fn split_train_val_test(raw: &RawData, seed: u64) -> (RawData, RawData, RawData) {
    let order = permutation(raw.len(), seed);
    let n_train = raw.len() * 6 / 10;
    let n_val = raw.len() * 2 / 10;
    (
        raw.select(&order[..n_train]),
        raw.select(&order[n_train..n_train + n_val]),
        raw.select(&order[n_train + n_val..]),
    )
}

/// Writes a shard as CSV with header `y,x1,...,xp`.
pub fn write_csv(path: &Path, shard: &Shard) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    let mut header = String::from("y");
    for j in 1..=shard.p() {
        header.push_str(&format!(",x{j}"));
    }
    writeln!(out, "{header}")?;
    for (i, y) in shard.ys().iter().enumerate() {
        let mut line = format!("{y:?}");
        for v in shard.xs().row(i) {
            line.push(',');
            line.push_str(&format!("{v:?}"));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn libsvm_line() {
        let raw = parse_libsvm("1 1:0.5 3:\u{2212}2\n", Some(3)).unwrap();
        assert_eq!(raw.ys, vec![1.0]);
        assert_eq!(raw.xs.row(0), &[0.5, 0.0, -2.0]);
        let raw = parse_libsvm("-1 2:1\r\n\n# comment\n+1 1:3 # trailing\r\n", None).unwrap();
        assert_eq!(raw.xs.cols(), 2);
        assert_eq!(raw.ys, vec![-1.0, 1.0]);
    }

    #[test]
    fn libsvm_errors_carry_line_numbers() {
        let err = parse_libsvm("1 1:2\n1 x:2\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(matches!(parse_libsvm("1 0:2\n", None), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_libsvm("1 5:2\n", Some(3)), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_libsvm("1 2\n", None), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let raw = parse_csv("y,x1,x2\r\n1.5,2,3\n-1,0,0.25\n").unwrap();
        assert_eq!(raw.ys, vec![1.5, -1.0]);
        assert_eq!(raw.xs.row(1), &[0.0, 0.25]);
        assert!(matches!(parse_csv("t,x1\n1,2\n"), Err(Error::Parse { line: 1, .. })));
        let err = parse_csv("y,x1\n1,2\n1,abc\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn label_mapping() {
        assert_eq!(map_labels(&[0.0, 1.0, 0.0], Task::Classification).unwrap(), vec![-1.0, 1.0, -1.0]);
        assert_eq!(map_labels(&[2.0, 1.0], Task::Classification).unwrap(), vec![1.0, -1.0]);
        assert_eq!(map_labels(&[-1.0, 1.0], Task::Classification).unwrap(), vec![-1.0, 1.0]);
        assert!(matches!(map_labels(&[3.0, 1.0], Task::Classification), Err(Error::Data(_))));
        assert_eq!(map_labels(&[3.0, 7.5], Task::Regression).unwrap(), vec![3.0, 7.5]);
    }

    fn ten_rows() -> RawData {
        let xs = Matrix::new(10, 1, (0..10).map(|v| v as f64).collect()).unwrap();
        RawData { xs, ys: (0..10).map(|v| v as f64).collect() }
    }

    #[test]
    fn contiguous_and_shuffled_partitions() {
        let ds = partition(&ten_rows(), 2, PartitionPolicy::Contiguous, Task::Regression).unwrap();
        assert_eq!(ds.shard(0).ys(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ds.shard(1).ys(), &[5.0, 6.0, 7.0, 8.0, 9.0]);
        let a = partition(&ten_rows(), 3, PartitionPolicy::Shuffled { seed: 4 }, Task::Regression).unwrap();
        let b = partition(&ten_rows(), 3, PartitionPolicy::Shuffled { seed: 4 }, Task::Regression).unwrap();
        assert_eq!(a.n(), 3);
        for j in 0..3 {
            assert_eq!(a.shard(j), b.shard(j));
        }
        assert!(partition(&ten_rows(), 11, PartitionPolicy::Contiguous, Task::Regression).is_err());
    }

    #[test]
    fn sixty_twenty_twenty() {
        let (tr, va, te) = split_train_val_test(&ten_rows(), 1);
        assert_eq!((tr.len(), va.len(), te.len()), (6, 2, 2));
        let mut all: Vec<f64> = tr.ys.iter().chain(&va.ys).chain(&te.ys).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, ten_rows().ys);
        assert_eq!(split_train_val_test(&ten_rows(), 1), (tr, va, te));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let shard = Shard::new(0, Matrix::new(2, 2, vec![0.1, -3.0, 1e-17, 2.5]).unwrap(), vec![1.0, -1.0], Task::Classification)
            .unwrap();
        write_csv(&path, &shard).unwrap();
        let raw = load_text(&path, TextFormat::Csv, Task::Classification, None).unwrap();
        assert_eq!(raw.xs, *shard.xs());
        assert_eq!(raw.ys, shard.ys());
    }
}
