//! Text formats.
//!
//! `SPARSE_ML`:
//!
//! ```text
//! #n=<n> d=<d> L=<L>
//! #labels <name_0> ... <name_{L-1}>      (optional)
//! <label,label,...>|<feat>:<val> <feat>:<val> ...
//! ```
//!
//! Indices are 0-based; both lists may be empty. Other `#` lines are
//! comments.
//!
//! `DENSE_CSV`: header `y0,...,y{L-1},x0,...,x{d-1}`, then one row per
//! instance.
//!
//! Concealed datasets extend `SPARSE_ML` with a `#plu` header section and a
//! third field per line holding `<s>:<unit value>` for each unit:
//!
//! ```text
//! #n=<n> d=<d> L=<L>
//! #plu m=<m> mode=<dataset_fixed|per_instance> seed=<seed>
//! #unit <u> s=<s> p=<p>
//! <observed labels>|<features>|<s_0>:<v_0> <s_1>:<v_1> ...
//! ```
//!
//! The sealed ground truth goes to a separate `.truth` file that is only
//! read for evaluation:
//!
//! ```text
//! #truth n=<n> m=<m>
//! <z_s0> <z_p0> <z_s1> <z_p1> ...
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::conceal::{ConcealedDataset, PairingMode, PluScheme, PluUnit, SealedTruth};
use crate::data::{default_label_names, MultiLabelDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    SparseMl,
    DenseCsv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sparse_ml" | "sparse" => Ok(Self::SparseMl),
            "dense_csv" | "csv" => Ok(Self::DenseCsv),
            other => Err(Error::InvalidConfig(format!("unknown dataset format '{other}'"))),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_dataset<T: Scalar>(path: &Path, format: Format) -> Result<MultiLabelDataset<T>> {
    let text = read_text(path)?;
    match format {
        Format::SparseMl => parse_sparse_ml(&text),
        Format::DenseCsv => parse_dense_csv(&text),
    }
}

pub fn write_dataset<T: Scalar>(ds: &MultiLabelDataset<T>, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::SparseMl => to_sparse_ml(ds),
        Format::DenseCsv => to_dense_csv(ds),
    };
    write_text(path, &text)
}

#[derive(Debug, Clone, Copy)]
struct Header {
    n: usize,
    d: usize,
    num_labels: usize,
}

fn parse_header(line: &str, line_no: usize) -> Result<Header> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::parse(line_no, "expected header '#n=<n> d=<d> L=<L>'"))?;
    let mut fields = BTreeMap::new();
    for tok in body.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::parse(line_no, format!("bad header field '{tok}'")))?;
        let v: usize = v
            .parse()
            .map_err(|_| Error::parse(line_no, format!("header field '{k}' is not a count")))?;
        fields.insert(k.to_string(), v);
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::parse(line_no, format!("header is missing '{k}='")))
    };
    Ok(Header {
        n: get("n")?,
        d: get("d")?,
        num_labels: get("L")?,
    })
}

fn parse_index(tok: &str, line_no: usize, what: &str) -> Result<usize> {
    tok.trim()
        .parse()
        .map_err(|_| Error::parse(line_no, format!("{what} '{tok}' is not a non-negative integer")))
}

fn parse_labels(field: &str, num_labels: usize, line_no: usize, row: &mut [u8]) -> Result<()> {
    for tok in field.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let j = parse_index(tok, line_no, "label index")?;
        if j >= num_labels {
            return Err(Error::parse(
                line_no,
                format!("label index {j} out of range (L = {num_labels})"),
            ));
        }
        row[j] = 1;
    }
    Ok(())
}

fn parse_value<T: Scalar>(tok: &str, line_no: usize) -> Result<T> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line_no, format!("'{tok}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line_no, format!("non-finite feature value '{tok}'")));
    }
    Ok(T::of(v))
}

fn parse_features<T: Scalar>(field: &str, d: usize, line_no: usize, row: &mut [T]) -> Result<()> {
    let mut seen = vec![false; d];
    for tok in field.split_whitespace() {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| Error::parse(line_no, format!("feature '{tok}' is not <index>:<value>")))?;
        let k = parse_index(idx, line_no, "feature index")?;
        if k >= d {
            return Err(Error::parse(line_no, format!("feature index {k} out of range (d = {d})")));
        }
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::parse(line_no, format!("feature index {k} repeated")));
        }
        row[k] = parse_value(val, line_no)?;
    }
    Ok(())
}

/// Data lines of a SPARSE_ML body with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn first_line(text: &str) -> Result<&str> {
    text.lines()
        .next()
        .map(str::trim)
        .ok_or_else(|| Error::parse(1, "empty file"))
}

fn check_count(expected: usize, actual: usize, line_no: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::parse(
            line_no,
            format!("header declares n={expected} but {actual} instances were read"),
        ));
    }
    Ok(())
}

pub fn parse_sparse_ml<T: Scalar>(text: &str) -> Result<MultiLabelDataset<T>> {
    let header = parse_header(first_line(text)?, 1)?;
    let Header { n, d, num_labels } = header;
    let mut names = None;
    for (i, line) in text.lines().enumerate().skip(1) {
        if let Some(rest) = line.trim().strip_prefix("#labels") {
            let list: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
            if list.len() != num_labels {
                return Err(Error::parse(
                    i + 1,
                    format!("#labels lists {} names, expected {num_labels}", list.len()),
                ));
            }
            names = Some(list);
        }
    }
    let mut features = Array2::<T>::zeros((n, d));
    let mut labels = Array2::<u8>::zeros((n, num_labels));
    let mut count = 0;
    let mut last_line = 1;
    for (line_no, line) in data_lines(text) {
        last_line = line_no;
        if count == n {
            return Err(Error::parse(line_no, format!("more than n={n} instances")));
        }
        let (lab, feat) = line
            .split_once('|')
            .ok_or_else(|| Error::parse(line_no, "expected '<labels>|<features>'"))?;
        if feat.contains('|') {
            return Err(Error::parse(line_no, "unexpected '|' in feature list"));
        }
        parse_labels(lab, num_labels, line_no, labels.row_mut(count).as_slice_mut().unwrap())?;
        parse_features(feat, d, line_no, features.row_mut(count).as_slice_mut().unwrap())?;
        count += 1;
    }
    check_count(n, count, last_line)?;
    MultiLabelDataset::new(features, labels, names)
}

fn label_list(row: impl Iterator<Item = (usize, u8)>) -> String {
    row.filter(|&(_, z)| z == 1)
        .map(|(j, _)| j.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn feature_list<T: Scalar>(row: ndarray::ArrayView1<'_, T>) -> String {
    let mut out = String::new();
    for (k, &v) in row.iter().enumerate().filter(|(_, v)| !v.is_zero()) {
        if !out.is_empty() {
            out.push(' ');
        }
        let _ = write!(out, "{k}:{v}");
    }
    out
}

pub fn to_sparse_ml<T: Scalar>(ds: &MultiLabelDataset<T>) -> String {
    let mut out = format!("#n={} d={} L={}\n", ds.n(), ds.d(), ds.num_labels());
    if ds.label_names() != default_label_names(ds.num_labels()).as_slice() {
        let _ = writeln!(out, "#labels {}", ds.label_names().join(" "));
    }
    for i in 0..ds.n() {
        let labels = label_list(ds.labels().row(i).iter().copied().enumerate());
        let _ = writeln!(out, "{labels}|{}", feature_list(ds.instance(i)));
    }
    out
}

pub fn parse_dense_csv<T: Scalar>(text: &str) -> Result<MultiLabelDataset<T>> {
    let header: Vec<&str> = first_line(text)?.split(',').map(str::trim).collect();
    let num_labels = header.iter().take_while(|h| h.starts_with('y')).count();
    let d = header.len() - num_labels;
    for (k, h) in header.iter().enumerate() {
        let expected = if k < num_labels {
            format!("y{k}")
        } else {
            format!("x{}", k - num_labels)
        };
        if *h != expected {
            return Err(Error::parse(1, format!("header column {k} is '{h}', expected '{expected}'")));
        }
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (i, line) in text.lines().enumerate().skip(1) {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(Error::parse(
                line_no,
                format!("expected {} columns, found {}", header.len(), cells.len()),
            ));
        }
        for cell in &cells[..num_labels] {
            match *cell {
                "0" => labels.push(0u8),
                "1" => labels.push(1u8),
                other => return Err(Error::parse(line_no, format!("label value '{other}' is not 0 or 1"))),
            }
        }
        for cell in &cells[num_labels..] {
            features.push(parse_value::<T>(cell, line_no)?);
        }
        n += 1;
    }
    let features = Array2::from_shape_vec((n, d), features).expect("row width checked");
    let labels = Array2::from_shape_vec((n, num_labels), labels).expect("row width checked");
    MultiLabelDataset::new(features, labels, None)
}

pub fn to_dense_csv<T: Scalar>(ds: &MultiLabelDataset<T>) -> String {
    let header: Vec<String> = (0..ds.num_labels())
        .map(|j| format!("y{j}"))
        .chain((0..ds.d()).map(|k| format!("x{k}")))
        .collect();
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..ds.n() {
        let cells: Vec<String> = ds
            .labels()
            .row(i)
            .iter()
            .map(|z| z.to_string())
            .chain(ds.instance(i).iter().map(|v| v.to_string()))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes the concealed dataset. The sealed channel is not part of this
/// file; see [`to_truth`].
pub fn to_concealed_sparse_ml<T: Scalar>(cd: &ConcealedDataset<T>) -> String {
    let scheme = cd.scheme();
    let mut out = format!("#n={} d={} L={}\n", cd.n(), cd.d(), cd.num_labels());
    let _ = writeln!(out, "#plu m={} mode={} seed={}", scheme.m(), scheme.mode, scheme.seed);
    for (u, unit) in scheme.units.iter().enumerate() {
        let _ = writeln!(out, "#unit {u} s={} p={}", unit.s, unit.p);
    }
    for i in 0..cd.n() {
        let labels = label_list(
            cd.observed_index()
                .row(i)
                .iter()
                .copied()
                .zip(cd.observed_labels().row(i).iter().copied()),
        );
        let units: Vec<String> = cd
            .unit_members()
            .row(i)
            .iter()
            .zip(cd.plu_values().row(i))
            .map(|(&[s, _], v)| format!("{s}:{v}"))
            .collect();
        let _ = writeln!(
            out,
            "{labels}|{}|{}",
            feature_list(cd.features().row(i)),
            units.join(" ")
        );
    }
    out
}

fn parse_kv<'a>(tokens: impl Iterator<Item = &'a str>, line_no: usize) -> Result<BTreeMap<&'a str, &'a str>> {
    tokens
        .map(|t| {
            t.split_once('=')
                .ok_or_else(|| Error::parse(line_no, format!("expected key=value, found '{t}'")))
        })
        .collect()
}

fn kv_get<'a, V: FromStr>(map: &BTreeMap<&'a str, &'a str>, key: &str, line_no: usize) -> Result<V> {
    map.get(key)
        .ok_or_else(|| Error::parse(line_no, format!("missing '{key}='")))?
        .parse()
        .map_err(|_| Error::parse(line_no, format!("bad value for '{key}'")))
}

fn parse_scheme_section(text: &str, num_labels: usize) -> Result<PluScheme> {
    let mut m = None;
    let mut mode = PairingMode::DatasetFixed;
    let mut seed = 0u64;
    let mut units: BTreeMap<usize, PluUnit> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line_no = i + 1;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("#plu") {
            let kv = parse_kv(rest.split_whitespace(), line_no)?;
            m = Some(kv_get::<usize>(&kv, "m", line_no)?);
            mode = kv_get::<String>(&kv, "mode", line_no)?.parse()?;
            seed = kv_get(&kv, "seed", line_no)?;
        } else if let Some(rest) = line.strip_prefix("#unit") {
            let mut toks = rest.split_whitespace();
            let u = parse_index(toks.next().unwrap_or(""), line_no, "unit number")?;
            let kv = parse_kv(toks, line_no)?;
            units.insert(
                u,
                PluUnit {
                    s: kv_get(&kv, "s", line_no)?,
                    p: kv_get(&kv, "p", line_no)?,
                },
            );
        }
    }
    let m = m.ok_or_else(|| Error::parse(1, "missing '#plu' header section"))?;
    if units.len() != m || units.keys().copied().ne(0..m) {
        return Err(Error::parse(1, format!("expected #unit lines 0..{m}")));
    }
    let scheme = PluScheme {
        num_labels,
        mode,
        seed,
        units: units.into_values().collect(),
    };
    if m > 0 {
        scheme.validate()?;
    }
    Ok(scheme)
}

/// Reads a concealed dataset, optionally attaching the sealed channel.
pub fn parse_concealed<T: Scalar>(text: &str, truth: Option<&str>) -> Result<ConcealedDataset<T>> {
    let Header { n, d, num_labels } = parse_header(first_line(text)?, 1)?;
    let scheme = parse_scheme_section(text, num_labels)?;
    let m = scheme.m();
    let c = scheme.c();

    let mut features = Array2::<T>::zeros((n, d));
    let mut observed_index = Vec::with_capacity(n * c);
    let mut observed = Vec::with_capacity(n * c);
    let mut members = Vec::with_capacity(n * m);
    let mut values = Vec::with_capacity(n * m);
    let mut count = 0;
    let mut last_line = 1;
    let mut row = vec![0u8; num_labels];
    for (line_no, line) in data_lines(text) {
        last_line = line_no;
        if count == n {
            return Err(Error::parse(line_no, format!("more than n={n} instances")));
        }
        let fields: Vec<&str> = line.split('|').collect();
        let [lab, feat, unit_field] = fields[..] else {
            return Err(Error::parse(line_no, "expected '<labels>|<features>|<units>'"));
        };
        parse_features(feat, d, line_no, features.row_mut(count).as_slice_mut().unwrap())?;

        let mut row_members = Vec::with_capacity(m);
        for (u, tok) in unit_field.split_whitespace().enumerate() {
            let unit = scheme
                .units
                .get(u)
                .ok_or_else(|| Error::parse(line_no, format!("more than m={m} unit values")))?;
            let (s, v) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(line_no, format!("unit '{tok}' is not <s>:<value>")))?;
            let s = parse_index(s, line_no, "unit partner")?;
            let v: u8 = match v {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::parse(line_no, format!("unit value '{other}' is not 0 or 1"))),
            };
            if s >= num_labels {
                return Err(Error::parse(line_no, format!("unit partner {s} out of range")));
            }
            row_members.push([s, unit.p]);
            values.push(v);
        }
        if row_members.len() != m {
            return Err(Error::parse(
                line_no,
                format!("expected {m} unit values, found {}", row_members.len()),
            ));
        }

        // Observed positions are every label outside this row's units.
        row.fill(0);
        parse_labels(lab, num_labels, line_no, &mut row)?;
        let hidden: Vec<usize> = row_members.iter().flatten().copied().collect();
        if let Some(j) = hidden.iter().find(|&&j| row[j] == 1) {
            return Err(Error::parse(line_no, format!("label {j} is a unit member but listed as observed")));
        }
        for (j, &z) in row.iter().enumerate().filter(|(j, _)| !hidden.contains(j)) {
            observed_index.push(j);
            observed.push(z);
        }
        if observed_index.len() != (count + 1) * c {
            return Err(Error::parse(line_no, "unit members are not distinct"));
        }
        members.extend(row_members);
        count += 1;
    }
    check_count(n, count, last_line)?;

    let sealed = truth.map(|t| parse_truth(t, n, m)).transpose()?;
    ConcealedDataset::from_parts(
        features,
        scheme,
        Array2::from_shape_vec((n, m), members).expect("m per row"),
        Array2::from_shape_vec((n, c), observed_index).expect("c per row"),
        Array2::from_shape_vec((n, c), observed).expect("c per row"),
        Array2::from_shape_vec((n, m), values).expect("m per row"),
        sealed,
    )
}

/// Serialises the sealed channel. Evaluation only.
pub fn to_truth<T: Scalar>(cd: &ConcealedDataset<T>) -> Result<String> {
    let sealed = cd.sealed().ok_or(Error::SealedTruthMissing)?;
    let mut out = format!("#truth n={} m={}\n", cd.n(), cd.m());
    for row in sealed.values.outer_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    Ok(out)
}

fn parse_truth(text: &str, n: usize, m: usize) -> Result<SealedTruth> {
    let head = first_line(text)?;
    let kv = parse_kv(
        head.strip_prefix("#truth")
            .ok_or_else(|| Error::parse(1, "expected '#truth n=<n> m=<m>'"))?
            .split_whitespace(),
        1,
    )?;
    let (tn, tm): (usize, usize) = (kv_get(&kv, "n", 1)?, kv_get(&kv, "m", 1)?);
    if (tn, tm) != (n, m) {
        return Err(Error::parse(1, format!("truth file is n={tn} m={tm}, dataset is n={n} m={m}")));
    }
    let mut values = Vec::with_capacity(n * 2 * m);
    let mut rows = 0;
    for (i, line) in text.lines().enumerate().skip(1) {
        let line_no = i + 1;
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.is_empty() && m > 0 {
            continue;
        }
        if cells.len() != 2 * m {
            return Err(Error::parse(line_no, format!("expected {} truth values", 2 * m)));
        }
        for c in cells {
            values.push(match c {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::parse(line_no, format!("truth value '{other}' is not 0 or 1"))),
            });
        }
        rows += 1;
    }
    if m > 0 {
        check_count(n, rows, text.lines().count())?;
    }
    Ok(SealedTruth::new(
        Array2::from_shape_vec((n, 2 * m), values).expect("row width checked"),
    ))
}

pub fn write_concealed<T: Scalar>(cd: &ConcealedDataset<T>, data_path: &Path, truth_path: Option<&Path>) -> Result<()> {
    write_text(data_path, &to_concealed_sparse_ml(cd))?;
    if let Some(tp) = truth_path {
        write_text(tp, &to_truth(cd)?)?;
    }
    Ok(())
}

/// Loads a concealed dataset; the truth file is attached only when given
/// and present on disk.
pub fn load_concealed<T: Scalar>(data_path: &Path, truth_path: Option<&Path>) -> Result<ConcealedDataset<T>> {
    let text = read_text(data_path)?;
    let truth = match truth_path {
        Some(p) if p.exists() => Some(read_text(p)?),
        _ => None,
    };
    parse_concealed(&text, truth.as_deref())
}
