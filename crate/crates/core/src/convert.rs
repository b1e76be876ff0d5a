//! Converters from common public multi-label formats.
//!
//! * ARFF as distributed by MULAN (labels are the last `L` attributes) and
//!   MEKA (`-C <L>` in the relation name, labels first for positive `L`,
//!   last for negative). Dense and sparse (`{idx val, ...}`) data rows are
//!   both accepted.
//! * LIBSVM multi-label text: `l1,l2 f:v f:v ...` with 1-based feature
//!   indices by default.

use ndarray::Array2;

use crate::data::MultiLabelDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Where the label attributes sit in an ARFF file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArffLabels {
    /// Read `-C <L>` from the relation name.
    Meka,
    First(usize),
    Last(usize),
}

#[derive(Debug)]
struct Attribute {
    name: String,
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('\'')
        .and_then(|t| t.strip_suffix('\''))
        .or_else(|| s.strip_prefix('"').and_then(|t| t.strip_suffix('"')))
        .unwrap_or(s)
}

fn attribute_name(rest: &str, line_no: usize) -> Result<String> {
    let rest = rest.trim();
    let name = if let Some(q) = rest.chars().next().filter(|c| *c == '\'' || *c == '"') {
        let end = rest[1..]
            .find(q)
            .ok_or_else(|| Error::parse(line_no, "unterminated attribute name"))?;
        &rest[1..=end]
    } else {
        rest.split_whitespace()
            .next()
            .ok_or_else(|| Error::parse(line_no, "missing attribute name"))?
    };
    Ok(name.to_string())
}

fn meka_label_count(relation: &str, line_no: usize) -> Result<ArffLabels> {
    let toks: Vec<&str> = unquote(relation).split_whitespace().collect();
    let pos = toks
        .iter()
        .position(|t| *t == "-C")
        .ok_or_else(|| Error::parse(line_no, "relation name has no '-C <L>' option"))?;
    let c: i64 = toks
        .get(pos + 1)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(line_no, "'-C' is not followed by an integer"))?;
    Ok(if c >= 0 {
        ArffLabels::First(c as usize)
    } else {
        ArffLabels::Last(c.unsigned_abs() as usize)
    })
}

fn parse_cell(tok: &str, line_no: usize) -> Result<f64> {
    let tok = unquote(tok);
    if tok == "?" {
        return Err(Error::parse(line_no, "missing values ('?') are not supported"));
    }
    tok.parse()
        .map_err(|_| Error::parse(line_no, format!("'{tok}' is not numeric")))
}

pub fn parse_arff<T: Scalar>(text: &str, labels: ArffLabels) -> Result<MultiLabelDataset<T>> {
    let mut attrs: Vec<Attribute> = Vec::new();
    let mut layout = labels;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut in_data = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = line.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                if labels == ArffLabels::Meka {
                    layout = meka_label_count(&line["@relation".len()..], line_no)?;
                }
            } else if lower.starts_with("@attribute") {
                attrs.push(Attribute {
                    name: attribute_name(&line["@attribute".len()..], line_no)?,
                });
            } else if lower.starts_with("@data") {
                in_data = true;
            }
            continue;
        }
        let width = attrs.len();
        let mut row = vec![0.0; width];
        if let Some(body) = line.strip_prefix('{') {
            let body = body
                .strip_suffix('}')
                .ok_or_else(|| Error::parse(line_no, "unterminated sparse row"))?;
            for pair in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (k, v) = pair
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| Error::parse(line_no, format!("bad sparse entry '{pair}'")))?;
                let k: usize = k
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad attribute index '{k}'")))?;
                if k >= width {
                    return Err(Error::parse(line_no, format!("attribute index {k} out of range")));
                }
                row[k] = parse_cell(v, line_no)?;
            }
        } else {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(Error::parse(
                    line_no,
                    format!("expected {width} values, found {}", cells.len()),
                ));
            }
            for (slot, cell) in row.iter_mut().zip(cells) {
                *slot = parse_cell(cell, line_no)?;
            }
        }
        rows.push((line_no, row));
    }
    if !in_data {
        return Err(Error::parse(text.lines().count(), "no @data section"));
    }

    let (label_cols, feature_cols): (Vec<usize>, Vec<usize>) = match layout {
        ArffLabels::First(l) if l < attrs.len() => ((0..l).collect(), (l..attrs.len()).collect()),
        ArffLabels::Last(l) if l < attrs.len() => {
            let split = attrs.len() - l;
            ((split..attrs.len()).collect(), (0..split).collect())
        }
        ArffLabels::Meka => unreachable!("resolved from the relation line"),
        _ => {
            return Err(Error::InvalidDataset(format!(
                "label layout {layout:?} does not fit {} attributes",
                attrs.len()
            )))
        }
    };
    let n = rows.len();
    let mut features = Array2::<T>::zeros((n, feature_cols.len()));
    let mut label_matrix = Array2::<u8>::zeros((n, label_cols.len()));
    for (i, (line_no, row)) in rows.iter().enumerate() {
        for (k, &col) in feature_cols.iter().enumerate() {
            features[[i, k]] = T::of(row[col]);
        }
        for (j, &col) in label_cols.iter().enumerate() {
            label_matrix[[i, j]] = match row[col] {
                v if v == 0.0 => 0,
                v if v == 1.0 => 1,
                v => return Err(Error::parse(*line_no, format!("label value {v} is not 0 or 1"))),
            };
        }
    }
    let names = label_cols.iter().map(|&c| attrs[c].name.replace(char::is_whitespace, "_")).collect();
    MultiLabelDataset::new(features, label_matrix, Some(names))
}

/// LIBSVM-style multi-label text. `d` and `L` are inferred from the largest
/// indices when not given.
pub fn parse_libsvm<T: Scalar>(
    text: &str,
    one_based_features: bool,
    d: Option<usize>,
    num_labels: Option<usize>,
) -> Result<MultiLabelDataset<T>> {
    let mut rows: Vec<(Vec<usize>, Vec<(usize, f64)>)> = Vec::new();
    let (mut max_feat, mut max_label) = (0usize, 0usize);
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace().peekable();
        let mut labels = Vec::new();
        if let Some(first) = toks.peek().filter(|t| !t.contains(':')) {
            for l in first.split(',').filter(|l| !l.is_empty()) {
                let j: usize = l
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad label '{l}'")))?;
                max_label = max_label.max(j + 1);
                labels.push(j);
            }
            toks.next();
        }
        let mut feats = Vec::new();
        for tok in toks {
            let (k, v) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(line_no, format!("feature '{tok}' is not <index>:<value>")))?;
            let mut k: usize = k
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad feature index '{k}'")))?;
            if one_based_features {
                k = k
                    .checked_sub(1)
                    .ok_or_else(|| Error::parse(line_no, "feature index 0 in a 1-based file"))?;
            }
            let v = parse_cell(v, line_no)?;
            if !v.is_finite() {
                return Err(Error::parse(line_no, "non-finite feature value"));
            }
            max_feat = max_feat.max(k + 1);
            feats.push((k, v));
        }
        rows.push((labels, feats));
    }
    let d = d.unwrap_or(max_feat).max(1);
    let num_labels = num_labels.unwrap_or(max_label);
    if max_feat > d || max_label > num_labels {
        return Err(Error::InvalidDataset(format!(
            "indices exceed the given sizes (d = {d}, L = {num_labels})"
        )));
    }
    let mut features = Array2::<T>::zeros((rows.len(), d));
    let mut labels = Array2::<u8>::zeros((rows.len(), num_labels));
    for (i, (ls, fs)) in rows.into_iter().enumerate() {
        for j in ls {
            labels[[i, j]] = 1;
        }
        for (k, v) in fs {
            features[[i, k]] = T::of(v);
        }
    }
    MultiLabelDataset::new(features, labels, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const MULAN: &str = "\
% comment
@relation toy
@attribute f1 numeric
@attribute 'f 2' numeric
@attribute beach {0,1}
@attribute sunset {0,1}
@data
0.5,1.0,1,0
{0 2.5,3 1}
";

    #[test]
    fn mulan_layout() {
        let ds: MultiLabelDataset<f64> = parse_arff(MULAN, ArffLabels::Last(2)).unwrap();
        assert_eq!(ds.features(), &array![[0.5, 1.0], [2.5, 0.0]]);
        assert_eq!(ds.labels(), &array![[1u8, 0], [0, 1]]);
        assert_eq!(ds.label_names(), ["beach", "sunset"]);
    }

    #[test]
    fn meka_layout() {
        let text = "@relation 'scene: -C 2'\n@attribute a {0,1}\n@attribute b {0,1}\n@attribute x numeric\n@data\n1,1,0.25\n0,1,-1\n";
        let ds: MultiLabelDataset<f64> = parse_arff(text, ArffLabels::Meka).unwrap();
        assert_eq!(ds.labels(), &array![[1u8, 1], [0, 1]]);
        assert_eq!(ds.features(), &array![[0.25], [-1.0]]);
    }

    #[test]
    fn arff_errors() {
        assert!(parse_arff::<f64>(MULAN, ArffLabels::Last(9)).is_err());
        let bad = MULAN.replace("0.5,1.0,1,0", "0.5,1.0,2,0");
        assert!(matches!(parse_arff::<f64>(&bad, ArffLabels::Last(2)), Err(Error::Parse { line: 8, .. })));
        assert!(parse_arff::<f64>("@relation x\n", ArffLabels::Last(2)).is_err());
    }

    #[test]
    fn libsvm_multilabel() {
        let text = "0,2 1:0.5 3:1\n 2:2\n1 1:1\n";
        let ds: MultiLabelDataset<f64> = parse_libsvm(text, true, None, None).unwrap();
        assert_eq!(ds.labels(), &array![[1u8, 0, 1], [0, 0, 0], [0, 1, 0]]);
        assert_eq!(ds.features(), &array![[0.5, 0.0, 1.0], [0.0, 2.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!(parse_libsvm::<f64>("0 0:1\n", true, None, Some(2)).is_err());
        assert!(parse_libsvm::<f64>(text, true, Some(2), None).is_err());
    }
}
