//! Multi-label dataset loading (MULAN ARFF + XML label spec, plain CSV),
//! feature-range tracking and the initial-batch / stream split.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// One stream instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Ordinal position in the source file.
    pub id: usize,
    pub x: Vec<f64>,
    /// Label indicators, each exactly 0 or 1.
    pub y: Vec<u8>,
}

impl Sample {
    pub fn labels_f64(&self) -> Vec<f64> {
        self.y.iter().map(|&v| f64::from(v)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    pub fn point(v: f64) -> Self {
        FeatureRange { min: v, max: v }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub p: usize,
    pub k: usize,
    pub feature_ranges: Vec<FeatureRange>,
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
}

impl Dataset {
    /// Validates every sample against `p`/`k` and computes the feature ranges.
    pub fn new(
        samples: Vec<Sample>,
        p: usize,
        k: usize,
        feature_names: Vec<String>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        check_dim(p, feature_names.len())?;
        check_dim(k, label_names.len())?;
        let mut ranges: Option<Vec<FeatureRange>> = None;
        for (row, s) in samples.iter().enumerate() {
            check_dim(p, s.x.len())?;
            check_dim(k, s.y.len())?;
            if let Some(col) = s.x.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumericFeature {
                    row: row + 1,
                    column: col + 1,
                    value: s.x[col].to_string(),
                });
            }
            if let Some(col) = s.y.iter().position(|&v| v > 1) {
                return Err(Error::NonBinaryLabel {
                    row: row + 1,
                    column: col + 1,
                    value: s.y[col].to_string(),
                });
            }
            ranges = Some(match ranges {
                None => s.x.iter().map(|&v| FeatureRange::point(v)).collect(),
                Some(r) => update_ranges(&r, &s.x)?,
            });
        }
        Ok(Dataset {
            samples,
            p,
            k,
            feature_ranges: ranges.unwrap_or_else(|| vec![FeatureRange::point(0.0); p]),
            feature_names,
            label_names,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// A new dataset over a subset of the samples (ranges recomputed).
    pub fn subset(&self, samples: Vec<Sample>) -> Result<Dataset> {
        Dataset::new(
            samples,
            self.p,
            self.k,
            self.feature_names.clone(),
            self.label_names.clone(),
        )
    }
}

/// Initial training batch plus the remaining sample-wise stream.
#[derive(Debug, Clone, Copy)]
pub struct StreamSplit<'a> {
    pub initial_batch: &'a [Sample],
    pub stream: &'a [Sample],
    pub split_fraction: f64,
}

/// Widens `ranges` componentwise so that they include `x`.
pub fn update_ranges(ranges: &[FeatureRange], x: &[f64]) -> Result<Vec<FeatureRange>> {
    check_dim(ranges.len(), x.len())?;
    Ok(ranges
        .iter()
        .zip(x)
        .map(|(r, &v)| FeatureRange {
            min: r.min.min(v),
            max: r.max.max(v),
        })
        .collect())
}

/// First `ceil(fraction * N)` samples form the batch, the rest is the stream.
pub fn split_stream(d: &Dataset, fraction: f64) -> Result<StreamSplit<'_>> {
    if d.len() < 2 {
        return Err(Error::EmptyDataset(d.len()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction {fraction} outside (0, 1)"
        )));
    }
    let n_batch = ((fraction * d.len() as f64).ceil() as usize).clamp(1, d.len());
    if n_batch == d.len() {
        return Err(Error::StreamEmpty);
    }
    let (initial_batch, stream) = d.samples.split_at(n_batch);
    Ok(StreamSplit {
        initial_batch,
        stream,
        split_fraction: fraction,
    })
}

/// Where the label attributes of an ARFF file are declared.
#[derive(Debug, Clone)]
pub enum LabelSpec {
    /// MULAN XML file with `<label name="..."/>` elements.
    Xml(PathBuf),
    Names(Vec<String>),
}

impl LabelSpec {
    fn names(&self) -> Result<Vec<String>> {
        match self {
            LabelSpec::Names(n) => Ok(n.clone()),
            LabelSpec::Xml(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                parse_label_xml(&text).map_err(|reason| Error::MalformedFile {
                    path: path.clone(),
                    line: 0,
                    reason,
                })
            }
        }
    }
}

/// Extracts the `name` attribute of every `<label>` element, in document order.
pub fn parse_label_xml(text: &str) -> std::result::Result<Vec<String>, String> {
    let mut names = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find("<label") {
        let after = &rest[pos + "<label".len()..];
        // skip `<labels>` and similar longer tag names
        if !after.starts_with(|c: char| c.is_whitespace() || c == '/' || c == '>') {
            rest = after;
            continue;
        }
        let end = after
            .find('>')
            .ok_or_else(|| "unterminated <label> element".to_string())?;
        let tag = &after[..end];
        let name = xml_attribute(tag, "name")
            .ok_or_else(|| format!("<label> element without name attribute: {tag}"))?;
        names.push(name);
        rest = &after[end..];
    }
    if names.is_empty() {
        return Err("no <label> elements found".to_string());
    }
    Ok(names)
}

fn xml_attribute(tag: &str, key: &str) -> Option<String> {
    let mut search = tag;
    loop {
        let pos = search.find(key)?;
        let before_ok = pos == 0
            || search[..pos]
                .chars()
                .last()
                .is_some_and(|c| c.is_whitespace());
        let tail = search[pos + key.len()..].trim_start();
        if before_ok {
            if let Some(tail) = tail.strip_prefix('=') {
                let tail = tail.trim_start();
                let quote = tail.chars().next()?;
                if quote == '"' || quote == '\'' {
                    let body = &tail[1..];
                    let close = body.find(quote)?;
                    return Some(xml_unescape(&body[..close]));
                }
                return None;
            }
        }
        search = &search[pos + key.len()..];
    }
}

fn xml_unescape(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

#[derive(Debug, Clone, PartialEq)]
enum AttrKind {
    Numeric,
    Nominal(Vec<String>),
    Other(String),
}

#[derive(Debug, Clone)]
struct Attribute {
    name: String,
    kind: AttrKind,
}

/// Loads a dense ARFF file; label attributes come from `label_spec`, all other
/// attributes are features in declaration order.
pub fn load_arff(arff_path: impl AsRef<Path>, label_spec: &LabelSpec) -> Result<Dataset> {
    let path = arff_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_arff(&text, path, &label_spec.names()?)
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedFile {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn parse_arff(text: &str, path: &Path, label_names: &[String]) -> Result<Dataset> {
    let mut attributes: Vec<Attribute> = Vec::new();
    let mut lines = text.lines().enumerate();
    let mut in_data = false;

    for (lineno, raw) in lines.by_ref() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("@relation") {
            continue;
        } else if lower.starts_with("@attribute") {
            let rest = line["@attribute".len()..].trim_start();
            let (name, tail) = split_arff_token(rest)
                .ok_or_else(|| malformed(path, lineno + 1, "attribute without name"))?;
            let tail = tail.trim();
            let kind = if tail.starts_with('{') {
                let close = tail
                    .rfind('}')
                    .ok_or_else(|| malformed(path, lineno + 1, "unterminated nominal set"))?;
                AttrKind::Nominal(
                    split_csv_fields(&tail[1..close])
                        .into_iter()
                        .map(|v| unquote(&v))
                        .collect(),
                )
            } else {
                match tail.to_ascii_lowercase().as_str() {
                    "numeric" | "real" | "integer" => AttrKind::Numeric,
                    "" => return Err(malformed(path, lineno + 1, "attribute without type")),
                    other => AttrKind::Other(other.to_string()),
                }
            };
            attributes.push(Attribute { name, kind });
        } else if lower.starts_with("@data") {
            in_data = true;
            break;
        } else {
            return Err(malformed(path, lineno + 1, format!("unexpected line `{line}`")));
        }
    }
    if !in_data {
        return Err(malformed(path, text.lines().count(), "missing @data section"));
    }

    let mut is_label = vec![false; attributes.len()];
    let mut label_cols = Vec::with_capacity(label_names.len());
    for name in label_names {
        let col = attributes
            .iter()
            .position(|a| &a.name == name)
            .ok_or_else(|| Error::UnknownLabel(name.clone()))?;
        is_label[col] = true;
        label_cols.push(col);
    }
    // labels are ordered as declared in the ARFF header
    label_cols.sort_unstable();
    let feature_cols: Vec<usize> = (0..attributes.len()).filter(|&c| !is_label[c]).collect();
    for &c in &feature_cols {
        if attributes[c].kind != AttrKind::Numeric {
            return Err(Error::NonNumericFeature {
                row: 0,
                column: c + 1,
                value: format!("attribute `{}`", attributes[c].name),
            });
        }
    }

    let mut samples = Vec::new();
    for (lineno, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if line.starts_with('{') {
            return Err(malformed(path, lineno + 1, "sparse ARFF rows are not supported"));
        }
        let fields = split_csv_fields(line);
        if fields.len() != attributes.len() {
            return Err(malformed(
                path,
                lineno + 1,
                format!("expected {} values, found {}", attributes.len(), fields.len()),
            ));
        }
        let row = samples.len() + 1;
        let mut x = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            x.push(parse_feature(&fields[c], row, c + 1)?);
        }
        let mut y = Vec::with_capacity(label_cols.len());
        for &c in &label_cols {
            y.push(parse_label(&fields[c], row, c + 1)?);
        }
        samples.push(Sample { id: row - 1, x, y });
    }

    Dataset::new(
        samples,
        feature_cols.len(),
        label_cols.len(),
        feature_cols
            .iter()
            .map(|&c| attributes[c].name.clone())
            .collect(),
        label_cols.iter().map(|&c| attributes[c].name.clone()).collect(),
    )
}

/// Splits off a (possibly quoted) leading token.
fn split_arff_token(s: &str) -> Option<(String, &str)> {
    let s = s.trim_start();
    let first = s.chars().next()?;
    if first == '\'' || first == '"' {
        let body = &s[1..];
        let close = body.find(first)?;
        Some((body[..close].to_string(), &body[close + 1..]))
    } else {
        let end = s.find(char::is_whitespace).unwrap_or(s.len());
        Some((s[..end].to_string(), &s[end..]))
    }
}

fn unquote(s: &str) -> String {
    let t = s.trim();
    if t.len() >= 2
        && ((t.starts_with('\'') && t.ends_with('\'')) || (t.starts_with('"') && t.ends_with('"')))
    {
        t[1..t.len() - 1].to_string()
    } else {
        t.to_string()
    }
}

/// Comma split that respects single and double quotes.
fn split_csv_fields(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    for ch in line.chars() {
        match quote {
            Some(q) if ch == q => {
                quote = None;
                cur.push(ch);
            }
            Some(_) => cur.push(ch),
            None if ch == '\'' || ch == '"' => {
                quote = Some(ch);
                cur.push(ch);
            }
            None if ch == ',' => out.push(std::mem::take(&mut cur).trim().to_string()),
            None => cur.push(ch),
        }
    }
    out.push(cur.trim().to_string());
    out
}

fn parse_feature(raw: &str, row: usize, column: usize) -> Result<f64> {
    let v = unquote(raw);
    if v.is_empty() || v == "?" {
        return Err(Error::MissingValue { row, column });
    }
    match v.parse::<f64>() {
        Ok(f) if f.is_finite() => Ok(f),
        _ => Err(Error::NonNumericFeature { row, column, value: v }),
    }
}

fn parse_label(raw: &str, row: usize, column: usize) -> Result<u8> {
    let v = unquote(raw);
    if v.is_empty() || v == "?" {
        return Err(Error::MissingValue { row, column });
    }
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" => return Ok(1),
        "0" | "false" => return Ok(0),
        _ => {}
    }
    match v.parse::<f64>() {
        Ok(0.0) => Ok(0),
        Ok(1.0) => Ok(1),
        _ => Err(Error::NonBinaryLabel { row, column, value: v }),
    }
}

/// Column layout of a CSV file.
#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    pub num_labels: usize,
    pub labels_at_end: bool,
    pub has_header: bool,
}

pub fn load_csv(csv_path: impl AsRef<Path>, opts: CsvOptions) -> Result<Dataset> {
    let path = csv_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path, opts)
}

fn parse_csv(text: &str, path: &Path, opts: CsvOptions) -> Result<Dataset> {
    if opts.num_labels == 0 {
        return Err(Error::InvalidConfig("num_labels must be positive".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut header: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(path, i + 1, e.to_string()))?;
        let fields: Vec<&str> = record.iter().collect();
        if opts.has_header && i == 0 {
            width = Some(fields.len());
            header = Some(fields.iter().map(|s| s.to_string()).collect());
            continue;
        }
        let row = samples.len() + 1;
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::RaggedRows {
                row,
                expected,
                found: fields.len(),
            });
        }
        if expected <= opts.num_labels {
            return Err(Error::InvalidConfig(format!(
                "{expected} columns leave no features for {} labels",
                opts.num_labels
            )));
        }
        let p = expected - opts.num_labels;
        let (feat_off, label_off) = if opts.labels_at_end { (0, p) } else { (opts.num_labels, 0) };
        let mut x = Vec::with_capacity(p);
        for j in 0..p {
            x.push(parse_feature(fields[feat_off + j], row, feat_off + j + 1)?);
        }
        let mut y = Vec::with_capacity(opts.num_labels);
        for j in 0..opts.num_labels {
            y.push(parse_label(fields[label_off + j], row, label_off + j + 1)?);
        }
        samples.push(Sample { id: row - 1, x, y });
    }

    let total = width.unwrap_or(opts.num_labels);
    let p = total.saturating_sub(opts.num_labels);
    let (feature_names, label_names) = match header {
        Some(h) => {
            if opts.labels_at_end {
                (h[..p].to_vec(), h[p..].to_vec())
            } else {
                (h[opts.num_labels..].to_vec(), h[..opts.num_labels].to_vec())
            }
        }
        None => (
            (0..p).map(|j| format!("x{}", j + 1)).collect(),
            (0..opts.num_labels).map(|j| format!("y{}", j + 1)).collect(),
        ),
    };
    Dataset::new(samples, p, opts.num_labels, feature_names, label_names)
}

/// Writes features then labels, with a header row, using shortest round-trip
/// float formatting.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let header: Vec<&str> = d
        .feature_names
        .iter()
        .chain(d.label_names.iter())
        .map(String::as_str)
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for s in &d.samples {
        let cells: Vec<String> = s
            .x
            .iter()
            .map(|v| v.to_string())
            .chain(s.y.iter().map(|v| v.to_string()))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY_ARFF: &str = "@relation tiny\n\
        @attribute f1 numeric\n\
        @attribute f2 numeric\n\
        @attribute l1 {0,1}\n\
        @attribute l2 {0,1}\n\
        @data\n\
        0.1,0.2,1,0\n\
        0.3,0.4,0,1\n";

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tiny_arff_parses_with_ranges() {
        let d = parse_arff(TINY_ARFF, Path::new("tiny.arff"), &names(&["l1", "l2"])).unwrap();
        assert_eq!((d.len(), d.p, d.k), (2, 2, 2));
        assert_eq!(d.samples[0].y, vec![1, 0]);
        assert_eq!(d.samples[1].y, vec![0, 1]);
        assert_eq!(d.feature_ranges[0], FeatureRange { min: 0.1, max: 0.3 });
        assert_eq!(d.feature_ranges[1], FeatureRange { min: 0.2, max: 0.4 });
    }

    #[test]
    fn arff_without_rows_is_empty_dataset() {
        let text = "@RELATION e\n@ATTRIBUTE a NUMERIC\n@ATTRIBUTE 'lab one' {false,true}\n@DATA\n";
        let d = parse_arff(text, Path::new("e.arff"), &names(&["lab one"])).unwrap();
        assert_eq!((d.len(), d.p, d.k), (0, 1, 1));
    }

    #[test]
    fn arff_error_paths() {
        let p = Path::new("x.arff");
        assert!(matches!(
            parse_arff(TINY_ARFF, p, &names(&["nope"])),
            Err(Error::UnknownLabel(_))
        ));
        let missing = TINY_ARFF.replace("0.3,0.4", "?,0.4");
        assert!(matches!(
            parse_arff(&missing, p, &names(&["l1", "l2"])),
            Err(Error::MissingValue { row: 2, column: 1 })
        ));
        let nominal = TINY_ARFF.replace("f2 numeric", "f2 {a,b}");
        assert!(matches!(
            parse_arff(&nominal, p, &names(&["l1", "l2"])),
            Err(Error::NonNumericFeature { .. })
        ));
        let broken = TINY_ARFF.replace("0.3,0.4,0,1", "0.3,0.4,0");
        assert!(matches!(
            parse_arff(&broken, p, &names(&["l1", "l2"])),
            Err(Error::MalformedFile { line: 8, .. })
        ));
    }

    #[test]
    fn comments_and_boolean_labels() {
        let text = "% header comment\n@relation r\n@attribute x numeric\n@attribute c {FALSE,TRUE}\n@data\n% row comment\n2.5,TRUE\n-1,false\n";
        let d = parse_arff(text, Path::new("b.arff"), &names(&["c"])).unwrap();
        assert_eq!(d.samples[0].y, vec![1]);
        assert_eq!(d.samples[1].y, vec![0]);
    }

    #[test]
    fn mulan_xml_labels() {
        let xml = r#"<?xml version="1.0" encoding="utf-8"?>
<labels xmlns="http://mulan.sourceforge.net/labels">
<label name="amazed-suprised"></label>
<label name="happy-pleased"/>
<label name='a &amp; b'/>
</labels>"#;
        assert_eq!(
            parse_label_xml(xml).unwrap(),
            names(&["amazed-suprised", "happy-pleased", "a & b"])
        );
        assert!(parse_label_xml("<labels></labels>").is_err());
    }

    #[test]
    fn csv_trailing_labels() {
        let text = "0.1,5,1,0\n0.2,6,0,1\n0.3,7,1,1\n";
        let opts = CsvOptions {
            num_labels: 2,
            labels_at_end: true,
            has_header: false,
        };
        let d = parse_csv(text, Path::new("a.csv"), opts).unwrap();
        assert_eq!((d.len(), d.p, d.k), (3, 2, 2));
        assert_eq!(d.samples[2].y, vec![1, 1]);
    }

    #[test]
    fn csv_leading_labels_with_header() {
        let text = "a,b,f\n1,0,3.5\n0,0,-1\n";
        let opts = CsvOptions {
            num_labels: 2,
            labels_at_end: false,
            has_header: true,
        };
        let d = parse_csv(text, Path::new("a.csv"), opts).unwrap();
        assert_eq!(d.label_names, names(&["a", "b"]));
        assert_eq!(d.samples[0].x, vec![3.5]);
        assert_eq!(d.samples[0].y, vec![1, 0]);
    }

    #[test]
    fn csv_error_paths() {
        let opts = CsvOptions {
            num_labels: 2,
            labels_at_end: true,
            has_header: false,
        };
        let p = Path::new("a.csv");
        assert!(matches!(
            parse_csv("0.1,1,2\n", p, opts),
            Err(Error::NonBinaryLabel { row: 1, column: 3, .. })
        ));
        assert!(matches!(
            parse_csv("0.1,1,0\n0.2,1\n", p, opts),
            Err(Error::RaggedRows { row: 2, expected: 3, found: 2 })
        ));
        assert!(matches!(
            parse_csv("abc,1,0\n", p, opts),
            Err(Error::NonNumericFeature { .. })
        ));
    }

    fn dataset_of(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| Sample {
                id: i,
                x: vec![i as f64],
                y: vec![(i % 2) as u8],
            })
            .collect();
        Dataset::new(samples, 1, 1, names(&["x"]), names(&["y"])).unwrap()
    }

    #[test]
    fn split_arithmetic() {
        let d = dataset_of(10);
        let s = split_stream(&d, 0.3).unwrap();
        assert_eq!((s.initial_batch.len(), s.stream.len()), (3, 7));
        let d = dataset_of(593);
        let s = split_stream(&d, 0.25).unwrap();
        assert_eq!((s.initial_batch.len(), s.stream.len()), (149, 444));
    }

    #[test]
    fn split_degenerate_cases() {
        assert!(matches!(
            split_stream(&dataset_of(2), 0.999),
            Err(Error::StreamEmpty)
        ));
        assert!(matches!(
            split_stream(&dataset_of(1), 0.5),
            Err(Error::EmptyDataset(1))
        ));
    }

    #[test]
    fn ranges_widen_only() {
        let r = vec![FeatureRange { min: 0.0, max: 1.0 }];
        assert_eq!(
            update_ranges(&r, &[2.0]).unwrap(),
            vec![FeatureRange { min: 0.0, max: 2.0 }]
        );
        assert_eq!(update_ranges(&r, &[0.5]).unwrap(), r);
        assert!(matches!(
            update_ranges(&r, &[0.5, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
