//! Reader and writer for the `.ts` text format of the UEA/UCR archives.
//!
//! ```text
//! # comment
//! @problemName Example
//! @timeStamps false
//! @missing true
//! @univariate false
//! @dimensions 2
//! @equalLength true
//! @seriesLength 3
//! @classLabel true a b
//! @data
//! 1,2,3:4,?,6:a
//! ```
//!
//! Each body line holds one sample: channels separated by `:`, values by
//! `,`, and the class token last. Missing values (`?` or `NaN`) are filled
//! per channel by linear interpolation, holding the nearest observed value
//! at the edges. Directive names are matched case-insensitively; anything
//! outside the classification subset is rejected.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{SequenceDataset, SequenceSample, Split};
use crate::autodiff::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TsError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: unknown directive @{directive}")]
    UnknownDirective { line: usize, directive: String },
    #[error("line {line}: invalid value {value:?} for @{directive}")]
    DirectiveValue {
        line: usize,
        directive: String,
        value: String,
    },
    #[error("line {line}: {what} is not supported")]
    Unsupported { line: usize, what: String },
    #[error("line {line}: expected a directive before @data")]
    UnexpectedLine { line: usize },
    #[error("header declares no class labels; only classification files are supported")]
    MissingClassLabels,
    #[error("line {line}: expected {expected} dimensions, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: unknown class label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: cannot parse value {token:?}")]
    BadValue { line: usize, token: String },
    #[error("line {line}: channels have different lengths")]
    ChannelLength { line: usize },
    #[error("line {line}: series length {found} differs from declared {expected}")]
    SeriesLength {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: channel {channel} has no observed values")]
    AllMissing { line: usize, channel: usize },
    #[error("line {line}: no samples after @data")]
    EmptyBody { line: usize },
}

#[derive(Default)]
struct Header {
    name: Option<String>,
    univariate: Option<bool>,
    dimensions: Option<usize>,
    equal_length: Option<bool>,
    series_length: Option<usize>,
    class_names: Option<Vec<String>>,
}

fn parse_bool(line: usize, directive: &str, value: &str) -> Result<bool, TsError> {
    match value.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(TsError::DirectiveValue {
            line,
            directive: directive.into(),
            value: value.into(),
        }),
    }
}

fn parse_usize(line: usize, directive: &str, value: &str) -> Result<usize, TsError> {
    value.parse().map_err(|_| TsError::DirectiveValue {
        line,
        directive: directive.into(),
        value: value.into(),
    })
}

/// Reads a `.ts` file. Files whose stem ends in `_TEST` are tagged as the
/// test split, everything else as train.
pub fn parse_ts(path: impl AsRef<Path>) -> Result<SequenceDataset, TsError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| TsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    let split = if stem.to_ascii_uppercase().ends_with("_TEST") {
        Split::Test
    } else {
        Split::Train
    };
    parse_ts_str(&text, split)
}

pub fn parse_ts_str(text: &str, split: Split) -> Result<SequenceDataset, TsError> {
    let mut header = Header::default();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut last_line = 0;

    for (line, raw) in lines.by_ref() {
        last_line = line;
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let Some(directive) = raw.strip_prefix('@') else {
            return Err(TsError::UnexpectedLine { line });
        };
        let (name, value) = directive
            .split_once(char::is_whitespace)
            .unwrap_or((directive, ""));
        let value = value.trim();
        match name.to_ascii_lowercase().as_str() {
            "problemname" => header.name = Some(value.to_string()),
            "timestamps" => {
                if parse_bool(line, name, value)? {
                    return Err(TsError::Unsupported {
                        line,
                        what: "time-stamped series".into(),
                    });
                }
            }
            "missing" => {
                parse_bool(line, name, value)?;
            }
            "univariate" => header.univariate = Some(parse_bool(line, name, value)?),
            "dimensions" => header.dimensions = Some(parse_usize(line, name, value)?),
            "equallength" => header.equal_length = Some(parse_bool(line, name, value)?),
            "serieslength" => header.series_length = Some(parse_usize(line, name, value)?),
            "classlabel" => {
                let mut parts = value.split_whitespace();
                let flag = parts.next().unwrap_or("");
                if parse_bool(line, name, flag)? {
                    let names: Vec<String> = parts.map(str::to_string).collect();
                    if names.is_empty() {
                        return Err(TsError::DirectiveValue {
                            line,
                            directive: name.into(),
                            value: value.into(),
                        });
                    }
                    header.class_names = Some(names);
                } else {
                    return Err(TsError::MissingClassLabels);
                }
            }
            "data" => break,
            _ => {
                return Err(TsError::UnknownDirective {
                    line,
                    directive: name.to_string(),
                })
            }
        }
    }

    let class_names = header.class_names.ok_or(TsError::MissingClassLabels)?;
    let mut dims = header
        .dimensions
        .or(header.univariate.filter(|&u| u).map(|_| 1));
    let declared_length = header
        .equal_length
        .unwrap_or(false)
        .then_some(header.series_length)
        .flatten();

    let mut samples = Vec::new();
    for (line, raw) in lines {
        last_line = line;
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let groups: Vec<&str> = raw.split(':').collect();
        let found = groups.len() - 1;
        let expected = *dims.get_or_insert(found);
        if found != expected || found == 0 {
            return Err(TsError::DimensionMismatch {
                line,
                expected,
                found,
            });
        }
        let label_token = groups[found].trim();
        let label = class_names
            .iter()
            .position(|c| c == label_token)
            .ok_or_else(|| TsError::UnknownLabel {
                line,
                label: label_token.to_string(),
            })?;

        let mut channels = Vec::with_capacity(found);
        for (ci, group) in groups[..found].iter().enumerate() {
            let raw_values = group
                .split(',')
                .map(|tok| parse_value(line, tok.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            let filled = interpolate_missing(&raw_values)
                .ok_or(TsError::AllMissing { line, channel: ci })?;
            channels.push(filled);
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(TsError::ChannelLength { line });
        }
        if let Some(expected) = declared_length {
            if len != expected {
                return Err(TsError::SeriesLength {
                    line,
                    expected,
                    found: len,
                });
            }
        }
        let mut data = Vec::with_capacity(len * found);
        for t in 0..len {
            data.extend(channels.iter().map(|c| c[t]));
        }
        let values = Tensor::new(vec![len, found], data).expect("interpolated values are finite");
        samples.push(SequenceSample { values, label });
    }
    if samples.is_empty() {
        return Err(TsError::EmptyBody { line: last_line });
    }
    let channels = dims.unwrap_or(1);
    Ok(SequenceDataset {
        name: header.name.unwrap_or_default(),
        samples,
        class_names,
        channels,
        split,
    })
}

fn parse_value(line: usize, token: &str) -> Result<Option<f64>, TsError> {
    if token == "?" || token.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(TsError::BadValue {
            line,
            token: token.to_string(),
        }),
    }
}

/// Linear interpolation between observed neighbours, edges held constant.
/// `None` when nothing is observed.
fn interpolate_missing(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let observed: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    let (&(first_i, first_v), &(last_i, last_v)) = (observed.first()?, observed.last()?);
    let mut out = Vec::with_capacity(values.len());
    let mut seg = 0;
    for (i, value) in values.iter().enumerate() {
        let v = if let Some(v) = *value {
            v
        } else if i < first_i {
            first_v
        } else if i > last_i {
            last_v
        } else {
            while observed[seg + 1].0 < i {
                seg += 1;
            }
            let ((i0, v0), (i1, v1)) = (observed[seg], observed[seg + 1]);
            v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64
        };
        out.push(v);
    }
    Some(out)
}

/// Writes a dataset in `.ts` form. Values use the shortest representation
/// that parses back to the same `f64`, so parsing the output reproduces the
/// dataset exactly.
pub fn to_ts_string(dataset: &SequenceDataset) -> String {
    let mut out = String::new();
    let name = if dataset.name.is_empty() {
        "unnamed"
    } else {
        &dataset.name
    };
    let length = dataset.common_length();
    let _ = writeln!(out, "@problemName {name}");
    let _ = writeln!(out, "@timeStamps false");
    let _ = writeln!(out, "@missing false");
    let _ = writeln!(out, "@univariate {}", dataset.channels == 1);
    let _ = writeln!(out, "@dimensions {}", dataset.channels);
    let _ = writeln!(out, "@equalLength {}", length.is_some());
    if let Some(len) = length {
        let _ = writeln!(out, "@seriesLength {len}");
    }
    let _ = writeln!(out, "@classLabel true {}", dataset.class_names.join(" "));
    let _ = writeln!(out, "@data");
    for s in &dataset.samples {
        let (len, d) = (s.len(), s.channels());
        for c in 0..d {
            for t in 0..len {
                if t > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", s.values.at(t, c));
            }
            out.push(':');
        }
        let _ = writeln!(out, "{}", dataset.class_names[s.label]);
    }
    out
}
