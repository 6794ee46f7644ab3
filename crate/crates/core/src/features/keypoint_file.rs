//! Text format for keypoints and real-valued descriptors computed by external tools.
//!
//! ```text
//! detector=sift d=128
//! x y score orientation v0 v1 ... v127
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Keypoint;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct KeypointFile {
    pub detector_name: String,
    pub d: usize,
    pub entries: Vec<(Keypoint, Vec<f64>)>,
}

impl KeypointFile {
    pub fn new(detector_name: impl Into<String>, d: usize) -> Self {
        Self {
            detector_name: detector_name.into(),
            d,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, kp: Keypoint, descriptor: Vec<f64>) -> Result<()> {
        if descriptor.len() != self.d {
            return Err(Error::Ragged {
                expected: self.d,
                found: descriptor.len(),
            });
        }
        self.entries.push((kp, descriptor));
        Ok(())
    }
}

fn parse_header(line: &str) -> Result<(String, usize)> {
    let bad = |msg: &str| Error::Parse {
        line: 1,
        message: msg.to_string(),
    };
    let mut name = None;
    let mut d = None;
    for token in line.split_whitespace() {
        match token.split_once('=') {
            Some(("detector", v)) if !v.is_empty() => name = Some(v.to_string()),
            Some(("d", v)) => {
                d = Some(
                    v.parse::<usize>()
                        .map_err(|_| bad("descriptor dimension is not an integer"))?,
                )
            }
            _ => return Err(bad(&format!("unexpected header token {token:?}"))),
        }
    }
    match (name, d) {
        (Some(n), Some(d)) if d > 0 => Ok((n, d)),
        (Some(_), Some(_)) => Err(bad("descriptor dimension must be positive")),
        _ => Err(bad("expected header `detector=<name> d=<int>`")),
    }
}

fn parse_coord(token: &str, line: usize) -> Result<u32> {
    if let Ok(v) = token.parse::<u32>() {
        return Ok(v);
    }
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 && v.round() <= u32::MAX as f64 => Ok(v.round() as u32),
        _ => Err(Error::Parse {
            line,
            message: format!("invalid coordinate {token:?}"),
        }),
    }
}

pub fn parse_keypoint_file(text: &str) -> Result<KeypointFile> {
    let mut lines = text.lines().enumerate();
    let (detector_name, d) = match lines.next() {
        Some((_, header)) => parse_header(header)?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty keypoint file".into(),
            })
        }
    };
    let mut file = KeypointFile::new(detector_name, d);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 4 + d {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "expected {} descriptor values, found {}",
                    d,
                    tokens.len().saturating_sub(4)
                ),
            });
        }
        let real = |t: &str| -> Result<f64> {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("invalid number {t:?}"),
                })
        };
        let kp = Keypoint {
            x: parse_coord(tokens[0], line_no)?,
            y: parse_coord(tokens[1], line_no)?,
            score: real(tokens[2])?,
            orientation: real(tokens[3])?,
        };
        let descriptor = tokens[4..].iter().map(|t| real(t)).collect::<Result<_>>()?;
        file.entries.push((kp, descriptor));
    }
    Ok(file)
}

pub fn ingest_keypoint_file(path: impl AsRef<Path>) -> Result<KeypointFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_keypoint_file(&text)
}

pub fn format_keypoint_file(file: &KeypointFile) -> String {
    let mut out = format!("detector={} d={}\n", file.detector_name, file.d);
    for (kp, desc) in &file.entries {
        let _ = write!(out, "{} {} {} {}", kp.x, kp.y, kp.score, kp.orientation);
        for v in desc {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_keypoint_file(file: &KeypointFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_keypoint_file(file)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(d: usize) -> String {
        let values: Vec<String> = (0..d).map(|i| format!("{}.5", i)).collect();
        format!("10 12 3.5 0.25 {}", values.join(" "))
    }

    #[test]
    fn parses_three_sift_rows() {
        let text = format!("detector=sift d=128\n{}\n{}\n{}\n", row(128), row(128), row(128));
        let file = parse_keypoint_file(&text).unwrap();
        assert_eq!(file.detector_name, "sift");
        assert_eq!(file.d, 128);
        assert_eq!(file.entries.len(), 3);
        assert_eq!(file.entries[0].0, Keypoint { x: 10, y: 12, score: 3.5, orientation: 0.25 });
        assert_eq!(file.entries[2].1[127], 127.5);
    }

    #[test]
    fn short_row_is_reported_with_its_line() {
        let text = format!("detector=sift d=128\n{}\n{}\n", row(128), row(127));
        match parse_keypoint_file(&text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("127"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(parse_keypoint_file("").is_err());
        assert!(parse_keypoint_file("detector=x\n").is_err());
        assert!(parse_keypoint_file("detector=x d=0\n").is_err());
        assert!(parse_keypoint_file("detector=x d=1\n1 2 3 4 abc\n").is_err());
        assert!(parse_keypoint_file("detector=x d=1\n-1 2 3 4 5\n").is_err());
        assert!(parse_keypoint_file("detector=x d=1\n1 2 3 4 NaN\n").is_err());
    }

    #[test]
    fn subpixel_coordinates_are_rounded() {
        let f = parse_keypoint_file("detector=surf d=1\n10.6 3.2 1 0 0.5\n").unwrap();
        assert_eq!((f.entries[0].0.x, f.entries[0].0.y), (11, 3));
    }

    #[test]
    fn push_rejects_wrong_length() {
        let mut f = KeypointFile::new("akaze", 61);
        assert!(f.push(Keypoint::new(1, 1, 0.0), vec![0.0; 60]).is_err());
        assert!(f.push(Keypoint::new(1, 1, 0.0), vec![0.0; 61]).is_ok());
    }

    fn arb_entry(d: usize) -> impl Strategy<Value = (Keypoint, Vec<f64>)> {
        (
            0u32..5000,
            0u32..5000,
            0.0f64..1e6,
            0.0f64..std::f64::consts::TAU,
            prop::collection::vec(-1e3f64..1e3, d),
        )
            .prop_map(|(x, y, score, orientation, desc)| {
                (Keypoint { x, y, score, orientation }, desc)
            })
    }

    proptest! {
        #[test]
        fn write_then_ingest_is_identity(
            (d, entries) in (1usize..70).prop_flat_map(|d| (Just(d), prop::collection::vec(arb_entry(d), 0..20)))
        ) {
            let file = KeypointFile { detector_name: "ext".into(), d, entries };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("kp.txt");
            write_keypoint_file(&file, &path).unwrap();
            prop_assert_eq!(ingest_keypoint_file(&path).unwrap(), file);
        }
    }
}
