//! Observation streams.
//!
//! NDJSON, one record per line (blank lines are skipped):
//!
//! ```text
//! {"kernel": [k_0, ..., k_{p-1}], "y": [y_0, ..., y_{p-1}]}
//! {"d_re": [...], "d_im": [...], "y": [...]}
//! ```
//!
//! `kernel` holds convolution taps (row-major for 2D states); `d_re`/`d_im`
//! give the operator's eigenvalues directly. An optional boolean
//! `"calibration"` (default `true`) controls whether the record enters the
//! spread-based noise estimate.
//!
//! Binary frames, little-endian, repeated until end of input:
//!
//! ```text
//! u32 tag (= 1)   u32 p   p × f64 kernel taps   p × f64 y
//! ```

use std::io::{BufRead, Read};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::spectral::{EigenvalueVector, Kernel, SpectralBasis};

pub const BINARY_TAG_KERNEL: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    kernel: Option<Vec<f64>>,
    d_re: Option<Vec<f64>>,
    d_im: Option<Vec<f64>>,
    y: Vec<f64>,
    calibration: Option<bool>,
}

/// One observation, already diagonalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub d: EigenvalueVector,
    pub y: Vec<f64>,
    pub calibration: bool,
}

/// A malformed record, located by 1-based line or frame number.
#[derive(Debug)]
pub struct InputError {
    pub record: usize,
    pub source: Error,
}

fn check_len(what: &str, len: usize, p: usize) -> Result<()> {
    if len == p {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} has length {len}, expected {p}"
        )))
    }
}

fn to_observation(raw: RawRecord, basis: &SpectralBasis) -> Result<Observation> {
    let p = basis.len();
    check_len("y", raw.y.len(), p)?;
    if raw.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("y"));
    }
    let d = match (raw.kernel, raw.d_re, raw.d_im) {
        (Some(k), None, None) => {
            check_len("kernel", k.len(), p)?;
            basis.diagonalize(&Kernel::new(k)?)?
        }
        (None, Some(re), Some(im)) => {
            check_len("d_re", re.len(), p)?;
            check_len("d_im", im.len(), p)?;
            EigenvalueVector::new(
                re.iter()
                    .zip(&im)
                    .map(|(&r, &i)| num_complex::Complex64::new(r, i))
                    .collect(),
            )?
        }
        _ => {
            return Err(Error::InvalidInput(
                "record needs either \"kernel\" or both \"d_re\" and \"d_im\"".into(),
            ))
        }
    };
    Ok(Observation {
        d,
        y: raw.y,
        calibration: raw.calibration.unwrap_or(true),
    })
}

/// Parse every NDJSON record; stops at the first malformed line.
pub fn read_ndjson<R: BufRead>(
    reader: R,
    basis: &SpectralBasis,
) -> std::result::Result<Vec<Observation>, InputError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let record = i + 1;
        let fail = |source| InputError { record, source };
        let line = line.map_err(|e| fail(e.into()))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| fail(e.into()))?;
        out.push(to_observation(raw, basis).map_err(fail)?);
    }
    Ok(out)
}

fn read_f64s<R: Read>(reader: &mut R, count: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    reader.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Parse every binary frame; stops at the first malformed frame.
pub fn read_binary<R: Read>(
    mut reader: R,
    basis: &SpectralBasis,
) -> std::result::Result<Vec<Observation>, InputError> {
    let p = basis.len();
    let mut out = Vec::new();
    let mut record = 0;
    loop {
        record += 1;
        let fail = |source| InputError { record, source };
        let mut header = [0u8; 8];
        // Clean end of stream only at a frame boundary.
        let mut got = 0;
        while got < header.len() {
            match reader.read(&mut header[got..]) {
                Ok(0) => break,
                Ok(k) => got += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(fail(e.into())),
            }
        }
        if got == 0 {
            return Ok(out);
        }
        if got < header.len() {
            return Err(fail(Error::InvalidInput("truncated frame header".into())));
        }
        let tag = u32::from_le_bytes(header[..4].try_into().unwrap());
        let len = u32::from_le_bytes(header[4..].try_into().unwrap()) as usize;
        if tag != BINARY_TAG_KERNEL {
            return Err(fail(Error::InvalidInput(format!(
                "unknown frame tag {tag}"
            ))));
        }
        if len != p {
            return Err(fail(Error::InvalidInput(format!(
                "frame has p = {len}, expected {p}"
            ))));
        }
        let body = read_f64s(&mut reader, p)
            .and_then(|k| Ok((k, read_f64s(&mut reader, p)?)))
            .map_err(|e| fail(Error::InvalidInput(format!("truncated frame: {e}"))))?;
        let raw = RawRecord {
            kernel: Some(body.0),
            d_re: None,
            d_im: None,
            y: body.1,
            calibration: None,
        };
        out.push(to_observation(raw, basis).map_err(fail)?);
    }
}

/// Encode one binary frame.
pub fn encode_binary_frame(kernel: &[f64], y: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 16 * y.len());
    out.extend_from_slice(&BINARY_TAG_KERNEL.to_le_bytes());
    out.extend_from_slice(&(y.len() as u32).to_le_bytes());
    for v in kernel.iter().chain(y) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis() -> SpectralBasis {
        SpectralBasis::one_d(4).unwrap()
    }

    #[test]
    fn ndjson_both_forms() {
        let text = r#"{"kernel":[1,0,0,0],"y":[1,2,3,4]}

{"d_re":[1,1,1,1],"d_im":[0,0,0,0],"y":[1,2,3,4],"calibration":false}
"#;
        let obs = read_ndjson(text.as_bytes(), &basis()).unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[0].d, obs[1].d);
        assert!(obs[0].calibration && !obs[1].calibration);
    }

    #[test]
    fn ndjson_errors_carry_line_numbers() {
        let cases = [
            (
                "{\"kernel\":[1,0,0,0],\"y\":[1,2,3,4]}\n{\"kernel\":[1,0,0],\"y\":[1,2,3,4]}",
                2,
            ),
            ("not json", 1),
            ("{\"y\":[1,2,3,4]}", 1),
            (
                "{\"kernel\":[1,0,0,0],\"d_re\":[1,1,1,1],\"d_im\":[0,0,0,0],\"y\":[1,2,3,4]}",
                1,
            ),
            ("{\"kernel\":[1,0,0,0],\"y\":[1,2,3,4],\"extra\":1}", 1),
        ];
        for (text, line) in cases {
            let err = read_ndjson(text.as_bytes(), &basis()).unwrap_err();
            assert_eq!(err.record, line, "{text}");
        }
    }

    #[test]
    fn binary_roundtrip_and_truncation() {
        let mut bytes = encode_binary_frame(&[1.0, 0.0, 0.0, 0.0], &[1.0, 2.0, 3.0, 4.0]);
        bytes.extend(encode_binary_frame(&[0.5, 0.5, 0.0, 0.0], &[0.0; 4]));
        let obs = read_binary(&bytes[..], &basis()).unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[0].y, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            read_binary(&bytes[..bytes.len() - 3], &basis())
                .unwrap_err()
                .record,
            2
        );
        assert_eq!(read_binary(&bytes[..4], &basis()).unwrap_err().record, 1);
        let mut bad = bytes.clone();
        bad[0] = 9;
        assert_eq!(read_binary(&bad[..], &basis()).unwrap_err().record, 1);
        assert!(read_binary(&[][..], &basis()).unwrap().is_empty());
    }
}
