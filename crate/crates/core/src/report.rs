//! Pairwise distance tables and portable-pixmap image export.

use std::fmt::Write as _;

use crate::backend::{distance, Embedding, ImageTensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Score for the 1-based pair `(first, second)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairScore {
    pub first: usize,
    pub second: usize,
    pub score: f64,
}

/// All `i < j` pairs in lexicographic order.
pub fn all_pairs<T: Scalar>(embeddings: &[Embedding<T>]) -> Result<Vec<PairScore>> {
    let mut out = Vec::new();
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            out.push(PairScore {
                first: i + 1,
                second: j + 1,
                score: distance(&embeddings[i], &embeddings[j])?.as_f64(),
            });
        }
    }
    Ok(out)
}

pub const PAIR_HEADER: (&str, &str) = ("Pairs", "Distance");

/// Two-column text table, scores with eight decimals:
///
/// ```text
/// Pairs   Distance
/// (1,2)   0.28174594
/// ```
pub fn format_pair_table(pairs: &[PairScore]) -> String {
    let labels: Vec<String> = pairs
        .iter()
        .map(|p| format!("({},{})", p.first, p.second))
        .collect();
    let width = labels
        .iter()
        .map(String::len)
        .chain([PAIR_HEADER.0.len()])
        .max()
        .unwrap_or(0)
        + 3;
    let mut out = String::new();
    writeln!(out, "{:<width$}{}", PAIR_HEADER.0, PAIR_HEADER.1).unwrap();
    for (label, p) in labels.iter().zip(pairs) {
        writeln!(out, "{label:<width$}{:.8}", p.score).unwrap();
    }
    out
}

fn to_byte<T: Scalar>(v: T) -> u8 {
    (v.as_f64().clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

/// Binary PPM (`P6`, maxval 255). One-channel tensors are written as grey.
pub fn encode_ppm<T: Scalar>(image: &ImageTensor<T>) -> Result<Vec<u8>> {
    let [c, h, w] = image.shape();
    if c != 1 && c != 3 {
        return Err(Error::config(format!(
            "cannot export a {c}-channel tensor as a pixmap"
        )));
    }
    let v = image.values();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                let plane = if c == 1 { 0 } else { ch };
                out.push(to_byte(v[(plane * h + y) * w + x]));
            }
        }
    }
    Ok(out)
}

/// Reads a `P6` pixmap (maxval 255) into a `(3, h, w)` tensor in `[0, 1]`.
pub fn decode_ppm<T: Scalar>(bytes: &[u8]) -> Result<ImageTensor<T>> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format {
                offset: pos as u64,
                message: "truncated pixmap header".into(),
            });
        }
        fields.push((
            start,
            String::from_utf8_lossy(&bytes[start..pos]).into_owned(),
        ));
    }
    if fields[0].1 != "P6" {
        return Err(Error::Format {
            offset: 0,
            message: "not a binary pixmap (P6)".into(),
        });
    }
    let num = |k: usize| -> Result<usize> {
        fields[k].1.parse().map_err(|_| Error::Format {
            offset: fields[k].0 as u64,
            message: format!("bad header field {:?}", fields[k].1),
        })
    };
    let (w, h, maxval) = (num(1)?, num(2)?, num(3)?);
    if maxval != 255 {
        return Err(Error::Format {
            offset: fields[3].0 as u64,
            message: format!("unsupported maxval {maxval}"),
        });
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[(pos + 1).min(bytes.len())..];
    if data.len() != 3 * w * h {
        return Err(Error::Format {
            offset: (pos + 1) as u64,
            message: format!("raster has {} bytes, expected {}", data.len(), 3 * w * h),
        });
    }
    let mut values = vec![T::zero(); 3 * w * h];
    for (i, px) in data.chunks_exact(3).enumerate() {
        for (ch, &b) in px.iter().enumerate() {
            values[ch * w * h + i] = T::lit(b as f64 / 255.0);
        }
    }
    ImageTensor::new([3, h, w], values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f64]) -> Embedding<f64> {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identical_embeddings_score_zero() {
        let e = emb(&[0.1, 0.2]);
        let p = all_pairs(&[e.clone(), e]).unwrap();
        assert_eq!(
            p,
            vec![PairScore {
                first: 1,
                second: 2,
                score: 0.0
            }]
        );
        assert_eq!(
            format_pair_table(&p),
            "Pairs   Distance\n(1,2)   0.00000000\n"
        );
    }

    #[test]
    fn three_embeddings_hand_values() {
        let es = [emb(&[0.0, 0.0]), emb(&[1.0, 0.0]), emb(&[0.0, 0.5])];
        let p = all_pairs(&es).unwrap();
        let scores: Vec<_> = p.iter().map(|s| (s.first, s.second, s.score)).collect();
        assert_eq!(scores, vec![(1, 2, 1.0), (1, 3, 0.25), (2, 3, 1.25)]);
        assert_eq!(
            format_pair_table(&p),
            "Pairs   Distance\n(1,2)   1.00000000\n(1,3)   0.25000000\n(2,3)   1.25000000\n"
        );
    }

    #[test]
    fn wide_labels_widen_the_column() {
        let p = [PairScore {
            first: 10,
            second: 11,
            score: 2.5,
        }];
        assert_eq!(
            format_pair_table(&p),
            "Pairs     Distance\n(10,11)   2.50000000\n"
        );
    }

    #[test]
    fn ppm_round_half_even_and_grey() {
        // 0.5 * 255 = 127.5 -> 128, 1/510 * 255 = 0.5 -> 0
        let img = ImageTensor::new([1, 1, 3], vec![0.5f64, 1.0 / 510.0, 1.0]).unwrap();
        let b = encode_ppm(&img).unwrap();
        assert_eq!(&b[..11], b"P6\n3 1\n255\n");
        assert_eq!(&b[11..], &[128, 128, 128, 0, 0, 0, 255, 255, 255]);
    }

    #[test]
    fn ppm_round_trip_rgb() {
        let vals: Vec<f64> = (0..12).map(|i| i as f64 / 255.0).collect();
        let img = ImageTensor::new([3, 2, 2], vals).unwrap();
        let back: ImageTensor<f64> = decode_ppm(&encode_ppm(&img).unwrap()).unwrap();
        assert_eq!(back.shape(), [3, 2, 2]);
        for (a, b) in back.values().iter().zip(img.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(decode_ppm::<f64>(b"P5\n1 1\n255\n\0").is_err());
        assert!(decode_ppm::<f64>(b"P6\n# c\n2 1\n255\n\0\0\0").is_err());
    }
}
