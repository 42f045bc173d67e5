//! Histogram similarity metrics and text-recognition string metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RasterImage};
use crate::scalar::Real;

pub const BINS: usize = 256;
const NORM_TOL: f64 = 1e-9;

/// 256-bin intensity histograms for R, G and B.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelHistogram<T> {
    bins: [Vec<T>; 3],
    normalized: bool,
}

impl<T: Real> ChannelHistogram<T> {
    /// Wraps raw bins. The normalized flag is set when every channel sums
    /// to one within 1e-9.
    pub fn from_bins(bins: [Vec<T>; 3]) -> Result<Self> {
        if bins.iter().any(|b| b.len() != BINS) {
            return Err(Error::InvalidArgument(format!("histogram channels need {BINS} bins")));
        }
        if bins.iter().flatten().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidArgument("histogram bins must be finite and non-negative".into()));
        }
        let normalized = bins
            .iter()
            .all(|b| (b.iter().copied().sum::<T>().to_f64_lossy() - 1.0).abs() <= NORM_TOL);
        Ok(Self { bins, normalized })
    }

    pub fn channel(&self, c: usize) -> &[T] {
        &self.bins[c]
    }

    pub fn channels(&self) -> &[Vec<T>; 3] {
        &self.bins
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Scales each channel to unit mass. Empty channels are left at zero.
    pub fn normalize(&self) -> Self {
        let bins = self.bins.clone().map(|b| {
            let s: T = b.iter().copied().sum();
            if s > T::zero() {
                b.into_iter().map(|v| v / s).collect()
            } else {
                b
            }
        });
        Self::from_bins(bins).expect("normalizing keeps bins valid")
    }

    fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::NotNormalized)
        }
    }

    /// `bin,R,G,B` rows for external plotting.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin,R,G,B\n");
        for i in 0..BINS {
            let _ = writeln!(s, "{i},{},{},{}", self.bins[0][i], self.bins[1][i], self.bins[2][i]);
        }
        s
    }
}

/// Per-channel histogram of `img`, optionally restricted to `mask`.
pub fn intensity_histogram<T: Real>(img: &RasterImage, mask: Option<&BinaryMask>, normalize: bool) -> Result<ChannelHistogram<T>> {
    if let Some(m) = mask {
        m.ensure_dims(img.dims())?;
        if m.is_empty() {
            return Err(Error::EmptyMask);
        }
    }
    let mut counts = [[0u64; BINS]; 3];
    let mut n = 0u64;
    for (i, px) in img.as_raw().chunks_exact(3).enumerate() {
        if mask.is_none_or(|m| m.bits()[i]) {
            n += 1;
            for c in 0..3 {
                counts[c][px[c] as usize] += 1;
            }
        }
    }
    let scale = if normalize && n > 0 {
        T::one() / T::lit(n as f64)
    } else {
        T::one()
    };
    let bins = counts.map(|ch| ch.iter().map(|&v| T::lit(v as f64) * scale).collect());
    ChannelHistogram::from_bins(bins)
}

/// Bhattacharyya (Hellinger) distance averaged over channels:
/// `sqrt(1 − Σ sqrt(p·q))`.
///
/// For normalized inputs `1 − Σ sqrt(p·q) = ½ Σ (sqrt p − sqrt q)²`; the
/// right-hand side is what gets summed, so identical histograms give
/// exactly zero instead of the square root of a rounding residue.
pub fn metric_bc<T: Real>(p: &ChannelHistogram<T>, q: &ChannelHistogram<T>) -> Result<T> {
    p.require_normalized()?;
    q.require_normalized()?;
    let half = T::lit(0.5);
    let mut total = T::zero();
    for c in 0..3 {
        let gap: T = p.bins[c]
            .iter()
            .zip(&q.bins[c])
            .map(|(&a, &b)| (a.sqrt() - b.sqrt()).powi(2))
            .sum();
        total = total + (half * gap).sqrt();
    }
    Ok(total / T::lit(3.0))
}

/// One-sided chi-square `Σ (p−q)²/p` over bins where `p > 0`, summed over
/// channels. `p` is the reference; argument order matters.
pub fn metric_chi_square<T: Real>(p: &ChannelHistogram<T>, q: &ChannelHistogram<T>) -> Result<T> {
    p.require_normalized()?;
    q.require_normalized()?;
    let mut total = T::zero();
    for c in 0..3 {
        for (&a, &b) in p.bins[c].iter().zip(&q.bins[c]) {
            if a > T::zero() {
                total = total + (a - b) * (a - b) / a;
            }
        }
    }
    Ok(total)
}

/// Symmetric chi-square `Σ (p−q)²/(p+q)` for sensitivity checks.
pub fn metric_chi_square_symmetric<T: Real>(p: &ChannelHistogram<T>, q: &ChannelHistogram<T>) -> Result<T> {
    p.require_normalized()?;
    q.require_normalized()?;
    let mut total = T::zero();
    for c in 0..3 {
        for (&a, &b) in p.bins[c].iter().zip(&q.bins[c]) {
            if a + b > T::zero() {
                total = total + (a - b) * (a - b) / (a + b);
            }
        }
    }
    Ok(total)
}

/// Pearson correlation of the two 768-long concatenated bin vectors.
pub fn metric_correlation<T: Real>(p: &ChannelHistogram<T>, q: &ChannelHistogram<T>) -> Result<T> {
    p.require_normalized()?;
    q.require_normalized()?;
    let n = T::from_usize_lossy(3 * BINS);
    let mean = |h: &ChannelHistogram<T>| h.bins.iter().flatten().copied().sum::<T>() / n;
    let (mp, mq) = (mean(p), mean(q));
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in p.bins.iter().flatten().zip(q.bins.iter().flatten()) {
        let (da, db) = (a - mp, b - mq);
        sxy = sxy + da * db;
        sxx = sxx + da * da;
        syy = syy + db * db;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one()))
}

/// `Σ min(p, q)` summed over the three channels; 3 for identical histograms.
pub fn metric_intersection<T: Real>(p: &ChannelHistogram<T>, q: &ChannelHistogram<T>) -> Result<T> {
    p.require_normalized()?;
    q.require_normalized()?;
    Ok(p.bins
        .iter()
        .flatten()
        .zip(q.bins.iter().flatten())
        .map(|(&a, &b)| a.min(b))
        .sum())
}

/// 1 when the trimmed strings are identical codepoint for codepoint.
pub fn sentence_accuracy(pred: &str, target: &str) -> f64 {
    if pred.trim() == target.trim() {
        1.0
    } else {
        0.0
    }
}

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized edit similarity `1 − lev(a,b) / max(|a|, |b|)`; 1 when both
/// are empty.
pub fn ned(pred: &str, target: &str) -> f64 {
    let len = pred.chars().count().max(target.chars().count());
    if len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(pred, target) as f64 / len as f64
}

/// Similarity report between an edited image and a reference background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bc: f64,
    pub cs: f64,
    pub corr: f64,
    pub inter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ned: Option<f64>,
}

impl MetricReport {
    /// Histogram metrics with `reference` as the first argument.
    pub fn from_histograms<T: Real>(reference: &ChannelHistogram<T>, edited: &ChannelHistogram<T>) -> Result<Self> {
        Ok(Self {
            bc: metric_bc(reference, edited)?.to_f64_lossy(),
            cs: metric_chi_square(reference, edited)?.to_f64_lossy(),
            corr: metric_correlation(reference, edited)?.to_f64_lossy(),
            inter: metric_intersection(reference, edited)?.to_f64_lossy(),
            sa: None,
            ned: None,
        })
    }

    /// Compares global normalized histograms of two images.
    pub fn compare(edited: &RasterImage, reference: &RasterImage) -> Result<Self> {
        let r = intensity_histogram::<f64>(reference, None, true)?;
        let e = intensity_histogram::<f64>(edited, None, true)?;
        Self::from_histograms(&r, &e)
    }

    pub fn with_text(mut self, pred: &str, target: &str) -> Self {
        self.sa = Some(sentence_accuracy(pred, target));
        self.ned = Some(ned(pred, target));
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(spec: &[(usize, f64)]) -> ChannelHistogram<f64> {
        let mut ch = vec![0.0; BINS];
        for &(i, v) in spec {
            ch[i] = v;
        }
        ChannelHistogram::from_bins([ch.clone(), ch.clone(), ch]).unwrap()
    }

    #[test]
    fn histogram_of_single_pixel() {
        let img = RasterImage::filled(1, 1, [7, 7, 7]);
        let h = intensity_histogram::<f64>(&img, None, false).unwrap();
        for c in 0..3 {
            assert_eq!(h.channel(c)[7], 1.0);
            assert_eq!(h.channel(c).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn histogram_normalized_pair() {
        let img = RasterImage::from_fn(2, 1, |x, _| if x == 0 { [0, 9, 9] } else { [255, 9, 9] });
        let h = intensity_histogram::<f64>(&img, None, true).unwrap();
        assert!(h.is_normalized());
        assert_eq!(h.channel(0)[0], 0.5);
        assert_eq!(h.channel(0)[255], 0.5);
    }

    #[test]
    fn histogram_masked_count() {
        let img = RasterImage::filled(4, 4, [3, 4, 5]);
        let mask = BinaryMask::from_fn(4, 4, |x, y| y * 4 + x < 5);
        let h = intensity_histogram::<f32>(&img, Some(&mask), false).unwrap();
        assert_eq!(h.channel(0)[3], 5.0);
        assert_eq!(h.channel(2)[5], 5.0);
        assert!(matches!(
            intensity_histogram::<f64>(&img, Some(&BinaryMask::new(4, 4)), true),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn bc_values() {
        let p = hist(&[(0, 0.5), (1, 0.5)]);
        assert_eq!(metric_bc(&p, &p).unwrap(), 0.0);
        assert_eq!(metric_bc(&hist(&[(0, 1.0)]), &hist(&[(255, 1.0)])).unwrap(), 1.0);
        let v = metric_bc(&p, &hist(&[(0, 1.0)])).unwrap();
        assert!((v - (1.0 - 0.5f64.sqrt()).sqrt()).abs() < 1e-12);
        assert!((v - 0.541196).abs() < 1e-6);
    }

    #[test]
    fn chi_square_values() {
        let p = hist(&[(0, 1.0)]);
        let q = hist(&[(0, 0.5), (1, 0.5)]);
        assert!((metric_chi_square(&p, &q).unwrap() - 0.75).abs() < 1e-12);
        let p = hist(&[(0, 0.5), (1, 0.5)]);
        let q = hist(&[(0, 0.25), (1, 0.75)]);
        assert!((metric_chi_square(&p, &q).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(metric_chi_square(&p, &p).unwrap(), 0.0);
        // reference-first: swapping arguments changes the value
        let a = hist(&[(0, 1.0)]);
        let b = hist(&[(0, 0.5), (1, 0.5)]);
        assert!((metric_chi_square(&b, &a).unwrap() - 3.0 * (0.25 / 0.5 + 0.25 / 0.5)).abs() < 1e-12);
    }

    #[test]
    fn intersection_values() {
        let p = hist(&[(0, 0.5), (1, 0.5)]);
        let q = hist(&[(0, 0.25), (1, 0.75)]);
        assert!((metric_intersection(&p, &q).unwrap() - 2.25).abs() < 1e-12);
        assert_eq!(metric_intersection(&p, &p).unwrap(), 3.0);
        assert_eq!(metric_intersection(&hist(&[(0, 1.0)]), &hist(&[(9, 1.0)])).unwrap(), 0.0);
    }

    #[test]
    fn correlation_values() {
        let p = hist(&[(0, 0.5), (1, 0.5)]);
        assert!((metric_correlation(&p, &p).unwrap() - 1.0).abs() < 1e-12);
        // symmetric about 127.5, so reversing bins is the same histogram
        let s = hist(&[(10, 0.25), (245, 0.25), (100, 0.25), (155, 0.25)]);
        let rev = ChannelHistogram::from_bins(s.channels().clone().map(|mut c| {
            c.reverse();
            c
        }))
        .unwrap();
        assert!((metric_correlation(&s, &rev).unwrap() - 1.0).abs() < 1e-12);
        let flat = ChannelHistogram::from_bins([vec![1.0 / 256.0; 256], vec![1.0 / 256.0; 256], vec![1.0 / 256.0; 256]]).unwrap();
        assert!(matches!(metric_correlation(&flat, &p), Err(Error::ZeroVariance)));
    }

    #[test]
    fn unnormalized_rejected() {
        let raw = ChannelHistogram::from_bins([vec![2.0; 256], vec![2.0; 256], vec![2.0; 256]]).unwrap();
        assert!(!raw.is_normalized());
        assert!(matches!(metric_bc(&raw, &raw), Err(Error::NotNormalized)));
        assert!(raw.normalize().is_normalized());
    }

    #[test]
    fn string_metrics() {
        assert_eq!(sentence_accuracy("Hello", "Hello"), 1.0);
        assert_eq!(sentence_accuracy("Hello", "hello"), 0.0);
        assert_eq!(sentence_accuracy(" Hello ", "Hello"), 1.0);
        assert_eq!(ned("same", "same"), 1.0);
        assert!((ned("kitten", "sitting") - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(ned("", "abc"), 0.0);
        assert_eq!(ned("", ""), 1.0);
        assert_eq!(levenshtein("咖啡店", "咖啡"), 1);
    }

    #[test]
    fn csv_dump() {
        let csv = hist(&[(3, 1.0)]).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 257);
        assert_eq!(lines[0], "bin,R,G,B");
        assert_eq!(lines[4], "3,1,1,1");
    }

    #[test]
    fn report_json() {
        let r = MetricReport {
            bc: 0.0,
            cs: 0.0,
            corr: 1.0,
            inter: 3.0,
            sa: None,
            ned: None,
        };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"bc":0.0,"cs":0.0,"corr":1.0,"inter":3.0}"#);
        let t = r.with_text("CAFE", "CAFE");
        assert_eq!((t.sa, t.ned), (Some(1.0), Some(1.0)));
    }
}
