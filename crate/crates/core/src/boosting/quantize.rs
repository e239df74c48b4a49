//! Per-feature linear binning used by the split search.

use alloc::vec;
use alloc::vec::Vec;

/// Quantized samples, stored feature-major: feature `f` occupies
/// `data[f * n_samples..(f + 1) * n_samples]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMatrix {
    pub n_samples: usize,
    pub n_features: usize,
    pub data: Vec<u8>,
}

impl QuantizedMatrix {
    #[inline]
    pub fn column(&self, f: usize) -> &[u8] {
        &self.data[f * self.n_samples..(f + 1) * self.n_samples]
    }

    #[inline]
    pub fn get(&self, sample: usize, feature: usize) -> u8 {
        self.data[feature * self.n_samples + sample]
    }
}

/// Min/max linear bin edges per feature.
///
/// Bin `b` holds values `v` with `edge(f, b) <= v < edge(f, b + 1)`, where
/// the outermost edges are unbounded; so a sample lies in a bin `<= k`
/// exactly when `v < edge(f, k + 1)`, which is the raw threshold a split
/// converts to.
#[derive(Debug, Clone, PartialEq)]
pub struct BinEdges {
    pub bins: usize,
    pub min: Vec<f32>,
    pub max: Vec<f32>,
    /// `bins + 1` edges per feature; entry `j` is the lower edge of bin `j`.
    table: Vec<f32>,
}

impl BinEdges {
    pub fn new(bins: usize, min: Vec<f32>, max: Vec<f32>) -> Self {
        let mut table = Vec::with_capacity(min.len() * (bins + 1));
        for (&lo, &hi) in min.iter().zip(&max) {
            for j in 0..=bins {
                table.push(if hi <= lo {
                    // constant feature: a single bin
                    f32::INFINITY
                } else {
                    (lo as f64 + (hi as f64 - lo as f64) * j as f64 / bins as f64) as f32
                });
            }
        }
        BinEdges { bins, min, max, table }
    }

    /// Lower edge of bin `j`, `1 <= j < bins`.
    #[inline]
    pub fn edge(&self, f: usize, j: usize) -> f32 {
        self.table[f * (self.bins + 1) + j]
    }

    #[inline]
    pub fn bin(&self, f: usize, v: f32) -> usize {
        let (lo, hi) = (self.min[f], self.max[f]);
        if hi <= lo {
            return 0;
        }
        let last = self.bins - 1;
        let guess = libm::floor((v as f64 - lo as f64) / (hi as f64 - lo as f64) * self.bins as f64);
        let mut b = if guess <= 0.0 {
            0
        } else if guess >= last as f64 {
            last
        } else {
            guess as usize
        };
        while b > 0 && v < self.edge(f, b) {
            b -= 1;
        }
        while b < last && v >= self.edge(f, b + 1) {
            b += 1;
        }
        b
    }

    /// Raw threshold of the split "bin <= k goes left".
    pub fn threshold(&self, f: usize, k: usize) -> f32 {
        if k + 1 >= self.bins {
            f32::INFINITY
        } else {
            self.edge(f, k + 1)
        }
    }
}

/// Bins every feature of a row-major `n_samples × n_features` matrix into
/// `bins` levels between its observed minimum and maximum.
pub fn quantize_features(samples: &[f32], n_features: usize, bins: usize) -> (QuantizedMatrix, BinEdges) {
    assert!((2..=256).contains(&bins), "bins must be in 2..=256");
    assert!(n_features > 0 && samples.len().is_multiple_of(n_features));
    let n = samples.len() / n_features;
    let mut min = vec![f32::INFINITY; n_features];
    let mut max = vec![f32::NEG_INFINITY; n_features];
    for row in samples.chunks_exact(n_features) {
        for (f, &v) in row.iter().enumerate() {
            min[f] = min[f].min(v);
            max[f] = max[f].max(v);
        }
    }
    if n == 0 {
        min.fill(0.0);
        max.fill(0.0);
    }
    let edges = BinEdges::new(bins, min, max);
    let mut data = vec![0u8; n * n_features];
    for (i, row) in samples.chunks_exact(n_features).enumerate() {
        for (f, &v) in row.iter().enumerate() {
            data[f * n + i] = edges.bin(f, v) as u8;
        }
    }
    (
        QuantizedMatrix {
            n_samples: n,
            n_features,
            data,
        },
        edges,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_map_to_extreme_bins() {
        let (q, e) = quantize_features(&[0.0, 1.0], 1, 256);
        assert_eq!(q.column(0), [0, 255]);
        assert_eq!(e.threshold(0, 254), 255.0 / 256.0);
    }

    #[test]
    fn constant_feature_single_bin() {
        let (q, e) = quantize_features(&[0.3, 0.3, 0.3], 1, 256);
        assert_eq!(q.column(0), [0, 0, 0]);
        assert!(0.3f32 < e.threshold(0, 0));
    }

    #[test]
    fn bins_agree_with_thresholds() {
        let mut rng = crate::rng::SeededRng::new(3);
        let vals: Vec<f32> = (0..2000).map(|_| rng.next_f64() as f32 * 3.0 - 1.0).collect();
        let (q, e) = quantize_features(&vals, 4, 17);
        for i in 0..500 {
            for f in 0..4 {
                let v = vals[i * 4 + f];
                let b = q.get(i, f) as usize;
                for k in 0..16 {
                    assert_eq!(b <= k, v < e.threshold(f, k));
                }
            }
        }
    }
}
