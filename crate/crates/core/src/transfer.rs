//! Tabulated RGBA transfer functions and the per-partition metadata derived
//! from them.
//!
//! Metadata depends only on a partition's scalar range and the table, so a
//! transfer-function edit costs `O(partitions x table size)` regardless of
//! how many elements the mesh has.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::partition::ValueRange;

pub type Rgba = [f64; 4];

pub const DEFAULT_TABLE_SIZE: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransferFunctionFile", into = "TransferFunctionFile")]
pub struct TransferFunction {
    lo: f64,
    hi: f64,
    table: Vec<Rgba>,
}

/// On-disk / on-wire JSON shape: `{ "domain": [lo, hi], "rgba": [[r,g,b,a], ...] }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransferFunctionFile {
    pub domain: [f64; 2],
    pub rgba: Vec<Rgba>,
}

impl TryFrom<TransferFunctionFile> for TransferFunction {
    type Error = Error;

    fn try_from(f: TransferFunctionFile) -> Result<Self> {
        TransferFunction::new((f.domain[0], f.domain[1]), f.rgba)
    }
}

impl From<TransferFunction> for TransferFunctionFile {
    fn from(tf: TransferFunction) -> Self {
        TransferFunctionFile {
            domain: [tf.lo, tf.hi],
            rgba: tf.table,
        }
    }
}

impl TransferFunction {
    pub fn new(domain: (f64, f64), table: Vec<Rgba>) -> Result<Self> {
        let (lo, hi) = domain;
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::TransferFunction(format!(
                "domain [{lo}, {hi}] must satisfy lo < hi"
            )));
        }
        if table.len() < 2 {
            return Err(Error::TransferFunction(format!(
                "table needs at least 2 entries, got {}",
                table.len()
            )));
        }
        if let Some(i) = table
            .iter()
            .position(|e| e.iter().any(|c| !(0.0..=1.0).contains(c)))
        {
            return Err(Error::TransferFunction(format!(
                "entry {i} has a component outside [0, 1]: {:?}",
                table[i]
            )));
        }
        Ok(TransferFunction { lo, hi, table })
    }

    /// Same RGBA everywhere.
    pub fn constant(domain: (f64, f64), rgba: Rgba, size: usize) -> Result<Self> {
        TransferFunction::new(domain, vec![rgba; size])
    }

    pub fn transparent(domain: (f64, f64)) -> Self {
        TransferFunction::constant(domain, [0.0; 4], DEFAULT_TABLE_SIZE)
            .expect("valid by construction when lo < hi")
    }

    /// Resamples a piecewise-linear control-point list (positions in scalar
    /// units, any order) onto a `size`-entry table. Outside the first/last
    /// control point the nearest one is held.
    pub fn from_control_points(
        domain: (f64, f64),
        points: &[(f64, Rgba)],
        size: usize,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::TransferFunction("no control points".into()));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (lo, hi) = domain;
        let table = (0..size)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (size.max(2) - 1) as f64;
                let j = pts.partition_point(|p| p.0 <= x);
                if j == 0 {
                    pts[0].1
                } else if j == pts.len() {
                    pts[pts.len() - 1].1
                } else {
                    let (x0, c0) = pts[j - 1];
                    let (x1, c1) = pts[j];
                    let f = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
                    lerp(&c0, &c1, f)
                }
            })
            .collect();
        TransferFunction::new(domain, table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn table(&self) -> &[Rgba] {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Scalar position of table entry `i`.
    pub fn entry_position(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / (self.table.len() - 1) as f64
    }

    /// Piecewise-linear lookup, clamped to the end entries outside the domain.
    #[inline]
    pub fn lookup(&self, value: f64) -> Rgba {
        let last = self.table.len() - 1;
        let x = (value - self.lo) / (self.hi - self.lo) * last as f64;
        if x.is_nan() || x <= 0.0 {
            return self.table[0];
        }
        if x >= last as f64 {
            return self.table[last];
        }
        let i = x.floor() as usize;
        let f = x - i as f64;
        if f == 0.0 {
            return self.table[i];
        }
        lerp(&self.table[i], &self.table[i + 1], f)
    }

    /// A copy with every alpha scaled, used to derive "slightly opaque"
    /// variants of a map.
    pub fn map_alpha(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let table = (0..self.table.len())
            .map(|i| {
                let mut e = self.table[i];
                e[3] = f(self.entry_position(i), e[3]);
                e
            })
            .collect();
        TransferFunction::new((self.lo, self.hi), table)
    }
}

#[inline]
fn lerp(a: &Rgba, b: &Rgba, f: f64) -> Rgba {
    [
        a[0] + (b[0] - a[0]) * f,
        a[1] + (b[1] - a[1]) * f,
        a[2] + (b[2] - a[2]) * f,
        a[3] + (b[3] - a[3]) * f,
    ]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionMeta {
    pub max_opacity: f64,
    pub raw_variance: f64,
    /// Raw variance rescaled to `[0, 1]` across all partitions.
    pub normalized_variance: f64,
    pub active: bool,
}

/// The TF samples a scalar range "sees": the interpolated values at both
/// range ends plus every table entry strictly between them.
pub fn entries_in_range(tf: &TransferFunction, range: &ValueRange) -> Vec<Rgba> {
    let mut out = vec![tf.lookup(range.min)];
    if range.max > range.min {
        out.extend(
            (0..tf.len())
                .filter(|&i| {
                    let x = tf.entry_position(i);
                    x > range.min && x < range.max
                })
                .map(|i| tf.table[i]),
        );
        out.push(tf.lookup(range.max));
    }
    out
}

/// Max opacity and opacity-weighted color variance of `tf` over `range`.
/// The returned meta is not yet normalized (`normalized_variance` is 0).
pub fn compute_partition_meta(tf: &TransferFunction, range: &ValueRange) -> PartitionMeta {
    let entries = entries_in_range(tf, range);
    let max_opacity = entries.iter().fold(0.0f64, |m, e| m.max(e[3]));

    let weighted: Vec<[f64; 3]> = entries
        .iter()
        .map(|e| [e[3] * e[0], e[3] * e[1], e[3] * e[2]])
        .collect();
    let n = weighted.len() as f64;
    let mut mean = [0.0; 3];
    for w in &weighted {
        for k in 0..3 {
            mean[k] += w[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let raw_variance = weighted
        .iter()
        .map(|w| (0..3).map(|k| (w[k] - mean[k]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n;

    PartitionMeta {
        max_opacity,
        raw_variance,
        normalized_variance: 0.0,
        active: max_opacity > 0.0,
    }
}

/// Rescales raw variances to `[0, 1]` by the min and max over all metas.
/// When they are all equal every partition gets 1, i.e. the finest sampling.
pub fn normalize_variances(metas: &mut [PartitionMeta]) {
    let (lo, hi) = metas
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
            (lo.min(m.raw_variance), hi.max(m.raw_variance))
        });
    let span = hi - lo;
    for m in metas.iter_mut() {
        m.normalized_variance = if span > 0.0 {
            ((m.raw_variance - lo) / span).clamp(0.0, 1.0)
        } else {
            1.0
        };
    }
}

/// Recomputes and normalizes metadata for every range.
pub fn compute_metas(
    tf: &TransferFunction,
    ranges: &[ValueRange],
    mode: Parallelism,
) -> Vec<PartitionMeta> {
    let mut metas = par::map_indexed(ranges.len(), mode, |i| {
        compute_partition_meta(tf, &ranges[i])
    });
    normalize_variances(&mut metas);
    metas
}
