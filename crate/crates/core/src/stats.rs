//! Distance-binned summary statistics, grain-size tables and CSV output.

use crate::distancing::{AttachedRecords, Method};
use crate::grains::GrainPartition;
use rayon::prelude::*;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Quantile levels reported per bin.
pub const QUANTILES: [f64; 5] = [0.01, 0.25, 0.5, 0.75, 0.99];

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("invalid binning [{lo}, {hi}) step {step}")]
    InvalidBins { lo: f64, hi: f64, step: f64 },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Scalars summarised per distance bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scalar {
    S11,
    S22,
    S33,
    S12,
    S13,
    S23,
    SigmaVm,
    Disorientation,
}

impl Scalar {
    pub const ALL: [Scalar; 8] = [
        Scalar::S11,
        Scalar::S22,
        Scalar::S33,
        Scalar::S12,
        Scalar::S13,
        Scalar::S23,
        Scalar::SigmaVm,
        Scalar::Disorientation,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Scalar::S11 => "s11",
            Scalar::S22 => "s22",
            Scalar::S33 => "s33",
            Scalar::S12 => "s12",
            Scalar::S13 => "s13",
            Scalar::S23 => "s23",
            Scalar::SigmaVm => "svm",
            Scalar::Disorientation => "disorientation",
        }
    }

    fn value(&self, s: &crate::distancing::PointState) -> f64 {
        match self {
            Scalar::S11 => s.sigma[0],
            Scalar::S22 => s.sigma[1],
            Scalar::S33 => s.sigma[2],
            Scalar::S12 => s.sigma[3],
            Scalar::S13 => s.sigma[4],
            Scalar::S23 => s.sigma[5],
            Scalar::SigmaVm => s.sigma_vm,
            Scalar::Disorientation => s.disorientation.unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSummary {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// NaN for empty bins.
    pub mean: f64,
    pub quantiles: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarBinning {
    pub scalar: Scalar,
    pub bins: Vec<BinSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceBinning {
    pub method: Method,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Records outside [lo, hi).
    pub dropped: usize,
    pub scalars: Vec<ScalarBinning>,
}

impl DistanceBinning {
    pub fn scalar(&self, s: Scalar) -> Option<&ScalarBinning> {
        self.scalars.iter().find(|b| b.scalar == s)
    }
}

/// Linear-interpolation quantile (Hyndman-Fan type 7) of sorted data.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Bin edges `lo + i * step`; `hi - lo` must be a whole number of steps.
pub fn bin_edges(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, StatsError> {
    let bad = || StatsError::InvalidBins { lo, hi, step };
    if !(step > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
        return Err(bad());
    }
    let n = ((hi - lo) / step).round();
    if n < 1.0 || ((hi - lo) / step - n).abs() > 1e-9 * n.max(1.0) {
        return Err(bad());
    }
    let n = n as usize;
    let mut edges: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
    edges.push(hi);
    Ok(edges)
}

/// Half-open bin of `d`, if any.
#[inline]
pub fn bin_of(edges: &[f64], d: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if !(d >= edges[0] && d < edges[n]) {
        return None;
    }
    let step = (edges[n] - edges[0]) / n as f64;
    let mut i = (((d - edges[0]) / step).floor() as usize).min(n - 1);
    while i > 0 && d < edges[i] {
        i -= 1;
    }
    while i + 1 < n && d >= edges[i + 1] {
        i += 1;
    }
    Some(i)
}

/// Count, mean and quantiles of a bin's values; values are sorted first so
/// the result does not depend on their order.
pub fn summarise(lo: f64, hi: f64, values: &mut [f64]) -> BinSummary {
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    let count = values.len();
    let mean = if count == 0 {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / count as f64
    };
    BinSummary {
        lo,
        hi,
        count,
        mean,
        quantiles: QUANTILES.map(|p| quantile_type7(values, p)),
    }
}

/// Bins (distance, value) pairs.
pub fn bin_values(edges: &[f64], distances: &[f64], values: &[f64]) -> Vec<BinSummary> {
    let n = edges.len() - 1;
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); n];
    for (&d, &v) in distances.iter().zip(values) {
        if let Some(b) = bin_of(edges, d) {
            per_bin[b].push(v);
        }
    }
    per_bin
        .iter_mut()
        .enumerate()
        .map(|(b, vals)| summarise(edges[b], edges[b + 1], vals))
        .collect()
}

/// Bins attached records by distance and summarises every scalar. The
/// disorientation scalar is included only when the states carry it.
pub fn bin_records(records: &AttachedRecords, lo: f64, hi: f64, step: f64) -> Result<DistanceBinning, StatsError> {
    let edges = bin_edges(lo, hi, step)?;
    let n_bins = edges.len() - 1;
    let bins: Vec<u32> = records
        .records
        .par_iter()
        .map(|r| bin_of(&edges, r.distance).map_or(u32::MAX, |b| b as u32))
        .collect();
    let mut starts = vec![0usize; n_bins + 1];
    for &b in &bins {
        if b != u32::MAX {
            starts[b as usize + 1] += 1;
        }
    }
    for b in 0..n_bins {
        starts[b + 1] += starts[b];
    }
    let mut fill = starts.clone();
    let mut sorted = vec![0u32; starts[n_bins]];
    for (r, &b) in bins.iter().enumerate() {
        if b != u32::MAX {
            sorted[fill[b as usize]] = r as u32;
            fill[b as usize] += 1;
        }
    }
    let counts: Vec<usize> = (0..n_bins).map(|b| starts[b + 1] - starts[b]).collect();
    let scalars: Vec<ScalarBinning> = Scalar::ALL
        .iter()
        .filter(|s| **s != Scalar::Disorientation || records.has_disorientation())
        .map(|&scalar| {
            let bins = (0..n_bins)
                .into_par_iter()
                .map(|b| {
                    let mut vals: Vec<f64> = sorted[starts[b]..starts[b + 1]]
                        .iter()
                        .map(|&r| scalar.value(records.state(r as usize)))
                        .collect();
                    summarise(edges[b], edges[b + 1], &mut vals)
                })
                .collect();
            ScalarBinning { scalar, bins }
        })
        .collect();
    let dropped = records.records.len() - starts[n_bins];
    Ok(DistanceBinning {
        method: records.method,
        edges,
        counts,
        dropped,
        scalars,
    })
}

/// Formats like C's `%.9g`, writing `NaN` for missing values.
pub fn format_sig9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-5..9).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mant), sign, exp.abs())
    } else {
        trim(&format!("{:.*}", (8 - exp) as usize, x))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StatsError + '_ {
    move |source| StatsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One row per bin: `bin_lo,bin_hi,count,mean,q01,q25,q50,q75,q99`.
pub fn write_binning_csv(path: &Path, binning: &ScalarBinning) -> Result<(), StatsError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    let mut body = String::from("bin_lo,bin_hi,count,mean,q01,q25,q50,q75,q99\n");
    for b in &binning.bins {
        body.push_str(&format!(
            "{},{},{},{}",
            format_sig9(b.lo),
            format_sig9(b.hi),
            b.count,
            format_sig9(b.mean)
        ));
        for q in b.quantiles {
            body.push(',');
            body.push_str(&format_sig9(q));
        }
        body.push('\n');
    }
    w.write_all(body.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Grain sizes in points and their log2 histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct GrainSizeTable {
    pub sizes: Vec<usize>,
    /// (lower bound 2^k, count of grains with size in [2^k, 2^(k+1))).
    pub log2_histogram: Vec<(usize, usize)>,
}

pub fn grain_size_table(partition: &GrainPartition) -> GrainSizeTable {
    let sizes = partition.grain_sizes();
    let max_k = sizes.iter().map(|&s| s.max(1).ilog2() as usize).max().unwrap_or(0);
    let mut hist = vec![0usize; max_k + 1];
    for &s in &sizes {
        hist[s.max(1).ilog2() as usize] += 1;
    }
    GrainSizeTable {
        sizes,
        log2_histogram: hist.into_iter().enumerate().map(|(k, c)| (1usize << k, c)).collect(),
    }
}

/// `grain_id,n_points` rows.
pub fn write_grain_sizes_csv(path: &Path, table: &GrainSizeTable) -> Result<(), StatsError> {
    let mut body = String::from("grain_id,n_points\n");
    for (g, s) in table.sizes.iter().enumerate() {
        body.push_str(&format!("{g},{s}\n"));
    }
    std::fs::write(path, body).map_err(io_err(path))
}

/// `size_lo,size_hi,count` rows of the log2 size histogram.
pub fn write_grain_size_histogram_csv(path: &Path, table: &GrainSizeTable) -> Result<(), StatsError> {
    let mut body = String::from("size_lo,size_hi,count\n");
    for &(lo, c) in &table.log2_histogram {
        body.push_str(&format!("{lo},{},{c}\n", 2 * lo));
    }
    std::fs::write(path, body).map_err(io_err(path))
}

/// Adjusted Rand index between two labellings of the same points.
pub fn adjusted_rand_index(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let comb2 = |n: u64| (n * n.saturating_sub(1)) as f64 / 2.0;
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    let mut ca: HashMap<u32, u64> = HashMap::new();
    let mut cb: HashMap<u32, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0) += 1;
        *ca.entry(x).or_insert(0) += 1;
        *cb.entry(y).or_insert(0) += 1;
    }
    let sum_ij: f64 = joint.values().map(|&n| comb2(n)).sum();
    let sum_a: f64 = ca.values().map(|&n| comb2(n)).sum();
    let sum_b: f64 = cb.values().map(|&n| comb2(n)).sum();
    let expected = sum_a * sum_b / comb2(a.len() as u64);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}
