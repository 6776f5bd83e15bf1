//! Histogram specification onto a template's binned distribution.

/// Reshapes `source` so its histogram over `bins` equal bins of `[0, 1]`
/// equals that of `template` (same length).
///
/// Source pixels are ranked by value (ties by position). The rank-`r`
/// pixel goes to the template bin whose cumulative count first exceeds
/// `r`, and inside that bin it is placed by linear interpolation between
/// the smallest and largest template values in the bin, in rank order.
/// Bin counts therefore match exactly and a constant template reproduces
/// itself bit for bit.
pub(crate) fn match_histogram(source: &[f64], template: &[f64], bins: usize) -> Vec<f64> {
    assert_eq!(source.len(), template.len());
    assert!(bins >= 2);
    let bin_of = |v: f64| ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);

    let mut count = vec![0usize; bins];
    let mut lo = vec![f64::INFINITY; bins];
    let mut hi = vec![f64::NEG_INFINITY; bins];
    for &v in template {
        let b = bin_of(v);
        count[b] += 1;
        lo[b] = lo[b].min(v);
        hi[b] = hi[b].max(v);
    }

    let mut order: Vec<usize> = (0..source.len()).collect();
    order.sort_by(|&x, &y| source[x].total_cmp(&source[y]).then(x.cmp(&y)));

    let mut out = vec![0.0; source.len()];
    let mut ranks = order.into_iter();
    for b in 0..bins {
        let n = count[b];
        for t in 0..n {
            let idx = ranks.next().expect("template and source have equal length");
            out[idx] = if n == 1 || lo[b] == hi[b] {
                lo[b]
            } else {
                (lo[b] + (hi[b] - lo[b]) * (t as f64 / (n - 1) as f64)).clamp(lo[b], hi[b])
            };
        }
    }
    out
}

/// Empirical CDF at the right edge of each of `bins` equal bins of `[0, 1]`.
pub fn binned_cdf(values: &[f64], bins: usize) -> Vec<f64> {
    let mut count = vec![0usize; bins];
    for &v in values {
        count[((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let n = values.len() as f64;
    let mut acc = 0usize;
    count
        .into_iter()
        .map(|c| {
            acc += c;
            acc as f64 / n
        })
        .collect()
}
