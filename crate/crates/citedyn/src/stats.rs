//! Small numerical helpers shared across the crate.

/// Arithmetic mean of a slice. Returns `NaN` for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator). Returns `NaN` when fewer
/// than two values are given.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Quantile of a sorted slice using linear interpolation between order
/// statistics: the quantile `q` sits at fractional index `q * (n - 1)`.
///
/// The slice must be sorted ascending; `q` is clamped to `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Quantile of an unsorted slice (sorts an internal copy).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut copy = xs.to_vec();
    copy.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    quantile_sorted(&copy, q)
}

/// Several quantiles of the same sample, sorting only once.
pub fn quantiles(xs: &[f64], qs: &[f64]) -> Vec<f64> {
    let mut copy = xs.to_vec();
    copy.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    qs.iter().map(|&q| quantile_sorted(&copy, q)).collect()
}

/// Derive an independent child seed from a root seed and a stream index,
/// so parallel replicates and chains get decorrelated generators while the
/// whole run stays reproducible from one root seed.
///
/// Uses splitmix64 finalization — consecutive stream indices map to
/// well-scrambled outputs.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    fn splitmix64(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix64(root ^ splitmix64(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1)))
}

/// log(sum(exp(xs))) computed stably by factoring out the maximum.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() && m < 0.0 {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// log(exp(a) + exp(b)) computed stably.
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
