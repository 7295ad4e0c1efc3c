//! Grid helpers shared by the sweeps.

/// `count` points equally spaced on a log scale between `lo` and `hi`
/// (both included). The endpoints are returned exactly.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > 0.0, "logspace bounds must be positive");
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            let step = (b - a) / (count - 1) as f64;
            (0..count)
                .map(|i| match i {
                    0 => lo,
                    i if i == count - 1 => hi,
                    i => 10f64.powf(a + step * i as f64),
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        let g = logspace(1e-4, 1.0, 50);
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 1e-4);
        assert_eq!(g[49], 1.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let ratio = g[1] / g[0];
        assert!((g[30] / g[29] - ratio).abs() < 1e-9);
    }
}
