//! Statistical helpers shared by unit tests (compiled for tests only).

/// Two-sample Kolmogorov–Smirnov statistic `sup |F₁ − F₂|`.
///
/// Both slices are sorted in place.
pub(crate) fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Critical value of the two-sample KS statistic at the 1% level,
/// `c(0.01)·sqrt((n₁+n₂)/(n₁·n₂))` with `c(0.01) = 1.628`.
pub(crate) fn ks_critical_1pct(n1: usize, n2: usize) -> f64 {
    1.628 * ((n1 + n2) as f64 / (n1 as f64 * n2 as f64)).sqrt()
}
