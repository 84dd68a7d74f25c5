use crate::error::{Error, Result};

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::invalid("rank correlation needs at least two points"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("rank correlation inputs must be finite"));
    }
    for v in [xs, ys] {
        if v.iter().all(|&x| x == v[0]) {
            return Err(Error::invalid(
                "rank correlation is undefined for a constant input",
            ));
        }
    }
    Ok(())
}

/// Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check(xs, ys)?;
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// `1 - 6 sum(d^2) / (n (n^2 - 1))` as a reduced fraction. Only defined
/// when neither input has ties.
pub fn spearman_exact(xs: &[f64], ys: &[f64]) -> Result<(i128, i128)> {
    check(xs, ys)?;
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    if rx.iter().chain(&ry).any(|r| r.fract() != 0.0) {
        return Err(Error::invalid(
            "exact rank correlation requires tie-free inputs",
        ));
    }
    let n = xs.len() as i128;
    let d2: i128 = rx
        .iter()
        .zip(&ry)
        .map(|(a, b)| (*a as i128 - *b as i128).pow(2))
        .sum();
    let den = n * (n * n - 1);
    let num = den - 6 * d2;
    let g = gcd(num, den).max(1);
    Ok((num / g, den / g))
}
