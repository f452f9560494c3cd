//! Small goodness-of-fit helpers.

use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Pearson chi-square against expected counts. Bins with tiny expected
/// counts should be merged by the caller.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> TestResult {
    assert_eq!(observed.len(), expected.len());
    let statistic: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = (observed.len() - 1) as f64;
    let p_value = ChiSquared::new(df).expect("df > 0").sf(statistic);
    TestResult { statistic, p_value }
}

/// Merges adjacent bins until each expected count is at least `min`.
pub fn merge_bins(observed: &[f64], expected: &[f64], min: f64) -> (Vec<f64>, Vec<f64>) {
    let mut o = Vec::new();
    let mut e = Vec::new();
    let (mut ao, mut ae) = (0.0, 0.0);
    for (x, y) in observed.iter().zip(expected) {
        ao += x;
        ae += y;
        if ae >= min {
            o.push(ao);
            e.push(ae);
            ao = 0.0;
            ae = 0.0;
        }
    }
    if ae > 0.0 || ao > 0.0 {
        match (o.last_mut(), e.last_mut()) {
            (Some(lo), Some(le)) => {
                *lo += ao;
                *le += ae;
            }
            _ => {
                o.push(ao);
                e.push(ae);
            }
        }
    }
    (o, e)
}

/// Asymptotic Kolmogorov tail `P(K > λ)`.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let s: f64 = (1..=100)
        .map(|j| {
            let j = j as f64;
            let sign = if j as i64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * j * j * lambda * lambda).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS test of integer samples against a discrete CDF. The
/// continuous-distribution p-value is conservative for discrete data.
pub fn ks_discrete(samples: &[u64], cdf: impl Fn(u64) -> f64) -> TestResult {
    let mut xs = samples.to_vec();
    xs.sort_unstable();
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let below = if x == 0 { 0.0 } else { cdf(x - 1) };
        d = d.max((i + 1) as f64 / n - cdf(x)).max(below - i as f64 / n);
    }
    let sn = n.sqrt();
    TestResult { statistic: d, p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d) }
}

/// `P(X ≤ x)` for attempts-until-success with success probability `p`.
pub fn geometric_cdf(p: f64) -> impl Fn(u64) -> f64 {
    move |x| 1.0 - (1.0 - p).powf(x as f64)
}

/// Least-squares line: `(slope, intercept, r²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    (slope, intercept, r_squared(ys, xs.iter().map(|x| intercept + slope * x)))
}

/// `1 − SS_res / SS_tot`; a perfect fit of constant data counts as 1.
pub fn r_squared(ys: &[f64], fitted: impl Iterator<Item = f64>) -> f64 {
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_res: f64 = ys.iter().zip(fitted).map(|(y, f)| (y - f) * (y - f)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chi_square_accepts_fair_die_and_rejects_loaded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0.0; 6];
        (0..60_000).for_each(|_| counts[rng.random_range(0..6)] += 1.0);
        assert!(chi_square(&counts, &[10_000.0; 6]).p_value > 0.001);
        let loaded = [11_000.0, 9_000.0, 10_000.0, 10_000.0, 10_000.0, 10_000.0];
        assert!(chi_square(&loaded, &[10_000.0; 6]).p_value < 1e-6);
    }

    #[test]
    fn bins_merge_from_the_tail() {
        let (o, e) = merge_bins(&[1.0, 2.0, 30.0, 1.0], &[1.0, 3.0, 30.0, 0.5], 5.0);
        assert_eq!(o, vec![34.0]);
        assert_eq!(e, vec![34.5]);
    }

    #[test]
    fn ks_geometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = 1.0 / 64.0;
        let draw = |rng: &mut ChaCha8Rng, p: f64| {
            let u: f64 = rng.random();
            ((1.0 - u).ln() / (1.0 - p).ln()).floor() as u64 + 1
        };
        let good: Vec<u64> = (0..500).map(|_| draw(&mut rng, p)).collect();
        assert!(ks_discrete(&good, geometric_cdf(p)).p_value > 0.01);
        let bad: Vec<u64> = (0..500).map(|_| draw(&mut rng, p / 2.0)).collect();
        assert!(ks_discrete(&bad, geometric_cdf(p)).p_value < 1e-6);
    }

    #[test]
    fn line_fit() {
        let (m, b, r2) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((m - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
