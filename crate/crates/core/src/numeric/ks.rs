//! Two-sample Kolmogorov–Smirnov test.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    /// `sup |F₁ − F₂|` over the pooled sample.
    pub statistic: f64,
    /// Asymptotic p-value `Q_KS(√n_e · D)`, `n_e = n₁n₂/(n₁+n₂)`.
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{j−1} e^{−2j²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    // The alternating series converges slowly for small λ; use the dual
    // form there.
    if lambda < 1.18 {
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let s: f64 = (0..50).map(|k| y.powi((2 * k + 1) * (2 * k + 1))).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Compare two samples; `NaN` entries must be removed by the caller.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return KsResult { statistic: f64::NAN, p_value: f64::NAN, n1, n2 };
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let v = a[i].min(b[j]);
        while i < n1 && a[i] <= v {
            i += 1;
        }
        while j < n2 && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    KsResult { statistic: d, p_value: kolmogorov_q(ne.sqrt() * d), n1, n2 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_forms_agree_at_the_switch() {
        let lo = {
            let y = (-std::f64::consts::PI.powi(2) / (8.0 * 1.18f64 * 1.18)).exp();
            let s: f64 = (0..50).map(|k| y.powi((2 * k + 1) * (2 * k + 1))).sum();
            1.0 - (2.0 * std::f64::consts::PI).sqrt() / 1.18 * s
        };
        assert!((lo - kolmogorov_q(1.18)).abs() < 1e-12);
        // Standard table values.
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_q(1.63) - 0.0098).abs() < 5e-4);
        assert!((kolmogorov_q(0.5) - 0.9639).abs() < 5e-4);
    }

    #[test]
    fn identical_and_disjoint_samples() {
        let a: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let r = ks_two_sample(&a, &a);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let b: Vec<f64> = a.iter().map(|v| v + 100.0).collect();
        let r = ks_two_sample(&a, &b);
        assert_eq!(r.statistic, 1.0);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn ties_across_samples() {
        let r = ks_two_sample(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]);
        assert!((r.statistic - 1.0 / 3.0).abs() < 1e-15);
    }
}
