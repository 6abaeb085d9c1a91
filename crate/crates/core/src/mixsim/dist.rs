//! Delay and latency distributions, and the coupon-collector rate bound.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::MixsimError;
use crate::stats::harmonic;

/// One per-hop mixing delay in seconds, exponential with rate `lambda`.
pub fn sample_hop_delay<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<f64, MixsimError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(MixsimError::InvalidRate(lambda));
    }
    Ok(Exp::new(lambda).expect("positive rate").sample(rng))
}

/// Sum of `k` independent exponential hop delays with rate `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErlangRtt {
    pub k: u32,
    pub lambda: f64,
}

pub fn rtt_distribution(k: u32, lambda: f64) -> Result<ErlangRtt, MixsimError> {
    if k == 0 {
        return Err(MixsimError::Config {
            field: "hops".into(),
            reason: "must be at least 1".into(),
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(MixsimError::InvalidRate(lambda));
    }
    Ok(ErlangRtt { k, lambda })
}

impl ErlangRtt {
    pub fn mean(&self) -> f64 {
        self.k as f64 / self.lambda
    }

    pub fn std_dev(&self) -> f64 {
        (self.k as f64).sqrt() / self.lambda
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let k = self.k as f64;
        let ln = k * self.lambda.ln() + (k - 1.0) * x.ln() - self.lambda * x - ln_factorial(self.k - 1);
        if x == 0.0 {
            return if self.k == 1 { self.lambda } else { 0.0 };
        }
        ln.exp()
    }

    /// `1 - sum_{j<k} e^{-lx} (lx)^j / j!`
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        1.0 - self.sf(x)
    }

    /// Survival function, summed directly to keep tail precision.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let lx = self.lambda * x;
        let mut term = (-lx).exp();
        let mut sum = term;
        for j in 1..self.k {
            term *= lx / j as f64;
            sum += term;
        }
        sum.min(1.0)
    }
}

fn ln_factorial(n: u32) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// Minimum per-gateway output keeping every link between two layers of
/// width `n` active in each mean-delay window with high probability.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CouponBound {
    pub n: u64,
    pub g: u64,
    /// Mean delay window `1/lambda`, seconds.
    pub mu_s: f64,
    /// Expected draws to cover `n` next-layer nodes: `n * H_n`.
    pub cover_draws: f64,
    /// `n * H_n * n / g`.
    pub per_gateway_per_mu: f64,
    pub per_gateway_per_s: f64,
    /// Same bound with `ln n` in place of `H_n`.
    pub per_gateway_per_mu_ln: f64,
}

pub fn coupon_bound(n: u64, g: u64, lambda: f64) -> Result<CouponBound, MixsimError> {
    if n == 0 || g == 0 {
        return Err(MixsimError::Config {
            field: if n == 0 { "layer_width" } else { "gateways" }.into(),
            reason: "must be at least 1".into(),
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(MixsimError::InvalidRate(lambda));
    }
    let (nf, gf) = (n as f64, g as f64);
    let cover_draws = nf * harmonic(n);
    let per_mu = cover_draws * nf / gf;
    Ok(CouponBound {
        n,
        g,
        mu_s: 1.0 / lambda,
        cover_draws,
        per_gateway_per_mu: per_mu,
        per_gateway_per_s: per_mu * lambda,
        per_gateway_per_mu_ln: nf * nf.ln() * nf / gf,
    })
}

/// Uniform draws from `n` coupons until all have been seen.
pub fn coupon_draws<R: Rng + ?Sized>(n: usize, rng: &mut R) -> u64 {
    let mut seen = vec![false; n];
    let mut missing = n;
    let mut draws = 0;
    while missing > 0 {
        draws += 1;
        let i = rng.gen_range(0..n);
        if !seen[i] {
            seen[i] = true;
            missing -= 1;
        }
    }
    draws
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_one_sample, mean};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use statrs::distribution::{ContinuousCDF, Gamma};

    #[test]
    fn exponential_moments_and_tail() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let lambda = 5.0;
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_hop_delay(lambda, &mut rng).unwrap()).collect();
        let m = mean(&xs);
        assert!((m * lambda - 1.0).abs() < 0.005, "{m}");
        let tail = xs.iter().filter(|&&x| x > 2.0 / lambda).count() as f64 / xs.len() as f64;
        assert!((tail - (-2.0f64).exp()).abs() < 0.005, "{tail}");
        // Residual life past t = 1/lambda has the same mean.
        let t = 1.0 / lambda;
        let resid: Vec<f64> = xs.iter().filter(|&&x| x > t).map(|x| x - t).collect();
        assert!((mean(&resid) * lambda - 1.0).abs() < 0.01);
        assert!(sample_hop_delay(0.0, &mut rng).is_err());
        assert!(sample_hop_delay(-1.0, &mut rng).is_err());
    }

    #[test]
    fn erlang_matches_gamma_and_closed_values() {
        let oracle = Gamma::new(9.0, 5.0).unwrap();
        let e = rtt_distribution(9, 5.0).unwrap();
        for x in [0.1, 0.5, 1.0, 1.8, 3.0, 4.0, 6.0] {
            assert!((e.cdf(x) - oracle.cdf(x)).abs() < 1e-12, "{x}");
        }
        assert!((e.mean() - 1.8).abs() < 1e-12);
        assert!((e.std_dev() - 0.6).abs() < 1e-12);
        // 20 mean delays: 4 s at mu = 0.2 s.
        assert!((e.sf(4.0) - 0.0020873).abs() < 5e-7, "{}", e.sf(4.0));
        let one = rtt_distribution(1, 2.0).unwrap();
        for x in [0.0, 0.3, 1.0] {
            assert!((one.cdf(x) - (1.0 - (-2.0 * x).exp())).abs() < 1e-12);
            assert!((one.pdf(x) - 2.0 * (-2.0 * x).exp()).abs() < 1e-12);
        }
        assert!(rtt_distribution(0, 1.0).is_err());
    }

    #[test]
    fn erlang_pdf_integrates_to_cdf() {
        let e = rtt_distribution(5, 3.0).unwrap();
        let h = 1e-4;
        let acc: f64 = (0..20_000)
            .map(|i| {
                let x = i as f64 * h;
                h * (e.pdf(x) + 4.0 * e.pdf(x + h / 2.0) + e.pdf(x + h)) / 6.0
            })
            .sum();
        assert!((acc - e.cdf(2.0)).abs() < 1e-6);
    }

    #[test]
    fn summed_exponentials_follow_erlang() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for k in [1u32, 5, 9] {
            let e = rtt_distribution(k, 5.0).unwrap();
            let xs: Vec<f64> = (0..20_000)
                .map(|_| (0..k).map(|_| sample_hop_delay(5.0, &mut rng).unwrap()).sum())
                .collect();
            let ks = ks_one_sample(&xs, |x| e.cdf(x));
            assert!(ks.passes(0.01), "k={k} {ks:?}");
        }
    }

    #[test]
    fn coupon_bound_values() {
        let b = coupon_bound(1, 4, 5.0).unwrap();
        assert!((b.per_gateway_per_mu - 0.25).abs() < 1e-12);
        let b = coupon_bound(10, 2, 5.0).unwrap();
        assert!((b.cover_draws - 29.289_682_539_682_54).abs() < 1e-9);
        assert!((b.per_gateway_per_mu - 146.448_412_698_412_7).abs() < 1e-9);
        assert!((b.per_gateway_per_s - 5.0 * 146.448_412_698_412_7).abs() < 1e-6);
        assert!(b.per_gateway_per_mu_ln < b.per_gateway_per_mu);
        assert!(coupon_bound(0, 1, 1.0).is_err());
        assert!(coupon_bound(3, 0, 1.0).is_err());
    }

    #[test]
    fn coupon_draws_average_n_h_n() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..10_000).map(|_| coupon_draws(10, &mut rng) as f64).collect();
        let m = mean(&xs);
        // 1/10 + ... oracle: sum of geometric means n/(n-i).
        let oracle: f64 = (0..10).map(|i| 10.0 / (10 - i) as f64).sum();
        assert!((m / oracle - 1.0).abs() < 0.02, "{m} vs {oracle}");
    }
}
