//! Means of order statistics of i.i.d. Gamma row energies.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::montecarlo::{run_trials, TrialPlan};
use crate::quadrature::{integrate, QuadOptions};
use crate::special::{gamma_pq, ln_binomial, ln_gamma};

/// `m`-th smallest of `population` i.i.d. Gamma(`shape`, `scale`) variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderStatSpec {
    pub m: usize,
    pub population: usize,
    pub shape: usize,
    pub scale: f64,
}

impl OrderStatSpec {
    pub fn new(m: usize, population: usize, shape: usize, scale: f64) -> Self {
        Self { m, population, shape, scale }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > self.population {
            return invalid(format!("rank {} outside 1..={}", self.m, self.population));
        }
        if self.shape == 0 {
            return invalid("Gamma shape must be at least 1");
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return invalid(format!("scale must be positive, got {}", self.scale));
        }
        Ok(())
    }
}

/// Gamma(`shape`, `scale`) CDF.
pub fn gamma_cdf(x: f64, shape: f64, scale: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return invalid(format!("gamma_cdf needs x >= 0, got {x}"));
    }
    if !(shape > 0.0 && scale > 0.0) {
        return invalid("shape and scale must be positive");
    }
    Ok(gamma_pq(shape, x / scale).0)
}

/// Upper limit beyond which the integrand of the largest order statistic
/// has mass below `1e-18` of the unit-scale mean.
fn upper_limit(population: usize, shape: f64) -> f64 {
    // tail of x f(x) beyond L is shape * Q(shape + 1, L)
    let mut l = shape + 10.0;
    while population as f64 * gamma_pq(shape + 1.0, l).1 > 1e-18 {
        l *= 1.25;
    }
    l
}

/// Expected `m`-th order statistic,
/// `M C(M-1, m-1) int x f(x) F(x)^{m-1} (1 - F(x))^{M-m} dx`,
/// integrated over `x` at unit scale and rescaled.
pub fn order_stat_mean(spec: OrderStatSpec) -> Result<f64> {
    spec.validate()?;
    let (m, big_m) = (spec.m as f64, spec.population as f64);
    let k = spec.shape as f64;
    let ln_front = big_m.ln() + ln_binomial(spec.population as u64 - 1, spec.m as u64 - 1) - ln_gamma(k);
    let integrand = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let (p, q) = gamma_pq(k, x);
        if p <= 0.0 || q <= 0.0 {
            return 0.0;
        }
        // x f(x) = x^K e^{-x} / Gamma(K)
        let ln = ln_front + k * x.ln() - x + (m - 1.0) * p.ln() + (big_m - m) * q.ln();
        ln.exp()
    };
    let opts = QuadOptions { abs_tol: 1e-15 * k, rel_tol: 1e-12, max_intervals: 20_000, initial_panels: 32 };
    let res = integrate(integrand, 0.0, upper_limit(spec.population, k), opts)?;
    Ok(res.value * spec.scale)
}

/// `chi_m`: mean of the `m`-th smallest of `M` unit-scale Gamma(`K`) energies.
pub fn chi_m(m: usize, population: usize, shape: usize) -> Result<f64> {
    order_stat_mean(OrderStatSpec::new(m, population, shape, 1.0))
}

/// `sum_{m=1}^{count} chi_m`, the expected energy of the `count` weakest rows.
/// Results are memoized per `(count, population, shape)`.
pub fn chi_sum_smallest(count: usize, population: usize, shape: usize) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, usize), f64>>> = OnceLock::new();
    if count > population {
        return invalid(format!("cannot take {count} of {population} order statistics"));
    }
    let key = (count, population, shape);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(v) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return Ok(*v);
    }
    let v = (1..=count).map(|m| chi_m(m, population, shape)).sum::<Result<f64>>()?;
    cache.lock().unwrap_or_else(|e| e.into_inner()).insert(key, v);
    Ok(v)
}

/// Sampled mean of every order statistic; entry `m - 1` is rank `m`.
/// Returns means and standard errors.
pub fn order_stats_mc(population: usize, shape: usize, scale: f64, plan: &TrialPlan) -> Result<(Vec<f64>, Vec<f64>)> {
    OrderStatSpec::new(1, population, shape, scale).validate()?;
    let dist = Gamma::new(shape as f64, scale).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    let agg = run_trials(plan, population, |_, rng, out| {
        for v in out.iter_mut() {
            *v = dist.sample(rng);
        }
        out.sort_unstable_by(f64::total_cmp);
        Ok(())
    })?;
    let se = agg.stderr();
    Ok((agg.mean, se))
}

/// Sampled mean and standard error of a single order statistic.
pub fn order_stat_mc_oracle(spec: OrderStatSpec, plan: &TrialPlan) -> Result<(f64, f64)> {
    spec.validate()?;
    if plan.trials < 10_000 {
        return invalid("the order-statistic oracle needs at least 10^4 trials");
    }
    let (mean, se) = order_stats_mc(spec.population, spec.shape, spec.scale, plan)?;
    Ok((mean[spec.m - 1], se[spec.m - 1]))
}
