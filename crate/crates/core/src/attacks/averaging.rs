use crate::defense::{Oracle, QueryError};

/// Adaptive attacker's oracle: every logical query is the per-coordinate
/// mean of `k` physical queries to the wrapped oracle, cutting the noise
/// variance by `k`. The wrapped ledger sees all `k` queries.
pub struct AveragedOracle<O> {
    inner: O,
    k: usize,
}

impl<O: Oracle> AveragedOracle<O> {
    /// # Panics
    /// If `k == 0`.
    pub fn new(inner: O, k: usize) -> Self {
        assert!(k >= 1, "averaging needs k >= 1");
        Self { inner, k }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: Oracle> Oracle for AveragedOracle<O> {
    /// Fails with the inner error as soon as one physical query fails; the
    /// queries already spent stay on the ledger.
    fn query(&mut self, x: &[f64]) -> Result<Vec<f64>, QueryError> {
        let mut sum = self.inner.query(x)?;
        if self.k == 1 {
            return Ok(sum);
        }
        for _ in 1..self.k {
            for (s, v) in sum.iter_mut().zip(self.inner.query(x)?) {
                *s += v;
            }
        }
        let k = self.k as f64;
        Ok(sum.into_iter().map(|s| s / k).collect())
    }

    fn queries_used(&self) -> u64 {
        self.inner.queries_used()
    }

    fn query_limit(&self) -> u64 {
        self.inner.query_limit()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defense::{DefendedModel, NoiseSpec};
    use crate::nn::{Activation, LayerSpec, Model};
    use crate::rng;

    fn toy() -> Model {
        let layers = vec![LayerSpec::dense(2, 2, Activation::Identity)];
        Model::from_parts(layers, 2, 0, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn k_one_is_the_wrapped_oracle() {
        let m = toy();
        let spec = NoiseSpec::isotropic(2, 0.04).unwrap();
        let mut plain = DefendedModel::new(&m, spec.clone(), rng::stream(1, &[]), 100).unwrap();
        let mut avg = AveragedOracle::new(DefendedModel::new(&m, spec, rng::stream(1, &[]), 100).unwrap(), 1);
        for _ in 0..5 {
            assert_eq!(plain.query(&[0.2, 0.4]).unwrap(), avg.query(&[0.2, 0.4]).unwrap());
        }
        assert_eq!(avg.queries_used(), 5);
    }

    #[test]
    fn variance_shrinks_linearly_and_all_queries_count() {
        let m = toy();
        let spec = NoiseSpec::isotropic(2, 0.04).unwrap();
        let mut avg = AveragedOracle::new(DefendedModel::new(&m, spec, rng::stream(2, &[]), u64::MAX).unwrap(), 100);
        avg.query(&[0.0, 0.0]).unwrap();
        assert_eq!(avg.queries_used(), 100);
        let n = 4000;
        let vals: Vec<f64> = (0..n).map(|_| avg.query(&[0.0, 0.0]).unwrap()[0]).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / 0.0004 - 1.0).abs() < 0.1, "variance {var}");
    }

    #[test]
    fn exhaustion_mid_average_keeps_spent_queries() {
        let m = toy();
        let spec = NoiseSpec::isotropic(2, 0.04).unwrap();
        let mut avg = AveragedOracle::new(DefendedModel::new(&m, spec, rng::stream(3, &[]), 15).unwrap(), 10);
        avg.query(&[0.0, 0.0]).unwrap();
        assert!(avg.query(&[0.0, 0.0]).unwrap_err().is_budget());
        assert_eq!(avg.queries_used(), 15);
    }
}
