use alloc::format;

use super::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::math;

/// `KL(p || q) = sum_x p(x) ln(p(x) / q(x))`, natural log, with `0 ln 0 = 0`.
///
/// Atoms are matched by location; a location absent from `q` has mass zero.
pub fn kl_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension { expected: p.dim(), actual: q.dim() });
    }
    let mut total = 0.0;
    for (loc, &pm) in p.locations().iter().zip(p.masses()) {
        if pm == 0.0 {
            continue;
        }
        let qm = q.mass_at(loc);
        if qm <= 0.0 {
            return Err(Error::domain(format!("support violation: p has mass {pm} where q has none")));
        }
        total += pm * math::ln(pm / qm);
    }
    // Rounding can leave a tiny negative value when p == q.
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        let p = DiscreteDistribution::from_probabilities(&[0.5, 0.5]).unwrap();
        let q = DiscreteDistribution::from_probabilities(&[0.25, 0.75]).unwrap();
        // 0.5 ln 2 + 0.5 ln(2/3)
        let expected = 0.143_841_036_225_890_2;
        assert!((kl_divergence(&p, &q).unwrap() - expected).abs() < 1e-15);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);

        let p = DiscreteDistribution::from_probabilities(&[1.0, 0.0]).unwrap();
        let q = DiscreteDistribution::from_probabilities(&[0.5, 0.5]).unwrap();
        assert!((kl_divergence(&p, &q).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_and_support_checked() {
        let p = DiscreteDistribution::from_probabilities(&[0.5, 0.5]).unwrap();
        let q = DiscreteDistribution::from_probabilities(&[0.25, 0.75]).unwrap();
        assert_ne!(kl_divergence(&p, &q).unwrap(), kl_divergence(&q, &p).unwrap());
        let r = DiscreteDistribution::from_probabilities(&[1.0, 0.0]).unwrap();
        assert!(matches!(kl_divergence(&p, &r), Err(Error::Domain(_))));
    }
}
