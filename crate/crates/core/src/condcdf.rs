//! Nadaraya–Watson weights over the treatment and the conditional CDF
//! estimator `P̂(s | t) = Σ_i w_i(t) 1{S_i ≤ s}`.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::KernelKind;

/// Raw kernel mass below this is treated as no mass at all.
pub const UNDERFLOW_GUARD: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct NWWeights {
    /// Normalized weights, summing to one.
    pub w: Vec<f64>,
    /// Sum of the unnormalized kernel values.
    pub total_raw: f64,
}

pub fn nw_weights(tvec: &[f64], t: f64, hbar: f64, kind: KernelKind) -> Result<NWWeights> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::InvalidInput(format!("hbar must be positive, got {hbar}")));
    }
    let mut w: Vec<f64> = tvec.iter().map(|&ti| kind.eval((ti - t) / hbar)).collect();
    let total_raw: f64 = w.iter().sum();
    if !(total_raw >= UNDERFLOW_GUARD) {
        return Err(Error::DegenerateWeights { t, total_raw });
    }
    w.iter_mut().for_each(|v| *v /= total_raw);
    Ok(NWWeights { w, total_raw })
}

/// `Σ_i w_i 1{S_i ≤ s}` with a coordinatewise, closed comparison.
pub fn cond_cdf(data: &Dataset, s: &[f64], t: f64, hbar: f64, kind: KernelKind) -> Result<f64> {
    if s.len() != data.d() {
        return Err(Error::InvalidInput(format!(
            "query has {} coordinates, data has {}",
            s.len(),
            data.d()
        )));
    }
    let nw = nw_weights(data.t(), t, hbar, kind)?;
    let p: f64 = nw
        .w
        .iter()
        .enumerate()
        .filter(|(i, _)| data.s_row(*i).iter().zip(s).all(|(si, q)| si <= q))
        .map(|(_, w)| w)
        .sum();
    Ok(p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compact_window() {
        let nw = nw_weights(&[0.0, 1.0], 0.0, 0.5, KernelKind::Epanechnikov).unwrap();
        assert_eq!(nw.w, vec![1.0, 0.0]);
    }

    #[test]
    fn all_at_target_are_uniform() {
        let nw = nw_weights(&[0.3; 5], 0.3, 0.1, KernelKind::Gaussian).unwrap();
        for w in nw.w {
            assert!((w - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_three_points() {
        let nw = nw_weights(&[-1.0, 0.0, 1.0], 0.0, 1.0, KernelKind::Gaussian).unwrap();
        let e = (-0.5f64).exp();
        let z = 1.0 + 2.0 * e;
        let expect = [e / z, 1.0 / z, e / z];
        for (w, x) in nw.w.iter().zip(expect) {
            assert!((w - x).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate() {
        assert!(matches!(
            nw_weights(&[5.0, 6.0], 0.0, 0.5, KernelKind::Epanechnikov),
            Err(Error::DegenerateWeights { .. })
        ));
        assert!(matches!(
            nw_weights(&[1e3], 0.0, 1.0, KernelKind::Gaussian),
            Err(Error::DegenerateWeights { .. })
        ));
    }

    #[test]
    fn cdf_edges() {
        let data = Dataset::new(vec![0.0; 2], vec![0.0, 0.0], vec![0.0, 1.0], 1).unwrap();
        let k = KernelKind::Gaussian;
        assert_eq!(cond_cdf(&data, &[-0.1], 0.0, 1.0, k).unwrap(), 0.0);
        assert_eq!(cond_cdf(&data, &[1.0], 0.0, 1.0, k).unwrap(), 1.0);
        assert!((cond_cdf(&data, &[0.5], 0.0, 1.0, k).unwrap() - 0.5).abs() < 1e-15);
        // Ties are included.
        assert!((cond_cdf(&data, &[0.0], 0.0, 1.0, k).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn concentrated_weight_is_a_step() {
        let data = Dataset::new(vec![0.0; 3], vec![0.0, 5.0, 9.0], vec![0.4, -1.0, 2.0], 1).unwrap();
        let k = KernelKind::Epanechnikov;
        assert_eq!(cond_cdf(&data, &[0.39], 0.0, 1.0, k).unwrap(), 0.0);
        assert_eq!(cond_cdf(&data, &[0.4], 0.0, 1.0, k).unwrap(), 1.0);
        assert_eq!(cond_cdf(&data, &[3.0], 0.0, 1.0, k).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(
            ts in proptest::collection::vec(-2.0f64..2.0, 30),
            ss in proptest::collection::vec(-1.0f64..1.0, 60),
            t0 in -1.0f64..1.0,
            base in proptest::collection::vec(-1.2f64..1.2, 2),
            steps in proptest::collection::vec((0.0f64..0.3, 0.0f64..0.3), 6),
        ) {
            let data = Dataset::new(vec![0.0; 30], ts, ss, 2).unwrap();
            let mut s = base.clone();
            let mut prev = cond_cdf(&data, &s, t0, 0.4, KernelKind::Gaussian).unwrap();
            prop_assert!((0.0..=1.0).contains(&prev));
            for (a, b) in steps {
                s[0] += a;
                s[1] += b;
                let cur = cond_cdf(&data, &s, t0, 0.4, KernelKind::Gaussian).unwrap();
                prop_assert!((0.0..=1.0).contains(&cur));
                prop_assert!(cur >= prev);
                prev = cur;
            }
        }
    }
}
