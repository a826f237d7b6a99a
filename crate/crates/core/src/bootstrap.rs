//! Empirical bootstrap: pointwise intervals and uniform bands from absolute
//! deviations of resampled curves around the base curve.
//!
//! Bandwidths stay at the values in `params` for every replicate. Replicate
//! `b` draws from ChaCha8 stream `b` of the master seed, so the result does
//! not depend on how replicates are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::Interval;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{estimate_curves, interpolate_clamped, CurveEstimate, Curves, EstimatorTag, Want};
use crate::exec;
use crate::params::EstimParams;

/// Largest tolerated share of failed replicates.
pub const MAX_FAILED_SHARE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandMode {
    Pointwise,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub base: CurveEstimate,
    /// Successful replicates, each interpolated onto the base grid.
    pub replicates: Vec<CurveEstimate>,
    pub alpha: f64,
    pub pointwise_halfwidth: Vec<f64>,
    pub uniform_halfwidth: f64,
    /// Requested replicate count.
    pub b: usize,
    pub failed: usize,
    pub seed: u64,
}

impl BootstrapResult {
    /// The same replicates summarized at another level.
    pub fn requantile(&self, alpha: f64) -> Result<BootstrapResult> {
        check_alpha(alpha)?;
        let (pointwise_halfwidth, uniform_halfwidth) = halfwidths(&self.base, &self.replicates, alpha);
        Ok(BootstrapResult {
            alpha,
            pointwise_halfwidth,
            uniform_halfwidth,
            ..self.clone()
        })
    }

    pub fn band(&self, mode: BandMode) -> Vec<Interval> {
        confidence_band(self, mode)
    }
}

/// `n` rows drawn uniformly with replacement, each row kept whole.
pub fn resample<R: Rng>(data: &Dataset, rng: &mut R) -> Dataset {
    let n = data.n();
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    data.select(&idx)
}

/// Generator for replicate `b` of master seed `seed`.
pub fn replicate_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

pub fn bootstrap_curves(
    data: &Dataset,
    params: &EstimParams,
    which: EstimatorTag,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapResult> {
    Ok(bootstrap_many(data, params, &[which], b, alpha, seed)?.remove(0))
}

/// Several estimators from one set of replicates; each replicate runs a single
/// sweep serving every requested curve. Results follow the order of `which`.
pub fn bootstrap_many(
    data: &Dataset,
    params: &EstimParams,
    which: &[EstimatorTag],
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<BootstrapResult>> {
    if b == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one replicate".into()));
    }
    if which.is_empty() {
        return Err(Error::InvalidInput("no estimator requested".into()));
    }
    check_alpha(alpha)?;
    let want = Want {
        theta_c: which.iter().any(|t| matches!(t, EstimatorTag::ThetaC | EstimatorTag::MTheta)),
        ra: which.iter().any(|t| matches!(t, EstimatorTag::MRA | EstimatorTag::ThetaRA)),
    };
    let base = estimate_curves(data, params, want)?;
    let bases: Vec<&CurveEstimate> = which.iter().map(|&t| base.get(t).expect("requested curve")).collect();

    let reps: Vec<Option<Curves>> = exec::map_range(b, |k| {
        let sample = resample(data, &mut replicate_rng(seed, k));
        estimate_curves(&sample, params, want).ok()
    });
    let failed = reps.iter().filter(|r| r.is_none()).count();
    check_failures(failed, b)?;

    Ok(which
        .iter()
        .zip(bases)
        .map(|(&tag, base)| {
            let replicates: Vec<CurveEstimate> = reps
                .iter()
                .flatten()
                .map(|c| on_grid(c.get(tag).expect("requested curve"), base))
                .collect();
            let (pointwise_halfwidth, uniform_halfwidth) = halfwidths(base, &replicates, alpha);
            BootstrapResult {
                base: base.clone(),
                replicates,
                alpha,
                pointwise_halfwidth,
                uniform_halfwidth,
                b,
                failed,
                seed,
            }
        })
        .collect())
}

pub fn confidence_band(result: &BootstrapResult, mode: BandMode) -> Vec<Interval> {
    result
        .base
        .values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let w = match mode {
                BandMode::Pointwise => result.pointwise_halfwidth[k],
                BandMode::Uniform => result.uniform_halfwidth,
            };
            Interval::new(v - w, v + w)
        })
        .collect()
}

/// Index of the type-1 empirical `level` quantile among `m` sorted values.
pub fn quantile_index(level: f64, m: usize) -> usize {
    // The small offset keeps products like 0.95 · 200 from rounding up past an integer.
    let k = (level * m as f64 - 1e-9).ceil() as usize;
    k.clamp(1, m) - 1
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILED_SHARE * total as f64 || failed == total {
        return Err(Error::TooManyFailedReplicates { failed, total });
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn on_grid(rep: &CurveEstimate, base: &CurveEstimate) -> CurveEstimate {
    let values: Vec<f64> = base.grid.iter().map(|&t| interpolate_clamped(&rep.grid, &rep.values, t)).collect();
    CurveEstimate {
        tag: rep.tag,
        grid: base.grid.clone(),
        skipped: values.iter().map(|v| v.is_nan()).collect(),
        values,
        region: base.region,
        dropped_fits: rep.dropped_fits,
        params: rep.params.clone(),
    }
}

fn halfwidths(base: &CurveEstimate, replicates: &[CurveEstimate], alpha: f64) -> (Vec<f64>, f64) {
    let m = replicates.len();
    let idx = quantile_index(1.0 - alpha, m);
    let trimmed = base.trimmed();
    let mut sups = vec![0.0f64; m];
    let mut column = vec![0.0; m];
    let mut pointwise = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        for (r, rep) in replicates.iter().enumerate() {
            let dev = (rep.values[k] - base.values[k]).abs();
            column[r] = dev;
            if trimmed.contains(&k) && dev > sups[r] {
                sups[r] = dev;
            }
        }
        column.sort_by(f64::total_cmp);
        pointwise.push(column[idx]);
    }
    sups.sort_by(f64::total_cmp);
    (pointwise, sups[idx])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simdata::SimModel;

    fn params(h: f64, b: f64, hbar: f64) -> EstimParams {
        EstimParams::new(h, vec![b], hbar)
    }

    #[test]
    fn resample_single_row() {
        let data = Dataset::from_rows(vec![1.0], vec![2.0], &[vec![3.0]]).unwrap();
        assert_eq!(resample(&data, &mut replicate_rng(1, 0)), data);
    }

    #[test]
    fn resample_is_deterministic_and_keeps_rows() {
        let data = SimModel::Linear.generate(50, 3);
        let a = resample(&data, &mut replicate_rng(9, 4));
        assert_eq!(a, resample(&data, &mut replicate_rng(9, 4)));
        assert_ne!(a, resample(&data, &mut replicate_rng(9, 5)));
        for i in 0..a.n() {
            let j = data.t().iter().position(|&t| t == a.t()[i]).unwrap();
            assert_eq!((a.y()[i], a.s_row(i)), (data.y()[j], data.s_row(j)));
        }
    }

    #[test]
    fn resample_frequency() {
        let data = Dataset::from_rows(vec![0.0, 1.0], vec![0.0, 1.0], &[vec![0.0], vec![0.0]]).unwrap();
        let mut rng = replicate_rng(11, 0);
        let total: f64 = (0..10_000).map(|_| resample(&data, &mut rng).y().iter().sum::<f64>()).sum();
        // Row 0 share among 20000 draws.
        assert!((1.0 - total / 20_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn quantile_indices() {
        assert_eq!(quantile_index(0.95, 1), 0);
        assert_eq!(quantile_index(0.95, 200), 189);
        assert_eq!(quantile_index(0.95, 1000), 949);
        assert_eq!(quantile_index(0.9, 10), 8);
        assert_eq!(quantile_index(0.5, 3), 1);
    }

    #[test]
    fn single_replicate_sets_both_halfwidths() {
        let data = SimModel::Single.generate(80, 2);
        let p = params(1.5, 1.5, 0.3);
        let r = bootstrap_curves(&data, &p, EstimatorTag::MTheta, 1, 0.05, 7).unwrap();
        let dev: Vec<f64> =
            r.replicates[0].values.iter().zip(&r.base.values).map(|(a, b)| (a - b).abs()).collect();
        assert_eq!(r.pointwise_halfwidth, dev);
        assert_eq!(r.uniform_halfwidth, dev.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn constant_outcome_gives_zero_width() {
        let mut data = SimModel::Single.generate(60, 4);
        data = Dataset::new(vec![2.0; 60], data.t().to_vec(), data.s_flat().to_vec(), 1).unwrap();
        let r = bootstrap_curves(&data, &params(2.5, 2.5, 0.3), EstimatorTag::ThetaC, 20, 0.05, 1).unwrap();
        assert!(r.pointwise_halfwidth.iter().all(|w| *w < 1e-9));
        assert!(r.uniform_halfwidth < 1e-9);
    }

    #[test]
    fn intervals_contain_base_and_alpha_is_monotone() {
        let data = SimModel::Linear.generate(120, 5);
        let p = EstimParams::new(3.0, vec![2.0, 3.0], 0.5).with_trim(0.1, 0.9);
        let r = bootstrap_curves(&data, &p, EstimatorTag::MTheta, 40, 0.05, 3).unwrap();
        for mode in [BandMode::Pointwise, BandMode::Uniform] {
            for (iv, v) in r.band(mode).iter().zip(&r.base.values) {
                assert!(iv.contains(*v));
            }
        }
        let wider = r.requantile(0.10).unwrap();
        assert!(wider.uniform_halfwidth <= r.uniform_halfwidth);
        for (a, b) in wider.pointwise_halfwidth.iter().zip(&r.pointwise_halfwidth) {
            assert!(a <= b);
        }
        // At most ⌈αB⌉ replicates exceed the uniform halfwidth over the trimmed grid.
        let range = r.base.trimmed();
        let over = r
            .replicates
            .iter()
            .filter(|rep| range.clone().any(|k| (rep.values[k] - r.base.values[k]).abs() > r.uniform_halfwidth))
            .count();
        assert!(over <= 2);
    }

    #[test]
    fn joint_matches_single() {
        let data = SimModel::Single.generate(70, 8);
        let p = params(1.5, 1.5, 0.3);
        let both = bootstrap_many(&data, &p, &[EstimatorTag::MTheta, EstimatorTag::ThetaC], 10, 0.1, 2).unwrap();
        let single = bootstrap_curves(&data, &p, EstimatorTag::ThetaC, 10, 0.1, 2).unwrap();
        assert_eq!(both[1], single);
        assert_eq!(both[0].base.tag, EstimatorTag::MTheta);
    }

    #[test]
    fn uniform_band_example() {
        let data = SimModel::Single.generate(40, 1);
        let mut r = bootstrap_curves(&data, &params(2.0, 2.0, 0.3), EstimatorTag::MTheta, 2, 0.05, 1).unwrap();
        r.base.values = vec![1.5; r.base.len()];
        r.uniform_halfwidth = 0.2;
        let band = confidence_band(&r, BandMode::Uniform);
        assert!((band[0].lo - 1.3).abs() < 1e-12 && (band[0].hi - 1.7).abs() < 1e-12);
    }

    #[test]
    fn failure_limit() {
        assert!(check_failures(0, 1).is_ok());
        assert!(check_failures(100, 1000).is_ok());
        assert_eq!(
            check_failures(101, 1000),
            Err(Error::TooManyFailedReplicates { failed: 101, total: 1000 })
        );
        assert!(check_failures(1, 1).is_err());
        assert!(check_failures(1, 5).is_err());
    }

    #[test]
    fn worker_count_does_not_matter() {
        let data = SimModel::Linear.generate(80, 6);
        let p = EstimParams::new(3.0, vec![2.0, 3.0], 0.5);
        let one = exec::with_jobs(Some(1), || bootstrap_curves(&data, &p, EstimatorTag::MTheta, 16, 0.05, 5).unwrap());
        let four = exec::with_jobs(Some(4), || bootstrap_curves(&data, &p, EstimatorTag::MTheta, 16, 0.05, 5).unwrap());
        assert_eq!(one, four);
    }
}
