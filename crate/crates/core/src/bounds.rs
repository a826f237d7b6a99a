//! Bounds on m(t) and θ(t) when the treatment is a deterministic function
//! `T = f(S)` of the covariates, from user-supplied level-set samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// One point `s` of the level set `{s : f(s) = t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetPoint {
    pub s: Vec<f64>,
    /// `μ(f(s), s)`.
    pub mu: f64,
    /// `∂μ(f(s), s)/∂s_j`.
    pub v: Vec<f64>,
    /// `∂f(s)/∂s_j`.
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelSetSample {
    pub points: Vec<LevelSetPoint>,
}

impl LevelSetSample {
    pub fn new(points: Vec<LevelSetPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("level-set sample is empty".into()));
        }
        let d = points[0].s.len();
        for (i, p) in points.iter().enumerate() {
            if p.s.len() != d || p.v.len() != d || p.g.len() != d {
                return Err(Error::InvalidInput(format!(
                    "level-set point {i} has inconsistent dimensions (expected {d})"
                )));
            }
            let finite = p.mu.is_finite() && p.s.iter().chain(&p.v).chain(&p.g).all(|x| x.is_finite());
            if !finite {
                return Err(Error::InvalidInput(format!("level-set point {i} has a non-finite value")));
            }
        }
        Ok(Self { points })
    }
}

/// `[max μ − ρ₁, min μ + ρ₁]` over the sample.
pub fn m_bound(sample: &LevelSetSample, rho1: f64) -> Result<Interval> {
    check_rho(rho1, "rho1")?;
    nonempty(sample)?;
    let (lo_mu, hi_mu) = sample
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.mu), b.max(p.mu)));
    let (lo, hi) = (hi_mu - rho1, lo_mu + rho1);
    if lo > hi {
        return Err(Error::EmptyInterval { lo, hi });
    }
    Ok(Interval::new(lo, hi))
}

/// Intersection over points and coordinates of `[(v_j − ρ₂)/g_j, (v_j + ρ₂)/g_j]`,
/// oriented by the sign of `g_j`.
pub fn theta_bound(sample: &LevelSetSample, rho2: f64) -> Result<Interval> {
    check_rho(rho2, "rho2")?;
    nonempty(sample)?;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (i, p) in sample.points.iter().enumerate() {
        for (j, (&v, &g)) in p.v.iter().zip(&p.g).enumerate() {
            if g == 0.0 {
                return Err(Error::ZeroGradient { point: i, coord: j });
            }
            let sg = g.signum();
            lo = lo.max((v - sg * rho2) / g);
            hi = hi.min((v + sg * rho2) / g);
        }
    }
    if lo > hi {
        return Err(Error::EmptyInterval { lo, hi });
    }
    Ok(Interval::new(lo, hi))
}

fn check_rho(rho: f64, name: &str) -> Result<()> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidInput(format!("{name} must be positive and finite, got {rho}")));
    }
    Ok(())
}

fn nonempty(sample: &LevelSetSample) -> Result<()> {
    if sample.points.is_empty() {
        return Err(Error::InvalidInput("level-set sample is empty".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(mu: f64, v: Vec<f64>, g: Vec<f64>) -> LevelSetPoint {
        LevelSetPoint { s: vec![0.0; v.len()], mu, v, g }
    }

    fn sample(points: Vec<LevelSetPoint>) -> LevelSetSample {
        LevelSetSample::new(points).unwrap()
    }

    #[test]
    fn two_candidate_truths_are_inside() {
        // μ(f(s), s) = 3s₁ on the single-point level set s₁ = t.
        for t in [-1.5, -0.2, 0.0, 0.7, 2.0] {
            let rho1 = 2.0 * f64::abs(t) + 0.1;
            let b = m_bound(&sample(vec![pt(3.0 * t, vec![3.0], vec![1.0])]), rho1).unwrap();
            assert!((b.lo - (3.0 * t - rho1)).abs() < 1e-12 && (b.hi - (3.0 * t + rho1)).abs() < 1e-12);
            assert!(b.contains(t) && b.contains(2.0 * t));
        }
    }

    #[test]
    fn m_bound_edges() {
        let b = m_bound(&sample(vec![pt(1.5, vec![0.0], vec![1.0])]), 0.5).unwrap();
        assert_eq!((b.lo, b.hi), (1.0, 2.0));
        let s = sample(vec![pt(0.0, vec![0.0], vec![1.0]), pt(2.0, vec![0.0], vec![1.0])]);
        let b = m_bound(&s, 1.0).unwrap();
        assert_eq!((b.lo, b.hi), (1.0, 1.0));
        assert!(matches!(m_bound(&s, 0.9), Err(Error::EmptyInterval { .. })));
        assert!(m_bound(&s, 0.0).is_err());
    }

    #[test]
    fn theta_bound_cases() {
        let b = theta_bound(&sample(vec![pt(0.0, vec![4.0], vec![2.0])]), 1.0).unwrap();
        assert_eq!((b.lo, b.hi), (1.5, 2.5));
        let b = theta_bound(&sample(vec![pt(0.0, vec![-4.0], vec![-2.0])]), 1.0).unwrap();
        assert_eq!((b.lo, b.hi), (1.5, 2.5));
        let s = sample(vec![pt(0.0, vec![4.0], vec![2.0]), pt(0.0, vec![10.0], vec![2.0])]);
        assert!(matches!(theta_bound(&s, 1.0), Err(Error::EmptyInterval { .. })));
        let s = sample(vec![pt(0.0, vec![1.0, 1.0], vec![1.0, 0.0])]);
        assert_eq!(theta_bound(&s, 1.0), Err(Error::ZeroGradient { point: 0, coord: 1 }));
    }

    #[test]
    fn rejects_ragged_points() {
        assert!(LevelSetSample::new(vec![pt(0.0, vec![1.0], vec![1.0, 2.0])]).is_err());
        assert!(LevelSetSample::new(vec![]).is_err());
    }

    fn arb_points() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, prop_oneof![-3.0..-0.1f64, 0.1..3.0f64]), 1..6)
    }

    proptest! {
        #[test]
        fn theta_bound_contains_exact_slope(theta in -3.0..3.0f64, rho in 0.01..2.0f64, pts in arb_points()) {
            let s = sample(pts.iter().map(|&(mu, _, g)| pt(mu, vec![theta * g], vec![g])).collect());
            prop_assert!(theta_bound(&s, rho).unwrap().contains(theta));
        }

        #[test]
        fn enlarging_rho_never_shrinks(r1 in 0.1..3.0f64, extra in 0.0..3.0f64, pts in arb_points()) {
            let s = sample(pts.iter().map(|&(mu, v, g)| pt(mu, vec![v], vec![g])).collect());
            if let Ok(a) = m_bound(&s, r1) {
                let b = m_bound(&s, r1 + extra).unwrap();
                prop_assert!(b.lo <= a.lo && b.hi >= a.hi);
            }
            if let Ok(a) = theta_bound(&s, r1) {
                let b = theta_bound(&s, r1 + extra).unwrap();
                prop_assert!(b.lo <= a.lo + 1e-12 && b.hi >= a.hi - 1e-12);
            }
        }

        #[test]
        fn m_bound_translation(c in -10.0..10.0f64, rho in 2.0..6.0f64, pts in arb_points()) {
            let s = sample(pts.iter().map(|&(mu, v, g)| pt(mu, vec![v], vec![g])).collect());
            let t = sample(pts.iter().map(|&(mu, v, g)| pt(mu + c, vec![v], vec![g])).collect());
            match (m_bound(&s, rho), m_bound(&t, rho)) {
                (Ok(a), Ok(b)) => prop_assert!((a.lo + c - b.lo).abs() < 1e-9 && (a.hi + c - b.hi).abs() < 1e-9),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "emptiness changed under translation"),
            }
        }

        #[test]
        fn theta_bound_scales_with_v(c in prop_oneof![-3.0..-0.2f64, 0.2..3.0f64], rho in 0.5..5.0f64, pts in arb_points()) {
            let s = sample(pts.iter().map(|&(_, v, g)| pt(0.0, vec![v], vec![g])).collect());
            let t = sample(pts.iter().map(|&(_, v, g)| pt(0.0, vec![c * v], vec![g])).collect());
            if let Ok(a) = theta_bound(&s, rho) {
                let b = theta_bound(&t, rho * c.abs()).unwrap();
                let (lo, hi) = if c > 0.0 { (c * a.lo, c * a.hi) } else { (c * a.hi, c * a.lo) };
                prop_assert!((b.lo - lo).abs() < 1e-9 * (1.0 + lo.abs()) && (b.hi - hi).abs() < 1e-9 * (1.0 + hi.abs()));
            }
        }
    }
}
