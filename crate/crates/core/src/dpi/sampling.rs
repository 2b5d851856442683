//! Uniform minibatch sampling on `[0, T] x [lo, hi]^d`.

use rand::Rng;

use crate::nn::SamplePoint;
use crate::problem::MfgProblem;

/// `count` points with `t ~ U[0, T]` and `x ~ U[lo, hi]^d`, independent.
pub fn sample_interior<R: Rng>(count: usize, problem: &MfgProblem, rng: &mut R) -> Vec<SamplePoint> {
    (0..count)
        .map(|_| {
            let t = rng.gen_range(0.0..=problem.horizon);
            SamplePoint::new(t, sample_point(problem, rng))
        })
        .collect()
}

/// `count` points `x ~ U[lo, hi]^d`.
pub fn sample_spatial<R: Rng>(count: usize, problem: &MfgProblem, rng: &mut R) -> Vec<Vec<f64>> {
    (0..count).map(|_| sample_point(problem, rng)).collect()
}

fn sample_point<R: Rng>(problem: &MfgProblem, rng: &mut R) -> Vec<f64> {
    (0..problem.dim).map(|_| rng.gen_range(problem.lo..=problem.hi)).collect()
}
