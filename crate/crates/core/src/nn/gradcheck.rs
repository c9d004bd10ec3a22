//! Central finite-difference comparison against analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::params::ParamSet;

/// Denominator floor for the relative error, so that coordinates whose true
/// gradient is zero are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates discarded because the perturbation flipped a rectifier.
    pub skipped: usize,
    pub max_relative_error: f64,
    pub worst: Option<WorstCoordinate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstCoordinate {
    pub name: String,
    pub offset: usize,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic` with central differences of `loss` at `samples`
/// random coordinates. `loss` returns the scalar loss and the rectifier
/// fingerprint of the evaluation; a coordinate is resampled when either
/// perturbed evaluation lands on a different activation pattern.
pub fn check_gradients<F>(
    params: &ParamSet,
    analytic: &ParamSet,
    mut loss: F,
    samples: usize,
    epsilon: f64,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&ParamSet) -> (f64, u64),
{
    let (_, base_print) = loss(params);
    let total = params.numel();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        checked: 0,
        skipped: 0,
        max_relative_error: 0.0,
        worst: None,
    };
    let budget = samples * 20;
    let mut attempts = 0;
    while report.checked < samples && attempts < budget {
        attempts += 1;
        let flat = rng.gen_range(0..total);
        let original = params.scalar(flat);
        probe.set_scalar(flat, original + epsilon);
        let (plus, plus_print) = loss(&probe);
        probe.set_scalar(flat, original - epsilon);
        let (minus, minus_print) = loss(&probe);
        probe.set_scalar(flat, original);
        if plus_print != base_print || minus_print != base_print {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let exact = analytic.scalar(flat);
        let err = relative_error(exact, numeric);
        report.checked += 1;
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(err);
            let (id, offset) = params.locate(flat);
            report.worst = Some(WorstCoordinate {
                name: params.name(id).to_string(),
                offset,
                analytic: exact,
                numeric,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn quadratic_is_exact() {
        let mut p = ParamSet::new();
        let id = p.add("w", ArrayD::from_shape_fn(IxDyn(&[50]), |i| i[0] as f64 * 0.1 - 2.0));
        let mut g = p.zeros_like();
        for (gi, wi) in g.slice_mut(id).iter_mut().zip(p.slice(id)) {
            *gi = 2.0 * wi;
        }
        let report = check_gradients(&p, &g, |q| (q.slice(id).iter().map(|w| w * w).sum(), 0), 100, 1e-4, 1);
        assert_eq!(report.checked, 100);
        assert!(report.max_relative_error < 1e-8, "{report:?}");
    }
}
