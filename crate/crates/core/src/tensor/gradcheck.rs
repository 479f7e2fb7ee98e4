/// Result of comparing analytic gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
    pub checked: usize,
    pub all_finite: bool,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.all_finite && self.max_rel_err < tolerance
    }
}

/// Relative error floor: gradients smaller than this are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

/// Compares `analytic` with central differences of the scalar objective `f`
/// around `inputs`, using step `step` on each coordinate in turn.
///
/// The relative error per coordinate is `|a - n| / max(|a|, |n|, 1e-6)`.
/// Report-only: a mismatch is never an error.
pub fn grad_check<F>(mut f: F, inputs: &[f64], analytic: &[f64], step: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(inputs.len(), analytic.len(), "one analytic entry per input");
    let mut point = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_index: 0,
        checked: inputs.len(),
        all_finite: true,
    };
    for i in 0..inputs.len() {
        let orig = point[i];
        point[i] = orig + step;
        let up = f(&point);
        point[i] = orig - step;
        let down = f(&point);
        point[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[i];
        if !numeric.is_finite() || !a.is_finite() {
            report.all_finite = false;
            continue;
        }
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
        report.max_abs_err = report.max_abs_err.max(abs);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_index = i;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let x = [0.5, -1.25, 2.0];
        let grad: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let r = grad_check(|v| v.iter().map(|a| a * a).sum(), &x, &grad, 1e-5);
        assert!(r.passes(1e-8), "{r:?}");
    }

    #[test]
    fn flags_wrong_gradient() {
        let x = [1.0, 2.0];
        let r = grad_check(|v| v[0] * v[1], &x, &[2.0, 2.0], 1e-5);
        assert_eq!(r.worst_index, 1);
        assert!(r.max_rel_err > 0.4);
    }

    #[test]
    fn zero_input_stays_finite() {
        let x = [0.0; 4];
        let r = grad_check(|v| v.iter().map(|a| a.tanh()).sum(), &x, &[1.0; 4], 1e-5);
        assert!(r.all_finite);
        assert!(r.max_rel_err < 1e-8);
    }
}
