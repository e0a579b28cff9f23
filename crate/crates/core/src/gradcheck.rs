//! Central finite-difference verification of analytic gradients.

use crate::tensor::{Tensor, TensorError};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error("non-finite loss while perturbing {name}[{index}]")]
    NonFiniteLoss { name: String, index: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (parameter name, flat index, analytic, numeric) of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
    pub coords_checked: usize,
}

/// Central-difference rounding floor: at h = 1e-5 and loss magnitudes up to
/// ~100, `(f(x+h) - f(x-h)) / 2h` carries absolute noise of order
/// `eps * |f| / h` ~ 1e-9. Differences below this floor compare rounding,
/// not gradients, and count as zero error. A wrong gradient still fails:
/// its difference is orders of magnitude above the floor.
pub const FD_NOISE_FLOOR: f64 = 1e-8;

/// Compares analytic gradients against central differences
/// `(f(x+h) - f(x-h)) / 2h` on sampled coordinates.
///
/// `f` must be deterministic (dropout disabled). Per tensor, the
/// `max_coords_per_tensor` coordinates with the largest analytic magnitude
/// are probed; a systematically wrong gradient (missing term, transposed
/// factor) lands in the probed set and fails with an error near 1. The
/// relative error of a coordinate is
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`, taken as
/// zero when the absolute difference sits below [`FD_NOISE_FLOOR`]; the
/// report carries the max over all probed coordinates.
pub fn finite_difference_check<F>(
    f: &mut F,
    params: &mut BTreeMap<String, Tensor>,
    analytic: &BTreeMap<String, Vec<f64>>,
    h: f64,
    max_coords_per_tensor: usize,
) -> Result<GradCheckReport, GradCheckError>
where
    F: FnMut(&BTreeMap<String, Tensor>) -> Result<f64, TensorError>,
{
    assert!(h > 0.0, "step size must be positive");
    let names: Vec<String> = params.keys().cloned().collect();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        coords_checked: 0,
    };

    for name in names {
        let numel = params[&name].numel();
        let grad = analytic
            .get(&name)
            .unwrap_or_else(|| panic!("no analytic gradient for {name}"));
        assert_eq!(grad.len(), numel, "gradient length mismatch for {name}");
        let coords: Vec<usize> = if numel <= max_coords_per_tensor {
            (0..numel).collect()
        } else {
            let mut order: Vec<usize> = (0..numel).collect();
            order.sort_by(|&a, &b| {
                grad[b]
                    .abs()
                    .partial_cmp(&grad[a].abs())
                    .expect("finite gradients")
                    .then(a.cmp(&b))
            });
            order.truncate(max_coords_per_tensor);
            order
        };
        for index in coords {
            let original = params[&name].data()[index];

            params.get_mut(&name).unwrap().data_mut()[index] = original + h;
            let plus = f(params);
            params.get_mut(&name).unwrap().data_mut()[index] = original - h;
            let minus = f(params);
            params.get_mut(&name).unwrap().data_mut()[index] = original;

            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(GradCheckError::NonFiniteLoss { name, index });
            }
            let numeric = (plus - minus) / (2.0 * h);
            let analytic_v = grad[index];
            let diff = (analytic_v - numeric).abs();
            let rel = if diff <= FD_NOISE_FLOOR {
                0.0
            } else {
                diff / (1e-8f64).max(analytic_v.abs() + numeric.abs())
            };
            report.coords_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((name.clone(), index, analytic_v, numeric));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn quadratic_bowl_is_exact_up_to_rounding() {
        // f(x) = sum(x^2); analytic grad 2x
        let mut params = BTreeMap::new();
        params.insert(
            "x".to_string(),
            Tensor::from_vec(vec![3], vec![0.5, -1.5, 2.0]).unwrap(),
        );
        let analytic: BTreeMap<String, Vec<f64>> =
            [("x".to_string(), vec![1.0, -3.0, 4.0])].into();
        let mut f = |p: &BTreeMap<String, Tensor>| {
            Ok(p["x"].data().iter().map(|v| v * v).sum())
        };
        let report =
            finite_difference_check(&mut f, &mut params, &analytic, 1e-5, 100).unwrap();
        assert!(report.max_rel_err < 1e-7, "err {}", report.max_rel_err);
        assert_eq!(report.coords_checked, 3);
    }

    #[test]
    fn restores_parameters_after_probing() {
        let mut params = BTreeMap::new();
        params.insert(
            "x".to_string(),
            Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap(),
        );
        let analytic: BTreeMap<String, Vec<f64>> = [("x".to_string(), vec![1.0, 1.0])].into();
        let mut f = |p: &BTreeMap<String, Tensor>| Ok(p["x"].data().iter().sum());
        finite_difference_check(&mut f, &mut params, &analytic, 1e-5, 10).unwrap();
        assert_eq!(params["x"].data(), &[1.0, 2.0]);
    }

    #[test]
    fn catches_a_wrong_gradient() {
        let mut params = BTreeMap::new();
        params.insert(
            "x".to_string(),
            Tensor::from_vec(vec![1], vec![2.0]).unwrap(),
        );
        // claim grad 1.0 for f(x) = x^2 at x=2 (true grad 4.0)
        let analytic: BTreeMap<String, Vec<f64>> = [("x".to_string(), vec![1.0])].into();
        let mut f = |p: &BTreeMap<String, Tensor>| Ok(p["x"].data()[0].powi(2));
        let report =
            finite_difference_check(&mut f, &mut params, &analytic, 1e-5, 10).unwrap();
        assert!(report.max_rel_err > 0.1);
    }

    #[test]
    fn graph_gradients_survive_the_check() {
        // f = sum(sigmoid(x . w)) through the graph
        let mut params = BTreeMap::new();
        params.insert(
            "w".to_string(),
            Tensor::from_vec(vec![3, 2], vec![0.3, -0.4, 0.1, 0.9, -0.7, 0.2])
                .unwrap()
                .with_grad(),
        );
        let x = Tensor::from_vec(vec![2, 3], vec![0.5, 1.0, -0.5, 0.2, -0.1, 0.8]).unwrap();

        let run = |p: &BTreeMap<String, Tensor>| -> Result<(f64, Vec<f64>), TensorError> {
            let mut g = Graph::new();
            let nw = g.leaf(&p["w"]);
            let nx = g.leaf(&x);
            let z = g.matmul(nx, nw)?;
            let s = g.sigmoid(z);
            let loss = g.sum(s);
            g.backward(loss)?;
            Ok((g.value(loss)[0], g.grad(nw).unwrap().to_vec()))
        };

        let (_, grad) = run(&params).unwrap();
        let analytic: BTreeMap<String, Vec<f64>> = [("w".to_string(), grad)].into();
        let mut f = |p: &BTreeMap<String, Tensor>| run(p).map(|(loss, _)| loss);
        let report =
            finite_difference_check(&mut f, &mut params, &analytic, 1e-5, 100).unwrap();
        assert!(report.max_rel_err < 1e-7, "err {}", report.max_rel_err);
    }
}
