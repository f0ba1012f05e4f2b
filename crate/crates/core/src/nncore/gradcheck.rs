use rand::Rng;

use super::tensor::Tensor;
use super::NnError;
use crate::seed;

/// Compares analytic gradients against central differences on
/// `num_samples` randomly chosen coordinates and returns the largest
/// relative error, `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// `eval` maps a parameter list to `(loss, gradient per parameter)`.
pub fn grad_check<F>(
    mut eval: F,
    params: &[Tensor<f64>],
    num_samples: usize,
    h: f64,
    sample_seed: u64,
) -> Result<f64, NnError>
where
    F: FnMut(&[Tensor<f64>]) -> Result<(f64, Vec<Tensor<f64>>), NnError>,
{
    if !(1e-5..=1e-2).contains(&h) {
        return Err(NnError::Domain(format!("finite-difference step {h} outside [1e-5, 1e-2]")));
    }
    let total: usize = params.iter().map(Tensor::numel).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let (_, analytic) = eval(params)?;
    if analytic.len() != params.len() {
        return Err(NnError::Shape { op: "grad_check", left: vec![params.len()], right: vec![analytic.len()] });
    }

    let mut rng = seed::stream(sample_seed, "grad-check");
    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for _ in 0..num_samples {
        let mut flat = rng.random_range(0..total);
        let mut which = 0;
        while flat >= work[which].numel() {
            flat -= work[which].numel();
            which += 1;
        }
        let orig = work[which].data()[flat];
        work[which].data_mut()[flat] = orig + h;
        let (plus, _) = eval(&work)?;
        work[which].data_mut()[flat] = orig - h;
        let (minus, _) = eval(&work)?;
        work[which].data_mut()[flat] = orig;

        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[which].data()[flat];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::Graph;

    #[test]
    fn quadratic_is_exact() {
        let p = vec![
            Tensor::new(vec![2, 2], vec![0.3, -1.2, 2.0, 0.01]).unwrap(),
            Tensor::new(vec![3], vec![5.0, -0.5, 0.75]).unwrap(),
        ];
        let eval = |ps: &[Tensor<f64>]| {
            let mut g = Graph::new();
            let vars: Vec<_> = ps.iter().map(|t| g.param(t.clone()).unwrap()).collect();
            let mut total = None;
            for &v in &vars {
                let sq = g.mul(v, v)?;
                let s = g.sum(sq)?;
                total = Some(match total {
                    None => s,
                    Some(acc) => g.add(acc, s)?,
                });
            }
            let loss = g.scale(total.unwrap(), 0.5)?;
            let grads = g.backward(loss)?;
            Ok((g.value(loss).data()[0], vars.iter().map(|&v| grads.get(v).unwrap().clone()).collect()))
        };
        let err = grad_check(eval, &p, 50, 1e-3, 1).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn rejects_step_out_of_range() {
        let p = vec![Tensor::scalar(1.0)];
        let eval = |_: &[Tensor<f64>]| Ok((0.0, vec![Tensor::scalar(0.0)]));
        assert!(grad_check(eval, &p, 1, 0.5, 0).is_err());
    }
}
