use super::{KdTemperatureMode, PipelineError};
use crate::nncore::{Graph, NnError, ProbDist, Real, Tensor, Var};

/// Mean cross-entropy of `logits` against hard labels, recorded on `g`.
pub fn ce_loss<T: Real>(g: &mut Graph<T>, logits: Var, labels: &[usize]) -> Result<Var, NnError> {
    g.cross_entropy(logits, labels)
}

/// Mean `-Σ_k q_k log p_k` between cached teacher rows `q` and the student's
/// softmax. With [`KdTemperatureMode::Both`] the student logits are divided by
/// `temperature`; the teacher rows are expected to be tempered already.
pub fn kd_loss<T: Real>(
    g: &mut Graph<T>,
    student_logits: Var,
    teacher_probs: &[ProbDist],
    temperature: f64,
    mode: KdTemperatureMode,
) -> Result<Var, NnError> {
    if !(temperature > 0.0) {
        return Err(NnError::Domain(format!("temperature must be positive, got {temperature}")));
    }
    let k = g.value(student_logits).shape().last().copied().unwrap_or(0);
    let mut targets = Vec::with_capacity(teacher_probs.len() * k);
    for q in teacher_probs {
        if q.len() != k {
            return Err(NnError::NotProbDist(format!("teacher row has {} classes, student {k}", q.len())));
        }
        // Rows are re-validated so hand-built targets cannot bypass the check.
        ProbDist::new(q.as_slice().to_vec())?;
        targets.extend(q.as_slice().iter().map(|&x| T::of_f64(x)));
    }
    let inv_temp = match mode {
        KdTemperatureMode::Both => 1.0 / temperature,
        KdTemperatureMode::TeacherOnly => 1.0,
    };
    g.soft_cross_entropy(student_logits, &targets, T::of_f64(inv_temp))
}

fn logits_tensor(logits: &[Vec<f64>]) -> Result<Tensor<f64>, NnError> {
    let k = logits.first().map_or(0, Vec::len);
    if logits.iter().any(|r| r.len() != k) {
        return Err(NnError::Shape {
            op: "logits",
            left: vec![logits.len(), k],
            right: logits.iter().map(Vec::len).collect(),
        });
    }
    Tensor::new(vec![logits.len(), k], logits.concat())
}

/// [`ce_loss`] on a plain logit matrix.
pub fn ce_loss_value(logits: &[Vec<f64>], labels: &[usize]) -> Result<f64, PipelineError> {
    let mut g = Graph::new();
    let z = g.constant(logits_tensor(logits)?)?;
    let l = ce_loss(&mut g, z, labels)?;
    Ok(g.value(l).data()[0])
}

/// [`kd_loss`] on a plain logit matrix.
pub fn kd_loss_value(
    logits: &[Vec<f64>],
    teacher_probs: &[ProbDist],
    temperature: f64,
    mode: KdTemperatureMode,
) -> Result<f64, PipelineError> {
    let mut g = Graph::new();
    let z = g.constant(logits_tensor(logits)?)?;
    let l = kd_loss(&mut g, z, teacher_probs, temperature, mode)?;
    Ok(g.value(l).data()[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b}");
    }

    #[test]
    fn ce_reference_values() {
        close(ce_loss_value(&[vec![0.0, 0.0]], &[1]).unwrap(), 2f64.ln(), 1e-12);
        close(ce_loss_value(&[vec![1.0, 1.0, 1.0]], &[0]).unwrap(), 3f64.ln(), 1e-12);
        close(ce_loss_value(&[vec![0.0, 800.0]], &[1]).unwrap(), 0.0, 1e-12);
    }

    #[test]
    fn ce_label_out_of_range() {
        assert!(ce_loss_value(&[vec![0.0, 0.0]], &[2]).is_err());
    }

    #[test]
    fn kd_hand_evaluated() {
        // Student logits whose softmax is [0.8, 0.2].
        let z = vec![0.8f64.ln(), 0.2f64.ln()];
        let q = ProbDist::new(vec![0.9, 0.1]).unwrap();
        let expected = -(0.9 * 0.8f64.ln() + 0.1 * 0.2f64.ln());
        close(kd_loss_value(&[z], &[q], 1.0, KdTemperatureMode::Both).unwrap(), expected, 1e-12);
        close(expected, 0.3617, 1e-4);
    }

    #[test]
    fn kd_minimum_is_entropy_not_zero() {
        let q = ProbDist::new(vec![0.5, 0.5]).unwrap();
        close(kd_loss_value(&[vec![0.3, 0.3]], &[q], 1.0, KdTemperatureMode::Both).unwrap(), 2f64.ln(), 1e-12);
    }

    #[test]
    fn kd_one_hot_collapses_to_ce() {
        let z = vec![vec![0.2, -1.0, 3.0], vec![1.5, 0.1, 0.0]];
        let q = vec![ProbDist::one_hot(3, 2), ProbDist::one_hot(3, 0)];
        let kd = kd_loss_value(&z, &q, 1.0, KdTemperatureMode::Both).unwrap();
        let ce = ce_loss_value(&z, &[2, 0]).unwrap();
        assert!((kd - ce).abs() < 1e-12);
    }

    #[test]
    fn teacher_only_ignores_student_temperature() {
        let z = vec![vec![0.2, -1.0]];
        let q = vec![ProbDist::new(vec![0.3, 0.7]).unwrap()];
        let a = kd_loss_value(&z, &q, 0.1, KdTemperatureMode::TeacherOnly).unwrap();
        let b = kd_loss_value(&z, &q, 1.0, KdTemperatureMode::Both).unwrap();
        assert_eq!(a, b);
        let c = kd_loss_value(&z, &q, 0.1, KdTemperatureMode::Both).unwrap();
        let scaled = vec![vec![2.0, -10.0]];
        assert!((c - kd_loss_value(&scaled, &q, 1.0, KdTemperatureMode::Both).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn class_count_mismatch_rejected() {
        let q = vec![ProbDist::new(vec![0.2, 0.3, 0.5]).unwrap()];
        assert!(kd_loss_value(&[vec![0.0, 0.0]], &q, 1.0, KdTemperatureMode::Both).is_err());
    }
}
