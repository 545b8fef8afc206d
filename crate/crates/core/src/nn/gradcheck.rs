use super::layer::Mode;
use super::loss::Loss;
use super::network::Network;
use super::tensor::Tensor4;
use crate::error::Result;

/// Relative-error denominators are floored at this fraction of the norm of
/// the full analytic gradient, so tensors whose exact gradient vanishes are
/// compared on the scale of the whole gradient.
const FLOOR_FRACTION: f64 = 1e-6;
/// Absolute floor used when the whole gradient vanishes.
const MIN_FLOOR: f64 = 1e-12;
/// Times the step is divided by ten when a difference straddles a ReLU kink.
const MAX_KINK_REFINEMENTS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    /// Worst norm-wise relative error `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂, floor)`
    /// over the parameter tensors.
    pub max_rel_error: f64,
    /// Index of the worst tensor in [`Network::trainable`] order.
    pub worst_tensor: usize,
    /// Norm-wise relative error of the input gradient.
    pub input_rel_error: f64,
    /// Parameters and inputs compared.
    pub checked: usize,
    /// Differences recomputed with a smaller step because the nominal step
    /// moved a ReLU input across zero.
    pub kink_refined: usize,
    /// Differences that straddled a kink even at the smallest step; these are
    /// left out of the error.
    pub unresolved: usize,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn rel_error(analytic: &[f64], numeric: &[Option<f64>], floor: f64) -> f64 {
    let pairs = || analytic.iter().zip(numeric).filter_map(|(&a, n)| n.map(|n| (a, n)));
    let diff = norm(pairs().map(|(a, n)| a - n));
    let scale = norm(pairs().map(|(a, _)| a)).max(norm(pairs().map(|(_, n)| n)));
    diff / scale.max(floor)
}

/// Compares backprop gradients of `loss(network(input), target)` against
/// central finite differences with step `step`, in train mode. Every
/// parameter and every input element is checked. A difference whose
/// perturbations change the ReLU activation pattern is recomputed with the
/// step divided by ten, up to three times.
pub fn gradcheck(
    network: &Network,
    input: &Tensor4,
    target: &Tensor4,
    loss: &Loss,
    step: f64,
) -> Result<GradcheckReport> {
    let eval = |net: &Network, x: &Tensor4| -> Result<(f64, Vec<bool>)> {
        let (out, tape) = net.forward_pure(x, Mode::Train)?;
        Ok((loss.value(&out, target)?, tape.activation_pattern()))
    };
    let (out, tape) = network.forward_pure(input, Mode::Train)?;
    let base_pattern = tape.activation_pattern();
    let (_, grad_out) = loss.value_and_grad(&out, target)?;
    let grads = network.backward(&tape, &grad_out)?;
    let analytic: Vec<Vec<f64>> = grads.trainable().iter().map(|g| g.to_vec()).collect();
    let floor = (FLOOR_FRACTION * norm(analytic.iter().flatten().copied())).max(MIN_FLOOR);

    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst_tensor: 0,
        input_rel_error: 0.0,
        checked: 0,
        kink_refined: 0,
        unresolved: 0,
    };
    // central difference of `f(v)` around `orig`, shrinking the step at kinks
    let mut difference = |orig: f64,
                          f: &mut dyn FnMut(f64) -> Result<(f64, Vec<bool>)>|
     -> Result<Option<f64>> {
        let mut h = step;
        for attempt in 0..=MAX_KINK_REFINEMENTS {
            let (plus, p_plus) = f(orig + h)?;
            let (minus, p_minus) = f(orig - h)?;
            if p_plus == base_pattern && p_minus == base_pattern {
                if attempt > 0 {
                    report.kink_refined += 1;
                }
                return Ok(Some((plus - minus) / (2.0 * h)));
            }
            h /= 10.0;
        }
        report.unresolved += 1;
        Ok(None)
    };

    let mut net = network.clone();
    let mut errors = Vec::with_capacity(analytic.len());
    for (t, tensor_grads) in analytic.iter().enumerate() {
        let mut numeric = Vec::with_capacity(tensor_grads.len());
        for i in 0..tensor_grads.len() {
            let orig = net.trainable()[t][i];
            let n = difference(orig, &mut |v| {
                net.trainable_mut()[t][i] = v;
                eval(&net, input)
            })?;
            net.trainable_mut()[t][i] = orig;
            numeric.push(n);
        }
        errors.push(rel_error(tensor_grads, &numeric, floor));
    }
    let mut x = input.clone();
    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x.data()[i];
        let n = difference(orig, &mut |v| {
            x.data_mut()[i] = v;
            eval(&net, &x)
        })?;
        x.data_mut()[i] = orig;
        numeric.push(n);
    }
    let input_floor = (FLOOR_FRACTION * norm(grads.input.data().iter().copied())).max(MIN_FLOOR);
    let input_rel_error = rel_error(grads.input.data(), &numeric, input_floor);

    for (t, &e) in errors.iter().enumerate() {
        if e > report.max_rel_error {
            report.max_rel_error = e;
            report.worst_tensor = t;
        }
    }
    report.input_rel_error = input_rel_error;
    report.checked = analytic.iter().map(Vec::len).sum::<usize>() + x.len();
    Ok(report)
}
