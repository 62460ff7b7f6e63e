use super::{Gradients, Loss, Network};
use crate::error::Result;

/// Central finite differences of `loss(target, net(x))` for every parameter.
/// Only uses the forward pass, so it checks `backward` independently.
pub fn numerical_gradients(net: &Network, x: &[f64], target: &[f64], loss: &Loss, h: f64) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(net);
    let mut probe = net.clone();
    let eval = |p: &Network| -> Result<f64> { loss.value(target, &p.predict(x)?) };
    for li in 0..net.layers().len() {
        for k in 0..net.layers()[li].weights().len() {
            let w = net.layers()[li].weights()[k];
            probe.layers_mut()[li].weights_mut()[k] = w + h;
            let up = eval(&probe)?;
            probe.layers_mut()[li].weights_mut()[k] = w - h;
            let down = eval(&probe)?;
            probe.layers_mut()[li].weights_mut()[k] = w;
            grads.layers[li].weights[k] = (up - down) / (2.0 * h);
        }
        for k in 0..net.layers()[li].bias().len() {
            let b = net.layers()[li].bias()[k];
            probe.layers_mut()[li].bias_mut()[k] = b + h;
            let up = eval(&probe)?;
            probe.layers_mut()[li].bias_mut()[k] = b - h;
            let down = eval(&probe)?;
            probe.layers_mut()[li].bias_mut()[k] = b;
            grads.layers[li].bias[k] = (up - down) / (2.0 * h);
        }
    }
    Ok(grads)
}

/// Worst relative disagreement between two gradient sets. Components whose
/// absolute difference is within `abs_floor` count as exact matches.
pub fn max_relative_error(analytic: &Gradients, numeric: &Gradients, abs_floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| {
            let diff = (a - n).abs();
            if diff <= abs_floor {
                0.0
            } else {
                diff / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}
