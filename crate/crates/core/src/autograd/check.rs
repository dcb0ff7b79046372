//! Finite-difference gradient verification.

use super::{Graph, NodeId, Tensor};
use crate::error::Result;

/// Compare analytic gradients against central finite differences.
///
/// `build` must construct a scalar-rooted graph from leaves created at the
/// given point. Returns the max over parameter coordinates of
/// `|analytic - central| / max(1, |central|)`.
pub fn grad_check<F>(build: F, point: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> NodeId,
{
    let eval = |pts: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let leaves: Vec<NodeId> = pts.iter().map(|t| g.leaf(t.clone())).collect();
        let root = build(&mut g, &leaves);
        Ok(g.value(root).item())
    };

    // analytic gradients
    let mut g = Graph::new();
    let leaves: Vec<NodeId> = point.iter().map(|t| g.leaf(t.clone())).collect();
    let root = build(&mut g, &leaves);
    let grads = g.backward(root, &leaves)?;
    let analytic: Vec<Vec<f64>> = grads.iter().map(|&n| g.value(n).data().to_vec()).collect();

    let mut worst = 0.0f64;
    let mut pts = point.to_vec();
    for ti in 0..pts.len() {
        for j in 0..pts[ti].len() {
            let orig = pts[ti].data()[j];
            pts[ti].data_mut()[j] = orig + h;
            let fp = eval(&pts)?;
            pts[ti].data_mut()[j] = orig - h;
            let fm = eval(&pts)?;
            pts[ti].data_mut()[j] = orig;
            let central = (fp - fm) / (2.0 * h);
            let err = (analytic[ti][j] - central).abs() / central.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
