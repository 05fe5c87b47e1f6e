//! End-to-end finite-difference checks of the two training losses.
//!
//! Parameters are probed at a random subset of indices per tensor. A probe is
//! retried at step/10 and step/100, then redrawn, when the perturbation changes
//! any ReLU sign or max/RoI-pool winner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::{stage1_step, stage2_forward, stage2_step};
use super::{LossOptions, RexNet, Stage1Item, Stage2Item};
use crate::error::Result;
use crate::tensor::{GradCheckReport, Tensor};

/// Overall report plus one report per parameter tensor.
#[derive(Clone, Debug)]
pub struct NetGradCheck {
    pub report: GradCheckReport,
    pub per_tensor: Vec<(String, GradCheckReport)>,
    /// Probes redrawn because they straddled a non-differentiable point.
    pub rejected: usize,
}

const MAX_DRAWS_PER_PROBE: usize = 20;

#[allow(clippy::too_many_arguments)]
fn check_params(
    net: &RexNet,
    names: &[String],
    tensor_ids: &[usize],
    analytic: &[Vec<f64>],
    per_tensor: usize,
    step: f64,
    tolerance: f64,
    seed: u64,
    mut eval: impl FnMut(&RexNet) -> Result<(f64, Vec<u64>)>,
) -> Result<NetGradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = net.clone();
    let mut out = NetGradCheck {
        report: GradCheckReport::new(tolerance),
        per_tensor: Vec::new(),
        rejected: 0,
    };
    let (_, base_sig) = eval(net)?;
    for (k, &tid) in tensor_ids.iter().enumerate() {
        let len = analytic[k].len();
        let mut rep = GradCheckReport::new(tolerance);
        let wanted = per_tensor.min(len);
        let mut draws = 0;
        while rep.checked < wanted && draws < wanted * MAX_DRAWS_PER_PROBE {
            draws += 1;
            let i = if wanted == len { rep.checked } else { rng.random_range(0..len) };
            let orig = param(&probe, tid).data()[i];
            let mut accepted = None;
            for h in [step, step * 0.1, step * 0.01] {
                param_mut(&mut probe, tid).data_mut()[i] = orig + h;
                let (plus, sig_p) = eval(&probe)?;
                param_mut(&mut probe, tid).data_mut()[i] = orig - h;
                let (minus, sig_m) = eval(&probe)?;
                param_mut(&mut probe, tid).data_mut()[i] = orig;
                if sig_p == base_sig && sig_m == base_sig {
                    accepted = Some((plus - minus) / (2.0 * h));
                    break;
                }
            }
            match accepted {
                Some(numeric) => rep.record(i, analytic[k][i], numeric),
                None => out.rejected += 1,
            }
        }
        if rep.checked < wanted {
            rep.passed = false;
        }
        out.report.merge(&rep);
        out.per_tensor.push((names[k].clone(), rep));
    }
    Ok(out)
}

/// Moves exactly-zero bias entries to `delta`. Zero-initialised biases put
/// zero-input units exactly on the ReLU kink, where no probe is accepted.
pub fn offset_zero_biases(net: &mut RexNet, delta: f64) {
    let names: Vec<bool> = net.named_params().iter().map(|(n, _)| n.ends_with("bias")).collect();
    for (p, is_bias) in net.params_mut().into_iter().zip(names) {
        if is_bias {
            for v in p.data_mut() {
                if *v == 0.0 {
                    *v = delta;
                }
            }
        }
    }
}

fn param(net: &RexNet, id: usize) -> &Tensor {
    net.named_params()[id].1
}

fn param_mut(net: &mut RexNet, id: usize) -> &mut Tensor {
    net.params_mut().swap_remove(id)
}

fn signature(bits: impl Iterator<Item = bool>) -> Vec<u64> {
    let mut out = Vec::new();
    for (i, b) in bits.enumerate() {
        if i % 64 == 0 {
            out.push(0);
        }
        if b {
            *out.last_mut().expect("pushed") |= 1 << (i % 64);
        }
    }
    out
}

fn analytic_grads(net: &mut RexNet, ids: &[usize]) -> Vec<Vec<f64>> {
    let params = net.params_mut();
    ids.iter()
        .map(|&i| params[i].grad().map_or_else(|| vec![0.0; params[i].len()], <[f64]>::to_vec))
        .collect()
}

/// Checks every stage-2 parameter tensor (branches and both fusion heads)
/// against the full stage-2 loss.
pub fn stage2_gradcheck(
    net: &RexNet,
    item: &Stage2Item,
    opts: LossOptions,
    per_tensor: usize,
    step: f64,
    tolerance: f64,
    seed: u64,
) -> Result<NetGradCheck> {
    let mut work = net.clone();
    for p in work.params_mut() {
        p.zero_grad();
    }
    stage2_step(&mut work, item, opts)?;
    let all = net.named_params();
    let stage2_names = net.stage2_param_names();
    let ids: Vec<usize> = (all.len() - stage2_names.len()..all.len()).collect();
    let analytic = analytic_grads(&mut work, &ids);
    check_params(net, &stage2_names, &ids, &analytic, per_tensor, step, tolerance, seed, |n| {
        let pass = stage2_forward(n, item)?;
        let total = super::stage2_loss(n, item, opts)?.total;
        Ok((total, signature(pass.ctx.activation_pattern().into_iter())))
    })
}

/// Checks the trunk and region head against the stage-1 region loss.
pub fn stage1_gradcheck(
    net: &RexNet,
    item: &Stage1Item,
    per_tensor: usize,
    step: f64,
    tolerance: f64,
    seed: u64,
) -> Result<NetGradCheck> {
    let mut work = net.clone();
    for p in work.params_mut() {
        p.zero_grad();
    }
    stage1_step(&mut work, item)?;
    let all = net.named_params();
    let n1 = all.len() - net.stage2_param_names().len();
    let names: Vec<String> = all[..n1].iter().map(|(n, _)| n.clone()).collect();
    let ids: Vec<usize> = (0..n1).collect();
    let analytic = analytic_grads(&mut work, &ids);
    check_params(net, &names, &ids, &analytic, per_tensor, step, tolerance, seed, |n| {
        let trunk = n.trunk.forward(&item.image)?;
        let mut bits: Vec<bool> = trunk.activation_pattern();
        let mut winners: Vec<u64> = trunk.pool_argmax().iter().map(|a| a.map_or(u64::MAX, |v| v as u64)).collect();
        for m in &item.masks {
            let pass = n.head.forward(trunk.roi_features(), m)?;
            bits.extend(pass.activation_pattern());
            for p in &pass.pooled {
                winners.extend(p.argmax.iter().map(|a| a.map_or(u64::MAX, |v| v as u64)));
            }
        }
        let mut sig = signature(bits.into_iter());
        sig.extend(winners);
        Ok((super::stage1_loss(n, item)?, sig))
    })
}
