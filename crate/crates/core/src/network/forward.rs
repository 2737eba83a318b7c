use crate::error::{Error, Result};
use crate::layers::{
    activation_backward, activation_forward, batchnorm_backward, conv2d_backward, conv2d_forward,
    dropout_backward, dropout_forward, linear_backward, linear_forward, pool_backward,
    pool_forward, BatchNormCache, DropoutMask, Mode, PoolCache,
};
use crate::layers::batchnorm::{batchnorm_forward_pure, update_running};
use crate::numerics::{SeededRng, Tensor};

use super::{Head, LayerNode, NetworkSpec, Preact};

/// Intermediate values of one node, enough to run its backward pass.
#[derive(Debug, Clone)]
pub struct NodeCache {
    /// Node input (previous node's output).
    pub input: Option<Tensor>,
    pub bn: Option<BatchNormCache>,
    /// Activation input: batch-norm output, or the preactivation without BN.
    pub act_input: Option<Tensor>,
    /// Region index per unit and position, in activation-output order.
    pub pattern: Vec<u8>,
    /// Shape of the activation output (batch first).
    pub act_shape: Vec<usize>,
    pub pool: Option<PoolCache>,
    pub dropout: DropoutMask,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub mode: Mode,
    version: u64,
    full: bool,
    pub nodes: Vec<NodeCache>,
    pub head_input: Option<Tensor>,
    pub batch: usize,
}

impl ForwardCache {
    /// Concatenated activation pattern of example `i`: layer-major, unit-minor
    /// (spatial positions follow their unit).
    pub fn pattern_of(&self, i: usize) -> Vec<u8> {
        let mut out = Vec::new();
        for node in &self.nodes {
            let per = node.pattern.len() / self.batch;
            out.extend_from_slice(&node.pattern[i * per..(i + 1) * per]);
        }
        out
    }
}

/// Parameter gradients in [`NetworkSpec::params`] order, plus the input gradient.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Tensor>,
    pub input: Tensor,
}

fn as_maps(x: &Tensor, dims: &[usize]) -> Result<Tensor> {
    let mut shape = vec![x.shape()[0]];
    shape.extend_from_slice(dims);
    x.clone().reshape(&shape)
}

impl NetworkSpec {
    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.rank() < 2 || x.shape()[1..] != self.input_dims[..] {
            return Err(Error::dim(format!(
                "network expects [batch, {:?}], got {:?}",
                self.input_dims,
                x.shape()
            )));
        }
        Ok(())
    }

    fn run(
        &self,
        x: &Tensor,
        mode: Mode,
        mut rng: Option<&mut SeededRng>,
        full: bool,
    ) -> Result<(Tensor, ForwardCache)> {
        self.check_input(x)?;
        let batch = x.shape()[0];
        let mut caches = Vec::with_capacity(self.nodes.len());
        let mut cur = x.clone();
        for node in &self.nodes {
            let (out, cache) = node_forward(node, cur, mode, rng.as_deref_mut(), full)?;
            caches.push(cache);
            cur = out;
        }
        let logits = match &self.head {
            Head::Linear(p) => {
                let flat = cur.clone().reshape(&[batch, p.in_dim()])?;
                linear_forward(&flat, p)?
            }
            Head::Flatten => {
                let c = self.classes;
                cur.clone().reshape(&[batch, c])?
            }
        };
        Ok((
            logits,
            ForwardCache {
                mode,
                version: self.version,
                full,
                nodes: caches,
                head_input: full.then_some(cur),
                batch,
            },
        ))
    }

    /// Train-mode pass: batch statistics, live dropout, running moments updated.
    pub fn forward_train(
        &mut self,
        x: &Tensor,
        rng: &mut SeededRng,
    ) -> Result<(Tensor, ForwardCache)> {
        let (logits, cache) = self.run(x, Mode::Train, Some(rng), true)?;
        for (node, nc) in self.nodes.iter_mut().zip(&cache.nodes) {
            if let (Some(bn), Some(bc)) = (&mut node.bn, &nc.bn) {
                update_running(bn, bc);
            }
        }
        Ok((logits, cache))
    }

    /// Inference pass with a full cache; never mutates the network.
    pub fn forward_infer(&self, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
        self.run(x, Mode::Infer, None, true)
    }

    /// Inference pass keeping only the activation patterns.
    pub fn forward_patterns(&self, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
        self.run(x, Mode::Infer, None, false)
    }

    /// Inference logits.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.run(x, Mode::Infer, None, false)?.0)
    }

    /// Sets every batch-norm layer's running moments to the moments of its
    /// input over `x` in a train-mode pass without dropout, so that inference
    /// reproduces train-mode normalisation on that point set.
    pub fn calibrate_batchnorm(&mut self, x: &Tensor) -> Result<()> {
        let mut probe = self.clone();
        for node in &mut probe.nodes {
            node.dropout = None;
        }
        let (_, cache) = probe.run(x, Mode::Train, None, true)?;
        for (node, nc) in self.nodes_mut().iter_mut().zip(&cache.nodes) {
            if let (Some(bn), Some(bc)) = (&mut node.bn, &nc.bn) {
                bn.running_mean = Tensor::from_vec(&[bc.mean.len()], bc.mean.clone())?;
                bn.running_var = Tensor::from_vec(&[bc.var.len()], bc.var.clone())?;
            }
        }
        Ok(())
    }

    /// Reverse pass from the gradient of the loss with respect to the logits.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Tensor) -> Result<Gradients> {
        if cache.version != self.version || cache.nodes.len() != self.nodes.len() {
            return Err(Error::State(
                "forward cache does not belong to the current parameters".into(),
            ));
        }
        if !cache.full {
            return Err(Error::State("cache holds patterns only; rerun with a full cache".into()));
        }
        if dlogits.shape() != [cache.batch, self.classes] {
            return Err(Error::dim(format!(
                "logit gradient {:?}, expected [{}, {}]",
                dlogits.shape(),
                cache.batch,
                self.classes
            )));
        }
        let head_in = cache.head_input.as_ref().expect("full cache");
        let mut head_grads = Vec::new();
        let mut grad = match &self.head {
            Head::Linear(p) => {
                let flat = head_in.clone().reshape(&[cache.batch, p.in_dim()])?;
                let g = linear_backward(&flat, p, dlogits)?;
                head_grads.push(g.dweight);
                head_grads.push(g.dbias);
                g.dx.reshape(head_in.shape())?
            }
            Head::Flatten => dlogits.clone().reshape(head_in.shape())?,
        };
        let mut per_node = Vec::with_capacity(self.nodes.len());
        for (node, nc) in self.nodes.iter().zip(&cache.nodes).rev() {
            let (dx, grads) = node_backward(node, nc, grad)?;
            per_node.push(grads);
            grad = dx;
        }
        let mut params: Vec<Tensor> = per_node.into_iter().rev().flatten().collect();
        params.extend(head_grads);
        Ok(Gradients {
            params,
            input: grad,
        })
    }
}

fn node_forward(
    node: &LayerNode,
    x: Tensor,
    mode: Mode,
    rng: Option<&mut SeededRng>,
    full: bool,
) -> Result<(Tensor, NodeCache)> {
    let pre = match &node.preact {
        Preact::Linear(p) => {
            let flat = if x.rank() == 2 { x.clone() } else {
                let (n, f) = x.rows();
                x.clone().reshape(&[n, f])?
            };
            linear_forward(&flat, p)?
        }
        Preact::Conv(p) => conv2d_forward(&x, p)?,
    };
    let (h, bn_cache) = match &node.bn {
        Some(bn) => {
            let (h, c) = batchnorm_forward_pure(&pre, bn, mode)?;
            (h, Some(c))
        }
        None => (pre, None),
    };
    let (y, pattern) = activation_forward(&h, &node.act, node.prelu_alpha.as_ref())?;
    let act_shape = y.shape().to_vec();
    let (y, pool_cache) = match &node.pool {
        Some(pool) => {
            let (p, c) = pool_forward(&y, pool)?;
            (p, Some(c))
        }
        None => (y, None),
    };
    let (y, mask) = match (&node.dropout, rng) {
        (Some(d), Some(rng)) => dropout_forward(&y, d, mode, rng),
        (Some(_), None) if mode == Mode::Train => {
            return Err(Error::State("train-mode dropout needs a generator".into()))
        }
        _ => (y, DropoutMask::identity()),
    };
    let cache = NodeCache {
        input: full.then_some(x),
        bn: if full { bn_cache } else { None },
        act_input: full.then_some(h),
        pattern,
        act_shape,
        pool: pool_cache,
        dropout: mask,
    };
    Ok((y, cache))
}

/// Returns the input gradient and this node's parameter gradients in declaration order.
fn node_backward(node: &LayerNode, nc: &NodeCache, dy: Tensor) -> Result<(Tensor, Vec<Tensor>)> {
    let g = dropout_backward(&nc.dropout, &dy)?;
    let g = match (&node.pool, &nc.pool) {
        (Some(pool), Some(pc)) => pool_backward(pool, pc, &g)?,
        _ => g,
    };
    let g = g.reshape(&nc.act_shape)?;
    let h = nc.act_input.as_ref().expect("full cache");
    let act = activation_backward(h, &node.act, node.prelu_alpha.as_ref(), &nc.pattern, &g)?;
    let mut grads = Vec::with_capacity(5);
    let (dpre, bn_grads) = match (&node.bn, &nc.bn) {
        (Some(bn), Some(bc)) => {
            let b = batchnorm_backward(bn, bc, &act.dh)?;
            (b.dx, Some((b.dgamma, b.dbeta)))
        }
        _ => (act.dh, None),
    };
    let x = nc.input.as_ref().expect("full cache");
    let dx = match &node.preact {
        Preact::Linear(p) => {
            let (n, f) = x.rows();
            let flat = x.clone().reshape(&[n, f])?;
            let lg = linear_backward(&flat, p, &dpre)?;
            grads.push(lg.dweight);
            grads.push(lg.dbias);
            as_maps(&lg.dx, &x.shape()[1..])?
        }
        Preact::Conv(p) => {
            let cg = conv2d_backward(x, p, &dpre)?;
            grads.push(cg.dkernels);
            grads.push(cg.dbias);
            cg.dx
        }
    };
    if let Some((dg, db)) = bn_grads {
        grads.push(dg);
        grads.push(db);
    }
    if let Some(da) = act.dalpha {
        grads.push(da);
    }
    Ok((dx, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{softmax_xent, ActivationSpec, LinearParams};
    use crate::network::{build_mlp, InitScheme};
    use crate::numerics::{finite_diff_grad, max_relative_error, normal_sample};

    #[test]
    fn head_only_network_is_the_head() {
        let mut rng = SeededRng::new(1);
        let head = LinearParams::new(normal_sample(&mut rng, &[3, 2], 1.0), normal_sample(&mut rng, &[3], 1.0)).unwrap();
        let net = NetworkSpec::new(vec![2], vec![], Head::Linear(head.clone())).unwrap();
        let x = normal_sample(&mut rng, &[5, 2], 1.0);
        assert_eq!(net.logits(&x).unwrap(), linear_forward(&x, &head).unwrap());
    }

    #[test]
    fn infer_mode_is_pure() {
        let mut net = build_mlp(2, 3, 4, ActivationSpec::Maxout { k: 2 }, true, Some(0.2)).unwrap();
        let mut rng = SeededRng::new(2);
        net.init_params(&mut rng, &InitScheme::toy()).unwrap();
        let x = normal_sample(&mut rng, &[20, 2], 5.0);
        net.forward_train(&x, &mut rng).unwrap();
        let before = net.clone();
        let a = net.logits(&x).unwrap();
        let b = net.forward_infer(&x).unwrap().0;
        assert_eq!(a.data(), b.data());
        assert_eq!(net, before);
    }

    #[test]
    fn calibrated_inference_matches_full_batch_training_pass() {
        let mut net = build_mlp(2, 3, 4, ActivationSpec::Maxout { k: 2 }, true, Some(0.3)).unwrap();
        let mut rng = SeededRng::new(7);
        net.init_params(&mut rng, &InitScheme::toy()).unwrap();
        let x = normal_sample(&mut rng, &[64, 2], 5.0);
        net.calibrate_batchnorm(&x).unwrap();
        let mut plain = net.clone();
        for node in plain.nodes_mut() {
            node.dropout = None;
        }
        let (train_logits, _) = plain.clone().forward_train(&x, &mut rng).unwrap();
        let infer = net.logits(&x).unwrap();
        assert!(train_logits.max_abs_diff(&infer) < 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut net = build_mlp(2, 2, 3, ActivationSpec::Relu, true, None).unwrap();
        let mut rng = SeededRng::new(3);
        net.init_params(&mut rng, &InitScheme::uniform(0.5)).unwrap();
        let x = normal_sample(&mut rng, &[6, 2], 1.0);
        let (_, cache) = net.forward_train(&x, &mut rng).unwrap();
        let g = net.backward(&cache, &Tensor::zeros(&[6, 2])).unwrap();
        assert!(g.params.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
        assert_eq!(g.params.len(), net.params().len());
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = build_mlp(2, 1, 2, ActivationSpec::Relu, false, None).unwrap();
        let mut rng = SeededRng::new(4);
        let x = normal_sample(&mut rng, &[3, 2], 1.0);
        let (_, cache) = net.forward_train(&x, &mut rng).unwrap();
        net.init_params(&mut rng, &InitScheme::toy()).unwrap();
        let r = net.backward(&cache, &Tensor::zeros(&[3, 2]));
        assert!(matches!(r, Err(Error::State(_))));
        let (_, pcache) = net.forward_patterns(&x).unwrap();
        assert!(matches!(net.backward(&pcache, &Tensor::zeros(&[3, 2])), Err(Error::State(_))));
    }

    #[test]
    fn maxout_parameter_gradient_only_on_winning_lanes() {
        let mut net = build_mlp(2, 1, 2, ActivationSpec::Maxout { k: 3 }, false, None).unwrap();
        let mut rng = SeededRng::new(5);
        net.init_params(&mut rng, &InitScheme::uniform(1.0)).unwrap();
        let x = normal_sample(&mut rng, &[1, 2], 1.0);
        let (logits, cache) = net.forward_train(&x, &mut rng).unwrap();
        let (_, dl) = softmax_xent(&logits, &[1]).unwrap();
        let g = net.backward(&cache, &dl).unwrap();
        let pattern = cache.pattern_of(0);
        let db = g.params[1].data();
        for unit in 0..2 {
            for lane in 0..3 {
                let v = db[unit * 3 + lane];
                if lane == pattern[unit] as usize {
                    assert!(v != 0.0);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut net = build_mlp(2, 3, 4, ActivationSpec::Maxout { k: 2 }, true, None).unwrap();
        let mut rng = SeededRng::new(6);
        net.init_params(&mut rng, &InitScheme::uniform(1.0)).unwrap();
        let x = normal_sample(&mut rng, &[8, 2], 2.0);
        let labels = [0, 1, 1, 0, 1, 0, 0, 1];
        let (logits, cache) = net.clone().forward_train(&x, &mut rng).unwrap();
        let (_, dl) = softmax_xent(&logits, &labels).unwrap();
        let g = net.backward(&cache, &dl).unwrap();
        let fd = finite_diff_grad(
            |t| {
                let (l, _) = net.clone().forward_train(t, &mut SeededRng::new(0)).unwrap();
                softmax_xent(&l, &labels).unwrap().0
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(max_relative_error(&g.input, &fd, 1e-6) < 1e-4);
    }
}
