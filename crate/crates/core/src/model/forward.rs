use rand::Rng;

use super::config::ModelConfig;
use super::params::{BatchNormSlots, LinearSlots, ModelParams};
use crate::error::{invalid, Result};
use crate::tensor::{BatchMoments, Element, Mode, Tape, Tensor, Var};

/// Points in the network whose activations a [`ForwardTrace`] records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Input,
    Delta,
    Projection,
    Block(usize),
    /// Pooled and layer-normalized `[B, channels, D]` map.
    Pooled,
    Embedding,
    Logits,
}

/// Per-stage activations of one forward pass, as handles into its tape.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    pub stages: Vec<(Stage, Var)>,
}

impl ForwardTrace {
    pub fn get(&self, stage: Stage) -> Option<Var> {
        self.stages.iter().find(|(s, _)| *s == stage).map(|&(_, v)| v)
    }

    pub fn shapes<E: Element>(&self, tape: &Tape<E>) -> Vec<(Stage, Vec<usize>)> {
        self.stages.iter().map(|&(s, v)| (s, tape.shape(v).to_vec())).collect()
    }

    pub fn snapshot<E: Element>(&self, tape: &Tape<E>, stage: Stage) -> Option<Tensor<E>> {
        self.get(stage).map(|v| tape.value(v).clone())
    }

    fn record(&mut self, on: bool, stage: Stage, v: Var) {
        if on {
            self.stages.push((stage, v));
        }
    }
}

/// Batch statistics produced by one train-mode batch norm.
#[derive(Debug, Clone)]
pub struct MomentUpdate {
    pub(crate) mean_slot: usize,
    pub(crate) var_slot: usize,
    pub moments: BatchMoments,
}

pub struct ForwardOutput {
    pub logits: Var,
    /// One handle per tensor of [`ModelParams::tensors`], in the same order.
    pub param_vars: Vec<Var>,
    pub moments: Vec<MomentUpdate>,
    pub trace: Option<ForwardTrace>,
}

impl<E: Element> ModelParams<E> {
    /// Fold the batch statistics of a train-mode pass into the running
    /// estimates.
    pub fn absorb(&mut self, updates: &[MomentUpdate]) {
        for u in updates {
            self.absorb_moments(u.mean_slot, u.var_slot, &u.moments);
        }
    }
}

/// Parameter-free front end: `d(t) = x(t) - x(t - S)`, returned as
/// `[relu(d), relu(-d)]` stacked on the channel axis.
pub fn bidirectional_delta<E: Element>(tape: &mut Tape<E>, x: Var, step: usize) -> Result<Var> {
    let d = tape.time_diff(x, step)?;
    let pos = tape.relu(d)?;
    let neg_d = tape.neg(d)?;
    let neg = tape.relu(neg_d)?;
    tape.concat_channels(pos, neg)
}

struct Ctx<'a, E: Element, R: ?Sized> {
    tape: &'a mut Tape<E>,
    params: &'a ModelParams<E>,
    vars: &'a [Var],
    mode: Mode,
    rng: &'a mut R,
    moments: Vec<MomentUpdate>,
    trace: ForwardTrace,
    tracing: bool,
}

impl<E: Element, R: Rng + ?Sized> Ctx<'_, E, R> {
    fn conv(&mut self, x: Var, s: LinearSlots, groups: usize, padding: usize) -> Result<Var> {
        self.tape.conv1d_grouped(x, self.vars[s.weight], self.vars[s.bias], groups, padding)
    }

    fn linear(&mut self, x: Var, s: LinearSlots) -> Result<Var> {
        self.tape.linear(x, self.vars[s.weight], self.vars[s.bias])
    }

    fn batchnorm(&mut self, x: Var, s: BatchNormSlots) -> Result<Var> {
        let (out, moments) = self.tape.batchnorm1d(
            x,
            self.vars[s.gamma],
            self.vars[s.beta],
            self.params.slot(s.mean).data(),
            self.params.slot(s.var).data(),
            self.mode,
        )?;
        if let Some(moments) = moments {
            self.moments.push(MomentUpdate { mean_slot: s.mean, var_slot: s.var, moments });
        }
        Ok(out)
    }

    fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        self.tape.dropout(x, p, self.mode, self.rng)
    }

    fn gtc(&mut self, x: Var) -> Result<Var> {
        let config = self.params.config().clone();
        let slots = self.params.layout.gtc.clone().expect("gtc layout present");
        let channels = config.stage_channels();
        let maps = config.feature_maps();
        let mut h = self.conv(x, slots.projection, channels, 0)?;
        self.trace.record(self.tracing, Stage::Projection, h);
        for (i, block) in slots.blocks.iter().enumerate() {
            let c = self.conv(h, block.conv, maps, config.conv_padding())?;
            let n = self.batchnorm(c, block.bn)?;
            let g = self.tape.gelu(n)?;
            let pw = self.conv(g, block.pointwise, config.pointwise_group_count(), 0)?;
            let f = self.dropout(pw, config.dropout_conv)?;
            h = self.tape.add(h, f)?;
            self.trace.record(self.tracing, Stage::Block(i), h);
        }
        let shape = self.tape.shape(h).to_vec();
        let h = self.tape.reshape(h, &[shape[0], channels, config.hidden_depth, shape[2]])?;
        let pooled = self.tape.avg_pool_time(h)?;
        let normed = self.tape.layernorm_lastdim(pooled, self.vars[slots.norm_gamma], self.vars[slots.norm_beta])?;
        self.trace.record(self.tracing, Stage::Pooled, normed);
        Ok(normed)
    }

    fn mlp(&mut self, e: Var) -> Result<Var> {
        let config = self.params.config().clone();
        let slots = self.params.layout.mlp.clone();
        let mut h = e;
        for i in 0..2 {
            let l = self.linear(h, slots.fc[i])?;
            let n = self.batchnorm(l, slots.bn[i])?;
            let a = self.tape.leaky_relu(n, config.leaky_slope)?;
            h = self.dropout(a, config.dropout_mlp)?;
        }
        self.linear(h, slots.fc[2])
    }
}

/// Run the network on `x` (`[B, C, T]`) with every parameter bound as a
/// leaf. Parameters require gradients in train mode only. `rng` drives the
/// dropout masks and is untouched in eval mode.
pub fn forward<E: Element, R: Rng + ?Sized>(
    tape: &mut Tape<E>,
    params: &ModelParams<E>,
    x: Var,
    mode: Mode,
    rng: &mut R,
    trace: bool,
) -> Result<ForwardOutput> {
    let train = mode == Mode::Train;
    let vars: Vec<Var> = params
        .tensors()
        .iter()
        .map(|t| tape.leaf(t.value.clone(), train && t.kind.is_learnable()))
        .collect();
    forward_bound(tape, params, &vars, x, mode, rng, trace)
}

/// [`forward`] with caller-bound parameter handles, one per tensor of
/// `params` (used by gradient checks that own the leaves). Running
/// statistics are always read from `params`.
pub fn forward_bound<E: Element, R: Rng + ?Sized>(
    tape: &mut Tape<E>,
    params: &ModelParams<E>,
    vars: &[Var],
    x: Var,
    mode: Mode,
    rng: &mut R,
    trace: bool,
) -> Result<ForwardOutput> {
    let config: &ModelConfig = params.config();
    if vars.len() != params.tensors().len() {
        return Err(invalid(format!("expected {} parameter handles, got {}", params.tensors().len(), vars.len())));
    }
    let shape = tape.shape(x).to_vec();
    if shape.len() != 3 || shape[1] != config.n_channels || shape[2] != config.n_timesteps {
        return Err(invalid(format!(
            "model expects input [B, {}, {}], got {shape:?}",
            config.n_channels, config.n_timesteps
        )));
    }
    let mut ctx = Ctx {
        tape,
        params,
        vars,
        mode,
        rng,
        moments: Vec::new(),
        trace: ForwardTrace::default(),
        tracing: trace,
    };
    ctx.trace.record(trace, Stage::Input, x);
    let mut h = x;
    if config.variant.uses_delta() {
        h = bidirectional_delta(ctx.tape, h, config.delta_step)?;
        ctx.trace.record(trace, Stage::Delta, h);
    }
    if config.variant.uses_gtc() {
        h = ctx.gtc(h)?;
    }
    let e = ctx.tape.flatten(h)?;
    ctx.trace.record(trace, Stage::Embedding, e);
    let logits = ctx.mlp(e)?;
    ctx.trace.record(trace, Stage::Logits, logits);
    Ok(ForwardOutput {
        logits,
        param_vars: vars.to_vec(),
        moments: ctx.moments,
        trace: trace.then_some(ctx.trace),
    })
}

/// Eval-mode logits for a batch `[B, C, T]`.
pub fn predict_logits<E: Element>(params: &ModelParams<E>, x: &Tensor<E>) -> Result<Tensor<E>> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    // Eval mode draws nothing from the generator.
    let mut unused = crate::rng::SeedStreams::new(0).rng(crate::rng::Stream::Dropout, 0);
    let out = forward(&mut tape, params, xv, Mode::Eval, &mut unused, false)?;
    Ok(tape.value(out.logits).clone())
}
