//! The graph element network: encode sampled input functions into mesh node
//! states, propagate with T rounds of message passing, decode queries by
//! interpolating node states. Also the global-aggregation output head and
//! the neural-process baseline (encoder, sum, decoder).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Checkpoint, CheckpointError, Mlp, MlpVars, Tape, Tensor, Var};
use crate::geometry::{SpaceKind, SpatialMesh};
use crate::representation::{RepKind, Representation, RepresentationError};
use crate::rng::DetRng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("channel {channel} out of range for {count} channels")]
    ChannelOutOfRange { channel: usize, count: usize },
    #[error("channel {channel} expects values of dim {expected}, got {got}")]
    ValueDimMismatch {
        channel: usize,
        expected: usize,
        got: usize,
    },
    #[error("location {0:?} is outside the model's space")]
    OutsideSpace(Vec<f64>),
    #[error("query {index} has no target")]
    MissingTarget { index: usize },
    #[error("loss over an empty query set")]
    EmptyQuerySet,
    #[error(transparent)]
    Representation(#[from] RepresentationError),
    #[error("checkpoint does not contain a {expected} spec")]
    WrongCheckpointKind { expected: &'static str },
    #[error("checkpoint parameter list does not match the spec layout")]
    ParamLayoutMismatch,
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// One sampled input function value: channel `channel` takes value `value`
/// at location `x`. Channels are 0-based in memory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSample {
    pub x: Vec<f64>,
    pub channel: usize,
    pub value: Vec<f64>,
}

/// An output-function query, optionally with its ground-truth target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySample {
    pub x: Vec<f64>,
    pub channel: usize,
    pub target: Option<Vec<f64>>,
}

/// Number of message-passing rounds matching the diameter of a k x k grid.
pub fn diameter_steps(k: usize) -> usize {
    2 * (k - 1)
}

/// Architecture of a graph element network. The mesh is supplied per call,
/// so one parameter set runs at any mesh size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub space: SpaceKind,
    /// Value dimension per input channel.
    pub input_dims: Vec<usize>,
    /// Value dimension per output channel.
    pub output_dims: Vec<usize>,
    pub latent_dim: usize,
    pub message_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub edge_hidden: usize,
    pub node_hidden: usize,
    pub rep: RepKind,
    pub temperature: f64,
}

impl GenSpec {
    /// Heat-flow setup on the unit square: channel 0 carries source values
    /// (mu, 0, 0), channel 1 boundary values (0, omega, 1), one scalar
    /// output channel.
    pub fn square_default() -> Self {
        Self {
            space: SpaceKind::UnitSquare,
            input_dims: vec![3, 3],
            output_dims: vec![1],
            latent_dim: 32,
            message_dim: 16,
            encoder_hidden: 48,
            decoder_hidden: 32,
            edge_hidden: 48,
            node_hidden: 64,
            rep: RepKind::SoftNearest,
            temperature: 1.0,
        }
    }

    /// Sphere setup: one scalar input channel (source values), one scalar
    /// output channel.
    pub fn sphere_default() -> Self {
        Self {
            space: SpaceKind::UnitSphere,
            input_dims: vec![1],
            output_dims: vec![1],
            ..Self::square_default()
        }
    }

    pub fn representation(&self) -> Representation {
        let mut rep = Representation::of_kind(self.rep);
        rep.temperature = self.temperature;
        rep
    }

    fn encoder_dims(&self, channel: usize) -> Vec<usize> {
        vec![
            self.input_dims[channel],
            self.encoder_hidden,
            self.latent_dim,
        ]
    }

    fn decoder_dims(&self, channel: usize) -> Vec<usize> {
        vec![
            self.latent_dim,
            self.decoder_hidden,
            self.output_dims[channel],
        ]
    }

    fn edge_dims(&self) -> Vec<usize> {
        vec![2 * self.latent_dim, self.edge_hidden, self.message_dim]
    }

    fn node_dims(&self) -> Vec<usize> {
        vec![
            self.latent_dim + self.message_dim,
            self.node_hidden,
            self.latent_dim,
        ]
    }
}

/// All trainable weights of a GEN.
#[derive(Clone, Debug, PartialEq)]
pub struct GenParams {
    pub spec: GenSpec,
    pub encoders: Vec<Mlp>,
    pub decoders: Vec<Mlp>,
    pub edge: Mlp,
    pub node: Mlp,
}

impl GenParams {
    pub fn init(spec: GenSpec, seed: u64) -> Self {
        let encoders = (0..spec.input_dims.len())
            .map(|c| {
                Mlp::new(
                    &spec.encoder_dims(c),
                    &mut DetRng::derive(seed, &[1, c as u64]),
                )
            })
            .collect();
        let decoders = (0..spec.output_dims.len())
            .map(|c| {
                Mlp::new(
                    &spec.decoder_dims(c),
                    &mut DetRng::derive(seed, &[2, c as u64]),
                )
            })
            .collect();
        let edge = Mlp::new(&spec.edge_dims(), &mut DetRng::derive(seed, &[3]));
        let node = Mlp::new(&spec.node_dims(), &mut DetRng::derive(seed, &[4]));
        Self {
            spec,
            encoders,
            decoders,
            edge,
            node,
        }
    }

    pub fn param_count(&self) -> usize {
        self.encoders.iter().map(Mlp::param_count).sum::<usize>()
            + self.decoders.iter().map(Mlp::param_count).sum::<usize>()
            + self.edge.param_count()
            + self.node.param_count()
    }

    pub fn for_each_param(&self, f: &mut impl FnMut(String, &Tensor)) {
        for (c, enc) in self.encoders.iter().enumerate() {
            enc.for_each_param(&format!("enc{c}"), f);
        }
        for (c, dec) in self.decoders.iter().enumerate() {
            dec.for_each_param(&format!("dec{c}"), f);
        }
        self.edge.for_each_param("edge", f);
        self.node.for_each_param("node", f);
    }

    /// Mutable references to every parameter tensor, in `for_each_param`
    /// order (the order used by tape insertion and Adam state).
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for enc in self.encoders.iter_mut() {
            out.extend(enc.params_mut());
        }
        for dec in self.decoders.iter_mut() {
            out.extend(dec.params_mut());
        }
        out.extend(self.edge.params_mut());
        out.extend(self.node.params_mut());
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        self.for_each_param(&mut |_, t| flat.extend_from_slice(t.data()));
        flat
    }

    pub fn load_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter vector length mismatch");
    }

    /// Register every parameter on the tape. `order` receives the leaf vars
    /// in `for_each_param` order for gradient extraction.
    pub fn insert(&self, tape: &mut Tape) -> (GenVars, Vec<Var>) {
        let mut order = Vec::new();
        let encoders = self
            .encoders
            .iter()
            .map(|m| m.insert(tape, &mut order))
            .collect();
        let decoders = self
            .decoders
            .iter()
            .map(|m| m.insert(tape, &mut order))
            .collect();
        let edge = self.edge.insert(tape, &mut order);
        let node = self.node.insert(tape, &mut order);
        (
            GenVars {
                encoders,
                decoders,
                edge,
                node,
            },
            order,
        )
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let spec = serde_json::json!({ "model": "gen", "gen": &self.spec });
        let mut ckpt = Checkpoint::new(Some(spec));
        self.for_each_param(&mut |name, t| ckpt.push(name, t));
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        ckpt.validate()?;
        let spec_value = ckpt
            .spec
            .as_ref()
            .and_then(|s| s.get("gen"))
            .ok_or(ModelError::WrongCheckpointKind { expected: "gen" })?;
        let spec: GenSpec =
            serde_json::from_value(spec_value.clone()).map_err(CheckpointError::Malformed)?;
        let mut params = GenParams::init(spec, 0);
        let mut expected = Vec::new();
        params.for_each_param(&mut |name, t| expected.push((name, t.shape().to_vec())));
        if expected.len() != ckpt.params.len() {
            return Err(ModelError::ParamLayoutMismatch);
        }
        for (rec, (name, shape)) in ckpt.params.iter().zip(&expected) {
            if &rec.name != name || &rec.shape != shape {
                return Err(ModelError::ParamLayoutMismatch);
            }
        }
        let flat: Vec<f64> = ckpt
            .params
            .iter()
            .flat_map(|r| r.data.iter().copied())
            .collect();
        params.load_flat(&flat);
        Ok(params)
    }
}

/// Tape handles for one inserted parameter set.
pub struct GenVars {
    pub encoders: Vec<MlpVars>,
    pub decoders: Vec<MlpVars>,
    pub edge: MlpVars,
    pub node: MlpVars,
}

fn check_samples(spec: &GenSpec, samples: &[InputSample]) -> Result<(), ModelError> {
    for s in samples {
        if s.channel >= spec.input_dims.len() {
            return Err(ModelError::ChannelOutOfRange {
                channel: s.channel,
                count: spec.input_dims.len(),
            });
        }
        if s.value.len() != spec.input_dims[s.channel] {
            return Err(ModelError::ValueDimMismatch {
                channel: s.channel,
                expected: spec.input_dims[s.channel],
                got: s.value.len(),
            });
        }
        if !spec.space.contains(&s.x) {
            return Err(ModelError::OutsideSpace(s.x.clone()));
        }
    }
    Ok(())
}

fn check_queries(spec: &GenSpec, queries: &[QuerySample]) -> Result<(), ModelError> {
    for q in queries {
        if q.channel >= spec.output_dims.len() {
            return Err(ModelError::ChannelOutOfRange {
                channel: q.channel,
                count: spec.output_dims.len(),
            });
        }
        if !spec.space.contains(&q.x) {
            return Err(ModelError::OutsideSpace(q.x.clone()));
        }
    }
    Ok(())
}

/// Lexicographic content order (location, then value); float sums taken in
/// this order make outputs bit-identical under input permutation.
fn canonical_sample_order(samples: &[InputSample], channel: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].channel == channel)
        .collect();
    idx.sort_by(|&a, &b| {
        let (sa, sb) = (&samples[a], &samples[b]);
        sa.x.iter()
            .chain(sa.value.iter())
            .zip(sb.x.iter().chain(sb.value.iter()))
            .map(|(va, vb)| va.total_cmp(vb))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

/// z0[l] = sum over samples of r(x)_l * e_channel(value): the weighted sum
/// of encoded inputs, batched per channel.
pub fn encode_inputs(
    tape: &mut Tape,
    vars: &GenVars,
    spec: &GenSpec,
    mesh: &SpatialMesh,
    positions: Var,
    samples: &[InputSample],
) -> Result<Var, ModelError> {
    check_samples(spec, samples)?;
    let n = mesh.node_count();
    let rep = spec.representation();
    let xs: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
    let weights = rep.weight_matrix_var(tape, &xs, positions, mesh)?;

    let mut z0: Option<Var> = None;
    for channel in 0..spec.input_dims.len() {
        let idx = canonical_sample_order(samples, channel);
        if idx.is_empty() {
            continue;
        }
        let vdim = spec.input_dims[channel];
        let values: Vec<f64> = idx
            .iter()
            .flat_map(|&i| samples[i].value.iter().copied())
            .collect();
        let values = tape.leaf(Tensor::matrix(idx.len(), vdim, values));
        let encoded = vars.encoders[channel].forward(tape, values); // (m_c x L)
        let w_c = tape.gather_rows(weights, &idx); // (m_c x n)
        let w_t = tape.transpose(w_c); // (n x m_c)
        let contribution = tape.matmul(w_t, encoded); // (n x L)
        z0 = Some(match z0 {
            Some(acc) => tape.add(acc, contribution),
            None => contribution,
        });
    }
    Ok(z0.unwrap_or_else(|| tape.leaf(Tensor::zeros(vec![n, spec.latent_dim]))))
}

/// One round of message passing: an edge-module evaluation per directed
/// edge, sum aggregation of incoming messages, a node-module update per
/// node.
pub fn message_passing_step(tape: &mut Tape, vars: &GenVars, mesh: &SpatialMesh, z: Var) -> Var {
    let n = mesh.node_count();
    let src: Vec<usize> = mesh.directed_edges().iter().map(|&(s, _)| s).collect();
    let dst: Vec<usize> = mesh.directed_edges().iter().map(|&(_, d)| d).collect();
    let h_src = tape.gather_rows(z, &src);
    let h_dst = tape.gather_rows(z, &dst);
    let edge_in = tape.concat_cols(h_src, h_dst);
    let messages = vars.edge.forward(tape, edge_in); // (E x M)
    let aggregated = tape.scatter_add_rows(messages, &dst, n); // (n x M)
    let node_in = tape.concat_cols(z, aggregated);
    vars.node.forward(tape, node_in)
}

/// Predictions for one query group, all on the same output channel.
pub struct QueryGroup {
    pub channel: usize,
    /// Indices into the original query list.
    pub query_indices: Vec<usize>,
    pub preds: Var,
}

pub struct GenForward {
    /// Final node states z^T (n x latent).
    pub node_states: Var,
    pub groups: Vec<QueryGroup>,
    query_count: usize,
}

impl GenForward {
    /// Predictions in original query order.
    pub fn predictions(&self, tape: &Tape) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.query_count];
        for g in &self.groups {
            let t = tape.value(g.preds);
            for (row, &qi) in g.query_indices.iter().enumerate() {
                out[qi] = t.row(row).to_vec();
            }
        }
        out
    }
}

/// Decode queries from final node states: prediction = d_j(sum_l r(x)_l z_l).
pub fn decode_queries(
    tape: &mut Tape,
    vars: &GenVars,
    spec: &GenSpec,
    mesh: &SpatialMesh,
    positions: Var,
    z_final: Var,
    queries: &[QuerySample],
) -> Result<GenForward, ModelError> {
    check_queries(spec, queries)?;
    let rep = spec.representation();
    let xs: Vec<Vec<f64>> = queries.iter().map(|q| q.x.clone()).collect();
    let weights = rep.weight_matrix_var(tape, &xs, positions, mesh)?;
    let mut groups = Vec::new();
    for channel in 0..spec.output_dims.len() {
        let idx: Vec<usize> = (0..queries.len())
            .filter(|&i| queries[i].channel == channel)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let w_c = tape.gather_rows(weights, &idx); // (q_c x n)
        let latent_at_x = tape.matmul(w_c, z_final); // (q_c x L)
        let preds = vars.decoders[channel].forward(tape, latent_at_x);
        groups.push(QueryGroup {
            channel,
            query_indices: idx,
            preds,
        });
    }
    Ok(GenForward {
        node_states: z_final,
        groups,
        query_count: queries.len(),
    })
}

/// Single-query convenience wrapper around `decode_queries`.
pub fn decode_query(
    tape: &mut Tape,
    vars: &GenVars,
    spec: &GenSpec,
    mesh: &SpatialMesh,
    positions: Var,
    z_final: Var,
    query: &QuerySample,
) -> Result<Var, ModelError> {
    let fwd = decode_queries(
        tape,
        vars,
        spec,
        mesh,
        positions,
        z_final,
        std::slice::from_ref(query),
    )?;
    Ok(fwd.groups[0].preds)
}

/// Full pipeline: encode -> T message-passing rounds -> decode.
/// Differentiable with respect to every parameter and (for the soft-nearest
/// representation) the node positions.
pub fn gen_forward(
    tape: &mut Tape,
    vars: &GenVars,
    spec: &GenSpec,
    mesh: &SpatialMesh,
    positions: Var,
    samples: &[InputSample],
    queries: &[QuerySample],
    t_steps: usize,
) -> Result<GenForward, ModelError> {
    let mut z = encode_inputs(tape, vars, spec, mesh, positions, samples)?;
    for _ in 0..t_steps {
        z = message_passing_step(tape, vars, mesh, z);
    }
    decode_queries(tape, vars, spec, mesh, positions, z, queries)
}

/// Global-output head: decoder applied to the sum of all node states.
pub fn gen_global_forward(
    tape: &mut Tape,
    vars: &GenVars,
    spec: &GenSpec,
    mesh: &SpatialMesh,
    positions: Var,
    samples: &[InputSample],
    t_steps: usize,
) -> Result<Var, ModelError> {
    let mut z = encode_inputs(tape, vars, spec, mesh, positions, samples)?;
    for _ in 0..t_steps {
        z = message_passing_step(tape, vars, mesh, z);
    }
    let pooled = tape.sum_rows(z); // (1 x L)
    Ok(vars.decoders[0].forward(tape, pooled))
}

/// Mean over queries of the squared distance between prediction and target.
pub fn mse_loss(
    tape: &mut Tape,
    fwd: &GenForward,
    queries: &[QuerySample],
) -> Result<Var, ModelError> {
    if queries.is_empty() {
        return Err(ModelError::EmptyQuerySet);
    }
    let mut total: Option<Var> = None;
    for g in &fwd.groups {
        let out_dim = tape.value(g.preds).dims2().1;
        let mut tdata = Vec::with_capacity(g.query_indices.len() * out_dim);
        for &qi in &g.query_indices {
            let target = queries[qi]
                .target
                .as_ref()
                .ok_or(ModelError::MissingTarget { index: qi })?;
            tdata.extend_from_slice(target);
        }
        let targets = tape.leaf(Tensor::matrix(g.query_indices.len(), out_dim, tdata));
        let diff = tape.sub(g.preds, targets);
        let sq = tape.mul(diff, diff);
        let s = tape.sum(sq);
        total = Some(match total {
            Some(acc) => tape.add(acc, s),
            None => s,
        });
    }
    let total = total.ok_or(ModelError::EmptyQuerySet)?;
    Ok(tape.scale(total, 1.0 / queries.len() as f64))
}

// ---------------------------------------------------------------------------
// Neural-process baseline: encode (x, channel one-hot, value) per sample,
// sum, concatenate the query location, decode.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NpSpec {
    pub space: SpaceKind,
    pub n_channels: usize,
    pub value_dim: usize,
    pub output_dim: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    /// Feed sample coordinates to the encoder.
    pub encode_coords: bool,
    /// Feed the channel one-hot to the encoder.
    pub encode_channel: bool,
    /// Concatenate the query location to the aggregated code before decoding.
    pub concat_query: bool,
}

impl NpSpec {
    /// Capacity chosen to land within a few percent of the default GEN
    /// parameter count, so baseline comparisons are parameter-matched.
    pub fn default_for(space: SpaceKind, n_channels: usize, value_dim: usize) -> Self {
        Self {
            space,
            n_channels,
            value_dim,
            output_dim: 1,
            latent_dim: 56,
            hidden: 56,
            encode_coords: true,
            encode_channel: true,
            concat_query: true,
        }
    }

    fn encoder_input_dim(&self) -> usize {
        let mut d = self.value_dim;
        if self.encode_coords {
            d += self.space.dim();
        }
        if self.encode_channel {
            d += self.n_channels;
        }
        d
    }

    fn encoder_dims(&self) -> Vec<usize> {
        vec![
            self.encoder_input_dim(),
            self.hidden,
            self.hidden,
            self.latent_dim,
        ]
    }

    fn decoder_dims(&self) -> Vec<usize> {
        let input = if self.concat_query {
            self.latent_dim + self.space.dim()
        } else {
            self.latent_dim
        };
        vec![input, self.hidden, self.hidden, self.output_dim]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NpParams {
    pub spec: NpSpec,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl NpParams {
    pub fn init(spec: NpSpec, seed: u64) -> Self {
        let encoder = Mlp::new(&spec.encoder_dims(), &mut DetRng::derive(seed, &[11]));
        let decoder = Mlp::new(&spec.decoder_dims(), &mut DetRng::derive(seed, &[12]));
        Self {
            spec,
            encoder,
            decoder,
        }
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    pub fn for_each_param(&self, f: &mut impl FnMut(String, &Tensor)) {
        self.encoder.for_each_param("enc", f);
        self.decoder.for_each_param("dec", f);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        out.extend(self.encoder.params_mut());
        out.extend(self.decoder.params_mut());
        out
    }

    pub fn insert(&self, tape: &mut Tape) -> (NpVars, Vec<Var>) {
        let mut order = Vec::new();
        let encoder = self.encoder.insert(tape, &mut order);
        let decoder = self.decoder.insert(tape, &mut order);
        (NpVars { encoder, decoder }, order)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let spec = serde_json::json!({ "model": "np", "np": &self.spec });
        let mut ckpt = Checkpoint::new(Some(spec));
        self.for_each_param(&mut |name, t| ckpt.push(name, t));
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        ckpt.validate()?;
        let spec_value = ckpt
            .spec
            .as_ref()
            .and_then(|s| s.get("np"))
            .ok_or(ModelError::WrongCheckpointKind { expected: "np" })?;
        let spec: NpSpec =
            serde_json::from_value(spec_value.clone()).map_err(CheckpointError::Malformed)?;
        let mut params = NpParams::init(spec, 0);
        let flat: Vec<f64> = ckpt
            .params
            .iter()
            .flat_map(|r| r.data.iter().copied())
            .collect();
        let mut offset = 0;
        for t in params.params_mut() {
            let n = t.len();
            if offset + n > flat.len() {
                return Err(ModelError::ParamLayoutMismatch);
            }
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        if offset != flat.len() {
            return Err(ModelError::ParamLayoutMismatch);
        }
        Ok(params)
    }
}

pub struct NpVars {
    pub encoder: MlpVars,
    pub decoder: MlpVars,
}

/// Predictions (q x out_dim) of the baseline for a batch of queries.
pub fn np_forward(
    tape: &mut Tape,
    vars: &NpVars,
    spec: &NpSpec,
    samples: &[InputSample],
    query_locations: &[Vec<f64>],
) -> Result<Var, ModelError> {
    let dim = spec.space.dim();
    let agg = if samples.is_empty() {
        tape.leaf(Tensor::zeros(vec![1, spec.latent_dim]))
    } else {
        // canonical content order keeps the sum permutation-invariant to
        // the bit
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| {
            let (sa, sb) = (&samples[a], &samples[b]);
            sa.channel.cmp(&sb.channel).then_with(|| {
                sa.x.iter()
                    .chain(sa.value.iter())
                    .zip(sb.x.iter().chain(sb.value.iter()))
                    .map(|(va, vb)| va.total_cmp(vb))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let in_dim = spec.encoder_input_dim();
        let mut rows = Vec::with_capacity(samples.len() * in_dim);
        for s in order.into_iter().map(|i| &samples[i]) {
            if s.channel >= spec.n_channels {
                return Err(ModelError::ChannelOutOfRange {
                    channel: s.channel,
                    count: spec.n_channels,
                });
            }
            if s.value.len() != spec.value_dim {
                return Err(ModelError::ValueDimMismatch {
                    channel: s.channel,
                    expected: spec.value_dim,
                    got: s.value.len(),
                });
            }
            if spec.encode_coords {
                rows.extend_from_slice(&s.x);
            }
            if spec.encode_channel {
                for c in 0..spec.n_channels {
                    rows.push(if c == s.channel { 1.0 } else { 0.0 });
                }
            }
            rows.extend_from_slice(&s.value);
        }
        let input = tape.leaf(Tensor::matrix(samples.len(), in_dim, rows));
        let encoded = vars.encoder.forward(tape, input); // (m x L)
        tape.sum_rows(encoded) // (1 x L), permutation-invariant
    };
    let q = query_locations.len();
    let tiled = tape.repeat_rows(agg, q);
    let dec_in = if spec.concat_query {
        let flat: Vec<f64> = query_locations
            .iter()
            .flat_map(|x| x.iter().copied())
            .collect();
        let coords = tape.leaf(Tensor::matrix(q, dim, flat));
        tape.concat_cols(coords, tiled)
    } else {
        tiled
    };
    Ok(vars.decoder.forward(tape, dec_in))
}
