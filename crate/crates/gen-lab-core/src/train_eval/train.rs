//! Training loops. One scenario per gradient step; for graph models the
//! mesh size cycles per step so a single parameter set learns every
//! resolution. Fixed seed implies a bit-identical trajectory.

use std::path::PathBuf;
use std::time::Instant;

use crate::autodiff::{adam_step, AdamState, Tape, Tensor};
use crate::datasets::{Dataset, TaskKind};
use crate::gen_model::{
    diameter_steps, gen_forward, gen_global_forward, mse_loss, np_forward, GenParams, GenSpec,
    InputSample, NpParams, NpSpec, QuerySample,
};
use crate::geometry::{sphere_mesh, square_grid_mesh, SpaceKind, SpatialMesh};
use crate::rng::DetRng;

use super::TrainError;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Mesh orders cycled per gradient step (graph models only).
    pub mesh_sizes: Vec<usize>,
    /// Scenarios averaged into one gradient step. One scenario per step is
    /// the leanest setting; at desk scale a handful per step tames the
    /// gradient noise of deep message-passing unrolls.
    pub scenarios_per_step: usize,
    /// Fraction of the initial learning rate reached (by cosine decay) at
    /// the final epoch; 1.0 keeps the rate constant.
    pub final_lr_fraction: f64,
    pub seed: u64,
    /// When set, a checkpoint is written atomically after every epoch.
    pub checkpoint_path: Option<PathBuf>,
}

impl TrainConfig {
    /// Graph-model defaults (epoch budget scaled down with the dataset).
    pub fn gen_default(seed: u64) -> Self {
        Self {
            epochs: 50,
            learning_rate: 3e-3,
            mesh_sizes: vec![2, 3, 4, 5],
            scenarios_per_step: 1,
            final_lr_fraction: 1.0,
            seed,
            checkpoint_path: None,
        }
    }

    /// Learning rate for an epoch under the cosine schedule.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let f = self.final_lr_fraction.clamp(0.0, 1.0);
        if f >= 1.0 || self.epochs <= 1 {
            return self.learning_rate;
        }
        let progress = epoch as f64 / (self.epochs - 1) as f64;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.learning_rate * (f + (1.0 - f) * cosine)
    }

    /// Baseline defaults: same budget scaling as the graph model (which
    /// divides its epochs across the mesh configurations).
    pub fn np_default(seed: u64) -> Self {
        Self {
            epochs: 300,
            mesh_sizes: vec![],
            ..Self::gen_default(seed)
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    /// Mean per-scenario loss per epoch.
    pub loss_history: Vec<f64>,
    pub wall_seconds: f64,
}

pub(crate) fn mesh_for(space: SpaceKind, k: usize) -> Result<SpatialMesh, TrainError> {
    Ok(match space {
        SpaceKind::UnitSquare => square_grid_mesh(k)?,
        SpaceKind::UnitSphere => sphere_mesh(k)?,
    })
}

fn train_scenarios(dataset: &Dataset) -> Result<Vec<(usize, usize)>, TrainError> {
    let mut order = Vec::new();
    for house in dataset.train() {
        for s in 0..house.scenarios.len() {
            order.push((house.id, s));
        }
    }
    if order.is_empty() {
        return Err(TrainError::EmptyTrainSplit);
    }
    Ok(order)
}

/// Train a graph element network on the dataset's train split.
pub fn train_gen(
    dataset: &Dataset,
    spec: &GenSpec,
    cfg: &TrainConfig,
) -> Result<(GenParams, TrainRun), TrainError> {
    assert!(
        !cfg.mesh_sizes.is_empty(),
        "graph training needs at least one mesh size"
    );
    let start = Instant::now();
    let mut params = GenParams::init(spec.clone(), cfg.seed);
    let shapes: Vec<Vec<usize>> = {
        let mut s = Vec::new();
        params.for_each_param(&mut |_, t| s.push(t.shape().to_vec()));
        s
    };
    let mut adam = AdamState::new(cfg.learning_rate, &shapes);
    let meshes: Vec<(usize, SpatialMesh)> = cfg
        .mesh_sizes
        .iter()
        .map(|&k| Ok((k, mesh_for(spec.space, k)?)))
        .collect::<Result<_, TrainError>>()?;

    let mut order = train_scenarios(dataset)?;
    let mut shuffle_rng = DetRng::derive(cfg.seed, &[7001]);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch = 0usize;
    let per_step = cfg.scenarios_per_step.max(1);

    for epoch in 0..cfg.epochs {
        adam.set_learning_rate(cfg.lr_at(epoch));
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (step, chunk) in order.chunks(per_step).enumerate() {
            // one mesh size per batch, cycled
            let (k, mesh) = &meshes[batch % meshes.len()];
            batch += 1;
            let mut grad_sum: Option<Vec<Tensor>> = None;
            for &(house, scenario) in chunk {
                let sc = &dataset.houses[house].scenarios[scenario];
                let mut tape = Tape::new();
                let (vars, leaf_order) = params.insert(&mut tape);
                let positions = tape.leaf(mesh.positions_tensor());
                let t_steps = diameter_steps(*k);
                let loss = match dataset.manifest.task {
                    TaskKind::Field => {
                        let fwd = gen_forward(
                            &mut tape,
                            &vars,
                            spec,
                            mesh,
                            positions,
                            &sc.inputs,
                            &sc.queries,
                            t_steps,
                        )?;
                        mse_loss(&mut tape, &fwd, &sc.queries)?
                    }
                    TaskKind::GlobalIntegral => {
                        let pred = gen_global_forward(
                            &mut tape, &vars, spec, mesh, positions, &sc.inputs, t_steps,
                        )?;
                        global_mse(&mut tape, pred, &sc.queries)?
                    }
                };
                let loss_value =
                    tape.scalar_value(loss)
                        .map_err(|source| TrainError::NonFiniteLoss {
                            epoch,
                            step,
                            house,
                            scenario,
                            mesh_k: *k,
                            source,
                        })?;
                let grads = tape.backward(loss)?;
                match &mut grad_sum {
                    None => {
                        grad_sum = Some(
                            leaf_order
                                .iter()
                                .map(|&v| grads.get_or_zeros(v, tape.value(v).shape()))
                                .collect(),
                        )
                    }
                    Some(acc) => {
                        for (a, &v) in acc.iter_mut().zip(&leaf_order) {
                            if let Some(g) = grads.get(v) {
                                for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                                    *x += y;
                                }
                            }
                        }
                    }
                }
                epoch_loss += loss_value;
            }
            let mut grad_tensors = grad_sum.expect("chunks are non-empty");
            if chunk.len() > 1 {
                let inv = 1.0 / chunk.len() as f64;
                for g in &mut grad_tensors {
                    for v in g.data_mut() {
                        *v *= inv;
                    }
                }
            }
            adam_step(&mut params.params_mut(), &grad_tensors, &mut adam)?;
        }
        history.push(epoch_loss / order.len() as f64);
        if let Some(path) = &cfg.checkpoint_path {
            params.to_checkpoint().save(path)?;
        }
    }
    let run = TrainRun {
        loss_history: history,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((params, run))
}

fn global_mse(
    tape: &mut Tape,
    pred: crate::autodiff::Var,
    queries: &[QuerySample],
) -> Result<crate::autodiff::Var, TrainError> {
    let target = queries
        .first()
        .and_then(|q| q.target.as_ref())
        .ok_or(TrainError::EmptyQuerySet)?;
    let t = tape.leaf(Tensor::matrix(1, target.len(), target.clone()));
    let diff = tape.sub(pred, t);
    let sq = tape.mul(diff, diff);
    Ok(tape.sum(sq))
}

/// Train the neural-process baseline on the dataset's train split.
pub fn train_np(
    dataset: &Dataset,
    spec: &NpSpec,
    cfg: &TrainConfig,
) -> Result<(NpParams, TrainRun), TrainError> {
    let start = Instant::now();
    let mut params = NpParams::init(spec.clone(), cfg.seed);
    let shapes: Vec<Vec<usize>> = {
        let mut s = Vec::new();
        params.for_each_param(&mut |_, t| s.push(t.shape().to_vec()));
        s
    };
    let mut adam = AdamState::new(cfg.learning_rate, &shapes);
    let mut order = train_scenarios(dataset)?;
    let mut shuffle_rng = DetRng::derive(cfg.seed, &[7002]);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        adam.set_learning_rate(cfg.lr_at(epoch));
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (step, &(house, scenario)) in order.iter().enumerate() {
            let sc = &dataset.houses[house].scenarios[scenario];
            let mut tape = Tape::new();
            let (vars, leaf_order) = params.insert(&mut tape);
            let locations: Vec<Vec<f64>> = sc.queries.iter().map(|q| q.x.clone()).collect();
            let preds = np_forward(&mut tape, &vars, spec, &sc.inputs, &locations)?;
            let loss = np_mse(&mut tape, preds, &sc.queries)?;
            let loss_value =
                tape.scalar_value(loss)
                    .map_err(|source| TrainError::NonFiniteLoss {
                        epoch,
                        step,
                        house,
                        scenario,
                        mesh_k: 0,
                        source,
                    })?;
            let grads = tape.backward(loss)?;
            let grad_tensors: Vec<Tensor> = leaf_order
                .iter()
                .map(|&v| grads.get_or_zeros(v, tape.value(v).shape()))
                .collect();
            adam_step(&mut params.params_mut(), &grad_tensors, &mut adam)?;
            epoch_loss += loss_value;
        }
        history.push(epoch_loss / order.len() as f64);
        if let Some(path) = &cfg.checkpoint_path {
            params.to_checkpoint().save(path)?;
        }
    }
    let run = TrainRun {
        loss_history: history,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((params, run))
}

fn np_mse(
    tape: &mut Tape,
    preds: crate::autodiff::Var,
    queries: &[QuerySample],
) -> Result<crate::autodiff::Var, TrainError> {
    if queries.is_empty() {
        return Err(TrainError::EmptyQuerySet);
    }
    let out_dim = tape.value(preds).dims2().1;
    let mut tdata = Vec::with_capacity(queries.len() * out_dim);
    for q in queries {
        let t = q.target.as_ref().ok_or(TrainError::EmptyQuerySet)?;
        tdata.extend_from_slice(t);
    }
    let targets = tape.leaf(Tensor::matrix(queries.len(), out_dim, tdata));
    let diff = tape.sub(preds, targets);
    let sq = tape.mul(diff, diff);
    let s = tape.sum(sq);
    Ok(tape.scale(s, 1.0 / queries.len() as f64))
}

/// Scalar loss of a GEN with explicit node positions (connectivity taken
/// from `mesh` and held fixed). Drives finite-difference gradient checks.
pub fn gen_scalar_loss(
    params: &GenParams,
    mesh: &SpatialMesh,
    positions: &Tensor,
    samples: &[InputSample],
    queries: &[QuerySample],
    t_steps: usize,
) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let (vars, _) = params.insert(&mut tape);
    let pos = tape.leaf(positions.clone());
    let fwd = gen_forward(
        &mut tape,
        &vars,
        &params.spec,
        mesh,
        pos,
        samples,
        queries,
        t_steps,
    )?;
    let loss = mse_loss(&mut tape, &fwd, queries)?;
    Ok(tape.scalar_value(loss)?)
}

/// Loss plus analytic gradients for every module parameter (flat, in
/// checkpoint order) and every node coordinate.
pub fn gen_loss_and_grads(
    params: &GenParams,
    mesh: &SpatialMesh,
    positions: &Tensor,
    samples: &[InputSample],
    queries: &[QuerySample],
    t_steps: usize,
) -> Result<(f64, Vec<f64>, Vec<f64>), TrainError> {
    let mut tape = Tape::new();
    let (vars, leaf_order) = params.insert(&mut tape);
    let pos = tape.leaf(positions.clone());
    let fwd = gen_forward(
        &mut tape,
        &vars,
        &params.spec,
        mesh,
        pos,
        samples,
        queries,
        t_steps,
    )?;
    let loss = mse_loss(&mut tape, &fwd, queries)?;
    let loss_value = tape.scalar_value(loss)?;
    let grads = tape.backward(loss)?;
    let mut flat = Vec::new();
    for &v in &leaf_order {
        flat.extend_from_slice(grads.get_or_zeros(v, tape.value(v).shape()).data());
    }
    let pos_grad = grads.get_or_zeros(pos, positions.shape()).into_data();
    Ok((loss_value, flat, pos_grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_dataset, GenerateConfig};
    use crate::representation::RepKind;

    fn tiny_dataset(seed: u64) -> Dataset {
        let cfg = GenerateConfig {
            houses: 2,
            scenarios_per_house: 2,
            train_houses: 1,
            oracle_resolution: 17,
            inputs_per_scenario: 16,
            queries_per_scenario: 8,
            test_queries_per_scenario: 8,
            ..GenerateConfig::square_desk()
        };
        generate_dataset(&cfg, seed).unwrap()
    }

    fn tiny_spec() -> GenSpec {
        GenSpec {
            latent_dim: 8,
            message_dim: 4,
            encoder_hidden: 8,
            decoder_hidden: 8,
            edge_hidden: 8,
            node_hidden: 8,
            rep: RepKind::SoftNearest,
            ..GenSpec::square_default()
        }
    }

    #[test]
    fn fixed_seed_gives_bit_identical_trajectories() {
        let ds = tiny_dataset(1);
        let cfg = TrainConfig {
            epochs: 3,
            mesh_sizes: vec![2, 3],
            ..TrainConfig::gen_default(5)
        };
        let (p1, r1) = train_gen(&ds, &tiny_spec(), &cfg).unwrap();
        let (p2, r2) = train_gen(&ds, &tiny_spec(), &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1.loss_history, r2.loss_history);
    }

    #[test]
    fn zero_learning_rate_leaves_params_bit_identical() {
        let ds = tiny_dataset(2);
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            mesh_sizes: vec![2],
            ..TrainConfig::gen_default(3)
        };
        let spec = tiny_spec();
        let initial = GenParams::init(spec.clone(), cfg.seed);
        let (trained, _) = train_gen(&ds, &spec, &cfg).unwrap();
        assert_eq!(initial, trained);
    }

    #[test]
    fn training_reduces_loss() {
        let ds = tiny_dataset(3);
        let cfg = TrainConfig {
            epochs: 12,
            mesh_sizes: vec![3],
            ..TrainConfig::gen_default(0)
        };
        let (_, run) = train_gen(&ds, &tiny_spec(), &cfg).unwrap();
        let first = run.loss_history[0];
        let last = *run.loss_history.last().unwrap();
        assert!(last < first, "loss went {first} -> {last}");
    }

    #[test]
    fn np_training_reduces_loss() {
        let ds = tiny_dataset(4);
        let spec = NpSpec {
            latent_dim: 16,
            hidden: 16,
            ..NpSpec::default_for(SpaceKind::UnitSquare, 2, 3)
        };
        let cfg = TrainConfig {
            epochs: 20,
            ..TrainConfig::np_default(1)
        };
        let (_, run) = train_np(&ds, &spec, &cfg).unwrap();
        assert!(run.loss_history.last().unwrap() < &run.loss_history[0]);
    }

    #[test]
    fn single_scenario_overfits_below_1e3() {
        // capacity sanity check: one scenario, many steps
        let cfg = GenerateConfig {
            houses: 1,
            scenarios_per_house: 1,
            train_houses: 1,
            oracle_resolution: 33,
            inputs_per_scenario: 32,
            queries_per_scenario: 16,
            test_queries_per_scenario: 16,
            ..GenerateConfig::square_desk()
        };
        let ds = generate_dataset(&cfg, 12).unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            mesh_sizes: vec![3],
            ..TrainConfig::gen_default(0)
        };
        let (_, run) = train_gen(&ds, &tiny_spec(), &cfg).unwrap();
        let last = *run.loss_history.last().unwrap();
        assert!(last < 1e-3, "overfit loss {last}");
    }

    #[test]
    fn checkpoint_written_every_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let ds = tiny_dataset(5);
        let cfg = TrainConfig {
            epochs: 1,
            mesh_sizes: vec![2],
            checkpoint_path: Some(path.clone()),
            ..TrainConfig::gen_default(0)
        };
        let (params, _) = train_gen(&ds, &tiny_spec(), &cfg).unwrap();
        let loaded =
            GenParams::from_checkpoint(&crate::autodiff::Checkpoint::load(&path).unwrap()).unwrap();
        assert_eq!(params, loaded);
    }

    #[test]
    fn line_search_on_the_gradient_never_increases_loss() {
        // sanity property: the steepest-descent ray contains a point at
        // least as good as the start (eta = 0 is admissible)
        let ds = tiny_dataset(6);
        let spec = tiny_spec();
        let params = GenParams::init(spec.clone(), 3);
        let mesh = square_grid_mesh(2).unwrap();
        let sc = &ds.houses[0].scenarios[0];
        let positions = mesh.positions_tensor();
        let (loss0, grad, _) =
            gen_loss_and_grads(&params, &mesh, &positions, &sc.inputs, &sc.queries, 2).unwrap();
        let flat = params.flatten();
        let mut best = loss0;
        for eta in [0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1] {
            let moved: Vec<f64> = flat.iter().zip(&grad).map(|(p, g)| p - eta * g).collect();
            let mut trial = params.clone();
            trial.load_flat(&moved);
            let loss =
                gen_scalar_loss(&trial, &mesh, &positions, &sc.inputs, &sc.queries, 2).unwrap();
            best = best.min(loss);
        }
        assert!(
            best <= loss0 + 1e-12,
            "line search worsened: {best} > {loss0}"
        );
        // and strictly improves for this smooth instance
        assert!(best < loss0, "no improvement along the gradient ray");
    }
}
