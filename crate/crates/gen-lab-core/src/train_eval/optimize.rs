//! Node-position optimization with frozen module weights: gradient steps on
//! the positions (soft-nearest representation, connectivity held fixed
//! within a step), clamping back into the space and recomputing the
//! Delaunay connectivity after every update.

use crate::autodiff::{adam_step, AdamState, Tape, Tensor};
use crate::datasets::Scenario;
use crate::gen_model::{diameter_steps, gen_forward, mse_loss, GenParams};
use crate::geometry::{clamp_to_space, delaunay_mesh, halton_points, SpaceKind, SpatialMesh};
use crate::representation::RepKind;
use crate::rng::DetRng;

use super::TrainError;

#[derive(Clone, Debug)]
pub struct MeshOptConfig {
    /// Mesh order: k^2 nodes are placed.
    pub mesh_k: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Which of the well-spread initializations to use (two per mesh size
    /// is the usual protocol).
    pub init_variant: u64,
}

impl MeshOptConfig {
    pub fn new(mesh_k: usize, seed: u64, init_variant: u64) -> Self {
        Self {
            mesh_k,
            steps: 200,
            learning_rate: 3e-4,
            seed,
            init_variant,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeshOptRun {
    pub initial_mesh: SpatialMesh,
    pub mesh: SpatialMesh,
    /// Per-step training loss on the optimization scenarios.
    pub loss_history: Vec<f64>,
}

fn delaunay_with_jitter(positions: &Tensor, rng: &mut DetRng) -> Result<SpatialMesh, TrainError> {
    match delaunay_mesh(positions.data()) {
        Ok(mesh) => Ok(mesh),
        Err(_) => {
            // degenerate configuration (collinear/duplicate after clamping):
            // jitter by 1e-9 and retry a few times
            let mut jittered = positions.clone();
            for _ in 0..8 {
                for v in jittered.data_mut() {
                    *v += rng.uniform(-1e-9, 1e-9);
                }
                clamp_to_space(&mut jittered, SpaceKind::UnitSquare)?;
                if let Ok(mesh) = delaunay_mesh(jittered.data()) {
                    return Ok(mesh);
                }
            }
            Err(TrainError::Geometry(
                delaunay_mesh(jittered.data()).unwrap_err(),
            ))
        }
    }
}

/// Optimize node positions on a handful of scenarios from one house, with
/// module weights frozen. Returns the final Delaunay mesh.
pub fn optimize_node_positions(
    params: &GenParams,
    scenarios: &[&Scenario],
    cfg: &MeshOptConfig,
) -> Result<MeshOptRun, TrainError> {
    if params.spec.rep != RepKind::SoftNearest {
        return Err(TrainError::NeedsSoftNearest);
    }
    if params.spec.space != SpaceKind::UnitSquare {
        return Err(TrainError::NeedsSoftNearest);
    }
    if scenarios.is_empty() {
        return Err(TrainError::EmptyTrainSplit);
    }
    let n_nodes = cfg.mesh_k * cfg.mesh_k;
    let t_steps = diameter_steps(cfg.mesh_k);
    let init_seed = DetRng::derive(cfg.seed, &[0xba5e, cfg.init_variant]).next_u64();
    let mut positions = Tensor::matrix(n_nodes, 2, halton_points(n_nodes, 2, init_seed));
    let mut jitter_rng = DetRng::derive(cfg.seed, &[0x71773e, cfg.init_variant]);
    let mut mesh = delaunay_with_jitter(&positions, &mut jitter_rng)?;
    let initial_mesh = mesh.clone();

    let mut adam = AdamState::new(cfg.learning_rate, &[positions.shape().to_vec()]);
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let sc = scenarios[step % scenarios.len()];
        let mut tape = Tape::new();
        let (vars, _) = params.insert(&mut tape);
        let pos_var = tape.leaf(positions.clone());
        let fwd = gen_forward(
            &mut tape,
            &vars,
            &params.spec,
            &mesh,
            pos_var,
            &sc.inputs,
            &sc.queries,
            t_steps,
        )?;
        let loss = mse_loss(&mut tape, &fwd, &sc.queries)?;
        history.push(tape.scalar_value(loss)?);
        let grads = tape.backward(loss)?;
        let pos_grad = grads.get_or_zeros(pos_var, positions.shape());
        adam_step(&mut [&mut positions], &[pos_grad], &mut adam)?;
        clamp_to_space(&mut positions, SpaceKind::UnitSquare)?;
        mesh = delaunay_with_jitter(&positions, &mut jitter_rng)?;
        // keep the position tensor in sync with any jitter the
        // triangulation needed
        positions = mesh.positions_tensor();
    }
    Ok(MeshOptRun {
        initial_mesh,
        mesh,
        loss_history: history,
    })
}
