//! Evaluation over dataset splits: per-mesh-size MSE for graph models, a
//! single row for the baseline, and the train-small/test-big extrapolation
//! probe. Scenario evaluations fan out over the thread pool and reduce in
//! index order, so reports are deterministic.

use std::time::Instant;

use crate::autodiff::Tape;
use crate::datasets::{Dataset, Scenario, TaskKind};
use crate::gen_model::{
    diameter_steps, gen_forward, gen_global_forward, np_forward, GenParams, NpParams,
};
use crate::geometry::SpatialMesh;
use crate::parallel;

use super::train::mesh_for;
use super::{EvalReport, EvalRow, TrainError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

fn split_scenarios(dataset: &Dataset, split: Split) -> Vec<&Scenario> {
    let houses = match split {
        Split::Train => dataset.train(),
        Split::Test => dataset.test(),
    };
    houses
        .into_iter()
        .flat_map(|h| h.scenarios.iter())
        .collect()
}

/// Sum of squared errors and query count for one scenario on one mesh.
fn gen_scenario_sse(
    params: &GenParams,
    task: TaskKind,
    mesh: &SpatialMesh,
    t_steps: usize,
    scenario: &Scenario,
) -> Result<(f64, usize), TrainError> {
    let mut tape = Tape::new();
    let (vars, _) = params.insert(&mut tape);
    let positions = tape.leaf(mesh.positions_tensor());
    let spec = &params.spec;
    match task {
        TaskKind::Field => {
            let fwd = gen_forward(
                &mut tape,
                &vars,
                spec,
                mesh,
                positions,
                &scenario.inputs,
                &scenario.queries,
                t_steps,
            )?;
            let preds = fwd.predictions(&tape);
            let mut sse = 0.0;
            for (p, q) in preds.iter().zip(&scenario.queries) {
                let t = q.target.as_ref().ok_or(TrainError::EmptyQuerySet)?;
                sse += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
            if !sse.is_finite() {
                return Err(TrainError::Autodiff(
                    crate::autodiff::AutodiffError::NonFinite { op: "evaluation" },
                ));
            }
            Ok((sse, scenario.queries.len()))
        }
        TaskKind::GlobalIntegral => {
            let pred = gen_global_forward(
                &mut tape,
                &vars,
                spec,
                mesh,
                positions,
                &scenario.inputs,
                t_steps,
            )?;
            let p = tape.value(pred).data().to_vec();
            let t = scenario.queries[0]
                .target
                .as_ref()
                .ok_or(TrainError::EmptyQuerySet)?;
            let sse: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok((sse, 1))
        }
    }
}

/// MSE of a parameter set over a scenario list on a fixed mesh.
pub fn mse_on_scenarios(
    params: &GenParams,
    scenarios: &[&Scenario],
    mesh: &SpatialMesh,
    t_steps: usize,
) -> Result<f64, TrainError> {
    mse_on_scenarios_with(params, scenarios, mesh, t_steps, TaskKind::Field, true)
}

/// As `mse_on_scenarios`, with the task spelled out and the thread fan-out
/// selectable at runtime (so benchmarks can compare both paths).
pub fn mse_on_scenarios_with(
    params: &GenParams,
    scenarios: &[&Scenario],
    mesh: &SpatialMesh,
    t_steps: usize,
    task: TaskKind,
    parallel_eval: bool,
) -> Result<f64, TrainError> {
    let job = |i: usize| gen_scenario_sse(params, task, mesh, t_steps, scenarios[i]);
    let results = if parallel_eval {
        parallel::map_indexed(scenarios.len(), job)
    } else {
        parallel::map_indexed_seq(scenarios.len(), job)
    };
    let mut sse = 0.0;
    let mut count = 0usize;
    for r in results {
        let (s, c) = r?;
        sse += s;
        count += c;
    }
    if count == 0 {
        return Err(TrainError::EmptyQuerySet);
    }
    Ok(sse / count as f64)
}

/// One row per mesh size: MSE over every query of the split.
pub fn evaluate_gen(
    params: &GenParams,
    dataset: &Dataset,
    split: Split,
    mesh_sizes: &[usize],
    seed: u64,
) -> Result<EvalReport, TrainError> {
    let scenarios = split_scenarios(dataset, split);
    let task = dataset.manifest.task;
    let mut rows = Vec::new();
    for &k in mesh_sizes {
        let start = Instant::now();
        let mesh = mesh_for(params.spec.space, k)?;
        let t_steps = diameter_steps(k);
        let results = parallel::map_indexed(scenarios.len(), |i| {
            gen_scenario_sse(params, task, &mesh, t_steps, scenarios[i])
        });
        let mut sse = 0.0;
        let mut count = 0usize;
        for r in results {
            let (s, c) = r?;
            sse += s;
            count += c;
        }
        if count == 0 {
            return Err(TrainError::EmptyQuerySet);
        }
        rows.push(EvalRow {
            model: "gen".into(),
            mesh_k: k,
            seed,
            split: split.as_str().into(),
            mse: sse / count as f64,
            n_params: params.param_count(),
            wall_seconds: start.elapsed().as_secs_f64(),
            extrapolation: false,
        });
    }
    Ok(EvalReport { rows })
}

/// Baseline evaluation; reported with mesh_k = 0 since it has no mesh.
pub fn evaluate_np(
    params: &NpParams,
    dataset: &Dataset,
    split: Split,
    seed: u64,
) -> Result<EvalReport, TrainError> {
    let scenarios = split_scenarios(dataset, split);
    let start = Instant::now();
    let spec = &params.spec;
    let results = parallel::map_indexed(scenarios.len(), |i| -> Result<(f64, usize), TrainError> {
        let sc = scenarios[i];
        let mut tape = Tape::new();
        let (vars, _) = params.insert(&mut tape);
        let locations: Vec<Vec<f64>> = sc.queries.iter().map(|q| q.x.clone()).collect();
        let preds = np_forward(&mut tape, &vars, spec, &sc.inputs, &locations)?;
        let p = tape.value(preds);
        let mut sse = 0.0;
        for (row, q) in sc.queries.iter().enumerate() {
            let t = q.target.as_ref().ok_or(TrainError::EmptyQuerySet)?;
            sse += p
                .row(row)
                .iter()
                .zip(t)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        Ok((sse, sc.queries.len()))
    });
    let mut sse = 0.0;
    let mut count = 0usize;
    for r in results {
        let (s, c) = r?;
        sse += s;
        count += c;
    }
    if count == 0 {
        return Err(TrainError::EmptyQuerySet);
    }
    Ok(EvalReport {
        rows: vec![EvalRow {
            model: "np".into(),
            mesh_k: 0,
            seed,
            split: split.as_str().into(),
            mse: sse / count as f64,
            n_params: params.param_count(),
            wall_seconds: start.elapsed().as_secs_f64(),
            extrapolation: false,
        }],
    })
}

/// Evaluate one checkpoint across `probe_sizes`, flagging sizes outside the
/// training set as extrapolation rows. Accuracy is reported, not asserted;
/// degradation at larger meshes is the expected regime.
pub fn generalization_probe(
    params: &GenParams,
    dataset: &Dataset,
    trained_sizes: &[usize],
    probe_sizes: &[usize],
    seed: u64,
) -> Result<EvalReport, TrainError> {
    let mut report = evaluate_gen(params, dataset, Split::Test, probe_sizes, seed)?;
    for row in &mut report.rows {
        row.extrapolation = !trained_sizes.contains(&row.mesh_k);
    }
    Ok(report)
}
