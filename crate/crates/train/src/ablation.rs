//! The noise ablation grid: no noise, then for each regime all functions,
//! each function alone, and all but each function.

use kgtext_core::noise::{NoiseFn, NoisePlan, Regime};

use crate::config::TrainConfig;
use crate::eval::{evaluate_g2t, evaluate_t2g, GraphScores, TextScores};
use crate::pools::CorpusPools;
use crate::run::{run_unsupervised, EvalSets, RunError, RunOptions};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AblationCell {
    pub name: String,
    pub plan: NoisePlan,
}

impl AblationCell {
    pub fn has(&self, f: NoiseFn) -> bool {
        self.plan.functions.contains(&f)
    }
}

pub fn cell_name(plan: &NoisePlan) -> String {
    let n = plan.functions.len();
    if n == 0 {
        return "no noise".into();
    }
    let what = if n == NoiseFn::ALL.len() {
        "all".to_string()
    } else if n == 1 {
        format!("only {}", plan.functions[0])
    } else if n == NoiseFn::ALL.len() - 1 {
        let missing = NoiseFn::ALL.into_iter().find(|f| !plan.functions.contains(f)).unwrap();
        format!("all but {missing}")
    } else {
        plan.functions.iter().map(|f| f.name()).collect::<Vec<_>>().join("+")
    };
    format!("{} {what}", plan.regime)
}

fn cell(plan: NoisePlan) -> AblationCell {
    AblationCell { name: cell_name(&plan), plan }
}

/// 1 + 2 x (1 + 5 + 5) = 23 cells.
pub fn ablation_grid() -> Vec<AblationCell> {
    let mut cells = vec![cell(NoisePlan::none())];
    for regime in [Regime::Sampled, Regime::Composed] {
        cells.push(cell(NoisePlan::all(regime)));
        cells.extend(NoiseFn::ALL.into_iter().map(|f| cell(NoisePlan::only(regime, f))));
        cells.extend(NoiseFn::ALL.into_iter().map(|f| cell(NoisePlan::all_but(regime, f))));
    }
    cells
}

/// Cells matching optional filters: a regime, a single active function
/// (`only`), a single excluded function (`all but`), or the no-noise cell.
pub fn filter_grid(
    regime: Option<Regime>,
    only: Option<NoiseFn>,
    exclude: Option<NoiseFn>,
    no_noise: bool,
) -> Vec<AblationCell> {
    ablation_grid()
        .into_iter()
        .filter(|c| {
            if no_noise {
                return c.plan.is_identity();
            }
            if regime.is_some_and(|r| c.plan.is_identity() || c.plan.regime != r) {
                return false;
            }
            if let Some(f) = only {
                return c.plan.functions == [f];
            }
            if let Some(f) = exclude {
                return c.plan == NoisePlan::all_but(c.plan.regime, f) && !c.plan.is_identity();
            }
            true
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: AblationCell,
    pub g2t: TextScores,
    pub t2g: GraphScores,
}

/// Trains one cell from scratch (pretraining plus `iterations`) and scores
/// it on `test`.
pub fn run_cell(
    base: &TrainConfig,
    cell: &AblationCell,
    pools: &CorpusPools,
    test: &EvalSets,
    iterations: usize,
) -> Result<CellResult, RunError> {
    let mut cfg = base.clone();
    cfg.noise.regime = cell.plan.regime;
    cfg.noise.functions = cell.plan.functions.clone();
    let run = run_unsupervised(&cfg, pools, None, &RunOptions { iterations, ..Default::default() })?;
    let model = &run.trainer.model;
    Ok(CellResult {
        cell: cell.clone(),
        g2t: evaluate_g2t(model, &test.g2t, cfg.exec)?,
        t2g: evaluate_t2g(model, &test.t2g, cfg.exec)?,
    })
}
