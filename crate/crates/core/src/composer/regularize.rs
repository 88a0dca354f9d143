//! Greedy structural simplification of evaluated individuals.

use super::evaluate::Evaluator;
use super::operators::OperatorContext;
use super::Individual;

/// Removes nodes whose deletion keeps the pipeline valid without lowering
/// its primary quality. Deletions are retried until none applies, so the
/// result is a fixpoint. Unevaluated individuals pass through unchanged.
pub fn regularize(pop: &[Individual], evaluator: &Evaluator<'_>, ctx: &OperatorContext<'_>) -> Vec<Individual> {
    let q = evaluator.primary();
    pop.iter()
        .map(|ind| {
            let Some(mut fitness) = ind.fitness.clone() else { return ind.clone() };
            let mut current = ind.pipeline.clone();
            'sweep: loop {
                let sink = current.final_node_id();
                for id in current.canonical_order() {
                    if Some(id) == sink {
                        continue;
                    }
                    let Ok(candidate) = current.without_node(id) else { continue };
                    if !ctx.is_valid(&candidate) {
                        continue;
                    }
                    let Some(f) = evaluator.evaluate(&candidate) else { break 'sweep };
                    if f[q] >= fitness[q] {
                        current = candidate.relabeled();
                        fitness = f;
                        continue 'sweep;
                    }
                }
                break;
            }
            if current == ind.pipeline {
                ind.clone()
            } else {
                Individual { pipeline: current, fitness: Some(fitness) }
            }
        })
        .collect()
}
