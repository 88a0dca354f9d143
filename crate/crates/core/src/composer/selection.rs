//! Dominance, non-dominated sorting, crowding, and the selection schemes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Individual;

/// `a` dominates `b`: no worse everywhere and strictly better somewhere
/// (all objectives are maximized).
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

/// Fronts of indices, best first.
pub fn non_dominated_sort(points: &[&[f64]]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(points[i], points[j]) {
                dominated_by[i].push(j);
            } else if i != j && dominates(points[j], points[i]) {
                count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                count[j] -= 1;
                if count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front (same order as `front`).
pub fn crowding_distance(points: &[&[f64]], front: &[usize]) -> Vec<f64> {
    let m = points.first().map_or(0, |p| p.len());
    let mut dist = vec![0.0; front.len()];
    if front.len() <= 2 {
        return vec![f64::INFINITY; front.len()];
    }
    for obj in 0..m {
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| points[front[a]][obj].total_cmp(&points[front[b]][obj]).then(a.cmp(&b)));
        let lo = points[front[order[0]]][obj];
        let hi = points[front[*order.last().expect("non-empty")]][obj];
        dist[order[0]] = f64::INFINITY;
        dist[*order.last().expect("non-empty")] = f64::INFINITY;
        if hi > lo {
            for w in 1..order.len() - 1 {
                let gap = points[front[order[w + 1]]][obj] - points[front[order[w - 1]]][obj];
                dist[order[w]] += gap / (hi - lo);
            }
        }
    }
    dist
}

/// Rank (front index) and crowding distance per individual.
pub fn rank_and_crowding(points: &[&[f64]]) -> (Vec<usize>, Vec<f64>) {
    let mut rank = vec![0; points.len()];
    let mut crowd = vec![0.0; points.len()];
    for (r, front) in non_dominated_sort(points).iter().enumerate() {
        let d = crowding_distance(points, front);
        for (k, &i) in front.iter().enumerate() {
            rank[i] = r;
            crowd[i] = d[k];
        }
    }
    (rank, crowd)
}

/// NSGA-II truncation: whole fronts in order, the last partial front by
/// descending crowding distance. Returns indices in selection order.
pub fn nsga2_select(points: &[&[f64]], k: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(k);
    for front in non_dominated_sort(points) {
        if chosen.len() + front.len() <= k {
            chosen.extend(front);
            continue;
        }
        let d = crowding_distance(points, &front);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(front[a].cmp(&front[b])));
        for o in order.into_iter().take(k - chosen.len()) {
            chosen.push(front[o]);
        }
        break;
    }
    chosen
}

/// Single-objective survivors: the best individual, then size-3 tournaments
/// without replacement.
pub fn tournament_survivors<R: Rng>(scores: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..scores.len()).collect();
    let mut chosen = Vec::with_capacity(k);
    if remaining.is_empty() || k == 0 {
        return chosen;
    }
    let best = argmax_first(&remaining, scores);
    chosen.push(remaining.remove(best));
    while chosen.len() < k && !remaining.is_empty() {
        let entrants: Vec<usize> = (0..3.min(remaining.len())).map(|_| rng.gen_range(0..remaining.len())).collect();
        let win = entrants
            .iter()
            .copied()
            .reduce(|a, b| if scores[remaining[b]] > scores[remaining[a]] { b } else { a })
            .expect("non-empty");
        chosen.push(remaining.remove(win));
    }
    chosen
}

fn argmax_first(idx: &[usize], scores: &[f64]) -> usize {
    let mut best = 0;
    for (pos, &i) in idx.iter().enumerate() {
        if scores[i] > scores[idx[best]] {
            best = pos;
        }
    }
    best
}

/// SPEA2-style fitness (lower is better): raw strength plus a k-th nearest
/// neighbour density term.
pub fn spea2_fitness(points: &[&[f64]]) -> Vec<f64> {
    let n = points.len();
    let strength: Vec<f64> =
        (0..n).map(|i| (0..n).filter(|&j| dominates(points[i], points[j])).count() as f64).collect();
    let k = ((n as f64).sqrt() as usize).max(1);
    (0..n)
        .map(|i| {
            let raw: f64 = (0..n).filter(|&j| dominates(points[j], points[i])).map(|j| strength[j]).sum();
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| points[i].iter().zip(points[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .collect();
            d.sort_by(f64::total_cmp);
            let sigma = d.get(k.min(d.len()).saturating_sub(1)).copied().unwrap_or(0.0);
            raw + 1.0 / (sigma + 2.0)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionType {
    #[default]
    Tournament,
    Spea2Like,
}

/// Picks `k` parents (with replacement) from an evaluated population.
pub fn select_parents<R: Rng>(pop: &[Individual], k: usize, kind: SelectionType, rng: &mut R) -> Vec<usize> {
    let points: Vec<&[f64]> = pop.iter().map(|i| i.fitness_or_empty()).collect();
    if pop.is_empty() {
        return Vec::new();
    }
    // Smaller key wins.
    let key: Vec<(f64, f64)> = match kind {
        SelectionType::Tournament => {
            let (rank, crowd) = rank_and_crowding(&points);
            rank.iter().zip(&crowd).map(|(&r, &c)| (r as f64, -c)).collect()
        }
        SelectionType::Spea2Like => spea2_fitness(&points).into_iter().map(|f| (f, 0.0)).collect(),
    };
    let size = match kind {
        SelectionType::Tournament => 3,
        SelectionType::Spea2Like => 2,
    };
    (0..k)
        .map(|_| {
            (0..size.min(pop.len()))
                .map(|_| rng.gen_range(0..pop.len()))
                .reduce(|a, b| if key[b].partial_cmp(&key[a]) == Some(std::cmp::Ordering::Less) { b } else { a })
                .expect("non-empty")
        })
        .collect()
}

/// Archive of mutually non-dominated individuals. Candidates with a fitness
/// vector equal to an existing member are not added, so with one objective
/// the archive holds exactly the incumbent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub members: Vec<Individual>,
}

impl ParetoFront {
    pub fn offer(&mut self, cand: &Individual) -> bool {
        let Some(f) = cand.fitness.as_deref() else { return false };
        if self.members.iter().any(|m| {
            let g = m.fitness_or_empty();
            dominates(g, f) || g == f
        }) {
            return false;
        }
        self.members.retain(|m| !dominates(f, m.fitness_or_empty()));
        self.members.push(cand.clone());
        true
    }

    pub fn update<'a>(&mut self, cands: impl IntoIterator<Item = &'a Individual>) {
        for c in cands {
            self.offer(c);
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Member with the highest value of objective `obj` (first on ties).
    pub fn best(&self, obj: usize) -> Option<&Individual> {
        self.members.iter().reduce(|a, b| if b.fitness_or_empty()[obj] > a.fitness_or_empty()[obj] { b } else { a })
    }

    /// Whether no member dominates another.
    pub fn is_mutually_non_dominated(&self) -> bool {
        self.members.iter().enumerate().all(|(i, a)| {
            self.members
                .iter()
                .enumerate()
                .all(|(j, b)| i == j || !dominates(a.fitness_or_empty(), b.fitness_or_empty()))
        })
    }
}
