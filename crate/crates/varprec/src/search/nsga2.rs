//! NSGA-II machinery: constraint-dominated fast non-dominated sorting,
//! crowding distance, and the categorical genome operators.

/// Objectives (minimized) plus an aggregate constraint violation; zero
/// violation means feasible.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub objectives: Vec<f64>,
    pub violation: f64,
}

impl Point {
    pub fn feasible(&self) -> bool {
        self.violation <= 0.0
    }
}

/// Constraint domination: feasible beats infeasible, infeasible solutions
/// compare by violation, feasible ones by Pareto dominance.
pub fn dominates(a: &Point, b: &Point) -> bool {
    match (a.feasible(), b.feasible()) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.violation < b.violation,
        (true, true) => {
            let mut strictly_better = false;
            for (x, y) in a.objectives.iter().zip(&b.objectives) {
                if x > y {
                    return false;
                }
                if x < y {
                    strictly_better = true;
                }
            }
            strictly_better
        }
    }
}

/// Deb's fast non-dominated sort under constraint domination. Returns the
/// fronts as index lists; front 0 is non-dominated.
pub fn nondominated_sort(points: &[Point]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    let mut fronts: Vec<Vec<usize>> = Vec::new();
    let mut first = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&points[i], &points[j]) {
                dominated[i].push(j);
                counts[j] += 1;
            } else if dominates(&points[j], &points[i]) {
                dominated[j].push(i);
                counts[i] += 1;
            }
        }
    }
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            first.push(i);
        }
    }
    let mut current = first;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated[p] {
                counts[q] -= 1;
                if counts[q] == 0 {
                    next.push(q);
                }
            }
        }
        fronts.push(std::mem::take(&mut current));
        current = next;
    }
    fronts
}

/// Per-member crowding distance of one front; boundary members get
/// infinity. Indices into `front` align with the returned vector.
pub fn crowding_distance(points: &[Point], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut dist = vec![0.0; m];
    if m == 0 {
        return dist;
    }
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    let n_obj = points[front[0]].objectives.len();
    let mut order: Vec<usize> = (0..m).collect();
    for k in 0..n_obj {
        order.sort_by(|&a, &b| {
            points[front[a]].objectives[k].total_cmp(&points[front[b]].objectives[k])
        });
        let lo = points[front[order[0]]].objectives[k];
        let hi = points[front[order[m - 1]]].objectives[k];
        dist[order[0]] = f64::INFINITY;
        dist[order[m - 1]] = f64::INFINITY;
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        for w in 1..m - 1 {
            let below = points[front[order[w - 1]]].objectives[k];
            let above = points[front[order[w + 1]]].objectives[k];
            dist[order[w]] += (above - below) / span;
        }
    }
    dist
}

/// Rank and crowding of every population member, for tournament selection.
pub fn rank_and_crowd(points: &[Point]) -> (Vec<usize>, Vec<f64>) {
    let fronts = nondominated_sort(points);
    let mut rank = vec![0usize; points.len()];
    let mut crowd = vec![0.0; points.len()];
    for (r, front) in fronts.iter().enumerate() {
        let d = crowding_distance(points, front);
        for (i, &p) in front.iter().enumerate() {
            rank[p] = r;
            crowd[p] = d[i];
        }
    }
    (rank, crowd)
}

/// Crowded comparison: lower rank wins, ties go to the larger crowding
/// distance.
pub fn crowded_better(rank: &[usize], crowd: &[f64], a: usize, b: usize) -> bool {
    rank[a] < rank[b] || (rank[a] == rank[b] && crowd[a] > crowd[b])
}

/// A genome: one candidate index per tensor slot.
pub type Genome = [usize; 5];

pub fn tournament_select<R: rand::Rng>(
    rng: &mut R,
    pop: &[Genome],
    rank: &[usize],
    crowd: &[f64],
) -> Genome {
    let a = rng.random_range(0..pop.len());
    let b = rng.random_range(0..pop.len());
    if crowded_better(rank, crowd, a, b) {
        pop[a]
    } else {
        pop[b]
    }
}

/// Uniform crossover: with probability `p_c` each slot swaps between the
/// children independently with probability 0.5; otherwise the parents pass
/// through unchanged.
pub fn uniform_crossover<R: rand::Rng>(
    rng: &mut R,
    a: &Genome,
    b: &Genome,
    p_c: f64,
) -> (Genome, Genome) {
    let mut c = *a;
    let mut d = *b;
    if rng.random::<f64>() < p_c {
        for slot in 0..5 {
            if rng.random::<f64>() < 0.5 {
                std::mem::swap(&mut c[slot], &mut d[slot]);
            }
        }
    }
    (c, d)
}

/// Random-reset mutation: each slot independently redraws its candidate
/// index uniformly with probability `p_m`.
pub fn random_reset_mutation<R: rand::Rng>(
    rng: &mut R,
    genome: &mut Genome,
    slot_sizes: &[usize; 5],
    p_m: f64,
) {
    for slot in 0..5 {
        if rng.random::<f64>() < p_m {
            genome[slot] = rng.random_range(0..slot_sizes[slot]);
        }
    }
}
