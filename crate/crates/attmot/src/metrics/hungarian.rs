//! Minimum-cost assignment on a square cost matrix (O(n^3) shortest
//! augmenting path with row/column potentials).

use ndarray::Array2;

/// Solve min-cost assignment. `cost` must be square; returns `row -> col`.
pub fn solve(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "hungarian: square matrix required");
    if n == 0 {
        return Vec::new();
    }
    const INF: f64 = f64::INFINITY;
    // 1-based arrays; p[j] = row assigned to column j, p[0] is the working row
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Total cost of an assignment.
pub fn assignment_cost(cost: &Array2<f64>, assign: &[usize]) -> f64 {
    assign.iter().enumerate().map(|(r, &c)| cost[[r, c]]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn brute_force_min(cost: &Array2<f64>) -> f64 {
        let n = cost.nrows();
        let mut cols: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut cols, 0, cost, &mut best);
        best
    }

    fn permute(cols: &mut Vec<usize>, k: usize, cost: &Array2<f64>, best: &mut f64) {
        let n = cols.len();
        if k == n {
            let total: f64 = (0..n).map(|r| cost[[r, cols[r]]]).sum();
            *best = best.min(total);
            return;
        }
        for i in k..n {
            cols.swap(k, i);
            permute(cols, k + 1, cost, best);
            cols.swap(k, i);
        }
    }

    #[test]
    fn greedy_trap_case() {
        // greedy picks (0,0)=1 then is forced into 9+9; optimal is 2+2+2
        let cost = arr2(&[[1.0, 2.0, 9.0], [2.0, 9.0, 9.0], [9.0, 2.0, 2.0]]);
        let a = solve(&cost);
        assert_eq!(assignment_cost(&cost, &a), brute_force_min(&cost));
    }

    #[test]
    fn matches_enumeration_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for n in 1..=6 {
            for _ in 0..40 {
                let cost =
                    Array2::from_shape_simple_fn((n, n), || rng.gen_range(0.0..10.0));
                let a = solve(&cost);
                let mut seen = vec![false; n];
                for &c in &a {
                    assert!(!seen[c], "column used twice");
                    seen[c] = true;
                }
                let opt = brute_force_min(&cost);
                assert!(
                    (assignment_cost(&cost, &a) - opt).abs() < 1e-9,
                    "n={n}: {} vs {opt}",
                    assignment_cost(&cost, &a)
                );
            }
        }
    }
}
