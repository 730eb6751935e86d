//! Data association between predicted tracklets and detections: distance
//! metrics, gating, and the greedy / Hungarian assignment algorithms.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AssignmentResult, Detection};

/// Assignment algorithm used by the matching stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Greedy,
    Hungarian,
}

/// Matching metric between a tracklet prediction and a detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "euclidean_2d")]
    Euclidean2d,
    #[serde(rename = "euclidean_3d")]
    Euclidean3d,
    #[serde(rename = "mahalanobis")]
    Mahalanobis,
}

#[derive(Debug, Error, PartialEq)]
pub enum AssocError {
    #[error("innovation covariance is singular (det = {0})")]
    SingularCovariance(f64),
}

/// Gated cost matrix: rows are tracklets, columns are detections. Gated-out
/// pairs (class mismatch or cost above the gate) hold `+inf` and are never
/// matched by either algorithm.
#[derive(Clone, Debug)]
pub struct CostMatrix {
    n_rows: usize,
    n_cols: usize,
    costs: Vec<f64>,
    /// Tracklet id per row, so assignment results speak ids instead of
    /// row indices.
    row_ids: Vec<u64>,
}

impl CostMatrix {
    /// Creates a fully gated (all `+inf`) matrix with one row per tracklet id.
    pub fn new(row_ids: Vec<u64>, n_cols: usize) -> Self {
        let n_rows = row_ids.len();
        CostMatrix {
            n_rows,
            n_cols,
            costs: vec![f64::INFINITY; n_rows * n_cols],
            row_ids,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.costs[row * self.n_cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, cost: f64) {
        self.costs[row * self.n_cols + col] = cost;
    }
}

/// Ground-plane or full 3D center distance between a predicted tracklet
/// position and a detection.
pub fn euclidean_cost(predicted: [f64; 3], d: &Detection, use_z: bool) -> f64 {
    let dx = predicted[0] - d.cx;
    let dy = predicted[1] - d.cy;
    if use_z {
        let dz = predicted[2] - d.cz;
        (dx * dx + dy * dy + dz * dz).sqrt()
    } else {
        (dx * dx + dy * dy).sqrt()
    }
}

/// Squared Mahalanobis distance between the predicted 2D measurement and the
/// detection center, normalized by the innovation covariance `S`.
pub fn mahalanobis_cost(
    predicted_xy: [f64; 2],
    innovation_cov: &Matrix2<f64>,
    d: &Detection,
) -> Result<f64, AssocError> {
    let det = innovation_cov.determinant();
    let scale = innovation_cov[(0, 0)]
        .abs()
        .max(innovation_cov[(1, 1)].abs());
    if scale == 0.0 || det.abs() <= 1e-12 * scale * scale {
        return Err(AssocError::SingularCovariance(det));
    }
    let inv = innovation_cov
        .try_inverse()
        .ok_or(AssocError::SingularCovariance(det))?;
    let residual = Vector2::new(d.cx - predicted_xy[0], d.cy - predicted_xy[1]);
    Ok((residual.transpose() * inv * residual)[(0, 0)])
}

/// Greedy assignment: detections are visited in descending detection-score
/// order (ties broken by lower index) and each takes the cheapest still
/// unmatched tracklet with a finite cost.
pub fn greedy_assign(costs: &CostMatrix, detection_scores: &[f64]) -> AssignmentResult {
    assert_eq!(detection_scores.len(), costs.n_cols());
    let mut order: Vec<usize> = (0..costs.n_cols()).collect();
    order.sort_by(|&a, &b| {
        detection_scores[b]
            .total_cmp(&detection_scores[a])
            .then(a.cmp(&b))
    });

    let mut row_taken = vec![false; costs.n_rows()];
    let mut col_matched = vec![false; costs.n_cols()];
    let mut matches = Vec::new();
    for &col in &order {
        let mut best: Option<(usize, f64)> = None;
        for (row, taken) in row_taken.iter().enumerate() {
            if *taken {
                continue;
            }
            let c = costs.get(row, col);
            if c.is_finite() && best.is_none_or(|(_, bc)| c < bc) {
                best = Some((row, c));
            }
        }
        if let Some((row, c)) = best {
            row_taken[row] = true;
            col_matched[col] = true;
            matches.push((costs.row_ids()[row], col, c));
        }
    }
    assemble(costs, matches, &row_taken, &col_matched)
}

/// Minimum-total-cost assignment over the finite entries only. Gated pairs
/// are never matched even when that would increase the match count, and the
/// solution is optimal among admissible assignments of maximum cardinality.
pub fn hungarian_assign(costs: &CostMatrix) -> AssignmentResult {
    let (rows, cols) = (costs.n_rows(), costs.n_cols());
    if rows == 0 || cols == 0 {
        return assemble(costs, Vec::new(), &vec![false; rows], &vec![false; cols]);
    }

    // Pad to a square matrix, replacing infinities with a cost so large that
    // minimizing the total first maximizes the number of finite matches.
    let n = rows.max(cols);
    let mut max_finite = 0.0f64;
    for r in 0..rows {
        for c in 0..cols {
            let v = costs.get(r, c);
            if v.is_finite() {
                max_finite = max_finite.max(v);
            }
        }
    }
    let big = (max_finite + 1.0) * (n as f64 + 1.0);
    let mut square = vec![big; n * n];
    for r in 0..rows {
        for c in 0..cols {
            let v = costs.get(r, c);
            if v.is_finite() {
                square[r * n + c] = v;
            }
        }
    }

    let row_to_col = solve_square_lap(n, &square);

    let mut row_taken = vec![false; rows];
    let mut col_matched = vec![false; cols];
    let mut matches = Vec::new();
    for (row, &col) in row_to_col.iter().enumerate() {
        if row < rows && col < cols && costs.get(row, col).is_finite() {
            row_taken[row] = true;
            col_matched[col] = true;
            matches.push((costs.row_ids()[row], col, costs.get(row, col)));
        }
    }
    assemble(costs, matches, &row_taken, &col_matched)
}

fn assemble(
    costs: &CostMatrix,
    matches: Vec<(u64, usize, f64)>,
    row_taken: &[bool],
    col_matched: &[bool],
) -> AssignmentResult {
    AssignmentResult {
        matches,
        unmatched_detections: (0..costs.n_cols()).filter(|&c| !col_matched[c]).collect(),
        unmatched_tracklets: (0..costs.n_rows())
            .filter(|&r| !row_taken[r])
            .map(|r| costs.row_ids()[r])
            .collect(),
    }
}

/// Shortest-augmenting-path solver for the square linear assignment problem
/// with dual potentials (Jonker-Volgenant style, O(n^3)). All costs must be
/// finite. Returns the column assigned to each row.
fn solve_square_lap(n: usize, cost: &[f64]) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    // 1-based columns; column 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_row = vec![0usize; n + 1]; // row matched to each column, 0 = free
    let mut path = vec![0usize; n + 1];

    for row in 1..=n {
        col_row[0] = row;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut visited = vec![false; n + 1];
        loop {
            visited[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if visited[j] {
                    continue;
                }
                let slack = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if slack < min_slack[j] {
                    min_slack[j] = slack;
                    path[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if visited[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path back to the source column.
        while j0 != 0 {
            let j1 = path[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
        }
    }

    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=n {
        if col_row[j] != 0 {
            row_to_col[col_row[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det_at(x: f64, y: f64, z: f64) -> Detection {
        Detection {
            frame: 0,
            class_label: "car".into(),
            cx: x,
            cy: y,
            cz: z,
            length: 4.0,
            width: 2.0,
            height: 1.5,
            yaw: 0.0,
            score: 0.5,
        }
    }

    fn matrix(rows: &[&[f64]]) -> CostMatrix {
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut m = CostMatrix::new((0..rows.len() as u64).collect(), n_cols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                m.set(i, j, c);
            }
        }
        m
    }

    #[test]
    fn euclidean_examples() {
        assert_abs_diff_eq!(
            euclidean_cost([0.0, 0.0, 0.0], &det_at(3.0, 4.0, 0.0), false),
            5.0
        );
        assert_abs_diff_eq!(
            euclidean_cost([1.0, 2.0, 3.0], &det_at(1.0, 2.0, 3.0), true),
            0.0
        );
        assert_abs_diff_eq!(
            euclidean_cost([0.0, 0.0, 0.0], &det_at(1.0, 2.0, 2.0), true),
            3.0
        );
    }

    #[test]
    fn mahalanobis_examples() {
        let identity = Matrix2::identity();
        assert_abs_diff_eq!(
            mahalanobis_cost([0.0, 0.0], &identity, &det_at(3.0, 4.0, 0.0)).unwrap(),
            25.0
        );
        let s = Matrix2::from_diagonal(&Vector2::new(4.0, 4.0));
        assert_abs_diff_eq!(
            mahalanobis_cost([0.0, 0.0], &s, &det_at(2.0, 0.0, 0.0)).unwrap(),
            1.0
        );
        assert_abs_diff_eq!(
            mahalanobis_cost([1.0, 1.0], &s, &det_at(1.0, 1.0, 0.0)).unwrap(),
            0.0
        );
    }

    #[test]
    fn mahalanobis_identity_matches_squared_euclidean() {
        let identity = Matrix2::identity();
        let d = det_at(1.5, -2.5, 0.0);
        let e = euclidean_cost([0.0, 0.0, 0.0], &d, false);
        let m = mahalanobis_cost([0.0, 0.0], &identity, &d).unwrap();
        assert_abs_diff_eq!(m, e * e, epsilon = 1e-12);
    }

    #[test]
    fn mahalanobis_rejects_singular_covariance() {
        let s = Matrix2::zeros();
        assert!(matches!(
            mahalanobis_cost([0.0, 0.0], &s, &det_at(1.0, 0.0, 0.0)),
            Err(AssocError::SingularCovariance(_))
        ));
    }

    #[test]
    fn greedy_single_cell() {
        let m = matrix(&[&[0.5]]);
        let r = greedy_assign(&m, &[0.9]);
        assert_eq!(r.matches, vec![(0, 0, 0.5)]);
        assert!(r.unmatched_detections.is_empty());
        assert!(r.unmatched_tracklets.is_empty());
    }

    #[test]
    fn greedy_fully_gated() {
        let m = matrix(&[
            &[f64::INFINITY, f64::INFINITY],
            &[f64::INFINITY, f64::INFINITY],
        ]);
        let r = greedy_assign(&m, &[0.9, 0.8]);
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_detections, vec![0, 1]);
        assert_eq!(r.unmatched_tracklets, vec![0, 1]);
    }

    #[test]
    fn greedy_follows_score_order_not_total_cost() {
        // Detection 0 (score 0.9) goes first and grabs tracklet 0, forcing
        // detection 1 onto the expensive pairing. Total cost 11 vs the
        // Hungarian optimum of 3.5.
        let m = matrix(&[&[1.0, 2.0], &[1.5, 10.0]]);
        let r = greedy_assign(&m, &[0.9, 0.8]);
        let mut pairs: Vec<(u64, usize)> = r.matches.iter().map(|&(t, d, _)| (t, d)).collect();
        pairs.sort_unstable();
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
        let total: f64 = r.matches.iter().map(|&(_, _, c)| c).sum();
        assert_abs_diff_eq!(total, 11.0);
    }

    #[test]
    fn hungarian_minimizes_total_cost() {
        let m = matrix(&[&[1.0, 2.0], &[1.5, 10.0]]);
        let r = hungarian_assign(&m);
        let mut pairs: Vec<(u64, usize)> = r.matches.iter().map(|&(t, d, _)| (t, d)).collect();
        pairs.sort_unstable();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
        let total: f64 = r.matches.iter().map(|&(_, _, c)| c).sum();
        assert_abs_diff_eq!(total, 3.5);
    }

    #[test]
    fn hungarian_diag_dominant_matches_diagonal() {
        let m = matrix(&[&[0.1, 5.0, 5.0], &[5.0, 0.2, 5.0], &[5.0, 5.0, 0.3]]);
        let r = hungarian_assign(&m);
        let mut pairs: Vec<(u64, usize)> = r.matches.iter().map(|&(t, d, _)| (t, d)).collect();
        pairs.sort_unstable();
        assert_eq!(pairs, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn hungarian_empty_rows() {
        let m = CostMatrix::new(vec![], 3);
        let r = hungarian_assign(&m);
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_detections, vec![0, 1, 2]);
        assert!(r.unmatched_tracklets.is_empty());
    }

    #[test]
    fn hungarian_never_uses_gated_pairs() {
        // One finite match is available; the gated pairs must stay unmatched
        // even though matching them would raise the cardinality.
        let m = matrix(&[&[1.0, f64::INFINITY], &[f64::INFINITY, f64::INFINITY]]);
        let r = hungarian_assign(&m);
        assert_eq!(r.matches, vec![(0, 0, 1.0)]);
        assert_eq!(r.unmatched_detections, vec![1]);
        assert_eq!(r.unmatched_tracklets, vec![1]);
    }

    /// Enumerates every partial injective row->column mapping over finite
    /// entries, preferring higher cardinality and then lower total cost.
    pub(crate) fn brute_force_best(costs: &CostMatrix) -> (usize, f64) {
        fn recurse(
            costs: &CostMatrix,
            row: usize,
            used: &mut Vec<bool>,
            card: usize,
            total: f64,
            best: &mut (usize, f64),
        ) {
            if row == costs.n_rows() {
                if card > best.0 || (card == best.0 && total < best.1) {
                    *best = (card, total);
                }
                return;
            }
            recurse(costs, row + 1, used, card, total, best);
            for col in 0..costs.n_cols() {
                if used[col] {
                    continue;
                }
                let c = costs.get(row, col);
                if c.is_finite() {
                    used[col] = true;
                    recurse(costs, row + 1, used, card + 1, total + c, best);
                    used[col] = false;
                }
            }
        }
        let mut best = (0usize, 0.0f64);
        let mut used = vec![false; costs.n_cols()];
        recurse(costs, 0, &mut used, 0, 0.0, &mut best);
        best
    }

    pub(crate) fn random_gated_matrix(rng: &mut ChaCha8Rng, max_dim: usize) -> CostMatrix {
        let rows = rng.gen_range(0..=max_dim);
        let cols = rng.gen_range(0..=max_dim);
        let mut m = CostMatrix::new((0..rows as u64).collect(), cols);
        for r in 0..rows {
            for c in 0..cols {
                if rng.gen_bool(0.75) {
                    m.set(r, c, rng.gen_range(0.0..10.0));
                }
            }
        }
        m
    }

    #[test]
    fn hungarian_matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let m = random_gated_matrix(&mut rng, 6);
            let r = hungarian_assign(&m);
            let total: f64 = r.matches.iter().map(|&(_, _, c)| c).sum();
            let (best_card, best_total) = brute_force_best(&m);
            assert_eq!(r.matches.len(), best_card);
            assert!(
                (total - best_total).abs() < 1e-9,
                "hungarian {total} vs brute force {best_total}"
            );
        }
    }

    fn check_partition(m: &CostMatrix, r: &AssignmentResult) {
        let mut det_seen = vec![0usize; m.n_cols()];
        let mut trk_seen = std::collections::BTreeMap::new();
        for id in m.row_ids() {
            trk_seen.insert(*id, 0usize);
        }
        for &(t, d, c) in &r.matches {
            det_seen[d] += 1;
            *trk_seen.get_mut(&t).unwrap() += 1;
            assert!(c.is_finite());
        }
        for &d in &r.unmatched_detections {
            det_seen[d] += 1;
        }
        for t in &r.unmatched_tracklets {
            *trk_seen.get_mut(t).unwrap() += 1;
        }
        assert!(det_seen.iter().all(|&n| n == 1));
        assert!(trk_seen.values().all(|&n| n == 1));
    }

    proptest! {
        #[test]
        fn both_algorithms_partition_inputs(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_gated_matrix(&mut rng, 7);
            let scores: Vec<f64> = (0..m.n_cols()).map(|_| rng.gen_range(0.0..1.0)).collect();
            check_partition(&m, &greedy_assign(&m, &scores));
            check_partition(&m, &hungarian_assign(&m));
        }

        #[test]
        fn greedy_equals_hungarian_on_non_conflicting_matrices(seed in 0u64..200) {
            // Each row's minimum sits in its own column and is also that
            // column's minimum; both algorithms must find the same pairs.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=5usize);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let mut m = CostMatrix::new((0..n as u64).collect(), n);
            for (r, &pr) in perm.iter().enumerate() {
                for c in 0..n {
                    let v = if pr == c {
                        rng.gen_range(0.0..1.0)
                    } else {
                        rng.gen_range(2.0..10.0)
                    };
                    m.set(r, c, v);
                }
            }
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut g: Vec<(u64, usize)> =
                greedy_assign(&m, &scores).matches.iter().map(|&(t, d, _)| (t, d)).collect();
            let mut h: Vec<(u64, usize)> =
                hungarian_assign(&m).matches.iter().map(|&(t, d, _)| (t, d)).collect();
            g.sort_unstable();
            h.sort_unstable();
            prop_assert_eq!(g, h);
        }
    }
}
