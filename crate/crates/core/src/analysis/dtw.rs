use crate::parallel::Executor;

use super::{AnalysisError, LatentTrajectory};

fn frame_cost(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Classic dynamic time warping over the full window with Euclidean frame
/// cost and steps (1,0), (0,1), (1,1).
pub fn dtw_frames(a: &[[f64; 16]], b: &[[f64; 16]]) -> Result<f64, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];
    for (i, fa) in a.iter().enumerate() {
        for (j, fb) in b.iter().enumerate() {
            let c = frame_cost(fa, fb);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = c + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

pub fn dtw_distance(a: &LatentTrajectory, b: &LatentTrajectory) -> Result<f64, AnalysisError> {
    dtw_frames(&a.frames, &b.frames)
}

/// Pairwise DTW distances; the upper triangle is computed and mirrored.
pub fn distance_matrix(trajs: &[LatentTrajectory], executor: &Executor) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let n = trajs.len();
    if n < 2 {
        return Err(AnalysisError::TooFew(n));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let dists = executor.map(&pairs, |_, &(i, j)| dtw_distance(&trajs[i], &trajs[j]));
    let mut m = vec![vec![0.0; n]; n];
    for (&(i, j), d) in pairs.iter().zip(dists) {
        let d = d?;
        m[i][j] = d;
        m[j][i] = d;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Minimum over every monotone alignment path, summed from the start.
    fn brute_force(a: &[[f64; 16]], b: &[[f64; 16]]) -> f64 {
        fn walk(a: &[[f64; 16]], b: &[[f64; 16]], i: usize, j: usize, acc: f64) -> f64 {
            let acc = acc + frame_cost(&a[i], &b[j]);
            if i + 1 == a.len() && j + 1 == b.len() {
                return acc;
            }
            let mut best = f64::INFINITY;
            if i + 1 < a.len() {
                best = best.min(walk(a, b, i + 1, j, acc));
            }
            if j + 1 < b.len() {
                best = best.min(walk(a, b, i, j + 1, acc));
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                best = best.min(walk(a, b, i + 1, j + 1, acc));
            }
            best
        }
        walk(a, b, 0, 0, 0.0)
    }

    fn frames(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<[f64; 16]>> {
        prop::collection::vec(prop::array::uniform16(-1.0f64..1.0), len)
    }

    fn unit(k: usize) -> [f64; 16] {
        let mut v = [0.0; 16];
        v[k] = 1.0;
        v
    }

    #[test]
    fn single_frames_give_euclidean_distance() {
        let d = dtw_frames(&[unit(0)], &[unit(1)]).unwrap();
        assert_eq!(d, 2f64.sqrt());
    }

    #[test]
    fn repeated_frames_align_for_free() {
        let a = [unit(0), unit(1), unit(2)];
        let b = [unit(0), unit(0), unit(1), unit(1), unit(2)];
        assert_eq!(dtw_frames(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(dtw_frames(&[], &[unit(0)]), Err(AnalysisError::Empty)));
    }

    #[test]
    fn matrix_needs_two() {
        let t = LatentTrajectory::new("a", vec![unit(0)]).unwrap();
        assert!(matches!(
            distance_matrix(&[t], &Executor::sequential()),
            Err(AnalysisError::TooFew(1))
        ));
    }

    proptest! {
        #[test]
        fn matches_brute_force(a in frames(1..=6), b in frames(1..=6)) {
            prop_assert_eq!(dtw_frames(&a, &b).unwrap(), brute_force(&a, &b));
        }

        #[test]
        fn symmetric_and_zero_on_self(a in frames(1..=12), b in frames(1..=12)) {
            let ab = dtw_frames(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, dtw_frames(&b, &a).unwrap());
            prop_assert_eq!(dtw_frames(&a, &a).unwrap(), 0.0);
        }
    }
}
