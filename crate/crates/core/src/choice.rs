use alloc::vec::Vec;

use crate::layout::Direction;

/// Scores closer than this fraction of the best score are treated as tied, so that a
/// tie survives rescaling the field by a positive constant.
pub(crate) const REL_TIE: f64 = 1e-9;

/// Indices of the best-scoring candidates after orthogonal-over-diagonal priority.
///
/// Empty when no candidate has a positive score.
pub(crate) fn top_candidates(scores: &[(Direction, f64)]) -> Vec<usize> {
    let best = scores.iter().map(|&(_, s)| s).fold(0.0, f64::max);
    if !(best > 0.0) {
        return Vec::new();
    }
    let floor = best - best * REL_TIE;
    let tied: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].1 >= floor).collect();
    if tied.iter().any(|&i| !scores[i].0.is_diagonal()) {
        tied.into_iter().filter(|&i| !scores[i].0.is_diagonal()).collect()
    } else {
        tied
    }
}
