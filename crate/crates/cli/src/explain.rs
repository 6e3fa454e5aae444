//! Neighbor-style explanation statements.

use std::fmt;

use erbm::dataset::RatingMatrix;
use erbm::neighborhood::NeighborModel;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExplanationError {
    #[error("no neighborhood support for item {item} (user {user})")]
    NoNeighborhoodSupport { user: usize, item: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplanationStatement {
    pub item: usize,
    /// Neighbors who rated the item at `rating_level` or above.
    pub qualifying: usize,
    pub neighborhood_size: usize,
    pub rating_level: u8,
    pub scale: u8,
}

impl fmt::Display for ExplanationStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} out of {} people with similar interests to you have rated this movie {}",
            self.qualifying, self.neighborhood_size, self.rating_level
        )?;
        if self.rating_level < self.scale {
            f.write_str(" and higher")?;
        }
        Ok(())
    }
}

/// Picks the rating level `r` maximizing `r` times the number of neighbors who
/// rated `item` at least `r`, ties toward the larger `r`.
pub fn render_explanation(
    user: usize,
    item: usize,
    matrix: &RatingMatrix,
    neighbors: &NeighborModel,
) -> Result<ExplanationStatement, ExplanationError> {
    let scale = matrix.scale();
    let nbrs = neighbors.neighbors(user);
    let ratings: Vec<u8> = nbrs.iter().filter_map(|n| matrix.get(n.user, item)).collect();
    if ratings.is_empty() {
        return Err(ExplanationError::NoNeighborhoodSupport { user, item });
    }
    let mut best = (0usize, 0u8);
    for r in 1..=scale {
        let x = ratings.iter().filter(|&&v| v >= r).count();
        if x * usize::from(r) >= best.0 * usize::from(best.1) {
            best = (x, r);
        }
    }
    Ok(ExplanationStatement {
        item,
        qualifying: best.0,
        neighborhood_size: nbrs.len(),
        rating_level: best.1,
        scale,
    })
}
