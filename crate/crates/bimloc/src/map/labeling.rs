//! Semantic labeling of map points from element bounding boxes.

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::geometry::{KdTree, SemanticPointCloud, UNLABELED};
use crate::map::LabeledBox;
use crate::scalar::Real;

/// Closed-interval containment test on all three axes.
pub fn point_in_box<T: Real>(p: &Point3<T>, b: &LabeledBox<T>) -> bool {
    (0..3).all(|a| p[a] >= b.min_corner[a] && p[a] <= b.max_corner[a])
}

/// Counters produced by [`label_map`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelingDiagnostics {
    /// Points contained by two or more candidate boxes.
    pub multi_box_points: usize,
    /// Points no candidate box contained.
    pub unlabeled_points: usize,
}

/// Assign each point the category of the *nearest-center containing box*.
///
/// A k-d tree over box centers yields, per point, the `n_candidates` nearest
/// candidates in ascending center distance (ties by manifest order); the
/// first candidate that contains the point wins. Points contained by no
/// candidate stay [`UNLABELED`]. With `n_candidates >= boxes.len()` the scan
/// is exhaustive, which is the reference behavior the candidate limit
/// approximates.
pub fn label_map<T: Real>(
    cloud: &SemanticPointCloud<T>,
    boxes: &[LabeledBox<T>],
    n_candidates: usize,
) -> Result<(SemanticPointCloud<T>, LabelingDiagnostics)> {
    if boxes.is_empty() {
        return Err(Error::EmptyBoxList);
    }
    if n_candidates == 0 {
        return Err(Error::InvalidConfig(
            "labeling needs at least one candidate box per point".into(),
        ));
    }
    let n_candidates = n_candidates.min(boxes.len());

    let centers: Vec<Point3<T>> = boxes.iter().map(LabeledBox::center).collect();
    let tree = KdTree::new(&centers)?;

    let mut labels = Vec::with_capacity(cloud.len());
    let mut diagnostics = LabelingDiagnostics::default();
    for p in &cloud.points {
        let candidates = tree.knn(p, n_candidates)?;
        let mut label = UNLABELED;
        let mut containing = 0usize;
        for (box_idx, _) in candidates {
            if point_in_box(p, &boxes[box_idx]) {
                if containing == 0 {
                    label = boxes[box_idx].category;
                }
                containing += 1;
            }
        }
        if containing >= 2 {
            diagnostics.multi_box_points += 1;
        }
        if containing == 0 {
            diagnostics.unlabeled_points += 1;
        }
        labels.push(label);
    }

    let labeled = cloud.clone().with_labels(labels)?;
    Ok((labeled, diagnostics))
}
