//! Small hand-built instances shared by the test suites.

use crate::graph::{BipartiteGraph, ColorId, GroundTruth, TrueColor};

/// The 11x11 three-color illustration graph: `y1` is mislabeled red (truly
/// green), `y11` is wild but labeled green, and three edges are misattributed.
/// Colors: 0 = green, 1 = blue, 2 = red.
pub fn figure_graph() -> (BipartiteGraph, GroundTruth) {
    let edges: &[(u32, u32)] = &[
        (0, 0),
        (1, 0),
        (3, 0),
        (1, 1),
        (2, 1),
        (2, 2),
        (2, 3),
        (4, 3),
        (4, 4),
        (5, 4),
        (7, 4),
        (6, 5),
        (4, 5),
        (4, 6),
        (6, 7),
        (9, 7),
        (7, 7),
        (10, 7),
        (8, 8),
        (9, 8),
        (10, 9),
        (7, 9),
        (2, 10),
        (5, 10),
        (6, 10),
        (8, 10),
        (10, 10),
    ];
    let labels = vec![
        ColorId(2), // y1 mislabeled red
        ColorId(0),
        ColorId(0),
        ColorId(0),
        ColorId(1),
        ColorId(1),
        ColorId(1),
        ColorId(2),
        ColorId(2),
        ColorId(2),
        ColorId(0), // y11 wild, labeled green
    ];
    let graph = BipartiteGraph::build(11, 11, 3, edges, labels).unwrap();

    let mut true_right = Vec::new();
    true_right.push(TrueColor::Color(ColorId(0)));
    for _ in 0..3 {
        true_right.push(TrueColor::Color(ColorId(0)));
    }
    for _ in 0..3 {
        true_right.push(TrueColor::Color(ColorId(1)));
    }
    for _ in 0..3 {
        true_right.push(TrueColor::Color(ColorId(2)));
    }
    true_right.push(TrueColor::Wild);

    let mut true_left = Vec::new();
    for _ in 0..4 {
        true_left.push(ColorId(0));
    }
    for _ in 0..3 {
        true_left.push(ColorId(1));
    }
    for _ in 0..4 {
        true_left.push(ColorId(2));
    }

    let misattributed = vec![(4, 3), (7, 4), (6, 7)];
    let truth = GroundTruth::new(true_right, true_left, misattributed);
    truth.validate(&graph).unwrap();
    (graph, truth)
}

/// One left node adjacent to two red right nodes and one blue right node.
/// Used for hand-enumerated 2-path counts (6 ordered paths, 2 monochromatic).
pub fn left_star() -> BipartiteGraph {
    BipartiteGraph::build(
        1,
        3,
        2,
        &[(0, 0), (0, 1), (0, 2)],
        vec![ColorId(0), ColorId(0), ColorId(1)],
    )
    .unwrap()
}

/// Two right nodes with distinct labels sharing a single left node.
pub fn shared_left_pair() -> BipartiteGraph {
    BipartiteGraph::build(1, 2, 2, &[(0, 0), (0, 1)], vec![ColorId(0), ColorId(1)]).unwrap()
}
