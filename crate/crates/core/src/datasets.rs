//! Bundled networks.

use crate::graph::{parse_edge_list, Graph};

/// Zachary's karate club friendship network (34 vertices, 78 edges) in
/// edge-list format.
pub const KARATE_EDGES: &str = include_str!("../../../data/karate.edges");

pub fn karate() -> Graph {
    parse_edge_list(KARATE_EDGES).expect("bundled karate edge list parses")
}
