//! d- and σ-separation on a small cyclic graph.
use cyclic_discovery::graph::{acyclify, d_separated, sigma_separated, DirectedMixedGraph, SeparationQuery};

fn main() -> cyclic_discovery::Result<()> {
    // 2 -> 0, 0 -> 1 -> 0, 1 -> 3
    let g = DirectedMixedGraph::from_edges(4, &[(2, 0), (0, 1), (1, 0), (1, 3)], &[])?;
    println!("graph:          {}", serde_json::to_string(&g).unwrap());
    println!("acyclification: {}", serde_json::to_string(&acyclify(&g)).unwrap());
    for cond in [vec![], vec![0], vec![1], vec![0, 1]] {
        let q = SeparationQuery::new(2, 3, cond.clone())?;
        println!(
            "2 _|_ 3 | {:?}:  d-separated {:5}  sigma-separated {}",
            cond,
            d_separated(&g, &q),
            sigma_separated(&g, &q)
        );
    }
    Ok(())
}
