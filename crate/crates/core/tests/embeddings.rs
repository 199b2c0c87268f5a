use trep_core::embed::{train_embeddings, EmbedConfig};
use trep_core::presets;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (norm(a) * norm(b))
}

#[test]
fn neighbours_embed_closer_than_distant_cells() {
    let net = presets::open_grid(10, 10);
    for seed in 0..5 {
        let table = train_embeddings(&net, &EmbedConfig { seed, ..EmbedConfig::default() }).unwrap();
        let (mut near, mut far) = (Vec::new(), Vec::new());
        for u in 0..net.len() {
            for v in u + 1..net.len() {
                let d = net.shortest_distance(u, v).unwrap();
                let s = cosine(table.embed(u).unwrap(), table.embed(v).unwrap());
                match d {
                    1 => near.push(s),
                    8.. => far.push(s),
                    _ => {}
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&near) > mean(&far), "seed {seed}: near {} far {}", mean(&near), mean(&far));
    }
}
