use std::collections::VecDeque;

use crate::dataio::InteractionDataset;

/// Iteratively drops users and items with fewer than `k` interactions until
/// every survivor has degree >= k, then re-compacts ids preserving the
/// original relative order.
///
/// An empty result is returned (with a warning) rather than treated as an
/// error.
pub fn k_core_filter(data: &InteractionDataset, k: usize) -> InteractionDataset {
    let k = k.max(1);
    let nu = data.num_users();
    let ni = data.num_items();
    let pairs = data.pairs();

    // Bipartite adjacency as edge lists; nodes are users [0, nu) and items [nu, nu + ni).
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nu + ni];
    for (e, &(u, i)) in pairs.iter().enumerate() {
        incident[u as usize].push(e);
        incident[nu + i as usize].push(e);
    }
    let mut degree: Vec<usize> = incident.iter().map(Vec::len).collect();
    let mut node_alive = vec![true; nu + ni];
    let mut edge_alive = vec![true; pairs.len()];

    let mut queue: VecDeque<usize> = (0..nu + ni).filter(|&n| degree[n] < k).collect();
    for &n in &queue {
        node_alive[n] = false;
    }
    while let Some(node) = queue.pop_front() {
        for &e in &incident[node] {
            if !edge_alive[e] {
                continue;
            }
            edge_alive[e] = false;
            let (u, i) = pairs[e];
            let other = if node < nu {
                nu + i as usize
            } else {
                u as usize
            };
            degree[other] -= 1;
            if node_alive[other] && degree[other] < k {
                node_alive[other] = false;
                queue.push_back(other);
            }
        }
    }

    let mut user_map = vec![u32::MAX; nu];
    let mut user_keys = Vec::new();
    for u in 0..nu {
        if node_alive[u] {
            user_map[u] = user_keys.len() as u32;
            user_keys.push(data.user_keys()[u].clone());
        }
    }
    let mut item_map = vec![u32::MAX; ni];
    let mut item_keys = Vec::new();
    for i in 0..ni {
        if node_alive[nu + i] {
            item_map[i] = item_keys.len() as u32;
            item_keys.push(data.item_keys()[i].clone());
        }
    }
    let kept = pairs
        .iter()
        .zip(&edge_alive)
        .filter(|(_, &alive)| alive)
        .map(|(&(u, i), _)| (user_map[u as usize], item_map[i as usize]));
    let out = InteractionDataset::with_keys(user_keys, item_keys, kept)
        .expect("re-compacted ids are in range");
    if out.is_empty() && !data.is_empty() {
        log::warn!("{k}-core filtering removed every interaction; dataset is empty");
    }
    out
}
