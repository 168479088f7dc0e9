//! Gale-Shapley stable matching over a shared cost function.
//!
//! Both sides rank partners by ascending cost. Equal costs are broken by a
//! caller-supplied key (lower wins), then by index, so preferences are strict
//! and the result is fully deterministic.

use std::collections::VecDeque;

/// Returns `(proposer, receiver)` index pairs sorted by proposer index.
///
/// `cost(p, r)` is evaluated for every pair up front. Groups may differ in
/// size; every member of the smaller side ends up matched.
pub fn stable_matching<F>(
    proposer_keys: &[usize],
    receiver_keys: &[usize],
    cost: F,
) -> Vec<(usize, usize)>
where
    F: Fn(usize, usize) -> u64,
{
    let n_prop = proposer_keys.len();
    let n_recv = receiver_keys.len();
    if n_prop == 0 || n_recv == 0 {
        return Vec::new();
    }
    let costs: Vec<Vec<u64>> = (0..n_prop)
        .map(|p| (0..n_recv).map(|r| cost(p, r)).collect())
        .collect();

    let mut prefs: Vec<VecDeque<usize>> = (0..n_prop)
        .map(|p| {
            let mut order: Vec<usize> = (0..n_recv).collect();
            order.sort_by_key(|&r| (costs[p][r], receiver_keys[r], r));
            order.into()
        })
        .collect();
    let rank = |p: usize, r: usize| (costs[p][r], proposer_keys[p], p);

    let mut engaged: Vec<Option<usize>> = vec![None; n_recv];
    let mut free: VecDeque<usize> = (0..n_prop).collect();
    while let Some(p) = free.pop_front() {
        let Some(r) = prefs[p].pop_front() else {
            continue;
        };
        match engaged[r] {
            None => engaged[r] = Some(p),
            Some(current) if rank(p, r) < rank(current, r) => {
                engaged[r] = Some(p);
                free.push_back(current);
            }
            Some(_) => free.push_back(p),
        }
    }

    let mut pairs: Vec<(usize, usize)> = engaged
        .iter()
        .enumerate()
        .filter_map(|(r, p)| p.map(|p| (p, r)))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Checks that `pairs` is a matching with no blocking pair: no unmatched
/// `(p, r)` where both strictly prefer each other to their current partner
/// (or are single).
pub fn is_stable<F>(n_prop: usize, n_recv: usize, pairs: &[(usize, usize)], cost: F) -> bool
where
    F: Fn(usize, usize) -> u64,
{
    let mut prop_partner = vec![None; n_prop];
    let mut recv_partner = vec![None; n_recv];
    for &(p, r) in pairs {
        if prop_partner[p].is_some() || recv_partner[r].is_some() {
            return false;
        }
        prop_partner[p] = Some(r);
        recv_partner[r] = Some(p);
    }
    // Everyone on the smaller side must be matched.
    if pairs.len() != n_prop.min(n_recv) {
        return false;
    }
    for (p, &p_partner) in prop_partner.iter().enumerate() {
        for (r, &r_partner) in recv_partner.iter().enumerate() {
            if p_partner == Some(r) {
                continue;
            }
            let c = cost(p, r);
            let p_wants = p_partner.is_none_or(|cur| c < cost(p, cur));
            let r_wants = r_partner.is_none_or(|cur| c < cost(cur, r));
            if p_wants && r_wants {
                return false;
            }
        }
    }
    true
}
