//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use std::collections::BTreeSet;

use cdcr_core::clusterer::ClusterSet;

/// Every set partition of `items`, in restricted-growth order.
pub fn set_partitions(items: &[String]) -> Vec<Vec<Vec<String>>> {
    fn rec(items: &[String], i: usize, blocks: &mut Vec<Vec<String>>, out: &mut Vec<Vec<Vec<String>>>) {
        if i == items.len() {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(items[i].clone());
            rec(items, i + 1, blocks, out);
            blocks[b].pop();
        }
        blocks.push(vec![items[i].clone()]);
        rec(items, i + 1, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    rec(items, 0, &mut Vec::new(), &mut out);
    out
}

pub fn to_cluster_set(blocks: &[Vec<String>]) -> ClusterSet {
    ClusterSet::new(
        blocks
            .iter()
            .map(|b| b.iter().cloned().collect::<BTreeSet<_>>())
            .collect(),
    )
    .unwrap()
}

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("m{i}")).collect()
}

fn block_of(blocks: &[Vec<String>], m: &str) -> usize {
    blocks.iter().position(|b| b.iter().any(|x| x == m)).unwrap()
}

fn ratio(n: f64, d: f64) -> f64 {
    if d > 0.0 {
        n / d
    } else {
        0.0
    }
}

pub fn f1(r: f64, p: f64) -> f64 {
    if r + p > 0.0 {
        2.0 * r * p / (r + p)
    } else {
        0.0
    }
}

/// Counts the components of each gold block under the "same other block"
/// relation by pairwise flood fill.
fn muc_side(gold: &[Vec<String>], other: &[Vec<String>]) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for g in gold {
        let mut seen = vec![false; g.len()];
        let mut comps = 0;
        for s in 0..g.len() {
            if seen[s] {
                continue;
            }
            comps += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(i) = stack.pop() {
                for j in 0..g.len() {
                    if !seen[j] && block_of(other, &g[i]) == block_of(other, &g[j]) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        num += (g.len() - comps) as f64;
        den += (g.len() - 1) as f64;
    }
    (num, den)
}

pub fn muc(key: &[Vec<String>], resp: &[Vec<String>]) -> (f64, f64, f64) {
    let (rn, rd) = muc_side(key, resp);
    let (pn, pd) = muc_side(resp, key);
    let (r, p) = (ratio(rn, rd), ratio(pn, pd));
    (r, p, f1(r, p))
}

/// Per-mention averages of overlap fractions.
pub fn b_cubed(key: &[Vec<String>], resp: &[Vec<String>]) -> (f64, f64, f64) {
    let mentions: Vec<&String> = key.iter().flatten().collect();
    let (mut r, mut p) = (0.0, 0.0);
    for m in &mentions {
        let k = &key[block_of(key, m)];
        let s = &resp[block_of(resp, m)];
        let overlap = k.iter().filter(|x| s.contains(x)).count() as f64;
        r += overlap / k.len() as f64;
        p += overlap / s.len() as f64;
    }
    let n = mentions.len() as f64;
    (r / n, p / n, f1(r / n, p / n))
}

/// Best total over all injections of the smaller side into the larger.
pub fn best_assignment(sim: &[Vec<f64>]) -> f64 {
    let rows = sim.len();
    let cols = sim.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let transpose = rows > cols;
    let (small, large) = if transpose { (cols, rows) } else { (rows, cols) };
    let at = |i: usize, j: usize| if transpose { sim[j][i] } else { sim[i][j] };
    fn rec(i: usize, small: usize, used: &mut Vec<bool>, acc: f64, at: &dyn Fn(usize, usize) -> f64, best: &mut f64) {
        if i == small {
            *best = best.max(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                rec(i + 1, small, used, acc + at(i, j), at, best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(0, small, &mut vec![false; large], 0.0, &at, &mut best);
    best
}

pub fn ceaf_e(key: &[Vec<String>], resp: &[Vec<String>]) -> (f64, f64, f64) {
    let sim: Vec<Vec<f64>> = key
        .iter()
        .map(|k| {
            resp.iter()
                .map(|s| {
                    let ov = k.iter().filter(|x| s.contains(x)).count();
                    2.0 * ov as f64 / (k.len() + s.len()) as f64
                })
                .collect()
        })
        .collect();
    let total = best_assignment(&sim);
    let (r, p) = (ratio(total, key.len() as f64), ratio(total, resp.len() as f64));
    (r, p, f1(r, p))
}
