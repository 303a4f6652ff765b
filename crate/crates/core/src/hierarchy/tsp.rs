//! Open-path TSP heuristics with a fixed start point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    /// Indices into the point list, each exactly once.
    pub order: Vec<usize>,
    pub length: f64,
    pub start: [f64; 2],
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Length of the path `start -> points[order[0]] -> points[order[1]] -> ...`.
pub fn path_length(start: [f64; 2], points: &[[f64; 2]], order: &[usize]) -> f64 {
    let mut prev = start;
    let mut total = 0.0;
    for &i in order {
        total += dist(prev, points[i]);
        prev = points[i];
    }
    total
}

/// Greedy construction: always move to the nearest unvisited point, lowest
/// index on ties.
pub fn tsp_nearest_neighbor(start: [f64; 2], points: &[[f64; 2]]) -> Result<Tour> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("tour needs at least one point".into()));
    }
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut order = Vec::with_capacity(points.len());
    let mut here = start;
    while !left.is_empty() {
        let mut best = 0;
        for k in 1..left.len() {
            if dist(here, points[left[k]]) < dist(here, points[left[best]]) {
                best = k;
            }
        }
        let i = left.remove(best);
        here = points[i];
        order.push(i);
    }
    Ok(Tour {
        length: path_length(start, points, &order),
        order,
        start,
    })
}

/// Repeatedly applies the best improving segment reversal until none
/// improves the open path. The start point stays fixed; the end is free.
pub fn tsp_two_opt(tour: &Tour, points: &[[f64; 2]]) -> Result<Tour> {
    check_permutation(&tour.order, points.len())?;
    let n = tour.order.len();
    let start = tour.start;
    let mut order = tour.order.clone();
    // Position p in the path is the start for p = 0 and point order[p-1] after.
    let at = |order: &[usize], p: usize| if p == 0 { start } else { points[order[p - 1]] };
    const TOL: f64 = 1e-12;
    loop {
        let mut best = (0.0, 0, 0);
        // Reverse path positions i..=j (1-based over the points).
        for i in 1..=n {
            for j in (i + 1)..=n {
                let a = at(&order, i - 1);
                let b = at(&order, i);
                let c = at(&order, j);
                let before = dist(a, b) + if j < n { dist(c, at(&order, j + 1)) } else { 0.0 };
                let after = dist(a, c) + if j < n { dist(b, at(&order, j + 1)) } else { 0.0 };
                let gain = before - after;
                if gain > best.0 + TOL {
                    best = (gain, i, j);
                }
            }
        }
        if best.0 <= TOL {
            break;
        }
        order[best.1 - 1..best.2].reverse();
    }
    Ok(Tour {
        length: path_length(start, points, &order),
        order,
        start,
    })
}

/// Repeatedly applies the best improving relocation of a run of up to three
/// consecutive points, optionally reversed, until none improves the path.
pub fn tsp_or_opt(tour: &Tour, points: &[[f64; 2]]) -> Result<Tour> {
    check_permutation(&tour.order, points.len())?;
    let start = tour.start;
    let mut order = tour.order.clone();
    let mut current = path_length(start, points, &order);
    const TOL: f64 = 1e-12;
    loop {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let n = order.len();
        for len in 1..=3.min(n) {
            for i in 0..=n - len {
                let mut rest = order.clone();
                let run: Vec<usize> = rest.drain(i..i + len).collect();
                for k in 0..=rest.len() {
                    if k == i {
                        continue;
                    }
                    for reversed in [false, true] {
                        let mut candidate = rest.clone();
                        let mut piece = run.clone();
                        if reversed {
                            piece.reverse();
                        }
                        candidate.splice(k..k, piece);
                        let l = path_length(start, points, &candidate);
                        if l < best.as_ref().map_or(current, |b| b.0) - TOL {
                            best = Some((l, candidate));
                        }
                    }
                }
            }
        }
        match best {
            Some((l, o)) => {
                current = l;
                order = o;
            }
            None => break,
        }
    }
    Ok(Tour {
        length: path_length(start, points, &order),
        order,
        start,
    })
}

/// Nearest neighbour, then 2-opt and or-opt in turn until neither improves.
pub fn plan_tour(start: [f64; 2], points: &[[f64; 2]]) -> Result<Tour> {
    let mut tour = tsp_two_opt(&tsp_nearest_neighbor(start, points)?, points)?;
    loop {
        let moved = tsp_or_opt(&tour, points)?;
        if moved.length >= tour.length - 1e-12 {
            return Ok(tour);
        }
        tour = tsp_two_opt(&moved, points)?;
    }
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument("tour is not a permutation of the points".into()));
        }
    }
    if order.len() != n {
        return Err(Error::InvalidArgument("tour is not a permutation of the points".into()));
    }
    Ok(())
}

/// Exhaustive optimum; for small instances only.
pub fn tsp_brute_force(start: [f64; 2], points: &[[f64; 2]]) -> Tour {
    fn rec(start: [f64; 2], pts: &[[f64; 2]], order: &mut Vec<usize>, used: &mut [bool], best: &mut (f64, Vec<usize>)) {
        if order.len() == pts.len() {
            let l = path_length(start, pts, order);
            if l < best.0 {
                *best = (l, order.clone());
            }
            return;
        }
        for i in 0..pts.len() {
            if !used[i] {
                used[i] = true;
                order.push(i);
                rec(start, pts, order, used, best);
                order.pop();
                used[i] = false;
            }
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    rec(start, points, &mut Vec::new(), &mut vec![false; points.len()], &mut best);
    Tour {
        order: best.1,
        length: best.0,
        start,
    }
}

/// Marker for the `i`-th zone (1-based) of a planned tour: `2^(1-i)`.
pub fn ordering_feature(i: usize) -> Result<f64> {
    if i < 1 {
        return Err(Error::InvalidArgument("tour positions start at 1".into()));
    }
    Ok(0.5f64.powi(i as i32 - 1))
}
