use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SortError {
    #[error("objective vector {0} contains a non-finite value")]
    NonFinite(usize),
    #[error("objective vectors differ in length")]
    Ragged,
}

/// `a` strictly dominates `b` under minimisation.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut better = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            better = true;
        }
    }
    better
}

/// Fast non-dominated sorting. Each level lists indices in ascending order.
pub fn nondominated_sort(objs: &[Vec<f64>]) -> Result<Vec<Vec<usize>>, SortError> {
    if let Some(i) = objs.iter().position(|o| o.iter().any(|v| !v.is_finite())) {
        return Err(SortError::NonFinite(i));
    }
    if objs.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(SortError::Ragged);
    }
    let n = objs.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&objs[i], &objs[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(&objs[j], &objs[i]) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut levels = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|i| dominated_by[*i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        levels.push(current);
        current = next;
    }
    Ok(levels)
}

/// Area dominated by a 2-objective point set and bounded by `reference`.
pub fn hypervolume_2d(points: &[Vec<f64>], reference: [f64; 2]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p[0] < reference[0] && p[1] < reference[1])
        .map(|p| (p[0], p[1]))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut area = 0.0;
    let mut best_y = reference[1];
    for (x, y) in pts {
        if y < best_y {
            area += (reference[0] - x) * (best_y - y);
            best_y = y;
        }
    }
    area
}
