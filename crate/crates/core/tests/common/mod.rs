#![allow(dead_code)]

use moddisc::io::{default_components, synth_multiscale, Config, Dataset};
use moddisc::tasks::{build_expr_task, build_ml_task, ExprTask, MlTask};

pub fn small_data(seed: u64, n: usize) -> Dataset {
    synth_multiscale(seed, &default_components(), 0.05, n, 1.0).unwrap()
}

pub fn expr_task(n: usize) -> ExprTask {
    build_expr_task(&Config::default(), small_data(1, n)).unwrap()
}

pub fn ml_task(n: usize, max_window: usize) -> MlTask {
    let mut cfg = Config::default();
    cfg.ml.max_window = max_window;
    build_ml_task(&cfg, small_data(1, n)).unwrap()
}

/// Brute-force non-dominated levels.
pub fn brute_levels(objs: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..objs.len()).collect();
    let mut levels = Vec::new();
    while !left.is_empty() {
        let level: Vec<usize> = left
            .iter()
            .copied()
            .filter(|i| !left.iter().any(|j| moddisc::moead::dominates(&objs[*j], &objs[*i])))
            .collect();
        left.retain(|i| !level.contains(i));
        levels.push(level);
    }
    levels
}
