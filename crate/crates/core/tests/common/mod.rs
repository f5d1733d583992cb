#![allow(dead_code)]

use bethe_lab::model::Model;

/// A spread of models with q, k ∈ {2, 3}.
pub fn mixed_model(idx: usize, d: usize, beta: f64) -> Model {
    match idx % 6 {
        0 => Model::kspin(2, d, beta),
        1 => Model::kspin(3, d, beta),
        2 => Model::potts(2, d, beta),
        3 => Model::potts(3, d, beta),
        4 => Model::ksat(3, d, beta),
        _ => Model::hardcore_soft(d, beta, 1.0 + beta),
    }
    .unwrap()
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}
