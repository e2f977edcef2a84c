//! Embedded conference matrices of orders 6, 8, 10, and 12 (standard Paley
//! constructions over GF(5), GF(7), GF(9), GF(11)). Each satisfies
//! `CᵀC = (m−1)·I` with zero diagonal and ±1 off-diagonal entries.

use crate::error::{Error, Result};
use crate::numerics::Mat;

pub const CATALOG_ORDERS: [usize; 4] = [6, 8, 10, 12];

const CONF6: [[i8; 6]; 6] = [
    [0, 1, 1, 1, 1, 1],
    [1, 0, 1, -1, -1, 1],
    [1, 1, 0, 1, -1, -1],
    [1, -1, 1, 0, 1, -1],
    [1, -1, -1, 1, 0, 1],
    [1, 1, -1, -1, 1, 0],
];

const CONF8: [[i8; 8]; 8] = [
    [0, 1, 1, 1, 1, 1, 1, 1],
    [1, 0, 1, 1, -1, 1, -1, -1],
    [1, -1, 0, 1, 1, -1, 1, -1],
    [1, -1, -1, 0, 1, 1, -1, 1],
    [1, 1, -1, -1, 0, 1, 1, -1],
    [1, -1, 1, -1, -1, 0, 1, 1],
    [1, 1, -1, 1, -1, -1, 0, 1],
    [1, 1, 1, -1, 1, -1, -1, 0],
];

const CONF10: [[i8; 10]; 10] = [
    [0, 1, 1, 1, 1, 1, 1, 1, 1, 1],
    [1, 0, 1, 1, 1, -1, -1, 1, -1, -1],
    [1, 1, 0, 1, -1, 1, -1, -1, 1, -1],
    [1, 1, 1, 0, -1, -1, 1, -1, -1, 1],
    [1, 1, -1, -1, 0, 1, 1, 1, -1, -1],
    [1, -1, 1, -1, 1, 0, 1, -1, 1, -1],
    [1, -1, -1, 1, 1, 1, 0, -1, -1, 1],
    [1, 1, -1, -1, 1, -1, -1, 0, 1, 1],
    [1, -1, 1, -1, -1, 1, -1, 1, 0, 1],
    [1, -1, -1, 1, -1, -1, 1, 1, 1, 0],
];

const CONF12: [[i8; 12]; 12] = [
    [0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1],
    [1, 0, 1, -1, 1, 1, 1, -1, -1, -1, 1, -1],
    [1, -1, 0, 1, -1, 1, 1, 1, -1, -1, -1, 1],
    [1, 1, -1, 0, 1, -1, 1, 1, 1, -1, -1, -1],
    [1, -1, 1, -1, 0, 1, -1, 1, 1, 1, -1, -1],
    [1, -1, -1, 1, -1, 0, 1, -1, 1, 1, 1, -1],
    [1, -1, -1, -1, 1, -1, 0, 1, -1, 1, 1, 1],
    [1, 1, -1, -1, -1, 1, -1, 0, 1, -1, 1, 1],
    [1, 1, 1, -1, -1, -1, 1, -1, 0, 1, -1, 1],
    [1, 1, 1, 1, -1, -1, -1, 1, -1, 0, 1, -1],
    [1, -1, 1, 1, 1, -1, -1, -1, 1, -1, 0, 1],
    [1, 1, -1, 1, 1, 1, -1, -1, -1, 1, -1, 0],
];

/// Conference matrix of the given order from the embedded catalog.
pub fn conference_matrix(order: usize) -> Result<Mat> {
    let rows: Vec<Vec<f64>> = match order {
        6 => CONF6.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect(),
        8 => CONF8.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect(),
        10 => CONF10.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect(),
        12 => CONF12.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect(),
        _ => {
            return Err(Error::UnsupportedConferenceOrder {
                order,
                available: CATALOG_ORDERS.to_vec(),
            })
        }
    };
    Ok(Mat::from_rows(&rows).expect("catalog matrices are rectangular"))
}
