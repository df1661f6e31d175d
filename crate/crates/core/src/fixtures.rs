//! The hotel-trip matrices: Hank's club (H), a restaurant (R) and a music
//! festival (F), bundled as JSON fixtures.

use crate::model::{Catalog, UtilityMatrix};

pub const TABLE1_JSON: &str = include_str!("../fixtures/table1.json");
pub const TABLE4_JSON: &str = include_str!("../fixtures/table4.json");
pub const TABLE5_JSON: &str = include_str!("../fixtures/table5.json");
pub const TABLE6_JSON: &str = include_str!("../fixtures/table6.json");
pub const TABLE7_JSON: &str = include_str!("../fixtures/table7.json");

fn parse(json: &str) -> UtilityMatrix {
    UtilityMatrix::from_json(json).expect("bundled fixture parses")
}

/// F lifts H by 15.
pub fn table1() -> UtilityMatrix {
    parse(TABLE1_JSON)
}

/// Only the diagonal ratings of H and R.
pub fn table4() -> UtilityMatrix {
    parse(TABLE4_JSON)
}

/// H and R independent of each other.
pub fn table5() -> UtilityMatrix {
    parse(TABLE5_JSON)
}

/// F lifts H by only 3.
pub fn table6() -> UtilityMatrix {
    parse(TABLE6_JSON)
}

/// F itself is worth 30.
pub fn table7() -> UtilityMatrix {
    parse(TABLE7_JSON)
}

/// Fixture by table number (1, 4, 5, 6 or 7).
pub fn table(number: u32) -> Option<UtilityMatrix> {
    match number {
        1 => Some(table1()),
        4 => Some(table4()),
        5 => Some(table5()),
        6 => Some(table6()),
        7 => Some(table7()),
        _ => None,
    }
}

/// {H, R, F} where F lifts H by `lift` and leaves R alone.
pub fn table5_with_f(lift: f64) -> UtilityMatrix {
    UtilityMatrix::new(
        Catalog::from_ids(&["H", "R", "F"]).expect("valid ids"),
        vec![
            vec![5.0, 0.0, lift],
            vec![0.0, 10.0, lift.min(0.0)],
            vec![0.0, 0.0, 7.0],
        ],
    )
    .expect("valid matrix")
}
