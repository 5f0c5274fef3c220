//! Embedded IEEE test cases.

use crate::model::{parse_case, GridCase};
use crate::Scalar;

pub const IEEE14: &str = include_str!("../fixtures/ieee14.case");
pub const IEEE9: &str = include_str!("../fixtures/ieee9.case");

/// Host buses used for the two microgrids in the reference setup.
pub const DEFAULT_HOSTS: [u32; 2] = [13, 14];

pub fn ieee14<T: Scalar>() -> GridCase<T> {
    parse_case("ieee14", IEEE14).expect("embedded ieee14 fixture is valid")
}

pub fn ieee9<T: Scalar>() -> GridCase<T> {
    parse_case("ieee9", IEEE9).expect("embedded ieee9 fixture is valid")
}

/// Source text of an embedded fixture by name.
pub fn embedded(name: &str) -> Option<&'static str> {
    match name {
        "ieee14" => Some(IEEE14),
        "ieee9" => Some(IEEE9),
        _ => None,
    }
}

/// Two buses: unit (`p_max` 2) at bus 1, load 1.0 at bus 2, one branch x = 0.1.
pub fn two_bus<T: Scalar>(capacity: Option<T>) -> GridCase<T> {
    let src = format!(
        "BUS\n1 generator 0\n2 load 1\nGEN\n1 0 2\nBRANCH\n1 1 2 0.1 {}\n",
        capacity.map_or_else(|| "-".to_string(), |u| u.to_string())
    );
    parse_case("two-bus", &src).expect("valid two-bus case")
}

/// Triangle with x = 0.1 everywhere: unit (`p_max` 4) at bus 1, loads 1.0 at
/// buses 2 and 3. Branches 1: (1,2), 2: (1,3), 3: (2,3) with the given capacities.
pub fn triangle<T: Scalar>(capacities: [Option<T>; 3]) -> GridCase<T> {
    let cap = |c: Option<T>| c.map_or_else(|| "-".to_string(), |u| u.to_string());
    let src = format!(
        "BUS\n1 generator 0\n2 load 1\n3 load 1\nGEN\n1 0 4\nBRANCH\n1 1 2 0.1 {}\n2 1 3 0.1 {}\n3 2 3 0.1 {}\n",
        cap(capacities[0]),
        cap(capacities[1]),
        cap(capacities[2])
    );
    parse_case("triangle", &src).expect("valid triangle case")
}
