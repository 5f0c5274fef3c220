//! Plain-text case format.
//!
//! ```text
//! # comment
//! BUS
//! # id kind demand
//! 1 generator 0
//! 2 load 21.7
//! GEN
//! # bus p_min p_max [standby]
//! 1 0 332.4
//! BRANCH
//! # id from to reactance capacity|-
//! 1 1 2 0.05917 -
//! ```

use std::fmt;

use super::{Branch, BranchId, Bus, BusId, BusKind, Generator, GridCase};
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Bus,
    Gen,
    Branch,
}

/// Parses and validates a case.
pub fn parse_case<T: Scalar>(name: &str, source: &str) -> Result<GridCase<T>> {
    let mut buses = Vec::new();
    let mut generators = Vec::new();
    let mut branches = Vec::new();
    let mut section = None;

    for (i, raw) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "BUS" => {
                section = Some(Section::Bus);
                continue;
            }
            "GEN" => {
                section = Some(Section::Gen);
                continue;
            }
            "BRANCH" => {
                section = Some(Section::Branch);
                continue;
            }
            _ => {}
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let err = |message: String| Error::Parse { line: line_no, message };
        let num = |s: &str| -> Result<T> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(T::lit)
                .ok_or_else(|| err(format!("expected a number, found `{s}`")))
        };
        let id = |s: &str| -> Result<u32> {
            s.parse::<u32>().map_err(|_| err(format!("expected an integer id, found `{s}`")))
        };
        match section {
            None => return Err(err("row outside of a BUS/GEN/BRANCH section".into())),
            Some(Section::Bus) => {
                if cols.len() != 3 {
                    return Err(err(format!("BUS row needs 3 columns, found {}", cols.len())));
                }
                let kind = match cols[1] {
                    "generator" => BusKind::Generator,
                    "load" => BusKind::Load,
                    "junction" => BusKind::Junction,
                    other => return Err(err(format!("unknown bus kind `{other}`"))),
                };
                buses.push(Bus { id: BusId(id(cols[0])?), kind, nominal_demand: num(cols[2])? });
            }
            Some(Section::Gen) => {
                let standby = match cols.len() {
                    3 => false,
                    4 if cols[3] == "standby" => true,
                    _ => return Err(err("GEN row must be `bus p_min p_max [standby]`".into())),
                };
                let mut g = Generator::new(BusId(id(cols[0])?), num(cols[1])?, num(cols[2])?);
                g.standby = standby;
                generators.push(g);
            }
            Some(Section::Branch) => {
                if cols.len() != 5 {
                    return Err(err(format!("BRANCH row needs 5 columns, found {}", cols.len())));
                }
                let capacity = if cols[4] == "-" { None } else { Some(num(cols[4])?) };
                branches.push(Branch {
                    id: BranchId(id(cols[0])?),
                    from: BusId(id(cols[1])?),
                    to: BusId(id(cols[2])?),
                    reactance: num(cols[3])?,
                    capacity,
                    alive: true,
                });
            }
        }
    }

    GridCase::new(name, buses, generators, branches)
}

impl<T: Scalar> fmt::Display for GridCase<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {}", self.name)?;
        writeln!(f, "BUS")?;
        for b in &self.buses {
            writeln!(f, "{} {} {}", b.id, b.kind.as_str(), b.nominal_demand)?;
        }
        writeln!(f, "GEN")?;
        for g in &self.generators {
            write!(f, "{} {} {}", g.bus, g.p_min, g.p_max)?;
            if g.standby {
                write!(f, " standby")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "BRANCH")?;
        for br in &self.branches {
            write!(f, "{} {} {} {} ", br.id, br.from, br.to, br.reactance)?;
            match br.capacity {
                Some(u) => writeln!(f, "{u}")?,
                None => writeln!(f, "-")?,
            }
        }
        Ok(())
    }
}
