use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error_model::{ErrorCondition, ErrorType, Magnitude, Variables};

/// Error laws used by the simulation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GridErrorType {
    Random,
    Systematic,
}

impl GridErrorType {
    pub fn error_type(self) -> ErrorType {
        match self {
            GridErrorType::Random => ErrorType::RandomIid,
            GridErrorType::Systematic => ErrorType::SystematicShift,
        }
    }
}

pub const GRID_RATES: [f64; 3] = [0.1, 0.2, 0.4];

/// One cell of the 2×2×3×3 design.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionId {
    pub index: usize,
    pub error_type: GridErrorType,
    pub variables: Variables,
    pub magnitude: Magnitude,
    pub rate: f64,
}

impl ConditionId {
    pub fn error_condition(&self) -> ErrorCondition {
        ErrorCondition::new(self.error_type.error_type(), self.variables, self.magnitude, self.rate)
    }

    pub fn type_name(&self) -> &'static str {
        match self.error_type {
            GridErrorType::Random => "random",
            GridErrorType::Systematic => "systematic",
        }
    }

    pub fn vars_name(&self) -> &'static str {
        match self.variables {
            Variables::One => "one",
            Variables::All => "all",
        }
    }

    pub fn magnitude_name(&self) -> &'static str {
        match self.magnitude {
            Magnitude::Low => "low",
            Magnitude::Medium => "medium",
            Magnitude::High => "high",
        }
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "#{:02} {}/{}/{}/{}",
            self.index,
            self.type_name(),
            self.vars_name(),
            self.magnitude_name(),
            self.rate
        )
    }
}

/// All 36 conditions: error type, then variables, then magnitude, then rate.
pub fn enumerate_conditions() -> Vec<ConditionId> {
    let mut out = Vec::with_capacity(36);
    for error_type in [GridErrorType::Random, GridErrorType::Systematic] {
        for variables in [Variables::One, Variables::All] {
            for magnitude in [Magnitude::Low, Magnitude::Medium, Magnitude::High] {
                for rate in GRID_RATES {
                    out.push(ConditionId {
                        index: out.len(),
                        error_type,
                        variables,
                        magnitude,
                        rate,
                    });
                }
            }
        }
    }
    out
}

/// Looks up the grid condition matching the given factors.
pub fn find_condition(
    error_type: GridErrorType,
    variables: Variables,
    magnitude: Magnitude,
    rate: f64,
) -> ConditionId {
    enumerate_conditions()
        .into_iter()
        .find(|c| c.error_type == error_type && c.variables == variables && c.magnitude == magnitude && c.rate == rate)
        .expect("factor combination is on the grid")
}
