//! Flattening structural dynamics into an optimization parameter vector.
//!
//! The canonical slot order is (natural frequency, stiffness, damping
//! ratio) per x-mode ascending, then the y-modes. Tie groups constrain
//! several slots of the same kind to share one free value, which is how
//! an axisymmetric tool-spindle assembly collapses six unknowns to three.

use serde::{Deserialize, Serialize};
use std::fmt;

use super::{DirectionalDynamics, Mode, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    X,
    Y,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::X => "x",
            Direction::Y => "y",
        })
    }
}

/// Which modal field a slot addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotField {
    NaturalFrequency,
    Stiffness,
    DampingRatio,
}

impl SlotField {
    fn short(&self) -> &'static str {
        match self {
            SlotField::NaturalFrequency => "fn",
            SlotField::Stiffness => "k",
            SlotField::DampingRatio => "xi",
        }
    }
}

impl fmt::Display for SlotField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// Address of one modal field inside a [`DirectionalDynamics`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamSlot {
    pub direction: Direction,
    pub mode_index: usize,
    pub field: SlotField,
}

impl fmt::Display for ParamSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}{}", self.field, self.direction, self.mode_index + 1)
    }
}

/// Groups of slots constrained to share a value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TieSpec {
    groups: Vec<Vec<ParamSlot>>,
}

impl TieSpec {
    /// No ties: every slot is its own free parameter.
    pub fn none() -> Self {
        Self { groups: Vec::new() }
    }

    /// Tie each x-mode field to the same field of the matching y-mode.
    /// With a single mode per direction this leaves three free parameters.
    pub fn axisymmetric(mode_count: usize) -> Self {
        let mut groups = Vec::new();
        for i in 0..mode_count {
            for field in [
                SlotField::NaturalFrequency,
                SlotField::Stiffness,
                SlotField::DampingRatio,
            ] {
                groups.push(vec![
                    ParamSlot { direction: Direction::X, mode_index: i, field },
                    ParamSlot { direction: Direction::Y, mode_index: i, field },
                ]);
            }
        }
        Self { groups }
    }

    pub fn from_groups(groups: Vec<Vec<ParamSlot>>) -> Self {
        Self { groups }
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// A flattened, optionally tied parameter vector. `values` holds one
/// entry per free parameter; the layout maps each free entry back onto
/// one or more slots of the source dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    x_mode_count: usize,
    y_mode_count: usize,
    slots: Vec<ParamSlot>,
    /// groups[g] lists the slot indices controlled by values[g].
    groups: Vec<Vec<usize>>,
    values: Vec<f64>,
}

fn canonical_slots(x_mode_count: usize, y_mode_count: usize) -> Vec<ParamSlot> {
    let mut slots = Vec::with_capacity(3 * (x_mode_count + y_mode_count));
    for (direction, count) in [(Direction::X, x_mode_count), (Direction::Y, y_mode_count)] {
        for mode_index in 0..count {
            for field in [
                SlotField::NaturalFrequency,
                SlotField::Stiffness,
                SlotField::DampingRatio,
            ] {
                slots.push(ParamSlot { direction, mode_index, field });
            }
        }
    }
    slots
}

fn slot_value(dynamics: &DirectionalDynamics, slot: &ParamSlot) -> f64 {
    let mode = match slot.direction {
        Direction::X => &dynamics.x_modes()[slot.mode_index],
        Direction::Y => &dynamics.y_modes()[slot.mode_index],
    };
    match slot.field {
        SlotField::NaturalFrequency => mode.natural_frequency_hz(),
        SlotField::Stiffness => mode.stiffness_n_per_m(),
        SlotField::DampingRatio => mode.damping_ratio(),
    }
}

/// Flatten `dynamics` into a parameter vector, collapsing each tie group
/// to a single free value. Tied slots must address the same field kind
/// and already carry equal values.
pub fn flatten(
    dynamics: &DirectionalDynamics,
    ties: &TieSpec,
) -> Result<ParameterVector, ModelError> {
    let x_mode_count = dynamics.x_modes().len();
    let y_mode_count = dynamics.y_modes().len();
    let slots = canonical_slots(x_mode_count, y_mode_count);

    let slot_index = |s: &ParamSlot| slots.iter().position(|c| c == s);

    // slot -> tie group id (usize::MAX = untied so far)
    let mut assignment = vec![usize::MAX; slots.len()];
    for (g, group) in ties.groups.iter().enumerate() {
        let mut kind: Option<SlotField> = None;
        for slot in group {
            let idx = slot_index(slot).ok_or_else(|| ModelError::UnknownTieSlot {
                group: g,
                slot: slot.to_string(),
            })?;
            match kind {
                None => kind = Some(slot.field),
                Some(k) if k != slot.field => {
                    return Err(ModelError::MixedTieKinds { group: g, a: k, b: slot.field })
                }
                _ => {}
            }
            if assignment[idx] != usize::MAX {
                return Err(ModelError::OverlappingTieGroups {
                    group: g,
                    slot: slot.to_string(),
                });
            }
            assignment[idx] = g;
        }
    }

    // Build free groups ordered by their first slot in canonical order.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut tie_to_group = vec![usize::MAX; ties.groups.len()];
    for (idx, &tie) in assignment.iter().enumerate() {
        if tie == usize::MAX {
            groups.push(vec![idx]);
        } else if tie_to_group[tie] == usize::MAX {
            tie_to_group[tie] = groups.len();
            groups.push(vec![idx]);
        } else {
            groups[tie_to_group[tie]].push(idx);
        }
    }

    let mut values = Vec::with_capacity(groups.len());
    for (g, members) in groups.iter().enumerate() {
        let first = slot_value(dynamics, &slots[members[0]]);
        for &m in &members[1..] {
            let v = slot_value(dynamics, &slots[m]);
            if v != first {
                return Err(ModelError::InconsistentTieValues { group: g, a: first, b: v });
            }
        }
        values.push(first);
    }

    Ok(ParameterVector {
        x_mode_count,
        y_mode_count,
        slots,
        groups,
        values,
    })
}

impl ParameterVector {
    /// Number of free parameters.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same layout, new free values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != self.values.len() {
            return Err(ModelError::LayoutMismatch);
        }
        Ok(Self { values, ..self.clone() })
    }

    /// The field kind shared by free parameter `g`.
    pub fn field_of(&self, g: usize) -> SlotField {
        self.slots[self.groups[g][0]].field
    }

    /// Human-readable label per free parameter. Fully direction-tied
    /// groups drop the direction suffix.
    pub fn labels(&self) -> Vec<String> {
        let multi_mode = self.x_mode_count.max(self.y_mode_count) > 1;
        self.groups
            .iter()
            .map(|members| {
                let first = &self.slots[members[0]];
                let tied_both = members.len() > 1
                    && members.iter().all(|&m| {
                        self.slots[m].field == first.field
                            && self.slots[m].mode_index == first.mode_index
                    })
                    && members.iter().any(|&m| self.slots[m].direction == Direction::X)
                    && members.iter().any(|&m| self.slots[m].direction == Direction::Y);
                let mut label = if tied_both {
                    first.field.short().to_string()
                } else {
                    format!("{}_{}", first.field, first.direction)
                };
                if multi_mode {
                    label.push_str(&(first.mode_index + 1).to_string());
                }
                label
            })
            .collect()
    }

    /// Scale factors mapping raw values (Hz, N/m, ratio) to the
    /// engineering units reports use (Hz, MN/m, ratio).
    pub fn display_scales(&self) -> Vec<f64> {
        (0..self.len())
            .map(|g| match self.field_of(g) {
                SlotField::Stiffness => 1e6,
                _ => 1.0,
            })
            .collect()
    }

    /// Rebuild the structural dynamics this vector describes.
    pub fn unflatten(&self) -> Result<DirectionalDynamics, ModelError> {
        let mut slot_values = vec![0.0; self.slots.len()];
        for (g, members) in self.groups.iter().enumerate() {
            for &m in members {
                slot_values[m] = self.values[g];
            }
        }
        let mut x_modes = Vec::with_capacity(self.x_mode_count);
        let mut y_modes = Vec::with_capacity(self.y_mode_count);
        let mut cursor = 0;
        for _ in 0..self.x_mode_count {
            x_modes.push(Mode::new(
                slot_values[cursor],
                slot_values[cursor + 1],
                slot_values[cursor + 2],
            )?);
            cursor += 3;
        }
        for _ in 0..self.y_mode_count {
            y_modes.push(Mode::new(
                slot_values[cursor],
                slot_values[cursor + 1],
                slot_values[cursor + 2],
            )?);
            cursor += 3;
        }
        DirectionalDynamics::new(x_modes, y_modes)
    }
}
