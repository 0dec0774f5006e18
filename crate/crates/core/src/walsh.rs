//! Walsh matrix of class-representative vectors and the assignment registry.
//!
//! Rows are the Sylvester-ordered Hadamard matrix with +1 mapped to 1 and -1
//! mapped to 0, so row 0 is all-ones and any two distinct rows differ in
//! exactly half of their positions. Classes consume rows through a registry
//! that tracks which rows are still available; once every row is taken no
//! further class can be represented.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalshMatrix {
    order: usize,
    rows: Vec<Vec<u8>>,
}

/// Builds the Walsh matrix of the smallest power-of-two order that is at
/// least `min_size`.
pub fn build_walsh(min_size: usize) -> WalshMatrix {
    let order = min_size.max(1).next_power_of_two();
    // Sylvester doubling in the {1,0} domain: the lower-right block is the
    // complement of the previous matrix.
    let mut rows = vec![vec![1u8]];
    while rows.len() < order {
        let mut next = Vec::with_capacity(rows.len() * 2);
        for prev in &rows {
            let mut row = prev.clone();
            row.extend_from_slice(prev);
            next.push(row);
        }
        for prev in &rows {
            let mut row = prev.clone();
            row.extend(prev.iter().map(|b| 1 - b));
            next.push(row);
        }
        rows = next;
    }
    WalshMatrix { order, rows }
}

impl WalshMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn row(&self, index: usize) -> &[u8] {
        &self.rows[index]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.rows.iter().map(|r| r.as_slice())
    }

    /// Row rendered as a bit string, e.g. "10101010".
    pub fn row_bits(&self, index: usize) -> String {
        self.rows[index].iter().map(|b| char::from(b'0' + b)).collect()
    }
}

/// Tracks which Walsh rows are taken and by which class.
#[derive(Debug, Clone)]
pub struct WalshRegistry {
    matrix: WalshMatrix,
    available: Vec<bool>,
    assignment: BTreeMap<usize, usize>,
}

impl WalshRegistry {
    pub fn new(matrix: WalshMatrix) -> Self {
        let available = vec![true; matrix.order()];
        WalshRegistry {
            matrix,
            available,
            assignment: BTreeMap::new(),
        }
    }

    pub fn matrix(&self) -> &WalshMatrix {
        &self.matrix
    }

    pub fn order(&self) -> usize {
        self.matrix.order()
    }

    pub fn is_available(&self, row: usize) -> bool {
        self.available[row]
    }

    pub fn available_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.available
            .iter()
            .enumerate()
            .filter_map(|(i, &free)| free.then_some(i))
    }

    pub fn remaining(&self) -> usize {
        self.available.iter().filter(|&&free| free).count()
    }

    pub fn assignments(&self) -> &BTreeMap<usize, usize> {
        &self.assignment
    }

    /// Claims `row` for `class_label`.
    pub fn mark_assigned(&mut self, class_label: usize, row: usize) -> Result<()> {
        if row >= self.matrix.order() {
            return Err(Error::Config(format!(
                "row {row} out of range for walsh order {}",
                self.matrix.order()
            )));
        }
        if self.assignment.contains_key(&class_label) {
            return Err(Error::ClassAssigned { class: class_label });
        }
        if !self.available[row] {
            return Err(Error::RowTaken { row });
        }
        self.available[row] = false;
        self.assignment.insert(class_label, row);
        Ok(())
    }

    /// The code assigned to `class_label`.
    pub fn representation_of(&self, class_label: usize) -> Result<&[u8]> {
        match self.assignment.get(&class_label) {
            Some(&row) => Ok(self.matrix.row(row)),
            None => Err(Error::Unassigned { class: class_label }),
        }
    }

    pub fn row_of(&self, class_label: usize) -> Result<usize> {
        self.assignment
            .get(&class_label)
            .copied()
            .ok_or(Error::Unassigned { class: class_label })
    }
}
