//! Seeded generator for straight-line test functions.
//!
//! Programs draw from assignments, augmented assignments, and returns over
//! the variables a..e, with no branches, so the textual-order
//! reaching-definition rule is exact rather than an approximation.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VARIABLES: [char; 5] = ['a', 'b', 'c', 'd', 'e'];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenOperand {
    Var(char),
    Literal(u8),
}

impl GenOperand {
    fn render(&self) -> String {
        match self {
            GenOperand::Var(v) => v.to_string(),
            GenOperand::Literal(n) => n.to_string(),
        }
    }

    fn var(&self) -> Option<char> {
        match self {
            GenOperand::Var(v) => Some(*v),
            GenOperand::Literal(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenForm {
    Assign,
    AugAssign,
    Return,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenStatement {
    pub form: GenForm,
    /// Assignment target; None for returns.
    pub target: Option<char>,
    pub operands: Vec<GenOperand>,
}

impl GenStatement {
    fn render(&self) -> String {
        let rhs = self
            .operands
            .iter()
            .map(GenOperand::render)
            .collect::<Vec<_>>()
            .join(" + ");
        match self.form {
            GenForm::Assign => format!("    {} = {rhs}", self.target.unwrap()),
            GenForm::AugAssign => format!("    {} += {rhs}", self.target.unwrap()),
            GenForm::Return => format!("    return {rhs}"),
        }
    }
}

/// One deterministic straight-line function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedFunction {
    pub seed: u64,
    pub name: String,
    pub params: Vec<char>,
    pub statements: Vec<GenStatement>,
    pub source: String,
}

impl GeneratedFunction {
    /// Positions are statement indices with 0 for the signature and 1..=n
    /// for body statements; body statement k sits on source line k+1.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = VARIABLES;
        pool.shuffle(&mut rng);
        let param_count = rng.gen_range(0..=3);
        let mut params: Vec<char> = pool[..param_count].to_vec();
        params.sort_unstable();

        let body_len = rng.gen_range(1..=10);
        let mut statements = Vec::with_capacity(body_len);
        for position in 0..body_len {
            let last = position + 1 == body_len;
            let form = if last && rng.gen_bool(0.6) {
                GenForm::Return
            } else if rng.gen_bool(0.35) {
                GenForm::AugAssign
            } else {
                GenForm::Assign
            };
            let operand_count = if form == GenForm::AugAssign {
                1
            } else {
                rng.gen_range(1..=2)
            };
            let operands: Vec<GenOperand> = (0..operand_count)
                .map(|_| {
                    if rng.gen_bool(0.7) {
                        GenOperand::Var(VARIABLES[rng.gen_range(0..VARIABLES.len())])
                    } else {
                        GenOperand::Literal(rng.gen_range(0..10))
                    }
                })
                .collect();
            let target = match form {
                GenForm::Return => None,
                _ => Some(VARIABLES[rng.gen_range(0..VARIABLES.len())]),
            };
            statements.push(GenStatement {
                form,
                target,
                operands,
            });
        }

        let name = format!("gen_{seed}");
        let mut source = format!(
            "def {name}({}):\n",
            params
                .iter()
                .map(char::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        );
        for statement in &statements {
            source.push_str(&statement.render());
            source.push('\n');
        }
        GeneratedFunction {
            seed,
            name,
            params,
            statements,
            source,
        }
    }

    pub fn body_len(&self) -> usize {
        self.statements.len()
    }

    /// Variables defined at a position (parameters at the signature).
    pub fn defs_at(&self, position: usize) -> BTreeSet<char> {
        if position == 0 {
            return self.params.iter().copied().collect();
        }
        self.statements[position - 1].target.into_iter().collect()
    }

    /// Variables read at a position; an augmented target is also a use.
    pub fn uses_at(&self, position: usize) -> BTreeSet<char> {
        if position == 0 {
            return BTreeSet::new();
        }
        let statement = &self.statements[position - 1];
        let mut uses: BTreeSet<char> = statement
            .operands
            .iter()
            .filter_map(GenOperand::var)
            .collect();
        if statement.form == GenForm::AugAssign {
            uses.extend(statement.target);
        }
        uses
    }

    pub fn references_at(&self, position: usize) -> BTreeSet<char> {
        let mut refs = self.defs_at(position);
        refs.extend(self.uses_at(position));
        refs
    }

    /// Source line of a position: the `def` line for 0, else position + 1.
    pub fn line_of(&self, position: usize) -> u32 {
        position as u32 + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_zero_program_is_pinned() {
        let f = GeneratedFunction::generate(0);
        assert_eq!(
            f.source,
            "def gen_0(a, b):\n    c = 9\n    d = a\n    c = 7 + e\n    a = c + 4\n    a += c\n"
        );
    }

    #[test]
    fn same_seed_renders_identical_text() {
        assert_eq!(
            GeneratedFunction::generate(7).source,
            GeneratedFunction::generate(7).source
        );
    }

    #[test]
    fn bodies_stay_within_ten_statements() {
        for seed in 0..200 {
            let f = GeneratedFunction::generate(seed);
            assert!((1..=10).contains(&f.body_len()), "seed {seed}");
        }
    }

    #[test]
    fn events_match_statement_shape() {
        let f = GeneratedFunction::generate(3);
        for (index, statement) in f.statements.iter().enumerate() {
            let position = index + 1;
            match statement.form {
                GenForm::Return => assert!(f.defs_at(position).is_empty()),
                GenForm::AugAssign => {
                    assert!(f.uses_at(position).contains(&statement.target.unwrap()))
                }
                GenForm::Assign => {
                    assert_eq!(f.defs_at(position).len(), 1)
                }
            }
        }
    }
}
