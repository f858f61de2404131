//! A small DPLL solver for checking exported formulas on toy instances.

use super::cnf::{CnfFormula, Lit};

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Conflict,
    Open(Lit),
    Satisfied,
}

struct State<'a> {
    clauses: &'a [Vec<Lit>],
    value: Vec<i8>,
    trail: Vec<usize>,
}

impl State<'_> {
    fn lit_value(&self, l: Lit) -> i8 {
        let v = self.value[l.unsigned_abs() as usize];
        if l > 0 {
            v
        } else {
            -v
        }
    }

    fn assign(&mut self, l: Lit) {
        self.value[l.unsigned_abs() as usize] = if l > 0 { 1 } else { -1 };
        self.trail.push(l.unsigned_abs() as usize);
    }

    fn undo(&mut self, mark: usize) {
        for v in self.trail.drain(mark..) {
            self.value[v] = 0;
        }
    }

    /// Unit propagation to a fixpoint; then a branching literal from the
    /// first open clause, if any.
    fn propagate(&mut self) -> Status {
        loop {
            let mut changed = false;
            let mut open = None;
            for c in self.clauses {
                let mut unassigned = None;
                let mut free = 0;
                let mut sat = false;
                for &l in c {
                    match self.lit_value(l) {
                        1 => {
                            sat = true;
                            break;
                        }
                        0 => {
                            free += 1;
                            unassigned = Some(l);
                        }
                        _ => {}
                    }
                }
                if sat {
                    continue;
                }
                match (free, unassigned) {
                    (0, _) => return Status::Conflict,
                    (1, Some(l)) => {
                        self.assign(l);
                        changed = true;
                    }
                    (_, Some(l)) => {
                        open.get_or_insert(l);
                    }
                    _ => unreachable!(),
                }
            }
            if !changed {
                return open.map_or(Status::Satisfied, Status::Open);
            }
        }
    }

    fn search(&mut self) -> bool {
        let mark = self.trail.len();
        match self.propagate() {
            Status::Conflict => {}
            Status::Satisfied => return true,
            Status::Open(l) => {
                for choice in [l, -l] {
                    let inner = self.trail.len();
                    self.assign(choice);
                    if self.search() {
                        return true;
                    }
                    self.undo(inner);
                }
            }
        }
        self.undo(mark);
        false
    }

    fn count(&mut self) -> u64 {
        let mark = self.trail.len();
        let n = match self.propagate() {
            Status::Conflict => 0,
            Status::Satisfied => {
                let free = self.value[1..].iter().filter(|&&v| v == 0).count() as u32;
                1u64 << free
            }
            Status::Open(l) => {
                let mut total = 0;
                for choice in [l, -l] {
                    let inner = self.trail.len();
                    self.assign(choice);
                    total += self.count();
                    self.undo(inner);
                }
                total
            }
        };
        self.undo(mark);
        n
    }
}

fn start<'a>(f: &'a CnfFormula, assumptions: &[Lit]) -> Option<State<'a>> {
    let mut s = State {
        clauses: &f.clauses,
        value: vec![0; f.num_vars as usize + 1],
        trail: Vec::new(),
    };
    for &a in assumptions {
        match s.lit_value(a) {
            -1 => return None,
            0 => s.assign(a),
            _ => {}
        }
    }
    Some(s)
}

/// A model (indexed by `var - 1`) or `None` when unsatisfiable.
pub fn solve(f: &CnfFormula) -> Option<Vec<bool>> {
    solve_with(f, &[])
}

/// Satisfiability under assumed literals.
pub fn solve_with(f: &CnfFormula, assumptions: &[Lit]) -> Option<Vec<bool>> {
    let mut s = start(f, assumptions)?;
    s.search()
        .then(|| s.value[1..].iter().map(|&v| v > 0).collect())
}

/// Number of total assignments satisfying `f` and the assumptions.
pub fn count_models(f: &CnfFormula, assumptions: &[Lit]) -> u64 {
    start(f, assumptions).map_or(0, |mut s| s.count())
}
