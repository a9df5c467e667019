//! Small CDCL SAT solver: two watched literals, VSIDS with phase saving,
//! first-UIP learning, Luby restarts, assumptions and a wall-clock deadline.

use std::time::Instant;

/// Literal: variable `v` is `2v` (positive) or `2v + 1` (negative).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(u32);

impl Lit {
    pub fn new(var: u32, positive: bool) -> Self {
        Lit(2 * var + u32::from(!positive))
    }

    pub fn pos(var: u32) -> Self {
        Self::new(var, true)
    }

    pub fn var(self) -> u32 {
        self.0 >> 1
    }

    pub fn is_positive(self) -> bool {
        self.0 & 1 == 0
    }

    fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveResult {
    Sat,
    Unsat,
    /// Deadline reached before an answer.
    Unknown,
}

/// Propositional-satisfiability backend used by the key-extraction attack.
pub trait SatSolver {
    fn new_var(&mut self) -> u32;
    fn add_clause(&mut self, lits: &[Lit]);
    fn solve(&mut self, assumptions: &[Lit], deadline: Option<Instant>) -> SolveResult;
    /// Value of `var` in the last satisfying assignment.
    fn value(&self, var: u32) -> bool;
    fn num_vars(&self) -> u32;
    fn num_clauses(&self) -> usize;
}

const UNDEF: u8 = 2;

struct Clause {
    lits: Vec<Lit>,
    learnt: bool,
    activity: f64,
}

#[derive(Default)]
pub struct Cdcl {
    clauses: Vec<Clause>,
    watches: Vec<Vec<usize>>,
    assign: Vec<u8>,
    level: Vec<u32>,
    reason: Vec<Option<usize>>,
    phase: Vec<bool>,
    activity: Vec<f64>,
    heap: Vec<u32>,
    heap_pos: Vec<Option<usize>>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    var_inc: f64,
    cla_inc: f64,
    seen: Vec<bool>,
    model: Vec<bool>,
    unsat: bool,
    conflicts: u64,
    learnts: usize,
}

impl Cdcl {
    pub fn new() -> Self {
        Self { var_inc: 1.0, cla_inc: 1.0, ..Default::default() }
    }

    pub fn conflicts(&self) -> u64 {
        self.conflicts
    }

    fn lit_value(&self, l: Lit) -> u8 {
        let a = self.assign[l.var() as usize];
        if a == UNDEF {
            UNDEF
        } else {
            a ^ u8::from(!l.is_positive())
        }
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    fn enqueue(&mut self, l: Lit, reason: Option<usize>) {
        let v = l.var() as usize;
        self.assign[v] = u8::from(l.is_positive());
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    // heap keyed on activity, max at root
    fn heap_less(&self, a: u32, b: u32) -> bool {
        self.activity[a as usize] > self.activity[b as usize]
    }

    fn heap_up(&mut self, mut i: usize) {
        let v = self.heap[i];
        while i > 0 {
            let p = (i - 1) / 2;
            if !self.heap_less(v, self.heap[p]) {
                break;
            }
            self.heap[i] = self.heap[p];
            self.heap_pos[self.heap[i] as usize] = Some(i);
            i = p;
        }
        self.heap[i] = v;
        self.heap_pos[v as usize] = Some(i);
    }

    fn heap_down(&mut self, mut i: usize) {
        let v = self.heap[i];
        loop {
            let l = 2 * i + 1;
            if l >= self.heap.len() {
                break;
            }
            let r = l + 1;
            let c = if r < self.heap.len() && self.heap_less(self.heap[r], self.heap[l]) { r } else { l };
            if !self.heap_less(self.heap[c], v) {
                break;
            }
            self.heap[i] = self.heap[c];
            self.heap_pos[self.heap[i] as usize] = Some(i);
            i = c;
        }
        self.heap[i] = v;
        self.heap_pos[v as usize] = Some(i);
    }

    fn heap_insert(&mut self, v: u32) {
        if self.heap_pos[v as usize].is_none() {
            self.heap.push(v);
            let i = self.heap.len() - 1;
            self.heap_up(i);
        }
    }

    fn heap_pop(&mut self) -> Option<u32> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().unwrap();
        self.heap_pos[top as usize] = None;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.heap_down(0);
        }
        Some(top)
    }

    fn bump_var(&mut self, v: u32) {
        self.activity[v as usize] += self.var_inc;
        if self.activity[v as usize] > 1e100 {
            self.activity.iter_mut().for_each(|a| *a *= 1e-100);
            self.var_inc *= 1e-100;
        }
        if let Some(i) = self.heap_pos[v as usize] {
            self.heap_up(i);
        }
    }

    fn bump_clause(&mut self, c: usize) {
        self.clauses[c].activity += self.cla_inc;
        if self.clauses[c].activity > 1e20 {
            for cl in self.clauses.iter_mut().filter(|c| c.learnt) {
                cl.activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    fn attach(&mut self, c: usize) {
        let (a, b) = (self.clauses[c].lits[0], self.clauses[c].lits[1]);
        self.watches[(!a).index()].push(c);
        self.watches[(!b).index()].push(c);
    }

    /// Unit propagation; returns a conflicting clause.
    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let mut ws = std::mem::take(&mut self.watches[p.index()]);
            let mut i = 0;
            let mut conflict = None;
            while i < ws.len() {
                let c = ws[i];
                let false_lit = !p;
                {
                    let lits = &mut self.clauses[c].lits;
                    if lits[0] == false_lit {
                        lits.swap(0, 1);
                    }
                }
                let first = self.clauses[c].lits[0];
                if self.lit_value(first) == 1 {
                    i += 1;
                    continue;
                }
                let len = self.clauses[c].lits.len();
                let mut moved = false;
                for k in 2..len {
                    let l = self.clauses[c].lits[k];
                    if self.lit_value(l) != 0 {
                        self.clauses[c].lits.swap(1, k);
                        self.watches[(!l).index()].push(c);
                        ws.swap_remove(i);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                if self.lit_value(first) == 0 {
                    conflict = Some(c);
                    self.qhead = self.trail.len();
                    break;
                }
                self.enqueue(first, Some(c));
                i += 1;
            }
            let rest = std::mem::take(&mut self.watches[p.index()]);
            ws.extend(rest);
            self.watches[p.index()] = ws;
            if conflict.is_some() {
                return conflict;
            }
        }
        None
    }

    fn analyze(&mut self, mut confl: usize) -> (Vec<Lit>, u32) {
        let mut learnt = vec![Lit(0)];
        let mut counter = 0;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        let dl = self.decision_level();
        loop {
            if self.clauses[confl].learnt {
                self.bump_clause(confl);
            }
            let start = usize::from(p.is_some());
            for k in start..self.clauses[confl].lits.len() {
                let q = self.clauses[confl].lits[k];
                let v = q.var() as usize;
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump_var(q.var());
                    if self.level[v] >= dl {
                        counter += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var() as usize] {
                    break;
                }
            }
            let lit = self.trail[idx];
            p = Some(lit);
            self.seen[lit.var() as usize] = false;
            counter -= 1;
            if counter == 0 {
                break;
            }
            confl = self.reason[lit.var() as usize].expect("implied literal has a reason");
        }
        learnt[0] = !p.unwrap();

        // drop literals implied by others already in the clause
        let keep: Vec<bool> = learnt
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                i == 0
                    || match self.reason[l.var() as usize] {
                        None => true,
                        Some(r) => self.clauses[r].lits.iter().skip(1).any(|q| {
                            let v = q.var() as usize;
                            !self.seen[v] && self.level[v] > 0
                        }),
                    }
            })
            .collect();
        for l in &learnt[1..] {
            self.seen[l.var() as usize] = false;
        }
        let mut learnt: Vec<Lit> = learnt.into_iter().zip(keep).filter(|(_, k)| *k).map(|(l, _)| l).collect();

        let bt = if learnt.len() == 1 {
            0
        } else {
            let (mi, _) = learnt.iter().enumerate().skip(1).max_by_key(|(_, l)| self.level[l.var() as usize]).unwrap();
            learnt.swap(1, mi);
            self.level[learnt[1].var() as usize]
        };
        (learnt, bt)
    }

    fn cancel_until(&mut self, level: u32) {
        if self.decision_level() <= level {
            return;
        }
        let lim = self.trail_lim[level as usize];
        for k in (lim..self.trail.len()).rev() {
            let v = self.trail[k].var();
            self.phase[v as usize] = self.trail[k].is_positive();
            self.assign[v as usize] = UNDEF;
            self.reason[v as usize] = None;
            self.heap_insert(v);
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(level as usize);
        self.qhead = lim;
    }

    fn reduce_db(&mut self) {
        let mut learnt: Vec<usize> = (0..self.clauses.len())
            .filter(|&c| self.clauses[c].learnt && self.clauses[c].lits.len() > 2)
            .filter(|&c| {
                let l0 = self.clauses[c].lits[0];
                self.reason[l0.var() as usize] != Some(c)
            })
            .collect();
        learnt.sort_by(|&a, &b| self.clauses[a].activity.partial_cmp(&self.clauses[b].activity).unwrap());
        let remove: std::collections::HashSet<usize> = learnt[..learnt.len() / 2].iter().copied().collect();
        if remove.is_empty() {
            return;
        }
        for w in self.watches.iter_mut() {
            w.retain(|c| !remove.contains(c));
        }
        for &c in &remove {
            self.clauses[c].lits.clear();
            self.clauses[c].learnt = false;
        }
        self.learnts -= remove.len();
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while let Some(v) = self.heap_pop() {
            if self.assign[v as usize] == UNDEF {
                return Some(Lit::new(v, self.phase[v as usize]));
            }
        }
        None
    }

    fn search(&mut self, budget: u64, assumptions: &[Lit], deadline: Option<Instant>) -> Option<SolveResult> {
        let mut local = 0u64;
        loop {
            if let Some(confl) = self.propagate() {
                self.conflicts += 1;
                local += 1;
                if self.decision_level() == 0 {
                    self.unsat = true;
                    return Some(SolveResult::Unsat);
                }
                let (learnt, bt) = self.analyze(confl);
                self.cancel_until(bt);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], None);
                } else {
                    let c = self.clauses.len();
                    self.clauses.push(Clause { lits: learnt.clone(), learnt: true, activity: 0.0 });
                    self.attach(c);
                    self.bump_clause(c);
                    self.learnts += 1;
                    self.enqueue(learnt[0], Some(c));
                }
                self.var_inc /= 0.95;
                self.cla_inc /= 0.999;
                if self.conflicts % 256 == 0 && deadline.is_some_and(|d| Instant::now() >= d) {
                    self.cancel_until(0);
                    return Some(SolveResult::Unknown);
                }
            } else {
                if local >= budget {
                    self.cancel_until(0);
                    return None;
                }
                if self.learnts > 2000 + self.clauses.len() / 3 {
                    self.reduce_db();
                }
                let dl = self.decision_level() as usize;
                let next = if dl < assumptions.len() {
                    let a = assumptions[dl];
                    match self.lit_value(a) {
                        1 => {
                            self.trail_lim.push(self.trail.len());
                            continue;
                        }
                        0 => {
                            self.cancel_until(0);
                            return Some(SolveResult::Unsat);
                        }
                        _ => a,
                    }
                } else {
                    match self.pick_branch() {
                        Some(l) => l,
                        None => {
                            self.model = self.assign.iter().map(|&a| a == 1).collect();
                            self.cancel_until(0);
                            return Some(SolveResult::Sat);
                        }
                    }
                };
                self.trail_lim.push(self.trail.len());
                self.enqueue(next, None);
            }
        }
    }
}

fn luby(mut i: u64) -> u64 {
    let (mut size, mut seq) = (1u64, 0u32);
    while size < i + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != i {
        size = (size - 1) >> 1;
        seq -= 1;
        i %= size;
    }
    1 << seq
}

impl SatSolver for Cdcl {
    fn new_var(&mut self) -> u32 {
        let v = self.assign.len() as u32;
        self.assign.push(UNDEF);
        self.level.push(0);
        self.reason.push(None);
        self.phase.push(false);
        self.activity.push(0.0);
        self.heap_pos.push(None);
        self.seen.push(false);
        self.watches.push(Vec::new());
        self.watches.push(Vec::new());
        self.heap_insert(v);
        v
    }

    fn add_clause(&mut self, lits: &[Lit]) {
        if self.unsat {
            return;
        }
        self.cancel_until(0);
        let mut c: Vec<Lit> = lits.to_vec();
        c.sort();
        c.dedup();
        if c.windows(2).any(|w| w[0] == !w[1]) {
            return;
        }
        if c.iter().any(|&l| self.lit_value(l) == 1) {
            return;
        }
        c.retain(|&l| self.lit_value(l) != 0);
        match c.len() {
            0 => self.unsat = true,
            1 => {
                self.enqueue(c[0], None);
                if self.propagate().is_some() {
                    self.unsat = true;
                }
            }
            _ => {
                let idx = self.clauses.len();
                self.clauses.push(Clause { lits: c, learnt: false, activity: 0.0 });
                self.attach(idx);
            }
        }
    }

    fn solve(&mut self, assumptions: &[Lit], deadline: Option<Instant>) -> SolveResult {
        if self.unsat {
            return SolveResult::Unsat;
        }
        self.cancel_until(0);
        if self.propagate().is_some() {
            self.unsat = true;
            return SolveResult::Unsat;
        }
        let mut restart = 0;
        loop {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                return SolveResult::Unknown;
            }
            if let Some(r) = self.search(100 * luby(restart), assumptions, deadline) {
                return r;
            }
            restart += 1;
        }
    }

    fn value(&self, var: u32) -> bool {
        self.model.get(var as usize).copied().unwrap_or(false)
    }

    fn num_vars(&self) -> u32 {
        self.assign.len() as u32
    }

    fn num_clauses(&self) -> usize {
        self.clauses.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(vars: u32, clauses: &[Vec<Lit>], assumptions: &[Lit]) -> bool {
        (0u32..1 << vars).any(|m| {
            let val = |l: &Lit| ((m >> l.var()) & 1 == 1) == l.is_positive();
            assumptions.iter().all(val) && clauses.iter().all(|c| c.iter().any(val))
        })
    }

    #[test]
    fn luby_sequence() {
        let s: Vec<u64> = (0..15).map(luby).collect();
        assert_eq!(s, [1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]);
    }

    #[test]
    fn agrees_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for round in 0..400 {
            let vars = rng.gen_range(3..=12);
            let count = rng.gen_range(1..=(vars as usize * 5));
            let clauses: Vec<Vec<Lit>> = (0..count)
                .map(|_| (0..rng.gen_range(1..=3)).map(|_| Lit::new(rng.gen_range(0..vars), rng.gen())).collect())
                .collect();
            let assumptions: Vec<Lit> =
                (0..rng.gen_range(0..3)).map(|_| Lit::new(rng.gen_range(0..vars), rng.gen())).collect();
            let mut s = Cdcl::new();
            for _ in 0..vars {
                s.new_var();
            }
            for c in &clauses {
                s.add_clause(c);
            }
            let r = s.solve(&assumptions, None);
            let expect = brute_force(vars, &clauses, &assumptions);
            assert_eq!(r == SolveResult::Sat, expect, "round {round}");
            if r == SolveResult::Sat {
                for c in &clauses {
                    assert!(c.iter().any(|l| s.value(l.var()) == l.is_positive()));
                }
                for a in &assumptions {
                    assert_eq!(s.value(a.var()), a.is_positive());
                }
            }
            // incremental: still answers without assumptions
            let r2 = s.solve(&[], None);
            assert_eq!(r2 == SolveResult::Sat, brute_force(vars, &clauses, &[]));
        }
    }

    #[test]
    fn pigeonhole_is_unsat() {
        // 6 pigeons, 5 holes
        let (p, h) = (6u32, 5u32);
        let mut s = Cdcl::new();
        for _ in 0..p * h {
            s.new_var();
        }
        let x = |i: u32, j: u32| Lit::pos(i * h + j);
        for i in 0..p {
            s.add_clause(&(0..h).map(|j| x(i, j)).collect::<Vec<_>>());
        }
        for j in 0..h {
            for a in 0..p {
                for b in a + 1..p {
                    s.add_clause(&[!x(a, j), !x(b, j)]);
                }
            }
        }
        assert_eq!(s.solve(&[], None), SolveResult::Unsat);
    }

    #[test]
    fn deadline_in_the_past_returns_unknown() {
        let mut s = Cdcl::new();
        let v = s.new_var();
        s.add_clause(&[Lit::pos(v)]);
        assert_eq!(s.solve(&[], Some(Instant::now())), SolveResult::Unknown);
    }
}
