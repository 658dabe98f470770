//! Tabled top-down resolution.
//!
//! Every user predicate is tabled by call variant. A call that reaches a
//! variant already on the evaluation stack consumes the answers found so
//! far instead of recursing; the evaluation of the oldest variant in such a
//! strongly connected group (the leader) is iterated until no table gains
//! an answer, after which the whole group is marked complete. On
//! function-free programs this yields exactly the minimal model.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::rc::Rc;

use thiserror::Error;

use super::clause::{check_goal, check_head, Builtin, Clause, GoalIssue};
use super::term::Term;
use super::unify::Substitution;

/// Caps on a single `solve` call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    /// Total answers across all tables plus the top-level query.
    pub max_answers: usize,
    /// Nesting depth of clause resolutions.
    pub max_depth: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_answers: 1_000_000,
            max_depth: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("instantiation error in `{goal}`")]
    Instantiation { goal: String },
    #[error("type error in `{goal}`: expected {expected}")]
    Type { goal: String, expected: &'static str },
    #[error("evaluation error in `{goal}`: {message}")]
    Evaluation { goal: String, message: String },
    #[error("answer limit of {limit} exceeded")]
    AnswerLimit { limit: usize },
    #[error("derivation depth limit of {limit} exceeded")]
    DepthLimit { limit: usize },
    #[error("unsupported construct `{construct}`")]
    Unsupported { construct: String },
    #[error("invalid clause `{clause}`: {message}")]
    InvalidClause { clause: String, message: String },
    #[error("invalid goal `{goal}`: {message}")]
    InvalidGoal { goal: String, message: String },
}

type Res<T = ()> = Result<T, SolveError>;

const SOLVER_STACK: usize = 512 << 20;
const INF: usize = usize::MAX;

/// An immutable, validated clause database. Safe to share between threads;
/// each `solve` call builds its own tables.
#[derive(Clone, Debug, Default)]
pub struct Program {
    clauses: Vec<Clause>,
}

impl Program {
    pub fn new(clauses: Vec<Clause>) -> Result<Program, SolveError> {
        for clause in &clauses {
            check_head(&clause.head).map_err(|issue| invalid_clause(clause, issue))?;
            for goal in &clause.body {
                check_goal(goal).map_err(|issue| invalid_clause(clause, issue))?;
            }
        }
        Ok(Program { clauses })
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// All distinct answers to the conjunction `goals`, restricted to its
    /// named variables and sorted in standard term order.
    pub fn solve(&self, goals: &[Term], limits: &Limits) -> Res<Vec<Substitution>> {
        for goal in goals {
            check_goal(goal).map_err(|issue| match issue {
                GoalIssue::Unsupported(construct) => SolveError::Unsupported { construct },
                GoalIssue::Invalid(message) => SolveError::InvalidGoal {
                    goal: goal.to_string(),
                    message,
                },
            })?;
        }
        std::thread::scope(|scope| {
            let handle = std::thread::Builder::new()
                .name("nmp-solver".into())
                .stack_size(SOLVER_STACK)
                .spawn_scoped(scope, || self.solve_here(goals, limits))
                .expect("spawn solver thread");
            match handle.join() {
                Ok(result) => result,
                Err(panic) => std::panic::resume_unwind(panic),
            }
        })
    }

    fn solve_here(&self, goals: &[Term], limits: &Limits) -> Res<Vec<Substitution>> {
        let mut db = Db::default();
        for clause in &self.clauses {
            let compiled = db.compile_clause(clause);
            let key = compiled.head.functor().expect("validated head");
            db.preds.entry(key).or_default().push(compiled);
        }

        let mut vars = Vars::default();
        let query = Goal::Conj(goals.iter().map(|g| db.compile_goal(g, &mut vars)).collect());
        let names: Vec<(String, usize)> = vars
            .names
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.starts_with("__"))
            .map(|(i, n)| (n.clone(), i))
            .collect();

        let mut machine = Machine::new(&db, *limits);
        let base = machine.alloc(vars.names.len());
        let mut found: BTreeSet<Vec<Term>> = BTreeSet::new();
        machine.run(&query, base, 0, &mut |m| {
            let cells: Vec<Cell> = names.iter().map(|(_, i)| m.resolve(&Cell::Var(base + i))).collect();
            let row = m.to_terms_renamed(&cells);
            if found.insert(row) {
                m.count_answer()?;
            }
            Ok(())
        })?;

        Ok(found
            .into_iter()
            .map(|row| {
                let map: BTreeMap<String, Term> = names.iter().map(|(n, _)| n.clone()).zip(row).collect();
                Substitution::from_map_unchecked(map)
            })
            .collect())
    }
}

fn invalid_clause(clause: &Clause, issue: GoalIssue) -> SolveError {
    match issue {
        GoalIssue::Unsupported(construct) => SolveError::Unsupported { construct },
        GoalIssue::Invalid(message) => SolveError::InvalidClause {
            clause: clause.to_string(),
            message,
        },
    }
}

/// Solves `goals` against `clauses` with tabling.
pub fn solve(clauses: &[Clause], goals: &[Term], limits: &Limits) -> Res<Vec<Substitution>> {
    Program::new(clauses.to_vec())?.solve(goals, limits)
}

type Sym = u32;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Cell {
    Atom(Sym),
    Int(i64),
    Var(usize),
    Str(Sym, Rc<[Cell]>),
}

impl Cell {
    fn functor(&self) -> Option<(Sym, usize)> {
        match self {
            Cell::Atom(s) => Some((*s, 0)),
            Cell::Str(s, args) => Some((*s, args.len())),
            _ => None,
        }
    }
}

enum Goal {
    Call(Cell),
    Conj(Vec<Goal>),
    Disj(Box<Goal>, Box<Goal>),
    Builtin(Builtin, Vec<Cell>),
}

struct CompiledClause {
    head: Cell,
    body: Goal,
    nvars: usize,
}

#[derive(Default)]
struct Vars {
    names: Vec<String>,
}

impl Vars {
    fn index(&mut self, name: &str) -> usize {
        match self.names.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                self.names.push(name.to_string());
                self.names.len() - 1
            }
        }
    }
}

#[derive(Default)]
struct Db {
    names: Vec<String>,
    index: HashMap<String, Sym>,
    preds: HashMap<(Sym, usize), Vec<CompiledClause>>,
}

impl Db {
    fn intern(&mut self, name: &str) -> Sym {
        if let Some(&s) = self.index.get(name) {
            return s;
        }
        let s = self.names.len() as Sym;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), s);
        s
    }

    fn compile_term(&mut self, term: &Term, vars: &mut Vars) -> Cell {
        match term {
            Term::Atom(a) => Cell::Atom(self.intern(a)),
            Term::Int(n) => Cell::Int(*n),
            Term::Var(v) => Cell::Var(vars.index(v)),
            Term::Compound(f, args) => {
                let f = self.intern(f);
                Cell::Str(f, args.iter().map(|a| self.compile_term(a, vars)).collect())
            }
        }
    }

    fn compile_goal(&mut self, goal: &Term, vars: &mut Vars) -> Goal {
        let (name, arity) = goal.functor().expect("checked goal");
        match (name, arity) {
            (",", 2) => Goal::Conj(goal.flatten_infix(",").into_iter().map(|g| self.compile_goal(g, vars)).collect()),
            (";", 2) => {
                let args = goal.args();
                Goal::Disj(
                    Box::new(self.compile_goal(&args[0], vars)),
                    Box::new(self.compile_goal(&args[1], vars)),
                )
            }
            _ => match Builtin::lookup(name, arity) {
                Some(b) => Goal::Builtin(b, goal.args().iter().map(|a| self.compile_term(a, vars)).collect()),
                None => Goal::Call(self.compile_term(goal, vars)),
            },
        }
    }

    fn compile_clause(&mut self, clause: &Clause) -> CompiledClause {
        let mut vars = Vars::default();
        let head = self.compile_term(&clause.head, &mut vars);
        let body = Goal::Conj(clause.body.iter().map(|g| self.compile_goal(g, &mut vars)).collect());
        CompiledClause {
            head,
            body,
            nvars: vars.names.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TableState {
    Fresh,
    Active(usize),
    Incomplete,
    Complete,
}

struct Table {
    pattern: Cell,
    nvars: usize,
    answers: Vec<(Cell, usize)>,
    seen: HashSet<Cell>,
    state: TableState,
    queued: bool,
}

struct Machine<'d> {
    db: &'d Db,
    limits: Limits,
    bindings: Vec<Option<Cell>>,
    trail: Vec<usize>,
    tables: Vec<Table>,
    table_index: HashMap<Cell, usize>,
    active: Vec<usize>,
    incomplete: Vec<usize>,
    low: usize,
    total_answers: usize,
}

type Cont<'k, 'd> = &'k mut dyn FnMut(&mut Machine<'d>) -> Res;

impl<'d> Machine<'d> {
    fn new(db: &'d Db, limits: Limits) -> Self {
        Machine {
            db,
            limits,
            bindings: Vec::new(),
            trail: Vec::new(),
            tables: Vec::new(),
            table_index: HashMap::new(),
            active: Vec::new(),
            incomplete: Vec::new(),
            low: INF,
            total_answers: 0,
        }
    }

    fn alloc(&mut self, n: usize) -> usize {
        let base = self.bindings.len();
        self.bindings.resize(base + n, None);
        base
    }

    fn mark(&self) -> (usize, usize) {
        (self.trail.len(), self.bindings.len())
    }

    fn undo(&mut self, (trail_len, bindings_len): (usize, usize)) {
        while self.trail.len() > trail_len {
            let v = self.trail.pop().unwrap();
            self.bindings[v] = None;
        }
        self.bindings.truncate(bindings_len);
    }

    fn deref(&self, cell: &Cell) -> Cell {
        let mut cur = cell.clone();
        while let Cell::Var(v) = cur {
            match &self.bindings[v] {
                Some(next) => cur = next.clone(),
                None => break,
            }
        }
        cur
    }

    fn resolve(&self, cell: &Cell) -> Cell {
        match self.deref(cell) {
            Cell::Str(f, args) => Cell::Str(f, args.iter().map(|a| self.resolve(a)).collect()),
            other => other,
        }
    }

    fn occurs(&self, var: usize, cell: &Cell) -> bool {
        match self.deref(cell) {
            Cell::Var(v) => v == var,
            Cell::Str(_, args) => args.iter().any(|a| self.occurs(var, a)),
            _ => false,
        }
    }

    fn bind(&mut self, var: usize, value: Cell) {
        self.bindings[var] = Some(value);
        self.trail.push(var);
    }

    /// Unifies with occurs check. On failure, bindings made along the way
    /// stay on the trail; callers undo to their mark.
    fn unify(&mut self, a: &Cell, b: &Cell) -> bool {
        let a = self.deref(a);
        let b = self.deref(b);
        match (&a, &b) {
            (Cell::Var(x), Cell::Var(y)) if x == y => true,
            (Cell::Var(x), other) | (other, Cell::Var(x)) => {
                if self.occurs(*x, other) {
                    return false;
                }
                self.bind(*x, other.clone());
                true
            }
            (Cell::Atom(x), Cell::Atom(y)) => x == y,
            (Cell::Int(x), Cell::Int(y)) => x == y,
            (Cell::Str(f, xs), Cell::Str(g, ys)) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|(x, y)| self.unify(x, y))
            }
            _ => false,
        }
    }

    fn instantiate(cell: &Cell, base: usize) -> Cell {
        match cell {
            Cell::Var(v) => Cell::Var(base + v),
            Cell::Str(f, args) => Cell::Str(*f, args.iter().map(|a| Self::instantiate(a, base)).collect()),
            other => other.clone(),
        }
    }

    /// Renumbers the variables of a resolved cell by first occurrence.
    fn canonical(cell: &Cell) -> (Cell, usize) {
        fn go(cell: &Cell, map: &mut Vec<usize>) -> Cell {
            match cell {
                Cell::Var(v) => match map.iter().position(|x| x == v) {
                    Some(i) => Cell::Var(i),
                    None => {
                        map.push(*v);
                        Cell::Var(map.len() - 1)
                    }
                },
                Cell::Str(f, args) => Cell::Str(*f, args.iter().map(|a| go(a, map)).collect()),
                other => other.clone(),
            }
        }
        let mut map = Vec::new();
        let out = go(cell, &mut map);
        (out, map.len())
    }

    fn to_term(&self, cell: &Cell, names: &mut Vec<usize>) -> Term {
        match self.deref(cell) {
            Cell::Atom(s) => Term::Atom(self.db.names[s as usize].clone()),
            Cell::Int(n) => Term::Int(n),
            Cell::Var(v) => {
                let i = match names.iter().position(|x| *x == v) {
                    Some(i) => i,
                    None => {
                        names.push(v);
                        names.len() - 1
                    }
                };
                Term::Var(format!("_G{i}"))
            }
            Cell::Str(f, args) => Term::Compound(
                self.db.names[f as usize].clone(),
                args.iter().map(|a| self.to_term(a, names)).collect(),
            ),
        }
    }

    fn to_terms_renamed(&self, cells: &[Cell]) -> Vec<Term> {
        let mut names = Vec::new();
        cells.iter().map(|c| self.to_term(c, &mut names)).collect()
    }

    fn show_goal(&self, b: Builtin, args: &[Cell]) -> String {
        let name = match b {
            Builtin::Between => "between",
            Builtin::Is => "is",
            Builtin::Unify => "=",
            Builtin::Identical => "==",
            Builtin::NotIdentical => "\\==",
            Builtin::Less => "<",
            Builtin::Greater => ">",
            Builtin::LessEq => "=<",
            Builtin::GreaterEq => ">=",
        };
        let mut names = Vec::new();
        Term::Compound(name.into(), args.iter().map(|a| self.to_term(a, &mut names)).collect()).to_string()
    }

    fn count_answer(&mut self) -> Res {
        self.total_answers += 1;
        if self.total_answers > self.limits.max_answers {
            return Err(SolveError::AnswerLimit {
                limit: self.limits.max_answers,
            });
        }
        Ok(())
    }

    fn run(&mut self, goal: &'d Goal, base: usize, depth: usize, k: Cont<'_, 'd>) -> Res {
        match goal {
            Goal::Conj(goals) => self.run_conj(goals, base, depth, k),
            Goal::Disj(left, right) => {
                self.run(left, base, depth, k)?;
                self.run(right, base, depth, k)
            }
            Goal::Call(lit) => {
                let lit = Self::instantiate(lit, base);
                self.call(lit, depth, k)
            }
            Goal::Builtin(b, args) => {
                let args: Vec<Cell> = args.iter().map(|a| Self::instantiate(a, base)).collect();
                self.builtin(*b, &args, k)
            }
        }
    }

    fn run_conj(&mut self, goals: &'d [Goal], base: usize, depth: usize, k: Cont<'_, 'd>) -> Res {
        match goals.split_first() {
            None => k(self),
            Some((first, rest)) => self.run(first, base, depth, &mut |m| m.run_conj(rest, base, depth, &mut *k)),
        }
    }

    fn call(&mut self, lit: Cell, depth: usize, k: Cont<'_, 'd>) -> Res {
        let lit = self.resolve(&lit);
        let (pattern, nvars) = Self::canonical(&lit);
        let idx = match self.table_index.get(&pattern) {
            Some(&i) => i,
            None => {
                let i = self.tables.len();
                self.tables.push(Table {
                    pattern: pattern.clone(),
                    nvars,
                    answers: Vec::new(),
                    seen: HashSet::new(),
                    state: TableState::Fresh,
                    queued: false,
                });
                self.table_index.insert(pattern, i);
                i
            }
        };
        match self.tables[idx].state {
            TableState::Complete => {}
            TableState::Active(pos) => self.low = self.low.min(pos),
            TableState::Fresh | TableState::Incomplete => self.evaluate(idx, depth + 1)?,
        }
        let mut i = 0;
        // Answers may be appended while we iterate.
        while let Some((answer, n)) = self.tables[idx].answers.get(i).cloned() {
            i += 1;
            let mark = self.mark();
            let base = self.alloc(n);
            let inst = Self::instantiate(&answer, base);
            if self.unify(&lit, &inst) {
                k(self)?;
            }
            self.undo(mark);
        }
        Ok(())
    }

    fn add_answer(&mut self, idx: usize, answer: &Cell) -> Res {
        let (canon, n) = Self::canonical(answer);
        let table = &mut self.tables[idx];
        if table.seen.insert(canon.clone()) {
            table.answers.push((canon, n));
            self.count_answer()?;
        }
        Ok(())
    }

    fn evaluate(&mut self, idx: usize, depth: usize) -> Res {
        if depth > self.limits.max_depth {
            return Err(SolveError::DepthLimit {
                limit: self.limits.max_depth,
            });
        }
        let pos = self.active.len();
        self.active.push(idx);
        self.tables[idx].state = TableState::Active(pos);
        let saved_low = self.low;
        let incomplete_mark = self.incomplete.len();
        let pattern = self.tables[idx].pattern.clone();
        let nvars = self.tables[idx].nvars;
        let db = self.db;
        let clauses: &'d [CompiledClause] = pattern
            .functor()
            .and_then(|key| db.preds.get(&key))
            .map(Vec::as_slice)
            .unwrap_or(&[]);

        let mut frame_low = INF;
        loop {
            self.low = INF;
            let before = self.total_answers;
            for clause in clauses {
                let mark = self.mark();
                let goal = Self::instantiate(&pattern, self.alloc(nvars));
                let head = Self::instantiate(&clause.head, self.alloc(clause.nvars));
                let cbase = mark.1 + nvars;
                if self.unify(&goal, &head) {
                    self.run(&clause.body, cbase, depth, &mut |m| {
                        let answer = m.resolve(&goal);
                        m.add_answer(idx, &answer)
                    })?;
                }
                self.undo(mark);
            }
            let iter_low = self.low;
            frame_low = frame_low.min(iter_low);
            if iter_low == INF || self.total_answers == before {
                break;
            }
        }
        self.active.pop();

        if frame_low >= pos {
            self.tables[idx].state = TableState::Complete;
            for t in self.incomplete.drain(incomplete_mark..) {
                self.tables[t].state = TableState::Complete;
                self.tables[t].queued = false;
            }
        } else {
            self.tables[idx].state = TableState::Incomplete;
            if !self.tables[idx].queued {
                self.tables[idx].queued = true;
                self.incomplete.push(idx);
            }
        }
        self.low = saved_low.min(if frame_low < pos { frame_low } else { INF });
        Ok(())
    }

    fn int_arg(&self, b: Builtin, args: &[Cell], i: usize) -> Res<i64> {
        match self.deref(&args[i]) {
            Cell::Int(n) => Ok(n),
            Cell::Var(_) => Err(SolveError::Instantiation {
                goal: self.show_goal(b, args),
            }),
            _ => Err(SolveError::Type {
                goal: self.show_goal(b, args),
                expected: "integer",
            }),
        }
    }

    fn eval(&self, cell: &Cell, b: Builtin, args: &[Cell]) -> Res<i64> {
        let goal = || self.show_goal(b, args);
        match self.deref(cell) {
            Cell::Int(n) => Ok(n),
            Cell::Var(_) => Err(SolveError::Instantiation { goal: goal() }),
            Cell::Atom(_) => Err(SolveError::Type {
                goal: goal(),
                expected: "evaluable",
            }),
            Cell::Str(f, xs) => {
                let name = self.db.names[f as usize].as_str();
                let overflow = || SolveError::Evaluation {
                    goal: goal(),
                    message: "integer overflow".into(),
                };
                match (name, xs.len()) {
                    ("-", 1) => self.eval(&xs[0], b, args)?.checked_neg().ok_or_else(overflow),
                    ("+", 1) => self.eval(&xs[0], b, args),
                    ("+" | "-" | "*" | "//", 2) => {
                        let x = self.eval(&xs[0], b, args)?;
                        let y = self.eval(&xs[1], b, args)?;
                        match name {
                            "+" => x.checked_add(y).ok_or_else(overflow),
                            "-" => x.checked_sub(y).ok_or_else(overflow),
                            "*" => x.checked_mul(y).ok_or_else(overflow),
                            _ => {
                                if y == 0 {
                                    Err(SolveError::Evaluation {
                                        goal: goal(),
                                        message: "division by zero".into(),
                                    })
                                } else {
                                    x.checked_div(y).ok_or_else(overflow)
                                }
                            }
                        }
                    }
                    _ => Err(SolveError::Evaluation {
                        goal: goal(),
                        message: format!("unsupported arithmetic function {}/{}", name, xs.len()),
                    }),
                }
            }
        }
    }

    fn builtin(&mut self, b: Builtin, args: &[Cell], k: Cont<'_, 'd>) -> Res {
        match b {
            Builtin::Unify => {
                let mark = self.mark();
                if self.unify(&args[0], &args[1]) {
                    k(self)?;
                }
                self.undo(mark);
                Ok(())
            }
            Builtin::Identical | Builtin::NotIdentical => {
                let same = self.resolve(&args[0]) == self.resolve(&args[1]);
                if same == (b == Builtin::Identical) {
                    k(self)?;
                }
                Ok(())
            }
            Builtin::Less | Builtin::Greater | Builtin::LessEq | Builtin::GreaterEq => {
                let x = self.eval(&args[0], b, args)?;
                let y = self.eval(&args[1], b, args)?;
                let holds = match b {
                    Builtin::Less => x < y,
                    Builtin::Greater => x > y,
                    Builtin::LessEq => x <= y,
                    _ => x >= y,
                };
                if holds {
                    k(self)?;
                }
                Ok(())
            }
            Builtin::Is => {
                let value = self.eval(&args[1], b, args)?;
                let mark = self.mark();
                if self.unify(&args[0], &Cell::Int(value)) {
                    k(self)?;
                }
                self.undo(mark);
                Ok(())
            }
            Builtin::Between => {
                let lo = self.int_arg(b, args, 0)?;
                let hi = self.int_arg(b, args, 1)?;
                match self.deref(&args[2]) {
                    Cell::Int(x) => {
                        if lo <= x && x <= hi {
                            k(self)?;
                        }
                        Ok(())
                    }
                    Cell::Var(v) => {
                        for x in lo..=hi {
                            let mark = self.mark();
                            self.bind(v, Cell::Int(x));
                            k(self)?;
                            self.undo(mark);
                        }
                        Ok(())
                    }
                    _ => Err(SolveError::Type {
                        goal: self.show_goal(b, args),
                        expected: "integer",
                    }),
                }
            }
        }
    }
}
