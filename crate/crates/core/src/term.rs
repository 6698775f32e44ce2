//! Logic terms, substitutions, and unification.
//!
//! Terms are the universal currency of the planner: states, conditions,
//! effects, and action names are all `Term` values. Atoms and functors are
//! lowercase identifiers, variables are uppercase (or `_`), and the only
//! numeric leaves are integers.

use std::collections::BTreeMap;
use std::fmt;

/// A logic term. Variables carry both their source name (for printing) and a
/// unique id (for identity); two variables written `X` in different clauses
/// never share an id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Atom(String),
    Int(i64),
    Var { name: String, id: u64 },
    Compound { functor: String, args: Vec<Term> },
}

/// True iff `name` is a valid atom/functor name: `[a-z][A-Za-z0-9_]*`.
pub fn is_valid_functor(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Term {
    pub fn atom(name: impl Into<String>) -> Term {
        let name = name.into();
        debug_assert!(is_valid_functor(&name), "bad atom name: {name}");
        Term::Atom(name)
    }

    pub fn int(value: i64) -> Term {
        Term::Int(value)
    }

    pub fn var(name: impl Into<String>, id: u64) -> Term {
        Term::Var { name: name.into(), id }
    }

    /// A compound term; arity must be at least 1.
    pub fn compound(functor: impl Into<String>, args: Vec<Term>) -> Term {
        let functor = functor.into();
        debug_assert!(is_valid_functor(&functor), "bad functor: {functor}");
        assert!(!args.is_empty(), "compound terms need arity >= 1");
        Term::Compound { functor, args }
    }

    /// Functor name for atoms and compounds, `None` for variables and ints.
    pub fn functor(&self) -> Option<&str> {
        match self {
            Term::Atom(name) => Some(name),
            Term::Compound { functor, .. } => Some(functor),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Compound { args, .. } => args,
            _ => &[],
        }
    }

    pub fn arity(&self) -> usize {
        self.args().len()
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var { .. } => false,
            Term::Atom(_) | Term::Int(_) => true,
            Term::Compound { args, .. } => args.iter().all(Term::is_ground),
        }
    }

    /// Collect the ids of all variables occurring in the term, in order of
    /// first occurrence.
    pub fn var_ids(&self) -> Vec<u64> {
        let mut out = Vec::new();
        self.collect_var_ids(&mut out);
        out
    }

    fn collect_var_ids(&self, out: &mut Vec<u64>) {
        match self {
            Term::Var { id, .. } => {
                if !out.contains(id) {
                    out.push(*id);
                }
            }
            Term::Compound { args, .. } => {
                for a in args {
                    a.collect_var_ids(out);
                }
            }
            _ => {}
        }
    }

    /// Structural equality up to a consistent renaming of variables.
    pub fn alpha_eq(&self, other: &Term) -> bool {
        fn go(a: &Term, b: &Term, fwd: &mut BTreeMap<u64, u64>, bwd: &mut BTreeMap<u64, u64>) -> bool {
            match (a, b) {
                (Term::Atom(p), Term::Atom(q)) => p == q,
                (Term::Int(m), Term::Int(n)) => m == n,
                (Term::Var { id: i, .. }, Term::Var { id: j, .. }) => {
                    let f = *fwd.entry(*i).or_insert(*j);
                    let g = *bwd.entry(*j).or_insert(*i);
                    f == *j && g == *i
                }
                (
                    Term::Compound { functor: f, args: xs },
                    Term::Compound { functor: g, args: ys },
                ) => {
                    f == g
                        && xs.len() == ys.len()
                        && xs.iter().zip(ys).all(|(x, y)| go(x, y, fwd, bwd))
                }
                _ => false,
            }
        }
        go(self, other, &mut BTreeMap::new(), &mut BTreeMap::new())
    }

    /// Copy the term with every variable replaced by a fresh one (names kept,
    /// ids renewed consistently within this call).
    pub fn rename_apart(&self, gen: &mut VarGen) -> Term {
        let mut map = BTreeMap::new();
        self.rename_with(gen, &mut map)
    }

    pub(crate) fn rename_with(&self, gen: &mut VarGen, map: &mut BTreeMap<u64, u64>) -> Term {
        match self {
            Term::Var { name, id } => {
                let new_id = *map.entry(*id).or_insert_with(|| gen.fresh_id());
                Term::Var { name: name.clone(), id: new_id }
            }
            Term::Compound { functor, args } => Term::Compound {
                functor: functor.clone(),
                args: args.iter().map(|a| a.rename_with(gen, map)).collect(),
            },
            other => other.clone(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Atom(name) => write!(f, "{name}"),
            Term::Int(n) => write!(f, "{n}"),
            Term::Var { name, .. } => write!(f, "{name}"),
            Term::Compound { functor, args } => {
                write!(f, "{functor}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Source of fresh variable ids. Each parsed file or search episode owns one,
/// so ids never collide across schemas.
#[derive(Debug, Default, Clone)]
pub struct VarGen {
    next: u64,
}

impl VarGen {
    pub fn new() -> VarGen {
        VarGen::default()
    }

    /// Generator whose ids start above an existing range.
    pub fn starting_at(next: u64) -> VarGen {
        VarGen { next }
    }

    pub fn fresh_id(&mut self) -> u64 {
        let id = self.next;
        self.next += 1;
        id
    }

    /// Fresh anonymous variable; every `_` occurrence gets its own id.
    pub fn fresh_anon(&mut self) -> Term {
        let id = self.fresh_id();
        Term::Var { name: "_".into(), id }
    }
}

/// An idempotent variable binding map keyed by variable id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Substitution {
    bindings: BTreeMap<u64, Term>,
}

impl Substitution {
    pub fn empty() -> Substitution {
        Substitution::default()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn get(&self, id: u64) -> Option<&Term> {
        self.bindings.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &Term)> {
        self.bindings.iter().map(|(k, v)| (*k, v))
    }

    pub(crate) fn bind(&mut self, id: u64, t: Term) {
        self.bindings.insert(id, t);
    }

    /// Follow top-level variable bindings until an unbound variable or a
    /// non-variable term is reached.
    pub fn resolve<'a>(&'a self, mut t: &'a Term) -> &'a Term {
        let mut hops = 0;
        while let Term::Var { id, .. } = t {
            match self.bindings.get(id) {
                Some(next) => {
                    t = next;
                    hops += 1;
                    if hops > self.bindings.len() {
                        break; // cyclic chain; leave as-is
                    }
                }
                None => break,
            }
        }
        t
    }

    /// Replace every bound variable recursively until fixpoint. Unbound
    /// variables stay. Cyclic bindings (possible only with the occurs check
    /// disabled) are left unexpanded rather than looping.
    pub fn apply(&self, t: &Term) -> Term {
        let mut trail = Vec::new();
        self.apply_guarded(t, &mut trail)
    }

    fn apply_guarded(&self, t: &Term, trail: &mut Vec<u64>) -> Term {
        match t {
            Term::Var { id, .. } => match self.bindings.get(id) {
                Some(bound) if !trail.contains(id) => {
                    trail.push(*id);
                    let out = self.apply_guarded(bound, trail);
                    trail.pop();
                    out
                }
                _ => t.clone(),
            },
            Term::Compound { functor, args } => Term::Compound {
                functor: functor.clone(),
                args: args.iter().map(|a| self.apply_guarded(a, trail)).collect(),
            },
            _ => t.clone(),
        }
    }
}

/// Most general unifier of `a` and `b` extending `s`, without the occurs
/// check (the planner only ever matches against ground state literals, where
/// the check can never trigger).
pub fn unify(a: &Term, b: &Term, s: &Substitution) -> Option<Substitution> {
    unify_with(a, b, s, false)
}

/// Unification with an explicit occurs-check switch.
pub fn unify_with(a: &Term, b: &Term, s: &Substitution, occurs_check: bool) -> Option<Substitution> {
    let mut out = s.clone();
    let mut work = vec![(a.clone(), b.clone())];
    while let Some((x, y)) = work.pop() {
        let x = out.resolve(&x).clone();
        let y = out.resolve(&y).clone();
        match (x, y) {
            (Term::Var { id: i, .. }, Term::Var { id: j, .. }) if i == j => {}
            (Term::Var { id, .. }, t) | (t, Term::Var { id, .. }) => {
                if occurs_check && occurs_in(id, &t, &out) {
                    return None;
                }
                out.bind(id, t);
            }
            (Term::Atom(p), Term::Atom(q)) => {
                if p != q {
                    return None;
                }
            }
            (Term::Int(m), Term::Int(n)) => {
                if m != n {
                    return None;
                }
            }
            (Term::Compound { functor: f, args: xs }, Term::Compound { functor: g, args: ys }) => {
                if f != g || xs.len() != ys.len() {
                    return None;
                }
                // Push in reverse so pairs are processed left to right.
                for pair in xs.into_iter().zip(ys).rev() {
                    work.push(pair);
                }
            }
            _ => return None,
        }
    }
    Some(out)
}

fn occurs_in(id: u64, t: &Term, s: &Substitution) -> bool {
    match s.resolve(t) {
        Term::Var { id: j, .. } => *j == id,
        Term::Compound { args, .. } => args.iter().any(|a| occurs_in(id, a, s)),
        _ => false,
    }
}
