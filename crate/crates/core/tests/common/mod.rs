//! Fixture builders shared by the integration test targets: the running
//! example, the named query families, the degree fixtures with their
//! hand-built decompositions, and the scaling family.

#![allow(dead_code)]

use std::collections::BTreeSet;

use sharpcq_core::decomp::HypertreeDecomposition;
use sharpcq_core::hom;
use sharpcq_core::parse::parse_query;
use sharpcq_core::{Atom, Const, Database, Query, Term, Var};

pub fn vars(names: &str) -> BTreeSet<Var> {
    if names.is_empty() {
        return BTreeSet::new();
    }
    names.split(',').map(|s| Var::new(s.trim())).collect()
}

/// The running example: three quantified components (one of them with a
/// replicated branch that cores away), sharp width 2.
pub fn q0() -> Query {
    parse_query(
        "q0(A,B,C) :- mw(A,B,I), wt(B,D), wi(B,E), pt(C,D), st(D,F), st(D,G), \
         rr(G,H), rr(F,H), rr(D,H).",
    )
    .unwrap()
}

/// The four-cycle with opposite corners free: sharp width 2 with the
/// frontier edge {A,C}.
pub fn q1() -> Query {
    parse_query("q1(A,C) :- s1(A,B), s2(B,C), s3(C,D), s4(D,A).").unwrap()
}

/// A rotation database for [`q1`]: each relation holds the successor
/// pairs of a 4-element cycle, so the four rotations are the solutions.
pub fn cycle_db() -> Database {
    let mut db = Database::new();
    for rel in ["s1", "s2", "s3", "s4"] {
        for i in 0..4 {
            db.insert(rel, vec![Const::new(format!("n{i}")), Const::new(format!("n{}", (i + 1) % 4))])
                .unwrap();
        }
    }
    db
}

/// The Boolean product family: all atoms `r(X_i, Y_j)` for `i, j` in
/// `1..=n`, with no free variables.  Its core is one atom, its sharp
/// width is 1, while its plain generalized width is `n`.
pub fn q2n(n: usize) -> Query {
    let mut atoms = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            atoms.push(Atom::new(
                "r",
                vec![Term::var(format!("X{i}")), Term::var(format!("Y{j}"))],
            ));
        }
    }
    Query::new("Q2", vec![], atoms).unwrap()
}

/// The matching-plus-paths family: `r(X_i,Y_i)` for `i` in `1..=n`,
/// `r(X_i,X_{i+1})` and `r(Y_i,Y_{i+1})` for `i` in `1..n`, with
/// `X_1..X_n` free.  Its quantified star size grows like `n/2` while its
/// sharp width stays 1.
pub fn q1n(n: usize) -> Query {
    let mut atoms = Vec::new();
    for i in 1..=n {
        atoms.push(Atom::new(
            "r",
            vec![Term::var(format!("X{i}")), Term::var(format!("Y{i}"))],
        ));
    }
    for i in 1..n {
        atoms.push(Atom::new(
            "r",
            vec![Term::var(format!("X{i}")), Term::var(format!("X{}", i + 1))],
        ));
        atoms.push(Atom::new(
            "r",
            vec![Term::var(format!("Y{i}")), Term::var(format!("Y{}", i + 1))],
        ));
    }
    let free: Vec<Var> = (1..=n).map(|i| Var::new(format!("X{i}"))).collect();
    Query::new("Q1", free, atoms).unwrap()
}

/// The core of the colored query with the color markers stripped back
/// out, plus the atoms it dropped.
pub fn free_preserving_core(q: &Query) -> (Query, Vec<Atom>) {
    let prefix = hom::color_prefix(q);
    let colored = hom::color(q);
    let colored_core = hom::core(&colored).unwrap();
    let kept: Vec<Atom> = colored_core
        .atoms
        .iter()
        .filter(|a| !a.rel.starts_with(&prefix))
        .cloned()
        .collect();
    let core_q = q.with_atoms(kept).unwrap();
    let dropped: Vec<Atom> =
        q.atoms.iter().filter(|a| !core_q.atoms.contains(a)).cloned().collect();
    (core_q, dropped)
}

/// The `i`-th bit of `j`, as the constant "0" or "1" (1-based `i`).
pub fn bit(j: usize, i: usize) -> Const {
    Const::new(if (j >> (i - 1)) & 1 == 1 { "1" } else { "0" })
}

/// The star family: `r(X0,Y1..Yh) ∧ s(Y0,Y1..Yh) ∧ ⋀ w_i(Xi,Yi)`, free
/// `X0..Xh`, on the bit-encoding database with `m = 2^h` values.  The
/// count is `m·(m/2)^h`.
pub fn star_family(h: usize) -> (Query, Database) {
    let m = 1usize << h;
    let mut r_args = vec![Term::var("X0")];
    let mut s_args = vec![Term::var("Y0")];
    for i in 1..=h {
        r_args.push(Term::var(format!("Y{i}")));
        s_args.push(Term::var(format!("Y{i}")));
    }
    let mut atoms = vec![Atom::new("r", r_args), Atom::new("s", s_args)];
    for i in 1..=h {
        atoms.push(Atom::new(
            format!("w{i}"),
            vec![Term::var(format!("X{i}")), Term::var(format!("Y{i}"))],
        ));
    }
    let free: Vec<Var> = (0..=h).map(|i| Var::new(format!("X{i}"))).collect();
    let q = Query::new("QS", free, atoms).unwrap();

    let mut db = Database::new();
    for j in 0..m {
        let mut row = vec![Const::new(format!("a{j}"))];
        for i in 1..=h {
            row.push(bit(j, i));
        }
        db.insert("r", row).unwrap();
        let mut row = vec![Const::new(format!("n{j}"))];
        for i in 1..=h {
            row.push(bit(j, i));
        }
        db.insert("s", row).unwrap();
    }
    for i in 1..=h {
        for x in 0..m {
            db.insert(format!("w{i}"), vec![Const::new(format!("n{x}")), bit(x, i)]).unwrap();
        }
    }
    (q, db)
}

/// The star family extended with an unconstrained hub: `rb` gains a
/// column `Z` taking all `m` values, and `v(Z,X1)` holds all pairs.
/// Same count as the star family, but every width-1 decomposition has
/// degree `m` somewhere.
pub fn degree_family(h: usize) -> (Query, Database) {
    let m = 1usize << h;
    let mut rb_args = vec![Term::var("X0")];
    let mut s_args = vec![Term::var("Y0")];
    for i in 1..=h {
        rb_args.push(Term::var(format!("Y{i}")));
        s_args.push(Term::var(format!("Y{i}")));
    }
    rb_args.push(Term::var("Z"));
    let mut atoms = vec![Atom::new("rb", rb_args), Atom::new("s", s_args)];
    for i in 1..=h {
        atoms.push(Atom::new(
            format!("w{i}"),
            vec![Term::var(format!("X{i}")), Term::var(format!("Y{i}"))],
        ));
    }
    atoms.push(Atom::new("v", vec![Term::var("Z"), Term::var("X1")]));
    let free: Vec<Var> = (0..=h).map(|i| Var::new(format!("X{i}"))).collect();
    let q = Query::new("QD", free, atoms).unwrap();

    let mut db = Database::new();
    for j in 0..m {
        for t in 0..m {
            let mut row = vec![Const::new(format!("a{j}"))];
            for i in 1..=h {
                row.push(bit(j, i));
            }
            row.push(Const::new(format!("z{t}")));
            db.insert("rb", row).unwrap();
        }
        let mut row = vec![Const::new(format!("n{j}"))];
        for i in 1..=h {
            row.push(bit(j, i));
        }
        db.insert("s", row).unwrap();
    }
    for i in 1..=h {
        for x in 0..m {
            db.insert(format!("w{i}"), vec![Const::new(format!("n{x}")), bit(x, i)]).unwrap();
        }
    }
    for t in 0..m {
        for x in 0..m {
            db.insert("v", vec![Const::new(format!("z{t}")), Const::new(format!("n{x}"))])
                .unwrap();
        }
    }
    (q, db)
}

/// A width-1 decomposition of the star family: root `{X0,Y1..Yh}` with
/// `r`; a child `{Y0..Yh}` with `s`; a leaf per `w_i`.
pub fn star_width_one_hd(q: &Query, h: usize) -> HypertreeDecomposition {
    let mut root = vars("X0");
    let mut s_bag = vars("Y0");
    for i in 1..=h {
        root.insert(Var::new(format!("Y{i}")));
        s_bag.insert(Var::new(format!("Y{i}")));
    }
    let mut chi = vec![root, s_bag];
    let mut lambda = vec![vec![q.atoms[0].clone()], vec![q.atoms[1].clone()]];
    let mut parent = vec![None, Some(0)];
    for i in 1..=h {
        chi.push(vars(&format!("X{i},Y{i}")));
        lambda.push(vec![q.atoms[1 + i].clone()]);
        parent.push(Some(0));
    }
    HypertreeDecomposition::new(chi, lambda, parent).unwrap()
}

/// The width-2 variant that merges the root with its child:
/// `{X0,Y0..Yh}` labelled `{r,s}`; a leaf per `w_i`.
pub fn star_merged_hd(q: &Query, h: usize) -> HypertreeDecomposition {
    let mut root = vars("X0,Y0");
    for i in 1..=h {
        root.insert(Var::new(format!("Y{i}")));
    }
    let mut chi = vec![root];
    let mut lambda = vec![vec![q.atoms[0].clone(), q.atoms[1].clone()]];
    let mut parent = vec![None];
    for i in 1..=h {
        chi.push(vars(&format!("X{i},Y{i}")));
        lambda.push(vec![q.atoms[1 + i].clone()]);
        parent.push(Some(0));
    }
    HypertreeDecomposition::new(chi, lambda, parent).unwrap()
}

/// The scaling family: a triangle `r1(A,B) ∧ r2(B,C) ∧ r3(C,A)` (all
/// variables free, sharp width 2) over stay-or-advance successor
/// relations on an `n`-cycle, padded to exactly `total` tuples.  Every
/// solution is a diagonal `(a,a,a)`, so the count is `n = total / 6`.
pub fn scaling_triangle(total: usize) -> (Query, Database, usize) {
    let n = total / 6;
    assert!(n >= 5, "the closed-form count needs n >= 5");
    let extra = total - 6 * n;
    let q = parse_query("qt(A,B,C) :- r1(A,B), r2(B,C), r3(C,A).").unwrap();
    let node = |j: usize| Const::new(format!("e{j}"));
    let mut db = Database::new();
    for rel in ["r1", "r2", "r3"] {
        for j in 0..n {
            db.insert(rel, vec![node(j), node(j)]).unwrap();
            db.insert(rel, vec![node(j), node((j + 1) % n)]).unwrap();
        }
    }
    // Pad with skip-two edges, which create no new triangles because a
    // solution's step lengths must sum to 0 modulo n with each step in
    // {0, 1, 2} and n > 4.
    for j in 0..extra {
        db.insert("r1", vec![node(j), node((j + 2) % n)]).unwrap();
    }
    assert_eq!(db.tuple_count(), total);
    (q, db, n)
}
