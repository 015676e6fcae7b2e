use std::collections::BTreeSet;

use super::naive::{Board, Kind, Pc, Sq};

/// Squares a piece of `kind` may occupy in some position.
fn may_stand(kind: Kind, red: bool, (f, r): Sq) -> bool {
    let rel = if red { r } else { 11 - r };
    match kind {
        Kind::K => (4..=6).contains(&f) && rel <= 3,
        Kind::A => matches!((f, rel), (4, 1) | (6, 1) | (5, 2) | (4, 3) | (6, 3)),
        Kind::E => matches!((f, rel), (3, 1) | (7, 1) | (1, 3) | (5, 3) | (9, 3) | (3, 5) | (7, 5)),
        Kind::P => rel >= 6 || (rel >= 4 && f % 2 == 1),
        Kind::H | Kind::R | Kind::C => true,
    }
}

fn collect(board: &Board, movers: &[Sq], out: &mut BTreeSet<String>) {
    for &from in movers {
        for to in Board::squares() {
            if board.can_reach(from, to) {
                if let Some(t) = board.wxf(from, to) {
                    out.insert(t);
                }
            }
        }
    }
}

/// Places one or two same-kind movers plus enemy blockers on an otherwise
/// empty board and records every token the movers can produce.
pub fn brute_force_tokens() -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let all: Vec<Sq> = Board::squares().collect();
    for red in [true, false] {
        let enemy = Some(Pc { red: !red, kind: Kind::R });
        for kind in [Kind::K, Kind::A, Kind::E, Kind::H, Kind::R, Kind::C, Kind::P] {
            let me = Some(Pc { red, kind });
            let homes: Vec<Sq> = all.iter().copied().filter(|&s| may_stand(kind, red, s)).collect();
            let extras = if kind == Kind::C { 2 } else { 1 };
            for &s in &homes {
                let mut b = Board::empty(red);
                b.set(s, me);
                collect(&b, &[s], &mut out);
                for (i, &x) in all.iter().enumerate() {
                    if x == s {
                        continue;
                    }
                    b.set(x, enemy);
                    collect(&b, &[s], &mut out);
                    if extras == 2 {
                        for &y in &all[i + 1..] {
                            if y == s {
                                continue;
                            }
                            b.set(y, enemy);
                            collect(&b, &[s], &mut out);
                            b.set(y, None);
                        }
                    }
                    b.set(x, None);
                }
            }
            if kind == Kind::K {
                continue;
            }
            for &s in &homes {
                for &t in &homes {
                    if t.0 != s.0 || t.1 <= s.1 {
                        continue;
                    }
                    let mut b = Board::empty(red);
                    b.set(s, me);
                    b.set(t, me);
                    collect(&b, &[s, t], &mut out);
                    for &x in &all {
                        if x == s || x == t {
                            continue;
                        }
                        b.set(x, enemy);
                        collect(&b, &[s, t], &mut out);
                        b.set(x, None);
                    }
                }
            }
        }
    }
    out
}
