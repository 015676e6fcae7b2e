//! Deliberately simple reference rules: every (from, to) pair is tested
//! against a per-piece geometric predicate. Shares nothing with the engine
//! beyond the debug board text it is built from.

#![allow(dead_code)]

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Kind {
    K,
    A,
    E,
    H,
    R,
    C,
    P,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Pc {
    pub red: bool,
    pub kind: Kind,
}

/// cells[file-1][rank-1]
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Board {
    pub cells: [[Option<Pc>; 10]; 9],
    pub red_to_move: bool,
}

pub type Sq = (i32, i32);

impl Board {
    pub fn empty(red_to_move: bool) -> Board {
        Board { cells: [[None; 10]; 9], red_to_move }
    }

    pub fn from_text(text: &str, red_to_move: bool) -> Board {
        let mut b = Board::empty(red_to_move);
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        assert_eq!(rows.len(), 10);
        for (i, row) in rows.iter().enumerate() {
            let rank = 10 - i as i32;
            for (j, c) in row.trim().chars().enumerate() {
                if c == '.' {
                    continue;
                }
                let kind = match c.to_ascii_uppercase() {
                    'K' => Kind::K,
                    'A' => Kind::A,
                    'E' => Kind::E,
                    'H' => Kind::H,
                    'R' => Kind::R,
                    'C' => Kind::C,
                    'P' => Kind::P,
                    other => panic!("glyph {other}"),
                };
                b.set((j as i32 + 1, rank), Some(Pc { red: c.is_ascii_uppercase(), kind }));
            }
        }
        b
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for rank in (1..=10).rev() {
            for file in 1..=9 {
                s.push(match self.get((file, rank)) {
                    None => '.',
                    Some(p) => {
                        let c = match p.kind {
                            Kind::K => 'K',
                            Kind::A => 'A',
                            Kind::E => 'E',
                            Kind::H => 'H',
                            Kind::R => 'R',
                            Kind::C => 'C',
                            Kind::P => 'P',
                        };
                        if p.red {
                            c
                        } else {
                            c.to_ascii_lowercase()
                        }
                    }
                });
            }
            s.push('\n');
        }
        s
    }

    pub fn get(&self, (f, r): Sq) -> Option<Pc> {
        self.cells[(f - 1) as usize][(r - 1) as usize]
    }

    pub fn set(&mut self, (f, r): Sq, p: Option<Pc>) {
        self.cells[(f - 1) as usize][(r - 1) as usize] = p;
    }

    pub fn squares() -> impl Iterator<Item = Sq> {
        (1..=9).flat_map(|f| (1..=10).map(move |r| (f, r)))
    }

    fn count_between(&self, a: Sq, b: Sq) -> usize {
        // a and b share a file or rank
        let mut n = 0;
        if a.0 == b.0 {
            let (lo, hi) = (a.1.min(b.1), a.1.max(b.1));
            for r in lo + 1..hi {
                if self.get((a.0, r)).is_some() {
                    n += 1;
                }
            }
        } else {
            let (lo, hi) = (a.0.min(b.0), a.0.max(b.0));
            for f in lo + 1..hi {
                if self.get((f, a.1)).is_some() {
                    n += 1;
                }
            }
        }
        n
    }

    /// Geometry plus occupancy; ignores the mover's own general safety.
    pub fn can_reach(&self, from: Sq, to: Sq) -> bool {
        if from == to {
            return false;
        }
        let Some(p) = self.get(from) else { return false };
        let target = self.get(to);
        if target.is_some_and(|t| t.red == p.red) {
            return false;
        }
        let df = to.0 - from.0;
        let dr = to.1 - from.1;
        let fwd = if p.red { 1 } else { -1 };
        let in_palace = |s: Sq| (4..=6).contains(&s.0) && if p.red { s.1 <= 3 } else { s.1 >= 8 };
        let own_half = |s: Sq| if p.red { s.1 <= 5 } else { s.1 >= 6 };
        match p.kind {
            Kind::K => in_palace(to) && df.abs() + dr.abs() == 1,
            Kind::A => in_palace(to) && df.abs() == 1 && dr.abs() == 1,
            Kind::E => {
                own_half(to)
                    && df.abs() == 2
                    && dr.abs() == 2
                    && self.get((from.0 + df / 2, from.1 + dr / 2)).is_none()
            }
            Kind::H => {
                if df.abs() == 1 && dr.abs() == 2 {
                    self.get((from.0, from.1 + dr / 2)).is_none()
                } else if df.abs() == 2 && dr.abs() == 1 {
                    self.get((from.0 + df / 2, from.1)).is_none()
                } else {
                    false
                }
            }
            Kind::R => (df == 0 || dr == 0) && self.count_between(from, to) == 0,
            Kind::C => {
                if df != 0 && dr != 0 {
                    return false;
                }
                let between = self.count_between(from, to);
                match target {
                    None => between == 0,
                    Some(_) => between == 1,
                }
            }
            Kind::P => {
                if df == 0 && dr == fwd {
                    true
                } else {
                    dr == 0 && df.abs() == 1 && !own_half(from)
                }
            }
        }
    }

    pub fn general(&self, red: bool) -> Option<Sq> {
        Board::squares().find(|&s| self.get(s) == Some(Pc { red, kind: Kind::K }))
    }

    /// Some enemy pseudo-move lands on the general, or the generals face each other.
    pub fn in_check(&self, red: bool) -> bool {
        let Some(g) = self.general(red) else { return false };
        for s in Board::squares() {
            if let Some(p) = self.get(s) {
                if p.red != red && self.can_reach(s, g) {
                    return true;
                }
            }
        }
        if let Some(e) = self.general(!red) {
            if e.0 == g.0 && self.count_between(e, g) == 0 {
                return true;
            }
        }
        false
    }

    pub fn apply(&self, from: Sq, to: Sq) -> Board {
        let mut b = self.clone();
        let p = b.get(from);
        b.set(to, p);
        b.set(from, None);
        b.red_to_move = !self.red_to_move;
        b
    }

    pub fn legal_moves(&self) -> Vec<(Sq, Sq)> {
        let red = self.red_to_move;
        let mut out = Vec::new();
        for from in Board::squares() {
            if !self.get(from).is_some_and(|p| p.red == red) {
                continue;
            }
            for to in Board::squares() {
                if self.can_reach(from, to) && !self.apply(from, to).in_check(red) {
                    out.push((from, to));
                }
            }
        }
        out
    }

    pub fn perft(&self, depth: u32) -> u64 {
        if depth == 0 {
            return 1;
        }
        let moves = self.legal_moves();
        if depth == 1 {
            return moves.len() as u64;
        }
        moves.iter().map(|&(f, t)| self.apply(f, t).perft(depth - 1)).sum()
    }

    /// WXF text for a move, computed from first principles.
    pub fn wxf(&self, from: Sq, to: Sq) -> Option<String> {
        let p = self.get(from)?;
        let wxf = |file: i32| if p.red { 10 - file } else { file };
        let fwd = if p.red { 1 } else { -1 };
        let letter = match p.kind {
            Kind::K => 'K',
            Kind::A => 'A',
            Kind::E => 'E',
            Kind::H => 'H',
            Kind::R => 'R',
            Kind::C => 'C',
            Kind::P => 'P',
        };
        let mates: Vec<i32> = (1..=10).filter(|&r| self.get((from.0, r)) == Some(p)).collect();
        let prefix = match mates.len() {
            1 => format!("{letter}{}", wxf(from.0)),
            2 => {
                let other_file_doubled = (1..=9)
                    .filter(|&f| f != from.0)
                    .any(|f| (1..=10).filter(|&r| self.get((f, r)) == Some(p)).count() >= 2);
                if other_file_doubled {
                    return None;
                }
                let other = if mates[0] == from.1 { mates[1] } else { mates[0] };
                let front = (from.1 - other) * fwd > 0;
                format!("{}{letter}", if front { '+' } else { '-' })
            }
            _ => return None,
        };
        let dr = to.1 - from.1;
        let op = if dr == 0 {
            '='
        } else if dr * fwd > 0 {
            '+'
        } else {
            '-'
        };
        let diagonal = matches!(p.kind, Kind::A | Kind::E | Kind::H);
        let arg = if op == '=' || diagonal { wxf(to.0) } else { dr.abs() };
        Some(format!("{prefix}{op}{arg}"))
    }
}
