//! CPLEX LP text format.
//!
//! [`write_lp`] emits every variable in the `Bounds` section (free
//! variables as `x free`) so the file round-trips through [`read_lp`]
//! without relying on the format's default of `[0, inf)`.

use std::fmt::Write as _;

use super::model::{MilpModel, Relation, Sense, VarKind};
use crate::error::{Error, Result};

const WRAP: usize = 100;

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        // shortest repr that parses back exactly
        format!("{v:?}")
    }
}

fn push_terms(out: &mut String, line: &mut String, terms: impl Iterator<Item = (f64, String)>) {
    let mut first = true;
    for (a, name) in terms {
        let piece = if first {
            if a < 0.0 {
                format!("- {} {}", fmt_num(-a), name)
            } else {
                format!("{} {}", fmt_num(a), name)
            }
        } else if a < 0.0 {
            format!(" - {} {}", fmt_num(-a), name)
        } else {
            format!(" + {} {}", fmt_num(a), name)
        };
        first = false;
        if line.len() + piece.len() > WRAP {
            out.push_str(line);
            out.push('\n');
            line.clear();
            line.push_str("   ");
        }
        line.push_str(&piece);
    }
    if first {
        line.push_str("0 ");
        line.push_str("__zero");
    }
}

fn check_name(name: &str) -> Result<()> {
    let bad = name.is_empty()
        || name.starts_with(|c: char| c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E')
        || name.chars().any(|c| c.is_whitespace() || "+-*/^<>=:[]".contains(c));
    if bad {
        return Err(Error::invalid(format!("name `{name}` is not valid in LP format")));
    }
    Ok(())
}

pub fn write_lp(model: &MilpModel) -> Result<String> {
    for v in model.vars() {
        check_name(&v.name)?;
    }
    for c in model.constraints() {
        check_name(&c.name)?;
    }
    let needs_zero = model.constraints().iter().any(|c| c.terms.is_empty());
    let mut out = String::new();
    out.push_str(match model.sense {
        Sense::Maximize => "Maximize\n",
        Sense::Minimize => "Minimize\n",
    });
    let mut line = String::from(" obj: ");
    let nz = model
        .objective()
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, &c)| (c, model.vars()[j].name.clone()))
        .collect::<Vec<_>>();
    if nz.is_empty() && model.objective_offset == 0.0 {
        // an empty objective is not legal in every reader
        if let Some(v) = model.vars().first() {
            line.push_str(&format!("0 {}", v.name));
        }
    } else {
        push_terms(&mut out, &mut line, nz.into_iter());
    }
    if model.objective_offset != 0.0 {
        let off = model.objective_offset;
        if off < 0.0 {
            line.push_str(&format!(" - {}", fmt_num(-off)));
        } else {
            line.push_str(&format!(" + {}", fmt_num(off)));
        }
    }
    out.push_str(&line);
    out.push('\n');

    out.push_str("Subject To\n");
    for c in model.constraints() {
        let mut line = format!(" {}: ", c.name);
        push_terms(
            &mut out,
            &mut line,
            c.terms.iter().map(|&(v, a)| (a, model.vars()[v.idx()].name.clone())),
        );
        let _ = write!(line, " {} {}", c.relation, fmt_num(c.rhs));
        out.push_str(&line);
        out.push('\n');
    }

    out.push_str("Bounds\n");
    for v in model.vars() {
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            let _ = writeln!(out, " {} free", v.name);
        } else if v.lower == v.upper {
            let _ = writeln!(out, " {} = {}", v.name, fmt_num(v.lower));
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lower), v.name, fmt_num(v.upper));
        }
    }
    if needs_zero {
        out.push_str(" __zero = 0\n");
    }
    let generals: Vec<&str> =
        model.vars().iter().filter(|v| v.kind == VarKind::Integer).map(|v| v.name.as_str()).collect();
    if !generals.is_empty() {
        out.push_str("Generals\n");
        for g in generals {
            let _ = writeln!(out, " {g}");
        }
    }
    let binaries: Vec<&str> =
        model.vars().iter().filter(|v| v.kind == VarKind::Binary).map(|v| v.name.as_str()).collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for b in binaries {
            let _ = writeln!(out, " {b}");
        }
    }
    out.push_str("End\n");
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Objective,
    Constraints,
    Bounds,
    Generals,
    Binaries,
    End,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Rel(Relation),
    Colon,
}

fn tokenize(s: &str, line: usize) -> Result<Vec<Tok>> {
    let mut toks = Vec::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            ':' => {
                toks.push(Tok::Colon);
                i += 1;
            }
            '<' | '>' | '=' => {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '=' || chars[j] == '<' || chars[j] == '>') {
                    j += 1;
                }
                let op: String = chars[i..j].iter().collect();
                let rel = match op.as_str() {
                    "<" | "<=" | "=<" => Relation::Le,
                    ">" | ">=" | "=>" => Relation::Ge,
                    "=" => Relation::Eq,
                    _ => return Err(Error::LpParse { line, msg: format!("unknown operator `{op}`") }),
                };
                toks.push(Tok::Rel(rel));
                i = j;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < chars.len() {
                    let d = chars[j];
                    let exp_sign = (d == '+' || d == '-') && j > i && matches!(chars[j - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let text: String = chars[i..j].iter().collect();
                let v = text
                    .parse::<f64>()
                    .map_err(|_| Error::LpParse { line, msg: format!("bad number `{text}`") })?;
                toks.push(Tok::Num(v));
                i = j;
            }
            _ => {
                let mut j = i;
                while j < chars.len() && !" \t+-:<>=".contains(chars[j]) {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                match word.to_ascii_lowercase().as_str() {
                    "inf" | "infinity" => toks.push(Tok::Num(f64::INFINITY)),
                    _ => toks.push(Tok::Name(word)),
                }
                i = j;
            }
        }
    }
    Ok(toks)
}

/// Linear expression: terms, constant.
fn parse_expr(toks: &[Tok], line: usize) -> Result<(Vec<(String, f64)>, f64)> {
    let mut terms = Vec::new();
    let mut constant = 0.0;
    let mut i = 0;
    while i < toks.len() {
        let mut sign = 1.0;
        while let Some(t @ (Tok::Plus | Tok::Minus)) = toks.get(i) {
            if *t == Tok::Minus {
                sign = -sign;
            }
            i += 1;
        }
        match toks.get(i) {
            Some(Tok::Num(v)) => match toks.get(i + 1) {
                Some(Tok::Name(n)) => {
                    terms.push((n.clone(), sign * v));
                    i += 2;
                }
                _ => {
                    constant += sign * v;
                    i += 1;
                }
            },
            Some(Tok::Name(n)) => {
                terms.push((n.clone(), sign));
                i += 1;
            }
            other => {
                return Err(Error::LpParse { line, msg: format!("expected a term, found {other:?}") });
            }
        }
    }
    Ok((terms, constant))
}

fn signed_num(toks: &[Tok], line: usize) -> Result<f64> {
    match toks {
        [Tok::Num(v)] => Ok(*v),
        [Tok::Minus, Tok::Num(v)] => Ok(-v),
        [Tok::Plus, Tok::Num(v)] => Ok(*v),
        _ => Err(Error::LpParse { line, msg: "expected a number".into() }),
    }
}

struct PendingVar {
    lower: f64,
    upper: f64,
    kind: VarKind,
}

pub fn read_lp(text: &str) -> Result<MilpModel> {
    let mut sense = None;
    let mut section = None;
    let mut obj_buf: Vec<(usize, String)> = Vec::new();
    let mut con_buf: Vec<(usize, String)> = Vec::new();
    let mut bound_lines: Vec<(usize, String)> = Vec::new();
    let mut generals = Vec::new();
    let mut binaries = Vec::new();

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let s = raw.split('\\').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "maximize" | "maximise" | "max" => {
                sense = Some(Sense::Maximize);
                section = Some(Section::Objective);
                continue;
            }
            "minimize" | "minimise" | "min" => {
                sense = Some(Sense::Minimize);
                section = Some(Section::Objective);
                continue;
            }
            "subject to" | "such that" | "st" | "s.t." => {
                section = Some(Section::Constraints);
                continue;
            }
            "bounds" => {
                section = Some(Section::Bounds);
                continue;
            }
            "generals" | "general" | "gen" => {
                section = Some(Section::Generals);
                continue;
            }
            "binaries" | "binary" | "bin" => {
                section = Some(Section::Binaries);
                continue;
            }
            "end" => {
                section = Some(Section::End);
                continue;
            }
            _ => {}
        }
        match section {
            None => return Err(Error::LpParse { line, msg: "content before the objective sense".into() }),
            Some(Section::Objective) => obj_buf.push((line, s.to_string())),
            Some(Section::Constraints) => {
                // a new row starts with `name:`; otherwise continue the previous one
                let starts_row = s.contains(':') || con_buf.is_empty() || {
                    let last = &con_buf.last().unwrap().1;
                    last.contains('<') || last.contains('>') || last.contains('=')
                };
                if starts_row {
                    con_buf.push((line, s.to_string()));
                } else {
                    let last = con_buf.last_mut().unwrap();
                    last.1.push(' ');
                    last.1.push_str(s);
                }
            }
            Some(Section::Bounds) => bound_lines.push((line, s.to_string())),
            Some(Section::Generals) => generals.extend(s.split_whitespace().map(|w| (line, w.to_string()))),
            Some(Section::Binaries) => binaries.extend(s.split_whitespace().map(|w| (line, w.to_string()))),
            Some(Section::End) => return Err(Error::LpParse { line, msg: "content after End".into() }),
        }
    }
    let sense = sense.ok_or(Error::LpParse { line: 1, msg: "missing Maximize/Minimize".into() })?;

    // variables appear in order of first mention
    let mut order: Vec<String> = Vec::new();
    let mut info: std::collections::HashMap<String, PendingVar> = std::collections::HashMap::new();
    fn mention<'m>(
        info: &'m mut std::collections::HashMap<String, PendingVar>,
        order: &mut Vec<String>,
        name: &str,
    ) -> &'m mut PendingVar {
        if !info.contains_key(name) {
            order.push(name.to_string());
        }
        info.entry(name.to_string())
            .or_insert(PendingVar { lower: 0.0, upper: f64::INFINITY, kind: VarKind::Continuous })
    }

    let obj_line = obj_buf.first().map(|l| l.0).unwrap_or(1);
    let obj_text: String = obj_buf.iter().map(|l| l.1.as_str()).collect::<Vec<_>>().join(" ");
    let mut obj_toks = tokenize(&obj_text, obj_line)?;
    if let [Tok::Name(_), Tok::Colon, ..] = obj_toks.as_slice() {
        obj_toks.drain(..2);
    }
    let (obj_terms, obj_const) = parse_expr(&obj_toks, obj_line)?;
    for (n, _) in &obj_terms {
        mention(&mut info, &mut order, n);
    }

    let mut rows = Vec::new();
    for (idx, (line, text)) in con_buf.iter().enumerate() {
        let mut toks = tokenize(text, *line)?;
        let name = match toks.as_slice() {
            [Tok::Name(n), Tok::Colon, ..] => {
                let n = n.clone();
                toks.drain(..2);
                n
            }
            _ => format!("R{}", idx + 1),
        };
        let pos = toks
            .iter()
            .position(|t| matches!(t, Tok::Rel(_)))
            .ok_or(Error::LpParse { line: *line, msg: format!("row {name} has no relation") })?;
        let Tok::Rel(rel) = toks[pos].clone() else { unreachable!() };
        let (terms, lhs_const) = parse_expr(&toks[..pos], *line)?;
        let (rhs_terms, rhs_const) = parse_expr(&toks[pos + 1..], *line)?;
        if !rhs_terms.is_empty() {
            return Err(Error::LpParse { line: *line, msg: "variables on the right-hand side".into() });
        }
        for (n, _) in &terms {
            mention(&mut info, &mut order, n);
        }
        rows.push((name, terms, rel, rhs_const - lhs_const));
    }

    for (line, text) in &bound_lines {
        let toks = tokenize(text, *line)?;
        let rels: Vec<usize> =
            toks.iter().enumerate().filter(|(_, t)| matches!(t, Tok::Rel(_))).map(|(i, _)| i).collect();
        match (toks.as_slice(), rels.as_slice()) {
            ([Tok::Name(n), Tok::Name(f)], []) if f.eq_ignore_ascii_case("free") => {
                let v = mention(&mut info, &mut order, n);
                v.lower = f64::NEG_INFINITY;
                v.upper = f64::INFINITY;
            }
            (_, [a, b]) => {
                let lo = signed_num(&toks[..*a], *line)?;
                let Tok::Name(n) = &toks[a + 1] else {
                    return Err(Error::LpParse { line: *line, msg: "expected a variable".into() });
                };
                if b - a != 2 {
                    return Err(Error::LpParse { line: *line, msg: "malformed double bound".into() });
                }
                let hi = signed_num(&toks[b + 1..], *line)?;
                let v = mention(&mut info, &mut order, n);
                v.lower = lo;
                v.upper = hi;
            }
            (_, [a]) => {
                let Tok::Rel(rel) = toks[*a].clone() else { unreachable!() };
                let (name, value, rel) = match &toks[..*a] {
                    [Tok::Name(n)] => (n.clone(), signed_num(&toks[a + 1..], *line)?, rel),
                    _ => {
                        let Some(Tok::Name(n)) = toks.get(a + 1) else {
                            return Err(Error::LpParse { line: *line, msg: "expected a variable".into() });
                        };
                        let flipped = match rel {
                            Relation::Le => Relation::Ge,
                            Relation::Ge => Relation::Le,
                            Relation::Eq => Relation::Eq,
                        };
                        (n.clone(), signed_num(&toks[..*a], *line)?, flipped)
                    }
                };
                let v = mention(&mut info, &mut order, &name);
                match rel {
                    Relation::Le => v.upper = value,
                    Relation::Ge => v.lower = value,
                    Relation::Eq => {
                        v.lower = value;
                        v.upper = value;
                    }
                }
            }
            _ => return Err(Error::LpParse { line: *line, msg: format!("unrecognized bound `{text}`") }),
        }
    }
    for (_, n) in &generals {
        mention(&mut info, &mut order, n).kind = VarKind::Integer;
    }
    for (_, n) in &binaries {
        mention(&mut info, &mut order, n).kind = VarKind::Binary;
    }

    // the Bounds section fixes the column order when it lists variables
    let mut listed: Vec<String> = Vec::new();
    for (_, text) in &bound_lines {
        if let Some(n) = tokenize(text, 0)?.iter().find_map(|t| match t {
            Tok::Name(n) if !n.eq_ignore_ascii_case("free") => Some(n.clone()),
            _ => None,
        }) {
            if !listed.contains(&n) {
                listed.push(n);
            }
        }
    }
    let rest: Vec<String> = order.into_iter().filter(|n| !listed.contains(n)).collect();
    let order: Vec<String> = listed.into_iter().chain(rest).collect();

    let mut model = MilpModel::new(sense);
    for name in order.iter().filter(|n| n.as_str() != "__zero") {
        let v = &info[name];
        let (lo, hi) = if v.kind == VarKind::Binary && v.upper == f64::INFINITY { (v.lower, 1.0) } else { (v.lower, v.upper) };
        model.add_var(name.clone(), lo, hi, v.kind)?;
    }
    let id = |n: &str| model.var_by_name(n);
    let mut obj = vec![0.0; model.num_vars()];
    for (n, a) in &obj_terms {
        if let Some(v) = id(n) {
            obj[v.idx()] += a;
        }
    }
    let rows: Vec<_> = rows
        .into_iter()
        .map(|(name, terms, rel, rhs)| {
            let t: Vec<_> = terms.iter().filter_map(|(n, a)| id(n).map(|v| (v, *a))).collect();
            (name, t, rel, rhs)
        })
        .collect();
    for (j, c) in obj.into_iter().enumerate() {
        model.set_objective(super::VarId(j), c);
    }
    model.objective_offset = obj_const;
    for (name, terms, rel, rhs) in rows {
        model.add_constraint(name, terms, rel, rhs)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MilpModel {
        let mut m = MilpModel::new(Sense::Maximize);
        let x = m.add_var("x_0_1", 0.0, 1.0, VarKind::Binary).unwrap();
        let y = m.add_var("y", f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous).unwrap();
        let z = m.add_var("z", -2.0, 7.5, VarKind::Integer).unwrap();
        m.set_objective(x, 3.0);
        m.set_objective(y, -0.1);
        m.set_objective(z, 1e-12);
        m.objective_offset = -4.25;
        m.add_constraint("c1", vec![(x, 1.0), (y, -2.5), (z, 1.0 / 3.0)], Relation::Le, 10.0).unwrap();
        m.add_constraint("c2", vec![(y, 1.0)], Relation::Ge, -1e300).unwrap();
        m.add_constraint("c3", vec![(x, 2.0), (z, -1.0)], Relation::Eq, 0.0).unwrap();
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let text = write_lp(&m).unwrap();
        let back = read_lp(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(write_lp(&back).unwrap(), text);
    }

    #[test]
    fn rejects_bracketed_names() {
        let mut m = MilpModel::new(Sense::Minimize);
        m.add_var("x[1]", 0.0, 1.0, VarKind::Continuous).unwrap();
        assert!(write_lp(&m).is_err());
    }

    #[test]
    fn parses_hand_written_file() {
        let text = "\\ comment\nMinimize\n obj: 2 a + b\nSubject To\n r1: a + b >= 1\n r2: a\n  - b <= 3\nBounds\n a <= 4\n -1 <= b <= 1\nEnd\n";
        let m = read_lp(text).unwrap();
        assert_eq!(m.num_vars(), 2);
        assert_eq!(m.num_constraints(), 2);
        assert_eq!(m.constraints()[1].terms.len(), 2);
        assert_eq!(m.vars()[0].upper, 4.0);
        assert_eq!(m.vars()[0].lower, 0.0);
    }

    #[test]
    fn reports_line_numbers() {
        let err = read_lp("Maximize\n obj: x\nSubject To\n c: x ?? 3\nEnd\n").unwrap_err();
        assert!(matches!(err, Error::LpParse { line: 4, .. }), "{err}");
    }
}
