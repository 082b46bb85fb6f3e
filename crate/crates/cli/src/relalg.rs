//! A small positive relational-algebra language over annotated tables.
//!
//! ```text
//! query := UNION(query, query) | JOIN(query, query)
//!        | PROJECT[attr, ...](query) | SELECT[atom AND ...](query)
//!        | RENAME[attr -> attr, ...](query) | IDENT
//! atom  := attr = attr | attr = literal
//! ```
//!
//! Literals are numbers (`-12`, `3.5`) or double-quoted strings and are
//! compared with the stored value as text. Table `T` is the file `T.tsv` in
//! the table directory.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use recmech::krelation::io::read_table;
use recmech::krelation::{Atom, Predicate};
use recmech::{AnnotatedRelation, RelationError, Schema};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelalgError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown table {name:?} at byte {offset}")]
    UnknownTable { name: String, offset: usize },
    #[error("schema error at byte {offset}: {message}")]
    Schema { offset: usize, message: String },
    #[error("table {name}: {source}")]
    Table { name: String, source: RelationError },
}

#[derive(Debug, Clone)]
pub struct Query {
    /// Byte offset of the operator keyword or table name.
    pub offset: usize,
    pub node: Node,
}

/// Offsets are ignored, so a query equals its reparsed printout.
impl PartialEq for Query {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Table(String),
    Union(Box<Query>, Box<Query>),
    Join(Box<Query>, Box<Query>),
    Project(Vec<String>, Box<Query>),
    Select(Vec<Atom>, Box<Query>),
    Rename(Vec<(String, String)>, Box<Query>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Keyword(&'static str),
    Number(String),
    Str(String),
    Punct(&'static str),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier {s:?}"),
            Tok::Keyword(k) => write!(f, "keyword {k}"),
            Tok::Number(n) => write!(f, "number {n}"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Punct(p) => write!(f, "{p:?}"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

const KEYWORDS: [&str; 6] = ["UNION", "JOIN", "PROJECT", "SELECT", "RENAME", "AND"];
const PUNCT: [&str; 7] = ["->", "(", ")", "[", "]", ",", "="];

fn syntax(offset: usize, message: impl Into<String>) -> RelalgError {
    RelalgError::Syntax { offset, message: message.into() }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, RelalgError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            let tok = match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => Tok::Keyword(k),
                None => Tok::Ident(word.to_string()),
            };
            out.push((start, tok));
        } else if c.is_ascii_digit() || (c == b'-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if bytes.get(i) == Some(&b'.') {
                i += 1;
                let digits = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == digits {
                    return Err(syntax(i, "expected digits after decimal point"));
                }
            }
            out.push((start, Tok::Number(text[start..i].to_string())));
        } else if c == b'"' {
            i += 1;
            let mut s = String::new();
            loop {
                match text[i..].chars().next() {
                    None => return Err(syntax(start, "unterminated string")),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => match text[i + 1..].chars().next() {
                        Some(e @ ('"' | '\\')) => {
                            s.push(e);
                            i += 2;
                        }
                        _ => return Err(syntax(i, "only \\\" and \\\\ escapes are allowed")),
                    },
                    Some(ch) => {
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            out.push((start, Tok::Str(s)));
        } else if let Some(p) = PUNCT.iter().find(|p| text[i..].starts_with(**p)) {
            i += p.len();
            out.push((start, Tok::Punct(p)));
        } else {
            let ch = text[i..].chars().next().unwrap();
            return Err(syntax(i, format!("unexpected character {ch:?}")));
        }
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &(usize, Tok) {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> (usize, Tok) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, p: &'static str) -> Result<(), RelalgError> {
        match self.next() {
            (_, Tok::Punct(q)) if q == p => Ok(()),
            (at, t) => Err(syntax(at, format!("expected {p:?}, found {t}"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, RelalgError> {
        match self.next() {
            (_, Tok::Ident(s)) => Ok(s),
            (at, t) => Err(syntax(at, format!("expected {what}, found {t}"))),
        }
    }

    /// `item (',' item)*` up to the closing `]`.
    fn list<T>(
        &mut self,
        sep: &'static str,
        mut item: impl FnMut(&mut Self) -> Result<T, RelalgError>,
    ) -> Result<Vec<T>, RelalgError> {
        self.expect("[")?;
        let mut out = vec![item(self)?];
        loop {
            match self.peek().1.clone() {
                Tok::Punct("]") => {
                    self.next();
                    return Ok(out);
                }
                Tok::Punct(p) if p == sep => {}
                Tok::Keyword(k) if k == sep => {}
                t => return Err(syntax(self.peek().0, format!("expected {sep:?} or \"]\", found {t}"))),
            }
            self.next();
            out.push(item(self)?);
        }
    }

    fn atom(&mut self) -> Result<Atom, RelalgError> {
        let left = self.ident("attribute")?;
        self.expect("=")?;
        match self.next() {
            (_, Tok::Ident(right)) => Ok(Atom::AttrEq(left, right)),
            (_, Tok::Number(v) | Tok::Str(v)) => Ok(Atom::AttrConst(left, v)),
            (at, t) => Err(syntax(at, format!("expected attribute or literal, found {t}"))),
        }
    }

    fn operand(&mut self) -> Result<Box<Query>, RelalgError> {
        self.expect("(")?;
        let q = self.query()?;
        self.expect(")")?;
        Ok(Box::new(q))
    }

    fn query(&mut self) -> Result<Query, RelalgError> {
        let (offset, tok) = self.next();
        let node = match tok {
            Tok::Ident(name) => Node::Table(name),
            Tok::Keyword(k @ ("UNION" | "JOIN")) => {
                self.expect("(")?;
                let left = Box::new(self.query()?);
                self.expect(",")?;
                let right = Box::new(self.query()?);
                self.expect(")")?;
                if k == "UNION" {
                    Node::Union(left, right)
                } else {
                    Node::Join(left, right)
                }
            }
            Tok::Keyword("PROJECT") => {
                let attrs = self.list(",", |p| p.ident("attribute"))?;
                Node::Project(attrs, self.operand()?)
            }
            Tok::Keyword("SELECT") => {
                let atoms = self.list("AND", Parser::atom)?;
                Node::Select(atoms, self.operand()?)
            }
            Tok::Keyword("RENAME") => {
                let pairs = self.list(",", |p| {
                    let from = p.ident("attribute")?;
                    p.expect("->")?;
                    Ok((from, p.ident("attribute")?))
                })?;
                Node::Rename(pairs, self.operand()?)
            }
            t => return Err(syntax(offset, format!("expected a query, found {t}"))),
        };
        Ok(Query { offset, node })
    }
}

pub fn parse_relalg(text: &str) -> Result<Query, RelalgError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let q = p.query()?;
    match p.peek() {
        (_, Tok::End) => Ok(q),
        (at, t) => Err(syntax(*at, format!("unexpected {t} after query"))),
    }
}

fn is_number(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = match digits.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (digits, None),
    };
    let all_digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    all_digits(int) && frac.is_none_or(all_digits)
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Table(name) => f.write_str(name),
            Node::Union(a, b) => write!(f, "UNION({a}, {b})"),
            Node::Join(a, b) => write!(f, "JOIN({a}, {b})"),
            Node::Project(attrs, q) => write!(f, "PROJECT[{}]({q})", attrs.join(", ")),
            Node::Select(atoms, q) => {
                let parts: Vec<String> = atoms
                    .iter()
                    .map(|a| match a {
                        Atom::AttrEq(x, y) => format!("{x} = {y}"),
                        Atom::AttrConst(x, v) if is_number(v) => format!("{x} = {v}"),
                        Atom::AttrConst(x, v) => {
                            format!("{x} = \"{}\"", v.replace('\\', "\\\\").replace('"', "\\\""))
                        }
                    })
                    .collect();
                write!(f, "SELECT[{}]({q})", parts.join(" AND "))
            }
            Node::Rename(pairs, q) => {
                let parts: Vec<String> = pairs.iter().map(|(a, b)| format!("{a} -> {b}")).collect();
                write!(f, "RENAME[{}]({q})", parts.join(", "))
            }
        }
    }
}

impl Query {
    /// Table names with the offset of their first use.
    pub fn tables(&self) -> Vec<(String, usize)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.walk(&mut |q| {
            if let Node::Table(name) = &q.node {
                if seen.insert(name.clone()) {
                    out.push((name.clone(), q.offset));
                }
            }
        });
        out
    }

    fn walk<F: FnMut(&Query)>(&self, f: &mut F) {
        f(self);
        match &self.node {
            Node::Table(_) => {}
            Node::Union(a, b) | Node::Join(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            Node::Project(_, q) | Node::Select(_, q) | Node::Rename(_, q) => q.walk(f),
        }
    }
}

pub type Tables = HashMap<String, AnnotatedRelation>;

/// Loads `DIR/<name>.tsv` for every table the query mentions.
pub fn bind(q: &Query, dir: &Path) -> Result<Tables, RelalgError> {
    let mut out = HashMap::new();
    for (name, offset) in q.tables() {
        let path = dir.join(format!("{name}.tsv"));
        if !path.is_file() {
            return Err(RelalgError::UnknownTable { name, offset });
        }
        let r = read_table(&path).map_err(|source| RelalgError::Table { name: name.clone(), source })?;
        out.insert(name, r);
    }
    Ok(out)
}

/// Output schema of `q`, or the first schema error found.
pub fn check(q: &Query, schemas: &HashMap<String, Schema>) -> Result<Schema, RelalgError> {
    let err = |message: String| RelalgError::Schema { offset: q.offset, message };
    let attrs = |s: &Schema| s.attrs().to_vec();
    let need = |s: &Schema, a: &str| {
        if s.position(a).is_some() {
            Ok(())
        } else {
            Err(err(format!("unknown attribute {a:?} in [{s}]")))
        }
    };
    let rebuild = |v: Vec<String>| Schema::new(v).map_err(|e| err(e.to_string()));
    match &q.node {
        Node::Table(name) => schemas
            .get(name)
            .cloned()
            .ok_or_else(|| RelalgError::UnknownTable { name: name.clone(), offset: q.offset }),
        Node::Union(a, b) => {
            let (sa, sb) = (check(a, schemas)?, check(b, schemas)?);
            if sa.same_set(&sb) {
                Ok(sa)
            } else {
                Err(err(format!("UNION of [{sa}] and [{sb}]")))
            }
        }
        Node::Join(a, b) => {
            let (sa, sb) = (check(a, schemas)?, check(b, schemas)?);
            let mut out = attrs(&sa);
            out.extend(sb.attrs().iter().filter(|x| sa.position(x).is_none()).cloned());
            rebuild(out)
        }
        Node::Project(list, inner) => {
            let s = check(inner, schemas)?;
            for a in list {
                need(&s, a)?;
            }
            rebuild(list.clone())
        }
        Node::Select(atoms, inner) => {
            let s = check(inner, schemas)?;
            for atom in atoms {
                match atom {
                    Atom::AttrEq(x, y) => {
                        need(&s, x)?;
                        need(&s, y)?;
                    }
                    Atom::AttrConst(x, _) => need(&s, x)?,
                }
            }
            Ok(s)
        }
        Node::Rename(pairs, inner) => {
            let s = check(inner, schemas)?;
            let mut out = attrs(&s);
            let mut renamed = BTreeSet::new();
            for (from, to) in pairs {
                need(&s, from)?;
                if !renamed.insert(from) {
                    return Err(err(format!("{from} renamed twice")));
                }
                out[s.position(from).unwrap()] = to.clone();
            }
            rebuild(out)
        }
    }
}

/// Checks `q` against the bound tables, then evaluates it with annotation
/// propagation.
pub fn execute(q: &Query, tables: &Tables) -> Result<AnnotatedRelation, RelalgError> {
    let schemas = tables.iter().map(|(n, r)| (n.clone(), r.schema().clone())).collect();
    check(q, &schemas)?;
    eval(q, tables)
}

fn eval(q: &Query, tables: &Tables) -> Result<AnnotatedRelation, RelalgError> {
    let err = |e: RelationError| RelalgError::Schema { offset: q.offset, message: e.to_string() };
    Ok(match &q.node {
        Node::Table(name) => tables[name].clone(),
        Node::Union(a, b) => eval(a, tables)?.union(&eval(b, tables)?).map_err(err)?,
        Node::Join(a, b) => eval(a, tables)?.natural_join(&eval(b, tables)?),
        Node::Project(attrs, inner) => {
            let attrs: Vec<&str> = attrs.iter().map(String::as_str).collect();
            eval(inner, tables)?.project(&attrs).map_err(err)?
        }
        Node::Select(atoms, inner) => eval(inner, tables)?.select(&Predicate(atoms.clone())).map_err(err)?,
        Node::Rename(pairs, inner) => {
            let pairs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            eval(inner, tables)?.rename(&pairs).map_err(err)?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use recmech::krelation::io::parse_table;

    fn table(name: &str) -> Query {
        Query { offset: 0, node: Node::Table(name.into()) }
    }

    #[test]
    fn table_reference() {
        assert_eq!(parse_relalg("T").unwrap(), table("T"));
    }

    #[test]
    fn project_over_join() {
        let q = parse_relalg("PROJECT[X,Y](JOIN(T1,T2))").unwrap();
        let want = Query {
            offset: 0,
            node: Node::Project(
                vec!["X".into(), "Y".into()],
                Box::new(Query { offset: 11, node: Node::Join(Box::new(table("T1")), Box::new(table("T2"))) }),
            ),
        };
        assert_eq!(q, want);
    }

    #[test]
    fn select_with_tautology() {
        let q = parse_relalg("SELECT[A = 1 AND B = B](T)").unwrap();
        let Node::Select(atoms, _) = &q.node else { panic!("{q:?}") };
        assert_eq!(
            atoms,
            &[Atom::AttrConst("A".into(), "1".into()), Atom::AttrEq("B".into(), "B".into())]
        );
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        let offset = |text: &str| match parse_relalg(text) {
            Err(RelalgError::Syntax { offset, .. }) => offset,
            other => panic!("{text}: {other:?}"),
        };
        assert_eq!(offset("JOIN(T1 T2)"), 8);
        assert_eq!(offset("PROJECT[](T)"), 8);
        assert_eq!(offset("T U"), 2);
        assert_eq!(offset("SELECT[A = \"x](T)"), 11);
        assert_eq!(offset("union(T, U)"), 5);
        assert_eq!(offset("RENAME[A > B](T)"), 9);
        assert_eq!(offset(""), 0);
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "UNION(RENAME[A -> B, C -> D](T), SELECT[B = \"x \\\"y\\\"\" AND D = -1.5](U))",
            "PROJECT[A](JOIN(T, SELECT[A = A](T)))",
        ] {
            let q = parse_relalg(text).unwrap();
            assert_eq!(q.to_string(), text);
            assert_eq!(parse_relalg(&q.to_string()).unwrap(), q);
        }
    }

    fn tables() -> Tables {
        let mut t = HashMap::new();
        t.insert("R".to_string(), parse_table("#schema\tA\tB\t@annotation\n1\tx\tp\n2\ty\tq\n").unwrap());
        t.insert("S".to_string(), parse_table("#schema\tB\tC\t@annotation\nx\t7\tr\nx\t8\tp\n").unwrap());
        t
    }

    #[test]
    fn schema_errors_point_at_the_operator() {
        let t = tables();
        let err = |text: &str| execute(&parse_relalg(text).unwrap(), &t).unwrap_err();
        assert!(matches!(err("UNION(R, S)"), RelalgError::Schema { offset: 0, .. }));
        assert!(matches!(err("JOIN(R, PROJECT[Z](S))"), RelalgError::Schema { offset: 8, .. }));
        assert!(matches!(err("RENAME[A -> B](R)"), RelalgError::Schema { offset: 0, .. }));
        assert!(matches!(err("SELECT[Q = 1](R)"), RelalgError::Schema { offset: 0, .. }));
        assert!(matches!(err("JOIN(R, W)"), RelalgError::UnknownTable { offset: 8, .. }));
    }

    #[test]
    fn execution_propagates_annotations() {
        let t = tables();
        let q = parse_relalg("PROJECT[A](SELECT[B = \"x\"](JOIN(R, S)))").unwrap();
        let r = execute(&q, &t).unwrap();
        assert_eq!(r.len(), 1);
        let k = r.annotation(&[("A", "1")]).unwrap();
        assert_eq!(k.to_string(), "p & r | p & p");
        let u = execute(&parse_relalg("UNION(R, RENAME[A -> A](R))").unwrap(), &t).unwrap();
        assert_eq!(u.annotation(&[("A", "2"), ("B", "y")]).unwrap().to_string(), "q | q");
    }
}
