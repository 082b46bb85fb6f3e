//! Tab-separated annotated-table files.
//!
//! ```text
//! #schema	A	B	@annotation
//! #participants	a,b,c
//! 1	2	a & b
//! ```
//!
//! The `#participants` line is optional and must come second; without it the
//! participants are the annotation variables. Other lines starting with `#`
//! and blank lines are ignored.
#![allow(clippy::tabs_in_doc_comments)]

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{AnnotatedRelation, RelationError, Schema};
use crate::expr::{Expr, ParticipantId};

const SCHEMA_TAG: &str = "#schema";
const PARTICIPANTS_TAG: &str = "#participants";
const ANNOTATION_COLUMN: &str = "@annotation";

pub fn parse_table(text: &str) -> Result<AnnotatedRelation, RelationError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines.next().ok_or(RelationError::Parse {
        line: 1,
        message: "missing #schema header".into(),
    })?;
    let mut fields = header.split('\t');
    if fields.next() != Some(SCHEMA_TAG) {
        return Err(RelationError::Parse {
            line: 1,
            message: format!("first line must start with {SCHEMA_TAG}"),
        });
    }
    let mut attrs: Vec<&str> = fields.collect();
    if attrs.pop() != Some(ANNOTATION_COLUMN) {
        return Err(RelationError::Parse {
            line: 1,
            message: format!("last header column must be {ANNOTATION_COLUMN}"),
        });
    }
    let schema = Schema::new(attrs.iter().copied())?;

    let mut participants: Option<BTreeSet<ParticipantId>> = None;
    let mut rows = Vec::new();
    for (line, raw) in lines {
        if let Some(rest) = raw.strip_prefix(PARTICIPANTS_TAG) {
            if line != 2 {
                return Err(RelationError::Parse {
                    line,
                    message: "#participants must be the second line".into(),
                });
            }
            let list = rest.trim_start_matches('\t').trim();
            let ps = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(ParticipantId::new)
                .collect::<Result<_, _>>()
                .map_err(|e| RelationError::Parse { line, message: e.to_string() })?;
            participants = Some(ps);
            continue;
        }
        if raw.starts_with('#') || raw.trim().is_empty() {
            continue;
        }
        let mut cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != schema.len() + 1 {
            return Err(RelationError::Parse {
                line,
                message: format!("expected {} tab-separated fields, found {}", schema.len() + 1, cols.len()),
            });
        }
        let annotation: Expr = cols
            .pop()
            .unwrap()
            .parse()
            .map_err(|e: crate::expr::ExprError| RelationError::Parse { line, message: e.to_string() })?;
        rows.push((cols.into_iter().map(str::to_string).collect(), annotation));
    }
    AnnotatedRelation::new(schema, rows, participants)
}

pub fn read_table(path: &Path) -> Result<AnnotatedRelation, RelationError> {
    let text = std::fs::read_to_string(path).map_err(|e| RelationError::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    parse_table(&text)
}

pub fn format_table(r: &AnnotatedRelation) -> String {
    let mut out = String::from(SCHEMA_TAG);
    for a in r.schema().attrs() {
        out.push('\t');
        out.push_str(a);
    }
    let _ = writeln!(out, "\t{ANNOTATION_COLUMN}");
    let ps: Vec<&str> = r.participants().iter().map(ParticipantId::as_str).collect();
    let _ = writeln!(out, "{PARTICIPANTS_TAG}\t{}", ps.join(","));
    for (t, k) in r.tuples() {
        for v in t.values() {
            out.push_str(v);
            out.push('\t');
        }
        let _ = writeln!(out, "{k}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_participants_and_rows() {
        let text = "#schema\tA\tB\t@annotation\n#participants\ta,b,z\n# note\n1\t2\ta & b\n\n3\t4\tb | false\n";
        let r = parse_table(text).unwrap();
        assert_eq!(r.schema().attrs(), ["A", "B"]);
        assert_eq!(r.participants().len(), 3);
        assert_eq!(r.len(), 2);
        assert_eq!(r.annotation(&[("A", "3"), ("B", "4")]), Some(&"b".parse().unwrap()));
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_table("#schema\tA\t@annotation\n1\t2\ta\n").unwrap_err();
        assert!(matches!(err, RelationError::Parse { line: 2, .. }));
        let err = parse_table("#schema\tA\t@annotation\n1\ta &\n").unwrap_err();
        assert!(matches!(err, RelationError::Parse { line: 2, .. }));
        let err = parse_table("A\t@annotation\n").unwrap_err();
        assert!(matches!(err, RelationError::Parse { line: 1, .. }));
        let err = parse_table("#schema\tA\t@annotation\n#x\n#participants\ta\n").unwrap_err();
        assert!(matches!(err, RelationError::Parse { line: 3, .. }));
    }

    #[test]
    fn round_trips_through_text() {
        let text = "#schema\tX\tY\t@annotation\n#participants\ta,b,c,d\nb\tc\t(a & b & c) | (b & c & d)\n";
        let r = parse_table(text).unwrap();
        assert_eq!(parse_table(&format_table(&r)).unwrap(), r);
    }

    #[test]
    fn empty_schema_table() {
        let r = parse_table("#schema\t@annotation\na & b\n").unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.annotation(&[]), Some(&"a & b".parse().unwrap()));
    }
}
