//! Minimal RFC-4180 reader and writer.
//!
//! The reader keeps track of whether each field was quoted so callers can
//! tell an absent value (empty, unquoted) from an empty string (`""`).

use std::io::{self, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub text: String,
    pub quoted: bool,
}

impl Field {
    /// `None` for an empty unquoted cell.
    pub fn into_value(self) -> Option<String> {
        if self.text.is_empty() && !self.quoted {
            None
        } else {
            Some(self.text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    /// 1-based line on which the row starts.
    pub line: usize,
    pub fields: Vec<Field>,
}

/// Parses comma-separated text. Blank lines are skipped; a leading UTF-8 BOM
/// is ignored. Quoted fields may span lines.
pub fn parse(text: &str) -> Result<Vec<Row>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut rows = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1usize;

    loop {
        if chars.peek().is_none() {
            break;
        }
        let start_line = line;
        let mut fields = Vec::new();
        let mut blank = true;
        loop {
            // one field
            let mut buf = String::new();
            let mut quoted = false;
            if chars.peek() == Some(&'"') {
                chars.next();
                quoted = true;
                blank = false;
                loop {
                    match chars.next() {
                        None => return Err(Error::format(start_line, "unterminated quoted field")),
                        Some('"') => {
                            if chars.peek() == Some(&'"') {
                                chars.next();
                                buf.push('"');
                            } else {
                                break;
                            }
                        }
                        Some(c) => {
                            if c == '\n' {
                                line += 1;
                            }
                            buf.push(c);
                        }
                    }
                }
                match chars.peek() {
                    None | Some(',') | Some('\n') | Some('\r') => {}
                    Some(_) => {
                        return Err(Error::format(line, "unexpected character after closing quote"))
                    }
                }
            } else {
                while let Some(&c) = chars.peek() {
                    match c {
                        ',' | '\n' | '\r' => break,
                        '"' => return Err(Error::format(line, "quote inside unquoted field")),
                        _ => {
                            buf.push(c);
                            chars.next();
                        }
                    }
                }
            }
            if !buf.is_empty() {
                blank = false;
            }
            fields.push(Field { text: buf, quoted });

            match chars.next() {
                Some(',') => {
                    blank = false;
                    continue;
                }
                Some('\r') => {
                    if chars.peek() == Some(&'\n') {
                        chars.next();
                    }
                    line += 1;
                    break;
                }
                Some('\n') => {
                    line += 1;
                    break;
                }
                None => break,
                Some(_) => unreachable!("field loop stops only at separators"),
            }
        }
        if !blank {
            rows.push(Row {
                line: start_line,
                fields,
            });
        }
    }
    Ok(rows)
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty() || s.contains([',', '"', '\n', '\r']) || s.starts_with('\u{feff}')
}

/// Writes one row. `None` cells are written empty and unquoted; empty
/// strings are written as `""`.
pub fn write_row<W: Write, S: AsRef<str>>(w: &mut W, cells: &[Option<S>]) -> io::Result<()> {
    for (i, cell) in cells.iter().enumerate() {
        if i > 0 {
            w.write_all(b",")?;
        }
        if let Some(s) = cell {
            let s = s.as_ref();
            if needs_quotes(s) {
                w.write_all(b"\"")?;
                w.write_all(s.replace('"', "\"\"").as_bytes())?;
                w.write_all(b"\"")?;
            } else {
                w.write_all(s.as_bytes())?;
            }
        }
    }
    w.write_all(b"\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(row: &Row) -> Vec<Option<String>> {
        row.fields.iter().cloned().map(Field::into_value).collect()
    }

    #[test]
    fn quoted_comma_is_one_field() {
        let rows = parse("id,name\n1,\"Gates, Bill\"\n").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(values(&rows[1]), vec![Some("1".into()), Some("Gates, Bill".into())]);
    }

    #[test]
    fn empty_unquoted_is_absent_but_quoted_empty_is_text() {
        let rows = parse("a,b,c\n,\"\",x\n").unwrap();
        assert_eq!(values(&rows[1]), vec![None, Some(String::new()), Some("x".into())]);
    }

    #[test]
    fn escaped_quotes_and_embedded_newline() {
        let rows = parse("a\n\"say \"\"hi\"\"\nthere\"\nnext\n").unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].fields[0].text, "say \"hi\"\nthere");
        assert_eq!(rows[2].line, 4);
    }

    #[test]
    fn crlf_and_missing_final_newline() {
        let rows = parse("a,b\r\n1,2\r\n3,4").unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].fields[1].text, "4");
    }

    #[test]
    fn blank_lines_skipped_and_bom_ignored() {
        let rows = parse("\u{feff}a\n\n1\n").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].fields[0].text, "a");
        assert_eq!(rows[1].line, 3);
    }

    #[test]
    fn malformed_quotes_are_errors() {
        assert!(matches!(parse("a\n\"open"), Err(Error::Format { line: Some(2), .. })));
        assert!(parse("a\n\"x\"y\n").is_err());
        assert!(parse("a\nx\"y\n").is_err());
    }

    #[test]
    fn writer_quotes_only_when_needed() {
        let mut out = Vec::new();
        write_row(&mut out, &[Some("plain"), None, Some(""), Some("a,b"), Some("q\"")]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "plain,,\"\",\"a,b\",\"q\"\"\"\n");
    }
}
