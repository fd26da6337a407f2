//! Token-level canonical form of test sources.
//!
//! Two completions that differ only in local names, comments, docstrings,
//! quoting, number spelling or layout map to the same key. The entry point,
//! test-framework vocabulary, assertion helpers, builtins and attribute names
//! keep their spelling.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::lexer::{self, LexError, Token, TokenKind};

const FRAMEWORK_NAMES: &[&str] = &[
    "self", "cls", "unittest", "TestCase", "pytest", "raises", "approx", "mark", "parametrize",
    "fixture", "setUp", "tearDown", "setUpClass", "tearDownClass", "main", "fail", "subTest",
];

const BUILTINS: &[&str] = &[
    "abs", "all", "any", "bool", "bytes", "callable", "chr", "dict", "divmod", "enumerate",
    "filter", "float", "frozenset", "getattr", "hasattr", "hash", "int", "isinstance",
    "issubclass", "iter", "len", "list", "map", "max", "min", "next", "object", "ord", "pow",
    "print", "range", "repr", "reversed", "round", "set", "setattr", "slice", "sorted", "str",
    "sum", "tuple", "type", "zip", "Exception", "ValueError", "TypeError", "KeyError",
    "IndexError", "ZeroDivisionError", "AttributeError", "RuntimeError", "AssertionError",
    "StopIteration", "NotImplementedError", "OverflowError", "ArithmeticError", "LookupError",
];

/// A token of the canonical stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CanonToken {
    Text(String),
    Newline,
    Indent,
    Dedent,
}

fn is_preserved(name: &str, entry_point: &str) -> bool {
    name == entry_point
        || lexer::is_keyword(name)
        || lexer::is_assertion_name(name)
        || FRAMEWORK_NAMES.contains(&name)
        || BUILTINS.contains(&name)
}

/// True when the string token at `i` is a bare expression statement.
fn is_docstring(tokens: &[Token], i: usize) -> bool {
    let before_ok = i == 0
        || matches!(tokens[i - 1].kind, TokenKind::Newline | TokenKind::Indent | TokenKind::Dedent);
    let after_ok = tokens.get(i + 1).is_none_or(|t| t.kind == TokenKind::Newline);
    before_ok && after_ok
}

pub fn canonical_tokens(source: &str, entry_point: &str) -> Result<Vec<CanonToken>, LexError> {
    let tokens = lexer::code_tokens(source)?;
    let mut names: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<CanonToken> = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        match t.kind {
            TokenKind::Str if is_docstring(&tokens, i) => {
                // drop the statement and its terminating newline
                i += if tokens.get(i + 1).is_some() { 2 } else { 1 };
                continue;
            }
            TokenKind::Str => out.push(CanonToken::Text(normalize_string(&t.text))),
            TokenKind::Number => out.push(CanonToken::Text(normalize_number(&t.text))),
            TokenKind::Name => {
                let after_dot = i > 0 && tokens[i - 1].kind == TokenKind::Op && tokens[i - 1].text == ".";
                if after_dot || is_preserved(&t.text, entry_point) {
                    out.push(CanonToken::Text(t.text.clone()));
                } else {
                    let next = names.len();
                    let id = *names.entry(t.text.clone()).or_insert(next);
                    out.push(CanonToken::Text(format!("I{id}")));
                }
            }
            TokenKind::Op => out.push(CanonToken::Text(t.text.clone())),
            TokenKind::Newline => out.push(CanonToken::Newline),
            TokenKind::Indent => out.push(CanonToken::Indent),
            TokenKind::Dedent => out.push(CanonToken::Dedent),
            TokenKind::Comment => {}
        }
        i += 1;
    }
    Ok(collapse_empty_blocks(out))
}

/// Removes `Indent Dedent` pairs left behind when a block held only a docstring.
fn collapse_empty_blocks(mut toks: Vec<CanonToken>) -> Vec<CanonToken> {
    loop {
        let pos = toks
            .windows(2)
            .position(|w| w[0] == CanonToken::Indent && w[1] == CanonToken::Dedent);
        match pos {
            Some(p) => {
                toks.drain(p..p + 2);
            }
            None => return toks,
        }
    }
}

/// Digest of the canonical token stream.
pub fn canonicalize(source: &str, entry_point: &str) -> Result<String, LexError> {
    let toks = canonical_tokens(source, entry_point)?;
    let mut h = Sha256::new();
    for t in &toks {
        match t {
            CanonToken::Text(s) => h.update(s.as_bytes()),
            CanonToken::Newline => h.update(b"\x01NL"),
            CanonToken::Indent => h.update(b"\x01IN"),
            CanonToken::Dedent => h.update(b"\x01DE"),
        }
        h.update(b"\x1f");
    }
    Ok(hex::encode(h.finalize()))
}

/// Renders a canonical token stream back to source text that lexes to the
/// same canonical stream.
pub fn render(tokens: &[CanonToken]) -> String {
    let mut out = String::new();
    let mut depth = 0usize;
    let mut line_start = true;
    for t in tokens {
        match t {
            CanonToken::Indent => depth += 1,
            CanonToken::Dedent => depth = depth.saturating_sub(1),
            CanonToken::Newline => {
                out.push('\n');
                line_start = true;
            }
            CanonToken::Text(s) => {
                if line_start {
                    out.push_str(&"    ".repeat(depth));
                    line_start = false;
                } else {
                    out.push(' ');
                }
                out.push_str(s);
            }
        }
    }
    out
}

pub fn normalize_string(text: &str) -> String {
    let quote_at = text.find(['"', '\'']).unwrap_or(0);
    let mut prefix: Vec<char> = text[..quote_at].to_ascii_lowercase().chars().filter(|&c| c != 'u').collect();
    prefix.sort_unstable();
    let raw = prefix.contains(&'r');
    let rest = &text[quote_at..];
    let q = rest.chars().next().unwrap_or('"');
    let qlen = if rest.len() >= 6 && rest.starts_with(&q.to_string().repeat(3)) { 3 } else { 1 };
    let body = &rest[qlen..rest.len().saturating_sub(qlen).max(qlen)];

    let mut norm = String::with_capacity(body.len() + 2);
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some('\'') if !raw => norm.push('\''),
                Some('\n') if !raw => {}
                Some(n) => {
                    norm.push('\\');
                    norm.push(n);
                }
                None => norm.push('\\'),
            },
            '"' => norm.push_str("\\\""),
            '\n' => norm.push_str("\\n"),
            '\r' => {}
            c => norm.push(c),
        }
    }
    let prefix: String = prefix.into_iter().collect();
    format!("{prefix}\"{norm}\"")
}

pub fn normalize_number(text: &str) -> String {
    let lower: String = text.to_ascii_lowercase().chars().filter(|&c| c != '_').collect();
    if lower.starts_with("0x") || lower.starts_with("0o") || lower.starts_with("0b") {
        return lower;
    }
    let (body, imag) = match lower.strip_suffix('j') {
        Some(b) => (b.to_string(), "j"),
        None => (lower.clone(), ""),
    };
    let (mantissa, exponent) = match body.split_once('e') {
        Some((m, e)) => (m.to_string(), Some(e.to_string())),
        None => (body.clone(), None),
    };
    let mantissa = match mantissa.split_once('.') {
        Some((int, frac)) => {
            let int = int.trim_start_matches('0');
            let int = if int.is_empty() { "0" } else { int };
            let frac = if frac.is_empty() { "0" } else { frac };
            format!("{int}.{frac}")
        }
        None => {
            let int = mantissa.trim_start_matches('0');
            if int.is_empty() { "0".to_string() } else { int.to_string() }
        }
    };
    let exponent = exponent.map(|e| {
        let (sign, digits) = match e.strip_prefix('-') {
            Some(d) => ("-", d),
            None => ("", e.trim_start_matches('+')),
        };
        let digits = digits.trim_start_matches('0');
        let digits = if digits.is_empty() { "0" } else { digits };
        format!("e{sign}{digits}")
    });
    format!("{mantissa}{}{imag}", exponent.unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;

    const EP: &str = "add";

    fn key(src: &str) -> String {
        canonicalize(src, EP).unwrap()
    }

    #[test]
    fn variable_renaming_is_ignored() {
        let a = "def test_add():\n    result = add(2, 3)\n    assert result == 5\n";
        let b = "def test_add():\n    out = add(2, 3)\n    assert out == 5\n";
        assert_eq!(key(a), key(b));
    }

    #[test]
    fn comment_lines_are_ignored() {
        let a = "def test_add():\n    r = add(2, 3)\n    assert r == 5\n";
        let b = "def test_add():\n    # two plus three\n    r = add(2, 3)\n    assert r == 5  # sum\n";
        assert_eq!(key(a), key(b));
    }

    #[test]
    fn different_expected_literal_changes_key() {
        let a = "def test_add(self):\n    r = add(2, 3)\n    self.assertEqual(r, 5)\n";
        let b = "def test_add(self):\n    r = add(2, 3)\n    self.assertEqual(r, 6)\n";
        assert_ne!(key(a), key(b));
    }

    #[test]
    fn docstrings_quotes_numbers_and_layout() {
        let a = "def test_x():\n    '''Checks it.'''\n    assert add(1.50E+02, 0) == 'x'\n";
        let b = "def   test_y():\n\n    assert add( 1.50e2 , 00 )==\"x\"\n";
        assert_eq!(key(a), key(b));
    }

    #[test]
    fn entry_point_and_attributes_are_not_renamed() {
        let a = "def test_a():\n    assert add(1, 2) == 3\n";
        let b = "def test_a():\n    assert sub(1, 2) == 3\n";
        assert_ne!(key(a), key(b));
        let c = "def test_a():\n    x = [add(1, 2)]\n    x.append(1)\n    assert x\n";
        let d = "def test_a():\n    x = [add(1, 2)]\n    x.pop(1)\n    assert x\n";
        assert_ne!(key(c), key(d));
    }

    #[test]
    fn docstring_only_body_collapses() {
        let a = "def helper():\n    \"\"\"Nothing here.\"\"\"\ndef test_a():\n    assert add(1, 1) == 2\n";
        let toks = canonical_tokens(a, EP).unwrap();
        assert!(!toks.windows(2).any(|w| w[0] == CanonToken::Indent && w[1] == CanonToken::Dedent));
        let rendered = render(&toks);
        assert_eq!(canonicalize(&rendered, EP).unwrap(), key(a));
    }

    #[test]
    fn number_normalization() {
        assert_eq!(normalize_number("007"), "7");
        assert_eq!(normalize_number("0"), "0");
        assert_eq!(normalize_number("1E+05"), "1e5");
        assert_eq!(normalize_number(".5"), "0.5");
        assert_eq!(normalize_number("1_000"), "1000");
        assert_eq!(normalize_number("0XFF"), "0xff");
        assert_eq!(normalize_number("2.5e-03j"), "2.5e-3j");
    }

    #[test]
    fn string_normalization() {
        assert_eq!(normalize_string("'it\\'s'"), "\"it's\"");
        assert_eq!(normalize_string("'say \"hi\"'"), "\"say \\\"hi\\\"\"");
        assert_eq!(normalize_string("\"say \\\"hi\\\"\""), "\"say \\\"hi\\\"\"");
        assert_eq!(normalize_string("RB'x'"), "br\"x\"");
        assert_eq!(normalize_string("'''a\nb'''"), "\"a\\nb\"");
        assert_eq!(normalize_string("''"), "\"\"");
    }

    #[test]
    fn unlexable_source_is_an_error() {
        assert!(canonicalize("Here's my answer", EP).is_err());
    }
}
