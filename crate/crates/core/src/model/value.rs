//! Argument and return values exchanged with submission drivers.
//!
//! Literal grammar:
//!
//! ```text
//! integer  := ['+' | '-'] digit+
//! boolean  := "true" | "false"
//! text     := '"' ( escape | any char except '"' and '\' )* '"'
//! escape   := '\' ( '"' | '\' | 'n' | 't' | 'r' )
//! array    := '[' [ integer ( ',' integer )* ] ']'
//! ```
//!
//! Whitespace around a literal and inside arrays is ignored.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// The value types a problem signature may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueType {
    Integer,
    Boolean,
    Text,
    IntegerArray,
}

impl ValueType {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::Integer => "integer",
            ValueType::Boolean => "boolean",
            ValueType::Text => "text",
            ValueType::IntegerArray => "integer-array",
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Integer(i64),
    Boolean(bool),
    Text(String),
    IntegerArray(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid literal at offset {position}: {message}")]
pub struct LiteralError {
    /// Byte offset into the input where the problem was detected.
    pub position: usize,
    pub message: String,
}

impl LiteralError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        Self {
            position,
            message: message.into(),
        }
    }
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Integer(_) => ValueType::Integer,
            Value::Boolean(_) => ValueType::Boolean,
            Value::Text(_) => ValueType::Text,
            Value::IntegerArray(_) => ValueType::IntegerArray,
        }
    }

    /// Canonical literal form. Arrays use `", "` between elements.
    pub fn render(&self) -> String {
        self.to_string()
    }

    /// Parses a literal and checks it against `expected`.
    pub fn parse_as(text: &str, expected: ValueType) -> Result<Value, LiteralError> {
        let value = Self::parse_any(text)?;
        if value.value_type() != expected {
            let start = text.len() - text.trim_start().len();
            return Err(LiteralError::new(
                start,
                format!("expected {expected} literal, found {}", value.value_type()),
            ));
        }
        Ok(value)
    }

    /// Parses a literal whose type is inferred from its syntax.
    pub fn parse_any(text: &str) -> Result<Value, LiteralError> {
        let mut cursor = Cursor::new(text);
        cursor.skip_ws();
        let value = cursor.value()?;
        cursor.skip_ws();
        if !cursor.at_end() {
            return Err(LiteralError::new(cursor.pos, "unexpected trailing input"));
        }
        Ok(value)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Integer(n) => write!(f, "{n}"),
            Value::Boolean(b) => write!(f, "{b}"),
            Value::Text(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        '\r' => f.write_str("\\r")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Value::IntegerArray(items) => {
                f.write_str("[")?;
                for (i, n) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{n}")?;
                }
                f.write_str("]")
            }
        }
    }
}

impl FromStr for Value {
    type Err = LiteralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Value::parse_any(s)
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Value::parse_any(&text).map_err(serde::de::Error::custom)
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn value(&mut self) -> Result<Value, LiteralError> {
        match self.peek() {
            None => Err(LiteralError::new(self.pos, "empty literal")),
            Some('[') => self.array(),
            Some('"') => self.text(),
            Some(c) if c == '-' || c == '+' || c.is_ascii_digit() => self.integer().map(Value::Integer),
            Some(_) => self.word(),
        }
    }

    fn integer(&mut self) -> Result<i64, LiteralError> {
        let start = self.pos;
        if matches!(self.peek(), Some('-' | '+')) {
            self.bump();
        }
        let digits_start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.pos == digits_start {
            return Err(LiteralError::new(self.pos, "expected digits"));
        }
        self.src[start..self.pos]
            .parse::<i64>()
            .map_err(|_| LiteralError::new(start, "integer out of range"))
    }

    fn word(&mut self) -> Result<Value, LiteralError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            self.bump();
        }
        match &self.src[start..self.pos] {
            "true" => Ok(Value::Boolean(true)),
            "false" => Ok(Value::Boolean(false)),
            "" => Err(LiteralError::new(start, "unexpected character")),
            other => Err(LiteralError::new(start, format!("unknown literal `{other}`"))),
        }
    }

    fn text(&mut self) -> Result<Value, LiteralError> {
        let open = self.pos;
        self.bump();
        let mut out = String::new();
        loop {
            let here = self.pos;
            match self.bump() {
                None => return Err(LiteralError::new(open, "unterminated string literal")),
                Some('"') => return Ok(Value::Text(out)),
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    _ => return Err(LiteralError::new(here, "invalid escape sequence")),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn array(&mut self) -> Result<Value, LiteralError> {
        self.bump();
        let mut items = Vec::new();
        self.skip_ws();
        if self.peek() == Some(']') {
            self.bump();
            return Ok(Value::IntegerArray(items));
        }
        loop {
            self.skip_ws();
            if !matches!(self.peek(), Some(c) if c == '-' || c == '+' || c.is_ascii_digit()) {
                return Err(LiteralError::new(self.pos, "expected integer array element"));
            }
            items.push(self.integer()?);
            self.skip_ws();
            match self.bump() {
                Some(',') => continue,
                Some(']') => return Ok(Value::IntegerArray(items)),
                Some(_) => return Err(LiteralError::new(self.pos - 1, "expected `,` or `]` in array literal")),
                None => return Err(LiteralError::new(self.pos, "unterminated array literal")),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_table_literals() {
        assert_eq!(
            Value::parse_as("[1, 2, 1, 3]", ValueType::IntegerArray).unwrap(),
            Value::IntegerArray(vec![1, 2, 1, 3])
        );
        assert_eq!(Value::parse_as("5", ValueType::Integer).unwrap(), Value::Integer(5));
        assert_eq!(
            Value::parse_as("[]", ValueType::IntegerArray).unwrap(),
            Value::IntegerArray(vec![])
        );
        assert_eq!(
            Value::parse_as("[ 1 ,2,\t-3 ]", ValueType::IntegerArray).unwrap(),
            Value::IntegerArray(vec![1, 2, -3])
        );
        assert_eq!(Value::parse_any("+7").unwrap(), Value::Integer(7));
        assert_eq!(Value::parse_any(" true ").unwrap(), Value::Boolean(true));
        assert_eq!(Value::parse_any(r#""a\"b\\c""#).unwrap(), Value::Text("a\"b\\c".into()));
    }

    #[test]
    fn renders_canonically() {
        assert_eq!(Value::Integer(20).render(), "20");
        assert_eq!(Value::IntegerArray(vec![1, 2]).render(), "[1, 2]");
        assert_eq!(Value::Boolean(true).render(), "true");
        assert_eq!(Value::IntegerArray(vec![]).render(), "[]");
        assert_eq!(Value::Text("x\ny".into()).render(), r#""x\ny""#);
    }

    #[test]
    fn reports_positions() {
        let err = Value::parse_any("[1, 2,, 3]").unwrap_err();
        assert_eq!(err.position, 6);
        let err = Value::parse_any("12x").unwrap_err();
        assert_eq!(err.position, 2);
        let err = Value::parse_any("\"open").unwrap_err();
        assert_eq!(err.position, 0);
        assert!(Value::parse_any("").is_err());
        assert!(Value::parse_any("[1, 2").is_err());
        assert!(Value::parse_any("99999999999999999999").is_err());
        assert!(Value::parse_any("True").is_err());
    }

    #[test]
    fn type_mismatch_is_an_error() {
        let err = Value::parse_as("  5", ValueType::Boolean).unwrap_err();
        assert_eq!(err.position, 2);
        assert!(err.message.contains("expected boolean"));
        assert!(Value::parse_as("[1]", ValueType::Integer).is_err());
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<i64>().prop_map(Value::Integer),
            any::<bool>().prop_map(Value::Boolean),
            any::<String>().prop_map(Value::Text),
            proptest::collection::vec(any::<i64>(), 0..12).prop_map(Value::IntegerArray),
        ]
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(v in arb_value()) {
            let text = v.render();
            prop_assert_eq!(Value::parse_as(&text, v.value_type()).unwrap(), v);
        }
    }
}
