//! System description files.
//!
//! A system file is line-oriented text with `#` comments and a fixed
//! field order:
//!
//! ```text
//! n = 2
//! m = 0
//! p = 1
//! g = 2
//! A = [1, -1, 1, 1]          # row-major n*n
//! B = []                     # row-major n*m
//! C = [0, 1]                 # row-major p*n
//! G = [1, 0, 0, 1]           # row-major n*g
//! f = ["-x1*(x1^2 + x2^2)", "-x2*(x1^2 + x2^2)"]
//! omega = [[-5, 5], [-5, 5]] # n+m [lo, hi] pairs, states then inputs
//! ```
//!
//! Every shape problem is reported with the offending field's name.

use std::fmt;

use nlbound::expr::{parse as parse_expr, SystemModel};
use nlbound::interval::{Interval, IntervalBox};
use nlbound::matfun::Mat;

#[derive(Debug)]
pub struct SysFileError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for SysFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for SysFileError {}

fn err(field: &str, message: impl Into<String>) -> SysFileError {
    SysFileError {
        field: field.to_string(),
        message: message.into(),
    }
}

/// A parsed scalar, string, or (nested) list value.
#[derive(Debug, Clone, PartialEq)]
enum Val {
    Num(f64),
    Str(String),
    List(Vec<Val>),
}

fn parse_value(field: &str, src: &str) -> Result<(Val, usize), SysFileError> {
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    if i >= bytes.len() {
        return Err(err(field, "missing value"));
    }
    match bytes[i] {
        b'[' => {
            i += 1;
            let mut items = Vec::new();
            loop {
                while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b']' {
                    return Ok((Val::List(items), i + 1));
                }
                let (item, used) = parse_value(field, &src[i..])?;
                items.push(item);
                i += used;
                while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b',' {
                    i += 1;
                } else if i < bytes.len() && bytes[i] == b']' {
                    return Ok((Val::List(items), i + 1));
                } else {
                    return Err(err(field, "expected `,` or `]` in list"));
                }
            }
        }
        b'"' => {
            let start = i + 1;
            let mut j = start;
            while j < bytes.len() && bytes[j] != b'"' {
                j += 1;
            }
            if j >= bytes.len() {
                return Err(err(field, "unterminated string"));
            }
            Ok((Val::Str(src[start..j].to_string()), j + 1))
        }
        _ => {
            let start = i;
            while i < bytes.len() && !matches!(bytes[i], b',' | b']' | b' ' | b'\t') {
                i += 1;
            }
            let text = &src[start..i];
            let v: f64 = text
                .parse()
                .map_err(|_| err(field, format!("invalid number `{text}`")))?;
            Ok((Val::Num(v), i))
        }
    }
}

struct FieldReader {
    fields: Vec<(String, String)>,
    next: usize,
}

impl FieldReader {
    fn new(content: &str) -> Result<Self, SysFileError> {
        let mut fields = Vec::new();
        for raw in content.lines() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line, "expected `field = value`"))?;
            fields.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(Self { fields, next: 0 })
    }

    /// Fields appear in a fixed documented order.
    fn take(&mut self, want: &str) -> Result<String, SysFileError> {
        match self.fields.get(self.next) {
            Some((key, value)) if key == want => {
                self.next += 1;
                Ok(value.clone())
            }
            Some((key, _)) => Err(err(
                want,
                format!("expected field `{want}` here, found `{key}` (field order is fixed)"),
            )),
            None => Err(err(want, "missing field")),
        }
    }

    fn finish(&self) -> Result<(), SysFileError> {
        match self.fields.get(self.next) {
            Some((key, _)) => Err(err(key, "unexpected extra field")),
            None => Ok(()),
        }
    }
}

fn take_dim(reader: &mut FieldReader, name: &str) -> Result<usize, SysFileError> {
    let raw = reader.take(name)?;
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| err(name, format!("invalid integer `{raw}`")))?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(err(name, format!("dimension must be a nonnegative integer, found `{raw}`")));
    }
    Ok(v as usize)
}

fn take_matrix(
    reader: &mut FieldReader,
    name: &str,
    rows: usize,
    cols: usize,
) -> Result<Mat, SysFileError> {
    let raw = reader.take(name)?;
    let (val, used) = parse_value(name, &raw)?;
    if !raw[used..].trim().is_empty() {
        return Err(err(name, "trailing input after value"));
    }
    let items = match val {
        Val::List(items) => items,
        _ => return Err(err(name, "expected a flat row-major list `[..]`")),
    };
    if items.len() != rows * cols {
        return Err(err(
            name,
            format!(
                "expected {} entries ({rows}x{cols} row-major), found {}",
                rows * cols,
                items.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(items.len());
    for item in items {
        match item {
            Val::Num(v) => data.push(v),
            _ => return Err(err(name, "matrix entries must be numbers")),
        }
    }
    Ok(Mat::from_row_major(rows, cols, &data))
}

/// Parse and validate a complete system file into a model.
pub fn parse_system(content: &str) -> Result<SystemModel, SysFileError> {
    let mut reader = FieldReader::new(content)?;
    let n = take_dim(&mut reader, "n")?;
    let m = take_dim(&mut reader, "m")?;
    let p = take_dim(&mut reader, "p")?;
    let g = take_dim(&mut reader, "g")?;

    let a = take_matrix(&mut reader, "A", n, n)?;
    let b = take_matrix(&mut reader, "B", n, m)?;
    let c = take_matrix(&mut reader, "C", p, n)?;
    let gmat = take_matrix(&mut reader, "G", n, g)?;

    let f_raw = reader.take("f")?;
    let (f_val, used) = parse_value("f", &f_raw)?;
    if !f_raw[used..].trim().is_empty() {
        return Err(err("f", "trailing input after value"));
    }
    let f_items = match f_val {
        Val::List(items) => items,
        _ => return Err(err("f", "expected a list of expression strings")),
    };
    if f_items.len() != g {
        return Err(err(
            "f",
            format!("expected {g} expressions, found {}", f_items.len()),
        ));
    }
    let mut f = Vec::with_capacity(g);
    for (i, item) in f_items.into_iter().enumerate() {
        let src = match item {
            Val::Str(s) => s,
            _ => return Err(err(&format!("f[{i}]"), "expected a quoted expression string")),
        };
        let e = parse_expr(&src, n, m).map_err(|e| err(&format!("f[{i}]"), e.to_string()))?;
        f.push(e);
    }

    let omega_raw = reader.take("omega")?;
    let (omega_val, used) = parse_value("omega", &omega_raw)?;
    if !omega_raw[used..].trim().is_empty() {
        return Err(err("omega", "trailing input after value"));
    }
    let pairs = match omega_val {
        Val::List(items) => items,
        _ => return Err(err("omega", "expected a list of [lo, hi] pairs")),
    };
    if pairs.len() != n + m {
        return Err(err(
            "omega",
            format!("expected {} [lo, hi] pairs (states then inputs), found {}", n + m, pairs.len()),
        ));
    }
    let mut dims = Vec::with_capacity(n + m);
    for (i, pair) in pairs.into_iter().enumerate() {
        let entries = match pair {
            Val::List(items) if items.len() == 2 => items,
            _ => return Err(err(&format!("omega[{i}]"), "expected a [lo, hi] pair")),
        };
        let (lo, hi) = match (&entries[0], &entries[1]) {
            (Val::Num(lo), Val::Num(hi)) => (*lo, *hi),
            _ => return Err(err(&format!("omega[{i}]"), "endpoints must be numbers")),
        };
        if !(lo <= hi) {
            return Err(err(
                &format!("omega[{i}]"),
                format!("lower endpoint {lo} exceeds upper endpoint {hi}"),
            ));
        }
        dims.push(Interval::new(lo, hi));
    }
    reader.finish()?;

    SystemModel::new(n, m, p, g, a, b, c, gmat, f, IntervalBox::new(dims)).map_err(|e| match &e {
        nlbound::expr::ModelError::Dimension { field, .. } => err(field, e.to_string()),
        nlbound::expr::ModelError::EmptyInterior(i) => err(&format!("omega[{i}]"), e.to_string()),
        nlbound::expr::ModelError::BadExpr { index, .. } => {
            err(&format!("f[{index}]"), e.to_string())
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MOVING_OBJECT: &str = r#"
# planar example
n = 2
m = 0
p = 1
g = 2
A = [1, -1, 1, 1]
B = []
C = [0, 1]
G = [1, 0, 0, 1]
f = ["-x1*(x1^2 + x2^2)", "-x2*(x1^2 + x2^2)"]
omega = [[-5, 5], [-5, 5]]
"#;

    #[test]
    fn parses_bundled_example() {
        let model = parse_system(MOVING_OBJECT).unwrap();
        assert_eq!((model.n, model.m, model.p, model.g), (2, 0, 1, 2));
        assert_eq!(model.a.get(0, 1), -1.0);
        assert_eq!(model.omega.dims[0], Interval::new(-5.0, 5.0));
    }

    #[test]
    fn wrong_b_shape_names_the_field() {
        let bad = MOVING_OBJECT.replace("B = []", "B = [1, 0]");
        let e = parse_system(&bad).unwrap_err();
        assert_eq!(e.field, "B");
    }

    #[test]
    fn out_of_range_variable_names_the_entry() {
        let bad = MOVING_OBJECT.replace("\"-x2*(x1^2 + x2^2)\"", "\"x3\"");
        let e = parse_system(&bad).unwrap_err();
        assert_eq!(e.field, "f[1]");
        assert!(e.message.contains("unknown variable"));
    }

    #[test]
    fn field_order_is_enforced() {
        let reordered = MOVING_OBJECT.replace("n = 2\nm = 0", "m = 0\nn = 2");
        let e = parse_system(&reordered).unwrap_err();
        assert_eq!(e.field, "n");
        assert!(e.message.contains("field order"));
    }

    #[test]
    fn omega_shape_errors() {
        let bad = MOVING_OBJECT.replace("omega = [[-5, 5], [-5, 5]]", "omega = [[-5, 5]]");
        let e = parse_system(&bad).unwrap_err();
        assert_eq!(e.field, "omega");
        let flipped = MOVING_OBJECT.replace("[[-5, 5], [-5, 5]]", "[[5, -5], [-5, 5]]");
        let e = parse_system(&flipped).unwrap_err();
        assert_eq!(e.field, "omega[0]");
    }
}
