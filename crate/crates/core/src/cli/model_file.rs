//! TOML model files.
//!
//! ```toml
//! dim = 2
//! horizon = 1.0
//! b = [0.1, 0.05]
//! c = [[0.04, 0.01], [0.01, 0.09]]
//! atoms = [{ x = [0.3, -0.1], w = 1.0 }]
//! ```
//!
//! Piecewise-constant models replace the top-level `b`, `c`, `atoms` with
//! `[[segments]]` tables carrying the same keys plus `start`. In one
//! dimension scalars may stand in for vectors and matrices. Missing `b` or
//! `c` default to zero and missing `atoms` to no jumps.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use crate::model::{Characteristics, JumpAtom, JumpMeasure, MarketModel, Matrix, Segment, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFileError {
    pub source_name: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ModelFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}: {}",
            self.source_name, self.line, self.column, self.message
        )
    }
}

impl std::error::Error for ModelFileError {}

#[derive(Deserialize)]
#[serde(untagged)]
enum Numbers {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixRepr {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAtom {
    x: Spanned<Numbers>,
    w: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    start: f64,
    b: Option<Spanned<Numbers>>,
    c: Option<Spanned<MatrixRepr>>,
    atoms: Option<Vec<Spanned<RawAtom>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    dim: Spanned<usize>,
    horizon: f64,
    b: Option<Spanned<Numbers>>,
    c: Option<Spanned<MatrixRepr>>,
    atoms: Option<Vec<Spanned<RawAtom>>>,
    segments: Option<Vec<Spanned<RawSegment>>>,
}

struct Ctx<'a> {
    text: &'a str,
    name: &'a str,
}

impl Ctx<'_> {
    fn error(&self, span: Range<usize>, message: impl Into<String>) -> ModelFileError {
        let offset = span.start.min(self.text.len());
        let before = &self.text[..offset];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        ModelFileError {
            source_name: self.name.to_string(),
            line,
            column,
            message: message.into(),
        }
    }

    fn vector(&self, v: &Spanned<Numbers>, d: usize, what: &str) -> Result<Vector, ModelFileError> {
        match v.get_ref() {
            Numbers::Scalar(s) if d == 1 => Ok(Vector::from_element(1, *s)),
            Numbers::Scalar(_) => {
                Err(self.error(v.span(), format!("{what} must be a list of {d} numbers")))
            }
            Numbers::List(xs) if xs.len() == d => Ok(Vector::from_vec(xs.clone())),
            Numbers::List(xs) => Err(self.error(
                v.span(),
                format!("{what} has {} entries, expected {d}", xs.len()),
            )),
        }
    }

    fn matrix(&self, m: &Spanned<MatrixRepr>, d: usize) -> Result<Matrix, ModelFileError> {
        match m.get_ref() {
            MatrixRepr::Scalar(s) if d == 1 => Ok(Matrix::from_element(1, 1, *s)),
            MatrixRepr::Scalar(_) => {
                Err(self.error(m.span(), format!("c must be a {d}×{d} list of rows")))
            }
            MatrixRepr::Rows(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(self.error(m.span(), format!("c must be a {d}×{d} list of rows")));
                }
                Ok(Matrix::from_fn(d, d, |i, j| rows[i][j]))
            }
        }
    }

    fn characteristics(
        &self,
        d: usize,
        b: Option<&Spanned<Numbers>>,
        c: Option<&Spanned<MatrixRepr>>,
        atoms: Option<&Vec<Spanned<RawAtom>>>,
        span: Range<usize>,
    ) -> Result<Characteristics, ModelFileError> {
        let b = b
            .map(|v| self.vector(v, d, "b"))
            .transpose()?
            .unwrap_or_else(|| Vector::zeros(d));
        let c = c
            .map(|m| self.matrix(m, d))
            .transpose()?
            .unwrap_or_else(|| Matrix::zeros(d, d));
        let mut list = Vec::new();
        for (i, a) in atoms.into_iter().flatten().enumerate() {
            let raw = a.get_ref();
            list.push(JumpAtom::new(
                self.vector(&raw.x, d, &format!("atoms[{i}].x"))?,
                raw.w,
            ));
        }
        Characteristics::new(b, c, JumpMeasure::new(list))
            .map_err(|e| self.error(span, e.to_string()))
    }
}

/// Parses a model from TOML text; `name` labels diagnostics.
pub fn parse_model(text: &str, name: &str) -> Result<MarketModel, ModelFileError> {
    let ctx = Ctx { text, name };
    let raw: RawModel = toml::from_str(text).map_err(|e| {
        let span = e.span().unwrap_or(0..0);
        ctx.error(span, e.message().to_string())
    })?;
    let d = *raw.dim.get_ref();
    if d == 0 {
        return Err(ctx.error(raw.dim.span(), "dim must be positive"));
    }
    match &raw.segments {
        None => {
            let chars =
                ctx.characteristics(d, raw.b.as_ref(), raw.c.as_ref(), raw.atoms.as_ref(), 0..0)?;
            Ok(MarketModel::constant(chars, raw.horizon))
        }
        Some(segs) => {
            if let Some(span) = raw
                .b
                .as_ref()
                .map(|v| v.span())
                .or_else(|| raw.c.as_ref().map(|v| v.span()))
                .or_else(|| raw.atoms.as_ref().and_then(|a| a.first()).map(|a| a.span()))
            {
                return Err(ctx.error(
                    span,
                    "top-level b, c and atoms are not allowed together with [[segments]]",
                ));
            }
            let mut out = Vec::with_capacity(segs.len());
            for s in segs {
                let r = s.get_ref();
                let chars =
                    ctx.characteristics(d, r.b.as_ref(), r.c.as_ref(), r.atoms.as_ref(), s.span())?;
                out.push(Segment {
                    start: r.start,
                    chars,
                });
            }
            let span = segs.first().map_or(0..0, |s| s.span());
            MarketModel::piecewise(raw.horizon, out).map_err(|e| ctx.error(span, e.to_string()))
        }
    }
}

pub fn load_model(path: &Path) -> Result<MarketModel, ModelFileError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ModelFileError {
        source_name: name.clone(),
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    parse_model(&text, &name)
}
