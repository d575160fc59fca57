//! Text grammar for nonlinearities.
//!
//! ```text
//! expr   := number '*' expr
//!         | 'power(' p ')'
//!         | 'powerlog(' a ',' b ',' c ')'
//!         | 'piecewise(' c1 ',' a1 ',' a2 ',' knot ')'
//!         | 'sum(' expr { ',' expr } ')'
//!         | 'product(' expr ',' expr ')'
//!         | 'compose(' outer ',' inner ')'
//!         | 'scale(' c ',' expr ')'
//!         | 'bounds(' expr ',' delta ',' g0 ')'
//! ```
//!
//! `w*expr` inside `sum` is a weighted term; elsewhere it is shorthand for
//! `scale(w, expr)`. Whitespace is ignored.

use super::{GFuncError, GFunction};

pub fn parse_gfunction(text: &str) -> Result<GFunction, GFuncError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let g = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(g)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> GFuncError {
        GFuncError::Parse {
            column: self.pos + 1,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), GFuncError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        (self.pos > start)
            .then(|| String::from_utf8_lossy(&self.src[start..self.pos]).to_lowercase())
    }

    fn number(&mut self) -> Result<f64, GFuncError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            let sign_after_exp = (c == b'-' || c == b'+')
                && self.pos > start
                && matches!(self.src[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit()
                || c == b'.'
                || c == b'e'
                || c == b'E'
                || sign_after_exp
                || (self.pos == start && (c == b'-' || c == b'+'))
            {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map_err(|_| {
            self.pos = start;
            self.error("expected a number")
        })
    }

    fn starts_number(&mut self) -> bool {
        matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.' || c == b'-' || c == b'+')
    }

    /// Either `w*expr` (returning `Some(w)`) or a bare expression.
    fn term(&mut self) -> Result<(Option<f64>, GFunction), GFuncError> {
        if self.starts_number() {
            let w = self.number()?;
            self.expect(b'*')?;
            let g = self.expr()?;
            return Ok((Some(w), g));
        }
        Ok((None, self.expr()?))
    }

    fn expr(&mut self) -> Result<GFunction, GFuncError> {
        if self.starts_number() {
            let at = self.pos;
            let (w, g) = self.term()?;
            return GFunction::scale(w.unwrap_or(1.0), g).map_err(|e| self.wrap(at, e));
        }
        let at = self.pos;
        let name = self
            .ident()
            .ok_or_else(|| self.error("expected a function name"))?;
        self.expect(b'(')?;
        let g = match name.as_str() {
            "power" => {
                let p = self.number()?;
                GFunction::power(p)
            }
            "powerlog" => {
                let a = self.number()?;
                self.expect(b',')?;
                let b = self.number()?;
                self.expect(b',')?;
                let c = self.number()?;
                GFunction::power_log(a, b, c)
            }
            "piecewise" => {
                let c1 = self.number()?;
                self.expect(b',')?;
                let a1 = self.number()?;
                self.expect(b',')?;
                let a2 = self.number()?;
                self.expect(b',')?;
                let knot = self.number()?;
                GFunction::piecewise_power(c1, a1, a2, knot)
            }
            "sum" => {
                let mut parts = Vec::new();
                loop {
                    let (w, g) = self.term()?;
                    parts.push((w.unwrap_or(1.0), g));
                    if self.peek() == Some(b',') {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                GFunction::sum(parts)
            }
            "product" => {
                let a = self.expr()?;
                self.expect(b',')?;
                let b = self.expr()?;
                Ok(GFunction::product(a, b))
            }
            "compose" => {
                let a = self.expr()?;
                self.expect(b',')?;
                let b = self.expr()?;
                Ok(GFunction::compose(a, b))
            }
            "scale" => {
                let c = self.number()?;
                self.expect(b',')?;
                let g = self.expr()?;
                GFunction::scale(c, g)
            }
            "bounds" => {
                let g = self.expr()?;
                self.expect(b',')?;
                let delta = self.number()?;
                self.expect(b',')?;
                let g0 = self.number()?;
                GFunction::declared(g, delta, g0)
            }
            other => {
                self.pos = at;
                return Err(self.error(&format!("unknown function '{other}'")));
            }
        }
        .map_err(|e| self.wrap(at, e))?;
        self.expect(b')')?;
        Ok(g)
    }

    fn wrap(&self, at: usize, e: GFuncError) -> GFuncError {
        match e {
            GFuncError::Parse { .. } => e,
            other => GFuncError::Parse {
                column: at + 1,
                message: other.to_string(),
            },
        }
    }
}
