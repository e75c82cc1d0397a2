//! Text front end: polynomial parsing, the `row` and JSON output formats, and
//! the command-line driver used by the `polyfact` binary.
//!
//! Grammar (whitespace ignored, `*` optional between juxtaposed factors):
//!
//! ```text
//! expr    := ('+'|'-')? term (('+'|'-') term)*
//! term    := power ('*'? power)*
//! power   := primary ('^' integer)?
//! primary := number | identifier | '(' expr ')'
//! ```
//!
//! Identifiers are variables, except `I`, which denotes the imaginary unit.
//! Variables are ordered by first appearance.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Parser as ClapParser, ValueEnum};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::pipeline::{exhaustive_factor, forward_report, numerical_factor, Config};
use crate::polycore::{Factorization, MultiPoly};
use crate::refine::NumFactResult;
use crate::structure::FactorStructure;

/// Significant digits in `row` output.
pub const ROW_DIGITS: usize = 12;
/// Significant digits for polynomials inside JSON output.
pub const JSON_DIGITS: usize = 15;

/// Parse failure with a character offset into the input.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("syntax error at position {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn tokenize(s: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = simple {
            out.push((t, start));
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // scientific suffix: e or E followed by an optionally signed integer
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| ParseError {
                pos: start,
                msg: format!("bad number '{text}'"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), start));
        } else {
            return Err(ParseError {
                pos: start,
                msg: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    vars: Vec<String>,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: &str) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.offset(),
            msg: msg.to_string(),
        })
    }

    fn expr(&mut self) -> Result<MultiPoly, ParseError> {
        let mut negate = false;
        match self.peek() {
            Some(Tok::Plus) => self.pos += 1,
            Some(Tok::Minus) => {
                negate = true;
                self.pos += 1;
            }
            _ => {}
        }
        let mut acc = self.term()?;
        if negate {
            acc = -&acc;
        }
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    acc = &acc + &self.term()?;
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<MultiPoly, ParseError> {
        let mut acc = self.power()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    acc = &acc * &self.power()?;
                }
                Some(Tok::Num(_)) | Some(Tok::Ident(_)) | Some(Tok::LParen) => {
                    acc = &acc * &self.power()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn power(&mut self) -> Result<MultiPoly, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let k = self.exponent()?;
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<u32, ParseError> {
        match self.peek() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && *v >= 0.0 && *v <= u32::MAX as f64 => {
                let k = *v as u32;
                self.pos += 1;
                Ok(k)
            }
            _ => self.err("expected a nonnegative integer exponent"),
        }
    }

    fn primary(&mut self) -> Result<MultiPoly, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(MultiPoly::constant(&self.vars, C64::new(v, 0.0)))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if name == "I" {
                    return Ok(MultiPoly::constant(&self.vars, C64::new(0.0, 1.0)));
                }
                let i = self.vars.iter().position(|v| *v == name).unwrap();
                Ok(MultiPoly::var(&self.vars, i))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(_) => self.err("expected a number, variable or '('"),
            None => self.err("unexpected end of input"),
        }
    }
}

/// Parses a polynomial. Input with no variables gets the single variable `x`.
pub fn parse_poly(s: &str) -> Result<MultiPoly, ParseError> {
    parse_poly_in(s, &[])
}

/// Parses a polynomial whose variables start with `vars`, in that order;
/// variables not listed are appended by first appearance.
pub fn parse_poly_in(s: &str, vars: &[String]) -> Result<MultiPoly, ParseError> {
    let toks = tokenize(s)?;
    let mut p = parser_for(s, &toks, vars)?;
    let poly = p.expr()?;
    if p.pos != toks.len() {
        return p.err("unexpected trailing input");
    }
    Ok(poly)
}

/// Parses a product such as `2 * (x - 1)^2 * (x + y)`. Constant groups go
/// into the scale, every other group becomes one factor.
pub fn parse_factorization_in(s: &str, vars: &[String]) -> Result<Factorization, ParseError> {
    let toks = tokenize(s)?;
    let mut p = parser_for(s, &toks, vars)?;
    let mut alpha = C64::new(1.0, 0.0);
    let mut factors = Vec::new();
    if p.peek() == Some(&Tok::Minus) {
        p.pos += 1;
        alpha = -alpha;
    }
    while p.pos < toks.len() {
        if p.peek() == Some(&Tok::Star) {
            p.pos += 1;
        }
        let base = p.primary()?;
        let mut k = 1;
        if p.peek() == Some(&Tok::Caret) {
            p.pos += 1;
            k = p.exponent()?;
        }
        if base.is_constant() {
            let c = base.coeff(&vec![0; base.nvars()]);
            alpha *= c.powu(k);
        } else {
            factors.push((base, k));
        }
    }
    Ok(Factorization::new(alpha, factors))
}

fn parser_for<'a>(s: &str, toks: &'a [(Tok, usize)], base: &[String]) -> Result<Parser<'a>, ParseError> {
    if toks.is_empty() {
        return Err(ParseError {
            pos: 0,
            msg: "empty input".into(),
        });
    }
    let mut vars: Vec<String> = base.to_vec();
    for (t, _) in toks {
        if let Tok::Ident(name) = t {
            if name != "I" && !vars.contains(name) {
                vars.push(name.clone());
            }
        }
    }
    if vars.is_empty() {
        vars.push("x".into());
    }
    Ok(Parser {
        toks,
        pos: 0,
        vars,
        end: s.chars().count(),
    })
}

/// Real number with `digits` significant digits, trailing zeros trimmed.
/// With `digits == 0` the shortest text that reads back to the same double.
pub fn format_real(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    if digits == 0 {
        let a = v.abs();
        return if (1e-5..1e16).contains(&a) {
            format!("{v}")
        } else {
            format!("{v:e}")
        };
    }
    let sci = format!("{:.*e}", digits.saturating_sub(1), v);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -5 || exp >= digits as i32 {
        let mant = trim_zeros(mant);
        return format!("{mant}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v))
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

// Coefficient text plus whether it is a negative real (so it can be joined with " - ").
fn format_coeff(c: C64, digits: usize, floor: f64) -> (bool, String) {
    let re = if c.re.abs() > floor { c.re } else { 0.0 };
    let im = if c.im.abs() > floor { c.im } else { 0.0 };
    if im == 0.0 {
        (re < 0.0, format_real(re.abs(), digits))
    } else if re == 0.0 {
        (im < 0.0, format!("{}*I", format_real(im.abs(), digits)))
    } else {
        let sign = if im < 0.0 { "-" } else { "+" };
        (
            false,
            format!(
                "({}{sign}{}*I)",
                format_real(re, digits),
                format_real(im.abs(), digits)
            ),
        )
    }
}

fn is_unit_text(s: &str) -> bool {
    s == "1"
}

/// Polynomial text in descending lex order; real and imaginary parts below
/// `10^-digits` times the largest coefficient are not shown. `digits == 0`
/// prints every coefficient exactly.
pub fn format_poly(p: &MultiPoly, digits: usize) -> String {
    if p.is_zero() {
        return "0".into();
    }
    let big = p.terms().map(|(_, c)| c.norm()).fold(0.0, f64::max);
    let floor = if digits == 0 {
        0.0
    } else {
        big * 10f64.powi(-(digits as i32))
    };
    let mut out = String::new();
    for (e, c) in p.terms() {
        let (neg, text) = format_coeff(*c, digits, floor);
        if text == "0" {
            continue;
        }
        let mut mono = String::new();
        for (v, k) in p.vars().iter().zip(e) {
            match k {
                0 => {}
                1 => {
                    if !mono.is_empty() {
                        mono.push('*');
                    }
                    mono.push_str(v);
                }
                _ => {
                    if !mono.is_empty() {
                        mono.push('*');
                    }
                    let _ = write!(mono, "{v}^{k}");
                }
            }
        }
        let body = if mono.is_empty() {
            text
        } else if is_unit_text(&text) {
            mono
        } else {
            format!("{text}*{mono}")
        };
        if out.is_empty() {
            if neg {
                out.push('-');
            }
            out.push_str(&body);
        } else {
            out.push_str(if neg { " - " } else { " + " });
            out.push_str(&body);
        }
    }
    if out.is_empty() {
        "0".into()
    } else {
        out
    }
}

/// `(alpha) * (f1)^k1 * (f2) ...`, factors in the order given.
pub fn format_factorization(f: &Factorization, digits: usize) -> String {
    let mut parts = vec![format!("({})", format_scalar(f.alpha, digits))];
    for (p, k) in &f.factors {
        let mut s = format!("({})", format_poly(p, digits));
        if *k != 1 {
            let _ = write!(s, "^{k}");
        }
        parts.push(s);
    }
    parts.join(" * ")
}

fn format_scalar(c: C64, digits: usize) -> String {
    let floor = if digits == 0 {
        0.0
    } else {
        c.norm() * 10f64.powi(-(digits as i32))
    };
    let (neg, text) = format_coeff(c, digits, floor);
    if neg {
        format!("-{text}")
    } else {
        text
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Row,
    Json,
}

/// Numerical factorization of a polynomial with inexact coefficients.
#[derive(Debug, ClapParser)]
#[command(name = "polyfact", version)]
pub struct Args {
    /// Polynomial such as '(x - 1)^2*(x*y + 2)'; '-' reads standard input.
    #[arg(allow_hyphen_values = true)]
    pub poly: Option<String>,
    /// Read the polynomial from a file.
    #[arg(long = "in", value_name = "FILE", conflicts_with = "poly")]
    pub input: Option<PathBuf>,
    /// Backward tolerance on ||f - alpha * prod f_i^k_i||.
    #[arg(long)]
    pub tol: f64,
    #[arg(long, value_enum, default_value = "row")]
    pub format: OutputFormat,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Factorization structure to fit, e.g. '(1,1)(2,0)^2'.
    #[arg(long)]
    pub structure: Option<String>,
    /// Refine every structure of deg f and select among all of them.
    #[arg(long)]
    pub exhaustive: bool,
    /// Divide f by its norm first, making the tolerance relative.
    #[arg(long)]
    pub normalize: bool,
    /// Known factorization, e.g. '(x-1)^2*(x+3)', to report the forward error against.
    #[arg(long)]
    pub reference: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct JsonComplex {
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct JsonFactor {
    pub poly: String,
    pub multiplicity: u32,
}

/// The JSON output document.
#[derive(Clone, Debug, Serialize)]
pub struct JsonReport {
    pub factors: Vec<JsonFactor>,
    pub alpha: JsonComplex,
    pub backward_error: f64,
    pub sin_backward: f64,
    pub condition_bound: f64,
    pub structure: String,
    pub codim: i64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward_error: Option<f64>,
}

impl JsonReport {
    pub fn new(r: &NumFactResult, seed: u64, forward_error: Option<f64>) -> Self {
        JsonReport {
            factors: r
                .factorization
                .factors
                .iter()
                .map(|(p, k)| JsonFactor {
                    poly: format_poly(p, JSON_DIGITS),
                    multiplicity: *k,
                })
                .collect(),
            alpha: JsonComplex {
                re: r.factorization.alpha.re,
                im: r.factorization.alpha.im,
            },
            backward_error: r.backward_error,
            sin_backward: r.sin_backward,
            condition_bound: finite_or_max(r.condition_number),
            structure: r.structure.to_string(),
            codim: r.structure.codim(),
            iterations: r.iterations,
            converged: r.converged,
            seed,
            forward_error,
        }
    }
}

// JSON has no infinity
fn finite_or_max(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::MAX
    }
}

/// Row output: the factorization line, then the forward error if one was requested.
pub fn format_row(r: &NumFactResult, forward_error: Option<f64>) -> String {
    let mut out = format_factorization(&r.factorization, ROW_DIGITS);
    out.push('\n');
    if let Some(e) = forward_error {
        let _ = writeln!(out, "forward error: {}", format_real(e, 3));
    }
    out
}

enum Failure {
    Input(String),
    Factor(String),
}

/// Runs the command line; returns the exit code (0 success, 1 input error,
/// 2 factorization failure).
pub fn run<I, T>(argv: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match execute(&args, stdin) {
        Ok(text) => {
            let _ = write!(stdout, "{text}");
            0
        }
        Err(Failure::Input(msg)) => {
            let _ = writeln!(stderr, "polyfact: {msg}");
            1
        }
        Err(Failure::Factor(msg)) => {
            let _ = writeln!(stderr, "polyfact: factorization failed: {msg}");
            2
        }
    }
}

fn execute(args: &Args, stdin: &mut dyn Read) -> Result<String, Failure> {
    let text = match (&args.poly, &args.input) {
        (Some(p), _) if p == "-" => {
            let mut buf = String::new();
            stdin
                .read_to_string(&mut buf)
                .map_err(|e| Failure::Input(format!("cannot read standard input: {e}")))?;
            buf
        }
        (Some(p), _) => p.clone(),
        (None, Some(path)) => std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?,
        (None, None) => return Err(Failure::Input("no polynomial given".into())),
    };
    let mut f = parse_poly(text.trim()).map_err(|e| Failure::Input(e.to_string()))?;
    if f.is_zero() {
        return Err(Failure::Input("the polynomial is zero".into()));
    }
    if args.normalize {
        f = f.normalized();
    }
    let mut cfg = Config::new(args.tol).with_seed(args.seed);
    if let Some(s) = &args.structure {
        let hint: FactorStructure = s.parse().map_err(|e: crate::Error| Failure::Input(e.to_string()))?;
        cfg = cfg.with_hint(hint);
    }
    let reference = match &args.reference {
        Some(s) => Some(
            parse_factorization_in(s, f.vars())
                .map_err(|e| Failure::Input(format!("reference: {e}")))?,
        ),
        None => None,
    };
    if let Some(r) = &reference {
        if r.factors.iter().any(|(p, _)| p.nvars() != f.nvars()) {
            return Err(Failure::Input("reference uses variables not in the polynomial".into()));
        }
    }
    let result = if args.exhaustive {
        exhaustive_factor(&f, &cfg)
    } else {
        numerical_factor(&f, &cfg)
    }
    .map_err(|e| Failure::Factor(e.to_string()))?;
    let forward = reference.map(|r| forward_report(&result.factorization, &r));
    Ok(match args.format {
        OutputFormat::Row => format_row(&result, forward),
        OutputFormat::Json => {
            let report = JsonReport::new(&result, args.seed, forward);
            let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
            s.push('\n');
            s
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn parses_sample_fragment() {
        let p = parse_poly("-4 - 12*x*y + 8*z^3").unwrap();
        assert_eq!(p.vars(), &["x", "y", "z"]);
        assert_eq!(p.nterms(), 3);
        assert_eq!(p.coeff(&[0, 0, 0]), c(-4.0));
        assert_eq!(p.coeff(&[1, 1, 0]), c(-12.0));
        assert_eq!(p.coeff(&[0, 0, 3]), c(8.0));
    }

    #[test]
    fn parses_simple_forms() {
        let x = parse_poly("x").unwrap();
        assert_eq!(x, MultiPoly::var(&["x".to_string()], 0));
        assert!(parse_poly("2x^2 - 2*x^2").unwrap().is_zero());
        let p = parse_poly("1.5e-3 x y^2 + 2E2").unwrap();
        assert_eq!(p.coeff(&[1, 2]), c(1.5e-3));
        assert_eq!(p.coeff(&[0, 0]), c(200.0));
        let q = parse_poly("(x - 1)^2 * (x + 2)").unwrap();
        assert_eq!(q.coeff(&[3]), c(1.0));
        assert_eq!(q.coeff(&[1]), c(-3.0));
        assert_eq!(q.coeff(&[0]), c(2.0));
        let z = parse_poly("(1+2*I)*x").unwrap();
        assert_eq!(z.coeff(&[1]), C64::new(1.0, 2.0));
    }

    #[test]
    fn parse_errors_have_positions() {
        let e = parse_poly("(").unwrap_err();
        assert_eq!(e.pos, 1);
        assert!(parse_poly("").is_err());
        assert!(parse_poly("x + $").unwrap_err().pos == 4);
        assert!(parse_poly("x^y").is_err());
        assert!(parse_poly("x)").is_err());
    }

    #[test]
    fn formats_numbers() {
        assert_eq!(format_real(4.444444444444444, 12), "4.44444444444");
        assert_eq!(format_real(-12.0, 12), "-12");
        assert_eq!(format_real(0.25, 15), "0.25");
        assert_eq!(format_real(1.5e-9, 12), "1.5e-9");
        assert_eq!(format_real(0.0, 12), "0");
    }

    #[test]
    fn formats_rows() {
        let xm1 = MultiPoly::from_real_terms(&["x"], &[(&[1], 1.0), (&[0], -1.0)]);
        let f = Factorization::new(c(1.0), vec![(xm1, 2)]);
        assert_eq!(format_factorization(&f, 12), "(1) * (x - 1)^2");
        let k = Factorization::new(c(5.0), vec![]);
        assert_eq!(format_factorization(&k, 12), "(5)");
        let p = MultiPoly::from_real_terms(
            &["x", "y"],
            &[(&[3, 1], -0.25), (&[0, 0], 1.0), (&[1, 0], -1.0)],
        );
        assert_eq!(format_poly(&p, 15), "-0.25*x^3*y - x + 1");
    }

    #[test]
    fn format_then_parse_round_trips() {
        let p = MultiPoly::from_terms(
            &["x".to_string(), "y".to_string()],
            vec![
                (vec![2, 1], C64::new(0.123456789012345, 0.0)),
                (vec![0, 1], C64::new(-3.0, 1.25)),
                (vec![0, 0], C64::new(0.0, -2.0)),
            ],
        );
        let q = parse_poly(&format_poly(&p, 17)).unwrap();
        assert!((&p - &q).norm() < 1e-15);
    }
}
