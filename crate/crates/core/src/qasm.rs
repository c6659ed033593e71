//! Minimal OpenQASM 2.0 subset: version header, a single quantum register,
//! the supported gate set, and `measure`. Anything else is a parse error.

use crate::circuit::{Circuit, Gate, GateKind, Param};
use crate::error::{Error, Result};

/// Serialize a bound circuit as QASM text. Symbolic parameters cannot be
/// expressed in this format.
pub fn serialize(circuit: &Circuit) -> Result<String> {
    if !circuit.is_bound() {
        return Err(Error::Unsupported(
            "QASM serialization requires a bound circuit".into(),
        ));
    }
    let mut out = String::new();
    out.push_str("OPENQASM 2.0;\n");
    out.push_str("include \"qelib1.inc\";\n");
    out.push_str(&format!("qreg q[{}];\n", circuit.n_qubits));
    if circuit.has_measurement() {
        out.push_str(&format!("creg c[{}];\n", circuit.n_qubits));
    }
    for g in &circuit.gates {
        if g.kind == GateKind::MEASURE {
            out.push_str(&format!("measure q[{}] -> c[{}];\n", g.qubits[0], g.qubits[0]));
            continue;
        }
        let name = gate_name(g.kind);
        match g.angle() {
            Some(v) => out.push_str(&format!("{name}({v})")),
            None => out.push_str(name),
        }
        let args: Vec<String> = g.qubits.iter().map(|q| format!("q[{q}]")).collect();
        out.push_str(&format!(" {};\n", args.join(", ")));
    }
    Ok(out)
}

fn gate_name(kind: GateKind) -> &'static str {
    match kind {
        GateKind::RX => "rx",
        GateKind::RY => "ry",
        GateKind::RZ => "rz",
        GateKind::H => "h",
        GateKind::I => "id",
        GateKind::X => "x",
        GateKind::SX => "sx",
        GateKind::CX => "cx",
        GateKind::CRX => "crx",
        GateKind::CRY => "cry",
        GateKind::CRZ => "crz",
        GateKind::SWAP => "swap",
        GateKind::MEASURE => "measure",
    }
}

fn kind_from_name(name: &str) -> Option<GateKind> {
    Some(match name {
        "rx" => GateKind::RX,
        "ry" => GateKind::RY,
        "rz" => GateKind::RZ,
        "h" => GateKind::H,
        "id" => GateKind::I,
        "x" => GateKind::X,
        "sx" => GateKind::SX,
        "cx" => GateKind::CX,
        "crx" => GateKind::CRX,
        "cry" => GateKind::CRY,
        "crz" => GateKind::CRZ,
        "swap" => GateKind::SWAP,
        _ => return None,
    })
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Symbol(char),
    Arrow,
    Str(String),
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn err_at(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, col, msg: msg.into() }
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let mut toks = Vec::new();
    for (li, raw_line) in text.lines().enumerate() {
        let line = li + 1;
        // Strip // comments.
        let code = match raw_line.find("//") {
            Some(p) => &raw_line[..p],
            None => raw_line,
        };
        let chars: Vec<char> = code.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push(Spanned {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    line,
                    col,
                });
            } else if c.is_ascii_digit()
                || (c == '.' && i + 1 < chars.len() && chars[i + 1].is_ascii_digit())
            {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && matches!(chars[i - 1], 'e' | 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let num: f64 = text
                    .parse()
                    .map_err(|_| err_at(line, col, format!("bad number literal `{text}`")))?;
                toks.push(Spanned { tok: Tok::Number(num), line, col });
            } else if c == '"' {
                let start = i + 1;
                i += 1;
                while i < chars.len() && chars[i] != '"' {
                    i += 1;
                }
                if i == chars.len() {
                    return Err(err_at(line, col, "unterminated string"));
                }
                toks.push(Spanned {
                    tok: Tok::Str(chars[start..i].iter().collect()),
                    line,
                    col,
                });
                i += 1;
            } else if c == '-' && i + 1 < chars.len() && chars[i + 1] == '>' {
                toks.push(Spanned { tok: Tok::Arrow, line, col });
                i += 2;
            } else if "();[],+-*/".contains(c) {
                toks.push(Spanned { tok: Tok::Symbol(c), line, col });
                i += 1;
            } else {
                return Err(err_at(line, col, format!("unexpected character `{c}`")));
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        match self.peek() {
            Some(s) => (s.line, s.col),
            None => self
                .toks
                .last()
                .map(|s| (s.line, s.col + 1))
                .unwrap_or((1, 1)),
        }
    }

    fn next(&mut self) -> Result<Spanned> {
        let (l, c) = self.here();
        let s = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| err_at(l, c, "unexpected end of input"))?;
        self.pos += 1;
        Ok(s)
    }

    fn expect_symbol(&mut self, sym: char) -> Result<()> {
        let s = self.next()?;
        if s.tok == Tok::Symbol(sym) {
            Ok(())
        } else {
            Err(err_at(s.line, s.col, format!("expected `{sym}`")))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, usize, usize)> {
        let s = self.next()?;
        match s.tok {
            Tok::Ident(name) => Ok((name, s.line, s.col)),
            _ => Err(err_at(s.line, s.col, "expected identifier")),
        }
    }

    fn expect_uint(&mut self) -> Result<usize> {
        let s = self.next()?;
        match s.tok {
            Tok::Number(v) if v.fract() == 0.0 && v >= 0.0 => Ok(v as usize),
            _ => Err(err_at(s.line, s.col, "expected a non-negative integer")),
        }
    }

    /// `name[index]`
    fn indexed(&mut self) -> Result<(String, usize, usize, usize)> {
        let (name, line, col) = self.expect_ident()?;
        self.expect_symbol('[')?;
        let idx = self.expect_uint()?;
        self.expect_symbol(']')?;
        Ok((name, idx, line, col))
    }

    // Angle expressions: numbers, `pi`, + - * /, unary minus, parentheses.
    fn expr(&mut self) -> Result<f64> {
        let mut v = self.term()?;
        while let Some(s) = self.peek() {
            match s.tok {
                Tok::Symbol('+') => {
                    self.pos += 1;
                    v += self.term()?;
                }
                Tok::Symbol('-') => {
                    self.pos += 1;
                    v -= self.term()?;
                }
                _ => break,
            }
        }
        Ok(v)
    }

    fn term(&mut self) -> Result<f64> {
        let mut v = self.factor()?;
        while let Some(s) = self.peek() {
            match s.tok {
                Tok::Symbol('*') => {
                    self.pos += 1;
                    v *= self.factor()?;
                }
                Tok::Symbol('/') => {
                    self.pos += 1;
                    v /= self.factor()?;
                }
                _ => break,
            }
        }
        Ok(v)
    }

    fn factor(&mut self) -> Result<f64> {
        let s = self.next()?;
        match s.tok {
            Tok::Number(v) => Ok(v),
            Tok::Ident(ref name) if name == "pi" => Ok(std::f64::consts::PI),
            Tok::Symbol('-') => Ok(-self.factor()?),
            Tok::Symbol('(') => {
                let v = self.expr()?;
                self.expect_symbol(')')?;
                Ok(v)
            }
            _ => Err(err_at(s.line, s.col, "expected angle expression")),
        }
    }
}

/// Parse QASM-subset text into a bound circuit.
pub fn parse(text: &str) -> Result<Circuit> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };

    // OPENQASM 2.0;
    let (kw, line, col) = p.expect_ident()?;
    if kw != "OPENQASM" {
        return Err(err_at(line, col, "expected `OPENQASM` header"));
    }
    let s = p.next()?;
    match s.tok {
        Tok::Number(v) if v == 2.0 => {}
        _ => return Err(err_at(s.line, s.col, "only OPENQASM 2.0 is supported")),
    }
    p.expect_symbol(';')?;

    let mut qreg: Option<(String, usize)> = None;
    let mut creg: Option<(String, usize)> = None;
    let mut gates: Vec<Gate> = Vec::new();

    while p.peek().is_some() {
        let (name, line, col) = p.expect_ident()?;
        match name.as_str() {
            "include" => {
                let s = p.next()?;
                match s.tok {
                    Tok::Str(ref f) if f == "qelib1.inc" => {}
                    _ => return Err(err_at(s.line, s.col, "only `qelib1.inc` may be included")),
                }
                p.expect_symbol(';')?;
            }
            "qreg" => {
                if qreg.is_some() {
                    return Err(err_at(line, col, "only one quantum register is supported"));
                }
                let (rname, size, _, _) = p.indexed()?;
                p.expect_symbol(';')?;
                qreg = Some((rname, size));
            }
            "creg" => {
                if creg.is_some() {
                    return Err(err_at(line, col, "only one classical register is supported"));
                }
                let (rname, size, _, _) = p.indexed()?;
                p.expect_symbol(';')?;
                creg = Some((rname, size));
            }
            "measure" => {
                let (qn, qsize) = qreg
                    .clone()
                    .ok_or_else(|| err_at(line, col, "measure before qreg declaration"))?;
                // Either `measure q -> c;` or `measure q[i] -> c[j];`
                let (src, sl, sc) = p.expect_ident()?;
                if src != qn {
                    return Err(err_at(sl, sc, format!("unknown register `{src}`")));
                }
                let whole = !matches!(p.peek().map(|s| &s.tok), Some(Tok::Symbol('[')));
                if whole {
                    let s = p.next()?;
                    if s.tok != Tok::Arrow {
                        return Err(err_at(s.line, s.col, "expected `->`"));
                    }
                    p.expect_ident()?;
                    p.expect_symbol(';')?;
                    for q in 0..qsize {
                        gates.push(Gate::measure(q));
                    }
                } else {
                    p.expect_symbol('[')?;
                    let q = p.expect_uint()?;
                    p.expect_symbol(']')?;
                    let s = p.next()?;
                    if s.tok != Tok::Arrow {
                        return Err(err_at(s.line, s.col, "expected `->`"));
                    }
                    p.expect_ident()?;
                    p.expect_symbol('[')?;
                    p.expect_uint()?;
                    p.expect_symbol(']')?;
                    p.expect_symbol(';')?;
                    if q >= qsize {
                        return Err(err_at(line, col, format!("qubit {q} out of range")));
                    }
                    gates.push(Gate::measure(q));
                }
            }
            _ => {
                let kind = kind_from_name(&name)
                    .ok_or_else(|| err_at(line, col, format!("unknown gate `{name}`")))?;
                let (qn, qsize) = qreg
                    .clone()
                    .ok_or_else(|| err_at(line, col, "gate before qreg declaration"))?;
                let param = if matches!(p.peek().map(|s| &s.tok), Some(Tok::Symbol('('))) {
                    p.expect_symbol('(')?;
                    let v = p.expr()?;
                    p.expect_symbol(')')?;
                    Some(Param::Val { val: v })
                } else {
                    None
                };
                if kind.is_parameterized() && param.is_none() {
                    return Err(err_at(line, col, format!("gate `{name}` requires an angle")));
                }
                if !kind.is_parameterized() && param.is_some() {
                    return Err(err_at(line, col, format!("gate `{name}` takes no angle")));
                }
                let mut qubits = Vec::new();
                loop {
                    let (rname, idx, ql, qc) = p.indexed()?;
                    if rname != qn {
                        return Err(err_at(ql, qc, format!("unknown register `{rname}`")));
                    }
                    if idx >= qsize {
                        return Err(Error::validation(format!(
                            "line {ql}: qubit {idx} out of range for register of size {qsize}"
                        )));
                    }
                    qubits.push(idx);
                    match p.peek().map(|s| &s.tok) {
                        Some(Tok::Symbol(',')) => {
                            p.pos += 1;
                        }
                        _ => break,
                    }
                }
                p.expect_symbol(';')?;
                if qubits.len() != kind.arity() {
                    return Err(err_at(
                        line,
                        col,
                        format!("gate `{name}` expects {} qubit(s)", kind.arity()),
                    ));
                }
                gates.push(Gate { kind, qubits, param });
            }
        }
    }

    let (_, n_qubits) =
        qreg.ok_or_else(|| err_at(1, 1, "missing qreg declaration"))?;
    Circuit::new(n_qubits, 0, gates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_bound_circuit;

    #[test]
    fn parses_single_rotation() {
        let c = parse("OPENQASM 2.0;\nqreg q[1];\nrx(0.5) q[0];\n").unwrap();
        assert_eq!(c.n_qubits, 1);
        assert_eq!(c.gates[0].kind, GateKind::RX);
        assert_eq!(c.gates[0].angle(), Some(0.5));
    }

    #[test]
    fn parses_pi_expressions() {
        let c = parse("OPENQASM 2.0;\nqreg q[1];\nrz(-pi/4) q[0];\nry(2*pi) q[0];\n").unwrap();
        assert!((c.gates[0].angle().unwrap() + std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((c.gates[1].angle().unwrap() - std::f64::consts::TAU).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_qubit() {
        let err = parse("OPENQASM 2.0;\nqreg q[3];\ncx q[0], q[5];\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn rejects_unknown_gate_with_position() {
        let err = parse("OPENQASM 2.0;\nqreg q[1];\nfoo q[0];\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn rejects_missing_header() {
        assert!(parse("qreg q[1];\n").is_err());
    }

    #[test]
    fn whole_register_measure_expands() {
        let c = parse("OPENQASM 2.0;\nqreg q[3];\ncreg c[3];\nh q[0];\nmeasure q -> c;\n").unwrap();
        assert_eq!(c.gates.iter().filter(|g| g.kind == GateKind::MEASURE).count(), 3);
    }

    #[test]
    fn round_trips_random_circuits() {
        for seed in 0..10 {
            let c = random_bound_circuit(4, 16, 300 + seed);
            let text = serialize(&c).unwrap();
            let back = parse(&text).unwrap();
            assert_eq!(c.n_qubits, back.n_qubits);
            assert_eq!(c.gates.len(), back.gates.len());
            for (a, b) in c.gates.iter().zip(back.gates.iter()) {
                assert_eq!(a.kind, b.kind);
                assert_eq!(a.qubits, b.qubits);
                match (a.angle(), b.angle()) {
                    (Some(x), Some(y)) => assert_eq!(x, y, "angle must round-trip exactly"),
                    (None, None) => {}
                    _ => panic!("parameter mismatch"),
                }
            }
        }
    }

    #[test]
    fn round_trips_measured_circuit() {
        let c = Circuit::new(
            2,
            0,
            vec![Gate::one(GateKind::H, 0), Gate::cx(0, 1), Gate::measure(0), Gate::measure(1)],
        )
        .unwrap();
        let back = parse(&serialize(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn rejects_symbolic_serialization() {
        let c = Circuit::new(
            1,
            1,
            vec![Gate::one_p(GateKind::RX, 0, Param::Sym { sym: 0 })],
        )
        .unwrap();
        assert!(serialize(&c).is_err());
    }
}
