//! Line-oriented problem files.
//!
//! ```text
//! [declare]
//! param alpha = 1.0
//! param beta            # declared, no value
//!
//! [sde]
//! drift = alpha*x + beta
//! diffusion = 1
//!
//! [ansatz]
//! tau = 1 + exp(2*alpha*t)
//! phi = exp(alpha*t) + exp(2*alpha*t)*poly(x,1)
//! phi_s = exp(alpha*t)
//! mu1 = 1 + exp(-2*alpha*t)
//! mu2 = exp(-alpha*t)*x + x + 1
//!
//! [target.sde]
//! drift = 0
//! diffusion = 1
//!
//! [numeric]
//! window = 0.1,2,0.5,2
//! seed = 0
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use stochsym::ansatz::{Ansatz, AnsatzError, Mode};
use stochsym::determining::{Sde, VectorField};
use stochsym::expr::SymbolTable;
use stochsym::grid::Window;
use stochsym::transform::{MapAnsatz, TransformMap};
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
#[error("{source_name}:{line}: {message}")]
pub struct ProblemError {
    pub source_name: String,
    pub line: usize,
    pub message: String,
}

const SECTIONS: [&str; 5] = ["declare", "sde", "ansatz", "target.sde", "numeric"];
const ANSATZ_KEYS: [&str; 5] = ["tau", "phi", "phi_s", "mu1", "mu2"];
const NUMERIC_KEYS: [&str; 12] =
    ["window", "seed", "tol", "points", "paths", "h", "steps", "x0", "eps", "mode", "restarts", "verify_points"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Numeric {
    pub window: Option<Window>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub points: Option<usize>,
    pub paths: Option<usize>,
    pub h: Option<f64>,
    pub steps: Option<usize>,
    pub x0: Option<f64>,
    pub eps: Option<f64>,
    pub mode: Option<Mode>,
    pub restarts: Option<usize>,
    pub verify_points: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    /// Declaration order is kept for messages; values may be absent.
    pub params: Vec<(String, Option<f64>)>,
    pub sde: Sde,
    pub target: Option<Sde>,
    /// Raw `[ansatz]` entries with their line numbers.
    pub ansatz: BTreeMap<String, (usize, String)>,
    pub numeric: Numeric,
}

#[derive(Default)]
struct Block {
    line: usize,
    entries: BTreeMap<String, (usize, String)>,
}

/// `key = value` lines from a section-less file such as a generator or map file.
pub fn parse_pairs(
    text: &str,
    name: &str,
    allowed: &[&str],
) -> Result<BTreeMap<String, (usize, String)>, ProblemError> {
    let err = |line: usize, message: String| ProblemError { source_name: name.to_string(), line, message };
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let (k, v) = split_kv(line).ok_or_else(|| err(i + 1, format!("expected 'key = value', found '{line}'")))?;
        if !allowed.contains(&k) {
            return Err(err(i + 1, format!("unknown key '{k}' (expected one of {})", allowed.join(", "))));
        }
        if out.insert(k.to_string(), (i + 1, v.to_string())).is_some() {
            return Err(err(i + 1, format!("duplicate key '{k}'")));
        }
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn split_kv(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    let k = k.trim();
    if k.is_empty() || k.contains(char::is_whitespace) {
        return None;
    }
    Some((k, v.trim()))
}

impl Problem {
    pub fn load(path: &Path) -> Result<Problem, ProblemError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ProblemError {
            source_name: name.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        Problem::parse(&text, &name)
    }

    pub fn parse(text: &str, name: &str) -> Result<Problem, ProblemError> {
        let err = |line: usize, message: String| ProblemError { source_name: name.to_string(), line, message };
        let mut params: Vec<(String, Option<f64>)> = Vec::new();
        let mut blocks: BTreeMap<&str, Block> = BTreeMap::new();
        let mut current: Option<&str> = None;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            if let Some(sec) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let sec = sec.trim();
                let Some(known) = SECTIONS.iter().find(|s| **s == sec) else {
                    return Err(err(n, format!("unknown section [{sec}] (expected one of {})", SECTIONS.join(", "))));
                };
                if blocks.contains_key(known) {
                    return Err(err(n, format!("section [{sec}] appears twice")));
                }
                blocks.insert(known, Block { line: n, entries: BTreeMap::new() });
                current = Some(known);
                continue;
            }
            let Some(sec) = current else {
                return Err(err(n, "content before the first section header".into()));
            };
            if sec == "declare" {
                let rest = line
                    .strip_prefix("param")
                    .filter(|r| r.starts_with(char::is_whitespace))
                    .ok_or_else(|| err(n, format!("expected 'param NAME [= VALUE]', found '{line}'")))?;
                let (pname, value) = match rest.split_once('=') {
                    Some((p, v)) => {
                        let v = v.trim();
                        let value: f64 = v.parse().map_err(|_| err(n, format!("invalid number '{v}'")))?;
                        (p.trim(), Some(value))
                    }
                    None => (rest.trim(), None),
                };
                let valid = pname.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
                    && pname.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                if !valid {
                    return Err(err(n, format!("invalid parameter name '{pname}'")));
                }
                if ["t", "x", "s", "y", "eps", "exp", "log", "poly"].contains(&pname) {
                    return Err(err(n, format!("'{pname}' is reserved")));
                }
                if params.iter().any(|(p, _)| p == pname) {
                    return Err(err(n, format!("parameter {pname} declared twice")));
                }
                params.push((pname.to_string(), value));
                continue;
            }
            let (k, v) = split_kv(line).ok_or_else(|| err(n, format!("expected 'key = value', found '{line}'")))?;
            let allowed: &[&str] = match sec {
                "sde" | "target.sde" => &["drift", "diffusion"],
                "ansatz" => &ANSATZ_KEYS,
                _ => &NUMERIC_KEYS,
            };
            if !allowed.contains(&k) {
                return Err(err(n, format!("unknown key '{k}' in [{sec}] (expected one of {})", allowed.join(", "))));
            }
            let block = blocks.get_mut(sec).expect("section was opened");
            if block.entries.insert(k.to_string(), (n, v.to_string())).is_some() {
                return Err(err(n, format!("duplicate key '{k}' in [{sec}]")));
            }
        }

        let table = SymbolTable::new().with_params(params.iter().map(|(p, _)| p.clone()));
        let build = |sec: &str| -> Result<Option<Sde>, ProblemError> {
            let Some(b) = blocks.get(sec) else { return Ok(None) };
            let get = |key: &str| {
                b.entries.get(key).ok_or_else(|| err(b.line, format!("[{sec}] needs exactly one '{key}' line")))
            };
            let (dl, drift) = get("drift")?;
            let (gl, diffusion) = get("diffusion")?;
            let drift = table.parse(drift).map_err(|e| err(*dl, format!("drift: {e}")))?;
            let diffusion = table.parse(diffusion).map_err(|e| err(*gl, format!("diffusion: {e}")))?;
            let mut sde = Sde::new(drift, diffusion);
            for (p, v) in &params {
                sde = match v {
                    Some(v) => sde.with_param(p, *v),
                    None => sde.declare_param(p),
                };
            }
            Ok(Some(sde))
        };
        let sde = build("sde")?.ok_or_else(|| err(0, "missing [sde] section".into()))?;
        let target = build("target.sde")?;
        let ansatz = blocks.get("ansatz").map(|b| b.entries.clone()).unwrap_or_default();
        let numeric = match blocks.get("numeric") {
            Some(b) => parse_numeric(&b.entries, &err)?,
            None => Numeric::default(),
        };
        Ok(Problem { name: name.to_string(), params, sde, target, ansatz, numeric })
    }

    pub fn symbols(&self) -> SymbolTable {
        self.sde.symbols()
    }

    fn ansatz_entry(&self, key: &str) -> (usize, &str) {
        self.ansatz.get(key).map(|(l, v)| (*l, v.as_str())).unwrap_or((0, ""))
    }

    fn error(&self, line: usize, message: String) -> ProblemError {
        ProblemError { source_name: self.name.clone(), line, message }
    }

    /// Symmetry dictionaries; missing entries are empty.
    pub fn symmetry_ansatz(&self) -> Result<Ansatz, ProblemError> {
        let table = self.symbols();
        let mut parts = Vec::with_capacity(3);
        for key in ["tau", "phi", "phi_s"] {
            let (line, text) = self.ansatz_entry(key);
            let d = stochsym::ansatz::parse_dictionary(text, &table).map_err(|e| match e {
                AnsatzError::Dictionary { message, .. } => self.error(line, format!("{key}: {message}")),
                other => self.error(line, format!("{key}: {other}")),
            })?;
            parts.push(d);
        }
        let phi_s = parts.pop().unwrap_or_default();
        let phi = parts.pop().unwrap_or_default();
        let tau = parts.pop().unwrap_or_default();
        Ok(Ansatz::new(tau, phi, phi_s))
    }

    /// Map dictionaries from `mu1` and `mu2`.
    pub fn map_ansatz(&self) -> Result<MapAnsatz, ProblemError> {
        for key in ["mu1", "mu2"] {
            if !self.ansatz.contains_key(key) {
                return Err(self.error(0, format!("[ansatz] needs a '{key}' dictionary for map search")));
            }
        }
        let (l1, mu1) = self.ansatz_entry("mu1");
        let (l2, mu2) = self.ansatz_entry("mu2");
        MapAnsatz::parse(mu1, mu2, &self.symbols()).map_err(|e| self.error(l1.min(l2), e.to_string()))
    }

    pub fn target(&self) -> Result<&Sde, ProblemError> {
        self.target.as_ref().ok_or_else(|| self.error(0, "missing [target.sde] section".into()))
    }
}

fn parse_numeric(
    entries: &BTreeMap<String, (usize, String)>,
    err: &dyn Fn(usize, String) -> ProblemError,
) -> Result<Numeric, ProblemError> {
    fn num<T: std::str::FromStr>(
        e: &BTreeMap<String, (usize, String)>,
        key: &str,
        err: &dyn Fn(usize, String) -> ProblemError,
    ) -> Result<Option<T>, ProblemError> {
        match e.get(key) {
            None => Ok(None),
            Some((l, v)) => v.parse().map(Some).map_err(|_| err(*l, format!("invalid value '{v}' for {key}"))),
        }
    }
    let window = match entries.get("window") {
        None => None,
        Some((l, v)) => {
            Some(Window::parse(v).ok_or_else(|| err(*l, format!("invalid window '{v}' (expected t0,t1,x0,x1)")))?)
        }
    };
    let mode = match entries.get("mode") {
        None => None,
        Some((l, v)) => Some(v.parse::<Mode>().map_err(|m| err(*l, m))?),
    };
    Ok(Numeric {
        window,
        seed: num(entries, "seed", err)?,
        tol: num(entries, "tol", err)?,
        points: num(entries, "points", err)?,
        paths: num(entries, "paths", err)?,
        h: num(entries, "h", err)?,
        steps: num(entries, "steps", err)?,
        x0: num(entries, "x0", err)?,
        eps: num(entries, "eps", err)?,
        mode,
        restarts: num(entries, "restarts", err)?,
        verify_points: num(entries, "verify_points", err)?,
    })
}

/// Read a candidate generator: `tau`, `phi`, `phi_s` (missing entries are 0).
pub fn load_generator(path: &Path, table: &SymbolTable) -> Result<VectorField, ProblemError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ProblemError {
        source_name: name.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    let kv = parse_pairs(&text, &name, &["tau", "phi", "phi_s"])?;
    let get = |k: &str| -> Result<stochsym::expr::Expr, ProblemError> {
        match kv.get(k) {
            None => Ok(stochsym::expr::Expr::zero()),
            Some((l, v)) => table.parse(v).map_err(|e| ProblemError {
                source_name: name.clone(),
                line: *l,
                message: format!("{k}: {e}"),
            }),
        }
    };
    Ok(VectorField::new(get("tau")?, get("phi")?, get("phi_s")?))
}

/// Read a map file with `mu1` and `mu2`.
pub fn load_map(path: &Path, table: &SymbolTable) -> Result<TransformMap, ProblemError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ProblemError {
        source_name: name.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    let kv = parse_pairs(&text, &name, &["mu1", "mu2"])?;
    let mut out = Vec::with_capacity(2);
    for k in ["mu1", "mu2"] {
        let (l, v) = kv.get(k).ok_or_else(|| ProblemError {
            source_name: name.clone(),
            line: 0,
            message: format!("missing '{k}'"),
        })?;
        out.push(table.parse(v).map_err(|e| ProblemError {
            source_name: name.clone(),
            line: *l,
            message: format!("{k}: {e}"),
        })?);
    }
    let mu2 = out.pop().expect("two entries");
    let mu1 = out.pop().expect("two entries");
    Ok(TransformMap::new(mu1, mu2))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LANGEVIN: &str = "\
[declare]
param a = 1.0   # rate
param b = 1

[sde]
drift = a*x
diffusion = b

[ansatz]
tau = poly(t,1)
phi = poly(x,1)

[numeric]
seed = 3
window = 0,1,-1,1
mode = stochastic
";

    #[test]
    fn parses_sections() {
        let p = Problem::parse(LANGEVIN, "l.prob").unwrap();
        assert_eq!(p.params, vec![("a".to_string(), Some(1.0)), ("b".to_string(), Some(1.0))]);
        assert_eq!(p.sde.drift.to_string(), "a*x");
        assert!(p.target.is_none());
        assert_eq!(p.numeric.seed, Some(3));
        assert_eq!(p.numeric.window, Some(Window::new(0.0, 1.0, -1.0, 1.0)));
        assert_eq!(p.numeric.mode, Some(Mode::Stochastic));
        let a = p.symmetry_ansatz().unwrap();
        assert_eq!((a.tau.len(), a.phi.len(), a.phi_s.len()), (2, 2, 0));
        assert!(p.map_ansatz().is_err());
    }

    #[test]
    fn unset_parameter_is_kept_unbound() {
        let p = Problem::parse(&LANGEVIN.replace("param a = 1.0", "param a"), "l.prob").unwrap();
        assert_eq!(p.sde.unbound_params(), vec!["a".to_string()]);
    }

    #[test]
    fn reports_line_numbers() {
        let cases = [
            ("[sde]\ndrift = q*x\ndiffusion = 1\n", 2),
            ("[sde]\ndrift = x\n", 1),
            ("[sde]\ndrift = x\ndrift = 1\ndiffusion = 1\n", 3),
            ("[declare]\nparam a = one\n", 2),
            ("[bogus]\n", 1),
            ("drift = x\n", 1),
            ("[sde]\ndrift = x\ndiffusion = 1\n[numeric]\nwindow = 1,0,0,1\n", 5),
            ("[sde]\ndrift = x\ndiffusion = 1\n[numeric]\nmode = quantum\n", 5),
            ("[sde]\ndrift = x\ndiffusion = 1\n[sde]\n", 4),
            ("[declare]\nparam t = 1\n", 2),
        ];
        for (text, line) in cases {
            let e = Problem::parse(text, "p").unwrap_err();
            assert_eq!(e.line, line, "{text:?}: {e}");
        }
    }

    #[test]
    fn pairs_file() {
        let kv = parse_pairs("# map\nmu1 = t\nmu2 = x\n", "m", &["mu1", "mu2"]).unwrap();
        assert_eq!(kv["mu2"], (3, "x".to_string()));
        assert!(parse_pairs("mu3 = t\n", "m", &["mu1", "mu2"]).is_err());
    }
}
