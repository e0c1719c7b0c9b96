use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use super::formula::{parse_prop, PropFormula};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("line {line}: {message}")]
    Structure { line: usize, message: String },
    #[error("unknown atom `{atom}` in {section}")]
    UnknownAtom { atom: String, section: &'static str },
    #[error("environment variable `{0}` clashes with a system proposition")]
    VariableClash(String),
}

/// A GR(1) specification. Safety lines carry an implicit "always", justice
/// lines an implicit "always eventually".
#[derive(Debug, Clone, PartialEq)]
pub struct Gr1Spec {
    pub env_vars: Vec<String>,
    pub env_init: PropFormula,
    pub env_safety: Vec<PropFormula>,
    pub env_justice: Vec<PropFormula>,
    pub sys_init: PropFormula,
    pub sys_safety: Vec<PropFormula>,
    pub sys_justice: Vec<PropFormula>,
}

const SECTIONS: [&str; 7] = [
    "ENV_VARS",
    "ENV_INIT",
    "ENV_SAFETY",
    "ENV_JUSTICE",
    "SYS_INIT",
    "SYS_SAFETY",
    "SYS_JUSTICE",
];

fn conjunction(fs: Vec<PropFormula>) -> PropFormula {
    fs.into_iter()
        .reduce(PropFormula::and)
        .unwrap_or(PropFormula::True)
}

fn or_true(fs: Vec<PropFormula>) -> Vec<PropFormula> {
    if fs.is_empty() {
        vec![PropFormula::True]
    } else {
        fs
    }
}

/// Parses the sectioned text format:
///
/// ```text
/// [ENV_VARS]
/// battery
/// [ENV_SAFETY]
/// !battery & home -> X(battery)
/// ...
/// ```
///
/// `#` starts a comment. All seven sections must be present; empty justice
/// sections become `[true]`.
pub fn parse_gr1(document: &str) -> Result<Gr1Spec, SpecError> {
    let mut sections: Vec<Option<Vec<(usize, String)>>> = vec![None; SECTIONS.len()];
    let mut current: Option<usize> = None;
    for (idx, raw) in document.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            let Some(k) = SECTIONS.iter().position(|s| *s == name) else {
                return Err(SpecError::Structure {
                    line: line_no,
                    message: format!("unknown section [{name}]"),
                });
            };
            if sections[k].is_some() {
                return Err(SpecError::Structure {
                    line: line_no,
                    message: format!("section [{name}] given twice"),
                });
            }
            sections[k] = Some(Vec::new());
            current = Some(k);
            continue;
        }
        let Some(k) = current else {
            return Err(SpecError::Structure {
                line: line_no,
                message: "content before the first section header".into(),
            });
        };
        let column = raw.find(line).unwrap_or(0);
        sections[k].as_mut().unwrap().push((line_no, " ".repeat(column) + line));
    }

    let mut lines_of = |k: usize| sections[k].take().ok_or(SpecError::MissingSection(SECTIONS[k]));
    let env_var_lines = lines_of(0)?;
    let parsed: Vec<Vec<(usize, PropFormula)>> = (1..SECTIONS.len())
        .map(|k| {
            lines_of(k)?
                .into_iter()
                .map(|(line, text)| {
                    parse_prop(&text).map(|f| (line, f)).map_err(|e| SpecError::Syntax {
                        line,
                        column: e.offset + 1,
                        message: e.message,
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;

    let mut env_vars = Vec::new();
    for (line, text) in env_var_lines {
        for name in text.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()) {
            let valid = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && !matches!(name, "X" | "true" | "false" | "TRUE" | "FALSE");
            if !valid {
                return Err(SpecError::Structure {
                    line,
                    message: format!("`{name}` is not a valid variable name"),
                });
            }
            if env_vars.iter().any(|v| v == name) {
                return Err(SpecError::Structure {
                    line,
                    message: format!("variable `{name}` declared twice"),
                });
            }
            env_vars.push(name.to_string());
        }
    }

    let [env_init, env_safety, env_justice, sys_init, sys_safety, sys_justice]: [Vec<(usize, PropFormula)>; 6] =
        parsed.try_into().expect("six formula sections");

    for (section, lines) in [
        ("ENV_INIT", &env_init),
        ("ENV_JUSTICE", &env_justice),
        ("SYS_INIT", &sys_init),
        ("SYS_SAFETY", &sys_safety),
        ("SYS_JUSTICE", &sys_justice),
    ] {
        if let Some((line, _)) = lines.iter().find(|(_, f)| f.has_next()) {
            return Err(SpecError::Structure {
                line: *line,
                message: format!("X(..) is not allowed in [{section}]"),
            });
        }
    }
    for (line, f) in &env_safety {
        if let Some(a) = f.next_atoms().iter().find(|a| !env_vars.contains(a)) {
            return Err(SpecError::Structure {
                line: *line,
                message: format!("[ENV_SAFETY] may only constrain next-step environment variables, found X({a})"),
            });
        }
    }

    let strip = |v: Vec<(usize, PropFormula)>| v.into_iter().map(|(_, f)| f).collect::<Vec<_>>();
    Ok(Gr1Spec {
        env_vars,
        env_init: conjunction(strip(env_init)),
        env_safety: strip(env_safety),
        env_justice: or_true(strip(env_justice)),
        sys_init: conjunction(strip(sys_init)),
        sys_safety: strip(sys_safety),
        sys_justice: or_true(strip(sys_justice)),
    })
}

impl Gr1Spec {
    /// Checks every atom against the system propositions of the abstraction
    /// plus the declared environment variables.
    pub fn check_atoms(&self, sys_atoms: &BTreeSet<String>) -> Result<(), SpecError> {
        if let Some(v) = self.env_vars.iter().find(|v| sys_atoms.contains(*v)) {
            return Err(SpecError::VariableClash(v.clone()));
        }
        let known = |a: &String| sys_atoms.contains(a) || self.env_vars.contains(a);
        let groups: [(&'static str, Vec<&PropFormula>); 6] = [
            ("ENV_INIT", vec![&self.env_init]),
            ("ENV_SAFETY", self.env_safety.iter().collect()),
            ("ENV_JUSTICE", self.env_justice.iter().collect()),
            ("SYS_INIT", vec![&self.sys_init]),
            ("SYS_SAFETY", self.sys_safety.iter().collect()),
            ("SYS_JUSTICE", self.sys_justice.iter().collect()),
        ];
        for (section, fs) in groups {
            for f in fs {
                if let Some(atom) = f.current_atoms().into_iter().find(|a| !known(a)) {
                    return Err(SpecError::UnknownAtom { atom, section });
                }
            }
        }
        Ok(())
    }

    /// Re-emits the spec in the sectioned text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = |name: &str, fs: &[PropFormula]| {
            let _ = writeln!(out, "[{name}]");
            for f in fs {
                let _ = writeln!(out, "{f}");
            }
        };
        section("ENV_VARS", &self.env_vars.iter().map(|v| PropFormula::Atom(v.clone())).collect::<Vec<_>>());
        section("ENV_INIT", std::slice::from_ref(&self.env_init));
        section("ENV_SAFETY", &self.env_safety);
        section("ENV_JUSTICE", &self.env_justice);
        section("SYS_INIT", std::slice::from_ref(&self.sys_init));
        section("SYS_SAFETY", &self.sys_safety);
        section("SYS_JUSTICE", &self.sys_justice);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PATROL: &str = "\
# assumptions on the battery signal
[ENV_VARS]
battery
[ENV_INIT]
battery
[ENV_SAFETY]
!battery & home -> X(battery)
!battery & !home -> !X(battery)
[ENV_JUSTICE]
[SYS_INIT]
home & vertical
[SYS_SAFETY]
!obstacle
[SYS_JUSTICE]
goal & triangle
battery
";

    #[test]
    fn parses_patrol_spec() {
        let s = parse_gr1(PATROL).unwrap();
        assert_eq!(s.env_vars, vec!["battery"]);
        assert_eq!(s.env_safety.len(), 2);
        assert_eq!(s.env_justice, vec![PropFormula::True]);
        assert_eq!(s.sys_safety, vec![parse_prop("!obstacle").unwrap()]);
        assert_eq!(
            s.sys_justice,
            vec![parse_prop("goal & triangle").unwrap(), PropFormula::atom("battery")]
        );
        assert_eq!(parse_gr1(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn next_in_system_safety_is_rejected() {
        let doc = PATROL.replace("!obstacle", "X(goal)");
        let err = parse_gr1(&doc).unwrap_err();
        assert!(matches!(err, SpecError::Structure { line: 13, .. }), "{err}");
    }

    #[test]
    fn env_safety_may_not_read_next_system_atoms() {
        let doc = PATROL.replace("-> X(battery)", "-> X(home)");
        assert!(matches!(parse_gr1(&doc), Err(SpecError::Structure { line: 7, .. })));
    }

    #[test]
    fn missing_section_and_syntax_errors() {
        let doc = PATROL.replace("[ENV_JUSTICE]\n", "");
        assert_eq!(parse_gr1(&doc), Err(SpecError::MissingSection("ENV_JUSTICE")));
        let doc = PATROL.replace("goal & triangle", "goal & & triangle");
        assert_eq!(
            parse_gr1(&doc),
            Err(SpecError::Syntax {
                line: 15,
                column: 8,
                message: "expected an atom, `!`, `(` or X(..)".into()
            })
        );
        assert!(parse_gr1("battery\n[ENV_VARS]").is_err());
    }

    #[test]
    fn atoms_checked_against_universe() {
        let s = parse_gr1(PATROL).unwrap();
        let mut universe: BTreeSet<String> =
            ["home", "goal", "obstacle", "freespace", "vertical", "horizon", "triangle"]
                .into_iter()
                .map(String::from)
                .collect();
        s.check_atoms(&universe).unwrap();
        universe.remove("triangle");
        assert_eq!(
            s.check_atoms(&universe),
            Err(SpecError::UnknownAtom {
                atom: "triangle".into(),
                section: "SYS_JUSTICE"
            })
        );
        universe.insert("battery".into());
        assert!(matches!(s.check_atoms(&universe), Err(SpecError::VariableClash(_))));
    }
}
