//! Case-file parsing: flat sectioned key-value text with `[geometry]`,
//! `[physics]`, `[solver]`, `[mesh]` and `[output]` headers, `key = value`
//! lines and `#` comments.

use crate::assembly::DimensionlessGroups;
use crate::geometry::{CavityGeometry, Domain};
use crate::mesh::Sizing;
use crate::solver::SolverOptions;
use std::collections::HashMap;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config missing {0}")]
    MissingKey(&'static str),
    #[error("config invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub vtk: bool,
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            vtk: true,
            csv: true,
        }
    }
}

/// One fully specified solver case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseConfig {
    pub geometry: CavityGeometry,
    pub physics: DimensionlessGroups,
    pub solver: SolverOptions,
    pub mesh: Sizing,
    pub output: OutputConfig,
}

impl CaseConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let sections = parse_sections(text)?;
        let geometry = parse_geometry(sections.get("geometry"))?;
        let physics = parse_physics(sections.get("physics"))?;
        let solver = parse_solver(sections.get("solver"))?;
        let mesh = parse_mesh(sections.get("mesh"))?;
        let output = parse_output(sections.get("output"))?;
        geometry
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        physics
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        solver
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Self {
            geometry,
            physics,
            solver,
            mesh,
            output,
        })
    }
}

/// Production default sizing: lands near the top of the grid-study range on
/// the default geometry.
pub fn default_case_sizing() -> Sizing {
    Sizing::graded(0.05, 0.022)
}

type Section = HashMap<String, (usize, String)>;

fn parse_sections(text: &str) -> Result<HashMap<String, Section>, ConfigError> {
    let mut sections: HashMap<String, Section> = HashMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            let name = line
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| ConfigError::Parse {
                    line: line_no,
                    msg: format!("malformed section header '{line}'"),
                })?
                .trim()
                .to_ascii_lowercase();
            if !["geometry", "physics", "solver", "mesh", "output"].contains(&name.as_str()) {
                return Err(ConfigError::Parse {
                    line: line_no,
                    msg: format!("unknown section [{name}]"),
                });
            }
            current = Some(name.clone());
            sections.entry(name).or_default();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Parse {
                line: line_no,
                msg: format!("expected 'key = value', got '{line}'"),
            });
        };
        let Some(section) = &current else {
            return Err(ConfigError::Parse {
                line: line_no,
                msg: "key outside of any [section]".into(),
            });
        };
        sections
            .get_mut(section)
            .unwrap()
            .insert(key.trim().to_string(), (line_no, value.trim().to_string()));
    }
    Ok(sections)
}

fn take_f64(section: &Section, key: &str) -> Result<Option<f64>, ConfigError> {
    match section.get(key) {
        None => Ok(None),
        Some((line, value)) => value
            .parse::<f64>()
            .map(Some)
            .map_err(|_| ConfigError::Parse {
                line: *line,
                msg: format!("could not parse '{value}' as a number for key '{key}'"),
            }),
    }
}

fn check_known_keys(section: &Section, known: &[&str], name: &str) -> Result<(), ConfigError> {
    for (key, (line, _)) in section {
        if !known.contains(&key.as_str()) {
            return Err(ConfigError::Parse {
                line: *line,
                msg: format!("unknown key '{key}' in [{name}]"),
            });
        }
    }
    Ok(())
}

fn parse_geometry(section: Option<&Section>) -> Result<CavityGeometry, ConfigError> {
    let mut geom = CavityGeometry::default();
    let Some(s) = section else {
        return Ok(geom);
    };
    check_known_keys(
        s,
        &[
            "aspect_ratio",
            "heater_radius",
            "heater_centers",
            "arc_chord_tolerance",
            "trapezoid.center_x",
            "trapezoid.base_y",
            "trapezoid.bottom_half_width",
            "trapezoid.top_half_width",
            "trapezoid.height",
        ],
        "geometry",
    )?;
    if let Some(v) = take_f64(s, "aspect_ratio")? {
        geom.aspect_ratio = v;
    }
    if let Some(v) = take_f64(s, "heater_radius")? {
        geom.heater_radius = v;
    }
    if let Some(v) = take_f64(s, "arc_chord_tolerance")? {
        geom.arc_chord_tolerance = v;
    }
    if let Some((line, value)) = s.get("heater_centers") {
        let parts: Vec<f64> = value
            .split([',', ' '])
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| ConfigError::Parse {
                line: *line,
                msg: format!("could not parse heater_centers '{value}'"),
            })?;
        if parts.len() != 2 {
            return Err(ConfigError::Parse {
                line: *line,
                msg: format!("heater_centers needs exactly two values, got {}", parts.len()),
            });
        }
        geom.heater_centers = [parts[0], parts[1]];
    }
    if let Some(v) = take_f64(s, "trapezoid.center_x")? {
        geom.trapezoid.center_x = v;
    }
    if let Some(v) = take_f64(s, "trapezoid.base_y")? {
        geom.trapezoid.base_y = v;
    }
    if let Some(v) = take_f64(s, "trapezoid.bottom_half_width")? {
        geom.trapezoid.bottom_half_width = v;
    }
    if let Some(v) = take_f64(s, "trapezoid.top_half_width")? {
        geom.trapezoid.top_half_width = v;
    }
    if let Some(v) = take_f64(s, "trapezoid.height")? {
        geom.trapezoid.height = v;
    }
    Ok(geom)
}

fn parse_physics(section: Option<&Section>) -> Result<DimensionlessGroups, ConfigError> {
    let s = section.ok_or(ConfigError::MissingKey("[physics] section"))?;
    check_known_keys(s, &["Re", "Pr", "Ri", "Ha", "Br", "Le"], "physics")?;
    let req = |key: &'static str| -> Result<f64, ConfigError> {
        take_f64(s, key)?.ok_or(ConfigError::MissingKey(key))
    };
    Ok(DimensionlessGroups {
        re: req("Re")?,
        pr: req("Pr")?,
        ri: req("Ri")?,
        ha: req("Ha")?,
        br: req("Br")?,
        le: req("Le")?,
    })
}

fn parse_solver(section: Option<&Section>) -> Result<SolverOptions, ConfigError> {
    let mut opts = SolverOptions::default();
    let Some(s) = section else {
        return Ok(opts);
    };
    check_known_keys(
        s,
        &["tol", "max_iters", "relaxation", "continuation_steps", "linearization"],
        "solver",
    )?;
    if let Some(v) = take_f64(s, "tol")? {
        opts.tol = v;
    }
    if let Some(v) = take_f64(s, "max_iters")? {
        opts.max_iters = v as usize;
    }
    if let Some(v) = take_f64(s, "relaxation")? {
        opts.relaxation = v;
    }
    if let Some(v) = take_f64(s, "continuation_steps")? {
        opts.continuation_steps = v as usize;
    }
    if let Some((line, value)) = s.get("linearization") {
        opts.linearization = match value.to_ascii_lowercase().as_str() {
            "picard" => crate::assembly::Linearization::Picard,
            "newton" => crate::assembly::Linearization::Newton,
            _ => {
                return Err(ConfigError::Parse {
                    line: *line,
                    msg: format!("linearization must be 'picard' or 'newton', got '{value}'"),
                })
            }
        };
    }
    Ok(opts)
}

fn parse_mesh(section: Option<&Section>) -> Result<Sizing, ConfigError> {
    let mut sizing = default_case_sizing();
    let Some(s) = section else {
        return Ok(sizing);
    };
    check_known_keys(s, &["h_interior", "h_boundary", "grading_ratio"], "mesh")?;
    if let Some(v) = take_f64(s, "h_interior")? {
        sizing.h_interior = v;
    }
    if let Some(v) = take_f64(s, "h_boundary")? {
        sizing.h_boundary = v;
    }
    if let Some(v) = take_f64(s, "grading_ratio")? {
        sizing.grading_ratio = v;
    }
    Ok(sizing)
}

fn parse_output(section: Option<&Section>) -> Result<OutputConfig, ConfigError> {
    let mut out = OutputConfig::default();
    let Some(s) = section else {
        return Ok(out);
    };
    check_known_keys(s, &["dir", "vtk", "csv"], "output")?;
    if let Some((_, dir)) = s.get("dir") {
        out.dir = PathBuf::from(dir);
    }
    let parse_bool = |key: &'static str| -> Result<Option<bool>, ConfigError> {
        match s.get(key) {
            None => Ok(None),
            Some((line, value)) => match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => Ok(Some(true)),
                "false" | "no" | "0" => Ok(Some(false)),
                _ => Err(ConfigError::Parse {
                    line: *line,
                    msg: format!("could not parse '{value}' as a boolean for key '{key}'"),
                }),
            },
        }
    };
    if let Some(v) = parse_bool("vtk")? {
        out.vtk = v;
    }
    if let Some(v) = parse_bool("csv")? {
        out.csv = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
# default cavity case
[geometry]
aspect_ratio = 2.0
heater_radius = 0.15
heater_centers = 0.5, 1.5
trapezoid.center_x = 1.0
trapezoid.base_y = 0.35
trapezoid.bottom_half_width = 0.3
trapezoid.top_half_width = 0.15
trapezoid.height = 0.3

[physics]
Re = 100
Pr = 7
Ri = 5
Ha = 50
Br = 20
Le = 20

[solver]
tol = 1e-5
max_iters = 200
relaxation = 0.7
continuation_steps = 2

[output]
dir = results
vtk = true
csv = true
"#;

    #[test]
    fn parses_full_case() {
        let cfg = CaseConfig::from_str(GOOD).unwrap();
        assert_eq!(cfg.physics.re, 100.0);
        assert_eq!(cfg.physics.le, 20.0);
        assert_eq!(cfg.geometry.heater_centers, [0.5, 1.5]);
        assert_eq!(cfg.solver.continuation_steps, 2);
        assert_eq!(cfg.output.dir, PathBuf::from("results"));
    }

    #[test]
    fn missing_re_is_named() {
        let text = GOOD.replace("Re = 100", "");
        let err = CaseConfig::from_str(&text).unwrap_err();
        assert!(err.to_string().contains("Re"), "{err}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = GOOD.replace("Pr = 7", "Prandtl = 7");
        let err = CaseConfig::from_str(&text).unwrap_err();
        assert!(
            matches!(err, ConfigError::Parse { .. }) && err.to_string().contains("Prandtl"),
            "{err}"
        );
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        let text = GOOD.replace("heater_centers = 0.5, 1.5", "heater_centers = 0.1, 1.9");
        let err = CaseConfig::from_str(&text).unwrap_err();
        assert!(err.to_string().contains("side wall"), "{err}");
    }

    #[test]
    fn comments_and_defaults() {
        let text = "[physics]\nRe = 10 # inline comment\nPr = 1\nRi = 0\nHa = 0\nBr = 0\nLe = 1\n";
        let cfg = CaseConfig::from_str(text).unwrap();
        assert_eq!(cfg.solver.tol, 1e-5);
        assert_eq!(cfg.geometry, CavityGeometry::default());
    }
}
