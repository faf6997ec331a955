//! Surface files and CSV tables.
//!
//! Floats are written with 17 significant digits in lowercase
//! e-notation, so every value round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ambient::{DataFamily, SignBranch};
use crate::geometry::{GraphSurface, SurfaceSummary};
use crate::momentum::{DriftSeries, MomentumEstimate};
use crate::solver::{FoliationResult, LeafPair, SolveResult};
use crate::sphere::{coeff_degree_order, n_coeffs};

pub const SURFACE_SCHEMA: u32 = 1;
const MAGIC: &str = "# pmc-foliation surface";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("surface file schema error: {0}")]
    Schema(String),
}

/// 17 significant digits, lowercase exponent.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// SHA-256 of the canonical family description, hex encoded.
pub fn family_fingerprint(family: &DataFamily) -> String {
    let digest = Sha256::digest(family.fingerprint_text().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceFile {
    pub schema: u32,
    pub fingerprint: String,
    pub degree: usize,
    pub h: f64,
    pub tau: f64,
    pub sign: SignBranch,
    pub coeffs: Vec<f64>,
    pub summary: Vec<(String, f64)>,
}

fn summary_pairs(s: &SurfaceSummary) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = vec![
        ("area".into(), s.area),
        ("area_e".into(), s.area_e),
        ("radius_e".into(), s.radius_e),
        ("radius_g".into(), s.radius_g),
        ("r_min".into(), s.r_min),
    ];
    for (name, c) in [("center_e", &s.center_e), ("center_g", &s.center_g)] {
        for (k, axis) in ["x", "y", "z"].iter().enumerate() {
            v.push((format!("{name}_{axis}"), c[k]));
        }
    }
    v.extend([
        ("hawking_mass".into(), s.hawking_mass),
        ("traceless_l2".into(), s.traceless_l2),
        ("grad_traceless_l2".into(), s.grad_traceless_l2),
        ("min_curvature".into(), s.min_curvature),
        ("max_curvature".into(), s.max_curvature),
        ("convexity_margin".into(), s.convexity_margin),
    ]);
    for (k, m) in s.flags_c.margins.iter().enumerate() {
        v.push((format!("margin_c{}", k + 1), *m));
    }
    v
}

impl SurfaceFile {
    pub fn from_result(result: &SolveResult, family: &DataFamily, degree: usize) -> Self {
        Self {
            schema: SURFACE_SCHEMA,
            fingerprint: family_fingerprint(family),
            degree,
            h: result.h,
            tau: result.tau,
            sign: family.sign_branch,
            coeffs: result.surface.coeffs.clone(),
            summary: summary_pairs(&result.summary),
        }
    }

    pub fn surface(&self) -> GraphSurface {
        GraphSurface {
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "schema {}", self.schema);
        let _ = writeln!(s, "fingerprint {}", self.fingerprint);
        let _ = writeln!(s, "degree {}", self.degree);
        let _ = writeln!(s, "h {}", fmt_float(self.h));
        let _ = writeln!(s, "tau {}", fmt_float(self.tau));
        let _ = writeln!(s, "sign {}", self.sign.as_str());
        let _ = writeln!(s, "coefficients {}", self.coeffs.len());
        for (i, c) in self.coeffs.iter().enumerate() {
            let (l, m) = coeff_degree_order(i);
            let _ = writeln!(s, "{l} {m} {}", fmt_float(*c));
        }
        let _ = writeln!(s, "summary {}", self.summary.len());
        for (k, v) in &self.summary {
            let _ = writeln!(s, "{k} {}", fmt_float(*v));
        }
        let _ = writeln!(s, "end");
        s
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let schema_err = |m: String| IoError::Schema(m);
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(schema_err("missing surface file header".into()));
        }
        let mut field = |name: &str| -> Result<String, IoError> {
            let line = lines
                .next()
                .ok_or_else(|| IoError::Schema(format!("truncated before `{name}`")))?;
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| IoError::Schema(format!("expected `{name}`, found `{line}`")))
        };
        let num = |name: &str, s: String| -> Result<f64, IoError> {
            s.parse::<f64>()
                .map_err(|_| IoError::Schema(format!("invalid number for `{name}`: {s}")))
        };
        let schema: u32 = field("schema")?
            .parse()
            .map_err(|_| schema_err("invalid schema".into()))?;
        if schema != SURFACE_SCHEMA {
            return Err(schema_err(format!("unsupported schema {schema}")));
        }
        let fingerprint = field("fingerprint")?;
        let degree: usize = field("degree")?
            .parse()
            .map_err(|_| schema_err("invalid degree".into()))?;
        let h = num("h", field("h")?)?;
        let tau = num("tau", field("tau")?)?;
        let sign = match field("sign")?.as_str() {
            "plus" => SignBranch::Plus,
            "minus" => SignBranch::Minus,
            other => return Err(schema_err(format!("invalid sign `{other}`"))),
        };
        let count: usize = field("coefficients")?
            .parse()
            .map_err(|_| schema_err("invalid coefficient count".into()))?;
        if count != n_coeffs(degree) {
            return Err(schema_err(format!(
                "coefficient count {count} does not match degree {degree}"
            )));
        }
        let mut coeffs = Vec::with_capacity(count);
        for i in 0..count {
            let line = lines.next().ok_or_else(|| schema_err("truncated coefficients".into()))?;
            let mut parts = line.split(' ');
            let (l, m) = coeff_degree_order(i);
            let ok_lm = parts.next() == Some(&l.to_string()) && parts.next() == Some(&m.to_string());
            let v = parts.next().and_then(|s| s.parse::<f64>().ok());
            match (ok_lm, v, parts.next()) {
                (true, Some(v), None) => coeffs.push(v),
                _ => return Err(schema_err(format!("malformed coefficient line {i}: `{line}`"))),
            }
        }
        let mut field2 = |name: &str| -> Result<String, IoError> {
            let line = lines
                .next()
                .ok_or_else(|| IoError::Schema(format!("truncated before `{name}`")))?;
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| IoError::Schema(format!("expected `{name}`, found `{line}`")))
        };
        let n_summary: usize = field2("summary")?
            .parse()
            .map_err(|_| schema_err("invalid summary count".into()))?;
        let mut summary = Vec::with_capacity(n_summary);
        for _ in 0..n_summary {
            let line = lines.next().ok_or_else(|| schema_err("truncated summary".into()))?;
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| schema_err(format!("malformed summary line `{line}`")))?;
            let v = v
                .parse::<f64>()
                .map_err(|_| schema_err(format!("malformed summary value `{line}`")))?;
            summary.push((k.to_string(), v));
        }
        if lines.next() != Some("end") || lines.next().is_some() {
            return Err(schema_err("missing end marker".into()));
        }
        Ok(Self {
            schema,
            fingerprint,
            degree,
            h,
            tau,
            sign,
            coeffs,
            summary,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_text(path, &self.to_text())
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(|source| IoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Load for a run on degree `degree` with `family`. A degree mismatch is
    /// an error; a fingerprint mismatch only produces a warning, which is
    /// also returned.
    pub fn load_for(path: &Path, degree: usize, family: &DataFamily) -> Result<(Self, Option<String>), IoError> {
        let file = Self::read(path)?;
        if file.degree != degree {
            return Err(IoError::Schema(format!(
                "surface degree {} does not match run degree {degree}",
                file.degree
            )));
        }
        let expected = family_fingerprint(family);
        let warning = (file.fingerprint != expected).then(|| {
            let w = format!(
                "surface {} was computed for family {} but the run uses {}",
                path.display(),
                file.fingerprint,
                expected
            );
            warn!("{w}");
            w
        });
        Ok((file, warning))
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub const FOLIATION_HEADER: &str = "h,tau,R_e,r_min,a_e_x,a_e_y,a_e_z,a_g_x,a_g_y,a_g_z,m_H,traceless_l2,min_curvature,max_curvature,convexity_margin,C1,C2,C3,C4,iterations,residual";

/// One foliation CSV row.
pub fn foliation_row(r: &SolveResult) -> String {
    let s = &r.summary;
    let mut cols: Vec<String> = vec![fmt_float(r.h), fmt_float(r.tau), fmt_float(s.radius_e), fmt_float(s.r_min)];
    cols.extend(s.center_e.iter().map(|v| fmt_float(*v)));
    cols.extend(s.center_g.iter().map(|v| fmt_float(*v)));
    cols.extend(
        [s.hawking_mass, s.traceless_l2, s.min_curvature, s.max_curvature, s.convexity_margin]
            .iter()
            .map(|v| fmt_float(*v)),
    );
    cols.extend(s.flags_c.passed.iter().map(|b| u8::from(*b).to_string()));
    cols.push(r.iterations.to_string());
    cols.push(fmt_float(r.residual()));
    cols.join(",")
}

pub fn foliation_csv(members: &[SolveResult]) -> String {
    let mut s = String::from(FOLIATION_HEADER);
    s.push('\n');
    for m in members {
        s.push_str(&foliation_row(m));
        s.push('\n');
    }
    s
}

pub const PAIRS_HEADER: &str = "h_inner,h_outer,lapse_min,lapse_max,nesting_margin,nested,lapse_definite";

pub fn pairs_csv(pairs: &[LeafPair]) -> String {
    let mut s = String::from(PAIRS_HEADER);
    s.push('\n');
    for p in pairs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            fmt_float(p.h_inner),
            fmt_float(p.h_outer),
            fmt_float(p.lapse_min),
            fmt_float(p.lapse_max),
            fmt_float(p.nesting_margin),
            u8::from(p.nested()),
            u8::from(p.lapse_sign_definite())
        );
    }
    s
}

pub const DRIFT_HEADER: &str = "h,R_e,a_e_x,a_e_y,a_e_z,a_g_x,a_g_y,a_g_z,drift_x,drift_y,drift_z,diff_x,diff_y,diff_z";

pub fn drift_csv(series: &DriftSeries) -> String {
    let mut s = String::from(DRIFT_HEADER);
    s.push('\n');
    for r in &series.rows {
        let mut cols = vec![fmt_float(r.h), fmt_float(r.radius_e)];
        for v in [r.center_e, r.center_g, r.drift(), r.center_difference()] {
            cols.extend(v.iter().map(|x| fmt_float(*x)));
        }
        s.push_str(&cols.join(","));
        s.push('\n');
    }
    s
}

pub const GAP_HEADER: &str = "R_e,mu1,bound,ratio";

pub fn gap_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut s = String::from(GAP_HEADER);
    s.push('\n');
    for (r, mu, bound) in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_float(*r),
            fmt_float(*mu),
            fmt_float(*bound),
            fmt_float(mu / bound)
        );
    }
    s
}

/// Structured momentum report.
pub fn momentum_report(est: &MomentumEstimate, fol: &FoliationResult) -> String {
    let v = |x: &nalgebra::Vector3<f64>| vec![x[0], x[1], x[2]];
    let report = serde_json::json!({
        "form": est.form.as_str(),
        "branch": est.branch.as_str(),
        "tau_hat": est.tau,
        "direction": v(&est.direction),
        "momentum": v(&est.momentum),
        "momentum_magnitude": est.magnitude(),
        "fit_residual": est.fit_residual,
        "center_difference_limit": v(&est.center_difference),
        "members": fol.members.len(),
        "mass": fol.family.mass,
        "family_fingerprint": family_fingerprint(&fol.family),
    });
    let mut s = serde_json::to_string_pretty(&report).expect("json values are finite");
    s.push('\n');
    s
}
