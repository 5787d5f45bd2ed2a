//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `[section]` prefixes the following keys with
//! `section.`; `#` starts a comment. Later assignments override earlier
//! ones, so command-line `key=value` overrides can simply be appended.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::amg::{AmgConfig, Coarsening, SmootherKind};
use crate::ionic::{Stimulus, StimulusRegion};
use crate::stepper::{EllipticPrecond, MeshSpec, OutputConfig, ParabolicPrecond, SimulationConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: line {line}: {msg}")]
    Syntax { origin: String, line: usize, msg: String },
    #[error("key `{key}`: cannot parse `{value}`: {msg}")]
    Value { key: String, value: String, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.merge_text(text, origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        let mut section = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |msg: &str| ConfigError::Syntax {
                origin: origin.to_string(),
                line: k + 1,
                msg: msg.to_string(),
            };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| syntax("unterminated section header"))?
                    .trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(syntax("invalid section name"));
                }
                section = format!("{name}.");
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| syntax("expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(syntax("invalid key"));
            }
            self.entries.insert(format!("{section}{key}"), value.trim().to_string());
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            origin: "--set".into(),
            line: 1,
            msg: format!("expected key=value, got `{assignment}`"),
        })?;
        self.entries.insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn get_raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        msg: e.to_string(),
    })
}

fn parse_list<T, const N: usize>(key: &str, value: &str) -> Result<[T; N], ConfigError>
where
    T: FromStr + Copy + Default,
    T::Err: std::fmt::Display,
{
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(ConfigError::Value {
            key: key.into(),
            value: value.into(),
            msg: format!("expected {N} comma-separated values"),
        });
    }
    let mut out = [T::default(); N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_value(key, p)?;
    }
    Ok(out)
}

/// Reads keys and remembers which ones were consumed.
struct Reader<'a> {
    kv: &'a KvConfig,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl<'a> Reader<'a> {
    fn raw(&self, key: &str) -> Option<&'a str> {
        let v = self.kv.get_raw(key);
        if v.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        v
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key).map(|v| parse_value(key, v)).transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn bad(&self, key: &str, value: &str, msg: &str) -> ConfigError {
        ConfigError::Value {
            key: key.into(),
            value: value.into(),
            msg: msg.into(),
        }
    }
}

/// AMG settings under `amg.*` and `smoother.*`.
fn amg_config(r: &Reader) -> Result<AmgConfig, ConfigError> {
    let coarsening = r.raw("amg.coarsening").unwrap_or("mis");
    let mut cfg = match coarsening {
        "mis" | "aggregation" => AmgConfig::aggregation(r.or("amg.threshold", crate::amg::DEFAULT_MIS_THRESHOLD)?),
        "strong" | "classical" => {
            AmgConfig::classical(r.or("amg.strong_threshold", crate::amg::DEFAULT_STRONG_THRESHOLD)?)
        }
        other => return Err(r.bad("amg.coarsening", other, "expected mis or strong")),
    };
    // the other branch's threshold may be present in shared config files
    let _ = r.raw("amg.threshold");
    let _ = r.raw("amg.strong_threshold");
    cfg.coarse_eq_limit = r.or("amg.coarse_eq_limit", cfg.coarse_eq_limit)?;
    cfg.prolongator_smoothing_steps = r.or("amg.nsmooths", cfg.prolongator_smoothing_steps)?;
    cfg.max_levels = r.or("amg.max_levels", cfg.max_levels)?;
    cfg.mu1 = r.or("amg.mu1", cfg.mu1)?;
    cfg.mu2 = r.or("amg.mu2", cfg.mu2)?;
    cfg.esteig_iters = r.or("amg.esteig_iters", cfg.esteig_iters)?;
    if let Some(kind) = r.raw("smoother.kind") {
        cfg.smoother = match kind {
            "chebyshev" => SmootherKind::chebyshev_default(),
            "sgs" | "symmetric_gauss_seidel" => SmootherKind::SymmetricGaussSeidel,
            "jacobi" => SmootherKind::Jacobi { omega: 2.0 / 3.0 },
            other => return Err(r.bad("smoother.kind", other, "expected chebyshev, sgs or jacobi")),
        };
    }
    match &mut cfg.smoother {
        SmootherKind::Chebyshev {
            degree,
            lo_frac,
            hi_frac,
            esteig_iters,
        } => {
            *degree = r.or("smoother.degree", *degree)?;
            *lo_frac = r.or("smoother.eig_lo", *lo_frac)?;
            *hi_frac = r.or("smoother.eig_hi", *hi_frac)?;
            *esteig_iters = r.or("smoother.esteig_iters", *esteig_iters)?;
        }
        SmootherKind::Jacobi { omega } => *omega = r.or("smoother.omega", *omega)?,
        SmootherKind::SymmetricGaussSeidel => {}
    }
    Ok(cfg)
}

fn mesh_spec(r: &Reader) -> Result<MeshSpec, ConfigError> {
    let kind = r.raw("mesh.kind").unwrap_or("ellipsoid");
    Ok(match kind {
        "ellipsoid" => {
            let n = match r.raw("mesh.n") {
                Some(v) => parse_list::<usize, 3>("mesh.n", v)?,
                None => [32, 32, 16],
            };
            let mut spec = MeshSpec::ellipsoid(n);
            if let MeshSpec::Ellipsoid {
                endo_angle, epi_angle, ..
            } = &mut spec
            {
                if let Some(d) = r.get::<f64>("mesh.endo_angle_deg")? {
                    *endo_angle = d.to_radians();
                }
                if let Some(d) = r.get::<f64>("mesh.epi_angle_deg")? {
                    *epi_angle = d.to_radians();
                }
            }
            spec
        }
        "box" => MeshSpec::Box {
            lengths: match r.raw("mesh.lengths") {
                Some(v) => parse_list::<f64, 3>("mesh.lengths", v)?,
                None => [1.0, 1.0, 1.0],
            },
            n: match r.raw("mesh.n") {
                Some(v) => parse_list::<usize, 3>("mesh.n", v)?,
                None => [16, 16, 16],
            },
        },
        "file" => MeshSpec::File {
            path: PathBuf::from(
                r.raw("mesh.path")
                    .ok_or_else(|| r.bad("mesh.path", "", "required for mesh.kind = file"))?,
            ),
        },
        other => return Err(r.bad("mesh.kind", other, "expected ellipsoid, box or file")),
    })
}

fn stimulus(r: &Reader) -> Result<(Option<Stimulus>, bool), ConfigError> {
    if !r.or("stim.enabled", true)? {
        for k in [
            "stim.start",
            "stim.duration",
            "stim.amplitude",
            "stim.region",
            "stim.radius",
            "stim.axis",
            "stim.depth",
            "stim.center",
        ] {
            let _ = r.raw(k);
        }
        return Ok((None, false));
    }
    let region_kind = r.raw("stim.region").unwrap_or("auto");
    let radius = r.get::<f64>("stim.radius")?;
    let (region, auto) = match region_kind {
        "auto" => (
            StimulusRegion::Apex {
                radius: StimulusRegion::DEFAULT_APEX_RADIUS,
            },
            true,
        ),
        "apex" => (
            StimulusRegion::Apex {
                radius: radius.unwrap_or(StimulusRegion::DEFAULT_APEX_RADIUS),
            },
            false,
        ),
        "face" => (
            StimulusRegion::Face {
                axis: r.or("stim.axis", 0)?,
                depth: r
                    .get("stim.depth")?
                    .ok_or_else(|| r.bad("stim.depth", "", "required for stim.region = face"))?,
            },
            false,
        ),
        "sphere" => (
            StimulusRegion::Sphere {
                center: parse_list::<f64, 3>(
                    "stim.center",
                    r.raw("stim.center")
                        .ok_or_else(|| r.bad("stim.center", "", "required for stim.region = sphere"))?,
                )?,
                radius: radius.ok_or_else(|| r.bad("stim.radius", "", "required for stim.region = sphere"))?,
            },
            false,
        ),
        other => return Err(r.bad("stim.region", other, "expected auto, apex, face or sphere")),
    };
    let mut s = Stimulus::new(region);
    s.start = r.or("stim.start", s.start)?;
    s.duration = r.or("stim.duration", s.duration)?;
    s.amplitude = r.or("stim.amplitude", s.amplitude)?;
    Ok((Some(s), auto))
}

/// Builds a simulation config on top of the defaults; unknown keys are errors.
pub fn simulation_config(kv: &KvConfig) -> Result<SimulationConfig, ConfigError> {
    let r = Reader {
        kv,
        used: Default::default(),
    };
    let mut cfg = SimulationConfig {
        mesh: mesh_spec(&r)?,
        ..SimulationConfig::default()
    };
    cfg.dt = r.or("time.dt", cfg.dt)?;
    cfg.t_end = r.or("time.t_end", cfg.t_end)?;
    cfg.c_m = r.or("model.c_m", cfg.c_m)?;

    let c = &mut cfg.conductivities;
    c.sigma_l_i = r.or("cond.sigma_l_i", c.sigma_l_i)?;
    c.sigma_t_i = r.or("cond.sigma_t_i", c.sigma_t_i)?;
    c.sigma_n_i = r.or("cond.sigma_n_i", c.sigma_n_i)?;
    c.sigma_l_e = r.or("cond.sigma_l_e", c.sigma_l_e)?;
    c.sigma_t_e = r.or("cond.sigma_t_e", c.sigma_t_e)?;
    c.sigma_n_e = r.or("cond.sigma_n_e", c.sigma_n_e)?;

    if let Some(m) = r.raw("ionic.model") {
        if m != "rogers_mcculloch" {
            return Err(r.bad("ionic.model", m, "only rogers_mcculloch is available"));
        }
    }
    let p = &mut cfg.ionic;
    p.g = r.or("ionic.g", p.g)?;
    p.v_th = r.or("ionic.v_th", p.v_th)?;
    p.v_p = r.or("ionic.v_p", p.v_p)?;
    p.eta1 = r.or("ionic.eta1", p.eta1)?;
    p.eta2 = r.or("ionic.eta2", p.eta2)?;
    p.eta3 = r.or("ionic.eta3", p.eta3)?;
    p.v_rest = r.or("ionic.v_rest", p.v_rest)?;
    p.v_amp = r.or("ionic.v_amp", p.v_amp)?;

    let (stim, auto) = stimulus(&r)?;
    cfg.stimulus = stim;
    cfg.stimulus_region_auto = auto;

    let amg = amg_config(&r)?;
    cfg.elliptic = match r.raw("elliptic.precond").unwrap_or("amg") {
        "amg" => EllipticPrecond::Amg(amg),
        "jacobi" => EllipticPrecond::Jacobi,
        "identity" | "none" => EllipticPrecond::Identity,
        other => return Err(r.bad("elliptic.precond", other, "expected amg, jacobi or identity")),
    };
    cfg.parabolic = match r.raw("parab.precond").unwrap_or("block_jacobi") {
        "block_jacobi" | "bjacobi" => {
            let n_blocks = match r.raw("parab.blocks").unwrap_or("auto") {
                "auto" => None,
                v => Some(parse_value::<usize>("parab.blocks", v)?),
            };
            ParabolicPrecond::BlockJacobi { n_blocks }
        }
        "identity" | "none" => {
            let _ = r.raw("parab.blocks");
            ParabolicPrecond::Identity
        }
        other => return Err(r.bad("parab.precond", other, "expected block_jacobi or identity")),
    };
    cfg.rtol = r.or("solver.rtol", cfg.rtol)?;
    cfg.maxit = r.or("solver.maxit", cfg.maxit)?;

    let default_out = OutputConfig::default();
    cfg.output = OutputConfig {
        dir: r.raw("output.dir").map(PathBuf::from),
        trace: r.or("output.trace", default_out.trace)?,
        snapshot_every: r.or("output.snapshot_every", default_out.snapshot_every)?,
        timings: r.or("output.timings", default_out.timings)?,
    };

    let used = r.used.into_inner();
    if let Some(k) = kv.keys().find(|k| !used.contains(*k)) {
        return Err(ConfigError::UnknownKey(k.to_string()));
    }
    Ok(cfg)
}

/// Renders the coarsening choice back as config lines.
pub fn coarsening_lines(c: &Coarsening) -> String {
    match c {
        Coarsening::MisAggregation { threshold } => format!("amg.coarsening = mis\namg.threshold = {threshold}\n"),
        Coarsening::StrongThreshold { alpha } => format!("amg.coarsening = strong\namg.strong_threshold = {alpha}\n"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_file() {
        let cfg = simulation_config(&KvConfig::default()).unwrap();
        assert_eq!(cfg, SimulationConfig::default());
    }

    #[test]
    fn sections_comments_and_overrides() {
        let text =
            "# run\n[time]\ndt = 0.1   # coarse\nt_end = 2\n[amg]\ncoarsening = strong\nstrong_threshold = 0.25\n";
        let mut kv = KvConfig::parse(text, "test").unwrap();
        kv.set("time.t_end=0.5").unwrap();
        let cfg = simulation_config(&kv).unwrap();
        assert_eq!(cfg.dt, 0.1);
        assert_eq!(cfg.t_end, 0.5);
        match cfg.elliptic {
            EllipticPrecond::Amg(a) => {
                assert_eq!(a.coarsening, Coarsening::StrongThreshold { alpha: 0.25 });
                assert_eq!(a.smoother, SmootherKind::SymmetricGaussSeidel);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn box_mesh_and_outputs() {
        let kv = KvConfig::parse(
            "mesh.kind = box\nmesh.n = 4, 4, 2\nmesh.lengths = 1,1,0.5\noutput.dir = out\noutput.timings = false\nparab.blocks = 3\n",
            "t",
        )
        .unwrap();
        let cfg = simulation_config(&kv).unwrap();
        assert_eq!(
            cfg.mesh,
            MeshSpec::Box {
                lengths: [1.0, 1.0, 0.5],
                n: [4, 4, 2]
            }
        );
        assert!(!cfg.output.timings);
        assert_eq!(cfg.parabolic, ParabolicPrecond::BlockJacobi { n_blocks: Some(3) });
    }

    #[test]
    fn errors_are_specific() {
        let e = KvConfig::parse("a = 1\nnonsense\n", "f.cfg").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        let kv = KvConfig::parse("time.dtt = 1\n", "t").unwrap();
        assert!(matches!(simulation_config(&kv), Err(ConfigError::UnknownKey(k)) if k == "time.dtt"));
        let kv = KvConfig::parse("time.dt = fast\n", "t").unwrap();
        assert!(matches!(simulation_config(&kv), Err(ConfigError::Value { .. })));
        let kv = KvConfig::parse("mesh.n = 1,2\n", "t").unwrap();
        assert!(simulation_config(&kv).is_err());
    }

    #[test]
    fn disabled_stimulus() {
        let kv = KvConfig::parse("stim.enabled = false\nstim.radius = 3\n", "t").unwrap();
        assert!(simulation_config(&kv).unwrap().stimulus.is_none());
    }
}
