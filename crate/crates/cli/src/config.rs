//! Flat key-value run configuration with dotted keys.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment; keys are
//! dotted lowercase identifiers; values are numbers, booleans, identifiers
//! or comma-separated number lists. Unknown keys are rejected so a typo
//! cannot silently fall back to a default. The same format is echoed as the
//! run's `meta` artifact, which makes every run replayable from its own
//! output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ergodic_core::model::Params;
use ergodic_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Milstein,
    JumpEuler,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model_key: String,
    pub model_params: Params,
    pub scheme: Scheme,
    pub levy_area: String,
    pub gamma1: f64,
    pub theta: f64,
    pub weight_equal_to_step: bool,
    pub eta1: f64,
    pub kappa: f64,
    pub seed: u64,
    pub rng_mode: String,
    pub chains: u64,
    pub steps: u64,
    pub x0: Vec<f64>,
    pub out: String,
    pub psi_p: f64,
    pub psi_exp_lambda: Option<f64>,
    pub phi_a: f64,
    pub monomials: u32,
    pub bump_centers: Vec<f64>,
    pub bump_radius: f64,
    pub report_wasserstein: bool,
    pub report_residuals: bool,
    pub check_rp: bool,
    pub rp_alpha: f64,
    pub rp_beta: f64,
    pub sw_rho: f64,
    pub sw_eps_exponent: f64,
    pub sw_horizon: u64,
    pub check_exp: bool,
    pub exp_p: f64,
    pub exp_lambda: f64,
    pub exp_alpha: f64,
    pub exp_beta: f64,
    pub exp_c_sigma: f64,
    pub exp_dom_c: f64,
    pub jump_p: f64,
    pub jump_alpha: f64,
    pub jump_beta: f64,
}

const KNOWN_KEYS: &[&str] = &[
    "model",
    "scheme",
    "milstein.levy_area",
    "step.gamma1",
    "step.theta",
    "weight",
    "weight.eta1",
    "weight.kappa",
    "rng.seed",
    "rng.mode",
    "chains",
    "steps",
    "x0",
    "out",
    "psi.p",
    "psi.lambda",
    "phi.a",
    "jump.q",
    "jump.p",
    "jump.alpha",
    "jump.beta",
    "functionals.monomials",
    "functionals.bumps",
    "functionals.bump_radius",
    "report.wasserstein",
    "report.residuals",
    "check.rp",
    "check.rp.alpha",
    "check.rp.beta",
    "check.sw.rho",
    "check.sw.eps_exponent",
    "check.sw.horizon",
    "check.exp",
    "check.exp.p",
    "check.exp.lambda",
    "check.exp.alpha",
    "check.exp.beta",
    "check.exp.c_sigma",
    "check.exp.dom_c",
];

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::config(format!(
                "line {}: expected `key = value`, got `{raw}`",
                lineno + 1
            )));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

struct Getter {
    map: BTreeMap<String, String>,
}

impl Getter {
    fn str(&self, key: &str, default: &str) -> String {
        self.map
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string())
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("key {key}: `{v}` is not a number"))),
        }
    }

    fn u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("key {key}: `{v}` is not an integer"))),
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.map.get(key).map(|s| s.as_str()) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(Error::config(format!("key {key}: `{v}` is not a boolean"))),
        }
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        match self.map.get(key) {
            None => Ok(Vec::new()),
            Some(v) if v.is_empty() => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::config(format!("key {key}: `{s}` is not a number")))
                })
                .collect(),
        }
    }
}

impl std::str::FromStr for RunConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let map = parse_pairs(text)?;
        for key in map.keys() {
            let known = KNOWN_KEYS.contains(&key.as_str()) || key.starts_with("model.");
            if !known {
                return Err(Error::config(format!("unknown config key `{key}`")));
            }
        }
        let g = Getter { map };

        let model_key = g.str("model", "ou");
        if !ergodic_core::model::catalog::KEYS.contains(&model_key.as_str()) {
            return Err(Error::config(format!(
                "unknown catalog model `{model_key}` (expected one of {:?})",
                ergodic_core::model::catalog::KEYS
            )));
        }
        let mut model_params = Params::new();
        for (k, v) in &g.map {
            if let Some(name) = k.strip_prefix("model.") {
                let value: f64 = v
                    .parse()
                    .map_err(|_| Error::config(format!("key {k}: `{v}` is not a number")))?;
                model_params.insert(name.to_string(), value);
            }
        }
        if let Some(q) = g.map.get("jump.q") {
            let value: f64 = q
                .parse()
                .map_err(|_| Error::config(format!("jump.q: `{q}` is not a number")))?;
            model_params.insert("q".to_string(), value);
        }

        let scheme = match g.str("scheme", "euler").as_str() {
            "euler" => Scheme::Euler,
            "milstein" => Scheme::Milstein,
            "jump_euler" => Scheme::JumpEuler,
            other => return Err(Error::config(format!("unknown scheme `{other}`"))),
        };
        let levy_area = g.str("milstein.levy_area", "exact1d");
        if !["exact1d", "commutative", "substitute"].contains(&levy_area.as_str()) {
            return Err(Error::config(format!(
                "unknown milstein.levy_area `{levy_area}`"
            )));
        }
        let rng_mode = g.str("rng.mode", "gaussian");
        if !["gaussian", "rademacher"].contains(&rng_mode.as_str()) {
            return Err(Error::config(format!("unknown rng.mode `{rng_mode}`")));
        }

        let chains = g.u64("chains", 8)?;
        let steps = g.u64("steps", 100_000)?;
        if chains < 1 || steps < 1 {
            return Err(Error::config("chains and steps must be >= 1"));
        }

        let weight = g.str("weight", "equal_to_step");
        let weight_equal_to_step = match weight.as_str() {
            "equal_to_step" => true,
            "polynomial" => false,
            other => {
                return Err(Error::config(format!(
                    "weight must be `equal_to_step` or `polynomial`, got `{other}`"
                )))
            }
        };

        let mut x0 = g.f64_list("x0")?;
        if x0.is_empty() {
            x0 = vec![0.0];
        }

        let psi_lambda = if g.map.contains_key("psi.lambda") {
            Some(g.f64("psi.lambda", 0.0)?)
        } else {
            None
        };

        Ok(RunConfig {
            model_key,
            model_params,
            scheme,
            levy_area,
            gamma1: g.f64("step.gamma1", 0.5)?,
            theta: g.f64("step.theta", 1.0 / 3.0)?,
            weight_equal_to_step,
            eta1: g.f64("weight.eta1", 0.5)?,
            kappa: g.f64("weight.kappa", 1.0 / 3.0)?,
            seed: g.u64("rng.seed", 0)?,
            rng_mode,
            chains,
            steps,
            x0,
            out: g.str("out", "ergodic_run"),
            psi_p: g.f64("psi.p", 2.0)?,
            psi_exp_lambda: psi_lambda,
            phi_a: g.f64("phi.a", 1.0)?,
            monomials: g.u64("functionals.monomials", 2)? as u32,
            bump_centers: g.f64_list("functionals.bumps")?,
            bump_radius: g.f64("functionals.bump_radius", 1.5)?,
            report_wasserstein: g.bool("report.wasserstein", false)?,
            report_residuals: g.bool("report.residuals", false)?,
            check_rp: g.bool("check.rp", true)?,
            rp_alpha: g.f64("check.rp.alpha", 1.0)?,
            // default beta clears R_2 for the OU catalog default (sigma^2 = 2,
            // ||lambda_2|| = 10: need beta > alpha + 10 sigma^2 = 21)
            rp_beta: g.f64("check.rp.beta", 22.0)?,
            sw_rho: g.f64("check.sw.rho", 2.0)?,
            sw_eps_exponent: g.f64("check.sw.eps_exponent", 1.0)?,
            sw_horizon: g.u64("check.sw.horizon", 1_000_000)?,
            check_exp: g.bool("check.exp", false)?,
            exp_p: g.f64("check.exp.p", 0.5)?,
            exp_lambda: g.f64("check.exp.lambda", 0.1)?,
            exp_alpha: g.f64("check.exp.alpha", 1.0)?,
            exp_beta: g.f64("check.exp.beta", 2.0)?,
            exp_c_sigma: g.f64("check.exp.c_sigma", 10.0)?,
            exp_dom_c: g.f64("check.exp.dom_c", 10.0)?,
            jump_p: g.f64("jump.p", 1.0)?,
            jump_alpha: g.f64("jump.alpha", 1.0)?,
            jump_beta: g.f64("jump.beta", 4.0)?,
        })
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    /// Echo the full effective configuration in the same grammar; parsing
    /// the echo reproduces this config exactly.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# ergodic run meta (replayable config echo)");
        let _ = writeln!(s, "model = {}", self.model_key);
        for (k, v) in &self.model_params {
            let _ = writeln!(s, "model.{k} = {v}");
        }
        let scheme = match self.scheme {
            Scheme::Euler => "euler",
            Scheme::Milstein => "milstein",
            Scheme::JumpEuler => "jump_euler",
        };
        let _ = writeln!(s, "scheme = {scheme}");
        let _ = writeln!(s, "milstein.levy_area = {}", self.levy_area);
        let _ = writeln!(s, "step.gamma1 = {}", self.gamma1);
        let _ = writeln!(s, "step.theta = {}", self.theta);
        if self.weight_equal_to_step {
            let _ = writeln!(s, "weight = equal_to_step");
        } else {
            let _ = writeln!(s, "weight = polynomial");
            let _ = writeln!(s, "weight.eta1 = {}", self.eta1);
            let _ = writeln!(s, "weight.kappa = {}", self.kappa);
        }
        let _ = writeln!(s, "rng.seed = {}", self.seed);
        let _ = writeln!(s, "rng.mode = {}", self.rng_mode);
        let _ = writeln!(s, "chains = {}", self.chains);
        let _ = writeln!(s, "steps = {}", self.steps);
        let x0 = self
            .x0
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(s, "x0 = {x0}");
        let _ = writeln!(s, "out = {}", self.out);
        let _ = writeln!(s, "psi.p = {}", self.psi_p);
        if let Some(l) = self.psi_exp_lambda {
            let _ = writeln!(s, "psi.lambda = {l}");
        }
        let _ = writeln!(s, "phi.a = {}", self.phi_a);
        let _ = writeln!(s, "functionals.monomials = {}", self.monomials);
        if !self.bump_centers.is_empty() {
            let centers = self
                .bump_centers
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(s, "functionals.bumps = {centers}");
            let _ = writeln!(s, "functionals.bump_radius = {}", self.bump_radius);
        }
        let _ = writeln!(s, "report.wasserstein = {}", self.report_wasserstein);
        let _ = writeln!(s, "report.residuals = {}", self.report_residuals);
        let _ = writeln!(s, "check.rp = {}", self.check_rp);
        let _ = writeln!(s, "check.rp.alpha = {}", self.rp_alpha);
        let _ = writeln!(s, "check.rp.beta = {}", self.rp_beta);
        let _ = writeln!(s, "check.sw.rho = {}", self.sw_rho);
        let _ = writeln!(s, "check.sw.eps_exponent = {}", self.sw_eps_exponent);
        let _ = writeln!(s, "check.sw.horizon = {}", self.sw_horizon);
        let _ = writeln!(s, "check.exp = {}", self.check_exp);
        let _ = writeln!(s, "check.exp.p = {}", self.exp_p);
        let _ = writeln!(s, "check.exp.lambda = {}", self.exp_lambda);
        let _ = writeln!(s, "check.exp.alpha = {}", self.exp_alpha);
        let _ = writeln!(s, "check.exp.beta = {}", self.exp_beta);
        let _ = writeln!(s, "check.exp.c_sigma = {}", self.exp_c_sigma);
        let _ = writeln!(s, "check.exp.dom_c = {}", self.exp_dom_c);
        let _ = writeln!(s, "jump.p = {}", self.jump_p);
        let _ = writeln!(s, "jump.alpha = {}", self.jump_alpha);
        let _ = writeln!(s, "jump.beta = {}", self.jump_beta);
        s
    }
}
