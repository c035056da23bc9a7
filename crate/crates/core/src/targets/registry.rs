//! Name-based model lookup used by the CLI.
//!
//! Grammar: `<family>[-<param>]-<dim>`. Families:
//!
//! | name                        | model                                         |
//! |-----------------------------|-----------------------------------------------|
//! | `std_normal-D`              | standard normal                               |
//! | `ill_normal-D`              | log-spaced variances 1..1000                  |
//! | `ill_normal-<cond>-D`       | log-spaced variances 1..cond                  |
//! | `corr_normal<NN>-D`         | equicorrelated normal, `r = NN/100`           |
//! | `corr_normal-<r>-D`         | equicorrelated normal with explicit `r`       |
//! | `funnel-D`                  | Neal's funnel                                 |
//! | `multifunnel-D`             | `D/10` independent 10-D funnels               |
//! | `multifunnel-<k>-D`         | `D/k` independent k-D funnels                 |
//! | `rosenbrock-2`              | 2-D Rosenbrock                                |
//! | `rosenbrockhy3-3`           | 3-D hybrid Rosenbrock                         |

use super::{
    CorrelatedNormal, DiagonalNormal, Funnel, Model, MultiFunnel, RosenbrockChain,
};
use crate::error::{AtlasError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    StdNormal,
    IllNormal,
    CorrNormal,
    Funnel,
    MultiFunnel,
    Rosenbrock,
    HybridRosenbrock,
}

/// `(grammar, description)` for every family, in display order.
pub fn list_models() -> Vec<(&'static str, &'static str)> {
    vec![
        ("std_normal-D", "standard normal in D dimensions"),
        ("ill_normal[-<cond>]-D", "independent normal, variances log-spaced 1..cond (default 1000)"),
        ("corr_normal<NN>-D | corr_normal-<r>-D", "unit-variance normal with correlation r (NN = 100 r)"),
        ("funnel-D", "Neal's funnel, scale parameter ~ N(0, 3^2)"),
        ("multifunnel[-<k>]-D", "D/k independent k-dimensional funnels (default k = 10)"),
        ("rosenbrock-2", "2-D Rosenbrock, first coordinate ~ N(1, 1)"),
        ("rosenbrockhy3-3", "3-D hybrid Rosenbrock chain"),
    ]
}

fn parse_dim(s: &str, name: &str) -> Result<usize> {
    s.parse::<usize>()
        .ok()
        .filter(|d| *d >= 1)
        .ok_or_else(|| AtlasError::UnknownModel(format!("{name}: bad dimension `{s}`")))
}

fn parse_param(s: &str, name: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| AtlasError::UnknownModel(format!("{name}: bad parameter `{s}`")))
}

pub fn model_from_name(name: &str) -> Result<Box<dyn Model>> {
    let parts: Vec<&str> = name.split('-').collect();
    if parts.len() < 2 || parts.len() > 3 {
        return Err(AtlasError::UnknownModel(name.to_string()));
    }
    let family = parts[0];
    let dim = parse_dim(parts[parts.len() - 1], name)?;
    let param = if parts.len() == 3 { Some(parse_param(parts[1], name)?) } else { None };

    let model: Box<dyn Model> = match (family, param) {
        ("std_normal", None) => Box::new(DiagonalNormal::standard(dim)?),
        ("ill_normal", cond) => Box::new(DiagonalNormal::ill_conditioned(dim, cond.unwrap_or(1000.0))?),
        ("corr_normal", Some(r)) => Box::new(CorrelatedNormal::new(dim, r)?),
        (f, None) if f.starts_with("corr_normal") && f.len() > "corr_normal".len() => {
            let digits = &f["corr_normal".len()..];
            let pct: u32 = digits
                .parse()
                .map_err(|_| AtlasError::UnknownModel(name.to_string()))?;
            let r = pct as f64 / 10f64.powi(digits.len() as i32);
            Box::new(CorrelatedNormal::new(dim, r)?)
        }
        ("funnel", None) => Box::new(Funnel::new(dim)?),
        ("multifunnel", each) => {
            let each = each.map(|e| e as usize).unwrap_or(10);
            if each < 2 || dim % each != 0 {
                return Err(AtlasError::UnknownModel(format!(
                    "{name}: dimension must be a multiple of the block size {each}"
                )));
            }
            Box::new(MultiFunnel::new(dim / each, each)?)
        }
        ("rosenbrock", None) if dim == 2 => Box::new(RosenbrockChain::rosenbrock2()),
        ("rosenbrockhy3", None) if dim == 3 => Box::new(RosenbrockChain::hybrid3()),
        _ => return Err(AtlasError::UnknownModel(name.to_string())),
    };
    Ok(model)
}
