//! Small string grammars used by flags and config values.

use std::collections::BTreeMap;

use herding::models::{random_mrf, RandomModelSpec};
use herding::scalar::golden_mean;
use herding::{MomentVector, Provenance, TableFeatures};

use crate::config::{CliError, CliResult};

/// An enumerable model: a feature table and its target moments.
pub struct TableModel {
    pub features: TableFeatures,
    pub moments: MomentVector,
}

fn params(body: &str) -> CliResult<BTreeMap<String, String>> {
    body.split(',')
        .filter(|s| !s.is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.trim().to_string()))
                .ok_or_else(|| CliError::config(format!("expected key=value, got {kv:?}")))
        })
        .collect()
}

fn get<T: std::str::FromStr>(p: &BTreeMap<String, String>, key: &str, default: Option<T>) -> CliResult<T> {
    match p.get(key) {
        Some(v) => v.parse().map_err(|_| CliError::config(format!("bad value for {key}: {v:?}"))),
        None => default.ok_or_else(|| CliError::config(format!("model spec is missing {key}"))),
    }
}

/// `random:D=4,K=2,seed=7[,scale=1]` or `one-hot:D=5`. One-hot moments
/// default to the uniform distribution.
pub fn parse_model(spec: &str) -> CliResult<TableModel> {
    let (kind, body) = spec.split_once(':').unwrap_or((spec, ""));
    let p = params(body)?;
    match kind {
        "random" => {
            let mut s = RandomModelSpec::new(get(&p, "d", None)?, get(&p, "k", None)?, get(&p, "seed", Some(0))?);
            s.weight_scale = get(&p, "scale", Some(1.0))?;
            let m = random_mrf(s)?;
            Ok(TableModel { features: m.features, moments: m.moments })
        }
        "one-hot" => {
            let d: usize = get(&p, "d", None)?;
            if d == 0 {
                return Err(CliError::config("one-hot model needs D >= 1"));
            }
            let features = TableFeatures::one_hot(d);
            let moments = MomentVector::new(vec![1.0 / d as f64; d], Provenance::Analytic, &features)?;
            Ok(TableModel { features, moments })
        }
        other => Err(CliError::config(format!("unknown model kind {other:?} (expected random or one-hot)"))),
    }
}

/// `golden`, `sqrt2` (meaning `sqrt 2 - 1`) or a number.
pub fn parse_rate(s: &str) -> CliResult<f64> {
    match s {
        "golden" => Ok(golden_mean()),
        "sqrt2" => Ok(2f64.sqrt() - 1.0),
        _ => s.parse().map_err(|_| CliError::config(format!("bad firing rate {s:?}"))),
    }
}

/// `pi` (start at the rate), `rabbit` (`2 pi - 1`), `centered`
/// (`pi - 1/2`) or a number.
pub fn parse_neuron_w0(s: &str, pi: f64) -> CliResult<f64> {
    match s {
        "pi" => Ok(pi),
        "rabbit" => Ok(2.0 * pi - 1.0),
        "centered" => Ok(pi - 0.5),
        _ => s.parse().map_err(|_| CliError::config(format!("bad initial weight {s:?}"))),
    }
}

pub fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| CliError::config(format!("bad number {x:?} in list"))))
        .collect()
}

/// `lo:hi:n`.
pub fn parse_grid(s: &str) -> CliResult<(f64, f64, usize)> {
    let bad = || CliError::config(format!("temperature grid must be lo:hi:n, got {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else { return Err(bad()) };
    let (lo, hi, n): (f64, f64, usize) =
        (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?, n.parse().map_err(|_| bad())?);
    if !(lo > 0.0) || !(hi >= lo) || n == 0 {
        return Err(CliError::config(format!("temperature grid needs 0 < lo <= hi and n >= 1, got {s:?}")));
    }
    Ok((lo, hi, n))
}

/// `HxW`.
pub fn parse_size(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::config(format!("lattice size must be HxW, got {s:?}"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((h.parse().map_err(|_| bad())?, w.parse().map_err(|_| bad())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use herding::FeatureMap;

    #[test]
    fn random_spec() {
        let m = parse_model("random:D=4,K=2,seed=7").unwrap();
        assert_eq!(m.features.num_states(), 4);
        assert_eq!(m.features.dim(), 2);
        assert!(parse_model("random:D=4").is_err());
        assert!(parse_model("lattice:D=4").is_err());
    }

    #[test]
    fn one_hot_spec() {
        let m = parse_model("one-hot:D=4").unwrap();
        assert_eq!(m.moments.values(), &[0.25; 4]);
    }

    #[test]
    fn grammars() {
        assert_eq!(parse_grid("0.05:0.5:200").unwrap(), (0.05, 0.5, 200));
        assert!(parse_grid("0.5:0.05:3").is_err());
        assert_eq!(parse_size("32x16").unwrap(), (32, 16));
        assert_eq!(parse_list("0.2, 0.8").unwrap(), vec![0.2, 0.8]);
        let g = parse_rate("golden").unwrap();
        assert_eq!(parse_neuron_w0("rabbit", g).unwrap(), 2.0 * g - 1.0);
    }
}
