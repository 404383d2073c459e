//! JSON form of a [`ProblemInstance`].
//!
//! ```json
//! {"m": 1, "n": 1, "theta": [0.0],
//!  "psi": {"kind": "power", "tau": 1.0},
//!  "Q": {"kind": "all_nonzero"}}
//! ```
//!
//! `psi` kinds: `power {tau}`, `table {entries: [{q, value}]}`,
//! `symmetric {values}` (value by `|q|`), `axis_powers_of_two`.
//! `Q` kinds: `all_nonzero` (the default), `predicate_table {members}`.
//! Missing or malformed keys are argument errors; an unknown `psi` kind is
//! reported as unsupported.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use crate::approx::{clamp_psi, ApproxFunction, DenominatorSet, ProblemInstance, PsiRule};
use crate::error::{Error, Result};
use crate::lattice::Point;

fn arg(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

fn field<'a>(obj: &'a Value, key: &str, ctx: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| arg(format!("{ctx}: missing key \"{key}\"")))
}

fn positive_int(v: &Value, ctx: &str) -> Result<usize> {
    v.as_u64()
        .filter(|&x| x > 0)
        .map(|x| x as usize)
        .ok_or_else(|| arg(format!("{ctx} must be a positive integer, got {v}")))
}

fn number(v: &Value, ctx: &str) -> Result<f64> {
    v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| arg(format!("{ctx} must be a finite number, got {v}")))
}

fn int_vector(v: &Value, len: usize, ctx: &str) -> Result<Point> {
    let items = v.as_array().ok_or_else(|| arg(format!("{ctx} must be an array")))?;
    if items.len() != len {
        return Err(arg(format!("{ctx} has length {}, expected {len}", items.len())));
    }
    items
        .iter()
        .map(|x| x.as_i64().ok_or_else(|| arg(format!("{ctx} entries must be integers, got {x}"))))
        .collect()
}

fn parse_psi(v: &Value, n: usize) -> Result<ApproxFunction> {
    let kind = field(v, "kind", "psi")?.as_str().ok_or_else(|| arg("psi.kind must be a string"))?;
    let rule = match kind {
        "power" => {
            let tau = number(field(v, "tau", "psi")?, "psi.tau")?;
            if tau < 0.0 {
                return Err(arg(format!("psi.tau must be nonnegative, got {tau}")));
            }
            PsiRule::Power { tau }
        }
        "table" => {
            let entries = field(v, "entries", "psi")?
                .as_array()
                .ok_or_else(|| arg("psi.entries must be an array"))?;
            let mut table = BTreeMap::new();
            for (i, e) in entries.iter().enumerate() {
                let ctx = format!("psi.entries[{i}]");
                let q = int_vector(field(e, "q", &ctx)?, n, &format!("{ctx}.q"))?;
                let value = number(field(e, "value", &ctx)?, &format!("{ctx}.value"))?;
                if value < 0.0 {
                    return Err(arg(format!("{ctx}.value must be nonnegative")));
                }
                if table.insert(q, value).is_some() {
                    return Err(arg(format!("{ctx}.q is repeated")));
                }
            }
            PsiRule::Table { entries: table }
        }
        "symmetric" => {
            let values = field(v, "values", "psi")?
                .as_array()
                .ok_or_else(|| arg("psi.values must be an array"))?
                .iter()
                .enumerate()
                .map(|(i, x)| number(x, &format!("psi.values[{i}]")))
                .collect::<Result<Vec<f64>>>()?;
            if values.iter().any(|&x| x < 0.0) {
                return Err(arg("psi.values must be nonnegative"));
            }
            PsiRule::Symmetric { values }
        }
        "axis_powers_of_two" => PsiRule::AxisPowersOfTwo,
        other => return Err(Error::Unsupported(format!("psi kind \"{other}\""))),
    };
    Ok(clamp_psi(n, rule))
}

fn parse_q(v: Option<&Value>, n: usize) -> Result<DenominatorSet> {
    let Some(v) = v else {
        return Ok(DenominatorSet::all_nonzero(n));
    };
    let kind = field(v, "kind", "Q")?.as_str().ok_or_else(|| arg("Q.kind must be a string"))?;
    match kind {
        "all_nonzero" => Ok(DenominatorSet::all_nonzero(n)),
        "predicate_table" => {
            let items = field(v, "members", "Q")?.as_array().ok_or_else(|| arg("Q.members must be an array"))?;
            let mut members = BTreeSet::new();
            for (i, q) in items.iter().enumerate() {
                let q = int_vector(q, n, &format!("Q.members[{i}]"))?;
                if q.iter().all(|&c| c == 0) {
                    return Err(arg(format!("Q.members[{i}] is zero")));
                }
                members.insert(q);
            }
            Ok(DenominatorSet::Members { n, members })
        }
        other => Err(arg(format!("unknown Q kind \"{other}\""))),
    }
}

/// Validate and build an instance from its JSON object.
pub fn parse_instance(v: &Value) -> Result<ProblemInstance> {
    if !v.is_object() {
        return Err(arg("instance must be a JSON object"));
    }
    let m = positive_int(field(v, "m", "instance")?, "m")?;
    let n = positive_int(field(v, "n", "instance")?, "n")?;
    let theta = field(v, "theta", "instance")?
        .as_array()
        .ok_or_else(|| arg("theta must be an array"))?
        .iter()
        .enumerate()
        .map(|(i, x)| number(x, &format!("theta[{i}]")))
        .collect::<Result<Vec<f64>>>()?;
    let psi = parse_psi(field(v, "psi", "instance")?, n)?;
    let q_set = parse_q(v.get("Q"), n)?;
    ProblemInstance::new(m, n, q_set, psi, theta)
}

pub fn parse_instance_str(text: &str) -> Result<ProblemInstance> {
    let v: Value = serde_json::from_str(text).map_err(|e| arg(format!("malformed JSON: {e}")))?;
    parse_instance(&v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_round_trip() {
        let inst = parse_instance_str(r#"{"m":2,"n":1,"theta":[0.1,0.2],"psi":{"kind":"power","tau":2}}"#).unwrap();
        assert_eq!((inst.m, inst.n), (2, 1));
        assert_eq!(inst.psi.power_exponent(), Some(2.0));
        assert!(matches!(inst.q_set, DenominatorSet::AllNonzero { n: 1 }));
    }

    #[test]
    fn tables_and_members() {
        let text = r#"{"m":1,"n":2,"theta":[0],
            "psi":{"kind":"table","entries":[{"q":[1,0],"value":0.3},{"q":[0,2],"value":0.9}]},
            "Q":{"kind":"predicate_table","members":[[1,0],[0,2]]}}"#;
        let inst = parse_instance_str(text).unwrap();
        assert_eq!(inst.psi.value(&[1, 0]), 0.3);
        assert_eq!(inst.psi.value(&[0, 2]), 0.5);
        assert!(inst.q_set.contains(&[0, 2]) && !inst.q_set.contains(&[1, 1]));
        let axis = parse_instance_str(r#"{"m":1,"n":2,"theta":[0],"psi":{"kind":"axis_powers_of_two"}}"#).unwrap();
        assert_eq!(axis.psi.value(&[4, 0]), 0.5);
    }

    #[test]
    fn diagnostics() {
        let missing = parse_instance_str(r#"{"m":1,"n":1,"theta":[0]}"#).unwrap_err();
        assert!(matches!(&missing, Error::Argument(s) if s.contains("\"psi\"")), "{missing}");
        let unknown = parse_instance_str(r#"{"m":1,"n":1,"theta":[0],"psi":{"kind":"exotic"}}"#).unwrap_err();
        assert!(matches!(unknown, Error::Unsupported(_)));
        let short = parse_instance_str(r#"{"m":2,"n":1,"theta":[0],"psi":{"kind":"power","tau":1}}"#).unwrap_err();
        assert!(matches!(short, Error::Argument(_)));
        assert!(matches!(parse_instance_str("{"), Err(Error::Argument(_))));
        let bad_q = r#"{"m":1,"n":1,"theta":[0],"psi":{"kind":"power","tau":1},"Q":{"kind":"predicate_table","members":[[0]]}}"#;
        assert!(parse_instance_str(bad_q).is_err());
    }
}
