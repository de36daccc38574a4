use std::collections::BTreeMap;
use std::path::Path;

use kg_core::rational;
use kg_core::series::ApproxFunction;
use sha2::{Digest, Sha256};

use crate::CliError;

/// A parsed `--psi` argument and the digest of its source text.
pub struct PsiInput {
    pub psi: ApproxFunction,
    pub source: String,
    pub sha256: String,
}

/// `constant:c`, `power:c,tau`, `table:h=v,h=v,...`, inline JSON, or a path to a JSON file.
pub fn load(arg: &str) -> Result<PsiInput, CliError> {
    let arg = arg.trim();
    let (text, source) = if arg.starts_with('{') || inline_kind(arg).is_some() {
        (arg.to_string(), "inline".to_string())
    } else {
        let text = std::fs::read_to_string(Path::new(arg))
            .map_err(|e| CliError::Parse(format!("{arg}: {e}")))?;
        (text, format!("file:{arg}"))
    };
    let psi = parse(&text)?;
    let sha256 = hex::encode(Sha256::digest(text.as_bytes()));
    Ok(PsiInput {
        psi,
        source,
        sha256,
    })
}

fn inline_kind(s: &str) -> Option<&str> {
    let (kind, _) = s.split_once(':')?;
    matches!(kind, "constant" | "power" | "table").then_some(kind)
}

pub fn parse(text: &str) -> Result<ApproxFunction, CliError> {
    let text = text.trim();
    if text.starts_with('{') {
        return serde_json::from_str(text).map_err(|e| CliError::Parse(format!("psi JSON: {e}")));
    }
    let (kind, args) = text
        .split_once(':')
        .ok_or_else(|| CliError::Parse(format!("psi {text:?}: expected kind:args")))?;
    let psi = match kind {
        "constant" => ApproxFunction::constant(rational::parse(args)?),
        "power" => {
            let (c, tau) = args
                .split_once(',')
                .ok_or_else(|| CliError::Parse(format!("power psi needs c,tau: {args:?}")))?;
            ApproxFunction::power(rational::parse(c)?, rational::parse(tau)?)
        }
        "table" => {
            let mut values = BTreeMap::new();
            for entry in args.split(',').filter(|e| !e.trim().is_empty()) {
                let (h, v) = entry.split_once('=').ok_or_else(|| {
                    CliError::Parse(format!("table entry {entry:?}: expected h=v"))
                })?;
                let h: u64 = h.trim().parse().map_err(|_| {
                    CliError::Parse(format!("table key {h:?} is not a positive integer"))
                })?;
                values.insert(h, rational::parse(v)?);
            }
            ApproxFunction::table(values)
        }
        _ => return Err(CliError::Parse(format!("unknown psi kind {kind:?}"))),
    };
    Ok(psi?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kg_core::rational::{int, ratio};

    #[test]
    fn inline_forms() {
        assert_eq!(
            parse("power:1/4,1").unwrap(),
            ApproxFunction::power(ratio(1, 4), int(1)).unwrap()
        );
        assert_eq!(
            parse("constant:0.1").unwrap(),
            ApproxFunction::constant(ratio(1, 10)).unwrap()
        );
        assert_eq!(
            parse("table:1=1/10,3=1/20").unwrap(),
            ApproxFunction::table([(1, ratio(1, 10)), (3, ratio(1, 20))].into()).unwrap()
        );
        assert_eq!(
            parse(r#"{"kind":"power","c":"1/4","tau":"1"}"#).unwrap(),
            parse("power:1/4,1").unwrap()
        );
    }

    #[test]
    fn bad_forms() {
        for s in [
            "power:1/4",
            "table:x=1",
            "cubic:1",
            "constant:-1",
            "nothing",
        ] {
            assert!(parse(s).is_err(), "{s}");
        }
    }
}
