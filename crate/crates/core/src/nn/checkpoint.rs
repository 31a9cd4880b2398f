//! Text checkpoint format for [`DeepSetModel`].
//!
//! ```text
//! fedrob-deepset 1
//! seed <u64>
//! classes <K> embed <p> rho_hidden <h> mu_hidden <h>
//! rho <count>
//! <values, 8 per line>
//! mu <count>
//! <values, 8 per line>
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! `f64`, so a checkpoint round-trips exactly and is byte-stable.

use std::fmt::Write as _;
use std::path::Path;

use super::deepset::DeepSetModel;
use super::mlp::Mlp2;
use crate::error::{Error, Result};

const MAGIC: &str = "fedrob-deepset";
const VERSION: u32 = 1;

pub fn encode(model: &DeepSetModel) -> String {
    let arch = model.architecture();
    let mut out = String::new();
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(out, "seed {}", model.seed).unwrap();
    writeln!(
        out,
        "classes {} embed {} rho_hidden {} mu_hidden {}",
        arch.classes, arch.embed, arch.rho_hidden, arch.mu_hidden
    )
    .unwrap();
    for (name, block) in [("rho", model.rho.params()), ("mu", model.mu.params())] {
        writeln!(out, "{name} {}", block.len()).unwrap();
        for chunk in block.chunks(8) {
            let line: Vec<String> = chunk.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
    }
    out
}

pub fn decode(text: &str) -> Result<DeepSetModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| {
        lines
            .by_ref()
            .find(|(_, l)| !l.is_empty())
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("unexpected end of checkpoint, expected {what}"),
            })
    };
    let bad = |line: usize, msg: String| Error::Parse { line, msg };

    let (ln, header) = next("header")?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(bad(ln, "not a fedrob checkpoint".into()));
    }
    match parts.next().and_then(|v| v.parse::<u32>().ok()) {
        Some(VERSION) => {}
        other => return Err(bad(ln, format!("unsupported checkpoint version {other:?}"))),
    }

    let (ln, seed_line) = next("seed")?;
    let seed = seed_line
        .strip_prefix("seed ")
        .and_then(|s| s.trim().parse::<u64>().ok())
        .ok_or_else(|| bad(ln, "expected `seed <u64>`".into()))?;

    let (ln, dims_line) = next("dimensions")?;
    let tokens: Vec<&str> = dims_line.split_whitespace().collect();
    let mut dims = [0usize; 4];
    for (slot, key) in ["classes", "embed", "rho_hidden", "mu_hidden"].iter().enumerate() {
        let pos = tokens
            .iter()
            .position(|t| t == key)
            .ok_or_else(|| bad(ln, format!("missing {key}")))?;
        dims[slot] = tokens
            .get(pos + 1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(ln, format!("bad value for {key}")))?;
    }
    let [classes, embed, rho_hidden, mu_hidden] = dims;

    let mut read_block = |name: &str| -> Result<Vec<f64>> {
        let (ln, head) = next(name)?;
        let count: usize = head
            .strip_prefix(name)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad(ln, format!("expected `{name} <count>`")))?;
        let mut values = Vec::with_capacity(count);
        while values.len() < count {
            let (ln, line) = next(name)?;
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|_| bad(ln, format!("bad number {tok:?}")))?,
                );
            }
        }
        if values.len() != count {
            return Err(bad(ln, format!("{name} block has {} values, expected {count}", values.len())));
        }
        Ok(values)
    };
    let rho = Mlp2::from_params(classes, rho_hidden, embed, read_block("rho")?)?;
    let mu = Mlp2::from_params(embed, mu_hidden, classes, read_block("mu")?)?;
    DeepSetModel::from_parts(rho, mu, seed)
}

pub fn save(model: &DeepSetModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DeepSetModel> {
    decode(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;

    #[test]
    fn round_trip_is_exact() {
        let model = DeepSetModel::new(
            Architecture {
                classes: 3,
                embed: 4,
                rho_hidden: 5,
                mu_hidden: 6,
            },
            77,
        );
        let text = encode(&model);
        let back = decode(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(encode(&back), text);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode("hello").is_err());
        assert!(decode("fedrob-deepset 9\n").is_err());
        let model = DeepSetModel::new(Architecture::new(3), 1);
        let text = encode(&model);
        let truncated: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(decode(&truncated).is_err());
    }
}
