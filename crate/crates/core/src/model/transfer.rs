use super::params::{ParameterSet, ENCODER_PREFIX};
use crate::error::{Error, Result};

/// Copies every `encoder.*` array of `src` into a copy of `dst`, leaving all
/// other parameters untouched. Any missing name or shape mismatch (in either
/// direction) rejects the whole transfer.
pub fn transfer_encoder(src: &ParameterSet, dst: &ParameterSet) -> Result<ParameterSet> {
    let mut problems = Vec::new();
    for (name, value) in src.iter().filter(|(n, _)| n.starts_with(ENCODER_PREFIX)) {
        match dst.get(name) {
            None => problems.push(format!("{name} missing in destination")),
            Some(d) if d.dim() != value.dim() => problems.push(format!(
                "{name} shape {:?} vs destination {:?}",
                value.dim(),
                d.dim()
            )),
            Some(_) => {}
        }
    }
    for name in dst.names().iter().filter(|n| n.starts_with(ENCODER_PREFIX)) {
        if src.get(name).is_none() {
            problems.push(format!("{name} missing in source"));
        }
    }
    if src.names().iter().all(|n| !n.starts_with(ENCODER_PREFIX)) {
        problems.push("source has no encoder parameters".into());
    }
    if !problems.is_empty() {
        return Err(Error::TransferMismatch(problems));
    }
    let mut out = dst.clone();
    for (name, value) in src.iter().filter(|(n, _)| n.starts_with(ENCODER_PREFIX)) {
        *out.get_mut(name).expect("checked above") = value.clone();
    }
    Ok(out)
}
