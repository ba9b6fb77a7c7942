use crate::autodiff::{Tape, Var};
use crate::error::Result;

/// `g(z) + γ · resize(z)`, where `resize` matches `g(z)`'s shape by
/// nearest-neighbour spatial interpolation and channel truncation or
/// zero-padding. With `γ = 0` the block output is returned untouched.
pub fn soft_skip_forward(
    tape: &mut Tape,
    z: Var,
    gamma: f64,
    block: impl FnOnce(&mut Tape, Var) -> Result<Var>,
) -> Result<Var> {
    let out = block(tape, z)?;
    if gamma == 0.0 {
        return Ok(out);
    }
    let target = tape.value(out).shape().to_vec();
    let skip = if tape.value(z).shape() == target.as_slice() {
        z
    } else if tape.value(z).shape().len() != target.len() {
        // rank change (e.g. a flatten inside the block): flatten first
        let s = tape.value(z).shape().to_vec();
        let flat = tape.reshape(z, &[s[0], s[1..].iter().product()])?;
        tape.resize(flat, &target)?
    } else {
        tape.resize(z, &target)?
    };
    let scaled = tape.scale(skip, gamma);
    tape.add(out, scaled)
}
