pub mod eval;
pub mod gradcheck;
pub mod separate;
pub mod synth;
pub mod train;

use pdsep_core::error::Result;
use pdsep_core::nets::ArchDescriptor;
use pdsep_core::trainer::SeparateOptions;

/// Architecture from the resolved config on top of the desk-scale default
/// for the dataset's shape.
pub fn arch_from_config(
    cfg: &pdsep_core::config::RunConfig,
    shape: &[usize],
) -> Result<ArchDescriptor> {
    let mut desc = match shape.len() {
        1 => ArchDescriptor::desk_1d(shape[0]),
        _ => ArchDescriptor::desk_2d(shape[0], shape[1]),
    };
    if let Some(ch) = cfg.get_usize_list("gen_channels")? {
        desc.gen_channels = ch;
    }
    if let Some(ch) = cfg.get_usize_list("critic_channels")? {
        desc.critic_channels = ch;
    }
    desc.gen_kernel = cfg.get_or("gen_kernel", desc.gen_kernel)?;
    desc.critic_kernel = cfg.get_or("critic_kernel", desc.critic_kernel)?;
    desc.dropout_rate = cfg.get_or("dropout", desc.dropout_rate)?;
    desc.dropout_levels = cfg.get_or("dropout_levels", desc.dropout_levels)?;
    desc.leaky_slope = cfg.get_or("leaky", desc.leaky_slope)?;
    desc.validate()?;
    Ok(desc)
}

/// Record the architecture in a resolved config.
pub fn arch_to_config(
    cfg: &mut pdsep_core::config::RunConfig,
    desc: &ArchDescriptor,
) -> Result<()> {
    let join = |v: &[usize]| {
        v.iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    cfg.set("gen_channels", join(&desc.gen_channels))?;
    cfg.set("critic_channels", join(&desc.critic_channels))?;
    cfg.set("gen_kernel", desc.gen_kernel)?;
    cfg.set("critic_kernel", desc.critic_kernel)?;
    cfg.set("dropout", desc.dropout_rate)?;
    cfg.set("dropout_levels", desc.dropout_levels)?;
    cfg.set("leaky", desc.leaky_slope)?;
    Ok(())
}

/// Inference options shared by `separate` and `eval`.
pub fn separate_options(
    cfg: &pdsep_core::config::RunConfig,
    seed: u64,
) -> Result<SeparateOptions> {
    Ok(SeparateOptions {
        seed,
        passes: cfg.get_or("passes", 1usize)?,
        noise: !cfg.get_bool("det")?,
    })
}
