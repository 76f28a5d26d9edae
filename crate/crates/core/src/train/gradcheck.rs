use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;

use super::{batch_loss, Prepared};
use crate::exec::Sequential;
use crate::net::{LayerClass, ModelState};
use crate::rng::stream;
use crate::{Error, Result};

/// One sampled parameter entry of a finite-difference check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub index: usize,
    pub class: LayerClass,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub rel_error: f64,
}

/// Compares tape gradients of the full batch loss against central
/// differences with step `h`, in 64-bit precision, for `per_class` random
/// entries of every layer class.
pub fn gradient_check(
    items: &[Prepared],
    state: &ModelState,
    temperature: f64,
    per_class: usize,
    h: f64,
    floor: f64,
    seed: u64,
) -> Result<Vec<GradCheckEntry>> {
    let refs: Vec<&Prepared> = items.iter().collect();
    let mut store = state.store::<f64>();
    let config = &state.config;
    let no_labels = || Error::Config("gradient check needs at least one label".into());
    let out = batch_loss(&refs, &store, config, temperature, &Sequential, true)?.ok_or_else(no_labels)?;
    let grads = out.grads.expect("requested");

    let mut rng = stream(seed, &[0x6763]);
    let mut entries = Vec::new();
    for class in LayerClass::ALL {
        let pool: Vec<(String, usize)> = state
            .params
            .iter()
            .filter(|(name, _)| LayerClass::of(name) == class)
            .flat_map(|(name, t)| (0..t.numel()).map(move |i| (name.clone(), i)))
            .collect();
        let take = per_class.min(pool.len());
        let mut picks: Vec<usize> = sample(&mut rng, pool.len(), take).into_vec();
        picks.sort_unstable();
        for p in picks {
            let (name, index) = pool[p].clone();
            let analytic: f64 = grads.get(&name).map_or(0.0, |g| g.data()[index]);
            let orig = store.get(&name)?.data()[index];
            let mut eval = |v: f64| -> Result<f64> {
                store.get_mut(&name)?.data_mut()[index] = v;
                Ok(batch_loss(&refs, &store, config, temperature, &Sequential, false)?.ok_or_else(no_labels)?.loss)
            };
            let plus = eval(orig + h)?;
            let minus = eval(orig - h)?;
            store.get_mut(&name)?.data_mut()[index] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let denom = analytic.abs().max(numeric.abs()).max(floor);
            entries.push(GradCheckEntry {
                name,
                index,
                class,
                analytic,
                numeric,
                rel_error: (analytic - numeric).abs() / denom,
            });
        }
    }
    Ok(entries)
}
