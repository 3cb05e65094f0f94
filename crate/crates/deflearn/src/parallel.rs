//! Sample-parallel registration on a rayon pool.

use deflearn_core::body::{BodyParams, BodyTemplate};
use deflearn_core::learn::Registrar;
use deflearn_core::regist::{register_one, RegistConfig, SampleAnnotation, SampleFit};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};

/// Registers each sample as an independent task. Per-sample results equal the
/// serial path since samples share no optimizer state.
pub struct RayonRegistrar {
    pool: ThreadPool,
}

impl RayonRegistrar {
    /// `threads == 0` picks rayon's default (one per core).
    pub fn new(threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Usage(format!("cannot start {threads} threads: {e}")))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Registrar for RayonRegistrar {
    fn register(
        &self,
        template: &BodyTemplate,
        samples: &[SampleAnnotation],
        init: Option<&[BodyParams]>,
        config: &RegistConfig,
    ) -> deflearn_core::Result<Vec<deflearn_core::Result<SampleFit>>> {
        config.validate()?;
        if init.is_some_and(|i| i.len() != samples.len()) {
            return Err(deflearn_core::Error::Contract("one initialization per sample is required".into()));
        }
        Ok(self.pool.install(|| {
            samples
                .par_iter()
                .enumerate()
                .map(|(i, ann)| register_one(template, ann, init.map(|v| &v[i]), config))
                .collect()
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use deflearn_core::body::{humanoid, HumanoidSpec};
    use deflearn_core::learn::SerialRegistrar;
    use deflearn_core::synth::{synth_dataset, SynthConfig};

    #[test]
    fn matches_serial_registration() {
        let t = humanoid(HumanoidSpec::default()).unwrap();
        let cfg = SynthConfig { dense_points: 60, ..Default::default() };
        let anns: Vec<_> = synth_dataset(&t, 5, &cfg, 4).unwrap().into_iter().map(|s| s.annotation).collect();
        let rc = RegistConfig { iterations: 10, ..Default::default() };
        let serial = SerialRegistrar.register(&t, &anns, None, &rc).unwrap();
        let par = RayonRegistrar::new(3).unwrap();
        assert_eq!(par.threads(), 3);
        let parallel = par.register(&t, &anns, None, &rc).unwrap();
        for (a, b) in serial.iter().zip(&parallel) {
            assert_eq!(a.as_ref().unwrap().params, b.as_ref().unwrap().params);
        }
        assert!(par.register(&t, &anns, Some(&[]), &rc).is_err());
    }
}
