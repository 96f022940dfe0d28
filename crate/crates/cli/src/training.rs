//! Training loop with optional data-parallel gradient computation.

use sens_asr_core::model::SensModel;
use sens_asr_core::params::ParamSet;
use sens_asr_core::train::{example_gradients, spec_for_frames, Example, ExampleResult, StepLog, Trainer};

use crate::error::Result;

/// One optimizer step over the trainer's next batch. Per-example gradients
/// are computed on up to `threads` scoped threads and handed to the
/// optimizer in batch order, so the thread count never changes the result.
pub fn parallel_step(
    trainer: &mut Trainer,
    model: &SensModel,
    params: &mut ParamSet<f32>,
    examples: &[Example],
    threads: usize,
) -> Result<StepLog> {
    let batch = trainer.next_batch();
    let max_frames = batch.iter().map(|&i| examples[i].frames()).max().unwrap_or(1);
    let sample = trainer.sample_chunking(max_frames)?;
    let weights = trainer.config().weights;
    let shared: &ParamSet<f32> = params;
    let run = |idx: &[usize]| -> sens_asr_core::Result<Vec<ExampleResult>> {
        idx.iter()
            .map(|&i| {
                let spec = spec_for_frames(&sample, examples[i].frames())?;
                example_gradients(model, shared, &examples[i], &spec, &weights)
            })
            .collect()
    };
    let results = if threads <= 1 || batch.len() <= 1 {
        run(&batch)?
    } else {
        let per = batch.len().div_ceil(threads);
        let parts = std::thread::scope(|s| {
            let handles: Vec<_> = batch.chunks(per).map(|c| s.spawn(|| run(c))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("gradient worker panicked"))
                .collect::<Vec<_>>()
        });
        let mut all = Vec::with_capacity(batch.len());
        for part in parts {
            all.extend(part?);
        }
        all
    };
    Ok(trainer.apply(params, &results)?)
}

/// Runs the configured number of steps, reporting each step to `on_step`
/// (which may stop the run early by returning `false`).
pub fn train_loop(
    trainer: &mut Trainer,
    model: &SensModel,
    params: &mut ParamSet<f32>,
    examples: &[Example],
    threads: usize,
    mut on_step: impl FnMut(&StepLog, &ParamSet<f32>) -> Result<bool>,
) -> Result<()> {
    while trainer.step_count() < trainer.config().steps {
        let log = parallel_step(trainer, model, params, examples, threads)?;
        if !on_step(&log, params)? {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use sens_asr_core::model::ModelConfig;
    use sens_asr_core::synth::{synth_dataset, SynthSpec};
    use sens_asr_core::train::TrainConfig;

    fn run(threads: usize) -> (Vec<StepLog>, Vec<f32>) {
        let ds = synth_dataset(&SynthSpec {
            utterances: 6,
            ..SynthSpec::default()
        })
        .unwrap();
        let examples: Vec<Example> = ds
            .utterances
            .iter()
            .map(|u| Example {
                id: u.id.clone(),
                features: u.features.clone(),
                targets: ds.vocabulary.encode(&u.text).unwrap(),
                teacher: None,
            })
            .collect();
        let cfg = ModelConfig::desk(8, ds.vocabulary.len());
        let (model, mut params) = SensModel::new(&cfg, 1).unwrap();
        let config = TrainConfig {
            batch_size: 4,
            steps: 3,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(config, &params, examples.len()).unwrap();
        let mut logs = Vec::new();
        train_loop(&mut trainer, &model, &mut params, &examples, threads, |l, _| {
            logs.push(*l);
            Ok(true)
        })
        .unwrap();
        let flat = params.iter().flat_map(|(_, t)| t.data().to_vec()).collect();
        (logs, flat)
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let one = run(1);
        assert_eq!(one.0.len(), 3);
        assert_eq!(one, run(3));
    }
}
