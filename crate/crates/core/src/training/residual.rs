//! Two-stage training of a residual composite.

use super::{parameter_hash, train, Example, TrainConfig, TrainLog};
use crate::error::{Error, Result};
use crate::models::ResidualComposite;
use crate::numerics::{mse_loss, Tensor1D};

#[derive(Debug, Clone)]
pub struct ResidualLogs {
    pub primary: TrainLog,
    pub refiner: TrainLog,
}

/// Refiner loss: MSE between the predicted residual and `clean - primary`.
pub fn residual_loss(residual: &Tensor1D, clean: &Tensor1D, primary: &Tensor1D) -> Result<f64> {
    let v = clean
        .values()
        .iter()
        .zip(primary.values())
        .map(|(x, p)| x - p)
        .collect();
    let target = Tensor1D::from_vec(clean.channels(), clean.length(), v)?;
    mse_loss(residual, &target)
}

/// Stage-2 examples: the frozen primary's output as aux, `clean - primary`
/// as target.
pub fn residual_examples(composite: &mut ResidualComposite, examples: &[Example]) -> Result<Vec<Example>> {
    examples
        .iter()
        .map(|ex| {
            let p = composite.primary_output(&ex.input)?;
            let v = ex
                .target
                .values()
                .iter()
                .zip(p.values())
                .map(|(x, p)| x - p)
                .collect();
            Ok(Example {
                input: ex.input.clone(),
                target: Tensor1D::from_vec(p.channels(), p.length(), v)?,
                aux: Some(p),
            })
        })
        .collect()
}

/// Stage 1 trains the primary on the clean targets; stage 2 freezes it and
/// fits the refiner to the primary's residual.
pub fn train_residual(
    composite: &mut ResidualComposite,
    train_set: &[Example],
    val: &[Example],
    primary_cfg: &TrainConfig,
    refiner_cfg: &TrainConfig,
) -> Result<ResidualLogs> {
    let primary = train(&mut composite.primary, train_set, val, primary_cfg)?;
    composite.mark_primary_trained();
    let refiner = train_refiner(composite, train_set, val, refiner_cfg)?;
    Ok(ResidualLogs { primary, refiner })
}

/// Stage 2 alone, for a composite whose primary is already trained.
pub fn train_refiner(
    composite: &mut ResidualComposite,
    train_set: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    if !composite.primary_trained() {
        return Err(Error::PrimaryNotTrained);
    }
    let frozen = parameter_hash(&composite.primary);
    let rt = residual_examples(composite, train_set)?;
    let rv = residual_examples(composite, val)?;
    let log = train(&mut composite.refiner, &rt, &rv, cfg)?;
    debug_assert_eq!(frozen, parameter_hash(&composite.primary));
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize_corpus, Task};
    use crate::models::{build_named_model, combine, Model};
    use crate::numerics::Mode;
    use crate::training::evaluate;

    fn setup() -> (ResidualComposite, Vec<Example>) {
        let ex = synthesize_corpus(Task::Iem, 3, 11, 2500)
            .unwrap()
            .iter()
            .map(|u| Example::new(u.segment.input(), u.segment.target()))
            .collect();
        let p = Model::new(build_named_model("FCN-55", 2).unwrap().with_width(4)).unwrap();
        let r = build_named_model("SDFCN", 2).unwrap().with_width(4);
        (ResidualComposite::new(p, r).unwrap(), ex)
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            max_epochs: epochs,
            learning_rate: 0.005,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn refiner_needs_trained_primary() {
        let (mut c, ex) = setup();
        assert!(matches!(
            train_refiner(&mut c, &ex, &[], &quick(1)),
            Err(Error::PrimaryNotTrained)
        ));
    }

    #[test]
    fn stage_two_freezes_primary_and_never_loses() {
        let (mut c, ex) = setup();
        train(&mut c.primary, &ex[..2], &ex[2..], &quick(3)).unwrap();
        c.mark_primary_trained();
        let h = parameter_hash(&c.primary);
        let primary_val = evaluate(&mut c.primary, &ex[2..]).unwrap();
        let log = train_refiner(&mut c, &ex[..2], &ex[2..], &quick(3)).unwrap();
        assert_eq!(h, parameter_hash(&c.primary));
        assert_eq!(log.epochs[0].val_mse, primary_val);
        assert!(log.best_val_mse() <= primary_val);
    }

    #[test]
    fn loss_identity() {
        let (mut c, ex) = setup();
        c.mark_primary_trained();
        // perturb the zero head so the residual is nonzero
        for p in c.refiner.params_mut() {
            if p.trainable {
                p.value.iter_mut().enumerate().for_each(|(i, v)| *v += 1e-3 * ((i % 7) as f64 - 3.0));
            }
        }
        let x = &ex[0];
        let p = c.primary_output(&x.input).unwrap();
        let r = c.refiner.forward(&x.input, Some(&p), Mode::Inference).unwrap();
        let out = combine(&r, &p);
        assert!(out.values().iter().all(|v| v.abs() < 1.0));
        let a = residual_loss(&r, &x.target, &p).unwrap();
        let b = mse_loss(&out, &x.target).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} {b}");
    }
}
