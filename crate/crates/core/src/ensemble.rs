//! The two-stage pipeline: route by script, score with the matching linear
//! model, and on the roman path back off to stage 2 when the linear model's
//! top probability does not exceed the threshold.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::label::{LanguageClass, Prediction, Registry, Stage};
use crate::linear::LinearModel;
use crate::script::{route, Route};
use crate::stage2::{Stage2Classifier, Stage2Error};

pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Error)]
pub enum EnsembleError {
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("{component} label {label} is not in the registry")]
    ForeignLabel { component: String, label: LanguageClass },
    #[error("input {index}: {source}")]
    Stage2 { index: usize, source: Stage2Error },
}

#[derive(Clone)]
pub struct Ensemble {
    native: Arc<LinearModel>,
    roman: Arc<LinearModel>,
    stage2: Arc<dyn Stage2Classifier>,
    threshold: f64,
    /// Answer for input without any tokens.
    empty: Prediction,
}

impl std::fmt::Debug for Ensemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ensemble")
            .field("native_classes", &self.native.labels().len())
            .field("roman_classes", &self.roman.labels().len())
            .field("stage2", &self.stage2.name())
            .field("threshold", &self.threshold)
            .finish()
    }
}

impl Ensemble {
    /// All three components must only emit classes from `registry`.
    pub fn new(
        registry: &Registry,
        native: Arc<LinearModel>,
        roman: Arc<LinearModel>,
        stage2: Arc<dyn Stage2Classifier>,
        threshold: f64,
    ) -> Result<Self, EnsembleError> {
        check_threshold(threshold)?;
        let components: [(&str, &[LanguageClass]); 3] = [
            ("native model", native.labels()),
            ("roman model", roman.labels()),
            ("stage 2", stage2.supported_classes()),
        ];
        for (component, labels) in components {
            if let Some(label) = labels.iter().find(|c| !registry.contains(c)) {
                return Err(EnsembleError::ForeignLabel {
                    component: component.to_string(),
                    label: *label,
                });
            }
        }
        let mut classes: Vec<LanguageClass> = native.labels().to_vec();
        if registry.contains(&LanguageClass::Other) && !classes.contains(&LanguageClass::Other) {
            classes.push(LanguageClass::Other);
        }
        let p = 1.0 / classes.len() as f64;
        let mut ranked: Vec<(LanguageClass, f64)> = classes.into_iter().map(|c| (c, p)).collect();
        ranked.sort_by_key(|(c, _)| !c.is_other());
        Ok(Ensemble {
            native,
            roman,
            stage2,
            threshold,
            empty: Prediction::new(ranked, Stage::NativeLinear),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_threshold(&self, threshold: f64) -> Result<Self, EnsembleError> {
        check_threshold(threshold)?;
        Ok(Ensemble {
            threshold,
            ..self.clone()
        })
    }

    pub fn native_model(&self) -> &LinearModel {
        &self.native
    }

    pub fn roman_model(&self) -> &LinearModel {
        &self.roman
    }

    pub fn stage2(&self) -> &dyn Stage2Classifier {
        self.stage2.as_ref()
    }

    pub fn identify(&self, text: &str) -> Result<Prediction, EnsembleError> {
        self.identify_batch_serial(&[text]).pop().expect("one result per input")
    }

    /// Order-preserving batch identification. Stage-1 scoring runs in
    /// parallel; all stage-2 candidates go to stage 2 in one call.
    pub fn identify_batch<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Vec<Result<Prediction, EnsembleError>> {
        let first: Vec<FirstPass> = texts.par_iter().map(|t| self.first_pass(t.as_ref())).collect();
        self.finish(texts, first)
    }

    /// Same as [`Ensemble::identify_batch`] on the calling thread only.
    pub fn identify_batch_serial<S: AsRef<str>>(&self, texts: &[S]) -> Vec<Result<Prediction, EnsembleError>> {
        let first: Vec<FirstPass> = texts.iter().map(|t| self.first_pass(t.as_ref())).collect();
        self.finish(texts, first)
    }

    fn first_pass(&self, text: &str) -> FirstPass {
        if text.split_whitespace().next().is_none() {
            return FirstPass::Final(self.empty.clone());
        }
        match route(text) {
            Route::NativePath => {
                FirstPass::Final(self.native.predict_as(text, self.native.labels().len(), Stage::NativeLinear))
            }
            Route::RomanPath => {
                let p = self.roman.predict_as(text, self.roman.labels().len(), Stage::RomanLinear);
                if p.top_probability() > self.threshold {
                    FirstPass::Final(p)
                } else {
                    FirstPass::BackOff(p)
                }
            }
        }
    }

    fn finish<S: AsRef<str>>(&self, texts: &[S], first: Vec<FirstPass>) -> Vec<Result<Prediction, EnsembleError>> {
        let candidates: Vec<usize> = first
            .iter()
            .enumerate()
            .filter(|(_, f)| matches!(f, FirstPass::BackOff(_)))
            .map(|(i, _)| i)
            .collect();
        let mut second: Vec<Option<Result<Prediction, Stage2Error>>> = vec![None; texts.len()];
        if !candidates.is_empty() {
            let batch: Vec<&str> = candidates.iter().map(|&i| texts[i].as_ref()).collect();
            match self.stage2.classify(&batch) {
                Ok(preds) if preds.len() == candidates.len() => {
                    for (&i, p) in candidates.iter().zip(preds) {
                        second[i] = Some(Ok(p));
                    }
                }
                Ok(preds) => {
                    let err = Stage2Error::Protocol(format!(
                        "{} predictions for {} texts",
                        preds.len(),
                        candidates.len()
                    ));
                    candidates.iter().for_each(|&i| second[i] = Some(Err(err.clone())));
                }
                Err(err) => candidates.iter().for_each(|&i| second[i] = Some(Err(err.clone()))),
            }
        }

        first
            .into_iter()
            .zip(second)
            .enumerate()
            .map(|(index, (pass, stage2))| match (pass, stage2) {
                (FirstPass::Final(p), _) => Ok(p),
                (FirstPass::BackOff(_), Some(Ok(p))) => Ok(p),
                (FirstPass::BackOff(mut p), Some(Err(e))) if e.is_transport() => {
                    p.degraded = true;
                    Ok(p)
                }
                (FirstPass::BackOff(_), Some(Err(source))) => Err(EnsembleError::Stage2 { index, source }),
                (FirstPass::BackOff(_), None) => unreachable!("every candidate has a stage-2 outcome"),
            })
            .collect()
    }
}

fn check_threshold(threshold: f64) -> Result<(), EnsembleError> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(EnsembleError::InvalidThreshold(threshold))
    }
}

enum FirstPass {
    Final(Prediction),
    BackOff(Prediction),
}

/// Whether a prediction came from (or tried) the stage-2 classifier.
pub fn invoked_stage2(p: &Prediction) -> bool {
    p.stage == Stage::Stage2 || p.degraded
}
