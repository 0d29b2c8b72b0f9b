use serde::{Deserialize, Serialize};

use super::config::DataSource;
use crate::data::{self, make_loss_vector, LossKind};
use crate::error::{Error, Result};
use crate::ntk::{complexity_terms, expand_multiclass, ntk_matrix, ComplexityReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NtkSettings {
    pub source: DataSource,
    /// Rows used, taken from the front of the data.
    pub points: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtkRecord {
    pub settings: NtkSettings,
    pub num_classes: usize,
    /// `expected-loss` for generated data, `observed-loss` (one-hot labels) otherwise.
    pub target: String,
    pub report: ComplexityReport,
}

/// Complexity terms of the `TK × TK` kernel on the first `points` rows.
pub fn ntk_report(settings: &NtkSettings) -> Result<NtkRecord> {
    if settings.points == 0 {
        return Err(Error::InvalidConfig("ntk needs at least one point".into()));
    }
    if settings.depth == 0 {
        return Err(Error::InvalidConfig(
            "kernel depth must be at least 1".into(),
        ));
    }
    let (dataset, model) = match &settings.source {
        DataSource::Synth(spec) => {
            let s = data::synth(spec)?;
            (s.dataset, Some(s.model))
        }
        DataSource::File { .. } => {
            let loaded = super::config::DataSettings {
                source: settings.source.clone(),
                test_size: 0,
            }
            .load()?;
            (loaded, None)
        }
    };
    if dataset.len() < settings.points {
        return Err(Error::Data(format!(
            "asked for {} points but only {} rows exist",
            settings.points,
            dataset.len()
        )));
    }
    let k = dataset.num_classes();
    let xs = &dataset.inputs()[..settings.points];
    let h = expand_multiclass(&ntk_matrix(xs, settings.depth)?, k);
    let mut target = Vec::with_capacity(settings.points * k);
    for (i, x) in xs.iter().enumerate() {
        match &model {
            Some(m) => target.extend(m.expected_loss(x)),
            None => target.extend_from_slice(
                make_loss_vector(dataset.y(i), k, &LossKind::ZeroOne)?.as_slice(),
            ),
        }
    }
    Ok(NtkRecord {
        settings: settings.clone(),
        num_classes: k,
        target: if model.is_some() {
            "expected-loss"
        } else {
            "observed-loss"
        }
        .into(),
        report: complexity_terms(&h, &target)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SynthSpec;

    #[test]
    fn synthetic_report_respects_the_bound() {
        let r = ntk_report(&NtkSettings {
            source: DataSource::Synth(SynthSpec::hard(6, 3, 10, 0.2, 1)),
            points: 5,
            depth: 2,
        })
        .unwrap();
        assert_eq!(r.report.size, 15);
        assert!(r.report.bound_holds);
        assert!(r.report.s > 0.0);
        assert_eq!(r.target, "expected-loss");
    }

    #[test]
    fn too_many_points_is_a_data_error() {
        let err = ntk_report(&NtkSettings {
            source: DataSource::Synth(SynthSpec::hard(6, 3, 4, 0.2, 1)),
            points: 5,
            depth: 2,
        })
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}
