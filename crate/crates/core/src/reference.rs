//! Published reference results, kept for side-by-side display.
//!
//! These numbers come from the original TripAdvisor experiments and are not
//! reproducible without the original images, embedder and hardware. Nothing
//! compares against them with pass/fail semantics.

use serde::{Deserialize, Serialize};

use crate::pipeline::{ModelKind, Technique};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum City {
    Gijon,
    Barcelona,
    Madrid,
}

impl City {
    pub const ALL: [City; 3] = [City::Gijon, City::Barcelona, City::Madrid];

    pub fn parse(s: &str) -> Option<City> {
        match s.to_ascii_lowercase().as_str() {
            "gijon" | "gijón" => Some(City::Gijon),
            "barcelona" => Some(City::Barcelona),
            "madrid" => Some(City::Madrid),
            _ => None,
        }
    }
}

/// Marks a value as published rather than measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMetrics {
    pub recall_at_10: f64,
    pub ndcg_at_10: f64,
    pub auc: f64,
    pub source: Source,
}

const fn m(recall_at_10: f64, ndcg_at_10: f64, auc: f64) -> ReferenceMetrics {
    ReferenceMetrics {
        recall_at_10,
        ndcg_at_10,
        auc,
        source: Source::Paper,
    }
}

use ModelKind::{DotBce, DotBpr, MlpBce};
use Technique::{Genda, Pu, Tda};
const BASE: Technique = Technique::None;

/// (model, technique, [Gijon, Barcelona, Madrid]).
const RANKING: [(ModelKind, Technique, [ReferenceMetrics; 3]); 12] = [
    (
        MlpBce,
        BASE,
        [
            m(0.492, 0.262, 0.702),
            m(0.562, 0.320, 0.726),
            m(0.522, 0.298, 0.737),
        ],
    ),
    (
        DotBce,
        BASE,
        [
            m(0.486, 0.278, 0.691),
            m(0.527, 0.304, 0.696),
            m(0.490, 0.281, 0.699),
        ],
    ),
    (
        DotBpr,
        BASE,
        [
            m(0.535, 0.306, 0.736),
            m(0.584, 0.342, 0.745),
            m(0.538, 0.316, 0.752),
        ],
    ),
    (
        MlpBce,
        Pu,
        [
            m(0.517, 0.280, 0.715),
            m(0.587, 0.334, 0.747),
            m(0.524, 0.307, 0.752),
        ],
    ),
    (
        MlpBce,
        Tda,
        [
            m(0.532, 0.290, 0.720),
            m(0.587, 0.336, 0.745),
            m(0.531, 0.315, 0.752),
        ],
    ),
    (
        MlpBce,
        Genda,
        [
            m(0.527, 0.292, 0.722),
            m(0.582, 0.344, 0.750),
            m(0.534, 0.309, 0.755),
        ],
    ),
    (
        DotBce,
        Pu,
        [
            m(0.490, 0.276, 0.692),
            m(0.558, 0.315, 0.702),
            m(0.499, 0.295, 0.716),
        ],
    ),
    (
        DotBce,
        Tda,
        [
            m(0.495, 0.280, 0.699),
            m(0.527, 0.302, 0.688),
            m(0.500, 0.287, 0.709),
        ],
    ),
    (
        DotBce,
        Genda,
        [
            m(0.492, 0.284, 0.705),
            m(0.526, 0.302, 0.693),
            m(0.512, 0.298, 0.713),
        ],
    ),
    (
        DotBpr,
        Pu,
        [
            m(0.531, 0.299, 0.731),
            m(0.586, 0.342, 0.746),
            m(0.538, 0.314, 0.753),
        ],
    ),
    (
        DotBpr,
        Tda,
        [
            m(0.529, 0.301, 0.728),
            m(0.584, 0.344, 0.745),
            m(0.535, 0.312, 0.748),
        ],
    ),
    (
        DotBpr,
        Genda,
        [
            m(0.535, 0.306, 0.737),
            m(0.583, 0.340, 0.745),
            m(0.540, 0.315, 0.752),
        ],
    ),
];

pub fn ranking_reference(
    city: City,
    model: ModelKind,
    technique: Technique,
) -> Option<ReferenceMetrics> {
    let col = City::ALL.iter().position(|&c| c == city)?;
    RANKING
        .iter()
        .find(|(mk, t, _)| *mk == model && *t == technique)
        .map(|(_, _, row)| row[col])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTraining {
    pub wall_seconds: u32,
    pub emissions_g: f64,
    pub source: Source,
}

const fn t(h: u32, min: u32, s: u32, emissions_g: f64) -> ReferenceTraining {
    ReferenceTraining {
        wall_seconds: h * 3600 + min * 60 + s,
        emissions_g,
        source: Source::Paper,
    }
}

const TRAINING: [(ModelKind, Technique, ReferenceTraining); 12] = [
    (MlpBce, BASE, t(0, 62, 11, 7.96)),
    (DotBce, BASE, t(0, 13, 24, 2.67)),
    (DotBpr, BASE, t(0, 12, 33, 1.49)),
    (MlpBce, Pu, t(0, 22, 53, 4.86)),
    (MlpBce, Tda, t(0, 36, 26, 7.84)),
    (MlpBce, Genda, t(5, 20, 10, 57.58)),
    (DotBce, Pu, t(0, 8, 32, 1.17)),
    (DotBce, Tda, t(0, 30, 12, 6.10)),
    (DotBce, Genda, t(3, 59, 28, 47.12)),
    (DotBpr, Pu, t(0, 15, 31, 1.73)),
    (DotBpr, Tda, t(0, 29, 25, 4.92)),
    (DotBpr, Genda, t(4, 3, 43, 47.71)),
];

pub fn training_reference(model: ModelKind, technique: Technique) -> Option<ReferenceTraining> {
    TRAINING
        .iter()
        .find(|(mk, t, _)| *mk == model && *t == technique)
        .map(|(_, _, r)| *r)
}
