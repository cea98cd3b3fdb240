// SPDX-License-Identifier: MIT OR Apache-2.0

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::StatsError;

/// Per-subject maps, `[n_subjects × n_vertices × n_conditions]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMap {
    n_subjects: usize,
    n_vertices: usize,
    condition_names: Vec<String>,
    data: Vec<f64>,
}

impl GroupMap {
    /// `data` is subject-major, then vertex, then condition.
    pub fn new(
        n_subjects: usize,
        n_vertices: usize,
        condition_names: Vec<String>,
        data: Vec<f64>,
    ) -> Result<Self, StatsError> {
        let n_conditions = condition_names.len();
        if n_subjects < 2 {
            return Err(StatsError::InvalidInput(format!("need at least 2 subjects, got {n_subjects}")));
        }
        if n_vertices == 0 || n_conditions == 0 {
            return Err(StatsError::InvalidInput("map has no vertices or no conditions".into()));
        }
        if data.len() != n_subjects * n_vertices * n_conditions {
            return Err(StatsError::InvalidInput(format!(
                "{} values for {n_subjects} x {n_vertices} x {n_conditions}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::InvalidInput(format!("non-finite value at flat index {i}")));
        }
        Ok(Self { n_subjects, n_vertices, condition_names, data })
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_conditions(&self) -> usize {
        self.condition_names.len()
    }

    pub fn condition_names(&self) -> &[String] {
        &self.condition_names
    }

    pub fn get(&self, subject: usize, vertex: usize, condition: usize) -> f64 {
        self.data[(subject * self.n_vertices + vertex) * self.n_conditions() + condition]
    }

    pub fn negated(&self) -> Self {
        Self { data: self.data.iter().map(|v| -v).collect(), ..self.clone() }
    }
}

/// t statistics per `(vertex, condition)`; `None` where the subjects agree exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TMap {
    pub n_vertices: usize,
    pub n_conditions: usize,
    pub df: usize,
    pub values: Vec<Option<f64>>,
}

impl TMap {
    pub fn get(&self, vertex: usize, condition: usize) -> Option<f64> {
        self.values[vertex * self.n_conditions + condition]
    }
}

/// One-sample t against zero, `mean / (sd / sqrt(n))` with `n - 1` df.
pub fn one_sample_t(map: &GroupMap) -> TMap {
    t_with_signs(map, &vec![1.0; map.n_subjects])
}

/// As [`one_sample_t`] with each subject's map multiplied by its sign.
pub(crate) fn t_with_signs(map: &GroupMap, signs: &[f64]) -> TMap {
    let n = map.n_subjects as f64;
    let cells = map.n_vertices * map.n_conditions();
    let mut values = Vec::with_capacity(cells);
    let mut xs = vec![0.0; map.n_subjects];
    for cell in 0..cells {
        // running mean: exact when all subjects share a value
        let mut mean = 0.0;
        for (s, x) in xs.iter_mut().enumerate() {
            *x = signs[s] * map.data[s * cells + cell];
            mean = if s == 0 { *x } else { mean + (*x - mean) / (s + 1) as f64 };
        }
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        values.push(if ss > 0.0 { Some(mean / (ss / (n - 1.0) / n).sqrt()) } else { None });
    }
    TMap { n_vertices: map.n_vertices, n_conditions: map.n_conditions(), df: map.n_subjects - 1, values }
}

/// One-tailed critical value: `P(T > t) = p` for Student's t with `df` degrees.
pub fn critical_t(df: usize, p: f64) -> Result<f64, StatsError> {
    if df == 0 || !(p > 0.0 && p < 1.0) {
        return Err(StatsError::InvalidInput(format!("critical t needs df >= 1 and p in (0, 1), got {df}, {p}")));
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| StatsError::InvalidInput(e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - p))
}
