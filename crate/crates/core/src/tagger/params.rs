use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::encoder::EncoderParams;

/// Every trainable tensor of a tagger. Gradients and optimizer moments use the
/// same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// labels × d
    pub emission_weight: Array2<f64>,
    /// labels
    pub emission_bias: Array1<f64>,
    /// (labels + 2) × (labels + 2), START then STOP after the labels
    pub transitions: Array2<f64>,
    /// Present only for the built-in encoder.
    pub encoder: Option<EncoderParams>,
}

impl Params {
    pub fn zeros(labels: usize, hidden_dim: usize, encoder: Option<EncoderParams>) -> Self {
        Params {
            emission_weight: Array2::zeros((labels, hidden_dim)),
            emission_bias: Array1::zeros(labels),
            transitions: Array2::zeros((labels + 2, labels + 2)),
            encoder,
        }
    }

    /// Fan-in scaled emission weights; biases and transitions start at zero.
    pub fn random<R: Rng>(
        labels: usize,
        hidden_dim: usize,
        encoder: Option<EncoderParams>,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(labels, hidden_dim, encoder);
        let dist = Normal::new(0.0, 1.0 / (hidden_dim as f64).sqrt()).unwrap();
        p.emission_weight.mapv_inplace(|_| dist.sample(rng));
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|v| *v = 0.0);
        z
    }

    pub fn labels(&self) -> usize {
        self.emission_bias.len()
    }

    pub fn hidden_dim(&self) -> usize {
        self.emission_weight.ncols()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![
            self.emission_weight.as_slice().expect("standard layout"),
            self.emission_bias.as_slice().expect("standard layout"),
            self.transitions.as_slice().expect("standard layout"),
        ];
        if let Some(enc) = &self.encoder {
            out.extend(enc.tensors());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![
            self.emission_weight.as_slice_mut().expect("standard layout"),
            self.emission_bias.as_slice_mut().expect("standard layout"),
            self.transitions.as_slice_mut().expect("standard layout"),
        ];
        if let Some(enc) = &mut self.encoder {
            out.extend(enc.tensors_mut());
        }
        out
    }

    pub fn tensor_names(&self) -> Vec<&'static str> {
        let mut out = vec!["emission_weight", "emission_bias", "transitions"];
        if self.encoder.is_some() {
            out.extend([
                "token_embeddings",
                "segment_embeddings",
                "projection",
                "projection_bias",
            ]);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(&mut f);
        }
    }

    /// Applies `f(self_value, other_value)` elementwise. Shapes must match.
    pub fn zip_mut_with(&mut self, other: &Params, mut f: impl FnMut(&mut f64, f64)) {
        let theirs = other.tensors();
        let mine = self.tensors_mut();
        assert_eq!(mine.len(), theirs.len(), "parameter layouts differ");
        for (a, b) in mine.into_iter().zip(theirs) {
            assert_eq!(a.len(), b.len(), "parameter shapes differ");
            for (x, y) in a.iter_mut().zip(b) {
                f(x, *y);
            }
        }
    }

    pub fn add_assign(&mut self, other: &Params) {
        self.zip_mut_with(other, |a, b| *a += b);
    }

    pub fn scale(&mut self, factor: f64) {
        self.for_each_mut(|v| *v *= factor);
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs_diff(&self, other: &Params) -> f64 {
        self.tensors()
            .into_iter()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Value at flat coordinate `index` across all tensors.
    pub fn get_flat(&self, mut index: usize) -> f64 {
        for t in self.tensors() {
            if index < t.len() {
                return t[index];
            }
            index -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_mut(&mut self, mut index: usize) -> &mut f64 {
        for t in self.tensors_mut() {
            if index < t.len() {
                return &mut t[index];
            }
            index -= t.len();
        }
        panic!("flat index out of range");
    }
}
