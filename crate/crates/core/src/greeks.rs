use nalgebra::{DMatrix, DVector};

/// First and second sensitivities to the par rates of the calibrating
/// quotes, per unit rate.
#[derive(Debug, Clone, PartialEq)]
pub struct GreekProfile {
    pub delta: DVector<f64>,
    pub gamma: DMatrix<f64>,
}

impl GreekProfile {
    pub fn zeros(n: usize) -> Self {
        Self { delta: DVector::zeros(n), gamma: DMatrix::zeros(n, n) }
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn scaled(&self, w: f64) -> Self {
        Self { delta: &self.delta * w, gamma: &self.gamma * w }
    }

    pub fn add_scaled(&mut self, other: &GreekProfile, w: f64) {
        self.delta.axpy(w, &other.delta, 1.0);
        self.gamma += &other.gamma * w;
    }

    /// Largest `|G - G^T|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.gamma.amax().max(f64::MIN_POSITIVE);
        (&self.gamma - self.gamma.transpose()).amax() / scale
    }

    pub fn symmetrize(&mut self) {
        self.gamma = (&self.gamma + self.gamma.transpose()) * 0.5;
    }
}

impl std::ops::Sub for &GreekProfile {
    type Output = GreekProfile;

    fn sub(self, rhs: &GreekProfile) -> GreekProfile {
        GreekProfile { delta: &self.delta - &rhs.delta, gamma: &self.gamma - &rhs.gamma }
    }
}

impl std::ops::Add for &GreekProfile {
    type Output = GreekProfile;

    fn add(self, rhs: &GreekProfile) -> GreekProfile {
        GreekProfile { delta: &self.delta + &rhs.delta, gamma: &self.gamma + &rhs.gamma }
    }
}
